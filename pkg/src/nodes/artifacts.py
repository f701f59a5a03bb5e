import io
import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

from src.exceptions import ArtifactError
from src.loopspace import LoopCurve

logger = logging.getLogger(__name__)

ALL_FORMATS = ("csv", "json", "svg")


def format_cell(value) -> str:
    """17 significant digits for floats, plain text for everything else."""
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


class ArtifactStore:
    """Writes run artifacts into one output directory; every write is temp-file-then-rename."""

    def __init__(self, output_dir: str = "results", formats: Optional[Sequence[str]] = None):
        self.output_dir = Path(output_dir)
        self.formats = set(formats or ALL_FORMATS)
        self.written: List[str] = []
        try:
            self.output_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ArtifactError(f"cannot create output directory {self.output_dir}: {e}") from e

    def enabled(self, name: str) -> bool:
        return Path(name).suffix.lstrip(".") in self.formats

    def _write_bytes(self, name: str, data: bytes) -> Optional[Path]:
        if not self.enabled(name):
            return None
        path = self.output_dir / name
        fd, tmp = tempfile.mkstemp(dir=self.output_dir, prefix=f".{name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as f:
                f.write(data)
            os.replace(tmp, path)
        except OSError as e:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise ArtifactError(f"cannot write {path}: {e}") from e
        self.written.append(name)
        logger.info("wrote %s", path)
        return path

    def save_text(self, name: str, text: str) -> Optional[Path]:
        return self._write_bytes(name, text.encode("utf-8"))

    def save_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence]) -> Optional[Path]:
        lines = [",".join(header)]
        lines.extend(",".join(format_cell(v) for v in row) for row in rows)
        return self.save_text(name, "\n".join(lines) + "\n")

    def save_json(self, name: str, payload: dict) -> Optional[Path]:
        return self.save_text(name, json.dumps(payload, indent=2, sort_keys=True) + "\n")

    def save_figure(self, name: str, figure) -> Optional[Path]:
        import matplotlib.pyplot as plt

        try:
            if not self.enabled(name):
                return None
            buf = io.BytesIO()
            figure.savefig(buf, format="svg", metadata={"Date": None})
            return self._write_bytes(name, buf.getvalue())
        finally:
            plt.close(figure)


def load_curve(path: str) -> LoopCurve:
    """Read a curve from a .json file or a theta,x,y CSV file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ArtifactError(f"cannot read curve file {path}: {e}") from e
    if Path(path).suffix.lower() == ".json":
        return LoopCurve.from_json(text)
    return LoopCurve.from_csv(text)
