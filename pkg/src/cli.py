"""Command-line entry point: python -m src.cli {exp1,exp2,flow,seqdiag,spray,classify} [flags]."""

import argparse
import json
import logging
import sys
from typing import Any, Dict, List, Optional, Sequence

from pydantic import ValidationError

from src.exceptions import (
    AdmissibilityError,
    ArtifactError,
    MetricError,
    NonFiniteError,
    NotImmersionError,
    SRVTClosureError,
    ValidationFailure,
)
from src.metrics import MetricKind
from src.nodes.artifacts import ALL_FORMATS
from src.objectives import ObjectiveKind
from src.settings import Settings
from src.workflow_graph import Command, InitialCurve, RunConfig, run_experiment

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_ADMISSIBILITY = 3
EXIT_IO = 4

NUMERIC_FAILURES = (NotImmersionError, AdmissibilityError, NonFiniteError, SRVTClosureError, MetricError)


def _dims(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loopopt",
        description="Gradient descent and diagnostics on spaces of closed plane curves.",
    )
    parser.add_argument("command", choices=[c.value for c in Command])
    parser.add_argument("--n-samples", type=int, help="grid size N (even, at least 8)")
    parser.add_argument("--steps", type=int, help="descent iterations")
    parser.add_argument("--alpha", type=float, help="constant step size")
    parser.add_argument("--lambda", dest="lam", type=float, help="regularization weight for track-reg")
    parser.add_argument("--metric", choices=[m.value for m in MetricKind])
    parser.add_argument("--objective", choices=[o.value for o in ObjectiveKind])
    parser.add_argument("--output-dir", help="artifact directory (default: $LOOPOPT_OUTPUT_DIR or results)")
    parser.add_argument("--format", dest="formats", nargs="+", choices=list(ALL_FORMATS))
    parser.add_argument("--seed", type=int)
    parser.add_argument("--kmax", type=int, help="last index of the oscillating sequence")
    parser.add_argument("--dims", type=_dims, help="truncation dimensions, e.g. 4,8,16,32")
    parser.add_argument("--target-file", help="target curve (.json or theta,x,y CSV)")
    parser.add_argument("--curve-file", help="initial curve or point to classify")
    parser.add_argument("--initial", choices=[i.value for i in InitialCurve])
    parser.add_argument("--collapse-fraction", type=float, help="flow stops below this fraction of the initial length")
    parser.add_argument("--n-random", type=int, help="random probes for the coercivity estimate")
    return parser


def config_from_args(args: argparse.Namespace, settings: Optional[Settings] = None) -> RunConfig:
    settings = settings or Settings()
    fields: Dict[str, Any] = {k: v for k, v in vars(args).items() if v is not None}
    fields.setdefault("output_dir", settings.OUTPUT_DIR)
    return RunConfig(**fields)


def _run(command: Command, overrides: Dict[str, Any]) -> Dict[str, Any]:
    return run_experiment(RunConfig(command=command, **overrides))


def run_exp1(**overrides) -> Dict[str, Any]:
    return _run(Command.EXP1, overrides)


def run_exp2(**overrides) -> Dict[str, Any]:
    return _run(Command.EXP2, overrides)


def run_flow(**overrides) -> Dict[str, Any]:
    return _run(Command.FLOW, overrides)


def run_seqdiag(**overrides) -> Dict[str, Any]:
    return _run(Command.SEQDIAG, overrides)


def run_spray(**overrides) -> Dict[str, Any]:
    return _run(Command.SPRAY, overrides)


def run_classify(**overrides) -> Dict[str, Any]:
    return _run(Command.CLASSIFY, overrides)


def main(argv: Optional[Sequence[str]] = None) -> int:
    settings = Settings()
    logging.basicConfig(
        level=getattr(logging, settings.LOG_LEVEL, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args, settings)
        result = run_experiment(config)
    except (ValidationError, ValidationFailure) as e:
        print(f"invalid input: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except NUMERIC_FAILURES as e:
        print(f"run failed: {e}", file=sys.stderr)
        return EXIT_ADMISSIBILITY
    except (ArtifactError, OSError) as e:
        print(f"cannot write artifacts: {e}", file=sys.stderr)
        return EXIT_IO

    print(json.dumps({k: result[k] for k in ("command", "output_dir", "artifacts")}, indent=2))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
