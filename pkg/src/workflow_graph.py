import logging
from enum import Enum
from typing import Any, Dict, List, Optional

from langgraph.graph import END, StateGraph
from pydantic import BaseModel, Field, InstanceOf, field_validator, model_validator

from src.loopspace import check_grid_size
from src.metrics import MetricKind
from src.nodes import experiments
from src.nodes.artifacts import ALL_FORMATS, ArtifactStore
from src.objectives import ObjectiveKind
from src.optimizer import DescentTrace

logger = logging.getLogger(__name__)


class Command(str, Enum):
    EXP1 = "exp1"
    EXP2 = "exp2"
    FLOW = "flow"
    SEQDIAG = "seqdiag"
    SPRAY = "spray"
    CLASSIFY = "classify"


class InitialCurve(str, Enum):
    EXPERIMENT = "experiment"
    CIRCLE = "circle"
    ELLIPSE = "ellipse"


DESCENT_COMMANDS = (Command.EXP1, Command.EXP2, Command.FLOW)

COMMAND_DEFAULTS: Dict[Command, Dict[str, Any]] = {
    Command.EXP1: {
        "alpha": 0.1,
        "steps": 20,
        "n_samples": 256,
        "objective": ObjectiveKind.TRACK_IDENTITY,
        "metric": MetricKind.FLAT_L2,
        "initial": InitialCurve.EXPERIMENT,
    },
    Command.EXP2: {
        "alpha": 0.04,
        "steps": 20,
        "n_samples": 256,
        "lam": 0.7,
        "objective": ObjectiveKind.TRACK_REGULARIZED,
        "metric": MetricKind.FLAT_L2,
        "initial": InitialCurve.EXPERIMENT,
    },
    Command.FLOW: {
        "alpha": 1e-3,
        "steps": 2000,
        "n_samples": 16,
        "objective": ObjectiveKind.LENGTH,
        "metric": MetricKind.INVARIANT_L2,
        "initial": InitialCurve.CIRCLE,
    },
    Command.SEQDIAG: {"n_samples": 64},
    Command.SPRAY: {"n_samples": 8},
    Command.CLASSIFY: {
        "n_samples": 256,
        "objective": ObjectiveKind.TRACK_REGULARIZED,
        "metric": MetricKind.FLAT_L2,
    },
}


class RunConfig(BaseModel):
    """Configuration for one command run; unset fields take the command's defaults."""

    command: Command
    n_samples: Optional[int] = None
    steps: Optional[int] = None
    alpha: Optional[float] = None
    lam: Optional[float] = None
    metric: Optional[MetricKind] = None
    objective: Optional[ObjectiveKind] = None
    output_dir: str = "results"
    formats: List[str] = Field(default_factory=lambda: list(ALL_FORMATS))
    seed: int = 0
    kmax: int = Field(50, ge=2)
    dims: List[int] = Field(default_factory=lambda: [4, 8, 16, 32])
    target_file: Optional[str] = None
    curve_file: Optional[str] = None
    initial: Optional[InitialCurve] = None
    collapse_fraction: float = Field(0.1, gt=0, lt=1)  # flow stops below this fraction of the initial length
    n_random: int = Field(16, ge=0)

    @field_validator("alpha")
    @classmethod
    def alpha_positive(cls, value: Optional[float]) -> Optional[float]:
        if value is not None and not value > 0:
            raise ValueError("step size must be positive")
        return value

    @field_validator("lam")
    @classmethod
    def lam_nonnegative(cls, value: Optional[float]) -> Optional[float]:
        if value is not None and value < 0:
            raise ValueError("lambda must be nonnegative")
        return value

    @field_validator("steps")
    @classmethod
    def steps_positive(cls, value: Optional[int]) -> Optional[int]:
        if value is not None and value < 1:
            raise ValueError("steps must be at least 1")
        return value

    @field_validator("formats")
    @classmethod
    def known_formats(cls, value: List[str]) -> List[str]:
        unknown = sorted(set(value) - set(ALL_FORMATS))
        if unknown:
            raise ValueError(f"unknown formats {unknown}; choose from {list(ALL_FORMATS)}")
        return value

    @model_validator(mode="after")
    def apply_command_defaults(self) -> "RunConfig":
        for name, default in COMMAND_DEFAULTS[self.command].items():
            if getattr(self, name) is None:
                setattr(self, name, default)
        if self.lam is None:
            self.lam = 0.7 if self.objective is ObjectiveKind.TRACK_REGULARIZED else 0.0
        if self.command is not Command.SPRAY:
            check_grid_size(self.n_samples)
        return self


class ExperimentState(BaseModel):
    """State carried through the experiment graph."""

    config: RunConfig
    setup: Optional[InstanceOf[experiments.Setup]] = None
    trace: Optional[InstanceOf[DescentTrace]] = None
    reports: Dict[str, Any] = Field(default_factory=dict)
    summary: Dict[str, Any] = Field(default_factory=dict)
    artifacts: List[str] = Field(default_factory=list)


def create_workflow() -> StateGraph:
    """Create the experiment graph: prepare -> descend | analyze -> verify -> export."""

    def prepare(state: dict) -> dict:
        """Build the initial curve, objective and metric."""
        try:
            state = ExperimentState.model_validate(state)
            cfg = state.config
            logger.info("prepare %s", cfg.command.value)
            if cfg.command in DESCENT_COMMANDS or cfg.command is Command.CLASSIFY:
                return {"setup": experiments.build_setup(cfg)}
            return {}
        except Exception as e:
            logger.error("prepare failed: %s", e)
            raise

    def route(state: dict) -> str:
        state = ExperimentState.model_validate(state)
        return "descend" if state.config.command in DESCENT_COMMANDS else "analyze"

    def descend(state: dict) -> dict:
        """Run gradient descent from the prepared curve."""
        try:
            state = ExperimentState.model_validate(state)
            logger.info("descend: %d steps at alpha=%g", state.config.steps, state.config.alpha)
            return {"trace": experiments.run_descent(state.setup, state.config)}
        except Exception as e:
            logger.error("descent failed: %s", e)
            raise

    def analyze(state: dict) -> dict:
        """Diagnostics that do not iterate: sequences, sprays and point classification."""
        try:
            state = ExperimentState.model_validate(state)
            cfg = state.config
            logger.info("analyze %s", cfg.command.value)
            if cfg.command is Command.SEQDIAG:
                sequence, regularity = experiments.sequence_reports(cfg)
                return {"reports": {"sequence": sequence, "regularity": regularity}}
            if cfg.command is Command.SPRAY:
                return {"reports": {"growth": experiments.growth_report(cfg)}}
            return {"reports": {"classification": experiments.classification(state.setup, cfg)}}
        except Exception as e:
            logger.error("analysis failed: %s", e)
            raise

    def verify(state: dict) -> dict:
        """Turn traces and reports into the run summary."""
        try:
            state = ExperimentState.model_validate(state)
            cfg = state.config
            reports = dict(state.reports)
            if cfg.command is Command.FLOW:
                rows = experiments.flow_rows(state.trace)
                reports["flow_rows"] = rows
                summary = experiments.flow_summary(state.trace, rows)
            elif cfg.command in DESCENT_COMMANDS:
                summary = experiments.descent_summary(state.setup, cfg, state.trace)
            elif cfg.command is Command.SEQDIAG:
                gaps = reports["sequence"].consecutive_grad_gaps
                summary = {"grad_gap_min": min(gaps), "grad_gap_max": max(gaps)}
                summary.update(reports["regularity"].summary())
            elif cfg.command is Command.SPRAY:
                growth = reports["growth"]
                summary = {"d": growth.d_values, "max_gamma": growth.max_gamma}
                summary["strictly_increasing"] = growth.strictly_increasing
            else:
                summary = reports["classification"].model_dump(mode="json")
            logger.info("verify %s: %s", cfg.command.value, summary.get("status", "done"))
            return {"reports": reports, "summary": summary}
        except Exception as e:
            logger.error("verification failed: %s", e)
            raise

    def export(state: dict) -> dict:
        """Write CSV, JSON and SVG artifacts into the output directory."""
        try:
            state = ExperimentState.model_validate(state)
            cfg = state.config
            store = ArtifactStore(cfg.output_dir, cfg.formats)
            if cfg.command is Command.FLOW:
                experiments.export_flow(store, cfg, state.trace, state.reports["flow_rows"], state.summary)
            elif cfg.command in DESCENT_COMMANDS:
                experiments.export_descent(store, cfg, state.setup, state.trace, state.summary)
            elif cfg.command is Command.SEQDIAG:
                experiments.export_sequence(store, state.reports["sequence"], state.reports["regularity"])
            elif cfg.command is Command.SPRAY:
                experiments.export_growth(store, state.reports["growth"])
            else:
                experiments.export_classification(store, state.reports["classification"])
            logger.info("export: %d files in %s", len(store.written), cfg.output_dir)
            return {"artifacts": list(store.written)}
        except Exception as e:
            logger.error("export failed: %s", e)
            raise

    workflow = StateGraph(ExperimentState)

    workflow.add_node("prepare", prepare)
    workflow.add_node("descend", descend)
    workflow.add_node("analyze", analyze)
    workflow.add_node("verify", verify)
    workflow.add_node("export", export)

    workflow.add_conditional_edges("prepare", route, {"descend": "descend", "analyze": "analyze"})
    workflow.add_edge("descend", "verify")
    workflow.add_edge("analyze", "verify")
    workflow.add_edge("verify", "export")
    workflow.add_edge("export", END)

    workflow.set_entry_point("prepare")

    return workflow.compile()


def run_experiment(config: RunConfig) -> Dict[str, Any]:
    """Run one command through the graph and return its summary with the written artifacts."""
    workflow = create_workflow()
    final_state = workflow.invoke(ExperimentState(config=config).model_dump())
    final_state = ExperimentState.model_validate(final_state)
    result = dict(final_state.summary)
    result["command"] = config.command.value
    result["artifacts"] = final_state.artifacts
    result["output_dir"] = config.output_dir
    return result
