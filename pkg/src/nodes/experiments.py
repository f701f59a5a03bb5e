"""Runners behind the workflow nodes: set up a run, verify its ledger, write its artifacts."""

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Dict, List, Optional, Tuple

import numpy as np

from src.diagnostics import RegularityReport, SequenceReport, h1_gradient_regularity, oscillating_sequence
from src.exceptions import ValidationFailure
from src.finitedim import GrowthReport, christoffel_growth
from src.loopspace import (
    LoopCurve,
    arclength,
    enclosed_area,
    experiment_start_curve,
    experiment_target_curve,
    identity_curve,
    isoperimetric_ratio,
    sample_ellipse,
)
from src.metrics import FLAT_L2, MetricKind, MetricSpec, norm
from src.nodes import figures
from src.nodes.artifacts import ArtifactStore, load_curve
from src.objectives import ObjectiveKind, ObjectiveSpec, value
from src.optimizer import DescentTrace, StepRule, check_sufficient_decrease, convergence_bound, rgd
from src.secondorder import ClassificationResult, classify_point

if TYPE_CHECKING:
    from src.workflow_graph import RunConfig

logger = logging.getLogger(__name__)

SNAPSHOT_ITERATIONS = (0, 5, 10, 20)
ISO_RATIO_TOL = 1e-3
FLOW_STABILITY_FRACTION = 0.5
FLOW_MAX_SPEED_RATIO = 4.0


@dataclass(frozen=True)
class Setup:
    curve: LoopCurve
    objective: ObjectiveSpec
    metric: MetricSpec
    minimizer: Optional[LoopCurve] = None


def initial_curve(cfg: "RunConfig") -> LoopCurve:
    if cfg.curve_file:
        curve = load_curve(cfg.curve_file)
        if curve.n != cfg.n_samples:
            logger.info("curve file has %d nodes; overriding n_samples=%d", curve.n, cfg.n_samples)
        return curve
    if cfg.initial == "circle":
        return identity_curve(cfg.n_samples)
    if cfg.initial == "ellipse":
        return sample_ellipse(2.0, 1.0, cfg.n_samples)
    return experiment_start_curve(cfg.n_samples)


def build_setup(cfg: "RunConfig") -> Setup:
    curve = initial_curve(cfg)
    n = curve.n
    target = None
    minimizer = None
    f_low = 0.0
    if cfg.objective is ObjectiveKind.TRACK_REGULARIZED:
        target = load_curve(cfg.target_file) if cfg.target_file else experiment_target_curve(n)
        if target.n != n:
            raise ValidationFailure(f"target has {target.n} nodes, initial curve has {n}")
        minimizer = LoopCurve(target.points / (1.0 + cfg.lam))
    elif cfg.objective is ObjectiveKind.TRACK_IDENTITY:
        minimizer = identity_curve(n)
    objective = ObjectiveSpec(
        kind=cfg.objective,
        target=target,
        lam=cfg.lam if target is not None else 0.0,
    )
    if minimizer is not None:
        f_low = value(objective, minimizer)
    objective = objective.model_copy(update={"f_low": f_low})
    if cfg.command == "classify" and not cfg.curve_file:
        curve = minimizer if minimizer is not None else identity_curve(n)
    return Setup(curve=curve, objective=objective, metric=MetricSpec(kind=cfg.metric), minimizer=minimizer)


def run_descent(setup: Setup, cfg: "RunConfig") -> DescentTrace:
    if cfg.command != "flow":
        return rgd(setup.objective, setup.metric, setup.curve, StepRule(alpha=cfg.alpha), cfg.steps)
    rule = StepRule(
        alpha=cfg.alpha,
        stability_fraction=FLOW_STABILITY_FRACTION,
        max_speed_ratio=FLOW_MAX_SPEED_RATIO,
    )
    return rgd(
        setup.objective, setup.metric, setup.curve, rule, cfg.steps, collapse_fraction=cfg.collapse_fraction
    )


def _ratios(values: List[float]) -> List[Optional[float]]:
    return [b / a if a != 0 else None for a, b in zip(values, values[1:])]


def descent_summary(setup: Setup, cfg: "RunConfig", trace: DescentTrace) -> dict:
    """Decrease identity, convergence bound and contraction rates of a tracking run."""
    o, m = setup.objective, setup.metric
    f_values = trace.f_values
    summary = {
        "status": trace.status,
        "steps": len(trace) - 1,
        "f0": float(f_values[0]),
        "f_final": float(f_values[-1]),
        "grad_norm_final": float(trace.grad_norms[-1]),
    }
    if setup.minimizer is None:
        return summary

    f_star = o.f_low
    summary["f_star"] = f_star
    summary["f_gap_ratios"] = _ratios([float(f - f_star) for f in f_values])
    keys = sorted(trace.iterates)
    distances = [
        norm(FLAT_L2, setup.minimizer, trace.iterates[k].as_field() - setup.minimizer.as_field()) for k in keys
    ]
    summary["distance_ratios"] = _ratios(distances)
    summary["minimizer_class"] = classify_point(
        o, m, setup.minimizer, n_random=cfg.n_random, seed=cfg.seed
    ).model_dump(mode="json")

    if m.kind is MetricKind.FLAT_L2 and o.kind is not ObjectiveKind.LOOP_ENERGY:
        scale = 1.0 + o.lam
        decrease_c = cfg.alpha * (1.0 - scale * cfg.alpha)
        summary["contraction_expected"] = (1.0 - 2.0 * cfg.alpha * scale) ** 2
        if decrease_c > 0 and len(trace) >= 2:
            ok, first = check_sufficient_decrease(trace, decrease_c)
            summary["sufficient_decrease"] = {"c": decrease_c, "holds": ok, "first_violation": first}
            f_low = min(f_star, float(f_values.min()))
            rows = convergence_bound(trace, f_low, decrease_c)
            summary["convergence_bound"] = [r.model_dump() for r in rows]
    return summary


def flow_rows(trace: DescentTrace) -> List[Tuple[int, float, float, float]]:
    rows = []
    for k in sorted(trace.iterates):
        c = trace.iterates[k]
        rows.append((k, arclength(c), enclosed_area(c), isoperimetric_ratio(c)))
    return rows


def flow_summary(trace: DescentTrace, rows) -> dict:
    ratios = np.array([r[3] for r in rows])
    rises = np.diff(ratios)
    return {
        "status": trace.status,
        "collapsed": trace.collapsed,
        "steps": len(trace) - 1,
        "length_initial": rows[0][1],
        "length_final": rows[-1][1],
        "iso_ratio_max_rise": float(rises.max()) if rises.size else 0.0,
        "iso_ratio_monotone": bool(np.all(rises <= ISO_RATIO_TOL)),
    }


def _pick_snapshots(trace: DescentTrace, wanted) -> Dict[int, LoopCurve]:
    keys = sorted(trace.iterates)
    chosen = [k for k in wanted if k in trace.iterates]
    if keys[-1] not in chosen and keys[-1] < max(wanted):
        chosen.append(keys[-1])
    return {k: trace.iterates[k] for k in chosen}


def _snapshot_rows(snapshots: Dict[int, LoopCurve]):
    for k, curve in sorted(snapshots.items()):
        for j, (x, y) in enumerate(curve.points):
            yield (k, j, float(x), float(y))


def export_descent(store: ArtifactStore, cfg: "RunConfig", setup: Setup, trace: DescentTrace, summary: dict):
    store.save_text("trace.csv", trace.to_csv())
    store.save_text("iterates.json", trace.iterates_json())
    snapshots = _pick_snapshots(trace, SNAPSHOT_ITERATIONS)
    store.save_csv("snapshots.csv", ["iter", "node", "x", "y"], _snapshot_rows(snapshots))
    f_star = summary.get("f_star", 0.0)
    iterations = [r.k for r in trace.records]
    f_gap = [float(r.f_value - f_star) for r in trace.records]
    grad_norms = [r.grad_norm for r in trace.records]
    store.save_csv("decay.csv", ["iter", "f_gap", "grad_norm"], zip(iterations, f_gap, grad_norms))
    if store.enabled("figure.svg"):
        fig = figures.descent_figure(snapshots, iterations, f_gap, grad_norms, setup.minimizer, title=cfg.command.value)
        store.save_figure("figure.svg", fig)
    if setup.minimizer is not None:
        store.save_text("minimizer.csv", setup.minimizer.to_csv())
        store.save_text("minimizer.json", setup.minimizer.to_json())
    store.save_json("report.json", summary)


def export_flow(store: ArtifactStore, cfg: "RunConfig", trace: DescentTrace, rows, summary: dict):
    store.save_text("trace.csv", trace.to_csv())
    store.save_text("iterates.json", trace.iterates_json())
    keys = sorted(trace.iterates)
    wanted = sorted({keys[int(i * (len(keys) - 1) / 4)] for i in range(5)})
    snapshots = {k: trace.iterates[k] for k in wanted}
    store.save_csv("snapshots.csv", ["iter", "node", "x", "y"], _snapshot_rows(snapshots))
    store.save_csv("flow.csv", ["iter", "length", "area", "iso_ratio"], rows)
    if store.enabled("figure.svg"):
        fig = figures.flow_figure(
            snapshots, [r[0] for r in rows], [r[1] for r in rows], [r[3] for r in rows], title=summary["status"]
        )
        store.save_figure("figure.svg", fig)
    store.save_json("report.json", summary)


def sequence_reports(cfg: "RunConfig") -> Tuple[SequenceReport, RegularityReport]:
    sequence = oscillating_sequence(cfg.kmax, n=cfg.n_samples)
    regularity = h1_gradient_regularity(sample_ellipse(2.0, 1.0, cfg.n_samples))
    return sequence, regularity


def export_sequence(store: ArtifactStore, sequence: SequenceReport, regularity: RegularityReport):
    store.save_text("sequence.csv", sequence.to_csv())
    store.save_text("regularity.csv", regularity.to_csv())
    store.save_text("regularity_spectrum.csv", regularity.spectrum_csv())
    if store.enabled("figure.svg"):
        store.save_figure(
            "figure.svg",
            figures.sequence_figure(sequence.k_values, sequence.curve_norms, sequence.consecutive_grad_gaps),
        )
        store.save_figure(
            "regularity.svg",
            figures.regularity_figure(
                regularity.modes, regularity.curve_mags, regularity.source_mags, regularity.grad_mags
            ),
        )
    store.save_json(
        "report.json",
        {
            "grad_gap_min": min(sequence.consecutive_grad_gaps),
            "grad_gap_max": max(sequence.consecutive_grad_gaps),
            "curve_norm_final": sequence.curve_norms[-1],
            "regularity": regularity.summary(),
        },
    )


def growth_report(cfg: "RunConfig") -> GrowthReport:
    return christoffel_growth(cfg.dims)


def export_growth(store: ArtifactStore, growth: GrowthReport):
    store.save_text("growth.csv", growth.to_csv())
    store.save_text("growth.json", growth.to_json())
    if store.enabled("figure.svg"):
        store.save_figure("figure.svg", figures.growth_figure(growth.d_values, growth.max_gamma))


def classification(setup: Setup, cfg: "RunConfig") -> ClassificationResult:
    return classify_point(setup.objective, setup.metric, setup.curve, n_random=cfg.n_random, seed=cfg.seed)


def export_classification(store: ArtifactStore, result: ClassificationResult):
    store.save_text("classification.json", result.to_json())
