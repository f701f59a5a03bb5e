"""Second-order checks: Taylor remainders, Hessian coercivity and critical-point classes."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel

from src.exceptions import AdmissibilityError
from src.loopspace import LoopCurve, TangentField, ensure_same_grid, immersion_floor, is_immersion
from src.metrics import MetricKind, MetricSpec, inner, norm
from src.objectives import (
    FD_STEP,
    ObjectiveSpec,
    gradient,
    hessian_apply,
    hessian_is_form,
    needs_immersion,
    value,
)

logger = logging.getLogger(__name__)

REMAINDER_FLOOR = 1e-14
NONNEGATIVE_TOL = 1e-8
COERCIVE_TOL = 1e-6


class TaylorReport(BaseModel):
    t_values: List[float]
    remainders: List[float]
    fitted_order: float


@dataclass(frozen=True)
class CoercivityEstimate:
    mu_hat: float
    probes: int
    min_direction: TangentField
    seed: int
    quotients: np.ndarray


class PointClass(str, Enum):
    NOT_CRITICAL = "NotCritical"
    CRITICAL = "Critical"
    SECOND_ORDER_CRITICAL = "SecondOrderCritical"
    COERCIVE_MINIMIZER_CANDIDATE = "CoerciveMinimizerCandidate"


class ClassificationResult(BaseModel):
    point_class: PointClass
    grad_norm: float
    mu_hat: Optional[float] = None
    probes: int = 0
    seed: int = 0

    def to_json(self) -> str:
        return json.dumps(
            {
                "class": self.point_class.value,
                "grad_norm": self.grad_norm,
                "mu_hat": self.mu_hat,
                "probes": self.probes,
                "seed": self.seed,
            },
            indent=2,
        )


def metric_variation(m: MetricSpec, c: LoopCurve, a: TangentField, v: TangentField) -> float:
    """d/dtau g_{c + tau v}(a, v) at tau = 0, by central differences."""
    if m.kind is MetricKind.FLAT_L2:
        return 0.0
    vnorm = float(np.linalg.norm(v.vectors))
    if vnorm == 0.0:
        return 0.0
    tau = FD_STEP * (1.0 + float(np.linalg.norm(c.points))) / vnorm
    plus = inner(m, c.moved(v, tau), a, v)
    minus = inner(m, c.moved(v, -tau), a, v)
    return (plus - minus) / (2.0 * tau)


def fit_order(t_values: Sequence[float], remainders: Sequence[float], floor: float) -> float:
    """Least-squares slope of log remainder against log t over remainders above floor."""
    pairs = [(t, r) for t, r in zip(t_values, remainders) if r > floor]
    if len(pairs) < 2:
        return float("inf")
    t, r = np.array(pairs).T
    return float(np.polyfit(np.log(t), np.log(r), 1)[0])


def taylor_check(
    o: ObjectiveSpec,
    m: MetricSpec,
    c: LoopCurve,
    v: TangentField,
    t_list: Sequence[float],
    include_hessian: bool = True,
) -> TaylorReport:
    """Compare f(c + t v) with f + t g(grad f, v) + t^2/2 g(Hess f[v], v).

    The chart curve c + t v has zero acceleration, so the fourth term of the
    expansion vanishes. A finite-difference Hessian differentiates the gradient
    in the chart, which leaves the variation of the metric itself to be added.
    """
    ensure_same_grid(c, v)
    eps = immersion_floor(c) if needs_immersion(o, m) else None
    ts = [t for t in sorted(set(float(t) for t in t_list), reverse=True) if t > 0]
    ts = [t for t in ts if eps is None or is_immersion(c.moved(v, t), eps)]
    if not ts:
        raise AdmissibilityError("left admissible set: no step in t_list keeps the curve admissible")

    f0 = value(o, c)
    grad = gradient(o, m, c)
    slope = inner(m, c, grad, v)
    curvature = 0.0
    if include_hessian:
        curvature = inner(m, c, hessian_apply(o, m, c, v), v)
        if not hessian_is_form(o):
            curvature += metric_variation(m, c, grad, v)

    remainders = []
    for t in ts:
        model = f0 + t * slope + 0.5 * t**2 * curvature
        remainders.append(abs(value(o, c.moved(v, t)) - model))
    order = fit_order(ts, remainders, REMAINDER_FLOOR * (1.0 + abs(f0)))
    return TaylorReport(t_values=ts, remainders=remainders, fitted_order=order)


def probe_fields(n: int, n_random: int, seed: int, scale: float = 1.0) -> Iterator[TangentField]:
    """Seeded Gaussian fields, then cos/sin k*theta in each coordinate for k = 1..N/2-1.

    The constant and Nyquist modes are left out: the discrete derivative
    annihilates both.
    """
    rng = np.random.default_rng(seed)
    for _ in range(n_random):
        yield TangentField(scale * rng.standard_normal((n, 2)))
    theta = 2.0 * np.pi * np.arange(n) / n
    for k in range(1, n // 2):
        for wave in (np.cos(k * theta), np.sin(k * theta)):
            for axis in range(2):
                vec = np.zeros((n, 2))
                vec[:, axis] = scale * wave
                yield TangentField(vec)


def coercivity_estimate(
    o: ObjectiveSpec,
    m: MetricSpec,
    c: LoopCurve,
    n_random: int,
    seed: int = 0,
    scale: float = 1.0,
) -> CoercivityEstimate:
    """Smallest Rayleigh quotient g(Hess f[v], v) / |||v|||^2 over the probe set."""
    quotients = []
    directions = []
    for v in probe_fields(c.n, n_random, seed, scale):
        hv = hessian_apply(o, m, c, v)
        quotients.append(inner(m, c, hv, v) / inner(m, c, v, v))
        directions.append(v)
    q = np.array(quotients)
    idx = int(np.argmin(q))
    logger.debug("coercivity: %d probes, mu_hat=%.6e at probe %d", len(q), q[idx], idx)
    return CoercivityEstimate(
        mu_hat=float(q[idx]), probes=len(q), min_direction=directions[idx], seed=seed, quotients=q
    )


def classify_point(
    o: ObjectiveSpec,
    m: MetricSpec,
    c: LoopCurve,
    grad_tol: float = 1e-8,
    n_random: int = 16,
    seed: int = 0,
) -> ClassificationResult:
    gnorm = norm(m, c, gradient(o, m, c))
    if gnorm >= grad_tol:
        return ClassificationResult(point_class=PointClass.NOT_CRITICAL, grad_norm=gnorm, seed=seed)
    est = coercivity_estimate(o, m, c, n_random, seed)
    if est.mu_hat >= COERCIVE_TOL:
        point_class = PointClass.COERCIVE_MINIMIZER_CANDIDATE
    elif np.all(est.quotients >= -NONNEGATIVE_TOL):
        point_class = PointClass.SECOND_ORDER_CRITICAL
    else:
        point_class = PointClass.CRITICAL
    return ClassificationResult(
        point_class=point_class, grad_norm=gnorm, mu_hat=est.mu_hat, probes=est.probes, seed=seed
    )
