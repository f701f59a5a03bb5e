"""Riemannian gradient descent in the global chart, with its decrease ledger and bound checks."""

from __future__ import annotations

import io
import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.exceptions import AdmissibilityError, NonFiniteError, ValidationFailure
from src.loopspace import (
    LoopCurve,
    immersion_floor,
    is_immersion,
    require_immersion,
    resample_arclength,
    speed,
    speed_ratio,
)
from src.metrics import MetricKind, MetricSpec, norm
from src.objectives import ObjectiveKind, ObjectiveSpec, gradient, needs_immersion, value

logger = logging.getLogger(__name__)

MAX_STORED_ITERATES = 1000
DECREASE_SLACK = 1e-12
RISE_RTOL = 1e-9


class StepKind(str, Enum):
    CONSTANT = "constant"
    BACKTRACKING = "backtracking"


class StepRule(BaseModel):
    """Step-size rule with an admissibility guard that shrinks alpha."""

    model_config = ConfigDict(frozen=True)

    kind: StepKind = StepKind.CONSTANT
    alpha: float
    shrink: float = 0.5
    max_halvings: int = Field(40, ge=0)
    # fraction of the explicit-Euler stability limit of a length flow; None leaves alpha alone
    stability_fraction: Optional[float] = Field(None, gt=0, le=1)
    # redistribute nodes by arclength once max/min speed exceeds this
    max_speed_ratio: Optional[float] = Field(None, gt=1)

    @field_validator("alpha")
    @classmethod
    def alpha_positive(cls, value: float) -> float:
        if not value > 0:
            raise ValueError("step size must be positive")
        return value

    @field_validator("shrink")
    @classmethod
    def shrink_in_unit_interval(cls, value: float) -> float:
        if not 0 < value < 1:
            raise ValueError("shrink must lie in (0, 1)")
        return value


class IterationRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    k: int
    f_value: float
    grad_norm: float = Field(ge=0)
    alpha_used: Optional[float] = None
    decrease: Optional[float] = None  # f_k - f_{k+1}; None on the last record
    halvings: int = 0


class BoundRow(BaseModel):
    K: int
    min_grad_norm: float
    bound: float
    holds: bool


@dataclass(frozen=True)
class DescentTrace:
    records: List[IterationRecord]
    iterates: Dict[int, LoopCurve] = field(default_factory=dict)
    status: str = "max_iter"

    def __len__(self) -> int:
        return len(self.records)

    @property
    def f_values(self) -> np.ndarray:
        return np.array([r.f_value for r in self.records])

    @property
    def grad_norms(self) -> np.ndarray:
        return np.array([r.grad_norm for r in self.records])

    @property
    def final_curve(self) -> LoopCurve:
        return self.iterates[max(self.iterates)]

    @property
    def collapsed(self) -> bool:
        return self.status.startswith("collapsed")

    def to_csv(self) -> str:
        def fmt(x) -> str:
            return "" if x is None else f"{x:.17g}"

        buf = io.StringIO()
        buf.write("iter,f,grad_norm,alpha,decrease,halvings\n")
        for r in self.records:
            buf.write(
                f"{r.k},{fmt(r.f_value)},{fmt(r.grad_norm)},{fmt(r.alpha_used)},"
                f"{fmt(r.decrease)},{r.halvings}\n"
            )
        return buf.getvalue()

    def iterates_json(self) -> str:
        keys = sorted(self.iterates)
        n = self.iterates[keys[0]].n if keys else 0
        payload = {
            "n": n,
            "status": self.status,
            "iterations": keys,
            "points": [self.iterates[k].points.tolist() for k in keys],
        }
        return json.dumps(payload)


def _thin(curves: List[LoopCurve]) -> Dict[int, LoopCurve]:
    total = len(curves)
    if total <= MAX_STORED_ITERATES + 1:
        return dict(enumerate(curves))
    stride = math.ceil(total / MAX_STORED_ITERATES)
    kept = {k: curves[k] for k in range(0, total, stride)}
    kept[total - 1] = curves[-1]
    return kept


def stable_step(o: ObjectiveSpec, m: MetricSpec, c: LoopCurve) -> Optional[float]:
    """Explicit-Euler stability limit 2 / lambda_max of a length flow at c, or None.

    With s the speed and k = N/2 - 1 the highest resolved wavenumber, the
    frozen-coefficient Hessian of length is bounded by k^2 / min s under the
    flat metric and by k^2 / min s^2 under the invariant L2 metric. The H1
    Riesz map bounds it by 1.
    """
    if o.kind is not ObjectiveKind.LENGTH:
        return None
    top = c.n // 2 - 1
    s_min = float(speed(c).min())
    if m.kind is MetricKind.FLAT_L2:
        return 2.0 * s_min / top**2
    if m.kind is MetricKind.INVARIANT_L2:
        return 2.0 * s_min**2 / top**2
    if m.kind is MetricKind.INVARIANT_H1:
        return 2.0
    return None


def _step_size(rule: StepRule, o: ObjectiveSpec, m: MetricSpec, c: LoopCurve) -> float:
    if rule.stability_fraction is None:
        return rule.alpha
    limit = stable_step(o, m, c)
    if limit is None:
        return rule.alpha
    return min(rule.alpha, rule.stability_fraction * limit)


def _redistribute(rule: StepRule, c: LoopCurve) -> LoopCurve:
    if rule.max_speed_ratio is None or speed_ratio(c) <= rule.max_speed_ratio:
        return c
    logger.debug("speed ratio %.3f above %.3f, redistributing by arclength", speed_ratio(c), rule.max_speed_ratio)
    return resample_arclength(c)


def rgd(
    o: ObjectiveSpec,
    m: MetricSpec,
    c0: LoopCurve,
    rule: StepRule,
    max_iter: int,
    grad_tol: Optional[float] = None,
    collapse_fraction: Optional[float] = None,
) -> DescentTrace:
    """Gradient descent c_{k+1} = c_k - alpha_k grad f(c_k).

    The update is plain addition in the vector space of curves. When the
    objective or metric needs an immersion, a step whose minimal speed drops
    to 1e-8 times the maximal speed of c0 is shrunk up to
    ``rule.max_halvings`` times. With ``collapse_fraction`` set, the run ends
    with a "collapsed at iteration k" status instead of an error once f drops
    below that fraction of f(c0) or the guard gives up.

    Under the constant rule a step that raises f ends the run with an
    "unstable at iteration k" status and is not taken.
    """
    if max_iter < 1:
        raise ValidationFailure(f"max_iter must be at least 1, got {max_iter}")
    eps = None
    if needs_immersion(o, m):
        require_immersion(c0)
        eps = immersion_floor(c0)

    c = c0
    f = value(o, c)
    if not math.isfinite(f):
        raise NonFiniteError("objective is not finite at the initial curve")
    grad = gradient(o, m, c)
    gnorm = norm(m, c, grad)
    tol = grad_tol if grad_tol is not None else 1e-8 * (1.0 + gnorm)
    f_floor = collapse_fraction * f if collapse_fraction is not None else None

    records: List[IterationRecord] = []
    curves = [c]
    status = "max_iter"
    for k in range(max_iter):
        logger.debug("iter %d f=%.17g |grad|=%.6e", k, f, gnorm)
        if gnorm < tol:
            status = "converged"
            break

        alpha = _step_size(rule, o, m, c)
        halvings = 0
        trial, f_trial = None, None
        while True:
            candidate = c.moved(grad, -alpha)
            ok = eps is None or is_immersion(candidate, eps)
            if ok:
                candidate = _redistribute(rule, candidate)
                f_candidate = value(o, candidate)
                if not math.isfinite(f_candidate):
                    if collapse_fraction is None:
                        raise NonFiniteError(f"objective is not finite at iteration {k + 1}")
                    ok = False
                elif rule.kind is StepKind.BACKTRACKING and f_candidate > f:
                    ok = False
            if ok:
                trial, f_trial = candidate, f_candidate
                break
            if halvings >= rule.max_halvings:
                break
            alpha *= rule.shrink
            halvings += 1
            logger.warning("iter %d: step rejected, alpha shrunk to %.3e", k, alpha)

        if trial is None:
            if collapse_fraction is None:
                raise AdmissibilityError()
            status = f"collapsed at iteration {k}"
            break
        if f_trial > f + RISE_RTOL * (1.0 + abs(f)):
            logger.warning("iter %d: f rose from %.17g to %.17g at alpha=%.3e", k, f, f_trial, alpha)
            status = f"unstable at iteration {k}"
            break

        records.append(
            IterationRecord(
                k=k, f_value=f, grad_norm=gnorm, alpha_used=alpha, decrease=f - f_trial, halvings=halvings
            )
        )
        c, f = trial, f_trial
        curves.append(c)
        grad = gradient(o, m, c)
        gnorm = norm(m, c, grad)
        if f_floor is not None and f < f_floor:
            status = f"collapsed at iteration {k + 1}"
            break

    records.append(IterationRecord(k=len(records), f_value=f, grad_norm=gnorm))
    logger.info("descent finished: %s after %d steps, f=%.6e |grad|=%.3e", status, len(records) - 1, f, gnorm)
    return DescentTrace(records=records, iterates=_thin(curves), status=status)


def check_sufficient_decrease(trace: DescentTrace, c: float) -> Tuple[bool, Optional[int]]:
    """Check f_k - f_{k+1} >= c |||grad f_k|||^2 at every step; returns (ok, first violating k)."""
    if len(trace) < 2:
        raise ValidationFailure("sufficient decrease needs at least two records")
    for r in trace.records:
        if r.decrease is None:
            continue
        slack = DECREASE_SLACK * (1.0 + abs(r.f_value))
        if r.decrease + slack < c * r.grad_norm**2:
            return False, r.k
    return True, None


def convergence_bound(trace: DescentTrace, f_low: float, c: float) -> List[BoundRow]:
    """min_{k<K} |||grad f_k||| against sqrt((f_0 - f_low)/c)/sqrt(K) for each K."""
    if not c > 0:
        raise ValidationFailure("decrease constant must be positive")
    f_values = trace.f_values
    if f_low > f_values.min():
        raise ValidationFailure(f"f_low={f_low} exceeds the recorded minimum {f_values.min()}")
    norms = trace.grad_norms
    scale = math.sqrt((f_values[0] - f_low) / c)
    rows = []
    for K in range(1, max(len(trace), 2)):
        best = float(norms[:K].min())
        bound = scale / math.sqrt(K)
        rows.append(BoundRow(K=K, min_grad_norm=best, bound=bound, holds=best <= bound + DECREASE_SLACK))
    return rows
