"""Objective functionals on loop space: values, differentials, gradients and Hessian actions."""

from __future__ import annotations

import logging
from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, InstanceOf, field_validator, model_validator

from src.exceptions import AdmissibilityError, NonFiniteError, ValidationFailure
from src.loopspace import (
    TWO_PI,
    ArclengthMap,
    LoopCurve,
    TangentField,
    arclength,
    arclength_parameters,
    ensure_same_grid,
    fourier_evaluate,
    identity_curve,
    immersion_floor,
    is_immersion,
    require_immersion,
    spectral_derivative,
    speed,
)
from src.metrics import INVARIANT_H1, MetricKind, MetricSpec, flat_inner, riesz

logger = logging.getLogger(__name__)

FD_STEP = 1e-5
MAX_FD_HALVINGS = 40


class ObjectiveKind(str, Enum):
    LENGTH = "length"
    TRACK_IDENTITY = "track-id"
    TRACK_REGULARIZED = "track-reg"
    LOOP_ENERGY = "energy"


class ObjectiveSpec(BaseModel):
    """Tagged functional on closed curves."""

    model_config = ConfigDict(frozen=True)

    kind: ObjectiveKind
    target: Optional[InstanceOf[LoopCurve]] = None
    lam: float = 0.0
    f_low: Optional[float] = None

    @field_validator("lam")
    @classmethod
    def lam_nonnegative(cls, value: float) -> float:
        if not value >= 0:
            raise ValueError("lambda must be nonnegative")
        return value

    @model_validator(mode="after")
    def target_matches_kind(self) -> "ObjectiveSpec":
        has_target = self.target is not None
        if has_target != (self.kind is ObjectiveKind.TRACK_REGULARIZED):
            raise ValueError("a target curve is required for track-reg and only for track-reg")
        return self

    @property
    def is_quadratic(self) -> bool:
        return self.kind is not ObjectiveKind.LENGTH


def _target_points(o: ObjectiveSpec, c: LoopCurve) -> np.ndarray:
    if o.kind is ObjectiveKind.TRACK_IDENTITY:
        return identity_curve(c.n).points
    if o.target.n != c.n:
        raise ValidationFailure(f"target has {o.target.n} nodes, curve has {c.n}")
    return o.target.points


def needs_immersion(o: ObjectiveSpec, m: MetricSpec) -> bool:
    """Whether iterates of (o, m) must stay inside the immersion set."""
    return m.needs_immersion or o.kind is ObjectiveKind.LENGTH


def value(o: ObjectiveSpec, c: LoopCurve) -> float:
    w = TWO_PI / c.n
    if o.kind is ObjectiveKind.LENGTH:
        return arclength(c)
    if o.kind is ObjectiveKind.LOOP_ENERGY:
        return float(0.5 * w * np.sum(spectral_derivative(c.points) ** 2))
    diff = c.points - _target_points(o, c)
    total = np.sum(diff**2)
    if o.kind is ObjectiveKind.TRACK_REGULARIZED:
        total = total + o.lam * np.sum(c.points**2)
    return float(w * total)


def flat_representer(o: ObjectiveSpec, c: LoopCurve) -> TangentField:
    """The field w with D f(c)[v] = flat_inner(w, v) for all v."""
    if o.kind is ObjectiveKind.LENGTH:
        require_immersion(c)
        d = spectral_derivative(c.points)
        tangent = d / np.linalg.norm(d, axis=1)[:, None]
        return TangentField(-spectral_derivative(tangent))
    if o.kind is ObjectiveKind.LOOP_ENERGY:
        return TangentField(-spectral_derivative(c.points, 2))
    scale = 1.0 + o.lam if o.kind is ObjectiveKind.TRACK_REGULARIZED else 1.0
    return TangentField(2.0 * (scale * c.points - _target_points(o, c)))


def differential(o: ObjectiveSpec, c: LoopCurve, v: TangentField) -> float:
    ensure_same_grid(c, v)
    if o.kind is ObjectiveKind.LENGTH:
        require_immersion(c)
        d = spectral_derivative(c.points)
        tangent = d / np.linalg.norm(d, axis=1)[:, None]
        return flat_inner(TangentField(tangent), TangentField(spectral_derivative(v.vectors)))
    if o.kind is ObjectiveKind.LOOP_ENERGY:
        return flat_inner(
            TangentField(spectral_derivative(c.points)),
            TangentField(spectral_derivative(v.vectors)),
        )
    return flat_inner(flat_representer(o, c), v)


def kernel_length_gradient(gamma: LoopCurve) -> np.ndarray:
    """H1 length gradient gamma - G*gamma on an arclength-uniform curve.

    G(s) = cosh(|s| - L/2) / (2 sinh(L/2)) is the periodic Green's function of
    1 - d^2/ds^2. The trapezoidal sum carries the Euler-Maclaurin corrections
    for the corner of G at s = t.
    """
    n = gamma.n
    total = arclength(gamma)
    h = total / n
    s = h * np.arange(n)
    dist = np.abs(s[:, None] - s[None, :])
    kernel = np.cosh(dist - 0.5 * total) / (2.0 * np.sinh(0.5 * total))
    pts = gamma.points
    gss = spectral_derivative(pts, 2) * (TWO_PI / total) ** 2
    conv = h * kernel @ pts - (h**2 / 12.0) * pts + (h**4 / 720.0) * (pts + 3.0 * gss)
    return pts - conv


def h1_length_gradient(c: LoopCurve) -> TangentField:
    """Kernel form of the invariant-H1 length gradient, mapped back to the nodes of c."""
    require_immersion(c)
    phi = arclength_parameters(c)
    gamma = LoopCurve(fourier_evaluate(c.points, phi))
    grad_gamma = kernel_length_gradient(gamma)
    amap = ArclengthMap(c)
    sigma = TWO_PI * amap.value(c.theta) / amap.total
    return TangentField(fourier_evaluate(grad_gamma, sigma))


def _analytic_gradient(o: ObjectiveSpec, m: MetricSpec, c: LoopCurve) -> Optional[TangentField]:
    if o.kind is ObjectiveKind.LENGTH:
        if m.kind is MetricKind.INVARIANT_H1:
            return h1_length_gradient(c)
        if m.kind in (MetricKind.FLAT_L2, MetricKind.INVARIANT_L2):
            # -D(c'/|c'|): the continuum -k N_c, and the exact gradient of the discrete length
            grad = flat_representer(o, c).vectors
            if m.kind is MetricKind.INVARIANT_L2:
                grad = grad / speed(c)[:, None]
            return TangentField(grad)
        return None
    if o.kind is ObjectiveKind.LOOP_ENERGY:
        if m.kind is MetricKind.INVARIANT_H1:
            return riesz(INVARIANT_H1, c, TangentField(-spectral_derivative(c.points, 2)))
        return None
    if m.kind is MetricKind.FLAT_L2:
        return flat_representer(o, c)
    return None


def gradient(o: ObjectiveSpec, m: MetricSpec, c: LoopCurve, analytic: bool = True) -> TangentField:
    """Riemannian gradient of o at c under m.

    Closed-form branches are used where available; ``analytic=False`` forces
    the Riesz solve of the flat representer.
    """
    grad = _analytic_gradient(o, m, c) if analytic else None
    if grad is None:
        grad = riesz(m, c, flat_representer(o, c))
    if not np.all(np.isfinite(grad.vectors)):
        raise NonFiniteError(f"non-finite gradient for {o.kind.value} under {m.kind.value}")
    return grad


def _second_variation(o: ObjectiveSpec, v: TangentField) -> TangentField:
    if o.kind is ObjectiveKind.LOOP_ENERGY:
        return TangentField(-spectral_derivative(v.vectors, 2))
    scale = 1.0 + o.lam if o.kind is ObjectiveKind.TRACK_REGULARIZED else 1.0
    return 2.0 * scale * v


def hessian_is_form(o: ObjectiveSpec, method: str = "auto") -> bool:
    """True when hessian_apply returns the Riesz representer of the second variation."""
    return method == "auto" and o.is_quadratic


def hessian_apply(
    o: ObjectiveSpec, m: MetricSpec, c: LoopCurve, v: TangentField, method: str = "auto"
) -> TangentField:
    """Hessian action Hess f(c)[v].

    Quadratic objectives use the Riesz representer of their constant second
    variation. Otherwise (or with ``method="fd"``) the gradient field is
    differentiated in the global chart by central differences along v.
    """
    if method not in ("auto", "fd"):
        raise ValidationFailure(f"unknown Hessian method {method!r}")
    ensure_same_grid(c, v)
    if hessian_is_form(o, method):
        return riesz(m, c, _second_variation(o, v))
    vnorm = float(np.linalg.norm(v.vectors))
    if vnorm == 0.0:
        return TangentField.zeros(c.n)
    t = FD_STEP * (1.0 + float(np.linalg.norm(c.points))) / vnorm
    eps = immersion_floor(c) if needs_immersion(o, m) else None
    for _ in range(MAX_FD_HALVINGS + 1):
        plus, minus = c.moved(v, t), c.moved(v, -t)
        if eps is None or (is_immersion(plus, eps) and is_immersion(minus, eps)):
            break
        t *= 0.5
    else:
        raise AdmissibilityError("left admissible set: finite-difference stencil is not immersed")
    return (gradient(o, m, plus) - gradient(o, m, minus)) / (2.0 * t)
