"""Truncated sequence-space laboratory for metric sprays.

Metrics here are smooth fields of inner products on R^d. The quadratic form
of the metric spray is recovered from

    g(x, Gamma(x, v), w) = 1/2 d_1 g(x, v, v; w) - d_1 g(x, v, w; v)

with the base-point derivatives d_1 g taken by central differences, and the
covariant derivative nabla_X Y = dY(X) - B(X, Y) uses the polarization B of
Gamma.
"""

from __future__ import annotations

import io
import json
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from src.exceptions import MetricError, ValidationFailure

logger = logging.getLogger(__name__)

FD_STEP = 1e-5
VectorField = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class TruncatedPoint:
    coords: np.ndarray

    def __post_init__(self):
        arr = np.array(self.coords, dtype=float).reshape(-1)
        if arr.size < 1 or not np.all(np.isfinite(arr)):
            raise ValidationFailure("a truncated point needs d >= 1 finite coordinates")
        arr.setflags(write=False)
        object.__setattr__(self, "coords", arr)

    @property
    def dim(self) -> int:
        return self.coords.size


PointLike = Union[TruncatedPoint, Sequence[float], np.ndarray]


def _coords(p: PointLike) -> np.ndarray:
    if isinstance(p, TruncatedPoint):
        return p.coords
    return np.asarray(p, dtype=float).reshape(-1)


def _same_dim(*arrays: np.ndarray) -> int:
    dims = {a.size for a in arrays}
    if len(dims) != 1:
        raise ValidationFailure(f"dimension mismatch: {sorted(dims)}")
    return dims.pop()


class FiniteMetricField(ABC):
    """Smooth map x -> g_x, a symmetric bilinear form on R^d."""

    def __init__(self, dim: int):
        if dim < 1:
            raise ValidationFailure(f"dimension must be positive, got {dim}")
        self.dim = dim

    @abstractmethod
    def evaluate(self, x: np.ndarray, v: np.ndarray, w: np.ndarray) -> float:
        ...

    def gram(self, x: np.ndarray) -> np.ndarray:
        basis = np.eye(self.dim)
        return np.array([[self.evaluate(x, basis[i], basis[j]) for j in range(self.dim)] for i in range(self.dim)])


class EuclideanMetric(FiniteMetricField):
    def evaluate(self, x, v, w) -> float:
        return float(np.dot(v, w))


class TwistedMetric(FiniteMetricField):
    """e^{-|x|^2} sum_n v_n w_n / n^3."""

    def evaluate(self, x, v, w) -> float:
        return twisted_inner(x, v, w)


class ConformalMetric(FiniteMetricField):
    """e^{2 phi(x)} <v, w>."""

    def __init__(self, dim: int, phi: Callable[[np.ndarray], float]):
        super().__init__(dim)
        self.phi = phi

    def evaluate(self, x, v, w) -> float:
        return float(np.exp(2.0 * self.phi(x)) * np.dot(v, w))


def twisted_inner(p: PointLike, x: PointLike, y: PointLike) -> float:
    p, x, y = _coords(p), _coords(x), _coords(y)
    d = _same_dim(p, x, y)
    n = np.arange(1, d + 1, dtype=float)
    return float(np.exp(-np.dot(p, p)) * np.sum(x * y / n**3))


def twisted_gradient(df: PointLike, p: PointLike) -> np.ndarray:
    """Gradient e^{|p|^2} n^3 df_n of a function with partial derivatives df."""
    df, p = _coords(df), _coords(p)
    d = _same_dim(df, p)
    n = np.arange(1, d + 1, dtype=float)
    return np.exp(np.dot(p, p)) * n**3 * df


@dataclass(frozen=True)
class ChristoffelSolution:
    gamma: np.ndarray
    condition: float


def _default_step(x: np.ndarray, fd_step: Optional[float]) -> float:
    return fd_step if fd_step is not None else FD_STEP * (1.0 + float(np.linalg.norm(x)))


def _base_derivative(g: FiniteMetricField, x, a, b, u, h: float) -> float:
    """d_1 g(x, a, b; u): difference quotient along u/|u|, scaled by |u|."""
    size = float(np.linalg.norm(u))
    if size == 0.0:
        return 0.0
    e = u / size
    return size * (g.evaluate(x + h * e, a, b) - g.evaluate(x - h * e, a, b)) / (2.0 * h)


def christoffel_solve(
    g: FiniteMetricField, x: PointLike, v: PointLike, fd_step: Optional[float] = None
) -> ChristoffelSolution:
    x, v = _coords(x), _coords(v)
    if _same_dim(x, v) != g.dim:
        raise ValidationFailure(f"metric has dimension {g.dim}, point has {x.size}")
    h = _default_step(x, fd_step)
    basis = np.eye(g.dim)
    rhs = np.array(
        [0.5 * _base_derivative(g, x, v, v, e, h) - _base_derivative(g, x, v, e, v, h) for e in basis]
    )
    gram = g.gram(x)
    if not np.allclose(gram, gram.T, rtol=1e-12, atol=0.0):
        raise MetricError("Gram matrix is not symmetric")
    try:
        factor = cho_factor(gram)
    except LinAlgError as e:
        raise MetricError(f"Gram matrix is not positive definite: {e}") from e
    return ChristoffelSolution(gamma=cho_solve(factor, rhs), condition=float(np.linalg.cond(gram)))


def polarization(
    g: FiniteMetricField, x: PointLike, u: PointLike, w: PointLike, fd_step: Optional[float] = None
) -> np.ndarray:
    """B(x, u, w) = (Gamma(x, u + w) - Gamma(x, u) - Gamma(x, w)) / 2."""
    u, w = _coords(u), _coords(w)
    both = christoffel_solve(g, x, u + w, fd_step).gamma
    return 0.5 * (both - christoffel_solve(g, x, u, fd_step).gamma - christoffel_solve(g, x, w, fd_step).gamma)


def metric_compat_check(
    g: FiniteMetricField,
    x: PointLike,
    fields: Tuple[VectorField, VectorField, VectorField],
    fd_step: Optional[float] = None,
) -> float:
    """|X.g(Y, Z) - g(nabla_X Y, Z) - g(Y, nabla_X Z)| at x."""
    x = _coords(x)
    X, Y, Z = fields
    h = _default_step(x, fd_step)
    x_vec, y_vec, z_vec = (np.asarray(f(x), dtype=float) for f in fields)
    size = float(np.linalg.norm(x_vec))
    if size == 0.0:
        return 0.0
    e = x_vec / size
    fwd, bwd = x + h * e, x - h * e

    lhs = size * (g.evaluate(fwd, Y(fwd), Z(fwd)) - g.evaluate(bwd, Y(bwd), Z(bwd))) / (2.0 * h)
    dy = size * (np.asarray(Y(fwd)) - np.asarray(Y(bwd))) / (2.0 * h)
    dz = size * (np.asarray(Z(fwd)) - np.asarray(Z(bwd))) / (2.0 * h)
    nabla_y = dy - polarization(g, x, x_vec, y_vec, fd_step)
    nabla_z = dz - polarization(g, x, x_vec, z_vec, fd_step)
    rhs = g.evaluate(x, nabla_y, z_vec) + g.evaluate(x, y_vec, nabla_z)
    return float(abs(lhs - rhs))


def compat_order(
    g: FiniteMetricField,
    x: PointLike,
    fields: Tuple[VectorField, VectorField, VectorField],
    steps: Sequence[float] = (1e-2, 1e-3, 1e-4),
) -> float:
    """Log-log slope of the compatibility residual against the difference step."""
    residuals = [metric_compat_check(g, x, fields, h) for h in steps]
    logger.debug("compatibility residuals %s at steps %s", residuals, list(steps))
    return float(np.polyfit(np.log(steps), np.log(residuals), 1)[0])


def default_base_point(d: int) -> np.ndarray:
    """x_n = 1/(2n): a fixed l2 point with every coordinate nonzero."""
    return 0.5 / np.arange(1, d + 1, dtype=float)


@dataclass(frozen=True)
class GrowthReport:
    d_values: List[int]
    max_gamma: List[float]
    notes: str = (
        "Finite-dimensional Christoffel data grow with the truncation; "
        "this is a witness for the missing metric spray in the limit, not a proof."
    )

    @property
    def strictly_increasing(self) -> bool:
        return all(b > a for a, b in zip(self.max_gamma, self.max_gamma[1:]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("d,max_gamma\n")
        for d, m in zip(self.d_values, self.max_gamma):
            buf.write(f"{d},{m:.17g}\n")
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {
                "d": self.d_values,
                "max_gamma": self.max_gamma,
                "strictly_increasing": self.strictly_increasing,
                "notes": self.notes,
            },
            indent=2,
        )


def christoffel_growth(
    d_list: Sequence[int],
    metric_factory: Callable[[int], FiniteMetricField] = TwistedMetric,
    base_point: Callable[[int], np.ndarray] = default_base_point,
    fd_step: Optional[float] = None,
) -> GrowthReport:
    """max_n |Gamma(x0, e_n)| for each truncation dimension d."""
    d_list = [int(d) for d in d_list]
    if not d_list or any(b <= a for a, b in zip(d_list, d_list[1:])) or d_list[0] < 1:
        raise ValidationFailure(f"dimensions must be positive and strictly increasing, got {d_list}")
    maxima = []
    for d in d_list:
        g = metric_factory(d)
        x0 = base_point(d)
        basis = np.eye(d)
        maxima.append(max(float(np.linalg.norm(christoffel_solve(g, x0, e, fd_step).gamma)) for e in basis))
        logger.debug("d=%d max |Gamma|=%.6e", d, maxima[-1])
    return GrowthReport(d_values=d_list, max_gamma=maxima)
