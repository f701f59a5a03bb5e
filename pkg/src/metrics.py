"""Weak Riemannian inner products on tangent fields and their Riesz solves."""

from __future__ import annotations

import logging
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.linalg import LinAlgError, block_diag, cho_factor, cho_solve

from src.exceptions import MetricError
from src.loopspace import (
    TWO_PI,
    LoopCurve,
    TangentField,
    differentiation_matrix,
    ensure_same_grid,
    require_immersion,
    spectral_derivative,
    speed,
    wavenumbers,
)

logger = logging.getLogger(__name__)

UNIFORM_SPEED_RTOL = 1e-10


class MetricKind(str, Enum):
    FLAT_L2 = "flat-l2"
    INVARIANT_L2 = "inv-l2"
    INVARIANT_H1 = "inv-h1"
    ELASTIC_SRVT = "elastic"


class MetricSpec(BaseModel):
    """Choice of inner product on tangent fields."""

    model_config = ConfigDict(frozen=True)

    kind: MetricKind = MetricKind.FLAT_L2

    @property
    def needs_immersion(self) -> bool:
        return self.kind is not MetricKind.FLAT_L2


FLAT_L2 = MetricSpec(kind=MetricKind.FLAT_L2)
INVARIANT_L2 = MetricSpec(kind=MetricKind.INVARIANT_L2)
INVARIANT_H1 = MetricSpec(kind=MetricKind.INVARIANT_H1)
ELASTIC_SRVT = MetricSpec(kind=MetricKind.ELASTIC_SRVT)


def flat_inner(u: TangentField, v: TangentField) -> float:
    """(2 pi / N) * sum_j <u_j, v_j>."""
    return float(TWO_PI / u.n * np.sum(u.vectors * v.vectors))


def _prepare(m: MetricSpec, c: LoopCurve, *fields: TangentField) -> None:
    ensure_same_grid(c, *fields)
    if m.needs_immersion:
        require_immersion(c)


def srvt_differential(c: LoopCurve, u: TangentField) -> TangentField:
    """Directional derivative of the SRVT at c along u.

    With T = c'/|c'| this is (u' - <u', T> T / 2) / sqrt(|c'|).
    """
    ensure_same_grid(c, u)
    require_immersion(c)
    d = spectral_derivative(c.points)
    s = np.linalg.norm(d, axis=1)
    tangent = d / s[:, None]
    du = spectral_derivative(u.vectors)
    along = np.sum(du * tangent, axis=1)
    return TangentField((du - 0.5 * along[:, None] * tangent) / np.sqrt(s)[:, None])


def _mean_and_nyquist(vectors: np.ndarray):
    sign = (-1.0) ** np.arange(vectors.shape[0])
    return vectors.mean(axis=0), (sign[:, None] * vectors).mean(axis=0)


def inner(m: MetricSpec, c: LoopCurve, u: TangentField, v: TangentField) -> float:
    """g_c(u, v) for the metric m.

    The elastic metric is the flat L2 product of SRVT differentials plus a
    unit-weight L2 term on the mean and on the Nyquist coefficient. Both are
    annihilated by the discrete derivative.
    """
    _prepare(m, c, u, v)
    w = TWO_PI / c.n
    if m.kind is MetricKind.FLAT_L2:
        return flat_inner(u, v)
    if m.kind is MetricKind.INVARIANT_L2:
        return float(w * np.sum(speed(c) * np.sum(u.vectors * v.vectors, axis=1)))
    if m.kind is MetricKind.INVARIANT_H1:
        s = speed(c)
        du = spectral_derivative(u.vectors)
        dv = spectral_derivative(v.vectors)
        l2 = np.sum(s * np.sum(u.vectors * v.vectors, axis=1))
        h1 = np.sum(np.sum(du * dv, axis=1) / s)
        return float(w * (l2 + h1))
    pu = srvt_differential(c, u)
    pv = srvt_differential(c, v)
    mean_u, nyq_u = _mean_and_nyquist(u.vectors)
    mean_v, nyq_v = _mean_and_nyquist(v.vectors)
    offset = TWO_PI * (np.dot(mean_u, mean_v) + np.dot(nyq_u, nyq_v))
    return flat_inner(pu, pv) + float(offset)


def norm(m: MetricSpec, c: LoopCurve, u: TangentField) -> float:
    return float(np.sqrt(max(inner(m, c, u, u), 0.0)))


def _cholesky_solve(matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        factor = cho_factor(matrix)
    except LinAlgError as e:
        raise MetricError(f"Riesz system is not positive definite: {e}") from e
    return cho_solve(factor, rhs)


def _h1_riesz(c: LoopCurve, w: np.ndarray) -> np.ndarray:
    s = speed(c)
    s0 = float(s.mean())
    if np.max(np.abs(s - s0)) <= UNIFORM_SPEED_RTOL * s0:
        k = wavenumbers(c.n)
        symbol = s0 + k**2 / s0
        return np.real(np.fft.ifft(np.fft.fft(w, axis=0) / symbol[:, None], axis=0))
    logger.debug("non-uniform speed, assembling dense H1 system (n=%d)", c.n)
    d = differentiation_matrix(c.n)
    system = np.diag(s) + d.T @ (d / s[:, None])
    return _cholesky_solve(system, w)


def _elastic_system(c: LoopCurve) -> np.ndarray:
    n = c.n
    d1 = spectral_derivative(c.points)
    s = np.linalg.norm(d1, axis=1)
    tangent = d1 / s[:, None]
    blocks = [(np.eye(2) - 0.5 * np.outer(t, t)) / np.sqrt(sj) for t, sj in zip(tangent, s)]
    push = block_diag(*blocks) @ np.kron(differentiation_matrix(n), np.eye(2))
    ones = np.ones(n)
    sign = (-1.0) ** np.arange(n)
    kernel = np.kron(np.outer(ones, ones) + np.outer(sign, sign), np.eye(2)) / n
    return push.T @ push + kernel


def riesz(m: MetricSpec, c: LoopCurve, w: TangentField) -> TangentField:
    """Return u with g_c(u, v) = flat_inner(w, v) for every grid field v."""
    _prepare(m, c, w)
    if m.kind is MetricKind.FLAT_L2:
        return TangentField(w.vectors)
    if m.kind is MetricKind.INVARIANT_L2:
        return TangentField(w.vectors / speed(c)[:, None])
    if m.kind is MetricKind.INVARIANT_H1:
        return TangentField(_h1_riesz(c, w.vectors))
    flat = _cholesky_solve(_elastic_system(c), w.vectors.reshape(-1))
    return TangentField(flat.reshape(c.n, 2))
