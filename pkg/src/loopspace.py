"""Discrete calculus on closed plane curves.

A curve is stored as N samples on the uniform grid theta_j = 2*pi*j/N and is
differentiated spectrally. The Nyquist wavenumber is dropped for every
derivative order, so the derivative matrix is real and skew-symmetric and
repeated differentiation agrees with higher-order differentiation.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.linalg import circulant

from src.exceptions import (
    GridMismatchError,
    NotImmersionError,
    SRVTClosureError,
    ValidationFailure,
)

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
MIN_SAMPLES = 8
IMMERSION_RTOL = 1e-8
SRVT_CLOSURE_RTOL = 1e-6
_NEWTON_ITERATIONS = 50


def _frozen_array(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] == 0:
        raise ValidationFailure(f"{name} must have shape (N, 2), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationFailure(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


def check_grid_size(n: int) -> int:
    """Validate a spectral grid size (even, at least 8)."""
    if int(n) != n or n < MIN_SAMPLES or n % 2:
        raise ValidationFailure(f"grid size must be even and at least {MIN_SAMPLES}, got {n}")
    return int(n)


def theta_grid(n: int) -> np.ndarray:
    return TWO_PI * np.arange(n) / n


@dataclass(frozen=True, eq=False)
class TangentField:
    """N plane vectors attached to the nodes of a curve."""

    vectors: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vectors", _frozen_array(self.vectors, "vectors"))

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @classmethod
    def zeros(cls, n: int) -> "TangentField":
        return cls(np.zeros((n, 2)))

    @classmethod
    def constant(cls, n: int, vector) -> "TangentField":
        return cls(np.tile(np.asarray(vector, dtype=float), (n, 1)))

    def _other(self, other: "TangentField") -> np.ndarray:
        if not isinstance(other, TangentField):
            return NotImplemented
        if other.n != self.n:
            raise GridMismatchError(f"fields on grids of size {self.n} and {other.n}")
        return other.vectors

    def __add__(self, other: "TangentField") -> "TangentField":
        vec = self._other(other)
        if vec is NotImplemented:
            return NotImplemented
        return TangentField(self.vectors + vec)

    def __sub__(self, other: "TangentField") -> "TangentField":
        vec = self._other(other)
        if vec is NotImplemented:
            return NotImplemented
        return TangentField(self.vectors - vec)

    def __mul__(self, scalar: float) -> "TangentField":
        return TangentField(float(scalar) * self.vectors)

    __rmul__ = __mul__

    def __truediv__(self, scalar: float) -> "TangentField":
        return TangentField(self.vectors / float(scalar))

    def __neg__(self) -> "TangentField":
        return TangentField(-self.vectors)


@dataclass(frozen=True, eq=False)
class LoopCurve:
    """Closed plane curve sampled at theta_j = 2*pi*j/N, j = 0..N-1."""

    points: np.ndarray

    def __post_init__(self):
        pts = _frozen_array(self.points, "points")
        check_grid_size(pts.shape[0])
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def theta(self) -> np.ndarray:
        return theta_grid(self.n)

    def as_field(self) -> TangentField:
        """The position vector viewed as a tangent field (c as a point of the vector space)."""
        return TangentField(self.points)

    def moved(self, field: TangentField, t: float = 1.0) -> "LoopCurve":
        """Chart addition c + t*field."""
        ensure_same_grid(self, field)
        return LoopCurve(self.points + t * field.vectors)

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "points": self.points.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "LoopCurve":
        try:
            data = json.loads(text)
            points = data["points"]
            n = int(data["n"])
        except (ValueError, KeyError, TypeError) as e:
            raise ValidationFailure(f"invalid curve JSON: {e}") from e
        if len(points) != n:
            raise ValidationFailure(f"curve JSON declares n={n} but holds {len(points)} points")
        return cls(np.asarray(points, dtype=float))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("theta,x,y\n")
        for t, (x, y) in zip(self.theta, self.points):
            buf.write(f"{t:.17g},{x:.17g},{y:.17g}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "LoopCurve":
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header != ["theta", "x", "y"]:
            raise ValidationFailure(f"expected header theta,x,y, got {header}")
        try:
            rows = [(float(r[1]), float(r[2])) for r in reader if r]
        except (ValueError, IndexError) as e:
            raise ValidationFailure(f"invalid curve CSV row: {e}") from e
        return cls(np.asarray(rows, dtype=float))


def ensure_same_grid(c: LoopCurve, *fields: TangentField) -> None:
    for f in fields:
        if f.n != c.n:
            raise GridMismatchError(f"field has {f.n} nodes, curve has {c.n}")


# -- fixtures ---------------------------------------------------------------


def sample_curve(fn: Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]], n: int) -> LoopCurve:
    """Sample theta -> (x(theta), y(theta)) on the uniform grid."""
    n = check_grid_size(n)
    x, y = fn(theta_grid(n))
    return LoopCurve(np.column_stack([x, y]))


def sample_circle(radius: float, n: int) -> LoopCurve:
    """Counterclockwise circle of the given radius centred at the origin."""
    if not radius > 0:
        raise ValidationFailure(f"radius must be positive, got {radius}")
    return sample_curve(lambda t: (radius * np.cos(t), radius * np.sin(t)), n)


def sample_ellipse(a: float, b: float, n: int) -> LoopCurve:
    return sample_curve(lambda t: (a * np.cos(t), b * np.sin(t)), n)


def identity_curve(n: int) -> LoopCurve:
    """The identity embedding of the unit circle."""
    return sample_circle(1.0, n)


def experiment_start_curve(n: int) -> LoopCurve:
    """(x, y) -> (x^3, x + y) restricted to the unit circle."""
    return sample_curve(lambda t: (np.cos(t) ** 3, np.cos(t) + np.sin(t)), n)


def experiment_target_curve(n: int) -> LoopCurve:
    """(x, y) -> (x, 3y/2) restricted to the unit circle."""
    return sample_curve(lambda t: (np.cos(t), 1.5 * np.sin(t)), n)


# -- spectral primitives ----------------------------------------------------


def wavenumbers(n: int) -> np.ndarray:
    """Integer FFT wavenumbers with the Nyquist entry set to zero."""
    k = np.fft.fftfreq(n, 1.0 / n)
    k[n // 2] = 0.0
    return k


def spectral_derivative(values: np.ndarray, order: int = 1) -> np.ndarray:
    """Differentiate periodic samples along axis 0.

    Parameters
    ----------
    values : ndarray, shape (N,) or (N, d)
        Samples on the uniform grid of [0, 2*pi).
    order : int
        Derivative order, >= 0.

    Returns
    -------
    ndarray
        Real samples of the derivative of the trigonometric interpolant,
        with the Nyquist mode removed.
    """
    values = np.asarray(values, dtype=float)
    if order == 0:
        return values.copy()
    n = values.shape[0]
    k = wavenumbers(n)
    symbol = (1j * k) ** order
    if values.ndim > 1:
        symbol = symbol.reshape((n,) + (1,) * (values.ndim - 1))
    return np.real(np.fft.ifft(symbol * np.fft.fft(values, axis=0), axis=0))


def differentiation_matrix(n: int) -> np.ndarray:
    """Dense circulant matrix D with D @ u == spectral_derivative(u)."""
    n = check_grid_size(n)
    h = TWO_PI / n
    m = np.arange(1, n)
    column = np.zeros(n)
    column[1:] = 0.5 * (-1.0) ** m / np.tan(m * h / 2.0)
    return circulant(column)


def fourier_evaluate(values: np.ndarray, phases: np.ndarray) -> np.ndarray:
    """Evaluate the trigonometric interpolant of grid samples at arbitrary phases.

    The Nyquist coefficient is evaluated as a cosine so that the interpolant
    stays real and reproduces the samples on the grid.
    """
    values = np.asarray(values, dtype=float)
    phases = np.asarray(phases, dtype=float)
    n = values.shape[0]
    coeff = np.fft.fft(values, axis=0) / n
    k = np.fft.fftfreq(n, 1.0 / n)
    basis = np.exp(1j * np.outer(phases, k))
    basis[:, n // 2] = np.cos(0.5 * n * phases)
    return np.real(basis @ coeff)


# -- geometry ---------------------------------------------------------------


def derivative(c: LoopCurve) -> TangentField:
    """Spectral derivative of the curve with respect to theta."""
    return TangentField(spectral_derivative(c.points))


def speed(c: LoopCurve) -> np.ndarray:
    return np.linalg.norm(spectral_derivative(c.points), axis=1)


def immersion_floor(c: LoopCurve) -> float:
    """Speed threshold 1e-8 * max speed of c, to be held fixed while c is perturbed."""
    return IMMERSION_RTOL * float(speed(c).max())


def is_immersion(c: LoopCurve, eps: Optional[float] = None) -> bool:
    """True iff min speed > eps (default: 1e-8 times the maximal speed of c itself).

    The relative default is scale free, so a curve shrunk to rounding noise
    still passes. Callers that move a curve pass ``immersion_floor`` of the
    starting curve instead.
    """
    s = speed(c)
    top = float(s.max())
    if eps is None:
        if top == 0.0:
            return False
        eps = IMMERSION_RTOL * top
    elif not eps > 0:
        raise ValidationFailure(f"eps must be positive, got {eps}")
    return bool(s.min() > eps)


def require_immersion(c: LoopCurve, eps: Optional[float] = None) -> None:
    if not is_immersion(c, eps):
        raise NotImmersionError()


def speed_ratio(c: LoopCurve) -> float:
    """max speed / min speed; 1 for arclength-uniform curves, inf when not immersed."""
    s = speed(c)
    low = float(s.min())
    return float(s.max()) / low if low > 0 else float("inf")


def arclength(c: LoopCurve) -> float:
    return float(TWO_PI / c.n * np.sum(speed(c)))


def enclosed_area(c: LoopCurve) -> float:
    """Signed area 1/2 * integral of (x y' - y x'); positive for counterclockwise curves."""
    d = spectral_derivative(c.points)
    x, y = c.points[:, 0], c.points[:, 1]
    return float(0.5 * TWO_PI / c.n * np.sum(x * d[:, 1] - y * d[:, 0]))


def isoperimetric_ratio(c: LoopCurve) -> float:
    """L^2 / (4 pi |A|); equals 1 exactly for circles."""
    area = abs(enclosed_area(c))
    if area == 0.0:
        return float("inf")
    return arclength(c) ** 2 / (4.0 * np.pi * area)


def tangent_normal(c: LoopCurve) -> Tuple[TangentField, TangentField]:
    """Return (c', N_c) with N_c = (-y', x'), i.e. c' rotated by +pi/2 and not normalized."""
    require_immersion(c)
    d = spectral_derivative(c.points)
    return TangentField(d), TangentField(np.column_stack([-d[:, 1], d[:, 0]]))


def signed_curvature(c: LoopCurve) -> np.ndarray:
    """k = (x'y'' - y'x'') / |c'|^3, positive on counterclockwise circles."""
    require_immersion(c)
    d1 = spectral_derivative(c.points, 1)
    d2 = spectral_derivative(c.points, 2)
    s = np.linalg.norm(d1, axis=1)
    return (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]) / s**3


class ArclengthMap:
    """theta -> cumulative arclength S(theta), from the trigonometric interpolant of the speed."""

    def __init__(self, c: LoopCurve):
        n = c.n
        self._speed = speed(c)
        coeff = np.fft.fft(self._speed)
        k = wavenumbers(n)
        anti = np.zeros_like(coeff)
        mask = k != 0
        anti[mask] = coeff[mask] / (1j * k[mask])
        self.mean_speed = float(coeff[0].real / n)
        self.total = TWO_PI * self.mean_speed
        self._periodic = np.real(np.fft.ifft(anti))
        self._offset = float(self._periodic[0])

    def value(self, phases: np.ndarray) -> np.ndarray:
        phases = np.asarray(phases, dtype=float)
        return self.mean_speed * phases + fourier_evaluate(self._periodic, phases) - self._offset

    def rate(self, phases: np.ndarray) -> np.ndarray:
        return fourier_evaluate(self._speed, phases)


def cumulative_arclength(c: LoopCurve) -> np.ndarray:
    """S(theta_j), the arclength from node 0 to node j."""
    return ArclengthMap(c).value(c.theta)


def arclength_parameters(c: LoopCurve) -> np.ndarray:
    """Parameters phi_i with S(phi_i) = i*L/N.

    A monotone cubic (PCHIP) inverse of the sampled cumulative arclength gives
    the starting guess; Newton steps on the spectral S polish it.
    """
    require_immersion(c)
    amap = ArclengthMap(c)
    n = c.n
    total = amap.total
    targets = total * np.arange(n) / n
    nodes_s = np.append(amap.value(c.theta), total)
    if not np.all(np.diff(nodes_s) > 0):
        raise NotImmersionError("not an immersion: cumulative arclength is not increasing")
    phi = PchipInterpolator(nodes_s, np.append(c.theta, TWO_PI))(targets)
    for it in range(_NEWTON_ITERATIONS):
        rate = amap.rate(phi)
        if np.any(rate <= 0):
            raise NotImmersionError("not an immersion: speed interpolant vanishes")
        step = (amap.value(phi) - targets) / rate
        phi = phi - step
        if np.max(np.abs(step)) < 1e-15 * TWO_PI:
            break
    else:
        logger.warning("arclength inversion stopped after %d Newton steps", _NEWTON_ITERATIONS)
    logger.debug("arclength inversion converged after %d Newton steps", it + 1)
    return phi


def resample_arclength(c: LoopCurve) -> LoopCurve:
    """Reparametrize c so that its N nodes are equally spaced in arclength."""
    phi = arclength_parameters(c)
    return LoopCurve(fourier_evaluate(c.points, phi))


def srvt(c: LoopCurve) -> TangentField:
    """Square-root velocity transform q = c' / sqrt(|c'|)."""
    require_immersion(c)
    d = spectral_derivative(c.points)
    s = np.linalg.norm(d, axis=1)
    return TangentField(d / np.sqrt(s)[:, None])


def srvt_inverse(q: Union[TangentField, np.ndarray], base=(0.0, 0.0)) -> LoopCurve:
    """Rebuild c(theta) = base + integral_0^theta |q| q from a closed SRVT image."""
    vec = q.vectors if isinstance(q, TangentField) else np.asarray(q, dtype=float)
    n = check_grid_size(vec.shape[0])
    integrand = np.linalg.norm(vec, axis=1)[:, None] * vec
    mean = integrand.mean(axis=0)
    scale = float(np.max(np.linalg.norm(integrand, axis=1)))
    if np.linalg.norm(mean) > SRVT_CLOSURE_RTOL * scale:
        raise SRVTClosureError()
    coeff = np.fft.fft(integrand, axis=0)
    k = wavenumbers(n)
    anti = np.zeros_like(coeff)
    mask = k != 0
    anti[mask] = coeff[mask] / (1j * k[mask])[:, None]
    periodic = np.real(np.fft.ifft(anti, axis=0))
    theta = theta_grid(n)
    points = np.asarray(base, dtype=float) + periodic - periodic[0] + np.outer(theta, mean)
    return LoopCurve(points)
