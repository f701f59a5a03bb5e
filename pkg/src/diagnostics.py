"""Numerical pathologies: a sequentially discontinuous gradient and the H1 gradient's spectrum."""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.exceptions import ValidationFailure
from src.loopspace import (
    TWO_PI,
    LoopCurve,
    TangentField,
    arclength,
    identity_curve,
    require_immersion,
    resample_arclength,
    spectral_derivative,
)
from src.metrics import FLAT_L2, flat_inner, norm
from src.objectives import ObjectiveKind, ObjectiveSpec, gradient, kernel_length_gradient

logger = logging.getLogger(__name__)

SPECTRAL_FLOOR = 1e-12
MIN_FIT_MODES = 3
STORED_GRADIENTS = 10
SPECTRAL_FLOOR_FLAG = "spectral floor"
NO_OBSTRUCTION_FLAG = "no finite-order obstruction at this resolution"


@dataclass(frozen=True)
class SequenceReport:
    k_values: List[int]
    curve_norms: List[float]
    consecutive_grad_gaps: List[float]  # gap i is between k_values[i] and k_values[i + 1]
    grad_fields: Dict[int, TangentField] = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("k,curve_norm,grad_gap\n")
        for i, (k, cn) in enumerate(zip(self.k_values, self.curve_norms)):
            gap = "" if i == 0 else f"{self.consecutive_grad_gaps[i - 1]:.17g}"
            buf.write(f"{k},{cn:.17g},{gap}\n")
        return buf.getvalue()


def oscillating_sequence(k_max: int, n: int = 64) -> SequenceReport:
    """Flat-L2 length gradients along c_k = ((-1)^k / k) id.

    The curves converge to the constant curve while consecutive gradients stay
    a fixed distance 2 sqrt(2 pi) apart.
    """
    if k_max < 2:
        raise ValidationFailure(f"k_max must be at least 2, got {k_max}")
    ident = identity_curve(n).points
    length = ObjectiveSpec(kind=ObjectiveKind.LENGTH)
    k_values = list(range(1, k_max + 1))
    norms, grads = [], []
    for k in k_values:
        ck = LoopCurve((-1.0) ** k / k * ident)
        norms.append(norm(FLAT_L2, ck, ck.as_field()))
        grads.append(gradient(length, FLAT_L2, ck))
    gaps = []
    for prev, cur in zip(grads, grads[1:]):
        diff = cur - prev
        gaps.append(float(np.sqrt(flat_inner(diff, diff))))
    kept = {k: g for k, g in zip(k_values, grads) if k <= STORED_GRADIENTS or k == k_max}
    return SequenceReport(k_values=k_values, curve_norms=norms, consecutive_grad_gaps=gaps, grad_fields=kept)


@dataclass(frozen=True)
class RegularityReport:
    modes: np.ndarray
    curve_mags: np.ndarray
    source_mags: np.ndarray
    grad_mags: np.ndarray
    exponents: Dict[str, Optional[float]]
    diagonalization_residual: float
    flags: List[str]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("mode,curve_mag,grad_mag\n")
        for k, cm, gm in zip(self.modes, self.curve_mags, self.grad_mags):
            buf.write(f"{k},{cm:.17g},{gm:.17g}\n")
        return buf.getvalue()

    def spectrum_csv(self) -> str:
        """All three plotted spectra, source included."""
        buf = io.StringIO()
        buf.write("mode,curve_mag,source_mag,grad_mag\n")
        for k, cm, sm, gm in zip(self.modes, self.curve_mags, self.source_mags, self.grad_mags):
            buf.write(f"{k},{cm:.17g},{sm:.17g},{gm:.17g}\n")
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "exponents": self.exponents,
            "diagonalization_residual": self.diagonalization_residual,
            "flags": self.flags,
        }


def _mode_magnitudes(values: np.ndarray, modes: int) -> np.ndarray:
    coeff = np.fft.fft(values, axis=0) / values.shape[0]
    return np.linalg.norm(coeff, axis=1)[: modes + 1]


def decay_exponent(mags: np.ndarray, floor: float, fit_range: Tuple[int, int]) -> Optional[float]:
    """Algebraic decay rate p in |a_k| ~ k^-p over modes above the floor, or None."""
    lo, hi = fit_range
    k = np.arange(len(mags))
    mask = (k >= max(lo, 1)) & (k <= hi) & (mags > floor)
    if mask.sum() < MIN_FIT_MODES:
        return None
    slope = np.polyfit(np.log(k[mask]), np.log(mags[mask]), 1)[0]
    return float(-slope)


def h1_gradient_regularity(
    c: LoopCurve, modes: Optional[int] = None, fit_range: Optional[Tuple[int, int]] = None
) -> RegularityReport:
    """Fourier decay of the kernel H1 length gradient against the curve and the H1 source."""
    require_immersion(c)
    gamma = resample_arclength(c)
    n = gamma.n
    top = n // 2 - 1
    modes = top if modes is None else min(int(modes), top)
    fit_range = fit_range or (1, modes)
    total = arclength(gamma)

    grad = kernel_length_gradient(gamma)
    source = -spectral_derivative(gamma.points, 2) * (TWO_PI / total) ** 2
    curve_mags = _mode_magnitudes(gamma.points, modes)
    source_mags = _mode_magnitudes(source, modes)
    grad_mags = _mode_magnitudes(grad, modes)

    k = np.arange(modes + 1)
    kappa = TWO_PI * k / total
    expected = source_mags / (1.0 + kappa**2)
    scale = float(source_mags.max()) or 1.0
    residual = float(np.max(np.abs(grad_mags - expected)) / scale)

    exponents = {}
    flags = []
    for name, mags in (("curve", curve_mags), ("source", source_mags), ("gradient", grad_mags)):
        exponents[name] = decay_exponent(mags, SPECTRAL_FLOOR * max(float(mags.max()), 1e-300), fit_range)
    if any(v is None for v in exponents.values()):
        flags.append(SPECTRAL_FLOOR_FLAG)
    tail = grad_mags[max(1, (3 * modes) // 4):]
    if tail.size and np.all(tail <= SPECTRAL_FLOOR * float(grad_mags.max())):
        flags.append(NO_OBSTRUCTION_FLAG)
    logger.info("regularity: exponents=%s residual=%.3e flags=%s", exponents, residual, flags)
    return RegularityReport(
        modes=k,
        curve_mags=curve_mags,
        source_mags=source_mags,
        grad_mags=grad_mags,
        exponents=exponents,
        diagonalization_residual=residual,
        flags=flags,
    )
