import itertools

import numpy as np
import pytest
from pydantic import ValidationError

from src.loopspace import (
    TWO_PI,
    LoopCurve,
    TangentField,
    arclength,
    identity_curve,
    resample_arclength,
    sample_circle,
    sample_ellipse,
    spectral_derivative,
    theta_grid,
)
from src.metrics import ELASTIC_SRVT, FLAT_L2, INVARIANT_H1, INVARIANT_L2, inner, norm
from src.objectives import (
    ObjectiveKind,
    ObjectiveSpec,
    differential,
    gradient,
    hessian_apply,
    kernel_length_gradient,
    value,
)
from tests.conftest import smooth_curve, smooth_field

METRICS = [FLAT_L2, INVARIANT_L2, INVARIANT_H1, ELASTIC_SRVT]
KINDS = list(ObjectiveKind)


def make_objective(kind: ObjectiveKind, n: int, lam: float = 0.7) -> ObjectiveSpec:
    if kind is ObjectiveKind.TRACK_REGULARIZED:
        target = LoopCurve(np.column_stack([np.cos(theta_grid(n)), 1.5 * np.sin(theta_grid(n))]))
        return ObjectiveSpec(kind=kind, target=target, lam=lam)
    return ObjectiveSpec(kind=kind)


def test_values_on_known_curves():
    assert value(make_objective(ObjectiveKind.LENGTH, 64), sample_circle(2.0, 64)) == pytest.approx(4 * np.pi)
    assert value(make_objective(ObjectiveKind.TRACK_IDENTITY, 64), identity_curve(64)) == 0.0
    assert value(make_objective(ObjectiveKind.LOOP_ENERGY, 64), identity_curve(64)) == pytest.approx(np.pi)


@pytest.mark.parametrize(
    "kind,m", list(itertools.product(KINDS, METRICS)), ids=lambda p: getattr(p, "value", None) or p.kind.value
)
def test_gradient_matches_finite_differences(kind, m):
    rng = np.random.default_rng(7)
    n = 128
    o = make_objective(kind, n)
    t = 1e-5
    for _ in range(3):
        c = smooth_curve(rng, n)
        grad = gradient(o, m, c)
        grad_norm = norm(m, c, grad)
        for _ in range(4):
            v = smooth_field(rng, n)
            fd = (value(o, c.moved(v, t)) - value(o, c.moved(v, -t))) / (2 * t)
            slope = inner(m, c, grad, v)
            scale = max(abs(fd), 1e-3 * grad_norm * norm(m, c, v))
            assert abs(slope - fd) <= 1e-5 * scale


@pytest.mark.parametrize("kind", KINDS, ids=lambda k: k.value)
def test_differential_agrees_with_flat_gradient(kind, rng):
    o = make_objective(kind, 64)
    c = smooth_curve(rng, 64)
    v = smooth_field(rng, 64)
    assert differential(o, c, v) == pytest.approx(inner(FLAT_L2, c, gradient(o, FLAT_L2, c), v), rel=1e-9)


def test_riesz_route_agrees_with_closed_form_h1_gradient(rng):
    o = make_objective(ObjectiveKind.LENGTH, 128)
    c = smooth_curve(rng, 128)
    kernel = gradient(o, INVARIANT_H1, c)
    solved = gradient(o, INVARIANT_H1, c, analytic=False)
    assert np.linalg.norm(kernel.vectors - solved.vectors) <= 1e-6 * np.linalg.norm(solved.vectors)


@pytest.mark.parametrize("r", [1.0, -1.0, 1.0 / 3.0, -1.0 / 3.0])
def test_flat_length_gradient_of_scaled_identity(r):
    ident = identity_curve(64)
    c = LoopCurve(r * ident.points)
    grad = gradient(make_objective(ObjectiveKind.LENGTH, 64), FLAT_L2, c)
    np.testing.assert_allclose(grad.vectors, np.sign(r) * ident.points, atol=1e-7)


@pytest.mark.parametrize("r", [0.5, 1.0, 2.0])
def test_invariant_length_gradient_on_circles(r):
    c = sample_circle(r, 64)
    grad = gradient(make_objective(ObjectiveKind.LENGTH, 64), INVARIANT_L2, c)
    np.testing.assert_allclose(grad.vectors, c.points / r**2, atol=1e-7)


def test_kernel_gradient_matches_fourier_solve():
    gamma = resample_arclength(sample_ellipse(2.0, 1.0, 512))
    total = arclength(gamma)
    kernel = kernel_length_gradient(gamma)

    source = -spectral_derivative(gamma.points, 2) * (TWO_PI / total) ** 2
    kappa = TWO_PI / total * np.fft.fftfreq(512, 1.0 / 512)
    fourier = np.real(np.fft.ifft(np.fft.fft(source, axis=0) / (1.0 + kappa**2)[:, None], axis=0))
    assert np.linalg.norm(kernel - fourier) <= 1e-5 * np.linalg.norm(fourier)


def test_h1_length_gradient_on_circle():
    c = sample_circle(2.0, 128)
    grad = gradient(make_objective(ObjectiveKind.LENGTH, 128), INVARIANT_H1, c)
    np.testing.assert_allclose(grad.vectors, c.points / 5.0, atol=1e-8)


@pytest.mark.parametrize("metric", [FLAT_L2, INVARIANT_L2])
def test_length_gradient_is_the_exact_discrete_gradient(metric, rng):
    c = LoopCurve(identity_curve(32).points + 0.01 * rng.standard_normal((32, 2)))
    o = make_objective(ObjectiveKind.LENGTH, 32)
    closed = gradient(o, metric, c)
    solved = gradient(o, metric, c, analytic=False)
    np.testing.assert_allclose(closed.vectors, solved.vectors, rtol=1e-10, atol=1e-12)
    v = TangentField(rng.standard_normal((32, 2)))
    t = 1e-6
    fd = (value(o, c.moved(v, t)) - value(o, c.moved(v, -t))) / (2 * t)
    assert inner(metric, c, closed, v) == pytest.approx(fd, rel=1e-6, abs=1e-8)


@pytest.mark.parametrize("kind", [ObjectiveKind.LENGTH, ObjectiveKind.TRACK_REGULARIZED])
def test_flat_hessian_is_symmetric(kind, rng):
    c = sample_circle(1.0, 32)
    o = make_objective(kind, 32)
    a = TangentField(rng.standard_normal((32, 2)))
    b = TangentField(rng.standard_normal((32, 2)))
    hab = inner(FLAT_L2, c, hessian_apply(o, FLAT_L2, c, a), b)
    hba = inner(FLAT_L2, c, a, hessian_apply(o, FLAT_L2, c, b))
    assert hab == pytest.approx(hba, rel=1e-6)


def test_quadratic_hessian_is_scaled_identity_under_flat_metric(rng):
    o = make_objective(ObjectiveKind.TRACK_REGULARIZED, 32)
    v = smooth_field(rng, 32)
    hv = hessian_apply(o, FLAT_L2, smooth_curve(rng, 32), v)
    np.testing.assert_allclose(hv.vectors, 3.4 * v.vectors, rtol=1e-14)


def test_energy_hessian_under_h1_damps_mode_k():
    c = identity_curve(32)
    theta = theta_grid(32)
    v = TangentField(np.column_stack([np.cos(3 * theta), np.zeros(32)]))
    hv = hessian_apply(make_objective(ObjectiveKind.LOOP_ENERGY, 32), INVARIANT_H1, c, v)
    np.testing.assert_allclose(hv.vectors, 0.9 * v.vectors, atol=1e-12)


def test_fd_hessian_of_quadratic_matches_form(rng):
    o = make_objective(ObjectiveKind.TRACK_IDENTITY, 32)
    c, v = smooth_curve(rng, 32), smooth_field(rng, 32)
    exact = hessian_apply(o, FLAT_L2, c, v)
    fd = hessian_apply(o, FLAT_L2, c, v, method="fd")
    np.testing.assert_allclose(fd.vectors, exact.vectors, atol=1e-6)


def test_objective_spec_validation():
    with pytest.raises(ValidationError, match="target"):
        ObjectiveSpec(kind=ObjectiveKind.TRACK_REGULARIZED)
    with pytest.raises(ValidationError, match="target"):
        ObjectiveSpec(kind=ObjectiveKind.LENGTH, target=identity_curve(8))
    with pytest.raises(ValidationError, match="lambda must be nonnegative"):
        ObjectiveSpec(kind=ObjectiveKind.TRACK_IDENTITY, lam=-1.0)
