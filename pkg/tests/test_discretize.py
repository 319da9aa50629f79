import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nehari.discretize import (bilinear, build_discretization, energy, energy_and_gradient,
                               energy_hessian, hat_autocorrelation, make_direction,
                               reference_stiffness, seminorm_sq, weak_residual,
                               weighted_power_integral)
from nehari.errors import AssumptionError, PreconditionError
from nehari.fibering import FiberingData, eval_fibering
from nehari.problem import Domain, ProblemSpec, WeightDescriptor

from conftest import degenerate_spec, nondegenerate_spec

# ||hat||^2 of the unit hat on [-1, 1] at s = 0.4, from a 30-digit mpmath
# quadrature of the double integral plus the exact exterior tail.
UNIT_HAT_S04 = 5.632513446857386621


@pytest.fixture(scope="module")
def disc():
    return build_discretization(degenerate_spec())


def test_unit_hat_matches_frozen_quadrature():
    assert reference_stiffness(4, 0.4)[0] == pytest.approx(UNIT_HAT_S04, rel=1e-13)


def test_diagonal_scales_like_h_power(disc):
    assert disc.A[0, 0] == pytest.approx(disc.h ** 0.2 * UNIT_HAT_S04, rel=1e-13)


@pytest.mark.parametrize("s", [0.1, 0.25, 0.4, 0.49])
def test_stiffness_row_brute_force(s):
    """Off-diagonal entries against direct quadrature of the bilinear form."""
    from scipy import integrate

    c = reference_stiffness(6, s)
    hat = lambda x, k=0: max(0.0, 1.0 - abs(x - k))
    # for disjoint supports only the cross term survives:
    # a(phi_0, phi_k) = -2 int int phi_0(x) phi_k(y) / |x-y|^(1+2s)
    k = 3
    val = integrate.dblquad(lambda y, x: hat(x) * hat(y, k) / abs(x - y) ** (1 + 2 * s),
                            -1, 1, k - 1, k + 1, epsabs=1e-13)[0]
    assert c[k] == pytest.approx(-2 * val, rel=1e-9)


def test_hat_autocorrelation_profile():
    assert hat_autocorrelation(0.0) == pytest.approx(2.0 / 3.0)
    assert hat_autocorrelation(2.0) == pytest.approx(0.0)
    assert hat_autocorrelation(1.0) == pytest.approx(1.0 / 6.0)


def test_row_sums_are_positive(disc):
    # the Dirichlet exterior makes constants cost energy: sum_j A_ij > 0
    assert np.all(disc.A.sum(axis=1) > 0)


def test_symmetric_positive_definite(disc):
    assert np.array_equal(disc.A, disc.A.T)
    assert np.linalg.eigvalsh(disc.A)[0] > 0


def test_quadrature_weights_cover_domain(disc):
    assert disc.quad_weights.sum() == pytest.approx(2.0, rel=1e-14)


def test_hat_square_integral_is_two_thirds_h(disc):
    hat = np.zeros(disc.n)
    hat[10] = 1.0
    w = np.ones_like(disc.f_q)
    assert weighted_power_integral(disc, w, hat, 2.0) == pytest.approx(2 * disc.h / 3, rel=1e-14)


def test_gauss_rule_is_exact_for_quintic_cellwise(disc):
    """Three-point Gauss integrates u^q exactly on every cell when q <= 5 is an integer."""
    u = np.linspace(0.2, 1.0, disc.n)
    w = np.ones_like(disc.f_q)
    U = disc.extended(u)
    exact = sum(disc.h * (U[i + 1] ** 6 - U[i] ** 6) / (6 * (U[i + 1] - U[i]))
                if U[i + 1] != U[i] else disc.h * U[i] ** 5 for i in range(disc.n + 1))
    assert weighted_power_integral(disc, w, u, 5.0) == pytest.approx(exact, rel=1e-13)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_parallelogram_law(seed):
    disc = build_discretization(degenerate_spec(24))
    gen = np.random.default_rng(seed)
    u, v = gen.standard_normal(disc.n), gen.standard_normal(disc.n)
    lhs = seminorm_sq(disc, u + v) + seminorm_sq(disc, u - v)
    rhs = 2 * seminorm_sq(disc, u) + 2 * seminorm_sq(disc, v)
    assert abs(lhs - rhs) <= 1e-12 * rhs
    assert bilinear(disc, u, v) == pytest.approx(bilinear(disc, v, u), rel=1e-12, abs=1e-12)


def test_mesh_refinement_is_cauchy():
    norms = []
    for n in (32, 64, 128, 256):
        d = build_discretization(degenerate_spec(n))
        norms.append(seminorm_sq(d, np.clip(1 - d.nodes ** 2, 0, None)))
    gaps = np.abs(np.diff(norms))
    assert np.all(gaps[1:] < gaps[:-1])


def test_energy_gradient_matches_finite_differences(disc):
    spec = degenerate_spec().with_lambda(100.0)
    gen = np.random.default_rng(1)
    u = np.abs(gen.standard_normal(disc.n)) + 0.1
    v = gen.standard_normal(disc.n)
    _, g = energy_and_gradient(disc, spec, u)
    eps = 1e-6
    fd = (energy(disc, spec, u + eps * v) - energy(disc, spec, u - eps * v)) / (2 * eps)
    assert g @ v == pytest.approx(fd, rel=1e-6)


@pytest.mark.parametrize("make_spec", [degenerate_spec, nondegenerate_spec])
def test_hessian_matches_gradient_differences(make_spec):
    spec = make_spec(24).with_lambda(50.0)
    d = build_discretization(spec)
    gen = np.random.default_rng(2)
    u = np.abs(gen.standard_normal(d.n)) + 0.5
    v = gen.standard_normal(d.n)
    eps = 1e-6
    fd = (energy_and_gradient(d, spec, u + eps * v)[1]
          - energy_and_gradient(d, spec, u - eps * v)[1]) / (2 * eps)
    H = energy_hessian(d, spec, u)
    assert np.allclose(H @ v, fd, rtol=1e-5, atol=1e-6 * np.abs(fd).max())


@pytest.mark.parametrize("make_spec", [degenerate_spec, nondegenerate_spec])
def test_energy_along_ray_is_fibering_map(make_spec):
    spec = make_spec().with_lambda(30.0)
    d = build_discretization(spec)
    u = np.clip(1 - d.nodes ** 2, 0, None)
    fd = FiberingData.from_direction(spec, make_direction(d, spec, u))
    for t in (0.3, 1.0, 2.7):
        E = energy(d, spec, t * u)
        assert E == pytest.approx(eval_fibering(fd, spec.lam, t).psi, rel=1e-12, abs=1e-12)


def test_residual_tested_against_u_is_fibering_derivative(disc):
    spec = degenerate_spec().with_lambda(30.0)
    u = np.clip(1 - disc.nodes ** 2, 0, None) * 3.0
    r, rnorm = weak_residual(disc, spec, u)
    fd = FiberingData.from_direction(spec, make_direction(disc, spec, u))
    assert u @ r == pytest.approx(eval_fibering(fd, spec.lam, 1.0).psi1, rel=1e-12)
    assert rnorm == pytest.approx(np.linalg.norm(r) / np.sqrt(disc.n))


def test_positive_part_ignores_negative_values(disc):
    spec = degenerate_spec()
    u = np.clip(1 - disc.nodes ** 2, 0, None)
    mixed = u.copy()
    mixed[:5] = -0.3
    a = make_direction(disc, spec, mixed, positive_part=True)
    b = make_direction(disc, spec, mixed, positive_part=False)
    assert a.F < b.F


def test_wrong_length_coefficients_rejected(disc):
    with pytest.raises(PreconditionError):
        seminorm_sq(disc, np.ones(disc.n + 1))


def test_g_positive_nowhere_is_an_assumption_error():
    spec = ProblemSpec(a=0, b=1, theta=2, gamma=3, p=5, s=0.4,
                       g_weight=WeightDescriptor.constant(-1.0))
    with pytest.raises(AssumptionError):
        build_discretization(spec)


def test_sample_weights_interpolate_between_nodes():
    n = 16
    base = degenerate_spec(n)
    nodes = build_discretization(base).nodes
    w = WeightDescriptor.from_samples(1 - 2 * nodes ** 2)
    spec = ProblemSpec(a=0, b=1, theta=2, gamma=3, p=5, s=0.4, domain=Domain(-1, 1, n),
                       g_weight=w)
    d = build_discretization(spec)
    assert np.allclose(d.g_nodes, 1 - 2 * nodes ** 2)


def test_weighted_cubic_integral_against_refined_quadrature(disc):
    """``int g |u|^3`` for ``u = 1`` at the interior nodes, ``g = 1 - 2x^2``."""
    from scipy import integrate

    xs = np.concatenate([[-1.0], disc.nodes, [1.0]])
    us = np.concatenate([[0.0], np.ones(disc.n), [0.0]])
    f = lambda x: (1 - 2 * x * x) * np.interp(x, xs, us) ** 3
    oracle = integrate.quad(f, -1, 1, points=xs[1:-1], limit=500, epsabs=1e-14)[0]
    value = weighted_power_integral(disc, disc.g_q, np.ones(disc.n), 3.0)
    assert value == pytest.approx(oracle, rel=1e-4)


def test_zero_vector_has_zero_data(disc):
    spec = degenerate_spec()
    dw = make_direction(disc, spec, np.zeros(disc.n))
    assert (dw.P2, dw.F, dw.G) == (0.0, 0.0, 0.0)
    assert energy(disc, spec.with_lambda(3.0), np.zeros(disc.n)) == 0.0


def test_smallest_grid():
    d = build_discretization(degenerate_spec(3))
    assert d.A.shape == (3, 3)
    assert np.array_equal(d.A, d.A.T)
    assert seminorm_sq(d, np.array([1.0, 0.0, 0.0])) > 0


def test_seminorm_is_quadratic(disc):
    u = np.random.default_rng(4).standard_normal(disc.n)
    assert seminorm_sq(disc, 3 * u) == pytest.approx(9 * seminorm_sq(disc, u), rel=1e-12)


@pytest.mark.parametrize("make_spec", [degenerate_spec, nondegenerate_spec])
def test_energy_at_scaled_random_direction(make_spec):
    spec = make_spec().with_lambda(12.0)
    d = build_discretization(spec)
    u = np.abs(np.random.default_rng(6).standard_normal(d.n))
    fd = FiberingData.from_direction(spec, make_direction(d, spec, u))
    assert energy(d, spec, 0.7 * u) == pytest.approx(eval_fibering(fd, spec.lam, 0.7).psi,
                                                     rel=1e-12)
