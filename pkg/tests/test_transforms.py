import warnings

import numpy as np
import pytest
from scipy.special import gamma

from selfsim_sqg.errors import AccuracyWarning, ResolutionError, ValidationError
from selfsim_sqg.radial_core import build_grid, norm, profile_from_function
from selfsim_sqg.transforms import (fractional_laplacian, get_plan, hankel,
                                    multiplier_quadrature, multiplier_quadrature_matrix,
                                    riesz, scale_profile)


@pytest.fixture(scope="module")
def gauss2():
    g = build_grid(2, 256, 10.0)
    return profile_from_function(g, lambda R: R ** 2 * np.exp(-R ** 2))


def test_hankel_maps_grid_to_dual_and_back(gauss2):
    plan = get_plan(gauss2.grid)
    F = hankel(plan, gauss2)
    assert F.grid == plan.dual
    # H_2[R^2 e^{-R^2}](rho) = rho^2/8 e^{-rho^2/4}
    rho = plan.rho
    assert np.max(np.abs(F.values - rho ** 2 / 8 * np.exp(-rho ** 2 / 4))) < 1e-12
    assert np.max(np.abs(hankel(plan, F).values - gauss2.values)) < 1e-12


def test_fractional_laplacian_composes(gauss2):
    plan = get_plan(gauss2.grid)
    a = fractional_laplacian(plan, 0.6, fractional_laplacian(plan, 0.8, gauss2))
    b = fractional_laplacian(plan, 1.4, gauss2)
    assert norm(a - b) / norm(b) < 1e-12


def test_riesz_inverts_laplacian_power(gauss2):
    plan = get_plan(gauss2.grid)
    back = riesz(plan, -1.5, fractional_laplacian(plan, 1.5, gauss2))
    assert norm(back - gauss2) / norm(gauss2) < 1e-12


def test_beta_range_checked(gauss2):
    plan = get_plan(gauss2.grid)
    for beta in (0.0, 4.0, -1.0):
        with pytest.raises(ValidationError):
            fractional_laplacian(plan, beta, gauss2)
    with pytest.raises(ValidationError):
        riesz(plan, 0.5, gauss2)


def test_order0_riesz_of_order_two_needs_zero_mean():
    g = build_grid(0, 128, 10.0)
    p = profile_from_function(g, lambda R: np.exp(-R ** 2))
    with pytest.raises(ValidationError, match="zero-mean"):
        riesz(get_plan(g), -2.0, p)
    q = profile_from_function(g, lambda R: (1 - R ** 2) * np.exp(-R ** 2))
    riesz(get_plan(g), -2.0, q)


def test_quadrature_route_matches_closed_form():
    # Lambda^{-1} of e^{-R^2} on order 0: (sqrt(pi)/2) e^{-R^2/2} I_0(R^2/2)
    from scipy.special import ive
    g = build_grid(0, 256, 10.0)
    p = profile_from_function(g, lambda R: np.exp(-R ** 2))
    R = np.linspace(0.1, 9.0, 25)
    got = multiplier_quadrature(p, -1.0, at=R)
    exact = np.sqrt(np.pi) / 2 * ive(0, R ** 2 / 2)
    assert np.max(np.abs(got - exact)) < 1e-9


def test_quadrature_matrix_agrees_with_function(gauss2):
    A = multiplier_quadrature_matrix(gauss2.grid, -2.0)
    v = multiplier_quadrature(gauss2, -2.0)
    assert np.max(np.abs(A @ gauss2.values - v)) < 1e-12


def test_quadrature_second_derivative(gauss2):
    # psi'' from the quadrature route against differentiating psi' numerically
    R = np.linspace(0.5, 4.0, 15)
    d1 = lambda x: multiplier_quadrature(gauss2, -1.0, at=x, derivative=1)
    d2 = multiplier_quadrature(gauss2, -1.0, at=R, derivative=2)
    h = 1e-4
    fd = (d1(R + h) - d1(R - h)) / (2 * h)
    assert np.max(np.abs(d2 - fd)) < 1e-7


def test_scale_profile_covariant_is_exact():
    g = build_grid(0, 128, 10.0)
    h = profile_from_function(g, lambda R: np.exp(-R ** 2))
    s = scale_profile(h, 2.0)
    assert s.grid.R_max == 5.0
    assert np.array_equal(s.values, h.values)
    assert scale_profile(h, 1.0) is h


def test_scale_profile_explicit_grid():
    g = build_grid(0, 256, 10.0)
    h = profile_from_function(g, lambda R: np.exp(-R ** 2))
    s = scale_profile(h, 0.5, grid=g, strict=True)
    assert np.max(np.abs(s.values - np.exp(-(0.5 * g.nodes) ** 2))) < 1e-10
    with pytest.raises(ResolutionError):
        scale_profile(h, 0.2, grid=build_grid(0, 16, 60.0), strict=True)
    with pytest.raises(ValidationError):
        scale_profile(h, -1.0)


def test_tail_amplification_warns():
    g = build_grid(0, 64, 10.0)
    p = profile_from_function(g, lambda R: np.exp(-(R / 0.3) ** 2))
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        fractional_laplacian(get_plan(g), 3.0, p)
    assert any(issubclass(w.category, AccuracyWarning) for w in rec)


def test_riesz_quadrature_matches_plan_inside(gauss2):
    plan = get_plan(gauss2.grid)
    a = riesz(plan, -0.5, gauss2, method="plan")
    b = riesz(plan, -0.5, gauss2, method="quadrature")
    inner_part = gauss2.grid.nodes < 4.0
    assert np.max(np.abs(a.values - b.values)[inner_part]) < 1e-4
    with pytest.raises(ValidationError):
        riesz(plan, -0.5, gauss2, method="bogus")


def test_gaussian_power_spectrum_moment():
    # ||Lambda^s e^{-R^2}||^2 = int rho^{2s} e^{-rho^2/2}/4 rho drho.  The plan's
    # Parseval sum agrees with the disk norm to round-off; both approximate the
    # integral only algebraically because rho^(2s) is not smooth at the origin.
    g = build_grid(0, 256, 10.0)
    plan = get_plan(g)
    p = profile_from_function(g, lambda R: np.exp(-R ** 2))
    s = 0.7
    F = plan.forward(p.values)
    freq = np.sum(plan.rho_weights * plan.rho ** (2 * s) * np.abs(F) ** 2)
    disk = norm(fractional_laplacian(plan, s, p)) ** 2
    assert freq == pytest.approx(disk, rel=1e-12)
    assert disk == pytest.approx(0.25 * 2 ** s * gamma(s + 1), rel=1e-3)
