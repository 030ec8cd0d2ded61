import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from selfsim_sqg.errors import GridMismatchError, ResolutionError, ValidationError
from selfsim_sqg.radial_core import (RadialProfile, apply_euler, build_grid, evaluate,
                                     integrate, inner, make_vortex, norm,
                                     profile_from_function, radial_derivative,
                                     read_profile_csv, resample, write_profile_csv)


def test_grid_is_cached_and_validated():
    assert build_grid(2, 64, 10.0) is build_grid(2, 64, 10)
    for bad in [(-1, 64, 10.0), (0, 4, 10.0), (0, 64, 0.0), (0, 64, float("inf")), (1.5, 64, 1)]:
        with pytest.raises(ValidationError):
            build_grid(*bad)


def test_nodes_increase_inside_interval():
    g = build_grid(3, 128, 8.0)
    assert np.all(np.diff(g.nodes) > 0)
    assert 0 < g.nodes[0] and g.nodes[-1] < g.R_max
    assert g.doubled().N == 256 and g.with_order(1).n == 1


def test_weights_integrate_gaussian():
    g = build_grid(0, 128, 10.0)
    p = profile_from_function(g, lambda R: np.exp(-R ** 2))
    # int_0^inf e^{-R^2} R dR = 1/2
    assert integrate(p) == pytest.approx(0.5, abs=1e-13)
    assert norm(p) ** 2 == pytest.approx(0.25, abs=1e-13)
    assert inner(p, p).real == pytest.approx(norm(p) ** 2, rel=1e-14)


def test_profile_arithmetic_checks_grid():
    a = profile_from_function(build_grid(1, 32, 5.0), lambda R: R * np.exp(-R ** 2))
    b = profile_from_function(build_grid(1, 32, 6.0), lambda R: R * np.exp(-R ** 2))
    assert np.allclose((2 * a - a).values, a.values)
    with pytest.raises(GridMismatchError):
        a + b
    with pytest.raises(ValidationError):
        RadialProfile(a.grid, np.zeros(5))


def test_profile_values_are_readonly():
    p = profile_from_function(build_grid(0, 32, 5.0), np.exp)
    with pytest.raises(ValueError):
        p.values[0] = 1.0


def test_evaluate_interpolates_smooth_profile():
    g = build_grid(2, 128, 10.0)
    f = lambda R: R ** 2 * np.exp(-R ** 2)
    p = profile_from_function(g, f)
    x = np.linspace(0.05, 6.0, 37)
    assert np.max(np.abs(evaluate(p, x) - f(x))) < 1e-12
    df = lambda R: (2 * R - 2 * R ** 3) * np.exp(-R ** 2)
    assert np.max(np.abs(evaluate(p, x, derivative=1) - df(x))) < 1e-10


def test_radial_derivative_and_euler():
    g = build_grid(1, 128, 10.0)
    p = profile_from_function(g, lambda R: R * np.exp(-R ** 2))
    R = g.nodes
    d = radial_derivative(p)
    assert np.max(np.abs(d.values - (1 - 2 * R ** 2) * np.exp(-R ** 2))) < 1e-10
    e = apply_euler(p)
    assert np.max(np.abs(e.values - R * d.values)) < 1e-10


def test_euler_is_skew_minus_identity():
    g = build_grid(2, 64, 10.0)
    rng = np.random.default_rng(0)
    v = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    p = RadialProfile(g, v)
    # Re <E v, v> = -||v||^2 exactly
    assert inner(apply_euler(p), p).real == pytest.approx(-norm(p) ** 2, rel=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.6, 2.0))
def test_resample_round_trip(width):
    p = profile_from_function(build_grid(0, 128, 12.0), lambda R: np.exp(-(R / width) ** 2))
    q = resample(p, build_grid(0, 192, 14.0), strict=True)
    back = resample(q, p.grid, strict=True)
    assert np.max(np.abs(back.values - p.values)) < 1e-9


def test_resample_strict_refuses_underresolved_grid():
    p = profile_from_function(build_grid(0, 256, 10.0), lambda R: np.exp(-(R / 0.05) ** 2))
    with pytest.raises(ResolutionError):
        resample(p, build_grid(0, 16, 10.0), strict=True)


def test_make_vortex_validation():
    g = build_grid(0, 128, 10.0)
    v = make_vortex(g, lambda R: (1 - R ** 2) * np.exp(-R ** 2))
    assert v.profile.is_real()
    with pytest.raises(ValidationError, match="zero-mean"):
        make_vortex(g, lambda R: np.exp(-R ** 2))
    with pytest.raises(ValidationError):
        make_vortex(build_grid(1, 128, 10.0), lambda R: R * np.exp(-R ** 2))
    with pytest.raises(ValidationError):
        make_vortex(g, np.zeros(128))


def test_csv_round_trip_is_bit_exact(tmp_path):
    g = build_grid(2, 48, 7.5)
    rng = np.random.default_rng(3)
    p = RadialProfile(g, rng.standard_normal(48) + 1j * rng.standard_normal(48))
    write_profile_csv(p, tmp_path / "p.csv", "config_hash=abc")
    q = read_profile_csv(tmp_path / "p.csv")
    assert q.grid == g
    assert np.array_equal(q.values, p.values)
