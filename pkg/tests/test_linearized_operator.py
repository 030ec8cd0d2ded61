import math

import numpy as np
import pytest

from selfsim_sqg.errors import GridMismatchError, ValidationError
from selfsim_sqg.linearized_operator import (PARTS, apply_K, apply_L, apply_T, assemble_L,
                                             drift_J, export_matrix, propagate, read_matrix,
                                             shift_coefficient)
from selfsim_sqg.radial_core import (RadialProfile, Vortex, build_grid, inner,
                                     profile_from_function)
from selfsim_sqg.transforms import fractional_laplacian, get_plan

from conftest import _vortex

G2 = build_grid(2, 128, 10.0)


class _Rigid:
    """Injected velocity V_phi = Omega R."""

    def __init__(self, omega):
        self.omega = omega

    def __call__(self, R):
        return self.omega * np.asarray(R, dtype=float)


def _band_limited(grid, seed):
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    R = grid.nodes
    f = sum(c[j] * (R / (1 + 0.3 * j)) ** grid.n * np.exp(-(R / (1 + 0.3 * j)) ** 2)
            for j in range(6))
    return RadialProfile(grid, f)


@pytest.fixture(scope="module")
def ring():
    return _vortex("gauss-ring", (1.0,), alpha=0.5)


def test_drift_J_term_by_term():
    g = build_grid(0, 128, 12.0)
    p = profile_from_function(g, lambda R: np.exp(-R ** 2 / 2))
    R = g.nodes
    alpha, beta = 1.0, 2.0
    exact = (2 - R ** 2 + alpha / beta - 1 + R ** 2 / beta) * p.values
    out = drift_J(alpha, beta, p)
    assert np.max(np.abs(out.values - exact)) < 1e-10
    assert np.max(np.abs(drift_J(alpha, beta, 2 * p).values - 2 * out.values)) < 1e-14


def test_apply_T_cases():
    g = build_grid(0, 128, 12.0)
    W = profile_from_function(g, lambda R: np.exp(-R ** 2 / 2))
    rigid = Vortex(W, velocity=_Rigid(0.7))
    out = apply_T(0.0, 2.0, rigid, 3, W)
    assert np.allclose(out.values, -3j * 0.7 * W.values, atol=1e-15)
    assert np.all(np.abs(out.values.real) == 0)
    still = Vortex(W, velocity=_Rigid(0.0))
    out = apply_T(1.0, 2.0, still, 3, W)
    assert np.max(np.abs(out.values + g.nodes ** 2 / 2 * W.values)) < 1e-10


def test_apply_T_needs_velocity():
    W = profile_from_function(G2, lambda R: R ** 2 * np.exp(-R ** 2))
    with pytest.raises(ValidationError, match="velocity"):
        apply_T(0.0, 2.0, Vortex(W), 2, W)


def test_apply_K_zero_and_n0(ring):
    zero = RadialProfile(G2, np.zeros(G2.N))
    assert np.all(apply_K(0.5, ring, 2, zero).values == 0)
    with pytest.raises(ValidationError):
        apply_K(0.5, ring, 0, profile_from_function(build_grid(0, 64, 10.0), np.exp))


@pytest.mark.parametrize("seed", range(5))
def test_assembly_matches_composed_application(ring, seed):
    W = _band_limited(G2, seed)
    M = assemble_L(0.5, 1.5, 0.05, ring, 2, G2)
    a = (M @ W).values
    b = apply_L(0.5, 1.5, 0.05, ring, 2, W).values
    assert np.max(np.abs(a - b)) / np.max(np.abs(b)) < 1e-10


def test_parts_selection(ring):
    M = assemble_L(0.5, 1.5, 0.05, ring, 2, G2, parts=set())
    assert not np.any(M.matrix)
    with pytest.raises(ValidationError, match="unknown operator parts"):
        assemble_L(0.5, 1.5, 0.05, ring, 2, G2, parts={"drift"})
    inviscid = assemble_L(0.5, 1.5, 0.0, ring, 2, G2)
    W = _band_limited(G2, 7)
    ref = apply_T(0.0, 1.5, ring, 2, W) + apply_K(0.5, ring, 2, W)
    assert np.max(np.abs((inviscid @ W).values - ref.values)) < 1e-12
    parts = [assemble_L(0.5, 1.5, 0.05, ring, 2, G2, parts={p}).matrix for p in sorted(PARTS)]
    full = assemble_L(0.5, 1.5, 0.05, ring, 2, G2).matrix
    assert np.max(np.abs(sum(parts) - full)) < 1e-14


def test_validation(ring):
    with pytest.raises(ValidationError):
        assemble_L(0.5, 3.6, 0.1, ring, 2, G2)
    with pytest.raises(ValidationError):
        assemble_L(1.5, 1.0, 0.1, ring, 2, G2)
    with pytest.raises(ValidationError):
        assemble_L(0.5, 1.0, -0.1, ring, 2, G2)
    with pytest.raises(ValidationError):
        assemble_L(0.5, 1.0, 0.1, ring, 3, G2)
    with pytest.raises(ValidationError):
        assemble_L(0.5, 1.0, 0.1, ring, 2, G2, shift_sign=0)
    M = assemble_L(0.5, 1.0, 0.1, ring, 2, G2)
    with pytest.raises(GridMismatchError):
        M @ RadialProfile(build_grid(2, 64, 10.0), np.zeros(64))


@pytest.mark.parametrize("sign", [1, -1])
@pytest.mark.parametrize("alpha,beta,nu", [(0.0, 2.0, 0.1), (1.0, 0.5, 0.3), (0.5, 3.2, 1.0)])
def test_contraction_bound_without_K(ring, sign, alpha, beta, nu):
    M = assemble_L(alpha, beta, nu, ring, 2, G2, parts={"transport", "diffusion", "shift"},
                   shift_sign=sign)
    lam = np.linalg.eigvals(M.matrix)
    assert M.contraction_bound() == pytest.approx(
        -sign * nu * (alpha / beta - 1) - nu / beta)
    assert lam.real.max() <= M.contraction_bound() + 1e-8


def test_shift_sign_is_a_real_translation(ring):
    a = assemble_L(0.5, 1.5, 0.05, ring, 2, G2)
    b = assemble_L(0.5, 1.5, 0.05, ring, 2, G2, shift_sign=-1)
    d = np.asarray(a.matrix) - np.asarray(b.matrix)
    c = shift_coefficient(0.5, 1.5, 0.05)
    assert np.max(np.abs(d - 2 * c * np.eye(G2.N))) < 1e-15
    s = a.shifted(0.25)
    assert np.max(np.abs(s.matrix - a.matrix - 0.25 * np.eye(G2.N))) < 1e-15


def test_diffusion_is_nonpositive():
    plan = get_plan(G2)
    for seed in range(5):
        W = _band_limited(G2, seed)
        assert inner(W, -0.3 * fractional_laplacian(plan, 1.3, W)).real <= 0


def test_K_block_singular_values_decay(ring):
    K = assemble_L(0.5, 1.5, 0.0, ring, 2, build_grid(2, 256, 10.0), parts={"K"})
    sv = np.linalg.svd(np.asarray(K.matrix), compute_uv=False)
    assert sv[128] / sv[0] < 1e-8


def test_transport_semigroup_norm(ring):
    M = assemble_L(0.5, 1.0, 0.4, ring, 2, G2, parts={"transport"})
    W = _band_limited(G2, 3)
    for tau in (0.5, 2.0):
        out = propagate(M, W, tau)
        assert out.norm() / W.norm() == pytest.approx(math.exp(-0.4 * tau), rel=1e-10)


def test_matrix_export_round_trip(ring, tmp_path):
    M = assemble_L(0.5, 1.5, 0.05, ring, 2, G2)
    export_matrix(M, tmp_path / "L.bin")
    meta, A = read_matrix(tmp_path / "L.bin")
    assert meta == dict(n=2, N=128, alpha=0.5, beta=1.5, nu=0.05, R_max=10.0)
    assert np.array_equal(A, M.matrix)
    (tmp_path / "bad.bin").write_bytes(b"nope")
    with pytest.raises(ValidationError):
        read_matrix(tmp_path / "bad.bin")
