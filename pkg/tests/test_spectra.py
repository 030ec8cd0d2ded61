import csv
import json

import numpy as np
import pytest

from selfsim_sqg.errors import ValidationError
from selfsim_sqg.linearized_operator import OperatorMatrix, assemble_L
from selfsim_sqg.radial_core import build_grid, integrate, norm
from selfsim_sqg.spectra import (FAMILIES, continue_in_nu, full_spectrum, persistence,
                                 spectrum_report, unstable_modes, vortex_search,
                                 write_path_csv, write_spectrum_json)
from selfsim_sqg.transforms import get_plan

from conftest import _vortex

G = build_grid(2, 64, 10.0)


def _op(grid, A, builder=None):
    return OperatorMatrix(grid.n, 0.0, 1.0, 1.0, grid, A, frozenset({"diffusion"}), 1, None,
                          builder)


def _diffusion(grid):
    return assemble_L(0.0, 1.0, 1.0, None, 2, grid, parts={"diffusion"})


def _bumped(grid, k=3, target=0.3):
    """-Lambda with its k-th Hankel mode moved to ``target`` (rank-one change)."""
    plan = get_plan(grid)
    phi = plan.Hinv[:, k] / np.sqrt(np.sum(grid.gram * np.abs(plan.Hinv[:, k]) ** 2))
    P = np.outer(phi, phi.conj() * grid.gram)
    A = np.asarray(_diffusion(grid).matrix) + (target + plan.rho[k]) * P
    return _op(grid, A, lambda g2: _bumped(g2, k, target))


def test_diagonal_spectrum_is_exact():
    d = np.linspace(-3, 1, G.N)[::-1] + 0.1j * np.arange(G.N)
    pairs = full_spectrum(_op(G, np.diag(d)))
    assert [p.lam for p in pairs] == sorted(d, key=lambda z: (-z.real, -z.imag))
    for p in pairs:
        k = int(np.argmax(np.abs(p.W.values)))
        assert np.count_nonzero(p.W.values) == 1
        assert p.W.values[k].real > 0 and p.W.values[k].imag == 0
        assert norm(p.W) == pytest.approx(1.0)


def test_diffusion_spectrum_matches_hankel_diagonal():
    lam = np.array([p.lam for p in full_spectrum(_diffusion(G))])
    assert np.max(np.abs(lam.imag)) < 1e-8
    assert np.max(np.abs(np.sort(lam.real) - np.sort(-get_plan(G).rho))) < 1e-8


def test_shift_moves_spectrum_only():
    M = _bumped(G)
    a = full_spectrum(M)
    b = full_spectrum(M.shifted(0.7))
    for p, q in zip(a, b):
        assert q.lam - p.lam == pytest.approx(0.7, abs=1e-10)
        assert np.max(np.abs(q.W.values - p.W.values)) < 1e-10


def test_unstable_modes_cases(caplog):
    assert unstable_modes(_diffusion(G), 1e-6) == []
    M = _bumped(G)
    modes = unstable_modes(M, 1e-3)
    assert len(modes) == 1
    assert modes[0].lam == pytest.approx(0.3, abs=1e-12)
    assert modes[0].persistent and modes[0].delta < 1e-10
    assert unstable_modes(M, 0.31) == []
    with pytest.raises(ValidationError):
        unstable_modes(M, 0.0)


def test_grid_dependent_mode_is_filtered(caplog):
    # the planted value depends on the grid, so it fails the doubling probe
    def moving(grid):
        return _bumped(grid, 3, 0.3 + grid.N * 1e-3) if grid.N > 64 else _bumped(grid)
    M = _op(G, np.asarray(_bumped(G).matrix), moving)
    with caplog.at_level("INFO", logger="selfsim_sqg.spectra"):
        assert unstable_modes(M, 1e-3) == []
    assert "spurious" in caplog.text
    assert persistence(M, [0.3])[0] == pytest.approx(0.128, abs=1e-9)


def test_conjugate_symmetry(ring_vortex):
    g = build_grid(2, 128, 10.0)
    v = _vortex("gauss-ring", (1.0,), alpha=0.5)
    a = np.sort_complex(np.linalg.eigvals(assemble_L(0.5, 1.5, 0.01, v, 2, g).matrix))
    b = np.sort_complex(np.linalg.eigvals(assemble_L(0.5, 1.5, 0.01, v, -2, g).matrix).conj())
    assert np.max(np.abs(a - b)) < 1e-10


def test_families_are_zero_mean():
    g = build_grid(0, 256, 10.0)
    for fam in FAMILIES.values():
        for seed in fam.seeds:
            v = fam.make(seed, g)
            assert abs(integrate(v.profile)) < 1e-12 * norm(v.profile)
    for b in (0.5, 1.3, 4.0):
        # int (1 - b R^2) e^{-b R^2} R dR = 1/(2b) - b/(2b^2) = 0
        FAMILIES["gauss-ring"].make((b,), g)
    with pytest.raises(ValidationError):
        FAMILIES["gauss-ring"].make((1.0, 2.0), g)


def test_continuation_trivial_and_contraction(ring_vortex):
    g = build_grid(2, 128, 10.0)
    v = _vortex("gauss-ring", (1.0,))
    parts = {"transport", "diffusion", "shift"}
    M = assemble_L(0.0, 2.0, 0.05, v, 2, g, parts=parts)
    seed = full_spectrum(M)[0]
    path = continue_in_nu(v, 2, 0.0, 2.0, 0.05, 0.05, seed, parts=parts)
    assert len(path.entries) == 1 and path.lams[0] == seed.lam and path.reason == "completed"
    path = continue_in_nu(v, 2, 0.0, 2.0, 0.05, 0.2, seed, parts=parts, dnu0=0.01)
    assert path.reason == "completed" and path.nus[-1] == pytest.approx(0.2)
    assert np.all(np.diff(path.lams.real) < 0)
    assert all(p.residual < 1e-8 for _, p in path.entries)
    with pytest.raises(ValidationError):
        continue_in_nu(v, 2, 0.0, 2.0, 0.2, 0.1, seed, parts=parts)


def test_search_budget_one_and_determinism():
    g = build_grid(2, 128, 10.0)
    a = vortex_search("gauss-ring", 2, 1.0, 1, g)
    assert [k for k, _ in a.history] == [(1.0,)]
    assert a.status == "no instability found" and a.eigenpair is not None
    b = vortex_search("gauss-ring", 2, 1.0, 1, g)
    assert a.objective == b.objective
    with pytest.raises(ValidationError):
        vortex_search("gauss-ring", 1, 0.0, 3, g)
    with pytest.raises(ValidationError):
        vortex_search("gauss-ring", 2, 0.0, 0, g)


def test_search_threads_do_not_change_result():
    g = build_grid(2, 96, 10.0)
    a = vortex_search("gauss-ring", 2, 0.0, 6, g, verify_top=0)
    b = vortex_search("gauss-ring", 2, 0.0, 6, g, threads=3, verify_top=0)
    assert a.params == b.params and a.objective == b.objective and a.history == b.history


def test_reports(tmp_path):
    M = _bumped(G)
    pairs = full_spectrum(M)[:4]
    rep = spectrum_report(M, pairs, persistence(M, [p.lam for p in pairs]))
    write_spectrum_json(rep, tmp_path / "s.json")
    back = json.loads((tmp_path / "s.json").read_text())
    assert back["eigenvalues"][0]["re"] == pytest.approx(0.3)
    assert back["eigenvalues"][0]["persistent"] is True
    assert {"n", "alpha", "beta", "nu", "N", "R_max"} <= set(back)

    g = build_grid(2, 64, 10.0)
    v = _vortex("gauss-ring", (1.0,))
    parts = {"transport", "diffusion", "shift"}
    seed = full_spectrum(assemble_L(0.0, 2.0, 0.05, v, 2, g, parts=parts))[0]
    path = continue_in_nu(v, 2, 0.0, 2.0, 0.05, 0.07, seed, parts=parts, dnu0=0.01)
    write_path_csv(path, tmp_path / "p.csv", "config_hash=x")
    rows = [r for r in csv.reader(open(tmp_path / "p.csv")) if not r[0].startswith("#")]
    assert rows[0] == ["nu", "re_lambda", "im_lambda", "residual"]
    assert len(rows) == len(path.entries) + 1
    assert [float(r[0]) for r in rows[1:]] == [float(x) for x in path.nus]
