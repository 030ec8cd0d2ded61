"""Shared fixtures: grids, vortices and constructed systems reused across modules.

Acceptance checks register a PASS/FAIL line through ``record``; the lines are
printed together in the terminal summary.
"""
from __future__ import annotations

import warnings

import pytest

from selfsim_sqg.biot_savart import attach_velocity
from selfsim_sqg.errors import AccuracyWarning
from selfsim_sqg.linearized_operator import assemble_L
from selfsim_sqg.radial_core import build_grid
from selfsim_sqg.spectra import FAMILIES, unstable_modes

N, R_MAX = 256, 10.0
BUMP = (1.0, -0.525, -0.5, 0.2, 0.0)

CRITERIA: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        terminalreporter.write_line(CRITERIA[k])


@pytest.fixture(scope="session")
def record():
    def _record(k: int, ok: bool, detail: str) -> bool:
        line = f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        CRITERIA[k] = line
        print(line)
        return ok
    return _record


@pytest.fixture(autouse=True)
def _quiet_accuracy():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AccuracyWarning)
        yield


def _vortex(family, params, alpha=0.0):
    return attach_velocity(FAMILIES[family].make(params, build_grid(0, N, R_MAX)), alpha)


@pytest.fixture(scope="session")
def ring_vortex():
    return _vortex("gauss-ring", (1.0,))


@pytest.fixture(scope="session")
def bump_vortex():
    return _vortex("spline-bump", BUMP)


def _system(beta, nu):
    from selfsim_sqg.nonuniqueness import golovkin_force
    v = _vortex("spline-bump", BUMP)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AccuracyWarning)
        M = assemble_L(0.0, beta, nu, v, 2, build_grid(2, N, R_MAX))
        modes = unstable_modes(M, 1e-3)
        return M, modes, golovkin_force(0.0, beta, nu, v, modes[0], 2)


@pytest.fixture(scope="session")
def bump_b2():
    """(operator, persistent modes, system) for alpha=0, beta=2, nu=1e-3."""
    return _system(2.0, 1e-3)


@pytest.fixture(scope="session")
def bump_b09():
    """Same vortex at beta=0.9, inside both energy-class ranges."""
    return _system(0.9, 1e-3)
