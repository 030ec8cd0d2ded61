"""Discrete Hankel transforms and radial Fourier multipliers.

On harmonic-n fields W(R) e^{in phi} every Fourier multiplier m(|xi|) acts
through the order-n Hankel transform

    H_n[f](rho) = int_0^inf f(R) J_n(rho R) R dR,   T = H_n m H_n.

Two realizations are provided.  The *plan* applies the multiplier on the
grid's Fourier-Bessel spectrum; it is an exact algebra (composition, inverse,
adjoint) and corresponds to the disk [0, R_max] with a Dirichlet edge.  The
*quadrature* route integrates the whole-plane formula over rho in
[0, rho_max] with Gauss-Jacobi weights and can be evaluated at any radius;
it is the accurate choice for negative orders whose output has algebraic
tails.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import jv, jvp, roots_jacobi

from .config import DEFAULT_TOL, Tolerances
from .errors import AccuracyWarning, GridMismatchError, ResolutionError, ValidationError
from .radial_core import (RadialGrid, RadialProfile, build_grid, evaluate, integrate,
                          norm)

__all__ = ["HankelPlan", "get_plan", "hankel", "fractional_laplacian", "riesz",
           "multiplier", "multiplier_quadrature", "multiplier_quadrature_matrix",
           "spectrum_at", "scale_profile", "BETA_RANGE"]

BETA_RANGE = (0.0, 4.0)


@dataclass(frozen=True, eq=False)
class HankelPlan:
    """Transform pair between a grid and its dual frequency grid.

    The dual grid has the same order and node count with ``R_max`` replaced
    by ``rho_max``; its nodes are the frequencies rho_m and its weights
    integrate ``F(rho) rho d rho``.
    """

    grid: RadialGrid
    dual: RadialGrid = field(repr=False)

    @property
    def H(self) -> np.ndarray:
        return self.grid.fb.H

    @property
    def Hinv(self) -> np.ndarray:
        return self.grid.fb.Hinv

    @property
    def rho(self) -> np.ndarray:
        return self.dual.nodes

    @property
    def rho_weights(self) -> np.ndarray:
        """Frequency-side Parseval weights."""
        return self.grid.fb.fgram

    def forward(self, values: np.ndarray) -> np.ndarray:
        return self.H @ values

    def inverse(self, values: np.ndarray) -> np.ndarray:
        return self.Hinv @ values

    def multiplier_matrix(self, exponent: float) -> np.ndarray:
        """Dense matrix of H_n rho^exponent H_n on grid samples."""
        return _multiplier_matrix(self.grid.n, self.grid.N, self.grid.R_max, float(exponent))


@lru_cache(maxsize=48)
def _plan_cached(n: int, N: int, R_max: float) -> HankelPlan:
    g = build_grid(n, N, R_max)
    return HankelPlan(g, build_grid(n, N, g.rho_max))


def get_plan(grid: RadialGrid) -> HankelPlan:
    return _plan_cached(*grid.key)


@lru_cache(maxsize=64)
def _multiplier_matrix(n: int, N: int, R_max: float, exponent: float) -> np.ndarray:
    fb = build_grid(n, N, R_max).fb
    rho = fb.zeros / R_max
    M = fb.Hinv @ (rho[:, None] ** exponent * fb.H)
    M.setflags(write=False)
    return M


def hankel(plan: HankelPlan, p: RadialProfile) -> RadialProfile:
    """Order-n Hankel transform; maps the grid to its dual and back."""
    if p.grid == plan.grid:
        return RadialProfile(plan.dual, plan.H @ p.values)
    if p.grid == plan.dual:
        return RadialProfile(plan.grid, plan.Hinv @ p.values)
    raise GridMismatchError(f"profile on {p.grid.describe()} does not belong to plan "
                            f"{plan.grid.describe()}")


def _check_grid(plan: HankelPlan, p: RadialProfile) -> None:
    if p.grid != plan.grid:
        raise GridMismatchError(f"profile on {p.grid.describe()}, plan on "
                                f"{plan.grid.describe()}")


def _amplified_tail(plan: HankelPlan, p: RadialProfile, exponent: float) -> float:
    F = plan.rho ** exponent * np.abs(plan.H @ p.values)
    e = plan.rho_weights * F ** 2
    total = e.sum()
    if total == 0:
        return 0.0
    return float(np.sqrt(e[(3 * plan.grid.N) // 4:].sum() / total))


def multiplier(plan: HankelPlan, exponent: float, p: RadialProfile) -> RadialProfile:
    """Apply H_n rho^exponent H_n with the plan (no range checks)."""
    _check_grid(plan, p)
    return RadialProfile(p.grid, plan.multiplier_matrix(exponent) @ p.values)


def fractional_laplacian(plan: HankelPlan, beta: float, p: RadialProfile,
                         tol: Tolerances = DEFAULT_TOL) -> RadialProfile:
    """Lambda^beta on a harmonic-n profile, beta in (0, 4)."""
    lo, hi = BETA_RANGE
    if not (lo < beta < hi):
        raise ValidationError(f"beta={beta} outside ({lo}, {hi})")
    _check_grid(plan, p)
    tail = _amplified_tail(plan, p, beta)
    if tail > tol.tail:
        warnings.warn(f"rho^{beta} amplifies an unresolved spectral tail ({tail:.2e})",
                      AccuracyWarning, stacklevel=2)
    return multiplier(plan, beta, p)


def _mean_condition(grid: RadialGrid, s: float) -> bool:
    """True when order and exponent require a zero-mean input."""
    return grid.n == 0 and s <= -2.0 + 1e-12


def _require_zero_mean(p: RadialProfile, tol: Tolerances) -> None:
    m = abs(integrate(p))
    if m >= tol.grid * max(norm(p), np.finfo(float).tiny):
        raise ValidationError(f"order-0 Riesz potential of this order needs a zero-mean "
                              f"profile (mean {m:.3e})")


def riesz(plan: HankelPlan, s: float, p: RadialProfile, method: str = "plan",
          tol: Tolerances = DEFAULT_TOL) -> RadialProfile:
    """Lambda^s for s < 0.

    ``method="plan"`` composes exactly with :func:`fractional_laplacian`;
    ``method="quadrature"`` evaluates the whole-plane integral and is the
    reference for pointwise values.
    """
    if not s < 0:
        raise ValidationError(f"Riesz order must be negative, got {s}")
    _check_grid(plan, p)
    if _mean_condition(p.grid, s):
        _require_zero_mean(p, tol)
    if method == "plan":
        return multiplier(plan, s, p)
    if method == "quadrature":
        return RadialProfile(p.grid, multiplier_quadrature(p, s))
    raise ValidationError(f"unknown Riesz method {method!r}")


@lru_cache(maxsize=64)
def _jacobi_rule(Q: int, e: float, rho_max: float) -> tuple[np.ndarray, np.ndarray]:
    x, w = roots_jacobi(Q, 0.0, e)
    rho = 0.5 * rho_max * (1.0 + x)
    w = w * (0.5 * rho_max) ** (e + 1.0)
    rho.setflags(write=False)
    w.setflags(write=False)
    return rho, w


def spectrum_at(p: RadialProfile, rho: np.ndarray) -> np.ndarray:
    """Continuous Hankel transform of the grid interpolant at frequencies ``rho``."""
    g = p.grid
    return jv(g.n, np.outer(rho, g.nodes)) @ (g.gram * p.values)


def _quadrature_setup(grid: RadialGrid, s: float, Q: int | None):
    Q = Q or 2 * grid.N + 64
    lift = 0 if s > -2.0 + 1e-12 else (1 if grid.n == 1 else 2)
    e = s + 1.0 + lift
    if e <= -1.0:
        raise ValidationError(f"multiplier rho^{s} is not integrable at the origin "
                              f"for order {grid.n}")
    rho, w = _jacobi_rule(Q, e, grid.rho_max)
    return rho, w / rho ** lift


def _synthesis(n: int, R: np.ndarray, rho: np.ndarray, derivative: int) -> np.ndarray:
    x = np.outer(R, rho)
    if derivative == 0:
        return jv(n, x)
    if derivative in (1, 2):
        return jvp(n, x, derivative) * rho[None, :] ** derivative
    raise ValidationError("derivative must be 0, 1 or 2")


def multiplier_quadrature(p: RadialProfile, s: float, at=None, derivative: int = 0,
                          Q: int | None = None) -> np.ndarray:
    """Whole-plane int_0^rho_max rho^s H_n[p](rho) J_n(rho R) rho d rho.

    The Gauss-Jacobi weight absorbs rho^(s+1).  For s <= -2 that weight is not
    integrable, and a factor rho^k is moved from the spectrum into the weight:
    H_n[p] vanishes like rho^n for n >= 1, and like rho^2 for a zero-mean
    order-0 input.  ``derivative=1`` or ``2`` returns the corresponding radial
    derivative of the same integral.
    """
    g = p.grid
    R = g.nodes if at is None else np.asarray(at, dtype=float)
    rho, w = _quadrature_setup(g, s, Q)
    F = spectrum_at(p, rho)
    return (_synthesis(g.n, R.ravel(), rho, derivative) @ (w * F)).reshape(R.shape)


def multiplier_quadrature_matrix(grid: RadialGrid, s: float, at=None, derivative: int = 0,
                                 Q: int | None = None) -> np.ndarray:
    """Matrix form of :func:`multiplier_quadrature` acting on grid samples."""
    R = grid.nodes if at is None else np.asarray(at, dtype=float).ravel()
    rho, w = _quadrature_setup(grid, s, Q)
    A = jv(grid.n, np.outer(rho, grid.nodes)) * grid.gram[None, :]
    return _synthesis(grid.n, R, rho, derivative) @ (w[:, None] * A)


def scale_profile(p: RadialProfile, lam: float, grid: RadialGrid | None = None,
                  strict: bool = False, tol: Tolerances = DEFAULT_TOL) -> RadialProfile:
    """Dilation R -> p(lam R).

    Without ``grid`` the result lives on the covariantly dilated grid
    (R_max / lam) and carries the same samples, which is exact.  With an
    explicit target grid the Fourier-Bessel interpolant is evaluated at
    lam * R; points beyond the source R_max are set to zero and the source
    must have decayed there.
    """
    if not (lam > 0 and np.isfinite(lam)):
        raise ValidationError(f"scale factor must be positive, got {lam}")
    src = p.grid
    if grid is None:
        if lam == 1.0:
            return p
        return RadialProfile(build_grid(src.n, src.N, src.R_max / lam), p.values)
    if grid.n != src.n:
        raise GridMismatchError("scale_profile keeps the harmonic order")
    x = lam * grid.nodes
    inside = x < src.R_max
    vals = np.zeros(grid.N, dtype=complex)
    vals[inside] = evaluate(p, x[inside])
    out = RadialProfile(grid, vals)
    # resolution: the target must reproduce the source on the overlap
    y = src.nodes / lam
    ok = y < grid.R_max
    back = evaluate(out, y[ok])
    scale = max(np.abs(p.values).max(), np.finfo(float).tiny)
    err = max(np.abs(back - p.values[ok]).max(initial=0.0),
              np.abs(p.values[~ok]).max(initial=0.0)) / scale
    if err > tol.resample:
        msg = f"dilated profile not resolved on {grid.describe()} (error {err:.2e})"
        if strict:
            raise ResolutionError(msg)
        warnings.warn(msg, AccuracyWarning, stacklevel=2)
    return out
