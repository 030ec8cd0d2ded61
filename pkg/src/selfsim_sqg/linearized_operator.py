"""The linearized self-similar operator on n-fold symmetric fields.

With J = Lambda^beta + (alpha/beta - 1) - (1/beta) X.grad, the linearization
of the self-similar equation around a radial vortex is

    L_nu Theta = -Vbar.grad Theta - V.grad Thetabar - nu J Theta
               = T_nu W + K W - nu Lambda^beta W - nu (alpha/beta - 1) W

on Theta = W(R) e^{in phi}, where

    T_nu W = (nu/beta) R W' - i n (Vbar_phi / R) W,
    K W    = -i n (psi_n / R) Thetabar'.

The constant term is implemented as the definition dictates.  The opposite
sign appears in one published decomposition of the same operator, so
``shift_sign=-1`` flips it for comparison.  It translates the spectrum by a
real constant and changes nothing else.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np
from scipy.linalg import expm

from .biot_savart import streamfunction_hankel
from .config import DEFAULT_TOL, Tolerances
from .errors import GridMismatchError, ValidationError
from .radial_core import (RadialGrid, RadialProfile, Vortex, apply_euler, euler_matrix,
                          norm)
from .transforms import BETA_RANGE, fractional_laplacian, get_plan, multiplier_quadrature_matrix

__all__ = ["PARTS", "OperatorMatrix", "drift_J", "apply_T", "apply_K", "apply_L",
           "assemble_L", "propagate", "export_matrix", "read_matrix", "shift_coefficient"]

PARTS = frozenset({"transport", "K", "diffusion", "shift"})


def _check_ab(alpha: float, beta: float) -> None:
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError(f"alpha={alpha} outside [0, 1]")
    lo, hi = BETA_RANGE
    if not lo < beta < min(hi, 3.0 + alpha):
        raise ValidationError(f"beta={beta} outside (0, 3 + alpha)")


def shift_coefficient(alpha: float, beta: float, nu: float, shift_sign: int = 1) -> float:
    """Coefficient c of the identity term c*I in L_nu."""
    return -shift_sign * nu * (alpha / beta - 1.0)


def drift_J(alpha: float, beta: float, p: RadialProfile, tol: Tolerances = DEFAULT_TOL) -> RadialProfile:
    """J p = Lambda^beta p + (alpha/beta - 1) p - (1/beta) R p'."""
    _check_ab(alpha, beta)
    lap = fractional_laplacian(get_plan(p.grid), beta, p, tol)
    return lap + (alpha / beta - 1.0) * p - (1.0 / beta) * apply_euler(p)


def _velocity_over_R(vortex: Vortex, grid: RadialGrid) -> np.ndarray:
    v = vortex.velocity
    if v is None:
        raise ValidationError("vortex has no velocity cache; call biot_savart.attach_velocity")
    return np.asarray(v(grid.nodes), dtype=float) / grid.nodes


def apply_T(nu: float, beta: float, vortex: Vortex, n: int, W: RadialProfile) -> RadialProfile:
    """(nu/beta) R W' - i n (Vbar_phi / R) W."""
    out = RadialProfile(W.grid, -1j * n * _velocity_over_R(vortex, W.grid) * W.values)
    if nu != 0.0:
        out = out + (nu / beta) * apply_euler(W)
    return out


def _dtheta_over_R(vortex: Vortex, grid: RadialGrid) -> np.ndarray:
    return vortex.values_at(grid.nodes, derivative=1) / grid.nodes


def apply_K(alpha: float, vortex: Vortex, n: int, W: RadialProfile) -> RadialProfile:
    """-i n (psi_n / R) Thetabar' with psi_n from the Hankel route."""
    if n == 0:
        raise ValidationError("K acts on harmonics n >= 1")
    psi = streamfunction_hankel(n, alpha, W)
    return RadialProfile(W.grid, -1j * n * _dtheta_over_R(vortex, W.grid) * psi.values)


def _parts(parts) -> frozenset:
    s = PARTS if parts is None else frozenset(parts)
    bad = s - PARTS
    if bad:
        raise ValidationError(f"unknown operator parts {sorted(bad)}; choose from {sorted(PARTS)}")
    return s


def apply_L(alpha: float, beta: float, nu: float, vortex: Vortex, n: int, W: RadialProfile,
            parts: Iterable[str] | None = None, shift_sign: int = 1) -> RadialProfile:
    """Matrix-free application of the selected parts of L_nu."""
    _check_ab(alpha, beta)
    sel = _parts(parts)
    out = RadialProfile(W.grid, np.zeros(W.grid.N))
    if "transport" in sel:
        out = out + apply_T(nu, beta, vortex, n, W)
    if "K" in sel:
        out = out + apply_K(alpha, vortex, n, W)
    if "diffusion" in sel and nu != 0.0:
        out = out - nu * fractional_laplacian(get_plan(W.grid), beta, W)
    if "shift" in sel:
        out = out + shift_coefficient(alpha, beta, nu, shift_sign) * W
    return out


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Dense matrix of (parts of) L_nu on harmonic n."""

    n: int
    alpha: float
    beta: float
    nu: float
    grid: RadialGrid
    matrix: np.ndarray = field(repr=False)
    parts: frozenset = PARTS
    shift_sign: int = 1
    vortex: Vortex | None = field(default=None, repr=False)
    builder: Callable[[RadialGrid], "OperatorMatrix"] | None = field(default=None, repr=False)

    def __matmul__(self, W: RadialProfile) -> RadialProfile:
        if W.grid != self.grid:
            raise GridMismatchError("operator and profile grids differ")
        return RadialProfile(self.grid, self.matrix @ W.values)

    def rebuild(self, grid: RadialGrid) -> "OperatorMatrix":
        """Same operator assembled on another grid (used for the doubling probe)."""
        if self.builder is None:
            raise ValidationError("operator has no rebuild recipe")
        return self.builder(grid)

    def contraction_bound(self) -> float:
        """Upper bound on Re spectrum of the K-free part: shift coefficient - nu/beta."""
        return shift_coefficient(self.alpha, self.beta, self.nu, self.shift_sign) - self.nu / self.beta

    def shifted(self, c: complex) -> "OperatorMatrix":
        return OperatorMatrix(self.n, self.alpha, self.beta, self.nu, self.grid,
                              self.matrix + c * np.eye(self.grid.N), self.parts,
                              self.shift_sign, self.vortex, None)


def assemble_L(alpha: float, beta: float, nu: float, vortex: Vortex | None, n: int,
               grid: RadialGrid, parts: Iterable[str] | None = None,
               shift_sign: int = 1) -> OperatorMatrix:
    """Assemble the selected parts of L_nu as a dense matrix on ``grid``."""
    _check_ab(alpha, beta)
    if nu < 0:
        raise ValidationError(f"nu must be nonnegative, got {nu}")
    if shift_sign not in (1, -1):
        raise ValidationError("shift_sign must be +1 or -1")
    if grid.n != abs(n):
        raise ValidationError(f"grid order {grid.n} does not match harmonic {n}")
    sel = _parts(parts)
    N = grid.N
    A = np.zeros((N, N), dtype=complex)
    if ("transport" in sel or "K" in sel) and vortex is None:
        raise ValidationError("transport and K parts need a vortex")
    if "transport" in sel:
        A += np.diag(-1j * n * _velocity_over_R(vortex, grid))
        if nu != 0.0:
            A += (nu / beta) * euler_matrix(grid)
    if "K" in sel:
        if n == 0:
            raise ValidationError("K acts on harmonics n >= 1")
        Psi = multiplier_quadrature_matrix(grid, alpha - 2.0)
        A += (-1j * n * _dtheta_over_R(vortex, grid))[:, None] * Psi
    if "diffusion" in sel and nu != 0.0:
        A -= nu * get_plan(grid).multiplier_matrix(beta)
    if "shift" in sel:
        A += shift_coefficient(alpha, beta, nu, shift_sign) * np.eye(N)

    def builder(g: RadialGrid) -> OperatorMatrix:
        return assemble_L(alpha, beta, nu, vortex, n, g, sel, shift_sign)

    A.setflags(write=False)
    return OperatorMatrix(n, float(alpha), float(beta), float(nu), grid, A, sel,
                          shift_sign, vortex, builder)


def propagate(M: OperatorMatrix, W: RadialProfile, tau: float) -> RadialProfile:
    """exp(tau M) W (exact exponential integrator for the linear flow)."""
    return RadialProfile(M.grid, expm(tau * M.matrix) @ W.values)


_MAGIC = b"LNUMAT01"


def export_matrix(M: OperatorMatrix, path) -> None:
    """Binary dump: magic, <i4 n, <i4 N, <f8 alpha beta nu R_max, then N*N
    complex128 entries row-major as little-endian (re, im) pairs."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<ii4d", M.n, M.grid.N, M.alpha, M.beta, M.nu, M.grid.R_max))
        fh.write(np.ascontiguousarray(M.matrix, dtype="<c16").tobytes())


def read_matrix(path) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ValidationError(f"{path}: not an operator dump")
        n, N, alpha, beta, nu, R_max = struct.unpack("<ii4d", fh.read(struct.calcsize("<ii4d")))
        data = np.frombuffer(fh.read(), dtype="<c16").reshape(N, N)
    return dict(n=n, N=N, alpha=alpha, beta=beta, nu=nu, R_max=R_max), data
