"""Radial grids, quadrature and profile arithmetic on [0, R_max].

A grid of order ``n`` places its nodes at scaled zeros of the Bessel function
J_n, ``R_k = j_{n,k} R_max / j_{n,N+1}``.  Profiles sampled there are
identified with their Fourier-Bessel interpolant

    f(R) = sum_m c_m J_n(rho_m R),   rho_m = j_{n,m} / R_max,

which makes differentiation, resampling and the Hankel transform exact
operations on the band-limited class.  The transform matrices live here (not
in :mod:`transforms`) because the quadrature weights are built from them.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Mapping

import numpy as np
from scipy.special import jn_zeros, jv, jvp

from .config import DEFAULT_TOL, Tolerances
from .errors import (AccuracyWarning, GridMismatchError, ResolutionError,
                     ValidationError)

__all__ = [
    "RadialGrid", "RadialProfile", "Vortex", "build_grid", "profile_from_function",
    "integrate", "norm", "inner", "fb_coefficients", "evaluate", "radial_derivative",
    "euler_matrix", "apply_euler", "resample", "tail_indicators", "make_vortex",
    "write_profile_csv", "read_profile_csv", "format_float",
]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class _FourierBessel:
    """Precomputed transform data for one (n, N, R_max)."""

    zeros: np.ndarray      # j_{n,1..N}
    S: float               # j_{n,N+1}
    Jp: np.ndarray         # |J_{n+1}(j_k)|
    H: np.ndarray          # samples -> Hankel transform samples at rho_m
    Hinv: np.ndarray       # inverse of H (exact involution up to scalings)
    gram: np.ndarray       # spatial weights for inner products
    fgram: np.ndarray      # frequency weights (also the FB coefficient scaling)
    weights: np.ndarray    # interpolatory weights for int f R dR


def _orthogonal_kernel(n: int, zeros: np.ndarray, S: float, Jp: np.ndarray) -> np.ndarray:
    # The quasi-discrete Hankel kernel is only approximately involutory near
    # the grid edge; replacing it by the nearest symmetric involution makes the
    # round trip and Parseval identities exact to round-off.
    T = 2.0 * jv(n, np.outer(zeros, zeros) / S) / (S * np.outer(Jp, Jp))
    ev, V = np.linalg.eigh(T)
    return (V * np.sign(ev)) @ V.T


def _radial_moments(n: int, rho: np.ndarray, R_max: float) -> np.ndarray:
    """b_m = int_0^R_max J_n(rho_m R) R dR by composite Gauss-Legendre."""
    if n == 0:
        return R_max * jv(1, rho * R_max) / rho
    panels = len(rho) // 4 + 1
    x, w = np.polynomial.legendre.leggauss(64)
    edges = np.linspace(0.0, R_max, panels + 1)
    h = 0.5 * np.diff(edges)
    R = (edges[:-1, None] + h[:, None] * (x[None, :] + 1.0)).ravel()
    wR = (h[:, None] * w[None, :]).ravel() * R
    return jv(n, np.outer(rho, R)) @ wR


@lru_cache(maxsize=48)
def _fourier_bessel(n: int, N: int, R_max: float) -> _FourierBessel:
    j_all = jn_zeros(n, N + 1)
    S = float(j_all[-1])
    zeros = j_all[:-1]
    Jp = np.abs(jv(n + 1, zeros))
    U = _orthogonal_kernel(n, zeros, S, Jp)
    rho_max = S / R_max
    a = R_max / Jp
    b = rho_max / Jp
    H = (U * a[None, :]) / b[:, None]
    Hinv = (U * b[None, :]) / a[:, None]
    gram = 2.0 / (rho_max ** 2 * Jp ** 2)
    fgram = 2.0 / (R_max ** 2 * Jp ** 2)
    rho = zeros / R_max
    weights = (_radial_moments(n, rho, R_max) * fgram) @ H
    return _FourierBessel(*(_readonly(v) if isinstance(v, np.ndarray) else v
                            for v in (zeros, S, Jp, H, Hinv, gram, fgram, weights)))


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Fourier-Bessel collocation grid of harmonic order ``n``.

    ``weights`` integrate ``f(R) R dR``; ``gram`` are the weights of the
    discrete inner product under which the Hankel transform is unitary.
    """

    n: int
    N: int
    R_max: float
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    gram: np.ndarray = field(repr=False)

    @property
    def key(self) -> tuple:
        return (self.n, self.N, self.R_max)

    def __eq__(self, other) -> bool:
        return isinstance(other, RadialGrid) and self.key == other.key

    def __hash__(self) -> int:
        return hash(self.key)

    @property
    def fb(self) -> _FourierBessel:
        return _fourier_bessel(self.n, self.N, self.R_max)

    @property
    def rho(self) -> np.ndarray:
        """Frequency nodes rho_m = j_{n,m} / R_max."""
        return self.fb.zeros / self.R_max

    @property
    def rho_max(self) -> float:
        return self.fb.S / self.R_max

    def with_order(self, n: int) -> "RadialGrid":
        return build_grid(n, self.N, self.R_max)

    def doubled(self) -> "RadialGrid":
        """Grid with twice the nodes on the same interval (the refinement probe)."""
        return build_grid(self.n, 2 * self.N, self.R_max)

    def describe(self) -> str:
        return f"n={self.n} N={self.N} Rmax={format_float(self.R_max)}"


@lru_cache(maxsize=48)
def _grid_cached(n: int, N: int, R_max: float) -> RadialGrid:
    fb = _fourier_bessel(n, N, R_max)
    nodes = _readonly(fb.zeros * (R_max / fb.S))
    return RadialGrid(n, N, R_max, nodes, fb.weights, fb.gram)


def build_grid(n: int, N: int, R_max: float) -> RadialGrid:
    """Return the order-``n`` grid with ``N`` nodes on (0, R_max)."""
    if isinstance(n, bool) or int(n) != n or n < 0:
        raise ValidationError(f"grid order must be a nonnegative integer, got {n!r}")
    if isinstance(N, bool) or int(N) != N or N < 8:
        raise ValidationError(f"node count must be an integer >= 8, got {N!r}")
    R_max = float(R_max)
    if not math.isfinite(R_max) or R_max <= 0:
        raise ValidationError(f"R_max must be positive and finite, got {R_max!r}")
    return _grid_cached(int(n), int(N), R_max)


@dataclass(frozen=True, eq=False)
class RadialProfile:
    """Complex samples of a radial function on a :class:`RadialGrid`."""

    grid: RadialGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != (self.grid.N,):
            raise ValidationError(
                f"profile has shape {v.shape}, grid expects ({self.grid.N},)")
        object.__setattr__(self, "values", _readonly(v.copy()))

    # arithmetic -----------------------------------------------------------
    def _check(self, other: "RadialProfile") -> None:
        if other.grid != self.grid:
            raise GridMismatchError(
                f"grid mismatch: {self.grid.describe()} vs {other.grid.describe()}")

    def __add__(self, other):
        if isinstance(other, RadialProfile):
            self._check(other)
            return RadialProfile(self.grid, self.values + other.values)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, RadialProfile):
            self._check(other)
            return RadialProfile(self.grid, self.values - other.values)
        return NotImplemented

    def __neg__(self):
        return RadialProfile(self.grid, -self.values)

    def __mul__(self, other):
        if isinstance(other, RadialProfile):
            self._check(other)
            return RadialProfile(self.grid, self.values * other.values)
        if np.isscalar(other):
            return RadialProfile(self.grid, self.values * other)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if np.isscalar(other):
            return RadialProfile(self.grid, self.values / other)
        return NotImplemented

    def conj(self) -> "RadialProfile":
        return RadialProfile(self.grid, self.values.conj())

    # inspection -----------------------------------------------------------
    @property
    def R(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def real(self) -> np.ndarray:
        return self.values.real

    def is_real(self, tol: float = DEFAULT_TOL.real) -> bool:
        scale = max(np.abs(self.values).max(), np.finfo(float).tiny)
        return bool(np.abs(self.values.imag).max() <= tol * scale)

    def norm(self) -> float:
        return norm(self)


def profile_from_function(grid: RadialGrid, f: Callable[[np.ndarray], np.ndarray]) -> RadialProfile:
    return RadialProfile(grid, f(grid.nodes))


def integrate(p: RadialProfile) -> complex:
    """Quadrature of int_0^inf p(R) R dR with the grid's interpolatory weights."""
    return complex(p.grid.weights @ p.values)


def inner(p: RadialProfile, q: RadialProfile) -> complex:
    """Discrete L^2(R dR) inner product, conjugate-linear in ``p``."""
    p._check(q)
    return complex(np.sum(p.grid.gram * p.values.conj() * q.values))


def norm(p: RadialProfile) -> float:
    return float(np.sqrt(np.sum(p.grid.gram * np.abs(p.values) ** 2)))


def fb_coefficients(p: RadialProfile) -> np.ndarray:
    """Coefficients c_m of the Fourier-Bessel interpolant of ``p``."""
    fb = p.grid.fb
    return fb.fgram * (fb.H @ p.values)


def evaluate(p: RadialProfile, R, derivative: int = 0) -> np.ndarray:
    """Evaluate the Fourier-Bessel interpolant (or its first derivative) at ``R``."""
    R = np.asarray(R, dtype=float)
    c = fb_coefficients(p)
    rho = p.grid.rho
    n = p.grid.n
    x = np.outer(R.ravel(), rho)
    if derivative == 0:
        B = jv(n, x)
    elif derivative == 1:
        B = jvp(n, x) * rho[None, :]
    else:
        raise ValidationError("only derivative orders 0 and 1 are supported")
    return (B @ c).reshape(R.shape)


def tail_indicators(p: RadialProfile) -> tuple[float, float]:
    """(edge value ratio, spectral tail amplitude) used by resolution checks.

    The edge ratio is |p(R_N)| / max|p|; the spectral tail is the amplitude
    fraction carried by the top quarter of Fourier-Bessel modes.
    """
    v = np.abs(p.values)
    vmax = v.max()
    if vmax == 0.0:
        return 0.0, 0.0
    fb = p.grid.fb
    e = fb.fgram * np.abs(fb.H @ p.values) ** 2
    total = e.sum()
    k0 = (3 * p.grid.N) // 4
    spec = float(np.sqrt(e[k0:].sum() / total)) if total > 0 else 0.0
    return float(v[-1] / vmax), spec


def _warn_tail(p: RadialProfile, what: str, tol: float) -> None:
    edge, spec = tail_indicators(p)
    if edge > tol or spec > tol:
        warnings.warn(f"{what}: profile not resolved on {p.grid.describe()} "
                      f"(edge ratio {edge:.2e}, spectral tail {spec:.2e})",
                      AccuracyWarning, stacklevel=3)


@lru_cache(maxsize=32)
def _derivative_matrix(n: int, N: int, R_max: float) -> np.ndarray:
    g = build_grid(n, N, R_max)
    fb = g.fb
    rho = g.rho
    B = jvp(n, np.outer(g.nodes, rho)) * rho[None, :]
    return _readonly(B @ (fb.fgram[:, None] * fb.H))


def radial_derivative(p: RadialProfile, tol: Tolerances = DEFAULT_TOL) -> RadialProfile:
    """Spectral derivative d/dR of ``p`` at the grid nodes.

    The value at the last node is subtracted before differentiating, so a
    constant maps to zero exactly and slowly decaying profiles do not pick up
    the Dirichlet jump at R_max.
    """
    _warn_tail(p, "radial_derivative", tol.tail)
    g = p.grid
    D = _derivative_matrix(g.n, g.N, g.R_max)
    return RadialProfile(g, D @ (p.values - p.values[-1]))


@lru_cache(maxsize=32)
def _euler_matrix(n: int, N: int, R_max: float) -> np.ndarray:
    g = build_grid(n, N, R_max)
    G = g.nodes[:, None] * _derivative_matrix(n, N, R_max)
    Gadj = (G.T * g.gram[None, :]) / g.gram[:, None]
    return _readonly(0.5 * (G - Gadj) - np.eye(N))


def euler_matrix(grid: RadialGrid) -> np.ndarray:
    """Matrix of the Euler operator R d/dR on ``grid``.

    In L^2(R dR) the operator R d/dR equals (skew part) - 1.  The matrix keeps
    that structure exactly: it is the skew part of the collocation matrix under
    the grid inner product, shifted by -1.  On resolved profiles it agrees
    with R * radial_derivative to near round-off.
    """
    return _euler_matrix(grid.n, grid.N, grid.R_max)


def apply_euler(p: RadialProfile) -> RadialProfile:
    return RadialProfile(p.grid, euler_matrix(p.grid) @ p.values)


def resample(p: RadialProfile, g: RadialGrid, strict: bool = False,
             tol: Tolerances = DEFAULT_TOL) -> RadialProfile:
    """Interpolate ``p`` onto grid ``g`` of the same order.

    Resolution is checked by the round trip back to the source grid; failure
    warns, or raises :class:`ResolutionError` in strict mode.
    """
    if g == p.grid:
        return p
    if g.n != p.grid.n:
        raise GridMismatchError(f"resample keeps the harmonic order ({p.grid.n} -> {g.n})")
    out = RadialProfile(g, evaluate(p, g.nodes))
    back = evaluate(out, p.grid.nodes)
    scale = max(np.abs(p.values).max(), np.finfo(float).tiny)
    err = np.abs(back - p.values).max() / scale
    if err > tol.resample:
        msg = (f"target grid {g.describe()} does not resolve the profile "
               f"(round-trip error {err:.2e})")
        if strict:
            raise ResolutionError(msg)
        warnings.warn(msg, AccuracyWarning, stacklevel=2)
    return out


# Vortex --------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Vortex:
    """Radial zero-mean profile on an order-0 grid.

    ``velocity`` holds the azimuthal velocity once attached by
    :func:`selfsim_sqg.biot_savart.attach_velocity`.
    """

    profile: RadialProfile
    params: Mapping = field(default_factory=dict)
    velocity: object = None

    @property
    def grid(self) -> RadialGrid:
        return self.profile.grid

    def values_at(self, R, derivative: int = 0) -> np.ndarray:
        return evaluate(self.profile, R, derivative).real

    def with_velocity(self, velocity) -> "Vortex":
        return Vortex(self.profile, self.params, velocity)


def make_vortex(grid: RadialGrid, values, params: Mapping | None = None,
                tol: Tolerances = DEFAULT_TOL) -> Vortex:
    """Validate and wrap a radial profile as a :class:`Vortex`."""
    if grid.n != 0:
        raise ValidationError("vortices live on order-0 grids")
    if callable(values):
        values = values(grid.nodes)
    p = RadialProfile(grid, values)
    if not p.is_real(tol.real):
        raise ValidationError("vortex profile must be real")
    p = RadialProfile(grid, p.values.real)
    nrm = norm(p)
    if nrm == 0.0:
        raise ValidationError("vortex profile is identically zero")
    mean = abs(integrate(p))
    if mean >= tol.grid * nrm:
        raise ValidationError(f"vortex is not zero-mean: |int R dR| = {mean:.3e}, "
                              f"norm {nrm:.3e}")
    edge = abs(p.values[-1]) / np.abs(p.values).max()
    if edge >= tol.grid:
        raise ValidationError(f"vortex does not decay at R_max (edge ratio {edge:.2e})")
    return Vortex(p, dict(params or {}))


# CSV I/O ---------------------------------------------------------------------

def format_float(x: float) -> str:
    """Shortest round-tripping decimal representation."""
    return repr(float(x))


def write_profile_csv(p: RadialProfile, path, extra_header: str | None = None) -> None:
    g = p.grid
    lines = []
    if extra_header:
        lines.append(f"# {extra_header}")
    lines.append(f"# grid n={g.n} N={g.N} Rmax={format_float(g.R_max)}")
    lines.append("R,re,im")
    for R, v in zip(g.nodes, p.values):
        lines.append(f"{format_float(R)},{format_float(v.real)},{format_float(v.imag)}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_profile_csv(path) -> RadialProfile:
    grid = None
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("# grid"):
                kv = dict(tok.split("=") for tok in line[len("# grid"):].split())
                grid = build_grid(int(kv["n"]), int(kv["N"]), float(kv["Rmax"]))
            elif line.startswith("#") or line == "R,re,im":
                continue
            else:
                rows.append([float(t) for t in line.split(",")])
    if grid is None:
        raise ValidationError(f"{path}: missing '# grid' header line")
    arr = np.array(rows)
    if arr.shape != (grid.N, 3):
        raise ValidationError(f"{path}: expected {grid.N} rows, found {arr.shape[0]}")
    if not np.array_equal(arr[:, 0], grid.nodes):
        raise ValidationError(f"{path}: node column does not match {grid.describe()}")
    return RadialProfile(grid, arr[:, 1] + 1j * arr[:, 2])
