"""The alpha-Biot-Savart law on modal fields.

For Theta = W(R) e^{in phi} the stream function psi = Lambda^(alpha-2) Theta
has radial part psi_n(R), and the velocity -grad^perp psi has polar
components

    V_R = (i n / R) psi_n,     V_phi = -d psi_n / dR.

Two independent routes compute psi_n:

* ``streamfunction_hankel`` applies the multiplier rho^(alpha-2) through the
  whole-plane Hankel integral (production route);
* ``streamfunction_kernel`` integrates the real-space kernel
  C_alpha I_{n,alpha}(R/S) W(S) S^(1-alpha) dS (validation route).

The angular kernel has the closed form (obtained by integrating the defining
angular integral by parts and expanding in sigma)

    I_{n,a}(s) = (2 pi / a) (a/2)_n / n!  s^n  2F1(a/2, n + a/2; n + 1; s^2),   s < 1,
    I_{n,a}(s) = s^(-a) I_{n,a}(1/s),                                          s > 1,

with the a -> 0 limit (pi / n) min(s, 1/s)^n.  ``kernel_I`` evaluates the
defining integral by adaptive quadrature and is the check on that formula.
"""
from __future__ import annotations

import hashlib
import math
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate as _quad
from scipy.interpolate import CubicSpline
from scipy.special import gamma, hyp2f1, poch, gammaln

from . import __version__
from .config import DEFAULT_TOL, Tolerances
from .errors import AccuracyWarning, NumericalError, ValidationError
from .radial_core import (RadialGrid, RadialProfile, Vortex, evaluate, integrate, norm,
                          tail_indicators)
from .transforms import multiplier_quadrature

__all__ = ["c_alpha", "kernel_I", "kernel_closed_form", "KernelTable", "kernel_table",
           "streamfunction_kernel", "streamfunction_hankel", "velocity",
           "VortexVelocity", "vortex_velocity", "attach_velocity", "cache_dir"]

_Z_CLIP = 1e-13
_TABLE_FORMAT = 2       # bump when the stored regularization changes


def _check_alpha(alpha: float, hi: float = 1.0) -> float:
    alpha = float(alpha)
    if not (0.0 <= alpha <= hi):
        raise ValidationError(f"alpha={alpha} outside [0, {hi:g}]")
    return alpha


def c_alpha(alpha: float) -> float:
    """C_alpha = 2^alpha / (2 pi) Gamma(1 + alpha/2) / Gamma(1 - alpha/2)."""
    alpha = _check_alpha(alpha)
    return 2.0 ** alpha / (2.0 * math.pi) * math.gamma(1 + alpha / 2) / math.gamma(1 - alpha / 2)


def _kernel_integrand(b, n, alpha, sigma):
    d = (sigma - 1.0) ** 2 + 4.0 * sigma * math.sin(0.5 * b) ** 2
    return math.sin(b) * math.sin(n * b) / d ** (1.0 + 0.5 * alpha)


def kernel_I(n: int, alpha: float, sigma: float, epsabs: float = 1e-10,
             epsrel: float = 1e-10) -> float:
    """I_{n,alpha}(sigma) by adaptive quadrature of its angular integral.

    At sigma = 1 the integral converges only for alpha < 1, where the closed
    form at the branch point is returned; alpha = 1 raises.
    """
    if int(n) != n or n < 1:
        raise ValidationError(f"kernel order must be >= 1, got {n}")
    alpha = _check_alpha(alpha)
    sigma = float(sigma)
    if sigma < 0:
        raise ValidationError("sigma must be nonnegative")
    if sigma == 0.0:
        return 0.0
    if sigma == 1.0:
        if alpha >= 1.0:
            raise ValidationError("I_{n,1}(1) diverges logarithmically")
        return float(kernel_closed_form(n, alpha, 1.0))
    brk = min(abs(sigma - 1.0), 1.0)
    out = _quad.quad(_kernel_integrand, 0.0, math.pi, args=(n, alpha, sigma),
                     epsabs=epsabs, epsrel=epsrel, limit=500, points=[brk],
                     full_output=1)
    val, err = out[0], out[1]
    if len(out) > 3:
        raise NumericalError(f"kernel quadrature did not converge at sigma={sigma} "
                             f"(estimate {err:.2e}): {out[3]}")
    return 2.0 * sigma / n * val


def kernel_closed_form(n: int, alpha: float, sigma) -> np.ndarray:
    """Vectorized closed form of I_{n,alpha}; see the module docstring."""
    alpha = _check_alpha(alpha)
    s = np.asarray(sigma, dtype=float)
    u = np.where(s <= 1.0, s, 1.0 / np.where(s > 0, s, 1.0))
    if alpha == 0.0:
        out = (math.pi / n) * u ** n
    else:
        pref = math.pi * poch(1.0 + alpha / 2, n - 1) / math.factorial(n)
        z = u * u
        a, b, c = alpha / 2, n + alpha / 2, n + 1.0
        F = hyp2f1(a, b, c, np.minimum(z, 1.0 - _Z_CLIP))
        if alpha < 1.0:
            gauss = math.exp(gammaln(c) + gammaln(c - a - b) - gammaln(c - a) - gammaln(c - b))
            F = np.where(z >= 1.0, gauss, F)
        out = pref * u ** n * F
        out = np.where(s > 1.0, s ** (-alpha) * out, out)
    return out


# Kernel table ----------------------------------------------------------------

def cache_dir() -> Path:
    """Directory for cached kernel tables (``SELFSIM_SQG_CACHE`` overrides)."""
    d = os.environ.get("SELFSIM_SQG_CACHE")
    return Path(d) if d else Path.home() / ".cache" / "selfsim_sqg"


def _singular_part(n: int, alpha: float, sigma: np.ndarray) -> np.ndarray:
    """Non-smooth part of I_{n,alpha} at sigma = 1.

    From the connection formula of 2F1 at z = 1: for 0 < alpha < 1 a term
    proportional to |1 - u^2|^(1 - alpha), for alpha = 1 the term -2 log|1 - sigma|
    (up to smooth factors), and nothing for alpha = 0, where only the kink of
    min(sigma, 1/sigma)^n remains and is handled by splitting the table.
    """
    s = np.asarray(sigma, dtype=float)
    if alpha == 0.0:
        return np.zeros_like(s)
    if alpha == 1.0:
        return -2.0 * np.log(np.abs(1.0 - s) + 1e-300)
    u = np.where(s <= 1.0, s, 1.0 / np.where(s > 0, s, 1.0))
    a, b, c = alpha / 2, n + alpha / 2, n + 1.0
    pref = math.pi * poch(1.0 + alpha / 2, n - 1) / math.factorial(n)
    K = pref * gamma(c) * gamma(a + b - c) / (gamma(a) * gamma(b))
    out = K * u ** n * np.abs(1.0 - u * u) ** (1.0 - alpha)
    return np.where(s > 1.0, s ** (-alpha) * out, out)


@dataclass(frozen=True, eq=False)
class KernelTable:
    """Samples of I_{n,alpha} on a log-spaced sigma grid straddling 1.

    The stored values are I minus its non-smooth part at sigma = 1 (see
    :func:`_singular_part`), which is added back on evaluation; the two sides
    of sigma = 1 are interpolated by separate cubic splines in log sigma.
    """

    n: int
    alpha: float
    sigma: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    @property
    def log_singular(self) -> bool:
        return self.alpha == 1.0

    def __call__(self, sigma) -> np.ndarray:
        s = np.asarray(sigma, dtype=float)
        out = np.zeros_like(s)
        pos = s > 0
        sp = s[pos]
        ls = np.log(np.clip(sp, self.sigma[0], self.sigma[-1]))
        lt = np.log(self.sigma)
        left = self.sigma < 1.0
        v = np.where(sp < 1.0,
                     CubicSpline(lt[left], self.values[left])(ls),
                     CubicSpline(lt[~left], self.values[~left])(ls))
        v = v + _singular_part(self.n, self.alpha, sp)
        # outside the sampled range use the power laws I ~ s^n and s^(-n-alpha)
        lo = sp < self.sigma[0]
        hi = sp > self.sigma[-1]
        full = self.values + _singular_part(self.n, self.alpha, self.sigma)
        v[lo] = full[0] * (sp[lo] / self.sigma[0]) ** self.n
        v[hi] = full[-1] * (sp[hi] / self.sigma[-1]) ** (-self.n - self.alpha)
        out[pos] = v
        return out

    def grid_hash(self) -> str:
        return _sigma_hash(self.sigma)


def _sigma_grid(size: int, decades: float) -> np.ndarray:
    return np.logspace(-decades, decades, size)


def _sigma_hash(sigma: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(sigma).tobytes()).hexdigest()[:16]


def kernel_table(n: int, alpha: float, size: int = 2048, decades: float = 3.0,
                 use_cache: bool = True) -> KernelTable:
    """Build (or load from the disk cache) the sampled kernel for (n, alpha)."""
    alpha = _check_alpha(alpha)
    sigma = _sigma_grid(size, decades)
    h = _sigma_hash(sigma)
    path = cache_dir() / f"kernel_n{n}_a{alpha!r}_{h}.npz"
    if use_cache and path.exists():
        try:
            with np.load(path) as z:
                if (str(z["version"]) == __version__ and int(z["format"]) == _TABLE_FORMAT
                        and np.array_equal(z["sigma"], sigma)):
                    return KernelTable(n, alpha, sigma, z["values"])
        except (OSError, KeyError, ValueError):
            pass
    vals = np.array([kernel_I(n, alpha, s) for s in sigma]) - _singular_part(n, alpha, sigma)
    table = KernelTable(n, alpha, sigma, vals)
    if use_cache:
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp.npz")
            np.savez(tmp, version=np.array(__version__), format=np.array(_TABLE_FORMAT),
                     sigma=sigma, values=vals)
            os.replace(tmp, path)
        except OSError:
            pass
    return table


# Stream functions ------------------------------------------------------------

def _graded_breaks(a: float, b: float, R: float, levels: int, ratio: float) -> list:
    """Panel breakpoints on [a, b], geometrically graded towards R from both sides."""
    pts = {a, b}
    width = 0.5
    k = max(1, int(math.ceil((b - a) / width)))
    pts.update(np.linspace(a, b, k + 1).tolist())
    if a < R < b:
        pts.add(R)
        for side, room in ((-1.0, R - a), (1.0, b - R)):
            L = min(1.0, room)
            for j in range(levels):
                pts.add(R + side * L * ratio ** j)
    return sorted(p for p in pts if a <= p <= b)


def _support_end(W: RadialProfile, rel: float = 1e-16) -> float:
    v = np.abs(W.values)
    idx = np.nonzero(v > rel * v.max())[0]
    last = idx[-1] if len(idx) else 0
    g = W.grid
    return float(min(g.R_max, g.nodes[min(last + 2, g.N - 1)] + 1.0))


def streamfunction_kernel(n: int, alpha: float, W: RadialProfile, kernel: str = "closed",
                          window: float = 0.0, levels: int = 14, ratio: float = 0.2,
                          tol: Tolerances = DEFAULT_TOL) -> RadialProfile:
    """psi_n = C_alpha int_0^inf I_{n,alpha}(R/S) W(S) S^(1-alpha) dS at every node.

    The integrable singularity at S = R is resolved by 16-point Gauss-Legendre
    panels graded geometrically towards S = R, so no window or principal value
    correction is needed.  ``window > 0`` drops the nodes with
    |R/S - 1| < window (used to study the excluded-window approximation).
    ``kernel="table"`` interpolates a :class:`KernelTable` instead of the closed
    form.
    """
    if int(n) != n or n < 1:
        raise ValidationError("kernel route needs n >= 1")
    alpha = _check_alpha(alpha)
    g = W.grid
    if np.abs(W.values).max() == 0.0:
        return RadialProfile(g, np.zeros(g.N))
    edge, spec = tail_indicators(W)
    if edge > tol.tail:
        warnings.warn(f"kernel route on a tail-dominated input (edge ratio {edge:.2e})",
                      AccuracyWarning, stacklevel=2)
    if kernel == "closed":
        K = lambda s: kernel_closed_form(n, alpha, s)
    elif kernel == "table":
        K = kernel_table(n, alpha)
    else:
        raise ValidationError(f"unknown kernel evaluation {kernel!r}")
    s_end = _support_end(W)
    # dense spline of the Fourier-Bessel interpolant; h^4 error is far below 1e-12
    Sd = np.linspace(0.0, s_end, max(4096, int(2000 * s_end) + 1))
    Wd = evaluate(W, Sd)
    Wspl = CubicSpline(Sd, Wd)
    x, w = np.polynomial.legendre.leggauss(16)
    out = np.zeros(g.N, dtype=complex)
    calpha = c_alpha(alpha)
    for k, R in enumerate(g.nodes):
        br = np.array(_graded_breaks(0.0, s_end, float(R), levels, ratio))
        h = 0.5 * np.diff(br)
        S = (br[:-1, None] + h[:, None] * (x[None, :] + 1.0)).ravel()
        wS = (h[:, None] * w[None, :]).ravel()
        if window > 0.0:
            keep = np.abs(R / S - 1.0) >= window
            S, wS = S[keep], wS[keep]
        f = Wspl(S) * S ** (1.0 - alpha) * K(R / S)
        out[k] = calpha * np.dot(wS, f)
    return RadialProfile(g, out)


def streamfunction_hankel(n: int, alpha: float, W: RadialProfile, at=None,
                          derivative: int = 0):
    """psi_n via the whole-plane Hankel integral of rho^(alpha-2).

    ``alpha`` may be taken up to 2 (alpha = 2 is the identity multiplier and
    serves only as a test extension).  Returns a profile on ``W.grid`` or, when
    ``at`` is given, an array of values at those radii.
    """
    alpha = _check_alpha(alpha, hi=2.0)
    if W.grid.n != abs(n):
        raise ValidationError(f"profile grid order {W.grid.n} does not match harmonic {n}")
    vals = multiplier_quadrature(W, alpha - 2.0, at=at, derivative=derivative)
    if at is None:
        return RadialProfile(W.grid, vals)
    return vals


def velocity(n: int, alpha: float, W: RadialProfile, at=None):
    """(V_R, V_phi) of the harmonic-n field W e^{in phi}.

    V_phi uses the exact derivative of the Hankel representation; psi has
    algebraic tails, so collocation differentiation on [0, R_max] would be
    polluted by the edge.
    """
    R = W.grid.nodes if at is None else np.asarray(at, dtype=float)
    psi = streamfunction_hankel(n, alpha, W, at=R)
    dpsi = streamfunction_hankel(n, alpha, W, at=R, derivative=1)
    VR = 1j * n * psi / R
    Vphi = -dpsi
    if at is None:
        return RadialProfile(W.grid, VR), RadialProfile(W.grid, Vphi)
    return VR, Vphi


@dataclass(frozen=True, eq=False)
class VortexVelocity:
    """Azimuthal velocity of a vortex, evaluable at any radius."""

    alpha: float
    source: RadialProfile = field(repr=False)
    profile: RadialProfile = field(repr=False)
    _memo: dict = field(default_factory=dict, repr=False)

    def __call__(self, R) -> np.ndarray:
        R = np.asarray(R, dtype=float)
        key = hashlib.sha1(R.tobytes()).hexdigest()
        hit = self._memo.get(key)
        if hit is None:
            hit = -multiplier_quadrature(self.source, self.alpha - 2.0, at=R,
                                         derivative=1).real
            hit.setflags(write=False)
            self._memo[key] = hit
        return hit


def _vortex_velocity(alpha: float, vortex: Vortex, tol: Tolerances) -> VortexVelocity:
    alpha = _check_alpha(alpha)
    p = vortex.profile
    m = abs(integrate(p))
    if m >= tol.grid * norm(p):
        raise ValidationError(f"vortex velocity needs a zero-mean profile (mean {m:.3e})")
    vals = -multiplier_quadrature(p, alpha - 2.0, derivative=1).real
    return VortexVelocity(alpha, p, RadialProfile(p.grid, vals))


def vortex_velocity(alpha: float, vortex: Vortex, tol: Tolerances = DEFAULT_TOL) -> RadialProfile:
    """V_phi of the radial vortex on its own grid."""
    return _vortex_velocity(alpha, vortex, tol).profile


def attach_velocity(vortex: Vortex, alpha: float, tol: Tolerances = DEFAULT_TOL) -> Vortex:
    """Return ``vortex`` with its velocity cache filled for exponent ``alpha``."""
    v = vortex.velocity
    if isinstance(v, VortexVelocity) and v.alpha == float(alpha):
        return vortex
    return vortex.with_velocity(_vortex_velocity(alpha, vortex, tol))
