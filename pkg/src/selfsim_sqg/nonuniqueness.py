"""Golovkin construction of two forced self-similar solutions.

Fields are finite modal expansions

    Theta(tau, R, phi) = sum_k c_k exp(mu_k tau) g_k(R) exp(i m_k phi),

closed under complex conjugation so that the represented field is real.
With an unstable eigenpair L_nu W = lambda W (Re lambda > 0) and
Theta_lin = Re(exp(lambda tau) W e^{in phi}), both Theta_bar +/- Theta_lin solve

    d_tau Theta + V.grad Theta + nu J Theta = F,
    F = nu J Theta_bar + V_lin.grad Theta_lin,

because Vbar.grad Thetabar vanishes for a radial vortex.  Physical fields
follow from theta(t, x) = t^(alpha/beta - 1) / nu * Theta(log(t)/nu, x / t^(1/beta))
and f(t, x) = t^(alpha/beta - 2) / nu^2 * F.
"""
from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .biot_savart import attach_velocity
from .config import DEFAULT_TOL, Tolerances
from .errors import (AccuracyWarning, GridMismatchError, MissingPrerequisiteError,
                     NumericalError, ValidationError)
from .linearized_operator import drift_J
from .radial_core import (RadialGrid, RadialProfile, Vortex, build_grid, evaluate, integrate,
                          norm, read_profile_csv, write_profile_csv)
from .spectra import EigenPair
from .transforms import get_plan, multiplier, multiplier_quadrature

__all__ = ["ModalTerm", "ModalExpansion", "GolovkinSystem", "PhysicalField", "term",
           "vortex_expansion", "linear_expansion", "advect", "apply_J", "golovkin_force",
           "verify_residual", "ResidualReport", "to_physical", "hankel_norm",
           "separation_curve", "fit_slope", "predicted_slope", "envelope_check",
           "EnergyTrajectory", "energy_trajectory", "save_system", "load_system",
           "write_snapshot"]


@dataclass(frozen=True, eq=False)
class ModalTerm:
    """c exp(mu tau) g(R) e^{i m phi} with ||g|| = 1."""

    m: int
    mu: complex
    c: complex
    g: RadialProfile = field(repr=False)

    def __post_init__(self):
        if self.g.grid.n != abs(self.m):
            raise GridMismatchError(f"harmonic {self.m} stored on an order-{self.g.grid.n} grid")

    @property
    def key(self) -> tuple:
        return (self.m, self.mu.real, self.mu.imag)

    def values(self, tau: float = 0.0, shift: float = 0.0) -> np.ndarray:
        """Samples of c exp(mu tau - shift) g on the term's grid."""
        return self.c * np.exp(self.mu * tau - shift) * self.g.values

    def conj(self) -> "ModalTerm":
        return ModalTerm(-self.m, self.mu.conjugate(), self.c.conjugate(), self.g.conj())


def term(m: int, mu: complex, values: RadialProfile, c: complex = 1.0) -> ModalTerm | None:
    """Canonical term c * values; None when ``values`` is identically zero."""
    nrm = norm(values)
    if nrm == 0.0:
        return None
    return ModalTerm(int(m), complex(mu), complex(c) * nrm, values / nrm)


def _combine(terms: Iterable[ModalTerm]) -> list[ModalTerm]:
    groups: dict = {}
    for t in terms:
        if t is None:
            continue
        slot = groups.get(t.key)
        if slot is None:
            groups[t.key] = [t.g.grid, t.c * t.g.values, t]
        else:
            if slot[0] != t.g.grid:
                raise GridMismatchError(f"terms at harmonic {t.m} live on different grids")
            slot[1] = slot[1] + t.c * t.g.values
    out = []
    for key in sorted(groups):
        grid, vals, first = groups[key]
        new = term(first.m, first.mu, RadialProfile(grid, vals))
        if new is not None:
            out.append(new)
    return out


@dataclass(frozen=True, eq=False)
class ModalExpansion:
    """Real field as a conjugate-closed list of modal terms (canonical order)."""

    terms: tuple = ()

    @staticmethod
    def of(terms: Iterable[ModalTerm], check: bool = True, tol: float = 1e-12) -> "ModalExpansion":
        e = ModalExpansion(tuple(_combine(terms)))
        if check:
            e.check_closure(tol)
        return e

    def check_closure(self, tol: float = 1e-12) -> None:
        index = {t.key: t for t in self.terms}
        for t in self.terms:
            v = t.c * t.g.values
            scale = max(abs(t.c), np.finfo(float).tiny)
            partner = index.get((-t.m, t.mu.real, -t.mu.imag))
            if partner is None:
                raise ValidationError(f"term (m={t.m}, mu={t.mu}) has no conjugate partner")
            err = np.abs(partner.c * partner.g.values - v.conj()).max() / scale
            if err > tol:
                raise ValidationError(f"term (m={t.m}, mu={t.mu}) breaks conjugate symmetry "
                                      f"({err:.2e})")

    def __add__(self, other: "ModalExpansion") -> "ModalExpansion":
        return ModalExpansion.of(self.terms + other.terms, check=False)

    def __sub__(self, other: "ModalExpansion") -> "ModalExpansion":
        return self + other.scale(-1.0)

    def scale(self, a: float) -> "ModalExpansion":
        return ModalExpansion(tuple(ModalTerm(t.m, t.mu, a * t.c, t.g) for t in self.terms
                                    if a != 0))

    def harmonics(self) -> list[int]:
        return sorted({t.m for t in self.terms})

    def at(self, m: int) -> list[ModalTerm]:
        return [t for t in self.terms if t.m == m]

    @property
    def base_grid(self) -> RadialGrid:
        if not self.terms:
            raise ValidationError("empty expansion")
        g = self.terms[0].g.grid
        return build_grid(0, g.N, g.R_max)

    def growth_shift(self, tau: float) -> float:
        """Largest Re(mu) tau; used to evaluate without underflow."""
        return max((t.mu.real * tau for t in self.terms), default=0.0)

    def evaluate(self, tau: float, shift: float = 0.0) -> dict:
        """Harmonic m -> profile sum_k c_k exp(mu_k tau - shift) g_k."""
        out: dict = {}
        for t in self.terms:
            v = t.values(tau, shift)
            out[t.m] = out[t.m] + v if t.m in out else v
        grids = {t.m: t.g.grid for t in self.terms}
        return {m: RadialProfile(grids[m], v) for m, v in out.items()}

    def map_profiles(self, fn) -> "ModalExpansion":
        """Apply a linear radial map to every profile (coefficients carried along)."""
        return ModalExpansion.of([term(t.m, t.mu, fn(t.g), t.c) for t in self.terms], check=False)

    def d_tau(self) -> "ModalExpansion":
        return ModalExpansion.of([term(t.m, t.mu, t.g, t.c * t.mu) for t in self.terms
                                  if t.mu != 0], check=False)


def vortex_expansion(vortex: Vortex) -> ModalExpansion:
    return ModalExpansion.of([term(0, 0.0, vortex.profile)])


def linear_expansion(eig: EigenPair, n: int, amplitude: float = 1.0) -> ModalExpansion:
    """Re(amplitude exp(lambda tau) W e^{in phi}) as two conjugate terms."""
    t = term(n, eig.lam, eig.W, 0.5 * amplitude)
    return ModalExpansion.of([t, t.conj()])


# nonlinear term ---------------------------------------------------------------

def advect(a: ModalExpansion, b: ModalExpansion, alpha: float, cap: int | None = None,
           report: dict | None = None, tol: Tolerances = DEFAULT_TOL) -> ModalExpansion:
    """V(a).grad(b) as a modal expansion.

    For a-term (m_a, g_a) with psi = Lambda^(alpha-2) g_a the velocity is
    V_R = i m_a psi / R, V_phi = -psi'; the product with b-term (m_b, g_b) is
    V_R g_b' + (V_phi / R) i m_b g_b at harmonic m_a + m_b and growth rate
    mu_a + mu_b.  Products beyond ``|m| <= cap`` are dropped, warned about and
    their norms recorded in ``report["overflow"]``.
    """
    if not a.terms or not b.terms:
        return ModalExpansion()
    g0 = a.terms[0].g.grid
    N, R_max = g0.N, g0.R_max
    for t in a.terms + b.terms:
        if (t.g.grid.N, t.g.grid.R_max) != (N, R_max):
            raise GridMismatchError("advect needs all profiles on one (N, R_max) family")
    for t in a.terms:
        if t.m == 0 and abs(integrate(t.g)) >= tol.grid:
            raise ValidationError("velocity of a radial term needs a zero-mean profile")
    out, overflow = [], {}
    vel_cache: dict = {}
    for ia, ta in enumerate(a.terms):
        for tb in b.terms:
            if ta.m == 0 and tb.m == 0:
                continue            # radial velocity is azimuthal, gradient is radial
            m = ta.m + tb.m
            target = build_grid(abs(m), N, R_max)
            R = target.nodes
            ck = (ia, abs(m))
            if ck not in vel_cache:
                vel_cache[ck] = (multiplier_quadrature(ta.g, alpha - 2.0, at=R),
                                 multiplier_quadrature(ta.g, alpha - 2.0, at=R, derivative=1))
            psi, dpsi = vel_cache[ck]
            vals = np.zeros(target.N, dtype=complex)
            if ta.m != 0:
                vals += (1j * ta.m * psi / R) * evaluate(tb.g, R, derivative=1)
            if tb.m != 0:
                vals += (-dpsi / R) * (1j * tb.m) * evaluate(tb.g, R)
            new = term(m, ta.mu + tb.mu, RadialProfile(target, vals), ta.c * tb.c)
            if new is None:
                continue
            if cap is not None and abs(m) > cap:
                overflow[m] = overflow.get(m, 0.0) + abs(new.c)
                continue
            out.append(new)
    if overflow:
        warnings.warn(f"harmonics beyond the cap {cap} dropped: {sorted(overflow)}",
                      AccuracyWarning, stacklevel=2)
    if report is not None:
        report["overflow"] = overflow
    return ModalExpansion.of(out, check=False)


def apply_J(E: ModalExpansion, alpha: float, beta: float,
            tol: Tolerances = DEFAULT_TOL) -> ModalExpansion:
    """J applied termwise (Lambda^beta, identity shift and Euler drift)."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AccuracyWarning)
        return E.map_profiles(lambda g: drift_J(alpha, beta, g, tol))


# Golovkin system ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GolovkinSystem:
    alpha: float
    beta: float
    nu: float
    n: int
    vortex: Vortex = field(repr=False)
    eigenpair: EigenPair = field(repr=False)
    theta_bar: ModalExpansion = field(repr=False)
    theta_lin: ModalExpansion = field(repr=False)
    force: ModalExpansion = field(repr=False)
    amplitude: float = 1.0
    meta: dict = field(default_factory=dict)

    def branch(self, eps: float) -> ModalExpansion:
        """Theta_bar + eps Theta_lin; eps = +1 and -1 are the two solutions."""
        return self.theta_bar + self.theta_lin.scale(eps)

    @property
    def lam(self) -> complex:
        return self.eigenpair.lam


def golovkin_force(alpha: float, beta: float, nu: float, vortex: Vortex, eig: EigenPair,
                   n: int, amplitude: float = 1.0, cap: int | None = None,
                   tol: Tolerances = DEFAULT_TOL) -> GolovkinSystem:
    """Assemble Theta_+-, and the shared force F."""
    if not eig.lam.real > 0:
        raise ValidationError(f"construction needs Re lambda > 0 (got {eig.lam.real:.3e})")
    if not eig.residual < tol.eigen:
        raise ValidationError(f"eigenpair residual {eig.residual:.2e} above {tol.eigen:.1e}")
    if not nu > 0:
        raise ValidationError("nu must be positive")
    if eig.grid.n != abs(n) or (eig.grid.N, eig.grid.R_max) != (vortex.grid.N, vortex.grid.R_max):
        raise GridMismatchError("eigenfunction and vortex grids are incompatible")
    cap = 3 * abs(n) if cap is None else cap
    vortex = attach_velocity(vortex, alpha, tol)
    bar = vortex_expansion(vortex)
    lin = linear_expansion(eig, n, amplitude)
    self_adv = advect(bar, bar, alpha, cap, tol=tol)
    assert not self_adv.terms, "radial vortex must not advect itself"
    quad = advect(lin, lin, alpha, cap, tol=tol)
    F = ModalExpansion.of(apply_J(bar, alpha, beta, tol).scale(nu).terms + quad.terms)
    meta = dict(eigen_residual=eig.residual, cap=cap)
    return GolovkinSystem(float(alpha), float(beta), float(nu), int(n), vortex, eig, bar, lin,
                          F, float(amplitude), meta)


@dataclass
class ResidualReport:
    eps: float
    taus: list
    per_harmonic: dict                  # tau -> {m: relative residual}
    residual: ModalExpansion = field(repr=False)

    @property
    def max(self) -> float:
        return max((v for row in self.per_harmonic.values() for v in row.values()), default=0.0)


def verify_residual(sys: GolovkinSystem, taus: Sequence[float], eps: float = 1.0,
                    force: ModalExpansion | None = None, tol: Tolerances = DEFAULT_TOL
                    ) -> ResidualReport:
    """Residual d_tau Theta + V.grad Theta + nu J Theta - F for Theta = Theta_bar + eps Theta_lin.

    ``force`` defaults to the system's F; pass a deserialized copy to check
    several branches against one stored object.  The relative residual at a
    harmonic is the residual norm over the largest of the four contributions.
    """
    F = sys.force if force is None else force
    Th = sys.branch(eps)
    pieces = [Th.d_tau(), advect(Th, Th, sys.alpha, sys.meta.get("cap"), tol=tol),
              apply_J(Th, sys.alpha, sys.beta, tol).scale(sys.nu), F.scale(-1.0)]
    res = ModalExpansion.of([t for p in pieces for t in p.terms], check=False)
    rows = {}
    for tau in taus:
        shift = max(p.growth_shift(tau) for p in pieces)
        scale: dict = {}
        for p in pieces:
            for m, prof in p.evaluate(tau, shift).items():
                scale[m] = max(scale.get(m, 0.0), norm(prof))
        rv = res.evaluate(tau, shift)
        rows[float(tau)] = {m: (norm(rv[m]) / s if m in rv else 0.0)
                            for m, s in sorted(scale.items()) if s > 0}
    return ResidualReport(float(eps), [float(t) for t in taus], rows, res)


# physical fields -----------------------------------------------------------------

def _power_values(g: RadialProfile, s: float, at: np.ndarray) -> np.ndarray:
    if s == 0:
        return evaluate(g, at)
    if s > 0:
        return evaluate(multiplier(get_plan(g.grid), s, g), at)
    return multiplier_quadrature(g, s, at=at)


@dataclass(frozen=True, eq=False)
class PhysicalField:
    """Real field sampled on a polar grid (physical radii r, angles phi)."""

    t: float
    r: np.ndarray = field(repr=False)
    phi: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)        # (len(r), len(phi))
    weights: np.ndarray = field(repr=False)       # radial weights for int . r dr
    log_scale: float = 0.0                        # true field = exp(log_scale) * values

    def norm(self, q: float) -> float:
        return math.exp(self.log_norm(q))

    def log_norm(self, q: float) -> float:
        v = np.abs(self.values)
        if q == math.inf:
            mx = v.max()
            return (math.log(mx) if mx > 0 else -math.inf) + self.log_scale
        dphi = 2 * np.pi / self.phi.size
        integral = float(self.weights @ (v ** q).sum(axis=1)) * dphi
        return (math.log(integral) / q if integral > 0 else -math.inf) + self.log_scale


def to_physical(E: ModalExpansion, nu: float, t: float, alpha: float, beta: float,
                kind: str = "solution", s: float = 0.0, n_angles: int | None = None,
                tol: Tolerances = DEFAULT_TOL) -> PhysicalField:
    """Sample Lambda^s of theta(t) (``kind="solution"``) or f(t) (``"force"``).

    The radial samples sit on the order-0 grid dilated by t^(1/beta); the
    angular grid has 4 max|m| points.  Values are stored with a separate
    logarithmic scale so that small t does not underflow.
    """
    if not t > 0:
        raise ValidationError("physical time must be positive")
    if kind not in ("solution", "force"):
        raise ValidationError(f"unknown field kind {kind!r}")
    tau = math.log(t) / nu
    g0 = E.base_grid
    X = g0.nodes
    M = max((abs(m) for m in E.harmonics()), default=0)
    nphi = n_angles or 4 * max(M, 1)
    phi = 2 * np.pi * np.arange(nphi) / nphi
    shift = E.growth_shift(tau)
    vals = np.zeros((X.size, nphi), dtype=complex)
    for tm in E.terms:
        prof = tm.c * np.exp(tm.mu * tau - shift) * _power_values(tm.g, s, X)
        vals += prof[:, None] * np.exp(1j * tm.m * phi)[None, :]
    big = np.abs(vals.real).max()
    if np.abs(vals.imag).max() > 1e-10 * max(big, np.finfo(float).tiny):
        raise NumericalError("rendered field is not real; expansion lost conjugate symmetry")
    if kind == "solution":
        log_pref = ((alpha - s) / beta - 1.0) * math.log(t) - math.log(nu)
    else:
        log_pref = ((alpha - s) / beta - 2.0) * math.log(t) - 2 * math.log(nu)
    d = t ** (1.0 / beta)
    return PhysicalField(t, X * d, phi, vals.real, g0.weights * d * d, log_pref + shift)


def hankel_norm(E: ModalExpansion, tau: float, s: float = 0.0, log: bool = False) -> float:
    """||Lambda^s Theta(tau)||_{L^2(R^2)} from the Fourier-Bessel spectra."""
    shift = E.growth_shift(tau)
    total = 0.0
    for m, prof in E.evaluate(tau, shift).items():
        plan = get_plan(prof.grid)
        total += float(plan.rho_weights @ (plan.rho ** (2 * s) * np.abs(plan.H @ prof.values) ** 2))
    total *= 2 * np.pi
    if log:
        return 0.5 * math.log(total) + shift if total > 0 else -math.inf
    return math.sqrt(total) * math.exp(shift)


def _log_norm(E: ModalExpansion, nu, t, alpha, beta, s, q) -> float:
    if q == 2:
        lp = ((alpha - s) / beta - 1.0 + 2.0 / (beta * q)) * math.log(t) - math.log(nu)
        return lp + hankel_norm(E, math.log(t) / nu, s, log=True)
    return to_physical(E, nu, t, alpha, beta, "solution", s).log_norm(q)


def separation_curve(sys: GolovkinSystem, t_grid: Sequence[float], s: float = 0.0,
                     q: float = 2) -> np.ndarray:
    """Rows (t, log ||Lambda^s (theta_1 - theta_2)(t)||_{L^q}) for theta_1,2 = theta_+-.

    q = 2 is evaluated on the Hankel side, q in {1, inf} from polar samples.
    """
    if q not in (1, 2, math.inf):
        raise ValidationError("separation norms are available for q in {1, 2, inf}")
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(t_grid <= 0) or np.any(t_grid > 1):
        raise ValidationError("t_grid must lie in (0, 1]")
    diff = sys.branch(1.0) - sys.branch(-1.0)
    rows = [(t, _log_norm(diff, sys.nu, t, sys.alpha, sys.beta, s, q)) for t in t_grid]
    return np.array(rows)


def predicted_slope(alpha: float, beta: float, nu: float, lam: complex, s: float = 0.0,
                    q: float = 2) -> float:
    """log-log slope of the separation: (alpha - s)/beta - 1 + 2/(beta q) + Re lambda/nu."""
    return (alpha - s) / beta - 1.0 + 2.0 / (beta * q) + lam.real / nu


def fit_slope(curve: np.ndarray, window: tuple = (1e-3, 1e-1), min_points: int = 5,
              period: float | None = None) -> float:
    """Least-squares slope of log norm against log t inside ``window``.

    With an oscillation of angular frequency ``period`` in log t, the window
    is trimmed to a whole number of periods so the oscillation averages out.
    """
    t, ln = curve[:, 0], curve[:, 1]
    lo, hi = window
    if period:
        span = math.log(hi / lo)
        P = 2 * np.pi / period
        if span >= P:
            hi = lo * math.exp(P * math.floor(span / P))
    sel = (t >= lo * (1 - 1e-12)) & (t <= hi * (1 + 1e-12)) & np.isfinite(ln)
    if sel.sum() < min_points:
        raise ValidationError(f"fit window holds {int(sel.sum())} points, need {min_points}")
    return float(np.polyfit(np.log(t[sel]), ln[sel], 1)[0])


def envelope_check(sys: GolovkinSystem, t_grid: Sequence[float], s: float, q: float,
                   eps: float = 1.0, margin: float = 1.0 + 1e-9) -> dict:
    """Check ||Lambda^s theta_eps(t)||_{L^q} <= C t^((2/q - s - beta + alpha)/beta) on t <= 1.

    C = (||Lambda^s Thetabar|| + amplitude ||Lambda^s W e^{in phi}||) / nu * margin,
    norms in L^q(R^2); for t <= 1 the factor |exp(lambda tau)| is at most one.
    """
    a, b, nu = sys.alpha, sys.beta, sys.nu
    W = term(sys.n, 0.0, sys.eigenpair.W, sys.amplitude)
    Wexp = ModalExpansion((W,))
    if q == 2:
        nb = hankel_norm(sys.theta_bar, 0.0, s)
        nw = hankel_norm(Wexp, 0.0, s)
    else:
        nphi = 4 * max(1, 3 * sys.n)
        nb = to_physical(sys.theta_bar, nu, 1.0, a, b, s=s, n_angles=nphi).norm(q) * nu
        # |W e^{in phi}| does not depend on the angle
        nw = _complex_norm(W, s, q)
    C = (nb + nw) / nu * margin
    expo = (2.0 / q - s - b + a) / b
    Th = sys.branch(eps)
    ratios = []
    for t in t_grid:
        if t > 1:
            raise ValidationError("envelope holds for t <= 1")
        ln = _log_norm(Th, nu, t, a, b, s, q)
        ratios.append(math.exp(ln - math.log(C) - expo * math.log(t)))
    return dict(C=C, exponent=expo, ratios=ratios, ok=bool(max(ratios) <= 1.0))


def _complex_norm(t: ModalTerm, s: float, q: float) -> float:
    g0 = build_grid(0, t.g.grid.N, t.g.grid.R_max)
    v = np.abs(t.c * _power_values(t.g, s, g0.nodes))
    if q == math.inf:
        return float(v.max())
    return float(2 * np.pi * (g0.weights @ v ** q)) ** (1.0 / q)


# energy trajectories -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EnergyTrajectory:
    """tau -> (||Lambda^s Theta||^2, ||Lambda^(s+beta/2) Theta||^2, <F, Theta>_{H^s}).

    All three are exact exponential sums; the Gram matrices of the modal
    terms are precomputed on the Fourier-Bessel side.
    """

    s: float
    beta: float
    mu_pairs: np.ndarray = field(repr=False)      # exponents mu_a + conj(mu_b)
    coef_E: np.ndarray = field(repr=False)
    coef_D: np.ndarray = field(repr=False)
    mu_force: np.ndarray = field(repr=False)
    coef_P: np.ndarray = field(repr=False)

    def _sum(self, mu, coef, tau):
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        return (np.exp(np.outer(tau, mu)) @ coef).real

    def E(self, tau):
        return self._sum(self.mu_pairs, self.coef_E, tau)

    def D(self, tau):
        return self._sum(self.mu_pairs, self.coef_D, tau)

    def P(self, tau):
        return self._sum(self.mu_force, self.coef_P, tau)

    @property
    def max_frequency(self) -> float:
        return float(max(np.abs(self.mu_pairs.imag).max(initial=0.0),
                         np.abs(self.mu_force.imag).max(initial=0.0)))


def _spectra(E: ModalExpansion) -> list:
    out = []
    for t in E.terms:
        plan = get_plan(t.g.grid)
        out.append((t, plan.H @ t.g.values, plan.rho, plan.rho_weights))
    return out


def _gram(A, B, s):
    mu, coef = [], []
    for ta, fa, rho, w in A:
        for tb, fb, _, _ in B:
            if ta.m != tb.m:
                continue
            val = 2 * np.pi * np.sum(w * rho ** (2 * s) * fa * fb.conj())
            mu.append(ta.mu + tb.mu.conjugate())
            coef.append(ta.c * tb.c.conjugate() * val)
    return np.array(mu, dtype=complex), np.array(coef, dtype=complex)


def energy_trajectory(sys: GolovkinSystem, s: float, eps: float = 1.0,
                      force: ModalExpansion | None = None) -> EnergyTrajectory:
    Th = _spectra(sys.branch(eps))
    Fs = _spectra(sys.force if force is None else force)
    mu, cE = _gram(Th, Th, s)
    _, cD = _gram(Th, Th, s + sys.beta / 2)
    muF, cP = _gram(Fs, Th, s)
    return EnergyTrajectory(float(s), sys.beta, mu, cE, cD, muF, cP)


# serialization -----------------------------------------------------------------

def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _dump_expansion(E: ModalExpansion, name: str, root: Path, header: str) -> list:
    rows = []
    for k, t in enumerate(E.terms):
        fn = f"{name}_{k:02d}.csv"
        write_profile_csv(t.g, root / fn, header)
        rows.append({"m": t.m, "mu": [t.mu.real, t.mu.imag], "c": [t.c.real, t.c.imag],
                     "file": fn, "sha256": _sha(root / fn)})
    return rows


def _load_expansion(rows: list, root: Path) -> ModalExpansion:
    terms = []
    for r in rows:
        path = root / r["file"]
        if not path.exists():
            raise MissingPrerequisiteError(f"missing profile file {path}")
        if _sha(path) != r["sha256"]:
            raise ValidationError(f"{path}: checksum does not match the manifest")
        g = read_profile_csv(path)
        terms.append(ModalTerm(int(r["m"]), complex(*r["mu"]), complex(*r["c"]), g))
    return ModalExpansion(tuple(terms))


def save_system(sys: GolovkinSystem, out_dir, config_hash: str = "") -> Path:
    """Write manifest.json plus one profile CSV per modal term."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    header = f"config_hash={config_hash}"
    write_profile_csv(sys.vortex.profile, root / "vortex.csv", header)
    write_profile_csv(sys.eigenpair.W, root / "eigenfunction.csv", header)
    man = {
        "kind": "golovkin-system", "config_hash": config_hash,
        "alpha": sys.alpha, "beta": sys.beta, "nu": sys.nu, "n": sys.n,
        "amplitude": sys.amplitude,
        "lambda": [sys.lam.real, sys.lam.imag], "eigen_residual": sys.eigenpair.residual,
        "grid": {"N": sys.vortex.grid.N, "R_max": sys.vortex.grid.R_max},
        "vortex": {"file": "vortex.csv", "sha256": _sha(root / "vortex.csv"),
                   "params": dict(sys.vortex.params)},
        "eigenfunction": {"file": "eigenfunction.csv",
                          "sha256": _sha(root / "eigenfunction.csv")},
        "cap": sys.meta.get("cap"),
        "theta_bar": _dump_expansion(sys.theta_bar, "theta_bar", root, header),
        "theta_lin": _dump_expansion(sys.theta_lin, "theta_lin", root, header),
        "force": _dump_expansion(sys.force, "force", root, header),
    }
    path = root / "manifest.json"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(man, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return path


def load_system(manifest) -> GolovkinSystem:
    """Rebuild a system from ``save_system`` output; lambda is taken from the manifest."""
    path = Path(manifest)
    if path.is_dir():
        path = path / "manifest.json"
    if not path.exists():
        raise MissingPrerequisiteError(f"missing manifest {path}")
    root = path.parent
    man = json.loads(path.read_text(encoding="utf-8"))
    for key in ("vortex", "eigenfunction"):
        f = root / man[key]["file"]
        if not f.exists():
            raise MissingPrerequisiteError(f"missing {f}")
        if _sha(f) != man[key]["sha256"]:
            raise ValidationError(f"{f}: checksum does not match the manifest")
    prof = read_profile_csv(root / man["vortex"]["file"])
    vortex = Vortex(RadialProfile(prof.grid, prof.values.real), man["vortex"].get("params", {}))
    W = read_profile_csv(root / man["eigenfunction"]["file"])
    lam = complex(*man["lambda"])
    eig = EigenPair(lam, W, float(man["eigen_residual"]))
    alpha = float(man["alpha"])
    vortex = attach_velocity(vortex, alpha)
    lin_rows = man["theta_lin"]
    theta_lin = _load_expansion(lin_rows, root)
    # growth rates follow lambda as stored in the manifest
    theta_lin = ModalExpansion(tuple(
        ModalTerm(t.m, lam if t.m > 0 else lam.conjugate(), t.c, t.g) for t in theta_lin.terms))
    return GolovkinSystem(alpha, float(man["beta"]), float(man["nu"]), int(man["n"]), vortex,
                          eig, _load_expansion(man["theta_bar"], root), theta_lin,
                          _load_expansion(man["force"], root), float(man["amplitude"]),
                          dict(cap=man.get("cap"), config_hash=man.get("config_hash", "")))


def write_snapshot(fieldv: PhysicalField, path, fmt: str = "csv", config_hash: str = "") -> None:
    """Physical snapshot as CSV ``x,y,value`` or flat little-endian float64 binary.

    The binary form stores (x, y, value) triples row-major, radius-major then
    angle, with a JSON sidecar ``<path>.json`` describing shape and scale.
    """
    r, phi = fieldv.r, fieldv.phi
    x = (r[:, None] * np.cos(phi)[None, :]).ravel()
    y = (r[:, None] * np.sin(phi)[None, :]).ravel()
    v = (fieldv.values * math.exp(fieldv.log_scale)).ravel()
    if fmt == "csv":
        lines = [f"# config_hash={config_hash} t={fieldv.t!r}", "x,y,value"]
        lines += [f"{a!r},{b!r},{c!r}" for a, b, c in zip(x.tolist(), y.tolist(), v.tolist())]
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    elif fmt == "bin":
        np.ascontiguousarray(np.stack([x, y, v], axis=1), dtype="<f8").tofile(path)
        side = {"config_hash": config_hash, "t": fieldv.t, "dtype": "<f8", "order": "row-major",
                "shape": [int(x.size), 3], "columns": ["x", "y", "value"],
                "n_r": int(r.size), "n_phi": int(phi.size)}
        with open(str(path) + ".json", "w", encoding="utf-8", newline="\n") as fh:
            json.dump(side, fh, indent=1, sort_keys=True)
            fh.write("\n")
    else:
        raise ValidationError(f"unknown snapshot format {fmt!r}")
