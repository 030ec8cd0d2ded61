"""Norm scalings between self-similar and physical variables, and regime algebra.

Under theta(t, x) = t^(alpha/beta - 1)/nu Theta(tau, x/t^(1/beta)), tau = log(t)/nu,

    ||Lambda^s theta(t)||_{L^q} = t^gamma / nu ||Lambda^s Theta(tau)||_{L^q},
    gamma = (alpha - s)/beta + 2/(beta q) - 1,

so L^p_t L^q norms are finite near t = 0 exactly when p gamma > -1, that is
beta/p + 2/q > s + beta - alpha.  Verdicts are computed in exact rational
arithmetic whenever the inputs are rational; p = inf is handled symbolically.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Callable

import numpy as np
from scipy import integrate as sint
from scipy.special import roots_legendre

from .errors import ValidationError

__all__ = ["INF", "RegimeQuery", "RegimeReport", "regime_check", "classify",
           "solution_exponent", "force_exponent", "finite_condition", "norm_from_trajectory",
           "force_norm_from_trajectory", "energy_identity", "EnergyBalance", "BAND"]

INF = math.inf
BAND = 1e-12            # float comparisons closer than this are "critical-band"


def _num(x):
    """Keep rationals exact; floats stay floats; inf stays symbolic."""
    if x == INF:
        return INF
    if isinstance(x, Rational):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    return float(x)


def _inv(p):
    return 0 if p == INF else 1 / p if isinstance(p, float) else Fraction(1) / p


def _exact(*xs) -> bool:
    return all(x == INF or isinstance(x, Fraction) for x in xs)


@dataclass(frozen=True)
class RegimeQuery:
    alpha: object
    beta: object
    s: object = 0
    r: object = 0
    p: object = INF
    q: object = 2
    a: object = 1
    b: object = 2

    def __post_init__(self):
        for k in ("alpha", "beta", "s", "r", "p", "q", "a", "b"):
            object.__setattr__(self, k, _num(getattr(self, k)))
        _check_ab(self.alpha, self.beta)
        if self.s < -1 or self.r < -1:
            raise ValidationError("exponents s, r must be >= -1")
        for k in ("p", "q", "a", "b"):
            v = getattr(self, k)
            if not (v == INF or v >= 1):
                raise ValidationError(f"integrability {k}={v} outside [1, inf]")


def _check_ab(alpha, beta) -> None:
    if not 0 <= alpha <= 1:
        raise ValidationError(f"alpha={alpha} outside [0, 1]")
    if not 0 < beta < 3 + alpha:
        raise ValidationError(f"beta={beta} outside (0, 3 + alpha): the nonuniqueness "
                              f"range 0 < beta < 3 + alpha")


def _verdict(lhs, rhs, exact: bool) -> str:
    if exact:
        return "strict" if lhs > rhs else "critical" if lhs == rhs else "outside"
    d = float(lhs) - float(rhs)
    if abs(d) <= BAND:
        return "critical-band"
    return "strict" if d > 0 else "outside"


@dataclass(frozen=True)
class RegimeReport:
    query: RegimeQuery
    solution: str
    force: str
    solution_sides: tuple
    force_sides: tuple
    q_crit: object = None


def regime_check(qr: RegimeQuery) -> RegimeReport:
    """Solution regime beta/p + 2/q vs s + beta - alpha, force regime
    beta/a + 2/b vs r + 2 beta - alpha; equality is reported as critical."""
    al, be = qr.alpha, qr.beta
    ex = _exact(al, be, qr.s, qr.p, qr.q)
    lhs = be * _inv(qr.p) + 2 * _inv(qr.q)
    rhs = qr.s + be - al
    exf = _exact(al, be, qr.r, qr.a, qr.b)
    flhs = be * _inv(qr.a) + 2 * _inv(qr.b)
    frhs = qr.r + 2 * be - al
    qc = None
    if qr.p == INF and qr.s <= al - be + 2 and rhs > 0:
        qc = 2 / rhs if not ex else Fraction(2) / rhs
    return RegimeReport(qr, _verdict(lhs, rhs, ex), _verdict(flhs, frhs, exf),
                        (lhs, rhs), (flhs, frhs), qc)


def solution_exponent(alpha, beta, s, q):
    """gamma = (alpha - s)/beta + 2/(beta q) - 1."""
    alpha, beta, s, q = map(_num, (alpha, beta, s, q))
    return (alpha - s) / beta + 2 * _inv(q) / beta - 1


def force_exponent(alpha, beta, r, b):
    """(alpha - r)/beta + 2/(beta b) - 2."""
    alpha, beta, r, b = map(_num, (alpha, beta, r, b))
    return (alpha - r) / beta + 2 * _inv(b) / beta - 2


def finite_condition(alpha, beta, s, p, q) -> bool:
    """Integral finiteness p gamma > -1 (for p = inf: gamma > 0, the strict regime)."""
    g = solution_exponent(alpha, beta, s, q)
    p = _num(p)
    if p == INF:
        return g > 0
    return p * g > -1


@dataclass(frozen=True)
class ClassRow:
    name: str
    threshold: str
    value: object
    holds: bool
    citation: str


def classify(alpha, beta) -> list[ClassRow]:
    """Named uniqueness classes and whether the constructed solutions reach them.

    Energy rows hold when the strict inequality on beta holds.  L^p_t L^q rows
    carry the threshold T of beta/p + 2/q > T (the nonuniqueness side); they
    hold when T > 0, so the complementary uniqueness class is nontrivial and
    the constructed pair sits just outside it.
    """
    al, be = _num(alpha), _num(beta)
    _check_ab(al, be)
    half = Fraction(1, 2) if isinstance(al, Fraction) else 0.5
    rows = [
        ClassRow("Hs-energy", "s + beta - alpha < 1 for some s >= -1 (beta < 2 + alpha)",
                 2 + al, bool(be < 2 + al), "Miura; Ju"),
        ClassRow("Leray-Hopf/Marchand", "beta < 2 + alpha/2", 2 + al * half,
                 bool(be < 2 + al * half), "Leray-Hopf; Marchand"),
        ClassRow("Resnick", "beta < 1 + alpha", 1 + al, bool(be < 1 + al), "Resnick"),
    ]
    lps = be - al - 1
    rows.append(ClassRow("LPS (s=-1)", "beta/p + 2/q > beta - alpha - 1", lps, bool(lps > 0),
                         "Ladyzhenskaya-Prodi-Serrin"))
    cw = be - al
    rows.append(ClassRow("Constantin-Wu (s=0)", "beta/p + 2/q > beta - alpha", cw,
                         bool(cw > 0), "Constantin-Wu"))
    dc = 1 + be - al
    rows.append(ClassRow("Dong-Chen-Zhao-Liu (s=1)", "beta/p + 2/q > 1 + beta - alpha", dc,
                         bool(dc > 0), "Dong-Chen-Zhao-Liu"))
    return rows


# trajectories -------------------------------------------------------------------

@dataclass
class NormResult:
    value: float
    finite: bool
    exponent: float
    error: float = 0.0
    note: str = ""


def _lp_time(traj: Callable, nu: float, gamma: float, p, T: float, pref: float) -> NormResult:
    p = _num(p)
    if p == INF:
        if gamma < 0:
            return NormResult(INF, False, float(gamma), note="t^gamma unbounded as t -> 0")
        taus = np.log(np.geomspace(1e-12 * T, T, 2001)) / nu
        vals = np.exp(gamma * nu * taus) * np.asarray(traj(taus), dtype=float)
        return NormResult(pref * float(vals.max()), True, float(gamma))
    e = float(p * gamma + 1)
    if e <= 0:
        return NormResult(INF, False, float(gamma),
                          note=f"p*gamma + 1 = {e:.3g} <= 0: integral diverges at t = 0")
    p = float(p)
    # t = exp(nu tau), dt = nu t d tau
    f = lambda tau: nu * math.exp(e * nu * tau) * float(np.asarray(traj(tau))) ** p
    val, err = sint.quad(f, -np.inf, math.log(T) / nu, limit=400, epsabs=0.0, epsrel=1e-11)
    return NormResult(pref * val ** (1.0 / p), True, float(gamma), err)


def norm_from_trajectory(traj: Callable, nu: float, alpha: float, beta: float, s: float,
                         p, q, T: float = 1.0) -> NormResult:
    """||Lambda^s theta||_{L^p(0,T; L^q)} from tau -> ||Lambda^s Theta(tau)||_{L^q}."""
    g = solution_exponent(alpha, beta, s, q)
    return _lp_time(traj, nu, float(g), p, T, 1.0 / nu)


def force_norm_from_trajectory(traj: Callable, nu: float, alpha: float, beta: float, r: float,
                               a, b, T: float = 1.0) -> NormResult:
    """||Lambda^r f||_{L^a(0,T; L^b)} from tau -> ||Lambda^r F(tau)||_{L^b}."""
    g = force_exponent(alpha, beta, r, b)
    return _lp_time(traj, nu, float(g), a, T, 1.0 / nu ** 2)


# energy identity -------------------------------------------------------------------

@dataclass
class EnergyBalance:
    s: float
    t0: float
    t1: float
    lhs: float
    rhs: float
    terms: dict = field(default_factory=dict)

    @property
    def mismatch(self) -> float:
        return abs(self.lhs - self.rhs) / max(abs(self.lhs), abs(self.rhs))


def energy_identity(traj, alpha: float, beta: float, nu: float, s: float, t0: float,
                    t1: float, nodes: int = 16) -> EnergyBalance:
    """Both sides of

        1/2 ||theta(t1)||^2_{H^s} + int_t0^t1 ||theta||^2_{H^(s+beta/2)} dt
            = 1/2 ||theta(t0)||^2_{H^s} + int_t0^t1 <f, theta>_{H^s} dt

    from a trajectory exposing E, D, P (see
    :class:`selfsim_sqg.nonuniqueness.EnergyTrajectory`).  Time integrals use
    composite Gauss-Legendre in log t with panels short enough to resolve
    the oscillation frequency of the modal exponents.
    """
    if not 0 < t0 < t1:
        raise ValidationError("need 0 < t0 < t1")
    gam = 2 * (alpha - s) / beta - 2 + 2 / beta
    A = lambda t: t ** gam / nu ** 2 * float(traj.E(math.log(t) / nu)[0])
    u0, u1 = math.log(t0), math.log(t1)
    omega = getattr(traj, "max_frequency", 0.0) / nu
    panels = max(8, int(math.ceil((u1 - u0) * (1 + omega) / math.pi)) * 2)
    x, w = roots_legendre(nodes)
    edges = np.linspace(u0, u1, panels + 1)
    mid, half = 0.5 * (edges[1:] + edges[:-1]), 0.5 * np.diff(edges)
    u = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wu = (half[:, None] * w[None, :]).ravel()
    t = np.exp(u)
    tau = u / nu
    # integrand in u: (t^(gam - 1) X) * t
    tp = t ** gam
    diss = float(wu @ (tp * traj.D(tau))) / nu ** 2
    work = float(wu @ (tp * traj.P(tau))) / nu ** 3
    lhs = 0.5 * A(t1) + diss
    rhs = 0.5 * A(t0) + work
    return EnergyBalance(float(s), t0, t1, lhs, rhs,
                         dict(energy_t1=0.5 * A(t1), energy_t0=0.5 * A(t0), dissipation=diss,
                              work=work, panels=panels))
