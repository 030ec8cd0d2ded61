"""Eigenpairs of L_nu, instability detection, nu-continuation and vortex search."""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize

from .biot_savart import attach_velocity
from .config import DEFAULT_TOL, Tolerances
from .errors import BranchLossError, NumericalError, ValidationError
from .linearized_operator import OperatorMatrix, assemble_L
from .radial_core import RadialGrid, RadialProfile, Vortex, build_grid, integrate, make_vortex

__all__ = ["EigenPair", "ContinuationPath", "VortexFamily", "SearchResult", "FAMILIES",
           "register_family", "full_spectrum", "unstable_modes", "persistence",
           "continue_in_nu", "vortex_search", "spectrum_report", "write_spectrum_json",
           "write_path_csv", "dlambda_dnu"]

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class EigenPair:
    """Eigenpair of L_nu with unit-norm eigenfunction and fixed phase."""

    lam: complex
    W: RadialProfile = field(repr=False)
    residual: float
    persistent: bool | None = None
    delta: float | None = None       # |lambda change| under grid doubling

    @property
    def grid(self) -> RadialGrid:
        return self.W.grid


def _gram_norm(grid: RadialGrid, v: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(grid.gram[:, None] * np.abs(v.reshape(grid.N, -1)) ** 2, axis=0))


def _canonical(grid: RadialGrid, v: np.ndarray) -> np.ndarray:
    v = v / _gram_norm(grid, v)[0]
    k = int(np.argmax(np.abs(v)))
    return v * (abs(v[k]) / v[k])


def _residual(A: np.ndarray, grid: RadialGrid, lam: complex, v: np.ndarray) -> float:
    r = A @ v - lam * v
    return float(_gram_norm(grid, r)[0] / _gram_norm(grid, v)[0])


def _order(vals: np.ndarray) -> np.ndarray:
    # descending real part, then descending imaginary part (deterministic ties)
    return np.lexsort((-vals.imag, -vals.real))


def _refine(A: np.ndarray, lam: complex, v: np.ndarray, grid: RadialGrid) -> tuple[complex, np.ndarray]:
    """One inverse-iteration pass at the computed eigenvalue."""
    N = A.shape[0]
    shift = lam + 1e-12 * max(1.0, abs(lam))
    try:
        x = sla.solve(A - shift * np.eye(N), v, check_finite=False)
    except (sla.LinAlgError, ValueError):
        return lam, v
    x = x / _gram_norm(grid, x)[0]
    g = grid.gram
    rq = np.sum(g * x.conj() * (A @ x)) / np.sum(g * np.abs(x) ** 2)
    if _residual(A, grid, rq, x) < _residual(A, grid, lam, v):
        return complex(rq), x
    return lam, v


def full_spectrum(M: OperatorMatrix, refine: str = "auto",
                  tol: Tolerances = DEFAULT_TOL) -> list[EigenPair]:
    """All eigenpairs of ``M``, sorted by descending Re lambda.

    ``refine="auto"`` applies one inverse-iteration pass to pairs whose
    residual exceeds a tenth of the tolerance; ``"all"`` refines every pair.
    """
    A = np.asarray(M.matrix)
    try:
        vals, vecs = sla.eig(A, check_finite=True)
    except (sla.LinAlgError, ValueError) as exc:
        raise NumericalError(f"eigensolver failed (condition {np.linalg.cond(A):.2e}): {exc}")
    grid = M.grid
    out = []
    for k in _order(vals):
        lam, v = complex(vals[k]), vecs[:, k]
        res = _residual(A, grid, lam, v)
        if refine == "all" or (refine == "auto" and res > 0.1 * tol.eigen):
            lam, v = _refine(A, lam, v, grid)
        v = _canonical(grid, v)
        out.append(EigenPair(lam, RadialProfile(grid, v), _residual(A, grid, lam, v)))
    return out


def persistence(M: OperatorMatrix, lams: Sequence[complex]) -> np.ndarray:
    """|lambda - nearest eigenvalue of the operator rebuilt on the doubled grid|."""
    M2 = M.rebuild(M.grid.doubled())
    v2 = sla.eigvals(np.asarray(M2.matrix))
    lams = np.asarray(lams, dtype=complex)
    if lams.size == 0:
        return np.zeros(0)
    return np.abs(lams[:, None] - v2[None, :]).min(axis=1)


def unstable_modes(M: OperatorMatrix, w: float, tol: Tolerances = DEFAULT_TOL,
                   check_doubling: bool = True,
                   spectrum: list[EigenPair] | None = None) -> list[EigenPair]:
    """Persistent eigenpairs with Re lambda > w.

    Each candidate is re-derived on the doubled grid; candidates whose
    eigenvalue moves by more than ``tol.doubling``, whose doubled-grid
    partner fails the residual check, or whose partner is not itself above
    ``w`` are logged as spurious and dropped.
    """
    if not w > 0:
        raise ValidationError("instability threshold w must be positive")
    spec = full_spectrum(M, tol=tol) if spectrum is None else spectrum
    cand = [p for p in spec if p.lam.real > w and p.residual < tol.eigen]
    if not cand:
        return []
    if not check_doubling or M.builder is None:
        if M.builder is None:
            log.info("no rebuild recipe: doubling check skipped for %d modes", len(cand))
        return cand
    M2 = M.rebuild(M.grid.doubled())
    A2 = np.asarray(M2.matrix)
    vals2, vecs2 = sla.eig(A2)
    kept = []
    for p in cand:
        k = int(np.argmin(np.abs(vals2 - p.lam)))
        d = float(abs(vals2[k] - p.lam))
        res2 = _residual(A2, M2.grid, vals2[k], vecs2[:, k])
        if d < tol.doubling and res2 < tol.eigen and vals2[k].real > w:
            kept.append(EigenPair(p.lam, p.W, p.residual, True, d))
        else:
            log.info("spurious mode %.6g%+.6gj filtered (|dlambda|=%.2e, residual %.2e)",
                     p.lam.real, p.lam.imag, d, res2)
    return kept


# continuation ----------------------------------------------------------------

def _eig_lr(A: np.ndarray):
    vals, vl, vr = sla.eig(A, left=True, right=True)
    return vals, vl, vr


def _slope(dA: np.ndarray, yl: np.ndarray, xr: np.ndarray) -> complex:
    return complex(yl.conj() @ (dA @ xr) / (yl.conj() @ xr))


def dlambda_dnu(alpha: float, beta: float, vortex: Vortex, n: int, grid: RadialGrid,
                nu: float, lam: complex, parts=None, shift_sign: int = 1) -> complex:
    """First-order perturbation estimate of d lambda / d nu at (nu, lambda)."""
    M = assemble_L(alpha, beta, nu, vortex, n, grid, parts, shift_sign)
    dA = _nu_derivative(alpha, beta, vortex, n, grid, parts, shift_sign)
    vals, vl, vr = _eig_lr(np.asarray(M.matrix))
    k = int(np.argmin(np.abs(vals - lam)))
    return _slope(dA, vl[:, k], vr[:, k])


def _nu_derivative(alpha, beta, vortex, n, grid, parts, shift_sign) -> np.ndarray:
    # L_nu is affine in nu: L_nu = L_0 + nu * dL
    A1 = np.asarray(assemble_L(alpha, beta, 1.0, vortex, n, grid, parts, shift_sign).matrix)
    A0 = np.asarray(assemble_L(alpha, beta, 0.0, vortex, n, grid, parts, shift_sign).matrix)
    return A1 - A0


@dataclass
class ContinuationPath:
    """Tracked eigenvalue branch lambda(nu)."""

    entries: list = field(default_factory=list)      # (nu, EigenPair)
    steps: list = field(default_factory=list)        # per accepted step diagnostics
    reason: str = ""
    lam0: complex = 0j
    nu_star: float | None = None                     # largest nu with Re lambda > Re lambda_0 / 2

    @property
    def nus(self) -> np.ndarray:
        return np.array([nu for nu, _ in self.entries])

    @property
    def lams(self) -> np.ndarray:
        return np.array([p.lam for _, p in self.entries])


def continue_in_nu(vortex: Vortex, n: int, alpha: float, beta: float, nu_start: float,
                   nu_end: float, seed: EigenPair, parts=None, shift_sign: int = 1,
                   tol: Tolerances = DEFAULT_TOL, dnu0: float = 1e-3, dnu_max: float = 0.1,
                   dnu_min: float = 1e-7, stop_at_threshold: bool = True,
                   slope_floor: float = 1e-3) -> ContinuationPath:
    """Track the branch through ``seed`` from ``nu_start`` to ``nu_end``.

    Candidates are the eigenvalues nearest the first-order prediction and
    nearest the previous value.  The one with the largest eigenvector overlap
    is taken; that overlap must exceed ``tol.overlap``, no competitor may come
    within 0.1 of it, and the step must satisfy
    |dlambda| <= 10 dnu max(|dlambda/dnu|, slope_floor), with the slope taken
    from left/right eigenvectors at both ends.  Failed steps halve dnu; three
    clean steps double it (capped at ``dnu_max``).
    """
    if seed.residual >= tol.eigen:
        raise ValidationError(f"seed residual {seed.residual:.2e} above tolerance")
    if nu_end < nu_start:
        raise ValidationError("nu_end must be >= nu_start")
    grid = seed.grid
    vortex = attach_velocity(vortex, alpha) if parts is None or "transport" in parts else vortex
    dA = _nu_derivative(alpha, beta, vortex, n, grid, parts, shift_sign)
    g = grid.gram

    M = assemble_L(alpha, beta, nu_start, vortex, n, grid, parts, shift_sign)
    vals, vl, vr = _eig_lr(np.asarray(M.matrix))
    k = int(np.argmin(np.abs(vals - seed.lam)))
    slope = _slope(dA, vl[:, k], vr[:, k])

    path = ContinuationPath(lam0=seed.lam)
    path.entries.append((float(nu_start), seed))
    if seed.lam.real > 0:
        path.nu_star = float(nu_start)
    nu, lam, W = float(nu_start), seed.lam, seed.W.values
    dnu, clean = float(dnu0), 0
    if nu_end == nu_start:
        path.reason = "completed"
        return path
    while nu < nu_end - 1e-15:
        h = min(dnu, nu_end - nu)
        M = assemble_L(alpha, beta, nu + h, vortex, n, grid, parts, shift_sign)
        A = np.asarray(M.matrix)
        vals, vl, vr = _eig_lr(A)
        pred = lam + slope * h
        near = np.unique(np.concatenate([np.argsort(np.abs(vals - pred))[:6],
                                         np.argsort(np.abs(vals - lam))[:6]]))
        x = vr[:, near]
        ov = np.abs((g * W.conj()) @ x) / (_gram_norm(grid, x) * _gram_norm(grid, W)[0])
        rank = np.argsort(-ov, kind="stable")
        near, ov = near[rank], ov[rank]
        best = int(near[0])
        new_slope = _slope(dA, vl[:, best], vr[:, best])
        bound = 10.0 * h * max(abs(slope), abs(new_slope), slope_floor)
        jump = abs(vals[best] - lam)
        rivals = ov[1:] >= max(ov[0] - 0.1, tol.overlap)
        ok = ov[0] > tol.overlap and not rivals.any() and jump <= bound
        if not ok:
            clean = 0
            dnu = h / 2
            log.info("step nu=%.3g h=%.2e rejected (overlap %.3f, jump %.2e, bound %.2e)",
                     nu, h, ov[0], jump, bound)
            if dnu < dnu_min:
                path.reason = "branch-loss"
                return path
            continue
        v = _canonical(grid, vr[:, best])
        lam_new = complex(vals[best])
        res = _residual(A, grid, lam_new, v)
        if res >= tol.eigen:
            lam_new, v = _refine(A, lam_new, v, grid)
            v = _canonical(grid, v)
            res = _residual(A, grid, lam_new, v)
        pair = EigenPair(lam_new, RadialProfile(grid, v), res)
        nu += h
        path.entries.append((nu, pair))
        path.steps.append(dict(nu=nu, dnu=h, jump=jump, bound=bound, overlap=float(ov[0]),
                               slope=abs(new_slope)))
        lam, W, slope = lam_new, v, new_slope
        if lam.real > path.lam0.real / 2:
            path.nu_star = nu
        elif stop_at_threshold and path.lam0.real > 0:
            path.reason = "threshold"
            return path
        clean += 1
        if clean >= 3:
            dnu, clean = min(2 * dnu, dnu_max), 0
    path.reason = "completed"
    return path


# vortex families ---------------------------------------------------------------

@dataclass(frozen=True)
class VortexFamily:
    """Parametric zero-mean vortex family."""

    id: str
    bounds: tuple
    seeds: tuple
    generator: Callable[[np.ndarray, np.ndarray], np.ndarray] = field(repr=False)

    def make(self, params, grid: RadialGrid, tol: Tolerances = DEFAULT_TOL) -> Vortex:
        params = tuple(float(x) for x in params)
        if len(params) != len(self.bounds):
            raise ValidationError(f"family {self.id} takes {len(self.bounds)} parameters")
        vals = self.generator(np.asarray(params), grid)
        return make_vortex(grid, vals, dict(family=self.id, params=list(params)), tol)


def _gauss_ring(p, grid):
    b = p[0]
    x = b * grid.nodes ** 2
    return (1.0 - x) * np.exp(-x)


def _gauss_sum(p, grid):
    w1, w2, a = p
    R = grid.nodes
    raw = np.exp(-(R / w1) ** 2) + a * np.exp(-(R / w2) ** 2)
    wp = 0.5 * (w1 + w2)
    ref = (R / wp) ** 2 * np.exp(-(R / wp) ** 2)
    mean_raw = 0.5 * (w1 ** 2 + a * w2 ** 2)
    return raw - (mean_raw / (0.5 * wp ** 2)) * ref


_KNOTS = np.array([0.0, 0.75, 1.5, 2.25, 3.0])


def _spline_bump(p, grid):
    R = grid.nodes
    S = CubicSpline(_KNOTS, np.asarray(p, dtype=float), bc_type="natural")
    env = np.exp(-R ** 2)
    raw = S(R ** 2) * env
    mean_raw = float(grid.weights @ raw)
    return raw - (mean_raw / 0.5) * env


FAMILIES: dict[str, VortexFamily] = {}


def register_family(fam: VortexFamily) -> VortexFamily:
    FAMILIES[fam.id] = fam
    return fam


register_family(VortexFamily("gauss-ring", ((0.5, 4.0),), ((1.0,), (2.0,), (0.7,)), _gauss_ring))
register_family(VortexFamily("gauss-sum", ((0.4, 1.5), (0.4, 1.5), (-2.0, 2.0)),
                             ((0.8, 1.2, -0.8), (1.0, 0.6, -1.5), (0.6, 1.4, 0.5)), _gauss_sum))
register_family(VortexFamily("spline-bump", ((-1.0, 1.0),) * 5,
                             ((1.0, 0.2, -0.6, -0.2, 0.0), (1.0, -0.5, -0.5, 0.2, 0.0),
                              (0.5, 1.0, -1.0, 0.0, 0.0)), _spline_bump))


@dataclass
class SearchResult:
    family: str
    params: tuple
    objective: float                  # Re lambda_max on the working grid
    eigenpair: EigenPair | None
    status: str                       # "unstable" or "no instability found"
    history: list = field(default_factory=list)   # (params, objective) in evaluation order


def vortex_search(family: VortexFamily | str, n: int, alpha: float, budget: int,
                  grid: RadialGrid, w: float = 1e-3, threads: int = 1,
                  tol: Tolerances = DEFAULT_TOL, verify_top: int = 3) -> SearchResult:
    """Maximize Re lambda_max of L_0 over a vortex family.

    Nelder-Mead with box bounds is started from each deterministic seed, the
    budget being split evenly between starts.  The best candidates are then
    checked with :func:`unstable_modes` (grid doubling); a persistent mode is
    reported as ``"unstable"``, otherwise the least stable candidate is
    returned with status ``"no instability found"``.
    """
    fam = FAMILIES[family] if isinstance(family, str) else family
    if n < 2:
        raise ValidationError("instability search needs n >= 2")
    if budget < 1:
        raise ValidationError("budget must be >= 1")
    g0 = build_grid(0, grid.N, grid.R_max)
    gn = build_grid(n, grid.N, grid.R_max)
    cache: dict = {}
    order: list = []

    def objective(x) -> float:
        key = tuple(round(float(v), 12) for v in x)
        if key in cache:
            return cache[key]
        try:
            vtx = attach_velocity(fam.make(key, g0, tol), alpha, tol)
            M = assemble_L(alpha, 2.0, 0.0, vtx, n, gn)
            val = float(sla.eigvals(np.asarray(M.matrix)).real.max())
        except ValidationError:
            val = -math.inf
        cache[key] = val
        order.append(key)
        return val

    seeds = list(fam.seeds)
    if budget < len(seeds):
        seeds = seeds[:budget]
    per = max(1, budget // len(seeds))

    def run(x0):
        if per == 1:
            objective(x0)
            return
        minimize(lambda x: -objective(x), np.array(x0, dtype=float), method="Nelder-Mead",
                 bounds=fam.bounds, options=dict(maxfev=per, xatol=1e-4, fatol=1e-8))

    if threads > 1:
        # evaluations are pure; aggregation below is order independent
        with ThreadPoolExecutor(max_workers=threads) as ex:
            list(ex.map(run, seeds))
    else:
        for s in seeds:
            run(s)
    ranked = sorted(cache.items(), key=lambda kv: (-kv[1], kv[0]))
    history = [(k, cache[k]) for k in sorted(cache)]
    for key, val in ranked[:verify_top]:
        if not val > w:
            break
        vtx = attach_velocity(fam.make(key, g0, tol), alpha, tol)
        M = assemble_L(alpha, 2.0, 0.0, vtx, n, gn)
        modes = unstable_modes(M, w, tol)
        if modes:
            return SearchResult(fam.id, key, val, modes[0], "unstable", history)
    key, val = ranked[0]
    ep = None
    if math.isfinite(val):
        vtx = attach_velocity(fam.make(key, g0, tol), alpha, tol)
        ep = full_spectrum(assemble_L(alpha, 2.0, 0.0, vtx, n, gn), tol=tol)[0]
    return SearchResult(fam.id, key, val, ep, "no instability found", history)


# reports -----------------------------------------------------------------------

def spectrum_report(M: OperatorMatrix, pairs: list[EigenPair], deltas: np.ndarray | None,
                    tol: Tolerances = DEFAULT_TOL, extra: dict | None = None) -> dict:
    rows = []
    for i, p in enumerate(pairs):
        d = None if deltas is None else float(deltas[i])
        rows.append({"re": p.lam.real, "im": p.lam.imag, "residual": p.residual,
                     "persistent": None if d is None else bool(d < tol.doubling),
                     "delta": d})
    rep = {"n": M.n, "alpha": M.alpha, "beta": M.beta, "nu": M.nu, "N": M.grid.N,
           "R_max": M.grid.R_max, "shift_sign": M.shift_sign, "parts": sorted(M.parts),
           "eigenvalues": rows}
    if extra:
        rep.update(extra)
    return rep


def write_spectrum_json(report: dict, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
        fh.write("\n")


def write_path_csv(path_obj: ContinuationPath, path, header: str | None = None) -> None:
    lines = []
    if header:
        lines.append(f"# {header}")
    nu_star = None if path_obj.nu_star is None else float(path_obj.nu_star)
    lines.append(f"# reason={path_obj.reason} nu_star={nu_star!r}")
    lines.append("nu,re_lambda,im_lambda,residual")
    for nu, p in path_obj.entries:
        row = (float(nu), float(p.lam.real), float(p.lam.imag), float(p.residual))
        lines.append(",".join(repr(x) for x in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
