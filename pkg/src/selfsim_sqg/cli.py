"""Command-line front end: ``selfsim-sqg {spectrum,search,continue,construct,verify,regimes}``.

Configuration is a UTF-8 ``key = value`` file with sections (see
``DEFAULTS``).  Precedence, lowest to highest: built-in defaults, the
``--config`` file, ``--set section.key=value`` options, dedicated flags such
as ``--flip-shift-sign``.  Every output embeds the hash of the resolved
configuration; ``verify`` refuses a system built under a different hash.

Exit codes: 0 success, 1 other package error, 2 invalid input, 3 numerical
failure, 4 missing upstream artifact.  Errors are also printed to stderr as
one JSON object.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import math
import os
import platform
import sys
import warnings
from pathlib import Path

for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    # fixed BLAS reduction order keeps reports byte-identical
    os.environ.setdefault(_var, "1")

import numpy as np  # noqa: E402

from . import __version__  # noqa: E402
from .config import Tolerances  # noqa: E402
from .errors import (AccuracyWarning, MissingPrerequisiteError, NumericalError,  # noqa: E402
                     SelfSimError, ValidationError)

COMMANDS = ("spectrum", "search", "continue", "construct", "verify", "regimes")

DEFAULTS: dict = {
    "problem": {"alpha": 0.0, "beta": 2.0, "n": 2, "nu": 1e-3, "shift_sign": 1},
    "grid": {"N": 256, "R_max": 10.0},
    "tolerances": Tolerances().as_dict(),
    "vortex": {"family": "gauss-ring", "params": ""},
    "search": {"budget": 3, "w": 1e-3},
    "continue": {"nu_start": 0.0, "nu_end": 5e-3, "dnu": 1e-3, "dnu_max": 0.1},
    "construct": {"amplitude": 1.0},
    "verify": {"taus": "-20,-5,-1,0", "residual_tol": 1e-6, "t_min": 1e-3, "t_max": 1e-1,
               "t_points": 41, "t0": 1e-3, "t1": 1.0},
    "regimes": {"s": "0", "r": "0", "p": "inf", "q": "2", "a": "1", "b": "2", "sweep": 21},
}


# configuration --------------------------------------------------------------------

def _coerce(template, text: str):
    if isinstance(template, bool):
        return text.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(template, int):
        return int(text)
    if isinstance(template, float):
        return float(text)
    return text.strip()


def load_config(path: str | None, overrides: list[str]) -> dict:
    cfg = {sec: dict(vals) for sec, vals in DEFAULTS.items()}

    def put(sec, key, val):
        if sec not in cfg or key not in cfg[sec]:
            raise ValidationError(f"unknown configuration key {sec}.{key}")
        try:
            cfg[sec][key] = _coerce(DEFAULTS[sec][key], val)
        except ValueError as exc:
            raise ValidationError(f"{sec}.{key}: cannot parse {val!r} ({exc})")

    if path:
        if not Path(path).exists():
            raise MissingPrerequisiteError(f"config file {path} not found")
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp.read(path, encoding="utf-8")
        for sec in cp.sections():
            for key, val in cp.items(sec):
                put(sec, key, val)
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ValidationError(f"--set expects section.key=value, got {item!r}")
        lhs, val = item.split("=", 1)
        sec, key = lhs.strip().split(".", 1)
        put(sec, key, val)
    return cfg


def validate(cfg: dict) -> None:
    """Check every field against module preconditions before any computation."""
    p = cfg["problem"]
    al, be = p["alpha"], p["beta"]
    if not 0.0 <= al <= 1.0:
        raise ValidationError(f"alpha={al} outside [0, 1]")
    if not 0.0 < be < min(4.0, 3.0 + al):
        raise ValidationError(f"beta={be} outside the nonuniqueness range 0 < beta < 3 + alpha "
                              f"(and beta < 4)")
    if p["n"] < 1:
        raise ValidationError("harmonic n must be >= 1")
    if p["nu"] < 0:
        raise ValidationError("nu must be nonnegative")
    if p["shift_sign"] not in (1, -1):
        raise ValidationError("shift_sign must be 1 or -1")
    g = cfg["grid"]
    if g["N"] < 16:
        raise ValidationError("grid.N must be at least 16")
    if not g["R_max"] > 0:
        raise ValidationError("grid.R_max must be positive")
    for k, v in cfg["tolerances"].items():
        if not v > 0:
            raise ValidationError(f"tolerance {k} must be positive")
    from .spectra import FAMILIES
    fam = cfg["vortex"]["family"]
    if fam not in FAMILIES:
        raise ValidationError(f"unknown vortex family {fam!r}; known: {sorted(FAMILIES)}")
    if cfg["vortex"]["params"]:
        vals = _floats(cfg["vortex"]["params"])
        bounds = FAMILIES[fam].bounds
        if len(vals) != len(bounds):
            raise ValidationError(f"family {fam} takes {len(bounds)} parameters")
    if cfg["search"]["budget"] < 1:
        raise ValidationError("search.budget must be >= 1")
    c = cfg["continue"]
    if not 0 <= c["nu_start"] <= c["nu_end"]:
        raise ValidationError("continue needs 0 <= nu_start <= nu_end")
    if not 0 < c["dnu"] <= c["dnu_max"]:
        raise ValidationError("continue needs 0 < dnu <= dnu_max")
    v = cfg["verify"]
    _floats(v["taus"])
    if not 0 < v["t_min"] < v["t_max"] <= 1:
        raise ValidationError("verify needs 0 < t_min < t_max <= 1")
    if not 0 < v["t0"] < v["t1"]:
        raise ValidationError("verify needs 0 < t0 < t1")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ValidationError(f"expected a comma-separated list of numbers, got {text!r}")


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# helpers ---------------------------------------------------------------------------

class Run:
    def __init__(self, cfg: dict, out: Path, figures: bool, threads: int):
        self.cfg = cfg
        self.out = out
        self.figures = figures
        self.threads = threads
        self.hash = config_hash(cfg)
        self.tol = Tolerances(**cfg["tolerances"])
        self.written: list[Path] = []
        out.mkdir(parents=True, exist_ok=True)

    @property
    def p(self) -> dict:
        return self.cfg["problem"]

    def path(self, name: str) -> Path:
        q = self.out / name
        self.written.append(q)
        return q

    def write_json(self, name: str, obj: dict) -> Path:
        obj = dict(obj, config_hash=self.hash)
        q = self.path(name)
        with open(q, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(_jsonable(obj), fh, indent=1, sort_keys=True, allow_nan=True)
            fh.write("\n")
        return q

    def write_csv(self, name: str, header: str, rows) -> Path:
        q = self.path(name)
        lines = [f"# config_hash={self.hash}", header]
        lines += [",".join(_fmt(x) for x in r) for r in rows]
        with open(q, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
        return q

    def read_json(self, name: str) -> dict:
        q = self.out / name
        if not q.exists():
            raise MissingPrerequisiteError(f"{q} not found; run the upstream command first")
        return json.loads(q.read_text(encoding="utf-8"))

    def grid(self, n: int):
        from .radial_core import build_grid
        return build_grid(n, self.cfg["grid"]["N"], self.cfg["grid"]["R_max"])

    def vortex(self, params=None):
        from .biot_savart import attach_velocity
        from .spectra import FAMILIES
        fam = FAMILIES[self.cfg["vortex"]["family"]]
        if params is None:
            params = _floats(self.cfg["vortex"]["params"]) or fam.seeds[0]
        return attach_velocity(fam.make(params, self.grid(0), self.tol), self.p["alpha"],
                               self.tol)


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    if x is None:
        return ""
    return str(x)


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, np.generic):
        return _jsonable(o.item())
    if isinstance(o, float) and not math.isfinite(o):
        return repr(o)
    return o


def _pair_json(ep) -> dict:
    return {"lambda": [ep.lam.real, ep.lam.imag], "residual": ep.residual,
            "persistent": ep.persistent, "delta": ep.delta}


# commands ---------------------------------------------------------------------------

def cmd_spectrum(run: Run) -> int:
    from .linearized_operator import assemble_L
    from .spectra import full_spectrum, persistence, spectrum_report, write_spectrum_json
    p = run.p
    vtx = run.vortex()
    M = assemble_L(p["alpha"], p["beta"], p["nu"], vtx, p["n"], run.grid(p["n"]),
                   shift_sign=p["shift_sign"])
    pairs = full_spectrum(M, tol=run.tol)
    deltas = persistence(M, [q.lam for q in pairs])
    rep = spectrum_report(M, pairs, deltas, run.tol,
                          dict(config_hash=run.hash, vortex=dict(vtx.params),
                               contraction_bound=M.contraction_bound()))
    write_spectrum_json(_jsonable(rep), run.path("spectrum.json"))
    run.write_csv("spectrum.csv", "re,im,residual,persistent,delta",
                  [(e["re"], e["im"], e["residual"], e["persistent"], e["delta"])
                   for e in rep["eigenvalues"]])
    if run.figures:
        from .plotting import spectrum_figure
        spectrum_figure(rep, run.path("spectrum.png"))
    return 0


def cmd_search(run: Run) -> int:
    from .radial_core import write_profile_csv
    from .spectra import vortex_search
    p, s = run.p, run.cfg["search"]
    res = vortex_search(run.cfg["vortex"]["family"], p["n"], p["alpha"], s["budget"],
                        run.grid(0), w=s["w"], threads=run.threads, tol=run.tol)
    obj = {"family": res.family, "params": list(res.params), "objective": res.objective,
           "status": res.status, "n": p["n"], "alpha": p["alpha"],
           "history": [{"params": list(k), "objective": v} for k, v in res.history]}
    if res.eigenpair is not None:
        obj["eigenpair"] = _pair_json(res.eigenpair)
    vtx = run.vortex(res.params)
    write_profile_csv(vtx.profile, run.path("vortex.csv"), f"config_hash={run.hash}")
    run.write_json("search.json", obj)
    if run.figures:
        from .plotting import search_figure
        search_figure(res.history, run.path("search.png"))
    print(f"search: {res.status} (Re lambda_max = {res.objective:.6g})")
    return 0


def _seed(run: Run, nu: float):
    """Unstable eigenpair at ``nu`` on the branch reported by ``search``."""
    from .linearized_operator import assemble_L
    from .spectra import unstable_modes
    found = run.read_json("search.json")
    if found.get("config_hash") != run.hash:
        raise ValidationError("search.json was produced under a different configuration")
    if found["status"] != "unstable":
        raise NumericalError("no instability found by the search; nothing to continue")
    p = run.p
    vtx = run.vortex(found["params"])
    M = assemble_L(p["alpha"], p["beta"], nu, vtx, p["n"], run.grid(p["n"]),
                   shift_sign=p["shift_sign"])
    modes = unstable_modes(M, run.cfg["search"]["w"] if nu == 0 else 1e-12, run.tol)
    if not modes:
        raise NumericalError(f"no persistent unstable mode at nu={nu}")
    target = complex(*found["eigenpair"]["lambda"])
    best = min(modes, key=lambda e: abs(e.lam - target))
    return vtx, best, found


def cmd_continue(run: Run) -> int:
    from .spectra import continue_in_nu
    p, c = run.p, run.cfg["continue"]
    vtx, seed, _ = _seed(run, c["nu_start"])
    path = continue_in_nu(vtx, p["n"], p["alpha"], p["beta"], c["nu_start"], c["nu_end"], seed,
                          shift_sign=p["shift_sign"], tol=run.tol, dnu0=c["dnu"],
                          dnu_max=c["dnu_max"])
    run.write_csv("continuation.csv", "nu,re_lambda,im_lambda,residual",
                  [(nu, e.lam.real, e.lam.imag, e.residual) for nu, e in path.entries])
    run.write_json("continuation.json", {
        "reason": path.reason, "nu_star": path.nu_star, "lambda0": path.lam0,
        "threshold": 0.5 * path.lam0.real, "steps": path.steps})
    if run.figures:
        from .plotting import continuation_figure
        continuation_figure(path.nus, path.lams, path.lam0, run.path("continuation.png"))
    print(f"continuation: {path.reason}, last nu above threshold = {path.nu_star}")
    return 0


def cmd_construct(run: Run) -> int:
    from .nonuniqueness import golovkin_force, save_system
    from .radial_core import write_profile_csv
    from .spectra import continue_in_nu, unstable_modes
    from .linearized_operator import assemble_L
    p = run.p
    if not p["nu"] > 0:
        raise ValidationError("construct needs nu > 0")
    vtx, seed, _ = _seed(run, 0.0)
    # follow the searched branch up to the construction viscosity
    path = continue_in_nu(vtx, p["n"], p["alpha"], p["beta"], 0.0, p["nu"], seed,
                          shift_sign=p["shift_sign"], tol=run.tol,
                          dnu0=min(run.cfg["continue"]["dnu"], p["nu"]),
                          stop_at_threshold=False)
    if path.reason != "completed":
        raise NumericalError(f"branch lost before nu={p['nu']} ({path.reason})")
    ep = path.entries[-1][1]
    if not ep.lam.real > 0:
        raise NumericalError(f"branch is stable at nu={p['nu']} (Re lambda={ep.lam.real:.3e})")
    M = assemble_L(p["alpha"], p["beta"], p["nu"], vtx, p["n"], run.grid(p["n"]),
                   shift_sign=p["shift_sign"])
    check = [e for e in unstable_modes(M, 0.5 * ep.lam.real, run.tol)
             if abs(e.lam - ep.lam) < run.tol.doubling]
    if not check:
        raise NumericalError("continued eigenpair fails the grid-doubling check")
    ep = check[0]
    sysm = golovkin_force(p["alpha"], p["beta"], p["nu"], vtx, ep, p["n"],
                          run.cfg["construct"]["amplitude"], tol=run.tol)
    write_profile_csv(ep.W, run.path("eigenpair_W.csv"), f"config_hash={run.hash}")
    run.write_json("eigenpair.json", dict(_pair_json(ep), nu=p["nu"], n=p["n"],
                                          file="eigenpair_W.csv"))
    man = save_system(sysm, run.out / "system", run.hash)
    run.written.append(man)
    run.written.extend(sorted((run.out / "system").glob("*.csv")))
    print(f"construct: lambda = {ep.lam.real:.6g}{ep.lam.imag:+.6g}i at nu={p['nu']}")
    return 0


def _energy_rows(sysm, cfg) -> list:
    from .nonuniqueness import energy_trajectory
    from .scaling_regimes import energy_identity
    al, be, nu = sysm.alpha, sysm.beta, sysm.nu
    rows = []
    for s, ok in (((al - 2) / 2, be < 2 + al / 2), (0.0, be < 1 + al)):
        if not ok:
            rows.append({"s": s, "applicable": False})
            continue
        for eps in (1.0, -1.0):
            bal = energy_identity(energy_trajectory(sysm, s, eps), al, be, nu, s,
                                  cfg["t0"], cfg["t1"])
            rows.append({"s": s, "branch": eps, "applicable": True, "lhs": bal.lhs,
                         "rhs": bal.rhs, "mismatch": bal.mismatch, "terms": bal.terms})
    return rows


def cmd_verify(run: Run) -> int:
    from .nonuniqueness import (envelope_check, fit_slope, load_system, predicted_slope,
                                separation_curve, verify_residual)
    man = run.out / "system" / "manifest.json"
    if not man.exists():
        raise MissingPrerequisiteError(f"{man} not found; run construct first")
    sysm = load_system(man)
    if sysm.meta.get("config_hash") != run.hash:
        raise ValidationError("system manifest was built under a different configuration hash")
    v = run.cfg["verify"]
    taus = _floats(v["taus"])
    F = sysm.force                      # one loaded object shared by both branches
    reps = [verify_residual(sysm, taus, eps, force=F, tol=run.tol) for eps in (1.0, -1.0)]
    rows = [(r.eps, tau, m, val) for r in reps for tau, row in r.per_harmonic.items()
            for m, val in row.items()]
    worst = max(r.max for r in reps)
    t_grid = np.geomspace(v["t_min"], v["t_max"], v["t_points"])
    curve = separation_curve(sysm, t_grid)
    slope = fit_slope(curve, (v["t_min"], v["t_max"]))
    pred = predicted_slope(sysm.alpha, sysm.beta, sysm.nu, sysm.lam)
    env_t = np.geomspace(v["t_min"], 1.0, 13)
    env = {f"s={s},q={q}": envelope_check(sysm, env_t, s, q) for s, q in ((0.0, 2), (-1.0, 2))}
    energy = _energy_rows(sysm, v)
    ok = worst < v["residual_tol"]
    run.write_csv("residuals.csv", "branch,tau,m,relative_residual", rows)
    run.write_csv("separation.csv", "t,log_norm", [tuple(r) for r in curve])
    run.write_json("verify.json", {
        "residual_max": worst, "residual_tol": v["residual_tol"], "residual_ok": ok,
        "lambda": sysm.lam, "slope_fit": slope, "slope_predicted": pred,
        "slope_rel_error": abs(slope - pred) / abs(pred), "envelope": env,
        "energy_identity": energy})
    if run.figures:
        from .plotting import residual_figure, separation_figure
        residual_figure(rows, run.path("residuals.png"))
        separation_figure(curve, slope, pred, run.path("separation.png"))
    if not ok:
        raise NumericalError(f"Golovkin residual {worst:.3e} exceeds {v['residual_tol']:.1e}")
    print(f"verify: residual {worst:.3e}, slope {slope:.6g} (predicted {pred:.6g})")
    return 0


def cmd_regimes(run: Run) -> int:
    from fractions import Fraction
    from .scaling_regimes import INF, RegimeQuery, classify, regime_check
    al, be = run.p["alpha"], run.p["beta"]
    # configured floats become exact rationals via their decimal text
    ex = lambda x: Fraction(repr(x)) if isinstance(x, float) else x
    r = run.cfg["regimes"]
    par = {k: (INF if r[k].strip() in ("inf", "infinity") else Fraction(r[k].strip()))
           for k in ("s", "r", "p", "q", "a", "b")}
    rows = classify(ex(al), ex(be))
    rep = regime_check(RegimeQuery(ex(al), ex(be), **par))
    run.write_csv("regimes.csv", "class,threshold,holds,citation",
                  [(c.name, c.threshold.replace(",", ";"), c.holds, c.citation) for c in rows])
    run.write_json("regimes.json", {
        "alpha": al, "beta": be,
        "classes": [{"class": c.name, "threshold": c.threshold, "value": str(c.value),
                     "holds": c.holds, "citation": c.citation} for c in rows],
        "query": {k: str(v) for k, v in par.items()},
        "solution_regime": rep.solution, "force_regime": rep.force,
        "solution_sides": [str(x) for x in rep.solution_sides],
        "force_sides": [str(x) for x in rep.force_sides],
        "q_crit": None if rep.q_crit is None else str(rep.q_crit)})
    k = r["sweep"]
    sweep = []
    for a in np.linspace(0.0, 1.0, k):
        for b in np.linspace(0.0, 3.0 + a, k + 2)[1:-1]:
            sweep.append([a, b] + [int(c.holds) for c in classify(float(a), float(b))])
    names = [c.name for c in rows]
    run.write_csv("regimes_sweep.csv", "alpha,beta," + ",".join(
        n.replace(",", ";") for n in names), [tuple(x) for x in sweep])
    if run.figures:
        from .plotting import regimes_figure
        regimes_figure(np.array(sweep, dtype=float), names, run.path("regimes.png"))
    return 0


HANDLERS = {"spectrum": cmd_spectrum, "search": cmd_search, "continue": cmd_continue,
            "construct": cmd_construct, "verify": cmd_verify, "regimes": cmd_regimes}


def _update_manifest(run: Run, command: str) -> None:
    path = run.out / "run_manifest.json"
    man = json.loads(path.read_text(encoding="utf-8")) if path.exists() else {}
    import matplotlib
    import scipy
    man.update({"config_hash": run.hash, "package_version": __version__,
                "versions": {"python": platform.python_version(), "numpy": np.__version__,
                             "scipy": scipy.__version__, "matplotlib": matplotlib.__version__},
                "config": run.cfg})
    arts = man.setdefault("artifacts", {})
    arts[command] = {str(q.relative_to(run.out)): hashlib.sha256(q.read_bytes()).hexdigest()
                     for q in sorted(set(run.written)) if q.exists()}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_jsonable(man), fh, indent=1, sort_keys=True)
        fh.write("\n")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="selfsim-sqg", description=__doc__.split("\n")[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="key = value configuration file with sections")
    ap.add_argument("--out", default="selfsim_out", help="output directory")
    ap.add_argument("--threads", type=int, default=1, help="worker cap for the search")
    ap.add_argument("--strict", action="store_true",
                    help="treat accuracy warnings as numerical failures")
    ap.add_argument("--flip-shift-sign", action="store_true",
                    help="use the opposite sign of the identity shift in L_nu")
    ap.add_argument("--no-figures", action="store_true", help="skip PNG figures")
    ap.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                    help="override one configuration value (repeatable)")
    return ap


def _fail(exc: BaseException, code: int) -> int:
    err = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(err, sort_keys=True), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.set)
        if args.flip_shift_sign:
            cfg["problem"]["shift_sign"] = -1
        validate(cfg)
        if args.threads < 1:
            raise ValidationError("--threads must be >= 1")
        run = Run(cfg, Path(args.out), not args.no_figures, args.threads)
        with warnings.catch_warnings():
            if args.strict:
                warnings.simplefilter("error", AccuracyWarning)
            code = HANDLERS[args.command](run)
        _update_manifest(run, args.command)
        return code
    except SelfSimError as exc:
        return _fail(exc, exc.exit_code)
    except AccuracyWarning as exc:
        return _fail(exc, NumericalError.exit_code)


if __name__ == "__main__":
    sys.exit(main())
