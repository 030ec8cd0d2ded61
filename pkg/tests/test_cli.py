import json
import shutil
import warnings

import pytest

from selfsim_sqg import cli
from selfsim_sqg.cli import config_hash, load_config, main
from selfsim_sqg.errors import AccuracyWarning, ValidationError


def _run(*args):
    return main([*args, "--no-figures"])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """search -> continue -> construct -> verify on the default gauss-ring setup."""
    out = tmp_path_factory.mktemp("pipeline")
    codes = {c: _run(c, "--out", str(out)) for c in ("search", "continue", "construct",
                                                      "verify")}
    return out, codes


def test_pipeline_runs_end_to_end(pipeline):
    out, codes = pipeline
    assert codes == {"search": 0, "continue": 0, "construct": 0, "verify": 0}
    man = json.loads((out / "run_manifest.json").read_text())
    assert set(man["artifacts"]) == {"search", "continue", "construct", "verify"}
    h = man["config_hash"]
    assert h == config_hash(load_config(None, []))
    for name in ("search.json", "continuation.json", "eigenpair.json", "verify.json"):
        assert json.loads((out / name).read_text())["config_hash"] == h
    for name in ("continuation.csv", "residuals.csv", "separation.csv", "vortex.csv"):
        assert (out / name).read_text().startswith(f"# config_hash={h}")
    ver = json.loads((out / "verify.json").read_text())
    assert ver["residual_ok"] and ver["residual_max"] < 1e-6


def test_perturbed_lambda_fails_verify(pipeline, tmp_path, capsys):
    out = tmp_path / "copy"
    shutil.copytree(pipeline[0], out)
    man_path = out / "system" / "manifest.json"
    man = json.loads(man_path.read_text())
    man["lambda"][0] += 1e-3
    man_path.write_text(json.dumps(man))
    assert _run("verify", "--out", str(out)) == 3
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "NumericalError" and "residual" in err["message"]


def test_verify_refuses_other_configuration(pipeline, tmp_path):
    out = tmp_path / "copy"
    shutil.copytree(pipeline[0], out)
    assert _run("verify", "--out", str(out), "--set", "verify.t_points=31") == 2


def test_missing_prerequisites(tmp_path):
    assert _run("verify", "--out", str(tmp_path)) == 4
    assert _run("continue", "--out", str(tmp_path)) == 4
    assert _run("spectrum", "--config", str(tmp_path / "none.ini"), "--out", str(tmp_path)) == 4


def test_invalid_beta(tmp_path, capsys):
    assert _run("spectrum", "--out", str(tmp_path), "--set", "problem.beta=5") == 2
    err = json.loads(capsys.readouterr().err)
    assert err["exit_code"] == 2 and "0 < beta < 3 + alpha" in err["message"]
    assert not (tmp_path / "spectrum.json").exists()


@pytest.mark.parametrize("bad", ["problem.gamma=1", "problem.beta", "grid.N=abc"])
def test_bad_overrides(tmp_path, bad):
    assert _run("regimes", "--out", str(tmp_path), "--set", bad) == 2


def test_spectrum_is_deterministic(tmp_path):
    outs = []
    for k in range(2):
        d = tmp_path / f"r{k}"
        assert _run("spectrum", "--out", str(d), "--set", "grid.N=64") == 0
        outs.append(d)
    for name in ("spectrum.json", "spectrum.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    rep = json.loads((outs[0] / "spectrum.json").read_text())
    assert all(e["residual"] <= 1e-8 for e in rep["eigenvalues"])


def test_regimes_table(tmp_path):
    assert main(["regimes", "--out", str(tmp_path), "--set", "regimes.s=-1",
                 "--set", "regimes.p=4", "--set", "regimes.q=4"]) == 0
    rep = json.loads((tmp_path / "regimes.json").read_text())
    assert rep["solution_regime"] == "critical"
    rows = {c["class"]: c for c in rep["classes"]}
    assert rows["LPS (s=-1)"]["holds"] and rows["LPS (s=-1)"]["value"] == "1"
    assert not rows["Leray-Hopf/Marchand"]["holds"]
    lines = (tmp_path / "regimes.csv").read_text().splitlines()
    assert lines[1] == "class,threshold,holds,citation"
    assert (tmp_path / "regimes.png").stat().st_size > 0


def test_config_file_precedence(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[problem]\nbeta = 1.5\nalpha = 1\n", encoding="utf-8")
    cfg = load_config(str(ini), ["problem.beta=1.2"])
    assert cfg["problem"]["beta"] == 1.2 and cfg["problem"]["alpha"] == 1.0
    assert main(["regimes", "--config", str(ini), "--set", "problem.beta=1.2", "--out",
                 str(tmp_path / "o"), "--no-figures", "--flip-shift-sign"]) == 0
    rep = json.loads((tmp_path / "o" / "regimes.json").read_text())
    assert rep["beta"] == 1.2
    man = json.loads((tmp_path / "o" / "run_manifest.json").read_text())
    assert man["config"]["problem"]["shift_sign"] == -1
    with pytest.raises(ValidationError):
        load_config(None, ["tolerances.bogus=1"])


def test_strict_turns_warnings_into_failures(tmp_path, monkeypatch):
    def noisy(run):
        warnings.warn("unresolved tail", AccuracyWarning)
        return 0
    monkeypatch.setitem(cli.HANDLERS, "regimes", noisy)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AccuracyWarning)
        assert _run("regimes", "--out", str(tmp_path)) == 0
    assert _run("regimes", "--out", str(tmp_path), "--strict") == 3
