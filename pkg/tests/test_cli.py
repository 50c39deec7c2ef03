import json
import subprocess
import sys

import pytest

from bltrick import cli

POS = {
    "problem": {"N": 3, "builtin": {"name": "power_minus_mass", "p": 3, "m": 1}},
    "grid": {"R": 30, "M": 1024},
}
MULTI = {
    "problem": {"N": 3, "case": "zero-mass-multi",
                "builtin": {"name": "double_power", "a": 7, "b": 3}},
    "grid": {"R": 200, "M": 4096, "grading": {"geometric": 1.01}},
    "outputs": {"log_x": True},
}
SYSTEM = {
    "problem": {"N": 3, "system": {"F": "u^2*v^2 - (u^2+v^2)/2",
                                   "F_u": "2*u*v^2 - u", "F_v": "2*u^2*v - v"}},
    "grid": {"R": 30, "M": 1024},
}
NO_G3 = {"problem": {"N": 3, "case": "positive-mass", "expressions": {"g": "-s", "m": 1}}}


def _write(tmp_path, cfg, name="run.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def _report(out, stem):
    return json.loads((out / f"{stem}.json").read_text())


def test_solve_writes_three_artifacts(tmp_path):
    out = tmp_path / "o"
    assert cli.run("solve", _write(tmp_path, POS), out=str(out)) == 0
    assert sorted(p.name for p in out.iterdir()) == ["solve.csv", "solve.json", "solve.svg"]
    rep = _report(out, "solve")
    assert rep["solve"]["converged"] is True
    assert rep["exit_code"] == 0
    assert rep["config"]["grid"]["M"] == 1024
    assert set(rep["versions"]) == {"bltrick", "numpy", "scipy", "python"}
    assert (out / "solve.csv").read_text().splitlines()[0] == "r,u"
    assert (out / "solve.svg").read_text().startswith("<svg")


def test_report_json_roundtrips_and_is_canonical(tmp_path):
    out = tmp_path / "o"
    cli.run("solve", _write(tmp_path, POS), out=str(out))
    text = (out / "solve.json").read_text()
    data = json.loads(text)
    assert cli.canonical_json(data) == text
    assert json.loads(cli.canonical_json(data)) == data


def test_verification_failure_exits_2(tmp_path):
    code = cli.run("solve", _write(tmp_path, POS), ["verify.tolerances.pohozaev=1e-12"],
                   out=str(tmp_path / "o"))
    assert code == 2
    rep = _report(tmp_path / "o", "solve")
    assert rep["failed_checks"] == ["pohozaev"]


def test_not_converged_exits_3_and_still_reports(tmp_path):
    code = cli.run("solve", _write(tmp_path, POS),
                   ["trick.max_iters=2", "trick.max_rounds=1"], out=str(tmp_path / "o"))
    assert code == 3
    rep = _report(tmp_path / "o", "solve")
    assert rep["solve"]["converged"] is False


def test_check_g3_failure_exits_4(tmp_path, capsys):
    code = cli.run("check", _write(tmp_path, NO_G3), out=str(tmp_path / "o"))
    assert code == 4
    assert "no-positive-G" in capsys.readouterr().err
    assert cli.run("solve", _write(tmp_path, NO_G3), out=str(tmp_path / "o")) == 4


def test_check_passes_on_builtin(tmp_path):
    assert cli.run("check", _write(tmp_path, POS), out=str(tmp_path / "o")) == 0
    rep = _report(tmp_path / "o", "check")
    assert rep["conditions"]["verdicts"]["g1"]["status"] == "sampled-pass"


@pytest.mark.parametrize("overrides", [
    ["grid.M=4"],
    ["trick.k=2"],
    ["trick.bogus=1"],
    ["problem.builtin.name=nonsense"],
    ["no-equals-sign"],
])
def test_config_errors_exit_4(tmp_path, overrides):
    assert cli.run("solve", _write(tmp_path, POS), overrides, out=str(tmp_path / "o")) == 4


def test_bad_documents_exit_4(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.run("solve", str(bad)) == 4
    assert cli.run("solve", str(tmp_path / "missing.json")) == 4
    assert cli.run("solve", _write(tmp_path, {"extra": {}})) == 4
    assert cli.run("frobnicate", _write(tmp_path, POS)) == 4


def test_scaling_test_factors(tmp_path):
    code = cli.run("scaling-test", _write(tmp_path, POS), ["scaling.t=2"], out=str(tmp_path / "o"))
    assert code == 0
    row = _report(tmp_path / "o", "scaling_test")["scaling"][0]
    assert (row["factor_phi"], row["factor_psi"]) == (2.0, 8.0)
    assert row["error_phi"] <= 1e-12 and row["error_psi"] <= 1e-12


def test_system_subcommand(tmp_path):
    out = tmp_path / "o"
    assert cli.run("system", _write(tmp_path, SYSTEM), out=str(out)) == 0
    assert (out / "system.csv").read_text().splitlines()[0] == "r,u,v"
    assert cli.run("system", _write(tmp_path, POS), out=str(out)) == 4


def test_multi_and_probe(tmp_path):
    out = tmp_path / "o"
    assert cli.run("multi", _write(tmp_path, MULTI), out=str(out)) == 0
    rep = _report(out, "multi")
    assert len(rep["solutions"]) == 3
    assert (out / "multi_3.csv").exists()
    assert cli.run("probe", _write(tmp_path, MULTI), ["probe.j=[1,2]"], out=str(out)) == 0
    assert all(r["found"] for r in _report(out, "probe")["probe"])


def test_verify_and_oracle(tmp_path):
    out = tmp_path / "o"
    cfg = _write(tmp_path, POS)
    cli.run("solve", cfg, out=str(out))
    code = cli.run("verify", cfg, [f"verify.profile={out / 'solve.csv'}"], out=str(out))
    assert code == 0
    assert _report(out, "verify")["verify"]["residual_rel"] < 1e-8
    assert cli.run("verify", cfg, out=str(out)) == 4
    assert cli.run("oracle", cfg, out=str(out)) == 0
    assert 4.0 < _report(out, "oracle")["oracle"]["alpha"] < 5.0
    assert cli.run("oracle", _write(tmp_path, MULTI, "m.json"), out=str(out)) == 4


def test_apply_override_paths():
    cfg = {"a": {"b": 1}}
    cli.apply_override(cfg, "a.b=[1, 2]")
    cli.apply_override(cfg, "a.c=text")
    cli.apply_override(cfg, "d.e=true")
    assert cfg == {"a": {"b": [1, 2], "c": "text"}, "d": {"e": True}}


def test_console_entry_point_and_no_color(tmp_path):
    env = {"NO_COLOR": "1", "PATH": ""}
    proc = subprocess.run(
        [sys.executable, "-m", "bltrick", "check", "--config", _write(tmp_path, NO_G3),
         "--out", str(tmp_path / "o")],
        capture_output=True, text=True, env=env,
    )
    assert proc.returncode == 4
    assert "\033[" not in proc.stderr
    bad = subprocess.run([sys.executable, "-m", "bltrick"], capture_output=True, text=True)
    assert bad.returncode == 4
