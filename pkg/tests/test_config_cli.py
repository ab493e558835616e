import csv
import json

import pytest

from kisblock import cli
from kisblock.calibration import preset, preset_names
from kisblock.config import ScenarioConfig, parse_text, preset_text, to_text
from kisblock.errors import ConfigError
from kisblock.model import ShockSpec
from kisblock.solver import SolveConfig
from kisblock.stochastic import SimConfig

SMALL_SIM = "[simulate]\nn_draws = 100\nsim_length = 150\nburn_in = 50\n"


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _write(tmp_path, text, name="scenario.ini"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return str(p)


# --- config format -----------------------------------------------------------

def test_parse_full_config():
    text = """# comment line
[model]
preset = high_cbi
psi_L = 0.65   # inline comment
shock_persistences.policy = 0.4

[shock.1]
target = policy
size = 1.0

[shock.2]
target = fx
size = -0.01
timing = 3
persistence = 0.2

[solver]
horizon = 120
tol = 1e-11

[simulate]
n_draws = 10
seed = 5
std.policy = 0.1

[sweep]
axis = cbi
grid = 0.2, 0.5, 0.8

[output]
dir = results
format = csv
"""
    cfg = parse_text(text)
    assert cfg.preset_name == "high_cbi"
    assert cfg.overrides == {"psi_L": 0.65, "shock_persistences.policy": 0.4}
    assert cfg.shocks == [ShockSpec("policy", 1.0), ShockSpec("fx", -0.01, 3, 0.2)]
    assert cfg.solver == SolveConfig(horizon=120, tol=1e-11)
    assert cfg.sim.n_draws == 10 and cfg.sim.seed == 5 and dict(cfg.sim.shock_stds) == {"policy": 0.1}
    assert cfg.sweep_axis == "cbi" and cfg.sweep_grid == [0.2, 0.5, 0.8]
    assert cfg.out_dir == "results" and cfg.fmt == "csv"
    assert cfg.params().psi_L == 0.65 and cfg.params().cbi == 0.8


def test_canonical_text_round_trip():
    cfg = ScenarioConfig(preset_name="emde_high_erpt", overrides={"kappa_nkpc": 0.1234567890123},
                         shocks=[ShockSpec("policy", 0.1 + 0.2), ShockSpec("uip", 1.0, 2, 0.9)],
                         solver=SolveConfig(horizon=80), sim=SimConfig(n_draws=3, seed=9),
                         sweep_axis="kappa_fxi", sweep_grid=[0.0, 1 / 3], out_dir="x", fmt="json")
    again = parse_text(to_text(cfg))
    assert again == cfg
    assert to_text(again) == to_text(cfg)


@pytest.mark.parametrize("name", sorted(preset_names()))
def test_preset_text_round_trip(name):
    assert parse_text(preset_text(preset(name))).params() == preset(name).params


@pytest.mark.parametrize("text, line, column", [
    ("[model]\npsi_L = 1.5\n", 2, 9),
    ("[model]\npreset = baseline_corrected\nbogus = 1\n", 3, 9),
    ("[model]\npsi_L = abc\n", 2, 9),
    ("[solver]\nhorizon = 2.5\n", 2, 11),
    ("[shock.1]\ntarget = weather\nsize = 1\n", 2, 10),
    ("[nonsense]\nx = 1\n", 1, None),
    ("psi_L = 0.5\n", 1, 1),
    ("[output]\nformat = xml\n", 2, 10),
])
def test_config_errors_report_position(text, line, column):
    with pytest.raises(ConfigError) as info:
        parse_text(text)
    err = info.value
    assert err.line == line
    if column is not None:
        assert err.column == column
    doc = err.to_dict()
    assert doc["error"] == "ConfigError" and doc["line"] == line


def test_unknown_preset_is_config_error():
    with pytest.raises(ConfigError):
        parse_text("[model]\npreset = atlantis\n")


# --- command line ----------------------------------------------------------------

def test_zero_shock_scenario_writes_zero_irf(tmp_path):
    cfg = _write(tmp_path, "[model]\npreset = baseline_corrected\n")
    out = tmp_path / "out"
    assert cli.main(["irf", "--config", cfg, "--out", str(out)]) == 0
    rows = _rows(out / "irf.csv")
    assert list(rows[0]) == list(cli.IRF_COLUMNS)
    assert len(rows) == 200
    for r in rows:
        for col in ("y_gap", "pi", "price_level", "ds", "tau", "mb"):
            assert float(r[col]) == 0.0
        assert r["zlb"] == "0"
    summary = json.loads((out / "summary.json").read_text())
    assert summary["irf"]["sacrifice_ratio"] is None
    assert summary["solve"]["converged"] is True


def test_default_irf_matches_library(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["irf", "--out", str(out)]) == 0
    doc = json.loads((out / "summary.json").read_text())
    from kisblock.irf import policy_irf
    s = policy_irf(preset("baseline_corrected").params)[1]
    assert doc["irf"]["peak_y"] == s.peak_y and doc["irf"]["peak_p"] == s.peak_p
    assert doc["tool"] == "kisblock" and "version" in doc
    assert doc["provenance"]["psi_L"] == "reported"


def test_echoed_config_reproduces_outputs(tmp_path):
    a = tmp_path / "a"
    assert cli.main(["simulate", "--preset", "emde_high_erpt", "--set", "cbi=0.7", "--shock", "fx:0.02:1",
                     "--seed", "4", "--out", str(a)] + ["--config", _write(tmp_path, SMALL_SIM)]) == 0
    echoed = json.loads((a / "summary.json").read_text())["config"]
    b = tmp_path / "b"
    assert cli.main(["simulate", "--config", _write(tmp_path, echoed, "echo.ini"), "--out", str(b)]) == 0
    assert (a / "irf.csv").read_bytes() == (b / "irf.csv").read_bytes()
    ma = json.loads((a / "moments.json").read_text())["moments"]
    mb = json.loads((b / "moments.json").read_text())["moments"]
    assert ma == mb
    assert json.loads((a / "summary.json").read_text())["provenance"]["cbi"] == "override"


def test_format_selection(tmp_path):
    out = tmp_path / "j"
    assert cli.main(["irf", "--format", "json", "--out", str(out)]) == 0
    assert (out / "summary.json").exists() and not (out / "irf.csv").exists()


def test_exit_code_for_bad_config(tmp_path, capsys):
    cfg = _write(tmp_path, "[model]\npsi_L = 1.5\n")
    out = tmp_path / "e"
    assert cli.main(["irf", "--config", cfg, "--out", str(out)]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err == json.loads((out / "error.json").read_text())
    assert err["error"] == "ConfigError" and err["line"] == 2 and err["column"] == 9


def test_exit_code_for_unknown_preset(tmp_path, capsys):
    assert cli.main(["irf", "--preset", "atlantis", "--out", str(tmp_path / "u")]) == 2
    assert json.loads(capsys.readouterr().err)["error"] == "ConfigError"


def test_exit_code_for_bad_set(tmp_path):
    assert cli.main(["irf", "--set", "nonsense=1", "--out", str(tmp_path / "s")]) == 2
    assert cli.main(["irf", "--set", "psi_L", "--out", str(tmp_path / "s")]) == 2


def test_exit_code_for_solver_failure(tmp_path, capsys):
    assert cli.main(["irf", "--preset", "dollarized_full", "--out", str(tmp_path / "d")]) == 3
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "IndeterminateSystem" and err["determinacy"] == "indeterminate"


def test_fit_rejects_unfittable_preset(tmp_path):
    assert cli.main(["fit", "--preset", "high_cbi", "--out", str(tmp_path / "f")]) == 2


def test_presets_listing_and_files(tmp_path, capsys):
    out = tmp_path / "p"
    assert cli.main(["presets", "--out", str(out)]) == 0
    listing = json.loads(capsys.readouterr().out)["presets"]
    assert {p["name"] for p in listing} == set(preset_names())
    text = (out / "high_debt.ini").read_text()
    assert "# derived" in text and "# reported" in text
    assert parse_text(text).params() == preset("high_debt").params


def test_cbi_sweep(tmp_path):
    cfg = _write(tmp_path, SMALL_SIM + "[sweep]\naxis = cbi\ngrid = 0.2, 0.5, 0.8\n")
    out = tmp_path / "sw"
    assert cli.main(["sweep", "--config", cfg, "--out", str(out)]) == 0
    rows = _rows(out / "sweep_summary.csv")
    assert list(rows[0]) == list(cli.SWEEP_COLUMNS)
    assert [r["status"] for r in rows] == ["ok"] * 3
    var_pi = [float(r["var_pi"]) for r in rows]
    assert var_pi[0] >= var_pi[1] >= var_pi[2]
    for k in range(3):
        assert (out / f"point_{k:03d}" / "moments.json").exists()


def test_fxi_sweep_from_flags(tmp_path):
    out = tmp_path / "fx"
    cfg = _write(tmp_path, SMALL_SIM)
    assert cli.main(["sweep", "--config", cfg, "--axis", "kappa_fxi", "--grid", "0,0.5,1",
                     "--out", str(out)]) == 0
    var_ds = [float(r["var_ds"]) for r in _rows(out / "sweep_summary.csv")]
    assert var_ds[0] >= var_ds[1] >= var_ds[2]


def test_dollarization_sweep_weakens_traction_and_records_failures(tmp_path):
    cfg = _write(tmp_path, SMALL_SIM)
    out = tmp_path / "dd"
    assert cli.main(["sweep", "--config", cfg, "--axis", "d_dollar", "--grid", "0,0.25,0.5,1",
                     "--out", str(out)]) == 0
    rows = _rows(out / "sweep_summary.csv")
    assert [r["status"] for r in rows] == ["ok", "ok", "ok", "IndeterminateSystem"]
    assert rows[3]["error"]
    peaks = [abs(float(r["peak_y"])) for r in rows[:3]]
    assert peaks[0] >= peaks[1] >= peaks[2]
    doc = json.loads((out / "point_002" / "summary.json").read_text())
    assert doc["params"]["psi_L"] == pytest.approx(0.7 * 0.75)


def test_structural_override_rules():
    cfg = parse_text("[model]\npreset = baseline_corrected\nd_dollar = 0.5\nb_debt = 1.0\n")
    assert cfg.params() == preset("dollarized_partial").params.replace(
        b_debt=1.0, lending_premium=0.4 * preset("high_debt").params.risk_b)
    with pytest.raises(ConfigError):
        parse_text("[model]\npreset = dollarized_partial\nd_dollar = 0.25\n")
    same = parse_text("[model]\npreset = dollarized_partial\nd_dollar = 0.5\n")
    assert same.params() == preset("dollarized_partial").params


def test_sweep_without_grid_is_config_error(tmp_path):
    assert cli.main(["sweep", "--out", str(tmp_path / "n")]) == 2


def test_single_point_sweep_equals_scenario(tmp_path):
    cfg = _write(tmp_path, SMALL_SIM)
    assert cli.main(["sweep", "--config", cfg, "--axis", "cbi", "--grid", "0.5",
                     "--out", str(tmp_path / "one")]) == 0
    assert cli.main(["simulate", "--config", cfg, "--set", "cbi=0.5", "--out", str(tmp_path / "sc")]) == 0
    assert ((tmp_path / "one" / "point_000" / "irf.csv").read_bytes()
            == (tmp_path / "sc" / "irf.csv").read_bytes())
    assert len(_rows(tmp_path / "one" / "sweep_summary.csv")) == 1
