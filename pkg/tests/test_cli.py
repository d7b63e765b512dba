import math
import shutil
from pathlib import Path

import pytest

from polariton_lattice.cli import main, run
from polariton_lattice.config import config_hash, parse_config
from polariton_lattice.errors import ConfigParseError, ConfigValidationError
from polariton_lattice.tables import OutputTable, data_section, fmt, read_table

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

MINIMAL_LINEAR = """\
[run]
mode = linear
[effective]
Vbar = 1.0
lcoh = 0.25
d = 9.42477796076938
gamma_over_abs_delta0 = 0.02
[scan]
eps_min = 0.5
eps_max = 2.5
n_points = 21
[grid]
n_steps = 512
"""


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_minimal_linear_config():
    cfg = parse_config(MINIMAL_LINEAR)
    ep = cfg.effective
    assert cfg.mode == "linear"
    assert ep.Vbar == 1.0 and ep.lcoh == 0.25 and ep.chibar == 0
    assert ep.d == pytest.approx(3 * math.pi, rel=1e-14)
    assert ep.beta == pytest.approx(12 * math.pi / 50, rel=1e-12)
    assert cfg.scan == (0.5, 2.5, 21) and cfg.grid.n_steps == 512


def test_d_in_pi_and_polar_values():
    cfg = parse_config(MINIMAL_LINEAR.replace("d = 9.42477796076938", "d_in_pi = 3")
                       + "[drive]\nalpha = 0.5, 1.5707963267948966\n")
    assert cfg.d == 3 * math.pi
    assert cfg.alpha == pytest.approx(0.5j, abs=1e-15)


def test_both_parameter_blocks_rejected():
    text = MINIMAL_LINEAR + "[optical]\nGamma1D = 0.2\n"
    with pytest.raises(ConfigValidationError, match="exactly one"):
        parse_config(text)


def test_unknown_key_names_key_and_line():
    text = MINIMAL_LINEAR + "[drive]\nalpa = 0.5\n"
    with pytest.raises(ConfigParseError) as info:
        parse_config(text)
    assert "alpa" in str(info.value)
    assert info.value.line == 15 and "line 15" in str(info.value)


@pytest.mark.parametrize("text, kind", [
    ("[scan\n", ConfigParseError),
    ("[nowhere]\n", ConfigParseError),
    ("[scan]\nn_points = ten\n", ConfigParseError),
    ("[scan]\nn_points = 12\n", ConfigParseError),  # duplicate key
])
def test_malformed_documents(text, kind):
    with pytest.raises(kind):
        parse_config(MINIMAL_LINEAR + text)


def test_grid_resolution_enforced():
    with pytest.raises(ConfigValidationError) as info:
        parse_config(MINIMAL_LINEAR.replace("n_steps = 512", "n_steps = 10"))
    assert info.value.line == 13


def test_invariant_violation_reports_line():
    text = MINIMAL_LINEAR.replace("lcoh = 0.25", "lcoh = -1")
    with pytest.raises(ConfigValidationError) as info:
        parse_config(text)
    assert info.value.line == 3


def test_mode_requirements():
    no_mode = MINIMAL_LINEAR.replace("[run]\nmode = linear\n", "")
    assert parse_config(no_mode, mode="linear").mode == "linear"
    with pytest.raises(ConfigValidationError, match="drive"):
        parse_config(no_mode, mode="spectrum")
    with pytest.raises(ConfigValidationError, match="not 'spectrum'"):
        parse_config(MINIMAL_LINEAR, mode="spectrum")
    with pytest.raises(ConfigValidationError):
        parse_config(MINIMAL_LINEAR, mode="params")
    with pytest.raises(ConfigValidationError):
        parse_config(MINIMAL_LINEAR.replace("mode = linear", "mode = dance"))


def test_fmt_rules():
    assert fmt(0.1 + 0.2) == "0.3"
    assert fmt(-0.0) == "0" and fmt(float("nan")) == "nan" and fmt(float("-inf")) == "-inf"
    assert fmt(True) == "true" and fmt(7) == "7"
    assert fmt(1 / 3) == "0.333333333333"
    t = OutputTable(["a", "b"])
    with pytest.raises(ValueError):
        t.add(1)


def test_linear_run_is_deterministic_and_hashed(tmp_path):
    cfg_path = write(tmp_path, MINIMAL_LINEAR)
    before = cfg_path.read_bytes()
    assert main(["linear", "--config", str(cfg_path), "--out", str(tmp_path / "a")]) == 0
    assert main(["linear", "--config", str(cfg_path), "--out", str(tmp_path / "b")]) == 0
    assert cfg_path.read_bytes() == before
    a, b = tmp_path / "a" / "spectrum.csv", tmp_path / "b" / "spectrum.csv"
    assert data_section(a) == data_section(b)
    table = read_table(a)
    assert table.meta["config_sha256"] == config_hash(before.decode())
    assert table.columns[:7] == ["epsilon", "T", "R", "branch_id", "label", "converged", "newton_iters"]
    assert len(table.rows) == 21 and all(len(r) == len(table.columns) for r in table.rows)


def test_params_mode_matches_fixture(tmp_path):
    shutil.copy(CONFIGS / "optical_params.cfg", tmp_path / "p.cfg")
    assert main(["params", "--config", str(tmp_path / "p.cfg"), "--out", str(tmp_path)]) == 0
    rows = read_table(tmp_path / "params.csv").rows
    row = next(r for r in rows if r["Omega"] == "0.3" and r["DeltaP"] == "10")
    # same operating point as the exact-rational fixture in the parameter tests
    assert float(row["Vbar"]) == pytest.approx(0.62493750624937506, rel=1e-11)
    assert float(row["chibar_re"]) == pytest.approx(0.0063117129683540374, rel=1e-11)
    assert float(row["chibar_im"]) == pytest.approx(-0.00031558564841770187, rel=1e-11)
    assert float(row["lcoh"]) == pytest.approx(0.250025, rel=1e-11)
    assert len(rows) == 16


def test_spectrum_mode_reports_multivalued_interval(tmp_path):
    assert main(["spectrum", "--config", str(CONFIGS / "bistable_spectrum.cfg"), "--out", str(tmp_path)]) == 0
    table = read_table(tmp_path / "spectrum.csv")
    assert table.meta["multivalued"] != "none"
    lo, hi = (float(x) for x in table.meta["multivalued"].split(" .. "))
    assert 1.0 < lo < hi < 1.12
    labels = {r["label"] for r in table.rows}
    assert {"U", "M", "L", "unique"} <= labels
    assert len(read_table(tmp_path / "folds.csv").rows) == 2


def test_seed_from_reuses_previous_run(tmp_path):
    cfg = CONFIGS / "bistable_spectrum.cfg"
    assert main(["spectrum", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(["spectrum", "--config", str(cfg), "--out", str(tmp_path / "b"),
                 "--seed-from", str(tmp_path / "a" / "spectrum.csv")]) == 0
    a = read_table(tmp_path / "a" / "spectrum.csv").rows
    b = read_table(tmp_path / "b" / "spectrum.csv").rows
    assert len(a) == len(b)
    for x, y in zip(a, b):
        assert x["label"] == y["label"]
        assert float(x["T"]) == pytest.approx(float(y["T"]), abs=1e-8)


def test_stability_mode_lower_branch_stable(tmp_path):
    assert main(["stability", "--config", str(CONFIGS / "bistable_stability.cfg"), "--out", str(tmp_path)]) == 0
    summary = {r["branch"]: r for r in read_table(tmp_path / "stability.csv").rows}
    assert set(summary) == {"U", "M", "L"}
    assert summary["L"]["verdict"] == "stable"
    table = read_table(tmp_path / "stability_L.csv")
    assert table.columns == ["t", "max_abs_delta_psi", "Xi"]
    assert table.meta["verdict"] == "stable"


def test_exit_codes(tmp_path):
    assert main(["linear", "--config", str(tmp_path / "missing.cfg")]) == 3
    bad = write(tmp_path, MINIMAL_LINEAR + "[drive]\nalpa = 0.5\n")
    assert main(["linear", "--config", str(bad)]) == 2
    blocker = tmp_path / "file"
    blocker.write_text("")
    ok = write(tmp_path, MINIMAL_LINEAR, "ok.cfg")
    assert main(["linear", "--config", str(ok), "--out", str(blocker / "sub")]) == 3


def test_failed_points_give_status_one(tmp_path):
    # a drive far too strong for the window: the scan records failures instead of crashing
    text = (MINIMAL_LINEAR.replace("mode = linear", "mode = spectrum")
            .replace("gamma_over_abs_delta0 = 0.02", "gamma_over_abs_delta0 = 0.0\nchibar = 60")
            + "[drive]\nalpha = 1\n[solver]\nmax_newton_iters = 2\nmax_halvings = 0\n")
    cfg = parse_config(text)
    failures = run(cfg, tmp_path)
    table = read_table(tmp_path / "spectrum.csv")
    assert failures > 0
    assert failures == int(table.meta["failures"]) + (table.meta["truncated"] == "true")
    assert any(r["converged"] == "false" for r in table.rows)
    assert main(["spectrum", "--config", str(write(tmp_path, text)), "--out", str(tmp_path)]) == 1
