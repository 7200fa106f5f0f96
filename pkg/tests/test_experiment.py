import csv

import numpy as np
import pytest

from seeopt.baselines import SchemeId
from seeopt.channels import draw_channel_set
from seeopt.cli import main
from seeopt.config import ConfigError, SystemConfig
from seeopt.experiment import (RESULT_HEADER, TRACE_HEADER, ExperimentSpec, apply_sweep, emit_trace,
                               figure_spec, parse_config, parse_config_text, read_results,
                               read_trace, run_experiment, self_check)
from seeopt.optimizer import icsi_seem

SCENARIO_DEFAULTS = """\
# scenario defaults
figure = fig3
p_pbs_total_dbm = 30
p_b_dbm = 40
bandwidth_hz = 10e6
n0_dbm_per_hz = -174
r_cu_min = 0
r_pu_min = 0
epsilon = 1e-3
distance_m = 500
"""


def small_spec(tmp_path, schemes=(SchemeId.EQUAL,), trials=2, values=(40.0,), **kw):
    base = SystemConfig(n_sub=2, **kw)
    return ExperimentSpec("custom", "p_cbs_total_dbm", tuple(values), tuple(schemes), trials, base,
                          out=str(tmp_path / "res.csv"))


def numeric_columns(rows):
    return [r[:-1] for r in rows]


def test_scenario_defaults_file(tmp_path):
    p = tmp_path / "defaults.cfg"
    p.write_text(SCENARIO_DEFAULTS)
    spec = parse_config(p)
    assert spec.base.p_b == pytest.approx(10.0)
    assert spec.base.epsilon == 1e-3
    assert spec.base.n0 == pytest.approx(10 ** -20.4, rel=1e-12)
    assert spec.figure == "fig3" and spec.trials == 20
    assert spec.sweep_values == (20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0)


@pytest.mark.parametrize("text, needle", [
    ("foo = 1\n", "unknown key 'foo'"),
    ("r_cu_min = -1\n", "r_cu_min"),
    ("n_sub = 4\nn_sub = 5\n", "duplicate"),
    ("n_sub\n", ":1:"),
    ("\n\nn_sub = four\n", ":3:"),
    ("n_sub = \n", "empty value"),
    ("figure = fig9\n", "fig9"),
    ("sweep_var = p_cbs_total_dbm\nschemes = equal\n", "sweep_values"),
    ("figure = fig3\nschemes = equal, greedy\n", "greedy"),
    ("figure = fig3\nwarm_start = maybe\n", "warm_start"),
])
def test_config_errors(text, needle):
    with pytest.raises(ConfigError, match=needle):
        parse_config_text(text, "exp.cfg")


def test_custom_config(tmp_path):
    text = ("sweep_var = n_c\nsweep_values = 3, 4\nschemes = equal, icsi_seem\ntrials = 3\n"
            "n_sub = 2\ndistance_ce_m = 250\ninner_epsilon = none\nwarm_start = off\n"
            f"out = {tmp_path / 'x.csv'}\n")
    spec = parse_config_text(text)
    assert spec.sweep_var == "n_c" and spec.sweep_values == (3.0, 4.0)
    assert spec.schemes == (SchemeId.EQUAL, SchemeId.ICSI_SEEM)
    assert spec.base.distances["ce"] == 250 and spec.base.distances["cc"] == 500
    assert spec.base.inner_epsilon is None and spec.base.warm_start is False
    assert spec.trials == 3 and spec.out.endswith("x.csv")


def test_sweep_validation(cfg):
    assert apply_sweep(cfg, "n_c", 6).n_c == 6
    assert apply_sweep(cfg, "p_cbs_total_dbm", 30).p_cbs_total == pytest.approx(1.0)
    with pytest.raises(ConfigError):
        apply_sweep(cfg, "n_c", 2)
    with pytest.raises(ConfigError):
        apply_sweep(cfg, "n_c", 3.5)
    with pytest.raises(ConfigError):
        ExperimentSpec("x", "colour", (1,), (SchemeId.EQUAL,), 1, cfg)
    with pytest.raises(ConfigError):
        figure_spec("fig1")


def test_figure_presets():
    s = figure_spec("fig6", trials=2)
    assert s.sweep_values == (3, 4, 6, 8) and s.base.p_cbs_total == pytest.approx(0.1)
    full = figure_spec("fig3", full_scale=True)
    assert full.base.n_sub == 8 and full.base.n_e == 3 and full.trials == 100


def test_row_count_contract(tmp_path):
    spec = small_spec(tmp_path)
    rows, summary = run_experiment(spec)
    with open(spec.out) as fh:
        lines = list(csv.reader(fh))
    assert lines[0] == RESULT_HEADER and len(lines) == 3
    assert read_results(spec.out) == rows
    assert summary[("equal", 40.0)][2] == 2
    assert (tmp_path / "res_summary.csv").exists()


def test_rows_in_sweep_trial_scheme_order(tmp_path):
    spec = small_spec(tmp_path, schemes=(SchemeId.ICSI_SEEM, SchemeId.EQUAL), values=(30.0, 20.0))
    rows, _ = run_experiment(spec, write=False)
    keys = [(float(r[2]), int(r[3]), r[0]) for r in rows]
    assert keys == [(30.0, 0, "icsi_seem"), (30.0, 0, "equal"), (30.0, 1, "icsi_seem"),
                    (30.0, 1, "equal"), (20.0, 0, "icsi_seem"), (20.0, 0, "equal"),
                    (20.0, 1, "icsi_seem"), (20.0, 1, "equal")]
    assert not self_check(rows)


def test_determinism_and_workers(tmp_path):
    schemes = (SchemeId.ICSI_SEEM, SchemeId.SCSI_SEEM, SchemeId.EQUAL)
    a, _ = run_experiment(small_spec(tmp_path, schemes), write=False)
    b, _ = run_experiment(small_spec(tmp_path, schemes), write=False)
    assert numeric_columns(a) == numeric_columns(b)
    spec = small_spec(tmp_path, schemes)
    from dataclasses import replace
    c, _ = run_experiment(replace(spec, workers=2), write=False)
    assert numeric_columns(a) == numeric_columns(c)
    d, _ = run_experiment(small_spec(tmp_path, schemes, seed=1), write=False)
    assert numeric_columns(a) != numeric_columns(d)


def test_self_check_flags_violations():
    row = ["icsi_seem", "p_cbs_total_dbm", "40.0", "0", "0", "0.1", "1.0", "10.0", "1", "1", "1", "1"]
    low = ["equal"] + row[1:5] + ["0.2", "2.0", "10.0", "0", "0", "1", "1"]
    bad = ["srm"] + row[1:5] + ["0.1", "5.0", "10.0", "1", "1", "1", "1"]
    problems = self_check([row, low, bad])
    assert any("below equal" in p for p in problems)
    assert any("SEE*P_tot" in p for p in problems)
    assert self_check([row]) == []


def test_trace_round_trip(tmp_path, cfg):
    res = icsi_seem(draw_channel_set(cfg, 0), cfg)
    path = tmp_path / "trace.csv"
    emit_trace(res.trace, path)
    with open(path) as fh:
        assert next(csv.reader(fh)) == TRACE_HEADER
    back = read_trace(path)
    assert len(back.outer) == len(res.trace.outer)
    for (m1, e1, f1), (m2, e2, f2) in zip(back.outer, res.trace.outer):
        assert m1 == m2 and abs(e1 - e2) <= 1e-12 and abs(f1 - f2) <= 1e-12
    for got, want in zip(back.inner_values(), res.trace.inner_values()):
        assert np.allclose(got, want, rtol=0, atol=1e-12)
    etas = back.etas
    assert np.all(np.diff(etas) >= -1e-9)
    assert abs(etas[-1] - etas[-2]) < cfg.epsilon


def test_trace_dir(tmp_path):
    from dataclasses import replace
    spec = replace(small_spec(tmp_path, (SchemeId.ICSI_SEEM, SchemeId.EQUAL), trials=1),
                   trace_dir=str(tmp_path / "traces"))
    run_experiment(spec)
    files = sorted(p.name for p in (tmp_path / "traces").iterdir())
    assert files == ["icsi_seem_p_cbs_total_dbm40_t0.csv"]


def test_cli_run_and_self_check(tmp_path, capsys):
    cfg_path = tmp_path / "exp.cfg"
    cfg_path.write_text("sweep_var = p_cbs_total_dbm\nsweep_values = 30, 40\n"
                        "schemes = icsi_seem, cbs_only, equal\ntrials = 2\nn_sub = 2\n")
    out = tmp_path / "r.csv"
    assert main(["run", "--config", str(cfg_path), "--out", str(out), "--self-check"]) == 0
    assert "self-check: ok" in capsys.readouterr().out
    assert len(read_results(out)) == 12


def test_cli_errors(tmp_path, capsys):
    cfg_path = tmp_path / "bad.cfg"
    cfg_path.write_text("foo = 1\n")
    assert main(["run", "--config", str(cfg_path)]) == 2
    assert "unknown key 'foo'" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["run", "--config", str(cfg_path), "--figure", "fig3"])


def test_cli_trace_and_oracle(tmp_path, capsys):
    out = tmp_path / "t.csv"
    assert main(["trace", "--figure", "fig2", "--scheme", "scsi_seem", "--out", str(out)]) == 0
    assert read_trace(out).outer
    assert main(["oracle-check", "--trials", "2", "--resolution", "80"]) == 0
    assert "worst gap" in capsys.readouterr().out
