import numpy as np
import pytest

from conftest import instance
from seeopt.baselines import (SchemeId, cbs_only, eem, equal_power, pbs_only, run_scheme, seem_no_an,
                              srm)
from seeopt.channels import draw_channel_set
from seeopt.config import ConfigError, SystemConfig, dbm_to_watt
from seeopt.experiment import run_trial
from seeopt.metrics import see

ALL = list(SchemeId)


def cu_ratio(g, alloc, p_b):
    rb = see(g, alloc, p_b)
    return float(np.sum(rb.r_cc)) / rb.p_tot


def test_scheme_parse():
    assert SchemeId.parse(" SRM ") is SchemeId.SRM
    with pytest.raises(ConfigError):
        SchemeId.parse("greedy")


def test_equal_power_closed_form(cfg):
    res = equal_power(draw_channel_set(cfg, 0), cfg)
    a = res.allocation
    assert np.sum(a.p_s + a.p_z) == pytest.approx(cfg.p_cbs_total, rel=1e-15)
    assert np.allclose(a.p_s, a.p_z) and np.allclose(a.p_p, cfg.fixed_pbs_power)
    assert res.status == "optimal"


def test_fixed_pbs_power_must_fit(cfg):
    c = cfg.with_updates(fixed_pbs_power=1.0)
    with pytest.raises(ConfigError):
        equal_power(draw_channel_set(c, 0), c)


def test_pbs_only_keeps_equal_cbs(cfg):
    res = pbs_only(draw_channel_set(cfg, 1), cfg)
    assert np.allclose(res.allocation.p_s, cfg.p_cbs_total / (2 * cfg.n_sub))
    assert np.allclose(res.allocation.p_z, cfg.p_cbs_total / (2 * cfg.n_sub))
    assert np.sum(res.allocation.p_p) <= cfg.p_pbs_total * (1 + 1e-9)


def test_cbs_only_and_no_an_fixed_columns(cfg):
    ch = draw_channel_set(cfg, 2)
    r = cbs_only(ch, cfg)
    assert np.array_equal(r.allocation.p_p, np.full(4, cfg.fixed_pbs_power))
    r = seem_no_an(ch, cfg)
    assert np.all(r.allocation.p_z == 0)


@pytest.fixture(scope="module")
def lattice():
    out = []
    for pc in (20.0, 35.0, 50.0):
        c = SystemConfig(p_cbs_total=dbm_to_watt(pc))
        for trial in range(4):
            out.append((c, trial, run_trial(c, trial, ALL)))
    return out


def test_dominance_lattice(lattice):
    for c, trial, res in lattice:
        joint = res[SchemeId.ICSI_SEEM][1].see
        for s in ALL:
            if s in (SchemeId.ICSI_SEEM, SchemeId.SCSI_SEEM):
                continue
            assert joint >= res[s][1].see - 1e-9, (s, trial)
        assert res[SchemeId.CBS_ONLY][1].see >= res[SchemeId.EQUAL][1].see - 1e-9


def test_all_schemes_feasible(lattice):
    for c, trial, res in lattice:
        for s in ALL:
            r = res[s][0]
            assert r is not None, (s, res[s][2])
            assert r.allocation.budget_feasible(c.p_pbs_total, c.p_cbs_total, atol=1e-6)
            assert r.see * r.p_tot == pytest.approx(r.r_sec, rel=1e-12)


def test_srm_maximizes_rate(lattice):
    for c, trial, res in lattice:
        ch = draw_channel_set(c, trial)
        icsi = res[SchemeId.ICSI_SEEM][0]
        r = srm(ch, c, candidates=[icsi.allocation])
        # the SEE side of this pair is the harness dominance in test_dominance_lattice
        assert r.r_sec >= icsi.r_sec - 1e-9


def test_srm_spends_the_budget():
    for pc in (20.0, 50.0):
        c = SystemConfig(p_cbs_total=dbm_to_watt(pc))
        for trial in range(3):
            r = srm(draw_channel_set(c, trial), c)
            assert r.allocation.cbs_power >= 0.9 * c.p_cbs_total


def test_eem_maximizes_cu_ratio(lattice):
    for c, trial, res in lattice:
        _, _, g = instance(c, trial)
        e, j = res[SchemeId.EEM][0], res[SchemeId.ICSI_SEEM][0]
        assert cu_ratio(g, e.allocation, c.p_b) >= cu_ratio(g, j.allocation, c.p_b) - 1e-6
        assert np.all(np.diff(e.trace.etas) >= -1e-9)
        assert e.see <= j.see + 1e-9


@pytest.fixture(scope="module")
def paired_50():
    """ICSI, SCSI and no-AN on 50 paired trials with a three-antenna eavesdropper."""
    c = SystemConfig(n_e=3)
    schemes = [SchemeId.ICSI_SEEM, SchemeId.SCSI_SEEM, SchemeId.SEEM_NO_AN]
    rows = [run_trial(c, t, schemes) for t in range(50)]
    return {s: np.array([r[s][1].see for r in rows]) for s in schemes}


def test_an_helps_on_average(paired_50):
    assert paired_50[SchemeId.SEEM_NO_AN].mean() < paired_50[SchemeId.ICSI_SEEM].mean()
    assert np.all(paired_50[SchemeId.SEEM_NO_AN] <= paired_50[SchemeId.ICSI_SEEM] + 1e-9)


def test_statistical_csi_costs_on_average(paired_50):
    assert paired_50[SchemeId.SCSI_SEEM].mean() <= paired_50[SchemeId.ICSI_SEEM].mean()


def test_run_scheme_dispatch(cfg):
    ch = draw_channel_set(cfg, 0)
    with pytest.raises(ValueError):
        run_scheme(SchemeId.SCSI_SEEM, ch, cfg)
    assert run_scheme(SchemeId.EQUAL, ch, cfg).see == equal_power(ch, cfg).see
    assert run_scheme(SchemeId.EEM, ch, cfg).see == eem(ch, cfg).see
