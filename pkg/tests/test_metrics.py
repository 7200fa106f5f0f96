import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import instance, random_alloc, scsi_instance
from seeopt.beamforming import EffectiveGains
from seeopt.config import ConfigError, SystemConfig
from seeopt.metrics import (PowerAllocation, expected_rate_ce, expected_rate_pe, hermitian_logdet,
                            rate_ce, rate_cc, rate_pe, rate_pp, secrecy_rate, see, sinr_cu, sinr_pu,
                            total_power)


def test_allocation_validation():
    a = PowerAllocation([0.1, 0.2], [0.3, 0.0], [0.0, 0.1])
    assert a.n_sub == 2 and a.cbs_power == pytest.approx(0.4)
    assert a.budget_feasible(0.3, 0.4) and not a.budget_feasible(0.3, 0.39)
    assert np.array_equal(PowerAllocation.from_matrix(a.as_matrix()).p_s, a.p_s)
    with pytest.raises(ValueError):
        PowerAllocation([-1.0], [0.0], [0.0])
    with pytest.raises(ValueError):
        PowerAllocation([1.0, 1.0], [0.0], [0.0])


def test_sinr_examples(cfg):
    _, _, g = instance(cfg, 0)
    z = np.zeros(4)
    assert np.all(sinr_cu(g, PowerAllocation(np.ones(4), z, np.ones(4))) == 0)
    ps = np.full(4, 0.5)
    assert np.allclose(sinr_cu(g, PowerAllocation(z, ps, z)), g.e * ps / g.sigma2, rtol=1e-12)


def test_sinr_independent_of_an_power(cfg, rng):
    for trial in range(5):
        _, _, g = instance(cfg, trial)
        x = random_alloc(rng, cfg)
        base_cu, base_pu = sinr_cu(g, x), sinr_pu(g, x)
        for pz in (0.0, 1.0, cfg.p_cbs_total):
            y = PowerAllocation(x.p_p, x.p_s, np.full(4, pz))
            assert np.allclose(sinr_cu(g, y), base_cu, rtol=1e-12, atol=0)
            assert np.allclose(sinr_pu(g, y), base_pu, rtol=1e-12, atol=0)


def single_ed_gains(rng, sigma2=1.0):
    u = rng.standard_normal((1, 3)) + 1j * rng.standard_normal((1, 3))
    pos = lambda: np.abs(rng.standard_normal(1)) + 0.1
    return EffectiveGains(pos(), pos(), pos(), pos(), u[:, :1], u[:, 1:2], u[:, 2:], sigma2,
                          np.zeros(1), np.zeros(1))


def test_rate_ce_scalar_case(rng):
    for _ in range(20):
        g = single_ed_gains(rng)
        x = PowerAllocation(rng.uniform(0, 2, 1), rng.uniform(0, 2, 1), rng.uniform(0, 2, 1))
        c, f, gg = (np.abs(u[0, 0]) ** 2 for u in (g.u_c, g.u_f, g.u_g))
        want = np.log2(1 + f * x.p_s[0] / (c * x.p_p[0] + gg * x.p_z[0] + 1.0))
        assert rate_ce(g, x)[0] == pytest.approx(want, rel=1e-12)
        want_pe = np.log2(1 + c * x.p_p[0] / (f * x.p_s[0] + gg * x.p_z[0] + 1.0))
        assert rate_pe(g, x)[0] == pytest.approx(want_pe, rel=1e-12)


def test_rate_ce_zero_without_data(cfg):
    _, _, g = instance(cfg, 1)
    x = PowerAllocation(np.full(4, 0.2), np.zeros(4), np.full(4, 1.0))
    assert np.all(rate_ce(g, x) == 0)


def test_rate_ce_monotone_in_powers(cfg, rng):
    for trial in range(10):
        _, _, g = instance(cfg, trial)
        x = random_alloc(rng, cfg)
        pz = np.linspace(0, cfg.p_cbs_total, 40)
        rc = [rate_ce(g, PowerAllocation(x.p_p, x.p_s, np.full(4, v))) for v in pz]
        assert np.all(np.diff(rc, axis=0) <= 1e-12)
        # AN has a nonzero projection on the ED, so a large AN power strictly hurts it
        assert np.all(rc[-1] < rc[0])
        ps = np.linspace(0, cfg.p_cbs_total, 40)
        rs = [rate_ce(g, PowerAllocation(x.p_p, np.full(4, v), x.p_z)) for v in ps]
        assert np.all(np.diff(rs, axis=0) >= -1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4), st.integers(0, 10_000))
def test_logdet_matches_det(n, seed):
    r = np.random.default_rng(seed)
    a = r.standard_normal((n, n)) + 1j * r.standard_normal((n, n))
    m = a @ a.conj().T + 0.1 * np.eye(n)
    want = np.log(np.linalg.det(m).real)
    assert hermitian_logdet(m) == pytest.approx(want, rel=1e-9, abs=1e-12)


def test_secrecy_rate_examples(cfg, rng):
    _, _, g = instance(cfg, 0)
    zero_s = PowerAllocation(np.full(4, 0.2), np.zeros(4), np.full(4, 0.5))
    assert secrecy_rate(g, zero_s)[-1] == 0
    for _ in range(50):
        x = random_alloc(rng, cfg)
        r_pp, r_cc, r_pe, r_ce, sr_cu, sr_pu, r_sec = secrecy_rate(g, x)
        assert np.all(np.array([r_pp, r_cc, r_pe, r_ce]) >= 0)
        assert np.allclose(sr_cu, np.maximum(r_cc - r_ce, 0))
        assert np.all(sr_cu >= 0) and np.all(sr_pu >= 0)
        assert r_sec == pytest.approx(sr_cu.sum())


def test_clamp_on_leaky_subcarrier(rng):
    # an ED much closer than the CU: R_ce > R_cc, contributes 0
    g = single_ed_gains(rng)
    g = EffectiveGains(g.a, g.b, g.d, np.array([1e-3]), g.u_c, g.u_f * 100, g.u_g, 1.0,
                       g.leak_pu, g.leak_cu)
    x = PowerAllocation([1.0], [1.0], [0.0])
    assert rate_ce(g, x)[0] > rate_cc(g, x)[0]
    assert secrecy_rate(g, x)[-1] == 0.0


def test_secrecy_rate_additivity(cfg, rng):
    _, _, g = instance(cfg, 0)
    two = EffectiveGains(*(np.repeat(getattr(g, k)[:1], 2, axis=0) for k in ("a", "b", "d", "e", "u_c",
                                                                             "u_f", "u_g")),
                         g.sigma2, np.repeat(g.leak_pu[:1], 2), np.repeat(g.leak_cu[:1], 2))
    one = EffectiveGains(*(getattr(g, k)[:1] for k in ("a", "b", "d", "e", "u_c", "u_f", "u_g")),
                         g.sigma2, g.leak_pu[:1], g.leak_cu[:1])
    x1 = PowerAllocation([0.1], [2.0], [1.0])
    x2 = PowerAllocation([0.1, 0.1], [2.0, 2.0], [1.0, 1.0])
    assert secrecy_rate(two, x2)[-1] == pytest.approx(2 * secrecy_rate(one, x1)[-1], rel=1e-14)


def test_total_power_examples():
    z = np.zeros(3)
    assert total_power(PowerAllocation(np.ones(3), z, z), 10.0) == 10.0
    x = PowerAllocation(z, [0.25, 0.25, 0.0], [0.0, 0.25, 0.25])
    assert total_power(x, 10.0) == pytest.approx(11.0)
    x2 = PowerAllocation(z, 2 * x.p_s, 2 * x.p_z)
    assert total_power(x2, 10.0) - 10.0 == pytest.approx(2 * (total_power(x, 10.0) - 10.0))


def test_see_definition(cfg, rng):
    _, _, g = instance(cfg, 3)
    for _ in range(20):
        rb = see(g, random_alloc(rng, cfg), cfg.p_b)
        assert rb.see * rb.p_tot == pytest.approx(rb.r_sec, rel=1e-15)
    zero = see(g, PowerAllocation.zeros(4), cfg.p_b)
    assert zero.r_sec == 0 and zero.see == 0 and zero.p_tot == cfg.p_b


def test_expected_rates_single_sample(cfg, rng):
    _, _, gs = scsi_instance(cfg, 0, 5)
    x = random_alloc(rng, cfg)
    for m in range(5):
        one = EffectiveGains(gs.a, gs.b, gs.d, gs.e, gs.u_c[:, m:m + 1], gs.u_f[:, m:m + 1],
                             gs.u_g[:, m:m + 1], gs.sigma2, gs.leak_pu, gs.leak_cu)
        assert np.allclose(expected_rate_ce(one, x), rate_ce(gs.sample(m), x), rtol=1e-14)
        assert np.allclose(expected_rate_pe(one, x), rate_pe(gs.sample(m), x), rtol=1e-14)
    with pytest.raises(ConfigError):
        expected_rate_ce(gs.sample(0), x)


def test_expected_rate_duplicates(cfg, rng):
    _, _, gs = scsi_instance(cfg, 1, 6)
    x = random_alloc(rng, cfg)
    dup = EffectiveGains(gs.a, gs.b, gs.d, gs.e, *(np.concatenate([u, u], axis=1)
                                                   for u in (gs.u_c, gs.u_f, gs.u_g)),
                         gs.sigma2, gs.leak_pu, gs.leak_cu)
    assert np.allclose(expected_rate_ce(dup, x), expected_rate_ce(gs, x), rtol=1e-13)


def test_expected_rate_monte_carlo_convergence(rng):
    c = SystemConfig(n_sub=1)
    _, _, small = scsi_instance(c, 0, 10_000)
    _, _, big = scsi_instance(c.with_updates(seed=99), 0, 100_000)
    # same legitimate gains and beams for both; only the ED sample sets differ
    big = EffectiveGains(small.a, small.b, small.d, small.e, big.u_c, big.u_f, big.u_g,
                         small.sigma2, small.leak_pu, small.leak_cu)
    x = PowerAllocation([0.5], [3.0], [3.0])
    per = rate_ce(small, x)[0]
    se = np.std(per) / np.sqrt(per.size)
    assert abs(expected_rate_ce(small, x)[0] - expected_rate_ce(big, x)[0]) <= 3 * se * 1.05
