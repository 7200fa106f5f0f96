import numpy as np
import pytest

from seeopt.beamforming import build_beamformers, effective_gains, sampled_gains
from seeopt.channels import draw_channel_set, draw_eavesdropper_samples
from seeopt.config import SystemConfig
from seeopt.metrics import PowerAllocation


def instance(cfg, trial, mode="icsi"):
    """Channels, beams and gains of one trial."""
    ch = draw_channel_set(cfg, trial)
    beams = build_beamformers(ch, mode, seed=cfg.seed, trial=trial)
    return ch, beams, effective_gains(ch, beams)


def scsi_instance(cfg, trial, n_samples=None):
    ch = draw_channel_set(cfg, trial)
    beams = build_beamformers(ch, "scsi", seed=cfg.seed, trial=trial)
    h_pe, h_ce = draw_eavesdropper_samples(cfg, trial, n_samples)
    return ch, beams, sampled_gains(ch, beams, h_pe, h_ce)


def random_alloc(rng, cfg, n_sub=None):
    """Budget-feasible allocation drawn uniformly from each budget simplex (with slack)."""
    i = cfg.n_sub if n_sub is None else n_sub
    pp = rng.dirichlet(np.ones(i + 1))[:i] * cfg.p_pbs_total
    cbs = rng.dirichlet(np.ones(2 * i + 1))[:2 * i] * cfg.p_cbs_total
    return PowerAllocation(pp, cbs[:i], cbs[i:])


NAMES = ("f1", "f2", "g1", "g2", "rcc1", "rcc2")


def box_points(rng, cfg, n):
    """Points uniform on the box [0, P_max]^(3I) (budget sums not enforced)."""
    hi = np.array([cfg.p_pbs_total, cfg.p_cbs_total, cfg.p_cbs_total])
    return rng.uniform(0, 1, (n, cfg.n_sub, 3)) * hi


def fd_gradient(comp, x, h):
    g = np.zeros_like(x)
    for k in range(3):
        e = np.zeros_like(x)
        e[:, k] = h[k]
        g[:, k] = (comp.value(x + e) - comp.value(x - e)) / (2 * h[k])
    return g


def fd_check(dc, cfg, rng, n_points):
    """Worst per-subcarrier relative gradient error, in budget-scaled units."""
    scale = np.array([cfg.p_pbs_total, cfg.p_cbs_total, cfg.p_cbs_total])
    h = 1e-6 * scale
    worst = 0.0
    for x in box_points(rng, cfg, n_points):
        x = np.maximum(x, 2 * h)
        for name in NAMES:
            comp = dc.component(name)
            g = comp.derivatives(x, hessian=False)[1]
            err = np.abs(fd_gradient(comp, x, h) - g) * scale
            ref = np.max(np.abs(g) * scale, axis=1, keepdims=True)
            worst = max(worst, float(np.max(err / np.maximum(ref, 1e-300))))
    return worst


def majorization_worst(dc, cfg, rng, n_points=1000, feasible=False):
    """(min Taylor gap over sampled points, max gap at the anchor) for f2, g2 and rcc2."""
    draw = (lambda: random_alloc(rng, cfg).as_matrix()) if feasible else \
        (lambda: box_points(rng, cfg, 1)[0])
    worst, tangency = np.inf, 0.0
    anchor_x = draw()
    anchor = dc.linearize(anchor_x, names=("f2", "g2", "rcc2"))
    for name in ("f2", "g2", "rcc2"):
        at = dc.taylor_upper(name, anchor_x, anchor) - dc.eval_components(anchor_x, (name,))[name]
        tangency = max(tangency, float(np.max(np.abs(at))))
    for _ in range(n_points):
        x = draw()
        for name in ("f2", "g2", "rcc2"):
            gap = dc.taylor_upper(name, x, anchor) - dc.eval_components(x, (name,))[name]
            worst = min(worst, float(gap.min()))
    return worst, tangency


def objective_bound(g, cfg):
    """Upper bound on any inner objective value: max_i e_i P_CBS / (sigma^2 ln 2)."""
    return float(np.max(g.e)) * cfg.p_cbs_total / (cfg.sigma2 * np.log(2))


@pytest.fixture
def cfg():
    return SystemConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
