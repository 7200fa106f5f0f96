"""Two-tier SEE maximization: Dinkelbach on the ratio, SCA on the parametric problem."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .beamforming import BeamformerSet, build_beamformers, effective_gains, sampled_gains
from .channels import ChannelSet
from .config import SystemConfig
from .dc import DcFunctions
from .metrics import PowerAllocation, RateBundle, see
from .solver import (InfeasibleError, PowerProblem, SubproblemSpec, feasibility_phase,
                     solve_subproblem)


@dataclass
class OptimizerTrace:
    """Outer rows ``(m, eta_m, f(eta_m))`` and, per outer step, inner rows ``(n, f_n, x_n)``.

    ``eta_final`` is the ratio at the returned allocation, i.e. the parameter
    the next outer step would have used.
    """

    outer: list = field(default_factory=list)
    inner: list = field(default_factory=list)
    eta_final: float = float("nan")
    wall_time: float = 0.0
    status: str = "running"
    start: str = "feasibility"

    @property
    def etas(self) -> np.ndarray:
        return np.array([row[1] for row in self.outer] + [self.eta_final])

    def inner_values(self):
        return [np.array([row[1] for row in steps]) for steps in self.inner]

    @property
    def n_outer(self) -> int:
        return len(self.outer)

    @property
    def n_inner(self) -> int:
        return sum(len(steps) - 1 for steps in self.inner)


@dataclass
class SeeResult:
    allocation: PowerAllocation
    see: float
    r_sec: float
    p_tot: float
    trace: OptimizerTrace
    converged: bool
    residual: float
    eta: float
    status: str
    rates: RateBundle | None = None

    @property
    def outer_iters(self) -> int:
        return self.trace.n_outer

    @property
    def inner_iters(self) -> int:
        return self.trace.n_inner


def _lin_names(problem: PowerProblem):
    names = [problem.numerator_pair[1]]
    if problem.cu_active and "f2" not in names:
        names.append("f2")
    if problem.pu_active:
        names.append("g2")
    return tuple(names)


def sca_inner(problem: PowerProblem, eta: float, anchor0, cfg: SystemConfig):
    """Iterate the convexified subproblem from a feasible anchor to a fixed point.

    Stops when successive parametric values differ by less than epsilon or
    after ``n_max`` solves. Returns ``(x, f, rows)`` with rows ``(n, f_n, x_n)``
    including the starting anchor as ``n = 0``.
    """
    x = np.array(anchor0.as_matrix() if isinstance(anchor0, PowerAllocation) else anchor0, float)
    f = problem.parametric(x, eta)
    rows = [(0, f, x.copy())]
    names = _lin_names(problem)
    for n in range(1, cfg.n_max + 1):
        spec = SubproblemSpec(problem, eta, problem.dc.linearize(x, names=names))
        rep = solve_subproblem(spec, tol=cfg.solver_tol)
        if rep.status == "infeasible":
            raise InfeasibleError("subproblem infeasible at the SCA anchor")
        x_new = rep.solution.as_matrix()
        f_new = problem.parametric(x_new, eta)
        rows.append((n, f_new, x_new.copy()))
        done = abs(f_new - f) < cfg.sca_epsilon
        x, f = x_new, f_new
        if done:
            break
    return x, f, rows


def dinkelbach_outer(problem: PowerProblem, cfg: SystemConfig, x_init, eta0: float = 0.0,
                     trace: OptimizerTrace | None = None):
    """Ratio iteration eta <- N(x)/D(x) around :func:`sca_inner`.

    With warm starts each SCA run is anchored at the previous solution, which
    keeps the eta sequence nondecreasing. Returns ``(x, trace, converged, residual)``.
    """
    trace = trace or OptimizerTrace()
    x0 = np.array(x_init.as_matrix() if isinstance(x_init, PowerAllocation) else x_init, float)
    x, eta = x0, float(eta0)
    converged, residual = False, float("inf")
    for m in range(cfg.m_max):
        anchor = x if cfg.warm_start else x0
        x, f, rows = sca_inner(problem, eta, anchor, cfg)
        trace.outer.append((m, eta, f))
        trace.inner.append(rows)
        residual = abs(f)
        eta_new = problem.numerator(x) / problem.denominator(x)
        step = eta_new - eta
        eta = eta_new
        if abs(step) < cfg.epsilon:
            converged = True
            break
    trace.eta_final = eta
    trace.status = "converged" if converged else "max-iter"
    return x, trace, converged, residual


def repair(problem: PowerProblem, x) -> np.ndarray:
    """Switch off CBS power on subcarriers whose secrecy term is negative.

    Only touches subcarriers where both CBS columns are free or already zero,
    and only when the thresholds stay satisfied. Never lowers the clamped SEE.
    """
    x = np.array(x, float)
    if problem.objective != "see" or problem.cu_active:
        return x
    cbs_movable = all(problem.free[k] or np.all(problem.x_fixed[:, k] == 0) for k in (1, 2))
    if not cbs_movable:
        return x
    bad = problem.dc.cu_secrecy(x) < 0
    if not bad.any():
        return x
    y = x.copy()
    y[bad, 1:] = 0.0
    if problem.pu_active and problem.constraint_slack(y).min() < 0:
        return x
    return y


def _finish(problem: PowerProblem, gains, cfg, x, trace, converged, residual, t0):
    y = repair(problem, x)
    if see(gains, PowerAllocation.from_matrix(y), cfg.p_b).see > see(
            gains, PowerAllocation.from_matrix(x), cfg.p_b).see:
        x = y
    alloc = PowerAllocation.from_matrix(x)
    rb = see(gains, alloc, cfg.p_b)
    trace.wall_time = time.perf_counter() - t0
    status = "optimal" if converged else "max-iter"
    return SeeResult(alloc, rb.see, rb.r_sec, rb.p_tot, trace, converged, residual,
                     trace.eta_final, status, rb)


def candidate_ok(problem: PowerProblem, x) -> bool:
    free = problem.free_mask
    if not np.allclose(x[~free], problem.x_fixed[~free], rtol=0, atol=1e-12):
        return False
    if problem.budget_violation(x) > 1e-9:
        return False
    slack = problem.constraint_slack(x)
    return slack.size == 0 or slack.min() >= 0


def run_fractional(problem: PowerProblem, gains, cfg: SystemConfig, candidates=()) -> SeeResult:
    """Standard Dinkelbach run plus an optional polish from the best candidate allocation.

    A candidate that beats the standard result is repaired and used as the
    anchor of a second run whose eta starts at the candidate's own ratio, so
    the returned SEE is at least the best feasible candidate's.
    """
    t0 = time.perf_counter()
    x_init = feasibility_phase(problem, tol=cfg.solver_tol, max_rounds=cfg.n_max)
    x, trace, conv, res = dinkelbach_outer(problem, cfg, x_init)
    best = _finish(problem, gains, cfg, x, trace, conv, res, t0)
    if not (cfg.polish and problem.objective == "see"):
        return best
    pool = []
    for k, cand in enumerate(candidates):
        c = np.array(cand.as_matrix() if isinstance(cand, PowerAllocation) else cand, float)
        if not candidate_ok(problem, c):
            continue
        c = repair(problem, c)
        pool.append((see(gains, PowerAllocation.from_matrix(c), cfg.p_b).see, k, c))
    if not pool:
        return best
    val, k, c = max(pool, key=lambda item: item[0])
    if val <= best.see:
        return best
    t1 = time.perf_counter()
    eta0 = problem.numerator(c) / problem.denominator(c)
    x, trace, conv, res = dinkelbach_outer(problem, cfg, c, eta0=eta0,
                                           trace=OptimizerTrace(start=f"candidate:{k}"))
    polished = _finish(problem, gains, cfg, x, trace, conv, res, t1)
    polished.trace.wall_time += best.trace.wall_time
    return polished if polished.see >= best.see else best


def equal_allocation(cfg: SystemConfig, p_p: float | None = None) -> PowerAllocation:
    """P_s = P_z = P_CBS/(2I) and a fixed per-subcarrier P_p (default the fixed PBS level)."""
    i = cfg.n_sub
    pp = cfg.fixed_pbs_power if p_p is None else p_p
    return PowerAllocation(np.full(i, pp), np.full(i, cfg.p_cbs_total / (2 * i)),
                           np.full(i, cfg.p_cbs_total / (2 * i)))


def icsi_seem(channels: ChannelSet, cfg: SystemConfig, beams: BeamformerSet | None = None,
              candidates=()) -> SeeResult:
    """Joint SEE maximization with the eavesdropper channel known."""
    beams = beams or build_beamformers(channels, "icsi")
    gains = effective_gains(channels, beams)
    problem = PowerProblem.from_config(DcFunctions(gains), cfg)
    pool = [equal_allocation(cfg)] if cfg.fixed_pbs_power * cfg.n_sub <= cfg.p_pbs_total else []
    return run_fractional(problem, gains, cfg, candidates=pool + list(candidates))


def scsi_gains(channels: ChannelSet, samples, cfg: SystemConfig, beams: BeamformerSet):
    h_pe_s, h_ce_s = samples
    if not cfg.scsi_expect_pe:
        h_pe_s = np.broadcast_to(channels.h_pe[:, None], h_pe_s.shape)
    return sampled_gains(channels, beams, h_pe_s, h_ce_s)


def scsi_seem(channels: ChannelSet, samples, cfg: SystemConfig, beams: BeamformerSet | None = None,
              candidates=(), trial: int = 0) -> SeeResult:
    """SEE maximization against sample-averaged eavesdropper rates.

    ``samples`` is ``(h_pe, h_ce)`` with shapes (I, M, N_E, N_P) and (I, M, N_E, N_C),
    frozen for the whole run. Rates and SEE in the result are the
    sample-average model values; the true ED channel in ``channels`` is not used.
    """
    beams = beams or build_beamformers(channels, "scsi", seed=cfg.seed, trial=trial)
    gains = scsi_gains(channels, samples, cfg, beams)
    problem = PowerProblem.from_config(DcFunctions(gains), cfg)
    pool = [equal_allocation(cfg)] if cfg.fixed_pbs_power * cfg.n_sub <= cfg.p_pbs_total else []
    return run_fractional(problem, gains, cfg, candidates=pool + list(candidates))
