"""Comparison schemes: rate-only, energy-efficiency-only, no-AN and restricted power blocks."""

from __future__ import annotations

import enum
import time

import numpy as np

from .beamforming import BeamformerSet, build_beamformers, effective_gains
from .channels import ChannelSet
from .config import ConfigError, SystemConfig
from .dc import DcFunctions
from .metrics import PowerAllocation, see
from .optimizer import (OptimizerTrace, SeeResult, candidate_ok, equal_allocation, icsi_seem,
                        run_fractional, sca_inner, scsi_seem)
from .solver import PowerProblem, feasibility_phase


class SchemeId(enum.Enum):
    ICSI_SEEM = "icsi_seem"
    SCSI_SEEM = "scsi_seem"
    SRM = "srm"
    EEM = "eem"
    SEEM_NO_AN = "seem_no_an"
    CBS_ONLY = "cbs_only"
    PBS_ONLY = "pbs_only"
    EQUAL = "equal"

    @classmethod
    def parse(cls, name: str) -> "SchemeId":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ConfigError(f"unknown scheme {name!r}; expected one of "
                              f"{', '.join(s.value for s in cls)}") from None


def _gains(channels, beams):
    beams = beams or build_beamformers(channels, "icsi")
    return effective_gains(channels, beams)


def _fixed_pbs(cfg: SystemConfig) -> np.ndarray:
    if cfg.fixed_pbs_power * cfg.n_sub > cfg.p_pbs_total * (1 + 1e-12):
        raise ConfigError("fixed per-subcarrier PBS power exceeds the PBS budget")
    return np.full(cfg.n_sub, cfg.fixed_pbs_power)


def srm(channels: ChannelSet, cfg: SystemConfig, beams: BeamformerSet | None = None,
        candidates=()) -> SeeResult:
    """Secrecy-rate maximization: SCA at eta = 0, SEE evaluated afterwards.

    With ``polish`` on, a second SCA run starts from the candidate with the
    highest secrecy rate and the better of the two runs is kept.
    """
    t0 = time.perf_counter()
    gains = _gains(channels, beams)
    problem = PowerProblem.from_config(DcFunctions(gains), cfg)
    x0 = feasibility_phase(problem, tol=cfg.solver_tol, max_rounds=cfg.n_max)
    starts = [("feasibility", x0)]
    if cfg.polish:
        pool = []
        for k, cand in enumerate(candidates):
            c = np.array(cand.as_matrix() if isinstance(cand, PowerAllocation) else cand, float)
            if candidate_ok(problem, c):
                pool.append((see(gains, PowerAllocation.from_matrix(c), cfg.p_b).r_sec, k, c))
        if pool:
            _, k, c = max(pool, key=lambda item: item[0])
            starts.append((f"candidate:{k}", c))
    best = None
    for label, start in starts:
        x, f, rows = sca_inner(problem, 0.0, start, cfg)
        alloc = PowerAllocation.from_matrix(x)
        rb = see(gains, alloc, cfg.p_b)
        if best is None or rb.r_sec > best[1].r_sec:
            best = (alloc, rb, f, rows, label)
    alloc, rb, f, rows, label = best
    converged = len(rows) - 1 < cfg.n_max or abs(rows[-1][1] - rows[-2][1]) < cfg.sca_epsilon
    trace = OptimizerTrace(outer=[(0, 0.0, f)], inner=[rows], eta_final=rb.see,
                           status="converged" if converged else "max-iter", start=label)
    trace.wall_time = time.perf_counter() - t0
    return SeeResult(alloc, rb.see, rb.r_sec, rb.p_tot, trace, converged, 0.0, rb.see,
                     "optimal" if converged else "max-iter", rb)


def eem(channels: ChannelSet, cfg: SystemConfig, beams: BeamformerSet | None = None) -> SeeResult:
    """Maximize CU rate per CBS watt (sum R_cc / P_tot); SEE evaluated afterwards.

    ``eta`` in the result is the optimized CU-rate ratio, not the SEE.
    """
    gains = _gains(channels, beams)
    problem = PowerProblem.from_config(DcFunctions(gains), cfg, objective="ee")
    return run_fractional(problem, gains, cfg)


def seem_no_an(channels: ChannelSet, cfg: SystemConfig, beams: BeamformerSet | None = None,
               candidates=()) -> SeeResult:
    """Joint SEE maximization with the AN power held at zero."""
    gains = _gains(channels, beams)
    problem = PowerProblem.from_config(DcFunctions(gains), cfg, free=(True, True, False))
    return run_fractional(problem, gains, cfg, candidates=candidates)


def cbs_only(channels: ChannelSet, cfg: SystemConfig, beams: BeamformerSet | None = None,
             candidates=()) -> SeeResult:
    """Optimize the CBS powers with P_p fixed per subcarrier (default 10 dBm)."""
    gains = _gains(channels, beams)
    fixed = np.zeros((cfg.n_sub, 3))
    fixed[:, 0] = _fixed_pbs(cfg)
    problem = PowerProblem.from_config(DcFunctions(gains), cfg, free=(False, True, True),
                                       x_fixed=fixed)
    return run_fractional(problem, gains, cfg,
                          candidates=[equal_allocation(cfg)] + list(candidates))


def pbs_only(channels: ChannelSet, cfg: SystemConfig, beams: BeamformerSet | None = None) -> SeeResult:
    """Optimize P_p with the CBS powers split equally, P_s = P_z = P_CBS/(2I)."""
    gains = _gains(channels, beams)
    fixed = equal_allocation(cfg).as_matrix()
    fixed[:, 0] = 0.0
    problem = PowerProblem.from_config(DcFunctions(gains), cfg, free=(True, False, False),
                                       x_fixed=fixed)
    return run_fractional(problem, gains, cfg)


def equal_power(channels: ChannelSet, cfg: SystemConfig,
                beams: BeamformerSet | None = None) -> SeeResult:
    """Closed-form split: P_s = P_z = P_CBS/(2I), P_p fixed per subcarrier."""
    t0 = time.perf_counter()
    gains = _gains(channels, beams)
    _fixed_pbs(cfg)
    alloc = equal_allocation(cfg)
    rb = see(gains, alloc, cfg.p_b)
    ok = bool(np.all(rb.sr_cu >= cfg.r_cu_min) and np.all(rb.sr_pu >= cfg.r_pu_min))
    trace = OptimizerTrace(eta_final=rb.see, status="evaluated", start="closed-form")
    trace.wall_time = time.perf_counter() - t0
    return SeeResult(alloc, rb.see, rb.r_sec, rb.p_tot, trace, True, 0.0, rb.see,
                     "optimal" if ok else "infeasible", rb)


def run_scheme(scheme: SchemeId, channels: ChannelSet, cfg: SystemConfig, *,
               beams: BeamformerSet | None = None, samples=None, trial: int = 0,
               candidates=()) -> SeeResult:
    """Dispatch on :class:`SchemeId`. ``samples`` is needed for SCSI-SEEM only."""
    if scheme is SchemeId.ICSI_SEEM:
        return icsi_seem(channels, cfg, beams=beams, candidates=candidates)
    if scheme is SchemeId.SCSI_SEEM:
        if samples is None:
            raise ValueError("SCSI-SEEM needs an eavesdropper sample set")
        return scsi_seem(channels, samples, cfg, candidates=candidates, trial=trial)
    if scheme is SchemeId.SRM:
        return srm(channels, cfg, beams, candidates=candidates)
    if scheme is SchemeId.EEM:
        return eem(channels, cfg, beams)
    if scheme is SchemeId.SEEM_NO_AN:
        return seem_no_an(channels, cfg, beams, candidates=candidates)
    if scheme is SchemeId.CBS_ONLY:
        return cbs_only(channels, cfg, beams, candidates=candidates)
    if scheme is SchemeId.PBS_ONLY:
        return pbs_only(channels, cfg, beams)
    if scheme is SchemeId.EQUAL:
        return equal_power(channels, cfg, beams)
    raise ValueError(f"unhandled scheme {scheme!r}")
