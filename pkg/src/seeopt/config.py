"""Scenario parameters and physical-unit helpers.

All powers are stored in linear watts; dBm only appears at the
config-file/CLI boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

LINKS = ("pp", "pc", "pe", "cp", "cc", "ce")


class ConfigError(ValueError):
    """Invalid scenario or experiment configuration."""


def dbm_to_watt(x):
    return 10.0 ** ((x - 30.0) / 10.0)


def watt_to_dbm(x):
    if x <= 0:
        raise ValueError(f"power must be positive to express in dBm, got {x!r}")
    return 10.0 * math.log10(x) + 30.0


def path_loss_db(d):
    """Large-scale gain in dB at distance ``d`` metres: -34.5 - 38 log10(d)."""
    if not d > 0:
        raise ValueError(f"distance must be positive, got {d!r}")
    return -34.5 - 38.0 * math.log10(d)


def path_loss_linear(d):
    return 10.0 ** (path_loss_db(d) / 10.0)


def _default_distances():
    return {link: 500.0 for link in LINKS}


@dataclass(frozen=True)
class SystemConfig:
    """One downlink scenario: antennas, subcarriers, budgets, thresholds, tolerances.

    Defaults are the desk-scale setting (4 subcarriers, 4/4/2 antennas):
    40 dBm circuit power, 10 MHz subcarriers, -174 dBm/Hz noise, 500 m links.
    """

    n_sub: int = 4
    n_p: int = 4
    n_c: int = 4
    n_e: int = 2
    p_pbs_total: float = dbm_to_watt(30.0)
    p_cbs_total: float = dbm_to_watt(40.0)
    p_b: float = dbm_to_watt(40.0)
    bandwidth: float = 10e6
    n0: float = dbm_to_watt(-174.0)
    r_cu_min: float = 0.0
    r_pu_min: float = 0.0
    distances: dict = field(default_factory=_default_distances)
    epsilon: float = 1e-3
    # SCA stopping threshold on |f^n - f^(n-1)|; None uses epsilon
    inner_epsilon: float | None = 1e-4
    m_max: int = 100
    n_max: int = 100
    scsi_samples: int = 64
    seed: int = 0
    # per-subcarrier PBS power used by the fixed-PBS baselines
    fixed_pbs_power: float = dbm_to_watt(10.0)
    # re-anchor each outer step at the previous solution instead of the start point
    warm_start: bool = True
    # SCSI expectation taken over both ED links (True) or over h_ce only
    scsi_expect_pe: bool = True
    solver_tol: float = 1e-6
    # re-run Dinkelbach from the best nested-scheme allocation when it beats the plain run
    polish: bool = True

    def __post_init__(self):
        for name in ("n_sub", "n_p", "n_c", "n_e", "m_max", "n_max", "scsi_samples"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if self.n_c < 3:
            raise ConfigError(f"n_c must be >= 3 for a nonempty AN null space, got {self.n_c}")
        for name in ("p_pbs_total", "p_cbs_total", "p_b", "bandwidth", "n0", "fixed_pbs_power"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be strictly positive, got {v!r}")
        for name in ("r_cu_min", "r_pu_min"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ConfigError(f"{name} must be >= 0, got {v!r}")
        if not (self.epsilon > 0):
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon!r}")
        if self.inner_epsilon is not None and not (self.inner_epsilon > 0):
            raise ConfigError(f"inner_epsilon must be > 0, got {self.inner_epsilon!r}")
        if not (self.solver_tol > 0):
            raise ConfigError(f"solver_tol must be > 0, got {self.solver_tol!r}")
        if set(self.distances) != set(LINKS):
            raise ConfigError(f"distances must cover exactly the links {LINKS}")
        for link, d in self.distances.items():
            if not d > 0:
                raise ConfigError(f"distance for link {link} must be > 0, got {d!r}")
        if not (0 <= self.seed < 2**64):
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")

    @property
    def sca_epsilon(self) -> float:
        return self.epsilon if self.inner_epsilon is None else self.inner_epsilon

    @property
    def sigma2(self) -> float:
        """Per-receiver noise power in watts (bandwidth times noise density)."""
        return self.bandwidth * self.n0

    def path_gain(self, link: str) -> float:
        return path_loss_linear(self.distances[link])

    def with_updates(self, **changes) -> "SystemConfig":
        return replace(self, **changes)
