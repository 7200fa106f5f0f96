"""Rates, power consumption and secrecy energy efficiency for a power allocation.

Rates are in bits/s/Hz, powers in watts, SEE in bits/s/Hz/W (equivalently
bits/J/Hz). Gains may carry an eavesdropper sample axis, in which case the
ED rates are returned per sample with shape (I, M).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .beamforming import EffectiveGains
from .config import ConfigError


@dataclass(frozen=True)
class PowerAllocation:
    """Per-subcarrier PBS data, CBS data and CBS artificial-noise powers."""

    p_p: np.ndarray
    p_s: np.ndarray
    p_z: np.ndarray

    def __post_init__(self):
        for name in ("p_p", "p_s", "p_z"):
            arr = np.array(getattr(self, name), dtype=float).ravel()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if not (self.p_p.shape == self.p_s.shape == self.p_z.shape):
            raise ValueError("P_p, P_s, P_z must have the same length")
        m = self.as_matrix()
        if not (np.all(np.isfinite(m)) and np.all(m >= 0)):
            raise ValueError("powers must be finite and nonnegative")

    @classmethod
    def from_matrix(cls, x) -> "PowerAllocation":
        """Build from an (I, 3) array with columns (P_p, P_s, P_z)."""
        x = np.asarray(x, dtype=float)
        return cls(x[:, 0], x[:, 1], x[:, 2])

    @classmethod
    def zeros(cls, n_sub: int) -> "PowerAllocation":
        z = np.zeros(n_sub)
        return cls(z, z, z)

    def as_matrix(self) -> np.ndarray:
        return np.stack([self.p_p, self.p_s, self.p_z], axis=1)

    @property
    def n_sub(self) -> int:
        return self.p_p.size

    @property
    def cbs_power(self) -> float:
        return float(np.sum(self.p_s) + np.sum(self.p_z))

    def budget_feasible(self, p_pbs_total: float, p_cbs_total: float, atol: float = 1e-9) -> bool:
        return bool(np.all(self.as_matrix() >= 0)
                    and np.sum(self.p_p) <= p_pbs_total + atol
                    and self.cbs_power <= p_cbs_total + atol)


@dataclass(frozen=True)
class RateBundle:
    r_pp: np.ndarray
    r_cc: np.ndarray
    r_pe: np.ndarray
    r_ce: np.ndarray
    sr_cu: np.ndarray
    sr_pu: np.ndarray
    r_sec: float
    p_tot: float
    see: float


def hermitian_logdet(m: np.ndarray) -> np.ndarray:
    """Natural log-determinant of a stack of Hermitian positive-definite matrices."""
    chol = np.linalg.cholesky(m)
    diag = np.real(np.diagonal(chol, axis1=-2, axis2=-1))
    return 2.0 * np.sum(np.log(diag), axis=-1)


def _ed_covariances(gains: EffectiveGains, alloc: PowerAllocation):
    """Return the ED covariance matrices with and without each useful signal, (I, M, N, N)."""
    u_c, u_f, u_g = gains.ed_vectors()
    pp = alloc.p_p[:, None, None, None]
    ps = alloc.p_s[:, None, None, None]
    pz = alloc.p_z[:, None, None, None]

    def outer(u):
        return u[..., :, None] * u[..., None, :].conj()

    eye = gains.sigma2 * np.eye(gains.n_e)
    cc, ff, gg = outer(u_c) * pp, outer(u_f) * ps, outer(u_g) * pz
    omega = cc + ff + gg + eye
    return omega, cc + gg + eye, ff + gg + eye


def _squeeze(rate, gains):
    return rate if gains.sampled else rate[:, 0]


def sinr_pu(gains: EffectiveGains, alloc: PowerAllocation) -> np.ndarray:
    return gains.a * alloc.p_p / (gains.d * alloc.p_s + gains.leak_pu * alloc.p_z + gains.sigma2)


def sinr_cu(gains: EffectiveGains, alloc: PowerAllocation) -> np.ndarray:
    return gains.e * alloc.p_s / (gains.b * alloc.p_p + gains.leak_cu * alloc.p_z + gains.sigma2)


def rate_pp(gains, alloc) -> np.ndarray:
    return np.log2(1.0 + sinr_pu(gains, alloc))


def rate_cc(gains, alloc) -> np.ndarray:
    return np.log2(1.0 + sinr_cu(gains, alloc))


def rate_pe(gains: EffectiveGains, alloc: PowerAllocation) -> np.ndarray:
    """PBS->ED rate, log2 det(Omega) - log2 det(f P_s + g P_z + s2 I)."""
    omega, _, no_p = _ed_covariances(gains, alloc)
    r = (hermitian_logdet(omega) - hermitian_logdet(no_p)) / np.log(2.0)
    return _squeeze(np.maximum(r, 0.0), gains)


def rate_ce(gains: EffectiveGains, alloc: PowerAllocation) -> np.ndarray:
    """CBS->ED rate, log2 det(Omega) - log2 det(c P_p + g P_z + s2 I)."""
    omega, no_s, _ = _ed_covariances(gains, alloc)
    r = (hermitian_logdet(omega) - hermitian_logdet(no_s)) / np.log(2.0)
    return _squeeze(np.maximum(r, 0.0), gains)


def expected_rate_pe(gains: EffectiveGains, alloc: PowerAllocation) -> np.ndarray:
    """Sample-average PBS->ED rate over the eavesdropper sample axis."""
    _check_samples(gains)
    return np.mean(rate_pe(gains, alloc), axis=1)


def expected_rate_ce(gains: EffectiveGains, alloc: PowerAllocation) -> np.ndarray:
    _check_samples(gains)
    return np.mean(rate_ce(gains, alloc), axis=1)


def _check_samples(gains):
    if not gains.sampled:
        raise ConfigError("expected rates need gains with an eavesdropper sample axis")
    if gains.n_samples < 1:
        raise ConfigError("empty eavesdropper sample set")


def total_power(alloc: PowerAllocation, p_b: float) -> float:
    """CBS consumption: transmit data plus AN power plus circuit power. P_p is not counted."""
    return alloc.cbs_power + p_b


def secrecy_rate(gains: EffectiveGains, alloc: PowerAllocation):
    """Per-subcarrier clamped CU and PU secrecy rates and their CU sum.

    With sampled gains the ED rates are replaced by their sample averages.
    Returns ``(r_pp, r_cc, r_pe, r_ce, sr_cu, sr_pu, r_sec)``.
    """
    if gains.sampled:
        r_pe, r_ce = expected_rate_pe(gains, alloc), expected_rate_ce(gains, alloc)
    else:
        r_pe, r_ce = rate_pe(gains, alloc), rate_ce(gains, alloc)
    r_pp, r_cc = rate_pp(gains, alloc), rate_cc(gains, alloc)
    sr_cu = np.maximum(r_cc - r_ce, 0.0)
    sr_pu = np.maximum(r_pp - r_pe, 0.0)
    return r_pp, r_cc, r_pe, r_ce, sr_cu, sr_pu, float(np.sum(sr_cu))


def see(gains: EffectiveGains, alloc: PowerAllocation, p_b: float) -> RateBundle:
    r_pp, r_cc, r_pe, r_ce, sr_cu, sr_pu, r_sec = secrecy_rate(gains, alloc)
    p_tot = total_power(alloc, p_b)
    return RateBundle(r_pp, r_cc, r_pe, r_ce, sr_cu, sr_pu, r_sec, p_tot, r_sec / p_tot)
