"""MRT and null-space artificial-noise beamformers, and the effective gains they induce."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channels import ChannelSet, stream
from .config import ConfigError


class DegenerateChannelError(ValueError):
    """A channel vector is numerically zero."""


class DegenerateANError(ValueError):
    """The eavesdropper channel has no component in the legitimate null space."""


def mrt_vector(h) -> np.ndarray:
    """Unit-norm matched filter ``h^H / ||h||`` for a row channel ``h``."""
    h = np.asarray(h, dtype=complex).ravel()
    nrm = np.linalg.norm(h)
    if not nrm > 0:
        raise DegenerateChannelError("cannot build an MRT beamformer for a zero channel")
    return h.conj() / nrm


def _row_space(h_cp, h_cc):
    stacked = np.vstack([np.asarray(h_cp, dtype=complex).ravel(),
                         np.asarray(h_cc, dtype=complex).ravel()])
    n_c = stacked.shape[1]
    if n_c < 3:
        raise ConfigError(f"null-space AN needs at least 3 CBS antennas, got {n_c}")
    _, s, vh = np.linalg.svd(stacked)
    if s[0] == 0:
        raise DegenerateChannelError("both CBS->PU and CBS->CU channels are zero")
    rank = int(np.sum(s > s[0] * max(stacked.shape) * np.finfo(float).eps))
    return vh, rank


def null_space_basis(h_cp, h_cc) -> np.ndarray:
    """Orthonormal basis (N_C x k) of the null space of ``[h_cp; h_cc]``."""
    vh, rank = _row_space(h_cp, h_cc)
    return vh[rank:].conj().T


def an_projector(h_cp, h_cc) -> np.ndarray:
    """Orthogonal projector onto the null space of the stacked CBS->PU/CU rows."""
    vh, rank = _row_space(h_cp, h_cc)
    v = vh[:rank].conj().T
    return np.eye(vh.shape[0]) - v @ v.conj().T


def an_beamformer_icsi(h_cp, h_cc, h_ce) -> np.ndarray:
    """AN direction inside the legitimate null space, steered at the ED.

    Uses the dominant left singular vector of ``P h_ce^H``; for a
    single-antenna ED this is the normalised projected channel.
    """
    proj = an_projector(h_cp, h_cc)
    h_ce = np.atleast_2d(np.asarray(h_ce, dtype=complex))
    m = proj @ h_ce.conj().T
    u, s, _ = np.linalg.svd(m)
    if not s[0] > 1e-12 * np.linalg.norm(h_ce):
        raise DegenerateANError("eavesdropper channel lies in the span of the legitimate channels")
    v = proj @ u[:, 0]
    return v / np.linalg.norm(v)


def an_beamformer_scsi(h_cp, h_cc, rng: np.random.Generator) -> np.ndarray:
    """Isotropically random unit vector in the legitimate null space."""
    basis = null_space_basis(h_cp, h_cc)
    k = basis.shape[1]
    z = rng.standard_normal(k) + 1j * rng.standard_normal(k)
    v = basis @ z
    return v / np.linalg.norm(v)


@dataclass(frozen=True)
class BeamformerSet:
    v_p: np.ndarray  # (I, N_P)
    v_s: np.ndarray  # (I, N_C)
    v_z: np.ndarray  # (I, N_C)


def build_beamformers(channels: ChannelSet, mode: str = "icsi", *, seed: int = 0,
                      trial: int = 0) -> BeamformerSet:
    """MRT for the data streams; AN per ``mode`` ("icsi" steered, "scsi" isotropic)."""
    v_p, v_s, v_z = [], [], []
    for i in range(channels.n_sub):
        v_p.append(mrt_vector(channels.h_pp[i]))
        v_s.append(mrt_vector(channels.h_cc[i]))
        if mode == "icsi":
            try:
                v = an_beamformer_icsi(channels.h_cp[i], channels.h_cc[i], channels.h_ce[i])
            except DegenerateANError:
                v = null_space_basis(channels.h_cp[i], channels.h_cc[i])[:, 0]
        elif mode == "scsi":
            v = an_beamformer_scsi(channels.h_cp[i], channels.h_cc[i],
                                   stream(seed, trial, "scsi_an", i))
        else:
            raise ValueError(f"unknown AN mode {mode!r}")
        v_z.append(v)
    return BeamformerSet(np.array(v_p), np.array(v_s), np.array(v_z))


def _outer(u):
    return u[..., :, None] * u[..., None, :].conj()


@dataclass(frozen=True)
class EffectiveGains:
    """Scalar and N_E x N_E gains seen by the power-allocation problem.

    ``u_c``, ``u_f``, ``u_g`` are the ED-side vectors ``h_pe v_p``, ``h_ce v_s``
    and ``h_ce v_z``; ``c``, ``f``, ``g`` are their outer products. With an
    eavesdropper sample set these carry an extra sample axis: (I, M, N_E).
    ``leak_pu``/``leak_cu`` are the residual AN gains ``|h_cp v_z|^2`` and
    ``|h_cc v_z|^2`` (zero up to rounding for a null-space AN beam).
    """

    a: np.ndarray
    b: np.ndarray
    d: np.ndarray
    e: np.ndarray
    u_c: np.ndarray
    u_f: np.ndarray
    u_g: np.ndarray
    sigma2: float
    leak_pu: np.ndarray
    leak_cu: np.ndarray

    @property
    def n_sub(self) -> int:
        return self.a.shape[0]

    @property
    def sampled(self) -> bool:
        return self.u_c.ndim == 3

    @property
    def n_samples(self) -> int:
        return self.u_c.shape[1] if self.sampled else 1

    @property
    def n_e(self) -> int:
        return self.u_c.shape[-1]

    @property
    def c(self) -> np.ndarray:
        return _outer(self.u_c)

    @property
    def f(self) -> np.ndarray:
        return _outer(self.u_f)

    @property
    def g(self) -> np.ndarray:
        return _outer(self.u_g)

    def ed_vectors(self):
        """ED vectors with an explicit sample axis, shape (I, M, N_E) each."""
        if self.sampled:
            return self.u_c, self.u_f, self.u_g
        return self.u_c[:, None], self.u_f[:, None], self.u_g[:, None]

    def sample(self, m: int) -> "EffectiveGains":
        """The single-eavesdropper gains of sample ``m``."""
        if not self.sampled:
            raise ValueError("gains have no sample axis")
        return EffectiveGains(self.a, self.b, self.d, self.e, self.u_c[:, m], self.u_f[:, m],
                              self.u_g[:, m], self.sigma2, self.leak_pu, self.leak_cu)


def _gain(h, v):
    return np.abs(np.einsum("in,in->i", h, v)) ** 2


def effective_gains(channels: ChannelSet, beams: BeamformerSet) -> EffectiveGains:
    return EffectiveGains(
        a=_gain(channels.h_pp, beams.v_p),
        b=_gain(channels.h_pc, beams.v_p),
        d=_gain(channels.h_cp, beams.v_s),
        e=_gain(channels.h_cc, beams.v_s),
        u_c=np.einsum("ien,in->ie", channels.h_pe, beams.v_p),
        u_f=np.einsum("ien,in->ie", channels.h_ce, beams.v_s),
        u_g=np.einsum("ien,in->ie", channels.h_ce, beams.v_z),
        sigma2=channels.sigma2,
        leak_pu=_gain(channels.h_cp, beams.v_z),
        leak_cu=_gain(channels.h_cc, beams.v_z),
    )


def sampled_gains(channels: ChannelSet, beams: BeamformerSet, h_pe_samples: np.ndarray,
                  h_ce_samples: np.ndarray) -> EffectiveGains:
    """Gains with the ED links replaced by a sample set of shape (I, M, N_E, N)."""
    base = effective_gains(channels, beams)
    return EffectiveGains(
        a=base.a, b=base.b, d=base.d, e=base.e,
        u_c=np.einsum("imen,in->ime", h_pe_samples, beams.v_p),
        u_f=np.einsum("imen,in->ime", h_ce_samples, beams.v_s),
        u_g=np.einsum("imen,in->ime", h_ce_samples, beams.v_z),
        sigma2=channels.sigma2, leak_pu=base.leak_pu, leak_cu=base.leak_cu,
    )
