"""Seeded Rayleigh channel realizations for the six links of the scenario."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SystemConfig

# stream tags mixed into the RNG key; values are part of the reproducibility contract
_STREAM = {"pp": 1, "pc": 2, "pe": 3, "cp": 4, "cc": 5, "ce": 6,
           "ed_samples": 11, "scsi_an": 12}


def stream(seed: int, trial: int, tag: str, sub: int) -> np.random.Generator:
    """Counter-based generator keyed by (seed, trial, stream, subcarrier).

    Draws for one key never depend on how many other keys were used, so
    trials can be generated in any order or in parallel.
    """
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(trial, _STREAM[tag], sub))
    return np.random.Generator(np.random.Philox(ss))


def complex_gaussian(rng: np.random.Generator, shape, variance: float) -> np.ndarray:
    """CN(0, variance) entries."""
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ChannelSet:
    """Per-subcarrier channels. Row vectors are stored as 1-D arrays.

    Shapes: h_pp, h_pc (I, N_P); h_pe (I, N_E, N_P); h_cp, h_cc (I, N_C);
    h_ce (I, N_E, N_C).
    """

    h_pp: np.ndarray
    h_pc: np.ndarray
    h_pe: np.ndarray
    h_cp: np.ndarray
    h_cc: np.ndarray
    h_ce: np.ndarray
    sigma2: float

    @property
    def n_sub(self) -> int:
        return self.h_pp.shape[0]

    @property
    def n_e(self) -> int:
        return self.h_pe.shape[1]

    def with_eavesdropper(self, h_pe: np.ndarray, h_ce: np.ndarray) -> "ChannelSet":
        return ChannelSet(self.h_pp, self.h_pc, _readonly(np.array(h_pe)), self.h_cp,
                          self.h_cc, _readonly(np.array(h_ce)), self.sigma2)


def _link_shape(cfg: SystemConfig, link: str):
    return {
        "pp": (cfg.n_p,), "pc": (cfg.n_p,), "pe": (cfg.n_e, cfg.n_p),
        "cp": (cfg.n_c,), "cc": (cfg.n_c,), "ce": (cfg.n_e, cfg.n_c),
    }[link]


def draw_channel_set(cfg: SystemConfig, trial_index: int) -> ChannelSet:
    arrays = {}
    for link in ("pp", "pc", "pe", "cp", "cc", "ce"):
        var = cfg.path_gain(link)
        shape = _link_shape(cfg, link)
        arrays[link] = _readonly(np.stack([
            complex_gaussian(stream(cfg.seed, trial_index, link, i), shape, var)
            for i in range(cfg.n_sub)
        ]))
    return ChannelSet(
        h_pp=arrays["pp"], h_pc=arrays["pc"], h_pe=arrays["pe"],
        h_cp=arrays["cp"], h_cc=arrays["cc"], h_ce=arrays["ce"],
        sigma2=cfg.sigma2,
    )


def draw_eavesdropper_samples(cfg: SystemConfig, trial_index: int, n_samples: int | None = None):
    """Independent draws of the ED links from their known statistics.

    Returns ``(h_pe, h_ce)`` with shapes (I, M, N_E, N_P) and (I, M, N_E, N_C).
    This stream is disjoint from the one used for the true ED channel.
    """
    m = cfg.scsi_samples if n_samples is None else n_samples
    if m < 1:
        raise ValueError("need at least one eavesdropper sample")
    h_pe, h_ce = [], []
    for i in range(cfg.n_sub):
        rng = stream(cfg.seed, trial_index, "ed_samples", i)
        h_pe.append(complex_gaussian(rng, (m, cfg.n_e, cfg.n_p), cfg.path_gain("pe")))
        h_ce.append(complex_gaussian(rng, (m, cfg.n_e, cfg.n_c), cfg.path_gain("ce")))
    return np.stack(h_pe), np.stack(h_ce)
