"""Difference-of-concave split of the rate expressions and its linearization.

Each concave component has the form

    log2(s2 + k . x) + log2 det(s2 I + sum_j m_j x_j u_j u_j^H)

per subcarrier, with x = (P_p, P_s, P_z), a nonnegative coefficient row k,
a 0/1 mask m over the ED vectors (u_c, u_f, u_g), and the log-det averaged
over the eavesdropper samples when gains are sampled. Internally the noise
floor is factored out, so values are ``log2(1 + k.x/s2) + log2det(I + ...)``;
the constant is added back by :meth:`DcFunctions.eval_components`.

Because every matrix is a rank-one outer product, the trace terms reduce to
``Q = U^H Omega^{-1} U``: the gradient is diag(Q)/ln2 and the Hessian is
-|Q|^2/ln2, both from one Cholesky factor per subcarrier and sample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .beamforming import EffectiveGains
from .config import ConfigError
from .metrics import PowerAllocation

LN2 = np.log(2.0)


@dataclass(frozen=True)
class ConcaveComponent:
    name: str
    coef: np.ndarray  # (I, 3), already divided by sigma2
    mask: tuple  # which of (u_c, u_f, u_g) enter the log-det; () for none
    u: np.ndarray  # (I, M, N_E, 3) ED vectors divided by sigma

    @property
    def has_logdet(self) -> bool:
        return any(self.mask)

    def _omega(self, x):
        um = self.u * (x[:, None, None, :] * np.asarray(self.mask, dtype=float))
        n_e = self.u.shape[2]
        return np.eye(n_e) + um @ self.u.conj().swapaxes(-1, -2)

    def value(self, x: np.ndarray) -> np.ndarray:
        """Component value (noise floor removed) per subcarrier for x of shape (I, 3)."""
        v = np.log1p(np.sum(self.coef * x, axis=1)) / LN2
        if self.has_logdet:
            chol = np.linalg.cholesky(self._omega(x))
            ld = 2.0 * np.sum(np.log(np.real(np.diagonal(chol, axis1=-2, axis2=-1))), axis=-1)
            v = v + np.mean(ld, axis=1) / LN2
        return v

    def derivatives(self, x: np.ndarray, hessian: bool = True):
        """Value (I,), gradient (I, 3) and optionally Hessian (I, 3, 3)."""
        s = 1.0 + np.sum(self.coef * x, axis=1)
        val = np.log(s) / LN2
        grad = self.coef / s[:, None] / LN2
        hess = None
        if hessian:
            hess = -self.coef[:, :, None] * self.coef[:, None, :] / (s**2)[:, None, None] / LN2
        if self.has_logdet:
            omega = self._omega(x)
            chol = np.linalg.cholesky(omega)
            ld = 2.0 * np.sum(np.log(np.real(np.diagonal(chol, axis1=-2, axis2=-1))), axis=-1)
            w = np.linalg.solve(omega, self.u)
            q = self.u.conj().swapaxes(-1, -2) @ w  # (I, M, 3, 3)
            mask = np.asarray(self.mask, dtype=float)
            val = val + np.mean(ld, axis=1) / LN2
            grad = grad + np.mean(np.real(np.diagonal(q, axis1=-2, axis2=-1)), axis=1) * mask / LN2
            if hessian:
                hess = hess - np.mean(np.abs(q) ** 2, axis=1) * np.outer(mask, mask) / LN2
        return val, grad, hess


# (scalar coefficient source, log-det mask) for each component
_RECIPES = {
    "f1": (("b", "e", "leak_cu"), (1, 0, 1)),
    "f2": (("b", None, "leak_cu"), (1, 1, 1)),
    "g1": (("a", "d", "leak_pu"), (0, 1, 1)),
    "g2": ((None, "d", "leak_pu"), (1, 1, 1)),
    "rcc1": (("b", "e", "leak_cu"), (0, 0, 0)),
    "rcc2": (("b", None, "leak_cu"), (0, 0, 0)),
}
# the sample-average components carry their own names in the SCSI formulation
SCSI_ALIASES = {"h1": "f1", "h2": "f2", "r1": "g1", "r2": "g2"}


@dataclass(frozen=True)
class LinearizationPoint:
    """SCA anchor with the values and gradients of the subtracted components."""

    x: np.ndarray  # (I, 3) watts
    values: dict
    grads: dict

    @property
    def allocation(self) -> PowerAllocation:
        return PowerAllocation.from_matrix(self.x)


class DcFunctions:
    """The concave components bound to one set of effective gains.

    Sampled gains give the sample-average (SCSI) components; the sample
    set is fixed for the lifetime of the object.
    """

    def __init__(self, gains: EffectiveGains):
        if gains.sampled and gains.n_samples < 1:
            raise ConfigError("empty eavesdropper sample set")
        self.gains = gains
        self.sigma2 = gains.sigma2
        self.n_sub = gains.n_sub
        self.n_e = gains.n_e
        scale = 1.0 / np.sqrt(gains.sigma2)
        u = np.stack(gains.ed_vectors(), axis=-1) * scale  # (I, M, N_E, 3)
        self.components = {}
        for name, (src, mask) in _RECIPES.items():
            coef = np.stack([np.zeros(self.n_sub) if s is None else getattr(gains, s) / gains.sigma2
                             for s in src], axis=1)
            self.components[name] = ConcaveComponent(name, coef, mask, u)

    @property
    def sampled(self) -> bool:
        return self.gains.sampled

    def component(self, name: str) -> ConcaveComponent:
        return self.components[SCSI_ALIASES.get(name, name)]

    def offset(self, name: str) -> float:
        """Noise-floor constant log2(s2) * (1 + N_E [has log-det])."""
        comp = self.component(name)
        return np.log2(self.sigma2) * (1 + (self.n_e if comp.has_logdet else 0))

    def eval_components(self, alloc, names=("f1", "f2", "g1", "g2")) -> dict:
        """Full component values per subcarrier, noise floor included."""
        x = _as_x(alloc)
        return {n: self.component(n).value(x) + self.offset(n) for n in names}

    def gradient(self, name: str, alloc) -> np.ndarray:
        """Gradient (I, 3) with respect to (P_p, P_s, P_z) in watts."""
        return self.component(name).derivatives(_as_x(alloc), hessian=False)[1]

    def grad_f2(self, alloc):
        return self.gradient("f2", alloc)

    def grad_g2(self, alloc):
        return self.gradient("g2", alloc)

    def linearize(self, alloc, names=("f2", "g2", "rcc2")) -> LinearizationPoint:
        x = _as_x(alloc).copy()
        x.flags.writeable = False
        values, grads = {}, {}
        for n in names:
            v, g, _ = self.component(n).derivatives(x, hessian=False)
            values[SCSI_ALIASES.get(n, n)] = v
            grads[SCSI_ALIASES.get(n, n)] = g
        return LinearizationPoint(x, values, grads)

    def taylor_upper(self, name: str, alloc, anchor: LinearizationPoint) -> np.ndarray:
        """First-order expansion of a concave component at the anchor (an upper bound)."""
        key = SCSI_ALIASES.get(name, name)
        x = _as_x(alloc)
        return (anchor.values[key] + np.sum(anchor.grads[key] * (x - anchor.x), axis=1)
                + self.offset(key))

    def taylor_upper_f2(self, alloc, anchor):
        return self.taylor_upper("f2", alloc, anchor)

    def taylor_upper_g2(self, alloc, anchor):
        return self.taylor_upper("g2", alloc, anchor)

    def cu_secrecy(self, alloc) -> np.ndarray:
        """Unclamped per-subcarrier CU secrecy rate f1 - f2."""
        x = _as_x(alloc)
        return self.components["f1"].value(x) - self.components["f2"].value(x)

    def pu_secrecy(self, alloc) -> np.ndarray:
        x = _as_x(alloc)
        return self.components["g1"].value(x) - self.components["g2"].value(x)

    def cu_rate(self, alloc) -> np.ndarray:
        x = _as_x(alloc)
        return self.components["rcc1"].value(x) - self.components["rcc2"].value(x)


def _as_x(alloc) -> np.ndarray:
    if isinstance(alloc, PowerAllocation):
        return alloc.as_matrix()
    return np.asarray(alloc, dtype=float)
