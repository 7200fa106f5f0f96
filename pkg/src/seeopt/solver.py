"""Convexified power-allocation subproblems and an exhaustive grid oracle.

The subproblem at an SCA anchor is a smooth concave maximization over the
powers (budget-scaled to [0, 1]) with linear budget rows and, when the
thresholds are positive, linearized concave secrecy-rate constraints. It is
solved with a log-barrier path and damped Newton steps using the analytic
component Hessians.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import SystemConfig
from .dc import DcFunctions, LinearizationPoint
from .metrics import PowerAllocation

FREE_ALL = (True, True, True)
NEWTON_TOL = 1e-5  # centering stop on lambda^2/2; objective error is this over t
GAP0 = 1e-4  # barrier gap of the first stage with linear rows only
GAP0_NONLIN = 1.0  # first-stage gap with secrecy-rate rows; a tight start pins them to the boundary
MIX0 = 1e-3  # initial weight of the central point when leaving the anchor


class InfeasibleError(RuntimeError):
    """No allocation meets the secrecy-rate thresholds within the budgets."""


@dataclass(frozen=True)
class PowerProblem:
    """Everything but the Dinkelbach parameter and the anchor.

    ``free`` marks which of (P_p, P_s, P_z) are optimized; the others stay at
    ``x_fixed``. ``objective`` is "see" (secrecy rate over power) or "ee"
    (CU rate over power).
    """

    dc: DcFunctions
    p_pbs_total: float
    p_cbs_total: float
    p_b: float
    r_cu_min: float = 0.0
    r_pu_min: float = 0.0
    objective: str = "see"
    free: tuple = FREE_ALL
    x_fixed: np.ndarray | None = None

    @classmethod
    def from_config(cls, dc: DcFunctions, cfg: SystemConfig, **kw) -> "PowerProblem":
        return cls(dc, cfg.p_pbs_total, cfg.p_cbs_total, cfg.p_b, cfg.r_cu_min, cfg.r_pu_min, **kw)

    def __post_init__(self):
        if self.objective not in ("see", "ee"):
            raise ValueError(f"unknown objective {self.objective!r}")
        fixed = np.zeros((self.dc.n_sub, 3)) if self.x_fixed is None else np.array(self.x_fixed, float)
        object.__setattr__(self, "x_fixed", fixed)
        object.__setattr__(self, "free", tuple(bool(f) for f in self.free))

    @property
    def n_sub(self) -> int:
        return self.dc.n_sub

    @property
    def free_mask(self) -> np.ndarray:
        return np.broadcast_to(np.array(self.free), (self.n_sub, 3))

    @property
    def scale(self) -> np.ndarray:
        return np.broadcast_to([self.p_pbs_total, self.p_cbs_total, self.p_cbs_total], (self.n_sub, 3))

    @property
    def cu_active(self) -> bool:
        return self.r_cu_min > 0

    @property
    def pu_active(self) -> bool:
        return self.r_pu_min > 0

    @property
    def numerator_pair(self):
        return ("f1", "f2") if self.objective == "see" else ("rcc1", "rcc2")

    # true (non-convexified) quantities -------------------------------------------------

    def numerator(self, x) -> float:
        """Unclamped sum of the per-subcarrier objective rates."""
        a, b = self.numerator_pair
        x = np.asarray(x, float)
        return float(np.sum(self.dc.component(a).value(x) - self.dc.component(b).value(x)))

    def denominator(self, x) -> float:
        x = np.asarray(x, float)
        return float(np.sum(x[:, 1:]) + self.p_b)

    def parametric(self, x, eta: float) -> float:
        return self.numerator(x) - eta * self.denominator(x)

    def constraint_slack(self, x) -> np.ndarray:
        """True secrecy-rate slacks of the active thresholds (empty when none are active)."""
        out = []
        if self.cu_active:
            out.append(self.dc.cu_secrecy(x) - self.r_cu_min)
        if self.pu_active:
            out.append(self.dc.pu_secrecy(x) - self.r_pu_min)
        return np.concatenate(out) if out else np.zeros(0)

    def budget_violation(self, x) -> float:
        x = np.asarray(x, float)
        return float(max(0.0, -x.min(), np.sum(x[:, 0]) - self.p_pbs_total,
                         np.sum(x[:, 1:]) - self.p_cbs_total))

    def uniform_point(self) -> np.ndarray:
        """P_PBS/I per PBS subcarrier and P_CBS/(2I) each for P_s and P_z on the free entries."""
        x = self.x_fixed.copy()
        i = self.n_sub
        u = np.array([self.p_pbs_total / i, self.p_cbs_total / (2 * i), self.p_cbs_total / (2 * i)])
        x[self.free_mask] = np.broadcast_to(u, (i, 3))[self.free_mask]
        return x


@dataclass(frozen=True)
class SubproblemSpec:
    problem: PowerProblem
    eta: float
    anchor: LinearizationPoint


@dataclass
class SolveReport:
    solution: PowerAllocation
    objective: float
    residual: float
    violations: dict
    iterations: int
    status: str  # optimal | max-iter | infeasible
    gap: float = 0.0

    @property
    def max_violation(self) -> float:
        return max(self.violations.values(), default=0.0)


# ---------------------------------------------------------------------------------------
# variable mapping and the convexified model


class _Model:
    """Surrogate objective and constraints as functions of the scaled free variables z."""

    def __init__(self, spec: SubproblemSpec, with_slack_var: bool = False, s_cap: float = 0.1):
        pr = spec.problem
        self.pr, self.eta, self.anchor = pr, spec.eta, spec.anchor
        self.mask = pr.free_mask
        self.idx = np.flatnonzero(self.mask.ravel())
        self.scale_z = pr.scale.ravel()[self.idx]
        self.n = self.idx.size
        self.feas = with_slack_var
        self.s_cap = s_cap
        self.nz = self.n + (1 if with_slack_var else 0)

        # linear rows A z <= b: nonnegativity plus the budgets touching a free column
        rows, rhs = [-np.eye(self.nz)[: self.n]], [np.zeros(self.n)]
        col = self.idx % 3
        self.pbs_row = self.cbs_row = None
        if pr.free[0]:
            self.pbs_row = self.n
            r = np.zeros(self.nz)
            r[: self.n] = col == 0
            rows.append(r[None])
            rhs.append([1.0 - np.sum(pr.x_fixed[~self.mask[:, 0], 0]) / pr.p_pbs_total])
        if pr.free[1] or pr.free[2]:
            self.cbs_row = self.n + (1 if pr.free[0] else 0)
            r = np.zeros(self.nz)
            r[: self.n] = col > 0
            rows.append(r[None])
            fixed = np.sum(np.where(self.mask[:, 1:], 0.0, pr.x_fixed[:, 1:]))
            rhs.append([1.0 - fixed / pr.p_cbs_total])
        if with_slack_var:
            r = np.zeros(self.nz)
            r[-1] = 1.0
            rows.append(r[None])
            rhs.append([s_cap])
        self.A = np.vstack(rows)
        self.b = np.concatenate([np.asarray(v, float) for v in rhs])

        self.cons_names = []
        if pr.cu_active:
            self.cons_names.append(("f1", "f2", pr.r_cu_min))
        if pr.pu_active:
            self.cons_names.append(("g1", "g2", pr.r_pu_min))
        self.n_nonlin = len(self.cons_names) * pr.n_sub

    def to_x(self, z) -> np.ndarray:
        x = self.pr.x_fixed.copy().ravel()
        x[self.idx] = z[: self.n] * self.scale_z
        return x.reshape(-1, 3)

    def to_z(self, x) -> np.ndarray:
        z = np.asarray(x, float).ravel()[self.idx] / self.scale_z
        return z

    def _lin(self, name, x):
        a = self.anchor
        return a.values[name] + np.sum(a.grads[name] * (x - a.x), axis=1)

    def _scatter_grad(self, g):
        return g.ravel()[self.idx] * self.scale_z

    def _scatter_hess(self, h):
        i = self.pr.n_sub
        full = np.zeros((3 * i, 3 * i))
        for k in range(i):
            full[3 * k:3 * k + 3, 3 * k:3 * k + 3] = h[k]
        sub = full[np.ix_(self.idx, self.idx)]
        return sub * np.outer(self.scale_z, self.scale_z)

    def surrogate_x(self, x) -> float:
        """Convexified objective at an allocation matrix."""
        a, b = self.pr.numerator_pair
        comp = self.pr.dc.component(a)
        return float(np.sum(comp.value(x) - self._lin(b, x)) - self.eta * self.pr.denominator(x))

    def cons_x(self, x) -> np.ndarray:
        out = [self.pr.dc.component(a).value(x) - self._lin(b, x) - r for a, b, r in self.cons_names]
        return np.concatenate(out) if out else np.zeros(0)

    # value-only and full evaluations in z ----------------------------------------------

    def value(self, z):
        """Objective and nonlinear constraint values (constraint values >0 required)."""
        x = self.to_x(z)
        if self.feas:
            return z[-1], self.cons_x(x) - z[-1]
        return self.surrogate_x(x), self.cons_x(x)

    def derivs(self, z):
        x = self.to_x(z)
        nz = self.nz
        if self.feas:
            f, g, h = z[-1], np.zeros(nz), np.zeros((nz, nz))
            g[-1] = 1.0
        else:
            a, b = self.pr.numerator_pair
            v, gr, he = self.pr.dc.component(a).derivatives(x)
            gl = gr - self.anchor.grads[b]
            gl[:, 1:] -= self.eta
            f = float(np.sum(v - self._lin(b, x)) - self.eta * self.pr.denominator(x))
            g = self._scatter_grad(gl)
            h = self._scatter_hess(he)
        cv, cg, ch = [], [], []
        for a, b, r in self.cons_names:
            v, gr, he = self.pr.dc.component(a).derivatives(x)
            gl = gr - self.anchor.grads[b]
            vals = v - self._lin(b, x) - r
            for k in range(self.pr.n_sub):
                gk = np.zeros((self.pr.n_sub, 3))
                gk[k] = gl[k]
                hk = np.zeros((self.pr.n_sub, 3, 3))
                hk[k] = he[k]
                grad = np.zeros(nz)
                grad[: self.n] = self._scatter_grad(gk)
                hess = np.zeros((nz, nz))
                hess[: self.n, : self.n] = self._scatter_hess(hk)
                if self.feas:
                    grad[-1] = -1.0
                cv.append(vals[k] - (z[-1] if self.feas else 0.0))
                cg.append(grad)
                ch.append(hess)
        return f, g, h, np.array(cv), np.array(cg).reshape(-1, nz), np.array(ch).reshape(-1, nz, nz)

    @property
    def n_barrier(self) -> int:
        return self.A.shape[0] + self.n_nonlin


def _barrier_value(model, z, t):
    slack = model.b - model.A @ z
    if np.any(slack <= 0):
        return -np.inf
    f, cv = model.value(z)
    if cv.size and np.any(cv <= 0):
        return -np.inf
    return t * f + np.sum(np.log(slack)) + np.sum(np.log(cv))


def _center(model, z, t, max_iter, newton_tol=None):
    newton_tol = NEWTON_TOL if newton_tol is None else newton_tol
    lam2 = np.inf
    it = 0
    psi = _barrier_value(model, z, t)
    while it < max_iter:
        it += 1
        f, g, h, cv, cg, ch = model.derivs(z)
        slack = model.b - model.A @ z
        grad = t * g + model.A.T @ (-1.0 / slack)
        hess = t * h - (model.A.T / slack**2) @ model.A
        if cv.size:
            grad += cg.T @ (1.0 / cv)
            hess += np.tensordot(1.0 / cv, ch, axes=1) - (cg.T / cv**2) @ cg
        try:
            step = np.linalg.solve(-hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(-hess, grad, rcond=None)[0]
        lam2 = float(grad @ step)
        if not np.isfinite(lam2) or lam2 < 0:
            step, lam2 = grad, float(grad @ grad)
        if lam2 / 2 <= newton_tol:
            break
        s = 1.0
        while s > 1e-14:
            trial = _barrier_value(model, z + s * step, t)
            if trial >= psi + 0.25 * s * lam2:
                break
            s *= 0.5
        else:
            break
        z, psi = z + s * step, trial
    return z, lam2 / 2 if np.isfinite(lam2) else np.inf, it


def _barrier_path(model, z0, tol, mu=10.0, gap0=None, max_iter=400):
    if gap0 is None:
        gap0 = GAP0_NONLIN if (model.n_nonlin or model.feas) else GAP0
    m = model.n_barrier
    t = m / gap0
    z, total = z0, 0
    while True:
        z, dec, it = _center(model, z, t, max_iter - total)
        total += it
        gap = m / t
        if gap <= tol or total >= max_iter:
            return z, dec, total, gap
        t *= mu


def _strictly_feasible(model, z):
    return np.isfinite(_barrier_value(model, z, 1.0))


def _interior_start(model, z_anchor):
    """Mix the anchor with the central point until strictly inside."""
    z_c = np.zeros(model.nz)
    col = model.idx % 3
    for row, sel in ((model.pbs_row, col == 0), (model.cbs_row, col > 0)):
        if row is not None and sel.any():
            z_c[: model.n][sel] = 0.5 * max(model.b[row], 0.0) / sel.sum()
    if model.feas:
        z_c[-1] = z_anchor[-1]
    w = MIX0
    for _ in range(60):
        z = (1 - w) * z_anchor + w * z_c
        if _strictly_feasible(model, z):
            return z
        w *= 0.5
    return None


def solve_subproblem(spec: SubproblemSpec, tol: float = 1e-6) -> SolveReport:
    """Maximize the convexified parametric objective at one anchor.

    The returned point never has a lower surrogate value than the anchor.
    """
    model = _Model(spec)
    x_a = np.asarray(spec.anchor.x, float)
    f_anchor = model.surrogate_x(x_a)
    z0 = _interior_start(model, model.to_z(x_a))
    if z0 is None:
        return _report(model, x_a, f_anchor, 0.0, 0, "optimal" if _anchor_ok(model, x_a) else "infeasible", 0.0)
    z, dec, its, gap = _barrier_path(model, z0, tol)
    x = np.maximum(model.to_x(z), 0.0)
    f = model.surrogate_x(x)
    status = "optimal" if gap <= tol else "max-iter"
    if not f >= f_anchor or not _feasible_x(model, x):
        x, f = x_a, f_anchor
    return _report(model, x, f, dec, its, status, gap)


def _anchor_ok(model, x):
    cv = model.cons_x(x)
    return model.pr.budget_violation(x) <= 1e-9 and (cv.size == 0 or cv.min() >= -1e-9)


def _feasible_x(model, x):
    return _anchor_ok(model, x)


def _report(model, x, f, dec, its, status, gap):
    pr = model.pr
    x = np.asarray(x, float)
    cv = model.cons_x(x)
    violations = {
        "nonnegativity": float(max(0.0, -x.min())),
        "pbs_budget": float(max(0.0, np.sum(x[:, 0]) - pr.p_pbs_total)),
        "cbs_budget": float(max(0.0, np.sum(x[:, 1:]) - pr.p_cbs_total)),
        "secrecy": float(max(0.0, -cv.min())) if cv.size else 0.0,
    }
    return SolveReport(PowerAllocation.from_matrix(x), float(f), float(dec), violations, int(its),
                       status, float(gap))


# P_s share of each subcarrier's CBS power at the feasibility starts; AN-heavy
# starts avoid the P_s = 0 trap where a subcarrier's secrecy rate is flat in P_z
FEAS_SPLITS = (0.5, 0.2, 0.05)


def _split_point(problem: PowerProblem, share: float) -> np.ndarray:
    x = problem.uniform_point()
    per = problem.p_cbs_total / problem.n_sub
    free = problem.free_mask
    target = np.broadcast_to([x[0, 0], share * per, (1 - share) * per], x.shape)
    cols = free.copy()
    cols[:, 0] = False
    x[cols] = target[cols]
    return x


def _max_min_slack(problem, x, tol, max_rounds, s_cap, stall=1e-4):
    best = problem.constraint_slack(x).min()
    for _ in range(max_rounds):
        anchor = problem.dc.linearize(x, names=("f2", "g2"))
        model = _Model(SubproblemSpec(problem, 0.0, anchor), with_slack_var=True, s_cap=s_cap)
        z = model.to_z(x)
        s0 = min(model.cons_x(x).min(), s_cap) - 1.0
        z0 = _interior_start(model, np.append(z, s0))
        if z0 is None:
            break
        z1, _, _, _ = _barrier_path(model, z0, tol)
        x_new = np.maximum(model.to_x(z1), 0.0)
        slack = problem.constraint_slack(x_new).min()
        if slack <= best + 1e-12:
            break
        improved = slack - best
        x, best = x_new, slack
        if best >= s_cap / 2 or improved < stall:
            break
    return x, best


def feasibility_phase(problem: PowerProblem, tol: float = 1e-6, max_rounds: int = 100,
                      s_cap: float = 0.1, min_slack: float = 1e-6) -> PowerAllocation:
    """Find a strictly threshold-feasible allocation.

    With no active thresholds this is the uniform split. Otherwise the
    minimum secrecy-rate slack is maximized by SCA from a few data/AN
    splits in turn, each run stopping at half of ``s_cap`` or when it
    stalls. The first start that reaches ``min_slack`` is returned; if none
    does, :class:`InfeasibleError` is raised.
    """
    x = problem.uniform_point()
    if not (problem.cu_active or problem.pu_active):
        return PowerAllocation.from_matrix(x)
    best_x, best = x, -np.inf
    for share in FEAS_SPLITS:
        x, slack = _max_min_slack(problem, _split_point(problem, share), tol, max_rounds, s_cap)
        if slack > best:
            best_x, best = x, slack
        if best >= min_slack:
            break
    if best < min_slack:
        raise InfeasibleError(f"secrecy-rate thresholds unattainable (best slack {best:.3g})")
    return PowerAllocation.from_matrix(best_x)


# ---------------------------------------------------------------------------------------
# exhaustive oracle


def _gram_logdet(x_cols, gram):
    """log det(I + diag(x) G) for K <= 3 via explicit expansion; x_cols is a list of arrays."""
    k = len(x_cols)
    m = [[(1.0 if r == c else 0.0) + x_cols[r] * gram[r, c] for c in range(k)] for r in range(k)]
    if k == 1:
        det = m[0][0]
    elif k == 2:
        det = m[0][0] * m[1][1] - m[0][1] * m[1][0]
    else:
        det = (m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
               - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
               + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]))
    return np.log2(np.real(det))


def _subcarrier_table(gains, i, cfg, res):
    """T[k, s] = best clamped CU secrecy rate at P_p = k/res * P_PBS, P_s + P_z = s/res * P_CBS.

    Returns the table and the argmax P_s index J[k, s]; infeasible cells are -inf.
    """
    s2 = gains.sigma2
    u = np.stack([gains.u_c[i], gains.u_f[i], gains.u_g[i]]) / np.sqrt(s2)  # (3, N_E)
    gram = u.conj() @ u.T
    dp, dc = cfg.p_pbs_total / res, cfg.p_cbs_total / res
    jj, ll = np.meshgrid(np.arange(res + 1), np.arange(res + 1), indexing="ij")
    keep = jj + ll <= res
    jj, ll = jj[keep], ll[keep]
    ssum = jj + ll
    ps, pz = jj * dc, ll * dc
    table = np.full((res + 1, res + 1), -np.inf)
    arg_j = np.zeros((res + 1, res + 1), dtype=int)
    order = np.lexsort((jj, ssum))
    ssum_o, jj_o = ssum[order], jj[order]
    starts = np.searchsorted(ssum_o, np.arange(res + 1))
    for k in range(res + 1):
        pp = np.full(ps.shape, k * dp)
        r_cc = np.log2(1 + gains.e[i] * ps / (gains.b[i] * pp + gains.leak_cu[i] * pz + s2))
        full = _gram_logdet([pp, ps, pz], gram)
        r_ce = full - _gram_logdet([pp, pz], gram[np.ix_([0, 2], [0, 2])])
        sr = r_cc - r_ce
        ok = np.ones(sr.shape, bool)
        if cfg.r_cu_min > 0:
            ok &= sr >= cfg.r_cu_min
        if cfg.r_pu_min > 0:
            r_pp = np.log2(1 + gains.a[i] * pp / (gains.d[i] * ps + gains.leak_pu[i] * pz + s2))
            r_pe = full - _gram_logdet([ps, pz], gram[np.ix_([1, 2], [1, 2])])
            ok &= r_pp - r_pe >= cfg.r_pu_min
        val = np.where(ok, np.maximum(sr, 0.0), -np.inf)[order]
        best = np.maximum.reduceat(val, starts)
        # first index attaining the per-sum maximum
        hit = val == np.repeat(best, np.diff(np.append(starts, val.size)))
        first = np.minimum.reduceat(np.where(hit, np.arange(val.size), val.size), starts)
        table[k] = best
        arg_j[k] = jj_o[np.minimum(first, val.size - 1)]
    return table, arg_j


def grid_oracle(gains, cfg: SystemConfig, resolution: int = 200):
    """Brute-force SEE maximum over a uniform budget grid; only for I <= 2.

    Returns ``(PowerAllocation, SEE)``; SEE is -inf if no grid point meets the thresholds.
    """
    if gains.sampled:
        raise ValueError("the grid oracle works on instantaneous gains")
    n = gains.n_sub
    if n > 2:
        raise ValueError(f"grid oracle is limited to I <= 2 subcarriers, got {n}")
    res = int(resolution)
    dp, dc_ = cfg.p_pbs_total / res, cfg.p_cbs_total / res
    svals = np.arange(res + 1)
    power = cfg.p_b + svals * dc_
    tabs = [_subcarrier_table(gains, i, cfg, res) for i in range(n)]
    if n == 1:
        t, aj = tabs[0]
        score = t / power[None, :]
        k, s = np.unravel_index(np.argmax(score), score.shape)
        j = aj[k, s]
        x = np.array([[k * dp, j * dc_, (s - j) * dc_]])
        return PowerAllocation.from_matrix(x), float(score[k, s])
    (t1, a1), (t2, a2) = tabs
    # prefix max of table 2 over the PBS index
    pre = np.maximum.accumulate(t2, axis=0)
    pre_k = np.zeros_like(t2, dtype=int)
    for k in range(1, res + 1):
        better = t2[k] > pre[k - 1]
        pre_k[k] = np.where(better, k, pre_k[k - 1])
    best, best_arg = -np.inf, None
    s1, s2 = np.meshgrid(svals, svals, indexing="ij")
    ok = s1 + s2 <= res
    for k1 in range(res + 1):
        k2 = res - k1
        tot = t1[k1][:, None] + pre[k2][None, :]
        score = np.where(ok, tot / (cfg.p_b + (s1 + s2) * dc_), -np.inf)
        idx = np.argmax(score)
        if score.flat[idx] > best:
            best = float(score.flat[idx])
            best_arg = (k1, pre_k[k2][s2.flat[idx]], s1.flat[idx], s2.flat[idx])
    if best_arg is None:
        return PowerAllocation.zeros(2), best
    k1, k2, q1, q2 = best_arg
    j1, j2 = a1[k1, q1], a2[k2, q2]
    x = np.array([[k1 * dp, j1 * dc_, (q1 - j1) * dc_], [k2 * dp, j2 * dc_, (q2 - j2) * dc_]])
    return PowerAllocation.from_matrix(x), best
