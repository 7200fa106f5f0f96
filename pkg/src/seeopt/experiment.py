"""Monte Carlo sweeps over the figure designs, CSV results and convergence traces.

Within one trial every scheme sees the same channel realization, so
per-instance comparisons can be read straight off the results CSV.
"""

from __future__ import annotations

import csv
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .baselines import SchemeId, run_scheme
from .beamforming import build_beamformers, effective_gains
from .channels import draw_channel_set, draw_eavesdropper_samples
from .config import LINKS, ConfigError, SystemConfig, dbm_to_watt
from .metrics import see
from .optimizer import OptimizerTrace
from .solver import InfeasibleError

RESULT_HEADER = ["scheme", "sweep_var", "sweep_value", "trial", "seed", "see_bps_hz_per_w",
                 "r_sec_bps_hz", "p_tot_w", "outer_iters", "inner_iters", "converged", "wall_ms"]
TRACE_HEADER = ["level", "m", "n", "eta", "f_value"]

SWEEP_VARS = ("p_cbs_total_dbm", "p_pbs_total_dbm", "n_p", "n_c", "n_e", "n_sub", "r_cu_min",
              "r_pu_min", "none")

# schemes evaluated with the ICSI beamformers, in the order they are run; the
# joint scheme goes last so the others can seed its polishing step
_ORDER = [SchemeId.EQUAL, SchemeId.PBS_ONLY, SchemeId.CBS_ONLY, SchemeId.SRM, SchemeId.EEM,
          SchemeId.SEEM_NO_AN, SchemeId.ICSI_SEEM, SchemeId.SCSI_SEEM]

_JOINT4 = [SchemeId.ICSI_SEEM, SchemeId.CBS_ONLY, SchemeId.PBS_ONLY, SchemeId.EQUAL]

# desk-scale presets; full scale switches to I=8, N_E=3 and 100 trials
FIGURES = {
    "fig2": dict(sweep_var="p_cbs_total_dbm", sweep_values=[40.0],
                 schemes=[SchemeId.ICSI_SEEM, SchemeId.SCSI_SEEM]),
    "fig3": dict(sweep_var="p_cbs_total_dbm", sweep_values=[20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0],
                 schemes=[SchemeId.ICSI_SEEM, SchemeId.SCSI_SEEM, SchemeId.SRM, SchemeId.EEM,
                          SchemeId.SEEM_NO_AN]),
    "fig4": dict(sweep_var="p_cbs_total_dbm", sweep_values=[20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0],
                 schemes=_JOINT4),
    "fig5": dict(sweep_var="n_p", sweep_values=[2, 4, 6, 8], schemes=_JOINT4,
                 overrides=dict(p_cbs_total=dbm_to_watt(20.0))),
    "fig6": dict(sweep_var="n_c", sweep_values=[3, 4, 6, 8], schemes=_JOINT4,
                 overrides=dict(p_cbs_total=dbm_to_watt(20.0))),
    "fig7": dict(sweep_var="n_sub", sweep_values=[2, 4, 6, 8], schemes=_JOINT4,
                 overrides=dict(p_cbs_total=dbm_to_watt(20.0))),
}


@dataclass(frozen=True)
class ExperimentSpec:
    figure: str
    sweep_var: str
    sweep_values: tuple
    schemes: tuple
    trials: int
    base: SystemConfig
    out: str = "results.csv"
    workers: int = 1
    trace_dir: str | None = None

    def __post_init__(self):
        if self.sweep_var not in SWEEP_VARS:
            raise ConfigError(f"unknown sweep variable {self.sweep_var!r}")
        if not self.sweep_values:
            raise ConfigError("sweep grid is empty")
        if not self.schemes:
            raise ConfigError("scheme list is empty")
        if not (isinstance(self.trials, int) and self.trials >= 1):
            raise ConfigError(f"trials must be >= 1, got {self.trials!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        for v in self.sweep_values:
            apply_sweep(self.base, self.sweep_var, v)


def apply_sweep(cfg: SystemConfig, var: str, value) -> SystemConfig:
    if var == "none":
        return cfg
    if var == "p_cbs_total_dbm":
        return cfg.with_updates(p_cbs_total=dbm_to_watt(float(value)))
    if var == "p_pbs_total_dbm":
        return cfg.with_updates(p_pbs_total=dbm_to_watt(float(value)))
    if var in ("n_p", "n_c", "n_e", "n_sub"):
        if float(value) != int(value):
            raise ConfigError(f"{var} sweep values must be integers, got {value!r}")
        return cfg.with_updates(**{var: int(value)})
    if var in ("r_cu_min", "r_pu_min"):
        return cfg.with_updates(**{var: float(value)})
    raise ConfigError(f"unknown sweep variable {var!r}")


def figure_spec(figure: str, *, trials: int | None = None, seed: int = 0, full_scale: bool = False,
                out: str = "results.csv", workers: int = 1, base: SystemConfig | None = None) -> ExperimentSpec:
    """Preset sweep for one of fig2..fig7. ``base`` replaces the preset's own scenario."""
    if figure not in FIGURES:
        raise ConfigError(f"unknown figure {figure!r}; expected one of {', '.join(FIGURES)}")
    preset = FIGURES[figure]
    if base is None:
        base = SystemConfig().with_updates(**preset.get("overrides", {}))
    cfg = base.with_updates(seed=seed)
    if full_scale:
        cfg = cfg.with_updates(n_sub=8, n_e=3)
    n = trials if trials is not None else (100 if full_scale else 20)
    return ExperimentSpec(figure, preset["sweep_var"], tuple(preset["sweep_values"]),
                          tuple(preset["schemes"]), n, cfg, out, workers)


# ---------------------------------------------------------------------------------------
# config files

_CFG_KEYS = {
    # key: (SystemConfig field or None, converter)
    "n_sub": ("n_sub", int), "n_p": ("n_p", int), "n_c": ("n_c", int), "n_e": ("n_e", int),
    "p_pbs_total_dbm": ("p_pbs_total", lambda s: dbm_to_watt(float(s))),
    "p_cbs_total_dbm": ("p_cbs_total", lambda s: dbm_to_watt(float(s))),
    "p_b_dbm": ("p_b", lambda s: dbm_to_watt(float(s))),
    "bandwidth_hz": ("bandwidth", float),
    "n0_dbm_per_hz": ("n0", lambda s: dbm_to_watt(float(s))),
    "r_cu_min": ("r_cu_min", float), "r_pu_min": ("r_pu_min", float),
    "epsilon": ("epsilon", float), "m_max": ("m_max", int), "n_max": ("n_max", int),
    "scsi_samples": ("scsi_samples", int), "seed": ("seed", int),
    "fixed_pbs_power_dbm": ("fixed_pbs_power", lambda s: dbm_to_watt(float(s))),
    "solver_tol": ("solver_tol", float),
    "warm_start": ("warm_start", None), "scsi_expect_pe": ("scsi_expect_pe", None),
    "polish": ("polish", None),
}
_SPEC_KEYS = ("figure", "sweep_var", "sweep_values", "schemes", "trials", "out", "workers",
              "full_scale", "inner_epsilon", "distance_m")


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_config_text(text: str, source: str = "<config>") -> ExperimentSpec:
    """Strict ``key = value`` parser; '#' starts a comment. Unknown keys are errors."""
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        link_key = key.startswith("distance_") and key.endswith("_m") and key[9:-2] in LINKS
        if key not in _CFG_KEYS and key not in _SPEC_KEYS and not link_key:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r} (first on line {seen[key][0]})")
        if not value:
            raise ConfigError(f"{source}:{lineno}: empty value for {key!r}")
        seen[key] = (lineno, value)

    def conv(key, fn):
        lineno, value = seen[key]
        try:
            return fn(value)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None

    changes = {}
    for key, (fld, fn) in _CFG_KEYS.items():
        if key in seen:
            changes[fld] = conv(key, fn or _bool)
    if "inner_epsilon" in seen:
        changes["inner_epsilon"] = conv("inner_epsilon",
                                        lambda s: None if s.lower() == "none" else float(s))
    distances = {link: 500.0 for link in LINKS}
    if "distance_m" in seen:
        d = conv("distance_m", float)
        distances = {link: d for link in LINKS}
    for link in LINKS:
        k = f"distance_{link}_m"
        if k in seen:
            distances[link] = conv(k, float)
    changes["distances"] = distances

    figure = seen.get("figure", (0, "custom"))[1]
    full = conv("full_scale", _bool) if "full_scale" in seen else False
    trials = conv("trials", int) if "trials" in seen else None
    workers = conv("workers", int) if "workers" in seen else 1
    out = seen["out"][1] if "out" in seen else "results.csv"
    try:
        if figure != "custom":
            if figure not in FIGURES:
                raise ConfigError(f"unknown figure {figure!r}")
            base = SystemConfig().with_updates(**FIGURES[figure].get("overrides", {}))
            spec = figure_spec(figure, trials=trials, seed=changes.get("seed", 0),
                               full_scale=full, out=out, workers=workers,
                               base=base.with_updates(**changes))
        else:
            base = SystemConfig(**changes)
            if full:
                base = base.with_updates(n_sub=8, n_e=3)
            for k in ("sweep_var", "sweep_values", "schemes"):
                if k not in seen:
                    raise ConfigError(f"{source}: custom experiments need {k!r}")
            spec = ExperimentSpec("custom", "none", (0,), (SchemeId.EQUAL,),
                                  trials or (100 if full else 20), base, out, workers)
        grid = {}
        if "sweep_var" in seen:
            grid["sweep_var"] = conv("sweep_var", str)
        if "sweep_values" in seen:
            grid["sweep_values"] = conv(
                "sweep_values", lambda s: tuple(float(v) for v in s.split(",") if v.strip()))
        if "schemes" in seen:
            grid["schemes"] = conv(
                "schemes", lambda s: tuple(SchemeId.parse(v) for v in s.split(",") if v.strip()))
        # one replace so the grid is validated with all overrides in place
        spec = replace(spec, **grid)
    except ConfigError as exc:
        if str(exc).startswith(source):
            raise
        raise ConfigError(f"{source}: {exc}") from None
    return spec


def parse_config(path) -> ExperimentSpec:
    path = Path(path)
    return parse_config_text(path.read_text(), source=str(path))


# ---------------------------------------------------------------------------------------
# running


def _ordered(schemes):
    want = set(schemes)
    return [s for s in _ORDER if s in want]


def run_trial(cfg: SystemConfig, trial: int, schemes, previous=None):
    """All requested schemes on one channel draw.

    Returns ``{scheme: (SeeResult | None, realized RateBundle, error, wall seconds)}``.
    SCSI-SEEM is optimized on the eavesdropper samples and scored on the true
    channel. ``previous`` maps a scheme to an allocation from a smaller budget
    on the same channels; it joins that scheme's polishing candidates.
    """
    previous = previous or {}
    channels = draw_channel_set(cfg, trial)
    beams = build_beamformers(channels, "icsi")
    gains = effective_gains(channels, beams)
    out, allocs = {}, []
    for scheme in _ordered(schemes):
        t0 = time.perf_counter()
        prev = [previous[scheme]] if scheme in previous and scheme in _CHAINED else []
        try:
            if scheme is SchemeId.SCSI_SEEM:
                s_beams = build_beamformers(channels, "scsi", seed=cfg.seed, trial=trial)
                samples = draw_eavesdropper_samples(cfg, trial)
                res = run_scheme(scheme, channels, cfg, samples=samples, trial=trial,
                                 candidates=prev)
                real = see(effective_gains(channels, s_beams), res.allocation, cfg.p_b)
            else:
                cands = allocs + prev if scheme is SchemeId.ICSI_SEEM else prev
                res = run_scheme(scheme, channels, cfg, beams=beams, candidates=cands)
                real = see(gains, res.allocation, cfg.p_b)
                allocs.append(res.allocation)
            out[scheme] = (res, real, None, time.perf_counter() - t0)
        except (InfeasibleError, np.linalg.LinAlgError, FloatingPointError) as exc:
            out[scheme] = (None, None, str(exc), time.perf_counter() - t0)
    return out


# schemes whose optimum can only improve with a larger budget, so the previous
# budget's allocation is a valid start on the same channels
_CHAINED = {SchemeId.ICSI_SEEM, SchemeId.SCSI_SEEM, SchemeId.SEEM_NO_AN, SchemeId.CBS_ONLY,
            SchemeId.SRM}
_BUDGET_VARS = ("p_cbs_total_dbm", "p_pbs_total_dbm")


def _fmt(x) -> str:
    return repr(float(x))


def _task(args):
    """One trial across the whole sweep grid."""
    spec, trial = args
    chain = spec.sweep_var in _BUDGET_VARS
    order = sorted(range(len(spec.sweep_values)), key=lambda k: float(spec.sweep_values[k])) \
        if chain else range(len(spec.sweep_values))
    previous, done = {}, {}
    for k in order:
        value = spec.sweep_values[k]
        cfg = apply_sweep(spec.base, spec.sweep_var, value)
        res = run_trial(cfg, trial, spec.schemes, previous if chain else None)
        rows, traces = [], []
        for scheme in spec.schemes:
            r, real, err, wall = res[scheme]
            if r is None:
                rows.append([scheme.value, spec.sweep_var, _fmt(value), str(trial), str(cfg.seed),
                             "nan", "nan", "nan", "0", "0", "0", f"{wall * 1e3:.3f}"])
                continue
            previous[scheme] = r.allocation
            rows.append([scheme.value, spec.sweep_var, _fmt(value), str(trial), str(cfg.seed),
                         _fmt(real.see), _fmt(real.r_sec), _fmt(real.p_tot), str(r.outer_iters),
                         str(r.inner_iters), "1" if r.converged else "0", f"{wall * 1e3:.3f}"])
            traces.append((scheme, r.trace))
        done[k] = (value, rows, traces)
    return trial, done


def run_experiment(spec: ExperimentSpec, write: bool = True):
    """Run every trial over the sweep grid and write the results CSV.

    One task covers one trial; budget sweeps run in ascending order inside
    it. Rows are written in (sweep value, trial, scheme) order whatever the
    worker completion order. Returns ``(rows, summary)``; the summary maps
    (scheme, sweep value) to (mean SEE, standard error, n).
    """
    tasks = [(spec, t) for t in range(spec.trials)]
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            per_trial = dict(pool.map(_task, tasks))
    else:
        per_trial = dict(_task(t) for t in tasks)
    results = [per_trial[t][k] + (t,) for k in range(len(spec.sweep_values))
               for t in range(spec.trials)]
    rows = [row for _, rs, _, _ in results for row in rs]
    if write:
        out = Path(spec.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with out.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(RESULT_HEADER)
            w.writerows(rows)
        if spec.trace_dir:
            tdir = Path(spec.trace_dir)
            tdir.mkdir(parents=True, exist_ok=True)
            for value, _, traces, trial in results:
                for scheme, tr in traces:
                    if tr.outer:
                        emit_trace(tr, tdir / f"{scheme.value}_{spec.sweep_var}{float(value):g}_t{trial}.csv")
    summary = summarize(rows)
    if write:
        write_summary(summary, Path(spec.out).with_name(Path(spec.out).stem + "_summary.csv"))
    return rows, summary


def summarize(rows):
    groups = {}
    for r in rows:
        groups.setdefault((r[0], float(r[2])), []).append(float(r[5]))
    summary = {}
    for key, vals in groups.items():
        v = np.array([x for x in vals if math.isfinite(x)])
        mean = float(v.mean()) if v.size else float("nan")
        se = float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
        summary[key] = (mean, se, int(v.size))
    return summary


def write_summary(summary, path):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scheme", "sweep_value", "mean_see", "se_see", "n"])
        for (scheme, value), (mean, se, n) in summary.items():
            w.writerow([scheme, _fmt(value), _fmt(mean), _fmt(se), n])


def read_results(path):
    with Path(path).open(newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if header != RESULT_HEADER:
            raise ValueError(f"unexpected results header in {path}")
        return [row for row in rd]


def self_check(rows, tol: float = 1e-9):
    """Invariant checks that only need the CSV. Returns a list of violation messages."""
    problems = []
    by_instance = {}
    for r in rows:
        see_v, rs, pt = float(r[5]), float(r[6]), float(r[7])
        if math.isfinite(see_v) and abs(see_v * pt - rs) > 1e-12 * max(1.0, abs(rs)):
            problems.append(f"{r[0]} value={r[2]} trial={r[3]}: SEE*P_tot != R_sec")
        by_instance.setdefault((r[2], r[3]), {})[r[0]] = see_v
    joint = SchemeId.ICSI_SEEM.value
    same_set = [s.value for s in (SchemeId.SRM, SchemeId.EEM, SchemeId.SEEM_NO_AN,
                                  SchemeId.CBS_ONLY, SchemeId.PBS_ONLY, SchemeId.EQUAL)]
    for (value, trial), d in by_instance.items():
        if joint in d:
            for s in same_set:
                if s in d and d[joint] < d[s] - tol:
                    problems.append(f"value={value} trial={trial}: {joint} below {s}")
        if "cbs_only" in d and "equal" in d and d["cbs_only"] < d["equal"] - tol:
            problems.append(f"value={value} trial={trial}: cbs_only below equal")
    return problems


# ---------------------------------------------------------------------------------------
# traces


def emit_trace(trace: OptimizerTrace, path):
    """Write outer rows, inner rows and a final row carrying the terminal eta."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for (m, eta, f), rows in zip(trace.outer, trace.inner):
            w.writerow(["outer", m, "", _fmt(eta), _fmt(f)])
            for n, fn, _ in rows:
                w.writerow(["inner", m, n, _fmt(eta), _fmt(fn)])
        w.writerow(["final", len(trace.outer), "", _fmt(trace.eta_final), "nan"])


def read_trace(path) -> OptimizerTrace:
    tr = OptimizerTrace(status="loaded")
    with Path(path).open(newline="") as fh:
        rd = csv.reader(fh)
        if next(rd) != TRACE_HEADER:
            raise ValueError(f"unexpected trace header in {path}")
        for level, m, n, eta, f in rd:
            if level == "outer":
                tr.outer.append((int(m), float(eta), float(f)))
                tr.inner.append([])
            elif level == "inner":
                tr.inner[-1].append((int(n), float(f), None))
            elif level == "final":
                tr.eta_final = float(eta)
            else:
                raise ValueError(f"unknown trace level {level!r}")
    return tr


def default_workers() -> int:
    return max(1, min(os.cpu_count() or 1, 8))
