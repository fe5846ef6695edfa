"""Reproducible runners for the three numerical experiments.

``test1``
    Noiseless recovery of random piecewise polynomials from Gaussian
    measurements; success means ``max_err <= 1e-3``.
``test2``
    Denoising (``A = I``) of ideal one-jump signals at several SNRs, HOTVBL
    against the oracle-tuned l1 estimator, with posterior interval widths.
``test3``
    Recovery of a piecewise smooth signal from noisy DFT data.

Every trial draws its randomness from a generator seeded by
:func:`trial_seed`, so a trial can be replayed in isolation and results do
not depend on the number of worker processes.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Iterable

import numpy as np

from ..l1 import L1Options, oracle_lambda_sweep, solve_analysis_l1
from ..operators import build_synthesis
from ..recover import RecoveryProblem, recover, stack_complex
from ..sbl import SblOptions, run_sbl
from .signals import (
    IDEAL_KINDS,
    SMOOTH_FUNCTIONS,
    add_noise_at_snr,
    dft_forward,
    gaussian_forward,
    make_ideal_signal,
    make_piecewise_poly,
    max_err,
    piecewise_smooth,
    rel_err,
    snr_db,
    sparsity_count,
)

__all__ = [
    "TEST_IDS",
    "SUCCESS_TOL",
    "ExperimentConfig",
    "TrialRecord",
    "ExperimentResult",
    "default_config",
    "trial_seed",
    "edge_distance",
    "run_test1",
    "run_test2",
    "run_test3",
    "run_experiment",
    "write_results",
]

log = logging.getLogger(__name__)

TEST_IDS = ("test1", "test2", "test3")
#: Max-error threshold defining a successful trial.
SUCCESS_TOL = 1e-3
#: Points closer than ``m`` samples to the jump count as "near"; farther than this as "far".
FAR_DISTANCE = 10


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to replay an experiment bit for bit.

    Only the fields relevant to ``test_id`` are used: ``k_values`` and
    ``jumps_only`` by test1, ``kinds`` by test2 (the order follows the
    kind), ``orders`` by test1/test3 and ``function`` by test3.  An entry
    of ``None`` in ``snr_list`` means noiseless data.
    """

    test_id: str
    N: int
    J: int
    trials: int
    base_seed: int = 0
    orders: tuple[int, ...] = (1,)
    k_values: tuple[int, ...] = ()
    snr_list: tuple[float | None, ...] = ()
    kinds: tuple[str, ...] = ()
    function: str = "four_piece"
    jumps_only: bool = False
    l1_comparator: bool = True
    confidence: float = 0.99
    sbl: SblOptions = field(default_factory=SblOptions)
    l1: L1Options = field(default_factory=L1Options)

    def __post_init__(self):
        if self.test_id not in TEST_IDS:
            raise ValueError(f"unknown test_id {self.test_id!r}; choose from {TEST_IDS}")
        if int(self.trials) != self.trials or self.trials < 1:
            raise ValueError("trials must be a positive integer")
        if not 0 <= int(self.base_seed) < 2**64:
            raise ValueError("base_seed must fit in an unsigned 64-bit integer")
        if self.J < 1 or self.J > self.N:
            raise ValueError(f"need 1 <= J <= N, got J={self.J}, N={self.N}")
        if self.test_id != "test1" and self.J != self.N:
            raise ValueError(f"{self.test_id} uses a square forward model (J must equal N)")
        for m in self.active_orders():
            if not 1 <= m < self.N:
                raise ValueError(f"order must be less than size (m={m}, N={self.N})")
        if self.test_id == "test1":
            if not self.k_values:
                raise ValueError("test1 needs at least one k value")
            pool = self.N - max(self.orders) if self.jumps_only else self.N
            if min(self.k_values) < 1 or max(self.k_values) > pool:
                raise ValueError(f"k values must lie in [1, {pool}]")
        else:
            if not self.snr_list:
                raise ValueError(f"{self.test_id} needs at least one SNR")
        if self.test_id == "test2":
            bad = [k for k in self.kinds if k not in IDEAL_KINDS]
            if bad or not self.kinds:
                raise ValueError(f"kinds must be a nonempty subset of {sorted(IDEAL_KINDS)}")
            if self.N < 8:
                raise ValueError("test2 needs N >= 8")
        if self.test_id == "test3" and self.function not in SMOOTH_FUNCTIONS:
            raise ValueError(f"unknown function {self.function!r}")
        if not 0 < self.confidence < 1:
            raise ValueError("confidence must lie in (0, 1)")

    def active_orders(self) -> tuple[int, ...]:
        if self.test_id == "test2":
            return tuple(IDEAL_KINDS[k] for k in self.kinds if k in IDEAL_KINDS)
        return tuple(self.orders)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        for key in ("orders", "k_values", "snr_list", "kinds"):
            d[key] = list(d[key])
        d["sbl"] = self.sbl.to_dict()
        d["l1"] = self.l1.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for key in ("orders", "k_values", "snr_list", "kinds"):
            if key in d:
                d[key] = tuple(d[key])
        if "sbl" in d and not isinstance(d["sbl"], SblOptions):
            d["sbl"] = SblOptions.from_dict(d["sbl"])
        if "l1" in d and not isinstance(d["l1"], L1Options):
            d["l1"] = L1Options.from_dict(d["l1"])
        return cls(**d)


def default_config(test_id: str, **overrides) -> ExperimentConfig:
    """Desk-scale defaults for each experiment, with keyword overrides.

    test2 starts SBL from a nearly empty model (``a_init="auto"``); from the
    unit default, denoising converges to the interpolating solution.
    """
    if test_id == "test1":
        base = dict(N=250, J=50, trials=50, orders=(1,), k_values=tuple(range(1, 26)))
    elif test_id == "test2":
        base = dict(N=128, J=128, trials=10, snr_list=(0.0, 10.0, 20.0, 30.0),
                    kinds=tuple(IDEAL_KINDS), sbl=SblOptions(a_init="auto"))
    elif test_id == "test3":
        base = dict(N=128, J=128, trials=10, orders=(1, 2, 3), snr_list=(10.0,))
    else:
        raise ValueError(f"unknown test_id {test_id!r}; choose from {TEST_IDS}")
    base.update(overrides)
    if test_id in ("test2", "test3") and "N" in overrides and "J" not in overrides:
        base["J"] = base["N"]
    return ExperimentConfig(test_id=test_id, **base)


@dataclass(frozen=True)
class TrialRecord:
    """One method applied to one trial.  ``None`` marks a field that does not apply."""

    test: str
    trial: int
    seed: int
    m: int
    method: str
    rel_err: float
    max_err: float
    success: bool
    k: int | None = None
    snr: float | None = None
    kind: str | None = None
    realized_snr: float | None = None
    lam: float | None = None
    sparsity: int | None = None
    active: int | None = None
    near_width: float | None = None
    far_width: float | None = None
    iterations: int | None = None
    status: str = "ok"
    wall_time: float = field(default=0.0, compare=False)

    def deterministic(self) -> dict:
        """All fields except ``wall_time``."""
        d = asdict(self)
        d.pop("wall_time")
        return d


CSV_FIELDS = [f.name for f in fields(TrialRecord) if f.name != "wall_time"]


@dataclass(eq=False)
class ExperimentResult:
    config: ExperimentConfig
    records: list[TrialRecord]
    summary: dict
    profiles: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)
    interrupted: bool = False


def trial_seed(base_seed: int, *key) -> int:
    """64-bit seed for one trial, derived from the base seed and a key tuple.

    The key is hashed through its ``repr`` so any mix of strings and
    numbers works, and the result never depends on execution order.
    """
    tag = zlib.crc32(repr(key).encode())
    state = np.random.SeedSequence([int(base_seed), tag]).generate_state(2, dtype=np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def edge_distance(N: int, jump: int) -> np.ndarray:
    """Samples between each index and the discontinuity between ``jump - 1`` and ``jump``."""
    i = np.arange(N)
    return np.where(i >= jump, i - jump, jump - 1 - i)


def _failed(base: dict, method: str, exc: Exception, t0: float) -> TrialRecord:
    log.warning("%s trial %s failed: %s", method, base.get("trial"), exc)
    return TrialRecord(method=method, rel_err=float("inf"), max_err=float("inf"), success=False,
                       status=f"failed: {type(exc).__name__}", wall_time=time.perf_counter() - t0,
                       **base)


def _timed(fn, base, method):
    t0 = time.perf_counter()
    try:
        return fn(t0)
    except (ArithmeticError, np.linalg.LinAlgError, ValueError) as exc:
        return _failed(base, method, exc, t0)


# ---------------------------------------------------------------------------
# single trials (top-level so they can be pickled for worker processes)


def _trial_test1(cfg: ExperimentConfig, m: int, k: int, trial: int):
    seed = trial_seed(cfg.base_seed, "test1", m, k, trial)
    rng = np.random.default_rng(seed)
    x, _ = make_piecewise_poly(cfg.N, m, k, rng, jumps_only=cfg.jumps_only)
    A = gaussian_forward(cfg.J, cfg.N, rng)
    b = A @ x
    base = dict(test="test1", trial=trial, seed=seed, m=m, k=k)
    V = build_synthesis(m, cfg.N).synthesis.astype(float)

    def bl(t0):
        post = run_sbl(A @ V, b, cfg.sbl)
        xe = V @ post.mean
        e = max_err(xe, x)
        return TrialRecord(method="hotvbl", rel_err=rel_err(xe, x), max_err=e,
                           success=e <= SUCCESS_TOL, active=int(post.active.size),
                           iterations=post.iterations, wall_time=time.perf_counter() - t0,
                           **base)

    def l1(t0):
        res = solve_analysis_l1(A, b, m, 1.0, cfg.l1)
        e = max_err(res.x, x)
        return TrialRecord(method="l1_bp", rel_err=rel_err(res.x, x), max_err=e,
                           success=e <= SUCCESS_TOL, lam=1.0, iterations=res.iterations,
                           status="ok" if res.converged else "max_iterations",
                           wall_time=time.perf_counter() - t0, **base)

    out = [_timed(bl, base, "hotvbl")]
    if cfg.l1_comparator:
        out.append(_timed(l1, base, "l1_bp"))
    return out, None


def _noisy(clean, snr, rng):
    if snr is None:
        return np.array(clean, copy=True), None
    b, noise = add_noise_at_snr(clean, snr, rng)
    return b, snr_db(clean, noise)


def _trial_test2(cfg: ExperimentConfig, kind: str, snr, trial: int):
    m = IDEAL_KINDS[kind]
    seed = trial_seed(cfg.base_seed, "test2", kind, snr, trial)
    rng = np.random.default_rng(seed)
    x = make_ideal_signal(kind, cfg.N)
    b, realized = _noisy(x, snr, rng)
    A = np.eye(cfg.N)
    base = dict(test="test2", trial=trial, seed=seed, m=m, snr=snr, kind=kind,
                realized_snr=realized)
    dist = edge_distance(cfg.N, cfg.N // 2)
    profile = {"index": np.arange(cfg.N), "truth": x, "data": b}

    def bl(t0):
        post = recover(RecoveryProblem(A, b, m, cfg.sbl, cfg.confidence))
        width = post.upper - post.lower
        profile.update(hotvbl=post.mean, lower=post.lower, upper=post.upper)
        return TrialRecord(method="hotvbl", rel_err=rel_err(post.mean, x),
                           max_err=max_err(post.mean, x), success=max_err(post.mean, x) <= SUCCESS_TOL,
                           active=int(post.edge_posterior.active.size),
                           iterations=post.edge_posterior.iterations,
                           near_width=float(np.median(width[dist < m])),
                           far_width=float(np.median(width[dist > FAR_DISTANCE])),
                           wall_time=time.perf_counter() - t0, **base)

    def l1(t0):
        sweep = oracle_lambda_sweep(A, b, m, x, cfg.l1)
        profile["l1_oracle"] = sweep.x
        e = max_err(sweep.x, x)
        return TrialRecord(method="l1_oracle", rel_err=sweep.rel_err, max_err=e,
                           success=e <= SUCCESS_TOL, lam=sweep.lam,
                           status="ok" if sweep.all_converged else "max_iterations",
                           wall_time=time.perf_counter() - t0, **base)

    out = [_timed(bl, base, "hotvbl")]
    if cfg.l1_comparator:
        out.append(_timed(l1, base, "l1_oracle"))
    return out, (profile if trial == 0 else None)


def _trial_test3(cfg: ExperimentConfig, m: int, snr, trial: int):
    seed = trial_seed(cfg.base_seed, "test3", m, snr, trial)
    rng = np.random.default_rng(seed)
    x = piecewise_smooth(cfg.N, cfg.function)
    F = dft_forward(cfg.N)
    y, realized = _noisy(F @ x, snr, rng)
    A_s, b_s = stack_complex(F, y)
    count = sparsity_count(x, m)
    base = dict(test="test3", trial=trial, seed=seed, m=m, snr=snr, realized_snr=realized,
                sparsity=count)
    profile = {"index": np.arange(cfg.N), "truth": x}

    def bl(t0):
        post = recover(RecoveryProblem(F, y, m, cfg.sbl, cfg.confidence))
        profile.update(hotvbl=post.mean, lower=post.lower, upper=post.upper)
        e = max_err(post.mean, x)
        return TrialRecord(method="hotvbl", rel_err=rel_err(post.mean, x), max_err=e,
                           success=e <= SUCCESS_TOL, active=int(post.edge_posterior.active.size),
                           iterations=post.edge_posterior.iterations,
                           wall_time=time.perf_counter() - t0, **base)

    def l1(t0):
        sweep = oracle_lambda_sweep(A_s, b_s, m, x, cfg.l1)
        profile["l1_oracle"] = sweep.x
        e = max_err(sweep.x, x)
        return TrialRecord(method="l1_oracle", rel_err=sweep.rel_err, max_err=e,
                           success=e <= SUCCESS_TOL, lam=sweep.lam,
                           status="ok" if sweep.all_converged else "max_iterations",
                           wall_time=time.perf_counter() - t0, **base)

    out = [_timed(bl, base, "hotvbl")]
    if cfg.l1_comparator:
        out.append(_timed(l1, base, "l1_oracle"))
    return out, (profile if trial == 0 else None)


_TRIAL_FUNCS = {"test1": _trial_test1, "test2": _trial_test2, "test3": _trial_test3}


def _task_list(cfg: ExperimentConfig) -> list[tuple]:
    if cfg.test_id == "test1":
        return [(m, k, t) for m in cfg.orders for k in cfg.k_values for t in range(cfg.trials)]
    if cfg.test_id == "test2":
        return [(kind, snr, t) for kind in cfg.kinds for snr in cfg.snr_list
                for t in range(cfg.trials)]
    return [(m, snr, t) for m in cfg.orders for snr in cfg.snr_list for t in range(cfg.trials)]


def _call(args):
    cfg, task = args
    return _TRIAL_FUNCS[cfg.test_id](cfg, *task)


def _profile_name(cfg, task) -> str:
    if cfg.test_id == "test2":
        kind, snr, _ = task
        return f"{kind}_snr{_snr_label(snr)}"
    m, snr, _ = task
    return f"m{m}_snr{_snr_label(snr)}"


def _snr_label(snr) -> str:
    return "inf" if snr is None else f"{snr:g}"


def _execute(cfg: ExperimentConfig, jobs: int,
             on_records: Callable[[list[TrialRecord]], None] | None):
    tasks = _task_list(cfg)
    records: list[TrialRecord] = []
    profiles: dict[str, dict[str, np.ndarray]] = {}
    interrupted = False

    def consume(results: Iterable):
        for task, (recs, profile) in zip(tasks, results):
            records.extend(recs)
            if profile is not None:
                profiles[_profile_name(cfg, task)] = profile
            if on_records is not None:
                on_records(recs)

    try:
        if jobs <= 1:
            consume(_call((cfg, t)) for t in tasks)
        else:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                # map preserves submission order, so the merge is deterministic
                consume(pool.map(_call, [(cfg, t) for t in tasks], chunksize=4))
    except KeyboardInterrupt:
        interrupted = True
        log.warning("interrupted after %d records", len(records))
    return records, profiles, interrupted


# ---------------------------------------------------------------------------
# aggregation


def _median(values) -> float:
    v = [x for x in values if x is not None]
    return float(np.median(v)) if v else float("nan")


def _summarize(cfg: ExperimentConfig, records: list[TrialRecord]) -> dict:
    methods = sorted({r.method for r in records})
    groups: dict = {}
    if cfg.test_id == "test1":
        for r in records:
            groups.setdefault((r.method, f"m{r.m}", r.k), []).append(r)
        table = {}
        for (method, mkey, k), rs in sorted(groups.items()):
            table.setdefault(method, {}).setdefault(mkey, {})[str(k)] = {
                "success_probability": sum(r.success for r in rs) / len(rs),
                "trials": len(rs),
                "median_rel_err": _median([r.rel_err for r in rs]),
            }
        return {"test": "test1", "methods": methods, "success": table}

    key = (lambda r: r.kind) if cfg.test_id == "test2" else (lambda r: f"m{r.m}")
    for r in records:
        groups.setdefault((key(r), _snr_label(r.snr), r.method), []).append(r)
    table: dict = {}
    for (name, snr, method), rs in sorted(groups.items()):
        row = {
            "median_rel_err": _median([r.rel_err for r in rs]),
            "median_max_err": _median([r.max_err for r in rs]),
            "trials": len(rs),
            "failed": sum(r.status.startswith("failed") for r in rs),
        }
        if method == "hotvbl" and cfg.test_id == "test2":
            row["median_near_width"] = _median([r.near_width for r in rs])
            row["median_far_width"] = _median([r.far_width for r in rs])
            row["edge_wider"] = sum(
                r.near_width is not None and r.far_width is not None and r.near_width > r.far_width
                for r in rs)
        if cfg.test_id == "test3":
            row["sparsity"] = rs[0].sparsity
        table.setdefault(name, {}).setdefault(f"snr{snr}", {})[method] = row
    return {"test": cfg.test_id, "methods": methods, "errors": table}


def _run(cfg: ExperimentConfig, test_id: str, jobs: int, on_records) -> ExperimentResult:
    if cfg.test_id != test_id:
        raise ValueError(f"config is for {cfg.test_id}, not {test_id}")
    records, profiles, interrupted = _execute(cfg, jobs, on_records)
    summary = _summarize(cfg, records)
    if cfg.test_id == "test1":
        for method, by_m in summary["success"].items():
            for mkey, rows in by_m.items():
                profiles[f"success_{method}_{mkey}"] = {
                    "k": np.array([int(k) for k in rows]),
                    "success_probability": np.array([v["success_probability"] for v in rows.values()]),
                }
    return ExperimentResult(config=cfg, records=records, summary=summary, profiles=profiles,
                            interrupted=interrupted)


def run_test1(cfg: ExperimentConfig, jobs: int = 1, on_records=None) -> ExperimentResult:
    """Success probability versus sparsity for Gaussian measurements.

    The summary maps method -> order -> k -> success probability.  Solver
    failures count as unsuccessful trials and are logged.
    """
    return _run(cfg, "test1", jobs, on_records)


def run_test2(cfg: ExperimentConfig, jobs: int = 1, on_records=None) -> ExperimentResult:
    """Denoising of ideal signals; median errors and interval widths per (kind, SNR, method)."""
    return _run(cfg, "test2", jobs, on_records)


def run_test3(cfg: ExperimentConfig, jobs: int = 1, on_records=None) -> ExperimentResult:
    """Fourier-data recovery of a piecewise smooth signal for each order."""
    return _run(cfg, "test3", jobs, on_records)


def run_experiment(cfg: ExperimentConfig, jobs: int = 1, on_records=None) -> ExperimentResult:
    runner = {"test1": run_test1, "test2": run_test2, "test3": run_test3}[cfg.test_id]
    return runner(cfg, jobs=jobs, on_records=on_records)


# ---------------------------------------------------------------------------
# output


def _csv_value(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def record_row(r: TrialRecord) -> list:
    d = r.deterministic()
    return [_csv_value(d[name]) for name in CSV_FIELDS]


def write_results(result: ExperimentResult, out_dir: str | os.PathLike) -> list[str]:
    """Write ``trials.csv``, ``summary.json``, ``timings.csv`` and profile CSVs.

    Everything except ``timings.csv`` is a pure function of the config.
    Returns the written paths relative to ``out_dir``.
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def path(name):
        written.append(name)
        return os.path.join(out_dir, name)

    with open(path("trials.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_FIELDS)
        for r in result.records:
            w.writerow(record_row(r))
    with open(path("timings.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "seed", "method", "wall_time"])
        for r in result.records:
            w.writerow([r.trial, r.seed, r.method, f"{r.wall_time:.6f}"])
    summary = {
        "config": result.config.to_dict(),
        "base_seed": result.config.base_seed,
        "records": len(result.records),
        "interrupted": result.interrupted,
        **result.summary,
    }
    with open(path("summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if result.profiles:
        os.makedirs(os.path.join(out_dir, "profiles"), exist_ok=True)
    for name, cols in sorted(result.profiles.items()):
        with open(path(os.path.join("profiles", f"{name}.csv")), "w", newline="") as fh:
            w = csv.writer(fh)
            keys = list(cols)
            w.writerow(keys)
            for row in zip(*(cols[k] for k in keys)):
                w.writerow([repr(float(v)) if not isinstance(v, (int, np.integer)) else int(v)
                            for v in row])
    return written

