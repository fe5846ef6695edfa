"""Command-line interface: ``hotvbl {operators,recover,test1,test2,test3}``.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure,
130 interrupted (partial results are still written).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .exceptions import ConsistencyError, DimensionError, NumericalError
from .experiments.runners import ExperimentConfig, default_config, run_experiment, write_results
from .experiments.signals import IDEAL_KINDS, SMOOTH_FUNCTIONS, dft_forward
from .operators import build_analysis, build_completed, build_synthesis
from .recover import RecoveryProblem, recover
from .sbl import SblOptions

log = logging.getLogger("hotvbl")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_INTERRUPT = 0, 2, 3, 130


class UsageError(Exception):
    """Bad flags, config or input files (exit code 2)."""


# ---------------------------------------------------------------------------
# operators


def cmd_operators(args) -> int:
    m, n = args.m, args.n
    try:
        if args.which == "analysis":
            mat = build_analysis(m, n).matrix
        elif args.which == "completed":
            mat = build_completed(m, n)
        else:
            mat = build_synthesis(m, n).synthesis
    except DimensionError as exc:
        raise UsageError(str(exc)) from exc
    w = csv.writer(sys.stdout, lineterminator="\n")
    for row in mat:
        w.writerow([int(v) for v in row])
    return EXIT_OK


# ---------------------------------------------------------------------------
# recover


def _vector(value, name):
    """Real list, or ``{"real": [...], "imag": [...]}`` for complex data."""
    if isinstance(value, dict):
        if set(value) != {"real", "imag"}:
            raise UsageError(f"{name}: complex vectors need exactly 'real' and 'imag' keys")
        re, im = _vector(value["real"], name), _vector(value["imag"], name)
        if re.shape != im.shape:
            raise UsageError(f"{name}: real part has {re.size} entries, imaginary part {im.size}")
        return re + 1j * im
    if not isinstance(value, list) or not all(isinstance(v, (int, float)) for v in value):
        raise UsageError(f"{name} must be a flat list of numbers")
    return np.asarray(value, dtype=float)


def _matrix(rows, name):
    if isinstance(rows, dict) and set(rows) == {"real", "imag"}:
        return _matrix(rows["real"], name) + 1j * _matrix(rows["imag"], name)
    if not isinstance(rows, list) or not rows or not all(isinstance(r, list) for r in rows):
        raise UsageError(f"{name} must be a nonempty list of rows")
    width = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise UsageError(f"{name}: row {i} has {len(r)} columns, expected {width} (ragged matrix)")
        if not all(isinstance(v, (int, float)) for v in r):
            raise UsageError(f"{name}: row {i} contains a non-numeric entry")
    if width == 0:
        raise UsageError(f"{name} has no columns")
    return np.asarray(rows, dtype=float)


def _named_forward(spec: dict, J: int):
    model = spec.get("model")
    N = spec.get("size", J)
    if model == "identity":
        return np.eye(N)
    if model == "dft":
        return dft_forward(N)
    if model == "gaussian":
        rng = np.random.default_rng(int(spec.get("seed", 0)))
        return rng.standard_normal((J, N))
    raise UsageError(f"unknown forward model {model!r}; choose identity, dft or gaussian")


def load_problem(path: str, confidence: float | None = None) -> RecoveryProblem:
    """Parse a problem file.

    Layout::

        {"forward": [[...], ...] | {"model": "identity"|"dft"|"gaussian",
                                    "size": N, "seed": s},
         "data": [...] | {"real": [...], "imag": [...]},
         "m": 1,
         "options": {...},          # optional SblOptions fields
         "confidence": 0.99}        # optional
    """
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read problem file {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise UsageError("problem file must hold a JSON object")
    missing = {"forward", "data", "m"} - set(doc)
    if missing:
        raise UsageError(f"problem file is missing {sorted(missing)}")
    b = _vector(doc["data"], "data")
    fwd = doc["forward"]
    if isinstance(fwd, dict) and "model" in fwd:
        A = _named_forward(fwd, b.size)
    else:
        A = _matrix(fwd, "forward")
    if A.shape[0] != b.size:
        raise UsageError(f"forward matrix has {A.shape[0]} rows but data has {b.size} entries")
    m = doc["m"]
    if not isinstance(m, int):
        raise UsageError("m must be an integer")
    level = confidence if confidence is not None else doc.get("confidence", 0.99)
    try:
        opts = SblOptions.from_dict(doc.get("options"))
        return RecoveryProblem(A, b, m, opts, float(level))
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def _jsonable(a):
    return [None if not np.isfinite(v) else float(v) for v in np.asarray(a, dtype=float)]


def cmd_recover(args) -> int:
    problem = load_problem(args.problem, args.confidence)
    if not 0.0 < problem.confidence < 1.0:
        raise UsageError("confidence must lie in (0, 1)")
    post = recover(problem)
    edge = post.edge_posterior
    summary = {
        "version": __version__,
        "m": problem.order,
        "size": problem.size,
        "confidence": problem.confidence,
        "mean": _jsonable(post.mean),
        "variance": _jsonable(post.variance),
        "lower": _jsonable(post.lower),
        "upper": _jsonable(post.upper),
        "support": [int(i) for i in edge.active],
        "noise_precision": edge.noise_precision,
        "iterations": edge.iterations,
        "converged": edge.converged,
        "stop_reason": edge.stop_reason,
        "log_likelihood": edge.log_likelihood,
    }
    text = json.dumps(summary, indent=2) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if args.covariance:
        np.savetxt(args.covariance, post.covariance, delimiter=",", fmt="%.17g")
    log.info("recovered %d samples, %d active coefficients", problem.size, edge.active.size)
    return EXIT_OK


# ---------------------------------------------------------------------------
# experiments


def _env_seed() -> int | None:
    raw = os.environ.get("HOTVBL_SEED")
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError as exc:
        raise UsageError(f"HOTVBL_SEED must be an integer, got {raw!r}") from exc


def _read_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise UsageError("config must be a JSON object")
    # a run manifest can be replayed directly
    return dict(doc.get("resolved_config", doc))


def _snr(text: str):
    if text.lower() in ("inf", "none"):
        return None
    try:
        return float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid SNR {text!r}") from exc


def _overrides(args) -> dict:
    o = {}
    if args.seed is not None:
        o["base_seed"] = args.seed
    if args.trials is not None:
        o["trials"] = args.trials
    if getattr(args, "n", None) is not None:
        o["N"] = args.n
    if args.command == "test1":
        if args.m is not None:
            o["orders"] = tuple(args.m)
        if args.kmax is not None:
            o["k_values"] = tuple(range(1, args.kmax + 1))
        if args.j is not None:
            o["J"] = args.j
        if args.jumps_only:
            o["jumps_only"] = True
    if args.command == "test2" and args.kind:
        o["kinds"] = tuple(args.kind)
    if args.command == "test3":
        if args.m is not None:
            o["orders"] = tuple(args.m)
        if args.function is not None:
            o["function"] = args.function
    if args.command in ("test2", "test3") and args.snr:
        o["snr_list"] = tuple(args.snr)
    if args.no_l1:
        o["l1_comparator"] = False
    return o


def resolve_config(args) -> tuple[ExperimentConfig, dict]:
    """Defaults, then the config file, then ``HOTVBL_SEED``, then flags."""
    file_doc = _read_config(args.config)
    file_doc.pop("test_id", None)
    merged = default_config(args.command).to_dict()
    merged.update(file_doc)
    if "N" in file_doc and "J" not in file_doc and args.command != "test1":
        merged["J"] = file_doc["N"]
    env = _env_seed()
    if env is not None and "base_seed" not in file_doc:
        merged["base_seed"] = env
    flags = _overrides(args)
    merged.update(flags)
    if "N" in flags and args.command != "test1":
        merged["J"] = flags["N"]
    try:
        cfg = ExperimentConfig.from_dict(merged)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from exc
    return cfg, file_doc


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def cmd_experiment(args) -> int:
    cfg, file_doc = resolve_config(args)
    out = args.out or os.path.join("results", cfg.test_id)
    jobs = args.jobs if args.jobs is not None else (os.cpu_count() or 1)
    if jobs < 1:
        raise UsageError("--jobs must be at least 1")
    started = _now()
    log.info("%s: base_seed=%d trials=%d jobs=%d -> %s", cfg.test_id, cfg.base_seed,
             cfg.trials, jobs, out)
    result = run_experiment(cfg, jobs=jobs)
    files = write_results(result, out)
    manifest = {
        "command": [os.path.basename(sys.argv[0])] + list(args.argv),
        "config_file": args.config,
        "config_contents": file_doc,
        "resolved_config": cfg.to_dict(),
        "base_seed": cfg.base_seed,
        "version": __version__,
        "started": started,
        "finished": _now(),
        "interrupted": result.interrupted,
        "outputs": files + ["manifest.json"],
    }
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    log.info("wrote %d records to %s", len(result.records), out)
    return EXIT_INTERRUPT if result.interrupted else EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hotvbl", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0,
                   help="log progress to stderr (-vv for debug)")
    sub = p.add_subparsers(dest="command", required=True)

    ops = sub.add_parser("operators", help="print HOTV operators as CSV")
    ops_sub = ops.add_subparsers(dest="action", required=True)
    dump = ops_sub.add_parser("dump", help="print one operator")
    dump.add_argument("--m", type=int, required=True, help="order")
    dump.add_argument("--n", type=int, required=True, help="signal size")
    dump.add_argument("--which", choices=["analysis", "completed", "synthesis"],
                      default="analysis")
    dump.set_defaults(func=cmd_operators)

    rec = sub.add_parser("recover", help="run HOTVBL on a JSON problem file")
    rec.add_argument("problem", help="problem file (JSON)")
    rec.add_argument("--confidence", type=float, default=None,
                     help="interval level in (0, 1), default 0.99")
    rec.add_argument("--out", help="write the summary JSON here instead of stdout")
    rec.add_argument("--covariance", help="write the full signal covariance as CSV")
    rec.set_defaults(func=cmd_recover)

    for name, text in [("test1", "success probability vs sparsity, Gaussian measurements"),
                       ("test2", "denoising of ideal piecewise polynomials"),
                       ("test3", "piecewise smooth recovery from Fourier data")]:
        t = sub.add_parser(name, help=text)
        t.add_argument("--config", help="JSON config (or a previous manifest.json)")
        t.add_argument("--seed", type=int, help="base seed (default: config, then HOTVBL_SEED, then 0)")
        t.add_argument("--trials", type=int)
        t.add_argument("--n", type=int, help="signal size")
        t.add_argument("--out", help="output directory (default results/<test>)")
        t.add_argument("--jobs", type=int, help="worker processes (default: all cores)")
        t.add_argument("--no-l1", action="store_true", help="skip the l1 comparator")
        if name == "test1":
            t.add_argument("--m", type=int, action="append", help="order (repeatable)")
            t.add_argument("--kmax", type=int, help="run k = 1..kmax")
            t.add_argument("--j", type=int, help="number of measurements")
            t.add_argument("--jumps-only", action="store_true",
                           help="place spikes only on jump coordinates")
        if name == "test2":
            t.add_argument("--kind", action="append", choices=sorted(IDEAL_KINDS))
        if name == "test3":
            t.add_argument("--m", type=int, action="append", help="order (repeatable)")
            t.add_argument("--function", choices=sorted(SMOOTH_FUNCTIONS))
        if name in ("test2", "test3"):
            t.add_argument("--snr", type=_snr, action="append",
                           help="SNR in dB (repeatable; 'inf' for noiseless)")
        t.set_defaults(func=cmd_experiment)
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.argv = argv
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"hotvbl: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DimensionError as exc:
        print(f"hotvbl: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, ConsistencyError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"hotvbl: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except KeyboardInterrupt:
        print("hotvbl: interrupted", file=sys.stderr)
        return EXIT_INTERRUPT


if __name__ == "__main__":
    sys.exit(main())
