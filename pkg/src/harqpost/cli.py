"""``harqpost`` command line.

Exit codes: 0 success, 1 usage error, 2 data error (unreadable or malformed
input, unwritable output), 3 numerical degeneracy (singular covariance,
calibration or starvation failure). Accepting or rejecting a hypothesis
never changes the exit code.

The default seed of every subcommand is 0, or the integer in the
``HARQPOST_SEED`` environment variable when set. ``--seed`` (and, for
``generate``, the config file's ``seed`` key) take precedence.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .channel import RicianParams
from .harqgen import (
    CalibrationError,
    DatasetSpec,
    calibrate_sigma2,
    classify_and_collect,
    mismatch_ber_harness,
    read_mapping,
)
from .io import (
    DatasetFormatError,
    DatasetResult,
    format_dataset,
    parse_machine_report,
    read_config,
    read_dataset,
    write_report,
)
from .mvntest import test1_suite
from .numerics import SingularMatrixError
from .paramtest import PREMISE_NOTE, InternalConsistencyError, ml_estimate, wilks_test2, wilks_test3
from .phy.ldpc import DEFAULT_CODE
from .phy.session import ConfigurationError
from .report import DegenerateDataError

log = logging.getLogger("harqpost")


class _StderrHandler(logging.StreamHandler):
    """Progress handler bound to whatever ``sys.stderr`` is at emit time."""

    def __init__(self):
        super().__init__()
        self.setFormatter(logging.Formatter("%(message)s"))

    @property
    def stream(self):
        return sys.stderr

    @stream.setter
    def stream(self, value):
        pass


def _setup_logging(quiet: bool) -> None:
    if not any(isinstance(h, _StderrHandler) for h in log.handlers):
        log.addHandler(_StderrHandler())
    log.propagate = False
    log.setLevel(logging.WARNING if quiet else logging.INFO)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DEGENERATE = 0, 1, 2, 3
SEED_ENV = "HARQPOST_SEED"
TEST_GROUPS = ("mvn", "exact", "relaxed")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _seed(args) -> int:
    return args.seed if args.seed is not None else default_seed()


def _open_unit(text):
    x = float(text)
    if not 0.0 < x < 1.0:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {text}")
    return x


def _positive_int(text):
    x = int(text)
    if x < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return x


def _nonneg_int(text):
    x = int(text)
    if x < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return x


def _tests(text):
    which = tuple(t.strip() for t in text.split(",") if t.strip())
    bad = set(which) - set(TEST_GROUPS)
    if not which or bad:
        raise argparse.ArgumentTypeError(f"choose from {','.join(TEST_GROUPS)}")
    return which


def _prior(args, sigma2=1.0) -> RicianParams:
    try:
        return RicianParams(args.beta, args.K, args.theta, sigma2)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _label(path) -> str:
    stem = Path(path).stem
    for suffix in ("_failed", "_successful"):
        if stem.endswith(suffix):
            return stem[: -len(suffix)]
    return stem


def _spec_seed(base: int, n_if: int, m: int) -> int:
    # independent of the order of entries in the config file
    return int(np.random.SeedSequence([base, n_if, m]).generate_state(1)[0])


# subcommands ---------------------------------------------------------------

def cmd_calibrate(args) -> int:
    prior = _prior(args)
    res = calibrate_sigma2(prior, args.nif, args.m, args.target_fail, args.trials,
                           seed=_seed(args), code=args.code, tol=args.tol, workers=args.workers)
    print(f"sigma2={res.sigma2!r} fail_rate={res.fail_rate!r} trials={res.trials} "
          f"N_IF={args.nif} m={args.m} probes={len(res.probes)}")
    return EXIT_OK


def _dataset_paths(out: Path, n_if: int, m: int):
    stem = f"nif{n_if}_m{m}"
    return out / f"{stem}_failed.csv", out / f"{stem}_successful.csv"


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".part")
    try:
        tmp.write_text(text, encoding="ascii", newline="\n")
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def cmd_generate(args) -> int:
    cfg = read_config(args.config)
    base = args.seed if args.seed is not None else (cfg.seed if cfg.seed is not None else default_seed())
    out = Path(args.out or cfg.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror or exc}") from exc
    if not os.access(out, os.W_OK):
        raise OSError(f"output directory {out} is not writable")
    if not cfg.datasets:
        raise DatasetFormatError(f"{args.config}: no dataset entries")
    rows = []
    for i, entry in enumerate(cfg.datasets, 1):
        seed = _spec_seed(base, entry.n_if, entry.m)
        f_path, s_path = _dataset_paths(out, entry.n_if, entry.m)
        if f_path.exists() and s_path.exists():
            pair = (read_dataset(f_path), read_dataset(s_path))
            log.info("[%d/%d] N_IF=%d m=%d: found %s, skipping", i, len(cfg.datasets), entry.n_if, entry.m, f_path.name)
        else:
            sigma2 = entry.sigma2
            if sigma2 is None:
                cal = calibrate_sigma2(cfg.prior(), entry.n_if, entry.m, cfg.target_fail, cfg.trials,
                                       seed=seed, code=cfg.code, workers=args.workers)
                sigma2 = cal.sigma2
            spec = DatasetSpec(entry.n_if, entry.m, entry.n, cfg.prior(sigma2), seed, cfg.code)

            def progress(done, counts, i=i, entry=entry):
                log.info("[%d/%d] N_IF=%d m=%d: %d sessions, %d failed / %d successful records",
                         i, len(cfg.datasets), entry.n_if, entry.m, done, counts["failed"], counts["successful"])

            pair = classify_and_collect(spec, workers=args.workers, progress=progress)
            for D, path in zip(pair, (f_path, s_path)):
                _write_atomic(path, format_dataset(D))
        rows.append((i, entry.n_if, entry.m, pair[0].sigma2, pair[0].n, pair[1].n))
    head = ("Dataset", "N_IF", "m", "sigma2", "n_failed", "n_successful")
    cells = [head] + [(str(i), str(a), str(b), f"{s:.5g}", str(nf), str(ns)) for i, a, b, s, nf, ns in rows]
    widths = [max(len(r[k]) for r in cells) for k in range(len(head))]
    for r in cells:
        print("  ".join(c.rjust(w) for c, w in zip(r, widths)))
    return EXIT_OK


def _require_paths(args):
    if not args.paths:
        raise UsageError("at least one dataset path is required")


def cmd_test(args) -> int:
    _require_paths(args)
    results, status = [], EXIT_OK
    for path in args.paths:
        D = read_dataset(path)
        res = DatasetResult(_label(path), D.cls)
        try:
            mvn_rejected = False
            if "mvn" in args.tests:
                t1 = test1_suite(D, args.alpha, seed=_seed(args))
                res.reports += t1
                mvn_rejected = any(t.rejected for t in t1)
            wilks = []
            if "exact" in args.tests:
                wilks.append(wilks_test2(D, D.prior, args.alpha))
            if "relaxed" in args.tests:
                wilks.append(wilks_test3(D, args.alpha)[0])
            if mvn_rejected:
                wilks = [t.annotate(PREMISE_NOTE) for t in wilks]
            res.reports += wilks
        except DegenerateDataError as exc:
            res.reports, res.error, status = [], str(exc), EXIT_DEGENERATE
        results.append(res)
    sys.stdout.write(write_report(results, args.format))
    return status


def cmd_estimate(args) -> int:
    _require_paths(args)
    results, status = [], EXIT_OK
    for path in args.paths:
        D = read_dataset(path)
        res = DatasetResult(_label(path), D.cls)
        try:
            res.estimates = ml_estimate(D)
        except DegenerateDataError as exc:
            res.error, status = str(exc), EXIT_DEGENERATE
        results.append(res)
    sys.stdout.write(write_report(results, args.format))
    return status


def cmd_report(args) -> int:
    _require_paths(args)
    results = []
    for path in args.paths:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise OSError(f"cannot read report {path}: {exc.strerror or exc}") from exc
        results += parse_machine_report(text)
    if not results:
        raise DatasetFormatError("report files hold no records")
    sys.stdout.write(write_report(results, args.format))
    return EXIT_OK


def cmd_ber_mismatch(args) -> int:
    true = RicianParams(args.beta, args.K, args.theta, args.sigma2)
    design = RicianParams(
        args.design_beta if args.design_beta is not None else args.beta,
        args.design_K if args.design_K is not None else args.K,
        args.design_theta if args.design_theta is not None else args.theta,
        args.sigma2,
    )
    maps = None
    if args.map:
        if len(args.map) != args.m_max + 1:
            raise UsageError(f"--map given {len(args.map)} times; need one table per round ({args.m_max + 1})")
        try:
            maps = [read_mapping(p) for p in args.map]
        except ValueError as exc:
            raise DatasetFormatError(str(exc)) from exc
    res = mismatch_ber_harness(design, true, maps, args.m_max, args.symbols, rng=_seed(args))
    se = res.stderr()
    if args.format == "machine":
        for m, (b, e, s) in enumerate(zip(res.ber, res.bit_errors, se)):
            print(f"kind=ber m={m} ber={float(b)!r} stderr={float(s)!r} bit_errors={int(e)} bits={res.bits}")
    else:
        print(f"{'m':>2}  {'BER':>11}  {'stderr':>9}")
        for m, (b, s) in enumerate(zip(res.ber, se)):
            print(f"{m:>2}  {b:11.4e}  {s:9.2e}")
    return EXIT_OK


# parser --------------------------------------------------------------------

def _add_prior(p):
    p.add_argument("--beta", type=float, default=8.0, help="mean channel power (default 8)")
    p.add_argument("--K", type=float, default=1.0, help="Rician K-factor (default 1)")
    p.add_argument("--theta", type=float, default=0.0, help="LOS phase in radians (default 0)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="harqpost", description="HARQ posterior channel and noise statistics.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-q", "--quiet", action="store_true", help="suppress progress on stderr")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("calibrate", help="find sigma2 for a target session failure rate")
    p.add_argument("--nif", type=_positive_int, required=True, help="fading instances per transport block")
    p.add_argument("--m", type=_nonneg_int, default=0, help="round index (default 0)")
    p.add_argument("--target-fail", type=_open_unit, default=0.5)
    p.add_argument("--trials", type=_positive_int, default=500)
    p.add_argument("--tol", type=_open_unit, default=0.05, help="accepted |rate - target|")
    p.add_argument("--code", default=DEFAULT_CODE, help="built-in code name or alist path")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=_positive_int, default=1)
    _add_prior(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("generate", help="simulate sessions and write posterior dataset files")
    p.add_argument("config", help="run configuration file")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=_positive_int, default=1)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("test", help="normality and parameter-matching tests on dataset files")
    p.add_argument("paths", nargs="*")
    p.add_argument("--alpha", type=_open_unit, default=0.01)
    p.add_argument("--tests", type=_tests, default=TEST_GROUPS, help="comma list of mvn,exact,relaxed")
    p.add_argument("--format", choices=("table", "machine"), default="table")
    p.add_argument("--seed", type=int, help="seed of the Royston subsample for n > 5000")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("estimate", help="ML estimates of beta, K, theta and sigma2")
    p.add_argument("paths", nargs="*")
    p.add_argument("--format", choices=("table", "machine"), default="table")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("report", help="re-render machine-format reports")
    p.add_argument("paths", nargs="*")
    p.add_argument("--format", choices=("table", "machine"), default="table")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("ber-mismatch", help="uncoded Chase-combining BER under given mappings")
    _add_prior(p)
    p.add_argument("--sigma2", type=float, required=True)
    p.add_argument("--design-beta", type=float)
    p.add_argument("--design-K", type=float)
    p.add_argument("--design-theta", type=float)
    p.add_argument("--m-max", type=_nonneg_int, default=3)
    p.add_argument("--symbols", type=int, default=100_000)
    p.add_argument("--map", action="append", help="mapping file for one round; repeat once per round")
    p.add_argument("--format", choices=("table", "machine"), default="table")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_ber_mismatch)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    _setup_logging(args.quiet)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"harqpost: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetFormatError, OSError) as exc:
        print(f"harqpost: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DegenerateDataError, SingularMatrixError, CalibrationError, InternalConsistencyError) as exc:
        print(f"harqpost: numerical error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (ConfigurationError, ValueError) as exc:
        print(f"harqpost: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
