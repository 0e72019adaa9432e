"""Text persistence for datasets, run configurations and test reports.

Dataset file::

    # schema=1
    # m=0
    # N_IF=400
    # class=failed
    # n=2
    # seed=7
    # sigma2=0.13183
    # beta=8.0
    # K=1.0
    # theta=0.0
    1.93,0.41,-0.12,0.33
    2.71,-0.88,0.05,-0.29

Each body line is one record of ``4(m+1)`` comma-separated reals in the
order ``[Re h; Im h; Re n; Im n]``. Reals use Python's shortest round-trip
``repr``, so reading a file back reproduces every value exactly.
"""

from __future__ import annotations

import math
import shlex
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import RicianParams
from .harqgen import PosteriorDataset
from .paramtest import MlEstimates
from .phy.ldpc import DEFAULT_CODE
from .report import TestReport

SCHEMA_VERSION = 1
REQUIRED_KEYS = ("schema", "m", "N_IF", "class", "n", "seed", "sigma2", "beta", "K", "theta")
OPTIONAL_KEYS = ("code", "sessions")


class DatasetFormatError(ValueError):
    """Malformed dataset, report or config file."""


def _fmt(x: float) -> str:
    return repr(float(x))


def format_dataset(D: PosteriorDataset) -> str:
    if D.n == 0:
        raise ValueError("refusing to write an empty dataset (n=0)")
    header = {
        "schema": SCHEMA_VERSION,
        "m": D.m,
        "N_IF": D.n_if,
        "class": D.cls,
        "n": D.n,
        "seed": D.seed,
        "sigma2": _fmt(D.prior.sigma2),
        "beta": _fmt(D.prior.beta),
        "K": _fmt(D.prior.K),
        "theta": _fmt(D.prior.theta),
    }
    if "code" in D.meta:
        header["code"] = D.meta["code"]
    if D.sessions:
        header["sessions"] = D.sessions
    lines = [f"# {k}={v}" for k, v in header.items()]
    lines.extend(",".join(map(_fmt, col)) for col in D.X.T)
    return "\n".join(lines) + "\n"


def write_dataset(D: PosteriorDataset, path) -> None:
    text = format_dataset(D)
    path = Path(path)
    try:
        path.write_text(text, encoding="ascii", newline="\n")
    except OSError as exc:
        raise OSError(f"cannot write dataset to {path}: {exc.strerror or exc}") from exc


def parse_dataset(text: str, source: str = "<string>") -> PosteriorDataset:
    header = {}
    rows = []
    body_start = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if body_start is not None:
                raise DatasetFormatError(f"{source}:{lineno}: header line after body")
            key, sep, value = line[1:].strip().partition("=")
            if not sep:
                raise DatasetFormatError(f"{source}:{lineno}: header line is not key=value")
            header[key.strip()] = value.strip()
            continue
        if body_start is None:
            body_start = lineno
        rows.append((lineno, line))
    missing = [k for k in REQUIRED_KEYS if k not in header]
    if missing:
        raise DatasetFormatError(f"{source}: missing header keys {missing}")
    for key in header:
        if key not in REQUIRED_KEYS and key not in OPTIONAL_KEYS:
            warnings.warn(f"{source}: ignoring unknown header key {key!r}", stacklevel=2)
    try:
        schema = int(header["schema"])
        m, n_if, n, seed = (int(header[k]) for k in ("m", "N_IF", "n", "seed"))
        prior = RicianParams(
            beta=float(header["beta"]), K=float(header["K"]),
            theta=float(header["theta"]), sigma2=float(header["sigma2"]),
        )
    except ValueError as exc:
        raise DatasetFormatError(f"{source}: bad header value: {exc}") from exc
    if schema != SCHEMA_VERSION:
        raise DatasetFormatError(f"{source}: schema version {schema}, expected {SCHEMA_VERSION}")
    if len(rows) != n:
        raise DatasetFormatError(f"{source}: header declares n={n} records but body has {len(rows)}")
    d = 4 * (m + 1)
    X = np.empty((d, n))
    for j, (lineno, line) in enumerate(rows):
        fields_ = line.split(",")
        if len(fields_) != d:
            raise DatasetFormatError(f"{source}:{lineno}: expected {d} values, found {len(fields_)}")
        try:
            vals = [float(v) for v in fields_]
        except ValueError as exc:
            raise DatasetFormatError(f"{source}:{lineno}: {exc}") from exc
        if not all(math.isfinite(v) for v in vals):
            raise DatasetFormatError(f"{source}:{lineno}: non-finite value")
        X[:, j] = vals
    cls = header["class"]
    if cls not in ("failed", "successful"):
        raise DatasetFormatError(f"{source}: class must be failed or successful, got {cls!r}")
    meta = {"code": header["code"]} if "code" in header else {}
    return PosteriorDataset(cls, m, n_if, X, prior, seed, int(header.get("sessions", 0)), meta)


def read_dataset(path) -> PosteriorDataset:
    path = Path(path)
    try:
        text = path.read_text(encoding="ascii")
    except OSError as exc:
        raise OSError(f"cannot read dataset {path}: {exc.strerror or exc}") from exc
    except UnicodeDecodeError as exc:
        raise DatasetFormatError(f"{path}: not an ASCII text file") from exc
    return parse_dataset(text, str(path))


# reports -------------------------------------------------------------------

@dataclass
class DatasetResult:
    """Everything reported about one dataset file."""

    label: str
    cls: str
    reports: list = field(default_factory=list)
    estimates: MlEstimates | None = None
    error: str | None = None


EST_FIELDS = ("beta_hat", "K_hat", "theta_hat", "sigma2_hat")
EST_HEADS = ("beta^", "K^", "theta^", "sigma2^")


def _num(x) -> str:
    if x is None:
        return "-"
    x = float(x)
    if x == 0.0:
        return "0"
    if 1e-3 <= abs(x) < 1e4:
        return f"{x:.4g}"
    return f"{x:.3e}"


def _render_table(results) -> str:
    labels = list(dict.fromkeys(r.label for r in results))
    classes = [c for c in ("failed", "successful") if any(r.cls == c for r in results)]
    tests = list(dict.fromkeys(t.name for r in results for t in r.reports))
    with_est = any(r.estimates is not None for r in results)
    by_key = {(r.label, r.cls): r for r in results}

    cols = list(tests) + (list(EST_HEADS) if with_est else []) or ["status"]
    head = ["Dataset"] + cols * len(classes)
    rows = []
    notes = []
    for lab in labels:
        row = [lab]
        for c in classes:
            r = by_key.get((lab, c))
            if r is None:
                row += [""] * len(cols)
                continue
            if r.error:
                row += ["error"] * len(cols)
                notes.append(f"{lab} [{c}] error: {r.error}")
                continue
            named = {t.name: t for t in r.reports}
            for name in tests:
                t = named.get(name)
                if t is None:
                    row.append("-")
                else:
                    row.append(_num(t.p_value) + ("*" if t.rejected else ""))
                    for note in t.notes:
                        notes.append(f"{lab} [{c}] {name}: {note}")
            if with_est:
                e = r.estimates
                row += [_num(getattr(e, f)) if e else "-" for f in EST_FIELDS]
        rows.append(row)
    table = [head] + rows
    widths = [max(len(r[i]) for r in table) for i in range(len(head))]
    cells = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in table]
    # panel titles span their block of columns
    titles = ["".ljust(widths[0])]
    for k, c in enumerate(classes):
        span = widths[1 + k * len(cols) : 1 + (k + 1) * len(cols)]
        titles.append(f"{c.capitalize()} sessions".ljust(sum(span) + 2 * (len(span) - 1)))
    rule = "-" * max(len(line) for line in cells)
    out = ["  ".join(titles).rstrip(), cells[0], rule] + cells[1:]
    if tests:
        alphas = sorted({t.alpha for r in results for t in r.reports})
        out.append("")
        out.append("p-values; * marks rejection at alpha=" + ",".join(_num(a) for a in alphas))
    out += notes
    return "\n".join(out) + "\n"


def _kv(**items) -> str:
    return " ".join(f"{k}={shlex.quote(str(v))}" for k, v in items.items())


def _render_machine(results) -> str:
    lines = []
    for r in results:
        if r.error:
            lines.append(_kv(kind="error", dataset=r.label, cls=r.cls, message=r.error))
            continue
        for t in r.reports:
            lines.append(_kv(
                kind="test", dataset=r.label, cls=r.cls, test=t.name,
                statistic=repr(float(t.statistic)), dof="none" if t.dof is None else repr(t.dof),
                p_value=repr(float(t.p_value)), alpha=repr(float(t.alpha)),
                decision=t.decision, notes=";".join(t.notes),
            ))
        if r.estimates is not None:
            e = r.estimates
            lines.append(_kv(kind="estimate", dataset=r.label, cls=r.cls,
                             **{f: repr(float(getattr(e, f))) for f in MlEstimates.__dataclass_fields__}))
    return "\n".join(lines) + "\n"


def write_report(results, fmt: str = "table") -> str:
    """Render results as an aligned ``table`` or one ``machine`` record per line."""
    results = list(results)
    if not results:
        raise ValueError("nothing to report")
    if fmt == "table":
        return _render_table(results)
    if fmt == "machine":
        return _render_machine(results)
    raise ValueError(f"unknown report format {fmt!r}")


def parse_machine_report(text: str):
    """Inverse of the machine format: rebuild ``DatasetResult`` objects."""
    results = {}
    order = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = dict(tok.split("=", 1) for tok in shlex.split(line))
            key = (rec["dataset"], rec["cls"])
        except (ValueError, KeyError) as exc:
            raise DatasetFormatError(f"report line {lineno}: {exc}") from exc
        if key not in results:
            results[key] = DatasetResult(label=key[0], cls=key[1])
            order.append(key)
        res = results[key]
        kind = rec.get("kind")
        if kind == "test":
            dof_ = None if rec["dof"] == "none" else float(rec["dof"])
            if dof_ is not None and dof_.is_integer():
                dof_ = int(dof_)
            res.reports.append(TestReport(
                rec["test"], float(rec["statistic"]), dof_, float(rec["p_value"]),
                float(rec["alpha"]), tuple(n for n in rec["notes"].split(";") if n),
            ))
        elif kind == "estimate":
            res.estimates = MlEstimates(**{f: float(rec[f]) for f in MlEstimates.__dataclass_fields__})
        elif kind == "error":
            res.error = rec["message"]
        else:
            raise DatasetFormatError(f"report line {lineno}: unknown kind {kind!r}")
    return [results[k] for k in order]


# run configuration ---------------------------------------------------------

@dataclass
class DatasetEntry:
    n_if: int
    m: int
    n: int
    sigma2: float | None = None


@dataclass
class RunConfig:
    """Generation run settings.

    File layout is flat ``key = value`` with dotted section prefixes::

        seed = 1
        output = runs/grid
        code = n2400_r050
        prior.beta = 8
        prior.K = 1
        prior.theta = 0
        calibrate.target_fail = 0.5
        calibrate.trials = 500
        tests.alpha = 0.01
        tests.which = mvn,exact,relaxed
        dataset.1.n_if = 400
        dataset.1.m = 0
        dataset.1.n = 2000
        dataset.1.sigma2 = 0.13183   # optional; calibrated when absent
    """

    beta: float = 8.0
    K: float = 1.0
    theta: float = 0.0
    datasets: list = field(default_factory=list)
    alpha: float = 0.01
    tests: tuple = ("mvn", "exact", "relaxed")
    output: str = "datasets"
    seed: int | None = None
    code: str = DEFAULT_CODE
    target_fail: float = 0.5
    trials: int = 500

    def prior(self, sigma2: float = 1.0) -> RicianParams:
        return RicianParams(self.beta, self.K, self.theta, sigma2)

    def validate(self) -> None:
        self.prior()
        if not 0 < self.alpha < 1:
            raise DatasetFormatError(f"tests.alpha must lie in (0, 1), got {self.alpha}")
        if not 0 < self.target_fail < 1:
            raise DatasetFormatError("calibrate.target_fail must lie in (0, 1)")
        bad = set(self.tests) - {"mvn", "exact", "relaxed"}
        if bad:
            raise DatasetFormatError(f"unknown tests {sorted(bad)}")
        for d in self.datasets:
            if d.n_if < 1 or d.m < 0 or d.n < 1 or (d.sigma2 is not None and d.sigma2 <= 0):
                raise DatasetFormatError(f"invalid dataset entry {d}")


_SCALARS = {
    "seed": ("seed", int), "output": ("output", str), "code": ("code", str),
    "prior.beta": ("beta", float), "prior.K": ("K", float), "prior.theta": ("theta", float),
    "calibrate.target_fail": ("target_fail", float), "calibrate.trials": ("trials", int),
    "tests.alpha": ("alpha", float),
}


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    cfg = RunConfig()
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise DatasetFormatError(f"{source}:{lineno}: expected key = value")
        try:
            if key in _SCALARS:
                attr, conv = _SCALARS[key]
                setattr(cfg, attr, conv(value))
            elif key == "tests.which":
                cfg.tests = tuple(t.strip() for t in value.split(",") if t.strip())
            elif key.startswith("dataset."):
                _, ident, attr = key.split(".", 2)
                conv = float if attr == "sigma2" else int
                if attr not in ("n_if", "m", "n", "sigma2"):
                    raise DatasetFormatError(f"{source}:{lineno}: unknown dataset field {attr!r}")
                entries.setdefault(ident, {})[attr] = conv(value)
            else:
                warnings.warn(f"{source}:{lineno}: ignoring unknown key {key!r}", stacklevel=2)
        except ValueError as exc:
            if isinstance(exc, DatasetFormatError):
                raise
            raise DatasetFormatError(f"{source}:{lineno}: bad value for {key}: {exc}") from exc
    for ident, fields_ in entries.items():
        missing = {"n_if", "m", "n"} - set(fields_)
        if missing:
            raise DatasetFormatError(f"{source}: dataset.{ident} lacks {sorted(missing)}")
        cfg.datasets.append(DatasetEntry(**fields_))
    try:
        cfg.validate()
    except ValueError as exc:
        raise DatasetFormatError(f"{source}: {exc}") from exc
    return cfg


def read_config(path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), str(path))


def format_config(cfg: RunConfig) -> str:
    lines = [] if cfg.seed is None else [f"seed = {cfg.seed}"]
    lines += [
        f"output = {cfg.output}", f"code = {cfg.code}",
        f"prior.beta = {_fmt(cfg.beta)}", f"prior.K = {_fmt(cfg.K)}", f"prior.theta = {_fmt(cfg.theta)}",
        f"calibrate.target_fail = {_fmt(cfg.target_fail)}", f"calibrate.trials = {cfg.trials}",
        f"tests.alpha = {_fmt(cfg.alpha)}", f"tests.which = {','.join(cfg.tests)}",
    ]
    for i, d in enumerate(cfg.datasets, 1):
        lines += [f"dataset.{i}.n_if = {d.n_if}", f"dataset.{i}.m = {d.m}", f"dataset.{i}.n = {d.n}"]
        if d.sigma2 is not None:
            lines.append(f"dataset.{i}.sigma2 = {_fmt(d.sigma2)}")
    return "\n".join(lines) + "\n"
