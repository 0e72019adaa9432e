"""Posterior dataset generation, noise-power calibration and mismatch BER runs."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import RicianParams, SeededRng, as_generator, sample_cscg, sample_rician
from .phy.ldpc import DEFAULT_CODE, load_code
from .phy.modem import QAM64, ModemConfig
from .phy.session import ConfigurationError, run_session

log = logging.getLogger(__name__)

CLASSES = ("failed", "successful")
MAX_BATCH = 500
# sessions observed before a class with zero members is declared unreachable
STARVATION_PROBE = 200


class CalibrationError(RuntimeError):
    """Raised when a requested failure/success balance cannot be reached."""


@dataclass(frozen=True)
class DatasetSpec:
    n_if: int
    m: int
    n: int
    prior: RicianParams
    seed: int = 0
    code: str = DEFAULT_CODE
    max_sessions: int = 1_000_000

    def __post_init__(self):
        if self.n_if < 1:
            raise ValueError("n_if must be >= 1")
        if self.m < 0:
            raise ValueError("m must be >= 0")
        if self.n < 1:
            raise ValueError("n must be >= 1")


@dataclass(frozen=True, eq=False)
class PosteriorDataset:
    """Records of one posterior class as a ``(4(m+1), n)`` matrix.

    Row blocks are ``[Re h; Im h; Re n; Im n]``, each spanning rounds 0..m.
    """

    cls: str
    m: int
    n_if: int
    X: np.ndarray
    prior: RicianParams
    seed: int = 0
    sessions: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.cls not in CLASSES:
            raise ValueError(f"class must be one of {CLASSES}, got {self.cls!r}")
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2 or X.shape[0] != 4 * (self.m + 1):
            raise ValueError(f"X must have {4 * (self.m + 1)} rows, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ValueError("X has non-finite entries")
        object.__setattr__(self, "X", X)

    @property
    def n(self) -> int:
        return self.X.shape[1]

    @property
    def d(self) -> int:
        return self.X.shape[0]

    @property
    def sigma2(self) -> float:
        return self.prior.sigma2

    def block(self, name: str) -> np.ndarray:
        """One of ``h_re``, ``h_im``, ``n_re``, ``n_im`` as an ``(m+1, n)`` view."""
        k = ("h_re", "h_im", "n_re", "n_im").index(name)
        r = self.m + 1
        return self.X[k * r : (k + 1) * r]

    def with_X(self, X) -> "PosteriorDataset":
        return PosteriorDataset(self.cls, self.m, self.n_if, X, self.prior, self.seed, self.sessions, dict(self.meta))


def prior_dataset(prior: RicianParams, m: int, n: int, rng=0, cls: str = "failed") -> PosteriorDataset:
    """``n`` records drawn straight from the prior, with no HARQ selection.

    Every channel and noise entry is independent, which is the null
    hypothesis of the exact parameter-matching test.
    """
    gen = as_generator(rng)
    r = m + 1
    h = sample_rician(prior, r * n, gen).reshape(r, n)
    z = sample_cscg(prior.sigma2, r * n, gen).reshape(r, n)
    X = np.concatenate([h.real, h.imag, z.real, z.imag], axis=0)
    return PosteriorDataset(cls, m, 1, X, prior, meta={"source": "prior"})


def _session_outcome(args):
    code_name, params, n_if, m, seed, sid = args
    trace = run_session(load_code(code_name), QAM64, params, n_if, m, SeededRng(seed, sid))
    outcome = trace.outcome_at(m)
    return outcome, (trace.records(m) if outcome else None)


def _map(fn, jobs, workers):
    if workers <= 1:
        return map(fn, jobs)
    pool = ProcessPoolExecutor(max_workers=workers)
    try:
        return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    finally:
        pool.shutdown()


def classify_and_collect(spec: DatasetSpec, workers: int = 1, progress=None):
    """Run sessions until both posterior classes hold at least ``spec.n`` records.

    Session ``i`` draws from stream ``(spec.seed, i)`` and sessions are
    classified in index order, so the output does not depend on batching or
    on ``workers``. A class stops accepting sessions once it is full; each
    accepted session contributes all of its ``N_IF`` records.
    """
    n_sym = load_code(spec.code).n // QAM64.bits_per_symbol
    if spec.n_if > n_sym:
        raise ConfigurationError(f"N_IF={spec.n_if} exceeds the {n_sym} symbols of a transport block")
    need = spec.n
    batch = min(MAX_BATCH, max(8, 2 * math.ceil(need / spec.n_if)))
    parts = {c: [] for c in CLASSES}
    counts = {c: 0 for c in CLASSES}
    seen = {c: 0 for c in CLASSES}
    used = {c: 0 for c in CLASSES}
    done = 0
    while counts["failed"] < need or counts["successful"] < need:
        if done >= spec.max_sessions:
            raise CalibrationError(
                f"session budget {spec.max_sessions} exhausted with "
                f"{counts['failed']} failed / {counts['successful']} successful records (target {need})"
            )
        hi = min(done + batch, spec.max_sessions)
        jobs = [(spec.code, spec.prior, spec.n_if, spec.m, spec.seed, i) for i in range(done, hi)]
        for outcome, rec in _map(_session_outcome, jobs, workers):
            if outcome is None:
                continue
            seen[outcome] += 1
            if counts[outcome] < need:
                parts[outcome].append(rec)
                counts[outcome] += rec.shape[1]
                used[outcome] += 1
        done = hi
        if progress is not None:
            progress(done, dict(counts))
        for c in CLASSES:
            if done >= STARVATION_PROBE and seen[c] == 0:
                raise CalibrationError(
                    f"no {c} sessions at round m={spec.m} after {done} sessions "
                    f"(sigma2={spec.prior.sigma2:g}); recalibrate sigma2"
                )
    meta = {"code": spec.code, "sessions_run": done}
    return tuple(
        PosteriorDataset(
            cls=c,
            m=spec.m,
            n_if=spec.n_if,
            X=np.concatenate(parts[c], axis=1),
            prior=spec.prior,
            seed=spec.seed,
            sessions=used[c],
            meta=dict(meta),
        )
        for c in CLASSES
    )


# calibration ---------------------------------------------------------------

@dataclass
class CalibrationResult:
    sigma2: float
    fail_rate: float
    trials: int
    probes: list = field(default_factory=list)


def failure_rate(prior: RicianParams, n_if: int, m: int, trials: int, seed: int = 0,
                 code: str = DEFAULT_CODE, workers: int = 1) -> float:
    """Fraction of sessions that NACK at every round 0..m."""
    jobs = [(code, prior, n_if, m, seed, i) for i in range(trials)]
    outcomes = [o for o, _ in _map(_session_outcome, jobs, workers)]
    return sum(o == "failed" for o in outcomes) / trials


def calibrate_sigma2(
    prior: RicianParams,
    n_if: int,
    m: int,
    target_fail: float = 0.5,
    trials: int = 500,
    seed: int = 0,
    code: str = DEFAULT_CODE,
    tol: float = 0.05,
    bracket: tuple = (1e-4, 1e2),
    max_probes: int = 30,
    workers: int = 1,
) -> CalibrationResult:
    """Find the noise power at which a fraction ``target_fail`` of sessions fail
    through round ``m``.

    The bracket (relative to ``prior.beta``) is searched geometrically from a
    starting guess, then bisected on ``log sigma2``. All probes reuse the
    same session streams, which keeps the rate nearly monotone in sigma2.
    """
    if not 0.0 < target_fail < 1.0:
        raise ValueError(f"target_fail must lie in (0, 1), got {target_fail}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    lo_lim, hi_lim = bracket[0] * prior.beta, bracket[1] * prior.beta
    probes = []

    def rate(s2):
        r = failure_rate(prior.replace(sigma2=s2), n_if, m, trials, seed, code, workers)
        probes.append((s2, r))
        log.info("calibrate N_IF=%d m=%d: sigma2=%.5g fail=%.3f", n_if, m, s2, r)
        return r

    s = min(max(0.05 * prior.beta * (m + 1), lo_lim), hi_lim)
    r = rate(s)
    if abs(r - target_fail) <= tol:
        return CalibrationResult(s, r, trials, probes)
    step = 2.0 if r < target_fail else 0.5
    lo = hi = None
    while len(probes) < max_probes:
        s_next = s * step
        if not lo_lim <= s_next <= hi_lim:
            raise CalibrationError(
                f"failure rate {target_fail} not bracketed in sigma2 range [{lo_lim:g}, {hi_lim:g}]"
            )
        r_next = rate(s_next)
        if abs(r_next - target_fail) <= tol:
            return CalibrationResult(s_next, r_next, trials, probes)
        if (r_next < target_fail) != (r < target_fail):
            lo, hi = (s, s_next) if s < s_next else (s_next, s)
            break
        s, r = s_next, r_next
    if lo is None:
        raise CalibrationError("bracket search exhausted its probe budget")
    while len(probes) < max_probes:
        mid = math.sqrt(lo * hi)
        r_mid = rate(mid)
        if abs(r_mid - target_fail) <= tol:
            return CalibrationResult(mid, r_mid, trials, probes)
        if r_mid < target_fail:
            lo = mid
        else:
            hi = mid
    raise CalibrationError(f"no sigma2 within {tol} of the target after {max_probes} probes")


# mismatch BER harness ------------------------------------------------------

def validate_mapping(table, order: int = 64) -> np.ndarray:
    t = np.asarray(table)
    if t.shape != (order,) or not np.issubdtype(t.dtype, np.integer):
        raise ValueError(f"mapping table must hold {order} integer labels")
    if not np.array_equal(np.sort(t), np.arange(order)):
        raise ValueError("mapping table is not a bijection on the label set")
    return t.astype(np.int64)


@dataclass
class MismatchResult:
    ber: np.ndarray
    bit_errors: np.ndarray
    bits: int
    design: RicianParams
    true: RicianParams

    def stderr(self) -> np.ndarray:
        p = self.ber
        return np.sqrt(np.maximum(p * (1 - p), 1e-300) / self.bits)


def mismatch_ber_harness(
    design_params: RicianParams,
    true_params: RicianParams,
    mappings=None,
    m_max: int = 3,
    symbols: int = 100_000,
    rng=0,
    modem: ModemConfig = QAM64,
) -> MismatchResult:
    """Uncoded BER of Chase-combined ML detection after each round 0..m_max.

    Round ``r`` sends the point whose Gray label is ``mappings[r][label]``;
    ``None`` means the identity map on every round. Channels and noise follow
    ``true_params``, one independent fading instance per symbol and round.
    ``design_params`` names the law the mappings were designed for and only
    travels with the result.
    """
    if symbols < 10_000:
        raise ValueError("symbols must be >= 1e4")
    if m_max < 0:
        raise ValueError("m_max must be >= 0")
    order = modem.order
    if mappings is None:
        maps = [np.arange(order)] * (m_max + 1)
    else:
        if len(mappings) != m_max + 1:
            raise ValueError(f"need {m_max + 1} mapping tables, got {len(mappings)}")
        maps = [validate_mapping(t, order) for t in mappings]
    gen = as_generator(rng)
    labels = gen.integers(0, order, symbols)
    lb = modem.label_bits.astype(np.int64)
    metric = np.zeros((symbols, order))
    errors = np.zeros(m_max + 1, dtype=np.int64)
    for r in range(m_max + 1):
        pts = modem.points[maps[r]]
        h = sample_rician(true_params, symbols, gen)
        y = h * pts[labels] + sample_cscg(true_params.sigma2, symbols, gen)
        metric += np.abs(y[:, None] - h[:, None] * pts[None, :]) ** 2
        det = np.argmin(metric, axis=1)
        errors[r] = int(np.sum(lb[det] != lb[labels]))
    nbits = symbols * modem.bits_per_symbol
    return MismatchResult(errors / nbits, errors, nbits, design_params, true_params)


def read_mapping(path) -> np.ndarray:
    """Parse a 64-line ``src -> dst`` (or ``src dst``) label mapping file."""
    table = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace("->", " ").split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'src -> dst'")
        src, dst = int(parts[0]), int(parts[1])
        if src in table:
            raise ValueError(f"{path}:{lineno}: label {src} mapped twice")
        table[src] = dst
    if sorted(table) != list(range(len(table))):
        raise ValueError(f"{path}: source labels must cover 0..{len(table) - 1}")
    return validate_mapping(np.array([table[i] for i in range(len(table))], dtype=np.int64))


def write_mapping(table, path) -> None:
    t = validate_mapping(table)
    Path(path).write_text("".join(f"{i} -> {int(j)}\n" for i, j in enumerate(t)), encoding="utf-8")
