"""One HARQ Chase-combining session over a block-wise Rician channel."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..channel import RicianParams, as_generator, sample_cscg, sample_rician
from .ldpc import LdpcCode, ldpc_decode, ldpc_encode
from .modem import ModemConfig, chase_llr, modulate


class ConfigurationError(ValueError):
    """Raised for inconsistent code / modem / fading-block settings."""


@dataclass(frozen=True)
class TransportBlock:
    """Symbols of one transmission and the fading instance each one sees."""

    symbols: np.ndarray
    instance_index: np.ndarray

    @property
    def n_symbols(self) -> int:
        return self.symbols.size


def transport_block(modem: ModemConfig, codeword, n_if: int) -> TransportBlock:
    symbols = modulate(modem, codeword)
    if not 1 <= n_if <= symbols.size:
        raise ConfigurationError(f"N_IF must be in [1, {symbols.size}], got {n_if}")
    # fading instances are laid periodically over the block
    return TransportBlock(symbols, np.arange(symbols.size) % n_if)


@dataclass
class SessionTrace:
    """Everything observed in one session, one list entry per round."""

    channels: list = field(default_factory=list)
    noise: list = field(default_factory=list)
    noise_index: list = field(default_factory=list)
    acks: list = field(default_factory=list)
    iterations: list = field(default_factory=list)

    @property
    def rounds(self) -> int:
        return len(self.acks)

    @property
    def m_reached(self) -> int:
        return self.rounds - 1

    @property
    def acked(self) -> bool:
        return bool(self.acks) and self.acks[-1]

    def outcome_at(self, m: int):
        """``'failed'`` if rounds 0..m all NACKed, ``'successful'`` if the
        ACK came exactly at round m, ``None`` otherwise."""
        if self.rounds <= m or any(self.acks[:m]):
            return None
        return "successful" if self.acks[m] else "failed"

    def records(self, m: int) -> np.ndarray:
        """Zip rounds 0..m into ``N_IF`` real records of length ``4(m+1)``.

        Record k holds ``[Re h_k; Im h_k; Re n_k; Im n_k]`` where each block
        runs over rounds 0..m. Returned as a ``(4(m+1), N_IF)`` matrix.
        """
        h = np.stack(self.channels[: m + 1])
        nz = np.stack(self.noise[: m + 1])
        return np.concatenate([h.real, h.imag, nz.real, nz.imag], axis=0)


def _pick_noise_indices(n_symbols: int, n_if: int, gen) -> np.ndarray:
    """One symbol index drawn uniformly inside each fading-instance group."""
    k = np.arange(n_if)
    sizes = (n_symbols - 1 - k) // n_if + 1
    return k + n_if * gen.integers(0, sizes)


def run_session(
    code: LdpcCode,
    modem: ModemConfig,
    params: RicianParams,
    n_if: int,
    M: int,
    rng,
    max_iters: int = 50,
) -> SessionTrace:
    """Simulate one session until the first ACK or after round ``M``.

    Random draws happen in a fixed order (info bits, then per round: fading
    instances, per-symbol noise, noise picks) so a trace can be replayed
    from its stream.
    """
    if M < 0:
        raise ConfigurationError("M must be >= 0")
    if code.n % modem.bits_per_symbol:
        raise ConfigurationError("code length is not a multiple of bits per symbol")
    gen = as_generator(rng)
    info = gen.integers(0, 2, code.k, dtype=np.uint8)
    cw = ldpc_encode(code, info)
    tb = transport_block(modem, cw, n_if)
    n_sym = tb.n_symbols
    trace = SessionTrace()
    ys, hs = [], []
    for _ in range(M + 1):
        h_inst = sample_rician(params, n_if, gen)
        noise = sample_cscg(params.sigma2, n_sym, gen)
        picks = _pick_noise_indices(n_sym, n_if, gen)
        h_sym = h_inst[tb.instance_index]
        ys.append(h_sym * tb.symbols + noise)
        hs.append(h_sym)
        llr = chase_llr(modem, np.stack(ys), np.stack(hs), params.sigma2).reshape(-1)
        res = ldpc_decode(code, llr, max_iters)
        ack = bool(np.array_equal(res.bits[code.info_positions], info))
        trace.channels.append(h_inst)
        trace.noise.append(noise[picks])
        trace.noise_index.append(picks)
        trace.acks.append(ack)
        trace.iterations.append(res.iterations)
        if ack:
            break
    return trace
