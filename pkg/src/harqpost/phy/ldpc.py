"""Binary LDPC codes: construction, alist I/O, encoding and sum-product decoding.

alist layout (MacKay), all indices 1-based, zero-padded rows:

    N M                      block length, number of checks
    max_col_deg max_row_deg
    col degrees (N ints)
    row degrees (M ints)
    N lines: check indices of each variable node
    M lines: variable indices of each check node
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from numba import njit


@dataclass(frozen=True, eq=False)
class LdpcCode:
    """Sparse parity-check structure plus a systematic encoder.

    ``check_nbrs`` is ``(M, max_row_deg)`` and ``var_nbrs`` is
    ``(N, max_col_deg)``, both 0-based and padded with -1.
    """

    n: int
    check_nbrs: np.ndarray
    var_nbrs: np.ndarray
    _enc: tuple = field(default=None, repr=False)

    @classmethod
    def from_adjacency(cls, n: int, check_lists) -> "LdpcCode":
        m = len(check_lists)
        dc = max(len(c) for c in check_lists)
        chk = np.full((m, dc), -1, dtype=np.int64)
        var_lists = [[] for _ in range(n)]
        for c, vs in enumerate(check_lists):
            if len(set(vs)) != len(vs):
                raise ValueError(f"check {c} lists a variable twice")
            for k, v in enumerate(sorted(vs)):
                if not 0 <= v < n:
                    raise ValueError(f"variable index {v} out of range")
                chk[c, k] = v
                var_lists[v].append(c)
        dv = max(len(v) for v in var_lists)
        var = np.full((n, max(dv, 1)), -1, dtype=np.int64)
        for v, cs in enumerate(var_lists):
            var[v, : len(cs)] = cs
        enc = _systematic_encoder(n, chk)
        return cls(n=n, check_nbrs=chk, var_nbrs=var, _enc=enc)

    @classmethod
    def from_matrix(cls, H) -> "LdpcCode":
        H = np.asarray(H) % 2
        return cls.from_adjacency(H.shape[1], [list(np.flatnonzero(row)) for row in H])

    @property
    def m(self) -> int:
        return self.check_nbrs.shape[0]

    @property
    def k(self) -> int:
        """Number of information bits (``n - rank(H)``)."""
        return len(self._enc[0])

    @property
    def rate(self) -> float:
        return self.k / self.n

    @property
    def info_positions(self) -> np.ndarray:
        return self._enc[0]

    @property
    def parity_positions(self) -> np.ndarray:
        return self._enc[1]

    @property
    def col_degrees(self) -> np.ndarray:
        return (self.var_nbrs >= 0).sum(axis=1)

    @property
    def row_degrees(self) -> np.ndarray:
        return (self.check_nbrs >= 0).sum(axis=1)

    def parity_matrix(self) -> np.ndarray:
        H = np.zeros((self.m, self.n), dtype=np.uint8)
        for c in range(self.m):
            vs = self.check_nbrs[c]
            H[c, vs[vs >= 0]] = 1
        return H

    def syndrome(self, bits) -> np.ndarray:
        bits = np.asarray(bits, dtype=np.uint8)
        padded = np.concatenate([bits, [0]])
        return np.bitwise_xor.reduce(padded[self.check_nbrs], axis=1)

    def is_codeword(self, bits) -> bool:
        return not self.syndrome(bits).any()


def _systematic_encoder(n: int, check_nbrs: np.ndarray):
    """Reduce H to row echelon form over GF(2).

    Returns ``(info_pos, parity_pos, P)`` such that for a codeword ``c``,
    ``c[parity_pos] = P @ c[info_pos] mod 2``. Linearly dependent rows of H
    drop out, so ``len(parity_pos) = rank(H)``.
    """
    m = check_nbrs.shape[0]
    H = np.zeros((m, n), dtype=np.uint8)
    for c in range(m):
        vs = check_nbrs[c]
        H[c, vs[vs >= 0]] = 1
    packed = np.packbits(H, axis=1)
    pivots = []
    r = 0
    for col in range(n):
        if r == m:
            break
        byte, mask = col >> 3, np.uint8(0x80 >> (col & 7))
        hits = np.flatnonzero(packed[r:, byte] & mask)
        if hits.size == 0:
            continue
        p = r + hits[0]
        if p != r:
            packed[[r, p]] = packed[[p, r]]
        rows = np.flatnonzero(packed[:, byte] & mask)
        rows = rows[rows != r]
        packed[rows] ^= packed[r]
        pivots.append(col)
        r += 1
    parity_pos = np.asarray(pivots, dtype=np.int64)
    info_mask = np.ones(n, dtype=bool)
    info_mask[parity_pos] = False
    info_pos = np.flatnonzero(info_mask)
    R = np.unpackbits(packed[:r], axis=1, count=n)
    P = np.ascontiguousarray(R[:, info_pos])
    return info_pos, parity_pos, P


def ldpc_encode(code: LdpcCode, info_bits) -> np.ndarray:
    """Systematically encode one word (1-D) or a batch (2-D, one word per row)."""
    u = np.asarray(info_bits, dtype=np.uint8)
    if u.shape[-1] != code.k:
        raise ValueError(f"expected {code.k} info bits, got {u.shape[-1]}")
    info_pos, parity_pos, P = code._enc
    parity = (u.astype(np.float32) @ P.T.astype(np.float32)).astype(np.int64) & 1
    out = np.zeros(u.shape[:-1] + (code.n,), dtype=np.uint8)
    out[..., info_pos] = u
    out[..., parity_pos] = parity
    return out


# decoder -------------------------------------------------------------------

_MSG_CLIP = 50.0
_TANH_CLIP = 1.0 - 1e-15


@njit(cache=True, fastmath=True)
def _sum_product(llr, chk_ptr, chk_var, var_ptr, var_edge, max_iters, v2c, c2v, post, hard):
    n = llr.shape[0]
    n_chk = chk_ptr.shape[0] - 1
    for e in range(chk_var.shape[0]):
        v2c[e] = llr[chk_var[e]]
    for v in range(n):
        hard[v] = 1 if llr[v] < 0 else 0
    t = np.empty(64)
    for it in range(1, max_iters + 1):
        # check-node update, leave-one-out product via prefix/suffix sweeps
        for c in range(n_chk):
            a = chk_ptr[c]
            b = chk_ptr[c + 1]
            deg = b - a
            for j in range(deg):
                x = v2c[a + j]
                if x > _MSG_CLIP:
                    x = _MSG_CLIP
                elif x < -_MSG_CLIP:
                    x = -_MSG_CLIP
                # tanh(x/2) = 1 - 2/(e^x + 1)
                t[j] = 1.0 - 2.0 / (np.exp(x) + 1.0)
            acc = 1.0
            for j in range(deg):
                c2v[a + j] = acc
                acc *= t[j]
            acc = 1.0
            for j in range(deg - 1, -1, -1):
                p = c2v[a + j] * acc
                acc *= t[j]
                if p > _TANH_CLIP:
                    p = _TANH_CLIP
                elif p < -_TANH_CLIP:
                    p = -_TANH_CLIP
                msg = np.log((1.0 + p) / (1.0 - p))
                if msg > _MSG_CLIP:
                    msg = _MSG_CLIP
                elif msg < -_MSG_CLIP:
                    msg = -_MSG_CLIP
                c2v[a + j] = msg
        # variable-node update and tentative decision; a zero posterior is undecided
        ok = True
        for v in range(n):
            a = var_ptr[v]
            b = var_ptr[v + 1]
            tot = llr[v]
            for j in range(a, b):
                tot += c2v[var_edge[j]]
            post[v] = tot
            hard[v] = 1 if tot < 0 else 0
            if tot == 0.0:
                ok = False
            for j in range(a, b):
                e = var_edge[j]
                v2c[e] = tot - c2v[e]
        for c in range(n_chk):
            if not ok:
                break
            s = 0
            for e in range(chk_ptr[c], chk_ptr[c + 1]):
                s ^= hard[chk_var[e]]
            if s != 0:
                ok = False
                break
        if ok:
            return it
    return -1


@functools.lru_cache(maxsize=8)
def _edge_layout(code: LdpcCode):
    chk = code.check_nbrs
    deg = (chk >= 0).sum(axis=1)
    if deg.max() > 64:
        raise ValueError("check degree above 64 is not supported by the decoder")
    chk_ptr = np.concatenate([[0], np.cumsum(deg)]).astype(np.int64)
    chk_var = chk[chk >= 0].astype(np.int64)
    order = np.argsort(chk_var, kind="stable")
    var_deg = np.bincount(chk_var, minlength=code.n)
    var_ptr = np.concatenate([[0], np.cumsum(var_deg)]).astype(np.int64)
    return chk_ptr, chk_var, var_ptr, order.astype(np.int64)


@dataclass
class DecodeResult:
    bits: np.ndarray
    converged: bool
    iterations: int
    llr: np.ndarray


def ldpc_decode(code: LdpcCode, llrs, max_iters: int = 50) -> DecodeResult:
    """Flooding sum-product decoding with early exit once all checks hold.

    LLRs use the ``ln P(b=0)/P(b=1)`` convention. ``iterations`` is the
    iteration at which the syndrome first vanished, 0 when the channel hard
    decisions already form a codeword, and ``max_iters`` when decoding failed.
    A bit whose posterior LLR is exactly zero is undecided and blocks
    convergence.
    """
    llr = np.ascontiguousarray(llrs, dtype=np.float64)
    if llr.shape != (code.n,):
        raise ValueError(f"expected {code.n} LLRs, got shape {llr.shape}")
    chk_ptr, chk_var, var_ptr, var_edge = _edge_layout(code)
    hard = (llr < 0).astype(np.int64)
    if np.all(llr != 0) and not code.syndrome(hard).any():
        return DecodeResult(hard.astype(np.uint8), True, 0, llr.copy())
    n_edges = chk_var.shape[0]
    v2c = np.empty(n_edges)
    c2v = np.empty(n_edges)
    post = np.empty(code.n)
    it = _sum_product(llr, chk_ptr, chk_var, var_ptr, var_edge, int(max_iters), v2c, c2v, post, hard)
    converged = it > 0
    return DecodeResult(hard.astype(np.uint8), converged, it if converged else int(max_iters), post)


# construction --------------------------------------------------------------

def build_peg_code(n: int, col_deg: int = 3, row_deg: int = 6, seed: int = 0) -> LdpcCode:
    """Regular LDPC code from progressive edge growth.

    Each new edge of a variable node goes to a check outside (or, failing
    that, at the far edge of) its current BFS neighbourhood, preferring
    low-degree checks and never exceeding ``row_deg``. Ties are broken with a
    seeded generator.
    """
    if (n * col_deg) % row_deg:
        raise ValueError("n * col_deg must be divisible by row_deg")
    m = n * col_deg // row_deg
    rng = np.random.default_rng(seed)
    chk_adj = [[] for _ in range(m)]
    var_adj = [[] for _ in range(n)]
    chk_deg = np.zeros(m, dtype=np.int64)
    for v in range(n):
        for k in range(col_deg):
            open_chk = chk_deg < row_deg
            if k == 0:
                cand = np.flatnonzero(open_chk)
            else:
                cand = _peg_candidates(v, var_adj, chk_adj, open_chk)
            low = cand[chk_deg[cand] == chk_deg[cand].min()]
            c = int(low[rng.integers(low.size)])
            chk_adj[c].append(v)
            var_adj[v].append(c)
            chk_deg[c] += 1
    return LdpcCode.from_adjacency(n, chk_adj)


def _peg_candidates(v, var_adj, chk_adj, open_chk):
    reached = np.zeros(open_chk.size, dtype=bool)
    layer = list(var_adj[v])
    reached[layer] = True
    seen_v = {v}
    while True:
        nxt = []
        for c in layer:
            for u in chk_adj[c]:
                if u in seen_v:
                    continue
                seen_v.add(u)
                for c2 in var_adj[u]:
                    if not reached[c2]:
                        reached[c2] = True
                        nxt.append(c2)
        if not nxt:
            break
        if not np.any(open_chk & ~reached):
            far = np.asarray([c for c in nxt if open_chk[c]], dtype=np.int64)
            if far.size:
                return far
            break
        layer = nxt
    unreached = np.flatnonzero(open_chk & ~reached)
    if unreached.size:
        return unreached
    cand = np.flatnonzero(open_chk)
    return cand[~np.isin(cand, var_adj[v])]


# alist I/O -----------------------------------------------------------------

def write_alist(code: LdpcCode, path) -> None:
    cols = code.col_degrees
    rows = code.row_degrees
    lines = [
        f"{code.n} {code.m}",
        f"{cols.max()} {rows.max()}",
        " ".join(map(str, cols)),
        " ".join(map(str, rows)),
    ]
    for v in range(code.n):
        lines.append(" ".join(str(c + 1) for c in code.var_nbrs[v]))
    for c in range(code.m):
        lines.append(" ".join(str(v + 1) for v in code.check_nbrs[c]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def parse_alist(text: str) -> LdpcCode:
    rows = [line.split() for line in text.splitlines() if line.strip()]
    try:
        n, m = int(rows[0][0]), int(rows[0][1])
        row_deg = [int(x) for x in rows[3]]
        check_lines = rows[4 + n : 4 + n + m]
        if len(row_deg) != m or len(check_lines) != m:
            raise ValueError("check section length does not match header")
        checks = []
        for c, line in enumerate(check_lines):
            idx = [int(x) - 1 for x in line if int(x) > 0]
            if len(idx) != row_deg[c]:
                raise ValueError(f"check {c + 1}: degree {row_deg[c]} but {len(idx)} entries")
            checks.append(idx)
    except (IndexError, ValueError) as exc:
        raise ValueError(f"malformed alist: {exc}") from exc
    code = LdpcCode.from_adjacency(n, checks)
    # the variable section must agree with the check section
    var_lines = rows[4 : 4 + n]
    for v, line in enumerate(var_lines):
        listed = sorted(int(x) - 1 for x in line if int(x) > 0)
        have = sorted(int(c) for c in code.var_nbrs[v] if c >= 0)
        if listed != have:
            raise ValueError(f"malformed alist: variable {v + 1} adjacency disagrees with checks")
    return code


def read_alist(path) -> LdpcCode:
    return parse_alist(Path(path).read_text(encoding="ascii"))


BUILTIN_CODES = {
    "n2400_r050": "ldpc_n2400_r050.alist",
    "n1200_r050": "ldpc_n1200_r050.alist",
    "n2400_r075": "ldpc_n2400_r075.alist",
}
DEFAULT_CODE = "n2400_r050"


@functools.lru_cache(maxsize=4)
def load_code(name: str = DEFAULT_CODE) -> LdpcCode:
    """Load a shipped code by name, or an alist file by path.

    Built-in codes are (3,6)-regular rate-1/2 PEG codes of length 2400 and
    1200, and a (3,12)-regular rate-3/4 PEG code of length 2400.
    """
    if name in BUILTIN_CODES:
        text = resources.files("harqpost").joinpath("data", BUILTIN_CODES[name]).read_text(encoding="ascii")
        return parse_alist(text)
    path = Path(name)
    if path.is_file():
        return read_alist(path)
    raise ValueError(f"unknown code {name!r}; built-in codes are {sorted(BUILTIN_CODES)}")
