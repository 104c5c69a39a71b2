"""LDPC parity-check graphs: construction and GF(2) algebra."""
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .._rng import as_generator
from .distributions import DegreeDistribution


def _largest_remainder(total, fractions):
    """Integer counts summing to ``total`` proportional to ``fractions``."""
    keys = list(fractions)
    raw = np.array([fractions[k] for k in keys]) * total
    counts = np.floor(raw).astype(int)
    short = total - counts.sum()
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[:short]] += 1
    return dict(zip(keys, counts.tolist()))


@dataclass(frozen=True, eq=False)
class LdpcCode:
    """Bipartite graph of a parity-check matrix ``H`` (m x n) over GF(2).

    Edges are stored check-major: ``edge_var[e]`` / ``edge_chk[e]`` with
    ``edge_chk`` non-decreasing.  ``var_order`` lists edges grouped by
    variable node.
    """

    n_bits: int
    m_checks: int
    edge_var: np.ndarray
    edge_chk: np.ndarray
    name: str = ""
    stats: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        ev = np.asarray(self.edge_var, dtype=np.int64)
        ec = np.asarray(self.edge_chk, dtype=np.int64)
        order = np.lexsort((ev, ec))
        ev, ec = ev[order], ec[order]
        if ev.size and (ev.min() < 0 or ev.max() >= self.n_bits or ec.min() < 0 or ec.max() >= self.m_checks):
            raise ValueError("edge endpoint out of range")
        for a in (ev, ec):
            a.setflags(write=False)
        object.__setattr__(self, "edge_var", ev)
        object.__setattr__(self, "edge_chk", ec)

    @property
    def n_edges(self):
        return int(self.edge_var.size)

    @cached_property
    def var_degrees(self):
        return np.bincount(self.edge_var, minlength=self.n_bits)

    @cached_property
    def chk_degrees(self):
        return np.bincount(self.edge_chk, minlength=self.m_checks)

    @cached_property
    def chk_ptr(self):
        """Start offset of each check's edge segment."""
        return np.concatenate([[0], np.cumsum(self.chk_degrees)[:-1]])

    @cached_property
    def var_order(self):
        return np.argsort(self.edge_var, kind="stable")

    @cached_property
    def var_ptr(self):
        return np.concatenate([[0], np.cumsum(self.var_degrees)[:-1]])

    def dense_h(self):
        h = np.zeros((self.m_checks, self.n_bits), dtype=np.uint8)
        np.add.at(h, (self.edge_chk, self.edge_var), 1)
        return h % 2

    def syndrome(self, bits):
        """Parity of each check for hard decisions ``bits`` (shape ``(..., n)``)."""
        b = np.asarray(bits, dtype=np.uint8)
        s = np.add.reduceat(b[..., self.edge_var].astype(np.int64), self.chk_ptr, axis=-1)
        return (s % 2).astype(np.uint8)

    def is_codeword(self, bits):
        return ~np.any(self.syndrome(bits), axis=-1)

    @cached_property
    def _echelon(self):
        return _gf2_rref(self.dense_h())

    @property
    def rank(self):
        return len(self._echelon[1])

    @property
    def k_bits(self):
        return self.n_bits - self.rank

    @property
    def rate(self):
        return self.k_bits / self.n_bits

    @property
    def design_rate(self):
        return 1.0 - self.m_checks / self.n_bits

    def random_codewords(self, count, rng=None):
        """Uniform codewords from the null space of ``H``."""
        rng = as_generator(rng)
        packed_rows, pivots, free = self._echelon
        words = np.zeros((count, self.n_bits), dtype=np.uint8)
        info = rng.integers(0, 2, size=(count, free.size), dtype=np.uint8)
        words[:, free] = info
        packed = _pack64(words)
        # pivot bit i equals the parity of row i restricted to free columns
        for i, col in enumerate(pivots):
            row = packed_rows[i]
            words[:, col] = np.bitwise_count(packed & row).sum(axis=1) % 2
        return words

    def girth_report(self):
        """Count 4-cycles (pairs of variables sharing two or more checks)."""
        from scipy import sparse

        h = sparse.csr_matrix((np.ones(self.n_edges), (self.edge_chk, self.edge_var)), shape=(self.m_checks, self.n_bits))
        overlap = (h.T @ h).tocoo()
        off = (overlap.row < overlap.col) & (overlap.data >= 2)
        pairs = overlap.data[off]
        return {"four_cycles": int(np.sum(pairs * (pairs - 1) // 2)), "variable_pairs_in_4_cycles": int(off.sum())}


def _pack64(bits):
    """Pack 0/1 rows little-endian into uint64 words."""
    bits = np.asarray(bits, dtype=np.uint8)
    n = bits.shape[-1]
    width = -(-n // 64) * 64
    padded = np.zeros(bits.shape[:-1] + (width,), dtype=np.uint8)
    padded[..., :n] = bits
    return np.packbits(padded, axis=-1, bitorder="little").view("<u8")


def _gf2_rref(h):
    """Reduced row echelon form of a 0/1 matrix using bit-packed rows.

    Returns ``(rows, pivots, free)``: rows hold the nonzero echelon rows with
    their pivot bit cleared (packed uint64), so that
    ``x[pivots[i]] = parity(rows[i] & x)`` for every codeword ``x`` whose
    pivot entries are zeroed.
    """
    m, n = h.shape
    rows = _pack64(h)
    pivots = []
    r = 0
    one = np.uint64(1)
    for col in range(n):
        if r == m:
            break
        word, bit = divmod(col, 64)
        bit = np.uint64(bit)
        has = (rows[r:, word] >> bit) & one
        idx = np.flatnonzero(has)
        if idx.size == 0:
            continue
        p = r + idx[0]
        if p != r:
            rows[[r, p]] = rows[[p, r]]
        mask = ((rows[:, word] >> bit) & one).astype(bool)
        mask[r] = False
        rows[mask] ^= rows[r]
        pivots.append(col)
        r += 1
    rows = rows[:r].copy()
    pivots = np.array(pivots, dtype=np.int64)
    free = np.setdiff1d(np.arange(n), pivots)
    for i, col in enumerate(pivots):
        word, bit = divmod(int(col), 64)
        rows[i, word] &= ~(np.uint64(1) << np.uint64(bit))
    return rows, pivots, free


def _node_degrees(count, fractions):
    per_degree = _largest_remainder(count, fractions)
    return np.repeat(np.array(list(per_degree), dtype=np.int64), list(per_degree.values()))


def _check_degrees(n_edges, dist):
    """Check degrees with ``sum == n_edges``; rounding repaired by +-1 adjustments."""
    m = max(1, int(round(n_edges * dist.inv_mean_check_degree)))
    deg = _node_degrees(m, dist.check_node_fractions())
    diff = n_edges - int(deg.sum())
    order = np.argsort(deg, kind="stable")
    step = 1 if diff > 0 else -1
    i = 0
    while diff != 0:
        j = order[i % m] if step > 0 else order[::-1][i % m]
        if deg[j] + step >= 2:
            deg[j] += step
            diff -= step
        i += 1
        if i > 10 * m + abs(diff) * m:
            raise ValueError("unsatisfiable check-degree rounding")
    return deg


def build_code(dist: DegreeDistribution, n_bits, rng=None, avoid_4_cycles=True, max_tries=30):
    """Random graph with the requested degree profile.

    Variables are processed in descending degree; each socket is matched to a
    random free check socket that creates neither a parallel edge nor, when
    possible, a 4-cycle.  Leftover conflicts are resolved by edge swaps.
    """
    rng = as_generator(rng)
    if n_bits < 2:
        raise ValueError("need at least two bits")
    vdeg = _node_degrees(n_bits, dist.variable_node_fractions())
    rng.shuffle(vdeg)
    n_edges = int(vdeg.sum())
    cdeg = _check_degrees(n_edges, dist)
    m = cdeg.size
    pool = np.repeat(np.arange(m), cdeg)
    rng.shuffle(pool)
    pool = pool.tolist()

    chk_nb = [set() for _ in range(m)]
    var_nb = [[] for _ in range(n_bits)]
    parallel_fallback = 0
    cycle_fallback = 0
    for v in np.argsort(-vdeg, kind="stable"):
        v = int(v)
        mine = set()
        two_hop = set()
        for _ in range(vdeg[v]):
            choice = None
            fallback = None
            for _try in range(max_tries):
                k = int(rng.integers(len(pool)))
                c = pool[k]
                if c in mine:
                    continue
                if fallback is None:
                    fallback = k
                if not avoid_4_cycles or not (chk_nb[c] & two_hop):
                    choice = k
                    break
            if choice is None:
                if fallback is None:
                    free = [k for k, c in enumerate(pool) if c not in mine]
                    if not free:
                        parallel_fallback += 1
                        fallback = int(rng.integers(len(pool)))
                    else:
                        fallback = free[int(rng.integers(len(free)))]
                cycle_fallback += 1
                choice = fallback
            c = pool[choice]
            pool[choice] = pool[-1]
            pool.pop()
            two_hop |= chk_nb[c]
            chk_nb[c].add(v)
            mine.add(c)
            var_nb[v].append(c)

    edge_var = np.repeat(np.arange(n_bits), [len(x) for x in var_nb])
    edge_chk = np.fromiter((c for nb in var_nb for c in nb), dtype=np.int64, count=n_edges)
    edge_var, edge_chk = _remove_parallel_edges(edge_var, edge_chk, rng)
    code = LdpcCode(n_bits, m, edge_var, edge_chk, name=dist.name)
    code.stats.update(greedy_fallbacks=cycle_fallback)
    return code


def _remove_parallel_edges(ev, ec, rng, max_rounds=1000):
    ev, ec = ev.copy(), ec.copy()
    for _ in range(max_rounds):
        key = ev * (ec.max() + 1) + ec
        _, first, counts = np.unique(key, return_index=True, return_counts=True)
        dup_mask = np.ones(ev.size, dtype=bool)
        dup_mask[first] = False
        dups = np.flatnonzero(dup_mask)
        if dups.size == 0:
            return ev, ec
        for e in dups:
            f = int(rng.integers(ev.size))
            ec[e], ec[f] = ec[f], ec[e]
    raise ValueError("could not remove parallel edges")


def repetition_code(n):
    """Length-n repetition code as a chain of degree-2 checks (a tree)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if n == 1:
        return LdpcCode(1, 0, np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), name="repetition-1")
    chk = np.repeat(np.arange(n - 1), 2)
    var = np.stack([np.arange(n - 1), np.arange(1, n)], axis=1).ravel()
    return LdpcCode(n, n - 1, var, chk, name=f"repetition-{n}")
