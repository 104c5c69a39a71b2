"""Reference values computed without the package's own numerics.

Each oracle takes a different route from the implementation under test:
closed forms, direct entropy integrals in place of I-MMSE areas, brute-force
GF(2) arithmetic on Python integers, or plain Monte-Carlo.
"""
import itertools
import math

import numpy as np
from scipy import integrate

LN2 = math.log(2.0)


def phi_gaussian(rho):
    return 1.0 / (1.0 + rho)


def phi_bpsk(rho):
    """BPSK MMSE: ``1 - E tanh(2 rho + sqrt(2 rho) z)``, z ~ N(0, 1)."""
    if rho == 0:
        return 1.0
    a = 2.0 * rho
    s = math.sqrt(2.0 * rho)
    f = lambda z: math.tanh(a + s * z) * math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
    val, _ = integrate.quad(f, -40, 40, epsabs=1e-14, epsrel=1e-13, limit=400, points=[-a / s])
    return 1.0 - val


def phi_qpsk(rho):
    """QPSK is two BPSK rails at half power."""
    return phi_bpsk(rho / 2.0)


def mi_bpsk(rho):
    """``ln2 - E log(1 + exp(-L))`` with the BPSK LLR ``L = 4 rho u`` given x = +1."""
    if rho == 0:
        return 0.0
    mu = 4.0 * rho
    sd = math.sqrt(8.0 * rho)
    f = lambda z: np.logaddexp(0.0, -(mu + sd * z)) * math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
    val, _ = integrate.quad(f, -40, 40, epsabs=1e-14, epsrel=1e-13, limit=400, points=[-mu / sd])
    return LN2 - val


def mi_qpsk(rho):
    return 2.0 * mi_bpsk(rho / 2.0)


def mi_gaussian(rho):
    return math.log1p(rho)


def phi_psk_montecarlo(points, rho, n, seed):
    """Monte-Carlo MMSE of a uniform constellation; returns (mean, stderr)."""
    rng = np.random.default_rng(seed)
    pts = np.asarray(points, dtype=complex)
    x = rng.choice(pts, n)
    u = x + (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * math.sqrt(0.5 / rho)
    logw = -rho * np.abs(u[:, None] - pts[None, :]) ** 2
    logw -= logw.max(axis=1, keepdims=True)
    w = np.exp(logw)
    w /= w.sum(axis=1, keepdims=True)
    err = np.abs(x - w @ pts) ** 2
    return float(err.mean()), float(err.std(ddof=1) / math.sqrt(n))


def gaussian_capacity(eigenvalues, snr):
    return float(np.mean(np.log1p(snr * np.asarray(eigenvalues))))


def gf2_rank(rows):
    """Rank over GF(2) of an integer-coded 0/1 matrix (rows as Python ints)."""
    pivots = {}
    rank = 0
    for r in rows:
        while r:
            top = r.bit_length() - 1
            if top in pivots:
                r ^= pivots[top]
            else:
                pivots[top] = r
                rank += 1
                break
    return rank


def rows_as_ints(h):
    return [int("".join(str(int(b)) for b in row), 2) if len(row) else 0 for row in np.asarray(h)]


def codewords_bruteforce(h):
    """All codewords of a small parity-check matrix by enumeration."""
    h = np.asarray(h, dtype=np.uint8)
    n = h.shape[1]
    out = []
    for bits in itertools.product((0, 1), repeat=n):
        b = np.array(bits, dtype=np.uint8)
        if not np.any((h.astype(int) @ b) % 2):
            out.append(b)
    return np.array(out)


def bitwise_map_posterior(h, llr):
    """Exact bitwise APP LLRs by enumerating every codeword (tiny codes only)."""
    cws = codewords_bruteforce(h)
    s = 1.0 - 2.0 * cws
    logp = 0.5 * (s @ np.asarray(llr, dtype=float))
    out = np.empty(h.shape[1])
    for i in range(h.shape[1]):
        l0 = np.logaddexp.reduce(logp[cws[:, i] == 0])
        l1 = np.logaddexp.reduce(logp[cws[:, i] == 1])
        out[i] = l0 - l1
    return out
