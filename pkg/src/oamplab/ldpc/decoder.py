"""Sum-product (belief propagation) decoding, vectorized over edges and codewords.

LLRs use the convention ``L = log P(bit=0) / P(bit=1)``; bit 0 maps to +1.
"""
from dataclasses import dataclass

import numpy as np

LLR_CLIP = 60.0
_TANH_MAX = 1.0 - 1e-15


@dataclass
class DecodeResult:
    llr: np.ndarray  # posterior LLR per bit
    c2v: np.ndarray  # check-to-variable messages, reusable as a warm start
    parity_ok: np.ndarray  # per codeword
    iterations: int

    @property
    def mean(self):
        """Posterior mean of the +-1 symbol, ``tanh(L/2)``."""
        return np.tanh(0.5 * self.llr)

    @property
    def var(self):
        """Per-bit posterior variance ``1 - mean**2``."""
        m = self.mean
        return 1.0 - m * m

    @property
    def avg_var(self):
        return float(np.mean(self.var))

    @property
    def hard_bits(self):
        return (self.llr < 0).astype(np.uint8)


def _var_sums(code, msgs):
    """Sum of edge messages at each variable node (axis -1 over edges)."""
    ordered = msgs[..., code.var_order]
    return np.add.reduceat(ordered, code.var_ptr, axis=-1)


def _check_update(code, v2c):
    """Tanh rule: ``2 atanh(prod_{other edges} tanh(m/2))`` on every edge."""
    t = np.tanh(0.5 * v2c)
    mag = np.clip(np.abs(t), 1e-300, _TANH_MAX)
    logmag = np.log(mag)
    neg = (t < 0).astype(np.int64)
    ptr = code.chk_ptr
    tot_log = np.add.reduceat(logmag, ptr, axis=-1)[..., code.edge_chk]
    tot_neg = np.add.reduceat(neg, ptr, axis=-1)[..., code.edge_chk]
    ext = np.exp(tot_log - logmag)
    sign = 1.0 - 2.0 * ((tot_neg - neg) % 2)
    return 2.0 * np.arctanh(np.minimum(ext, _TANH_MAX)) * sign


def spa_decode(code, channel_llr, max_iters=100, c2v=None, early_stop=True):
    """Sum-product decoding of one or more codewords (rows of ``channel_llr``).

    ``c2v`` warm-starts the check-to-variable messages.  Decoding stops when
    every row satisfies all parity checks (``early_stop``) or after
    ``max_iters`` iterations.
    """
    llr = np.asarray(channel_llr, dtype=float)
    if llr.shape[-1] != code.n_bits:
        raise ValueError(f"expected {code.n_bits} LLRs per codeword, got {llr.shape[-1]}")
    llr = np.clip(llr, -LLR_CLIP * 1e3, LLR_CLIP * 1e3)
    if code.m_checks == 0:
        return DecodeResult(llr.copy(), np.zeros(llr.shape[:-1] + (0,)), np.ones(llr.shape[:-1], bool), 0)
    if c2v is None:
        c2v = np.zeros(llr.shape[:-1] + (code.n_edges,))
    else:
        c2v = np.array(c2v, dtype=float)
    post = llr + _var_sums(code, c2v)
    ok = code.is_codeword(post < 0)
    it = 0
    while it < max_iters and not (early_stop and np.all(ok)):
        v2c = np.clip(post[..., code.edge_var] - c2v, -LLR_CLIP, LLR_CLIP)
        c2v = _check_update(code, v2c)
        post = llr + _var_sums(code, c2v)
        ok = code.is_codeword(post < 0)
        it += 1
    return DecodeResult(post, c2v, ok, it)
