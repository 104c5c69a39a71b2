"""Sample-level OAMP: orthogonalized LMMSE and orthogonalized NLE in a loop.

The NLE is either the symbol-wise MMSE denoiser of a prior (uncoded) or a
sum-product LDPC decoder (coded).  Each local estimator is followed by the
renormalized orthogonalization ``(xhat - b x_in) / (1 - b)`` with
``b = v_post / v_in``.
"""
from dataclasses import dataclass, field
import csv
import math

import numpy as np

from . import gs
from .denoiser import mmse_denoise, phi_se
from .le import LeState
from .ldpc.decoder import spa_decode
from .ldpc.mapping import bits_per_symbol, channel_llrs, symbol_posteriors

VARIANCE_MODES = ("estimated", "genie", "se_predicted")
V_FLOOR = 1e-12


@dataclass(frozen=True)
class OampConfig:
    max_iters: int = 50
    stop_eps: float = 1e-6
    variance_mode: str = "estimated"
    clamp_policy: str = "clamp"
    seed: int = 0
    damping: float = None  # no damping unless set
    nle_gso: bool = True  # False skips NLE orthogonalization (negative control)
    decoder_iters: int = 1
    warm_start: bool = True
    keep_messages: bool = False

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.stop_eps > 0:
            raise ValueError("stop_eps must be positive")
        if self.variance_mode not in VARIANCE_MODES:
            raise ValueError(f"variance_mode must be one of {VARIANCE_MODES}")
        if self.clamp_policy not in ("clamp", "abort"):
            raise ValueError("clamp_policy must be 'clamp' or 'abort'")
        if self.damping is not None and not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.decoder_iters < 1:
            raise ValueError("decoder_iters must be >= 1")


@dataclass(frozen=True)
class IterationRecord:
    t: int
    rho_t: float  # SINR of the LE's orthogonalized output
    v_t: float  # NLE posterior MSE (as tracked by the receiver)
    v_perp_t: float  # extrinsic variance sent back to the LE
    empirical_mse: float = math.nan  # ||x - NLE posterior mean||^2 / N
    orth_stat: float = math.nan  # |<LE input error, LE output error>| / N
    ser_or_ber: float = math.nan
    flagged: bool = False


@dataclass
class Trajectory:
    records: list
    final_estimate: np.ndarray
    converged: bool
    le_estimate: np.ndarray = None  # last LE posterior mean
    messages: list = field(default_factory=list, repr=False)  # (x_in, x_ext, x_out) per iteration

    def __post_init__(self):
        if not self.records:
            raise ValueError("a trajectory needs at least one record")

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "rho", "v", "v_perp", "emp_mse", "orth_stat", "ber"])
            for r in self.records:
                w.writerow([r.t, repr(r.rho_t), repr(r.v_t), repr(r.v_perp_t), repr(r.empirical_mse),
                            repr(r.orth_stat), repr(r.ser_or_ber)])


class _Le:
    """LMMSE over one shared matrix or one matrix per block row."""

    def __init__(self, matrix, snr, y):
        y = np.asarray(y, dtype=complex)
        if isinstance(matrix, (list, tuple)):
            if y.ndim != 2 or y.shape[0] != len(matrix):
                raise ValueError("need one row of y per matrix")
            self.states = [LeState(a, snr, row) for a, row in zip(matrix, y)]
        else:
            self.states = [LeState(matrix, snr, y)]
        self.blocked = isinstance(matrix, (list, tuple))

    def step(self, x_in, v_perp):
        if not self.blocked:
            return self.states[0].lmmse_step(x_in, v_perp)
        out = np.stack([s.lmmse_step(row, v_perp)[0] for s, row in zip(self.states, x_in)])
        return out, float(np.mean([s.posterior_var(v_perp) for s in self.states]))


def _gs_error(xhat, x):
    """GS error ``xhat - alpha x`` (zero for the all-zero estimate)."""
    m = gs.gs_decompose(xhat, x)
    return np.asarray(xhat) - m.alpha * np.asarray(x)


def _orth(a, b, x):
    ea, eb = _gs_error(a, x), _gs_error(b, x)
    return gs.orthogonality_stat(ea, eb)[0]


def _hard_symbols(prior, xhat):
    if prior.is_gaussian:
        return None
    idx = np.argmin(np.abs(np.asarray(xhat)[..., None] - prior.points), axis=-1)
    return prior.points[idx]


def _le_half(le, x_in, v_perp, cfg, true_x):
    """LE posterior, orthogonalization and the extrinsic variance it reports."""
    x_le, v_le = le.step(x_in, v_perp)
    b = gs.gso_b_mmse(v_le, v_perp, cfg.clamp_policy)
    x_ext, v_ext = gs.ep_update(x_le, x_in, b, v_le)
    if cfg.variance_mode == "genie" and true_x is not None:
        v_ext = float(np.mean(np.abs(x_ext - true_x) ** 2))
    return x_le, x_ext, max(v_ext, V_FLOOR), b.clamped


def run_oamp_uncoded(matrix, prior, y, snr, config=OampConfig(), true_x=None):
    """OAMP with the symbol-wise MMSE denoiser of ``prior`` as NLE.

    ``y`` is ``(M,)`` or ``(B, M)`` for B independent signals through the
    same matrix (or ``matrix`` is a list with one matrix per row).
    """
    cfg = config
    le = _Le(matrix, snr, y)
    n_shape = le.states[0].y.shape[:-1] + (le.states[0].matrix.dims.n,)
    if le.blocked:
        n_shape = (len(le.states), le.states[0].matrix.dims.n)
    if cfg.variance_mode == "genie" and true_x is None:
        raise ValueError("genie variance mode needs true_x")
    x_in = np.zeros(n_shape, dtype=complex)
    v_perp = 1.0
    records, messages = [], []
    converged = False
    v_prev = None
    post_mean = x_in
    x_le = x_in
    for t in range(cfg.max_iters):
        x_le, x_ext, v_ext, flag = _le_half(le, x_in, v_perp, cfg, true_x)
        rho = 1.0 / v_ext
        den = mmse_denoise(prior, x_ext, rho)
        if cfg.variance_mode == "genie":
            v_post = float(np.mean(np.abs(den.mean - true_x) ** 2))
        elif cfg.variance_mode == "se_predicted":
            v_post = phi_se(prior, rho)
        else:
            v_post = float(np.mean(den.var))
        v_post = max(v_post, V_FLOOR)
        post_mean = den.mean
        if cfg.nle_gso:
            b = gs.gso_b_mmse(v_post, v_ext, cfg.clamp_policy)
            x_out, v_out = gs.ep_update(den.mean, x_ext, b, v_post)
            flag = flag or b.clamped
        else:
            x_out, v_out = den.mean, v_post
        if cfg.damping is not None and t > 0:
            x_out = cfg.damping * x_out + (1 - cfg.damping) * x_in
            v_out = cfg.damping * v_out + (1 - cfg.damping) * v_perp
        rec = dict(t=t, rho_t=rho, v_t=v_post, v_perp_t=v_out, flagged=flag or den.fallback)
        if true_x is not None:
            rec["empirical_mse"] = float(np.mean(np.abs(den.mean - true_x) ** 2))
            rec["orth_stat"] = _orth(x_in, x_ext, true_x)
            hard = _hard_symbols(prior, den.mean)
            if hard is not None:
                rec["ser_or_ber"] = float(np.mean(~np.isclose(hard, true_x)))
        records.append(IterationRecord(**rec))
        if cfg.keep_messages:
            messages.append((x_in, x_ext, x_out))
        x_in, v_perp = x_out, max(v_out, V_FLOOR)
        if v_prev is not None and abs(v_post - v_prev) <= cfg.stop_eps * v_prev:
            converged = True
            break
        v_prev = v_post
    return Trajectory(records, post_mean, converged, x_le, messages)


def run_oamp_coded(matrix, code, mapping, y, snr, config=OampConfig(), true_bits=None):
    """OAMP with a sum-product LDPC decoder as NLE.

    The codeword (``code.n_bits`` bits) is carried by all symbols of all
    block rows of ``y`` in row-major order.  ``decoder_iters`` sum-product
    iterations run per outer iteration; check-to-variable messages persist
    across outer iterations when ``warm_start`` is set while channel LLRs are
    recomputed from each new LE output.
    """
    cfg = config
    bps = bits_per_symbol(mapping)
    le = _Le(matrix, snr, y)
    if le.blocked:
        shape = (len(le.states), le.states[0].matrix.dims.n)
    else:
        shape = le.states[0].y.shape[:-1] + (le.states[0].matrix.dims.n,)
    if int(np.prod(shape)) * bps != code.n_bits:
        raise ValueError(f"code length {code.n_bits} != {int(np.prod(shape))} symbols x {bps} bits")
    true_x = None
    if true_bits is not None:
        from .ldpc.mapping import bits_to_symbols

        true_bits = np.asarray(true_bits, dtype=np.uint8)
        true_x = bits_to_symbols(true_bits, mapping).reshape(shape)
    if cfg.variance_mode == "genie" and true_x is None:
        raise ValueError("genie variance mode needs the true codeword")
    x_in = np.zeros(shape, dtype=complex)
    v_perp = 1.0
    c2v = None
    records, messages = [], []
    converged = False
    post_mean = x_in
    x_le = x_in
    for t in range(cfg.max_iters):
        x_le, x_ext, v_ext, flag = _le_half(le, x_in, v_perp, cfg, true_x)
        llr = channel_llrs(x_ext.reshape(-1), v_ext, mapping)
        res = spa_decode(code, llr, cfg.decoder_iters, c2v=c2v if cfg.warm_start else None, early_stop=False)
        c2v = res.c2v
        mean, var = symbol_posteriors(res.mean, mapping)
        mean = mean.reshape(shape)
        if cfg.variance_mode == "genie":
            v_post = float(np.mean(np.abs(mean - true_x) ** 2))
        else:
            v_post = float(np.mean(var))
        v_post = max(v_post, V_FLOOR)
        post_mean = mean
        b = gs.gso_b_mmse(v_post, v_ext, cfg.clamp_policy)
        x_out, v_out = gs.ep_update(mean, x_ext, b, v_post)
        flag = flag or b.clamped
        rec = dict(t=t, rho_t=1.0 / v_ext, v_t=v_post, v_perp_t=v_out, flagged=flag)
        if true_x is not None:
            rec["empirical_mse"] = float(np.mean(np.abs(mean - true_x) ** 2))
            rec["orth_stat"] = _orth(x_in, x_ext, true_x)
            rec["ser_or_ber"] = float(np.mean(res.hard_bits != true_bits))
        records.append(IterationRecord(**rec))
        if cfg.keep_messages:
            messages.append((x_in, x_ext, x_out))
        x_in, v_perp = x_out, max(v_out, V_FLOOR)
        if bool(np.all(res.parity_ok)):
            converged = True
            break
    return Trajectory(records, post_mean, converged, x_le, messages)


def orthogonality_probe(trajectory, true_x):
    """Per-iteration ``|<xi_in, xi_ext>|/N`` (LE side) and ``|<xi_ext, xi_out>|/N`` (NLE side).

    Returns an array of rows ``(le_stat, nle_stat, sigma_le, sigma_nle)``
    where sigma is the Monte-Carlo standard deviation of the statistic for
    independent errors.  Needs a trajectory recorded with ``keep_messages``.
    """
    if not trajectory.messages:
        raise ValueError("trajectory was recorded without messages (set keep_messages=True)")
    rows = []
    for x_in, x_ext, x_out in trajectory.messages:
        e_in, e_ext, e_out = (_gs_error(m, true_x) for m in (x_in, x_ext, x_out))
        s_le, sig_le = gs.orthogonality_stat(e_in, e_ext)
        s_nle, sig_nle = gs.orthogonality_stat(e_ext, e_out)
        rows.append((s_le, s_nle, sig_le, sig_nle))
    return np.array(rows)


def simulate_uncoded_trial(matrix, prior, snr, config, rng):
    """Draw x and noise, run OAMP, and return ``(trajectory, x, y)``."""
    dims = matrix.dims
    x = prior.sample(dims.n, rng)
    noise = (rng.standard_normal(dims.m) + 1j * rng.standard_normal(dims.m)) * math.sqrt(0.5 / snr)
    y = matrix.assembled @ x + noise
    return run_oamp_uncoded(matrix, prior, y, snr, config, true_x=x), x, y
