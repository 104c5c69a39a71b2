"""Decoder MMSE transfer curves and the curve-matching (tunnel) test."""
from dataclasses import dataclass, field
import math

import numpy as np

from .. import le
from .._rng import stream
from ..denoiser import phi_se
from .decoder import spa_decode
from .mapping import bits_per_symbol, bits_to_symbols, channel_llrs, symbol_posteriors


@dataclass(frozen=True)
class DecoderCurve:
    """Monte-Carlo samples of the decoder's symbol MMSE versus input SINR."""

    rho: np.ndarray
    phi: np.ndarray
    stderr: np.ndarray
    trials: np.ndarray
    estimated: np.ndarray = None  # receiver-side estimate mean(1 - m^2)
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        order = np.argsort(self.rho)
        for name in ("rho", "phi", "stderr", "trials", "estimated"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, np.asarray(val, dtype=float)[order])

    def shifted(self, k_sigma):
        """Curve moved by ``k_sigma`` standard errors (clipped to [0, 1])."""
        return DecoderCurve(self.rho, np.clip(self.phi + k_sigma * self.stderr, 0.0, 1.0), self.stderr, self.trials,
                            self.estimated, dict(self.meta, shifted=k_sigma))

    def __call__(self, rho):
        """Log-linear interpolation in ``rho``; 1 at the origin, 0 past the last sample with phi = 0."""
        rho = np.asarray(rho, dtype=float)
        lr = np.log(np.maximum(rho, 1e-300))
        out = np.interp(lr, np.log(self.rho), self.phi, left=np.nan, right=self.phi[-1])
        low = rho < self.rho[0]
        if np.any(low):
            # linear blend towards phi(0) = 1
            out = np.where(low, 1.0 + (self.phi[0] - 1.0) * rho / self.rho[0], out)
        return out

    def area(self):
        """``int_0^rho_max phi`` by the trapezoid rule on the samples (nats)."""
        r = np.concatenate([[0.0], self.rho])
        p = np.concatenate([[1.0], self.phi])
        return float(np.trapezoid(p, r))


def _trial_block(code, mapping, rho, count, rng, max_iters, all_zero):
    if all_zero:
        bits = np.zeros((count, code.n_bits), dtype=np.uint8)
    else:
        bits = code.random_codewords(count, rng)
    x = bits_to_symbols(bits, mapping)
    noise = (rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape)) * np.sqrt(0.5 / rho)
    res = spa_decode(code, channel_llrs(x + noise, 1.0 / rho, mapping), max_iters)
    mean, var = symbol_posteriors(res.mean, mapping)
    err = np.mean(np.abs(x - mean) ** 2, axis=-1)
    return err, np.mean(var, axis=-1)


def trace_decoder_curve(code, mapping, rho_grid, trials=200, seed=0, max_iters=200, all_zero=True, batch=50,
                        point_offset=0):
    """Empirical symbol MMSE of sum-product decoding at each ``rho``.

    Each trial sends one codeword over ``u = x + CN(0, 1/rho)``.  With
    ``all_zero`` the all-zero codeword is sent, which is exact for the
    symmetric channels used here.  Grid point ``i`` draws from its own
    stream keyed by ``i + point_offset``, so points can be traced separately.
    """
    bits_per_symbol(mapping)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rho_grid = np.asarray(rho_grid, dtype=float)
    phi, se, est = [], [], []
    for i, rho in enumerate(rho_grid):
        rng = stream(seed, i + point_offset, "decoder-curve")
        errs, vars_ = [], []
        left = trials
        while left > 0:
            cnt = min(batch, left)
            e, v = _trial_block(code, mapping, rho, cnt, rng, max_iters, all_zero)
            errs.append(e)
            vars_.append(v)
            left -= cnt
        e = np.concatenate(errs)
        phi.append(e.mean())
        se.append(e.std(ddof=1) / math.sqrt(e.size) if e.size > 1 else np.nan)
        est.append(np.concatenate(vars_).mean())
    meta = {"code": code.name, "n_bits": code.n_bits, "mapping": getattr(mapping, "name", mapping),
            "max_iters": max_iters, "all_zero": all_zero, "seed": seed}
    return DecoderCurve(rho_grid, np.array(phi), np.array(se), np.full(rho_grid.size, trials), np.array(est), meta)


def default_curve_grid(rho_max, points=40, knee=None, knee_points=20):
    """Log grid on ``[1e-3, rho_max]`` with optional extra points around a knee."""
    grid = np.logspace(-3, math.log10(rho_max), points)
    if knee is not None:
        lo, hi = knee
        grid = np.union1d(grid, np.linspace(lo, hi, knee_points))
    return grid


@dataclass(frozen=True)
class MatchingReport:
    open: bool
    snr: float
    rho_limit: float
    first_violation: float  # None when open
    margin: np.ndarray  # min(eta_inverse, phi_S) - phi_C on the curve grid
    rate_bits: float  # area under the decoder curve, in bits
    rho: np.ndarray
    above_symbol: np.ndarray  # grid points where phi_C is significantly above phi_S


SYMBOL_BOUND_SIGMAS = 4.0


def check_matching(curve, spectrum, prior, epsilon=1e-4):
    """Test ``phi_C(rho) < min(eta_inverse(rho), phi_S(rho))`` for ``0 < rho <= eta(epsilon)``.

    The LE bound must hold strictly.  The symbol-prior bound is tested
    against the curve's Monte-Carlo error: a point only violates it when
    ``phi_C`` exceeds ``phi_S`` by more than four standard errors, which keeps
    the false-alarm rate small over a grid of dozens of points.
    """
    rho_limit = le.eta_se(spectrum, epsilon)
    if curve.rho.max() < rho_limit:
        raise ValueError(f"decoder curve stops at rho={curve.rho.max():.4g}, needs {rho_limit:.4g}")
    rho = curve.rho[curve.rho <= rho_limit]
    if rho[-1] < rho_limit:
        rho = np.append(rho, rho_limit)
    phic = curve(rho)
    err = np.interp(np.log(rho), np.log(curve.rho), curve.stderr)
    le_v = le.eta_inverse(spectrum, rho)
    phis = np.array([phi_se(prior, r) for r in rho])
    # the significance test uses the unshifted estimate of a shifted curve
    centre = phic - curve.meta.get("shifted", 0.0) * err
    above_s = centre - SYMBOL_BOUND_SIGMAS * err > phis
    bad = (phic >= le_v) | above_s
    first = float(rho[np.argmax(bad)]) if np.any(bad) else None
    return MatchingReport(not np.any(bad), spectrum.snr, float(rho_limit), first, np.minimum(le_v, phis) - phic,
                          curve.area() / math.log(2), rho, rho[above_s])


def _covered_snr_db(curve, spectrum, epsilon, lo, hi):
    """Largest snr (dB) in ``[lo, hi]`` whose tunnel range ``eta(epsilon)`` the curve still covers."""
    covers = lambda db: le.eta_se(spectrum.with_snr(10 ** (db / 10)), epsilon) <= curve.rho.max()
    if covers(hi):
        return hi
    if not covers(lo):
        raise ValueError(f"decoder curve stops at rho={curve.rho.max():.4g}, too short even at {lo} dB")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if covers(mid) else (lo, mid)
    return lo


def matching_threshold(curve, spectrum, prior, bracket_db=(-5.0, 15.0), epsilon=1e-4, tol_db=1e-3):
    """Smallest snr (dB) at which the tunnel is open, by bisection on snr.

    The upper end of the bracket is pulled down to the largest snr the curve
    covers.
    """
    is_open = lambda db: check_matching(curve, spectrum.with_snr(10 ** (db / 10)), prior, epsilon).open
    lo, hi = bracket_db
    hi = _covered_snr_db(curve, spectrum, epsilon, lo, hi)
    if is_open(lo):
        return lo
    if not is_open(hi):
        raise ValueError(f"tunnel closed over the whole bracket ({lo}, {hi:.3f}) dB")
    while hi - lo > tol_db:
        mid = 0.5 * (lo + hi)
        if is_open(mid):
            hi = mid
        else:
            lo = mid
    return hi


def threshold_with_error_bars(curve, spectrum, prior, k_sigma=2.0, **kw):
    """``(central, optimistic, conservative)`` thresholds from the curve and its +-k sigma shifts."""
    central = matching_threshold(curve, spectrum, prior, **kw)
    low = matching_threshold(curve.shifted(-k_sigma), spectrum, prior, **kw)
    high = matching_threshold(curve.shifted(k_sigma), spectrum, prior, **kw)
    return central, low, high


def repetition_curve_exact(n):
    """MMSE of a length-n BPSK repetition code: ``phi_BPSK(n rho)``.

    The n channel outputs reduce to their sum, an observation at SINR
    ``n rho``.
    """
    from ..denoiser import bpsk

    prior = bpsk()
    return lambda rho: phi_se(prior, n * rho)


def curve_integral(fn, upper=np.inf):
    """``int_0^upper fn`` by adaptive quadrature (nats)."""
    from scipy import integrate

    edges = [0.0, 0.5, 2.0, 8.0, 32.0, 128.0, upper]
    edges = [e for e in edges if e < upper] + [upper]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(fn, a, b, epsabs=1e-12, epsrel=1e-12, limit=200)
        total += val
    return total
