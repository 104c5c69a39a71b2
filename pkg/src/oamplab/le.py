"""LMMSE linear estimator and its state-evolution transfer maps.

With ``s`` the extrinsic input variance fed to the LE,

* ``gamma_hat_se(s) = mean(1 / (snr lam + 1/s))`` is its posterior MSE and
* ``rho(s) = 1/gamma_hat_se(s) - 1/s`` the SINR of its orthogonalized output.

``eta_se`` maps the posterior MSE ``v = gamma_hat_se(s)`` to ``rho(s)``;
``eta_inverse`` goes back from ``rho`` to ``v``.  Both curves are traced by
bisection on ``log s``.
"""
from dataclasses import dataclass, field

import numpy as np

from .spectrum import SensingMatrix

V_BRACKET = (1e-12, 1e12)
BISECT_ITERS = 200


def _lam_snr(spectrum):
    return spectrum.snr * spectrum.eigenvalues


def gamma_hat_se(spectrum, v):
    """LE posterior MSE for extrinsic input variance ``v`` (scalar or array)."""
    v = np.asarray(v, dtype=float)
    if np.any(v <= 0):
        raise ValueError("v must be positive")
    ls = _lam_snr(spectrum)
    out = np.mean(v[..., None] / (1.0 + ls * v[..., None]), axis=-1)
    return float(out) if out.ndim == 0 else out


def gamma_hat_sup(spectrum):
    """Supremum of gamma_hat_se over v (infinite when A^H A is singular)."""
    ls = _lam_snr(spectrum)
    if np.any(ls == 0):
        return np.inf
    with np.errstate(over="ignore"):
        return float(np.mean(1.0 / ls))


def rho_of_s(spectrum, s):
    """Output SINR ``1/gamma_hat_se(s) - 1/s`` in cancellation-free form."""
    s = np.asarray(s, dtype=float)
    ls = _lam_snr(spectrum)
    den = 1.0 + ls * s[..., None]
    out = np.mean(ls / den, axis=-1) / np.mean(1.0 / den, axis=-1)
    return float(out) if out.ndim == 0 else out


def _bisect_log(fn, target, increasing, iters=BISECT_ITERS, bracket=V_BRACKET):
    """Vectorized bisection on log-scale for a monotone ``fn``."""
    target = np.asarray(target, dtype=float)
    lo = np.full(target.shape, np.log(bracket[0]))
    hi = np.full(target.shape, np.log(bracket[1]))
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        above = fn(np.exp(mid)) > target
        go_left = above if increasing else ~above
        hi = np.where(go_left, mid, hi)
        lo = np.where(go_left, lo, mid)
        if np.all(hi - lo <= 1e-15 * np.maximum(1.0, np.abs(lo))):
            break
    return np.exp(0.5 * (lo + hi))


def gamma_hat_inverse(spectrum, target_v):
    """Extrinsic input variance ``s`` with ``gamma_hat_se(s) = target_v``."""
    t = np.asarray(target_v, dtype=float)
    lo_val = gamma_hat_se(spectrum, V_BRACKET[0])
    hi_val = min(gamma_hat_sup(spectrum), gamma_hat_se(spectrum, V_BRACKET[1]))
    if np.any(t <= 0) or np.any(t < lo_val) or np.any(t >= hi_val):
        raise ValueError(f"target {target_v} outside the range of gamma_hat_se ({lo_val:.3g}, {hi_val:.6g})")
    s = _bisect_log(lambda x: gamma_hat_se(spectrum, x), t, increasing=True)
    return float(s) if s.ndim == 0 else s


def eta_se(spectrum, v):
    """Output SINR of the orthogonalized LE whose posterior MSE is ``v``."""
    return rho_of_s(spectrum, gamma_hat_inverse(spectrum, v))


def rho_range(spectrum):
    """``(rho_min, snr)``: the SINR values the LE curve spans."""
    ls = _lam_snr(spectrum)
    with np.errstate(over="ignore"):  # subnormal eigenvalues give the right limit, 0
        rho_min = 0.0 if np.any(ls == 0) else 1.0 / float(np.mean(1.0 / ls))
    return rho_min, spectrum.snr


def eta_inverse(spectrum, rho):
    """LE posterior MSE ``v`` with ``eta_se(v) = rho`` (vectorized).

    Outside the LE curve the value is extended monotonically: ``+inf`` for
    ``rho <= rho_min`` and ``0`` for ``rho >= snr``.
    """
    rho = np.asarray(rho, dtype=float)
    rho_min, rho_max = rho_range(spectrum)
    out = np.empty(rho.shape)
    out[rho <= rho_min] = np.inf
    out[rho >= rho_max] = 0.0
    inside = (rho > rho_min) & (rho < rho_max)
    if np.any(inside):
        s = _bisect_log(lambda x: rho_of_s(spectrum, x), rho[inside], increasing=False,
                        bracket=(1e-200, 1e200))
        out[inside] = gamma_hat_se(spectrum, s)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class LeState:
    """LMMSE estimator for ``y = A x + n`` evaluated in the SVD basis of ``A``.

    ``y`` may hold several independent blocks as rows (shape ``(B, M)``); all
    blocks share the matrix.
    """

    matrix: SensingMatrix
    snr: float
    y: np.ndarray
    _proj: np.ndarray = field(init=False, repr=False)
    _d2: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        dims = self.matrix.dims
        y = np.asarray(self.y, dtype=complex)
        if y.shape[-1] != dims.m:
            raise ValueError(f"y has length {y.shape[-1]}, expected {dims.m}")
        if not self.snr > 0:
            raise ValueError(f"snr must be positive, got {self.snr}")
        t = dims.rank
        d2 = np.zeros(dims.n)
        d2[:t] = self.matrix.singulars**2
        uy = y @ self.matrix.u.T
        proj = np.zeros(y.shape[:-1] + (dims.n,), dtype=complex)
        proj[..., :t] = self.matrix.singulars * uy[..., :t]
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "_proj", proj)
        object.__setattr__(self, "_d2", d2)

    @property
    def matched_filter(self):
        """``A^H y``."""
        return self._proj @ self.matrix.v.conj()

    def posterior_var(self, v_perp_in):
        return float(np.mean(1.0 / (self.snr * self._d2 + 1.0 / v_perp_in)))

    def lmmse_step(self, x_in, v_perp_in):
        """Posterior mean ``[snr A^H A + I/v]^-1 [snr A^H y + x_in/v]`` and its MSE."""
        if not v_perp_in > 0:
            raise ValueError(f"v_perp_in must be positive, got {v_perp_in}")
        c = 1.0 / v_perp_in
        vx = np.asarray(x_in, dtype=complex) @ self.matrix.v.T
        w = (self.snr * self._proj + c * vx) / (self.snr * self._d2 + c)
        return w @ self.matrix.v.conj(), self.posterior_var(v_perp_in)
