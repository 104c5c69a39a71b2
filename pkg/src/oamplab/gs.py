"""Gram-Schmidt model of an estimate and the orthogonalization coefficient.

An estimate ``xhat`` of ``x`` is summarized as ``xhat = alpha x + xi`` with
``<x, xi> = 0``.  An estimator ``f`` built from a prototype ``fhat`` as
``f(u) = fhat(u) - b u`` has an output error uncorrelated with its input
error; ``b`` can be obtained from a trace, an integral, a Stein derivative or
the MMSE variance ratio.  All four agree for MMSE prototypes.
"""
from dataclasses import dataclass

import numpy as np

from .denoiser import _real_grid

STEIN_REL_STEP = 1e-5
COLLAPSE_EPS = 1e-12
CLAMP_VALUE = 1.0 - 1e-6
INTEGRAL_STEP = 0.08


class VarianceCollapse(ArithmeticError):
    """Raised when an update would divide by ``1 - b <= 0``."""


@dataclass(frozen=True)
class GsModel:
    alpha: float
    v: float


@dataclass(frozen=True)
class GsoCoefficient:
    b: float
    method: str
    clamped: bool = False

    def __post_init__(self):
        if not np.isfinite(self.b):
            raise ValueError(f"GSO coefficient is not finite ({self.method}): {self.b}")

    def __float__(self):
        return float(self.b)


def gs_decompose(xhat, x):
    """Empirical GS parameters of ``xhat`` with respect to ``x``."""
    xhat = np.asarray(xhat)
    x = np.asarray(x)
    if xhat.shape != x.shape:
        raise ValueError(f"shape mismatch: {xhat.shape} vs {x.shape}")
    px = np.vdot(x, x).real
    if px == 0:
        raise ValueError("signal vector is identically zero")
    alpha = np.vdot(x, xhat).real / px
    xi = xhat - alpha * x
    return GsModel(float(alpha), float(np.vdot(xi, xi).real / x.size))


def gso_b_trace(w_hat):
    """``b = tr(W)/N`` for a linear prototype ``fhat(u) = W u``."""
    w_hat = np.asarray(w_hat)
    if w_hat.ndim != 2 or w_hat.shape[0] != w_hat.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {w_hat.shape}")
    return GsoCoefficient(float(np.real(np.trace(w_hat))) / w_hat.shape[0], "trace")


def _gaussian_expectation_nodes(v, h=INTEGRAL_STEP):
    """Complex nodes/weights for E g(xi), xi ~ CN(0, v)."""
    t, w = _real_grid(h)
    z = (t[:, None] + 1j * t[None, :]).ravel()
    wz = (w[:, None] * w[None, :]).ravel()
    return np.sqrt(v) * z, wz


def gso_b_integral(prototype, prior, alpha_in, v_in, step=INTEGRAL_STEP):
    """``b = E[conj(xi) fhat(alpha x + xi)] / E|xi|^2`` with ``xi ~ CN(0, v_in)``.

    The noise expectation uses a tensor trapezoid grid over the complex
    plane (geometrically convergent for analytic, Gaussian-weighted
    integrands).  Discrete priors are summed exactly over atoms; the Gaussian
    prior uses a second tensor grid over ``x``.  The real part is returned.

    ``prototype`` must be vectorized over complex arrays.
    """
    if not v_in > 0:
        raise ValueError(f"v_in must be positive, got {v_in}")
    xi, w_xi = _gaussian_expectation_nodes(v_in, step)
    if prior.is_gaussian:
        xs, w_x = _gaussian_expectation_nodes(1.0, 4 * step)
    else:
        xs, w_x = prior.points, prior.probs
    num = 0.0 + 0.0j
    for x_l, q_l in zip(xs, w_x):
        num += q_l * np.sum(w_xi * np.conj(xi) * prototype(alpha_in * x_l + xi))
    b = num.real / v_in
    if not np.isfinite(b):
        raise FloatingPointError("integral form produced a non-finite coefficient")
    return GsoCoefficient(float(b), "integral")


def gso_b_stein(prototype, samples):
    """Mean numerical derivative of a separable prototype over ``samples``.

    For complex inputs the Wirtinger derivative ``(d/dx - i d/dy)/2`` is
    used; its real part is returned.  Central differences with step
    ``1e-5 * max(1, |u|)``.
    """
    u = np.asarray(samples)
    if u.size < 1:
        raise ValueError("need at least one sample")
    h = STEIN_REL_STEP * np.maximum(1.0, np.abs(u))
    dx = (prototype(u + h) - prototype(u - h)) / (2 * h)
    if np.iscomplexobj(u):
        dy = (prototype(u + 1j * h) - prototype(u - 1j * h)) / (2 * h)
        deriv = 0.5 * (dx - 1j * dy)
    else:
        deriv = dx
    if not np.all(np.isfinite(deriv)):
        raise FloatingPointError("Stein derivative is not finite for some samples")
    return GsoCoefficient(float(np.mean(np.real(deriv))), "stein")


def gso_b_mmse(v_f, v_in, policy="clamp"):
    """``b = v_f / v_in`` for an MMSE prototype.

    ``v_f > v_in`` marks a non-contracting prototype; ``policy="clamp"``
    returns ``1 - 1e-6`` flagged as clamped, ``policy="abort"`` raises.
    """
    if not v_in > 0:
        raise ValueError(f"v_in must be positive, got {v_in}")
    if v_f < 0:
        raise ValueError(f"v_f must be nonnegative, got {v_f}")
    b = v_f / v_in
    if b >= CLAMP_VALUE:
        if policy == "abort":
            raise VarianceCollapse(f"v_f={v_f} >= v_in={v_in}: prototype is not contracting")
        if policy != "clamp":
            raise ValueError(f"unknown clamp policy {policy!r}")
        return GsoCoefficient(CLAMP_VALUE, "mmse", clamped=True)
    return GsoCoefficient(float(b), "mmse")


def ep_update(xhat_f, x_in, b, v_f=None):
    """Orthogonalized, renormalized output ``(xhat_f - b x_in) / (1 - b)``.

    Returns ``(x_out, v_out)``.  With ``v_f`` given, ``v_out`` is the
    extrinsic variance ``(1/v_f - 1/v_in)^-1`` with ``v_in = v_f / b``,
    otherwise None.  For ``b = 0`` the output variance is ``v_f``.
    """
    bval = float(b)
    if bval >= 1 - COLLAPSE_EPS:
        raise VarianceCollapse(f"b={bval} leaves no extrinsic information")
    x_out = (np.asarray(xhat_f) - bval * np.asarray(x_in)) / (1 - bval)
    if v_f is None:
        return x_out, None
    if bval == 0:
        return x_out, float(v_f)
    return x_out, float(v_f / (1 - bval))


def orthogonality_stat(err_a, err_b):
    """``|<err_a, err_b>| / N`` and its Monte-Carlo standard deviation under independence."""
    err_a = np.asarray(err_a)
    err_b = np.asarray(err_b)
    n = err_a.size
    va = np.vdot(err_a, err_a).real / n
    vb = np.vdot(err_b, err_b).real / n
    return float(abs(np.vdot(err_a, err_b)) / n), float(np.sqrt(va * vb / n))
