"""Signal priors, scalar MMSE denoisers and their MMSE transfer functions.

Observation model throughout: ``u = x + w`` with ``w ~ CN(0, 1/rho)``,
equivalently ``sqrt(rho) x + z`` with ``z ~ CN(0, 1)``.  Information is in
nats unless a name says otherwise.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, special

RHO_TAIL = 700.0
MI_EPSABS = 1e-9


@dataclass(frozen=True, eq=False)
class Prior:
    """Unit-power signal prior: circular Gaussian or a discrete constellation."""

    kind: str
    points: np.ndarray = None
    probs: np.ndarray = None
    name: str = ""

    def __post_init__(self):
        if self.kind == "gaussian":
            object.__setattr__(self, "name", self.name or "gaussian")
            return
        if self.kind != "discrete":
            raise ValueError(f"unknown prior kind {self.kind!r}")
        pts = np.array(self.points, dtype=complex)
        q = np.full(pts.size, 1.0 / pts.size) if self.probs is None else np.array(self.probs, dtype=float)
        if pts.ndim != 1 or q.shape != pts.shape or pts.size < 2:
            raise ValueError("points and probs must be matching 1-D sequences with at least two atoms")
        if np.any(q < 0) or abs(q.sum() - 1) > 1e-12:
            raise ValueError("probabilities must be nonnegative and sum to 1")
        power = float(np.sum(q * np.abs(pts) ** 2))
        if abs(power - 1) > 1e-12:
            raise ValueError(f"constellation must have unit power, got {power}")
        pts.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "probs", q)

    @property
    def is_gaussian(self):
        return self.kind == "gaussian"

    @property
    def key(self):
        if self.is_gaussian:
            return ("gaussian",)
        return ("discrete", self.points.tobytes(), self.probs.tobytes())

    @property
    def entropy(self):
        """Entropy of the constellation in nats (``log|S|`` for uniform atoms)."""
        if self.is_gaussian:
            return np.inf
        q = self.probs[self.probs > 0]
        return float(-np.sum(q * np.log(q)))

    @property
    def min_distance(self):
        d = np.abs(self.points[:, None] - self.points[None, :])
        return float(d[d > 0].min())

    def sample(self, n, rng):
        if self.is_gaussian:
            return (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2)
        return rng.choice(self.points, size=n, p=self.probs)


def gaussian():
    return Prior("gaussian")


def discrete(points, probs=None, name="", normalize=False):
    pts = np.asarray(points, dtype=complex)
    if normalize:
        q = np.full(pts.size, 1.0 / pts.size) if probs is None else np.asarray(probs, dtype=float)
        pts = pts / np.sqrt(np.sum(q * np.abs(pts) ** 2))
    return Prior("discrete", pts, probs, name)


def bpsk():
    return discrete([1.0, -1.0], name="bpsk")


def qpsk():
    # index = 2*b_re + b_im with bit 0 -> +, bit 1 -> - on each rail (Gray)
    s = 1 / np.sqrt(2)
    return discrete([s + 1j * s, s - 1j * s, -s + 1j * s, -s - 1j * s], name="qpsk")


def psk8():
    return discrete(np.exp(2j * np.pi * np.arange(8) / 8), name="8psk")


def qam16():
    re = np.array([-3, -1, 1, 3])
    pts = (re[:, None] + 1j * re[None, :]).ravel()
    return discrete(pts, name="16qam", normalize=True)


PRIORS = {"gaussian": gaussian, "bpsk": bpsk, "qpsk": qpsk, "8psk": psk8, "16qam": qam16}


def make_prior(name):
    try:
        return PRIORS[name.lower()]()
    except KeyError:
        raise ValueError(f"unknown prior {name!r}; choose from {sorted(PRIORS)}") from None


# -- denoiser ------------------------------------------------------------------


@dataclass(frozen=True)
class DenoiserOutput:
    mean: np.ndarray
    var: np.ndarray
    fallback: bool = False


def _discrete_posterior(points, probs, u, rho):
    """Posterior mean and variance over atoms; u has any shape."""
    u = np.asarray(u, dtype=complex)
    logw = np.log(probs) - rho * np.abs(u[..., None] - points) ** 2
    logw -= logw.max(axis=-1, keepdims=True)
    w = np.exp(logw)
    w /= w.sum(axis=-1, keepdims=True)
    mean = w @ points
    var = np.sum(w * np.abs(points - mean[..., None]) ** 2, axis=-1)
    return mean, var


def mmse_denoise(prior, u, rho):
    """Posterior mean and variance of x given ``u = x + CN(0, 1/rho)``."""
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    u = np.asarray(u, dtype=complex)
    if prior.is_gaussian:
        return DenoiserOutput(u * (rho / (1 + rho)), np.full(u.shape, 1 / (1 + rho)))
    if np.isinf(rho):
        idx = np.argmin(np.abs(u[..., None] - prior.points), axis=-1)
        return DenoiserOutput(prior.points[idx], np.zeros(u.shape), True)
    mean, var = _discrete_posterior(prior.points, prior.probs, u, rho)
    bad = ~np.isfinite(mean)
    if np.any(bad):
        idx = np.argmin(np.abs(u[bad][..., None] - prior.points), axis=-1)
        mean[bad] = prior.points[idx]
        var[bad] = 0.0
    return DenoiserOutput(mean, var, bool(np.any(bad)))


# -- transfer functions ----------------------------------------------------------
#
# E f(w) over Gaussian noise is evaluated on atom-centred uniform grids.  The
# trapezoid rule converges geometrically for Gaussian-weighted analytic
# integrands; the step shrinks with sqrt(rho) * d_min because the posterior
# mean has poles at an imaginary offset ~ 1 / (sqrt(rho) d_min).

GRID_HALF_WIDTH = 10.0
GRID_MAX_POINTS_2D = 481


def _grid_step(rho, dmin):
    return min(0.25, 0.32 / (np.sqrt(2.0 * rho) * dmin))


def _real_grid(h, half_width=GRID_HALF_WIDTH):
    """Nodes and weights for E f(g), g ~ N(0, 1/2) (density exp(-t^2)/sqrt(pi))."""
    k = int(np.ceil(half_width / h))
    t = h * np.arange(-k, k + 1)
    return t, np.exp(-t * t) * h / np.sqrt(np.pi)


def _rails(prior):
    """Split a product constellation into independent real/imaginary PAM rails.

    Returns ``[(levels, probs), (levels, probs)]`` or None when the
    constellation does not factor.
    """
    pts, q = prior.points, prior.probs
    re_lv, re_idx = np.unique(np.round(pts.real, 12), return_inverse=True)
    im_lv, im_idx = np.unique(np.round(pts.imag, 12), return_inverse=True)
    if re_lv.size * im_lv.size != pts.size:
        return None
    q_re = np.bincount(re_idx, weights=q, minlength=re_lv.size)
    q_im = np.bincount(im_idx, weights=q, minlength=im_lv.size)
    if not np.allclose(q, q_re[re_idx] * q_im[im_idx], rtol=0, atol=1e-14):
        return None
    return [(re_lv, q_re), (im_lv, q_im)]


def _pam_mmse(levels, probs, rho):
    """MMSE of a real PAM rail observed as a + N(0, 1/(2 rho))."""
    if levels.size == 1:
        return 0.0
    d = np.diff(levels).min()
    t, w = _real_grid(_grid_step(rho, d))
    u = levels[:, None] + t[None, :] / np.sqrt(rho)
    logw = np.log(probs) - rho * (u[..., None] - levels) ** 2
    logw -= logw.max(axis=-1, keepdims=True)
    post = np.exp(logw)
    post /= post.sum(axis=-1, keepdims=True)
    err = (levels[:, None] - post @ levels) ** 2
    return float(np.sum(probs * (err @ w)))


def _phi_grid2d(prior, rho, max_points=GRID_MAX_POINTS_2D):
    pts, q = prior.points, prior.probs
    h = _grid_step(rho, prior.min_distance)
    h = max(h, 2 * GRID_HALF_WIDTH / (max_points - 1))
    t, w = _real_grid(h)
    z = (t[:, None] + 1j * t[None, :]).ravel()
    wz = (w[:, None] * w[None, :]).ravel()
    total = 0.0
    for s_l, q_l in zip(pts, q):
        mean, _ = _discrete_posterior(pts, q, s_l + z / np.sqrt(rho), rho)
        total += q_l * float(np.abs(s_l - mean) ** 2 @ wz)
    return total


def _phi_tail_bound(prior, rho):
    """Pairwise union bound on the MMSE for very large rho."""
    pts, q = prior.points, prior.probs
    d = np.abs(pts[:, None] - pts[None, :])
    off = d > 0
    logq = special.log_ndtr(-d[off] * np.sqrt(rho / 2))
    terms = (q[:, None] * d**2)[off] * np.exp(logq)
    return float(np.sum(terms))


_PRIOR_BY_KEY = {}


@lru_cache(maxsize=500_000)
def _phi_discrete(key, rho, method):
    prior = _PRIOR_BY_KEY[key]
    if method == "rails":
        rails = _rails(prior)
        if rails is None:
            raise ValueError(f"constellation {prior.name!r} is not a product of PAM rails")
        return sum(_pam_mmse(lv, pq, rho) for lv, pq in rails)
    if method == "grid2d":
        return _phi_grid2d(prior, rho)
    raise ValueError(f"unknown method {method!r}")


def phi_se(prior, rho, method="auto"):
    """Scalar MMSE ``mmse(x | sqrt(rho) x + z)`` for the given prior.

    ``method`` selects the discrete-prior evaluator: ``"rails"`` (product
    constellations), ``"grid2d"`` (any constellation, complex-plane grid) or
    ``"auto"``.
    """
    rho = float(rho)
    if rho < 0 or np.isnan(rho):
        raise ValueError(f"rho must be >= 0, got {rho}")
    if prior.is_gaussian:
        return 1.0 / (1.0 + rho)
    if rho == 0:
        return float(1.0 - abs(np.sum(prior.probs * prior.points)) ** 2)
    if rho > RHO_TAIL:
        return _phi_tail_bound(prior, rho)
    if prior.key not in _PRIOR_BY_KEY:
        _PRIOR_BY_KEY[prior.key] = prior
    if method == "auto":
        method = "rails" if _rails(prior) is not None else "grid2d"
    return _phi_discrete(prior.key, rho, method)


def phi_qpsk(rho):
    """QPSK MMSE through the one-dimensional tanh integral."""
    rho = float(rho)
    if rho == 0:
        return 1.0
    sr = np.sqrt(rho)

    # 1 - tanh(a) = 2 * expit(-2a), evaluated without cancellation
    def f(g):
        return 2.0 * special.expit(-2.0 * (rho - sr * g)) * np.exp(-0.5 * g * g) / np.sqrt(2 * np.pi)

    # the integrand peaks where rho - sr*g ~ 0, i.e. g ~ sqrt(rho)
    val, _ = integrate.quad(f, -np.inf, np.inf, points=None, epsabs=1e-13, epsrel=1e-11, limit=400)
    return float(val)


def mutual_information(prior, rho, epsabs=MI_EPSABS):
    """``I(x; sqrt(rho) x + z)`` in nats as the area under ``phi_se`` on [0, rho]."""
    rho = float(rho)
    if rho < 0:
        raise ValueError(f"rho must be >= 0, got {rho}")
    if prior.is_gaussian:
        return float(np.log1p(rho))
    if rho == 0:
        return 0.0
    if np.isinf(rho):
        return prior.entropy
    return _area(prior, 0.0, rho, epsabs)


def _area(prior, lo, hi, epsabs=MI_EPSABS):
    f = lambda r: phi_se(prior, r)
    # split the range so quad resolves the knee near rho ~ 1
    cuts = [c for c in (0.5, 2.0, 8.0, 32.0, 128.0) if lo < c < hi]
    edges = [lo, *cuts, hi]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, err = integrate.quad(f, a, b, epsabs=epsabs / len(edges), epsrel=1e-12, limit=200)
        if not np.isfinite(val):
            raise FloatingPointError(f"quadrature failed on [{a}, {b}] (error estimate {err})")
        total += val
    return float(total)


def mmse_tail_area(prior, rho):
    """``integral_rho^inf phi_se``; the noise-loss area for a discrete prior."""
    if prior.is_gaussian:
        return np.inf
    hi = RHO_TAIL
    if rho >= hi:
        val, _ = integrate.quad(lambda r: _phi_tail_bound(prior, r), rho, np.inf)
        return float(val)
    tail, _ = integrate.quad(lambda r: _phi_tail_bound(prior, r), hi, np.inf)
    return _area(prior, rho, hi) + float(tail)
