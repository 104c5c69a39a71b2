"""Constrained capacity, cascade rate and the area decomposition of the SE chart.

The chart plots the NLE transfer ``v = phi(rho)`` and the LE curve
``v = eta_inverse(rho)``; they cross at the fixed point ``(rho*, v*)``.
Capacity is obtained in two independent ways: from areas in that chart
(mutual information plus a log-determinant) and from the R-transform of the
eigenvalue sequence.  Everything is in nats unless suffixed ``_bits``.
"""
from dataclasses import dataclass, asdict
import math

import numpy as np
from scipy import integrate, optimize

from . import le
from .denoiser import mutual_information, mmse_tail_area, phi_se
from .se import find_fixed_point

LN2 = math.log(2.0)
AREA_EPSABS = 1e-11


class NonUniqueFixedPoint(ArithmeticError):
    def __init__(self, fixed_point):
        self.fixed_point = fixed_point
        roots = ", ".join(f"{r:.6g}" for r, _ in fixed_point.all_roots)
        super().__init__(f"SE has {len(fixed_point.all_roots)} fixed points (rho = {roots}); capacity undefined")


def gaussian_capacity(spectrum):
    """``mean(log(1 + snr lam))``."""
    return float(np.mean(np.log1p(spectrum.snr * spectrum.eigenvalues)))


def log_det_term(spectrum, rho, v):
    """``log v + mean(log(1/v - rho + snr lam))``, evaluated as one log1p."""
    return float(np.mean(np.log1p(v * (spectrum.snr * spectrum.eigenvalues - rho))))


def _require_unique(spectrum, prior, fixed_point):
    fp = fixed_point or find_fixed_point(spectrum, prior)
    if not fp.unique:
        raise NonUniqueFixedPoint(fp)
    if not 1.0 / fp.v_star - fp.rho_star > 0:
        raise ArithmeticError(f"extrinsic precision 1/v* - rho* is not positive at rho*={fp.rho_star}")
    return fp


def _capacity_at(spectrum, prior, rho, v):
    return mutual_information(prior, rho) + log_det_term(spectrum, rho, v)


def capacity_area(spectrum, prior, fixed_point=None):
    """Constrained capacity from the SE fixed point.

    ``I(rho*) + log v* + mean(log((1/v* - rho*) + snr lam))``.
    """
    fp = _require_unique(spectrum, prior, fixed_point)
    return _capacity_at(spectrum, prior, fp.rho_star, fp.v_star)


def cascade_rate(spectrum, prior, fixed_point=None):
    """Rate of separate detection then decoding: ``I(rho*)``."""
    fp = fixed_point or find_fixed_point(spectrum, prior)
    return mutual_information(prior, fp.rho_star)


# -- R-transform route ---------------------------------------------------------


@dataclass(frozen=True)
class RTransform:
    """Empirical Stieltjes and R-transforms of an eigenvalue sequence.

    ``S(z) = mean(1/(lam - z))`` for real ``z < min(lam)`` and
    ``R(w) = S^-1(-w) - 1/w``.
    """

    eigenvalues: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float)
        object.__setattr__(self, "eigenvalues", lam)

    def stieltjes(self, z):
        z = np.asarray(z, dtype=float)
        if np.any(z >= self.eigenvalues.min()):
            raise ValueError("Stieltjes transform is only used left of the spectrum")
        return np.mean(1.0 / (self.eigenvalues - z[..., None]), axis=-1)

    def _u_of(self, w):
        """Solve ``S(-1/u) = w`` for ``u > 0``; requires ``w < S(0^-)``."""
        lam = self.eigenvalues
        s_at = lambda u: np.mean(u / (1.0 + u * lam))
        lo, hi = 1e-300, 1.0
        while s_at(hi) < w:
            lo, hi = hi, hi * 2.0
            if hi > 1e300:
                raise ArithmeticError(f"Stieltjes inversion failed for w={w}")
        return optimize.brentq(lambda u: s_at(u) - w, lo, hi, xtol=1e-300, rtol=1e-15, maxiter=500)

    def _s_at_origin(self):
        lam = self.eigenvalues
        return np.inf if np.any(lam == 0) else float(np.mean(1.0 / lam))

    def _z_right(self, w):
        """Root ``z`` in ``[0, min lam)`` of ``S(z) = w`` when ``w >= S(0)``."""
        lam = self.eigenvalues
        lmin = lam.min()
        f = lambda z: np.mean(1.0 / (lam - z)) - w
        if f(0.0) >= 0:
            return 0.0
        gap = 0.5
        while f(lmin - gap * lmin) <= 0:
            gap *= 0.5
            if gap < 1e-300:
                raise ArithmeticError(f"Stieltjes inversion failed for w={w}")
        return optimize.brentq(f, 0.0, lmin - gap * lmin, xtol=1e-300, rtol=1e-15, maxiter=500)

    def inverse_stieltjes(self, w):
        if w >= self._s_at_origin():
            return self._z_right(w)
        return -1.0 / self._u_of(w)

    def r_neg(self, x):
        """``R(-x)`` for ``x >= 0`` in cancellation-free form."""
        lam = self.eigenvalues
        if x == 0:
            return float(np.mean(lam))
        if x >= self._s_at_origin():
            z = self._z_right(x)
            den = lam - z
            return float(np.mean(lam / den) / np.mean(1.0 / den))
        u = self._u_of(x)
        den = 1.0 + u * lam
        return float(np.mean(lam / den) / np.mean(1.0 / den))


def rtransform_fixed_point(spectrum, prior, rt=None, max_iters=10_000, damping=1.0):
    """Solve ``rho = snr R(-snr phi(rho))`` from ``rho = 0``.

    Damped iteration brings ``rho`` next to the first root, which is then
    bracketed and polished with brentq.
    """
    rt = rt or RTransform(spectrum.eigenvalues)
    snr = spectrum.snr
    fmap = lambda r: snr * rt.r_neg(snr * phi_se(prior, r))
    h = lambda r: fmap(r) - r
    rho = 0.0
    for _ in range(max_iters):
        new = (1 - damping) * rho + damping * fmap(rho)
        if abs(new - rho) <= 1e-9 * max(new, 1e-300):
            rho = new
            break
        rho = new
    # bracket: h > 0 left of the first root, < 0 right of it
    lo, hi = rho * (1 - 1e-6), rho * (1 + 1e-6)
    for _ in range(200):
        if h(lo) > 0:
            break
        lo *= 0.9
    for _ in range(200):
        if h(hi) < 0:
            break
        hi *= 1.1
    if not (h(lo) > 0 > h(hi)):
        raise ArithmeticError("could not bracket the R-transform fixed point")
    return optimize.brentq(h, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500)


def capacity_rtransform(spectrum, prior, return_fixed_point=False):
    """Constrained capacity through the R-transform of ``A^H A``.

    ``int_0^{snr v*} R(-z) dz + I(rho*) - rho* v*`` with
    ``rho* = snr R(-snr v*)`` and ``v* = phi(rho*)``.
    """
    rt = RTransform(spectrum.eigenvalues)
    rho = rtransform_fixed_point(spectrum, prior, rt)
    v = phi_se(prior, rho)
    upper = spectrum.snr * v
    r_int, err = integrate.quad(rt.r_neg, 0.0, upper, epsabs=1e-13, epsrel=1e-12, limit=200)
    cap = r_int + mutual_information(prior, rho) - rho * v
    if return_fixed_point:
        return cap, rho, v
    return cap


# -- areas -----------------------------------------------------------------------


def le_curve_area(spectrum, lo, hi):
    """``int_lo^hi eta_inverse(rho) drho`` by adaptive quadrature.

    ``lo`` is clipped to the start of the LE curve: a fixed point computed a
    few ulps below it would otherwise pick up the infinite extension.  A
    curve that is vertical up to rounding (all eigenvalues equal) has no area.
    """
    lo = max(lo, le.rho_range(spectrum)[0])
    if hi - lo <= 1e-12 * hi:
        return 0.0
    val, _ = integrate.quad(lambda r: le.eta_inverse(spectrum, r), lo, hi, epsabs=AREA_EPSABS, epsrel=1e-12, limit=200)
    return float(val)


def _phi_area(prior, lo, hi):
    return mutual_information(prior, hi) - mutual_information(prior, lo)


@dataclass(frozen=True)
class AreaReport:
    """Areas of the SE chart in nats.

    Point names: O origin, D the fixed point, B and E its projections on the
    v and rho axes, G = (snr, 0), F = (snr, phi(snr)), A = (0, 1), and H at
    rho -> infinity.
    """

    snr: float
    rho_star: float
    v_star: float
    a_adgo: float  # constrained capacity
    a_acgo: float  # Gaussian-signaling capacity
    a_adeo: float  # cascade rate
    a_bdeo: float  # rho* v*
    a_dge: float  # cascade rate loss (log-det form)
    a_bdgo: float  # rectangle plus area under the LE curve (quadrature)
    a_afgo: float  # single-input single-output capacity at snr
    a_dfg: float  # between the two curves on [rho*, snr] (quadrature)
    a_aho: float = None  # log|S|, discrete priors only
    a_fhg: float = None  # noise loss, discrete priors only
    a_acd: float = None  # shaping loss, discrete priors only

    def bits(self):
        return {k: (v / LN2 if k.startswith("a_") and v is not None else v) for k, v in asdict(self).items()}

    def identity_residuals(self):
        """Residuals of the additive identities between areas."""
        res = {
            "adgo=adeo+dge": self.a_adgo - (self.a_adeo + self.a_dge),
            "bdgo=bdeo+dge": self.a_bdgo - (self.a_bdeo + self.a_dge),
            "dfg=afgo-adgo": self.a_dfg - (self.a_afgo - self.a_adgo),
        }
        if self.a_aho is not None:
            res["aho=afgo+fhg"] = self.a_aho - (self.a_afgo + self.a_fhg)
        return res


def area_report(spectrum, prior, fixed_point=None):
    fp = _require_unique(spectrum, prior, fixed_point)
    rho, v, snr = fp.rho_star, fp.v_star, spectrum.snr
    cascade = mutual_information(prior, rho)
    dge = log_det_term(spectrum, rho, v)
    le_area = le_curve_area(spectrum, rho, snr)
    siso = mutual_information(prior, snr)
    report = dict(
        snr=snr,
        rho_star=rho,
        v_star=v,
        a_adgo=capacity_area(spectrum, prior, fp),
        a_acgo=gaussian_capacity(spectrum),
        a_adeo=cascade,
        a_bdeo=rho * v,
        a_dge=dge,
        a_bdgo=rho * v + le_area,
        a_afgo=siso,
        a_dfg=_phi_area(prior, rho, snr) - le_area,
    )
    if not prior.is_gaussian:
        report["a_aho"] = prior.entropy
        report["a_fhg"] = mmse_tail_area(prior, snr)
        report["a_acd"] = report["a_acgo"] - report["a_adgo"]
    return AreaReport(**report)


# -- rate curves ---------------------------------------------------------------------


@dataclass(frozen=True)
class RateRow:
    snr_db: float
    capacity: float  # None when the fixed point is not unique
    cascade: float
    gaussian: float
    unique: bool
    candidates: tuple = ()  # (capacity, cascade) per SE root when not unique


def rate_row(spectrum, prior):
    fp = find_fixed_point(spectrum, prior)
    snr_db = 10 * math.log10(spectrum.snr)
    gauss = gaussian_capacity(spectrum)
    if fp.unique:
        return RateRow(snr_db, capacity_area(spectrum, prior, fp), cascade_rate(spectrum, prior, fp), gauss, True)
    cands = tuple((_capacity_at(spectrum, prior, r, v), mutual_information(prior, r)) for r, v in fp.all_roots)
    return RateRow(snr_db, None, mutual_information(prior, fp.rho_star), gauss, False, cands)


def rate_curve(spectrum, prior, snr_db_grid, executor=None):
    """Rows of capacity, cascade rate and Gaussian capacity over an snr grid.

    ``spectrum`` supplies the eigenvalues; its snr is replaced per row.
    """
    specs = [spectrum.with_snr(10 ** (s / 10)) for s in snr_db_grid]
    if executor is None:
        return [rate_row(sp, prior) for sp in specs]
    return list(executor.map(rate_row, specs, [prior] * len(specs)))


def snr_for_rate(eigenvalues_or_spectrum, prior, target_nats, bracket_db=(-10.0, 30.0), dims=None):
    """snr (dB) at which the constrained capacity equals ``target_nats``."""
    from .spectrum import Spectrum

    sp = eigenvalues_or_spectrum
    if not isinstance(sp, Spectrum):
        sp = Spectrum(np.asarray(sp), 1.0, dims)
    f = lambda db: capacity_area(sp.with_snr(10 ** (db / 10)), prior) - target_nats
    return optimize.brentq(f, *bracket_db, xtol=1e-6)
