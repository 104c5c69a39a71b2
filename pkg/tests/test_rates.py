from concurrent.futures import ThreadPoolExecutor
import math

import numpy as np
import pytest
from scipy import optimize

import oracles
from oamplab import rates, se
from oamplab.denoiser import bpsk, gaussian, mutual_information, qpsk
from oamplab.spectrum import Spectrum, SystemDims, geometric_spectrum, identity_spectrum


def test_gaussian_capacity_log_det():
    sp = geometric_spectrum(256, 256, 10, 3.0)
    assert rates.gaussian_capacity(sp) == pytest.approx(oracles.gaussian_capacity(sp.eigenvalues, 3.0), rel=1e-14)


@pytest.mark.parametrize("n,m,kappa", [(256, 256, 10), (256, 512, 50), (256, 171, 1)])
def test_gaussian_prior_capacity_equals_log_det(n, m, kappa):
    sp = geometric_spectrum(n, m, kappa, 2.5)
    assert rates.capacity_area(sp, gaussian()) == pytest.approx(rates.gaussian_capacity(sp), abs=1e-9)


def test_identity_system_capacity_is_scalar_mi():
    sp = identity_spectrum(8, 2.0)
    assert rates.capacity_area(sp, qpsk()) == pytest.approx(oracles.mi_qpsk(2.0), abs=1e-8)
    assert rates.cascade_rate(sp, qpsk()) == pytest.approx(oracles.mi_qpsk(2.0), abs=1e-8)


@pytest.mark.parametrize("snr_db", [-2.0, 2.0, 6.0])
def test_rate_ordering(snr_db):
    sp = geometric_spectrum(500, 500, 10, 10 ** (snr_db / 10))
    cap = rates.capacity_area(sp, qpsk())
    cas = rates.cascade_rate(sp, qpsk())
    gauss = rates.gaussian_capacity(sp)
    assert cas <= cap + 1e-12
    assert cap <= gauss + 1e-12
    assert cap <= math.log(4) + 1e-12


def _r_neg_oracle(lam, x):
    # R(-x) = z + 1/x where S(z) = x, z left of the spectrum
    s = lambda z: np.mean(1.0 / (lam - z)) - x
    lo = lam.min() - 1.0
    while s(lo) > 0:
        lo = lam.min() - 2 * (lam.min() - lo)
    z = optimize.brentq(s, lo, lam.min() - 1e-15 * max(1.0, lam.min()), xtol=1e-15, rtol=1e-15)
    return z + 1.0 / x


def test_r_transform_identity_is_constant():
    rt = rates.RTransform(np.ones(5))
    for x in (0.0, 0.1, 1.0, 10.0):
        assert rt.r_neg(x) == pytest.approx(1.0, rel=1e-12)


@pytest.mark.parametrize("x", [0.05, 0.5, 1.0, 3.0])
def test_r_transform_against_direct_inversion(x):
    lam = np.array([0.2, 0.7, 1.3, 1.8])
    rt = rates.RTransform(lam)
    assert rt.r_neg(x) == pytest.approx(_r_neg_oracle(lam, x), rel=1e-9)
    w = x
    assert rt.stieltjes(np.array(rt.inverse_stieltjes(w))) == pytest.approx(w, rel=1e-12)


def test_r_transform_singular_spectrum():
    lam = np.array([0.0, 0.0, 1.5, 2.5])
    rt = rates.RTransform(lam / lam.mean())
    assert rt.r_neg(0.0) == pytest.approx(1.0)
    vals = [rt.r_neg(x) for x in np.logspace(-3, 3, 30)]
    assert np.all(np.diff(vals) <= 1e-12)  # R(-x) decreases with x
    assert vals[-1] >= 0


def test_stieltjes_domain():
    with pytest.raises(ValueError):
        rates.RTransform(np.array([1.0, 2.0])).stieltjes(np.array(1.5))


@pytest.mark.parametrize("n,m,kappa,snr_db", [(256, 256, 10, 2.0), (256, 171, 50, 5.0), (256, 512, 1, 0.0)])
def test_dual_route_capacity(n, m, kappa, snr_db):
    sp = geometric_spectrum(n, m, kappa, 10 ** (snr_db / 10))
    cap_area = rates.capacity_area(sp, qpsk())
    cap_r, rho_r, _ = rates.capacity_rtransform(sp, qpsk(), return_fixed_point=True)
    assert cap_r == pytest.approx(cap_area, abs=1e-9)
    assert rho_r == pytest.approx(se.find_fixed_point(sp, qpsk()).rho_star, rel=1e-9)


def _bimodal(snr):
    ev = np.r_[np.full(50, 19.0), np.full(950, 1e-3)]
    return Spectrum(ev / ev.mean(), snr, SystemDims(1000, 1000))


def test_non_unique_fixed_point_refused():
    for snr_db in np.arange(0.0, 30.0, 0.5):
        sp = _bimodal(10 ** (snr_db / 10))
        fp = se.find_fixed_point(sp, bpsk())
        if not fp.unique:
            break
    else:
        pytest.fail("expected several SE crossings")
    with pytest.raises(rates.NonUniqueFixedPoint) as exc:
        rates.capacity_area(sp, bpsk())
    assert len(exc.value.fixed_point.all_roots) >= 2
    row = rates.rate_row(sp, bpsk())
    assert not row.unique and row.capacity is None and len(row.candidates) >= 2


def test_area_report_identities_and_names():
    sp = geometric_spectrum(500, 500, 10, 10**0.2)
    rep = rates.area_report(sp, qpsk())
    for name, res in rep.identity_residuals().items():
        assert abs(res) < 1e-9, name
    assert rep.a_adgo == pytest.approx(rates.capacity_area(sp, qpsk()))
    assert rep.a_acgo >= rep.a_adgo >= rep.a_adeo
    assert rep.a_aho == pytest.approx(math.log(4))
    assert rep.bits()["a_aho"] == pytest.approx(2.0)
    assert rep.a_acd == pytest.approx(rep.a_acgo - rep.a_adgo)


def test_area_report_gaussian_has_no_discrete_areas():
    rep = rates.area_report(geometric_spectrum(256, 256, 10, 2.0), gaussian())
    assert rep.a_aho is None
    assert set(rep.identity_residuals()) == {"adgo=adeo+dge", "bdgo=bdeo+dge", "dfg=afgo-adgo"}


def test_rate_curve_threaded_matches_serial():
    sp = geometric_spectrum(256, 256, 10, 1.0)
    grid = [0.0, 1.0, 2.0, 3.0]
    serial = rates.rate_curve(sp, qpsk(), grid)
    with ThreadPoolExecutor(3) as pool:
        threaded = rates.rate_curve(sp, qpsk(), grid, executor=pool)
    assert serial == threaded
    assert [r.snr_db for r in serial] == pytest.approx(grid)


def test_snr_for_rate_hits_target():
    sp = geometric_spectrum(500, 500, 10, 1.0)
    db = rates.snr_for_rate(sp, qpsk(), math.log(2))
    cap = rates.capacity_area(sp.with_snr(10 ** (db / 10)), qpsk())
    assert cap == pytest.approx(math.log(2), abs=1e-6)


def test_cascade_rate_is_mi_at_fixed_point():
    sp = geometric_spectrum(500, 500, 10, 2.0)
    fp = se.find_fixed_point(sp, qpsk())
    assert rates.cascade_rate(sp, qpsk(), fp) == mutual_information(qpsk(), fp.rho_star)
