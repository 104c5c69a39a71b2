import math

import numpy as np
import pytest

from oamplab._rng import stream
from oamplab.denoiser import bpsk, gaussian, mmse_denoise, phi_se, qpsk
from oamplab.gs import (
    CLAMP_VALUE,
    GsoCoefficient,
    VarianceCollapse,
    ep_update,
    gs_decompose,
    gso_b_integral,
    gso_b_mmse,
    gso_b_stein,
    gso_b_trace,
    orthogonality_stat,
)


def _cn(rng, n, v):
    return (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * math.sqrt(v / 2)


def _denoiser(prior, v_in):
    return lambda u: mmse_denoise(prior, u, 1.0 / v_in).mean


def test_gs_trivial_cases():
    x = qpsk().sample(100, stream(0, "gs"))
    assert gs_decompose(x, x).alpha == pytest.approx(1.0)
    assert gs_decompose(x, x).v == pytest.approx(0.0, abs=1e-15)
    m = gs_decompose(np.zeros_like(x), x)
    assert (m.alpha, m.v) == (0.0, 0.0)
    with pytest.raises(ValueError):
        gs_decompose(x, np.zeros_like(x))
    with pytest.raises(ValueError):
        gs_decompose(x[:5], x)


def test_gs_synthetic_recovery():
    rng = stream(1, "gs")
    x = qpsk().sample(100_000, rng)
    m = gs_decompose(0.5 * x + _cn(rng, x.size, 0.25), x)
    assert m.alpha == pytest.approx(0.5, abs=0.01)
    assert m.v == pytest.approx(0.25, abs=0.01)


def test_gs_residual_orthogonal():
    rng = stream(2, "gs")
    x = qpsk().sample(500, rng)
    xh = 0.3 * x + _cn(rng, 500, 1.0)
    m = gs_decompose(xh, x)
    # alpha is real, so the real inner product vanishes exactly
    assert abs(np.vdot(x, xh - m.alpha * x).real) < 1e-10


def test_trace_form():
    assert gso_b_trace(np.eye(4)).b == 1.0
    assert gso_b_trace(np.diag([1.0, -1.0])).b == 0.0
    w = np.linalg.inv(np.eye(3) + np.eye(3))  # A = I, snr = 1, v = 1
    assert gso_b_trace(w).b == pytest.approx(0.5)
    with pytest.raises(ValueError):
        gso_b_trace(np.ones((2, 3)))


def test_integral_form_identity_and_gaussian():
    assert gso_b_integral(lambda u: u, qpsk(), 1.0, 0.7).b == pytest.approx(1.0, abs=1e-12)
    b = gso_b_integral(_denoiser(gaussian(), 1.0), gaussian(), 1.0, 1.0)
    assert b.b == pytest.approx(0.5, abs=1e-10)
    with pytest.raises(ValueError):
        gso_b_integral(lambda u: u, qpsk(), 1.0, 0.0)


def test_stein_form_linear_and_gaussian():
    rng = stream(3, "stein")
    u = _cn(rng, 1000, 2.0)
    assert gso_b_stein(lambda z: 0.3 * z, u).b == pytest.approx(0.3, abs=1e-9)
    assert gso_b_stein(_denoiser(gaussian(), 1.0), u).b == pytest.approx(0.5, abs=1e-6)
    assert gso_b_stein(lambda z: 0.3 * z, np.array([0.5, -2.0])).b == pytest.approx(0.3, abs=1e-9)


def test_stein_bpsk_saturates():
    rng = stream(4, "stein")
    rho = 400.0
    x = bpsk().sample(2000, rng)
    u = x + _cn(rng, x.size, 1 / rho)
    assert gso_b_stein(_denoiser(bpsk(), 1 / rho), u).b < 1e-6


def test_qpsk_integral_matches_stein_and_mmse():
    v = 1.0
    bi = gso_b_integral(_denoiser(qpsk(), v), qpsk(), 1.0, v).b
    bm = gso_b_mmse(phi_se(qpsk(), 1 / v), v).b
    assert bi == pytest.approx(bm, abs=1e-9)
    rng = stream(5, "stein")
    x = qpsk().sample(2_000_000, rng)
    bs = gso_b_stein(_denoiser(qpsk(), v), x + _cn(rng, x.size, v)).b
    assert bs == pytest.approx(bi, abs=1e-3)


@pytest.mark.slow
def test_qpsk_integral_matches_stein_tight():
    # 1e-4 agreement; the Stein average has SD ~1.7e-4 per 2e6 samples, so 32 chunks give ~3e-5
    v = 1.0
    f = _denoiser(qpsk(), v)
    bi = gso_b_integral(f, qpsk(), 1.0, v).b
    rng = stream(5, "stein-tight")
    chunks = []
    for _ in range(32):
        x = qpsk().sample(2_000_000, rng)
        chunks.append(gso_b_stein(f, x + _cn(rng, x.size, v)).b)
    assert np.mean(chunks) == pytest.approx(bi, abs=1e-4)


@pytest.mark.parametrize("v", [0.2, 1.0, 3.0])
def test_four_form_agreement_gaussian(v):
    b_ref = 1 / (1 + v)
    rng = stream(6, "four")
    u = _cn(rng, 4000, 1 + v)
    f = _denoiser(gaussian(), v)
    assert gso_b_trace(np.eye(5) / (1 + v)).b == pytest.approx(b_ref, abs=1e-12)
    assert gso_b_integral(f, gaussian(), 1.0, v).b == pytest.approx(b_ref, abs=1e-6)
    assert gso_b_stein(f, u).b == pytest.approx(b_ref, abs=1e-6)
    assert gso_b_mmse(phi_se(gaussian(), 1 / v), v).b == pytest.approx(b_ref, abs=1e-12)


def test_mmse_form_and_clamp():
    assert gso_b_mmse(0.0, 1.0).b == 0.0
    assert gso_b_mmse(0.5, 1.0).b == 0.5
    c = gso_b_mmse(1.2, 1.0)
    assert c.clamped and c.b == CLAMP_VALUE
    with pytest.raises(VarianceCollapse):
        gso_b_mmse(1.2, 1.0, policy="abort")
    with pytest.raises(ValueError):
        gso_b_mmse(0.5, 0.0)


def test_coefficient_must_be_finite():
    with pytest.raises(ValueError):
        GsoCoefficient(float("nan"), "mmse")


def test_ep_update_cases():
    x_in = np.array([1.0 + 1j, -2.0])
    out, v = ep_update(np.array([3.0, 4.0]), x_in, GsoCoefficient(0.0, "mmse"), 0.4)
    assert np.allclose(out, [3.0, 4.0]) and v == 0.4
    # Gaussian extrinsic of a single observation carries nothing beyond the prior
    out, v = ep_update(x_in / 2, x_in, GsoCoefficient(0.5, "mmse"), 0.5)
    assert np.allclose(out, 0.0) and v == pytest.approx(1.0)
    with pytest.raises(VarianceCollapse):
        ep_update(x_in, x_in, GsoCoefficient(1.0, "mmse"), 0.5)


def test_ep_update_extrinsic_variance_formula():
    v_f, v_in = 0.3, 0.8
    _, v_out = ep_update(np.zeros(2), np.zeros(2), gso_b_mmse(v_f, v_in), v_f)
    assert v_out == pytest.approx(1 / (1 / v_f - 1 / v_in))


@pytest.mark.parametrize("n", [1000, 10_000, 100_000])
def test_ep_output_orthogonal_to_input_error(n):
    rng = stream(n, "orth")
    rho = 4.0
    x = qpsk().sample(n, rng)
    x_in = x + _cn(rng, n, 1 / rho)
    post = mmse_denoise(qpsk(), x_in, rho)
    b = gso_b_mmse(float(np.mean(post.var)), 1 / rho)
    x_out, _ = ep_update(post.mean, x_in, b)
    stat, sig = orthogonality_stat(x_in - x, x_out - x)
    assert stat < 3 * sig


def test_orthogonality_statistic_shrinks_with_n():
    stats = []
    for n in (1000, 10_000, 100_000):
        vals = []
        for k in range(20):
            rng = stream(k, n, "shrink")
            x = qpsk().sample(n, rng)
            x_in = x + _cn(rng, n, 0.25)
            post = mmse_denoise(qpsk(), x_in, 4.0)
            x_out, _ = ep_update(post.mean, x_in, gso_b_mmse(float(np.mean(post.var)), 0.25))
            vals.append(orthogonality_stat(x_in - x, x_out - x)[0])
        stats.append(np.mean(vals))
    ratios = np.array(stats[:-1]) / np.array(stats[1:])
    assert np.all((ratios > 2.0) & (ratios < 5.0))


def test_linear_trace_condition():
    # tr(W) = 0 passes the orthogonality test; tr(W) = cN leaves correlation c * v_in
    rng = stream(7, "lin")
    n, v_in = 20_000, 0.5
    x = qpsk().sample(n, rng)
    xi = _cn(rng, n, v_in)
    signs = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    stat0, sig0 = orthogonality_stat(xi, signs * xi)
    assert stat0 < 3 * sig0
    c = 0.4
    stat1, _ = orthogonality_stat(xi, c * xi + 0.1 * x)
    assert stat1 == pytest.approx(c * v_in, rel=0.05)


@pytest.mark.parametrize("prior,rho", [(gaussian(), 1.5), (qpsk(), 1.5), (qpsk(), 6.0)])
def test_posterior_mean_correlation_equals_mmse(prior, rho):
    # E[conj(xi_in) fhat] equals E|fhat - x|^2 for an MMSE prototype
    rng = stream(8, "prop")
    n = 400_000
    x = prior.sample(n, rng)
    xi = _cn(rng, n, 1 / rho)
    fhat = mmse_denoise(prior, x + xi, rho).mean
    lhs = np.vdot(xi, fhat).real / n
    rhs = np.mean(np.abs(fhat - x) ** 2)
    sd = np.std((np.conj(xi) * fhat).real) / math.sqrt(n)
    assert abs(lhs - rhs) < 4 * sd
