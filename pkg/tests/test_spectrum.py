import numpy as np
import pytest

from oamplab._rng import stream
from oamplab.spectrum import (
    Spectrum,
    SystemDims,
    assemble_matrix,
    db_to_linear,
    geometric_spectrum,
    identity_spectrum,
    iid_gaussian_matrix,
    linear_to_db,
    make_geometric_singulars,
    read_matrix,
    sample_haar_matrix,
    spectrum_of,
    write_matrix,
    write_spectrum_csv,
)


def test_db_roundtrip():
    assert db_to_linear(10.0) == pytest.approx(10.0)
    assert db_to_linear(0.0) == 1.0
    assert linear_to_db(db_to_linear(1.7)) == pytest.approx(1.7)


def test_dims_validation():
    with pytest.raises(ValueError):
        SystemDims(0, 3)
    d = SystemDims(500, 333)
    assert d.beta == pytest.approx(500 / 333)
    assert d.rank == 333


@pytest.mark.parametrize("n,m,kappa", [(500, 500, 10), (500, 333, 50), (256, 512, 1), (300, 200, 10)])
def test_geometric_singulars(n, m, kappa):
    dims = SystemDims(n, m)
    d = make_geometric_singulars(dims, kappa)
    t = min(n, m)
    assert d.size == t
    assert np.sum(d**2) == pytest.approx(n, rel=1e-12)
    ratios = d[:-1] / d[1:]
    assert np.allclose(ratios, kappa ** (1 / t), rtol=1e-12)
    assert np.all(np.diff(d) <= 0)


def test_kappa_one_is_flat():
    d = make_geometric_singulars(SystemDims(8, 8), 1.0)
    assert np.allclose(d, 1.0)


def test_kappa_below_one_rejected():
    with pytest.raises(ValueError):
        make_geometric_singulars(SystemDims(8, 8), 0.5)


def test_spectrum_pads_zeros_for_wide_systems():
    sp = geometric_spectrum(500, 333, 10, 2.0)
    assert sp.eigenvalues.size == 500
    assert sp.n_zero == 167
    assert np.mean(sp.eigenvalues) == pytest.approx(1.0)
    assert np.all(np.diff(sp.eigenvalues) <= 0)
    assert sp.with_snr(3.0).snr == 3.0


def test_spectrum_rejects_negative_eigenvalues():
    with pytest.raises(ValueError):
        Spectrum(np.array([1.0, -0.5]), 1.0, SystemDims(2, 2))


def test_haar_is_unitary_and_uniform():
    rng = stream(3, "haar-test")
    q = sample_haar_matrix(64, rng)
    assert np.allclose(q.conj().T @ q, np.eye(64), atol=1e-12)
    # mean |q_ij|^2 is 1/N for Haar
    acc = np.zeros((16, 16))
    for _ in range(200):
        acc += np.abs(sample_haar_matrix(16, rng)) ** 2
    assert np.allclose(acc / 200, 1 / 16, atol=0.02)


def test_haar_diagonal_phase_uniform():
    # without phase correction the QR diagonal is biased towards the positive real axis
    rng = stream(4, "haar-phase")
    d = np.array([sample_haar_matrix(4, rng)[0, 0] for _ in range(4000)])
    assert abs(np.mean(d)) < 0.03


def test_assemble_matches_spectrum():
    dims = SystemDims(40, 30)
    s = make_geometric_singulars(dims, 10)
    a = assemble_matrix(s, dims, stream(1, "asm"))
    assert a.assembled.shape == (30, 40)
    ev = np.sort(np.linalg.eigvalsh(a.assembled.conj().T @ a.assembled))[::-1]
    sp = spectrum_of(a, 1.0)
    assert np.allclose(ev, sp.eigenvalues, atol=1e-10)
    assert np.allclose(sp.eigenvalues, spectrum_of(s, 1.0, dims).eigenvalues)


def test_assemble_deterministic_is_diagonal():
    dims = SystemDims(3, 3)
    a = assemble_matrix(np.array([2.0, 1.0, 0.5]), dims, deterministic=True)
    assert np.allclose(a.assembled, np.diag([2.0, 1.0, 0.5]))


def test_assembly_is_seeded():
    dims = SystemDims(10, 10)
    s = np.ones(10)
    a1 = assemble_matrix(s, dims, stream(5, "x"))
    a2 = assemble_matrix(s, dims, stream(5, "x"))
    a3 = assemble_matrix(s, dims, stream(6, "x"))
    assert np.array_equal(a1.assembled, a2.assembled)
    assert not np.allclose(a1.assembled, a3.assembled)


def test_iid_gaussian_normalization():
    a = iid_gaussian_matrix(SystemDims(200, 400), stream(0, "iid"))
    assert np.mean(np.abs(a.assembled) ** 2) * 400 == pytest.approx(1.0, rel=0.02)
    ev = np.sort(np.linalg.eigvalsh(a.assembled.conj().T @ a.assembled))[::-1]
    assert np.allclose(spectrum_of(a, 1.0).eigenvalues, ev, atol=1e-10)


def test_identity_spectrum():
    sp = identity_spectrum(7, 4.0)
    assert np.all(sp.eigenvalues == 1.0)
    assert sp.condition_number() == 1.0


def test_matrix_binary_roundtrip(tmp_path):
    dims = SystemDims(5, 3)
    a = assemble_matrix(make_geometric_singulars(dims, 4), dims, stream(2, "io"))
    p = tmp_path / "a.bin"
    write_matrix(p, a)
    raw = p.read_bytes()
    assert raw[:8] == b"OAMPMAT1"
    assert len(raw) == 8 + 8 + 16 * 15
    back = read_matrix(p)
    assert np.array_equal(back, a.assembled)


def test_matrix_reader_rejects_bad_magic(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(b"NOTAMAT!" + b"\0" * 8)
    with pytest.raises(ValueError):
        read_matrix(p)


def test_spectrum_csv(tmp_path):
    p = tmp_path / "s.csv"
    write_spectrum_csv(p, identity_spectrum(3, 1.0))
    lines = p.read_text().splitlines()
    assert lines[0] == "index,eigenvalue"
    assert len(lines) == 4
