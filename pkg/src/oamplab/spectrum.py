"""Sensing matrices and their eigenvalue profiles.

A sensing matrix is stored through its SVD ``A = U^H Sigma V``.  Analysis code
only needs the eigenvalues of ``A^H A`` (zero padded to length N) together
with the transmit SNR; sample-level simulation also needs the unitary
factors.
"""
from dataclasses import dataclass, field
import csv
import struct

import numpy as np

from ._rng import as_generator

MATRIX_MAGIC = b"OAMPMAT1"


def db_to_linear(snr_db):
    return 10.0 ** (np.asarray(snr_db, dtype=float) / 10.0)


def linear_to_db(snr):
    return 10.0 * np.log10(snr)


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SystemDims:
    n: int
    m: int

    def __post_init__(self):
        if int(self.n) != self.n or int(self.m) != self.m:
            raise ValueError("dimensions must be integers")
        if self.n < 1 or self.m < 1:
            raise ValueError(f"dimensions must be positive, got n={self.n}, m={self.m}")

    @property
    def beta(self):
        return self.n / self.m

    @property
    def rank(self):
        return min(self.n, self.m)


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues of ``A^H A`` (length N, descending) plus the transmit SNR."""

    eigenvalues: np.ndarray
    snr: float
    dims: SystemDims

    def __post_init__(self):
        ev = _frozen(self.eigenvalues)
        if ev.ndim != 1 or ev.size != self.dims.n:
            raise ValueError(f"expected {self.dims.n} eigenvalues, got shape {ev.shape}")
        if np.any(ev < 0) or not np.all(np.isfinite(ev)):
            raise ValueError("eigenvalues must be finite and nonnegative")
        if not self.snr > 0:
            raise ValueError(f"snr must be positive, got {self.snr}")
        object.__setattr__(self, "eigenvalues", ev)
        object.__setattr__(self, "snr", float(self.snr))

    @property
    def n(self):
        return self.dims.n

    @property
    def n_zero(self):
        return int(np.count_nonzero(self.eigenvalues == 0))

    def with_snr(self, snr):
        return Spectrum(self.eigenvalues, snr, self.dims)

    def condition_number(self):
        nz = self.eigenvalues[self.eigenvalues > 0]
        return float(np.sqrt(nz.max() / nz.min()))


@dataclass(frozen=True)
class SensingMatrix:
    """``A = U^H Sigma V`` with U (M x M) and V (N x N) unitary."""

    u: np.ndarray
    singulars: np.ndarray
    v: np.ndarray
    assembled: np.ndarray = field(repr=False)

    @property
    def dims(self):
        return SystemDims(self.v.shape[0], self.u.shape[0])

    @property
    def shape(self):
        return self.assembled.shape


def make_geometric_singulars(dims, kappa):
    """Singular values with constant ratio ``d_i / d_{i+1} = kappa**(1/T)``.

    Normalized so that ``sum(d**2) == N``; ``T = min(M, N)``.
    """
    if not np.isfinite(kappa) or kappa < 1:
        raise ValueError(f"kappa must be >= 1, got {kappa}")
    t = dims.rank
    ratio = kappa ** (1.0 / t)
    shape = ratio ** -np.arange(t, dtype=float)
    scale = np.sqrt(dims.n / np.sum(shape**2))
    return scale * shape


def sample_haar_matrix(dim, rng=None):
    """Haar-distributed ``dim x dim`` unitary matrix.

    QR of an IID complex Gaussian matrix, with columns rotated by the phase of
    R's diagonal so that the factorization is unique.
    """
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    rng = as_generator(rng)
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def _sigma_matrix(singulars, dims):
    sigma = np.zeros((dims.m, dims.n))
    t = dims.rank
    sigma[np.arange(t), np.arange(t)] = singulars
    return sigma


def assemble_matrix(singulars, dims, rng=None, deterministic=False):
    """Build ``A = U^H Sigma V`` with independent Haar U and V.

    With ``deterministic=True`` both unitary factors are the identity.
    """
    singulars = np.asarray(singulars, dtype=float)
    if singulars.shape != (dims.rank,):
        raise ValueError(
            f"need {dims.rank} singular values for an {dims.m}x{dims.n} matrix, got {singulars.shape}"
        )
    if np.any(singulars < 0):
        raise ValueError("singular values must be nonnegative")
    if deterministic:
        u = np.eye(dims.m, dtype=complex)
        v = np.eye(dims.n, dtype=complex)
    else:
        rng = as_generator(rng)
        u = sample_haar_matrix(dims.m, rng)
        v = sample_haar_matrix(dims.n, rng)
    a = u.conj().T @ (_sigma_matrix(singulars, dims) @ v)
    return SensingMatrix(_frozen(u, complex), _frozen(singulars), _frozen(v, complex), _frozen(a, complex))


def iid_gaussian_matrix(dims, rng=None):
    """IID CN(0, 1/M) matrix, returned with its SVD factors."""
    rng = as_generator(rng)
    a = (rng.standard_normal((dims.m, dims.n)) + 1j * rng.standard_normal((dims.m, dims.n))) / np.sqrt(
        2 * dims.m
    )
    w, s, vh = np.linalg.svd(a, full_matrices=True)
    return SensingMatrix(_frozen(w.conj().T, complex), _frozen(s), _frozen(vh, complex), _frozen(a, complex))


def spectrum_of(source, snr, dims=None):
    """Spectrum from a SensingMatrix or from a vector of singular values.

    Eigenvalues are ``d_i**2`` padded with ``max(N - M, 0)`` zeros, sorted
    in descending order.  ``dims`` is required for a bare singular-value
    vector.
    """
    if not snr > 0:
        raise ValueError(f"snr must be positive, got {snr}")
    if isinstance(source, SensingMatrix):
        singulars, dims = source.singulars, source.dims
    else:
        singulars = np.asarray(source, dtype=float)
        if dims is None:
            dims = SystemDims(singulars.size, singulars.size)
        if singulars.size != dims.rank:
            raise ValueError(f"need {dims.rank} singular values, got {singulars.size}")
    ev = np.zeros(dims.n)
    ev[: dims.rank] = np.sort(np.asarray(singulars) ** 2)[::-1]
    return Spectrum(ev, snr, dims)


def geometric_spectrum(n, m, kappa, snr):
    """Deterministic spectrum of the geometric-decay recipe."""
    dims = SystemDims(n, m)
    return spectrum_of(make_geometric_singulars(dims, kappa), snr, dims)


def identity_spectrum(n, snr):
    return Spectrum(np.ones(n), snr, SystemDims(n, n))


# -- file formats ------------------------------------------------------------


def write_matrix(path, a):
    """Binary export: magic, little-endian u32 M, u32 N, row-major (f64 re, f64 im) pairs."""
    a = np.asarray(a.assembled if isinstance(a, SensingMatrix) else a)
    m, n = a.shape
    with open(path, "wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(struct.pack("<II", m, n))
        fh.write(np.ascontiguousarray(a, dtype="<c16").tobytes())


def read_matrix(path):
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MATRIX_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        m, n = struct.unpack("<II", fh.read(8))
        data = fh.read()
    if len(data) != 16 * m * n:
        raise ValueError(f"{path}: expected {16 * m * n} payload bytes, found {len(data)}")
    return np.frombuffer(data, dtype="<c16").reshape(m, n).astype(complex)


def write_spectrum_csv(path, spectrum):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "eigenvalue"])
        for i, lam in enumerate(spectrum.eigenvalues):
            w.writerow([i, repr(float(lam))])
