"""Bit <-> symbol mappings for BPSK and QPSK with exact per-rail LLRs.

Bit 0 maps to +1 on a rail.  QPSK carries bits ``(2k, 2k+1)`` on the real
and imaginary rails of symbol ``k`` at amplitude ``1/sqrt(2)``.
"""
import numpy as np

_S = 1.0 / np.sqrt(2.0)


def bits_per_symbol(mapping):
    name = mapping if isinstance(mapping, str) else mapping.name
    if name == "bpsk":
        return 1
    if name == "qpsk":
        return 2
    raise ValueError(f"coded transmission supports bpsk and qpsk, not {name!r}")


def _name(mapping):
    return mapping if isinstance(mapping, str) else mapping.name


def bits_to_symbols(bits, mapping):
    s = 1.0 - 2.0 * np.asarray(bits, dtype=float)
    if _name(mapping) == "bpsk":
        return s.astype(complex)
    bits_per_symbol(mapping)
    return _S * (s[..., 0::2] + 1j * s[..., 1::2])


def channel_llrs(u, v, mapping):
    """Bit LLRs for ``u = x + CN(0, v)``."""
    u = np.asarray(u)
    if _name(mapping) == "bpsk":
        return 4.0 * u.real / v
    bits_per_symbol(mapping)
    out = np.empty(u.shape[:-1] + (2 * u.shape[-1],))
    scale = 4.0 * _S / v
    out[..., 0::2] = scale * u.real
    out[..., 1::2] = scale * u.imag
    return out


def symbol_posteriors(bit_means, mapping):
    """Symbol means and per-symbol variances from +-1 bit posterior means."""
    m = np.asarray(bit_means, dtype=float)
    if _name(mapping) == "bpsk":
        return m.astype(complex), 1.0 - m * m
    bits_per_symbol(mapping)
    mr, mi = m[..., 0::2], m[..., 1::2]
    return _S * (mr + 1j * mi), 0.5 * ((1.0 - mr * mr) + (1.0 - mi * mi))
