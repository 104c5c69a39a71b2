"""LDPC codes: degree-distribution presets, graph construction, sum-product
decoding, decoder transfer curves and the curve-matching test."""
from .code import LdpcCode, build_code, repetition_code
from .curve import (
    DecoderCurve,
    MatchingReport,
    check_matching,
    matching_threshold,
    repetition_curve_exact,
    threshold_with_error_bars,
    trace_decoder_curve,
)
from .decoder import DecodeResult, spa_decode
from .distributions import DegreeDistribution, PRESET_OPERATING_POINTS, preset, preset_names

__all__ = [
    "DecodeResult",
    "DecoderCurve",
    "DegreeDistribution",
    "LdpcCode",
    "MatchingReport",
    "PRESET_OPERATING_POINTS",
    "build_code",
    "check_matching",
    "matching_threshold",
    "preset",
    "preset_names",
    "repetition_code",
    "repetition_curve_exact",
    "spa_decode",
    "threshold_with_error_bars",
    "trace_decoder_curve",
]
