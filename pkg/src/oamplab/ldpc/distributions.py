"""Edge-perspective degree distributions and the shipped presets."""
from dataclasses import dataclass
import warnings

import numpy as np


def _as_map(d):
    return {int(k): float(v) for k, v in sorted(d.items()) if float(v) > 0}


@dataclass(frozen=True)
class DegreeDistribution:
    """``variable_edges[i]`` / ``check_edges[j]``: fraction of edges at degree-i/j nodes."""

    variable_edges: dict
    check_edges: dict
    name: str = ""

    def __post_init__(self):
        lam, eta = _as_map(self.variable_edges), _as_map(self.check_edges)
        for side, d in (("variable", lam), ("check", eta)):
            if not d:
                raise ValueError(f"{side} distribution is empty")
            if min(d) < 1:
                raise ValueError(f"{side} degrees must be >= 1")
            if abs(sum(d.values()) - 1) > 1e-9:
                raise ValueError(f"{side} edge fractions sum to {sum(d.values())}, not 1")
        object.__setattr__(self, "variable_edges", lam)
        object.__setattr__(self, "check_edges", eta)

    @classmethod
    def from_fractions(cls, variable_edges, check_edges, name="", normalize=False):
        """Build from possibly rounded fractions; ``normalize`` rescales each side to sum 1."""
        lam, eta = _as_map(variable_edges), _as_map(check_edges)
        if normalize:
            for d in (lam, eta):
                total = sum(d.values())
                if abs(total - 1) > 1e-9:
                    if abs(total - 1) > 1e-2:
                        raise ValueError(f"fractions sum to {total}; refusing to rescale")
                    warnings.warn(f"{name or 'distribution'}: rescaling fractions that sum to {total:.6f}")
                    for k in d:
                        d[k] /= total
        return cls(lam, eta, name)

    @property
    def inv_mean_variable_degree(self):
        """``sum(lambda_i / i)`` = variable nodes per edge."""
        return sum(f / i for i, f in self.variable_edges.items())

    @property
    def inv_mean_check_degree(self):
        return sum(f / j for j, f in self.check_edges.items())

    @property
    def design_rate(self):
        return 1.0 - self.inv_mean_check_degree / self.inv_mean_variable_degree

    def variable_node_fractions(self):
        """Node-perspective fractions ``(lambda_i/i) / sum(lambda_j/j)``."""
        s = self.inv_mean_variable_degree
        return {i: (f / i) / s for i, f in self.variable_edges.items()}

    def check_node_fractions(self):
        s = self.inv_mean_check_degree
        return {j: (f / j) / s for j, f in self.check_edges.items()}


# Edge-perspective fractions as tabulated for the six optimized codes.  Three
# variable sides are rounded to 4 decimals and miss 1 by up to 3e-4; they are
# rescaled on load.
_TABLE = {
    "table1-k10-b1": (
        {2: 0.3707, 3: 0.2329, 9: 0.1815, 10: 0.0002, 27: 0.0003, 28: 0.1516, 29: 0.0620, 30: 0.0005},
        {7: 1.0},
        0.5087,
    ),
    "table1-k10-b1.5": (
        {2: 0.4233, 3: 0.0677, 15: 0.0053, 16: 0.2586, 80: 0.1426, 200: 0.1025},
        {8: 1.0},
        0.5062,
    ),
    "table1-k50-b1": (
        {2: 0.4624, 3: 0.0028, 14: 0.1924, 15: 0.0743, 70: 0.1649, 150: 0.0322, 200: 0.0711},
        {8: 1.0},
        0.5075,
    ),
    "table1-k50-b1.5": (
        {2: 0.5082, 21: 0.3238, 22: 0.0002, 130: 0.0001, 140: 0.0005, 150: 0.0018, 200: 0.1652},
        {7: 1.0},
        0.4721,
    ),
    "table1-turbo-k10": (
        {2: 0.44, 10: 0.0577, 11: 0.2256, 50: 0.0401, 60: 0.1665, 250: 0.0298, 300: 0.0403},
        {8: 1.0},
        0.5008,
    ),
    "table1-turbo-k50": (
        {2: 0.3377, 12: 0.0481, 13: 0.2288, 60: 0.1012, 70: 0.1454, 300: 0.1388},
        {6: 0.2, 12: 0.8},
        0.48635,
    ),
    "regular-3-6": ({3: 1.0}, {6: 1.0}, 0.5),
}

# (kappa, beta, tunnel-open snr in dB, capacity snr in dB) for the OAMP-targeted presets
PRESET_OPERATING_POINTS = {
    "table1-k10-b1": (10.0, 1.0, 1.7, 1.55),
    "table1-k10-b1.5": (10.0, 1.5, 2.87, 2.85),
    "table1-k50-b1": (50.0, 1.0, 3.2, 3.15),
    "table1-k50-b1.5": (50.0, 1.5, 5.2, 5.03),
}


def preset_names():
    return sorted(_TABLE)


def preset(name):
    try:
        lam, eta, _ = _TABLE[name]
    except KeyError:
        raise ValueError(f"unknown code preset {name!r}; choose from {preset_names()}") from None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return DegreeDistribution.from_fractions(lam, eta, name, normalize=True)


def tabulated_rate(name):
    return _TABLE[name][2]
