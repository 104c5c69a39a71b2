"""Deterministic state evolution for OAMP with an analytic prior."""
from dataclasses import dataclass
import warnings

import numpy as np
from scipy import optimize

from . import le
from .denoiser import phi_se

RHO_GRID = np.logspace(-6, 4, 1000)
ROOT_XTOL = 1e-12


class NoFixedPoint(ArithmeticError):
    pass


class MultipleFixedPoints(UserWarning):
    pass


@dataclass(frozen=True)
class SeStep:
    """One SE iteration: LE output SINR, NLE posterior MSE and extrinsic variance."""

    rho: float
    v: float
    v_perp: float


@dataclass(frozen=True)
class SeTrajectory:
    steps: tuple
    converged: bool
    flagged: bool = False

    def as_array(self):
        return np.array([(s.rho, s.v, s.v_perp) for s in self.steps])


@dataclass(frozen=True)
class FixedPoint:
    rho_star: float
    v_star: float
    v_perp_star: float
    unique: bool
    all_roots: tuple


def se_trajectory(spectrum, prior, max_iters=100, tol=1e-10):
    """Iterate the SE recursion from ``v_perp = 1`` (all-zero initial estimate).

    Row ``t`` holds ``rho_t`` (from ``v_perp_t``), ``v_{t+1} = phi(rho_t)``
    and ``v_perp_{t+1} = (1/v_{t+1} - rho_t)^-1``.
    """
    v_perp = 1.0
    steps = []
    for _ in range(max_iters):
        rho = le.rho_of_s(spectrum, v_perp)
        v = phi_se(prior, rho)
        prec = 1.0 / v - rho if v > 0 else np.inf
        if not prec > 0 or not np.isfinite(rho):
            steps.append(SeStep(rho, v, np.nan))
            return SeTrajectory(tuple(steps), False, flagged=True)
        steps.append(SeStep(rho, v, 1.0 / prec))
        if v == 0:
            return SeTrajectory(tuple(steps), True)
        if len(steps) > 1 and abs(steps[-2].v - v) <= tol * steps[-2].v:
            return SeTrajectory(tuple(steps), True)
        v_perp = 1.0 / prec
    return SeTrajectory(tuple(steps), False)


def _gap(spectrum, prior, rho):
    """``phi(rho) - eta_inverse(rho)``; the SE moves right where negative."""
    return phi_se(prior, rho) - le.eta_inverse(spectrum, rho)


def find_fixed_point(spectrum, prior, grid=RHO_GRID):
    """All crossings of ``phi`` with ``eta_inverse`` on a log grid.

    The reported ``(rho*, v*)`` is the first crossing to the right of the
    initial SINR ``rho_0 = 1/gamma_hat(1) - 1``, which the SE reaches from
    ``v_perp = 1``.
    """
    grid = np.asarray(grid, dtype=float)
    rho0 = le.rho_of_s(spectrum, 1.0)
    grid = np.union1d(grid, [rho0])
    phi = np.array([phi_se(prior, r) for r in grid])
    g = phi - le.eta_inverse(spectrum, grid)
    neg = g < 0
    roots = []
    if not neg[0]:
        roots.append(float(grid[0]))
    for i in np.flatnonzero(neg[:-1] != neg[1:]):
        a, b = grid[i], grid[i + 1]
        if g[i + 1] == 0:
            roots.append(float(b))
            continue
        r = optimize.bisect(lambda x: _gap(spectrum, prior, x), a, b, xtol=ROOT_XTOL * a, rtol=1e-15, maxiter=400)
        roots.append(float(r))
    if not roots:
        raise NoFixedPoint("phi_se never crosses the LE curve on the search grid")
    reachable = [r for r in roots if r >= rho0 * (1 - 1e-9)]
    rho_star = reachable[0] if reachable else roots[-1]
    v_star = phi_se(prior, rho_star)
    all_roots = tuple((r, phi_se(prior, r)) for r in roots)
    return FixedPoint(rho_star, v_star, 1.0 / (1.0 / v_star - rho_star), len(roots) == 1, all_roots)


def uncoded_mmse(spectrum, prior, fixed_point=None):
    """MMSE of the uncoded system: ``phi(rho*)`` at the SE fixed point."""
    fp = fixed_point or find_fixed_point(spectrum, prior)
    if not fp.unique:
        warnings.warn(f"{len(fp.all_roots)} SE fixed points; reporting the SE-reachable one", MultipleFixedPoints)
    return fp.v_star
