"""Optimality measures: the largest Taylor decrease achievable in a ball.

For ``j = 1`` the measure is ``||g|| delta``.  For ``j = 2`` it is the optimal
value of a trust-region subproblem, solved here through an eigendecomposition
and a secular equation, with explicit handling of the hard case.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache
from math import factorial
from typing import Sequence

import numpy as np
from scipy import optimize, stats

from .tensor_taylor import DerivativeBundle

# relative threshold for "this eigenvalue equals the leftmost one" and
# "this gradient component vanishes" in the hard case
HARD_CASE_TOL = 1e-12


class NumericalError(RuntimeError):
    """An eigensolver or root finder failed; carries the offending data."""


@dataclass(frozen=True, eq=False)
class MeasureResult:
    value: float
    direction: np.ndarray


def phi_order1(g, delta: float) -> MeasureResult:
    g = np.atleast_1d(np.asarray(g, dtype=float))
    gnorm = float(np.linalg.norm(g))
    if gnorm == 0.0 or delta == 0.0:
        return MeasureResult(0.0, np.zeros_like(g))
    return MeasureResult(gnorm * delta, -delta * g / gnorm)


def _lexicographic_sign(v: np.ndarray) -> np.ndarray:
    """Flip ``v`` so that its first non-negligible entry is positive."""
    tol = HARD_CASE_TOL * max(1.0, float(np.max(np.abs(v))))
    for x in v:
        if abs(x) > tol:
            return v if x > 0 else -v
    return v


def solve_trs(g, H, radius: float) -> tuple[np.ndarray, float]:
    """Globally minimize ``g.d + d.H.d / 2`` subject to ``||d|| <= radius``.

    Returns
    -------
    d : ndarray
        A global minimizer.  In the hard case the eigenvector component is
        signed so that ``d`` is the lexicographically largest of the two
        symmetric candidates.
    lam : float
        The Lagrange multiplier, ``(H + lam I) d = -g``.
    """
    g = np.atleast_1d(np.asarray(g, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    n = g.size
    if radius <= 0.0:
        return np.zeros(n), 0.0
    try:
        evals, Q = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigh failed on H={H!r}: {exc}") from exc
    if not np.all(np.isfinite(evals)):
        raise NumericalError(f"non-finite eigenvalues {evals} for H={H!r}")
    gh = Q.T @ g
    gnorm = float(np.linalg.norm(g))
    lmin = float(evals[0])
    scale = max(1.0, float(np.max(np.abs(evals))))

    if lmin > HARD_CASE_TOL * scale:
        d_hat = -gh / evals
        if np.linalg.norm(d_hat) <= radius:
            return Q @ d_hat, 0.0

    lam_floor = max(0.0, -lmin)
    shifted = evals + lam_floor
    degenerate = shifted <= HARD_CASE_TOL * scale
    if np.any(degenerate) and np.all(np.abs(gh[degenerate]) <= HARD_CASE_TOL * max(1.0, gnorm)):
        gh = np.where(degenerate, 0.0, gh)
        d_hat = np.zeros(n)
        d_hat[~degenerate] = -gh[~degenerate] / shifted[~degenerate]
        dnorm = float(np.linalg.norm(d_hat))
        if dnorm <= radius:
            if lam_floor == 0.0:
                return Q @ d_hat, 0.0
            v = _lexicographic_sign(Q[:, int(np.argmax(degenerate))])
            tau = np.sqrt(max(radius ** 2 - dnorm ** 2, 0.0))
            return Q @ d_hat + tau * v, lam_floor

    if gnorm == 0.0:
        # only reachable when lmin is (numerically) zero: any d with H d = 0 works
        return np.zeros(n), lam_floor

    def secular(lam):
        with np.errstate(divide="ignore", invalid="ignore"):
            norm = np.linalg.norm(gh / (evals + lam))
        return 1.0 / radius - (0.0 if not np.isfinite(norm) else 1.0 / norm)

    lo = lam_floor
    # ||d(lam)|| <= ||g|| / (lam + lmin), so the root lies below gnorm/radius - lmin
    hi = max(gnorm / radius - lmin, lo) + 1e-8 * (gnorm / radius + scale)
    while secular(hi) > 0.0:
        hi *= 2.0
    if secular(lo) <= 0.0:
        lam = lo
    else:
        try:
            lam = optimize.brentq(secular, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps,
                                  maxiter=500)
        except (RuntimeError, ValueError) as exc:
            raise NumericalError(f"secular equation failed for g={g!r}, H={H!r}: {exc}") from exc
    with np.errstate(divide="ignore", invalid="ignore"):
        d_hat = -gh / (evals + lam)
    d_hat = np.where(np.isfinite(d_hat), d_hat, 0.0)
    d = Q @ d_hat
    dnorm = float(np.linalg.norm(d))
    if dnorm > radius:
        d *= radius / dnorm
    return d, float(lam)


def quadratic_decrement(g, H, d) -> float:
    return float(-(g @ d + 0.5 * d @ H @ d))


def phi_order2(g, H, delta: float) -> MeasureResult:
    g = np.atleast_1d(np.asarray(g, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    if delta == 0.0:
        return MeasureResult(0.0, np.zeros_like(g))
    d, _ = solve_trs(g, H, delta)
    return MeasureResult(max(0.0, quadratic_decrement(g, H, d)), d)


def measures(bundle: DerivativeBundle, radii: Sequence[float], q: int) -> list[MeasureResult]:
    """Measures ``phi_j`` for ``j = 1..q`` of the bundle's Taylor polynomial."""
    if q not in (1, 2):
        raise ValueError(f"q must be 1 or 2, got {q}")
    if bundle.degree < q:
        raise ValueError(f"bundle degree {bundle.degree} < q = {q}")
    out = [phi_order1(bundle.tensors[0], radii[0])]
    if q == 2:
        out.append(phi_order2(bundle.tensors[0], bundle.tensors[1], radii[1]))
    return out


def thresholds(epsilon: Sequence[float], radii: Sequence[float], q: int) -> list[float]:
    """Right-hand sides ``eps_j delta_j^j / j!``."""
    return [epsilon[j - 1] * radii[j - 1] ** j / factorial(j) for j in range(1, q + 1)]


def termination_test(exact_bundle: DerivativeBundle, radii: Sequence[float],
                     epsilon: Sequence[float], q: int) -> bool:
    """True when the point is a q-th order (epsilon, delta)-approximate minimizer."""
    phis = measures(exact_bundle, radii, q)
    return all(m.value <= t for m, t in zip(phis, thresholds(epsilon, radii, q)))


def batch_decrement(bundle: DerivativeBundle, points: np.ndarray) -> np.ndarray:
    """Taylor decrement at every row of ``points``."""
    total = np.zeros(points.shape[0])
    for order, t in enumerate(bundle.tensors, start=1):
        if order == 1:
            vals = points @ t
        elif order == 2:
            vals = np.einsum("ai,ij,aj->a", points, t, points)
        else:
            vals = np.einsum("ijk,ai,aj,ak->a", t, points, points, points)
        total += vals / factorial(order)
    return -total


@lru_cache(maxsize=32)
def _probe_points(n: int, samples: int, seed: int) -> np.ndarray:
    """Quasi-random points of the unit ball: half filling it, half on its sphere, plus 0."""
    half = max(samples // 2, 1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        u_ball = stats.qmc.Halton(d=n, scramble=True, seed=seed).random(half)
        u_sphere = stats.qmc.Halton(d=n, scramble=True, seed=seed + 1).random(half)
    ball = 2.0 * u_ball - 1.0
    ball = ball[np.linalg.norm(ball, axis=1) <= 1.0]
    z = stats.norm.ppf(np.clip(u_sphere, 1e-12, 1 - 1e-12))
    z_norm = np.linalg.norm(z, axis=1)
    sphere = z[z_norm > 0] / z_norm[z_norm > 0, None]
    points = np.vstack([np.zeros((1, n)), ball, sphere])
    points.flags.writeable = False
    return points


def phi_bruteforce(bundle: DerivativeBundle, delta: float, samples: int = 200_000,
                   seed: int = 0) -> float:
    """Lower bound on the measure by quasi-random search of the ``delta``-ball.

    Half of the points fill the ball, half lie on its boundary sphere; the
    origin is always included, so the result is non-negative.
    """
    if delta <= 0.0:
        return 0.0
    points = delta * _probe_points(bundle.dim, samples, seed)
    return float(max(np.max(batch_decrement(bundle, points)), 0.0))
