"""Regularized Taylor models and the step computation.

The model is ``m(s) = -dT(s) + sigma / (p+1)! ||s||^(p+1)`` where ``dT`` is the
Taylor decrement built from (possibly inexact) derivatives.  A step is any
``s`` with ``m(s) <= 0`` whose model measures fall below ``theta eps_j / j!``.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial
from typing import Sequence

import numpy as np

from .criticality import (MeasureResult, phi_order1, phi_order2, quadratic_decrement,
                          solve_trs, thresholds)
from .tensor_taylor import (DerivativeBundle, regularizer_derivative, shifted_derivative,
                            taylor_decrement)

ARMIJO = 1e-4
BACKTRACK = 0.5
DEFAULT_INNER_BUDGET = 200
ROUNDING = 64 * np.finfo(float).eps


class InnerSolverError(RuntimeError):
    """The inner solver stopped before the step tests passed.

    ``best`` holds the last iterate, ``phi`` the model measures there.
    """

    def __init__(self, message: str, best: np.ndarray, phi: Sequence[float], iterations: int):
        super().__init__(message)
        self.best = best
        self.phi = list(phi)
        self.iterations = iterations


@dataclass(frozen=True, eq=False)
class RegModel:
    bundle: DerivativeBundle
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    @property
    def p(self) -> int:
        return self.bundle.degree

    @property
    def weight(self) -> float:
        """Coefficient ``sigma / (p+1)!`` of ``||s||^(p+1)``."""
        return self.sigma / factorial(self.p + 1)


@dataclass(frozen=True, eq=False)
class StepResult:
    step: np.ndarray
    radii: tuple
    model_decrement: float
    phi_bar: list
    inner_iterations: int
    model_value: float


def model_value(model: RegModel, s) -> float:
    s = np.asarray(s, dtype=float)
    return -taylor_decrement(model.bundle, s) + model.weight * regularizer_derivative(s, model.p, 0)


def model_shifted_bundle(model: RegModel, s, j: int) -> DerivativeBundle:
    """Derivatives of orders ``1..j`` of the model at ``s``.

    The Taylor decrement of the returned bundle in ``d`` is the decrease of the
    model's degree-``j`` expansion around ``s``.
    """
    if not 1 <= j <= 2:
        raise ValueError(f"j must be 1 or 2, got {j}")
    s = np.asarray(s, dtype=float)
    p = model.p
    tensors = []
    for order in range(1, j + 1):
        if order <= p:
            t = shifted_derivative(model.bundle, s, order)
        else:
            t = np.zeros((s.size,) * order)
        tensors.append(t + model.weight * regularizer_derivative(s, p, order))
    return DerivativeBundle(model.bundle.point + s, tuple(tensors), exact=model.bundle.exact)


def _measures_from(g, H, radii, q) -> list[MeasureResult]:
    out = [phi_order1(g, radii[0])]
    if q == 2:
        out.append(phi_order2(g, H, radii[1]))
    return out


def model_criticality(model: RegModel, s, radii: Sequence[float], q: int) -> list[MeasureResult]:
    shifted = model_shifted_bundle(model, s, q)
    H = shifted.tensors[1] if q == 2 else None
    return _measures_from(shifted.tensors[0], H, radii, q)


def compute_step(model: RegModel, epsilon: Sequence[float], theta: float, q: int,
                 inner_budget: int = DEFAULT_INNER_BUDGET) -> StepResult:
    """Approximately minimize the model from ``s = 0``.

    Each inner iteration takes a trust-region-subproblem direction on the
    model's local quadratic (which follows negative curvature when present)
    and backtracks along it until an Armijo decrease is obtained.  Once the
    predicted decrease drops below the rounding level of ``m``, full steps are
    accepted as long as they reduce the model gradient.  The step tests are
    checked at every iterate, including the starting point.

    Raises
    ------
    InnerSolverError
        If ``inner_budget`` iterations pass without satisfying the tests, or
        no further progress on the model is possible.
    """
    if q not in (1, 2):
        raise ValueError(f"q must be 1 or 2, got {q}")
    radii = (1.0,) * q
    limits = [theta * t for t in thresholds(epsilon, radii, q)]
    n = model.bundle.dim
    s = np.zeros(n)
    m_s = 0.0
    radius = 1.0
    phis: list[MeasureResult] = []
    for it in range(inner_budget + 1):
        g, H = model_shifted_bundle(model, s, 2).tensors
        phis = _measures_from(g, H, radii, q)
        if all(m.value <= lim for m, lim in zip(phis, limits)):
            decrement = -m_s + model.weight * regularizer_derivative(s, model.p, 0)
            return StepResult(s, radii, float(decrement), phis, it, m_s)
        if it == inner_budget:
            break
        d, _ = solve_trs(g, H, radius)
        if not quadratic_decrement(g, H, d) > 0.0:
            raise InnerSolverError("no descent direction although step tests fail",
                                   s, [m.value for m in phis], it)
        alpha = 1.0
        if quadratic_decrement(g, H, d) <= ROUNDING * max(1.0, abs(m_s)):
            # model values cannot resolve the decrease; accept if the gradient shrinks
            trial = s + d
            g_trial = model_shifted_bundle(model, trial, 1).tensors[0]
            if not np.linalg.norm(g_trial) < np.linalg.norm(g):
                raise InnerSolverError("model decrease below rounding level",
                                       s, [m.value for m in phis], it)
            s, m_s = trial, model_value(model, trial)
            continue
        while True:
            trial = s + alpha * d
            m_trial = model_value(model, trial)
            if m_trial <= m_s - ARMIJO * quadratic_decrement(g, H, alpha * d):
                break
            alpha *= BACKTRACK
            if alpha < 1e-16:
                raise InnerSolverError("line search failed", s, [m.value for m in phis], it)
        dnorm = float(np.linalg.norm(d))
        s, m_s = trial, m_trial
        if alpha == 1.0 and dnorm >= 0.99 * radius:
            radius *= 2.0
        elif alpha < 1.0:
            radius = max(alpha * dnorm, 1e-12)
    raise InnerSolverError(f"inner budget of {inner_budget} iterations exhausted",
                           s, [m.value for m in phis], inner_budget)
