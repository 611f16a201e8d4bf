"""Test problems, inexact function values and randomly perturbed derivatives.

Problems expose exact derivatives up to order 3.  Inexactness is layered on
top: function values within a deterministic absolute tolerance, derivative
bundles perturbed according to a :class:`NoiseSpec`.

Lipschitz constants are valid on the box ``||x||_inf <= 10``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from math import ceil
from pathlib import Path
from typing import Sequence

import numpy as np

from .tensor_taylor import DerivativeBundle

NOISE_KINDS = ("none", "gaussian_relative", "adversarial_sign", "subsample")
CALIBRATION_SAMPLES = 100_000
CALIBRATION_SEED = 20_211_019
STUDY_BOX = 10.0


class ExactProblem:
    """Smooth objective with analytic derivatives of orders 1..3."""

    name = "problem"
    degree_available = 3

    def __init__(self, dim: int, f_low: float, lipschitz: dict):
        self.dim = int(dim)
        self.f_low = float(f_low)
        self._lipschitz = dict(lipschitz)

    def lipschitz(self, p: int) -> float:
        """A valid Lipschitz constant of the ``p``-th derivative on the study box."""
        return self._lipschitz[p]

    def value(self, x) -> float:
        raise NotImplementedError

    def derivative(self, x, order: int) -> np.ndarray:
        raise NotImplementedError

    def bundle(self, x, p: int) -> DerivativeBundle:
        x = np.asarray(x, dtype=float)
        return DerivativeBundle(x, tuple(self.derivative(x, l) for l in range(1, p + 1)))

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"


class ConvexQuadratic(ExactProblem):
    """``f(x) = 0.5 sum_i a_i x_i^2`` with positive curvatures ``a`` (default all ones)."""

    name = "quadratic"

    def __init__(self, dim: int = 2, curvatures: Sequence[float] | None = None):
        a = np.ones(dim) if curvatures is None else np.asarray(curvatures, dtype=float)
        if a.shape != (dim,) or np.any(a <= 0):
            raise ValueError("curvatures must be a positive vector of length dim")
        self.a = a
        super().__init__(dim, 0.0, {1: float(a.max()), 2: 0.0, 3: 0.0})

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return float(0.5 * np.sum(self.a * x * x))

    def derivative(self, x, order):
        x = np.asarray(x, dtype=float)
        if order == 1:
            return self.a * x
        if order == 2:
            return np.diag(self.a)
        return np.zeros((self.dim,) * order)


class ExtendedRosenbrock(ExactProblem):
    """Sum over pairs of ``100 (x_{2i} - x_{2i-1}^2)^2 + (1 - x_{2i-1})^2``."""

    name = "rosenbrock"

    def __init__(self, dim: int = 2):
        if dim % 2:
            raise ValueError("extended Rosenbrock needs an even dimension")
        # |T[v]^3| <= 24000 sum|v_u|^3 + 1200 sum v_u^2 |v_w| on the box
        super().__init__(dim, 0.0, {1: 128_002.0, 2: 25_200.0, 3: 2400.0})

    def _split(self, x):
        x = np.asarray(x, dtype=float)
        return x[0::2], x[1::2]

    def value(self, x):
        u, w = self._split(x)
        return float(np.sum(100.0 * (w - u ** 2) ** 2 + (1.0 - u) ** 2))

    def derivative(self, x, order):
        u, w = self._split(x)
        n = self.dim
        iu, iw = np.arange(0, n, 2), np.arange(1, n, 2)
        if order == 1:
            g = np.empty(n)
            g[iu] = -400.0 * u * (w - u ** 2) - 2.0 * (1.0 - u)
            g[iw] = 200.0 * (w - u ** 2)
            return g
        if order == 2:
            H = np.zeros((n, n))
            H[iu, iu] = 1200.0 * u ** 2 - 400.0 * w + 2.0
            H[iu, iw] = H[iw, iu] = -400.0 * u
            H[iw, iw] = 200.0
            return H
        if order == 3:
            T = np.zeros((n, n, n))
            T[iu, iu, iu] = 2400.0 * u
            T[iu, iu, iw] = T[iu, iw, iu] = T[iw, iu, iu] = -400.0
            return T
        raise ValueError(f"order {order} not available")


class SeparableQuartic(ExactProblem):
    """``sum_i x_i^4 / 4 - x_i^2 / 2``; minimizers at ``x_i = +-1`` with ``f = -n/4``."""

    name = "quartic"

    def __init__(self, dim: int = 4):
        super().__init__(dim, -dim / 4.0, {1: 299.0, 2: 60.0, 3: 6.0})

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return float(np.sum(x ** 4 / 4.0 - x ** 2 / 2.0))

    def derivative(self, x, order):
        x = np.asarray(x, dtype=float)
        n = self.dim
        if order == 1:
            return x ** 3 - x
        if order == 2:
            return np.diag(3.0 * x ** 2 - 1.0)
        if order == 3:
            T = np.zeros((n, n, n))
            idx = np.arange(n)
            T[idx, idx, idx] = 6.0 * x
            return T
        raise ValueError(f"order {order} not available")


class ScalarCubic(ExactProblem):
    """``f(x) = x^3 / 6`` in one variable; ``f_low`` refers to the study box."""

    name = "cubic"

    def __init__(self, dim: int = 1):
        if dim != 1:
            raise ValueError("the cubic example is one-dimensional")
        super().__init__(1, -STUDY_BOX ** 3 / 6.0, {1: STUDY_BOX, 2: 1.0, 3: 0.0})

    def value(self, x):
        return float(np.asarray(x, dtype=float)[0] ** 3 / 6.0)

    def derivative(self, x, order):
        t = float(np.asarray(x, dtype=float)[0])
        if order == 1:
            return np.array([t * t / 2.0])
        if order == 2:
            return np.array([[t]])
        if order == 3:
            return np.ones((1, 1, 1))
        raise ValueError(f"order {order} not available")


class FiniteSumProblem(ExactProblem):
    """Average of ``m`` component functions; supports batch derivatives."""

    n_components: int

    def batch_derivative(self, x, order: int, idx: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def derivative(self, x, order):
        return self.batch_derivative(x, order, np.arange(self.n_components))


class LeastSquares(FiniteSumProblem):
    """``(1/2m) sum_i (a_i . x - y_i)^2`` over the rows ``[a_i, y_i]`` of ``data``."""

    name = "least_squares"

    def __init__(self, dim: int | None = None, data: np.ndarray | None = None, seed: int = 7):
        if data is None:
            dim = 4 if dim is None else dim
            rng = np.random.default_rng(seed)
            A = rng.standard_normal((100, dim))
            y = A @ np.linspace(-1.0, 1.0, dim) + 0.1 * rng.standard_normal(100)
        else:
            data = np.atleast_2d(np.asarray(data, dtype=float))
            A, y = data[:, :-1], data[:, -1]
            if dim is not None and dim != A.shape[1]:
                raise ValueError(f"data has {A.shape[1]} features, dim={dim} requested")
            dim = A.shape[1]
        self.A, self.y = A, y
        self.n_components = A.shape[0]
        curvature = float(np.linalg.eigvalsh(A.T @ A / self.n_components)[-1])
        super().__init__(dim, 0.0, {1: curvature, 2: 0.0, 3: 0.0})

    def value(self, x):
        r = self.A @ np.asarray(x, dtype=float) - self.y
        return float(0.5 * np.mean(r * r))

    def batch_derivative(self, x, order, idx):
        A = self.A[idx]
        if order == 1:
            return A.T @ (A @ np.asarray(x, dtype=float) - self.y[idx]) / len(idx)
        if order == 2:
            return A.T @ A / len(idx)
        return np.zeros((self.dim,) * order)


def load_finite_sum_data(path: str | Path) -> np.ndarray:
    """Read a whitespace- or comma-delimited numeric table (rows are samples)."""
    text = Path(path).read_text().replace(",", " ")
    rows = [line.split() for line in text.splitlines()
            if line.strip() and not line.lstrip().startswith("#")]
    return np.array(rows, dtype=float)


PROBLEMS = {cls.name: cls for cls in
            (ConvexQuadratic, ExtendedRosenbrock, SeparableQuartic, ScalarCubic, LeastSquares)}


def get_problem(name: str, dim: int | None = None, data_path: str | None = None) -> ExactProblem:
    if name not in PROBLEMS:
        raise KeyError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}")
    if name == "least_squares":
        data = load_finite_sum_data(data_path) if data_path else None
        return LeastSquares(dim, data)
    return PROBLEMS[name]() if dim is None else PROBLEMS[name](dim)


def builtin_problems(dim: int = 4) -> list[ExactProblem]:
    """One instance of every builtin problem (the cubic is always 1-D)."""
    even = dim + dim % 2
    return [ConvexQuadratic(dim), ExtendedRosenbrock(even), SeparableQuartic(dim),
            ScalarCubic(), LeastSquares(dim)]


# -- function values -------------------------------------------------------------


def perturb_value(f: float, abs_tol: float, mode: str = "random",
                  rng: np.random.Generator | None = None, sign: float = 1.0) -> float:
    """Return ``fbar`` with ``|fbar - f| <= abs_tol`` in floating point."""
    if abs_tol < 0:
        raise ValueError(f"abs_tol must be non-negative, got {abs_tol}")
    if abs_tol == 0:
        return f
    if mode == "random":
        if rng is None:
            raise ValueError("random mode needs a generator")
        fbar = f + rng.uniform(-abs_tol, abs_tol)
    elif mode == "adversarial":
        fbar = f + np.sign(sign) * abs_tol
    else:
        raise ValueError(f"unknown estimate mode {mode!r}")
    while abs(fbar - f) > abs_tol:
        fbar = float(np.nextafter(fbar, f))
    return float(fbar)


def function_estimate(problem: ExactProblem, x, abs_tol: float, mode: str = "random",
                      rng: np.random.Generator | None = None, sign: float = 1.0) -> float:
    """Inexact value of ``problem`` at ``x`` within ``abs_tol``.

    ``mode='adversarial'`` shifts by exactly ``sign * abs_tol``; the driver uses
    ``+1`` at the current iterate and ``-1`` at the trial point, which inflates
    the apparent decrease as much as the tolerance allows.
    """
    return perturb_value(problem.value(x), abs_tol, mode, rng, sign)


# -- derivative noise ------------------------------------------------------------


@dataclass(frozen=True)
class NoiseSpec:
    """How derivative bundles are perturbed.

    ``magnitude`` multiplies the calibrated scale (``gaussian_relative``) or
    the within-budget error (``adversarial_sign``); ``1.0`` targets
    ``p_star_target`` exactly.
    """

    kind: str = "none"
    p_star_target: float = 0.8
    magnitude: float = 1.0
    batch_fraction: float = 0.5

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"noise kind must be one of {NOISE_KINDS}, got {self.kind!r}")
        if not 0.5 < self.p_star_target <= 1.0:
            raise ValueError(f"p_star_target must lie in (1/2, 1], got {self.p_star_target}")
        if self.magnitude < 0:
            raise ValueError("magnitude must be non-negative")
        if not 0.0 < self.batch_fraction <= 1.0:
            raise ValueError("batch_fraction must lie in (0, 1]")


@dataclass(frozen=True)
class AccuracyTargets:
    """Absolute error budgets on ``||error_l||`` for orders ``l = 1..p``."""

    per_order: tuple

    def __post_init__(self):
        vals = np.asarray(self.per_order, dtype=float)
        if vals.size == 0 or not np.all(np.isfinite(vals)) or np.any(vals <= 0):
            raise ValueError(f"budgets must be positive and finite, got {self.per_order}")
        object.__setattr__(self, "per_order", tuple(float(v) for v in vals))


def accuracy_targets_from_proxy(omega: float, p: int, tau_proxy: float, dt_min_proxy: float,
                                floor: float) -> AccuracyTargets:
    """Budgets ``max(floor, omega dt_min / (6 tau^l))`` for ``l = 1..p``."""
    if min(omega, tau_proxy, floor) <= 0 or dt_min_proxy < 0:
        raise ValueError("omega, tau_proxy and floor must be positive, dt_min_proxy non-negative")
    return AccuracyTargets(tuple(max(floor, omega * dt_min_proxy / (6.0 * tau_proxy ** l))
                                 for l in range(1, p + 1)))


def gaussian_symmetric(rng: np.random.Generator, n: int, order: int, size: int | None = None):
    """Symmetrized standard Gaussian tensor, or a batch of ``size`` of them."""
    a = rng.standard_normal(((1 if size is None else size),) + (n,) * order)
    if order > 1:
        perms = list(itertools.permutations(range(1, order + 1)))
        a = sum(np.transpose(a, (0,) + pm) for pm in perms) / len(perms)
    return a[0] if size is None else a


def norm_bound(t: np.ndarray) -> float:
    """Induced norm for orders 1-2, Frobenius norm (an upper bound) for order 3."""
    return float(_batch_norms(t[None], t.ndim)[0])


def _batch_norms(batch: np.ndarray, order: int) -> np.ndarray:
    if order == 1:
        return np.linalg.norm(batch, axis=1)
    if order == 2:
        return np.max(np.abs(np.linalg.eigvalsh(batch)), axis=1)
    return np.sqrt(np.sum(batch.reshape(batch.shape[0], -1) ** 2, axis=1))


@lru_cache(maxsize=None)
def noise_quantile(n: int, order: int, prob: float, samples: int = CALIBRATION_SAMPLES) -> float:
    """``prob``-quantile of :func:`norm_bound` for a symmetrized Gaussian tensor.

    Computed once per ``(n, order, prob)`` by Monte Carlo with a fixed seed.
    """
    rng = np.random.default_rng([CALIBRATION_SEED, n, order])
    chunk = max(1, min(samples, 2_000_000 // n ** order))
    norms = []
    done = 0
    while done < samples:
        k = min(chunk, samples - done)
        norms.append(_batch_norms(gaussian_symmetric(rng, n, order, size=k), order))
        done += k
    return float(np.quantile(np.concatenate(norms), prob))


def sample_derivatives(problem: ExactProblem, noise: NoiseSpec, x, targets: AccuracyTargets | None,
                       rng: np.random.Generator, p: int,
                       exact: DerivativeBundle | None = None) -> DerivativeBundle:
    """Draw an inexact derivative bundle of degree ``p`` at ``x``.

    ``gaussian_relative``: order ``l`` gets ``c_l E_l`` with ``E_l`` a symmetrized
    Gaussian tensor and ``c_l`` chosen so that ``||c_l E_l|| <= xi_l`` with
    probability ``p_star_target^(1/p)`` (order 3 uses the Frobenius bound, so
    its probability is at least that).

    ``adversarial_sign``: with probability ``p_star_target^(1/p)`` per order the
    error is a random tensor of norm at most ``magnitude xi_l``; otherwise the
    derivative is replaced by its negation.

    ``subsample``: derivatives averaged over a random batch of components.
    """
    x = np.asarray(x, dtype=float)
    if noise.kind == "subsample":
        if not isinstance(problem, FiniteSumProblem):
            raise TypeError(f"subsampling needs a finite-sum problem, got {problem!r}")
        m = problem.n_components
        size = max(1, ceil(noise.batch_fraction * m))
        idx = np.sort(rng.choice(m, size=size, replace=False))
        return DerivativeBundle(x, tuple(problem.batch_derivative(x, l, idx)
                                         for l in range(1, p + 1)), exact=False)
    exact = problem.bundle(x, p) if exact is None else exact
    if noise.kind == "none":
        return exact
    if targets is None or len(targets.per_order) < p:
        raise ValueError(f"{noise.kind} noise needs accuracy targets for orders 1..{p}")
    prob = noise.p_star_target ** (1.0 / p)
    n = exact.dim
    tensors = []
    for order, t in enumerate(exact.tensors, start=1):
        xi = targets.per_order[order - 1]
        e = gaussian_symmetric(rng, n, order)
        if noise.kind == "gaussian_relative":
            tensors.append(t + noise.magnitude * xi / noise_quantile(n, order, prob) * e)
        else:
            if rng.random() < prob:
                bound = norm_bound(e)
                err = noise.magnitude * xi * e / bound if bound > 0 else 0.0 * e
                tensors.append(t + err)
            else:
                tensors.append(-t)
    return DerivativeBundle(x, tuple(tensors), exact=False)
