"""Dense symmetric tensors and Taylor-polynomial arithmetic.

Tensors are plain ``numpy.ndarray`` objects of shape ``(n,) * order``; a
vector is an order-1 tensor, a symmetric matrix an order-2 tensor.  Symmetry
is enforced once, when a :class:`DerivativeBundle` is built.

Orders up to 3 are supported, which covers Taylor models of degree ``p <= 3``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import factorial
from typing import Sequence

import numpy as np

MAX_ORDER = 3


class DimensionError(ValueError):
    """Raised when tensor, bundle or vector shapes are inconsistent."""


def symmetrize(a: np.ndarray) -> np.ndarray:
    """Average ``a`` over all permutations of its axes.

    Arrays that are already exactly symmetric are returned unchanged (as a
    copy), so exact derivatives survive a round trip bitwise.
    """
    a = np.array(a, dtype=float)
    if a.ndim <= 1:
        return a
    perms = list(itertools.permutations(range(a.ndim)))
    if all(np.array_equal(a, a.transpose(pm)) for pm in perms[1:]):
        return a
    avg = sum(a.transpose(pm) for pm in perms) / len(perms)
    # floating-point sums depend on term order; read every entry from its sorted index
    idx = np.sort(np.indices(a.shape), axis=0)
    return avg[tuple(idx)]


def contract(t: np.ndarray, v: np.ndarray, times: int):
    """Apply ``times`` copies of ``v`` to the trailing axes of ``t``.

    ``contract(T, v, T.ndim)`` is the scalar ``T[v]^order``.
    """
    out = t
    for _ in range(times):
        out = out @ v
    return out


@dataclass(frozen=True, eq=False)
class DerivativeBundle:
    """A point together with derivative tensors of orders ``1..degree``.

    Parameters
    ----------
    point : array (n,)
        Where the derivatives were taken.
    tensors : sequence of arrays
        ``tensors[l - 1]`` has shape ``(n,) * l``.
    exact : bool
        Provenance flag, ``False`` for sampled/perturbed derivatives.
    """

    point: np.ndarray
    tensors: tuple
    exact: bool = True

    def __post_init__(self):
        point = np.atleast_1d(np.asarray(self.point, dtype=float))
        if point.ndim != 1:
            raise DimensionError("point must be a vector")
        n = point.size
        if not 1 <= len(self.tensors) <= MAX_ORDER:
            raise DimensionError(f"degree must be in 1..{MAX_ORDER}, got {len(self.tensors)}")
        tensors = []
        for order, t in enumerate(self.tensors, start=1):
            t = np.asarray(t, dtype=float)
            if t.shape != (n,) * order:
                raise DimensionError(
                    f"order-{order} tensor has shape {t.shape}, expected {(n,) * order}")
            tensors.append(symmetrize(t))
        object.__setattr__(self, "point", point)
        object.__setattr__(self, "tensors", tuple(tensors))

    @property
    def dim(self) -> int:
        return self.point.size

    @property
    def degree(self) -> int:
        return len(self.tensors)

    def truncate(self, degree: int) -> "DerivativeBundle":
        if not 1 <= degree <= self.degree:
            raise ValueError(f"cannot truncate degree {self.degree} bundle to {degree}")
        return DerivativeBundle(self.point, self.tensors[:degree], self.exact)

    def __sub__(self, other: "DerivativeBundle") -> "DerivativeBundle":
        if other.degree != self.degree or other.dim != self.dim:
            raise DimensionError("bundles differ in degree or dimension")
        return DerivativeBundle(self.point,
                                tuple(a - b for a, b in zip(self.tensors, other.tensors)),
                                exact=False)

    def equals(self, other: "DerivativeBundle") -> bool:
        """Bitwise equality of point and tensors."""
        return (self.degree == other.degree
                and np.array_equal(self.point, other.point)
                and all(np.array_equal(a, b) for a, b in zip(self.tensors, other.tensors)))


def _check_step(bundle: DerivativeBundle, s) -> np.ndarray:
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if s.shape != (bundle.dim,):
        raise DimensionError(f"step has shape {s.shape}, bundle dimension is {bundle.dim}")
    return s


def taylor_decrement(bundle: DerivativeBundle, s) -> float:
    """Return ``-sum_l T_l[s]^l / l!``, the decrease of the Taylor polynomial."""
    s = _check_step(bundle, s)
    total = 0.0
    for order, t in enumerate(bundle.tensors, start=1):
        total += contract(t, s, order) / factorial(order)
    return float(-total)


def taylor_value(bundle: DerivativeBundle, base_value: float, s) -> float:
    """Evaluate the Taylor polynomial ``base_value + sum_l T_l[s]^l / l!``."""
    return float(base_value) - taylor_decrement(bundle, s)


def shifted_derivative(bundle: DerivativeBundle, s, order: int) -> np.ndarray:
    """Derivative of order ``order`` of the Taylor polynomial, taken at offset ``s``.

    This is ``sum_{t=order..p} T_t[s]^(t-order) / (t-order)!``.
    """
    s = _check_step(bundle, s)
    if not 1 <= order <= bundle.degree:
        raise ValueError(f"order must be in 1..{bundle.degree}, got {order}")
    out = np.zeros((bundle.dim,) * order)
    for t in range(order, bundle.degree + 1):
        out = out + contract(bundle.tensors[t - 1], s, t - order) / factorial(t - order)
    return out


def shifted_bundle(bundle: DerivativeBundle, s, degree: int | None = None) -> DerivativeBundle:
    """Bundle of the Taylor polynomial re-expanded around ``s``."""
    s = _check_step(bundle, s)
    degree = bundle.degree if degree is None else degree
    return DerivativeBundle(bundle.point + s,
                            tuple(shifted_derivative(bundle, s, l) for l in range(1, degree + 1)),
                            exact=bundle.exact)


def regularizer_derivative(s, p: int, order: int):
    """Derivative of ``||s||^(p+1)`` of order 0, 1 or 2.

    At ``s = 0`` the true limits are returned: zero for ``p >= 2``; for ``p = 1``
    the function is ``||s||^2`` whose Hessian is ``2 I`` everywhere.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if p < 1:
        raise ValueError("p must be >= 1")
    r = float(np.linalg.norm(s))
    n = s.size
    if order == 0:
        return r ** (p + 1)
    if order == 1:
        if r == 0.0:
            return np.zeros(n)
        return (p + 1) * r ** (p - 1) * s
    if order == 2:
        if p == 1:
            return 2.0 * np.eye(n)
        if r == 0.0:
            return np.zeros((n, n))
        # (p-1) r^(p-3) s s^T = (p-1) r^(p-1) u u^T with u = s/r avoids r^(p-3) at p = 2
        u = s / r
        return (p + 1) * r ** (p - 1) * (np.eye(n) + (p - 1) * np.outer(u, u))
    raise ValueError(f"regularizer derivatives are implemented up to order 2, got {order}")


def tensor_norm(t, starts: int = 16, iterations: int = 300, seed: int = 0) -> float:
    """Induced Euclidean norm ``max_{||v||=1} |T[v]^order|``.

    Orders 1 and 2 are exact.  Order 3 uses multistart shifted power iteration,
    which returns a lower bound that is tight in practice; it is meant for
    tests and diagnostics, not for the solver itself.
    """
    t = np.asarray(t, dtype=float)
    if t.ndim == 0:
        return float(abs(t))
    if t.ndim == 1:
        return float(np.linalg.norm(t))
    if t.ndim == 2:
        return float(np.max(np.abs(np.linalg.eigvalsh(symmetrize(t)))))
    if t.ndim != 3:
        raise DimensionError(f"order {t.ndim} not supported")
    t = symmetrize(t)
    n = t.shape[0]
    frob = float(np.linalg.norm(t))
    if frob == 0.0:
        return 0.0
    rng = np.random.default_rng(seed)
    v = np.vstack([np.eye(n), rng.standard_normal((starts, n))])
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    # shift makes v -> T[v]^3 + shift ||v||^3 convex on the ball, so the iteration is monotone
    shift = 2.0 * frob
    for _ in range(iterations):
        w = np.einsum("ijk,aj,ak->ai", t, v, v) + shift * v
        v = w / np.linalg.norm(w, axis=1, keepdims=True)
    vals = np.einsum("ijk,ai,aj,ak->a", t, v, v, v)
    # T[-v]^3 = -T[v]^3, hence max T[v]^3 over the sphere equals max |T[v]^3|
    return float(np.max(np.abs(vals)))


def chi(j: int, t: float) -> float:
    """``sum_{l=1..j} t^l / l!``."""
    if j < 1:
        raise ValueError("j must be >= 1")
    return float(sum(t ** l / factorial(l) for l in range(1, j + 1)))


def as_bundle(point: Sequence[float], *tensors, exact: bool = True) -> DerivativeBundle:
    """Convenience constructor: ``as_bundle(x, g, H, T)``."""
    return DerivativeBundle(np.asarray(point, dtype=float), tuple(tensors), exact)
