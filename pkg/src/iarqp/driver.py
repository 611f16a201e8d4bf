"""The adaptive regularization loop with inexact values and random derivatives.

One call to :func:`run` executes the algorithm on a problem until the exact
q-th order stopping test passes or the iteration budget runs out.  Exact
derivatives are used only for instrumentation (stopping test, accuracy
events, closed-loop noise budgets) and are not counted as evaluations.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from math import factorial
from pathlib import Path
from typing import IO, Sequence

import numpy as np

from .criticality import measures, termination_test
from .oracles import (AccuracyTargets, ExactProblem, NoiseSpec, accuracy_targets_from_proxy,
                      perturb_value, sample_derivatives)
from .reg_model import (DEFAULT_INNER_BUDGET, InnerSolverError, RegModel, StepResult,
                        compute_step, model_shifted_bundle)
from .tensor_taylor import DerivativeBundle, shifted_bundle, taylor_decrement

NOISE_MODES = ("open_loop", "closed_loop")
ESTIMATE_MODES = ("random", "adversarial")
BETA = 2.0


class ConfigError(ValueError):
    """A configuration violates the algorithm's constraints."""


def default_omega(eta: float) -> float:
    return 0.9 * min((1.0 - eta) / 3.0, eta / 2.0)


@dataclass(frozen=True)
class Config:
    """Algorithm constants and run options.

    ``epsilon`` may be given as a scalar, which is then used for every order.
    ``omega=None`` selects ``0.9 min((1-eta)/3, eta/2)``.  ``alpha`` is stored
    but plays no role in the iteration.
    """

    p: int = 2
    q: int = 1
    epsilon: tuple = (1e-3,)
    theta: float = 0.25
    eta: float = 0.1
    gamma: float = 2.0
    sigma0: float = 1.0
    sigma_min: float = 1e-8
    omega: float | None = None
    alpha: float = 0.5
    max_iterations: int = 500
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    noise_mode: str = "closed_loop"
    f_estimate_mode: str = "random"
    seed: int = 0
    instrument_events: bool = True
    inner_budget: int = DEFAULT_INNER_BUDGET
    open_loop_budget: float = 1e-3
    budget_floor: float = 1e-30
    stop_on_model: bool = False
    max_resamples: int = 8

    def __post_init__(self):
        eps = self.epsilon
        if np.isscalar(eps):
            eps = (float(eps),) * self.q
        eps = tuple(float(e) for e in eps)
        object.__setattr__(self, "epsilon", eps)
        if self.omega is None:
            object.__setattr__(self, "omega", default_omega(self.eta))
        problems = []
        if self.p not in (1, 2, 3):
            problems.append(f"p must be 1, 2 or 3 (got {self.p})")
        if self.q not in (1, 2) or self.q > self.p:
            problems.append(f"q must be 1 or 2 and at most p (got q={self.q}, p={self.p})")
        if len(eps) != self.q or not all(0.0 < e <= 1.0 for e in eps):
            problems.append(f"epsilon must hold q values in (0, 1] (got {eps})")
        if not 0.0 < self.theta < 0.5:
            problems.append(f"theta must lie in (0, 1/2) (got {self.theta})")
        if not 0.0 < self.eta < 1.0:
            problems.append(f"eta must lie in (0, 1) (got {self.eta})")
        if not self.gamma > 1.0:
            problems.append(f"gamma must exceed 1 (got {self.gamma})")
        if not 0.0 < self.alpha < 1.0:
            problems.append(f"alpha must lie in (0, 1) (got {self.alpha})")
        if not self.sigma0 > 0.0:
            problems.append(f"sigma0 must be positive (got {self.sigma0})")
        if not 0.0 < self.sigma_min < self.sigma0:
            problems.append(f"sigma_min must lie in (0, sigma0) (got {self.sigma_min})")
        omega_max = min((1.0 - self.eta) / 3.0, self.eta / 2.0)
        if not 0.0 < self.omega < omega_max:
            problems.append(f"omega must lie in (0, {omega_max:g}) (got {self.omega})")
        if self.max_iterations < 0 or self.inner_budget < 0 or self.max_resamples < 0:
            problems.append("iteration budgets must be non-negative")
        if self.noise_mode not in NOISE_MODES:
            problems.append(f"noise_mode must be one of {NOISE_MODES}")
        if self.f_estimate_mode not in ESTIMATE_MODES:
            problems.append(f"f_estimate_mode must be one of {ESTIMATE_MODES}")
        if not (self.open_loop_budget > 0 and self.budget_floor > 0):
            problems.append("noise budgets must be positive")
        if problems:
            raise ConfigError("; ".join(problems))

    def with_epsilon(self, eps) -> "Config":
        return replace(self, epsilon=eps)


@dataclass(frozen=True)
class EventFlags:
    m1: bool
    m2: tuple
    m3: tuple

    @property
    def mk(self) -> bool:
        return bool(self.m1 and all(self.m2) and all(self.m3))


@dataclass(frozen=True)
class IterationRecord:
    """One iteration.  ``f_exact_after`` and ``f_bar_after`` refer to the trial point."""

    k: int
    sigma: float
    step_norm: float
    rho: float
    success: bool
    dt_bar: float
    phi_bar: tuple
    f_exact_before: float
    f_exact_after: float
    f_bar_before: float
    f_bar_after: float
    events: EventFlags | None
    tau: float
    dt_min: float
    inner_iterations: int
    radii: tuple


@dataclass(frozen=True)
class CategoryCounts:
    n_lambda: int = 0
    n_not_lambda: int = 0
    n_I: int = 0
    n_A: int = 0
    n_AS: int = 0
    n_AU: int = 0
    n_IS: int = 0
    n_S: int = 0
    n_U: int = 0


@dataclass(frozen=True)
class RunResult:
    n_epsilon: int | None
    trace: list
    final_point: np.ndarray
    termination: str
    counts: CategoryCounts | None
    deriv_evals: int
    f_evals: int
    final_sigma: float

    @property
    def converged(self) -> bool:
        return self.termination == "converged"


@dataclass(frozen=True)
class TheoryConstants:
    sigma_s: float
    varpi: float
    psi_sigma_s: float
    kappa_p_star: float
    bound_on_expected_N: float


# -- accuracy events -------------------------------------------------------------------


def evaluate_events(exact: DerivativeBundle, inexact: DerivativeBundle, sigma: float,
                    step: StepResult, q: int, omega: float) -> tuple[EventFlags, float, float]:
    """Check the accuracy events of an iteration and return ``(flags, tau, dt_min)``.

    Differences between inexact and exact decrements are computed from the
    error bundle directly, which avoids cancellation.
    """
    s = step.step
    err = inexact - exact
    dt_bar = step.model_decrement
    m1 = abs(taylor_decrement(err, s)) <= omega * dt_bar
    exact_model = RegModel(exact, sigma)
    inexact_model = RegModel(inexact, sigma)
    taus = [float(np.linalg.norm(s))]
    mins = [dt_bar]
    m2, m3 = [], []
    for j in range(1, q + 1):
        radius = step.radii[j - 1]
        d_exact = measures(model_shifted_bundle(exact_model, s, j), (radius,) * j, j)[j - 1].direction
        d_bar = step.phi_bar[j - 1].direction
        model_j = model_shifted_bundle(inexact_model, s, j)
        err_j = shifted_bundle(err, s, j)
        for d, flags in ((d_exact, m2), (d_bar, m3)):
            value = taylor_decrement(model_j, d)
            flags.append(bool(abs(taylor_decrement(err_j, d)) <= omega * value))
            mins.append(value)
            taus.append(float(np.linalg.norm(d)))
    return EventFlags(bool(m1), tuple(m2), tuple(m3)), max(taus), min(mins)


def detect_events(problem: ExactProblem, x, inexact: DerivativeBundle, step: StepResult,
                  sigma: float, config: Config) -> EventFlags:
    exact = problem.bundle(x, inexact.degree)
    return evaluate_events(exact, inexact, sigma, step, config.q, config.omega)[0]


# -- main loop --------------------------------------------------------------------------


def _targets(config: Config, tau_prev: float | None, dt_min_prev: float | None) -> AccuracyTargets:
    if config.noise_mode == "open_loop":
        return AccuracyTargets((config.open_loop_budget,) * config.p)
    if tau_prev is None or not tau_prev > 0:
        # no usable history: start loose and let resampling tighten
        return AccuracyTargets((config.open_loop_budget,) * config.p)
    return accuracy_targets_from_proxy(config.omega, config.p, tau_prev, max(dt_min_prev, 0.0),
                                       config.budget_floor)


def _step_targets(config: Config, step: StepResult) -> AccuracyTargets | None:
    tau = max([float(np.linalg.norm(step.step))]
              + [float(np.linalg.norm(m.direction)) for m in step.phi_bar])
    dt_min = min([step.model_decrement] + [m.value for m in step.phi_bar])
    if not tau > 0:
        return None
    return accuracy_targets_from_proxy(config.omega, config.p, tau, max(dt_min, 0.0),
                                       config.budget_floor)


def run(problem: ExactProblem, x0, config: Config) -> RunResult:
    """Run the algorithm from ``x0``.

    The stopping test at the start of iteration ``k`` uses exact derivatives
    and the radii from iteration ``k-1`` (all ones before the first step).
    An inner-solver failure ends the run with ``termination='inner_failure'``.
    """
    x = np.array(x0, dtype=float)
    if x.shape != (problem.dim,):
        raise ValueError(f"x0 has shape {x.shape}, problem dimension is {problem.dim}")
    p, q, eps, omega = config.p, config.q, config.epsilon, config.omega
    rng = np.random.default_rng(config.seed)
    need_events = config.instrument_events or (
        config.noise_mode == "closed_loop" and config.noise.kind != "none")
    sigma = config.sigma0
    radii = (1.0,) * q
    tau_prev = dt_min_prev = None
    trace: list[IterationRecord] = []
    deriv_evals = f_evals = 0
    n_epsilon = None
    termination = "budget_exhausted"

    for k in range(config.max_iterations + 1):
        exact = problem.bundle(x, p)
        if not config.stop_on_model and termination_test(exact, radii, eps, q):
            n_epsilon, termination = k, "converged"
            break
        if k == config.max_iterations:
            break
        noisy = config.noise.kind not in ("none", "subsample")
        targets = _targets(config, tau_prev, dt_min_prev) if noisy else None
        try:
            for attempt in range(config.max_resamples + 1):
                inexact = sample_derivatives(problem, config.noise, x, targets, rng, p, exact=exact)
                deriv_evals += 1
                if config.stop_on_model and termination_test(inexact, radii, eps, q):
                    break
                step = compute_step(RegModel(inexact, sigma), eps, config.theta, q,
                                    config.inner_budget)
                if not (noisy and config.noise_mode == "closed_loop"):
                    break
                # budgets implied by the step just computed, from inexact quantities only
                tighter = _step_targets(config, step)
                if tighter is None or all(a <= b for a, b in zip(targets.per_order,
                                                                 tighter.per_order)):
                    break
                targets = AccuracyTargets(tuple(min(a, b) for a, b in zip(targets.per_order,
                                                                          tighter.per_order)))
        except InnerSolverError:
            termination = "inner_failure"
            break
        if config.stop_on_model and termination_test(inexact, radii, eps, q):
            n_epsilon, termination = k, "converged"
            break
        s = step.step
        dt_bar = step.model_decrement
        f_before = problem.value(x)
        f_after = problem.value(x + s)
        if dt_bar > 0.0:
            tol = omega * dt_bar
            fb_before = perturb_value(f_before, tol, config.f_estimate_mode, rng, sign=1.0)
            fb_after = perturb_value(f_after, tol, config.f_estimate_mode, rng, sign=-1.0)
            f_evals += 2
            rho = (fb_before - fb_after) / dt_bar
        else:
            fb_before = fb_after = math.nan
            rho = -math.inf
        success = rho >= config.eta

        events, tau, dt_min = None, math.nan, math.nan
        if need_events:
            flags, tau, dt_min = evaluate_events(exact, inexact, sigma, step, q, omega)
            events = flags if config.instrument_events else None
            tau_prev, dt_min_prev = tau, dt_min
        trace.append(IterationRecord(
            k=k, sigma=sigma, step_norm=float(np.linalg.norm(s)), rho=float(rho), success=success,
            dt_bar=dt_bar, phi_bar=tuple(m.value for m in step.phi_bar),
            f_exact_before=f_before, f_exact_after=f_after, f_bar_before=fb_before,
            f_bar_after=fb_after, events=events, tau=tau, dt_min=dt_min,
            inner_iterations=step.inner_iterations, radii=step.radii))

        if success:
            x = x + s
            sigma = max(config.sigma_min, sigma / config.gamma)
        else:
            sigma = config.gamma * sigma
        radii = step.radii

    counts = None
    if config.instrument_events:
        counts = count_categories(trace, theory_constants(problem, config, x0).sigma_s)
    return RunResult(n_epsilon, trace, x, termination, counts, deriv_evals, f_evals, sigma)


# -- analysis ---------------------------------------------------------------------------


def count_categories(trace: Sequence[IterationRecord], sigma_s: float) -> CategoryCounts:
    """Tally iterations by regularization level, accuracy and success."""
    if any(r.events is None for r in trace):
        raise ValueError("category counts need an instrumented trace")
    c = dict.fromkeys(CategoryCounts.__dataclass_fields__, 0)
    for r in trace:
        below = r.sigma < sigma_s
        closure = r.sigma <= sigma_s
        acc = r.events.mk
        c["n_lambda"] += below
        c["n_not_lambda"] += not below
        c["n_I"] += closure and not acc
        c["n_A"] += closure and acc
        c["n_AS"] += closure and acc and r.success
        c["n_AU"] += below and acc and not r.success
        c["n_IS"] += closure and not acc and r.success
        c["n_S"] += closure and r.success
        c["n_U"] += below and not r.success
    return CategoryCounts(**{k: int(v) for k, v in c.items()})


def theory_constants(problem: ExactProblem, config: Config, x0=None,
                     beta: float = BETA) -> TheoryConstants:
    """Constants of the expected-iteration bound for ``q <= 2``.

    ``bound_on_expected_N`` needs ``f(x0)`` and is NaN when ``x0`` is omitted.
    """
    p, q = config.p, config.q
    eta, omega, theta = config.eta, config.omega, config.theta
    if not 1.0 - eta - 3.0 * omega > 0.0:
        raise ConfigError("1 - eta - 3 omega must be positive")
    L = problem.lipschitz(p)
    sigma_s = max(beta * config.sigma0, L / (1.0 - eta - 3.0 * omega))
    varpi = (p + 1) / (p - q + 1)
    psi = min(1.0, ((1.0 - 2.0 * theta) * factorial(p - q + 1)
                    / (factorial(q) * (L + sigma_s))) ** varpi)
    p_star = 1.0 if config.noise.kind == "none" else config.noise.p_star_target
    kappa = 2.0 * p_star / (2.0 * p_star - 1.0) ** 2
    bound = math.nan
    if x0 is not None:
        gap = problem.value(np.asarray(x0, dtype=float)) - problem.f_low
        bound = kappa * (2.0 * gap * factorial(p + 1)
                         / ((eta - 2.0 * omega) * config.sigma_min * psi)
                         * min(config.epsilon) ** (-varpi)
                         + math.ceil(math.log(sigma_s / config.sigma0, config.gamma)) + 2.0)
    return TheoryConstants(sigma_s, varpi, psi, kappa, bound)


# -- export -----------------------------------------------------------------------------


def _finite_or_none(v):
    return float(v) if v is not None and math.isfinite(v) else None


def record_to_dict(r: IterationRecord) -> dict:
    """JSON-ready view of a record; non-finite numbers (e.g. ``rho = -inf``) become null."""
    events = None
    if r.events is not None:
        events = {"m1": r.events.m1, "m2": list(r.events.m2), "m3": list(r.events.m3),
                  "mk": r.events.mk}
    return {
        "k": r.k, "sigma": r.sigma, "step_norm": r.step_norm, "rho": _finite_or_none(r.rho),
        "success": r.success, "dt_bar": r.dt_bar, "phi_bar": list(r.phi_bar), "events": events,
        "f_exact_before": r.f_exact_before, "f_exact_after": r.f_exact_after,
        "f_bar_before": _finite_or_none(r.f_bar_before),
        "f_bar_after": _finite_or_none(r.f_bar_after),
        "tau": _finite_or_none(r.tau), "dt_min": _finite_or_none(r.dt_min),
        "inner_iterations": r.inner_iterations,
    }


def write_trace(trace: Sequence[IterationRecord], out: str | Path | IO[str]) -> None:
    """Write one JSON object per iteration."""
    lines = "".join(json.dumps(record_to_dict(r), allow_nan=False) + "\n" for r in trace)
    if hasattr(out, "write"):
        out.write(lines)
    else:
        Path(out).write_text(lines)
