import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_bundle(rng, n, p, scale=1.0):
    from iarqp.oracles import gaussian_symmetric
    from iarqp.tensor_taylor import DerivativeBundle
    return DerivativeBundle(rng.standard_normal(n),
                            tuple(scale * gaussian_symmetric(rng, n, l) for l in range(1, p + 1)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def calibrated_inexact(exact, sigma, eps, theta, q, omega, factors, rng, max_rounds=50):
    """Perturb ``exact`` so that ``||error_l|| = factors[l-1] * budget_l`` at the resulting step.

    The budget ``omega dt_min / (6 tau^l)`` depends on the step computed from the
    perturbed bundle, so the scale is found by fixed-point iteration.  Orders
    with factor 0 stay exact.  Norms are Frobenius for order 3, which bounds
    the induced norm from above.  Returns ``(inexact, step, budgets, scales)``.
    """
    from iarqp.driver import evaluate_events
    from iarqp.oracles import gaussian_symmetric, norm_bound
    from iarqp.reg_model import RegModel, compute_step
    from iarqp.tensor_taylor import DerivativeBundle

    n, p = exact.dim, exact.degree
    dirs = []
    for order in range(1, p + 1):
        e = gaussian_symmetric(rng, n, order)
        dirs.append(e / norm_bound(e))

    def at(scales):
        inexact = DerivativeBundle(exact.point, tuple(t + c * e for t, c, e in
                                                      zip(exact.tensors, scales, dirs)), False)
        step = compute_step(RegModel(inexact, sigma), eps, theta, q)
        _, tau, dt_min = evaluate_events(exact, inexact, sigma, step, q, omega)
        budgets = [omega * max(dt_min, 0.0) / (6.0 * tau ** l) for l in range(1, p + 1)]
        return inexact, step, budgets

    scales = [0.0] * p
    for _ in range(max_rounds):
        inexact, step, budgets = at(scales)
        target = [f * b for f, b in zip(factors, budgets)]
        ok = all(0.95 * t <= c <= t if f <= 1 else abs(c - t) <= 0.05 * t
                 for c, t, f in zip(scales, target, factors))
        if ok:
            return inexact, step, budgets, scales
        scales = [0.999 * t if f <= 1 else t for t, f in zip(target, factors)]
    return None


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line for an acceptance criterion."""
    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} ({detail})"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
