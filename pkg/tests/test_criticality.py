import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_bundle
from iarqp.criticality import (measures, phi_bruteforce, phi_order1, phi_order2,
                               quadratic_decrement, solve_trs, termination_test, thresholds)
from iarqp.oracles import ScalarCubic, gaussian_symmetric
from iarqp.tensor_taylor import as_bundle, taylor_decrement

seeds = st.integers(0, 2**32 - 1)


class TestOrderOne:
    def test_examples(self):
        m = phi_order1([3.0, 4.0], 1.0)
        assert m.value == 5.0
        np.testing.assert_allclose(m.direction, [-0.6, -0.8])
        assert phi_order1([3.0, 4.0], 0.5).value == 2.5
        zero = phi_order1([0.0, 0.0], 1.0)
        assert zero.value == 0.0 and not zero.direction.any()

    @given(seeds, st.floats(0.01, 1.0), st.floats(0.01, 1.0))
    def test_linear_in_radius(self, seed, a, b):
        g = np.random.default_rng(seed).standard_normal(3)
        assert phi_order1(g, a).value / a == pytest.approx(phi_order1(g, b).value / b)


class TestOrderTwo:
    def test_saddle_example(self):
        m = phi_order2([0.0, 0.0], np.diag([-2.0, 1.0]), 1.0)
        assert m.value == pytest.approx(1.0)
        np.testing.assert_allclose(m.direction, [1.0, 0.0], atol=1e-12)

    def test_tie_break_is_lexicographic(self):
        m = phi_order2([0.0, 0.0], np.array([[-1.0, 0.0], [0.0, 3.0]]), 0.5)
        assert m.direction[0] > 0

    def test_interior_newton_example(self):
        m = phi_order2([1.0, 0.0], np.eye(2), 1.0)
        assert m.value == pytest.approx(0.5)
        np.testing.assert_allclose(m.direction, [-1.0, 0.0], atol=1e-12)

    def test_flat_example(self):
        assert phi_order2([0.0], [[0.0]], 1.0).value == 0.0

    @given(seeds, st.integers(1, 5), st.floats(0.05, 1.0))
    def test_eigenvalue_identity(self, seed, n, delta):
        rng = np.random.default_rng(seed)
        H = gaussian_symmetric(rng, n, 2)
        lmin = np.linalg.eigvalsh(H)[0]
        expected = 0.5 * max(0.0, -lmin) * delta ** 2
        assert phi_order2(np.zeros(n), H, delta).value == pytest.approx(expected, rel=1e-8,
                                                                          abs=1e-14)

    @given(seeds, st.integers(1, 6), st.floats(0.05, 2.0), st.floats(-3, 3))
    def test_trs_optimality(self, seed, n, radius, shift):
        rng = np.random.default_rng(seed)
        g = rng.standard_normal(n)
        H = gaussian_symmetric(rng, n, 2) + shift * np.eye(n)
        d, lam = solve_trs(g, H, radius)
        dn = np.linalg.norm(d)
        assert dn <= radius * (1 + 1e-8)
        assert lam >= 0
        # stationarity, complementarity and second-order condition
        np.testing.assert_allclose((H + lam * np.eye(n)) @ d, -g, atol=1e-7 * (1 + abs(lam)))
        if lam > 1e-10:
            assert dn == pytest.approx(radius, rel=1e-8)
        assert np.linalg.eigvalsh(H + lam * np.eye(n))[0] >= -1e-9 * (1 + abs(lam))

    def test_hard_case(self):
        H = np.diag([-1.0, 2.0])
        g = np.array([0.0, 1.0])
        d, lam = solve_trs(g, H, 1.0)
        assert lam == pytest.approx(1.0)
        assert np.linalg.norm(d) == pytest.approx(1.0)
        assert d[1] == pytest.approx(-1.0 / 3.0)
        assert d[0] > 0

    @given(seeds, st.integers(1, 4))
    def test_monotone_in_radius(self, seed, n):
        rng = np.random.default_rng(seed)
        g, H = rng.standard_normal(n), gaussian_symmetric(rng, n, 2)
        vals = [phi_order2(g, H, r).value for r in np.linspace(0.05, 1.0, 8)]
        assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))

    @given(seeds, st.integers(1, 4))
    def test_value_matches_direction(self, seed, n):
        rng = np.random.default_rng(seed)
        b = random_bundle(rng, n, 2)
        m = measures(b, (0.7, 0.7), 2)
        for j, res in enumerate(m, start=1):
            assert res.value >= 0
            assert np.linalg.norm(res.direction) <= 0.7 * (1 + 1e-8)
            assert res.value == pytest.approx(taylor_decrement(b.truncate(j), res.direction),
                                              abs=1e-10)


class TestBruteForce:
    @pytest.mark.parametrize("seed", range(4))
    def test_agrees_with_measures(self, seed):
        rng = np.random.default_rng(seed)
        b = random_bundle(rng, 3, 2)
        exact = measures(b, (1.0, 1.0), 2)
        brute1 = phi_bruteforce(b.truncate(1), 1.0, samples=200_000, seed=seed)
        brute2 = phi_bruteforce(b, 1.0, samples=200_000, seed=seed)
        assert brute1 <= exact[0].value + 1e-12
        assert brute2 <= exact[1].value + 1e-12
        assert brute1 == pytest.approx(exact[0].value, rel=2e-2)
        assert brute2 == pytest.approx(exact[1].value, rel=2e-2)

    def test_zero_radius(self, rng):
        assert phi_bruteforce(random_bundle(rng, 2, 2), 0.0) == 0.0


class TestTermination:
    def test_negative_curvature_within_tolerance(self):
        b = as_bundle(np.zeros(2), np.zeros(2), np.diag([-0.5, 1.0]))
        assert measures(b, (1.0, 1.0), 2)[1].value == pytest.approx(0.25)
        assert termination_test(b, (1.0, 1.0), (1.0, 1.0), 2)

    def test_gradient_too_large(self):
        eps = 1e-3
        b = as_bundle(np.zeros(3), [2 * eps, 0.0, 0.0])
        assert not termination_test(b, (1.0,), (eps,), 1)

    @pytest.mark.parametrize("eps", [(1.0, 1.0), (1e-1, 1e-3), (1e-3, 1e-3)])
    def test_cubic_origin(self, eps):
        assert termination_test(ScalarCubic().bundle(np.zeros(1), 2), (1.0, 1.0), eps, 2)

    def test_thresholds(self):
        assert thresholds((0.1, 0.2), (0.5, 0.5), 2) == pytest.approx([0.05, 0.025])

    def test_bad_order(self, rng):
        with pytest.raises(ValueError):
            measures(random_bundle(rng, 2, 3), (1.0,) * 3, 3)
        with pytest.raises(ValueError):
            measures(random_bundle(rng, 2, 1), (1.0, 1.0), 2)


def test_quadratic_decrement_sign():
    assert quadratic_decrement(np.array([1.0]), np.array([[2.0]]), np.array([-0.5])) == 0.25
