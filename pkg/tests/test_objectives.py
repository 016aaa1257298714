from __future__ import annotations

import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from pidflow.exceptions import InvalidBenchmark, NotStronglyConvex, ObjectiveError, OracleFailure, ShapeMismatch
from pidflow.objectives import (
    EXAMPLE1_TRIG_TERMS,
    ObjectiveSet,
    Quadratic,
    TrigPerturbedQuadratic,
    TrigTerm,
    central_minimizer,
    example1_trig_set,
    grad_local,
    hessian_local,
    quadratic_set,
    random_quadratic_set,
    stacked_grad,
)


def _fd_gradient(f, z: np.ndarray, h: float = 1e-6) -> np.ndarray:
    out = np.zeros_like(z)
    for k in range(z.size):
        e = np.zeros_like(z)
        e[k] = h
        out[k] = (f(z + e) - f(z - e)) / (2 * h)
    return out


class TestLocalObjectives(unittest.TestCase):
    def test_quadratic_gradient_by_hand(self) -> None:
        f = Quadratic(np.diag([2.0, 4.0]), np.array([1.0, -1.0]))
        assert_allclose(grad_local(f, np.array([1.0, 1.0])), [3.0, 3.0])
        self.assertAlmostEqual(f.value(np.array([1.0, 1.0])), 3.0)
        assert_array_equal(hessian_local(f, np.zeros(2)), np.diag([2.0, 4.0]))

    def test_quadratic_rejects_bad_matrices(self) -> None:
        with self.assertRaises(ObjectiveError):
            Quadratic(np.array([[1.0, 2.0], [0.0, 1.0]]), np.zeros(2))
        with self.assertRaises(ObjectiveError):
            Quadratic(np.diag([1.0, -1.0]), np.zeros(2))
        with self.assertRaises(ShapeMismatch):
            Quadratic(np.eye(2), np.zeros(3))

    def test_gradient_shape_is_checked(self) -> None:
        f = Quadratic(np.eye(3), np.zeros(3))
        with self.assertRaises(ShapeMismatch):
            f.gradient(np.zeros(2))

    def test_gradients_match_finite_differences(self) -> None:
        rng = np.random.default_rng(11)
        objs = random_quadratic_set(3, 5, seed=4).locals
        trig = [TrigPerturbedQuadratic(o.Q, o.q, [term]) for o, term in zip(objs, EXAMPLE1_TRIG_TERMS)]
        for f in (*objs, *trig):
            for _ in range(5):
                z = rng.uniform(-3, 3, size=5)
                with self.subTest(f=repr(f)):
                    assert_allclose(f.gradient(z), _fd_gradient(f.value, z), rtol=1e-6, atol=1e-6)

    def test_hessian_matches_finite_differences(self) -> None:
        rng = np.random.default_rng(12)
        base = random_quadratic_set(1, 4, seed=9).locals[0]
        f = TrigPerturbedQuadratic(base.Q, base.q, [TrigTerm('sin', 1.5), TrigTerm('cos', -2.0)])
        z = rng.uniform(-2, 2, size=4)
        fd = np.column_stack([_fd_gradient(lambda y: f.gradient(y)[k], z) for k in range(4)]).T
        assert_allclose(f.hessian(z), fd, atol=1e-5)

    def test_trig_amplitudes(self) -> None:
        f = TrigPerturbedQuadratic(np.eye(2), np.zeros(2), [TrigTerm('sin', 1.0), TrigTerm('cos', -5.0)])
        self.assertEqual(f.sin_amplitude, 1.0)
        self.assertEqual(f.cos_amplitude, -5.0)
        with self.assertRaises(ObjectiveError):
            TrigPerturbedQuadratic(np.eye(2), np.zeros(2), [('tan', 1.0)])  # type: ignore


class TestObjectiveSet(unittest.TestCase):

    # ------------------------------------------------------------------
    # stacked gradient
    # ------------------------------------------------------------------

    def test_stacked_grad_matches_locals(self) -> None:
        rng = np.random.default_rng(0)
        s = example1_trig_set(random_quadratic_set(4, 3, seed=1))
        x = rng.normal(size=12)
        expected = np.concatenate([f.gradient(x[3 * i : 3 * i + 3]) for i, f in enumerate(s.locals)])
        assert_allclose(stacked_grad(s, x), expected, atol=1e-12)

    def test_stacked_grad_shape(self) -> None:
        s = random_quadratic_set(4, 3, seed=1)
        with self.assertRaises(ShapeMismatch):
            s.stacked_grad(np.zeros(11))

    def test_constants(self) -> None:
        s = quadratic_set([np.diag([1.0, 3.0]), np.diag([2.0, 1.0])], [np.zeros(2), np.ones(2)])
        self.assertAlmostEqual(s.m_global, 3.0)
        self.assertAlmostEqual(s.l_global, 4.0)

    def test_not_strongly_convex(self) -> None:
        with self.assertRaises(NotStronglyConvex):
            quadratic_set([np.diag([1.0, 0.0]), np.diag([1.0, 0.0])], [np.zeros(2), np.zeros(2)])

    def test_rank_deficient_sum_within_rounding_is_rejected(self) -> None:
        u = np.array([1.0, 2.0, 3.0])
        Q = np.outer(u, u)
        with self.assertRaises(NotStronglyConvex):
            quadratic_set([Q, Q, Q], [np.ones(3), -np.ones(3), np.zeros(3)])

    def test_mixed_dimensions(self) -> None:
        with self.assertRaises(ObjectiveError):
            ObjectiveSet([Quadratic(np.eye(2), np.zeros(2)), Quadratic(np.eye(3), np.zeros(3))])

    def test_random_set_is_deterministic(self) -> None:
        a = random_quadratic_set(4, 10, seed=1)
        b = random_quadratic_set(4, 10, seed=1)
        for fa, fb in zip(a.locals, b.locals):
            assert_array_equal(fa.Q, fb.Q)
            assert_array_equal(fa.q, fb.q)
        self.assertEqual(a.seed, 1)
        c = random_quadratic_set(4, 10, seed=2)
        self.assertFalse(np.array_equal(a.locals[0].Q, c.locals[0].Q))

    def test_random_set_ranges(self) -> None:
        s = random_quadratic_set(20, 7, seed=2)
        for f in s.locals:
            self.assertGreaterEqual(np.linalg.eigvalsh(f.Q).min(), -1e-12)
            self.assertTrue(np.all(np.abs(f.q) <= 5.0))
        self.assertGreater(s.m_global, 0.0)

    def test_strong_monotonicity_and_lipschitz_of_sum(self) -> None:
        rng = np.random.default_rng(5)
        s = random_quadratic_set(4, 10, seed=1)
        for _ in range(20):
            z, y = rng.normal(size=10), rng.normal(size=10)
            dg = s.summed_gradient(z) - s.summed_gradient(y)
            dz = z - y
            self.assertGreaterEqual(dg @ dz, s.m_global * (dz @ dz) * (1 - 1e-9))
            self.assertLessEqual(np.linalg.norm(dg), s.l_global * np.linalg.norm(dz) * (1 + 1e-9))


class TestCentralMinimizer(unittest.TestCase):
    def test_single_quadratic(self) -> None:
        s = quadratic_set([np.diag([2.0, 4.0])], [np.array([2.0, -4.0])])
        assert_allclose(central_minimizer(s), [-1.0, 1.0], atol=1e-14)

    def test_random_quadratic_residual(self) -> None:
        s = random_quadratic_set(20, 7, seed=2)
        z = central_minimizer(s)
        self.assertLessEqual(np.linalg.norm(s.summed_gradient(z)), 1e-10)

    def test_trig_terms_cancel_in_the_sum(self) -> None:
        base = random_quadratic_set(4, 10, seed=1)
        trig = example1_trig_set(base)
        self.assertTrue(trig.has_trig)
        rng = np.random.default_rng(7)
        for _ in range(10):
            z = rng.normal(size=10)
            assert_allclose(trig.summed_gradient(z), base.summed_gradient(z), atol=1e-10)
        assert_allclose(central_minimizer(trig), central_minimizer(base), atol=1e-9)
        self.assertEqual(trig.m_global, base.m_global)

    def test_newton_on_a_genuinely_perturbed_sum(self) -> None:
        locals = [
            TrigPerturbedQuadratic(np.diag([2.0, 3.0, 4.0]), np.array([1.0, -2.0, 0.5]), [TrigTerm('sin', 0.5)]),
            TrigPerturbedQuadratic(np.eye(3), np.array([0.0, 1.0, -1.0]), [TrigTerm('cos', 0.25)]),
        ]
        s = ObjectiveSet(locals)
        self.assertGreater(s.m_global, 0.0)
        z = central_minimizer(s, tol=1e-11)
        self.assertLessEqual(np.linalg.norm(s.summed_gradient(z)), 1e-10)

    def test_singular_sum_raises_oracle_failure(self) -> None:
        # constants given by hand bypass the curvature check
        s = ObjectiveSet([Quadratic(np.diag([1.0, 0.0]), np.ones(2))], m_global=1.0, l_global=1.0)
        with self.assertRaises(OracleFailure) as ctx:
            central_minimizer(s)
        self.assertEqual(ctx.exception.iterations, 0)

    def test_newton_iteration_cap(self) -> None:
        trig = example1_trig_set(random_quadratic_set(4, 3, seed=1))
        with self.assertRaises(OracleFailure):
            central_minimizer(trig, max_iter=0)

    def test_local_nonconvexity(self) -> None:
        trig = example1_trig_set(random_quadratic_set(4, 10, seed=1))
        # +5cos on the fourth agent curves down by 5 at the origin
        h4 = hessian_local(trig.locals[3], np.zeros(10))
        self.assertLess(np.linalg.eigvalsh(h4).min(), 0.0)
        # -5cos on the third agent curves down near pi
        h3 = hessian_local(trig.locals[2], np.full(10, np.pi))
        self.assertLess(np.linalg.eigvalsh(h3).min(), 0.0)

    def test_benchmark_needs_four_agents(self) -> None:
        with self.assertRaises(InvalidBenchmark):
            example1_trig_set(random_quadratic_set(3, 2, seed=1))


if __name__ == '__main__':
    unittest.main()
