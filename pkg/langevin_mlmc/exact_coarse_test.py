import math
import os
import unittest
from unittest import mock

import numpy as np

from langevin_mlmc import exact_coarse
from langevin_mlmc.errors import BudgetExceededError, UnsupportedError
from langevin_mlmc.exact_coarse import enumerate_tree, exact_expectation, naive_expectation, plan
from langevin_mlmc.increments import DistributionKind, IncrementSource
from langevin_mlmc.integrators import Scheme, State, sample_paths, step
from langevin_mlmc.model import GaussianBump, Harmonic, LangevinModel, ShiftedSquare

SMALL_NOISE = LangevinModel(Harmonic(1.0), lam=1.0, sigma=0.4, q0=-1.0, p0=-1.0, T=1.0)
THREE = DistributionKind.THREE_POINT
FOUR = DistributionKind.FOUR_POINT
SE = Scheme.SYMPLECTIC_EULER_OU


class TestPlan(unittest.TestCase):

    def test_leaf_count(self):
        self.assertEqual(plan(SE, THREE, 4).total_leaves, 81)
        self.assertEqual(plan(Scheme.STORMER_VERLET_OU, FOUR, 2).total_leaves, 4**4)
        self.assertEqual(plan(SE, THREE, 3, dim=2).total_leaves, 9**3)

    def test_atoms_sum_to_one(self):
        for kind in (THREE, FOUR):
            tree = plan(SE, kind, 1)
            self.assertAlmostEqual(math.fsum(p for _, p in tree.atoms), 1.0, delta=1e-15)

    def test_branches_are_product_law(self):
        vectors, weights = plan(SE, THREE, 1, dim=2).branches()
        self.assertEqual(vectors.shape, (9, 2))
        self.assertAlmostEqual(math.fsum(weights), 1.0)
        self.assertAlmostEqual(weights[4], 4.0 / 9.0)

    def test_gaussian_is_unsupported(self):
        with self.assertRaises(UnsupportedError):
            plan(SE, DistributionKind.GAUSSIAN, 4)


class TestEnumeration(unittest.TestCase):

    def test_single_step_is_the_defining_sum(self):
        qoi = GaussianBump()
        h = SMALL_NOISE.T
        expected = 0.0
        for xi, prob in [(0.0, 2 / 3), (math.sqrt(3), 1 / 6), (-math.sqrt(3), 1 / 6)]:
            state = step(SE, SMALL_NOISE, State([-1.0], [-1.0]), h, np.array([xi]))
            expected += prob * float(qoi(state.q, state.p))
        self.assertAlmostEqual(exact_expectation(SMALL_NOISE, SE, qoi, 1, THREE), expected, delta=1e-15)

    def test_visits_every_leaf(self):
        cases = [
            (SE, THREE, 4, SMALL_NOISE),
            (Scheme.STORMER_VERLET_OU, FOUR, 2, SMALL_NOISE),
            (Scheme.EULER_MARUYAMA, THREE, 3, LangevinModel(Harmonic(1.0), 1.0, 0.4, [0.0, 1.0], [1.0, 0.0])),
        ]
        for scheme, kind, M0, model in cases:
            result = enumerate_tree(model, scheme, GaussianBump(), M0, kind)
            self.assertEqual(result.leaves, result.plan.total_leaves)
            self.assertEqual(result.nodes, result.plan.total_nodes)
            self.assertAlmostEqual(result.probability_mass, 1.0, delta=1e-12)

    def test_matches_naive_enumeration(self):
        qoi = GaussianBump()
        tree = exact_expectation(SMALL_NOISE, SE, qoi, 4, THREE)
        self.assertEqual(tree, naive_expectation(SMALL_NOISE, SE, qoi, 4, THREE))
        for scheme, kind, M0 in [(Scheme.STORMER_VERLET_OU, THREE, 2), (SE, FOUR, 3)]:
            tree = exact_expectation(SMALL_NOISE, scheme, qoi, M0, kind)
            naive = naive_expectation(SMALL_NOISE, scheme, qoi, M0, kind)
            self.assertAlmostEqual(tree, naive, delta=1e-13 * abs(naive))

    def test_depth_first_split(self):
        qoi = ShiftedSquare(1.0)
        naive = naive_expectation(SMALL_NOISE, SE, qoi, 4, THREE)
        with mock.patch.object(exact_coarse, "SUBTREE_LEAVES", 9):
            result = enumerate_tree(SMALL_NOISE, SE, qoi, 4, THREE)
            threaded = enumerate_tree(SMALL_NOISE, SE, qoi, 4, THREE, threads=4)
        self.assertAlmostEqual(result.value, naive, delta=1e-13 * abs(naive))
        self.assertEqual(result.value, threaded.value)
        self.assertEqual(result.leaves, 81)
        self.assertEqual(result.nodes, result.plan.total_nodes)

    def test_repeatable(self):
        values = {exact_expectation(SMALL_NOISE, SE, GaussianBump(), 6, FOUR) for _ in range(3)}
        self.assertEqual(len(values), 1)

    def test_no_noise_gives_the_deterministic_path(self):
        model = LangevinModel(Harmonic(1.0), lam=1.0, sigma=0.0, q0=-1.0, p0=-1.0)
        q, p = model.initial_state(1)
        for _ in range(5):
            q, p = step(SE, model, State(q[0], p[0]), 0.2, np.zeros(1))
            q, p = q[None, :], p[None, :]
        deterministic = float(GaussianBump()(q, p)[0])
        for kind in (THREE, FOUR):
            self.assertAlmostEqual(exact_expectation(model, SE, GaussianBump(), 5, kind), deterministic, delta=1e-14)

    def test_budget(self):
        with self.assertRaises(BudgetExceededError) as ctx:
            enumerate_tree(SMALL_NOISE, SE, GaussianBump(), 8, THREE, budget=1000)
        self.assertEqual(ctx.exception.leaves, 3**8)

    def test_gaussian_is_unsupported(self):
        with self.assertRaises(UnsupportedError):
            exact_expectation(SMALL_NOISE, SE, GaussianBump(), 2, DistributionKind.GAUSSIAN)

    def test_agrees_with_sampling(self):
        n = 200000
        draws = IncrementSource(THREE, 21).draw_array((n, 4, 1, 1))
        values = sample_paths(SE, SMALL_NOISE, 4, draws, GaussianBump())
        exact = exact_expectation(SMALL_NOISE, SE, GaussianBump(), 4, THREE)
        self.assertLess(abs(np.mean(values) - exact), 4 * np.std(values) / math.sqrt(n))


@unittest.skipUnless(os.environ.get("MLMC_SLOW_TESTS"), "set MLMC_SLOW_TESTS=1 to run")
class TestEnumerationAgainstLargeSample(unittest.TestCase):

    def test_ten_million_paths(self):
        exact = exact_expectation(SMALL_NOISE, SE, GaussianBump(), 4, THREE)
        total, total_sq, n = 0.0, 0.0, 0
        for block in range(100):
            draws = IncrementSource(THREE, 22, block).draw_array((100000, 4, 1, 1))
            values = sample_paths(SE, SMALL_NOISE, 4, draws, GaussianBump())
            total += float(np.sum(values))
            total_sq += float(np.sum(values * values))
            n += len(values)
        mean = total / n
        stderr = math.sqrt((total_sq / n - mean**2) / n)
        self.assertLess(abs(mean - exact), 4 * stderr)


if __name__ == "__main__":
    unittest.main()
