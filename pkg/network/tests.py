import numpy as np
from django.test import SimpleTestCase
from scipy import linalg

from core.exceptions import (
    ConvergenceFailure,
    DimensionMismatch,
    InvalidWeights,
    NotStronglyConnected,
    RowSumError,
    ZeroDiagonal,
)
from network.generators import random_strongly_connected_weights, ring_weights
from network.graph import (
    consensus_decompose,
    pf_eigenvector,
    sigma_bar,
    stack_norm,
    validate_graph,
)

TWO_AGENTS = [[0.5, 0.5], [0.25, 0.75]]


def dense_left_eigenvector(weights):
    """Reference PF vector from a dense eigendecomposition of W^T."""
    values, vectors = linalg.eig(np.asarray(weights).T)
    top = vectors[:, np.argmax(values.real)].real
    return top / top.sum()


class ValidateGraphTests(SimpleTestCase):
    """Test acceptance and rejection of weight matrices"""

    def test_single_agent(self):
        """A lone agent with a self-loop is a valid network"""
        self.assertEqual(validate_graph([[1.0]]).N, 1)

    def test_two_agent_graph_is_valid(self):
        graph = validate_graph(TWO_AGENTS)

        self.assertEqual(graph.N, 2)
        self.assertEqual(list(graph.neighbors(0)), [0, 1])
        self.assertEqual(graph.in_degree(1), 2)

    def test_weights_are_read_only(self):
        graph = validate_graph(TWO_AGENTS)

        with self.assertRaises(ValueError):
            graph.weights[0, 0] = 1.0

    def test_reducible_matrix_rejected(self):
        """Agent 0 never hears from agent 1"""
        with self.assertRaises(NotStronglyConnected):
            validate_graph([[1.0, 0.0], [0.5, 0.5]])

    def test_row_sum_off_by_more_than_tolerance(self):
        with self.assertRaises(RowSumError):
            validate_graph([[0.5, 0.5 + 1e-9], [0.5, 0.5]])

    def test_row_sum_tolerance_is_configurable(self):
        graph = validate_graph(
            [[0.5, 0.5 + 1e-9], [0.5, 0.5]], row_sum_tol=1e-6
        )
        self.assertEqual(graph.N, 2)

    def test_zero_diagonal_rejected(self):
        with self.assertRaises(ZeroDiagonal):
            validate_graph([[0.0, 1.0], [0.5, 0.5]])

    def test_negative_or_non_finite_weights_rejected(self):
        with self.assertRaises(InvalidWeights):
            validate_graph([[1.5, -0.5], [0.5, 0.5]])
        with self.assertRaises(InvalidWeights):
            validate_graph([[np.nan, 1.0], [0.5, 0.5]])

    def test_non_square_matrix_rejected(self):
        with self.assertRaises(DimensionMismatch):
            validate_graph([[0.5, 0.5]])


class PerronFrobeniusTests(SimpleTestCase):
    """Test the left PF eigenvector and sigma_bar"""

    def test_doubly_stochastic_gives_uniform_q(self):
        spectral = pf_eigenvector(validate_graph([[0.5, 0.5], [0.5, 0.5]]))

        np.testing.assert_allclose(spectral.q, [0.5, 0.5], atol=1e-12)
        self.assertAlmostEqual(spectral.sigma_bar, 0.0, places=12)

    def test_two_agent_example(self):
        graph = validate_graph(TWO_AGENTS)
        spectral = pf_eigenvector(graph)

        np.testing.assert_allclose(spectral.q, [1 / 3, 2 / 3], atol=1e-11)
        np.testing.assert_allclose(
            spectral.q, dense_left_eigenvector(TWO_AGENTS), atol=1e-8
        )
        self.assertAlmostEqual(spectral.sigma_bar, 0.25, places=9)
        self.assertAlmostEqual(spectral.qmin, 1 / 3, places=11)
        self.assertAlmostEqual(spectral.qmax, 2 / 3, places=11)

    def test_three_node_ring(self):
        spectral = pf_eigenvector(validate_graph(ring_weights(3, 0.5)))

        np.testing.assert_allclose(spectral.q, np.full(3, 1 / 3), atol=1e-12)
        self.assertAlmostEqual(spectral.sigma_bar, 0.5, places=9)

    def test_single_agent(self):
        spectral = pf_eigenvector(validate_graph([[1.0]]))

        np.testing.assert_allclose(spectral.q, [1.0])
        self.assertEqual(spectral.sigma_bar, 0.0)

    def test_iteration_cap_raises(self):
        with self.assertRaises(ConvergenceFailure):
            pf_eigenvector(validate_graph(TWO_AGENTS), max_iter=1)

    def test_nonpositive_tolerance_rejected(self):
        with self.assertRaises(ValueError):
            pf_eigenvector(validate_graph(TWO_AGENTS), tol=0.0)

    def test_random_graphs_match_dense_oracles(self):
        """q, sigma_bar and the doubly stochastic special case"""
        for seed in range(10):
            N = 2 + seed
            weights = random_strongly_connected_weights(N, seed)
            graph = validate_graph(weights)
            spectral = pf_eigenvector(graph)
            q = spectral.q

            np.testing.assert_allclose(
                q, dense_left_eigenvector(weights), atol=1e-8
            )
            self.assertTrue(np.all(q > 0))
            self.assertAlmostEqual(q.sum(), 1.0, places=12)
            self.assertLessEqual(
                np.max(np.abs(q @ weights - q)), 1e-10
            )

            root = np.sqrt(q)
            scaled = (root[:, None] * weights) / root[None, :]
            singular = linalg.svdvals(scaled)
            self.assertAlmostEqual(singular[0], 1.0, places=9)
            self.assertAlmostEqual(spectral.sigma_bar, singular[1], places=9)

        ring = validate_graph(ring_weights(6, 0.3))
        spectral = pf_eigenvector(ring)
        np.testing.assert_allclose(spectral.q, np.full(6, 1 / 6), atol=1e-10)
        self.assertAlmostEqual(
            spectral.sigma_bar, linalg.svdvals(ring.weights)[1], places=9
        )

    def test_contraction_off_consensus(self):
        """||W y_perp||_Q <= sigma_bar ||y_perp||_Q on random vectors"""
        rng = np.random.default_rng(7)
        for seed in range(20):
            N = 2 + seed % 19
            graph = validate_graph(random_strongly_connected_weights(N, seed))
            spectral = pf_eigenvector(graph)
            q = spectral.q
            self.assertLess(spectral.sigma_bar, 1.0)

            y = rng.normal(size=(N, 1000))
            perp = y - np.outer(np.ones(N), q @ y)
            before = np.sqrt(q @ perp ** 2)
            after = np.sqrt(q @ (graph.weights @ perp) ** 2)
            self.assertTrue(
                np.all(after <= spectral.sigma_bar * before + 1e-10)
            )

    def test_sigma_bar_of_complete_uniform_graph(self):
        graph = validate_graph(np.full((4, 4), 0.25))
        self.assertAlmostEqual(sigma_bar(graph, np.full(4, 0.25)), 0.0)


class ConsensusDecomposeTests(SimpleTestCase):
    """Test the Q-orthogonal split onto the consensus subspace"""

    def test_two_agent_example(self):
        parallel, perp = consensus_decompose([3.0, 0.0], [1 / 3, 2 / 3], [1])

        np.testing.assert_allclose(parallel, [1.0, 1.0])
        np.testing.assert_allclose(perp, [2.0, -1.0])

    def test_consensus_stack_is_its_own_projection(self):
        y = np.array([1.0, -2.0, 0.5])
        stack = np.tile(y, 2)
        parallel, perp = consensus_decompose(stack, [0.4, 0.6], [1, 2])

        np.testing.assert_allclose(parallel, stack)
        np.testing.assert_allclose(perp, 0.0, atol=1e-15)

    def test_zero_stack(self):
        parallel, perp = consensus_decompose(np.zeros(6), [0.5, 0.5], [3])

        np.testing.assert_array_equal(parallel, 0.0)
        np.testing.assert_array_equal(perp, 0.0)

    def test_parts_are_q_orthogonal(self):
        rng = np.random.default_rng(3)
        q = np.array([0.2, 0.3, 0.5])
        stack = rng.normal(size=6)
        parallel, perp = consensus_decompose(stack, q, [1, 1])

        inner = np.repeat(q, 2) @ (parallel * perp)
        self.assertAlmostEqual(inner, 0.0, places=10)
        self.assertAlmostEqual(
            stack_norm(stack, q, 2) ** 2,
            stack_norm(parallel, q, 2) ** 2 + stack_norm(perp, q, 2) ** 2,
            places=10,
        )

    def test_wrong_length_raises(self):
        with self.assertRaises(DimensionMismatch):
            consensus_decompose(np.zeros(5), [0.5, 0.5], [1, 1])


class GeneratorTests(SimpleTestCase):
    """Test the topology generators"""

    def test_ring_is_doubly_stochastic(self):
        weights = ring_weights(5, 0.4)

        np.testing.assert_allclose(weights.sum(axis=0), 1.0)
        np.testing.assert_allclose(weights.sum(axis=1), 1.0)
        np.testing.assert_allclose(np.diag(weights), 0.4)

    def test_random_graphs_validate(self):
        for seed in range(15):
            weights = random_strongly_connected_weights(
                3 + seed, seed, density=0.2, self_loop=0.2
            )
            graph = validate_graph(weights)
            self.assertTrue(np.all(np.diag(graph.weights) >= 0.2 - 1e-12))

    def test_seed_pins_the_matrix(self):
        np.testing.assert_array_equal(
            random_strongly_connected_weights(8, 11),
            random_strongly_connected_weights(8, 11),
        )
        self.assertFalse(np.array_equal(
            random_strongly_connected_weights(8, 11),
            random_strongly_connected_weights(8, 12),
        ))

    def test_self_loop_below_minimum_rejected(self):
        with self.assertRaises(ValueError):
            random_strongly_connected_weights(4, 0, self_loop=0.05)
