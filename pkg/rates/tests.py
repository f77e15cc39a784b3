import math

import numpy as np
from django.test import SimpleTestCase

from core.exceptions import NoAdmissibleStep
from dynamics.algorithms import consensus_operator
from games.games import GameConstants, game_constants, random_quadratic_game
from network.generators import random_strongly_connected_weights
from network.graph import pf_eigenvector, stack_norm, validate_graph
from rates.certificates import (
    certify_step,
    m_alpha,
    max_step_size,
    rho_alpha,
    scaled_constants,
)


class ScaledConstantsTests(SimpleTestCase):
    """Test mu_bar = mu / qmax and ell_bar = ell / qmin"""

    def test_two_agent_weights(self):
        mu_bar, ell_bar = scaled_constants(
            GameConstants(mu=1.0, ell0=3.0, ell=3.0), [1 / 3, 2 / 3]
        )
        self.assertAlmostEqual(mu_bar, 1.5)
        self.assertAlmostEqual(ell_bar, 9.0)

    def test_single_agent_is_unscaled(self):
        self.assertEqual(
            scaled_constants(GameConstants(2.0, 5.0, 4.0), [1.0]), (2.0, 4.0)
        )

    def test_uniform_weights(self):
        mu_bar, ell_bar = scaled_constants(
            GameConstants(0.5, 2.0, 1.5), np.full(4, 0.25)
        )
        self.assertAlmostEqual(mu_bar, 2.0)
        self.assertAlmostEqual(ell_bar, 6.0)


class CertificateMatrixTests(SimpleTestCase):
    """Test M_alpha and its largest eigenvalue"""

    def test_zero_step(self):
        np.testing.assert_allclose(
            m_alpha(0.0, 1.5, 9.0, 0.25, 1 / 3), [[1.0, 0.0], [0.0, 0.0625]]
        )

    def test_no_network(self):
        np.testing.assert_allclose(
            m_alpha(0.5, 1.0, 1.0, 0.0, 1.0), [[0.25, 0.0], [0.0, 0.0]]
        )

    def test_entries_against_direct_evaluation(self):
        alpha, mu_bar, ell_bar, sigma, lam = 0.1, 1.5, 9.0, 0.25, 1 / 3
        M = m_alpha(alpha, mu_bar, ell_bar, sigma, lam)

        self.assertAlmostEqual(M[0, 0], 1 - 0.1 + 0.81)
        self.assertAlmostEqual(M[0, 1], 0.45)
        self.assertAlmostEqual(M[1, 0], 0.45)
        self.assertAlmostEqual(M[1, 1], (1 + 1.8 + 0.81) * 0.0625)

    def test_rho_examples(self):
        self.assertAlmostEqual(rho_alpha([[0.25, 0.0], [0.0, 0.0]]), 0.25)
        self.assertAlmostEqual(rho_alpha([[1.0, 0.0], [0.0, 0.36]]), 1.0)
        self.assertAlmostEqual(rho_alpha([[0.5, 0.3], [0.3, 0.5]]), 0.8)

    def test_rho_matches_dense_eigenvalues(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            M = m_alpha(*rng.uniform(0.01, 2.0, size=3), rng.uniform(), 0.5)
            self.assertAlmostEqual(
                rho_alpha(M), np.linalg.eigvalsh(M)[-1], places=10
            )


class MaxStepSizeTests(SimpleTestCase):
    """Test the bisection for the largest certified step"""

    def test_plain_projected_gradient_limit(self):
        """sigma_bar = 0 and unit constants: (1 - alpha)^2 < 1 up to 2"""
        certificate = max_step_size(
            GameConstants(1.0, 1.0, 1.0), [1.0], 0.0, tol=1e-12
        )
        self.assertAlmostEqual(certificate.alpha, 2.0, places=5)
        self.assertTrue(certificate.admissible)

    def test_complete_uniform_graph_matches_closed_form(self):
        tol = 1e-6
        c = GameConstants(mu=1.0, ell0=2.0, ell=2.0)
        q = np.full(3, 1 / 3)
        certificate = max_step_size(c, q, 0.0, tol=tol)

        mu_lam = 3.0 * (1 / 3)
        ell_bar = 6.0
        root = (mu_lam + math.sqrt(mu_lam ** 2 - tol * ell_bar ** 2))
        self.assertAlmostEqual(certificate.alpha, root / ell_bar ** 2, places=12)
        self.assertLessEqual(certificate.rho, 1 - tol)

    def test_admissible_set_is_an_interval_from_zero(self):
        c = GameConstants(mu=1.0, ell0=2.5, ell=2.0)
        q = np.array([0.2, 0.3, 0.5])
        certificate = max_step_size(c, q, 0.6)

        self.assertTrue(certificate.admissible)
        self.assertLess(certificate.rho, 1.0)
        self.assertAlmostEqual(
            certificate.contraction_factor, math.sqrt(certificate.rho)
        )
        for alpha in np.linspace(certificate.alpha / 100, certificate.alpha, 100):
            self.assertTrue(certify_step(alpha, c, q, 0.6).admissible)
        self.assertLess(
            certify_step(certificate.alpha / 2, c, q, 0.6).rho, 1.0
        )
        self.assertFalse(
            certify_step(2 * certificate.alpha, c, q, 0.6, 1e-6).admissible
        )

    def test_diagnostic_ell0_bar(self):
        certificate = certify_step(
            0.01, GameConstants(1.0, 3.0, 2.0), [0.25, 0.75], 0.3
        )
        self.assertAlmostEqual(certificate.ell0_bar, 12.0)

    def test_zero_step_is_not_admissible(self):
        certificate = certify_step(
            0.0, GameConstants(1.0, 1.0, 1.0), [0.5, 0.5], 0.5
        )
        self.assertAlmostEqual(certificate.rho, 1.0)
        self.assertFalse(certificate.admissible)

    def test_no_strong_monotonicity_means_no_step(self):
        with self.assertRaises(NoAdmissibleStep):
            max_step_size(GameConstants(0.0, 1.0, 1.0), [0.5, 0.5], 0.5)

    def test_nonpositive_tolerance_rejected(self):
        with self.assertRaises(ValueError):
            max_step_size(GameConstants(1.0, 1.0, 1.0), [1.0], 0.0, tol=0.0)


class RestrictedContractionTests(SimpleTestCase):
    """The pre-projection operator contracts towards consensus points"""

    def test_random_games_on_random_graphs(self):
        rng = np.random.default_rng(42)
        for trial in range(20):
            N = 2 + trial % 5
            graph = validate_graph(random_strongly_connected_weights(
                N, 100 + trial, density=0.6, self_loop=0.3
            ))
            spectral = pf_eigenvector(graph)
            dims = tuple(int(d) for d in rng.integers(1, 3, size=N))
            game = random_quadratic_game(rng, dims, mu=1.0, coupling=0.3)
            certificate = max_step_size(
                game_constants(game), spectral.q, spectral.sigma_bar
            )
            alpha = certificate.alpha
            bound = certificate.contraction_factor

            for _ in range(500):
                x = rng.normal(size=N * game.n)
                y = np.tile(rng.normal(size=game.n), N)
                gap = stack_norm(x - y, spectral.q, game.n)
                moved = stack_norm(
                    consensus_operator(x, graph, game, spectral.q, alpha)
                    - consensus_operator(y, graph, game, spectral.q, alpha),
                    spectral.q,
                    game.n,
                )
                self.assertLessEqual(moved, bound * gap + 1e-9)
