import math

import numpy as np
from django.test import SimpleTestCase

from core.exceptions import (
    DimensionMismatch,
    InvalidParticipation,
    NotStronglyMonotone,
)
from games.cournot import (
    DESK_DIMENSION,
    CournotSpec,
    build_cournot,
    default_dimension,
    random_cournot_spec,
)
from games.games import (
    GameSpec,
    QuadraticGame,
    extended_jacobian,
    extended_pseudo_gradient,
    game_constants,
    project_box,
    pseudo_gradient,
    random_quadratic_game,
)


def two_player_game(lower=-np.inf, upper=np.inf):
    """J1 = x1^2 + x1 x2 - x1, J2 = x2^2 + x1 x2."""
    return QuadraticGame(
        dims=(1, 1),
        lower=lower,
        upper=upper,
        G=[[2.0, 1.0], [1.0, 2.0]],
        g=[-1.0, 0.0],
    )


def duopoly_spec(chi=1.5):
    return CournotSpec(
        N=2,
        m=1,
        participation=[[0], [0]],
        Qi=[np.array([2.0]), np.array([3.0])],
        qi_cost=[np.array([1.0]), np.array([1.5])],
        Pbar=np.array([12.0]),
        chi=np.array([chi]),
        Xi=[np.array([10.0]), np.array([10.0])],
    )


class PseudoGradientTests(SimpleTestCase):
    """Test F and the extended mapping on hand-derived values"""

    def test_two_player_values(self):
        game = two_player_game()

        np.testing.assert_allclose(pseudo_gradient(game, [0, 0]), [-1, 0])
        np.testing.assert_allclose(
            pseudo_gradient(game, [2 / 3, -1 / 3]), [0, 0], atol=1e-15
        )

    def test_extended_mapping_reads_each_agents_estimate(self):
        game = two_player_game()

        np.testing.assert_allclose(
            extended_pseudo_gradient(game, [1, 0, 2, 3]), [1, 8]
        )

    def test_extended_mapping_on_consensus_equals_f(self):
        rng = np.random.default_rng(0)
        game = random_quadratic_game(rng, (2, 1, 3))
        x = rng.normal(size=game.n)

        np.testing.assert_array_equal(
            extended_pseudo_gradient(game, np.tile(x, game.N)),
            game.pseudo_gradient(x),
        )

    def test_generic_gradient_callback_matches_affine_form(self):
        """A GameSpec driven by a callback agrees with the affine game"""
        affine = two_player_game()
        generic = GameSpec(
            dims=(1, 1),
            lower=-np.inf,
            upper=np.inf,
            gradient=lambda i, x: affine.G[i:i + 1] @ x + affine.g[i:i + 1],
        )
        stack = np.random.default_rng(1).normal(size=4)

        np.testing.assert_allclose(
            generic.extended_pseudo_gradient(stack),
            affine.extended_pseudo_gradient(stack),
        )
        np.testing.assert_allclose(
            generic.pseudo_gradient(stack[:2]),
            affine.pseudo_gradient(stack[:2]),
        )

    def test_zero_game(self):
        game = QuadraticGame(
            dims=(1, 2), lower=-np.inf, upper=np.inf,
            G=np.zeros((3, 3)), g=np.zeros(3),
        )
        stack = np.random.default_rng(2).normal(size=6)

        np.testing.assert_array_equal(
            extended_pseudo_gradient(game, stack), 0.0
        )

    def test_wrong_lengths_raise(self):
        game = two_player_game()

        with self.assertRaises(DimensionMismatch):
            pseudo_gradient(game, [1.0, 2.0, 3.0])
        with self.assertRaises(DimensionMismatch):
            extended_pseudo_gradient(game, [1.0, 2.0])

    def test_mismatched_matrix_raises(self):
        with self.assertRaises(DimensionMismatch):
            QuadraticGame(
                dims=(1, 1), lower=0, upper=1, G=np.eye(3), g=np.zeros(2)
            )

    def test_empty_box_raises(self):
        with self.assertRaises(ValueError):
            two_player_game(lower=[1.0, 0.0], upper=[0.0, 1.0])


class ProjectBoxTests(SimpleTestCase):
    """Test clamping onto an agent's box"""

    def setUp(self):
        self.game = QuadraticGame(
            dims=(1, 2),
            lower=0.0,
            upper=5.0,
            G=np.eye(3),
            g=np.zeros(3),
        )

    def test_interior_point_unchanged(self):
        np.testing.assert_array_equal(
            project_box(self.game, 1, [1.0, 4.0]), [1.0, 4.0]
        )

    def test_clamps_at_bounds(self):
        np.testing.assert_array_equal(project_box(self.game, 0, [-0.3]), [0])
        np.testing.assert_array_equal(
            project_box(self.game, 1, [6.0, 2.0]), [5.0, 2.0]
        )

    def test_idempotent(self):
        once = project_box(self.game, 1, [7.0, -2.0])
        np.testing.assert_array_equal(project_box(self.game, 1, once), once)

    def test_bad_agent_index(self):
        with self.assertRaises(IndexError):
            project_box(self.game, 2, [0.0])


class GameConstantsTests(SimpleTestCase):
    """Test mu, ell0 and ell"""

    def test_decoupled_quadratics(self):
        game = QuadraticGame(
            dims=(1, 1), lower=-np.inf, upper=np.inf,
            G=2 * np.eye(2), g=np.zeros(2),
        )
        constants = game_constants(game)

        self.assertAlmostEqual(constants.mu, 2.0)
        self.assertAlmostEqual(constants.ell0, 2.0)
        self.assertAlmostEqual(constants.ell, 2.0)

    def test_two_player_game(self):
        """Each row of G_ext = [[2,1,0,0],[0,0,1,2]] has norm sqrt(5)"""
        game = two_player_game()
        constants = game_constants(game)

        np.testing.assert_array_equal(
            extended_jacobian(game), [[2, 1, 0, 0], [0, 0, 1, 2]]
        )
        self.assertAlmostEqual(constants.mu, 1.0)
        self.assertAlmostEqual(constants.ell0, 3.0)
        self.assertAlmostEqual(constants.ell, math.sqrt(5.0))

    def test_not_strongly_monotone(self):
        game = QuadraticGame(
            dims=(1, 1), lower=-np.inf, upper=np.inf,
            G=[[0.0, 1.0], [-1.0, 0.0]], g=np.zeros(2),
        )
        with self.assertRaises(NotStronglyMonotone):
            game_constants(game)

    def test_sampled_monotonicity_and_lipschitz_bounds(self):
        rng = np.random.default_rng(4)
        for _ in range(5):
            game = random_quadratic_game(rng, (1, 2, 2), mu=0.5, coupling=1.0)
            c = game_constants(game)
            self.assertLessEqual(c.mu, c.ell + 1e-12)
            self.assertLessEqual(c.ell, c.ell0 + 1e-12)

            for _ in range(200):
                x, y = rng.normal(size=(2, game.n))
                diff = game.pseudo_gradient(x) - game.pseudo_gradient(y)
                gap = np.linalg.norm(x - y)
                self.assertGreaterEqual(
                    diff @ (x - y), c.mu * gap ** 2 - 1e-9
                )
                self.assertLessEqual(np.linalg.norm(diff), c.ell0 * gap + 1e-9)

                xs, ys = rng.normal(size=(2, game.N * game.n))
                ext = (
                    game.extended_pseudo_gradient(xs)
                    - game.extended_pseudo_gradient(ys)
                )
                self.assertLessEqual(
                    np.linalg.norm(ext), c.ell * np.linalg.norm(xs - ys) + 1e-9
                )

    def test_random_game_respects_mu_target(self):
        game = random_quadratic_game(
            np.random.default_rng(5), (1, 1, 1), mu=2.0, coupling=0.3
        )
        self.assertGreaterEqual(game_constants(game).mu, 2.0 - 1e-12)


class CostTests(SimpleTestCase):
    """Test cost evaluation against the assembled gradients"""

    def test_quadratic_cost_of_two_player_game(self):
        game = two_player_game()
        # J1(1, 2) = 1 + 2 - 1, J2(1, 2) = 4 + 2
        self.assertAlmostEqual(game.cost(0, np.array([1.0, 2.0])), 2.0)
        self.assertAlmostEqual(game.cost(1, np.array([1.0, 2.0])), 6.0)

    def test_cournot_gradient_matches_finite_differences(self):
        game = build_cournot(random_cournot_spec(N=6, m=3, seed=9))
        rng = np.random.default_rng(10)
        step = 1e-5

        for _ in range(100):
            x = rng.uniform(game.lower, game.upper)
            for i in range(game.N):
                rows = game.block(i)
                analytic = game.partial_gradient(i, x)
                numeric = np.empty_like(analytic)
                for j, index in enumerate(range(rows.start, rows.stop)):
                    up, down = x.copy(), x.copy()
                    up[index] += step
                    down[index] -= step
                    numeric[j] = (
                        game.cost(i, up) - game.cost(i, down)
                    ) / (2 * step)
                scale = max(np.linalg.norm(analytic), 1.0)
                self.assertLessEqual(
                    np.linalg.norm(numeric - analytic) / scale, 1e-6
                )


class CournotBuilderTests(SimpleTestCase):
    """Test assembly of the Nash-Cournot game"""

    def test_duopoly_matches_hand_derivation(self):
        game = build_cournot(duopoly_spec(chi=1.5))

        np.testing.assert_allclose(
            game.G, [[2 * 2 + 3.0, 1.5], [1.5, 2 * 3 + 3.0]]
        )
        np.testing.assert_allclose(game.g, [1.0 - 12.0, 1.5 - 12.0])
        np.testing.assert_array_equal(game.lower, [0.0, 0.0])
        np.testing.assert_array_equal(game.upper, [10.0, 10.0])

    def test_zero_price_slope_decouples(self):
        game = build_cournot(duopoly_spec(chi=0.0))

        np.testing.assert_array_equal(game.G, np.diag([4.0, 6.0]))

    def test_desk_scale_instance(self):
        spec = random_cournot_spec(N=20, m=7, seed=2020)
        game = build_cournot(spec)

        self.assertEqual(game.N, 20)
        self.assertEqual(game.n, DESK_DIMENSION)
        self.assertGreater(game_constants(game).mu, 0.0)
        served = {k for markets in spec.participation for k in markets}
        self.assertEqual(served, set(range(7)))
        self.assertTrue(np.all(spec.Pbar >= 10) and np.all(spec.Pbar <= 20))
        self.assertTrue(np.all(spec.chi >= 1) and np.all(spec.chi <= 3))

    def test_seed_pins_the_draw(self):
        first = build_cournot(random_cournot_spec(seed=3))
        second = build_cournot(random_cournot_spec(seed=3))

        np.testing.assert_array_equal(first.G, second.G)
        np.testing.assert_array_equal(first.g, second.g)
        np.testing.assert_array_equal(first.upper, second.upper)

    def test_explicit_participation_and_dimension(self):
        spec = random_cournot_spec(
            N=3, m=2, seed=0, participation=[[0], [0, 1], [1]]
        )
        self.assertEqual(build_cournot(spec).dims, (1, 2, 1))
        self.assertEqual(default_dimension(10, 4), 16)
        self.assertEqual(default_dimension(20, 7), 32)

    def test_invalid_participation(self):
        spec = duopoly_spec()
        for participation in ([[0], []], [[0], [1]], [[0]], [[0, 0], [0]]):
            bad = CournotSpec(
                N=2, m=1, participation=participation, Qi=spec.Qi,
                qi_cost=spec.qi_cost, Pbar=spec.Pbar, chi=spec.chi,
                Xi=spec.Xi,
            )
            with self.assertRaises(InvalidParticipation):
                build_cournot(bad)

    def test_impossible_total_dimension(self):
        with self.assertRaises(InvalidParticipation):
            random_cournot_spec(N=3, m=2, seed=0, n_total=7)
