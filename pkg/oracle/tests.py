import numpy as np
from django.test import SimpleTestCase

from core.exceptions import ConvergenceFailure, DimensionMismatch
from dynamics.runner import StopRule, run
from dynamics.state import EstimateState, StepSchedule
from games.games import (
    GameConstants,
    GameSpec,
    QuadraticGame,
    game_constants,
    random_quadratic_game,
)
from network.graph import pf_eigenvector, validate_graph
from oracle.solver import is_equilibrium, solve_ne, verify_ne
from rates.certificates import max_step_size


def two_player_game(lower=-np.inf, upper=np.inf):
    return QuadraticGame(
        dims=(1, 1),
        lower=lower,
        upper=upper,
        G=[[2.0, 1.0], [1.0, 2.0]],
        g=[-1.0, 0.0],
    )


class SolveNeTests(SimpleTestCase):
    """Test the centralised equilibrium solver"""

    def test_unconstrained_reference_game(self):
        solution = solve_ne(two_player_game())

        np.testing.assert_allclose(solution.x_star, [2 / 3, -1 / 3], atol=1e-8)
        self.assertEqual(solution.iterations, 0)
        self.assertLessEqual(solution.residual, 1e-12)

    def test_boxed_reference_game(self):
        solution = solve_ne(two_player_game(lower=0.0, upper=5.0))

        np.testing.assert_allclose(solution.x_star, [0.5, 0.0], atol=1e-8)
        self.assertGreater(solution.iterations, 0)
        self.assertAlmostEqual(solution.gamma, 1 / 9)

    def test_unique_from_random_starts(self):
        tol = 1e-10
        rng = np.random.default_rng(11)
        game = random_quadratic_game(
            rng, (1, 2, 1), mu=2.0, coupling=0.2, lower=-0.3, upper=0.3
        )
        solutions = [
            solve_ne(game, tol=tol, x0=rng.uniform(-3, 3, size=game.n)).x_star
            for _ in range(10)
        ]
        for x_star in solutions[1:]:
            self.assertLessEqual(
                np.max(np.abs(x_star - solutions[0])), 10 * tol
            )

    def test_generic_game_with_explicit_constants(self):
        affine = two_player_game(lower=0.0, upper=5.0)
        generic = GameSpec(
            dims=(1, 1),
            lower=0.0,
            upper=5.0,
            gradient=lambda i, x: affine.G[i:i + 1] @ x + affine.g[i:i + 1],
        )
        solution = solve_ne(generic, constants=game_constants(affine))

        np.testing.assert_allclose(solution.x_star, [0.5, 0.0], atol=1e-8)

        with self.assertRaises(ValueError):
            solve_ne(generic)

    def test_iteration_cap(self):
        with self.assertRaises(ConvergenceFailure):
            solve_ne(
                two_player_game(lower=0.0, upper=5.0),
                x0=[4.0, 4.0],
                max_iters=1,
            )

    def test_nonpositive_tolerance(self):
        with self.assertRaises(ValueError):
            solve_ne(two_player_game(), tol=0.0)

    def test_matches_converged_distributed_run(self):
        game = two_player_game(lower=0.0, upper=5.0)
        graph = validate_graph([[0.5, 0.5], [0.25, 0.75]])
        spectral = pf_eigenvector(graph)
        certificate = max_step_size(
            game_constants(game), spectral.q, spectral.sigma_bar
        )
        solution = solve_ne(game)

        trace = run(
            graph,
            game,
            StepSchedule.fixed(certificate.alpha),
            q=spectral.q,
            stop=StopRule(max_iters=200_000, tol=1e-10),
            target=solution.x_star,
        )

        self.assertEqual(trace.stop_reason, "tolerance")
        np.testing.assert_allclose(
            EstimateState(trace.final_state).strategies(game),
            solution.x_star,
            atol=1e-8,
        )


class VerifyNeTests(SimpleTestCase):
    """Test the fixed-point residual certificate"""

    def setUp(self):
        self.game = two_player_game(lower=0.0, upper=5.0)

    def test_exact_solution_has_tiny_residual(self):
        solution = solve_ne(self.game)
        self.assertLessEqual(
            verify_ne(self.game, solution.x_star, solution.gamma), 1e-11
        )

    def test_perturbed_point_is_rejected(self):
        for gamma in (0.01, 0.1, 1.0):
            residual = verify_ne(self.game, [0.6, 0.0], gamma)
            self.assertGreaterEqual(residual, 0.1 * gamma * 1.0 - 1e-12)
            self.assertGreater(residual, 0.0)

    def test_verdict_does_not_depend_on_gamma(self):
        tol = 1e-9
        points = ([0.5, 0.0], [0.6, 0.0], [0.5, 0.2], [0.0, 0.0])
        for point in points:
            verdicts = {
                is_equilibrium(self.game, point, gamma, tol)
                for gamma in (0.01, 0.1, 1.0)
            }
            self.assertEqual(len(verdicts), 1)
        self.assertTrue(is_equilibrium(self.game, [0.5, 0.0], 1.0, tol))
        self.assertFalse(is_equilibrium(self.game, [0.0, 0.0], 1.0, tol))

    def test_bad_inputs(self):
        with self.assertRaises(DimensionMismatch):
            verify_ne(self.game, [0.5])
        with self.assertRaises(ValueError):
            verify_ne(self.game, [0.5, 0.0], gamma=0.0)

    def test_constants_are_accepted_verbatim(self):
        solution = solve_ne(
            self.game, constants=GameConstants(mu=1.0, ell0=4.0, ell=3.0)
        )
        self.assertAlmostEqual(solution.gamma, 1 / 16)
        np.testing.assert_allclose(solution.x_star, [0.5, 0.0], atol=1e-8)
