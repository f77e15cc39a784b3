import io

import numpy as np
from django.test import SimpleTestCase

from core.exceptions import DimensionMismatch, NonFiniteState
from dynamics.algorithms import (
    alg1_step,
    alg2_step,
    compact_alg2_iteration,
    compact_iteration,
    consensus_operator,
)
from dynamics.runner import StopRule, run
from dynamics.state import (
    CSV_HEADER,
    EigenvectorEstimates,
    EstimateState,
    StepSchedule,
    Trace,
    TraceRow,
    initial_state,
    project_stack,
    write_variants,
)
from games.games import QuadraticGame, game_constants, random_quadratic_game
from network.generators import random_strongly_connected_weights
from network.graph import pf_eigenvector, validate_graph
from oracle.solver import solve_ne
from rates.certificates import max_step_size

TWO_AGENTS = [[0.5, 0.5], [0.25, 0.75]]
Q_TWO = np.array([1 / 3, 2 / 3])


def two_player_game(lower=0.0, upper=5.0):
    return QuadraticGame(
        dims=(1, 1),
        lower=lower,
        upper=upper,
        G=[[2.0, 1.0], [1.0, 2.0]],
        g=[-1.0, 0.0],
    )


def random_setup(seed, boxed=False, density=0.8):
    """Dense random graph with a well-conditioned random game."""
    rng = np.random.default_rng(seed)
    N = 2 + seed % 3
    graph = validate_graph(random_strongly_connected_weights(
        N, seed, density=density, self_loop=0.3
    ))
    dims = tuple(int(d) for d in rng.integers(1, 3, size=N))
    bounds = (-2.0, 2.0) if boxed else (-np.inf, np.inf)
    game = random_quadratic_game(
        rng, dims, mu=2.0, coupling=0.2, lower=bounds[0], upper=bounds[1]
    )
    return rng, graph, game


def certified_setup(seed):
    rng, graph, game = random_setup(seed)
    spectral = pf_eigenvector(graph)
    constants = game_constants(game)
    certificate = max_step_size(constants, spectral.q, spectral.sigma_bar)
    solution = solve_ne(game, constants=constants)
    return graph, spectral, game, certificate, solution


def tail_ratio(values, start, stop):
    return (values[stop] / values[start]) ** (1.0 / (stop - start))


def envelope_ratio(values, start, stop):
    """Per-step decay measured from the peak of a short window at start."""
    peak = np.max(values[start - 2:start + 1])
    return (values[stop] / peak) ** (1.0 / (stop - start))


class AgentStepTests(SimpleTestCase):
    """Test one synchronous round on hand-computed examples"""

    def test_single_agent_reduces_to_projected_gradient(self):
        graph = validate_graph([[1.0]])
        game = QuadraticGame(dims=(1,), lower=0, upper=5, G=[[2.0]], g=[-2.0])

        nxt = alg1_step(EstimateState(np.zeros(1)), graph, game, [1.0], 0.1)

        np.testing.assert_allclose(nxt.x_stack, [0.2])
        self.assertEqual(nxt.k, 1)

    def test_two_player_round(self):
        graph = validate_graph(TWO_AGENTS)
        nxt = alg1_step(
            EstimateState(np.zeros(4)), graph, two_player_game(), Q_TWO, 0.1
        )
        np.testing.assert_allclose(nxt.x_stack, [0.3, 0.0, 0.0, 0.0])

    def test_equilibrium_consensus_is_a_fixed_point(self):
        graph = validate_graph(TWO_AGENTS)
        game = two_player_game()
        state = EstimateState(np.tile([0.5, 0.0], 2))

        nxt = alg1_step(state, graph, game, Q_TWO, 0.1)

        np.testing.assert_allclose(nxt.x_stack, state.x_stack, atol=1e-12)
        np.testing.assert_allclose(
            compact_iteration(state.x_stack, graph, game, Q_TWO, 0.1),
            state.x_stack,
            atol=1e-12,
        )

    def test_eigenvector_estimates_after_one_round(self):
        graph = validate_graph(TWO_AGENTS)
        _, eig = alg2_step(
            EstimateState(np.zeros(4)),
            EigenvectorEstimates.initial(2),
            graph,
            two_player_game(),
            0.1,
        )
        np.testing.assert_allclose(eig.qhat, TWO_AGENTS)
        np.testing.assert_allclose(eig.diagonal, [0.5, 0.75])

    def test_gradient_scaling_reads_pre_update_estimates(self):
        """At k=0 every qhat_ii is 1, so agent 1 moves by alpha, not 2alpha"""
        graph = validate_graph(TWO_AGENTS)
        nxt, _ = alg2_step(
            EstimateState(np.zeros(4)),
            EigenvectorEstimates.initial(2),
            graph,
            two_player_game(),
            0.1,
        )
        np.testing.assert_allclose(nxt.x_stack, [0.1, 0.0, 0.0, 0.0])

    def test_eigenvector_estimates_converge_to_q(self):
        graph = validate_graph(TWO_AGENTS)
        eig = EigenvectorEstimates.initial(2)
        state = EstimateState(np.zeros(4))
        for _ in range(60):
            state, eig = alg2_step(state, eig, graph, two_player_game(), 0.1)
            self.assertTrue(np.all(eig.diagonal > 0))
            np.testing.assert_allclose(eig.qhat.sum(axis=1), 1.0)

        self.assertLessEqual(eig.error(Q_TWO), 1e-10)

    def test_frozen_exact_estimates_match_algorithm_one(self):
        _, graph, game = random_setup(1, boxed=True)
        q = pf_eigenvector(graph).q
        state = initial_state(game, rng=np.random.default_rng(2))
        frozen = EigenvectorEstimates(np.tile(q, (graph.N, 1)))

        via_alg2, _ = alg2_step(state, frozen, graph, game, 0.05)
        via_alg1 = alg1_step(state, graph, game, q, 0.05)

        np.testing.assert_array_equal(via_alg2.x_stack, via_alg1.x_stack)

    def test_dimension_checks(self):
        graph = validate_graph(TWO_AGENTS)
        with self.assertRaises(DimensionMismatch):
            alg1_step(
                EstimateState(np.zeros(3)), graph, two_player_game(), Q_TWO,
                0.1,
            )
        with self.assertRaises(DimensionMismatch):
            alg2_step(
                EstimateState(np.zeros(4)),
                EigenvectorEstimates.initial(3),
                graph,
                two_player_game(),
                0.1,
            )


class CompactFormTests(SimpleTestCase):
    """Stacked iteration against the agent-level simulation"""

    def test_matches_agent_level_on_random_states(self):
        for seed in range(200):
            rng, graph, game = random_setup(seed % 40, boxed=seed % 2 == 0)
            q = pf_eigenvector(graph).q
            x = rng.normal(size=graph.N * game.n) * 3
            alpha = rng.uniform(0.01, 0.5)

            np.testing.assert_allclose(
                compact_iteration(x, graph, game, q, alpha),
                alg1_step(EstimateState(x), graph, game, q, alpha).x_stack,
                rtol=0,
                atol=1e-12,
            )

    def test_alg2_compact_matches_agent_level(self):
        rng, graph, game = random_setup(5, boxed=True)
        x = rng.normal(size=graph.N * game.n)
        qhat = np.eye(graph.N)
        state, eig = EstimateState(x), EigenvectorEstimates(qhat)

        for k in range(30):
            alpha = 1.0 / (k + 1)
            x, qhat = compact_alg2_iteration(x, qhat, graph, game, alpha)
            state, eig = alg2_step(state, eig, graph, game, alpha)

            np.testing.assert_allclose(x, state.x_stack, rtol=0, atol=1e-12)
            np.testing.assert_allclose(qhat, eig.qhat, rtol=0, atol=1e-14)

    def test_zero_step_is_pure_consensus(self):
        rng, graph, game = random_setup(3)
        q = pf_eigenvector(graph).q
        x = rng.normal(size=graph.N * game.n)
        mixed = (graph.weights @ x.reshape(graph.N, game.n)).ravel()

        np.testing.assert_allclose(
            consensus_operator(x, graph, game, q, 0.0), mixed
        )
        np.testing.assert_allclose(
            compact_iteration(x, graph, game, q, 0.0), mixed
        )

    def test_projection_touches_own_blocks_only(self):
        game = two_player_game()
        projected = project_stack(game, np.array([-1.0, 7.0, 9.0, -3.0]))

        np.testing.assert_array_equal(projected, [0.0, 7.0, 9.0, 0.0])


class StepScheduleTests(SimpleTestCase):
    """Test fixed, harmonic and custom schedules"""

    def test_fixed(self):
        schedule = StepSchedule.fixed(0.3)
        self.assertEqual(schedule.step(0), 0.3)
        self.assertEqual(schedule.step(1000), 0.3)
        self.assertIsNone(schedule.horizon)

    def test_harmonic(self):
        schedule = StepSchedule.harmonic()
        self.assertEqual(schedule.step(0), 1.0)
        self.assertAlmostEqual(schedule.step(9), 0.1)

    def test_custom(self):
        schedule = StepSchedule.custom([0.5, 0.5, 0.25])
        self.assertEqual(schedule.step(2), 0.25)
        self.assertEqual(schedule.horizon, 2)

    def test_invalid_schedules(self):
        with self.assertRaises(ValueError):
            StepSchedule.fixed(-0.1)
        with self.assertRaises(ValueError):
            StepSchedule.fixed(float("inf"))
        with self.assertRaises(ValueError):
            StepSchedule.custom([0.1, 0.2])
        with self.assertRaises(ValueError):
            StepSchedule.custom([0.1, 0.0])


class InitialStateTests(SimpleTestCase):
    """Test default and seeded initialisation"""

    def test_zero_default_projected(self):
        game = two_player_game(lower=1.0, upper=5.0)
        state = initial_state(game)

        np.testing.assert_array_equal(state.x_stack, [1.0, 0.0, 0.0, 1.0])
        np.testing.assert_array_equal(state.strategies(game), [1.0, 1.0])
        np.testing.assert_array_equal(state.agent(1, 2), [0.0, 1.0])

    def test_seeded_draw_is_reproducible_and_feasible(self):
        game = two_player_game()
        first = initial_state(game, rng=np.random.default_rng(8))
        second = initial_state(game, rng=np.random.default_rng(8))

        np.testing.assert_array_equal(first.x_stack, second.x_stack)
        strategies = first.strategies(game)
        self.assertTrue(np.all(strategies >= 0) and np.all(strategies <= 5))

    def test_wrong_length(self):
        with self.assertRaises(DimensionMismatch):
            initial_state(two_player_game(), x_stack=np.zeros(3))


class CertifiedRunTests(SimpleTestCase):
    """Linear convergence with the certified fixed step"""

    def test_algorithm_one_contracts_every_step(self):
        for seed in range(10):
            graph, spectral, game, certificate, solution = certified_setup(seed)
            trace = run(
                graph,
                game,
                StepSchedule.fixed(certificate.alpha),
                mode="alg1",
                q=spectral.q,
                stop=StopRule(max_iters=200_000, tol=1e-9),
                target=solution.x_star,
            )
            dist = trace.column("dist_q")

            self.assertEqual(trace.stop_reason, "tolerance")
            self.assertLessEqual(dist[-1], 1e-8)
            self.assertTrue(np.all(
                dist[1:] <= certificate.contraction_factor * dist[:-1] + 1e-9
            ))

    def test_algorithm_two_converges_at_a_linear_rate(self):
        for seed in range(10):
            graph, spectral, game, certificate, solution = certified_setup(seed)
            trace = run(
                graph,
                game,
                StepSchedule.fixed(certificate.alpha),
                mode="alg2",
                stop=StopRule(max_iters=200_000, tol=1e-9),
                target=solution.x_star,
            )
            dist = trace.column("dist_q")
            last = len(dist) - 1

            self.assertEqual(trace.stop_reason, "tolerance")
            self.assertLessEqual(dist[-1], 1e-8)
            self.assertLessEqual(
                tail_ratio(dist, last // 2, last),
                certificate.contraction_factor + 0.05,
            )
            self.assertLessEqual(trace.last.qhat_error, 1e-10)

    def test_eigenvector_error_rate_follows_second_eigenvalue(self):
        for seed in range(5):
            graph, spectral, game, certificate, solution = certified_setup(seed)
            moduli = np.sort(np.abs(np.linalg.eigvals(graph.weights)))
            lambda_2 = moduli[-2]

            trace = run(
                graph,
                game,
                StepSchedule.fixed(certificate.alpha),
                mode="alg2",
                stop=StopRule(max_iters=200, enabled=False),
            )
            errors = trace.column("qhat_error")
            above_floor = np.flatnonzero(errors > 1e-9)
            last = int(above_floor[-1])

            if last >= 4:
                start = max(last // 2, 2)
                self.assertLessEqual(
                    envelope_ratio(errors, start, last), lambda_2 + 0.05
                )
            self.assertLessEqual(errors[-1], 1e-10)


class VanishingStepTests(SimpleTestCase):
    """Algorithm 2 with the harmonic schedule"""

    def test_two_player_reference_game(self):
        graph = validate_graph(TWO_AGENTS)
        game = two_player_game()
        trace = run(
            graph,
            game,
            StepSchedule.harmonic(),
            mode="alg2",
            stop=StopRule(max_iters=100_000, tol=1e-4),
            target=[0.5, 0.0],
        )

        self.assertEqual(trace.stop_reason, "tolerance")
        self.assertLessEqual(trace.last.dist_q, 1e-4)
        np.testing.assert_allclose(
            EstimateState(trace.final_state).strategies(game),
            [0.5, 0.0],
            atol=1e-3,
        )

    def test_seeded_five_agent_game(self):
        rng = np.random.default_rng(2020)
        graph = validate_graph(random_strongly_connected_weights(
            5, 2020, density=0.5, self_loop=0.3
        ))
        game = random_quadratic_game(
            rng, (1, 1, 1, 1, 1), mu=2.0, coupling=0.3, lower=-5, upper=5
        )
        solution = solve_ne(game)
        trace = run(
            graph,
            game,
            StepSchedule.harmonic(),
            mode="alg2",
            stop=StopRule(max_iters=100_000, tol=1e-4),
            target=solution.x_star,
        )

        self.assertEqual(trace.stop_reason, "tolerance")
        self.assertLessEqual(trace.last.dist_q, 1e-4)


class RunnerTests(SimpleTestCase):
    """Test engines, stopping, thinning and the divergence guard"""

    def test_engines_produce_identical_trajectories(self):
        for seed in range(20):
            rng, graph, game = random_setup(seed, boxed=seed % 2 == 0)
            q = pf_eigenvector(graph).q
            init = initial_state(game, rng=rng)
            target = rng.normal(size=game.n)
            mode = "alg1" if seed % 2 else "alg2"
            schedule = (
                StepSchedule.fixed(0.05) if seed % 2
                else StepSchedule.harmonic()
            )
            traces = [
                run(
                    graph, game, schedule, mode=mode, q=q, init=init,
                    stop=StopRule(max_iters=100, enabled=False),
                    target=target, engine=engine,
                )
                for engine in ("agents", "compact")
            ]

            self.assertEqual(len(traces[0].rows), 101)
            self.assertEqual(traces[0].iterations, traces[1].iterations)
            np.testing.assert_allclose(
                traces[0].final_state, traces[1].final_state,
                rtol=0, atol=1e-12,
            )
            np.testing.assert_allclose(
                traces[0].column("dist_q"), traces[1].column("dist_q"),
                rtol=0, atol=1e-12,
            )

    def test_own_strategies_stay_in_their_boxes(self):
        rng, graph, game = random_setup(4, boxed=True)
        trace = run(
            graph, game, StepSchedule.fixed(1.0),
            q=pf_eigenvector(graph).q,
            init=initial_state(game, rng=rng),
            stop=StopRule(max_iters=50, enabled=False),
        )
        strategies = EstimateState(trace.final_state).strategies(game)

        self.assertTrue(np.all(strategies >= game.lower))
        self.assertTrue(np.all(strategies <= game.upper))

    def test_zero_step_reaches_consensus_not_equilibrium(self):
        graph = validate_graph(TWO_AGENTS)
        game = two_player_game(lower=-np.inf, upper=np.inf)
        trace = run(
            graph, game, StepSchedule.fixed(0.0), q=Q_TWO,
            init=EstimateState(np.array([1.0, 2.0, 3.0, 4.0])),
            stop=StopRule(max_iters=200, enabled=False),
            target=[2 / 3, -1 / 3],
        )

        self.assertLessEqual(trace.last.consensus_residual, 1e-12)
        self.assertGreater(trace.last.dist_q, 1.0)

    def test_divergence_raises_with_partial_trace(self):
        graph = validate_graph(TWO_AGENTS)
        game = two_player_game(lower=-np.inf, upper=np.inf)

        with np.errstate(all="ignore"):
            with self.assertRaises(NonFiniteState) as context:
                run(
                    graph, game, StepSchedule.fixed(1e8), q=Q_TWO,
                    init=EstimateState(np.ones(4)),
                    stop=StopRule(max_iters=10_000, enabled=False),
                )

        error = context.exception
        self.assertEqual(error.trace.stop_reason, "diverged")
        self.assertEqual(len(error.trace.rows), error.iteration)
        self.assertTrue(np.all(np.isfinite(error.last_state)))

    def test_log_spaced_thinning(self):
        graph = validate_graph(TWO_AGENTS)
        trace = run(
            graph, two_player_game(), StepSchedule.fixed(0.1), q=Q_TWO,
            stop=StopRule(max_iters=100, enabled=False), thinning=True,
        )
        self.assertEqual(
            [row.k for row in trace.rows],
            [0, 1, 2, 4, 8, 16, 32, 64, 100],
        )

    def test_custom_schedule_bounds_the_run(self):
        graph = validate_graph(TWO_AGENTS)
        trace = run(
            graph, two_player_game(), StepSchedule.custom([0.2, 0.1, 0.1]),
            q=Q_TWO, stop=StopRule(enabled=False),
        )
        self.assertEqual(trace.iterations, 2)

    def test_algorithm_one_needs_q(self):
        graph = validate_graph(TWO_AGENTS)
        with self.assertRaises(ValueError):
            run(graph, two_player_game(), StepSchedule.fixed(0.1))
        with self.assertRaises(ValueError):
            run(
                graph, two_player_game(), StepSchedule.fixed(0.1),
                q=Q_TWO, mode="alg3",
            )


class TraceCsvTests(SimpleTestCase):
    """Test the CSV layout of traces"""

    def test_header_and_empty_fields(self):
        trace = Trace(rows=[TraceRow(0, 0.1, None, 0.5, None)])

        self.assertEqual(
            trace.to_csv(),
            ",".join(CSV_HEADER) + "\n0,0.1,,0.5,\n",
        )

    def test_dict_form_preserves_csv_bytes(self):
        graph = validate_graph(TWO_AGENTS)
        trace = run(
            graph, two_player_game(), StepSchedule.harmonic(), mode="alg2",
            stop=StopRule(max_iters=30, enabled=False), target=[0.5, 0.0],
        )
        restored = Trace.from_dict(trace.as_dict())

        self.assertEqual(restored.to_csv(), trace.to_csv())
        np.testing.assert_array_equal(restored.final_state, trace.final_state)

    def test_long_format_variants(self):
        traces = {
            "a": Trace(rows=[TraceRow(0, 1.0, 2.0, 3.0, None)]),
            "b": Trace(rows=[TraceRow(0, 1.0, 2.0, 3.0, 0.5)]),
        }
        buffer = io.StringIO()
        write_variants(buffer, traces)

        self.assertEqual(
            buffer.getvalue().splitlines(),
            [
                "variant," + ",".join(CSV_HEADER),
                "a,0,1.0,2.0,3.0,",
                "b,0,1.0,2.0,3.0,0.5",
            ],
        )

    def test_repeated_runs_are_byte_identical(self):
        _, graph, game = random_setup(6, boxed=True)
        q = pf_eigenvector(graph).q

        def once():
            return run(
                graph, game, StepSchedule.fixed(0.05), q=q,
                init=initial_state(game, rng=np.random.default_rng(1)),
                stop=StopRule(max_iters=50, enabled=False),
                target=np.zeros(game.n),
            ).to_csv()

        self.assertEqual(once(), once())
