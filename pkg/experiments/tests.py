import csv
import json
import tempfile
from io import StringIO
from pathlib import Path
from unittest.mock import MagicMock, patch

import numpy as np
import yaml
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase

from core.exceptions import (
    ConfigError,
    ConvergenceFailure,
    NoAdmissibleStep,
    NotStronglyConnected,
    RowSumError,
)
from dynamics.state import CSV_HEADER, Trace
from experiments.loaders import (
    build_game,
    build_graph,
    build_initial_state,
    flatten_errors,
    load_config,
    validate_document,
)
from experiments.models import ExperimentRun
from experiments.services import FIG1_VARIANTS, ExperimentService
from experiments.tasks import run_variant

CONFIG_DIR = Path(settings.BASE_DIR) / "experiments" / "configs"


def two_player_document(**overrides):
    document = {
        "graph": {"matrix": [[0.5, 0.5], [0.25, 0.75]]},
        "game": {
            "type": "quadratic",
            "G": [[2.0, 1.0], [1.0, 2.0]],
            "g": [-1.0, 0.0],
            "boxes": {"lower": [0.0, 0.0], "upper": [5.0, 5.0]},
        },
        "algorithm": "alg1",
        "max_iters": 100000,
    }
    document.update(overrides)
    return document


def small_cournot_document(**overrides):
    document = {
        "graph": {
            "topology": "random-strongly-connected",
            "N": 4,
            "seed": 3,
            "density": 0.8,
            "self_loop": 0.2,
        },
        "game": {"type": "cournot", "N": 4, "m": 2, "seed": 3},
        "max_iters": 200,
        "stop_early": False,
    }
    document.update(overrides)
    return document


def errors_of(document) -> dict:
    try:
        validate_document(document)
    except ConfigError as error:
        return error.errors
    raise AssertionError("document unexpectedly validated")


class ConfigValidationTests(TestCase):
    """Test the serializer layer and its dotted error keys"""

    def test_defaults_are_filled_in(self):
        config = validate_document(two_player_document())

        self.assertEqual(config["step"]["mode"], "auto")
        self.assertEqual(config["engine"], "compact")
        self.assertFalse(config["thinning"])
        self.assertTrue(config["stop_early"])
        self.assertEqual(config["output_dir"], settings.NASH_OUTPUT_DIR)
        self.assertEqual(
            config["tolerances"]["row_sum"], settings.NASH_ROW_SUM_TOL
        )
        self.assertEqual(config["tolerances"]["stop"], settings.NASH_STOP_TOL)
        self.assertEqual(config["game"]["dims"], [1, 1])

    def test_ring_gets_default_self_loop(self):
        config = validate_document(small_cournot_document(
            graph={"topology": "ring", "N": 4}
        ))
        self.assertEqual(config["graph"]["self_loop"], 0.5)

    def test_non_square_matrix(self):
        errors = errors_of(two_player_document(graph={"matrix": [[0.5, 0.5]]}))
        self.assertIn("graph.matrix", errors)

    def test_negative_weight_points_at_the_entry(self):
        errors = errors_of(two_player_document(
            graph={"matrix": [[1.5, -0.5], [0.25, 0.75]]}
        ))
        self.assertIn("graph.matrix.0.1", errors)

    def test_unknown_keys_are_named(self):
        self.assertIn("colour", errors_of(two_player_document(colour="red")))

        document = two_player_document()
        document["game"]["extra"] = 1
        self.assertIn("game.extra", errors_of(document))

    def test_random_topology_needs_a_seed(self):
        document = small_cournot_document()
        del document["graph"]["seed"]
        self.assertIn("graph.seed", errors_of(document))

    def test_fixed_step_needs_a_value(self):
        errors = errors_of(two_player_document(step={"mode": "fixed"}))
        self.assertIn("step.value", errors)

    def test_tolerances_must_be_positive(self):
        errors = errors_of(two_player_document(tolerances={"stop": 0.0}))
        self.assertIn("tolerances.stop", errors)

    def test_g_and_G_must_agree(self):
        document = two_player_document()
        document["game"]["g"] = [-1.0, 0.0, 1.0]
        self.assertIn("game.G", errors_of(document))

    def test_box_length_checked(self):
        document = two_player_document()
        document["game"]["boxes"]["upper"] = [5.0]
        self.assertIn("game.boxes.upper", errors_of(document))

    def test_agent_counts_must_match(self):
        document = two_player_document()
        document["game"]["dims"] = [1, 1]
        document["graph"] = {"topology": "ring", "N": 3}
        self.assertIn("game", errors_of(document))

    def test_document_must_be_a_mapping(self):
        with self.assertRaises(ConfigError) as context:
            validate_document(["graph"])
        self.assertIn("config", context.exception.errors)
        self.assertEqual(context.exception.exit_code, 8)

    def test_participation_checked_per_agent(self):
        document = two_player_document(game={
            "type": "cournot",
            "N": 2,
            "m": 2,
            "seed": 0,
            "participation": [[0], [5]],
        })
        errors = errors_of(document)
        self.assertIn("game.participation.1", errors)
        self.assertNotIn("game.participation.0", errors)

    def test_participation_rejects_empty_and_repeated_markets(self):
        document = two_player_document(game={
            "type": "cournot",
            "N": 2,
            "m": 2,
            "seed": 0,
            "participation": [[], [1, 1]],
        })
        errors = errors_of(document)
        self.assertIn("game.participation.0", errors)
        self.assertIn("game.participation.1", errors)

    def test_flatten_errors(self):
        detail = {"graph": {"matrix": {0: {1: ["Too small."]}}}, "seed": ["Bad."]}
        self.assertEqual(
            dict(flatten_errors(detail)),
            {"graph.matrix.0.1": "Too small.", "seed": "Bad."},
        )


class LoaderTests(TestCase):
    """Test YAML loading and problem construction"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def test_shipped_configs_load(self):
        two_player = load_config(CONFIG_DIR / "two_player.yaml")
        desk = load_config(CONFIG_DIR / "cournot_desk.yaml")

        self.assertEqual(two_player["game"]["type"], "quadratic")
        self.assertEqual(desk["game"]["N"], 20)
        self.assertEqual(build_game(desk).n, 32)

    def test_invalid_yaml(self):
        path = Path(self.tmp.name) / "broken.yaml"
        path.write_text("graph: [unclosed\n")

        with self.assertRaises(ConfigError) as context:
            load_config(path)
        self.assertIn("config", context.exception.errors)

    def test_missing_file(self):
        with self.assertRaises(ConfigError):
            load_config(Path(self.tmp.name) / "absent.yaml")

    def test_graph_errors_keep_their_class(self):
        config = validate_document(two_player_document(
            graph={"matrix": [[0.5, 0.4], [0.25, 0.75]]}
        ))
        with self.assertRaises(RowSumError) as context:
            build_graph(config)
        self.assertTrue(str(context.exception).startswith("graph: "))

        config = validate_document(two_player_document(
            graph={"matrix": [[1.0, 0.0], [0.5, 0.5]]}
        ))
        with self.assertRaises(NotStronglyConnected):
            build_graph(config)

    def test_generated_graphs(self):
        config = validate_document(small_cournot_document())
        first, second = build_graph(config), build_graph(config)

        self.assertEqual(first.N, 4)
        np.testing.assert_array_equal(first.weights, second.weights)

    def test_null_bounds_are_unbounded(self):
        document = two_player_document()
        document["game"]["boxes"] = {"lower": [0.0, None]}
        game = build_game(validate_document(document))

        np.testing.assert_array_equal(game.lower, [0.0, -np.inf])
        np.testing.assert_array_equal(game.upper, [np.inf, np.inf])

    def test_random_quadratic_game_is_seeded(self):
        document = two_player_document(game={
            "type": "random-quadratic", "dims": [1, 2], "seed": 5, "mu": 2.0,
        })
        config = validate_document(document)
        first, second = build_game(config), build_game(config)

        self.assertEqual(first.n, 3)
        np.testing.assert_array_equal(first.G, second.G)

    def test_initial_state(self):
        config = validate_document(two_player_document(seed=7))
        game = build_game(validate_document(two_player_document(game={
            "type": "quadratic", "G": [[2.0, 1.0], [1.0, 2.0]],
            "g": [-1.0, 0.0],
        })))

        np.testing.assert_array_equal(
            build_initial_state(config, game).x_stack,
            build_initial_state(config, game).x_stack,
        )
        np.testing.assert_array_equal(
            build_initial_state(validate_document(two_player_document()), game)
            .x_stack,
            np.zeros(4),
        )


class CommandTestCase(TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.root = Path(self.tmp.name)

    def write_config(self, document, name="experiment.yaml") -> str:
        path = self.root / name
        path.write_text(yaml.safe_dump(document))
        return str(path)

    def call(self, *args, **options) -> str:
        out = StringIO()
        call_command(*args, stdout=out, **options)
        return out.getvalue()

    def exit_code(self, *args, **options) -> int:
        with self.assertRaises(CommandError) as context:
            self.call(*args, **options)
        return context.exception.returncode

    def command_error(self, *args, **options) -> CommandError:
        with self.assertRaises(CommandError) as context:
            self.call(*args, **options)
        return context.exception


class CertifyCommandTests(CommandTestCase):
    """Test the certify command"""

    def test_two_player_report(self):
        path = self.write_config(two_player_document())
        output = self.call("certify", config=path)

        self.assertIn("alpha_star:", output)
        self.assertIn("sigma_bar:", output)
        self.assertIn("Certified step", output)

    def test_json_report(self):
        path = self.write_config(two_player_document())
        report = json.loads(
            self.call("certify", config=path, json=True).rsplit("\n", 2)[0]
        )

        np.testing.assert_allclose(report["q"], [1 / 3, 2 / 3], atol=1e-10)
        self.assertAlmostEqual(report["ell"], np.sqrt(5.0))
        self.assertAlmostEqual(report["sqrt_rho"] ** 2, report["rho"])
        self.assertLess(report["rho"], 1.0)
        self.assertGreater(report["alpha_star"], 0.0)

    def test_single_agent_is_plain_projected_gradient(self):
        path = self.write_config({
            "graph": {"matrix": [[1.0]]},
            "game": {"type": "quadratic", "G": [[2.0]], "g": [-2.0]},
        })
        report = json.loads(
            self.call("certify", config=path, json=True).rsplit("\n", 2)[0]
        )

        self.assertEqual(report["sigma_bar"], 0.0)
        # (1 - 2 alpha)^2 < 1 on (0, 1)
        self.assertAlmostEqual(report["alpha_star"], 1.0, places=5)

    def test_invalid_config_exits_with_config_code(self):
        path = self.write_config(two_player_document(graph={"matrix": [[1.0]]}))
        self.assertEqual(self.exit_code("certify", config=path), 8)

    def test_reducible_graph_exits_with_graph_code(self):
        path = self.write_config(two_player_document(
            graph={"matrix": [[1.0, 0.0], [0.5, 0.5]]}
        ))
        self.assertEqual(self.exit_code("certify", config=path), 3)

    def test_monotonicity_failure_exits_with_game_code(self):
        document = two_player_document()
        document["game"]["G"] = [[0.0, 1.0], [-1.0, 0.0]]
        path = self.write_config(document)
        error = self.command_error("certify", config=path)
        self.assertEqual(error.returncode, 5)
        self.assertIn("game.G", str(error))

    def test_bad_participation_names_the_agent(self):
        document = small_cournot_document()
        document["game"]["participation"] = [[0], [1], [0, 1], [7]]
        path = self.write_config(document)

        error = self.command_error("certify", config=path)
        self.assertEqual(error.returncode, 8)
        self.assertIn("game.participation.3", str(error))

    @patch("experiments.services.max_step_size")
    def test_no_admissible_step_exit_code(self, mock_max_step):
        mock_max_step.side_effect = NoAdmissibleStep("no admissible step")
        path = self.write_config(two_player_document())

        self.assertEqual(self.exit_code("certify", config=path), 6)
        mock_max_step.assert_called_once()


class OracleCommandTests(CommandTestCase):
    """Test the oracle command"""

    def test_two_player_equilibrium(self):
        path = self.write_config(two_player_document())
        output = self.call("oracle", config=path)

        line = next(l for l in output.splitlines() if l.startswith("x*: "))
        x_star = [float(v) for v in line[5:-1].split(",")]
        np.testing.assert_allclose(x_star, [0.5, 0.0], atol=1e-8)
        self.assertIn("Equilibrium found", output)


class RunCommandTests(CommandTestCase):
    """Test the run command and its artifacts"""

    def test_certified_run_writes_artifacts(self):
        path = self.write_config(two_player_document())
        out = self.root / "run"
        output = self.call("run", config=path, out=str(out))

        self.assertIn("Trace written", output)
        for name in ("trace.csv", "certificate.json", "oracle.json",
                     "metadata.json"):
            self.assertTrue((out / name).exists(), name)

        with open(out / "trace.csv") as handle:
            rows = list(csv.reader(handle))
        self.assertEqual(tuple(rows[0]), CSV_HEADER)
        self.assertEqual(rows[1][0], "0")
        self.assertEqual(rows[1][4], "")

        metadata = json.loads((out / "metadata.json").read_text())
        self.assertEqual(metadata["status"], "completed")
        self.assertEqual(metadata["stop_reason"], "tolerance")
        self.assertEqual(metadata["alpha"], metadata["certified_alpha"])
        self.assertLessEqual(metadata["final_dist"], settings.NASH_STOP_TOL)
        self.assertEqual(metadata["seeds"]["graph"], None)

        run = ExperimentRun.objects.get()
        self.assertEqual(run.command, ExperimentRun.Command.RUN)
        self.assertEqual(run.status, ExperimentRun.Status.COMPLETED)
        self.assertEqual(run.iterations, metadata["iterations"])
        self.assertEqual(run.config_sha256, metadata["config_sha256"])

    def test_reruns_are_byte_identical(self):
        path = self.write_config(two_player_document(
            algorithm="alg2", step={"mode": "harmonic"}, max_iters=500,
            seed=4,
        ))
        self.call("run", config=path, out=str(self.root / "a"))
        self.call("run", config=path, out=str(self.root / "b"))

        self.assertEqual(
            (self.root / "a" / "trace.csv").read_bytes(),
            (self.root / "b" / "trace.csv").read_bytes(),
        )
        self.assertEqual(ExperimentRun.objects.count(), 2)

    def test_divergence_is_recorded(self):
        document = two_player_document(step={"mode": "fixed", "value": 1e8})
        del document["game"]["boxes"]
        path = self.write_config(document)
        out = self.root / "diverged"

        with np.errstate(over="ignore", invalid="ignore"):
            code = self.exit_code("run", config=path, out=str(out))

        self.assertEqual(code, 7)
        self.assertTrue((out / "last_finite_state.json").exists())
        self.assertTrue((out / "trace.csv").exists())
        metadata = json.loads((out / "metadata.json").read_text())
        self.assertEqual(metadata["status"], "diverged")
        self.assertEqual(metadata["stop_reason"], "diverged")
        self.assertEqual(
            ExperimentRun.objects.get().status, ExperimentRun.Status.DIVERGED
        )

    @patch("experiments.services.max_step_size")
    def test_fixed_step_runs_without_certificate(self, mock_max_step):
        mock_max_step.side_effect = NoAdmissibleStep("no admissible step")
        path = self.write_config(two_player_document(
            step={"mode": "fixed", "value": 0.05}
        ))
        out = self.root / "uncertified"
        self.call("run", config=path, out=str(out))

        self.assertFalse((out / "certificate.json").exists())
        metadata = json.loads((out / "metadata.json").read_text())
        self.assertIsNone(metadata["certified_alpha"])
        self.assertEqual(metadata["alpha"], 0.05)

    @patch("experiments.services.solve_ne")
    def test_oracle_failure_is_recorded(self, mock_solve):
        mock_solve.side_effect = ConvergenceFailure("residual stalled")
        path = self.write_config(two_player_document())
        out = self.root / "stalled"

        self.assertEqual(self.exit_code("run", config=path, out=str(out)), 4)
        self.assertFalse(out.exists())
        run = ExperimentRun.objects.get()
        self.assertEqual(run.status, ExperimentRun.Status.FAILED)
        self.assertEqual(run.output_dir, "")

    def test_graph_failure_leaves_no_output_dir(self):
        path = self.write_config(two_player_document(
            graph={"matrix": [[1.0, 0.0], [0.5, 0.5]]}
        ))
        out = self.root / "reducible"

        self.assertEqual(self.exit_code("run", config=path, out=str(out)), 3)
        self.assertFalse(out.exists())
        self.assertFalse(ExperimentRun.objects.exists())


class Fig1Tests(CommandTestCase):
    """Test the fig1 variants on a small Cournot market"""

    def test_command_writes_every_variant(self):
        path = self.write_config(small_cournot_document())
        out = self.root / "fig1"
        output = self.call("fig1", config=path, out=str(out))

        self.assertIn("fig1 data written", output)
        with open(out / "fig1.csv") as handle:
            rows = list(csv.reader(handle))
        self.assertEqual(tuple(rows[0]), ("variant",) + CSV_HEADER)
        for variant in FIG1_VARIANTS:
            self.assertEqual(
                sum(1 for row in rows[1:] if row[0] == variant), 201
            )

        metadata = json.loads((out / "fig1_metadata.json").read_text())
        self.assertEqual(set(metadata["variants"]), set(FIG1_VARIANTS))
        self.assertEqual(
            ExperimentRun.objects.get().command, ExperimentRun.Command.FIG1
        )

    def test_graph_failure_leaves_no_output_dir(self):
        document = small_cournot_document()
        document["graph"] = {"matrix": [
            [1.0, 0.0, 0.0, 0.0],
            [0.5, 0.5, 0.0, 0.0],
            [0.0, 0.5, 0.5, 0.0],
            [0.0, 0.0, 0.5, 0.5],
        ]}
        path = self.write_config(document)
        out = self.root / "fig1"

        self.assertEqual(self.exit_code("fig1", config=path, out=str(out)), 3)
        self.assertFalse(out.exists())

    def test_parallel_matches_inline(self):
        config = validate_document(small_cournot_document())
        ExperimentService.fig1(config, out_dir=self.root / "inline")
        ExperimentService.fig1(
            config, out_dir=self.root / "parallel", parallel=True
        )

        self.assertEqual(
            (self.root / "inline" / "fig1.csv").read_bytes(),
            (self.root / "parallel" / "fig1.csv").read_bytes(),
        )

    @patch("experiments.services.group")
    def test_parallel_dispatches_one_task_per_variant(self, mock_group):
        config = validate_document(small_cournot_document())
        results = {
            variant: ExperimentService.run_variant(config, variant).as_dict()
            for variant in FIG1_VARIANTS
        }
        pending = MagicMock()
        pending.results = [
            MagicMock(**{"get.return_value": results[variant]})
            for variant in FIG1_VARIANTS
        ]
        mock_group.return_value.apply_async.return_value = pending

        metadata = ExperimentService.fig1(
            config, out_dir=self.root / "mocked", parallel=True
        )

        signatures = list(mock_group.call_args.args[0])
        self.assertEqual(
            [signature.args[1] for signature in signatures],
            list(FIG1_VARIANTS),
        )
        mock_group.return_value.apply_async.assert_called_once()
        self.assertTrue(metadata["parallel"])
        self.assertEqual(
            metadata["variants"]["alg1-fixed"]["iterations"],
            results["alg1-fixed"]["iterations"],
        )

    def test_task_returns_a_serialized_trace(self):
        document = small_cournot_document()
        result = run_variant(document, "alg2-harmonic")
        inline = ExperimentService.run_variant(
            validate_document(document), "alg2-harmonic"
        )

        self.assertEqual(Trace.from_dict(result).to_csv(), inline.to_csv())


class DeskCournotTests(SimpleTestCase):
    """Qualitative behaviour of the variants on the shipped desk market"""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        config = dict(load_config(CONFIG_DIR / "cournot_desk.yaml"))
        config["max_iters"] = 4000
        cls.problem = ExperimentService.prepare(config)
        cls.certificate = ExperimentService.certify(cls.problem, config)
        solution = ExperimentService.solve(cls.problem, config)
        cls.traces = {
            variant: ExperimentService.run_variant(
                config, variant, cls.problem, cls.certificate, solution
            )
            for variant in FIG1_VARIANTS
        }

    def dist(self, variant) -> np.ndarray:
        return self.traces[variant].column("dist_q")

    def first_below(self, variant, threshold):
        hits = np.flatnonzero(self.dist(variant) <= threshold)
        return int(hits[0]) if hits.size else None

    def test_market_size_and_certified_step(self):
        self.assertEqual(self.problem.game.N, 20)
        self.assertEqual(self.problem.game.n, 32)
        self.assertGreater(self.problem.constants.mu, 0.0)
        self.assertGreaterEqual(self.certificate.alpha, 1e-6)
        self.assertLessEqual(self.certificate.alpha, 1e-3)

    def test_certified_fixed_steps_decrease(self):
        alg1 = self.dist("alg1-fixed")
        self.assertTrue(np.all(alg1[1:] <= alg1[:-1] * (1 + 1e-9)))

        alg2 = self.dist("alg2-fixed")
        self.assertTrue(np.all(alg2[1:] <= alg2[:-1] * (1 + 1e-9)))

    def test_fixed_step_schemes_nearly_coincide(self):
        alg1 = self.dist("alg1-fixed")[500:]
        alg2 = self.dist("alg2-fixed")[500:]
        self.assertLessEqual(np.max(np.abs(alg1 - alg2) / alg1), 0.1)

    def test_harmonic_steps_converge_faster(self):
        threshold = 1e-2 * self.dist("alg2-harmonic")[0]
        harmonic = self.first_below("alg2-harmonic", threshold)

        self.assertIsNotNone(harmonic)
        for variant in ("alg1-fixed", "alg2-fixed"):
            fixed = self.first_below(variant, threshold)
            self.assertTrue(fixed is None or harmonic < fixed)
        self.assertLessEqual(
            self.traces["alg2-harmonic"].last.qhat_error, 1e-10
        )

    def test_oversized_steps_converge_fastest(self):
        threshold = 1e-2 * self.dist("alg1-x400")[0]
        for variant in ("alg1-x400", "alg2-x400"):
            trace = self.traces[variant]
            dist = self.dist(variant)
            self.assertEqual(trace.stop_reason, "max_iters")
            self.assertEqual(len(trace.rows), 4001)
            self.assertTrue(np.all(np.isfinite(dist)))
            self.assertLessEqual(dist[-1], 1e-8)

            oversized = self.first_below(variant, threshold)
            self.assertIsNotNone(oversized)
            for certified in ("alg1-fixed", "alg2-fixed"):
                fixed = self.first_below(certified, threshold)
                self.assertTrue(fixed is None or oversized < fixed)
