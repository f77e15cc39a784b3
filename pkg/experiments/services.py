import hashlib
import json
import logging
import platform
import time
from dataclasses import dataclass
from pathlib import Path

import django
import numpy as np
import scipy
from celery import group
from django.conf import settings
from scipy import linalg

from core.exceptions import (
    NashError,
    NoAdmissibleStep,
    NonFiniteState,
    SpectralError,
)
from dynamics.runner import StopRule, run
from dynamics.state import StepSchedule, Trace, write_variants
from experiments.loaders import (
    build_constants,
    build_game,
    build_graph,
    build_initial_state,
)
from experiments.models import ExperimentRun
from games.games import GameConstants, QuadraticGame
from network.graph import Graph, SpectralData, pf_eigenvector
from oracle.solver import NESolution, solve_ne
from rates.certificates import StepCertificate, max_step_size

logger = logging.getLogger(__name__)

OVERSIZED_FACTOR = 400.0

# variant name -> (algorithm, step mode, multiple of the certified step)
FIG1_VARIANTS = {
    "alg1-fixed": ("alg1", "fixed", 1.0),
    "alg2-fixed": ("alg2", "fixed", 1.0),
    "alg2-harmonic": ("alg2", "harmonic", None),
    "alg1-x400": ("alg1", "fixed", OVERSIZED_FACTOR),
    "alg2-x400": ("alg2", "fixed", OVERSIZED_FACTOR),
}


@dataclass(frozen=True, eq=False)
class Problem:
    graph: Graph
    spectral: SpectralData
    game: QuadraticGame
    constants: GameConstants


def config_digest(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, default=list)
    return hashlib.sha256(canonical.encode()).hexdigest()


def _seeds(config: dict) -> dict:
    return {
        "graph": config["graph"].get("seed"),
        "game": config["game"].get("seed"),
        "initial_state": config.get("seed"),
    }


def _versions() -> dict:
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "django": django.get_version(),
    }


def _write_json(path: Path, payload: dict):
    with open(path, "w") as handle:
        json.dump(payload, handle, indent=2)
        handle.write("\n")


class ExperimentService:
    @staticmethod
    def prepare(config: dict) -> Problem:
        """Graph, PF data, game and its constants for a validated config."""
        tolerances = config["tolerances"]
        graph = build_graph(config)
        spectral = pf_eigenvector(graph, tol=tolerances["pf"])

        eigen_residual = float(np.max(np.abs(
            spectral.q @ graph.weights - spectral.q
        )))
        if eigen_residual > tolerances["eigen"]:
            raise SpectralError(
                f"PF eigenvector residual {eigen_residual:.3e} exceeds "
                f"{tolerances['eigen']:g}"
            )

        game = build_game(config)
        return Problem(graph, spectral, game, build_constants(config, game))

    @staticmethod
    def certify(problem: Problem, config: dict) -> StepCertificate:
        return max_step_size(
            problem.constants,
            problem.spectral.q,
            problem.spectral.sigma_bar,
            tol=config["tolerances"]["margin"],
            iterations=settings.NASH_BISECTION_ITERS,
        )

    @staticmethod
    def report(problem: Problem, certificate: StepCertificate) -> dict:
        """Everything the ``certify`` command prints, in display order."""
        q = problem.spectral.q
        root = np.sqrt(q)
        weighted = (root[:, None] * problem.graph.weights) / root[None, :]
        return {
            "N": problem.game.N,
            "n": problem.game.n,
            "q": q.tolist(),
            "pf_iterations": problem.spectral.iterations,
            "sigma_bar": problem.spectral.sigma_bar,
            "mu": problem.constants.mu,
            "ell0": problem.constants.ell0,
            "ell": problem.constants.ell,
            "mu_bar": certificate.mu_bar,
            "ell_bar": certificate.ell_bar,
            "ell0_bar": certificate.ell0_bar,
            "lambda_min_Q": certificate.lambda_min_Q,
            "alpha_star": certificate.alpha,
            "rho": certificate.rho,
            "sqrt_rho": certificate.contraction_factor,
            "w_norm": float(linalg.norm(problem.graph.weights, 2)),
            "w_norm_q": float(linalg.norm(weighted, 2)),
        }

    @staticmethod
    def format_report(report: dict) -> str:
        lines = []
        for key, value in report.items():
            if isinstance(value, list):
                value = "[" + ", ".join(f"{v:.12g}" for v in value) + "]"
            elif isinstance(value, float):
                value = f"{value:.12g}"
            lines.append(f"{key}: {value}")
        return "\n".join(lines)

    @staticmethod
    def solve(problem: Problem, config: dict) -> NESolution:
        return solve_ne(
            problem.game,
            tol=config["tolerances"]["oracle"],
            constants=problem.constants,
        )

    @staticmethod
    def resolve_schedule(
        step: dict,
        certificate: StepCertificate | None,
    ) -> StepSchedule:
        mode = step["mode"]
        if mode == "harmonic":
            return StepSchedule.harmonic()
        if mode == "fixed":
            return StepSchedule.fixed(step["value"])
        if mode == "multiple":
            return StepSchedule.fixed(step["factor"] * certificate.alpha)
        return StepSchedule.fixed(certificate.alpha)

    @staticmethod
    def iterate(
        problem: Problem,
        config: dict,
        algorithm: str,
        schedule: StepSchedule,
        target,
        stop_early: bool,
    ) -> Trace:
        return run(
            problem.graph,
            problem.game,
            schedule,
            mode=algorithm,
            q=problem.spectral.q,
            init=build_initial_state(config, problem.game),
            stop=StopRule(
                max_iters=config["max_iters"],
                tol=config["tolerances"]["stop"],
                enabled=stop_early,
            ),
            target=target,
            engine=config["engine"],
            thinning=config["thinning"],
        )

    @staticmethod
    def record_failure(
        config: dict, config_path: str, started: float, output_dir: str = ""
    ) -> ExperimentRun:
        """Ledger row for a run that ended in an error."""
        logger.warning(f"Run of {config['algorithm']} failed")
        return ExperimentRun.objects.create(
            command=ExperimentRun.Command.RUN,
            algorithm=config["algorithm"],
            status=ExperimentRun.Status.FAILED,
            config_path=config_path,
            config_sha256=config_digest(config),
            seeds=_seeds(config),
            iterations=0,
            wall_time=time.perf_counter() - started,
            output_dir=output_dir,
        )

    @staticmethod
    def run(config: dict, out_dir=None, config_path: str = "") -> dict:
        """
        Oracle, certificate and one algorithm run. Writes trace.csv,
        certificate.json, oracle.json and metadata.json into ``out_dir``.
        """
        started = time.perf_counter()
        out = Path(out_dir or config["output_dir"])

        problem = ExperimentService.prepare(config)
        try:
            certificate = ExperimentService.certify(problem, config)
        except NoAdmissibleStep:
            if config["step"]["mode"] in ("auto", "multiple"):
                raise
            certificate = None
        schedule = ExperimentService.resolve_schedule(
            config["step"], certificate
        )
        try:
            solution = ExperimentService.solve(problem, config)
        except NashError:
            ExperimentService.record_failure(config, config_path, started)
            raise

        out.mkdir(parents=True, exist_ok=True)

        if certificate is not None:
            _write_json(
                out / "certificate.json",
                ExperimentService.report(problem, certificate),
            )
        _write_json(out / "oracle.json", {
            "x_star": solution.x_star.tolist(),
            "residual": solution.residual,
            "iterations": solution.iterations,
            "gamma": solution.gamma,
        })

        status = ExperimentRun.Status.COMPLETED
        failure = None
        try:
            trace = ExperimentService.iterate(
                problem,
                config,
                config["algorithm"],
                schedule,
                solution.x_star,
                config["stop_early"],
            )
        except NonFiniteState as error:
            status = ExperimentRun.Status.DIVERGED
            failure = error
            trace = error.trace
            _write_json(out / "last_finite_state.json", {
                "iteration": error.iteration - 1,
                "x_stack": np.asarray(error.last_state).tolist(),
            })
        except NashError:
            ExperimentService.record_failure(
                config, config_path, started, str(out)
            )
            raise

        with open(out / "trace.csv", "w", newline="") as handle:
            trace.write_csv(handle)

        alpha = schedule.alpha if schedule.mode == "fixed" else None
        certified_alpha = certificate.alpha if certificate else None
        final_dist = trace.last.dist_q if trace.rows else None
        metadata = {
            "command": ExperimentRun.Command.RUN.value,
            "algorithm": config["algorithm"],
            "status": status.value,
            "config_path": config_path,
            "config_sha256": config_digest(config),
            "seeds": _seeds(config),
            "versions": _versions(),
            "alpha": alpha,
            "certified_alpha": certified_alpha,
            "iterations": trace.iterations,
            "stop_reason": trace.stop_reason,
            "final_dist": final_dist,
            "wall_time": time.perf_counter() - started,
        }
        _write_json(out / "metadata.json", metadata)

        ExperimentRun.objects.create(
            command=ExperimentRun.Command.RUN,
            algorithm=config["algorithm"],
            status=status,
            config_path=config_path,
            config_sha256=metadata["config_sha256"],
            seeds=metadata["seeds"],
            alpha=alpha,
            certified_alpha=certified_alpha,
            iterations=trace.iterations,
            final_dist=final_dist,
            wall_time=metadata["wall_time"],
            output_dir=str(out),
        )

        if failure is not None:
            raise failure
        logger.info(
            f"Run finished after {trace.iterations} iterations, "
            f"artifacts in {out}"
        )
        return metadata

    @staticmethod
    def run_variant(
        config: dict,
        variant: str,
        problem: Problem | None = None,
        certificate: StepCertificate | None = None,
        solution: NESolution | None = None,
    ) -> Trace:
        """
        One fig1 variant with early stopping off. A diverging over-sized
        run comes back truncated instead of raising.
        """
        algorithm, mode, factor = FIG1_VARIANTS[variant]
        if problem is None:
            problem = ExperimentService.prepare(config)
        if certificate is None:
            certificate = ExperimentService.certify(problem, config)
        if solution is None:
            solution = ExperimentService.solve(problem, config)

        if mode == "harmonic":
            schedule = StepSchedule.harmonic()
        else:
            schedule = StepSchedule.fixed(factor * certificate.alpha)

        logger.info(f"Dispatching fig1 variant {variant}")
        try:
            return ExperimentService.iterate(
                problem, config, algorithm, schedule, solution.x_star,
                stop_early=False,
            )
        except NonFiniteState as error:
            logger.warning(
                f"Variant {variant} diverged at iteration {error.iteration}"
            )
            return error.trace

    @staticmethod
    def fig1(
        config: dict,
        out_dir=None,
        parallel: bool = False,
        config_path: str = "",
    ) -> dict:
        """All fig1 variants in one long-format fig1.csv."""
        from experiments.tasks import run_variant

        started = time.perf_counter()
        out = Path(out_dir or config["output_dir"])

        problem = ExperimentService.prepare(config)
        certificate = ExperimentService.certify(problem, config)
        solution = ExperimentService.solve(problem, config)
        out.mkdir(parents=True, exist_ok=True)

        if parallel:
            job = group(
                run_variant.s(config, variant) for variant in FIG1_VARIANTS
            )
            pending = job.apply_async()
            traces = {
                variant: Trace.from_dict(result.get())
                for variant, result in zip(FIG1_VARIANTS, pending.results)
            }
        else:
            traces = {
                variant: ExperimentService.run_variant(
                    config, variant, problem, certificate, solution
                )
                for variant in FIG1_VARIANTS
            }

        with open(out / "fig1.csv", "w", newline="") as handle:
            write_variants(handle, traces)

        metadata = {
            "command": ExperimentRun.Command.FIG1.value,
            "variants": {
                variant: {
                    "iterations": trace.iterations,
                    "stop_reason": trace.stop_reason,
                    "final_dist": trace.last.dist_q if trace.rows else None,
                }
                for variant, trace in traces.items()
            },
            "config_path": config_path,
            "config_sha256": config_digest(config),
            "seeds": _seeds(config),
            "versions": _versions(),
            "certified_alpha": certificate.alpha,
            "parallel": parallel,
            "wall_time": time.perf_counter() - started,
        }
        _write_json(out / "fig1_metadata.json", metadata)

        reference = traces["alg1-fixed"]
        ExperimentRun.objects.create(
            command=ExperimentRun.Command.FIG1,
            algorithm="alg1+alg2",
            config_path=config_path,
            config_sha256=metadata["config_sha256"],
            seeds=metadata["seeds"],
            alpha=certificate.alpha,
            certified_alpha=certificate.alpha,
            iterations=reference.iterations,
            final_dist=reference.last.dist_q,
            wall_time=metadata["wall_time"],
            output_dir=str(out),
        )
        logger.info(f"fig1 data written to {out / 'fig1.csv'}")
        return metadata
