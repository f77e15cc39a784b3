import logging
from dataclasses import dataclass

import numpy as np

from core.exceptions import DimensionMismatch, NonFiniteState
from dynamics.algorithms import (
    alg1_step,
    alg2_step,
    compact_alg2_iteration,
    compact_iteration,
)
from dynamics.state import (
    EigenvectorEstimates,
    EstimateState,
    StepSchedule,
    Trace,
    TraceRow,
    initial_state,
)
from games.games import GameSpec
from network.graph import Graph, consensus_decompose, pf_eigenvector, stack_norm

logger = logging.getLogger(__name__)

MODES = ("alg1", "alg2")
ENGINES = ("compact", "agents")


@dataclass(frozen=True)
class StopRule:
    max_iters: int = 1_000_000
    tol: float = 1e-8
    enabled: bool = True


def _is_logged(k: int) -> bool:
    return k == 0 or (k & (k - 1)) == 0


def _target_stack(target, game: GameSpec) -> np.ndarray | None:
    if target is None:
        return None
    target = np.asarray(target, dtype=float)
    if target.shape == (game.n,):
        return np.tile(target, game.N)
    if target.shape == (game.N * game.n,):
        return target
    raise DimensionMismatch(
        f"Target of shape {target.shape} is neither a joint strategy "
        "nor an estimate stack"
    )


def run(
    g: Graph,
    game: GameSpec,
    schedule: StepSchedule,
    mode: str = "alg1",
    q=None,
    init: EstimateState | None = None,
    stop: StopRule = StopRule(),
    target=None,
    engine: str = "compact",
    thinning: bool = False,
) -> Trace:
    """
    Iterate Algorithm 1 (``mode="alg1"``, exact q required) or Algorithm 2
    (``mode="alg2"``, q is then only used to measure the trace) and record
    one trace row per iteration.
    """
    if mode not in MODES:
        raise ValueError(f"Unknown mode {mode!r}, expected one of {MODES}")
    if engine not in ENGINES:
        raise ValueError(f"Unknown engine {engine!r}, expected {ENGINES}")
    if mode == "alg1" and q is None:
        raise ValueError("Algorithm 1 needs the exact PF eigenvector q")

    q = np.asarray(q if q is not None else pf_eigenvector(g).q, dtype=float)
    target_stack = _target_stack(target, game)
    state = init if init is not None else initial_state(game)
    eig = EigenvectorEstimates.initial(g.N) if mode == "alg2" else None

    max_iters = stop.max_iters
    if schedule.horizon is not None:
        max_iters = min(max_iters, schedule.horizon)

    trace = Trace()
    logger.info(
        f"Running {mode} ({engine}) for at most {max_iters} iterations"
    )

    for k in range(max_iters + 1):
        alpha = schedule.step(k)
        x = state.x_stack
        _, x_perp = consensus_decompose(x, q, game.dims)
        residual = stack_norm(x_perp, q, game.n)
        dist = (
            stack_norm(x - target_stack, q, game.n)
            if target_stack is not None
            else None
        )
        row = TraceRow(
            k=k,
            alpha=alpha,
            dist_q=dist,
            consensus_residual=residual,
            qhat_error=eig.error(q) if eig is not None else None,
        )

        converged = (
            stop.enabled
            and residual <= stop.tol
            and (dist is None or dist <= stop.tol)
        )
        if not thinning or _is_logged(k) or converged or k == max_iters:
            trace.rows.append(row)
        if converged:
            trace.stop_reason = "tolerance"
            break
        if k == max_iters:
            break

        if engine == "agents" and mode == "alg1":
            nxt = alg1_step(state, g, game, q, alpha)
        elif engine == "agents":
            nxt, eig = alg2_step(state, eig, g, game, alpha)
        elif mode == "alg1":
            nxt = EstimateState(
                compact_iteration(x, g, game, q, alpha), k + 1
            )
        else:
            x_next, qhat_next = compact_alg2_iteration(
                x, eig.qhat, g, game, alpha
            )
            nxt = EstimateState(x_next, k + 1)
            eig = EigenvectorEstimates(qhat_next)

        if not np.all(np.isfinite(nxt.x_stack)):
            trace.stop_reason = "diverged"
            trace.iterations = k
            trace.final_state = x
            logger.warning(
                f"Non-finite iterate at k={k + 1}; "
                f"last finite dist_q={dist}, residual={residual:.3e}"
            )
            raise NonFiniteState(
                f"Iterate became non-finite at iteration {k + 1} "
                f"(step {alpha:.3e} too large?)",
                iteration=k + 1,
                last_state=x,
                trace=trace,
            )
        state = nxt

    trace.iterations = state.k
    trace.final_state = state.x_stack
    logger.info(
        f"{mode} stopped after {trace.iterations} iterations "
        f"({trace.stop_reason})"
    )
    return trace
