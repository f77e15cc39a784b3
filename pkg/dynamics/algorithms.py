"""
One synchronous round of the distributed pseudo-gradient schemes.

Agent-level steps (``alg1_step``, ``alg2_step``) read every neighbour's
round-k snapshot and write a fresh round-(k+1) buffer; the stacked forms
(``compact_iteration``, ``compact_alg2_iteration``) compute the same round
with whole-matrix products.
"""

import numpy as np

from core.exceptions import DimensionMismatch
from dynamics.state import EigenvectorEstimates, EstimateState, project_stack
from games.games import GameSpec, project_box
from network.graph import Graph


def _estimates(x_stack, g: Graph, game: GameSpec) -> np.ndarray:
    x_stack = np.asarray(x_stack, dtype=float)
    if g.N != game.N or x_stack.shape != (game.N * game.n,):
        raise DimensionMismatch(
            f"Stack of length {x_stack.size} does not fit a graph with "
            f"{g.N} agents and a game with N={game.N}, n={game.n}"
        )
    return x_stack.reshape(game.N, game.n)


def _agent_round(
    game: GameSpec,
    i: int,
    mixed: np.ndarray,
    scaled_step: float,
) -> np.ndarray:
    """Own block: projected partial-gradient step; other blocks: mixed."""
    rows = game.block(i)
    updated = mixed.copy()
    updated[rows] = project_box(
        game,
        i,
        mixed[rows] - scaled_step * game.partial_gradient(i, mixed),
    )
    return updated


def _mix(g: Graph, i: int, values: np.ndarray) -> np.ndarray:
    neighbors = g.neighbors(i)
    return g.weights[i, neighbors] @ values[neighbors]


def alg1_step(
    state: EstimateState,
    g: Graph,
    game: GameSpec,
    q,
    alpha: float,
) -> EstimateState:
    current = _estimates(state.x_stack, g, game)
    nxt = np.empty_like(current)

    for i in range(game.N):
        nxt[i] = _agent_round(game, i, _mix(g, i, current), alpha / q[i])

    return EstimateState(nxt.ravel(), state.k + 1)


def alg2_step(
    state: EstimateState,
    eig: EigenvectorEstimates,
    g: Graph,
    game: GameSpec,
    alpha_k: float,
) -> tuple[EstimateState, EigenvectorEstimates]:
    """
    Round k of the scheme with online PF estimation. The gradient scaling
    reads the round-k diagonal qhat_ii, not the value produced this round.
    """
    current = _estimates(state.x_stack, g, game)
    if eig.qhat.shape != (g.N, g.N):
        raise DimensionMismatch("Eigenvector estimates must be N x N")

    nxt = np.empty_like(current)
    qhat_next = np.empty_like(eig.qhat)

    for i in range(game.N):
        qhat_next[i] = _mix(g, i, eig.qhat)
        nxt[i] = _agent_round(
            game, i, _mix(g, i, current), alpha_k / eig.qhat[i, i]
        )

    return (
        EstimateState(nxt.ravel(), state.k + 1),
        EigenvectorEstimates(qhat_next),
    )


def consensus_operator(
    x_stack,
    g: Graph,
    game: GameSpec,
    own_weights,
    alpha: float,
) -> np.ndarray:
    """
    Pre-projection operator W x - alpha R' Qbar^-1 F(W x), with
    ``own_weights[i]`` standing in for q_i.
    """
    mixed = g.weights @ _estimates(x_stack, g, game)
    columns = np.arange(game.n)
    scale = np.repeat(np.asarray(own_weights, dtype=float), game.dims)
    gradient = game.extended_pseudo_gradient(mixed.ravel())
    mixed[game.owner, columns] -= alpha * gradient / scale
    return mixed.ravel()


def compact_iteration(x_stack, g: Graph, game: GameSpec, q, alpha: float):
    return project_stack(
        game, consensus_operator(x_stack, g, game, q, alpha)
    )


def compact_alg2_iteration(
    x_stack,
    qhat: np.ndarray,
    g: Graph,
    game: GameSpec,
    alpha_k: float,
) -> tuple[np.ndarray, np.ndarray]:
    x_next = project_stack(
        game,
        consensus_operator(x_stack, g, game, np.diag(qhat), alpha_k),
    )
    return x_next, g.weights @ qhat
