"""
Centralised (full-information) Nash equilibrium computation, used as the
ground truth for every rate and convergence check.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from core.exceptions import ConvergenceFailure, DimensionMismatch
from games.games import GameConstants, GameSpec, QuadraticGame, game_constants

logger = logging.getLogger(__name__)

SOLVER_ITERATION_CAP = 10_000_000


@dataclass(frozen=True, eq=False)
class NESolution:
    x_star: np.ndarray
    residual: float
    iterations: int
    gamma: float


def verify_ne(game: GameSpec, x, gamma: float = 1.0) -> float:
    """Fixed-point residual ||x - proj(x - gamma F(x))||_inf."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    x = np.asarray(x, dtype=float)
    if x.shape != (game.n,):
        raise DimensionMismatch(f"Expected a joint strategy of length {game.n}")
    step = game.project(x - gamma * game.pseudo_gradient(x))
    return float(np.max(np.abs(x - step)))


def is_equilibrium(game: GameSpec, x, gamma: float, tol: float) -> bool:
    return verify_ne(game, x, gamma) <= tol


def _direct_solution(game: QuadraticGame) -> np.ndarray | None:
    try:
        x = linalg.solve(game.G, -game.g)
    except linalg.LinAlgError:
        return None
    if np.all(x >= game.lower) and np.all(x <= game.upper):
        return x
    return None


def solve_ne(
    game: GameSpec,
    tol: float = 1e-12,
    constants: GameConstants | None = None,
    x0=None,
    max_iters: int = SOLVER_ITERATION_CAP,
) -> NESolution:
    """
    Projected pseudo-gradient fixed-point iteration with gamma = mu/ell0^2.
    Affine games try an exact linear solve first and keep it if feasible.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if constants is None:
        if not isinstance(game, QuadraticGame):
            raise ValueError("Non-affine games need explicit constants")
        constants = game_constants(game)

    gamma = constants.mu / constants.ell0 ** 2

    if isinstance(game, QuadraticGame) and x0 is None:
        x = _direct_solution(game)
        if x is not None:
            residual = verify_ne(game, x, gamma)
            if residual <= tol:
                logger.info("Equilibrium found by direct linear solve")
                return NESolution(x, residual, 0, gamma)

    x = game.project(
        np.zeros(game.n) if x0 is None else np.asarray(x0, dtype=float)
    )
    for iteration in range(1, max_iters + 1):
        nxt = game.project(x - gamma * game.pseudo_gradient(x))
        residual = float(np.max(np.abs(x - nxt)))
        x = nxt
        if residual <= tol:
            break
    else:
        raise ConvergenceFailure(
            f"Projected iteration reached residual {residual:.3e} "
            f"after {max_iters} iterations"
        )

    residual = verify_ne(game, x, gamma)
    logger.info(
        f"Equilibrium found in {iteration} iterations "
        f"(residual {residual:.2e})"
    )
    return NESolution(x, residual, iteration, gamma)
