"""
Games over per-agent box constraints: pseudo-gradient F, extended
pseudo-gradient evaluated on each agent's local estimates, projections,
and the monotonicity / Lipschitz constants of affine games.
"""

from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from core.exceptions import DimensionMismatch, NotStronglyMonotone


@dataclass(frozen=True, eq=False)
class GameSpec:
    """
    A game with box feasible sets. ``gradient(i, x)`` returns the partial
    gradient of J_i with respect to x_i, evaluated at the n-vector ``x``
    (agent i's own strategy in block i, estimates of the others elsewhere).
    """

    dims: tuple
    lower: np.ndarray
    upper: np.ndarray
    gradient: Callable | None = None
    cost_function: Callable | None = None
    offsets: np.ndarray = field(init=False, repr=False)
    owner: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not dims or min(dims) < 1:
            raise DimensionMismatch("Every agent needs a positive dimension")

        n = sum(dims)
        lower = np.broadcast_to(
            np.asarray(self.lower, dtype=float), (n,)
        ).copy()
        upper = np.broadcast_to(
            np.asarray(self.upper, dtype=float), (n,)
        ).copy()
        if np.any(lower > upper):
            raise ValueError("Empty feasible set: lower bound above upper")

        lower.setflags(write=False)
        upper.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(
            self, "offsets", np.concatenate(([0], np.cumsum(dims)))
        )
        object.__setattr__(
            self, "owner", np.repeat(np.arange(len(dims)), dims)
        )

    @property
    def N(self) -> int:
        return len(self.dims)

    @property
    def n(self) -> int:
        return int(self.offsets[-1])

    def block(self, i: int) -> slice:
        return slice(int(self.offsets[i]), int(self.offsets[i + 1]))

    def partial_gradient(self, i: int, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.gradient(i, x), dtype=float)

    def cost(self, i: int, x: np.ndarray) -> float:
        if self.cost_function is None:
            raise NotImplementedError("This game has no cost evaluator")
        return float(self.cost_function(i, x))

    def pseudo_gradient(self, x: np.ndarray) -> np.ndarray:
        return np.concatenate(
            [self.partial_gradient(i, x) for i in range(self.N)]
        )

    def extended_pseudo_gradient(self, x_stack: np.ndarray) -> np.ndarray:
        estimates = x_stack.reshape(self.N, self.n)
        return np.concatenate(
            [self.partial_gradient(i, estimates[i]) for i in range(self.N)]
        )

    def project(self, x: np.ndarray) -> np.ndarray:
        """Projection of a joint strategy onto the product of boxes."""
        return np.clip(x, self.lower, self.upper)


@dataclass(frozen=True, eq=False)
class QuadraticGame(GameSpec):
    """Game with affine pseudo-gradient F(x) = G x + g."""

    G: np.ndarray = None
    g: np.ndarray = None

    def __post_init__(self):
        super().__post_init__()
        G = np.array(self.G, dtype=float)
        g = np.array(self.g, dtype=float)
        if G.shape != (self.n, self.n) or g.shape != (self.n,):
            raise DimensionMismatch(
                f"G must be {self.n}x{self.n} and g of length {self.n}"
            )
        G.setflags(write=False)
        g.setflags(write=False)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "g", g)

    def partial_gradient(self, i: int, x: np.ndarray) -> np.ndarray:
        rows = self.block(i)
        return self.G[rows] @ x + self.g[rows]

    def cost(self, i: int, x: np.ndarray) -> float:
        """J_i = 1/2 x_i' G_ii x_i + x_i'(G_i,-i x_-i + g_i), G_ii symmetric."""
        if self.cost_function is not None:
            return float(self.cost_function(i, x))
        rows = self.block(i)
        own = x[rows]
        others = x.copy()
        others[rows] = 0.0
        return float(
            0.5 * own @ self.G[rows, rows] @ own
            + own @ (self.G[rows] @ others + self.g[rows])
        )

    def pseudo_gradient(self, x: np.ndarray) -> np.ndarray:
        return self.G @ x + self.g

    def extended_pseudo_gradient(self, x_stack: np.ndarray) -> np.ndarray:
        # row i of `full` is G x_i + g; keep agent i's own rows only
        full = x_stack.reshape(self.N, self.n) @ self.G.T + self.g
        return full[self.owner, np.arange(self.n)]


@dataclass(frozen=True)
class GameConstants:
    mu: float
    ell0: float
    ell: float


def _check_length(vector, expected: int, what: str) -> np.ndarray:
    vector = np.asarray(vector, dtype=float)
    if vector.shape != (expected,):
        raise DimensionMismatch(
            f"{what} has shape {vector.shape}, expected ({expected},)"
        )
    return vector


def pseudo_gradient(game: GameSpec, x) -> np.ndarray:
    x = _check_length(x, game.n, "Joint strategy")
    return game.pseudo_gradient(x)


def extended_pseudo_gradient(game: GameSpec, x_stack) -> np.ndarray:
    x_stack = _check_length(x_stack, game.N * game.n, "Estimate stack")
    return game.extended_pseudo_gradient(x_stack)


def project_box(game: GameSpec, i: int, v) -> np.ndarray:
    if not 0 <= i < game.N:
        raise IndexError(f"Agent index {i} out of range")
    rows = game.block(i)
    v = _check_length(v, game.dims[i], f"Strategy of agent {i}")
    return np.clip(v, game.lower[rows], game.upper[rows])


def extended_jacobian(game: QuadraticGame) -> np.ndarray:
    """Constant n x Nn Jacobian of the extended pseudo-gradient."""
    jacobian = np.zeros((game.n, game.N * game.n))
    for i in range(game.N):
        rows = game.block(i)
        jacobian[rows, i * game.n:(i + 1) * game.n] = game.G[rows]
    return jacobian


def game_constants(game: QuadraticGame) -> GameConstants:
    symmetric = 0.5 * (game.G + game.G.T)
    mu = float(linalg.eigvalsh(symmetric)[0])
    if mu <= 0:
        raise NotStronglyMonotone(
            f"Symmetric part of G has smallest eigenvalue {mu:.3e}"
        )

    return GameConstants(
        mu=mu,
        ell0=float(linalg.norm(game.G, 2)),
        ell=float(linalg.norm(extended_jacobian(game), 2)),
    )


def random_quadratic_game(
    rng: np.random.Generator,
    dims,
    mu: float = 1.0,
    coupling: float = 0.5,
    lower=-np.inf,
    upper=np.inf,
) -> QuadraticGame:
    """
    Random affine game whose symmetric part is at least ``mu`` I:
    G = mu I + c B B' + c K with K skew-symmetric.
    """
    n = int(sum(dims))
    b = rng.normal(size=(n, n)) / np.sqrt(n)
    k = rng.normal(size=(n, n)) / np.sqrt(n)
    G = mu * np.eye(n) + coupling * (b @ b.T) + coupling * (k - k.T) / 2
    g = rng.normal(size=n)
    return QuadraticGame(dims=dims, lower=lower, upper=upper, G=G, g=g)
