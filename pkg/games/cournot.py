"""
Nash-Cournot benchmark: N firms ship a commodity to m markets with
linear inverse demand p(Ax) = Pbar - chi * (Ax), quadratic production
costs and capacity boxes 0 <= x_i <= X_i.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from core.exceptions import InvalidParticipation
from games.games import QuadraticGame

logger = logging.getLogger(__name__)

DESK_AGENTS = 20
DESK_MARKETS = 7
DESK_DIMENSION = 32


@dataclass(frozen=True)
class CournotRanges:
    production: tuple = (14.0, 16.0)
    linear_cost: tuple = (1.0, 2.0)
    price_intercept: tuple = (10.0, 20.0)
    price_slope: tuple = (1.0, 3.0)
    capacity: tuple = (5.0, 10.0)


@dataclass(frozen=True, eq=False)
class CournotSpec:
    N: int
    m: int
    participation: list
    Qi: list
    qi_cost: list
    Pbar: np.ndarray
    chi: np.ndarray
    Xi: list
    seed: int | None = None


@dataclass(frozen=True, eq=False)
class CournotGame(QuadraticGame):
    """Cournot game assembled into affine form; keeps the market data."""

    spec: CournotSpec = None
    A: np.ndarray = field(default=None, repr=False)

    def cost(self, i: int, x: np.ndarray) -> float:
        """c_i(x_i) - p(Ax)' A_i x_i."""
        rows = self.block(i)
        own = x[rows]
        price = (
            np.asarray(self.spec.Pbar)
            - np.asarray(self.spec.chi) * (self.A @ x)
        )
        production = (
            own @ (np.asarray(self.spec.Qi[i]) * own)
            + np.asarray(self.spec.qi_cost[i]) @ own
        )
        return float(production - price @ (self.A[:, rows] @ own))


def _validate_participation(spec: CournotSpec):
    if len(spec.participation) != spec.N:
        raise InvalidParticipation(
            f"Expected participation lists for {spec.N} agents, "
            f"got {len(spec.participation)}"
        )
    for i, markets in enumerate(spec.participation):
        if not markets:
            raise InvalidParticipation(f"Agent {i} serves no market")
        if len(set(markets)) != len(markets):
            raise InvalidParticipation(f"Agent {i} lists a market twice")
        for k in markets:
            if not 0 <= k < spec.m:
                raise InvalidParticipation(
                    f"Agent {i} references market {k}, "
                    f"only {spec.m} markets exist"
                )

    if any(np.any(np.asarray(q) <= 0) for q in spec.Qi):
        raise ValueError("Production cost diagonals must be positive")
    if np.any(np.asarray(spec.chi) < 0):
        raise ValueError("Price slopes must be nonnegative")


def market_matrices(spec: CournotSpec) -> list[np.ndarray]:
    """Binary A_i with [A_i]_{k,j} = 1 iff x_i[j] is shipped to market k."""
    matrices = []
    for markets in spec.participation:
        a_i = np.zeros((spec.m, len(markets)))
        a_i[list(markets), np.arange(len(markets))] = 1.0
        matrices.append(a_i)
    return matrices


def build_cournot(spec: CournotSpec) -> CournotGame:
    _validate_participation(spec)

    blocks = market_matrices(spec)
    A = np.hstack(blocks)
    slopes = np.diag(np.asarray(spec.chi, dtype=float))

    production = linalg.block_diag(*[2.0 * np.diag(q) for q in spec.Qi])
    own_price = linalg.block_diag(*[a.T @ slopes @ a for a in blocks])
    G = production + A.T @ slopes @ A + own_price
    g = np.concatenate([
        np.asarray(cost) - a.T @ np.asarray(spec.Pbar)
        for a, cost in zip(blocks, spec.qi_cost)
    ])

    dims = tuple(len(markets) for markets in spec.participation)
    game = CournotGame(
        dims=dims,
        lower=np.zeros(sum(dims)),
        upper=np.concatenate([np.asarray(x) for x in spec.Xi]),
        G=G,
        g=g,
        spec=spec,
        A=A,
    )
    logger.info(
        f"Built Cournot game: N={spec.N}, m={spec.m}, n={game.n}"
    )
    return game


def default_dimension(N: int, m: int) -> int:
    if (N, m) == (DESK_AGENTS, DESK_MARKETS):
        return DESK_DIMENSION
    return min(max(N, round(1.6 * N)), N * m)


def random_participation(
    rng: np.random.Generator, N: int, m: int, n_total: int
) -> list[list[int]]:
    """
    Agent i always serves market i mod m (every market is served when
    N >= m); the remaining n_total - N slots go to random agents.
    """
    if not N <= n_total <= N * m:
        raise InvalidParticipation(
            f"Total dimension {n_total} impossible for N={N}, m={m}"
        )

    participation = [[i % m] for i in range(N)]
    extra = n_total - N
    while extra:
        i = int(rng.integers(N))
        free = [k for k in range(m) if k not in participation[i]]
        if not free:
            continue
        participation[i].append(int(rng.choice(free)))
        extra -= 1

    return [sorted(markets) for markets in participation]


def random_cournot_spec(
    N: int = DESK_AGENTS,
    m: int = DESK_MARKETS,
    seed: int = 0,
    n_total: int | None = None,
    participation: list | None = None,
    ranges: CournotRanges = CournotRanges(),
) -> CournotSpec:
    """
    Draw a Cournot instance with a 64-bit PCG stream. Stream order:
    participation (if not given), then agent-major per agent i the
    production diagonal, linear cost and capacity (n_i draws each), then
    the m price intercepts followed by the m price slopes.
    """
    rng = np.random.default_rng(seed)
    if participation is None:
        participation = random_participation(
            rng, N, m, n_total or default_dimension(N, m)
        )

    Qi, qi_cost, Xi = [], [], []
    for markets in participation:
        size = len(markets)
        Qi.append(rng.uniform(*ranges.production, size=size))
        qi_cost.append(rng.uniform(*ranges.linear_cost, size=size))
        Xi.append(rng.uniform(*ranges.capacity, size=size))

    return CournotSpec(
        N=N,
        m=m,
        participation=[list(markets) for markets in participation],
        Qi=Qi,
        qi_cost=qi_cost,
        Pbar=rng.uniform(*ranges.price_intercept, size=m),
        chi=rng.uniform(*ranges.price_slope, size=m),
        Xi=Xi,
        seed=seed,
    )
