"""
Directed communication network: validation of the row-stochastic weight
matrix and the spectral objects (PF eigenvector q, contraction factor
sigma_bar) every algorithm and certificate relies on.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from core.exceptions import (
    ConvergenceFailure,
    DimensionMismatch,
    InvalidWeights,
    NotStronglyConnected,
    RowSumError,
    SpectralError,
    ZeroDiagonal,
)

logger = logging.getLogger(__name__)

ROW_SUM_TOL = 1e-12
PF_TOL = 1e-12
SIGMA_BAR_CEILING = 1.0 - 1e-12


@dataclass(frozen=True, eq=False)
class Graph:
    """Validated network; w[i, j] is the weight agent i puts on agent j."""

    weights: np.ndarray

    @property
    def N(self) -> int:
        return self.weights.shape[0]

    def neighbors(self, i: int) -> np.ndarray:
        """In-neighbours of agent i (self included)."""
        return np.flatnonzero(self.weights[i] > 0)

    def in_degree(self, i: int) -> int:
        return int(self.neighbors(i).size)


@dataclass(frozen=True, eq=False)
class SpectralData:
    q: np.ndarray
    sigma_bar: float
    qmin: float = field(init=False)
    qmax: float = field(init=False)
    iterations: int = 0

    def __post_init__(self):
        object.__setattr__(self, "qmin", float(self.q.min()))
        object.__setattr__(self, "qmax", float(self.q.max()))


def _readonly(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


def validate_graph(weights, row_sum_tol: float = ROW_SUM_TOL) -> Graph:
    weights = np.asarray(weights, dtype=float)

    if weights.ndim != 2 or weights.shape[0] != weights.shape[1]:
        raise DimensionMismatch(
            f"Weight matrix must be square, got shape {weights.shape}"
        )
    if weights.shape[0] < 1:
        raise DimensionMismatch("Weight matrix must have at least one agent")
    if not np.all(np.isfinite(weights)) or np.any(weights < 0):
        raise InvalidWeights("Weights must be finite and nonnegative")

    deviation = np.abs(weights.sum(axis=1) - 1.0)
    bad_rows = np.flatnonzero(deviation > row_sum_tol)
    if bad_rows.size:
        row = int(bad_rows[0])
        raise RowSumError(
            f"Row {row} sums to {weights[row].sum()!r}, expected 1"
        )

    zero_diagonal = np.flatnonzero(np.diag(weights) <= 0)
    if zero_diagonal.size:
        raise ZeroDiagonal(
            f"Agent {int(zero_diagonal[0])} has no self-loop"
        )

    n_components, _ = connected_components(
        csr_matrix(weights > 0), directed=True, connection="strong"
    )
    if n_components > 1:
        raise NotStronglyConnected(
            f"Graph has {n_components} strongly connected components"
        )

    logger.debug(f"Validated graph with N={weights.shape[0]}")
    return Graph(weights=_readonly(weights))


def pf_iteration_cap(N: int) -> int:
    return int(100 * N * math.log(N)) + 10000


def pf_eigenvector(
    g: Graph,
    tol: float = PF_TOL,
    max_iter: int | None = None,
) -> SpectralData:
    """
    Left Perron-Frobenius eigenvector of W by power iteration on W^T,
    normalised to sum 1. Also computes sigma_bar.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")

    cap = max_iter if max_iter is not None else pf_iteration_cap(g.N)
    w_t = g.weights.T
    q = np.full(g.N, 1.0 / g.N)
    residual = math.inf

    for iteration in range(1, cap + 1):
        nxt = w_t @ q
        nxt /= nxt.sum()
        residual = float(np.max(np.abs(nxt - q)))
        q = nxt
        if residual <= tol:
            break
    else:
        raise ConvergenceFailure(
            f"PF power iteration stopped at residual {residual:.3e} "
            f"after {cap} iterations"
        )

    if np.any(q <= 0):
        raise SpectralError("PF eigenvector has a nonpositive entry")

    logger.info(
        f"PF eigenvector converged in {iteration} iterations "
        f"(residual {residual:.2e})"
    )
    return SpectralData(
        q=_readonly(q),
        sigma_bar=sigma_bar(g, q),
        iterations=iteration,
    )


def sigma_bar(g: Graph, q) -> float:
    """
    sqrt of the second largest eigenvalue of Q^-1/2 W^T Q W Q^-1/2,
    i.e. sigma_{N-1}(Q^1/2 W Q^-1/2).
    """
    q = np.asarray(q, dtype=float)
    if g.N == 1:
        return 0.0

    root = np.sqrt(q)
    scaled = (root[:, None] * g.weights) / root[None, :]
    eigenvalues = linalg.eigh(scaled.T @ scaled, eigvals_only=True)
    value = math.sqrt(max(float(eigenvalues[-2]), 0.0))

    if value >= SIGMA_BAR_CEILING:
        raise SpectralError(
            f"sigma_bar = {value!r} is not below 1; "
            "the graph does not contract off consensus"
        )
    return value


def stack_norm(x_stack, q, n: int) -> float:
    """Norm of a stacked vector in the Q (x) I_n weighted space."""
    x_stack = np.asarray(x_stack, dtype=float)
    return math.sqrt(float(np.dot(np.repeat(q, n), x_stack * x_stack)))


def consensus_decompose(x_stack, q, dims):
    """Split x into (1 q^T (x) I_n) x and its Q-orthogonal remainder."""
    x_stack = np.asarray(x_stack, dtype=float)
    q = np.asarray(q, dtype=float)
    n = int(sum(dims))

    if x_stack.shape != (q.size * n,):
        raise DimensionMismatch(
            f"Stack of length {x_stack.size} does not match "
            f"N={q.size}, n={n}"
        )

    average = q @ x_stack.reshape(q.size, n)
    x_parallel = np.tile(average, q.size)
    return x_parallel, x_stack - x_parallel
