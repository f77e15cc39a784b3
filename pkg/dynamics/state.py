import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from core.exceptions import DimensionMismatch
from games.games import GameSpec

CSV_HEADER = ("k", "alpha", "dist_q", "consensus_residual", "qhat_error")


@dataclass(frozen=True, eq=False)
class EstimateState:
    """
    Stacked estimates x = col(x_1, ..., x_N); block i is agent i's copy of
    the joint strategy, its own strategy sitting in the i-th sub-block.
    """

    x_stack: np.ndarray
    k: int = 0

    def agent(self, i: int, n: int) -> np.ndarray:
        return self.x_stack[i * n:(i + 1) * n]

    def strategies(self, game: GameSpec) -> np.ndarray:
        """Joint strategy R x formed by the agents' own blocks."""
        estimates = self.x_stack.reshape(game.N, game.n)
        return estimates[game.owner, np.arange(game.n)]


def project_stack(game: GameSpec, x_stack: np.ndarray) -> np.ndarray:
    """Projection onto {x : R x in Omega}; only own blocks are clamped."""
    estimates = x_stack.reshape(game.N, game.n).copy()
    columns = np.arange(game.n)
    estimates[game.owner, columns] = np.clip(
        estimates[game.owner, columns], game.lower, game.upper
    )
    return estimates.ravel()


def initial_state(
    game: GameSpec,
    x_stack=None,
    rng: np.random.Generator | None = None,
) -> EstimateState:
    """
    Zero estimates with own strategies projected onto their boxes, or a
    seeded normal draw when ``rng`` is given.
    """
    size = game.N * game.n
    if x_stack is None:
        x_stack = rng.normal(size=size) if rng is not None else np.zeros(size)

    x_stack = np.asarray(x_stack, dtype=float)
    if x_stack.shape != (size,):
        raise DimensionMismatch(
            f"Initial stack has shape {x_stack.shape}, expected ({size},)"
        )
    return EstimateState(project_stack(game, x_stack), 0)


@dataclass(frozen=True, eq=False)
class EigenvectorEstimates:
    """Row i is agent i's running estimate of the PF eigenvector."""

    qhat: np.ndarray

    @classmethod
    def initial(cls, N: int) -> "EigenvectorEstimates":
        return cls(np.eye(N))

    @property
    def diagonal(self) -> np.ndarray:
        return np.diag(self.qhat).copy()

    def error(self, q) -> float:
        return float(np.max(np.abs(self.qhat - np.asarray(q)[None, :])))


@dataclass(frozen=True)
class StepSchedule:
    mode: str
    alpha: float | None = None
    values: tuple = ()

    @classmethod
    def fixed(cls, alpha: float) -> "StepSchedule":
        if not alpha >= 0 or not math.isfinite(alpha):
            raise ValueError(f"Fixed step must be finite and >= 0: {alpha}")
        return cls(mode="fixed", alpha=float(alpha))

    @classmethod
    def harmonic(cls) -> "StepSchedule":
        return cls(mode="harmonic")

    @classmethod
    def custom(cls, values) -> "StepSchedule":
        values = tuple(float(v) for v in values)
        if not values or min(values) <= 0:
            raise ValueError("Custom steps must be positive")
        if any(b > a for a, b in zip(values, values[1:])):
            raise ValueError("Custom steps must be nonincreasing")
        return cls(mode="custom", values=values)

    def step(self, k: int) -> float:
        if self.mode == "fixed":
            return self.alpha
        if self.mode == "harmonic":
            return 1.0 / (k + 1)
        return self.values[k]

    @property
    def horizon(self) -> int | None:
        """Last k the schedule defines, if finite."""
        return len(self.values) - 1 if self.mode == "custom" else None


@dataclass(frozen=True)
class TraceRow:
    k: int
    alpha: float
    dist_q: float | None
    consensus_residual: float
    qhat_error: float | None

    def as_csv(self) -> list[str]:
        return [
            str(self.k),
            *(
                "" if value is None else repr(float(value))
                for value in (
                    self.alpha,
                    self.dist_q,
                    self.consensus_residual,
                    self.qhat_error,
                )
            ),
        ]


@dataclass
class Trace:
    rows: list = field(default_factory=list)
    stop_reason: str = "max_iters"
    iterations: int = 0
    final_state: np.ndarray | None = None

    def column(self, name: str) -> np.ndarray:
        return np.array(
            [getattr(row, name) for row in self.rows], dtype=float
        )

    @property
    def last(self) -> TraceRow:
        return self.rows[-1]

    def write_csv(self, handle):
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        writer.writerows(row.as_csv() for row in self.rows)

    def to_csv(self) -> str:
        buffer = io.StringIO()
        self.write_csv(buffer)
        return buffer.getvalue()

    def as_dict(self) -> dict:
        """JSON-safe form, used to ship traces back from workers."""
        return {
            "rows": [
                [row.k, row.alpha, row.dist_q, row.consensus_residual,
                 row.qhat_error]
                for row in self.rows
            ],
            "stop_reason": self.stop_reason,
            "iterations": self.iterations,
            "final_state": (
                None if self.final_state is None
                else self.final_state.tolist()
            ),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Trace":
        final_state = data.get("final_state")
        return cls(
            rows=[TraceRow(*row) for row in data["rows"]],
            stop_reason=data["stop_reason"],
            iterations=data["iterations"],
            final_state=(
                None if final_state is None
                else np.array(final_state, dtype=float)
            ),
        )


def write_variants(handle, traces: dict):
    """Long-format CSV of several traces keyed by a leading variant column."""
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(("variant",) + CSV_HEADER)
    for variant, trace in traces.items():
        writer.writerows([variant] + row.as_csv() for row in trace.rows)
