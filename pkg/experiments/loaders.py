"""
Turns a YAML experiment document into validated configuration and into
the graph, game and initial state it describes.
"""

import logging
from pathlib import Path

import numpy as np
import yaml

from core.exceptions import ConfigError, NashError
from dynamics.state import EstimateState, initial_state
from experiments.serializers import ExperimentConfigSerializer
from games.cournot import CournotRanges, build_cournot, random_cournot_spec
from games.games import (
    GameConstants,
    QuadraticGame,
    game_constants,
    random_quadratic_game,
)
from network.generators import ring_weights, random_strongly_connected_weights
from network.graph import Graph, validate_graph

logger = logging.getLogger(__name__)


def flatten_errors(detail, prefix: str = ""):
    """Yield (dotted.key, message) pairs from nested serializer errors."""
    if isinstance(detail, dict):
        for key, value in detail.items():
            path = f"{prefix}.{key}" if prefix else str(key)
            yield from flatten_errors(value, path)
    elif isinstance(detail, list) and all(
        isinstance(item, str) for item in detail
    ):
        yield prefix or "config", " ".join(str(item) for item in detail)
    elif isinstance(detail, list):
        for index, item in enumerate(detail):
            yield from flatten_errors(item, f"{prefix}.{index}")
    else:
        yield prefix or "config", str(detail)


def validate_document(document) -> dict:
    if not isinstance(document, dict):
        raise ConfigError({"config": "Document must be a mapping."})

    serializer = ExperimentConfigSerializer(data=document)
    if not serializer.is_valid():
        raise ConfigError(dict(flatten_errors(serializer.errors)))
    return serializer.validated_data


def load_document(path) -> dict:
    try:
        with open(path) as handle:
            return yaml.safe_load(handle)
    except OSError as error:
        raise ConfigError({"config": f"Cannot read {path}: {error}"}) from error
    except yaml.YAMLError as error:
        raise ConfigError({"config": f"Invalid YAML: {error}"}) from error


def load_config(path) -> dict:
    config = validate_document(load_document(Path(path)))
    logger.info(f"Loaded experiment config from {path}")
    return config


def _with_key(key: str, error: NashError) -> NashError:
    """Same error class, message prefixed with the offending config key."""
    relabelled = type(error).__new__(type(error))
    NashError.__init__(relabelled, f"{key}: {error}")
    return relabelled


def build_graph(config: dict) -> Graph:
    spec = config["graph"]
    if "matrix" in spec:
        weights = np.array(spec["matrix"], dtype=float)
    elif spec["topology"] == "ring":
        weights = ring_weights(spec["N"], spec["self_loop"])
    else:
        weights = random_strongly_connected_weights(
            spec["N"], spec["seed"], spec["density"], spec["self_loop"]
        )

    try:
        return validate_graph(
            weights, row_sum_tol=config["tolerances"]["row_sum"]
        )
    except NashError as error:
        raise _with_key("graph", error) from error


def _bounds(values, n: int, fill: float) -> np.ndarray:
    if values is None:
        return np.full(n, fill)
    return np.array([fill if v is None else v for v in values], dtype=float)


def build_game(config: dict) -> QuadraticGame:
    spec = config["game"]
    try:
        if spec["type"] == "cournot":
            ranges = CournotRanges(**{
                name: tuple(interval)
                for name, interval in spec.get("ranges", {}).items()
            })
            return build_cournot(random_cournot_spec(
                N=spec["N"],
                m=spec["m"],
                seed=spec["seed"],
                n_total=spec.get("n_total"),
                participation=spec.get("participation"),
                ranges=ranges,
            ))

        n = sum(spec["dims"])
        boxes = spec.get("boxes", {})
        lower = _bounds(boxes.get("lower"), n, -np.inf)
        upper = _bounds(boxes.get("upper"), n, np.inf)

        if spec["type"] == "random-quadratic":
            return random_quadratic_game(
                np.random.default_rng(spec["seed"]),
                spec["dims"],
                mu=spec["mu"],
                coupling=spec["coupling"],
                lower=lower,
                upper=upper,
            )
        return QuadraticGame(
            dims=tuple(spec["dims"]),
            lower=lower,
            upper=upper,
            G=np.array(spec["G"], dtype=float),
            g=np.array(spec["g"], dtype=float),
        )
    except NashError as error:
        raise _with_key("game", error) from error
    except ValueError as error:
        raise ConfigError({"game": str(error)}) from error


def build_initial_state(config: dict, game) -> EstimateState:
    if "seed" not in config:
        return initial_state(game)
    return initial_state(game, rng=np.random.default_rng(config["seed"]))


# config key blamed when a game of this type fails the monotonicity check
CONSTANTS_KEYS = {
    "quadratic": "game.G",
    "random-quadratic": "game.mu",
    "cournot": "game",
}


def build_constants(config: dict, game: QuadraticGame) -> GameConstants:
    try:
        return game_constants(game)
    except NashError as error:
        key = CONSTANTS_KEYS[config["game"]["type"]]
        raise _with_key(key, error) from error
