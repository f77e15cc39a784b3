import numpy as np

MIN_SELF_LOOP = 0.1


def ring_weights(N: int, self_loop: float = 0.5) -> np.ndarray:
    """Directed ring i -> i+1 with self-loops; circulant and doubly stochastic."""
    if N == 1:
        return np.ones((1, 1))

    weights = np.zeros((N, N))
    for i in range(N):
        weights[i, i] = self_loop
        weights[i, (i + 1) % N] = 1.0 - self_loop
    return weights


def random_strongly_connected_weights(
    N: int,
    seed: int,
    density: float = 0.3,
    self_loop: float = MIN_SELF_LOOP,
) -> np.ndarray:
    """
    Directed ring backbone plus random extra edges, random positive weights,
    row-normalised with every self-loop weight at least ``self_loop``.
    """
    if self_loop < MIN_SELF_LOOP or self_loop >= 1.0:
        raise ValueError(f"self_loop must lie in [{MIN_SELF_LOOP}, 1)")
    if N == 1:
        return np.ones((1, 1))

    rng = np.random.default_rng(seed)
    support = rng.random((N, N)) < density
    support |= np.eye(N, dtype=bool)
    support[np.arange(N), (np.arange(N) + 1) % N] = True

    raw = np.where(support, rng.uniform(0.5, 1.5, size=(N, N)), 0.0)
    weights = raw / raw.sum(axis=1, keepdims=True)

    for i in range(N):
        if weights[i, i] < self_loop:
            off = weights[i].sum() - weights[i, i]
            weights[i] *= (1.0 - self_loop) / off
            weights[i, i] = self_loop

    # absorb rounding so rows sum to 1 to machine precision
    weights[np.arange(N), np.arange(N)] += 1.0 - weights.sum(axis=1)
    return weights
