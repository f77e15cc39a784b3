"""
Step-size certificates: the scaled constants mu_bar and ell_bar, the 2x2
matrix M_alpha, its largest eigenvalue rho_alpha, and the search for the
largest fixed step with rho_alpha < 1.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from core.exceptions import NoAdmissibleStep
from games.games import GameConstants

logger = logging.getLogger(__name__)

CERT_MARGIN = 1e-6
BISECTION_ITERS = 60
SMALLEST_STEP = 1e-16


@dataclass(frozen=True)
class StepCertificate:
    mu_bar: float
    ell_bar: float
    sigma_bar: float
    lambda_min_Q: float
    alpha: float
    rho: float
    contraction_factor: float
    admissible: bool
    ell0_bar: float | None = None


def scaled_constants(c: GameConstants, q) -> tuple[float, float]:
    q = np.asarray(q, dtype=float)
    return c.mu / float(q.max()), c.ell / float(q.min())


def m_alpha(
    alpha: float,
    mu_bar: float,
    ell_bar: float,
    sigma_bar: float,
    lambda_min_Q: float,
) -> np.ndarray:
    off_diagonal = 2.0 * alpha * ell_bar * sigma_bar
    return np.array([
        [
            1.0 - 2.0 * alpha * mu_bar * lambda_min_Q
            + alpha ** 2 * ell_bar ** 2,
            off_diagonal,
        ],
        [
            off_diagonal,
            (1.0 + 2.0 * alpha * ell_bar + alpha ** 2 * ell_bar ** 2)
            * sigma_bar ** 2,
        ],
    ])


def rho_alpha(M) -> float:
    """Largest eigenvalue of a symmetric 2x2 matrix, in closed form."""
    half_trace = 0.5 * (M[0][0] + M[1][1])
    det = M[0][0] * M[1][1] - M[0][1] * M[1][0]
    return float(half_trace + math.sqrt(max(half_trace ** 2 - det, 0.0)))


def certify_step(
    alpha: float,
    c: GameConstants,
    q,
    sigma_bar: float,
    margin: float = 0.0,
) -> StepCertificate:
    """Evaluate the certificate for a given step."""
    mu_bar, ell_bar = scaled_constants(c, q)
    lambda_min_Q = float(np.min(q))
    rho = rho_alpha(
        m_alpha(alpha, mu_bar, ell_bar, sigma_bar, lambda_min_Q)
    )
    return StepCertificate(
        mu_bar=mu_bar,
        ell_bar=ell_bar,
        sigma_bar=sigma_bar,
        lambda_min_Q=lambda_min_Q,
        alpha=alpha,
        rho=rho,
        contraction_factor=math.sqrt(rho),
        admissible=alpha > 0 and rho < 1.0 and rho <= 1.0 - margin,
        ell0_bar=c.ell0 / lambda_min_Q,
    )


def max_step_size(
    c: GameConstants,
    q,
    sigma_bar: float,
    tol: float = CERT_MARGIN,
    iterations: int = BISECTION_ITERS,
) -> StepCertificate:
    """
    Largest alpha with rho_alpha <= 1 - tol. The upper bracket
    2 mu_bar lambda_min(Q) / ell_bar^2 makes entry (1,1) equal to 1; the
    lower bracket is found by halving from it down to 1e-16.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")

    mu_bar, ell_bar = scaled_constants(c, q)
    lambda_min_Q = float(np.min(q))

    def rho(alpha):
        return rho_alpha(
            m_alpha(alpha, mu_bar, ell_bar, sigma_bar, lambda_min_Q)
        )

    upper = 2.0 * mu_bar * lambda_min_Q / ell_bar ** 2
    lower = upper / 2.0
    while lower >= SMALLEST_STEP and rho(lower) > 1.0 - tol:
        lower /= 2.0

    if not lower >= SMALLEST_STEP:
        raise NoAdmissibleStep(
            f"No step in [1e-16, {upper:.3e}] gives rho <= 1 - {tol:g} "
            f"(mu_bar={mu_bar:.3e}, ell_bar={ell_bar:.3e}, "
            f"sigma_bar={sigma_bar:.6f})"
        )

    for _ in range(iterations):
        middle = 0.5 * (lower + upper)
        if rho(middle) <= 1.0 - tol:
            lower = middle
        else:
            upper = middle

    certificate = certify_step(lower, c, q, sigma_bar, margin=tol)
    logger.info(
        f"Certified step alpha*={certificate.alpha:.6e} "
        f"(rho={certificate.rho:.9f})"
    )
    return certificate
