"""Symmetric positive-definite solves with jitter escalation.

Every regularized Gram system in the package goes through ``spd_factor``:
attempt a Cholesky factorization, and on failure retry with a diagonal
jitter escalated tenfold up to three times before raising ``NumericError``
with a condition estimate.  Explicit inverses are never formed.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import NumericError

__all__ = ["SpdFactor", "spd_factor", "solve_spd"]

_MAX_RETRIES = 3


@dataclass(frozen=True)
class SpdFactor:
    """Cached Cholesky factorization, reusable across solves."""

    c_and_lower: tuple = field(repr=False)
    jitter: float = 0.0

    def solve(self, b):
        return cho_solve(self.c_and_lower, b)


def spd_factor(mat, name="matrix"):
    """Factor a symmetric PD matrix, escalating jitter on breakdown."""
    mat = np.asarray(mat, dtype=float)
    base = 1e-12 * max(float(np.mean(np.diag(mat))), 1e-30)
    jitter = 0.0
    for attempt in range(_MAX_RETRIES + 1):
        try:
            target = mat if jitter == 0.0 else mat + jitter * np.eye(mat.shape[0])
            factor = cho_factor(target, lower=True, check_finite=False)
            return SpdFactor(factor, jitter)
        except np.linalg.LinAlgError:
            jitter = base if jitter == 0.0 else jitter * 10.0
    try:
        cond = float(np.linalg.cond(mat))
    except np.linalg.LinAlgError:
        cond = float("inf")
    raise NumericError(
        f"Cholesky failed for {name} after {_MAX_RETRIES} jitter retries "
        f"(last jitter {jitter / 10.0:.3e}, cond estimate {cond:.3e})",
        cond=cond,
    )


def solve_spd(mat, b, name="matrix"):
    return spd_factor(mat, name=name).solve(b)
