"""Random covariance generators for the simulated studies."""
from __future__ import annotations

import numpy as np

from ..errors import ValidationError


def _normalized_wishart(n: int, rng: np.random.Generator, transpose: bool = False) -> np.ndarray:
    s0 = rng.standard_normal((n, n))
    m = s0.T @ s0 if transpose else s0 @ s0.T
    m = 0.5 * (m + m.T)
    return m / np.linalg.eigvalsh(m)[-1]


def _rebuild(w: np.ndarray, u: np.ndarray) -> np.ndarray:
    s = (u * w) @ u.T
    return 0.5 * (s + s.T)


def gen_lowrank_cov(n: int, threshold: float, rng: np.random.Generator) -> np.ndarray:
    """``Sigma_0 Sigma_0^T / ||Sigma_0 Sigma_0^T||_2`` with eigenvalues below ``threshold`` set to zero.

    ``Sigma_0`` has i.i.d. standard normal entries. The largest eigenvalue is
    one before thresholding, so the output has unit spectral norm and rank
    at least one.
    """
    if not 0.0 < threshold < 1.0:
        raise ValidationError(f"threshold must lie in (0, 1), got {threshold}")
    if n < 1:
        raise ValidationError("n must be positive")
    w, u = np.linalg.eigh(_normalized_wishart(n, rng))
    w = np.where(w < threshold, 0.0, w)
    return _rebuild(w, u)


def gen_rank_cov(n: int, rank: int, rng: np.random.Generator) -> np.ndarray:
    """Normalised Wishart matrix truncated to its ``rank`` largest eigenvalues."""
    if not 1 <= rank <= n:
        raise ValidationError(f"rank must lie in [1, {n}], got {rank}")
    w, u = np.linalg.eigh(_normalized_wishart(n, rng))
    w[: n - rank] = 0.0
    return _rebuild(w, u)


def gen_colored_noise_cov(n: int, rng: np.random.Generator) -> np.ndarray:
    """``S^T S / ||S^T S||_2`` for a standard normal ``S``; full rank with probability one."""
    if n < 1:
        raise ValidationError("n must be positive")
    return _normalized_wishart(n, rng, transpose=True)
