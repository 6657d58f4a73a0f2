"""Dense symmetric linear algebra, chi-squared quantiles and Gaussian sampling.

Every sensing routine in the package funnels its eigen-computations and
random draws through this module so that tie-breaking, sign conventions
and clamping of negligible eigenvalues are uniform.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy import special

from .errors import ConvergenceError, ValidationError

#: eigenvalues with magnitude below this fraction of the largest are set to zero
CLAMP_RTOL = 1e-10
#: relative asymmetry tolerated by :func:`as_symmetric`
SYMMETRY_RTOL = 1e-12
#: relative negative eigenvalue tolerated for a covariance
PSD_RTOL = 1e-8


class EigDecomposition(NamedTuple):
    """Eigenvalues sorted descending with matching orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        u = self.eigenvectors
        return (u * self.eigenvalues) @ u.T


def make_rng(seed=None) -> np.random.Generator:
    """Return a PCG64-backed generator.

    ``seed`` may be an int or a sequence of ints; sequences are mixed through
    :class:`numpy.random.SeedSequence`, which is how per-trial streams are
    derived from ``(seed, trial_index)``.
    """
    return np.random.Generator(np.random.PCG64(seed))


def as_symmetric(m, name: str = "matrix") -> np.ndarray:
    """Validate a square, finite, numerically symmetric matrix and return a symmetrised copy."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValidationError(f"{name} has non-finite entries")
    scale = np.max(np.abs(m)) if m.size else 0.0
    if m.size and np.max(np.abs(m - m.T)) > SYMMETRY_RTOL * max(scale, np.finfo(float).tiny):
        raise ValidationError(f"{name} is not symmetric")
    return 0.5 * (m + m.T)


def _normalize_signs(vectors: np.ndarray) -> np.ndarray:
    # first entry that is clearly nonzero is made positive
    out = vectors.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        big = np.flatnonzero(np.abs(col) > 1e-10)
        if big.size and col[big[0]] < 0:
            out[:, j] = -col
    return out


def _jacobi(m: np.ndarray, tol: float = 1e-14, max_sweeps: int = 100):
    a = m.copy()
    n = a.shape[0]
    v = np.eye(n)
    off_scale = np.linalg.norm(a)
    for _ in range(max_sweeps):
        off = np.sqrt(max(np.sum(a * a) - np.sum(np.diag(a) ** 2), 0.0))
        if off <= tol * max(off_scale, np.finfo(float).tiny):
            return np.diag(a).copy(), v
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    raise ConvergenceError("Jacobi sweeps did not converge", best=(np.diag(a).copy(), v),
                           iterations=max_sweeps)


def sym_eig(m, method: str = "lapack") -> EigDecomposition:
    """Full eigendecomposition of a symmetric matrix.

    Parameters
    ----------
    m : array_like, shape (n, n)
        Symmetric matrix.
    method : {"lapack", "jacobi"}
        ``"lapack"`` calls :func:`numpy.linalg.eigh`; ``"jacobi"`` runs the
        cyclic Jacobi rotation method implemented here (slower, dependency free).

    Returns
    -------
    EigDecomposition
        Eigenvalues in descending order. Ties keep the order produced by the
        underlying routine, which is deterministic. Each eigenvector has its
        first clearly nonzero entry positive, and eigenvalues smaller in
        magnitude than ``1e-10`` times the largest are clamped to zero.
    """
    m = as_symmetric(m)
    if method == "lapack":
        w, u = np.linalg.eigh(m)
    elif method == "jacobi":
        w, u = _jacobi(m)
    else:
        raise ValidationError(f"unknown eigen method {method!r}")
    order = np.argsort(-w, kind="stable")
    w = w[order]
    u = u[:, order]
    if w.size:
        w = np.where(np.abs(w) < CLAMP_RTOL * np.max(np.abs(w)), 0.0, w)
    return EigDecomposition(w, _normalize_signs(u))


def leading_eigpair(m, tol: float = 1e-12, max_iter: int = 100_000):
    """Largest eigenvalue and unit eigenvector of a PSD matrix by power iteration.

    Iterates until the residual ``||M v - rho v||`` falls below ``tol * ||M||_F``.
    Raises :class:`ConvergenceError` carrying the best ``(value, vector)`` pair
    when ``max_iter`` is exhausted.
    """
    m = as_symmetric(m)
    n = m.shape[0]
    scale = np.linalg.norm(m)
    if scale == 0.0:
        v = np.zeros(n)
        v[0] = 1.0
        return 0.0, v
    # deterministic start that is not orthogonal to coordinate axes or the all-ones vector
    v = 1.0 + np.arange(n) / (n + 1.0)
    v /= np.linalg.norm(v)
    best = (np.nan, v)
    best_res = np.inf
    for it in range(max_iter):
        w = m @ v
        rho = float(v @ w)
        res = np.linalg.norm(w - rho * v)
        if res < best_res:
            best_res, best = res, (rho, v)
        if res <= tol * scale:
            break
        nw = np.linalg.norm(w)
        if nw == 0.0:
            # start vector lies in the null space; PSD so the top eigenvalue is zero
            return 0.0, v
        v = w / nw
    else:
        raise ConvergenceError(f"power iteration residual {best_res:.3e} after {max_iter} iterations",
                               best=best, iterations=max_iter)
    big = np.flatnonzero(np.abs(v) > 1e-10)
    if big.size and v[big[0]] < 0:
        v = -v
    return rho, v


def chi2_quantile(p: float, n: float) -> float:
    """Quantile function of the chi-squared distribution with ``n`` degrees of freedom."""
    if not 0.0 < p < 1.0:
        raise ValidationError(f"probability must lie in (0, 1), got {p}")
    if n < 1:
        raise ValidationError(f"degrees of freedom must be >= 1, got {n}")
    return float(2.0 * special.gammaincinv(0.5 * n, p))


def chi2_cdf(x: float, n: float) -> float:
    return float(special.gammainc(0.5 * n, 0.5 * x)) if x > 0 else 0.0


def psd_sqrt_factor(cov) -> np.ndarray:
    """Return ``L`` with ``L @ L.T == cov`` using only the nonzero eigen-modes.

    Raises :class:`ValidationError` for a covariance with an eigenvalue below
    ``-1e-8 * ||cov||``.
    """
    cov = as_symmetric(cov, "covariance")
    w, u = np.linalg.eigh(cov)
    top = np.max(np.abs(w)) if w.size else 0.0
    if w.size and w[0] < -PSD_RTOL * top:
        raise ValidationError(f"covariance is indefinite (min eigenvalue {w[0]:.3e})")
    keep = w > CLAMP_RTOL * top
    return u[:, keep] * np.sqrt(w[keep])


def sample_mvn(mean, cov, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw from ``N(mean, cov)``; ``cov`` may be rank deficient.

    Only as many standard normals as the numerical rank of ``cov`` are drawn,
    so a zero covariance returns ``mean`` exactly and samples of a degenerate
    Gaussian stay in its support.
    """
    mean = np.asarray(mean, dtype=float)
    factor = psd_sqrt_factor(cov)
    if factor.shape[0] != mean.shape[0]:
        raise ValidationError("mean and covariance dimensions differ")
    r = factor.shape[1]
    if size is None:
        if r == 0:
            return mean.copy()
        return mean + factor @ rng.standard_normal(r)
    if r == 0:
        return np.tile(mean, (size, 1))
    return mean + rng.standard_normal((size, r)) @ factor.T
