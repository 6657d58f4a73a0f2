"""Dense two-phase primal simplex for small linear programs.

Solves ``min c^T x`` subject to ``A_ub x <= b_ub``, ``A_eq x = b_eq`` and
``lo <= x <= hi`` with finite lower bounds. Pivoting follows Bland's rule,
so the method terminates on degenerate problems.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

PIVOT_TOL = 1e-9


@dataclass(frozen=True)
class LpResult:
    status: str
    """``"optimal"``, ``"infeasible"`` or ``"unbounded"``."""
    x: np.ndarray | None
    fun: float
    iterations: int


def _pivot(t: np.ndarray, basis: np.ndarray, row: int, col: int) -> None:
    t[row] /= t[row, col]
    col_vals = t[:, col].copy()
    col_vals[row] = 0.0
    t -= np.outer(col_vals, t[row])
    basis[row] = col


def _run(t: np.ndarray, basis: np.ndarray, ncols: int, max_iter: int) -> tuple[str, int]:
    # objective row is the last row; columns [0, ncols) are eligible to enter
    it = 0
    while it < max_iter:
        cost = t[-1, :ncols]
        neg = np.flatnonzero(cost < -PIVOT_TOL)
        if neg.size == 0:
            return "optimal", it
        col = int(neg[0])
        colv = t[:-1, col]
        pos = np.flatnonzero(colv > PIVOT_TOL)
        if pos.size == 0:
            return "unbounded", it
        ratios = t[pos, -1] / colv[pos]
        best = ratios.min()
        tied = pos[ratios <= best + PIVOT_TOL * max(1.0, abs(best))]
        row = int(tied[np.argmin(basis[tied])])
        _pivot(t, basis, row, col)
        it += 1
    return "iteration_limit", it


def linprog_dense(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, bounds=None,
                  max_iter: int = 10_000) -> LpResult:
    """Minimise ``c^T x`` over a polyhedron.

    Parameters
    ----------
    c : array_like, shape (n,)
    A_ub, b_ub : array_like, optional
        Inequality rows ``A_ub x <= b_ub``.
    A_eq, b_eq : array_like, optional
        Equality rows.
    bounds : sequence of (lo, hi), optional
        Per-variable bounds; ``lo`` must be finite, ``hi`` may be ``None`` or
        ``inf``. Defaults to ``x >= 0``.

    Returns
    -------
    LpResult
    """
    c = np.asarray(c, dtype=float)
    n = c.shape[0]
    A_ub = np.zeros((0, n)) if A_ub is None else np.atleast_2d(np.asarray(A_ub, dtype=float))
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).ravel()
    A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).ravel()
    if A_ub.shape != (b_ub.shape[0], n) or A_eq.shape != (b_eq.shape[0], n):
        raise ValidationError("constraint shapes do not match the objective")
    if bounds is None:
        bounds = [(0.0, None)] * n
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([np.inf if b[1] is None else b[1] for b in bounds], dtype=float)
    if lo.shape != (n,) or not np.all(np.isfinite(lo)):
        raise ValidationError("every variable needs a finite lower bound")
    if np.any(hi < lo):
        return LpResult("infeasible", None, np.nan, 0)

    # shift to y = x - lo >= 0 and append finite upper bounds as rows
    b_ub = b_ub - A_ub @ lo
    b_eq = b_eq - A_eq @ lo
    fin = np.flatnonzero(np.isfinite(hi))
    if fin.size:
        rows = np.zeros((fin.size, n))
        rows[np.arange(fin.size), fin] = 1.0
        A_ub = np.vstack([A_ub, rows])
        b_ub = np.concatenate([b_ub, (hi - lo)[fin]])
    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
    m = m_ub + m_eq

    # columns: y (n) | slacks (m_ub) | artificials (as needed) | rhs
    a_full = np.zeros((m, n + m_ub))
    a_full[:m_ub, :n] = A_ub
    a_full[:m_ub, n:] = np.eye(m_ub)
    a_full[m_ub:, :n] = A_eq
    rhs = np.concatenate([b_ub, b_eq])
    flip = rhs < 0
    a_full[flip] *= -1.0
    rhs = np.abs(rhs)
    need_art = np.ones(m, dtype=bool)
    need_art[:m_ub] = flip[:m_ub]
    art_rows = np.flatnonzero(need_art)
    n_art = art_rows.size
    ncols = n + m_ub + n_art

    t = np.zeros((m + 1, ncols + 1))
    t[:m, : n + m_ub] = a_full
    t[art_rows, n + m_ub + np.arange(n_art)] = 1.0
    t[:m, -1] = rhs
    basis = np.empty(m, dtype=int)
    basis[:m_ub] = n + np.arange(m_ub)
    basis[art_rows] = n + m_ub + np.arange(n_art)

    iters = 0
    if n_art:
        t[-1, n + m_ub : ncols] = 1.0
        t[-1] -= t[art_rows].sum(axis=0)
        status, k = _run(t, basis, ncols, max_iter)
        iters += k
        if status == "iteration_limit":
            return LpResult(status, None, np.nan, iters)
        if -t[-1, -1] > PIVOT_TOL * max(1.0, np.abs(rhs).max(initial=0.0)):
            return LpResult("infeasible", None, np.nan, iters)
        # drive remaining artificials out of the basis or drop redundant rows
        keep = np.ones(m + 1, dtype=bool)
        for i in range(m):
            if basis[i] >= n + m_ub:
                cand = np.flatnonzero(np.abs(t[i, : n + m_ub]) > PIVOT_TOL)
                if cand.size:
                    _pivot(t, basis, i, int(cand[0]))
                else:
                    keep[i] = False
        t = t[keep]
        basis = basis[keep[:-1]]
        t = np.delete(t, np.s_[n + m_ub : ncols], axis=1)
        ncols = n + m_ub

    t[-1] = 0.0
    t[-1, :n] = c
    for i, b in enumerate(basis):
        if t[-1, b] != 0.0:
            t[-1] -= t[-1, b] * t[i]
    status, k = _run(t, basis, ncols, max_iter)
    iters += k
    if status != "optimal":
        return LpResult(status, None, np.nan, iters)
    y = np.zeros(ncols)
    y[basis] = t[:-1, -1]
    x = lo + y[:n]
    return LpResult("optimal", x, float(c @ x), iters)
