"""Cardinality-constrained measurement design by outer approximation.

Maximises ``f(a) = 0.5 ln(a^T Sigma a / sigma^2 + 1)`` over ``||a||_0 <= k0``
and ``|a_i| <= 1``. A mixed-integer linear master problem over variables
``[r, a, z]`` (``r`` binary support indicators) is refined by gradient cuts
``z <= f(a*) + grad f(a*)^T (a - a*)`` until its value meets ``f`` at the
master solution.

``f`` is convex along rays but not concave, so the cuts are not guaranteed
upper bounds of ``f``. The master value then need not dominate the true
optimum and the reported gap can be negative; it is reported as computed.
"""
from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NumericalError, ValidationError
from .linalg import as_symmetric
from .simplex import linprog_dense

#: support enumeration is used when C(n, k0) does not exceed this
ENUMERATION_LIMIT = 200_000
TIE_TOL = 1e-12
DEDUP_TOL = 1e-12


def f_gaussian(a, cov, sigma: float) -> float:
    """``0.5 ln(a^T Sigma a / sigma^2 + 1)`` in nats."""
    if not sigma > 0:
        raise ValidationError("sigma must be positive")
    a = np.asarray(a, dtype=float)
    return 0.5 * math.log1p(float(a @ cov @ a) / (sigma * sigma))


def grad_f_gaussian(a, cov, sigma: float) -> np.ndarray:
    """``Sigma a / (a^T Sigma a + sigma^2)``."""
    if not sigma > 0:
        raise ValidationError("sigma must be positive")
    a = np.asarray(a, dtype=float)
    sa = np.asarray(cov) @ a
    return sa / (float(a @ sa) + sigma * sigma)


def default_upper_bound(cov, sigma: float, k0: int) -> float:
    """``0.5 ln(||Sigma||_2 k0 / sigma^2 + 1)``, which bounds ``f`` on the feasible set."""
    norm = float(np.linalg.eigvalsh(as_symmetric(cov, "covariance"))[-1])
    return 0.5 * math.log1p(max(norm, 0.0) * k0 / (sigma * sigma))


class CutSystem:
    """Rows ``F [r; a; z] <= g`` of the master problem.

    The initial block holds the cardinality row ``sum r_i <= k0``, the box
    rows ``a_i - r_i <= 0`` and ``-a_i - r_i <= 0``, and ``-z <= 0``,
    ``z <= c``. Each cut appends ``[0, -grad^T, 1]`` with right-hand side
    ``f(a*) - grad^T a*``.
    """

    def __init__(self, n: int, k0: int, c: float):
        if n < 1 or not 1 <= k0:
            raise ValidationError("need n >= 1 and k0 >= 1")
        if not c >= 0:
            raise ValidationError("upper bound c must be nonnegative")
        self.n, self.k0, self.c = n, int(k0), float(c)
        eye = np.eye(n)
        zero_col = np.zeros((n, 1))
        self.F0 = np.vstack([
            np.concatenate([np.ones(n), np.zeros(n), [0.0]])[None],
            np.hstack([-eye, eye, zero_col]),
            np.hstack([-eye, -eye, zero_col]),
            np.concatenate([np.zeros(2 * n), [-1.0]])[None],
            np.concatenate([np.zeros(2 * n), [1.0]])[None],
        ])
        self.g0 = np.concatenate([[float(k0)], np.zeros(2 * n), [0.0, self.c]])
        self.points: list[np.ndarray] = []
        self.grads: list[np.ndarray] = []
        self.rhs: list[float] = []

    @property
    def cut_count(self) -> int:
        return len(self.points)

    @property
    def F(self) -> np.ndarray:
        if not self.points:
            return self.F0.copy()
        rows = np.hstack([np.zeros((self.cut_count, self.n)), -np.array(self.grads),
                          np.ones((self.cut_count, 1))])
        return np.vstack([self.F0, rows])

    @property
    def g(self) -> np.ndarray:
        return np.concatenate([self.g0, self.rhs])

    def add_cut(self, a_star, f_value: float, grad) -> bool:
        """Append the cut at ``a_star``; returns ``False`` for a duplicate point."""
        a_star = np.asarray(a_star, dtype=float)
        grad = np.asarray(grad, dtype=float)
        for p in self.points:
            if np.max(np.abs(p - a_star)) <= DEDUP_TOL:
                return False
        self.points.append(a_star.copy())
        self.grads.append(grad.copy())
        self.rhs.append(float(f_value - grad @ a_star))
        return True

    def model_value(self, a) -> float:
        """``min(c, min_j cut_j(a))``, the master objective at a feasible ``a``."""
        if not self.points:
            return self.c
        a = np.asarray(a, dtype=float)
        vals = np.array(self.rhs) + np.array(self.grads) @ a
        return float(min(self.c, vals.min()))


@dataclass(frozen=True)
class MasterSolution:
    r: np.ndarray
    a: np.ndarray
    z: float


def _support_lp(cuts: CutSystem, support):
    s = list(support)
    k = len(s)
    # variables [a_S, z]; objective maximise z
    cost = np.zeros(k + 1)
    cost[-1] = -1.0
    if cuts.cut_count:
        grads = np.array(cuts.grads)[:, s]
        A = np.hstack([-grads, np.ones((cuts.cut_count, 1))])
        b = np.array(cuts.rhs)
    else:
        A, b = None, None
    bounds = [(-1.0, 1.0)] * k + [(0.0, cuts.c)]
    res = linprog_dense(cost, A, b, bounds=bounds)
    a = np.zeros(cuts.n)
    if res.status == "infeasible":
        # cuts of a non-concave f can push z below 0 on a whole support; cuts only
        # shrink the feasible set, so the support stays excluded
        return -np.inf, a
    if res.status != "optimal":
        raise NumericalError(f"support LP {tuple(s)} ended with status {res.status}")
    a[s] = res.x[:k]
    return float(res.x[-1]), a


class _SupportCache:
    """Per-support LP optima; a cached optimum stays optimal until a new cut excludes it."""

    def __init__(self, cuts: CutSystem, size: int):
        self.cuts = cuts
        self.supports = list(itertools.combinations(range(cuts.n), size))
        self.values = np.full(len(self.supports), np.inf)
        self.sols: list[np.ndarray | None] = [None] * len(self.supports)
        self.seen = 0

    def solve(self, tie_key: Callable[[np.ndarray], float]) -> MasterSolution | None:
        cuts = self.cuts
        new = range(self.seen, cuts.cut_count)
        self.seen = cuts.cut_count
        heap = []
        for i, (v, sol) in enumerate(zip(self.values, self.sols)):
            fresh = sol is not None
            if fresh:
                for j in new:
                    if cuts.rhs[j] + cuts.grads[j] @ sol < v - 1e-12:
                        fresh = False
                        break
            if not fresh:
                self.sols[i] = None
            heapq.heappush(heap, (-v, i))
        best_val = None
        ties = []
        while heap:
            neg, i = heapq.heappop(heap)
            if best_val is not None and -neg < best_val - TIE_TOL:
                break
            if self.sols[i] is None:
                v, a = _support_lp(cuts, self.supports[i])
                self.values[i], self.sols[i] = v, a
                heapq.heappush(heap, (-v, i))
                continue
            if neg == np.inf:
                break
            if best_val is None:
                best_val = -neg
            ties.append(i)
        if not ties:
            return None
        pick = max(ties, key=lambda i: (tie_key(self.sols[i]), -i))
        a = self.sols[pick]
        r = np.zeros(cuts.n)
        r[list(self.supports[pick])] = 1.0
        return MasterSolution(r, a.copy(), float(self.values[pick]))


def _relaxation(cuts: CutSystem, fixed: dict):
    n = cuts.n
    cost = np.zeros(2 * n + 1)
    cost[-1] = -1.0
    F, g = cuts.F, cuts.g
    # z bounds and nothing else come from variable bounds; drop the explicit z rows
    keep = np.ones(F.shape[0], dtype=bool)
    keep[2 * n + 1 : 2 * n + 3] = False
    bounds = [(float(fixed.get(i, 0)), float(fixed.get(i, 1))) for i in range(n)]
    bounds += [(-1.0, 1.0)] * n + [(0.0, cuts.c)]
    return linprog_dense(cost, F[keep], g[keep], bounds=bounds)


def _branch_and_bound(cuts: CutSystem, tie_key) -> MasterSolution | None:
    n = cuts.n
    best = None
    stack = [{}]
    while stack:
        fixed = stack.pop()
        res = _relaxation(cuts, fixed)
        if res.status != "optimal":
            continue
        z = res.x[-1]
        if best is not None and z < best.z - TIE_TOL:
            continue
        r = res.x[:n]
        frac = np.abs(r - np.round(r))
        if frac.max() <= 1e-9:
            r = np.round(r)
            # clear round-off left on coordinates outside the support
            cand = MasterSolution(r, np.where(r > 0, res.x[n : 2 * n], 0.0), float(z))
            if (best is None or z > best.z + TIE_TOL
                    or (abs(z - best.z) <= TIE_TOL and tie_key(cand.a) > tie_key(best.a))):
                best = cand
            continue
        i = int(np.argmax(frac))
        stack.append({**fixed, i: 0})
        stack.append({**fixed, i: 1})
    return best


def solve_master(cuts: CutSystem, method: str = "auto", tie_key=None,
                 _cache=None) -> MasterSolution | None:
    """Maximise ``z`` subject to all rows of ``cuts`` with binary ``r``.

    ``method`` is ``"enumerate"`` (one LP per support of size ``min(k0, n)``;
    smaller supports are contained in these because ``a_i = 0`` is allowed),
    ``"branch_and_bound"`` (depth-first on ``r`` with LP-relaxation bounds)
    or ``"auto"``, which enumerates when ``C(n, k0) <= 2e5``. Among optimal
    supports ``tie_key(a)`` (largest wins) breaks ties. Returns ``None`` when
    the cuts leave no point with ``z >= 0``.
    """
    tie_key = tie_key or (lambda a: 0.0)
    size = min(cuts.k0, cuts.n)
    if method == "auto":
        method = "enumerate" if math.comb(cuts.n, size) <= ENUMERATION_LIMIT else "branch_and_bound"
    if method == "enumerate":
        cache = _cache if _cache is not None else _SupportCache(cuts, size)
        return cache.solve(tie_key)
    if method == "branch_and_bound":
        return _branch_and_bound(cuts, tie_key)
    raise ValidationError(f"unknown master method {method!r}")


@dataclass
class SparseDesignResult:
    a: np.ndarray
    """Best point found, ``||a||_0 <= k0`` and ``|a_i| <= 1``."""
    objective: float
    iterations: int
    gap: float
    """Final master value minus ``objective``."""
    certified: bool
    upper_bound: float
    master_values: list = field(default_factory=list)

    @property
    def direction(self) -> np.ndarray:
        """``a`` scaled to unit Euclidean norm with a positive first nonzero entry."""
        nrm = np.linalg.norm(self.a)
        if nrm == 0:
            return self.a.copy()
        u = self.a / nrm
        return (-u if u[np.flatnonzero(u)[0]] < 0 else u) + 0.0  # + 0.0 clears negative zeros


def sparse_direction(cov, sigma: float, k0: int, c: float | None = None, tol: float = 1e-6,
                     max_iter: int = 100, method: str = "auto", f=None, grad=None) -> SparseDesignResult:
    """Outer-approximation loop for the sparse Info-Greedy direction.

    Parameters
    ----------
    cov : array_like, shape (n, n)
        Signal covariance.
    sigma : float
        Noise standard deviation.
    k0 : int
        Maximum number of nonzero entries.
    c : float, optional
        Upper bound on ``z``; default :func:`default_upper_bound`.
    tol : float
        The loop stops once ``z* - f(a*) <= tol``.
    f, grad : callable, optional
        Objective and gradient ``f(a)``, ``grad(a)``; default the Gaussian pair.

    Returns
    -------
    SparseDesignResult
        ``certified`` is ``False`` when ``max_iter`` cuts were used, or the
        cuts excluded every point of the master problem, without
        meeting ``tol``.
    """
    cov = as_symmetric(cov, "covariance")
    n = cov.shape[0]
    if not sigma > 0:
        raise ValidationError("sigma must be positive")
    if not 1 <= k0:
        raise ValidationError("k0 must be at least 1")
    f = f or (lambda a: f_gaussian(a, cov, sigma))
    grad = grad or (lambda a: grad_f_gaussian(a, cov, sigma))
    c = default_upper_bound(cov, sigma, k0) if c is None else float(c)
    cuts = CutSystem(n, k0, c)
    size = min(k0, n)
    if method == "auto":
        method = "enumerate" if math.comb(n, size) <= ENUMERATION_LIMIT else "branch_and_bound"
    cache = _SupportCache(cuts, size) if method == "enumerate" else None
    best_a, best_f = None, -np.inf
    history = []
    gap = np.inf
    it = 0
    certified = False
    while it < max_iter:
        sol = solve_master(cuts, method, tie_key=f, _cache=cache)
        if sol is None:
            # every support was cut off; keep the incumbent, uncertified
            break
        it += 1
        fa = f(sol.a)
        history.append(sol.z)
        if fa > best_f:
            best_a, best_f = sol.a.copy(), fa
        gap = sol.z - best_f
        if sol.z - fa <= tol:
            certified = True
            break
        if not cuts.add_cut(sol.a, fa, grad(sol.a)):
            # the master returned an existing cut point; no further progress is possible
            break
    return SparseDesignResult(best_a, float(best_f), it, float(gap), certified, c, history)


def brute_force_sparse_optimum(cov, sigma: float, k0: int):
    """Exact optimum by enumerating box vertices of every support of size ``min(k0, n)``.

    ``a^T Sigma a`` is convex so its maximum over a box is at a vertex, and
    ``f`` is increasing in it. Returns ``(value, a)``.
    """
    cov = as_symmetric(cov, "covariance")
    n = cov.shape[0]
    size = min(k0, n)
    # fixing the first sign loses nothing because f(a) = f(-a)
    signs = np.array([(1.0,) + s for s in itertools.product((1.0, -1.0), repeat=size - 1)])
    best_q, best_a = -np.inf, None
    for s in itertools.combinations(range(n), size):
        sub = cov[np.ix_(s, s)]
        q = np.einsum("ij,jk,ik->i", signs, sub, signs)
        j = int(np.argmax(q))
        if q[j] > best_q + TIE_TOL:
            best_q = q[j]
            best_a = np.zeros(n)
            best_a[list(s)] = signs[j]
    return 0.5 * math.log1p(best_q / (sigma * sigma)), best_a
