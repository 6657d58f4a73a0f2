"""Bisection recovery of nonnegative k-sparse signals with binary sensing vectors.

Sets of candidate locations are contiguous index ranges ``[lo, hi)``; a set
is split at its midpoint with the lower half taking the extra element.
Logarithms are base 2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ValidationError


def characteristic_vector(support, n: int) -> np.ndarray:
    """0/1 vector of length ``n`` with ones on the (0-based) indices in ``support``."""
    idx = np.asarray(sorted(support), dtype=int)
    if idx.size and (idx[0] < 0 or idx[-1] >= n):
        raise ValidationError(f"support index out of range for n={n}")
    a = np.zeros(n)
    a[idx] = 1.0
    return a


def ceil_log2(n: int) -> int:
    return max(0, math.ceil(math.log2(n))) if n > 1 else 0


@dataclass
class BisectionResult:
    estimate: np.ndarray
    measurement_count: int
    trace: list = field(default_factory=list)
    """``(lo, hi, outcome)`` for every measured block, in measurement order."""
    pruned: list = field(default_factory=list)
    """Index ranges removed because their outcome was ``<= eps``."""


def bisect_recover(measure: Callable[[np.ndarray, int], float], n: int, sigma: float, eps: float,
                   *, repetitions: int | None = None, infer_siblings: bool = False,
                   total: float | None = None) -> BisectionResult:
    """Recover a nonnegative sparse signal by recursive halving.

    Parameters
    ----------
    measure : callable
        ``measure(a, r)`` returns the average of ``r`` noisy observations of
        ``a @ x`` for a 0/1 vector ``a``.
    n : int
        Ambient dimension.
    sigma : float
        Noise standard deviation; selects ``r = ceil(log2 n)`` repetitions
        when positive and ``r = 1`` otherwise (unless ``repetitions`` is given).
    eps : float
        Blocks whose averaged outcome is ``<= eps`` are discarded.
    infer_siblings : bool
        Noiseless accounting used for the information-rate study: only the
        first half of each split is measured and the second half is the
        parent's value minus it. The root value is ``total`` if given,
        otherwise it is measured once.

    Returns
    -------
    BisectionResult
        ``measurement_count`` counts unit measurements, i.e. ``r`` per block.
    """
    if n < 1:
        raise ValidationError("n must be positive")
    if infer_siblings and sigma > 0:
        raise ValidationError("sibling inference is only exact without noise")
    r = repetitions if repetitions is not None else (max(1, ceil_log2(n)) if sigma > 0 else 1)
    xhat = np.zeros(n)
    res = BisectionResult(xhat, 0)

    def probe(lo, hi):
        a = np.zeros(n)
        a[lo:hi] = 1.0
        y = float(measure(a, r))
        res.measurement_count += r
        res.trace.append((lo, hi, y))
        return y

    def settle(lo, hi, y, keep):
        if y <= eps:
            res.pruned.append((lo, hi))
        elif hi - lo == 1:
            xhat[lo] = y
        else:
            keep.append((lo, hi, y))

    if n == 1:
        settle(0, 1, probe(0, 1) if total is None else float(total), [])
        return res

    if infer_siblings:
        root = probe(0, n) if total is None else float(total)
        active = [(0, n, root)]
        if root <= eps:
            res.pruned.append((0, n))
            active = []
    else:
        active = [(0, n, None)]

    while active:
        keep = []
        halves = []
        for lo, hi, val in active:
            mid = lo + (hi - lo + 1) // 2
            halves.append((lo, mid, hi, val))
        for lo, mid, hi, val in halves:
            y1 = probe(lo, mid)
            y2 = val - y1 if infer_siblings else probe(mid, hi)
            settle(lo, mid, y1, keep)
            settle(mid, hi, y2, keep)
        active = keep
    return res


def noisy_oracle(x, sigma: float, rng: np.random.Generator) -> Callable[[np.ndarray, int], float]:
    """Oracle averaging ``r`` independent ``a @ x + N(0, sigma^2)`` observations."""
    x = np.asarray(x, dtype=float)

    def measure(a, r):
        base = float(a @ x)
        if sigma == 0:
            return base
        return base + float(np.mean(sigma * rng.standard_normal(r)))

    return measure


def random_sparse_signal(n: int, k: int, rng: np.random.Generator, low: float = 1.0,
                         high: float | None = None) -> np.ndarray:
    """Uniformly random support of size ``k`` with amplitudes uniform in ``[low, high]``."""
    if not 0 <= k <= n:
        raise ValidationError("need 0 <= k <= n")
    x = np.zeros(n)
    support = rng.choice(n, size=k, replace=False)
    x[support] = low if high is None else rng.uniform(low, high, size=k)
    return x


def theorem_success_probability(n: int, k: int, sigma: float, eps: float) -> float:
    """Lower bound ``1 - k ceil(log n) / n^(eps^2 / (2 k sigma^2))`` on noisy recovery."""
    if sigma == 0:
        return 1.0
    expo = eps * eps / (2.0 * k * sigma * sigma)
    return 1.0 - k * ceil_log2(n) * math.exp(-expo * math.log(n))


@dataclass(frozen=True)
class InfoRate:
    bits_per_measurement: float
    mean_count: float
    std_count: float
    entropy_bits: float
    trials: int


def empirical_info_per_measurement(n: int, k: int, trials: int, rng: np.random.Generator) -> InfoRate:
    """Average information per measurement of noiseless bisection on uniform k-sparse 0/1 signals.

    The signal family has ``C(n, k)`` equally likely members, so the total
    information is ``log2 C(n, k)`` bits; it is divided by the mean number of
    measurements. Measurements use sibling inference with the known total
    ``k``, so every measured block carries new information.
    """
    if not 1 <= k <= n:
        raise ValidationError("need 1 <= k <= n")
    counts = np.empty(trials)
    for t in range(trials):
        x = random_sparse_signal(n, k, rng)
        out = bisect_recover(noisy_oracle(x, 0.0, rng), n, 0.0, 0.5, infer_siblings=True,
                             total=float(k))
        counts[t] = out.measurement_count
    h = (math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)) / math.log(2)
    mean = float(counts.mean())
    rate = h / mean if mean > 0 else 0.0
    return InfoRate(rate, mean, float(counts.std(ddof=1)) if trials > 1 else 0.0, h, trials)


def info_rate_lower_bound(n: int, k: int) -> float:
    """``1 - log k / log n``."""
    return 1.0 - math.log(k) / math.log(n)


def expected_count_lower_bound(n: int, k: int) -> float:
    """Lower bound ``k / (log2 k + 1) * (log2 n - 1)`` on expected measurements for 0/1 signals."""
    return k / (math.log2(k) + 1.0) * (math.log2(n) - 1.0)
