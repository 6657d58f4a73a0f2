"""Info-Greedy Sensing of a single (possibly low-rank) Gaussian signal.

Four noise regimes are supported:

* :class:`WhiteAfter`    ``y = a^T x + w``,      ``w ~ N(0, sigma^2)``
* :class:`WhiteBefore`   ``y = a^T (x + w)``,    ``w ~ N(0, sigma^2 I)``
* :class:`ColoredAfter`  ``y = a^T x + w_1``,    ``w ~ N(0, Sigma_w)``
* :class:`ColoredBefore` ``y = a^T (x + w)``,    ``w ~ N(0, Sigma_w)``

In the "before" regimes power cannot raise the SNR, so the resource is an
integer number of unit-norm repetitions along the selected direction.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import linalg as sla

from .errors import NumericalError, ValidationError
from .linalg import as_symmetric, chi2_quantile, make_rng, sample_mvn, sym_eig

# slack on the stopping test; the power formula lands eigenvalues exactly on the threshold
STOP_RTOL = 1e-9


@dataclass(frozen=True)
class GaussianBelief:
    """Mean and covariance of a Gaussian signal model."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = as_symmetric(self.cov, "covariance")
        if mean.ndim != 1 or cov.shape[0] != mean.shape[0]:
            raise ValidationError(f"mean {mean.shape} and covariance {cov.shape} do not match")
        if not np.all(np.isfinite(mean)):
            raise ValidationError("mean has non-finite entries")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def check_psd(self, rtol: float = 1e-10) -> None:
        w = np.linalg.eigvalsh(self.cov)
        if w.size and w[0] < -rtol * max(abs(w[-1]), np.finfo(float).tiny):
            raise ValidationError(f"covariance is not PSD (min eigenvalue {w[0]:.3e})")


@dataclass(frozen=True)
class WhiteAfter:
    sigma: float

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValidationError("noise standard deviation must be >= 0")


@dataclass(frozen=True)
class WhiteBefore:
    sigma: float

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValidationError("noise standard deviation must be >= 0")


def _check_noise_cov(cov) -> np.ndarray:
    cov = as_symmetric(cov, "noise covariance")
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise ValidationError("noise covariance must be positive definite") from None
    return cov


@dataclass(frozen=True)
class ColoredAfter:
    cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "cov", _check_noise_cov(self.cov))


@dataclass(frozen=True)
class ColoredBefore:
    cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "cov", _check_noise_cov(self.cov))


NoiseModel = Union[WhiteAfter, WhiteBefore, ColoredAfter, ColoredBefore]


class StopReason(enum.Enum):
    INFO_THRESHOLD = "InfoThreshold"
    MAX_ITERATIONS = "MaxIterations"
    BUDGET_EXHAUSTED = "BudgetExhausted"


@dataclass(frozen=True)
class MeasurementRecord:
    """One sensing step.

    ``direction`` is unit norm. ``power`` is the squared norm of the actual
    sensing vector for the "after" models and the repetition count for the
    "before" models; ``outcome`` is the (repetition-averaged) observation.
    """

    direction: np.ndarray
    power: float
    outcome: float
    info_gain: float


@dataclass
class SessionTranscript:
    records: list
    estimate: np.ndarray
    stop_reason: StopReason
    belief: GaussianBelief = field(repr=False)

    @property
    def total_power(self) -> float:
        return float(sum(r.power for r in self.records))

    @property
    def num_steps(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class Selection:
    """Output of :func:`select_direction`.

    ``vector`` is the sensing vector actually applied (``sqrt(power) * direction``
    for the after-models, ``direction`` for the before-models), ``power`` as in
    :class:`MeasurementRecord`, ``noise_var`` the variance of the additive
    noise on a single measurement with ``vector``.
    """

    direction: np.ndarray
    vector: np.ndarray
    power: float
    noise_var: float


def mutual_info_gaussian(a, cov, noise_var: float) -> float:
    """``0.5 * ln(a^T cov a / noise_var + 1)`` in nats."""
    if not noise_var > 0:
        raise ValidationError("noise variance must be positive")
    a = np.asarray(a, dtype=float)
    q = float(a @ np.asarray(cov) @ a)
    return 0.5 * math.log1p(max(q, 0.0) / noise_var)


def posterior_update(belief: GaussianBelief, a, y: float, noise_var: float) -> GaussianBelief:
    """Condition ``belief`` on ``y = a^T x + n`` with ``n ~ N(0, noise_var)``."""
    a = np.asarray(a, dtype=float)
    sa = belief.cov @ a
    s = float(a @ sa) + noise_var
    if not s > 0:
        raise NumericalError("measurement carries neither signal variance nor noise; "
                             "posterior is undefined")
    mean = belief.mean + sa * ((y - float(a @ belief.mean)) / s)
    cov = belief.cov - np.outer(sa, sa) / s
    return GaussianBelief(mean, 0.5 * (cov + cov.T))


def stopping_threshold(eps: float, p: float, n: int) -> float:
    """Eigenvalue level ``eps^2 / chi2_n(p)`` below which recovery to ``eps`` holds w.p. ``p``."""
    if not eps > 0:
        raise ValidationError("accuracy eps must be positive")
    return eps * eps / chi2_quantile(p, n)


def _whitening(noise_cov):
    chol = np.linalg.cholesky(noise_cov)
    return chol


def generalized_leading(cov, noise_cov):
    """Leading eigenvalue and unit eigenvector of ``noise_cov^{-1} cov``."""
    chol = _whitening(noise_cov)
    # M = L^{-1} cov L^{-T} shares the spectrum of noise_cov^{-1} cov
    tmp = sla.solve_triangular(chol, cov, lower=True)
    m = sla.solve_triangular(chol, tmp.T, lower=True)
    dec = sym_eig(0.5 * (m + m.T))
    lam = float(dec.eigenvalues[0])
    v = sla.solve_triangular(chol.T, dec.eigenvectors[:, 0], lower=False)
    v = v / np.linalg.norm(v)
    big = np.flatnonzero(np.abs(v) > 1e-10)
    if big.size and v[big[0]] < 0:
        v = -v
    return lam, v


def generalized_eigenvalues(cov, noise_cov) -> np.ndarray:
    """Eigenvalues of ``noise_cov^{-1} cov``, descending."""
    chol = _whitening(as_symmetric(noise_cov))
    tmp = sla.solve_triangular(chol, as_symmetric(cov), lower=True)
    m = sla.solve_triangular(chol, tmp.T, lower=True)
    return sym_eig(0.5 * (m + m.T)).eigenvalues


def mode_matching_direction(cov, noise_cov) -> np.ndarray:
    """Unit direction ``U_x Lambda_w^{1/2} U_w^T e_1`` normalised (colored noise after measuring)."""
    sx = sym_eig(cov)
    sw = sym_eig(noise_cov)
    b = np.sqrt(np.clip(sw.eigenvalues, 0.0, None)) * sw.eigenvectors[0, :]
    u = sx.eigenvectors @ b
    return u / np.linalg.norm(u)


def select_direction(belief: GaussianBelief, noise: NoiseModel, eps: float, p: float) -> Selection:
    """Info-Greedy measurement for the current belief under ``noise``.

    White noise after measuring
        leading eigenvector ``u`` of the covariance with power
        ``beta = (chi2_n(p)/eps^2 - 1/lambda) sigma^2``, which brings that
        eigenvalue exactly to ``eps^2/chi2_n(p)``. With ``sigma = 0`` a unit
        power noiseless measurement is used.
    White noise before measuring
        unit leading eigenvector repeated
        ``max(1, ceil((chi2_n(p)/eps^2 - 1/lambda) sigma^2))`` times.
    Colored noise before measuring
        unit leading eigenvector of ``Sigma_w^{-1} Sigma`` repeated
        ``max(1, ceil(chi2_n(p)/eps^2 ||Sigma_w|| - 1/lambda))`` times, where
        ``lambda`` is the leading generalized eigenvalue.
    Colored noise after measuring
        mode-matching direction with noise variance ``e_1^T Sigma_w e_1`` and
        the white-after power formula evaluated with that variance.
    """
    n = belief.dim
    inv_delta = 1.0 / stopping_threshold(eps, p, n)
    if isinstance(noise, ColoredBefore):
        lam, u = generalized_leading(belief.cov, noise.cov)
        if lam <= 0:
            raise ValidationError("covariance is zero; nothing to measure")
        wnorm = float(np.linalg.eigvalsh(noise.cov)[-1])
        reps = max(1, math.ceil(inv_delta * wnorm - 1.0 / lam))
        return Selection(u, u, float(reps), float(u @ noise.cov @ u))

    if isinstance(noise, ColoredAfter):
        lam = float(sym_eig(belief.cov).eigenvalues[0])
        u = mode_matching_direction(belief.cov, noise.cov)
        var = float(noise.cov[0, 0])
        if lam <= 0:
            raise ValidationError("covariance is zero; nothing to measure")
        beta = (inv_delta - 1.0 / lam) * var
        if beta <= 0:
            raise ValidationError("stopping condition already met")
        return Selection(u, math.sqrt(beta) * u, beta, var)

    dec = sym_eig(belief.cov)
    lam = float(dec.eigenvalues[0])
    u = dec.eigenvectors[:, 0]
    if lam <= 0:
        raise ValidationError("covariance is zero; nothing to measure")
    var = float(noise.sigma) ** 2
    if isinstance(noise, WhiteAfter):
        if var == 0.0:
            return Selection(u, u, 1.0, 0.0)
        beta = (inv_delta - 1.0 / lam) * var
        if beta <= 0:
            raise ValidationError("stopping condition already met")
        return Selection(u, math.sqrt(beta) * u, beta, var)
    if isinstance(noise, WhiteBefore):
        reps = max(1, math.ceil((inv_delta - 1.0 / lam) * var))
        return Selection(u, u, float(reps), var)
    raise ValidationError(f"unknown noise model {noise!r}")


def measurement_budget(eigenvalues, noise: NoiseModel, eps: float, p: float, dim: int | None = None):
    """Resource that guarantees ``||x - x_hat|| <= eps`` with probability ``p``.

    Parameters
    ----------
    eigenvalues : array_like
        Spectrum of the signal covariance, or of ``Sigma_w^{-1} Sigma`` for
        :class:`ColoredBefore`. Zero eigenvalues are skipped.
    dim : int, optional
        Ambient dimension used for the chi-squared quantile; defaults to the
        number of eigenvalues supplied.

    Returns
    -------
    int or float
        Number of unit measurements for the before-models, total power for
        :class:`WhiteAfter` with ``sigma > 0``. With ``sigma = 0`` (or
        ``sigma^2 <= eps^2/chi2_n(p)`` in the white-before model) this is the
        count of eigenvalues above ``eps^2/chi2_n(p)``.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    if np.any(lam < 0):
        raise ValidationError("eigenvalues must be nonnegative")
    n = int(dim) if dim is not None else lam.size
    delta = stopping_threshold(eps, p, n)
    lam = lam[lam > 0]
    if isinstance(noise, ColoredBefore):
        wnorm = float(np.linalg.eigvalsh(noise.cov)[-1])
        return int(sum(max(0, math.ceil(wnorm / delta - 1.0 / li)) for li in lam))
    if isinstance(noise, ColoredAfter):
        var = float(noise.cov[0, 0])
        return float(sum(max(0.0, (1.0 / delta - 1.0 / li) * var) for li in lam))
    var = float(noise.sigma) ** 2
    exact_count = int(np.count_nonzero(lam > delta))
    if isinstance(noise, WhiteAfter):
        if var == 0.0:
            return exact_count
        return float(sum(max(0.0, (1.0 / delta - 1.0 / li) * var) for li in lam))
    if isinstance(noise, WhiteBefore):
        if var <= delta:
            return exact_count
        return int(sum(max(0, math.ceil((1.0 / delta - 1.0 / li) * var)) for li in lam))
    raise ValidationError(f"unknown noise model {noise!r}")


def simulate_outcome(x, sel: Selection, noise: NoiseModel, rng: np.random.Generator) -> float:
    """Observation for sensing vector ``sel.vector`` under ``noise``.

    Before-model repetitions are returned already averaged, so the noise on
    the returned value has variance ``sel.noise_var / sel.power``.
    """
    signal = float(sel.vector @ x)
    if sel.noise_var == 0.0:
        return signal
    if isinstance(noise, (WhiteBefore, ColoredBefore)):
        return signal + math.sqrt(sel.noise_var / sel.power) * float(rng.standard_normal())
    return signal + math.sqrt(sel.noise_var) * float(rng.standard_normal())


def _apply(belief, sel, noise, y):
    if isinstance(noise, (WhiteBefore, ColoredBefore)):
        return posterior_update(belief, sel.vector, y, sel.noise_var / sel.power)
    return posterior_update(belief, sel.vector, y, sel.noise_var)


def run_session(true_signal, prior: GaussianBelief, noise: NoiseModel, eps: float, p: float,
                max_iter: int, rng: np.random.Generator, *, fixed_power: float | None = None,
                budget: float | None = None, on_step=None) -> SessionTranscript:
    """Sequential Info-Greedy sensing until ``||Sigma|| <= eps^2/chi2_n(p)`` or ``max_iter`` steps.

    Parameters
    ----------
    true_signal : array_like, callable or None
        The signal to sense. A callable is invoked as ``true_signal(rng)``;
        ``None`` draws the signal from ``prior``.
    fixed_power : float, optional
        Override the theorem-driven resource with a constant per-step power
        (after-models) or repetition count (before-models).
    budget : float, optional
        Stop with ``BudgetExhausted`` once the accumulated resource reaches it.
    on_step : callable, optional
        Called as ``on_step(record, belief)`` after every posterior update.
    """
    if max_iter < 1:
        raise ValidationError("max_iter must be >= 1")
    if true_signal is None:
        x = sample_mvn(prior.mean, prior.cov, rng)
    elif callable(true_signal):
        x = np.asarray(true_signal(rng), dtype=float)
    else:
        x = np.asarray(true_signal, dtype=float)
    delta = stopping_threshold(eps, p, prior.dim)
    belief = prior
    records = []
    spent = 0.0
    reason = StopReason.MAX_ITERATIONS
    for _ in range(max_iter):
        if budget is not None and spent >= budget:
            reason = StopReason.BUDGET_EXHAUSTED
            break
        top = float(sym_eig(belief.cov).eigenvalues[0])
        if top <= delta * (1.0 + STOP_RTOL):
            reason = StopReason.INFO_THRESHOLD
            break
        sel = select_direction(belief, noise, eps, p)
        if fixed_power is not None:
            if isinstance(noise, (WhiteBefore, ColoredBefore)):
                sel = Selection(sel.direction, sel.direction, float(fixed_power), sel.noise_var)
            else:
                sel = Selection(sel.direction, math.sqrt(fixed_power) * sel.direction,
                                float(fixed_power), sel.noise_var)
        y = simulate_outcome(x, sel, noise, rng)
        if sel.noise_var > 0:
            q = float(sel.direction @ belief.cov @ sel.direction)
            gain = 0.5 * math.log1p(max(q, 0.0) * sel.power / sel.noise_var)
        else:
            gain = math.inf
        records.append(MeasurementRecord(sel.direction, sel.power, y, gain))
        belief = _apply(belief, sel, noise, y)
        spent += sel.power
        if on_step is not None:
            on_step(records[-1], belief)
    else:
        top = float(sym_eig(belief.cov).eigenvalues[0])
        if top <= delta * (1.0 + STOP_RTOL):
            reason = StopReason.INFO_THRESHOLD
    return SessionTranscript(records, belief.mean.copy(), reason, belief)


def run_fixed_directions(x, prior: GaussianBelief, directions, noise_var, rng,
                         powers=None) -> GaussianBelief:
    """Measure along predetermined directions (batch or random baselines), updating the posterior.

    ``noise_var`` is a scalar or a callable mapping a unit direction to the
    per-measurement noise variance (colored noise folding). A power ``beta``
    means ``sqrt(beta) * d`` for after-noise, or ``beta`` averaged unit
    repetitions for before-noise; both give the same posterior.
    """
    belief = prior
    for i, d in enumerate(directions):
        d = np.asarray(d, dtype=float)
        var = float(noise_var(d)) if callable(noise_var) else float(noise_var)
        beta = 1.0 if powers is None else float(powers[i])
        a = math.sqrt(beta) * d
        y = float(a @ x) + (math.sqrt(var) * float(rng.standard_normal()) if var > 0 else 0.0)
        belief = posterior_update(belief, a, y, var)
    return belief


__all__ = [
    "GaussianBelief", "WhiteAfter", "WhiteBefore", "ColoredAfter", "ColoredBefore", "NoiseModel",
    "StopReason", "MeasurementRecord", "SessionTranscript", "Selection", "mutual_info_gaussian",
    "posterior_update", "stopping_threshold", "select_direction", "measurement_budget",
    "simulate_outcome", "run_session", "run_fixed_directions", "generalized_leading",
    "generalized_eigenvalues", "mode_matching_direction", "make_rng",
]
