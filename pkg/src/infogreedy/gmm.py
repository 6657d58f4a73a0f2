"""Info-Greedy Sensing for Gaussian-mixture signals.

A :class:`GmmBelief` is the posterior over a mixture after the measurements
in its history. Updates are incremental (one rank-one update per component
and a predictive-density reweighting), which by the Gaussian chain rule
equals conditioning the prior mixture on the whole history at once; see
:func:`batch_log_weights`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import NumericalError, ValidationError
from .linalg import CLAMP_RTOL, as_symmetric, psd_sqrt_factor, sym_eig

LOG_2PI = math.log(2.0 * math.pi)
LOG_2PIE = math.log(2.0 * math.pi * math.e)


@dataclass(frozen=True)
class GmmBelief:
    """Mixture weights, component means ``(C, n)`` and covariances ``(C, n, n)``.

    ``directions`` ``(i, n)`` and ``outcomes`` ``(i,)`` hold the measurement
    history that produced this posterior from the prior.
    """

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    directions: np.ndarray = None
    outcomes: np.ndarray = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        mu = np.atleast_2d(np.asarray(self.means, dtype=float))
        covs = np.asarray(self.covs, dtype=float)
        if covs.ndim == 2:
            covs = covs[None]
        c, n = mu.shape
        if w.shape != (c,) or covs.shape != (c, n, n):
            raise ValidationError(f"inconsistent shapes: weights {w.shape}, means {mu.shape}, "
                                  f"covs {covs.shape}")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-10:
            raise ValidationError("weights must be a probability vector")
        covs = np.stack([as_symmetric(s, f"component {i} covariance") for i, s in enumerate(covs)])
        d = np.zeros((0, n)) if self.directions is None else np.asarray(self.directions, dtype=float)
        y = np.zeros(0) if self.outcomes is None else np.asarray(self.outcomes, dtype=float)
        if d.ndim != 2 or d.shape[1] != n or y.shape != (d.shape[0],):
            raise ValidationError("history directions and outcomes do not match")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "covs", covs)
        object.__setattr__(self, "directions", d)
        object.__setattr__(self, "outcomes", y)

    @property
    def num_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def mixture_mean(self) -> np.ndarray:
        return self.weights @ self.means

    def mixture_cov(self) -> np.ndarray:
        mbar = self.mixture_mean()
        d = self.means - mbar
        within = np.einsum("c,cij->ij", self.weights, self.covs)
        between = (d * self.weights[:, None]).T @ d
        s = within + between
        return 0.5 * (s + s.T)


@dataclass(frozen=True)
class GradientAscentConfig:
    step_size: float = 0.2
    tolerance: float = 0.01
    mc_samples: int = 500
    max_steps: int = 50

    def __post_init__(self):
        if not (self.step_size > 0 and self.tolerance > 0 and self.mc_samples >= 1
                and self.max_steps >= 1):
            raise ValidationError("gradient ascent parameters must all be positive")


def _predictive(belief: GmmBelief, a, sigma):
    sa = belief.covs @ a                      # (C, n)
    q = sa @ a                                # (C,)
    m = belief.means @ a                      # (C,)
    s = q + sigma * sigma
    return m, q, s, sa


def gmm_posterior_update(belief: GmmBelief, a, y: float, sigma: float) -> GmmBelief:
    """Condition every component on ``y = a^T x + N(0, sigma^2)`` and reweight.

    Weights are multiplied by the one-step predictive density
    ``N(y; a^T mu_c, a^T Sigma_c a + sigma^2)`` of the pre-update components
    and renormalised in the log domain.
    """
    if not sigma > 0:
        raise ValidationError("sigma must be positive")
    a = np.asarray(a, dtype=float)
    m, q, s, sa = _predictive(belief, a, sigma)
    r = y - m
    with np.errstate(over="ignore"):
        loglik = -0.5 * (LOG_2PI + np.log(s) + r * r / s)
    with np.errstate(divide="ignore"):
        logw = np.log(belief.weights) + loglik
    if not np.any(np.isfinite(logw)):
        raise NumericalError(f"all mixture weights vanished; log-likelihoods {loglik.tolist()}")
    w = np.exp(logw - logsumexp(logw))
    means = belief.means + sa * (r / s)[:, None]
    covs = belief.covs - np.einsum("ci,cj->cij", sa, sa) / s[:, None, None]
    covs = 0.5 * (covs + np.swapaxes(covs, 1, 2))
    return GmmBelief(w / w.sum(), means, covs,
                     np.vstack([belief.directions, a[None]]),
                     np.append(belief.outcomes, y))


def hedge_weight_update(belief: GmmBelief, a, y: float, sigma: float) -> np.ndarray:
    """Multiplicative-weights form ``pi_c exp(-(y - a^T mu_c)^2 / (2 (a^T Sigma_c a + sigma^2)))``, normalised.

    Differs from the weights of :func:`gmm_posterior_update` only by the
    y-independent factors ``(a^T Sigma_c a + sigma^2)^{-1/2}``.
    """
    m, q, s, _ = _predictive(belief, np.asarray(a, dtype=float), sigma)
    with np.errstate(divide="ignore"):
        logw = np.log(belief.weights) - 0.5 * (y - m) ** 2 / s
    return np.exp(logw - logsumexp(logw))


def batch_log_weights(prior: GmmBelief, directions, outcomes, sigma: float) -> np.ndarray:
    """Normalised log-weights ``log pi_c N(y~; D mu_c, D Sigma_c D^T + sigma^2 I)`` from the prior."""
    d = np.atleast_2d(np.asarray(directions, dtype=float))
    y = np.asarray(outcomes, dtype=float)
    out = np.empty(prior.num_components)
    for c in range(prior.num_components):
        cov = d @ prior.covs[c] @ d.T + sigma * sigma * np.eye(d.shape[0])
        r = y - d @ prior.means[c]
        chol = np.linalg.cholesky(cov)
        z = np.linalg.solve(chol, r)
        logdet = 2.0 * np.sum(np.log(np.diag(chol)))
        with np.errstate(divide="ignore"):
            out[c] = math.log(prior.weights[c]) if prior.weights[c] > 0 else -np.inf
        out[c] += -0.5 * (d.shape[0] * LOG_2PI + logdet + z @ z)
    return out - logsumexp(out)


def greedy_heuristic_direction(belief: GmmBelief) -> np.ndarray:
    """Leading eigenvector of the most probable component (lowest index on ties)."""
    z = int(np.argmax(belief.weights))
    return sym_eig(belief.covs[z]).eigenvectors[:, 0]


def high_noise_direction(belief: GmmBelief) -> np.ndarray:
    """Leading eigenvector of the weight-averaged covariance ``sum_c pi_c Sigma_c``."""
    avg = np.einsum("c,cij->ij", belief.weights, belief.covs)
    return sym_eig(0.5 * (avg + avg.T)).eigenvectors[:, 0]


def classify(belief: GmmBelief):
    """Most probable component (lowest index on ties) and its posterior mean."""
    c = int(np.argmax(belief.weights))
    return c, belief.means[c].copy()


def _posterior_given_outcomes(belief: GmmBelief, a, sigma, ys):
    m, q, s, sa = _predictive(belief, a, sigma)
    r = ys[:, None] - m[None, :]                                       # (N, C)
    with np.errstate(divide="ignore"):
        logw = np.log(belief.weights)[None, :] - 0.5 * (np.log(s)[None, :] + r * r / s[None, :])
    w = np.exp(logw - logsumexp(logw, axis=1, keepdims=True))          # (N, C)
    mu = belief.means[None, :, :] + (r / s[None, :])[:, :, None] * sa[None, :, :]  # (N, C, n)
    return w, mu, m, q, s, sa


def mmse_integrand_g(belief: GmmBelief, a, y: float, sigma: float) -> np.ndarray:
    """Posterior error covariance of ``x`` after appending outcome ``y`` along ``a``.

    ``g(y) = sum_c pi~_c [Sigma~_c + (mu~_c(y) - mu_bar)(mu~_c(y) - mu_bar)^T]``.
    """
    if not sigma > 0:
        raise ValidationError("sigma must be positive")
    a = np.asarray(a, dtype=float)
    w, mu, m, q, s, sa = _posterior_given_outcomes(belief, a, sigma, np.array([float(y)]))
    w, mu = w[0], mu[0]
    covs = belief.covs - np.einsum("ci,cj->cij", sa, sa) / s[:, None, None]
    mbar = w @ mu
    d = mu - mbar
    g = np.einsum("c,cij->ij", w, covs) + (d * w[:, None]).T @ d
    return 0.5 * (g + g.T)


def _sqrt_factor(cov):
    # Cholesky is much cheaper for the full-rank (ridge-regularised) case
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        return psd_sqrt_factor(cov)


def _sample_signals(belief: GmmBelief, size: int, rng: np.random.Generator):
    comps = rng.choice(belief.num_components, size=size, p=belief.weights)
    xi = rng.standard_normal((size, belief.dim))
    x = np.empty((size, belief.dim))
    for c in range(belief.num_components):
        idx = np.flatnonzero(comps == c)
        if idx.size == 0:
            continue
        f = _sqrt_factor(belief.covs[c])
        x[idx] = belief.means[c] + xi[idx, : f.shape[1]] @ f.T
    return comps, x


def mi_gradient(belief: GmmBelief, a, sigma: float, num_samples: int, rng: np.random.Generator,
                return_stderr: bool = False):
    """Monte-Carlo estimate of ``d I(x; a^T x + w | history) / d a = E a / sigma^2``.

    ``E`` is the MMSE matrix, estimated as the plain average of
    :func:`mmse_integrand_g` over outcomes ``y_j = a^T x_j + w_j`` with
    ``x_j`` drawn from the current mixture. The samples already follow the
    predictive law, so no importance weights are applied.

    With ``return_stderr`` the per-coordinate standard error is returned too.
    """
    if not sigma > 0:
        raise ValidationError("sigma must be positive")
    if num_samples < 1:
        raise ValidationError("need at least one Monte-Carlo sample")
    a = np.asarray(a, dtype=float)
    _, x = _sample_signals(belief, num_samples, rng)
    ys = x @ a + sigma * rng.standard_normal(num_samples)
    w, mu, m, q, s, sa = _posterior_given_outcomes(belief, a, sigma, ys)
    post_sa = sa * (sigma * sigma / s)[:, None]                        # Sigma~_c a, (C, n)
    mbar = np.einsum("nc,nci->ni", w, mu)
    d = mu - mbar[:, None, :]                                          # (N, C, n)
    da = d @ a                                                         # (N, C)
    per = w @ post_sa + np.einsum("nc,nci->ni", w * da, d)             # g(y_j) a
    per /= sigma * sigma
    grad = per.mean(axis=0)
    if return_stderr:
        se = per.std(axis=0, ddof=1) / math.sqrt(num_samples) if num_samples > 1 else np.full_like(grad, np.inf)
        return grad, se
    return grad


def _component_log_volumes(covs, reg):
    out = np.empty(covs.shape[0])
    for c, s in enumerate(covs):
        lam = np.linalg.eigvalsh(s)
        top = lam[-1] if lam.size else 0.0
        keep = lam[lam > CLAMP_RTOL * max(top, 0.0)] if top > 0 else lam[:0]
        r = keep.size
        out[c] = 0.5 * r * LOG_2PIE + 0.5 * float(np.sum(np.log(keep + reg)))
    return out


def _approx_entropy(weights, log_vol, n_comp, names=None):
    total = 0.0
    for c, (p, lv) in enumerate(zip(weights, log_vol)):
        if p <= 0:
            continue
        log_ratio = lv - math.log(p)
        # log(exp(L) - (C-1)) evaluated without overflow
        if n_comp == 1:
            inner = log_ratio
        else:
            t = (n_comp - 1) * math.exp(-log_ratio) if log_ratio > -700 else math.inf
            if t >= 1.0:
                label = c if names is None else names[c]
                raise NumericalError(f"entropy approximation undefined: log argument <= 0 for "
                                     f"component {label}")
            inner = log_ratio + math.log1p(-t)
        total += p * inner
    return total


def gmm_entropy_approx(belief: GmmBelief, reg: float = 1e-8) -> float:
    """Entropy approximation for well separated mixtures, in nats.

    ``sum_c pi_c log((2 pi e)^{r_c/2} |Sigma_c|^{1/2} / pi_c - (C - 1))`` where
    ``|Sigma_c|`` is the pseudo-determinant over eigenvalues above
    ``1e-10 * lambda_max`` (each shifted by ``reg``) and ``r_c`` the number of
    such eigenvalues; for full-rank components ``r_c = n``. Accuracy degrades
    when components overlap. Raises :class:`NumericalError` naming the
    component whose log argument is not positive.
    """
    lv = _component_log_volumes(belief.covs, reg)
    return _approx_entropy(belief.weights, lv, belief.num_components)


def _outcome_grid(m, s, half_width=10.0, points=201):
    base = np.linspace(-half_width, half_width, points)
    grid = (m[:, None] + np.sqrt(s)[:, None] * base[None, :]).ravel()
    return np.unique(grid)


def _predictive_logpdf(y, weights, m, s):
    with np.errstate(divide="ignore"):
        lw = np.log(weights)
    z = lw[None, :] - 0.5 * (LOG_2PI + np.log(s)[None, :] + (y[:, None] - m[None, :]) ** 2 / s[None, :])
    return logsumexp(z, axis=1), z


def outcome_entropy(belief: GmmBelief, a, sigma: float) -> float:
    """Differential entropy of the scalar outcome ``a^T x + N(0, sigma^2)`` under the mixture.

    Trapezoidal rule on the union of per-component grids spanning
    ``+-10`` predictive standard deviations.
    """
    a = np.asarray(a, dtype=float)
    m, q, s, _ = _predictive(belief, a, sigma)
    y = _outcome_grid(m, s)
    logp, _ = _predictive_logpdf(y, belief.weights, m, s)
    p = np.exp(logp)
    return float(-np.trapezoid(p * logp, y))


def conditional_mi_exact(belief: GmmBelief, a, sigma: float) -> float:
    """``I(x; a^T x + w | history) = h(y | history) - 0.5 ln(2 pi e sigma^2)`` by 1-D quadrature."""
    if not sigma > 0:
        raise ValidationError("sigma must be positive")
    return max(0.0, outcome_entropy(belief, a, sigma) - 0.5 * (LOG_2PIE + 2.0 * math.log(sigma)))


def conditional_mi_estimate(belief: GmmBelief, a, sigma: float, reg: float = 1e-8) -> float:
    """Entropy-approximation difference ``H[x | past] - E_y H[x | past, y]``.

    Posterior covariances do not depend on the outcome, only the weights do;
    the expectation over the predictive law of ``y`` uses the same grid as
    :func:`outcome_entropy`.
    """
    if not sigma > 0:
        raise ValidationError("sigma must be positive")
    a = np.asarray(a, dtype=float)
    prior_h = gmm_entropy_approx(belief, reg)
    m, q, s, sa = _predictive(belief, a, sigma)
    post_covs = belief.covs - np.einsum("ci,cj->cij", sa, sa) / s[:, None, None]
    lv = _component_log_volumes(post_covs, reg)
    y = _outcome_grid(m, s)
    logp, z = _predictive_logpdf(y, belief.weights, m, s)
    p = np.exp(logp)
    post_w = np.exp(z - logp[:, None])
    h = np.array([_approx_entropy(w, lv, belief.num_components) for w in post_w])
    return float(prior_h - np.trapezoid(p * h, y))


def gradient_ascent_direction(belief: GmmBelief, sigma: float, cfg: GradientAscentConfig,
                              rng: np.random.Generator, init=None) -> np.ndarray:
    """Mutual-information ascent ``a <- a + mu * grad`` projected back to the unit sphere.

    Starts from ``init`` (default: :func:`greedy_heuristic_direction`). Stops
    when a step raises the exact conditional mutual information by at most
    ``cfg.tolerance`` or after ``cfg.max_steps``; a final step that lowers the
    information is not taken.
    """
    a = greedy_heuristic_direction(belief) if init is None else np.asarray(init, dtype=float)
    a = a / np.linalg.norm(a)
    mi = conditional_mi_exact(belief, a, sigma)
    for step in range(cfg.max_steps):
        g = mi_gradient(belief, a, sigma, cfg.mc_samples, rng)
        cand = a + cfg.step_size * g
        if not np.all(np.isfinite(cand)):
            raise NumericalError(f"non-finite iterate at gradient step {step}")
        norm = np.linalg.norm(cand)
        if norm == 0.0:
            break
        cand = cand / norm
        mi_c = conditional_mi_exact(belief, cand, sigma)
        gain = mi_c - mi
        if gain > 0:
            a, mi = cand, mi_c
        if gain <= cfg.tolerance:
            break
    big = np.flatnonzero(np.abs(a) > 1e-10)
    if big.size and a[big[0]] < 0:
        a = -a
    return a


def batch_directions(belief: GmmBelief, m: int) -> np.ndarray:
    """Non-adaptive baseline: top ``m`` eigenvectors of the prior mixture covariance, as rows."""
    dec = sym_eig(belief.mixture_cov())
    return dec.eigenvectors[:, :m].T.copy()


def sample_gmm(belief: GmmBelief, rng: np.random.Generator, weights=None):
    """Draw ``(component, signal)``; ``weights`` overrides the mixture weights (true prior)."""
    p = belief.weights if weights is None else np.asarray(weights, dtype=float)
    c = int(rng.choice(belief.num_components, p=p))
    f = _sqrt_factor(belief.covs[c])
    x = belief.means[c] + f @ rng.standard_normal(f.shape[1])
    return c, x


@dataclass
class GmmTranscript:
    directions: np.ndarray
    outcomes: np.ndarray
    info_gains: np.ndarray
    label: int
    estimate: np.ndarray
    belief: GmmBelief = field(repr=False)


GMM_METHODS = ("greedy", "gradient", "random", "high_noise", "batch")


def run_gmm_session(x, prior: GmmBelief, sigma: float, m: int, method: str,
                    rng: np.random.Generator, cfg: GradientAscentConfig | None = None,
                    directions=None) -> GmmTranscript:
    """Take ``m`` unit-norm measurements of ``x`` chosen by ``method`` and classify.

    ``method`` is one of ``greedy``, ``gradient``, ``random`` (normalised
    Gaussian vectors), ``high_noise`` or ``batch`` (rows of ``directions``,
    default :func:`batch_directions` of the prior). Every step records the
    exact conditional mutual information of the chosen direction.
    """
    if method not in GMM_METHODS:
        raise ValidationError(f"unknown GMM sensing method {method!r}")
    cfg = cfg or GradientAscentConfig()
    x = np.asarray(x, dtype=float)
    if method == "batch" and directions is None:
        directions = batch_directions(prior, m)
    belief = prior
    dirs, ys, gains = [], [], []
    for i in range(m):
        if method == "greedy":
            a = greedy_heuristic_direction(belief)
        elif method == "gradient":
            a = gradient_ascent_direction(belief, sigma, cfg, rng)
        elif method == "random":
            a = rng.standard_normal(belief.dim)
            a /= np.linalg.norm(a)
        elif method == "high_noise":
            a = high_noise_direction(belief)
        else:
            a = np.asarray(directions[i], dtype=float)
        gains.append(conditional_mi_exact(belief, a, sigma))
        y = float(a @ x) + sigma * float(rng.standard_normal())
        belief = gmm_posterior_update(belief, a, y, sigma)
        dirs.append(a)
        ys.append(y)
    label, est = classify(belief)
    return GmmTranscript(np.array(dirs).reshape(m, -1), np.array(ys), np.array(gains), label, est, belief)
