"""Unbiased likelihood estimation from rejection-sampling trial counts.

The unconditional acceptance probability of the rejection sampler is 1/M
with M = (Z_g / Z_f) B, so the trial count n_r until r acceptances gives
the unbiased bound estimate M_hat = n_r / r.  Rearranging the identity
links M_hat to the reciprocal normalising constant:

    1/Z_f  is estimated without bias by  M_hat / (Z_g B),

and multiplying by the unnormalised mass at an observation yields a
positive unbiased estimate of its likelihood.  Products over observations
stay unbiased because each observation gets its own independent M_hat,
even when parameter values repeat.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from . import _kernels
from .core import log_z_many
from .envelope import Envelope
from .params import CmpParams, RunawayRejectionError
from .rejection import sample_with_costs


@dataclass(frozen=True)
class MhatEstimate:
    """Unbiased bound estimate n_r / r, with the draws kept for optional reuse."""

    r: int
    n_r: int
    draws: np.ndarray | None = None

    @property
    def value(self) -> float:
        return self.n_r / self.r


@dataclass(frozen=True)
class LikelihoodEstimate:
    """Log of a positive unbiased complete-likelihood estimate.

    log_value is the sum of per_obs_log; each per-observation factor is
    unbiased in linear space and strictly positive, so the log never hits
    -inf for observations in the support.
    """

    log_value: float
    r: int
    per_obs_log: np.ndarray


def estimate_M(
    params: CmpParams, env: Envelope, r: int, rng: np.random.Generator
) -> MhatEstimate:
    """Run the sampler to r acceptances and record the trial count."""
    if r < 1:
        raise ValueError("r must be >= 1")
    values, trials = sample_with_costs(params, env, r, rng)
    return MhatEstimate(r=r, n_r=int(trials.sum()), draws=values)


def log_reciprocal_Z_estimate(mhat: MhatEstimate, env: Envelope) -> float:
    """log of the unbiased 1/Z_f estimate: log M_hat - log Z_g - log B.

    Unbiasedness lives in linear space; the log value is just the stable
    representation that downstream likelihood ratios are assembled from.
    """
    return float(np.log(mhat.value) - env.log_zg - env.log_b)


def unbiased_loglik(y, params_per_obs, r: int, rng: np.random.Generator) -> LikelihoodEstimate:
    """Per-observation unbiased likelihood estimates, on the log scale.

    per_obs_log[i] = log q_f(y_i) - log Z_g,i + log M_hat_i - log B_i with an
    independent M_hat_i for every observation.  With nu_i = 1 the envelope
    accepts every proposal, M_hat_i = 1 exactly, and the estimate collapses
    to the exact Poisson log-likelihood with zero variance.
    """
    y = np.asarray(y, dtype=float)
    if y.size != len(params_per_obs):
        raise ValueError("observation and parameter vectors differ in length")
    mu = np.array([th.mu for th in params_per_obs])
    nu = np.array([th.nu for th in params_per_obs])
    per_obs = per_obs_unbiased_loglik(y, mu, nu, r, rng)
    return LikelihoodEstimate(log_value=float(per_obs.sum()), r=r, per_obs_log=per_obs)


def per_obs_unbiased_loglik(y, mu, nu, r, rng) -> np.ndarray:
    """Vector core shared with the pseudo-marginal sweeps."""
    y = np.asarray(y, dtype=float)
    mu = np.ascontiguousarray(mu, dtype=np.float64)
    nu = np.ascontiguousarray(nu, dtype=np.float64)
    n_r = np.empty(mu.size, dtype=np.int64)
    log_b = np.empty(mu.size)
    log_zg = np.empty(mu.size)
    bad = _kernels.count_trials_auto(rng, mu, nu, r, n_r, log_b, log_zg)
    if bad:
        raise RunawayRejectionError("trial guard tripped during likelihood estimation")
    log_qf = nu * (y * np.log(mu) - gammaln(y + 1.0))
    return log_qf - log_zg + np.log(n_r / r) - log_b


def bic_estimate(chain, model, r: int, rng: np.random.Generator) -> dict:
    """BIC from the unbiased likelihood at the best retained posterior draw.

    theta_hat is picked by scoring every retained draw with the tractable
    truncated-sum log-likelihood and taking the argmax (a stable stand-in
    for maximising the noisy unbiased estimate), then the unbiased estimate
    is evaluated there with the requested r:

        BIC_hat = k log n - 2 log f_hat^(r)(y | theta_hat).

    With every nu_i = 1 the estimator has zero variance and the result is
    the exact Poisson BIC.
    """
    retained = chain.retained_draws()
    if retained.shape[0] == 0:
        raise ValueError("chain has no retained draws")
    scores = truncated_loglik_per_draw(retained, model)
    best = int(np.argmax(scores))
    beta_hat = retained[best]
    mu, nu = model.theta(beta_hat)
    per_obs = per_obs_unbiased_loglik(model.y, mu, nu, r, rng)
    loglik_hat = float(per_obs.sum())
    n = model.y.size
    bic = model.k * np.log(n) - 2.0 * loglik_hat
    return {
        "bic_hat": float(bic),
        "loglik_hat": loglik_hat,
        "k": model.k,
        "n": int(n),
        "r": r,
        "beta_hat": beta_hat,
        "truncated_loglik_at_hat": float(scores[best]),
    }


def truncated_loglik_per_draw(draws: np.ndarray, model, max_pairs: int = 16384) -> np.ndarray:
    """Tractable truncated-sum log-likelihood of the data at every draw.

    Draws are blocked so at most max_pairs parameter pairs are normalised
    per matrix pass; duplicate pairs within a block (common when many
    observations share covariates) are summed once.
    """
    draws = np.atleast_2d(draws)
    n_draws = draws.shape[0]
    y = np.asarray(model.y, dtype=float)
    lgy = gammaln(y + 1.0)
    block = max(1, max_pairs // y.size)
    out = np.empty(n_draws)
    for lo in range(0, n_draws, block):
        hi = min(lo + block, n_draws)
        mus, nus = [], []
        for t in range(lo, hi):
            mu, nu = model.theta(draws[t])
            mus.append(mu)
            nus.append(nu)
        pairs = np.stack([np.concatenate(mus), np.concatenate(nus)], axis=1)
        uniq, inverse = np.unique(pairs, axis=0, return_inverse=True)
        log_z = log_z_many(uniq[:, 0], uniq[:, 1])[inverse].reshape(hi - lo, y.size)
        for j, t in enumerate(range(lo, hi)):
            log_qf = nus[j] * (y * np.log(mus[j]) - lgy)
            out[t] = log_qf.sum() - log_z[j].sum()
    return out


def exact_poisson_loglik(y, mu) -> float:
    """Closed-form Poisson log-likelihood at given per-observation means."""
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    return float((y * np.log(mu) - gammaln(y + 1.0) - mu).sum())
