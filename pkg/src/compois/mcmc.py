"""Posterior samplers for doubly-intractable count regression.

Four single-site random-walk samplers over the same model interface:

* ``exchange``        -- auxiliary-draw algorithm; every normalising
                         constant cancels, so each proposal costs one exact
                         draw per (changed) observation.
* ``gimh``            -- pseudo-marginal MH with the positive unbiased
                         likelihood estimate; the current-state estimate is
                         frozen until a move is accepted (exact target).
* ``mcwm``            -- as gimh but both sides re-estimated every proposal
                         (approximate target, kept for comparison).
* ``exact-truncated`` -- tractable MH with converged truncated-sum
                         normalising constants; slow but a correctness
                         oracle for the other three.

Coefficients are updated one at a time in a fixed scan order.  Step sizes
adapt toward a target acceptance rate during burn-in only, in batches, and
are frozen afterwards so the retained chain has a fixed kernel.  A fixed
seed makes every result bit-identical.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import gammaln

from . import _kernels
from .core import log_z_many, log_z_many_or_reject
from .estimator import per_obs_unbiased_loglik
from .params import DivergentLinkError, RunawayRejectionError
from .rejection import sample_each
from .rng import make_rng, resolve_seed

ALGORITHMS = ("exchange", "gimh", "mcwm", "exact-truncated")

DEFAULT_ADAPT_BATCH = 50


class SingularCovarianceWarning(UserWarning):
    """Covariance estimate was not positive definite; a ridge was added."""


@dataclass
class McmcConfig:
    iterations: int = 100_000
    burn_in: int = 10_000
    algorithm: str = "exchange"
    r: int = 100
    target_accept: float = 0.44
    seed: int | None = None
    step_init: float = 0.5
    adapt_batch: int = DEFAULT_ADAPT_BATCH

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("need 0 <= burn_in < iterations")
        if self.r < 1:
            raise ValueError("r must be >= 1")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")


@dataclass
class ChainResult:
    names: list[str]
    draws: np.ndarray
    burn_in: int
    accept_counts: np.ndarray
    accept_rates: np.ndarray
    step_sizes: np.ndarray
    means: np.ndarray
    sds: np.ndarray
    mess: float
    cpu_seconds: float
    draws_per_second: float
    seed: int | None
    config: dict = field(default_factory=dict)

    def retained_draws(self) -> np.ndarray:
        return self.draws[self.burn_in :]

    def to_summary(self) -> dict:
        return {
            "schema": 1,
            "seed": self.seed,
            "coefficients": {
                name: {
                    "mean": float(self.means[j]),
                    "sd": float(self.sds[j]),
                    "accept_rate": float(self.accept_rates[j]),
                }
                for j, name in enumerate(self.names)
            },
            "mess": None if math.isnan(self.mess) else float(self.mess),
            "cpu_seconds": self.cpu_seconds,
            "draws_per_second": self.draws_per_second,
            "config": self.config,
        }


def adapt_step(log_step, rate, target: float, batch_index: int):
    """Diminishing stochastic-approximation update for the proposal scale.

    Applied once per completed burn-in batch: the log step moves by
    (rate - target) / sqrt(batch_index), so a rate at target leaves the
    step unchanged and persistent over-acceptance grows it monotonically.
    """
    if batch_index < 1:
        raise ValueError("batch_index counts from 1")
    return log_step + (np.asarray(rate) - target) / math.sqrt(batch_index)


class _ChainRecorder:
    """Per-iteration bookkeeping shared by all sampler loops."""

    def __init__(self, config: McmcConfig, k: int):
        self.config = config
        self.draws = np.empty((config.iterations, k))
        self.accept_counts = np.zeros(k, dtype=np.int64)
        self.post_accepts = np.zeros(k, dtype=np.int64)
        self.batch_accepts = np.zeros(k, dtype=np.int64)
        self.batch_index = 0
        self.log_steps = np.full(k, math.log(config.step_init))

    def record(self, it: int, beta, accept_flags) -> None:
        self.draws[it] = beta
        self.accept_counts += accept_flags
        if it >= self.config.burn_in:
            self.post_accepts += accept_flags
        else:
            self.batch_accepts += accept_flags
            if (it + 1) % self.config.adapt_batch == 0:
                self.batch_index += 1
                rates = self.batch_accepts / self.config.adapt_batch
                self.log_steps = adapt_step(
                    self.log_steps, rates, self.config.target_accept, self.batch_index
                )
                self.batch_accepts[:] = 0


def run_chain(model, config: McmcConfig, rng=None, aux_sampler=None) -> ChainResult:
    """Run one chain of the configured sampler over the bound model.

    The model supplies theta(beta) -> per-observation (mu, nu) arrays,
    log_prior / log_prior_diff, an initial_state and the data vector y.
    ``aux_sampler`` overrides the exchange algorithm's auxiliary-data
    sampler (testing hook; the default is the exact rejection sampler, and
    exactness there is what makes the exchange chain target the true
    posterior).
    """
    if rng is None:
        rng = make_rng(resolve_seed(config.seed))
    recorder = _ChainRecorder(config, model.k)
    t_wall = time.perf_counter()
    t_cpu = time.process_time()
    if config.algorithm == "exchange" and aux_sampler is None and hasattr(model, "exchange_arrays"):
        _exchange_regression_loop(model, config, rng, recorder)
    elif config.algorithm == "exchange" and aux_sampler is None and hasattr(model, "suff_stats"):
        _exchange_const_loop(model, config, rng, recorder)
    else:
        _generic_loop(model, config, rng, recorder, aux_sampler)
    wall = time.perf_counter() - t_wall
    cpu = time.process_time() - t_cpu

    retained = recorder.draws[config.burn_in :]
    n_post = config.iterations - config.burn_in
    try:
        m = mess(retained)
    except ValueError:
        m = float("nan")
    return ChainResult(
        names=list(model.coef_names),
        draws=recorder.draws,
        burn_in=config.burn_in,
        accept_counts=recorder.accept_counts,
        accept_rates=recorder.post_accepts / n_post,
        step_sizes=np.exp(recorder.log_steps),
        means=retained.mean(axis=0),
        sds=retained.std(axis=0, ddof=1),
        mess=m,
        cpu_seconds=cpu,
        draws_per_second=config.iterations / wall if wall > 0 else float("inf"),
        seed=config.seed,
        config=asdict(config),
    )


def _exchange_regression_loop(model, config, rng, recorder) -> None:
    """Compiled systematic-scan exchange sweep for dual-link regressions."""
    arrs = model.exchange_arrays()
    beta = np.asarray(model.initial_state(), dtype=float).copy()
    eta_mu = arrs["x_mu"] @ beta[: arrs["n_mu"]]
    eta_nu = (
        arrs["x_nu"] @ beta[arrs["n_mu"] :]
        if arrs["n_mu"] < model.k
        else np.zeros(model.y.size)
    )
    mu = np.exp(eta_mu)
    nu = np.exp(eta_nu)
    y = np.asarray(model.y, dtype=float)
    lgy = gammaln(y + 1.0)
    prior_inv_var = 1.0 / model.spec.prior.sd**2
    accept_flags = np.zeros(model.k, dtype=np.int64)
    for it in range(config.iterations):
        bad = _kernels.exchange_sweep(
            rng,
            arrs["x_mu"],
            arrs["x_nu"],
            arrs["n_mu"],
            y,
            lgy,
            beta,
            eta_mu,
            eta_nu,
            mu,
            nu,
            recorder.log_steps,
            prior_inv_var,
            arrs["rows_flat"],
            arrs["rows_start"],
            accept_flags,
        )
        if bad:
            raise RunawayRejectionError("trial guard tripped inside the exchange sweep")
        recorder.record(it, beta, accept_flags)


def _exchange_const_loop(model, config, rng, recorder) -> None:
    """Exchange updates for a direct-parameter model (one theta for all rows).

    With a single parameter pair the observed-data terms of the acceptance
    ratio reduce to the sufficient statistics (sum y, sum log y!), and the
    auxiliary draws are reduced to the same sums inside the kernel.
    """
    s1, s2 = model.suff_stats()
    n = model.y.size
    state = np.asarray(model.initial_state(), dtype=float).copy()
    aux_out = np.empty(2)
    k = model.k
    accept_flags = np.zeros(k, dtype=np.int64)
    for it in range(config.iterations):
        for j in range(k):
            prop = state.copy()
            prop[j] += math.exp(recorder.log_steps[j]) * rng.standard_normal()
            accept_flags[j] = 0
            lp_diff = model.log_prior_diff(prop, state, j)
            if lp_diff == -math.inf:
                continue
            mu0, nu0 = state[0], state[1] if k == 2 else 1.0
            mu1, nu1 = prop[0], prop[1] if k == 2 else 1.0
            bad = _kernels.aux_sums_const(rng, n, mu1, nu1, aux_out)
            if bad:
                raise RunawayRejectionError("trial guard tripped inside the exchange sweep")
            s1a, s2a = aux_out
            lm0, lm1 = math.log(mu0), math.log(mu1)
            log_ratio = (
                nu1 * (s1 * lm1 - s2)
                - nu0 * (s1 * lm0 - s2)
                + nu0 * (s1a * lm0 - s2a)
                - nu1 * (s1a * lm1 - s2a)
                + lp_diff
            )
            if not math.isnan(log_ratio) and math.log(rng.random()) <= log_ratio:
                state = prop
                accept_flags[j] = 1
        recorder.record(it, state, accept_flags)


def _generic_loop(model, config, rng, recorder, aux_sampler) -> None:
    """Reference single-site loop: gimh, mcwm, exact-truncated, hooked exchange."""
    algo = config.algorithm
    if aux_sampler is None:
        aux_sampler = lambda mu, nu, stream: sample_each(mu, nu, stream)[0]
    y = np.asarray(model.y, dtype=float)
    lgy = gammaln(y + 1.0)
    k = model.k

    beta = np.asarray(model.initial_state(), dtype=float).copy()
    mu_c, nu_c = model.theta(beta)
    log_mu_c = np.log(mu_c)
    log_z_c = _dedup_log_z(mu_c, nu_c) if algo == "exact-truncated" else None
    loglik_hat_c = (
        float(per_obs_unbiased_loglik(y, mu_c, nu_c, config.r, rng).sum())
        if algo == "gimh"
        else None
    )
    accept_flags = np.zeros(k, dtype=np.int64)

    for it in range(config.iterations):
        for j in range(k):
            prop = beta.copy()
            prop[j] += math.exp(recorder.log_steps[j]) * rng.standard_normal()
            accept_flags[j] = 0
            try:
                mu_p, nu_p = model.theta(prop)
            except DivergentLinkError:
                continue
            lp_diff = model.log_prior_diff(prop, beta, j)
            if lp_diff == -math.inf:
                continue
            log_mu_p = np.log(mu_p)
            accepted = False
            if algo == "exchange":
                log_ratio = _exchange_log_ratio(
                    y, lgy, mu_c, nu_c, log_mu_c, mu_p, nu_p, log_mu_p, rng, aux_sampler
                ) + lp_diff
                accepted = not math.isnan(log_ratio) and math.log(rng.random()) <= log_ratio
            elif algo == "exact-truncated":
                accepted, log_z_p, changed = _exact_truncated_test(
                    y, lgy, mu_c, nu_c, log_mu_c, mu_p, nu_p, log_mu_p, log_z_c, lp_diff, rng
                )
                if accepted and changed is not None:
                    log_z_c[changed] = log_z_p
            elif algo == "gimh":
                per_obs_p = per_obs_unbiased_loglik(y, mu_p, nu_p, config.r, rng)
                loglik_hat_p = float(per_obs_p.sum())
                log_ratio = loglik_hat_p - loglik_hat_c + lp_diff
                accepted = not math.isnan(log_ratio) and math.log(rng.random()) <= log_ratio
                if accepted:
                    loglik_hat_c = loglik_hat_p
            else:  # mcwm
                loglik_hat_p = float(
                    per_obs_unbiased_loglik(y, mu_p, nu_p, config.r, rng).sum()
                )
                loglik_cur = float(
                    per_obs_unbiased_loglik(y, mu_c, nu_c, config.r, rng).sum()
                )
                log_ratio = loglik_hat_p - loglik_cur + lp_diff
                accepted = not math.isnan(log_ratio) and math.log(rng.random()) <= log_ratio
            if accepted:
                beta = prop
                mu_c, nu_c, log_mu_c = mu_p, nu_p, log_mu_p
                accept_flags[j] = 1
        recorder.record(it, beta, accept_flags)


def _exchange_log_ratio(y, lgy, mu_c, nu_c, log_mu_c, mu_p, nu_p, log_mu_p, rng, aux_sampler):
    """Exchange acceptance log-ratio (without the prior term).

    Rows whose parameters did not move contribute exactly zero to every
    sum, so auxiliary data is only drawn where theta changed.
    """
    changed = (mu_p != mu_c) | (nu_p != nu_c)
    if not changed.any():
        return 0.0
    mu1, nu1, lm1 = mu_p[changed], nu_p[changed], log_mu_p[changed]
    mu0, nu0, lm0 = mu_c[changed], nu_c[changed], log_mu_c[changed]
    y_aux = np.asarray(aux_sampler(mu1, nu1, rng), dtype=float)
    yc, lgc = y[changed], lgy[changed]
    lg_aux = gammaln(y_aux + 1.0)
    obs_term = nu1 * (yc * lm1 - lgc) - nu0 * (yc * lm0 - lgc)
    aux_term = nu0 * (y_aux * lm0 - lg_aux) - nu1 * (y_aux * lm1 - lg_aux)
    return float(obs_term.sum() + aux_term.sum())


def _exact_truncated_test(y, lgy, mu_c, nu_c, log_mu_c, mu_p, nu_p, log_mu_p, log_z_c, lp_diff, rng):
    """Tractable MH acceptance with a certain-rejection short circuit.

    The running partial sums are lower bounds on the proposed log Z values,
    hence give an upper bound on the acceptance log-ratio.  Once that bound
    loses to the pre-drawn uniform the summation stops: the decision is
    identical, and wild dispersion proposals no longer force summations
    over millions of terms.
    """
    changed = (mu_p != mu_c) | (nu_p != nu_c)
    log_u = math.log(rng.random())
    if not changed.any():
        return log_u <= lp_diff, None, None
    yc, lgc = y[changed], lgy[changed]
    mu1, nu1, lm1 = mu_p[changed], nu_p[changed], log_mu_p[changed]
    num = nu1 * (yc * lm1 - lgc)
    den = nu_c[changed] * (yc * log_mu_c[changed] - lgc)
    obs_term = float((num - den).sum())
    z_old = float(log_z_c[changed].sum())
    # reject is certain once sum(log Z') > obs - lp_diff - log_u + z_old
    stop_above = obs_term + lp_diff - log_u + z_old
    if changed.sum() > 8:
        pairs = np.stack([mu1, nu1], axis=1)
        uniq, inverse = np.unique(pairs, axis=0, return_inverse=True)
        if uniq.shape[0] < mu1.size:
            counts = np.bincount(inverse).astype(float)
            log_z_u = log_z_many_or_reject(uniq[:, 0], uniq[:, 1], stop_above, weights=counts)
            if log_z_u is None:
                return False, None, None
            log_z_p = log_z_u[inverse]
            log_ratio = obs_term - (float(log_z_p.sum()) - z_old) + lp_diff
            return log_u <= log_ratio, log_z_p, changed
    log_z_p = log_z_many_or_reject(mu1, nu1, stop_above)
    if log_z_p is None:
        return False, None, None
    log_ratio = obs_term - (float(log_z_p.sum()) - z_old) + lp_diff
    return log_u <= log_ratio, log_z_p, changed


def mess(draws, batch_size: int | None = None) -> float:
    """Multivariate effective sample size by batch means.

    mESS = n (det Lambda / det Sigma)^(1/p) with Lambda the sample
    covariance of the retained draws and Sigma the batch-means estimate of
    the asymptotic covariance (batch size floor(sqrt(n)) by default).  An
    iid chain scores about n.  Non-positive-definite estimates get a
    1e-10 ridge and a SingularCovarianceWarning.
    """
    x = np.asarray(draws, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, p = x.shape
    if n < 2 * p * p:
        raise ValueError(f"need at least 2 p^2 = {2 * p * p} draws, got {n}")
    b = batch_size if batch_size is not None else int(math.floor(math.sqrt(n)))
    a = n // b
    x = x[n - a * b :]
    n_used = a * b
    lam = np.atleast_2d(np.cov(x, rowvar=False))
    batch_means = x.reshape(a, b, p).mean(axis=1)
    sigma = b * np.atleast_2d(np.cov(batch_means, rowvar=False))
    ratio = _logdet_ratio(lam, sigma, p)
    return float(n_used * math.exp(ratio / p))


def _logdet_ratio(lam, sigma, p) -> float:
    sign_l, logdet_l = np.linalg.slogdet(lam)
    sign_s, logdet_s = np.linalg.slogdet(sigma)
    if sign_l <= 0 or sign_s <= 0 or not np.isfinite(logdet_l) or not np.isfinite(logdet_s):
        warnings.warn(
            "covariance estimate not positive definite; adding 1e-10 ridge",
            SingularCovarianceWarning,
        )
        ridge = 1e-10 * np.eye(p)
        sign_l, logdet_l = np.linalg.slogdet(lam + ridge)
        sign_s, logdet_s = np.linalg.slogdet(sigma + ridge)
        if sign_l <= 0 or sign_s <= 0:
            raise ValueError("covariance estimates singular even after ridge")
    return logdet_l - logdet_s


def mcse_mean(draws, batch_size: int | None = None) -> np.ndarray:
    """Batch-means Monte Carlo standard error of each coefficient's mean."""
    x = np.asarray(draws, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, p = x.shape
    b = batch_size if batch_size is not None else int(math.floor(math.sqrt(n)))
    a = n // b
    x = x[n - a * b :]
    batch_means = x.reshape(a, b, p).mean(axis=1)
    var_bm = b * batch_means.var(axis=0, ddof=1)
    return np.sqrt(var_bm / (a * b))


def _dedup_log_z(mu, nu) -> np.ndarray:
    return log_z_many(mu, nu, dedup=True)
