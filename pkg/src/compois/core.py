"""Log-space density arithmetic, moment approximations and truncated-sum baselines.

Everything here is deterministic and tractable: these routines are the
reference machinery (and test oracles) that the samplers and estimators are
judged against.  All mass-function work is done in log space because the
unnormalised mass (mu^y / y!)^nu overflows quickly for large mu * nu.
"""

from __future__ import annotations

import numpy as np
from scipy.special import gammaln, logsumexp

from .params import CmpParams, ConvergenceError, InvalidWindowError, TruncationWindow

# Adaptive truncation policy: start at 2*mode + 20 terms, double until the
# log of the partial sum moves by less than LOG_TOL, give up at TERM_CAP.
LOG_TOL = 1e-14
TERM_CAP = 10**7


def log_unnormalized_mass(params: CmpParams, y) -> float | np.ndarray:
    """log q(y | mu, nu) = nu * (y log mu - log y!).

    Accepts a scalar or array of non-negative integers y.
    """
    y = np.asarray(y, dtype=float)
    out = params.nu * (y * np.log(params.mu) - gammaln(y + 1.0))
    return float(out) if out.ndim == 0 else out


def mode(params: CmpParams) -> int:
    """Modal value floor(mu); for integer mu the larger of the two modes."""
    return int(np.floor(params.mu))


def approx_moments(params: CmpParams) -> tuple[float, float]:
    """Asymptotic mean and variance approximations.

    mean ~ mu + 1/(2 nu) - 1/2 and variance ~ mu / nu.  Accurate for a wide
    range of parameters but degrades for small mu or small nu.
    """
    mean = params.mu + 1.0 / (2.0 * params.nu) - 0.5
    var = params.mu / params.nu
    return mean, var


def truncated_Z(params: CmpParams, window: TruncationWindow) -> float:
    """log of the finite sum of q(y) for y in [k1, k2].

    The window must bracket the mode; otherwise the finite sum misses the
    dominant terms and is rejected with InvalidWindowError.  The result is
    exact for the window (log-sum-exp) and non-decreasing in k2.
    """
    m = mode(params)
    if not window.brackets_mode(m):
        raise InvalidWindowError(
            f"window ({window.k1}, {window.k2}) does not bracket mode {m} "
            f"of (mu={params.mu}, nu={params.nu})"
        )
    y = np.arange(window.k1, window.k2 + 1, dtype=float)
    return float(logsumexp(log_unnormalized_mass(params, y)))


def default_window(params: CmpParams) -> TruncationWindow:
    """Window from 0 to the adaptively converged upper end."""
    return TruncationWindow(0, _converged_k2(params.mu, params.nu))


def converged_log_z(params: CmpParams) -> float:
    """log Z with the upper truncation point extended until the sum stabilises."""
    return truncated_Z(params, default_window(params))


def _converged_k2(mu: float, nu: float) -> int:
    k2 = 2 * int(np.floor(mu)) + 20
    prev = _partial_log_z(mu, nu, k2)
    while True:
        k2_next = 2 * k2
        if k2_next + 1 > TERM_CAP:
            raise ConvergenceError(
                f"normalising sum for (mu={mu}, nu={nu}) not converged "
                f"within {TERM_CAP} terms"
            )
        cur = _partial_log_z(mu, nu, k2_next)
        if cur - prev < LOG_TOL:
            return k2
        prev, k2 = cur, k2_next


def _partial_log_z(mu: float, nu: float, k2: int) -> float:
    y = np.arange(0, k2 + 1, dtype=float)
    return float(logsumexp(nu * (y * np.log(mu) - gammaln(y + 1.0))))


def log_z_many(mu, nu, dedup: bool = True) -> np.ndarray:
    """Converged log Z for arrays of parameter pairs, summed on a shared grid.

    Duplicate pairs are summed once.  Grid extension is blocked so a pass
    never materialises more than a few million terms; past the mode the
    terms decay faster than geometrically, so a block contributing less
    than the tolerance bounds the whole remaining tail.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    nu = np.atleast_1d(np.asarray(nu, dtype=float))
    if dedup and mu.size > 8:
        pairs = np.stack([mu, nu], axis=1)
        uniq, inverse = np.unique(pairs, axis=0, return_inverse=True)
        if uniq.shape[0] < mu.size:
            return log_z_many(uniq[:, 0], uniq[:, 1], dedup=False)[inverse]
    log_mu = np.log(mu)[:, None]
    nu_col = nu[:, None]
    max_block = max(512, 4_000_000 // mu.size)
    k2 = 2 * int(np.floor(mu.max())) + 20
    y = np.arange(0, k2 + 1, dtype=float)
    prev = logsumexp(nu_col * (y[None, :] * log_mu - gammaln(y + 1.0)[None, :]), axis=1)
    width = k2 + 1
    while True:
        lo = k2 + 1
        width = min(2 * width, max_block)
        k2 = lo + width - 1
        if k2 + 1 > TERM_CAP:
            raise ConvergenceError(f"batch normalising sum not converged within {TERM_CAP} terms")
        y = np.arange(lo, k2 + 1, dtype=float)
        block = nu_col * (y[None, :] * log_mu - gammaln(y + 1.0)[None, :])
        cur = np.logaddexp(prev, logsumexp(block, axis=1))
        if np.all(cur - prev < LOG_TOL):
            return cur
        prev = cur


def log_z_many_or_reject(mu, nu, stop_above: float, weights=None) -> np.ndarray | None:
    """Converged log Z per pair, or None once the running total passes stop_above.

    The running total is sum(weights * partial log Z) (weights default to
    1).  Partial sums only grow and log Z >= 0 (the y = 0 term alone is 1),
    so once the total passes stop_above the caller's decision is already
    settled and the possibly enormous remaining summation is skipped.
    Callers should deduplicate pairs themselves when repeats are likely.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    nu = np.atleast_1d(np.asarray(nu, dtype=float))
    w = np.ones_like(mu) if weights is None else np.asarray(weights, dtype=float)
    log_mu = np.log(mu)[:, None]
    nu_col = nu[:, None]
    max_block = max(512, 4_000_000 // mu.size)
    k2 = 2 * int(np.floor(mu.max())) + 20
    y = np.arange(0, k2 + 1, dtype=float)
    prev = logsumexp(nu_col * (y[None, :] * log_mu - gammaln(y + 1.0)[None, :]), axis=1)
    width = k2 + 1
    while True:
        if float((w * prev).sum()) > stop_above:
            return None
        lo = k2 + 1
        width = min(2 * width, max_block)
        k2 = lo + width - 1
        if k2 + 1 > TERM_CAP:
            raise ConvergenceError(f"batch normalising sum not converged within {TERM_CAP} terms")
        y = np.arange(lo, k2 + 1, dtype=float)
        block = nu_col * (y[None, :] * log_mu - gammaln(y + 1.0)[None, :])
        cur = np.logaddexp(prev, logsumexp(block, axis=1))
        if np.all(cur - prev < LOG_TOL):
            return cur
        prev = cur


def oracle_pmf(params: CmpParams, ymax: int | None = None) -> np.ndarray:
    """Normalised pmf vector over 0..ymax from the converged truncated sum.

    With ymax=None the support is cut where the remaining tail mass drops
    below 1e-12.  An explicit ymax is checked against the same tail bound
    and rejected if it cuts off real mass.
    """
    log_z = converged_log_z(params)
    k2 = default_window(params).k2
    y = np.arange(0, k2 + 1, dtype=float)
    log_p = log_unnormalized_mass(params, y) - log_z
    p = np.exp(log_p)
    if ymax is None:
        tail = np.cumsum(p[::-1])[::-1]
        keep = np.nonzero(tail >= 1e-12)[0]
        ymax = int(keep[-1]) if keep.size else 0
        return p[: ymax + 1]
    if ymax >= k2:
        return np.concatenate([p, np.zeros(ymax - k2)])
    if p[ymax + 1 :].sum() >= 1e-12:
        raise ValueError(f"ymax={ymax} truncates more than 1e-12 of the mass")
    return p[: ymax + 1]


def oracle_moments(params: CmpParams) -> tuple[float, float]:
    """Exact (to truncation tolerance) mean and variance from oracle_pmf."""
    p = oracle_pmf(params)
    y = np.arange(p.size, dtype=float)
    mean = float(y @ p)
    var = float(((y - mean) ** 2) @ p)
    return mean, var


def truncated_loglik(y, params_per_obs, window: TruncationWindow | None = None) -> float:
    """Sum over observations of log q(y_i) - log Z_hat(theta_i).

    This is the tractable baseline likelihood computed by finite summation.
    With window=None each observation uses its own adaptively converged
    window; an explicit window is applied to every observation and must
    bracket every mode.
    """
    y = np.asarray(y, dtype=float)
    if y.size != len(params_per_obs):
        raise ValueError("observation and parameter vectors differ in length")
    total = 0.0
    for yi, th in zip(y, params_per_obs):
        log_z = converged_log_z(th) if window is None else truncated_Z(th, window)
        total += log_unnormalized_mass(th, yi) - log_z
    return total
