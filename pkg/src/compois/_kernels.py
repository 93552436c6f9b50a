"""Compiled inner loops for the rejection sampler and the exchange sweep.

These kernels exist purely for speed: one exchange sweep draws one variate
per observation and a pseudo-marginal sweep needs r acceptances per
observation, so the trial loop runs billions of times in a long chain.
All randomness is drawn from the caller's Generator, so results are
reproducible from the seed alone.

Proposal generation is exact: Poisson variates come from sequential-search
inversion below lambda = 10 and from the PTRS transformed-rejection method
above it; geometric variates come from floor(log u / log(1 - p)).  Draw
values are carried as float64 because an extremely small nu puts mass at
counts beyond the int64 range.
"""

import math

import numpy as np
from numba import njit

# A single acceptance must arrive within this many trials; a correct bound
# makes the guard unreachable.
TRIAL_GUARD = 10**9

_LINPRED_LIMIT = 700.0


@njit(cache=True)
def _poisson_draw(gen, lam):
    if lam < 10.0:
        # inversion by sequential search
        x = 0.0
        p = math.exp(-lam)
        s = p
        u = gen.random()
        while u > s:
            x += 1.0
            p *= lam / x
            s += p
        return x
    # PTRS (transformed rejection with squeeze), exact for lam >= 10
    b = 0.931 + 2.53 * math.sqrt(lam)
    a = -0.059 + 0.02483 * b
    vr = 0.9277 - 3.6224 / (b - 2.0)
    invalpha = 1.1239 + 1.1328 / (b - 3.4)
    loglam = math.log(lam)
    while True:
        u = gen.random() - 0.5
        v = gen.random()
        us = 0.5 - abs(u)
        k = math.floor((2.0 * a / us + b) * u + lam + 0.43)
        if us >= 0.07 and v <= vr:
            return k
        if k < 0.0 or (us < 0.013 and v > us):
            continue
        if math.log(v * invalpha / (a / (us * us) + b)) <= k * loglam - lam - math.lgamma(k + 1.0):
            return k


@njit(cache=True, inline="always")
def _envelope_scalar(mu, nu):
    """(is_pois, p, log1mp, log_b, log_zg) for one parameter pair."""
    if nu >= 1.0:
        m = math.floor(mu)
        log_b = (nu - 1.0) * (m * math.log(mu) - math.lgamma(m + 1.0))
        return True, 0.5, -0.6931471805599453, log_b, mu
    p = 2.0 * nu / (2.0 * mu * nu + 1.0 + nu)
    log1mp = math.log1p(-p)
    y_m = math.floor(mu * math.exp(-log1mp / nu))
    log_b = -math.log(p) + nu * y_m * math.log(mu) - y_m * log1mp - nu * math.lgamma(y_m + 1.0)
    return False, p, log1mp, log_b, 0.0


@njit(cache=True, inline="always")
def _one_trial(gen, mu, nu, log_mu, is_pois, p, log1mp, log_b):
    """One envelope proposal plus its Bernoulli acceptance test."""
    if is_pois:
        y = _poisson_draw(gen, mu)
        log_qg = y * log_mu - math.lgamma(y + 1.0)
    else:
        u0 = gen.random()
        while u0 == 0.0:
            u0 = gen.random()
        y = math.floor(math.log(u0) / log1mp)
        log_qg = math.log(p) + y * log1mp
    log_qf = nu * (y * log_mu - math.lgamma(y + 1.0))
    ok = math.log(gen.random()) <= log_qf - log_b - log_qg
    return y, ok


@njit(cache=True, inline="always")
def _accepted_draw(gen, mu, nu, log_mu, is_pois, p, log1mp, log_b):
    """Loop trials until acceptance; returns (value, trials) or trials=-1 on guard."""
    t = 0
    while True:
        t += 1
        if t > TRIAL_GUARD:
            return 0.0, -1
        y, ok = _one_trial(gen, mu, nu, log_mu, is_pois, p, log1mp, log_b)
        if ok:
            return y, t


@njit(cache=True)
def draw_batch(gen, mu, nu, is_pois, p, log1mp, log_b, out_y, out_trials):
    """len(out_y) accepted draws from one parameter pair and a caller-built envelope."""
    log_mu = math.log(mu)
    for j in range(out_y.shape[0]):
        y, t = _accepted_draw(gen, mu, nu, log_mu, is_pois, p, log1mp, log_b)
        if t < 0:
            return 1
        out_y[j] = y
        out_trials[j] = t
    return 0


@njit(cache=True)
def draw_each_auto(gen, mu, nu, out_y, out_trials):
    """One accepted draw per parameter pair, envelope built in place."""
    for i in range(mu.shape[0]):
        is_pois, p, log1mp, log_b, _ = _envelope_scalar(mu[i], nu[i])
        y, t = _accepted_draw(gen, mu[i], nu[i], math.log(mu[i]), is_pois, p, log1mp, log_b)
        if t < 0:
            return 1
        out_y[i] = y
        out_trials[i] = t
    return 0


@njit(cache=True)
def count_trials_auto(gen, mu, nu, r, out_nr, out_log_b, out_log_zg):
    """Trials until r acceptances per parameter pair; draws are discarded.

    The envelope quantities actually used are written out so the caller's
    likelihood arithmetic matches the sampling bound bit for bit.
    """
    for i in range(mu.shape[0]):
        is_pois, p, log1mp, log_b, log_zg = _envelope_scalar(mu[i], nu[i])
        out_log_b[i] = log_b
        out_log_zg[i] = log_zg
        log_mu = math.log(mu[i])
        acc = 0
        t = 0
        while acc < r:
            t += 1
            if t > TRIAL_GUARD:
                out_nr[i] = -1
                return 1
            y, ok = _one_trial(gen, mu[i], nu[i], log_mu, is_pois, p, log1mp, log_b)
            if ok:
                acc += 1
        out_nr[i] = t
    return 0


@njit(cache=True)
def grid_cell_trials(gen, mu, nu, is_pois, p, log1mp, log_b, accepts):
    """Total proposals needed for `accepts` acceptances at one grid cell."""
    log_mu = math.log(mu)
    acc = 0
    t = 0
    while acc < accepts:
        t += 1
        y, ok = _one_trial(gen, mu, nu, log_mu, is_pois, p, log1mp, log_b)
        if ok:
            acc += 1
    return t


@njit(cache=True)
def exchange_sweep(
    gen,
    x_mu,
    x_nu,
    n_mu,
    y,
    lgy,
    beta,
    eta_mu,
    eta_nu,
    mu,
    nu,
    log_steps,
    prior_inv_var,
    rows_flat,
    rows_start,
    accept_flags,
):
    """One systematic single-site exchange scan for a dual-link regression.

    For coefficient j only the rows with a non-zero design entry are
    touched: rows where theta does not move contribute exactly zero to
    every sum in the acceptance ratio.  beta, eta_mu/eta_nu, mu/nu and
    accept_flags are updated in place.  Returns 0, or 1 if the rejection
    guard tripped.
    """
    k = beta.shape[0]
    for j in range(k):
        z = gen.normal(0.0, 1.0)
        old = beta[j]
        prop = old + math.exp(log_steps[j]) * z
        delta = prop - old
        mu_block = j < n_mu
        col = j if mu_block else j - n_mu
        lo = rows_start[j]
        hi = rows_start[j + 1]
        log_ratio = -0.5 * (prop * prop - old * old) * prior_inv_var
        ok = True
        for idx in range(lo, hi):
            i = rows_flat[idx]
            if mu_block:
                eta1 = eta_mu[i] + delta * x_mu[i, col]
            else:
                eta1 = eta_nu[i] + delta * x_nu[i, col]
            if eta1 > _LINPRED_LIMIT or eta1 < -_LINPRED_LIMIT:
                ok = False
                break
            mu0 = mu[i]
            lm0 = eta_mu[i]
            nu0 = nu[i]
            if mu_block:
                mu1 = math.exp(eta1)
                lm1 = eta1
                nu1 = nu0
            else:
                mu1 = mu0
                lm1 = lm0
                nu1 = math.exp(eta1)
            is_pois, p, log1mp, log_b, _ = _envelope_scalar(mu1, nu1)
            ya, t = _accepted_draw(gen, mu1, nu1, lm1, is_pois, p, log1mp, log_b)
            if t < 0:
                return 1
            lgya = math.lgamma(ya + 1.0)
            log_ratio += nu1 * (y[i] * lm1 - lgy[i]) - nu0 * (y[i] * lm0 - lgy[i])
            log_ratio += nu0 * (ya * lm0 - lgya) - nu1 * (ya * lm1 - lgya)
        accepted = False
        if ok and math.log(gen.random()) <= log_ratio:
            accepted = True
        if accepted:
            beta[j] = prop
            for idx in range(lo, hi):
                i = rows_flat[idx]
                if mu_block:
                    eta_mu[i] += delta * x_mu[i, col]
                    mu[i] = math.exp(eta_mu[i])
                else:
                    eta_nu[i] += delta * x_nu[i, col]
                    nu[i] = math.exp(eta_nu[i])
            accept_flags[j] = 1
        else:
            accept_flags[j] = 0
    return 0


@njit(cache=True)
def aux_sums_const(gen, n, mu, nu, out):
    """n auxiliary draws from one parameter pair, reduced to sufficient sums.

    out receives (sum y, sum lgamma(y + 1)); the full draws are never
    materialised.  Returns 0, or 1 on a guard trip.
    """
    is_pois, p, log1mp, log_b, _ = _envelope_scalar(mu, nu)
    log_mu = math.log(mu)
    s1 = 0.0
    s2 = 0.0
    for _i in range(n):
        y, t = _accepted_draw(gen, mu, nu, log_mu, is_pois, p, log1mp, log_b)
        if t < 0:
            return 1
        s1 += y
        s2 += math.lgamma(y + 1.0)
    out[0] = s1
    out[1] = s2
    return 0
