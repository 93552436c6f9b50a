"""Exact COM-Poisson variate generation with per-draw trial accounting.

Every accepted draw is an exact sample from the target; the number of
envelope proposals burned to get it is returned alongside, because those
trial counts are the raw material of the bound estimator.  The bound is
computed once per parameter pair and reused across a batch.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .envelope import Envelope, POISSON, build_envelope
from .params import CmpParams, RunawayRejectionError
from .rng import split_rng


@dataclass(frozen=True)
class DrawWithCost:
    """One accepted variate and the number of Bernoulli trials it consumed."""

    value: int
    trials: int


@dataclass(frozen=True)
class BatchDraws:
    """r accepted variates and the total trial count n_r across all of them."""

    values: np.ndarray
    total_trials: int


def _env_scalars(params: CmpParams, env: Envelope):
    if env.kind == POISSON:
        return True, 0.5, np.log1p(-0.5), env.log_b  # p fields unused
    return False, env.gamma, float(np.log1p(-env.gamma)), env.log_b


def sample_one(params: CmpParams, env: Envelope, rng: np.random.Generator) -> DrawWithCost:
    """Draw a single exact variate by envelope rejection.

    Proposals come from the envelope family (Poisson via an exact generator,
    geometric via inversion of a single uniform) and are accepted when
    log u <= log q_f(y) - log B - log q_g(y).  Raises RunawayRejectionError
    if the trial guard trips, which a correct bound makes impossible.
    """
    batch = sample_r(params, env, 1, rng)
    return DrawWithCost(value=int(batch.values[0]), trials=batch.total_trials)


def sample_r(params: CmpParams, env: Envelope, r: int, rng: np.random.Generator) -> BatchDraws:
    """r iid exact variates; total_trials is negative-binomial with mean r * M."""
    if r < 1:
        raise ValueError("r must be >= 1")
    values, trials = sample_with_costs(params, env, r, rng)
    return BatchDraws(values=values.astype(np.int64), total_trials=int(trials.sum()))


def sample_with_costs(
    params: CmpParams, env: Envelope, r: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """r exact variates plus the per-draw geometric trial counts."""
    is_pois, p, log1mp, log_b = _env_scalars(params, env)
    values = np.empty(r, dtype=np.float64)
    trials = np.empty(r, dtype=np.int64)
    bad = _kernels.draw_batch(
        rng, params.mu, params.nu, is_pois, p, log1mp, log_b, values, trials
    )
    if bad:
        raise RunawayRejectionError(
            f"no acceptance within {_kernels.TRIAL_GUARD} trials at "
            f"(mu={params.mu}, nu={params.nu}); envelope bound is broken"
        )
    return values, trials


def sample_each(mu, nu, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """One exact draw per (mu_i, nu_i) pair; returns (values, trials) arrays.

    Vector workhorse for the auxiliary draws inside MCMC sweeps; envelope
    bounds are built inside the compiled loop.  Values come back as floats
    because tiny nu puts mass beyond the integer range.
    """
    mu = np.ascontiguousarray(mu, dtype=np.float64)
    nu = np.ascontiguousarray(nu, dtype=np.float64)
    values = np.empty(mu.size, dtype=np.float64)
    trials = np.empty(mu.size, dtype=np.int64)
    bad = _kernels.draw_each_auto(rng, mu, nu, values, trials)
    if bad:
        raise RunawayRejectionError("trial guard tripped during vector sampling")
    return values, trials


def count_trials_each(mu, nu, r: int, rng: np.random.Generator) -> np.ndarray:
    """Trials to reach r acceptances per (mu_i, nu_i) pair (draws discarded)."""
    mu = np.ascontiguousarray(mu, dtype=np.float64)
    nu = np.ascontiguousarray(nu, dtype=np.float64)
    out = np.empty(mu.size, dtype=np.int64)
    scratch = np.empty(mu.size)
    bad = _kernels.count_trials_auto(rng, mu, nu, r, out, scratch, scratch.copy())
    if bad:
        raise RunawayRejectionError("trial guard tripped while counting trials")
    return out


def acceptance_grid(
    mu_grid, nu_grid, draws_per_cell: int, rng: np.random.Generator, threads: int = 1
) -> list[dict]:
    """Empirical acceptance rate per (mu, nu) cell.

    Each cell runs until draws_per_cell acceptances on its own child stream,
    so the result is independent of execution order and of `threads`.
    Returns a row dict per cell with keys mu, nu, proposals, accepts, rate.
    """
    cells = [(float(m), float(n)) for m in mu_grid for n in nu_grid]
    streams = split_rng(rng, len(cells))

    def run_cell(args):
        (mu, nu), stream = args
        params = CmpParams(mu, nu)
        env = build_envelope(params)
        is_pois, p, log1mp, log_b = _env_scalars(params, env)
        proposals = _kernels.grid_cell_trials(
            stream, mu, nu, is_pois, p, log1mp, log_b, draws_per_cell
        )
        return {
            "mu": mu,
            "nu": nu,
            "proposals": int(proposals),
            "accepts": int(draws_per_cell),
            "rate": draws_per_cell / proposals,
        }

    work = list(zip(cells, streams))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(run_cell, work))
    return [run_cell(w) for w in work]


def write_acceptance_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mu", "nu", "proposals", "accepts", "rate"])
        for row in rows:
            writer.writerow(
                [row["mu"], row["nu"], row["proposals"], row["accepts"], f"{row['rate']:.6f}"]
            )
