"""Envelope construction for exact rejection sampling of the COM-Poisson target.

The proposal family is picked by dispersion: an (unnormalised) Poisson with
the same mu when nu >= 1, and a moment-matched geometric when nu < 1.  Both
come with a closed-form supremum bound B on q_f / q_g, so the acceptance
test q_f(y) / (B q_g(y)) never needs a normalising constant.  Bounds are
kept in log space throughout: B itself explodes for large mu or |nu - 1|.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .core import converged_log_z, log_unnormalized_mass
from .params import CmpParams

POISSON = "poisson"
GEOMETRIC = "geometric"


@dataclass(frozen=True)
class Envelope:
    """Proposal descriptor: family, parameter, log Z_g and the log dominance bound.

    For the Poisson family gamma is mu and q_g(y) = mu^y / y! (so
    log_zg = mu); for the geometric family gamma is the success probability
    p and q_g(y) = p (1-p)^y is already normalised (log_zg = 0).
    """

    kind: str
    gamma: float
    log_zg: float
    log_b: float


@dataclass(frozen=True)
class BoundDecomposition:
    """All four log quantities tied by M = (Z_g / Z_f) * B.

    log_zf (and hence log_m) comes from the truncated-sum oracle, so this
    is diagnostic machinery: the samplers themselves never need M.
    """

    log_b: float
    log_zg: float
    log_zf: float

    @property
    def log_m(self) -> float:
        return self.log_zg - self.log_zf + self.log_b

    @classmethod
    def from_oracle(cls, params: CmpParams, env: Envelope) -> "BoundDecomposition":
        return cls(log_b=env.log_b, log_zg=env.log_zg, log_zf=converged_log_z(params))


def choose_p(params: CmpParams) -> float:
    """Geometric parameter matching the envelope mean to the target mean.

    p = 2 nu / (2 mu nu + 1 + nu), i.e. (1-p)/p equals the approximate mean
    mu + 1/(2 nu) - 1/2.  Defined for any parameters but only used when
    nu < 1.
    """
    return 2.0 * params.nu / (2.0 * params.mu * params.nu + 1.0 + params.nu)


def build_envelope(params: CmpParams, p: float | None = None) -> Envelope:
    """Envelope with the closed-form supremum bound for the given parameters.

    nu >= 1 routes to the Poisson branch (including nu = 1, where the bound
    is exactly 1 and every proposal is accepted).  For nu < 1 the geometric
    parameter defaults to the moment-matched choice; any p in (0, 1) still
    yields a valid envelope and may be supplied for experimentation.
    """
    mu, nu = params.mu, params.nu
    if nu >= 1.0:
        m = float(np.floor(mu))
        log_b = (nu - 1.0) * (m * np.log(mu) - gammaln(m + 1.0))
        return Envelope(kind=POISSON, gamma=mu, log_zg=mu, log_b=float(log_b))
    if p is None:
        p = choose_p(params)
    if not 0.0 < p < 1.0:
        raise ValueError(f"geometric parameter must lie in (0, 1), got {p!r}")
    log1mp = np.log1p(-p)
    y_m = float(np.floor(mu * np.exp(-log1mp / nu)))
    log_b = -np.log(p) + nu * y_m * np.log(mu) - y_m * log1mp - nu * gammaln(y_m + 1.0)
    return Envelope(kind=GEOMETRIC, gamma=p, log_zg=0.0, log_b=float(log_b))


def envelope_log_density(env: Envelope, y) -> float | np.ndarray:
    """log q_g(y): unnormalised Poisson mass or normalised geometric mass."""
    y = np.asarray(y, dtype=float)
    if env.kind == POISSON:
        out = y * np.log(env.gamma) - gammaln(y + 1.0)
    else:
        out = np.log(env.gamma) + y * np.log1p(-env.gamma)
    return float(out) if out.ndim == 0 else out


def brute_force_bound(
    params: CmpParams, env: Envelope, ymax: int, return_argmax: bool = False
):
    """Exhaustive sup of log q_f(y) - log q_g(y) over y in [0, ymax].

    Independent check that the closed-form bound is the exact supremum and
    that the maximiser sits where the dominance analysis says it should.
    """
    y = np.arange(0, ymax + 1)
    diff = log_unnormalized_mass(params, y) - envelope_log_density(env, y)
    i = int(np.argmax(diff))
    if return_argmax:
        return float(diff[i]), i
    return float(diff[i])


def predicted_argmax(params: CmpParams, env: Envelope) -> int:
    """Location of the supremum of q_f/q_g given by the dominance analysis."""
    if env.kind == POISSON:
        return int(np.floor(params.mu))
    return int(np.floor(params.mu * (1.0 - env.gamma) ** (-1.0 / params.nu)))


def envelope_table(mu, nu):
    """Vectorised envelope pieces for arrays of parameter pairs.

    Returns (is_pois, p, log1mp, log_b) float64/bool arrays as consumed by
    the compiled sampling kernels.  p and log1mp are only meaningful where
    is_pois is False.
    """
    mu = np.ascontiguousarray(mu, dtype=np.float64)
    nu = np.ascontiguousarray(nu, dtype=np.float64)
    is_pois = nu >= 1.0
    m = np.floor(mu)
    log_b_pois = (nu - 1.0) * (m * np.log(mu) - gammaln(m + 1.0))
    nu_g = np.where(is_pois, 0.5, nu)  # placeholder where unused
    p = 2.0 * nu_g / (2.0 * mu * nu_g + 1.0 + nu_g)
    log1mp = np.log1p(-p)
    y_m = np.floor(mu * np.exp(-log1mp / nu_g))
    log_b_geom = -np.log(p) + nu_g * y_m * np.log(mu) - y_m * log1mp - nu_g * gammaln(y_m + 1.0)
    log_b = np.where(is_pois, log_b_pois, log_b_geom)
    return is_pois, p, log1mp, np.ascontiguousarray(log_b)
