"""Dual-link count regression models: formulas, design matrices, links, priors.

A model maps a coefficient vector to one (mu_i, nu_i) pair per observation
through separate log-linear links,

    mu_i = exp(b_mu' [1, x_i]),    nu_i = exp(b_nu' [1, x_i]),

with independent Normal(0, sd^2) priors on every coefficient.  A Poisson
family fixes nu_i = 1 and carries no dispersion coefficients.  The
no-covariate case models (mu, nu) directly under Gamma priors instead of
going through the links.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.special import gammaln

from .params import CmpParams, DataError, DivergentLinkError

POISSON_FAMILY = "poisson"
CMP_FAMILY = "cmp"

# exp() overflow ceiling for float64; linear predictors beyond this signal
# a divergent link and the proposal is rejected instead of crashing.
LINPRED_LIMIT = 700.0

TAKEOVER_COLUMNS = (
    "NUMBIDS",
    "LEGLREST",
    "REALREST",
    "FINREST",
    "WHTKNGHT",
    "REGULATN",
    "BIDPREM",
    "INSTHOLD",
    "SIZE",
)


@dataclass(frozen=True)
class NormalPrior:
    """Independent zero-mean normal prior on each coefficient."""

    sd: float = 5.0

    def __post_init__(self):
        if self.sd <= 0:
            raise ValueError("prior sd must be positive")


@dataclass(frozen=True)
class GammaPrior:
    """Gamma prior in the shape-rate convention (mean = shape / rate)."""

    shape: float
    rate: float

    def __post_init__(self):
        if self.shape <= 0 or self.rate <= 0:
            raise ValueError("gamma shape and rate must be positive")

    def logpdf(self, x: float) -> float:
        if x <= 0:
            return -math.inf
        return (
            self.shape * math.log(self.rate)
            - gammaln(self.shape)
            + (self.shape - 1.0) * math.log(x)
            - self.rate * x
        )


@dataclass(frozen=True)
class ModelSpec:
    """Regression description: response column, per-link terms, family, prior.

    Intercepts are implicit in both links; k counts every estimated
    coefficient (mu intercept + mu terms, plus for the CMP family the nu
    intercept + nu terms).
    """

    name: str
    response: str
    mu_terms: tuple[str, ...]
    nu_terms: tuple[str, ...] = ()
    family: str = CMP_FAMILY
    prior: NormalPrior = field(default_factory=NormalPrior)

    def __post_init__(self):
        if self.family not in (POISSON_FAMILY, CMP_FAMILY):
            raise ValueError(f"unknown family {self.family!r}")
        if self.family == POISSON_FAMILY and self.nu_terms:
            raise ValueError("a poisson-family model cannot carry dispersion terms")

    @property
    def k(self) -> int:
        k = 1 + len(self.mu_terms)
        if self.family == CMP_FAMILY:
            k += 1 + len(self.nu_terms)
        return k

    @property
    def coef_names(self) -> list[str]:
        names = ["beta_0"] + [f"beta_{t}" for t in self.mu_terms]
        if self.family == CMP_FAMILY:
            names += ["rho_0"] + [f"rho_{t}" for t in self.nu_terms]
        return names


def parse_formula(
    text: str,
    name: str = "model",
    response: str = "NUMBIDS",
    prior: NormalPrior | None = None,
) -> ModelSpec:
    """Parse `mu ~ A + B ; nu ~ C` (and `family=poisson; mu ~ A`) into a ModelSpec.

    Intercepts are implicit; `nu ~ 1` gives an intercept-only dispersion
    link.  Omitting the nu clause requires the poisson family marker.  The
    response column is not part of the grammar and is supplied separately.
    """
    family = CMP_FAMILY
    clauses = [c.strip() for c in text.split(";") if c.strip()]
    if clauses and clauses[0].replace(" ", "").lower() == f"family={POISSON_FAMILY}":
        family = POISSON_FAMILY
        clauses = clauses[1:]
    sides = {}
    for clause in clauses:
        if "~" not in clause:
            raise ValueError(f"formula clause {clause!r} is missing '~'")
        lhs, rhs = clause.split("~", 1)
        lhs = lhs.strip().lower()
        if lhs not in ("mu", "nu"):
            raise ValueError(f"formula link must be mu or nu, got {lhs!r}")
        if lhs in sides:
            raise ValueError(f"duplicate {lhs} clause")
        terms = [t.strip() for t in rhs.split("+")]
        terms = [t for t in terms if t not in ("", "1")]
        sides[lhs] = tuple(terms)
    if "mu" not in sides:
        raise ValueError("formula needs a mu clause")
    if family == POISSON_FAMILY:
        if "nu" in sides:
            raise ValueError("poisson family takes no nu clause")
        return ModelSpec(name=name, response=response, mu_terms=sides["mu"], family=family,
                         prior=prior or NormalPrior())
    if "nu" not in sides:
        raise ValueError("cmp formula needs a nu clause (use 'nu ~ 1' or family=poisson)")
    return ModelSpec(name=name, response=response, mu_terms=sides["mu"], nu_terms=sides["nu"],
                     family=family, prior=prior or NormalPrior())


def builtin_models(response: str = "NUMBIDS") -> list[ModelSpec]:
    """The five takeover-bids candidate models (k = 3, 4, 5, 4, 6)."""
    return [
        ModelSpec("model1", response, ("BIDPREM", "WHTKNGHT"), family=POISSON_FAMILY),
        ModelSpec("model2", response, ("BIDPREM", "WHTKNGHT", "SIZE"), family=POISSON_FAMILY),
        ModelSpec("model3", response, ("BIDPREM", "WHTKNGHT"), ("SIZE",)),
        ModelSpec("model4", response, ("WHTKNGHT",), ("SIZE",)),
        ModelSpec("model5", response, ("BIDPREM", "WHTKNGHT"), ("SIZE", "FINREST")),
    ]


def load_dataset(path) -> pd.DataFrame:
    """Read and validate a covariate CSV: header row, numeric, no missing values."""
    try:
        df = pd.read_csv(path)
    except FileNotFoundError:
        raise DataError(f"data file not found: {path}")
    except Exception as exc:
        raise DataError(f"cannot parse {path}: {exc}")
    if df.isna().any().any():
        raise DataError(f"{path} contains missing values")
    for col in df.columns:
        if not np.issubdtype(df[col].dtype, np.number):
            raise DataError(f"column {col!r} is not numeric")
    return df


def link_eval(spec: ModelSpec, beta, row) -> CmpParams:
    """Evaluate both links for one covariate record (a mapping of column -> value)."""
    beta = np.asarray(beta, dtype=float)
    if beta.size != spec.k:
        raise ValueError(f"expected {spec.k} coefficients, got {beta.size}")
    n_mu = 1 + len(spec.mu_terms)
    eta_mu = beta[0] + sum(b * float(row[t]) for b, t in zip(beta[1:n_mu], spec.mu_terms))
    if spec.family == POISSON_FAMILY:
        eta_nu = 0.0
    else:
        nu_coefs = beta[n_mu:]
        eta_nu = nu_coefs[0] + sum(
            b * float(row[t]) for b, t in zip(nu_coefs[1:], spec.nu_terms)
        )
    if abs(eta_mu) > LINPRED_LIMIT or abs(eta_nu) > LINPRED_LIMIT:
        raise DivergentLinkError(f"linear predictor beyond +-{LINPRED_LIMIT}")
    return CmpParams(mu=math.exp(eta_mu), nu=math.exp(eta_nu))


def log_prior(spec: ModelSpec, beta) -> float:
    """Sum of Normal(0, sd^2) log densities over all coefficients."""
    beta = np.asarray(beta, dtype=float)
    if beta.size != spec.k:
        raise ValueError(f"expected {spec.k} coefficients, got {beta.size}")
    sd = spec.prior.sd
    return float(-0.5 * np.sum(beta**2) / sd**2 - beta.size * (np.log(sd) + 0.5 * np.log(2 * np.pi)))


class BoundModel:
    """A ModelSpec bound to data: design matrices plus fast vector links.

    This is the object the samplers drive.  theta(beta) maps a coefficient
    vector to per-observation (mu, nu) arrays and raises DivergentLinkError
    on overflow, which callers treat as an auto-rejected proposal.
    """

    def __init__(self, spec: ModelSpec, data: pd.DataFrame, standardize: bool = False):
        self.spec = spec
        if spec.response not in data.columns:
            raise DataError(f"response column {spec.response!r} not in data")
        for term in (*spec.mu_terms, *spec.nu_terms):
            if term not in data.columns:
                raise DataError(f"formula column {term!r} not in data")
        y = data[spec.response].to_numpy()
        if not np.allclose(y, np.round(y)) or (y < 0).any():
            raise DataError(f"response {spec.response!r} must be non-negative integers")
        self.y = y.astype(np.int64)
        self.n = self.y.size
        cols = {}
        for term in set((*spec.mu_terms, *spec.nu_terms)):
            x = data[term].to_numpy(dtype=float)
            if standardize:
                sd = x.std()
                x = (x - x.mean()) / sd if sd > 0 else x - x.mean()
            cols[term] = x
        ones = np.ones(self.n)
        self.x_mu = np.column_stack([ones] + [cols[t] for t in spec.mu_terms])
        self.x_nu = (
            np.column_stack([ones] + [cols[t] for t in spec.nu_terms])
            if spec.family == CMP_FAMILY
            else None
        )
        self.k = spec.k
        self.n_mu = self.x_mu.shape[1]
        self.coef_names = spec.coef_names

    def initial_state(self) -> np.ndarray:
        return np.zeros(self.k)

    def theta(self, beta) -> tuple[np.ndarray, np.ndarray]:
        beta = np.asarray(beta, dtype=float)
        eta_mu = self.x_mu @ beta[: self.n_mu]
        if self.x_nu is not None:
            eta_nu = self.x_nu @ beta[self.n_mu :]
        else:
            eta_nu = np.zeros(self.n)
        if np.max(np.abs(eta_mu)) > LINPRED_LIMIT or np.max(np.abs(eta_nu)) > LINPRED_LIMIT:
            raise DivergentLinkError(f"linear predictor beyond +-{LINPRED_LIMIT}")
        return np.exp(eta_mu), np.exp(eta_nu)

    def exchange_arrays(self) -> dict:
        """Design structure consumed by the compiled exchange sweep.

        rows_flat/rows_start index, per coefficient, the observations with
        a non-zero design entry; all other rows are untouched by a move of
        that coefficient.
        """
        x_nu = self.x_nu if self.x_nu is not None else np.zeros((self.n, 1))
        rows = []
        starts = [0]
        for j in range(self.k):
            col = self.x_mu[:, j] if j < self.n_mu else x_nu[:, j - self.n_mu]
            idx = np.flatnonzero(col != 0.0)
            rows.append(idx)
            starts.append(starts[-1] + idx.size)
        return {
            "x_mu": np.ascontiguousarray(self.x_mu),
            "x_nu": np.ascontiguousarray(x_nu),
            "n_mu": self.n_mu,
            "rows_flat": np.concatenate(rows).astype(np.int64),
            "rows_start": np.asarray(starts, dtype=np.int64),
        }

    def log_prior(self, beta) -> float:
        return log_prior(self.spec, beta)

    def log_prior_diff(self, beta_new, beta_old, j: int) -> float:
        # independent normals: only coordinate j moves
        sd = self.spec.prior.sd
        return -0.5 * (beta_new[j] ** 2 - beta_old[j] ** 2) / sd**2


def synthetic_covariates(n: int, rng) -> pd.DataFrame:
    """Covariate table shaped like the takeover-bids schema (response left at 0)."""
    df = pd.DataFrame(
        {
            "NUMBIDS": np.zeros(n, dtype=np.int64),
            "LEGLREST": rng.integers(0, 2, n),
            "REALREST": rng.integers(0, 2, n),
            "FINREST": (rng.random(n) < 0.2).astype(np.int64),
            "WHTKNGHT": rng.integers(0, 2, n),
            "REGULATN": rng.integers(0, 2, n),
            "BIDPREM": np.round(rng.uniform(1.0, 2.0, n), 4),
            "INSTHOLD": np.round(rng.uniform(0.0, 1.0, n), 4),
            "SIZE": np.round(rng.lognormal(0.0, 1.0, n), 4),
        }
    )
    return df


def simulate_response(spec: ModelSpec, data: pd.DataFrame, beta_true, rng) -> pd.DataFrame:
    """Fill the response column with exact draws from the model at beta_true."""
    from .rejection import sample_each

    df = data.copy()
    df[spec.response] = 0
    bound = BoundModel(spec, df)
    mu, nu = bound.theta(np.asarray(beta_true, dtype=float))
    values, _ = sample_each(mu, nu, rng)
    df[spec.response] = values
    return df


class DirectModel:
    """No-covariate model: the state is (mu, nu) itself, under Gamma priors.

    The Poisson variant drops the dispersion parameter entirely (state is
    just the mean).  Random-walk proposals that leave the positive orthant
    get log-prior -inf and are rejected by the samplers.
    """

    def __init__(
        self,
        y,
        mu_prior: GammaPrior = GammaPrior(1.0, 1.0),
        nu_prior: GammaPrior = GammaPrior(0.0625, 0.25),
        family: str = CMP_FAMILY,
    ):
        y = np.asarray(y)
        if (y < 0).any() or not np.allclose(y, np.round(y)):
            raise DataError("response must be non-negative integers")
        self.y = y.astype(np.int64)
        self.n = self.y.size
        self.family = family
        self.mu_prior = mu_prior
        self.nu_prior = nu_prior
        self.k = 2 if family == CMP_FAMILY else 1
        self.coef_names = ["mu", "nu"][: self.k]

    def initial_state(self) -> np.ndarray:
        mean = max(float(self.y.mean()), 0.5)
        return np.array([mean, 1.0])[: self.k]

    def theta(self, state) -> tuple[np.ndarray, np.ndarray]:
        mu = float(state[0])
        nu = float(state[1]) if self.k == 2 else 1.0
        if mu <= 0 or nu <= 0:
            raise DivergentLinkError("non-positive parameter proposal")
        ones = np.ones(self.n)
        return mu * ones, nu * ones

    def log_prior(self, state) -> float:
        lp = self.mu_prior.logpdf(float(state[0]))
        if self.k == 2:
            lp += self.nu_prior.logpdf(float(state[1]))
        return lp

    def log_prior_diff(self, new, old, j: int) -> float:
        prior = self.mu_prior if j == 0 else self.nu_prior
        return prior.logpdf(float(new[j])) - prior.logpdf(float(old[j]))

    def suff_stats(self) -> tuple[float, float]:
        """(sum y, sum log y!): all the data enters the likelihood through these."""
        return float(self.y.sum()), float(gammaln(self.y + 1.0).sum())
