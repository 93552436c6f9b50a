"""Parameter containers and the package error hierarchy."""

from __future__ import annotations

import math
from dataclasses import dataclass


class CompoisError(Exception):
    """Base class for all errors raised by this package."""


class InvalidWindowError(CompoisError, ValueError):
    """Truncation window does not bracket the mode of the target."""


class ConvergenceError(CompoisError, RuntimeError):
    """A series summation hit its term cap before converging."""


class RunawayRejectionError(CompoisError, RuntimeError):
    """Rejection loop exceeded the trial guard; indicates a broken bound."""


class DivergentLinkError(CompoisError, FloatingPointError):
    """Linear predictor too large for exp(); callers treat as a rejected move."""


class DataError(CompoisError, ValueError):
    """Input data file violates the expected schema."""


@dataclass(frozen=True)
class CmpParams:
    """A (mu, nu) pair for the count distribution with mass proportional to (mu^y / y!)^nu.

    mu > 0 locates the distribution (mode at floor(mu)); nu > 0 controls
    dispersion (nu < 1 overdispersed, nu = 1 Poisson, nu > 1 underdispersed).
    nu = 0 is rejected: it flattens every unnormalised mass to 1 and the
    normalising sum diverges.
    """

    mu: float
    nu: float

    def __post_init__(self):
        if not (math.isfinite(self.mu) and self.mu > 0.0):
            raise ValueError(f"mu must be finite and > 0, got {self.mu!r}")
        if not (math.isfinite(self.nu) and self.nu > 0.0):
            raise ValueError(f"nu must be finite and > 0, got {self.nu!r}")


@dataclass(frozen=True)
class TruncationWindow:
    """Summation range [k1, k2] for a finite normalising-constant approximation.

    A window is only usable for a given parameter pair if it strictly
    brackets the mode (k1 < floor(mu) < k2), except that a mode of 0 only
    requires k1 = 0 < k2.  That check needs the parameters, so it lives in
    the summation routine, not here.
    """

    k1: int
    k2: int

    def __post_init__(self):
        if self.k1 < 0 or self.k2 < 0:
            raise ValueError("window endpoints must be non-negative")
        if self.k1 > self.k2:
            raise ValueError(f"need k1 <= k2, got ({self.k1}, {self.k2})")

    def brackets_mode(self, mode: int) -> bool:
        if mode == 0:
            return self.k1 == 0 and self.k2 > 0
        return self.k1 < mode < self.k2
