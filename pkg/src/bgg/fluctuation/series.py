"""Truncated power series used to expand probability generating functions."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc

# partial sums longer than this switch to compensated (fsum) accumulation
COMPENSATED_SUM_THRESHOLD = 100_000


class TruncationError(ValueError):
    """A coefficient was requested beyond the part of a series that is known."""


@dataclass(frozen=True, eq=False)
class PowerSeries:
    """Coefficients ``c[k]`` of ``sum_k c[k] u**k`` known for k < nominal_length.

    ``finite`` marks a polynomial: every coefficient past the stored ones is
    exactly zero, so reads past the end are allowed.
    """

    coefficients: np.ndarray
    nominal_length: int
    finite: bool = False

    @classmethod
    def from_coefficients(cls, coeffs, finite: bool = False) -> "PowerSeries":
        c = np.asarray(coeffs, dtype=float)
        return cls(c, len(c), finite)

    @classmethod
    def constant(cls, value: float = 1.0) -> "PowerSeries":
        return cls(np.array([float(value)]), 1, True)

    def __len__(self):
        return self.nominal_length

    def coefficient(self, k: int) -> float:
        if k < 0:
            return 0.0
        if k < len(self.coefficients):
            return float(self.coefficients[k])
        if self.finite:
            return 0.0
        raise TruncationError(f"coefficient {k} beyond valid length {self.nominal_length}")

    def valid_through(self, m: int) -> bool:
        return self.finite or m < self.nominal_length

    def head(self, m: int) -> np.ndarray:
        """Coefficients 0..m as an array, zero-padded only for polynomials."""
        if not self.valid_through(m):
            raise TruncationError(f"series valid through degree {self.nominal_length - 1}, asked for {m}")
        c = self.coefficients[: m + 1]
        if len(c) < m + 1:
            c = np.concatenate([c, np.zeros(m + 1 - len(c))])
        return c


@dataclass(frozen=True)
class GeometricPGF:
    """gamma(u) = beta / (1 - alpha_ u): mass beta * alpha_**k at k."""

    beta: float
    alpha_: float

    def __post_init__(self):
        if not (0.0 < self.beta <= 1.0 and 0.0 <= self.alpha_ < 1.0):
            raise ValueError(f"need 0 < beta <= 1 and 0 <= alpha < 1, got {self.beta}, {self.alpha_}")
        if abs(self.beta + self.alpha_ - 1.0) > 1e-12:
            raise ValueError("beta + alpha must equal 1")

    def series(self, m: int) -> PowerSeries:
        return nb_power_coefficients(self, 1, m)


def nb_power_coefficients(pgf: GeometricPGF, n: int, m: int) -> PowerSeries:
    """Coefficients 0..m of gamma(u)**n (negative binomial with shape n).

    term[k] = beta**n * C(n+k-1, k) * alpha**k via the forward ratio
    term[k+1] = term[k] * alpha * (n+k) / (k+1).  The recursion runs on
    logarithms so a vanishing leading term beta**n does not wipe out the
    bulk of the law; coefficients below the double range underflow to 0.
    """
    if n < 1:
        raise ValueError("power n must be >= 1")
    if m < 0:
        raise ValueError("length m must be >= 0")
    out = np.zeros(m + 1)
    if pgf.alpha_ == 0.0:
        out[0] = pgf.beta ** n
        return PowerSeries(out, m + 1, False)
    k = np.arange(m, dtype=float)
    log_steps = math.log(pgf.alpha_) + np.log((n + k) / (k + 1.0))
    logs = np.empty(m + 1)
    logs[0] = n * math.log(pgf.beta)
    np.cumsum(log_steps, out=logs[1:])
    logs[1:] += logs[0]
    with np.errstate(under="ignore"):
        np.exp(logs, out=out)
    return PowerSeries(out, m + 1, False)


def partial_sum(series: PowerSeries, m: int) -> float:
    """Sum of coefficients 0..m: the inverse-operator functional at level m.

    Constants are fixed points; for a PGF this is P(X <= m).
    """
    if m < 0:
        return 0.0
    c = series.head(m)
    if len(c) > COMPENSATED_SUM_THRESHOLD:
        return math.fsum(c)
    return float(np.sum(c))


def convolve(a: PowerSeries, b: PowerSeries, m: int) -> PowerSeries:
    """Cauchy product truncated at degree m."""
    out = np.convolve(a.head(m), b.head(m))[: m + 1]
    # a product of polynomials stays exact only if nothing was cut off
    finite = a.finite and b.finite and m >= len(a.coefficients) + len(b.coefficients) - 2
    return PowerSeries(out, m + 1, finite)


def nb_partial_sums(pgf: GeometricPGF, shapes, m: int) -> np.ndarray:
    """partial_sum(nb_power_coefficients(pgf, s, m), m) for many shapes s at once.

    Uses the identity P(NB(s) <= m) = I_beta(s, m + 1) (regularized
    incomplete beta), which keeps relative accuracy where the sums are tiny.
    Shape 0 is the point mass at zero.
    """
    s = np.asarray(shapes, dtype=float)
    if m < 0:
        return np.zeros_like(s)
    out = np.ones_like(s)
    pos = s > 0
    if pgf.alpha_ > 0.0:
        out[pos] = betainc(s[pos], m + 1.0, pgf.beta)
    return out
