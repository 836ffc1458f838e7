"""Exponential-family distributions under their natural link.

Each family supplies the log-normalizer ``b`` together with its first two
derivatives: ``b'`` is the mean function (the inverse link, since the link
is natural) and ``b''`` the variance function.  The normal family is fixed
at unit dispersion.
"""

from __future__ import annotations

import enum

import numpy as np
from scipy.special import expit

from .errors import DomainError

__all__ = ["Family", "cumulant", "mean", "variance", "sample", "parse_family"]


class Family(enum.Enum):
    """Distribution of the response, paired with its natural link."""

    NORMAL_IDENTITY = "normal"
    BERNOULLI_LOGIT = "logit"
    POISSON_LOG = "poisson"


_TOKENS = {f.value: f for f in Family}


def parse_family(token: str) -> Family:
    """Map a config/CLI token ("normal", "logit", "poisson") to a Family."""
    try:
        return _TOKENS[token]
    except KeyError:
        raise DomainError(
            f"unknown family {token!r}; expected one of {sorted(_TOKENS)}"
        ) from None


def _check_finite(theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise DomainError("natural parameter must be finite")
    return theta


def cumulant(family: Family, theta):
    """Log-normalizer b(theta).

    The logit branch uses max(theta, 0) + log1p(exp(-|theta|)) so that
    large |theta| neither overflows nor loses the tail.
    """
    theta = _check_finite(theta)
    if family is Family.NORMAL_IDENTITY:
        return theta**2 / 2.0
    if family is Family.BERNOULLI_LOGIT:
        return np.maximum(theta, 0.0) + np.log1p(np.exp(-np.abs(theta)))
    return np.exp(theta)


def mean(family: Family, theta):
    """Mean function b'(theta), i.e. the inverse of the natural link."""
    theta = _check_finite(theta)
    if family is Family.NORMAL_IDENTITY:
        return theta + 0.0
    if family is Family.BERNOULLI_LOGIT:
        return expit(theta)
    return np.exp(theta)


def variance(family: Family, theta):
    """Variance function b''(theta) >= 0.

    For the logit family this is computed as expit(theta) * expit(-theta),
    which stays positive (rather than flushing to 0) far into the tails.
    """
    theta = _check_finite(theta)
    if family is Family.NORMAL_IDENTITY:
        return np.ones_like(theta)
    if family is Family.BERNOULLI_LOGIT:
        return expit(theta) * expit(-theta)
    return np.exp(theta)


def sample(family: Family, theta, rng: np.random.Generator):
    """Draw from the family at natural parameter theta.

    The caller owns the random stream; use one generator per thread.
    """
    theta = _check_finite(theta)
    if family is Family.NORMAL_IDENTITY:
        return rng.normal(loc=theta, scale=1.0)
    if family is Family.BERNOULLI_LOGIT:
        return (rng.random(size=np.shape(theta)) < expit(theta)).astype(float)
    lam = np.exp(theta)
    if not np.all(np.isfinite(lam)):
        raise DomainError("Poisson rate exp(theta) overflows")
    return rng.poisson(lam=lam).astype(float)


def support_ok(family: Family, y: np.ndarray) -> bool:
    """Whether every response value lies in the family's support."""
    if family is Family.BERNOULLI_LOGIT:
        return bool(np.all((y == 0.0) | (y == 1.0)))
    if family is Family.POISSON_LOG:
        return bool(np.all((y >= 0.0) & (y == np.floor(y))))
    return bool(np.all(np.isfinite(y)))
