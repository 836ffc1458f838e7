"""Smoothed change-point model: linear predictor, objective, and exact
first and second derivatives.

The linear predictor is

    theta_i = beta0 + beta1 * x_i + beta2 * s(x_i, tau) + gamma . z_i

where the segment term s carries the change point.  The hard indicator in
s is replaced by a kernel K((x - tau)/h), which makes the objective
(sum of y*theta - b(theta)) twice differentiable in tau.  The derivative
formulas implemented here are exact, not numerical; tests check them
against central finite differences.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import families
from .errors import DataError, DomainError, NumericError
from .families import Family
from .kernels import BandwidthRule, Kernel, eval_kernel

__all__ = [
    "ModelForm",
    "ModelSpec",
    "ParamVector",
    "Dataset",
    "segment_term",
    "indicator_segment",
    "linear_predictor",
    "objective",
    "score",
    "neg_hessian",
    "score_covariance",
]


class ModelForm(enum.Enum):
    LINEAR_LINEAR = "linear-linear"
    LINEAR_QUADRATIC = "linear-quadratic"
    QUADRATIC_LINEAR = "quadratic-linear"


def parse_form(token: str) -> ModelForm:
    try:
        return ModelForm(token)
    except ValueError:
        raise DomainError(
            f"unknown model form {token!r}; expected one of "
            f"{[f.value for f in ModelForm]}"
        ) from None


@dataclass(frozen=True)
class ModelSpec:
    """Everything needed to evaluate the model on a dataset."""

    family: Family
    kernel: Kernel
    bw: BandwidthRule
    form: ModelForm = ModelForm.LINEAR_LINEAR
    n_covariates: int = 0

    @property
    def n_params(self) -> int:
        return 4 + self.n_covariates


@dataclass(frozen=True)
class ParamVector:
    """Parameters in the fixed order (beta0, beta1, beta2, tau, gamma...).

    beta2 is the slope (or curvature) change at the change point tau and
    must be nonzero for tau to be identified.
    """

    beta0: float
    beta1: float
    beta2: float
    tau: float
    gamma: tuple[float, ...] = ()

    def __post_init__(self):
        vals = (self.beta0, self.beta1, self.beta2, self.tau, *self.gamma)
        if not np.all(np.isfinite(vals)):
            raise DomainError("parameter vector must be finite")
        if self.beta2 == 0.0:
            raise DomainError("beta2 must be nonzero (change point unidentified)")

    def to_array(self) -> np.ndarray:
        return np.array([self.beta0, self.beta1, self.beta2, self.tau, *self.gamma])

    @classmethod
    def from_array(cls, a: np.ndarray) -> "ParamVector":
        a = np.asarray(a, dtype=float)
        return cls(a[0], a[1], a[2], a[3], tuple(a[4:]))


@dataclass(frozen=True)
class Dataset:
    """Observations (x, y) with optional extra covariates z (n x k)."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray | None = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if x.ndim != 1 or y.shape != x.shape:
            raise DataError("x and y must be 1-d arrays of equal length")
        if not np.all(np.isfinite(x)):
            raise DataError("x must be finite")
        if not np.all(np.isfinite(y)):
            raise DataError("y must be finite")
        k = 0
        if self.z is not None:
            z = np.asarray(self.z, dtype=float)
            if z.ndim != 2 or z.shape[0] != x.size:
                raise DataError("z must be an n x k matrix")
            if not np.all(np.isfinite(z)):
                raise DataError("z must be finite")
            object.__setattr__(self, "z", z)
            k = z.shape[1]
        if x.size < 5 + k:
            raise DataError(f"need at least {5 + k} observations, got {x.size}")

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def k(self) -> int:
        return 0 if self.z is None else self.z.shape[1]

    def check_family(self, family: Family) -> None:
        if not families.support_ok(family, self.y):
            raise DataError(f"y values outside the support of family {family.value}")

    def take(self, idx: np.ndarray) -> "Dataset":
        return Dataset(
            self.x[idx], self.y[idx], None if self.z is None else self.z[idx]
        )


def segment_term(form: ModelForm, x, tau: float, h: float, kernel: Kernel):
    """Smoothed segment term and its first two tau-derivatives.

    Returns (value, d_tau, d_tau2), each with the shape of x.  The 1/h
    powers only ever multiply kernel values that are exactly zero outside
    the clamp window, so no inf*0 products arise.
    """
    if h <= 0:
        raise DomainError("bandwidth must be positive")
    x = np.asarray(x, dtype=float)
    d = x - tau
    u = d / h
    kv, kp, kpp = eval_kernel(kernel, u)
    if form is ModelForm.LINEAR_LINEAR:
        value = d * kv
        d_tau = -(kv + u * kp)
        d_tau2 = (2.0 * kp + u * kpp) / h
    elif form is ModelForm.LINEAR_QUADRATIC:
        value = d * d * kv
        d_tau = -d * (2.0 * kv + u * kp)
        d_tau2 = 2.0 * kv + 4.0 * u * kp + u * u * kpp
    else:  # QUADRATIC_LINEAR
        omk = 1.0 - kv
        value = d * d * omk
        d_tau = -d * (2.0 * omk - u * kp)
        d_tau2 = 2.0 * omk - 4.0 * u * kp - u * u * kpp
    return value, d_tau, d_tau2


def indicator_segment(form: ModelForm, x, tau: float):
    """Hard-indicator segment term (the h -> 0 limit of segment_term)."""
    x = np.asarray(x, dtype=float)
    d = x - tau
    if form is ModelForm.LINEAR_LINEAR:
        return np.where(d > 0, d, 0.0)
    if form is ModelForm.LINEAR_QUADRATIC:
        return np.where(d >= 0, d * d, 0.0)
    return np.where(d < 0, d * d, 0.0)


def _check_dims(spec: ModelSpec, params: ParamVector, data: Dataset) -> None:
    if len(params.gamma) != spec.n_covariates or data.k != spec.n_covariates:
        raise DomainError(
            f"covariate count mismatch: spec expects {spec.n_covariates}, "
            f"params carry {len(params.gamma)}, data carries {data.k}"
        )


def _parts(spec: ModelSpec, params: ParamVector, data: Dataset, h: float):
    """theta, the n x (4+k) Jacobian d theta/d delta, and the tau-second
    derivative pieces shared by the matrix operations."""
    _check_dims(spec, params, data)
    seg, d_tau, d_tau2 = segment_term(spec.form, data.x, params.tau, h, spec.kernel)
    theta = params.beta0 + params.beta1 * data.x + params.beta2 * seg
    if params.gamma:
        theta = theta + data.z @ np.asarray(params.gamma)
    cols = [np.ones(data.n), data.x, seg, params.beta2 * d_tau]
    if data.z is not None:
        cols.extend(data.z.T)
    D = np.column_stack(cols)
    return theta, D, d_tau, d_tau2


def linear_predictor(spec: ModelSpec, params: ParamVector, data: Dataset, h: float):
    """theta_i for every observation."""
    return _parts(spec, params, data, h)[0]


def objective(spec: ModelSpec, params: ParamVector, data: Dataset, h: float) -> float:
    """Smoothed log-likelihood sum(y * theta - b(theta)), dropping the
    parameter-free log c(y) term."""
    theta = linear_predictor(spec, params, data, h)
    terms = data.y * theta - families.cumulant(spec.family, theta)
    if not np.all(np.isfinite(terms)):
        idx = int(np.flatnonzero(~np.isfinite(terms))[0])
        raise NumericError(
            f"non-finite objective contribution at observation {idx}", index=idx
        )
    return float(np.sum(terms))


def score(spec: ModelSpec, params: ParamVector, data: Dataset, h: float) -> np.ndarray:
    """Gradient of the objective, ordered (beta0, beta1, beta2, tau, gamma...)."""
    theta, D, _, _ = _parts(spec, params, data, h)
    resid = data.y - families.mean(spec.family, theta)
    s = D.T @ resid
    if not np.all(np.isfinite(s)):
        raise NumericError("non-finite score")
    return s


def neg_hessian(spec: ModelSpec, params: ParamVector, data: Dataset, h: float) -> np.ndarray:
    """Negated Hessian of the objective.

    Gram part: sum_i b''(theta_i) (dtheta_i)(dtheta_i)^t.  The residual
    part only touches the (beta2, tau) and (tau, tau) entries, the two
    places where theta is nonlinear in the parameters.
    """
    theta, D, d_tau, d_tau2 = _parts(spec, params, data, h)
    w = families.variance(spec.family, theta)
    resid = data.y - families.mean(spec.family, theta)
    J = (D * w[:, None]).T @ D
    J[2, 3] -= float(resid @ d_tau)
    J[3, 2] = J[2, 3]
    J[3, 3] -= float(resid @ (params.beta2 * d_tau2))
    if not np.all(np.isfinite(J)):
        raise NumericError("non-finite negative Hessian")
    return J


def score_covariance(spec: ModelSpec, params: ParamVector, data: Dataset, h: float) -> np.ndarray:
    """Model covariance of the score: the weighted Gram matrix
    sum_i b''(theta_i) (dtheta_i)(dtheta_i)^t, positive semidefinite by
    construction."""
    theta, D, _, _ = _parts(spec, params, data, h)
    w = families.variance(spec.family, theta)
    S = (D * w[:, None]).T @ D
    if not np.all(np.isfinite(S)):
        raise NumericError("non-finite score covariance")
    return S
