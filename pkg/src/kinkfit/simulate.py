"""Monte Carlo harness: generate, fit, and aggregate replications.

A scenario fixes the generating truth (indicator model, not the smoothed
one), the sample size, and the estimation settings.  Replicate r of a
scenario is fully determined by (seed, r), so runs are reproducible
regardless of execution order or worker count.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import families
from .errors import DataError, DomainError, KinkfitError
from .estimator import FitConfig, fit
from .families import Family, parse_family
from .inference import run_inference
from .kernels import parse_bandwidth, parse_kernel
from .model import Dataset, ModelForm, ModelSpec, ParamVector, indicator_segment, parse_form

__all__ = ["SimScenario", "SimReport", "generate", "run", "qq_export", "load_scenario"]

PARAM_BASE = ("beta0", "beta1", "beta2", "tau")


@dataclass(frozen=True)
class SimScenario:
    family: str
    true_params: ParamVector
    n: int
    replications: int
    x_lo: float = -2.0
    x_hi: float = 2.0
    form: str = "linear-linear"
    kernel: str = "normal-cdf"
    bandwidth: str = "n^-2"
    bootstrap_B: int = 0
    seed: int = 0
    level: float = 0.95
    tau_grid: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.replications < 1:
            raise DomainError("replications must be >= 1")
        if not (self.x_lo < self.true_params.tau < self.x_hi):
            raise DomainError("true change point must lie inside the x range")

    def model_spec(self) -> ModelSpec:
        return ModelSpec(
            family=parse_family(self.family),
            kernel=parse_kernel(self.kernel),
            bw=parse_bandwidth(self.bandwidth),
            form=parse_form(self.form),
            n_covariates=len(self.true_params.gamma),
        )

    def fit_config(self) -> FitConfig:
        return FitConfig(tau_grid=self.tau_grid)


@dataclass(frozen=True)
class SimReport:
    scenario: SimScenario
    param_names: tuple[str, ...]
    true: np.ndarray
    mean: np.ndarray
    median: np.ndarray
    sd: np.ndarray | None
    avg_se_prop1: np.ndarray
    avg_se_delta: np.ndarray | None
    coverage_normal_pct: np.ndarray
    coverage_bootstrap_pct: np.ndarray | None
    n_failed_fits: int
    n_converged: int
    degraded: bool
    estimates: np.ndarray  # converged replications x (4+k)

    def table(self) -> str:
        """Human-readable summary table."""
        rows = [("", *self.param_names), ("True", *_fmt(self.true))]
        rows.append(("Mean", *_fmt(self.mean)))
        rows.append(("Median", *_fmt(self.median)))
        if self.sd is not None:
            rows.append(("S.D.", *_fmt(self.sd)))
        rows.append(("Avg s.e. (asymptotic)", *_fmt(self.avg_se_prop1)))
        if self.avg_se_delta is not None:
            rows.append(("Avg s.e. (delta)", *_fmt(self.avg_se_delta)))
        rows.append(("Coverage normal CI (%)", *_fmt(self.coverage_normal_pct, 1)))
        if self.coverage_bootstrap_pct is not None:
            rows.append(("Coverage bootstrap CI (%)", *_fmt(self.coverage_bootstrap_pct, 1)))
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        lines = []
        for r in rows:
            lines.append("  ".join(c.rjust(w) for c, w in zip(r, widths)))
        lines.append(
            f"converged {self.n_converged}, failed {self.n_failed_fits}"
            + ("  [DEGRADED: >5% failed fits]" if self.degraded else "")
        )
        return "\n".join(lines)


def _fmt(vals, nd=4):
    return tuple(f"{v:.{nd}f}" for v in vals)


def _param_names(k: int) -> tuple[str, ...]:
    return PARAM_BASE + tuple(f"gamma{i+1}" for i in range(k))


def generate(scenario: SimScenario, replicate_index: int) -> Dataset:
    """Dataset for one replicate; deterministic in (seed, replicate_index).

    The linear predictor uses the exact indicator segment, not the
    smoothed one: smoothing belongs to estimation, not to the truth.
    """
    rng = np.random.default_rng([scenario.seed, replicate_index])
    tp = scenario.true_params
    x = rng.uniform(scenario.x_lo, scenario.x_hi, scenario.n)
    form = parse_form(scenario.form)
    theta = tp.beta0 + tp.beta1 * x + tp.beta2 * indicator_segment(form, x, tp.tau)
    z = None
    if tp.gamma:
        z = rng.standard_normal((scenario.n, len(tp.gamma)))
        theta = theta + z @ np.asarray(tp.gamma)
    y = families.sample(parse_family(scenario.family), theta, rng)
    return Dataset(x=x, y=y, z=z)


def run(scenario: SimScenario) -> SimReport:
    """Fit every replicate and aggregate.

    Failed fits (exceptions or non-convergence) are excluded from the
    moments and counted; more than 5% of them flags the report degraded.
    """
    spec = scenario.model_spec()
    config = scenario.fit_config()
    truth = scenario.true_params.to_array()
    names = _param_names(len(scenario.true_params.gamma))
    ests, ses, ses_delta, cover, cover_boot = [], [], [], [], []
    failed = 0
    for r in range(scenario.replications):
        data = generate(scenario, r)
        try:
            fr = fit(spec, data, config)
            if not fr.converged:
                raise KinkfitError("non-converged")
            inf = run_inference(
                spec,
                data,
                fr,
                level=scenario.level,
                bootstrap_B=scenario.bootstrap_B,
                seed=[scenario.seed, r, 1],
                config=config,
            )
        except (KinkfitError, np.linalg.LinAlgError):
            failed += 1
            continue
        est = fr.params.to_array()
        ests.append(est)
        ses.append(inf.se_sandwich)
        ses_delta.append(inf.se_delta if inf.se_delta is not None else np.full_like(est, np.nan))
        cover.append((inf.ci_normal[:, 0] <= truth) & (truth <= inf.ci_normal[:, 1]))
        if inf.ci_bootstrap is not None:
            cover_boot.append(
                (inf.ci_bootstrap[:, 0] <= truth) & (truth <= inf.ci_bootstrap[:, 1])
            )
    if not ests:
        raise KinkfitError("every replicate failed to fit")
    E = np.asarray(ests)
    report = SimReport(
        scenario=scenario,
        param_names=names,
        true=truth,
        mean=E.mean(axis=0),
        median=np.median(E, axis=0),
        sd=E.std(axis=0, ddof=1) if E.shape[0] > 1 else None,
        avg_se_prop1=np.asarray(ses).mean(axis=0),
        avg_se_delta=np.nanmean(np.asarray(ses_delta), axis=0),
        coverage_normal_pct=100.0 * np.asarray(cover).mean(axis=0),
        coverage_bootstrap_pct=(
            100.0 * np.asarray(cover_boot).mean(axis=0) if cover_boot else None
        ),
        n_failed_fits=failed,
        n_converged=E.shape[0],
        degraded=failed > 0.05 * scenario.replications,
        estimates=E,
    )
    return report


def qq_export(report: SimReport):
    """Per-parameter (theoretical normal quantile, standardized estimate)
    pairs for external Q-Q plotting.

    Returns a list of (param_name, theoretical, standardized) rows.
    """
    m = report.estimates.shape[0]
    if m < 10:
        raise DataError(f"need at least 10 converged replications, got {m}")
    from scipy.stats import norm

    rows = []
    probs = (np.arange(1, m + 1) - 0.5) / m
    theo = norm.ppf(probs)
    for j, name in enumerate(report.param_names):
        col = report.estimates[:, j]
        sd = col.std(ddof=1)
        if sd == 0:
            raise DataError(f"constant estimates for {name}; cannot standardize")
        std = np.sort((col - col.mean()) / sd)
        rows.extend((name, float(t), float(s)) for t, s in zip(theo, std))
    return rows


_SCENARIO_KEYS = {
    "family": str,
    "form": str,
    "kernel": str,
    "bandwidth": str,
    "n": int,
    "replications": int,
    "x_lo": float,
    "x_hi": float,
    "bootstrap_B": int,
    "seed": int,
    "level": float,
}


def load_scenario(path) -> SimScenario:
    """Parse a flat key = value scenario file.

    Required keys: family, n, replications, beta0, beta1, beta2, tau.
    Optional: form, kernel, bandwidth, x_lo, x_hi, gamma (comma list),
    tau_grid (comma list), bootstrap_B, seed, level, schema_version.
    """
    kv = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"{path}:{lineno}: expected 'key = value'")
            key, val = (part.strip() for part in line.split("=", 1))
            kv[key] = val
    kv.pop("schema_version", None)
    try:
        tp = ParamVector(
            float(kv.pop("beta0")),
            float(kv.pop("beta1")),
            float(kv.pop("beta2")),
            float(kv.pop("tau")),
            tuple(float(g) for g in kv.pop("gamma", "").split(",") if g.strip()),
        )
    except KeyError as exc:
        raise DataError(f"scenario missing required key {exc}") from None
    kwargs = {}
    if "tau_grid" in kv:
        kwargs["tau_grid"] = tuple(float(t) for t in kv.pop("tau_grid").split(","))
    for key, val in kv.items():
        if key not in _SCENARIO_KEYS:
            raise DataError(f"unknown scenario key {key!r}")
        kwargs[key] = _SCENARIO_KEYS[key](val)
    try:
        return SimScenario(true_params=tp, **kwargs)
    except TypeError as exc:
        raise DataError(f"scenario incomplete: {exc}") from None
