"""Reproduction and verification gate.

One test per acceptance criterion; each prints a single PASS/FAIL line
(run with `pytest tests/test_acceptance.py -v -s` to see them as they
complete).  The two simulation studies are shared module-scoped fixtures.
The full gate takes several minutes on one core; the bootstrap coverage
study dominates.
"""
import pathlib
from dataclasses import replace

import numpy as np
import pytest

from kinkfit.errors import KinkfitError
from kinkfit.estimator import fit, fit_beta_given_tau, glm_irls
from kinkfit.families import Family
from kinkfit.inference import sandwich_cov
from kinkfit.kernels import custom_kernel, exp_cdf_kernel, kernel_order, normal_cdf_kernel, validate
from kinkfit.model import ParamVector, indicator_segment, objective, score
from kinkfit.simulate import SimScenario, load_scenario, run

from conftest import make_case_control_like, make_data, make_spec
from test_model import fd_neg_hessian, fd_score, rand_instance

SCENARIOS = pathlib.Path(__file__).resolve().parent.parent / "scenarios"

NORMAL_STUDY_SD = np.array([0.074, 0.076, 0.208, 0.039])
LOGIT_STUDY_SD = np.array([0.282, 0.333, 0.647, 0.146])


def report(name, checks):
    """checks: list of (label, ok, detail); prints one line, asserts all."""
    failed = [f"{label}: {detail}" for label, ok, detail in checks if not ok]
    status = "PASS" if not failed else "FAIL"
    print(f"\n[{status}] {name}")
    assert not failed, f"{name}: " + "; ".join(failed)


@pytest.fixture(scope="module")
def normal_study():
    return run(load_scenario(SCENARIOS / "table1.scenario"))


@pytest.fixture(scope="module")
def logit_study():
    sc = load_scenario(SCENARIOS / "table2.scenario")
    return run(replace(sc, replications=300))


def reproduction_checks(rep, ref_sd, cov_lo, cov_hi):
    reps = rep.estimates.shape[0]
    tol = 3.0 * ref_sd / np.sqrt(reps)
    checks = []
    for i, name in enumerate(rep.param_names):
        bias = rep.mean[i] - rep.true[i]
        checks.append((f"mean({name})", abs(bias) < tol[i],
                       f"bias {bias:+.4f} vs tol {tol[i]:.4f}"))
    for i, name in enumerate(rep.param_names):
        ratio = rep.sd[i] / ref_sd[i]
        checks.append((f"sd({name})", abs(ratio - 1.0) < 0.15,
                       f"ratio {ratio:.3f}"))
    for i, name in enumerate(rep.param_names):
        cov = rep.coverage_normal_pct[i]
        checks.append((f"coverage({name})", cov_lo <= cov <= cov_hi,
                       f"{cov:.1f}% vs [{cov_lo}, {cov_hi}]"))
    checks.append(("failure rate acceptable", not rep.degraded,
                   f"{rep.n_failed_fits} of {reps + rep.n_failed_fits} failed"))
    return checks


def test_criterion_1_normal_study_reproduction(normal_study):
    report("criterion 1: normal/identity study (n=500, 1000 reps)",
           reproduction_checks(normal_study, NORMAL_STUDY_SD, 92.0, 97.0))


def test_criterion_2_logit_study_reproduction(logit_study):
    # Joint smoothed-likelihood estimation under the logit model carries a
    # genuine finite-sample bias in the slope coefficients (a small share
    # of replicates has its global optimum far from the bend, dragging the
    # means).  The beta2 mean check fails for that reason at any seed; see
    # the decisions ledger for the supporting analysis.
    report("criterion 2: logit study (n=500, 300 reps)",
           reproduction_checks(logit_study, LOGIT_STUDY_SD, 91.0, 98.0))


def test_criterion_3_se_methods_track_empirical_sd(normal_study, logit_study):
    checks = []
    for label, rep in (("normal", normal_study), ("logit", logit_study)):
        sd_tau = rep.sd[3]
        for method, avg in (("asymptotic", rep.avg_se_prop1[3]),
                            ("delta", rep.avg_se_delta[3])):
            ratio = avg / sd_tau
            checks.append((f"{label} {method} se(tau)",
                           abs(ratio - 1.0) < 0.20,
                           f"avg {avg:.4f} / sd {sd_tau:.4f} = {ratio:.3f}"))
    report("criterion 3: se methods vs empirical sd of tau", checks)


def test_criterion_4_bootstrap_coverage():
    sc = load_scenario(SCENARIOS / "table1.scenario")
    rep = run(replace(sc, replications=200, bootstrap_B=300, seed=31))
    checks = [("failure rate acceptable", not rep.degraded,
               f"{rep.n_failed_fits} failed")]
    for i, name in enumerate(rep.param_names):
        cov = rep.coverage_bootstrap_pct[i]
        checks.append((f"coverage({name})", 89.0 <= cov <= 98.0,
                       f"{cov:.1f}% vs [89, 98]"))
    report("criterion 4: stratified bootstrap coverage (200 x B=300)", checks)


def test_criterion_5_derivative_oracles():
    forms = ["linear-linear", "linear-quadratic", "quadratic-linear"]
    families = [Family.NORMAL_IDENTITY, Family.BERNOULLI_LOGIT, Family.POISSON_LOG]
    hs = [0.2, 0.05, 0.02]
    worst_s, worst_j = 0.0, 0.0
    for i in range(50):
        spec, params, data, h = rand_instance(
            100 + i, form=forms[i % 3], family=families[(i // 3) % 3],
            k=i % 2, h=hs[i % len(hs)])
        s = score(spec, params, data, h)
        fs = fd_score(spec, params, data, h)
        worst_s = max(worst_s, np.max(np.abs(s - fs)) / max(1.0, np.max(np.abs(fs))))
        from kinkfit.model import neg_hessian
        J = neg_hessian(spec, params, data, h)
        fj = fd_neg_hessian(spec, params, data, h)
        worst_j = max(worst_j, np.max(np.abs(J - fj)) / max(1.0, np.max(np.abs(fj))))
    report("criterion 5: analytic derivatives vs finite differences (50 instances)", [
        ("score", worst_s < 1e-5, f"worst rel err {worst_s:.2e}"),
        ("neg hessian", worst_j < 1e-4, f"worst rel err {worst_j:.2e}"),
    ])


def test_criterion_6_indicator_limit_oracle():
    from kinkfit.families import cumulant
    families = [Family.NORMAL_IDENTITY, Family.BERNOULLI_LOGIT, Family.POISSON_LOG]
    worst_beta, worst_gap = 0.0, 0.0
    for i in range(20):
        family = families[i % 3]
        spec0 = make_spec(family=family, bandwidth="n^-2")
        mild = ParamVector(0.3, 0.5, -0.8, 0.5)
        data = make_data(spec0, params=mild, n=120, seed=300 + i)
        h = 1e-8 * (data.x.max() - data.x.min())
        spec = make_spec(family=family, bandwidth=f"fixed:{h}")
        xs = np.sort(data.x)
        j = np.searchsorted(xs, 0.4 + 0.01 * i)
        tau = 0.5 * (xs[j - 1] + xs[j])  # gap midpoint, no x within the window
        beta_s = fit_beta_given_tau(spec, data, tau, h)
        X = np.column_stack([np.ones(data.n), data.x,
                             indicator_segment(spec.form, data.x, tau)])
        beta_h, _ = glm_irls(family, X, data.y)
        worst_beta = max(worst_beta, np.max(np.abs(beta_s - beta_h)))
        params = ParamVector(beta_h[0], beta_h[1], beta_h[2], tau)
        q = objective(spec, params, data, h)
        theta = X @ beta_h
        ln = float(np.sum(data.y * theta - cumulant(family, theta)))
        worst_gap = max(worst_gap, abs(q - ln) / data.n)
    report("criterion 6: smoothed objective vs hard-indicator GLM (20 instances)", [
        ("coefficients", worst_beta < 1e-6, f"worst abs diff {worst_beta:.2e}"),
        ("objective gap", worst_gap < 1e-8, f"worst (1/n)|Q - l| {worst_gap:.2e}"),
    ])


def test_criterion_7_kernel_validation():
    normal = normal_cdf_kernel()
    expk = exp_cdf_kernel()
    cauchy = custom_kernel(
        k=lambda u: 0.5 + np.arctan(u) / np.pi,
        kp=lambda u: 1.0 / (np.pi * (1.0 + u**2)),
        kpp=lambda u: -2.0 * u / (np.pi * (1.0 + u**2) ** 2),
        name="cauchy-cdf",
    )
    rep_c = validate(cauchy)
    report("criterion 7: kernel regularity and order", [
        ("normal-cdf passes", validate(normal).passed, ""),
        ("normal-cdf order", kernel_order(normal) == 2,
         f"order {kernel_order(normal)}"),
        ("exp-cdf passes", validate(expk).passed, ""),
        ("exp-cdf order", kernel_order(expk) == 1, f"order {kernel_order(expk)}"),
        ("cauchy tail fails condition (a)", not rep_c.tail_first and not rep_c.passed,
         f"tail value {rep_c.checks['tail_first_value']:.2e}"),
    ])


def test_criterion_8_consistency_trend():
    tp = ParamVector(2.0, 3.0, -5.0, 0.5)
    errs = {}
    for n, seed in ((500, 41), (2000, 42)):
        sc = SimScenario(family="normal", true_params=tp, n=n,
                         replications=200, seed=seed)
        rep = run(sc)
        errs[n] = float(np.mean(np.abs(rep.estimates[:, 3] - 0.5)))
    report("criterion 8: change-point error shrinks with n", [
        ("mean |tau_hat - tau|", errs[2000] < errs[500],
         f"n=2000: {errs[2000]:.4f} vs n=500: {errs[500]:.4f}"),
    ])


def test_criterion_9_case_control_self_consistency():
    spec = make_spec(family=Family.BERNOULLI_LOGIT, form="quadratic-linear",
                     bandwidth="n^-3", n_covariates=3)
    covered = 0
    usable = 0
    for seed in range(100):
        data = make_case_control_like(seed)
        try:
            res = fit(spec, data)
            if not res.converged:
                continue
            se = float(np.sqrt(sandwich_cov(res)[3, 3]))
        except (KinkfitError, np.linalg.LinAlgError):
            continue
        usable += 1
        if abs(res.params.tau - 13.1) <= 3.0 * se:
            covered += 1
    report("criterion 9: bend recovery on case-control-like data (n=771, 100 seeds)", [
        ("tau within 3 se on >= 90 seeds", covered >= 90,
         f"{covered}/100 covered, {usable}/100 usable fits"),
    ])
