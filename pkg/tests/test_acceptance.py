"""End-to-end statistical acceptance checks.

Each test prints one PASS/FAIL line with the measured quantities. Together
they pin the analytic small-sigma limit, the quadrature engine against a
Monte Carlo oracle, the optimizer gradients, frequentist calibration of the
credible intervals (including the GLM failure mode and kernel
misspecification), the joint-shrinkage algebra, and the artifact formatters.
The coverage runs fit hundreds of models and dominate the runtime; master
seeds are pinned so every run is reproducible.
"""

import numpy as np

from dare.cli import SUMMARY_COLUMNS, _csv_text, _summary_rows
from dare.data import DoseResponseSpec, Kernel, ParamVector, default_priors
from dare.inference import SummaryRow
from dare.likelihood import (_log_posterior_parts, _row_arrays,
                             gauss_hermite_rule, interval_infection_prob)
from dare.shrinkage import build_L, projection, select_nu, tilt_posterior
from dare.simulate import SimConfig, run_coverage, simulate_dataset

from test_shrinkage import (toy_fit, two_pathogen_joint, worked_example_columns,
                            worked_example_plan)
from dare.shrinkage import ShrinkagePlan, stack_fits


def note(capsys, line):
    # suspend capture so the one-line verdicts always reach the console
    with capsys.disabled():
        print(line, flush=True)


def test_sigma_zero_limit_matches_cloglog_glm(capsys):
    spec = DoseResponseSpec(kernel=Kernel.EXPONENTIAL)
    rule = gauss_hermite_rule(50)
    worst = 0.0
    for eta in np.linspace(-6.0, 2.0, 33):
        for tau in (1.0, 2.0, 7.0):
            params = ParamVector(beta=(float(eta),),
                                 log_sigma=float(np.log(1e-8)))
            p = interval_infection_prob(spec, params, (1.0,), tau, rule)
            glm = -np.expm1(-tau * np.exp(eta))
            worst = max(worst, abs(p - glm))
    ok = worst < 1e-6
    note(capsys, "%s sigma->0 exponential kernel equals cloglog GLM: max abs err "
         "%.3g over eta in [-6,2] x tau in {1,2,7} (tol 1e-6)"
         % ("PASS" if ok else "FAIL", worst))
    assert ok


def test_quadrature_matches_monte_carlo_oracle(capsys):
    # 50 random points, both kernels, sigma up to 4; the z statistics are
    # dominated by Monte Carlo noise, so the master seed is pinned
    master = 7
    spec_by_kind = {0: DoseResponseSpec(kernel=Kernel.EXPONENTIAL),
                    1: DoseResponseSpec(kernel=Kernel.BETA_POISSON)}
    rule = gauss_hermite_rule(50)
    rng = np.random.default_rng(master)
    worst = 0.0
    for i in range(50):
        kind = i % 2
        eta = rng.uniform(-5.0, 1.5)
        tau = rng.choice([1.0, 2.0, 7.0])
        sigma = rng.uniform(0.1, 4.0)
        theta1 = rng.uniform(0.2, 2.5) if kind else None

        mc_rng = np.random.default_rng(master * 1000 + i)
        s = ss = 0.0
        for _ in range(10):
            z = mc_rng.standard_normal(1_000_000)
            d = tau * np.exp(eta + sigma * z)
            p = -np.expm1(-d) if kind == 0 else -np.expm1(-theta1 * np.log1p(d))
            s += p.sum()
            ss += (p * p).sum()
        n = 10_000_000
        mean = s / n
        se = np.sqrt(max(ss / n - mean**2, 1e-300) / n)

        kw = {} if kind == 0 else {"log_theta1": float(np.log(theta1))}
        params = ParamVector(beta=(float(eta),),
                             log_sigma=float(np.log(sigma)), **kw)
        q = interval_infection_prob(spec_by_kind[kind], params, (1.0,), tau, rule)
        worst = max(worst, abs(q - mean) / se)
    ok = worst < 3.0
    note(capsys, "%s quadrature vs 1e7-draw Monte Carlo: max |z| %.2f over 50 points "
         "(tol 3 se)" % ("PASS" if ok else "FAIL", worst))
    assert ok


def test_gradient_matches_finite_differences(capsys):
    # points are drawn near the data-generating regime: at absurd parameter
    # values the probability clamp makes the objective piecewise flat inside
    # the stencil and central differences stop meaning anything
    ds, _ = simulate_dataset(SimConfig(dgp_kernel=Kernel.BETA_POISSON,
                                       sigma=1.0, theta1=1.0, seed=42))
    X, logtau, y = _row_arrays(ds)
    priors = default_priors(4)
    h = 1e-5
    worst = 0.0
    for kind, seed in ((0, 3), (1, 4)):
        rng = np.random.default_rng(seed)
        dim = 5 + kind
        for _ in range(20):
            u = np.concatenate([rng.normal(-3.5, 0.5, 1),
                                rng.normal(0.0, 0.4, 3),
                                rng.normal(0.0, 0.3, dim - 4)])
            _, g = _log_posterior_parts(u, kind, X, logtau, y, priors, 50, True)
            fd = np.empty(dim)
            for j in range(dim):
                up, um = u.copy(), u.copy()
                up[j] += h
                um[j] -= h
                fp, _ = _log_posterior_parts(up, kind, X, logtau, y, priors, 50, False)
                fm, _ = _log_posterior_parts(um, kind, X, logtau, y, priors, 50, False)
                fd[j] = (fp - fm) / (2 * h)
            # relative error, floored at 1e-3 where components cross zero
            rel = np.abs(g - fd) / np.maximum(np.abs(fd), 1e-3)
            worst = max(worst, float(rel.max()))
    ok = worst < 1e-4
    note(capsys, "%s analytic gradient vs central differences: max rel err %.3g over "
         "20 points x 2 kernels (tol 1e-4)" % ("PASS" if ok else "FAIL", worst))
    assert ok


def _coverage_by_coef(report):
    return {r["coefficient"]: r for r in report.rows}


def test_marginal_model_interval_coverage_is_nominal(capsys):
    cfg = SimConfig(dgp_kernel=Kernel.BETA_POISSON, sigma=1.0, theta1=1.0,
                    seed=20260)
    rows = _coverage_by_coef(run_coverage(cfg, 200, models=("dare",)))
    c2, c3 = rows["beta2"]["coverage"], rows["beta3"]["coverage"]
    ok = 0.90 <= c2 <= 0.99 and 0.90 <= c3 <= 0.99
    note(capsys, "%s marginal-model 95%% interval coverage (200 replicates, "
         "beta-Poisson data, sigma=1): beta2 %.3f, beta3 %.3f "
         "(need [0.90, 0.99])" % ("PASS" if ok else "FAIL", c2, c3))
    assert ok


def test_glm_understates_effects_under_large_heterogeneity(capsys):
    cfg = SimConfig(dgp_kernel=Kernel.BETA_POISSON, sigma=3.0, theta1=1.0,
                    seed=20261)
    rows = _coverage_by_coef(run_coverage(cfg, 200, models=("glm",)))
    c3 = rows["beta3"]["coverage"]
    m3 = rows["beta3"]["mean_estimate"]
    ok = c3 < 0.90 and m3 < 1.0
    note(capsys, "%s GLM under sigma=3 heterogeneity (200 replicates): beta3 coverage "
         "%.3f (need < 0.90), mean estimate %.3f for truth 1.0 (need < 1.0)"
         % ("PASS" if ok else "FAIL", c3, m3))
    assert ok


def test_coverage_robust_to_kernel_misspecification(capsys):
    # exponential data, beta-Poisson fit
    cfg = SimConfig(dgp_kernel=Kernel.EXPONENTIAL, sigma=2.0, seed=20262)
    rows = _coverage_by_coef(run_coverage(cfg, 200, models=("dare",)))
    c2, c3 = rows["beta2"]["coverage"], rows["beta3"]["coverage"]
    ok = c2 >= 0.90 and c3 >= 0.90
    note(capsys, "%s misspecified-kernel coverage (exponential data, beta-Poisson "
         "fit, sigma=2, 200 replicates): beta2 %.3f, beta3 %.3f (need >= 0.90)"
         % ("PASS" if ok else "FAIL", c2, c3))
    assert ok


def test_subspace_algebra_fixture(capsys):
    plan = worked_example_plan()
    L = build_L(plan)
    shape_ok = L.shape == (20, 16)
    pattern_ok = sorted(map(tuple, L.T)) == sorted(map(tuple, worked_example_columns()))
    P = projection(L)
    idem = float(np.max(np.abs(P @ P - P)))

    _, joint = two_pathogen_joint(delta=0.5)
    L2 = build_L(ShrinkagePlan(K=2, J=2, n_dr=0, shrink_sets=((), (1, 2)),
                               pathogen_labels=("a", "b")))
    t0 = tilt_posterior(joint, L2, 0.0)
    ident = float(np.max(np.abs(t0.eta_mode - joint.eta_mode)))
    U = np.eye(6) - projection(L2)
    t_inf = tilt_posterior(joint, L2, 1e8)
    resid = float(np.linalg.norm(U @ t_inf.eta_mode) /
                  np.linalg.norm(joint.eta_mode))
    ok = (shape_ok and pattern_ok and idem < 1e-10 and ident < 1e-10
          and resid < 1e-4)
    note(capsys, "%s subspace algebra: four-pathogen basis 20x16 pattern %s, "
         "||P^2-P||max %.2g (tol 1e-10), nu=0 tilt drift %.2g, residual "
         "off-span fraction at nu=1e8 %.2g (tol 1e-4)"
         % ("PASS" if ok else "FAIL", "exact" if pattern_ok else "WRONG",
            idem, ident, resid))
    assert ok


def test_shrinkage_strength_tracks_coefficient_agreement(capsys):
    plan = ShrinkagePlan(K=2, J=2, n_dr=0, shrink_sets=((), (1, 2)),
                         pathogen_labels=("a", "b"))
    L = build_L(plan)
    wins = 0
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        b = rng.normal(0.8, 0.3)
        sd = rng.uniform(0.08, 0.2)
        i0a, i0b = rng.normal(-4.0, 0.3, 2)
        ls = rng.normal(0.0, 0.2, 2)
        prec = [1 / 0.3**2, 1 / sd**2, 1 / 0.1**2]

        def fits(delta):
            return [toy_fit([i0a, b, ls[0]], prec, theta=False),
                    toy_fit([i0b, b + delta, ls[1]], prec, theta=False)]

        nu_eq, _ = select_nu(stack_fits(fits(0.0), plan), L)
        nu_df, _ = select_nu(stack_fits(fits(3 * sd), plan), L)
        wins += nu_eq > nu_df
    ok = wins >= 16
    note(capsys, "%s selected nu larger for equal shared coefficients than for a "
         "3-posterior-sd split: %d/20 paired seeds (need >= 16)"
         % ("PASS" if ok else "FAIL", wins))
    assert ok


def test_report_formats_reference_rate_ratio_table(capsys):
    # reference numbers exercise the artifact formatters only; the study
    # data behind them is not available, so nothing here is model output
    rate_ratios = (5.3, 4.6, 6.0, 5.0, 5.0)
    incidence_ratios = (3.2, 2.5, 3.3, 2.5, 2.6)
    rows = [SummaryRow(label="exposure_%d" % (i + 1), rate_ratio_point=rr,
                       ci_low=rr * 0.7, ci_high=rr * 1.4,
                       prob_rr_gt_1=0.999, flag="")
            for i, rr in enumerate(rate_ratios)]
    text = _csv_text(SUMMARY_COLUMNS, _summary_rows(rows))
    lines = text.strip().split("\r\n")
    parsed = [float(line.split(",")[1]) for line in lines[1:]]
    rr_ok = parsed == list(rate_ratios)

    inc_text = _csv_text(("horizon_day", "incidence_ratio"),
                         [{"horizon_day": "%d" % (i + 1),
                           "incidence_ratio": "%.17g" % v}
                          for i, v in enumerate(incidence_ratios)])
    inc = [float(line.split(",")[1]) for line in inc_text.strip().split("\r\n")[1:]]
    inc_ok = inc == list(incidence_ratios)

    ok = rr_ok and inc_ok
    note(capsys, "%s artifact formatters round-trip the reference rate ratios "
         "%s and incidence ratios %s exactly"
         % ("PASS" if ok else "FAIL", "/".join("%g" % v for v in rate_ratios),
            "/".join("%g" % v for v in incidence_ratios)))
    assert ok
