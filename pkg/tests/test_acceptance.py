"""Acceptance criteria, one PASS/FAIL line each.

Run with ``pytest -v tests/test_acceptance.py`` or directly with
``python3 tests/test_acceptance.py`` (add ``--fast`` to skip the Monte Carlo
criterion).  Each criterion returns ``(ok, detail)``; the pytest wrappers
print the line and then assert.
"""
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))
import oracles as O  # noqa: E402
from degradation_doe.designs import (  # noqa: E402
    ApproximateDesign,
    c_criterion,
    c_value,
    continuous_uniform_info,
    exact_settings,
    uniform_efficiency_closed,
    uniform_grid_design,
    uniform_vertex_design,
)
from degradation_doe.destructive import destructive_optimal_design, sigma_ratio  # noqa: E402
from degradation_doe.estimation import SimulationSpec, validate_avar  # noqa: E402
from degradation_doe.failure_time import (  # noqa: E402
    alpha_max,
    gradient_varsigma,
    h_function,
    h_limit,
    quantile,
    use_profile,
)
from degradation_doe.model import (  # noqa: E402
    ProductModel,
    Scenario,
    VarianceComponents,
    build_stress_matrix,
    build_time_matrix,
    info_beta,
    inverse_marginal_info,
    linear_basis,
    response_covariance,
    sd_corr_parametrization,
)
from degradation_doe.scenario_io import load_scenario  # noqa: E402
from degradation_doe.stress_design import (  # noqa: E402
    elfving_solve,
    extrapolation_two_point,
    extrapolation_weight,
    optimal_stress_for_quantile,
)
from degradation_doe.time_design import TimeGrid, optimal_time_plan  # noqa: E402

SCEN = Path(__file__).resolve().parent.parent / "scenarios"
LB = linear_basis("x")


def _scen(name):
    return load_scenario(SCEN / f"{name}.json")


def _close(a, b, tol):
    return abs(a - b) <= tol + 1e-12


def _rel(a, b, tol):
    return abs(a - b) <= tol * abs(b)


# ---------------------------------------------------------------------------
# criteria
# ---------------------------------------------------------------------------


def crit_stress_weights():
    shown = {-0.056: 0.05, -0.4: 0.22, -0.5: 0.25, -1.0: 0.33}
    got = {xu: extrapolation_weight(xu) for xu in shown}
    bad = [xu for xu in shown if round(got[xu], 2) != shown[xu]]
    return not bad, "w* = " + ", ".join(f"{got[x]:.4f}" for x in shown) + (f"; mismatch at {bad}" if bad else "")


TABLE3_XU = [0.0, -0.056, -0.4, -0.5, -1.0, -math.inf]
TABLE3 = {
    2: [0.50, 0.55, 0.76, 0.80, 0.90, 1.00],
    3: [0.40, 0.43, 0.55, 0.57, 0.62, 0.67],
    4: [0.36, 0.38, 0.47, 0.49, 0.52, 0.56],
    5: [0.33, 0.36, 0.43, 0.44, 0.47, 0.50],
    math.inf: [0.25, 0.26, 0.30, 0.31, 0.32, 0.33],
}


def _numeric_uniform_eff(m, xu):
    xu = -1e6 if math.isinf(xu) else xu
    c = LB.at(xu)
    opt = c_criterion(extrapolation_two_point(xu) if xu < 0 else ApproximateDesign([0.0], [1.0]), LB, c)
    M = continuous_uniform_info(LB) if math.isinf(m) else None
    val = c_value(M, c) if M is not None else c_criterion(uniform_grid_design(m), LB, c)
    return opt / val


def crit_table3():
    worst_c = worst_n = 0.0
    bad = []
    for m, row in TABLE3.items():
        for xu, shown in zip(TABLE3_XU, row):
            closed = uniform_efficiency_closed(m, xu)
            numeric = _numeric_uniform_eff(m, xu)
            worst_c = max(worst_c, abs(closed - shown))
            worst_n = max(worst_n, abs(numeric - shown))
            if not (_close(closed, shown, 0.005) and _close(numeric, shown, 0.005)):
                bad.append((m, xu, round(closed, 4), round(numeric, 4), shown))
    n = sum(len(r) for r in TABLE3.values())
    return not bad, f"{n} entries, max |closed - shown| = {worst_c:.4f}, max |numeric - shown| = {worst_n:.4f}" + (
        f"; mismatches {bad}" if bad else "")


EX2_PRODUCT = {(0, 0): 0.58, (0, 1): 0.17, (1, 0): 0.19, (1, 1): 0.06}
EX2_EIGHT = dict(zip([(0, 0, 0), (0, 0, 1), (0, 1, 0), (0, 1, 1), (1, 0, 0), (1, 0, 1), (1, 1, 0), (1, 1, 1)],
                     [0.25, 0.33, 0.07, 0.10, 0.09, 0.11, 0.02, 0.03]))


def crit_example2_weights():
    ex2 = _scen("example2")
    d = optimal_stress_for_quantile(ex2).design
    z = destructive_optimal_design(ex2).design
    bad = []
    for p, shown in EX2_PRODUCT.items():
        if not _close(d.weight_at(p), shown, 0.005):
            bad.append(("xi", p, round(d.weight_at(p), 4), shown))
    for p, shown in EX2_EIGHT.items():
        if not _close(z.weight_at(p), shown, 0.005):
            bad.append(("zeta", p, round(z.weight_at(p), 4), shown))
    got = " ".join(f"{z.weight_at(p):.4f}" for p in EX2_EIGHT)
    return not bad, f"xi* = {[round(d.weight_at(p), 4) for p in EX2_PRODUCT]}, zeta* = {got}" + (
        f"; outside +-0.005: {bad}" if bad else "")


def crit_example3():
    ex3 = _scen("example3")
    rep = optimal_stress_for_quantile(ex3, grid=101)
    basis = ex3.model.stress_bases[0]
    c = ex3.model.f1(ex3.use_condition, check=False)[0]
    phi_opt = rep.criterion.criterion_value
    phi_bar = c_criterion(uniform_vertex_design(ex3.model), ex3.model, c)
    closed = (1 + 2 * max(abs(v) for v in ex3.use_condition)) ** 2
    lp = elfving_solve(basis, basis.grid(101), c).criterion
    eff = phi_opt / phi_bar
    ok = (_close(phi_opt, 4.00, 0.01) and _close(phi_bar, 8.24, 0.01) and _close(eff, 0.49, 0.01)
          and _rel(lp, closed, 1e-6))
    return ok, f"Phi(xi*) = {phi_opt:.6f}, Phi(xi_bar) = {phi_bar:.4f}, eff = {eff:.4f}, LP/closed - 1 = {lp / closed - 1:.2e}"


def crit_failure_time():
    p1, p2 = use_profile(_scen("example1")), use_profile(_scen("example2"))
    q1, q2 = quantile(p1, 0.5), quantile(p2, 0.5)
    vals = {
        "t.5 ex1": (q1.t_alpha, 1.583), "t.5 ex2": (q2.t_alpha, 10.25),
        "h(0) ex1": (float(h_function(p1, 0.0)), -14.03), "h(0) ex2": (float(h_function(p2, 0.0)), -15.83),
        "h_lim ex1": (h_limit(p1), 9.67), "h_lim ex2": (h_limit(p2), 1.54),
        "alpha_max ex2": (alpha_max(p2), 0.939),
    }
    bad = [k for k, (a, b) in vals.items() if not _rel(a, b, 0.01)]
    return not bad, ", ".join(f"{k} = {a:.5g}" for k, (a, _) in vals.items()) + (f"; outside 1%: {bad}" if bad else "")


def crit_time_plan():
    res = optimal_time_plan(_scen("example2"), TimeGrid(0.05, 6))
    w = np.array(res.extra["grid_weights"])
    t = np.round(np.array(res.extra["grid_points"]), 10)
    full = np.abs(w - 1 / 6) <= 1e-9
    partial = (w > 1e-9) & ~full
    full_ok = np.allclose(t[full], [0, 0.05, 0.9, 0.95, 1.0])
    # interior of the zero band lies strictly between the two partial points
    part_t = t[partial]
    zero_ok = bool(np.all(w[(t > 0.1 + 1e-9) & (t < 0.85 - 1e-9)] <= 1e-9))
    part_ok = set(np.round(part_t, 2)) <= {0.1, 0.85}
    tau0 = np.array(res.extra["tau0"])
    tau0_ok = np.allclose(tau0, [0, 0.05, 0.1, 0.9, 0.95, 1.0])
    eff = res.criterion.benchmark_efficiencies["tau0"]
    ok = full_ok and zero_ok and part_ok and tau0_ok and 0.972 <= eff <= 1.0
    return ok, (f"full at {t[full].tolist()}, partial {dict(zip(part_t.tolist(), np.round(w[partial], 4).tolist()))}, "
                f"tau0 = {tau0.tolist()}, eff(tau0) = {eff:.4f}, gap = {res.criterion.certificate_gap:.1e}")


def crit_destructive():
    ex1, ex2 = _scen("example1"), _scen("example2")
    p1 = destructive_optimal_design(ex1).extra["pi_star"]
    p2 = destructive_optimal_design(ex2).extra["pi_star"]
    r = sigma_ratio(ex1.varcomps, ex1.model.time_basis)
    ok = _close(p1, 0.77, 0.01) and _close(p2, 0.57, 0.01) and _close(r, 1.22, 0.01)
    return ok, f"pi* = {p1:.4f} (ex1), {p2:.4f} (ex2), sigma(1)/sigma(0) = {r:.4f}"


def _straight(d1, d2, s1, s2, rho, se, y0):
    m = ProductModel((linear_basis("x"),), linear_basis("t"))
    return Scenario(m, [d1, d2, 0.0, 0.0], VarianceComponents.from_sd_corr(s1, s2, rho, se), [0.0], y0,
                    parametrization=sd_corr_parametrization(s1, s2, rho, se))


def crit_properties():
    rng = np.random.default_rng(2024)
    # variance lemma on random instances
    lemma = 0.0
    for _ in range(500):
        k = int(rng.integers(2, 9))
        times = np.sort(rng.uniform(0, 1, k))
        F2 = build_time_matrix(times, linear_basis("t"))
        A = rng.standard_normal((2, 2))
        vc = VarianceComponents(A @ A.T + 0.01 * np.eye(2), eps_var=float(rng.uniform(0.01, 2)))
        V = response_covariance(F2, vc)
        lhs = np.linalg.inv(F2.T @ np.linalg.solve(V, F2))
        rhs = inverse_marginal_info(F2, vc)
        lemma = max(lemma, float(np.max(np.abs(lhs - rhs)) / max(1.0, np.max(np.abs(lhs)))))
    # Kronecker against dense unit-by-unit information
    kron = 0.0
    times = np.linspace(0, 1, 7)
    F2 = build_time_matrix(times, linear_basis("t"))
    for _ in range(20):
        xs = rng.uniform(0, 1, 5)
        s1, s2, rho, se = rng.uniform(0.1, 1), rng.uniform(0.1, 1), rng.uniform(-0.8, 0.8), rng.uniform(0.05, 1)
        Sg = O.sigma_gamma_sd(s1, s2, rho)
        vc = VarianceComponents(Sg, eps_var=se**2)
        F1 = build_stress_matrix(xs, ProductModel((linear_basis("x"),), linear_basis("t")))
        M = info_beta(F1, F2, response_covariance(F2, vc)) / len(xs)
        D = O.dense_beta_information(O.f_straight(xs), times, Sg, se)
        kron = max(kron, float(np.max(np.abs(M - D)) / np.max(np.abs(D))))
    # quantile round trip and analytic gradient against finite differences
    rt = grad = 0.0
    n_checked = 0
    for _ in range(200):
        d1, d2 = rng.uniform(-1, 1), rng.uniform(0.5, 3)
        s1, s2, rho, se = rng.uniform(0.1, 1), rng.uniform(0.05, 0.8), rng.uniform(-0.3, 0.9), rng.uniform(0.05, 0.5)
        y0 = d1 + rng.uniform(1, 5)
        alpha = float(rng.uniform(0.05, 0.95))
        sc = _straight(d1, d2, s1, s2, rho, se, y0)
        prof = use_profile(sc)
        try:
            q = quantile(prof, alpha)
        except Exception:
            continue
        if q.degenerate:
            continue
        n_checked += 1
        rt = max(rt, abs(float(h_function(prof, q.t_alpha)) - q.z))
        g = gradient_varsigma(prof, alpha, sc.parametrization)
        Sg = O.sigma_gamma_sd(s1, s2, rho)
        h = 1e-6
        fd = []
        th = np.array([s1, s2, rho])
        for a in range(3):
            e = np.zeros(3)
            e[a] = h
            up = O.quantile_brentq(d1, d2, O.sigma_gamma_sd(*(th + e)), y0, alpha)
            dn = O.quantile_brentq(d1, d2, O.sigma_gamma_sd(*(th - e)), y0, alpha)
            fd.append((up - dn) / (2 * h))
        # c_varsigma is -z d sigma_u / d varsigma; implicit differentiation of
        # d1 + d2 t - y0 - z sigma_u(t) = 0 gives dt/dvarsigma = -c_varsigma / G_t
        t = q.t_alpha
        s_u = math.sqrt(Sg[0, 0] + 2 * Sg[0, 1] * t + Sg[1, 1] * t * t)
        G_t = d2 - q.z * (Sg[0, 1] + Sg[1, 1] * t) / s_u
        dt = -np.asarray(g)[:3] / G_t
        grad = max(grad, float(np.max(np.abs(dt - fd)) / max(1.0, np.max(np.abs(fd)))))
    # certificates on every returned optimum of the worked examples
    ex1, ex2, ex3 = _scen("example1"), _scen("example2"), _scen("example3")
    gaps = [optimal_stress_for_quantile(s).criterion.certificate_gap for s in (ex1, ex2, ex3)]
    gaps += [destructive_optimal_design(s).criterion.certificate_gap for s in (ex1, ex2)]
    gaps.append(optimal_time_plan(ex2, TimeGrid(0.05, 6)).criterion.certificate_gap)
    cert = max(gaps)
    ok = lemma < 1e-9 and kron < 1e-10 and rt < 1e-9 and grad < 1e-6 and cert <= 1e-6 and n_checked >= 100
    return ok, (f"lemma {lemma:.1e} (500), kronecker {kron:.1e}, round trip {rt:.1e}, "
                f"gradient {grad:.1e} ({n_checked} cases), max certificate gap {cert:.1e}")


def crit_monte_carlo(reps=2000, n=200, seed=1, workers=4):
    ex1 = _scen("example1")
    times = ex1.fixed_time_plan()
    xi = optimal_stress_for_quantile(ex1).design
    r1 = validate_avar(SimulationSpec(ex1, exact_settings(xi, n), times, reps, seed), 0.5, workers=workers)
    r2 = validate_avar(SimulationSpec(ex1, exact_settings(uniform_grid_design(2), n), times, reps, seed), 0.5,
                       workers=workers)
    ok = 0.85 <= r1.ratio <= 1.15 and r1.empirical_variance <= r2.empirical_variance and not r1.flagged
    return ok, (f"n Var / aVar = {r1.ratio:.4f} (95% CI {r1.ratio_ci[0]:.3f}-{r1.ratio_ci[1]:.3f}), "
                f"Var xi* = {r1.empirical_variance:.3e} vs xi_2 = {r2.empirical_variance:.3e}, "
                f"degenerate {r1.degenerate_count}")


CRITERIA = [
    (1, "closed-form stress weights", crit_stress_weights, 1.0),
    (2, "uniform design efficiency table", crit_table3, 1.0),
    (3, "example 2 product and destructive weights", crit_example2_weights, 1.0),
    (4, "example 3 additive model", crit_example3, 5.0),
    (5, "failure-time quantities", crit_failure_time, 1.0),
    (6, "time plan pattern and efficiency", crit_time_plan, 10.0),
    (7, "destructive pi*", crit_destructive, 1.0),
    (8, "property checks", crit_properties, 60.0),
    (9, "Monte Carlo validation", crit_monte_carlo, 300.0),
]


def run_criterion(num):
    _, name, fn, limit = CRITERIA[num - 1]
    t0 = time.perf_counter()
    ok, detail = fn()
    dt = time.perf_counter() - t0
    ok = ok and dt < limit
    line = f"{'PASS' if ok else 'FAIL'} criterion {num}: {name} [{dt:.2f}s < {limit:g}s] {detail}"
    return ok, line


# ---------------------------------------------------------------------------
# pytest wrappers
# ---------------------------------------------------------------------------


def _check(num, capsys):
    ok, line = run_criterion(num)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


@pytest.mark.parametrize("num", range(1, 9))
def test_criterion(num, capsys):
    _check(num, capsys)


@pytest.mark.slow
def test_criterion_9_monte_carlo(capsys):
    _check(9, capsys)


if __name__ == "__main__":
    fast = "--fast" in sys.argv
    results = [run_criterion(c[0]) for c in CRITERIA if not (fast and c[0] == 9)]
    for _, line in results:
        print(line)
    sys.exit(0 if all(ok for ok, _ in results) else 1)
