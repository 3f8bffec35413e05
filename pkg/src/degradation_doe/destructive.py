"""Cross-sectional plans for destructive testing: one measurement per unit.

With a single observation at time ``t`` a unit contributes variance
``sigma^2(t) = f2(t)' Sigma_gamma f2(t) + sigma_eps^2``.  The information of
a product design ``xi kron tau`` is ``M1(xi) kron M2~(tau)`` where ``M2~``
uses the weighted regression ``f2(t) / sigma(t)``, so the median-optimal
plan is the product of the stress optimum and the weighted time optimum.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .designs import (
    ApproximateDesign,
    CriterionReport,
    DesignReport,
    c_value,
    information_matrix,
    product_design,
    uniform_grid_design,
    uniform_vertex_design,
)
from .errors import DegenerateVarianceError, DomainError
from .failure_time import quantile, use_profile
from .model import Basis, ProductModel, Scenario, VarianceComponents
from .stress_design import elfving_solve, optimal_stress_for_quantile, verify_c_optimality

TIME_GRID = 1001
CERT_STRESS_GRID = 21
CERT_TIME_GRID = 101
N_PROBES = 50


@dataclass(frozen=True, eq=False)
class WeightedTimeModel:
    """Variance function ``sigma^2(t)`` and weighted regression ``f2(t) / sigma(t)``."""

    time_basis: Basis
    sigma_gamma: np.ndarray
    eps_var: float

    @classmethod
    def from_scenario(cls, scenario: Scenario) -> "WeightedTimeModel":
        vc = scenario.varcomps
        if not vc.homoscedastic:
            raise DomainError("destructive testing needs a scalar error variance")
        return cls(scenario.model.time_basis, vc.sigma_gamma, vc.eps_var)

    def variance(self, t) -> np.ndarray:
        F = self.time_basis.evaluate(np.atleast_1d(np.asarray(t, dtype=float)), check=False)
        v = np.einsum("ij,jk,ik->i", F, self.sigma_gamma, F) + self.eps_var
        if np.any(v <= 0):
            raise DegenerateVarianceError("measurement variance sigma^2(t) must be positive")
        return v

    def sigma(self, t) -> np.ndarray:
        return np.sqrt(self.variance(t))

    def __call__(self, points) -> np.ndarray:
        """Weighted regression rows ``f2(t) / sigma(t)``."""
        t = np.asarray(points, dtype=float).reshape(-1)
        return self.time_basis.evaluate(t) / self.sigma(t)[:, None]

    @property
    def lower(self) -> float:
        return self.time_basis.lower[0]

    @property
    def upper(self) -> float:
        return self.time_basis.upper[0]

    def info(self, tau: ApproximateDesign) -> np.ndarray:
        return information_matrix(tau, self)

    def criterion(self, tau: ApproximateDesign, t_half: float) -> float:
        """``f2(t_half)' M2~(tau)^- f2(t_half)``."""
        return c_value(self.info(tau), self.time_basis.at(t_half))


def sigma_ratio(varcomps: VarianceComponents, time_basis: Basis) -> float:
    """``sigma(t_max) / sigma(t_min)`` of single measurements at the ends of the time region."""
    if not varcomps.homoscedastic:
        raise DomainError("sigma_ratio needs a scalar error variance")
    wtm = WeightedTimeModel(time_basis, varcomps.sigma_gamma, varcomps.eps_var)
    s = wtm.sigma([wtm.lower, wtm.upper])
    return float(s[1] / s[0])


def pi_star(t_half: float, sigma0: float, sigma1: float) -> float:
    """Optimal weight at ``t = 1`` for extrapolation to ``t_half > 1`` on ``[0, 1]``."""
    if not t_half > 1:
        raise DomainError(f"t_half = {t_half:g} lies inside the time region; solve the weighted Elfving LP instead")
    if not (sigma0 > 0 and sigma1 > 0):
        raise DegenerateVarianceError("sigma(0) and sigma(1) must be positive")
    return t_half * sigma1 / (t_half * sigma1 + (t_half - 1) * sigma0)


def two_point_time_design(pi: float, lower: float = 0.0, upper: float = 1.0) -> ApproximateDesign:
    return ApproximateDesign.from_weights(np.array([lower, upper]), np.array([1.0 - pi, pi]))


def weighted_time_design(wtm: WeightedTimeModel, t_half: float, grid: int = TIME_GRID,
                         method: str = "auto") -> ApproximateDesign:
    """c-optimal design for extrapolation at ``t_half`` in the weighted time model.

    ``method="auto"`` uses the closed form for straight lines on ``[0, 1]``
    when ``t_half > 1`` and the Elfving LP otherwise.
    """
    closed_ok = wtm.time_basis.kind == "linear" and wtm.lower == 0.0 and wtm.upper == 1.0 and t_half > 1
    if method == "closed" or (method == "auto" and closed_ok):
        if not closed_ok:
            raise DomainError("closed form needs straight lines on [0, 1] and t_half > 1")
        s0, s1 = wtm.sigma([0.0, 1.0])
        return two_point_time_design(pi_star(t_half, s0, s1))
    cand = np.linspace(wtm.lower, wtm.upper, grid)
    return elfving_solve(wtm, cand, wtm.time_basis.at(t_half)).design


def combined_regressor(model: ProductModel, wtm: WeightedTimeModel):
    """``(x, t) -> f1(x) kron f2(t) / sigma(t)`` on ``(n, d + 1)`` arrays."""
    d = model.stress_dim

    def fn(points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        A = model.f1(pts[:, :d])
        B = wtm(pts[:, d])
        return np.einsum("ni,nj->nij", A, B).reshape(pts.shape[0], -1)

    return fn


def combined_grid(model: ProductModel, stress_points: int = CERT_STRESS_GRID, time_points: int = CERT_TIME_GRID):
    xs = model.stress_grid(stress_points)
    tb = model.time_basis
    ts = np.linspace(tb.lower[0], tb.upper[0], time_points)
    return np.hstack([np.repeat(xs, ts.size, axis=0), np.tile(ts, xs.shape[0])[:, None]])


def destructive_optimal_design(scenario: Scenario, grid: int = 101, time_grid: int = TIME_GRID,
                               certify: bool = True, benchmark: bool = True) -> DesignReport:
    """Median-optimal design ``xi* kron tau*`` for one measurement per unit."""
    model = scenario.model
    t_half = quantile(use_profile(scenario), 0.5, with_gradients=False).require().t_alpha
    wtm = WeightedTimeModel.from_scenario(scenario)
    xi = optimal_stress_for_quantile(scenario.replace(alpha=0.5), grid, benchmark=False, certify=False).design
    tau = weighted_time_design(wtm, t_half, time_grid)
    zeta = product_design(xi, tau)
    c1 = model.f1(scenario.use_condition, check=False)[0]
    c2 = model.time_basis.at(t_half)
    c = np.kron(c1, c2)
    fn = combined_regressor(model, wtm)
    phi = c_value(information_matrix(zeta, fn), c)
    gap = verify_c_optimality(zeta, fn, combined_grid(model), c) if certify else math.nan
    crit = CriterionReport(criterion_value=phi, certificate_gap=gap)
    s0, s1 = wtm.sigma([wtm.lower, wtm.upper])
    extra = {"t_half": t_half, "sigma0": float(s0), "sigma1": float(s1), "sigma_ratio": float(s1 / s0),
             "stress_design": [[p, w] for p, w in xi.to_rows()], "time_design": [[p, w] for p, w in tau.to_rows()]}
    if tau.size == 2:
        extra["pi_star"] = float(tau.weight_at([wtm.upper]))
    if benchmark:
        tb = model.time_basis
        benches = {
            "xi*_x_uniform2": product_design(xi, uniform_grid_design(2, tb.lower[0], tb.upper[0])),
            "xi*_x_uniform6": product_design(xi, uniform_grid_design(6, tb.lower[0], tb.upper[0])),
            "uniform_vertices_x_uniform2": product_design(uniform_vertex_design(model),
                                                          uniform_grid_design(2, tb.lower[0], tb.upper[0])),
        }
        for name, d in benches.items():
            v = c_value(information_matrix(d, fn), c)
            crit.benchmark_values[name] = v
            crit.benchmark_efficiencies[name] = phi / v if math.isfinite(v) else 0.0
    notes = ["product of the stress c-optimum and the weighted time c-optimum; variance parameters held at nominal"]
    return DesignReport(kind="destructive", design=zeta, variables=model.stress_variables + tuple(model.time_basis.variables),
                        criterion=crit, notes=notes, extra=extra)


def destructive_info(zeta: ApproximateDesign, scenario: Scenario) -> np.ndarray:
    """Standardized information ``sum eta f1 f1' kron f2~ f2~'`` of a combined design."""
    return information_matrix(zeta, combined_regressor(scenario.model, WeightedTimeModel.from_scenario(scenario)))


def destructive_efficiency(zeta: ApproximateDesign, scenario: Scenario, optimum: ApproximateDesign | None = None) -> float:
    t_half = quantile(use_profile(scenario), 0.5, with_gradients=False).require().t_alpha
    if optimum is None:
        optimum = destructive_optimal_design(scenario, certify=False, benchmark=False).design
    c = np.kron(scenario.model.f1(scenario.use_condition, check=False)[0], scenario.model.time_basis.at(t_half))
    fn = combined_regressor(scenario.model, WeightedTimeModel.from_scenario(scenario))
    v = c_value(information_matrix(zeta, fn), c)
    return c_value(information_matrix(optimum, fn), c) / v if math.isfinite(v) else 0.0


# ---------------------------------------------------------------------------
# Sensitivity analysis (straight-line paths on [0, 1])
# ---------------------------------------------------------------------------


@dataclass
class SensitivityCurve:
    parameter: str
    probe: np.ndarray
    eff_optimal: np.ndarray
    eff_uniform2: np.ndarray
    eff_uniform6: np.ndarray
    pi_probe: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["probe_value", "eff_optimal", "eff_uniform2", "eff_uniform6"])
        for row in zip(self.probe, self.eff_optimal, self.eff_uniform2, self.eff_uniform6):
            w.writerow([f"{v:.12g}" for v in row])
        return buf.getvalue()


def _time_eff(tau: ApproximateDesign, t_half: float, sigma_fn) -> float:
    """c-efficiency in the weighted time model with ``sigma(t)`` given by ``sigma_fn``."""
    t = tau.support[:, 0]
    s = sigma_fn(t)
    if np.any(~np.isfinite(s)):
        return math.nan
    F = np.column_stack([np.ones_like(t), t]) / s[:, None]
    M = (F * tau.weights[:, None]).T @ F
    c = np.array([1.0, t_half])
    s0, s1 = sigma_fn(np.array([0.0, 1.0]))
    opt = two_point_time_design(pi_star(t_half, s0, s1))
    Fo = np.array([[1.0, 0.0], [1.0, 1.0]]) / np.array([s0, s1])[:, None]
    Mo = (Fo * opt.weights[:, None]).T @ Fo if opt.size == 2 else None
    if Mo is None:
        return math.nan
    return c_value(Mo, c) / c_value(M, c)


def _check_straight(scenario: Scenario):
    tb = scenario.model.time_basis
    if tb.kind != "linear" or tb.lower[0] != 0.0 or tb.upper[0] != 1.0:
        raise DomainError("sensitivity curves are tabulated for straight-line paths on [0, 1]")


def sensitivity_curves(scenario: Scenario, t_half_range=None, ratio_range=None, n_probes: int = N_PROBES):
    """Efficiency of ``xi* kron tau`` under misspecified ``t_half`` or ``sigma(1)/sigma(0)``.

    Compared plans: the nominal optimum ``tau*``, the two-point uniform plan
    and the six-point uniform plan.  Along the ratio path ``sigma2^2`` is
    tied to ``sigma1^2 + sigma_eps^2`` and ``rho`` solved from the ratio;
    probes needing ``|rho| > 1`` leave the six-point efficiency undefined (nan).
    Returns the ``t_half`` curve and the ratio curve.
    """
    _check_straight(scenario)
    wtm = WeightedTimeModel.from_scenario(scenario)
    t_nom = quantile(use_profile(scenario), 0.5, with_gradients=False).require().t_alpha
    s0, s1 = (float(v) for v in wtm.sigma([0.0, 1.0]))
    tau_nom = two_point_time_design(pi_star(t_nom, s0, s1))
    u2, u6 = uniform_grid_design(2), uniform_grid_design(6)
    t_probe = np.geomspace(1.01, 100.0, n_probes) if t_half_range is None else np.asarray(t_half_range, dtype=float)
    r_probe = np.geomspace(0.1, 10.0, n_probes) if ratio_range is None else np.asarray(ratio_range, dtype=float)
    if np.any(t_probe <= 1) or np.any(r_probe <= 0):
        raise DomainError("t_half probes must exceed 1 and ratio probes must be positive")

    rows = [[_time_eff(d, t, wtm.sigma) for d in (tau_nom, u2, u6)] for t in t_probe]
    arr = np.array(rows)
    t_curve = SensitivityCurve("t_half", t_probe, arr[:, 0], arr[:, 1], arr[:, 2],
                               np.array([pi_star(t, s0, s1) for t in t_probe]))

    sg = scenario.varcomps.sigma_gamma
    v1 = sg[0, 0]
    ve = wtm.eps_var
    v2 = v1 + ve
    base0 = math.sqrt(v1 + ve)

    def sigma_path(r):
        rho = (r**2 * (v1 + ve) - v1 - v2 - ve) / (2 * math.sqrt(v1 * v2)) if v1 > 0 else math.nan
        if not (v1 > 0 and abs(rho) <= 1):
            def endpoints_only(t):
                t = np.asarray(t, dtype=float)
                out = np.full(t.shape, np.nan)
                out[t == 0.0] = base0
                out[t == 1.0] = r * base0
                return out
            return endpoints_only
        cov = rho * math.sqrt(v1 * v2)

        def sig(t):
            t = np.asarray(t, dtype=float)
            return np.sqrt(v1 + 2 * cov * t + v2 * t**2 + ve)
        return sig

    rows = []
    for r in r_probe:
        fn = sigma_path(r)
        rows.append([_time_eff(d, t_nom, fn) for d in (tau_nom, u2, u6)])
    arr = np.array(rows)
    r_curve = SensitivityCurve("sigma_ratio", r_probe, arr[:, 0], arr[:, 1], arr[:, 2],
                               np.array([pi_star(t_nom, 1.0, r) for r in r_probe]))
    return t_curve, r_curve


def pi_star_curves(scenario: Scenario, t_half_range=None, ratio_range=None, n_probes: int = N_PROBES):
    """``pi*`` against ``t_half`` (ratio at nominal) and against the ratio (``t_half`` at nominal)."""
    _check_straight(scenario)
    wtm = WeightedTimeModel.from_scenario(scenario)
    t_nom = quantile(use_profile(scenario), 0.5, with_gradients=False).require().t_alpha
    s0, s1 = (float(v) for v in wtm.sigma([0.0, 1.0]))
    t_probe = np.geomspace(1.01, 100.0, n_probes) if t_half_range is None else np.asarray(t_half_range, dtype=float)
    r_probe = np.geomspace(0.1, 10.0, n_probes) if ratio_range is None else np.asarray(ratio_range, dtype=float)
    by_t = np.column_stack([t_probe, [pi_star(t, s0, s1) for t in t_probe]])
    by_r = np.column_stack([r_probe, [pi_star(t_nom, 1.0, r) for r in r_probe]])
    return by_t, by_r
