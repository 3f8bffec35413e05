"""Repeated-measurement time plans on a grid with at most one measurement per time.

The plan is an approximate design on ``{0, dt, ..., 1}`` whose weights are
capped at ``1/k``.  For uncorrelated homoscedastic errors the asymptotic
variance of the median estimator depends on the plan only through the
extrapolation criterion ``f2(t_half)' M2(tau)^-1 f2(t_half)`` of the fixed
effects time model, so the optimum does not involve ``Sigma_gamma``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .designs import ApproximateDesign, CriterionReport, DesignReport, c_value
from .errors import DomainError, InfeasibleError, SingularInformationError
from .failure_time import quantile, use_profile
from .model import Basis, Scenario, spd_inverse

GAP_TOL = 1e-6
MAX_ITER = 100_000
PRUNE = 1e-6
FULL_REL = 1e-3


@dataclass(frozen=True)
class TimeGrid:
    """Grid ``{lower + j dt}`` with ``k`` measurements per unit and weight cap ``1/k``."""

    delta_t: float
    k: int
    lower: float = 0.0
    upper: float = 1.0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be positive")
        if not self.delta_t > 0:
            raise ValueError("delta_t must be positive")
        J = self.J
        if abs(J * self.delta_t - (self.upper - self.lower)) > 1e-12:
            raise DomainError(f"delta_t = {self.delta_t} does not divide the interval [{self.lower}, {self.upper}]")
        if self.cap * (J + 1) < 1 - 1e-12:
            raise InfeasibleError(f"k = {self.k} exceeds the number of grid points {J + 1}")

    @property
    def J(self) -> int:
        return int(round((self.upper - self.lower) / self.delta_t))

    @property
    def cap(self) -> float:
        return 1.0 / self.k

    @property
    def points(self) -> np.ndarray:
        return self.lower + self.delta_t * np.arange(self.J + 1)


@dataclass
class ConstrainedResult:
    weights: np.ndarray
    criterion: float
    gap: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)


def _project_cap(w: np.ndarray, cap: float) -> np.ndarray:
    """Clip to ``cap`` and spread the excess proportionally over unclipped points."""
    w = w.copy()
    clipped = np.zeros(w.size, dtype=bool)
    for _ in range(w.size):
        over = (w > cap) & ~clipped
        if not over.any():
            break
        clipped |= over
        w[clipped] = cap
        free = ~clipped
        rest = 1.0 - cap * clipped.sum()
        s = w[free].sum()
        if s <= 0:
            w[free] = rest / max(free.sum(), 1)
        else:
            w[free] *= rest / s
    return w


def _greedy_gap(d: np.ndarray, phi: float, cap: float) -> float:
    """Relative Frank-Wolfe gap over the capped simplex: fill the cap at the largest ``d``."""
    order = np.argsort(-d, kind="stable")
    full = int(math.floor(1.0 / cap + 1e-12))
    top = cap * d[order[:full]].sum()
    rest = 1.0 - cap * full
    if rest > 1e-15 and full < d.size:
        top += rest * d[order[full]]
    return top / phi - 1.0


def constrained_c_optimal(F: np.ndarray, c, cap: float, tol: float = GAP_TOL, max_iter: int = MAX_ITER,
                          w0=None, keep_history: bool = False) -> ConstrainedResult:
    """Multiplicative algorithm for ``min c' M(w)^-1 c`` subject to ``0 <= w <= cap``.

    Each step multiplies ``w_j`` by ``|f_j' M^-1 c|`` (square root of the
    directional derivative), renormalizes and projects onto the cap.  Stops
    when the constrained equivalence gap falls below ``tol``.
    """
    F = np.asarray(F, dtype=float)
    c = np.asarray(c, dtype=float)
    N = F.shape[0]
    if cap * N < 1 - 1e-12:
        raise InfeasibleError("cap times number of candidates is below 1")
    w = np.full(N, 1.0 / N) if w0 is None else np.asarray(w0, dtype=float).copy()
    w = _project_cap(w / w.sum(), cap)
    history = []
    gap, phi = math.inf, math.inf
    it = 0
    for it in range(1, max_iter + 1):
        M = (F * w[:, None]).T @ F
        try:
            g = spd_inverse(M, "time information") @ c
        except SingularInformationError:
            raise InfeasibleError("time plan information became singular") from None
        phi = float(c @ g)
        d = (F @ g) ** 2
        if keep_history:
            history.append(phi)
        gap = _greedy_gap(d, phi, cap)
        if gap < tol:
            break
        w = w * np.sqrt(d)
        w = _project_cap(w / w.sum(), cap)
    return ConstrainedResult(weights=w, criterion=phi, gap=gap, iterations=it, converged=gap < tol, history=history)


def _prune(w: np.ndarray, cap: float, threshold: float = PRUNE) -> np.ndarray:
    """Zero out crumbs and give their mass back to the uncapped positive points."""
    w = np.where(w < threshold, 0.0, w)
    lost = 1.0 - w.sum()
    free = (w > 0) & (w < cap * (1 - 1e-12))
    if lost > 0 and free.any():
        w[free] += lost * w[free] / w[free].sum()
    return _project_cap(w / w.sum(), cap)


def fixed_effects_info(tau: ApproximateDesign, basis: Basis) -> np.ndarray:
    """Standardized time information ``sum_j pi_j f2(t_j) f2(t_j)'`` (fixed effects, unit error variance)."""
    F = basis.evaluate(tau.support[:, 0])
    return (F * tau.weights[:, None]).T @ F


def mixed_time_info_inverse(tau: ApproximateDesign, scenario: Scenario, k: int) -> np.ndarray:
    """``M2(tau)^-1`` in the mixed model: ``((k / s_eps^2) sum pi f f')^-1 + Sigma_gamma``."""
    vc = scenario.varcomps
    if not vc.homoscedastic:
        raise DomainError("the weighted time-plan information needs homoscedastic errors")
    M0 = (k / vc.eps_var) * fixed_effects_info(tau, scenario.model.time_basis)
    return spd_inverse(M0, "time information") + vc.sigma_gamma


def mixed_time_criterion(tau: ApproximateDesign, scenario: Scenario, k: int, t_half: float | None = None) -> float:
    if t_half is None:
        t_half = quantile(use_profile(scenario), 0.5, with_gradients=False).require().t_alpha
    f = scenario.model.time_basis.at(t_half)
    return float(f @ mixed_time_info_inverse(tau, scenario, k) @ f)


def implied_k(tau: ApproximateDesign) -> int:
    return int(round(1.0 / tau.weights.max()))


def time_plan_efficiency(tau0: ApproximateDesign, tau_star: ApproximateDesign, scenario: Scenario,
                         k: int | None = None) -> float:
    """``Phi(tau_star) / Phi(tau0)`` for extrapolation at the median in the mixed time model.

    ``tau_star`` is optimal only up to its convergence gap, so the better of
    the two criterion values serves as reference and the ratio never exceeds 1.
    """
    k = implied_k(tau0) if k is None else k
    t_half = quantile(use_profile(scenario), 0.5, with_gradients=False).require().t_alpha
    phi_star = mixed_time_criterion(tau_star, scenario, k, t_half)
    phi0 = mixed_time_criterion(tau0, scenario, k, t_half)
    return min(phi_star, phi0) / phi0


def adjust_to_exact_plan(tau_star: ApproximateDesign, grid: TimeGrid) -> ApproximateDesign:
    """Round a capped plan to ``k`` distinct times with weight ``1/k`` each.

    Points at (numerically) full cap are kept; the remaining slots go to the
    heaviest partial points, ties broken toward the earlier time.
    """
    k, cap = grid.k, grid.cap
    t = tau_star.support[:, 0]
    w = tau_star.weights
    full = w >= cap * (1 - FULL_REL)
    if full.sum() > k:
        raise InfeasibleError(f"{int(full.sum())} points are at full cap but only k = {k} measurements exist")
    chosen = list(np.flatnonzero(full))
    partial = sorted(np.flatnonzero(~full), key=lambda i: (-w[i], t[i]))
    need = k - len(chosen)
    if need > len(partial):
        raise InfeasibleError(f"plan has only {len(chosen) + len(partial)} support points, k = {k}")
    chosen += partial[:need]
    times = np.sort(t[chosen])
    return ApproximateDesign(times, np.full(k, 1.0 / k))


def contiguous_zero_band(weights: np.ndarray) -> bool:
    """Zero weights form one contiguous block strictly inside the grid (or are absent)."""
    zero = np.flatnonzero(np.asarray(weights) <= 0)
    if zero.size == 0:
        return True
    return bool(zero[0] > 0 and zero[-1] < len(weights) - 1 and np.all(np.diff(zero) == 1))


def optimal_time_plan(scenario: Scenario, grid: TimeGrid, tol: float = GAP_TOL, max_iter: int = MAX_ITER,
                      keep_history: bool = False) -> DesignReport:
    """Capped c-optimal time plan for extrapolation at the median failure time.

    The report's design is ``tau*``; ``extra`` carries the full grid weight
    profile, the adjusted exact plan ``tau0`` and its efficiency.
    """
    basis = scenario.model.time_basis
    if not scenario.varcomps.homoscedastic:
        raise DomainError("optimal_time_plan assumes uncorrelated homoscedastic errors")
    if grid.k < basis.dimension:
        raise InfeasibleError(f"k = {grid.k} is below the number of time parameters {basis.dimension}")
    t_half = quantile(use_profile(scenario), 0.5, with_gradients=False).require().t_alpha
    c = basis.at(t_half)
    pts = grid.points
    F = basis.evaluate(pts)
    res = constrained_c_optimal(F, c, grid.cap, tol=tol, max_iter=max_iter, keep_history=keep_history)
    w = _prune(res.weights, grid.cap)
    tau = ApproximateDesign.from_weights(pts, w)
    flags, notes = [], ["optimal plan does not depend on Sigma_gamma or on the error variance"]
    if not res.converged:
        flags.append("not converged")
        notes.append(f"stopped after {res.iterations} iterations with gap {res.gap:.3g}")
    phi_fixed = c_value(fixed_effects_info(tau, basis), c)
    M = (F * w[:, None]).T @ F
    g = np.linalg.solve(M, c)
    gap = _greedy_gap((F @ g) ** 2, float(c @ g), grid.cap)
    tau0 = adjust_to_exact_plan(tau, grid)
    crit_mixed = mixed_time_criterion(tau, scenario, grid.k, t_half)
    crit0 = mixed_time_criterion(tau0, scenario, grid.k, t_half)
    # tau* is optimal only up to the gap; the exact plan may beat it by that margin
    best = min(crit_mixed, crit0)
    crit = CriterionReport(
        criterion_value=phi_fixed,
        certificate_gap=gap,
        benchmark_values={"tau0_mixed": crit0, "tau_star_mixed": crit_mixed},
        benchmark_efficiencies={"tau0": best / crit0},
    )
    uniform = ApproximateDesign(np.linspace(grid.lower, grid.upper, grid.k), np.full(grid.k, 1.0 / grid.k))
    if grid.k >= 2:
        cu = mixed_time_criterion(uniform, scenario, grid.k, t_half)
        crit.benchmark_values[f"uniform_{grid.k}_mixed"] = cu
        crit.benchmark_efficiencies[f"uniform_{grid.k}"] = best / cu
    extra = {
        "t_half": t_half,
        "delta_t": grid.delta_t,
        "k": grid.k,
        "cap": grid.cap,
        "iterations": res.iterations,
        "grid_points": pts.tolist(),
        "grid_weights": w.tolist(),
        "tau0": [float(x) for x in tau0.support[:, 0]],
        "eff_tau0": best / crit0,
        "eff_tau0_raw": crit_mixed / crit0,
    }
    if keep_history:
        extra["history"] = res.history
    return DesignReport(kind="time", design=tau, variables=tuple(basis.variables), criterion=crit,
                        flags=flags, notes=notes, extra=extra)
