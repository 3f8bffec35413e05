"""Soft-failure time distribution under normal use and its quantiles.

A unit fails softly when its conditional mean path ``mu_u(t)`` crosses the
threshold ``y0``.  Across units ``mu_u(t) ~ N(mu(t), sigma_u(t)^2)`` so that
``F_T(t) = Phi(h(t))`` with ``h(t) = (mu(t) - y0) / sigma_u(t)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .designs import ApproximateDesign, c_value, stress_info
from .errors import AmbiguousQuantileError, DegenerateQuantileError, DegenerateVarianceError
from .model import (
    Basis,
    Scenario,
    VarianceParametrization,
    build_time_matrix,
    info_varsigma,
    inverse_marginal_info,
    marginal_info,
)

BISECT_TOL = 1e-12
MAX_DOUBLINGS = 60
MONOTONE_GRID = 2001

OK, AT_ZERO, INFINITE = "ok", "at-zero", "infinite"


@dataclass(frozen=True, eq=False)
class UseConditionProfile:
    """Aggregate path ``mu(t) = delta' f2(t)`` and its spread under normal use."""

    delta: np.ndarray
    sigma_gamma: np.ndarray
    time_basis: Basis
    threshold: float
    f1u: np.ndarray
    parametrization: VarianceParametrization | None = None

    def f2(self, t) -> np.ndarray:
        return self.time_basis.evaluate(np.atleast_1d(np.asarray(t, dtype=float)), check=False)

    def mu(self, t):
        return self.f2(t) @ self.delta

    def dmu(self, t):
        return self.time_basis.derivative(np.atleast_1d(t)) @ self.delta

    def sigma_u_sq(self, t, sigma_gamma=None):
        sg = self.sigma_gamma if sigma_gamma is None else sigma_gamma
        F = self.f2(t)
        return np.einsum("ij,jk,ik->i", F, sg, F)

    def sigma_u(self, t):
        return np.sqrt(np.clip(self.sigma_u_sq(t), 0.0, None))

    def dsigma_u(self, t):
        F, dF = self.f2(t), self.time_basis.derivative(np.atleast_1d(t))
        return np.einsum("ij,jk,ik->i", dF, self.sigma_gamma, F) / self.sigma_u(t)

    @property
    def is_linear(self) -> bool:
        return self.time_basis.kind == "linear"

    def linear_terms(self):
        """``(a, d2, s11, s12, s22)`` with ``a = delta1 - y0`` for the straight-line case."""
        sg = self.sigma_gamma
        return self.delta[0] - self.threshold, self.delta[1], sg[0, 0], sg[0, 1], sg[1, 1]


def use_profile(scenario: Scenario) -> UseConditionProfile:
    """Contract ``beta`` with ``f1(x_u)``: ``delta_s = sum_r f1r(x_u) beta_rs``."""
    f1u = scenario.model.f1(scenario.use_condition, check=False)[0]
    delta = f1u @ scenario.beta_matrix
    return UseConditionProfile(
        delta=delta,
        sigma_gamma=scenario.varcomps.sigma_gamma,
        time_basis=scenario.model.time_basis,
        threshold=float(scenario.threshold),
        f1u=f1u,
        parametrization=scenario.variance_parametrization(),
    )


def h_function(profile: UseConditionProfile, t):
    """``h(t) = (mu(t) - y0) / sigma_u(t)``; scalar in, scalar out."""
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    s = profile.sigma_u(tt)
    if np.any(s <= 0):
        raise DegenerateVarianceError(f"sigma_u vanishes at t = {tt[s <= 0][0]:g}")
    out = (profile.mu(tt) - profile.threshold) / s
    return out if np.ndim(t) else float(out[0])


def failure_cdf(profile: UseConditionProfile, t):
    return stats.norm.cdf(h_function(profile, t))


def h_limit(profile: UseConditionProfile) -> float:
    """``lim_{t -> inf} h(t)``."""
    if profile.is_linear:
        a, d2, s11, s12, s22 = profile.linear_terms()
        if s22 > 0:
            return d2 / math.sqrt(s22)
        if d2 != 0:
            return math.copysign(math.inf, d2)
        return a / math.sqrt(s11)
    # polynomial-type bases: evaluate far out and check that h has settled
    t1, t2 = 2.0**40, 2.0**41
    h1, h2 = h_function(profile, t1), h_function(profile, t2)
    if abs(h2 - h1) <= 1e-6 * max(1.0, abs(h2)):
        return h2
    return math.copysign(math.inf, h2 - h1) if abs(h2) > abs(h1) else h2


def h_sup(profile: UseConditionProfile, t_max: float | None = None) -> float:
    """Supremum of ``h`` over ``t >= 0``."""
    lim = h_limit(profile)
    if profile.is_linear:
        a, d2, s11, s12, s22 = profile.linear_terms()
        cands = [h_function(profile, 0.0), lim]
        slope = d2 * s12 - a * s22
        if slope != 0:
            t_crit = -(d2 * s11 - a * s12) / slope
            if t_crit > 0:
                cands.append(h_function(profile, t_crit))
        return float(max(cands))
    t_max = 1e4 if t_max is None else t_max
    grid = np.concatenate([[0.0], np.geomspace(1e-6, t_max, 20001)])
    return float(max(np.max(h_function(profile, grid)), lim))


def alpha_max(profile: UseConditionProfile) -> float:
    """Largest level with a finite quantile, ``Phi(sup h)``."""
    return float(stats.norm.cdf(h_sup(profile)))


def positive_quantile_condition(profile: UseConditionProfile, alpha: float) -> bool:
    """``t_alpha > 0`` iff ``z_alpha > h(0)``, i.e. ``sigma1 < (y0 - delta1) / -z_alpha`` for small alpha."""
    return bool(stats.norm.ppf(alpha) > h_function(profile, 0.0))


@dataclass(frozen=True, eq=False)
class QuantileResult:
    alpha: float
    z: float
    t_alpha: float
    status: str
    c0: float = math.nan
    gradient_beta: np.ndarray | None = None
    gradient_varsigma: np.ndarray | None = None
    h0: float = math.nan
    h_lim: float = math.nan
    bracket: tuple[float, float] | None = None

    @property
    def degenerate(self) -> bool:
        return self.status != OK

    def require(self) -> "QuantileResult":
        if self.degenerate:
            raise DegenerateQuantileError(
                f"the {self.alpha:g}-quantile is {self.status} (z = {self.z:.6g}, h(0) = {self.h0:.6g}, "
                f"lim h = {self.h_lim:.6g}, alpha_max = {stats.norm.cdf(self.h_lim):.6g})"
            )
        return self


def _linear_root(profile: UseConditionProfile, z: float) -> float:
    a, d2, s11, s12, s22 = profile.linear_terms()
    A = d2**2 - z**2 * s22
    B = 2 * (a * d2 - z**2 * s12)
    C = a**2 - z**2 * s11
    if abs(A) <= 1e-14 * max(1.0, d2**2):
        roots = [-C / B] if B != 0 else []
    else:
        disc = B**2 - 4 * A * C
        # cancellation around a double root (always the case for z = 0)
        if abs(disc) <= 1e-10 * max(B**2, abs(4 * A * C)):
            disc = 0.0
        if disc < 0:
            roots = []
        else:
            sq = math.sqrt(disc)
            # numerically stable pair
            q = -0.5 * (B + math.copysign(sq, B)) if B != 0 else 0.5 * sq
            roots = [q / A, C / q] if q != 0 else [0.0]
    good = []
    for t in roots:
        if not (t > 0 and math.isfinite(t)):
            continue
        s = math.sqrt(s11 + 2 * s12 * t + s22 * t * t)
        # squaring also admits roots of h = -z; screen those out before polishing
        if abs((d2 * t + a) / s - z) > 1e-6 * (1 + abs(z)):
            continue
        for _ in range(3):
            s = math.sqrt(s11 + 2 * s12 * t + s22 * t * t)
            hz = (d2 * t + a) / s
            dh = (d2 - hz * (s12 + s22 * t) / s) / s
            if dh == 0:
                break
            t -= (hz - z) / dh
        s = math.sqrt(s11 + 2 * s12 * t + s22 * t * t)
        hz = (d2 * t + a) / s
        dh = d2 - z * (s12 + s22 * t) / s
        if abs(hz - z) <= 1e-9 * (1 + abs(z)) and dh > 0:
            if not any(abs(t - g) <= 1e-9 * max(1.0, g) for g in good):
                good.append(t)
    if len(good) != 1:
        raise AmbiguousQuantileError(f"found {len(good)} ascending solutions of h(t) = {z:.6g} on (0, inf)")
    return good[0]


def _check_monotone(profile: UseConditionProfile, lo: float, hi: float) -> None:
    if profile.is_linear:
        a, d2, s11, s12, s22 = profile.linear_terms()
        # sign of h'(t) equals the sign of this affine function of t
        g = lambda t: (d2 * s11 - a * s12) + (d2 * s12 - a * s22) * t
        if g(lo) <= 0 or g(hi) <= 0:
            raise AmbiguousQuantileError(f"h is not strictly increasing on the bracket [{lo:.6g}, {hi:.6g}]")
        return
    grid = np.linspace(lo, hi, MONOTONE_GRID)
    if np.any(np.diff(h_function(profile, grid)) <= 0):
        raise AmbiguousQuantileError(f"h is not strictly increasing on the bracket [{lo:.6g}, {hi:.6g}]")


def _bisect(profile: UseConditionProfile, z: float, lo: float, hi: float) -> float:
    flo = h_function(profile, lo) - z
    while hi - lo > BISECT_TOL * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        fm = h_function(profile, mid) - z
        if fm == 0:
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def quantile(profile: UseConditionProfile, alpha: float, with_gradients: bool = True,
             method: str = "analytic") -> QuantileResult:
    """Solve ``h(t_alpha) = z_alpha``.

    Straight-line paths use the closed-form quadratic and pick the ascending
    root.  Other bases bisect on a bracket that doubles from the experimental
    horizon up to ``2^60`` times it.  ``z_alpha <= h(0)`` yields the
    ``at-zero`` marker, an unreachable level the ``infinite`` marker.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    z = 0.0 if alpha == 0.5 else float(stats.norm.ppf(alpha))
    h0 = h_function(profile, 0.0)
    hl = h_limit(profile)
    base = dict(alpha=alpha, z=z, h0=h0, h_lim=hl)
    if z <= h0:
        return QuantileResult(t_alpha=0.0, status=AT_ZERO, **base)

    scale = max(profile.time_basis.upper[0], 1.0)
    hi = scale
    for _ in range(MAX_DOUBLINGS + 1):
        if h_function(profile, hi) > z:
            break
        hi *= 2.0
    else:
        if profile.is_linear and z < hl:
            raise AmbiguousQuantileError("bracket expansion failed below the limit of h")
        return QuantileResult(t_alpha=math.inf, status=INFINITE, **base)

    _check_monotone(profile, 0.0, hi)
    t = _linear_root(profile, z) if profile.is_linear else _bisect(profile, z, 0.0, hi)
    res = QuantileResult(t_alpha=t, status=OK, bracket=(0.0, hi), **base)
    if not with_gradients:
        return res
    c0 = 1.0 / (profile.dmu(t)[0] - z * profile.dsigma_u(t)[0])
    grad_beta = np.kron(profile.f1u, profile.f2(t)[0])
    grad_vs = None
    if profile.parametrization is not None:
        grad_vs = gradient_varsigma(profile, alpha, profile.parametrization, t_alpha=t, z=z, method=method)
    return QuantileResult(t_alpha=t, status=OK, bracket=(0.0, hi), c0=c0, gradient_beta=grad_beta,
                          gradient_varsigma=grad_vs, **base)


def gradient_varsigma(profile: UseConditionProfile, alpha: float, parametrization: VarianceParametrization,
                      t_alpha: float | None = None, z: float | None = None, method: str = "analytic") -> np.ndarray:
    """``c_varsigma = -z_alpha d sigma_u(t_alpha) / d varsigma``.

    ``method="fd"`` differentiates ``sigma_u`` itself by central differences
    (relative step ``1e-5``), independently of the analytic derivative maps.
    """
    if z is None:
        z = 0.0 if alpha == 0.5 else float(stats.norm.ppf(alpha))
    if t_alpha is None:
        t_alpha = quantile(profile, alpha, with_gradients=False).require().t_alpha
    q = parametrization.size
    if z == 0.0:
        return np.zeros(q)
    f = profile.f2(t_alpha)[0]
    if method == "fd":
        vals = parametrization.values
        out = np.empty(q)
        for a in range(q):
            h = max(1e-5 * abs(vals[a]), 1e-8)
            up, dn = vals.copy(), vals.copy()
            up[a] += h
            dn[a] -= h
            s_up = math.sqrt(f @ parametrization.build(up).sigma_gamma @ f)
            s_dn = math.sqrt(f @ parametrization.build(dn).sigma_gamma @ f)
            out[a] = (s_up - s_dn) / (2 * h)
        return -z * out
    s = math.sqrt(f @ profile.sigma_gamma @ f)
    derivs = parametrization.derivatives(method=method)
    return -z * np.array([f @ dsg @ f / (2 * s) for dsg, _ in derivs])


def h_table(profile: UseConditionProfile, times) -> np.ndarray:
    """Columns ``t, h(t), F_T(t)`` for plotting."""
    t = np.asarray(times, dtype=float)
    h = h_function(profile, t)
    return np.column_stack([t, h, stats.norm.cdf(h)])


# ---------------------------------------------------------------------------
# Asymptotic variance
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AvarBreakdown:
    value: float
    beta_term: float
    varsigma_term: float
    c0: float
    stress_factor: float
    time_factor: float
    t_alpha: float
    feasible: bool


def _time_plan_points(scenario: Scenario, time_plan) -> np.ndarray:
    if time_plan is None:
        return scenario.fixed_time_plan()
    if isinstance(time_plan, ApproximateDesign):
        return time_plan.support[:, 0]
    return np.asarray(time_plan, dtype=float).ravel()


def avar_breakdown(scenario: Scenario, stress_design: ApproximateDesign, time_plan=None, alpha: float | None = None,
                   n: int | None = None, method: str = "factorized") -> AvarBreakdown:
    """Standardized asymptotic variance of the quantile estimator, with its parts.

    ``c0^2 (c_beta' M_beta^-1 c_beta + c_vs' M_vs^-1 c_vs)`` with per-unit
    information; pass ``n`` to divide by the number of units.  ``method``
    selects the Kronecker-factorized or the dense evaluation of the first term.
    """
    alpha = scenario.alpha if alpha is None else alpha
    prof = use_profile(scenario)
    qr = quantile(prof, alpha).require()
    times = _time_plan_points(scenario, time_plan)
    F2 = build_time_matrix(times, scenario.model.time_basis)
    M1 = stress_info(stress_design, scenario.model)
    c1 = prof.f1u
    f2t = prof.f2(qr.t_alpha)[0]

    stress_factor = c_value(M1, c1)
    M2inv = inverse_marginal_info(F2, scenario.varcomps)
    time_factor = float(f2t @ M2inv @ f2t)
    if method == "factorized":
        beta_term = stress_factor * time_factor
    elif method == "dense":
        M = np.kron(M1, marginal_info(F2, scenario.varcomps))
        beta_term = c_value(M, qr.gradient_beta)
    else:
        raise ValueError(f"unknown method {method!r}")

    if qr.z == 0.0:
        vs_term = 0.0
    else:
        Mvs = info_varsigma(F2, prof.parametrization, n=1)
        vs_term = c_value(Mvs, qr.gradient_varsigma)
    total = qr.c0**2 * (beta_term + vs_term)
    if n is not None:
        total /= n
    return AvarBreakdown(value=total, beta_term=beta_term, varsigma_term=vs_term, c0=qr.c0,
                         stress_factor=stress_factor, time_factor=time_factor, t_alpha=qr.t_alpha,
                         feasible=math.isfinite(total))


def avar_quantile(scenario: Scenario, stress_design: ApproximateDesign, time_plan=None, alpha: float | None = None,
                  n: int | None = None, method: str = "factorized") -> float:
    """``aVar(t_alpha_hat)``; ``inf`` when the design cannot estimate the quantile."""
    return avar_breakdown(scenario, stress_design, time_plan, alpha, n, method).value
