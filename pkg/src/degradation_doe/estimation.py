"""Monte Carlo check of the asymptotic variance of quantile estimators.

Degradation paths are drawn from the mixed model, ``theta`` is re-estimated
by maximum likelihood (GLS for ``beta`` profiled into a derivative-free
search over the variance parameters) and the spread of the plug-in
quantile is compared with ``c' M_theta^-1 c / n``.
"""
from __future__ import annotations

import csv
import io
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize, stats

from .designs import ApproximateDesign, _sig
from .errors import DesignError
from .failure_time import avar_quantile, quantile, use_profile
from .model import (
    ExactPlan,
    Scenario,
    VarianceParametrization,
    build_stress_matrix,
    build_time_matrix,
    gls_estimate,
)

MAX_EVALS = 2000
DEGENERATE_LIMIT = 0.01


@dataclass(frozen=True, eq=False)
class SimulationSpec:
    scenario: Scenario
    settings: np.ndarray
    times: np.ndarray
    replications: int = 1
    base_seed: int = 0

    def __post_init__(self):
        s = np.asarray(self.settings, dtype=float)
        if s.ndim == 1:
            s = s.reshape(-1, 1)
        object.__setattr__(self, "settings", s)
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float).ravel())
        if self.replications < 1:
            raise ValueError("replications must be at least 1")

    @property
    def n_units(self) -> int:
        return self.settings.shape[0]

    @property
    def plan(self) -> ExactPlan:
        return ExactPlan(self.settings, self.times)

    def stress_design(self) -> ApproximateDesign:
        """Empirical (approximate) design of the unit settings."""
        pts, counts = np.unique(self.settings, axis=0, return_counts=True)
        return ApproximateDesign(pts, counts / counts.sum())


def _psd_factor(S: np.ndarray) -> np.ndarray:
    """``L`` with ``L L' = S`` for symmetric non-negative definite ``S``."""
    w, Q = np.linalg.eigh(0.5 * (S + S.T))
    return Q * np.sqrt(np.clip(w, 0.0, None))


def replication_rng(base_seed: int, r: int) -> np.random.Generator:
    """Independent stream for replication ``r``."""
    return np.random.default_rng([int(base_seed), int(r)])


def simulate_replication(spec: SimulationSpec, r: int) -> np.ndarray:
    sc = spec.scenario
    F1 = build_stress_matrix(spec.settings, sc.model)
    F2 = build_time_matrix(spec.times, sc.model.time_basis)
    n, k = F1.shape[0], F2.shape[0]
    rng = replication_rng(spec.base_seed, r)
    gamma = rng.standard_normal((n, sc.model.p2)) @ _psd_factor(sc.varcomps.sigma_gamma).T
    eps = rng.standard_normal((n, k)) @ _psd_factor(sc.varcomps.error_matrix(k)).T
    return F1 @ sc.beta_matrix @ F2.T + gamma @ F2.T + eps


def simulate_paths(spec: SimulationSpec) -> np.ndarray:
    """Observations of shape ``(replications, n, k)``; replication ``r`` uses stream ``(base_seed, r)``."""
    return np.stack([simulate_replication(spec, r) for r in range(spec.replications)])


# ---------------------------------------------------------------------------
# Maximum likelihood
# ---------------------------------------------------------------------------


@dataclass
class MLFit:
    beta: np.ndarray
    varsigma: np.ndarray
    loglik: float
    loglik_init: float
    n_evals: int
    converged: bool
    parametrization: VarianceParametrization | None = None
    flags: list = field(default_factory=list)

    @property
    def varcomps(self):
        return self.parametrization.components(self.varsigma)


def _profile_loglik(Y, F1, F2, vc, S=None):
    """Log-likelihood with ``beta`` at its GLS value for the covariance ``vc``."""
    n, k = Y.shape
    V = F2 @ vc.sigma_gamma @ F2.T + vc.error_matrix(k)
    try:
        cf = linalg.cho_factor(V, lower=True)
    except linalg.LinAlgError:
        return -math.inf, None
    if S is None:
        beta = gls_estimate(Y, F1, F2, V)
        R = Y - F1 @ beta.reshape(F1.shape[1], F2.shape[1]) @ F2.T
        S = R.T @ R
    else:
        beta = None
    logdet = 2.0 * np.sum(np.log(np.diag(cf[0])))
    quad = np.trace(linalg.cho_solve(cf, S))
    return float(-0.5 * n * k * math.log(2 * math.pi) - 0.5 * n * logdet - 0.5 * quad), beta


def fit_ml(observations, F1: np.ndarray, F2: np.ndarray, parametrization: VarianceParametrization,
           init=None, max_evals: int = MAX_EVALS, fit_variance: bool = True) -> MLFit:
    """Maximum likelihood for ``(beta, varsigma)`` from one data set ``(n, k)``.

    ``beta`` is profiled out in closed form.  With scalar error variance it
    does not depend on ``varsigma`` at all, so the residual cross-product is
    computed once.  Variance parameters are searched by Nelder-Mead on
    unconstrained scales (log for standard deviations, atanh for
    correlations) within ``max_evals`` evaluations.  The returned likelihood
    is never below the value at ``init``.
    """
    Y = np.asarray(observations, dtype=float)
    F1, F2 = np.atleast_2d(F1), np.atleast_2d(F2)
    n, k = Y.shape
    if n != F1.shape[0] or k != F2.shape[0]:
        raise DesignError("observation shape does not match the design matrices")
    init = parametrization.values if init is None else np.asarray(init, dtype=float)
    vc0 = parametrization.components(init)
    S = None
    if vc0.homoscedastic:
        Vi = np.eye(k)
        beta_hat = gls_estimate(Y, F1, F2, Vi)
        R = Y - F1 @ beta_hat.reshape(F1.shape[1], F2.shape[1]) @ F2.T
        S = R.T @ R
    ll0, b0 = _profile_loglik(Y, F1, F2, vc0, S)
    if S is None:
        beta_hat = b0
    if not fit_variance or parametrization.size == 0:
        return MLFit(beta_hat, init, ll0, ll0, 1, True, parametrization)

    count = [0]

    def negll(u):
        count[0] += 1
        vals = parametrization.from_unconstrained(u)
        try:
            vc = parametrization.components(vals)
        except (ValueError, DesignError):
            return math.inf
        ll, _ = _profile_loglik(Y, F1, F2, vc, S)
        return -ll if math.isfinite(ll) else math.inf

    u0 = parametrization.to_unconstrained(init)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = optimize.minimize(negll, u0, method="Nelder-Mead",
                                options=dict(maxfev=max_evals, xatol=1e-8, fatol=1e-10, adaptive=True))
    flags = []
    converged = bool(res.success)
    if not converged:
        flags.append("evaluation budget exhausted")
    vals = parametrization.from_unconstrained(res.x)
    ll = -float(res.fun)
    if not (ll >= ll0):
        vals, ll = init.copy(), ll0
        flags.append("kept initial values")
    if S is None:
        _, beta_hat = _profile_loglik(Y, F1, F2, parametrization.components(vals))
    return MLFit(beta_hat, vals, ll, ll0, count[0], converged, parametrization, flags)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass
class ValidationReport:
    alpha: float
    n_units: int
    replications: int
    estimates: np.ndarray
    empirical_variance: float
    scaled_variance: float
    avar: float
    ratio: float
    ratio_ci: tuple[float, float]
    degenerate_count: int
    degenerate_rate: float
    flagged: bool
    warnings: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "n_units": self.n_units,
            "replications": self.replications,
            "mean_estimate": float(np.nanmean(self.estimates)) if np.isfinite(self.estimates).any() else math.nan,
            "empirical_variance": self.empirical_variance,
            "n_times_variance": self.scaled_variance,
            "avar_standardized": self.avar,
            "ratio": self.ratio,
            "ratio_ci95": list(self.ratio_ci),
            "degenerate_count": self.degenerate_count,
            "degenerate_rate": self.degenerate_rate,
            "flagged": self.flagged,
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(_sig(self.as_dict()), indent=2, sort_keys=True)

    def estimates_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["replication", "t_alpha_hat"])
        for r, t in enumerate(self.estimates):
            w.writerow([r, f"{t:.12g}"])
        return buf.getvalue()


def _fsum_var(x: np.ndarray) -> float:
    m = math.fsum(x) / x.size
    return math.fsum((x - m) ** 2) / (x.size - 1)


def estimate_quantile(spec: SimulationSpec, r: int, alpha: float) -> float:
    """Plug-in ML estimate of the quantile from replication ``r``; nan when degenerate."""
    sc = spec.scenario
    F1 = build_stress_matrix(spec.settings, sc.model)
    F2 = build_time_matrix(spec.times, sc.model.time_basis)
    Y = simulate_replication(spec, r)
    par = sc.variance_parametrization()
    # the median depends on beta only, and beta-hat is free of the variance parameters for scalar errors
    need_var = not (alpha == 0.5 and sc.varcomps.homoscedastic)
    fit = fit_ml(Y, F1, F2, par, fit_variance=need_var)
    try:
        fitted = sc.replace(beta=fit.beta, varcomps=fit.varcomps, parametrization=par.with_values(fit.varsigma))
        q = quantile(use_profile(fitted), alpha, with_gradients=False)
    except DesignError:
        return math.nan
    return q.t_alpha if not q.degenerate else math.nan


def validate_avar(spec: SimulationSpec, alpha: float | None = None, workers: int = 1) -> ValidationReport:
    """Compare ``n Var(t_hat)`` over replications with the standardized asymptotic variance."""
    sc = spec.scenario
    alpha = sc.alpha if alpha is None else alpha
    avar = avar_quantile(sc, spec.stress_design(), spec.times, alpha)
    reps = range(spec.replications)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            est = np.array(list(ex.map(lambda r: estimate_quantile(spec, r, alpha), reps)))
    else:
        est = np.array([estimate_quantile(spec, r, alpha) for r in reps])
    good = est[np.isfinite(est)]
    bad = int(est.size - good.size)
    rate = bad / est.size
    notes = []
    if good.size >= 2:
        var = _fsum_var(good)
        scaled = spec.n_units * var
        ratio = scaled / avar
        df = good.size - 1
        lo = df / stats.chi2.ppf(0.975, df)
        hi = df / stats.chi2.ppf(0.025, df)
        ci = (ratio * lo, ratio * hi)
    else:
        var = scaled = ratio = math.nan
        ci = (math.nan, math.nan)
        notes.append("fewer than two usable replications: variance undefined")
    if bad:
        notes.append(f"{bad} degenerate replicate(s) excluded")
    flagged = rate > DEGENERATE_LIMIT
    if flagged:
        notes.append("degenerate rate above 1%: asymptotics unreliable at this n")
    return ValidationReport(alpha, spec.n_units, spec.replications, est, var, scaled, avar, ratio, ci, bad, rate,
                            flagged, notes)
