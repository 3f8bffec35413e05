"""Linear mixed-effects degradation model with product-type regression functions.

The aggregate mean of unit ``i`` at time ``t`` is ``(f1(x_i) kron f2(t))' beta``
and only the coefficients attached to the constant stress term carry a
random effect ``gamma_i ~ N(0, Sigma_gamma)``.  Parameters are ordered
lexicographically: index ``(r - 1) * p2 + s`` belongs to ``f1_r * f2_s``.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import linalg

from .errors import DegenerateVarianceError, DomainError, SingularInformationError

ArrayFn = Callable[[np.ndarray], np.ndarray]

RCOND_MIN = 1e-12
REGION_TOL = 1e-12
FD_REL_STEP = 1e-5
FD_ABS_STEP = 1e-8


# ---------------------------------------------------------------------------
# Regression bases
# ---------------------------------------------------------------------------


def _as_points(points, input_dim: int) -> np.ndarray:
    """Coerce scalars, vectors and matrices to an ``(n, input_dim)`` array."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1) if input_dim == 1 else arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != input_dim:
        raise DomainError(f"expected points with {input_dim} coordinate(s), got shape {np.shape(points)}")
    return arr


@dataclass(frozen=True, eq=False)
class Basis:
    """Ordered regression functions of one covariate vector.

    Every function maps an ``(n, d)`` array of points to an ``(n,)`` array.
    ``derivatives`` (optional, 1-D bases only) hold the derivatives in the
    covariate and are used for the failure-time gradient.
    """

    functions: tuple[ArrayFn, ...]
    names: tuple[str, ...]
    variables: tuple[str, ...]
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    has_intercept: bool = True
    kind: str = "custom"
    derivatives: tuple[ArrayFn, ...] | None = None

    def __post_init__(self):
        if len(self.functions) < 1:
            raise ValueError("a basis needs at least one function")
        if len(self.names) != len(self.functions):
            raise ValueError("one name per regression function")
        d = len(self.variables)
        if len(self.lower) != d or len(self.upper) != d:
            raise ValueError("region bounds must match the number of variables")
        if any(lo > hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("empty region")
        if self.derivatives is not None and len(self.derivatives) != len(self.functions):
            raise ValueError("one derivative per regression function")
        if self.has_intercept:
            corners = np.array(list(itertools.product(*zip(self.lower, self.upper))), dtype=float)
            if not np.allclose(self.functions[0](corners), 1.0):
                raise ValueError("first function of an intercept basis must be identically 1")

    @property
    def dimension(self) -> int:
        return len(self.functions)

    @property
    def input_dim(self) -> int:
        return len(self.variables)

    def contains(self, points) -> np.ndarray:
        pts = _as_points(points, self.input_dim)
        lo = np.asarray(self.lower) - REGION_TOL
        hi = np.asarray(self.upper) + REGION_TOL
        return np.all((pts >= lo) & (pts <= hi), axis=1)

    def evaluate(self, points, check: bool = True) -> np.ndarray:
        """Return the ``(n, dimension)`` matrix of function values."""
        pts = _as_points(points, self.input_dim)
        if check and not np.all(self.contains(pts)):
            bad = pts[~self.contains(pts)][0]
            raise DomainError(f"point {bad.tolist()} outside region {list(zip(self.lower, self.upper))}")
        out = np.column_stack([np.broadcast_to(fn(pts), (pts.shape[0],)) for fn in self.functions])
        if not np.all(np.isfinite(out)):
            raise DomainError("basis evaluation is not finite")
        return out

    def at(self, point, check: bool = False) -> np.ndarray:
        """Regression vector at a single point (no region check by default)."""
        return self.evaluate(point, check=check)[0]

    def derivative(self, points) -> np.ndarray:
        """Derivative of each function in the (scalar) covariate."""
        if self.input_dim != 1:
            raise DomainError("derivatives are only defined for one-dimensional bases")
        pts = _as_points(points, 1)
        if self.derivatives is not None:
            return np.column_stack([np.broadcast_to(fn(pts), (pts.shape[0],)) for fn in self.derivatives])
        step = np.maximum(FD_REL_STEP * np.abs(pts), FD_ABS_STEP)
        return (self.evaluate(pts + step, check=False) - self.evaluate(pts - step, check=False)) / (2 * step)

    def grid(self, points_per_axis: int = 101) -> np.ndarray:
        """Lexicographically ordered equispaced candidate grid on the region."""
        axes = [np.linspace(lo, hi, points_per_axis) for lo, hi in zip(self.lower, self.upper)]
        return np.array(list(itertools.product(*axes)), dtype=float)


def _const(x):
    return np.ones(x.shape[0])


def _zero(x):
    return np.zeros(x.shape[0])


def _coord(j):
    def fn(x):
        return x[:, j]

    return fn


def _coord_power(j, power):
    def fn(x):
        return x[:, j] ** power

    return fn


def _coord_power_derivative(j, power):
    def fn(x):
        return power * x[:, j] ** (power - 1)

    return fn


def linear_basis(variable: str = "x", lower: float = 0.0, upper: float = 1.0) -> Basis:
    """Simple linear regression ``(1, x)``."""
    return Basis(
        functions=(_const, _coord(0)),
        names=("1", variable),
        variables=(variable,),
        lower=(float(lower),),
        upper=(float(upper),),
        kind="linear",
        derivatives=(_zero, _const),
    )


def quadratic_basis(variable: str = "t", lower: float = 0.0, upper: float = 1.0) -> Basis:
    return Basis(
        functions=(_const, _coord(0), _coord_power(0, 2)),
        names=("1", variable, f"{variable}^2"),
        variables=(variable,),
        lower=(float(lower),),
        upper=(float(upper),),
        kind="quadratic",
        derivatives=(_zero, _const, _coord_power_derivative(0, 2)),
    )


def additive_basis(variables: Sequence[str] = ("x1", "x2"), lower=0.0, upper=1.0) -> Basis:
    """Multiple regression without interactions, ``(1, x1, ..., xd)``."""
    d = len(variables)
    lo = tuple(np.broadcast_to(np.asarray(lower, dtype=float), (d,)).tolist())
    hi = tuple(np.broadcast_to(np.asarray(upper, dtype=float), (d,)).tolist())
    return Basis(
        functions=(_const,) + tuple(_coord(j) for j in range(d)),
        names=("1",) + tuple(variables),
        variables=tuple(variables),
        lower=lo,
        upper=hi,
        kind="additive",
    )


@dataclass(frozen=True, eq=False)
class ProductModel:
    """``f(x, t) = f1(x) kron f2(t)`` with ``f1`` itself a Kronecker product of stress bases.

    Stress coordinates are consumed group by group: the first basis reads the
    first ``input_dim`` coordinates of ``x``, the next basis the following ones.
    """

    stress_bases: tuple[Basis, ...]
    time_basis: Basis

    def __post_init__(self):
        if not self.stress_bases:
            raise ValueError("need at least one stress basis")
        for b in self.stress_bases:
            if not b.has_intercept:
                raise ValueError(f"stress basis {b.names} must contain a constant term")
        if self.time_basis.input_dim != 1:
            raise ValueError("the time basis must be one-dimensional")

    @property
    def p1(self) -> int:
        return int(np.prod([b.dimension for b in self.stress_bases]))

    @property
    def p2(self) -> int:
        return self.time_basis.dimension

    @property
    def p(self) -> int:
        return self.p1 * self.p2

    @property
    def random_effect_dim(self) -> int:
        return self.p2

    @property
    def stress_dim(self) -> int:
        return sum(b.input_dim for b in self.stress_bases)

    @property
    def stress_variables(self) -> tuple[str, ...]:
        return tuple(v for b in self.stress_bases for v in b.variables)

    @property
    def stress_lower(self) -> np.ndarray:
        return np.array([v for b in self.stress_bases for v in b.lower])

    @property
    def stress_upper(self) -> np.ndarray:
        return np.array([v for b in self.stress_bases for v in b.upper])

    def _split(self, pts: np.ndarray) -> list[np.ndarray]:
        out, start = [], 0
        for b in self.stress_bases:
            out.append(pts[:, start:start + b.input_dim])
            start += b.input_dim
        return out

    def f1(self, points, check: bool = True) -> np.ndarray:
        """Stress regression rows, Kronecker-composed across factor groups."""
        pts = _as_points(points, self.stress_dim)
        rows = None
        for b, block in zip(self.stress_bases, self._split(pts)):
            vals = b.evaluate(block, check=check)
            rows = vals if rows is None else np.einsum("ni,nj->nij", rows, vals).reshape(pts.shape[0], -1)
        return rows

    def f2(self, times, check: bool = True) -> np.ndarray:
        return self.time_basis.evaluate(times, check=check)

    def f(self, x, t, check: bool = False) -> np.ndarray:
        """Full regression vector at one ``(x, t)`` pair."""
        return np.kron(self.f1(x, check=check)[0], self.f2(t, check=check)[0])

    def stress_grid(self, points_per_axis: int = 101) -> np.ndarray:
        axes = [np.linspace(lo, hi, points_per_axis) for lo, hi in zip(self.stress_lower, self.stress_upper)]
        return np.array(list(itertools.product(*axes)), dtype=float)

    def stress_vertices(self) -> np.ndarray:
        return np.array(list(itertools.product(*zip(self.stress_lower, self.stress_upper))), dtype=float)


# ---------------------------------------------------------------------------
# Variance structure
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class VarianceComponents:
    """Random-effects covariance and measurement-error covariance.

    Exactly one of ``eps_var`` (homoscedastic, ``sigma_eps^2 I_k``) and
    ``eps_cov`` (general ``k x k`` matrix) is set.
    """

    sigma_gamma: np.ndarray
    eps_var: float | None = None
    eps_cov: np.ndarray | None = None

    def __post_init__(self):
        sg = np.atleast_2d(np.asarray(self.sigma_gamma, dtype=float))
        if sg.shape[0] != sg.shape[1] or not np.allclose(sg, sg.T, atol=1e-14):
            raise ValueError("sigma_gamma must be a symmetric square matrix")
        if np.linalg.eigvalsh(sg).min() < -1e-12 * max(1.0, np.abs(sg).max()):
            raise DegenerateVarianceError("sigma_gamma must be non-negative definite")
        object.__setattr__(self, "sigma_gamma", sg)
        if (self.eps_var is None) == (self.eps_cov is None):
            raise ValueError("give exactly one of eps_var and eps_cov")
        if self.eps_var is not None:
            if not self.eps_var > 0:
                raise DegenerateVarianceError("error variance must be positive")
            object.__setattr__(self, "eps_var", float(self.eps_var))
        else:
            ec = np.atleast_2d(np.asarray(self.eps_cov, dtype=float))
            if ec.shape[0] != ec.shape[1] or not np.allclose(ec, ec.T, atol=1e-14):
                raise ValueError("eps_cov must be a symmetric square matrix")
            if np.linalg.eigvalsh(ec).min() <= 0:
                raise DegenerateVarianceError("eps_cov must be positive definite")
            object.__setattr__(self, "eps_cov", ec)

    @classmethod
    def from_sd_corr(cls, sigma1: float, sigma2: float, rho: float, sigma_eps: float) -> "VarianceComponents":
        """2x2 random intercept/slope covariance from standard deviations and correlation."""
        if abs(rho) > 1:
            raise ValueError("|rho| must not exceed 1")
        off = rho * sigma1 * sigma2
        return cls(np.array([[sigma1**2, off], [off, sigma2**2]]), eps_var=sigma_eps**2)

    @classmethod
    def compound_symmetry(cls, sigma_gamma, k: int, sigma_eps: float, rho_eps: float) -> "VarianceComponents":
        cov = sigma_eps**2 * ((1 - rho_eps) * np.eye(k) + rho_eps * np.ones((k, k)))
        return cls(sigma_gamma, eps_cov=cov)

    @property
    def p2(self) -> int:
        return self.sigma_gamma.shape[0]

    @property
    def homoscedastic(self) -> bool:
        return self.eps_var is not None

    def error_matrix(self, k: int) -> np.ndarray:
        if self.eps_var is not None:
            return self.eps_var * np.eye(k)
        if self.eps_cov.shape[0] != k:
            raise DomainError(f"error covariance is {self.eps_cov.shape[0]}x{self.eps_cov.shape[0]}, plan has k={k}")
        return self.eps_cov

    def scaled(self, gamma_factor: float = 1.0, eps_factor: float = 1.0) -> "VarianceComponents":
        if self.eps_var is not None:
            return VarianceComponents(self.sigma_gamma * gamma_factor, eps_var=self.eps_var * eps_factor)
        return VarianceComponents(self.sigma_gamma * gamma_factor, eps_cov=self.eps_cov * eps_factor)


# A derivative of the variance components: (d Sigma_gamma, d Sigma_eps) where the
# second entry is a scalar multiple of the identity or a full matrix.
VarianceDerivative = tuple[np.ndarray, "float | np.ndarray"]


def _eps_matrix(d_eps, k: int) -> np.ndarray:
    d_eps = np.asarray(d_eps, dtype=float)
    return d_eps * np.eye(k) if d_eps.ndim == 0 else d_eps


@dataclass(frozen=True, eq=False)
class VarianceParametrization:
    """Maps a parameter vector to :class:`VarianceComponents`.

    ``kinds`` tells the optimizer how to reach each parameter from the real
    line: ``"sd"``/``"var"`` through ``exp``, ``"corr"`` through ``tanh`` and
    ``"free"`` directly.
    """

    names: tuple[str, ...]
    values: np.ndarray
    kinds: tuple[str, ...]
    build: Callable[[np.ndarray], VarianceComponents]
    analytic: Callable[[np.ndarray], list[VarianceDerivative]] | None = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).ravel()
        if not (len(self.names) == len(vals) == len(self.kinds)):
            raise ValueError("names, values and kinds must have equal length")
        object.__setattr__(self, "values", vals)

    @property
    def size(self) -> int:
        return len(self.values)

    def components(self, values=None) -> VarianceComponents:
        return self.build(self.values if values is None else np.asarray(values, dtype=float))

    def with_values(self, values) -> "VarianceParametrization":
        return VarianceParametrization(self.names, np.asarray(values, dtype=float), self.kinds, self.build, self.analytic)

    def derivatives(self, values=None, method: str = "analytic") -> list[VarianceDerivative]:
        vals = self.values if values is None else np.asarray(values, dtype=float)
        if method == "analytic" and self.analytic is not None:
            return self.analytic(vals)
        out = []
        for a in range(len(vals)):
            h = max(FD_REL_STEP * abs(vals[a]), FD_ABS_STEP)
            up, dn = vals.copy(), vals.copy()
            up[a] += h
            dn[a] -= h
            vu, vd = _raw_components(self.build, up), _raw_components(self.build, dn)
            out.append(((vu[0] - vd[0]) / (2 * h), (vu[1] - vd[1]) / (2 * h)))
        return out

    def to_unconstrained(self, values=None) -> np.ndarray:
        vals = self.values if values is None else np.asarray(values, dtype=float)
        out = np.empty_like(vals)
        for i, (v, kind) in enumerate(zip(vals, self.kinds)):
            if kind in ("sd", "var"):
                out[i] = np.log(max(v, 1e-300))
            elif kind == "corr":
                out[i] = np.arctanh(np.clip(v, -1 + 1e-12, 1 - 1e-12))
            else:
                out[i] = v
        return out

    def from_unconstrained(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        out = np.empty_like(u)
        for i, kind in enumerate(self.kinds):
            if kind in ("sd", "var"):
                out[i] = np.exp(np.clip(u[i], -700, 700))
            elif kind == "corr":
                out[i] = np.tanh(u[i])
            else:
                out[i] = u[i]
        return out


def _raw_components(build, values):
    """Build without validation so finite differences may step over boundaries."""
    try:
        vc = build(values)
    except (ValueError, DegenerateVarianceError):
        vc = build.__wrapped_raw__(values) if hasattr(build, "__wrapped_raw__") else None
        if vc is None:
            raise
        return vc
    return vc.sigma_gamma, (vc.eps_var if vc.eps_var is not None else vc.eps_cov)


def sd_corr_parametrization(sigma1: float, sigma2: float, rho: float, sigma_eps: float) -> VarianceParametrization:
    """Parameters ``(sigma1, sigma2, rho, sigma_eps)`` of a random intercept/slope model."""

    def build(v):
        return VarianceComponents.from_sd_corr(*v)

    def raw(v):
        s1, s2, r, se = v
        off = r * s1 * s2
        return np.array([[s1**2, off], [off, s2**2]]), se**2

    build.__wrapped_raw__ = raw

    def analytic(v):
        s1, s2, r, se = v
        z = np.zeros((2, 2))
        return [
            (np.array([[2 * s1, r * s2], [r * s2, 0.0]]), 0.0),
            (np.array([[0.0, r * s1], [r * s1, 2 * s2]]), 0.0),
            (np.array([[0.0, s1 * s2], [s1 * s2, 0.0]]), 0.0),
            (z, 2 * se),
        ]

    return VarianceParametrization(
        names=("sigma1", "sigma2", "rho", "sigma_eps"),
        values=np.array([sigma1, sigma2, rho, sigma_eps], dtype=float),
        kinds=("sd", "sd", "corr", "sd"),
        build=build,
        analytic=analytic,
    )


def error_variance_parametrization(sigma_gamma, eps_var: float) -> VarianceParametrization:
    """Only the error variance is unknown; ``Sigma_gamma`` is held fixed."""
    sg = np.atleast_2d(np.asarray(sigma_gamma, dtype=float))

    def build(v):
        return VarianceComponents(sg, eps_var=v[0])

    def analytic(v):
        return [(np.zeros_like(sg), 1.0)]

    return VarianceParametrization(("eps_var",), np.array([eps_var]), ("var",), build, analytic)


def cholesky_parametrization(varcomps: VarianceComponents) -> VarianceParametrization:
    """Lower Cholesky entries of ``Sigma_gamma`` plus the error standard deviation.

    Works for any ``p2`` and keeps ``Sigma_gamma`` non-negative definite for
    every parameter value.
    """
    if not varcomps.homoscedastic:
        raise ValueError("cholesky_parametrization needs homoscedastic errors")
    p2 = varcomps.p2
    sg = varcomps.sigma_gamma
    try:
        chol = np.linalg.cholesky(sg)
    except np.linalg.LinAlgError:
        w, q = np.linalg.eigh(sg)
        _, r = np.linalg.qr((q * np.sqrt(np.clip(w, 0, None))).T)
        chol = r.T * np.sign(np.diag(r))
    idx = [(i, j) for i in range(p2) for j in range(i + 1)]
    names = tuple(f"L[{i},{j}]" for i, j in idx) + ("sigma_eps",)
    values = np.array([chol[i, j] for i, j in idx] + [np.sqrt(varcomps.eps_var)])

    def lower(v):
        L = np.zeros((p2, p2))
        for val, (i, j) in zip(v[:-1], idx):
            L[i, j] = val
        return L

    def build(v):
        L = lower(v)
        return VarianceComponents(L @ L.T, eps_var=v[-1] ** 2)

    def analytic(v):
        L = lower(v)
        out = []
        for i, j in idx:
            E = np.zeros((p2, p2))
            E[i, j] = 1.0
            out.append((E @ L.T + L @ E.T, 0.0))
        out.append((np.zeros((p2, p2)), 2 * v[-1]))
        return out

    kinds = tuple("free" for _ in idx) + ("sd",)
    return VarianceParametrization(names, values, kinds, build, analytic)


def default_parametrization(varcomps: VarianceComponents) -> VarianceParametrization:
    """Standard parametrization for a set of variance components."""
    sg = varcomps.sigma_gamma
    if varcomps.homoscedastic and varcomps.p2 == 2:
        s1, s2 = np.sqrt(sg[0, 0]), np.sqrt(sg[1, 1])
        rho = sg[0, 1] / (s1 * s2) if s1 > 0 and s2 > 0 else 0.0
        return sd_corr_parametrization(s1, s2, float(np.clip(rho, -1, 1)), np.sqrt(varcomps.eps_var))
    if varcomps.homoscedastic:
        return cholesky_parametrization(varcomps)
    raise ValueError("no default parametrization for a general error covariance; supply one")


# ---------------------------------------------------------------------------
# Scenario
# ---------------------------------------------------------------------------


def equispaced_times(k: int, lower: float = 0.0, upper: float = 1.0) -> np.ndarray:
    return np.linspace(lower, upper, k)


@dataclass(frozen=True, eq=False)
class Scenario:
    """Nominal parameter values and the normal use condition.

    ``time_plan`` is the predetermined measurement plan used when only the
    stress settings are optimized (11 equispaced points if omitted).
    """

    model: ProductModel
    beta: np.ndarray
    varcomps: VarianceComponents
    use_condition: np.ndarray
    threshold: float
    alpha: float = 0.5
    parametrization: VarianceParametrization | None = None
    time_plan: np.ndarray | None = None
    name: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float).ravel()
        if beta.size != self.model.p:
            raise DomainError(f"beta has {beta.size} entries, model needs p1*p2 = {self.model.p}")
        object.__setattr__(self, "beta", beta)
        xu = np.atleast_1d(np.asarray(self.use_condition, dtype=float)).ravel()
        if xu.size != self.model.stress_dim:
            raise DomainError(f"use condition has {xu.size} coordinates, model has {self.model.stress_dim}")
        object.__setattr__(self, "use_condition", xu)
        if not np.isfinite(self.threshold):
            raise ValueError("threshold must be finite")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.varcomps.p2 != self.model.p2:
            raise DomainError("sigma_gamma dimension must equal the time basis dimension")
        if self.parametrization is not None:
            built = self.parametrization.components()
            if not np.allclose(built.sigma_gamma, self.varcomps.sigma_gamma, rtol=1e-10, atol=1e-14):
                raise ValueError("parametrization does not reproduce sigma_gamma")
        if self.time_plan is not None:
            object.__setattr__(self, "time_plan", np.asarray(self.time_plan, dtype=float).ravel())

    @property
    def beta_matrix(self) -> np.ndarray:
        """``beta`` reshaped to ``(p1, p2)``; row ``r`` pairs with ``f1_r``."""
        return self.beta.reshape(self.model.p1, self.model.p2)

    def variance_parametrization(self) -> VarianceParametrization:
        return self.parametrization if self.parametrization is not None else default_parametrization(self.varcomps)

    def fixed_time_plan(self) -> np.ndarray:
        if self.time_plan is not None:
            return self.time_plan
        tb = self.model.time_basis
        return equispaced_times(11, tb.lower[0], tb.upper[0])

    def with_alpha(self, alpha: float) -> "Scenario":
        return self.replace(alpha=alpha)

    def replace(self, **changes) -> "Scenario":
        from dataclasses import replace

        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class ExactPlan:
    """Stress settings of ``n`` units and the common time plan of ``k`` points."""

    settings: np.ndarray
    times: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.settings, dtype=float)
        if s.ndim == 1:
            s = s.reshape(-1, 1)
        object.__setattr__(self, "settings", s)
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float).ravel())

    @property
    def n(self) -> int:
        return self.settings.shape[0]

    @property
    def k(self) -> int:
        return self.times.size

    def stress_matrix(self, model: ProductModel) -> np.ndarray:
        return build_stress_matrix(self.settings, model)

    def time_matrix(self, model: ProductModel) -> np.ndarray:
        return build_time_matrix(self.times, model.time_basis)


# ---------------------------------------------------------------------------
# Matrix helpers
# ---------------------------------------------------------------------------


def spd_inverse(a: np.ndarray, what: str = "matrix") -> np.ndarray:
    """Inverse of a symmetric positive-definite matrix via Cholesky.

    Raises :class:`SingularInformationError` naming ``what`` when the
    reciprocal condition number falls below ``1e-12``.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    a = 0.5 * (a + a.T)
    eig = np.linalg.eigvalsh(a)
    if eig[-1] <= 0 or eig[0] / eig[-1] < RCOND_MIN:
        raise SingularInformationError(f"{what} is singular (reciprocal condition {eig[0] / max(eig[-1], 1e-300):.3g})")
    cf = linalg.cho_factor(a, lower=True)
    inv = linalg.cho_solve(cf, np.eye(a.shape[0]))
    return 0.5 * (inv + inv.T)


def _check_full_rank(F: np.ndarray, what: str) -> None:
    if F.shape[0] < F.shape[1] or np.linalg.matrix_rank(F) < F.shape[1]:
        raise SingularInformationError(f"{what} does not have full column rank {F.shape[1]}")


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def build_time_matrix(times, basis: Basis) -> np.ndarray:
    """``k x p2`` matrix whose row ``j`` is ``f2(t_j)``."""
    t = np.asarray(times, dtype=float).ravel()
    if t.size < 1:
        raise DomainError("time plan must contain at least one point")
    return basis.evaluate(t, check=True)


def build_stress_matrix(settings, model: ProductModel) -> np.ndarray:
    """``n x p1`` matrix whose row ``i`` is ``f1(x_i)``."""
    return model.f1(settings, check=True)


def response_covariance(F2: np.ndarray, varcomps: VarianceComponents) -> np.ndarray:
    F2 = np.atleast_2d(F2)
    if F2.shape[1] != varcomps.p2:
        raise DomainError("F2 columns must match sigma_gamma")
    V = F2 @ varcomps.sigma_gamma @ F2.T + varcomps.error_matrix(F2.shape[0])
    V = 0.5 * (V + V.T)
    eig = np.linalg.eigvalsh(V)
    if eig[0] <= 0 or eig[0] / eig[-1] < RCOND_MIN:
        raise DegenerateVarianceError("response covariance V is not positive definite")
    return V


def marginal_info(F2: np.ndarray, varcomps: VarianceComponents) -> np.ndarray:
    """Per-unit time-marginal information ``F2' V^-1 F2`` by direct inversion of V."""
    V = response_covariance(F2, varcomps)
    M = F2.T @ np.linalg.solve(V, F2)
    return 0.5 * (M + M.T)


def inverse_marginal_info(F2: np.ndarray, varcomps: VarianceComponents) -> np.ndarray:
    """``(F2' V^-1 F2)^-1`` computed as ``(F2' Sigma_eps^-1 F2)^-1 + Sigma_gamma``."""
    F2 = np.atleast_2d(F2)
    _check_full_rank(F2, "time design matrix F2")
    if varcomps.homoscedastic:
        fixed = F2.T @ F2 / varcomps.eps_var
    else:
        fixed = F2.T @ np.linalg.solve(varcomps.error_matrix(F2.shape[0]), F2)
    return spd_inverse(fixed, "F2' Sigma_eps^-1 F2") + varcomps.sigma_gamma


def log_likelihood(scenario: Scenario, plan: ExactPlan, observations, beta=None, varcomps=None) -> float:
    """Gaussian log-likelihood of stacked unit responses.

    ``observations`` is either the stacked ``n*k`` vector or an ``(n, k)``
    array.  ``beta``/``varcomps`` default to the scenario's nominal values.
    """
    model = scenario.model
    beta = scenario.beta if beta is None else np.asarray(beta, dtype=float)
    varcomps = scenario.varcomps if varcomps is None else varcomps
    F1, F2 = plan.stress_matrix(model), plan.time_matrix(model)
    Y = np.asarray(observations, dtype=float).reshape(plan.n, plan.k)
    V = response_covariance(F2, varcomps)
    resid = Y - F1 @ beta.reshape(model.p1, model.p2) @ F2.T
    return _loglik_from_residuals(resid, V)


def _loglik_from_residuals(resid: np.ndarray, V: np.ndarray) -> float:
    n, k = resid.shape
    cf = linalg.cho_factor(V, lower=True)
    logdet = 2.0 * np.sum(np.log(np.diag(cf[0])))
    quad = np.sum(resid * linalg.cho_solve(cf, resid.T).T)
    return float(-0.5 * n * k * np.log(2 * np.pi) - 0.5 * n * logdet - 0.5 * quad)


def gls_estimate(observations, F1: np.ndarray, F2: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Kronecker-factorized GLS / ML estimator of ``beta`` for known ``V``."""
    F1, F2 = np.atleast_2d(F1), np.atleast_2d(F2)
    _check_full_rank(F1, "stress design matrix F1")
    _check_full_rank(F2, "time design matrix F2")
    Y = np.asarray(observations, dtype=float).reshape(F1.shape[0], F2.shape[0])
    left = np.linalg.solve(F1.T @ F1, F1.T)
    VinvF2 = np.linalg.solve(V, F2)
    right = np.linalg.solve(F2.T @ VinvF2, VinvF2.T)
    return (left @ Y @ right.T).ravel()


def ols_estimate(observations, F1: np.ndarray, F2: np.ndarray) -> np.ndarray:
    F1, F2 = np.atleast_2d(F1), np.atleast_2d(F2)
    Y = np.asarray(observations, dtype=float).reshape(F1.shape[0], F2.shape[0])
    left = np.linalg.lstsq(F1, np.eye(F1.shape[0]), rcond=None)[0]
    right = np.linalg.lstsq(F2, np.eye(F2.shape[0]), rcond=None)[0]
    return (left @ Y @ right.T).ravel()


def info_beta(F1: np.ndarray, F2: np.ndarray, V: np.ndarray) -> np.ndarray:
    """``M_beta = (F1'F1) kron (F2' V^-1 F2)``."""
    M1 = F1.T @ F1
    M2 = F2.T @ np.linalg.solve(V, F2)
    return np.kron(M1, 0.5 * (M2 + M2.T))


def info_beta_inverse(F1: np.ndarray, F2: np.ndarray, V: np.ndarray) -> np.ndarray:
    """``M_beta^-1 = (F1'F1)^-1 kron (F2' V^-1 F2)^-1``; names the singular factor."""
    _check_full_rank(np.atleast_2d(F1), "stress design matrix F1")
    _check_full_rank(np.atleast_2d(F2), "time design matrix F2")
    M1inv = spd_inverse(F1.T @ F1, "stress information F1'F1")
    M2inv = spd_inverse(F2.T @ np.linalg.solve(V, F2), "time information F2' V^-1 F2")
    return np.kron(M1inv, M2inv)


def info_varsigma(F2: np.ndarray, parametrization: VarianceParametrization, n: int = 1,
                  method: str = "analytic") -> np.ndarray:
    """Fisher information for the variance parameters.

    ``(n/2) tr(V^-1 dV_a V^-1 dV_b)``.  Independent of the stress settings.
    A singular result triggers a warning (non-identifiable parametrization)
    but is still returned.
    """
    F2 = np.atleast_2d(F2)
    k = F2.shape[0]
    V = response_covariance(F2, parametrization.components())
    dVs = [F2 @ dsg @ F2.T + _eps_matrix(deps, k) for dsg, deps in parametrization.derivatives(method=method)]
    A = [np.linalg.solve(V, dV) for dV in dVs]
    q = len(A)
    M = np.empty((q, q))
    for a in range(q):
        for b in range(a, q):
            M[a, b] = M[b, a] = 0.5 * n * np.trace(A[a] @ A[b])
    if not is_identifiable(M):
        warnings.warn("variance-parameter information is singular: parametrization not identifiable on this plan",
                      RuntimeWarning, stacklevel=2)
    return M


def is_identifiable(M: np.ndarray) -> bool:
    eig = np.linalg.eigvalsh(0.5 * (M + M.T))
    return bool(eig[-1] > 0 and eig[0] / eig[-1] >= RCOND_MIN)
