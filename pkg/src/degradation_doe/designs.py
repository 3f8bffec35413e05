"""Approximate designs, standardized information matrices and c-criteria."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .model import Basis, ProductModel

MERGE_TOL = 1e-9
WEIGHT_SUM_TOL = 1e-9
RANGE_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class ApproximateDesign:
    """Finitely supported probability measure on a design region.

    ``support`` is an ``(m, d)`` array.  Points closer than ``1e-9`` in the
    max-norm are merged and their weights added.  Weights must be positive
    and sum to one; a sum within ``1e-9`` of one is renormalized.
    """

    support: np.ndarray
    weights: np.ndarray
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        pts = np.asarray(self.support, dtype=float)
        if pts.ndim == 0:
            pts = pts.reshape(1, 1)
        elif pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        w = np.asarray(self.weights, dtype=float).ravel()
        if pts.shape[0] != w.size:
            raise ValueError(f"{pts.shape[0]} support points but {w.size} weights")
        if w.size == 0:
            raise ValueError("a design needs at least one support point")
        if np.any(~np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("design weights must be positive")
        if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"design weights sum to {w.sum():.12g}, not 1")
        pts, w = _merge(pts, w)
        object.__setattr__(self, "support", pts)
        object.__setattr__(self, "weights", w / math.fsum(w))

    @classmethod
    def from_weights(cls, support, weights, min_weight: float = 0.0, labels=()) -> "ApproximateDesign":
        """Build from a weight vector that may contain (near) zeros; those points are dropped."""
        pts = np.asarray(support, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        w = np.asarray(weights, dtype=float).ravel()
        keep = w > min_weight
        return cls(pts[keep], w[keep] / w[keep].sum(), labels)

    @classmethod
    def one_point(cls, x) -> "ApproximateDesign":
        return cls(np.atleast_2d(np.asarray(x, dtype=float)), np.ones(1))

    @property
    def size(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.support.shape[1]

    def weight_at(self, x, tol: float = MERGE_TOL) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        hit = np.max(np.abs(self.support - x), axis=1) <= tol
        return float(self.weights[hit].sum())

    def sorted(self) -> "ApproximateDesign":
        order = np.lexsort(self.support.T[::-1])
        return ApproximateDesign(self.support[order], self.weights[order])

    def to_rows(self) -> list[tuple[list[float], float]]:
        return [(p.tolist(), float(w)) for p, w in zip(self.support, self.weights)]

    def __repr__(self):
        rows = ", ".join(f"{tuple(np.round(p, 6).tolist())}: {w:.6g}" for p, w in zip(self.support, self.weights))
        return f"ApproximateDesign({rows})"


def _merge(pts: np.ndarray, w: np.ndarray):
    if pts.shape[0] == 1:
        return pts, w
    order = np.lexsort(pts.T[::-1])
    pts, w = pts[order], w[order]
    keep_pts, keep_w = [pts[0]], [w[0]]
    for p, wi in zip(pts[1:], w[1:]):
        for j, q in enumerate(keep_pts):
            if np.max(np.abs(p - q)) < MERGE_TOL:
                keep_w[j] += wi
                break
        else:
            keep_pts.append(p)
            keep_w.append(wi)
    return np.array(keep_pts), np.array(keep_w)


def product_design(a: ApproximateDesign, b: ApproximateDesign) -> ApproximateDesign:
    """``a kron b``: Cartesian product of supports, coordinates of ``a`` first.

    The ordering is lexicographic with ``b`` running fastest, matching the
    Kronecker ordering of the regression functions.
    """
    pts = [np.concatenate([p, q]) for p in a.support for q in b.support]
    w = np.outer(a.weights, b.weights).ravel()
    return ApproximateDesign(np.array(pts), w)


# ---------------------------------------------------------------------------
# Information matrices and criteria
# ---------------------------------------------------------------------------


Regressor = "ProductModel | Basis | Callable[[np.ndarray], np.ndarray]"


def regressors(model, points) -> np.ndarray:
    """Evaluate the regression functions of ``model`` at ``points``.

    A :class:`ProductModel` contributes its stress part ``f1``; a
    :class:`Basis` is evaluated directly; any other callable is called.
    """
    if isinstance(model, ProductModel):
        return model.f1(points, check=True)
    if isinstance(model, Basis):
        return model.evaluate(points, check=True)
    return np.atleast_2d(np.asarray(model(np.asarray(points, dtype=float)), dtype=float))


def information_matrix(design: ApproximateDesign, model) -> np.ndarray:
    """``sum_i w_i f(x_i) f(x_i)'`` for the regression functions of ``model``."""
    F = regressors(model, design.support)
    M = (F * design.weights[:, None]).T @ F
    return 0.5 * (M + M.T)


def stress_info(design: ApproximateDesign, model) -> np.ndarray:
    """Standardized per-unit stress information ``M1(xi)``."""
    return information_matrix(design, model)


def matrix_rank(M: np.ndarray) -> int:
    return int(np.linalg.matrix_rank(M, tol=1e-10 * max(1.0, np.abs(M).max())))


def estimable(M: np.ndarray, c) -> bool:
    """``c`` lies in the range of the symmetric matrix ``M``."""
    c = np.asarray(c, dtype=float)
    Mp = np.linalg.pinv(M, rcond=1e-12, hermitian=True)
    return bool(np.linalg.norm(M @ Mp @ c - c) <= RANGE_TOL * max(1.0, np.linalg.norm(c)))


def c_value(M: np.ndarray, c) -> float:
    """``c' M^- c`` with a range check; ``inf`` when ``c`` is not estimable."""
    c = np.asarray(c, dtype=float)
    if not estimable(M, c):
        return math.inf
    Mp = np.linalg.pinv(M, rcond=1e-12, hermitian=True)
    return float(c @ Mp @ c)


def c_criterion(design: ApproximateDesign, model, c) -> float:
    return c_value(information_matrix(design, model), c)


def efficiency(candidate: ApproximateDesign, reference: ApproximateDesign, model, c) -> float:
    """c-efficiency ``Phi(reference) / Phi(candidate)``; 0 for an infeasible candidate."""
    phi_c = c_criterion(candidate, model, c)
    if not math.isfinite(phi_c):
        return 0.0
    return c_criterion(reference, model, c) / phi_c


# ---------------------------------------------------------------------------
# Uniform benchmarks
# ---------------------------------------------------------------------------


def uniform_grid_design(m: int, lower: float = 0.0, upper: float = 1.0) -> ApproximateDesign:
    """Equal weights ``1/m`` on ``m`` equidistant points of ``[lower, upper]``."""
    if m < 2:
        raise ValueError("uniform grid design needs m >= 2")
    return ApproximateDesign(np.linspace(lower, upper, m), np.full(m, 1.0 / m))


def uniform_vertex_design(model: ProductModel) -> ApproximateDesign:
    """Equal weights on all vertices of the stress region."""
    v = model.stress_vertices()
    return ApproximateDesign(v, np.full(v.shape[0], 1.0 / v.shape[0]))


def uniform_a(m) -> float:
    """``a_m = 3 (m - 1) / (m + 1)``; ``m = inf`` gives the continuous limit 3."""
    if math.isinf(m):
        return 3.0
    return 3.0 * (m - 1) / (m + 1)


def uniform_criterion_closed(m, x_u: float) -> float:
    """c-criterion of the uniform grid design for extrapolation at ``x_u <= 0`` on ``[0, 1]``."""
    return 1.0 + uniform_a(m) * (1.0 + 2.0 * abs(x_u)) ** 2


def extrapolation_criterion_closed(x_u: float) -> float:
    """Minimal c-criterion ``(1 + 2|x_u|)^2`` for simple linear regression on ``[0, 1]``."""
    return (1.0 + 2.0 * abs(x_u)) ** 2


def uniform_efficiency_closed(m, x_u: float) -> float:
    """Closed-form efficiency of the uniform grid design; ``x_u = -inf`` gives ``1/a_m``."""
    a = uniform_a(m)
    if math.isinf(x_u):
        return 1.0 / a
    return extrapolation_criterion_closed(x_u) / uniform_criterion_closed(m, x_u)


def continuous_uniform_info(basis: Basis, nodes: int = 64) -> np.ndarray:
    """Information of the continuous uniform design on a 1-D region, by Gauss-Legendre quadrature."""
    if basis.input_dim != 1:
        raise DomainError("continuous uniform design is only provided for one covariate")
    z, wq = np.polynomial.legendre.leggauss(nodes)
    lo, hi = basis.lower[0], basis.upper[0]
    x = 0.5 * (hi - lo) * z + 0.5 * (hi + lo)
    F = basis.evaluate(x)
    M = (F * (0.5 * wq)[:, None]).T @ F
    return 0.5 * (M + M.T)


# ---------------------------------------------------------------------------
# Rounding
# ---------------------------------------------------------------------------


def round_to_exact(design: ApproximateDesign, n_units: int) -> np.ndarray:
    """Largest-remainder apportionment of ``n_units`` to the support points.

    Every point receives at least one unit; ties in the remainders go to the
    earlier support point.
    """
    m = design.size
    if n_units < m:
        raise ValueError(f"n_units={n_units} is below the number of support points; need at least {m}")
    quota = n_units * design.weights
    freq = np.floor(quota).astype(int)
    freq = np.maximum(freq, 1)
    short = n_units - freq.sum()
    if short > 0:
        rem = quota - np.floor(quota)
        order = sorted(range(m), key=lambda i: (-rem[i], i))
        for i in order[:short]:
            freq[i] += 1
    while freq.sum() > n_units:
        # forcing every point to >= 1 unit may overshoot; take back from the largest excess
        excess = freq - quota
        excess[freq <= 1] = -np.inf
        freq[int(np.argmax(excess))] -= 1
    return freq


def exact_settings(design: ApproximateDesign, n_units: int) -> np.ndarray:
    """Expand the rounded frequencies into an ``(n_units, d)`` array of unit settings."""
    freq = round_to_exact(design, n_units)
    return np.repeat(design.support, freq, axis=0)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def _sig(x, digits: int = 12):
    """Round floats to ``digits`` significant digits for serialization."""
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
        return float(f"{x:.{digits}g}")
    if isinstance(x, (int, np.integer, bool, np.bool_)) or x is None or isinstance(x, str):
        return x.item() if hasattr(x, "item") else x
    if isinstance(x, np.ndarray):
        return [_sig(v, digits) for v in x.tolist()]
    if isinstance(x, dict):
        return {str(k): _sig(v, digits) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_sig(v, digits) for v in x]
    return x


@dataclass
class CriterionReport:
    criterion_value: float
    efficiency: float = 1.0
    certificate_gap: float = math.nan
    benchmark_values: dict = field(default_factory=dict)
    benchmark_efficiencies: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "criterion_value": self.criterion_value,
            "efficiency": self.efficiency,
            "certificate_gap": self.certificate_gap,
            "benchmark_values": dict(self.benchmark_values),
            "benchmark_efficiencies": dict(self.benchmark_efficiencies),
        }


@dataclass
class DesignReport:
    """Optimized design plus criterion diagnostics, serializable to JSON."""

    kind: str
    design: ApproximateDesign
    variables: tuple[str, ...]
    criterion: CriterionReport
    flags: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "variables": list(self.variables),
            "design": [{"point": p, "weight": w} for p, w in self.design.to_rows()],
            "criterion": self.criterion.as_dict(),
            "flags": list(self.flags),
            "notes": list(self.notes),
            "extra": self.extra,
        }

    def to_json(self, digits: int = 12) -> str:
        return json.dumps(_sig(self.as_dict(), digits), indent=2, sort_keys=True)
