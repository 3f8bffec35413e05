"""c-optimal stress designs for extrapolation to the normal use condition.

Closed forms cover simple linear regression on an interval; everything else
goes through Elfving's theorem, solved as a linear program over a candidate
grid.  Designs for product-type stress models are products of the
per-factor optima.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .designs import (
    ApproximateDesign,
    CriterionReport,
    DesignReport,
    c_value,
    efficiency,
    estimable,
    information_matrix,
    matrix_rank,
    product_design,
    regressors,
    stress_info,
    uniform_grid_design,
    uniform_vertex_design,
)
from .errors import DomainError, InfeasibleError
from .failure_time import quantile, use_profile
from .model import Basis, ProductModel, Scenario

DROP_WEIGHT = 1e-10
LP_TOL = 1e-10
TIE_SLACK = 1e-9
DEFAULT_GRID = 101


@dataclass(frozen=True, eq=False)
class ElfvingSolution:
    """Boundary point ``lambda_c c = sum_i w_i z_i f(x_i)`` of the Elfving set."""

    lambda_c: float
    design: ApproximateDesign
    signs: np.ndarray

    @property
    def criterion(self) -> float:
        return 1.0 / self.lambda_c**2

    def residual(self, model, c) -> float:
        """``|lambda_c c - sum w z f(x)|_inf``; zero up to solver accuracy."""
        F = regressors(model, self.design.support)
        return float(np.max(np.abs(self.lambda_c * np.asarray(c) - (self.design.weights * self.signs) @ F)))


# ---------------------------------------------------------------------------
# Closed form
# ---------------------------------------------------------------------------


def extrapolation_two_point(x_u: float, lower: float = 0.0, upper: float = 1.0) -> ApproximateDesign:
    """c-optimal design for ``(1, x)`` on ``[lower, upper]`` extrapolating to ``x_u``.

    On the standardized scale ``z = (x - lower) / (upper - lower)`` with
    ``z_u <= 0`` the far end gets ``|z_u| / (1 + 2 |z_u|)`` and the near end
    the rest.  ``x_u`` above the region is mirrored; ``x_u`` inside the
    region gives the one-point design at ``x_u``.
    """
    if not upper > lower:
        raise DomainError("empty region")
    width = upper - lower
    if lower <= x_u <= upper:
        return ApproximateDesign.one_point([x_u])
    if x_u < lower:
        d = (lower - x_u) / width
        near, far = lower, upper
    else:
        d = (x_u - upper) / width
        near, far = upper, lower
    w = d / (1.0 + 2.0 * d)
    return ApproximateDesign(np.array([[near], [far]]), np.array([1.0 - w, w]))


def extrapolation_weight(x_u: float) -> float:
    """Weight ``|x_u| / (1 + 2|x_u|)`` at the high stress level on ``[0, 1]``."""
    return abs(x_u) / (1.0 + 2.0 * abs(x_u))


# ---------------------------------------------------------------------------
# Elfving linear program
# ---------------------------------------------------------------------------


def _solve_lp(F: np.ndarray, c: np.ndarray, cost: np.ndarray, bound: float | None = None):
    N = F.shape[0]
    A_eq = np.hstack([F.T, -F.T])
    kw = {}
    if bound is not None:
        kw = dict(A_ub=np.ones((1, 2 * N)), b_ub=[bound])
    return linprog(
        np.concatenate([cost, cost]),
        A_eq=A_eq,
        b_eq=c,
        bounds=(0, None),
        method="highs-ds",
        options=dict(primal_feasibility_tolerance=LP_TOL, dual_feasibility_tolerance=LP_TOL),
        **kw,
    )


def elfving_solve(model, candidates, c, tie_break: str = "lexicographic") -> ElfvingSolution:
    """Maximize ``lambda`` with ``lambda c`` in the Elfving set of the candidate grid.

    Written as ``min sum(u+ + u-)`` subject to ``F'(u+ - u-) = c``, so that
    ``lambda_c = 1 / opt`` and the optimal ``u`` scaled by ``lambda_c`` are the
    design weights.  Ties among optimal supports are broken by a second LP
    preferring lexicographically small candidates (``tie_break="reverse"``
    prefers large ones, ``None`` skips the second stage).
    """
    cand = np.asarray(candidates, dtype=float)
    if cand.ndim == 1:
        cand = cand.reshape(-1, 1)
    c = np.asarray(c, dtype=float).ravel()
    if not np.any(c):
        raise ValueError("c must be non-zero")
    F = regressors(model, cand)
    if F.shape[1] != c.size:
        raise DomainError(f"c has {c.size} entries, regression functions have {F.shape[1]}")
    N = F.shape[0]
    res = _solve_lp(F, c, np.ones(N))
    if res.status == 2:
        raise InfeasibleError("c is not in the span of the candidate regression vectors")
    if res.status != 0:
        raise RuntimeError(f"Elfving LP failed: {res.message}")
    opt = float(res.fun)
    lam = 1.0 / opt
    # a single candidate on the ray gives a one-point optimum; prefer it outright
    dev = np.minimum(np.max(np.abs(F - lam * c), axis=1), np.max(np.abs(F + lam * c), axis=1))
    hit = np.flatnonzero(dev <= 1e-9 * max(1.0, np.abs(lam * c).max()))
    if hit.size:
        i = int(hit[np.lexsort(cand[hit].T[::-1])][0])
        sign = 1.0 if np.max(np.abs(F[i] - lam * c)) <= np.max(np.abs(F[i] + lam * c)) else -1.0
        return ElfvingSolution(lambda_c=lam, design=ApproximateDesign.one_point(cand[i]), signs=np.array([sign]))
    u = res.x
    if tie_break is not None:
        order = np.lexsort(cand.T[::-1])
        rank = np.empty(N)
        rank[order] = np.arange(N) / N
        if tie_break == "reverse":
            rank = 1.0 - rank
        res2 = _solve_lp(F, c, rank, bound=opt * (1.0 + TIE_SLACK))
        if res2.status == 0:
            # re-solve exactly on the selected support to remove slack-induced crumbs
            mass2 = res2.x[:N] + res2.x[N:]
            sub = np.flatnonzero(mass2 > 1e-12 * mass2.sum())
            res3 = _solve_lp(F[sub], c, np.ones(sub.size))
            if res3.status == 0:
                u = np.zeros(2 * N)
                u[sub], u[N + sub] = res3.x[:sub.size], res3.x[sub.size:]
                opt = float(res3.fun)
    up, um = u[:N], u[N:]
    mass = up + um
    keep = mass / mass.sum() >= DROP_WEIGHT
    w = mass[keep] / mass[keep].sum()
    signs = np.sign(up[keep] - um[keep])
    pts = cand[keep]
    # merge coincident points (possible only on grids with repeated entries)
    design = ApproximateDesign(pts, w)
    if design.size != pts.shape[0]:
        signs = np.array([signs[np.argmin(np.max(np.abs(pts - p), axis=1))] for p in design.support])
    return ElfvingSolution(lambda_c=1.0 / opt, design=design, signs=signs)


def verify_c_optimality(design: ApproximateDesign, model, candidates, c) -> float:
    """Equivalence-theorem gap ``max_x (f(x)' G c)^2 / (c' G c) - 1``.

    ``G`` ranges over generalized inverses of ``M(design)``; for singular
    ``M`` the best choice is found by a small LP over the null-space
    component of ``G c``.  The candidate set is augmented by the support.
    Returns ``inf`` when ``c`` is not estimable under the design.
    """
    c = np.asarray(c, dtype=float).ravel()
    M = information_matrix(design, model)
    if not estimable(M, c):
        return math.inf
    cand = np.asarray(candidates, dtype=float)
    if cand.ndim == 1:
        cand = cand.reshape(-1, 1)
    F = regressors(model, np.vstack([cand, design.support]))
    Mp = np.linalg.pinv(M, rcond=1e-12, hermitian=True)
    g = Mp @ c
    val = float(c @ g)
    w, Q = np.linalg.eigh(M)
    null = Q[:, w <= 1e-10 * max(1.0, w.max())]
    base = F @ g
    if null.shape[1] == 0:
        return float(np.max(base**2) / val - 1.0)
    # minimize s subject to -s <= base + F N v <= s
    FN = F @ null
    r = null.shape[1]
    ones = np.ones((F.shape[0], 1))
    A_ub = np.vstack([np.hstack([FN, -ones]), np.hstack([-FN, -ones])])
    b_ub = np.concatenate([-base, base])
    cost = np.zeros(r + 1)
    cost[-1] = 1.0
    res = linprog(cost, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * r + [(0, None)], method="highs")
    s = float(res.x[-1]) if res.status == 0 else float(np.max(np.abs(base)))
    return s**2 / val - 1.0


# ---------------------------------------------------------------------------
# Additive two-factor model
# ---------------------------------------------------------------------------


def additive_family(x_u1: float, x_u2: float, a: float) -> ApproximateDesign:
    """Member ``xi_a`` of the c-optimal vertex designs for ``(1, x1, x2)`` on ``[0, 1]^2``.

    Defined for ``x_u1 < x_u2 <= 0``; the roles of the factors are swapped
    when ``x_u2 < x_u1``.  Every member has criterion ``(1 + 2 max|x_u|)^2``.
    """
    if not 0.0 <= a <= 1.0:
        raise ValueError("a must lie in [0, 1]")
    if x_u1 > 0 or x_u2 > 0:
        raise DomainError("the vertex family needs non-positive use conditions")
    if x_u1 == x_u2:
        raise DomainError(
            "x_u1 == x_u2: the only c-optimal design is the singular two-point design on (0,0), (1,1); "
            "use it as an efficiency benchmark only"
        )
    swap = x_u2 < x_u1
    if swap:
        x_u1, x_u2 = x_u2, x_u1
    b1, b2 = abs(x_u1), abs(x_u2)
    lam = 1.0 / (1.0 + 2.0 * b1)
    pts = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    w = lam * np.array([1 + a * b1 + (1 - a) * b2, (1 - a) * (b1 - b2), a * (b1 - b2), (1 - a) * b1 + a * b2])
    if swap:
        pts = pts[:, ::-1]
    return ApproximateDesign.from_weights(pts, w)


def additive_two_point(x_u1: float, x_u2: float) -> ApproximateDesign:
    """Singular c-optimal two-point design on ``(0, 0)`` and ``(1, x_u2 / x_u1)`` (for ``|x_u1| >= |x_u2|``)."""
    if abs(x_u2) > abs(x_u1):
        d = additive_two_point(x_u2, x_u1)
        return ApproximateDesign(d.support[:, ::-1], d.weights)
    b = abs(x_u1)
    w_far = b / (1 + 2 * b)
    return ApproximateDesign(np.array([[0.0, 0.0], [1.0, x_u2 / x_u1]]), np.array([1 - w_far, w_far]))


# ---------------------------------------------------------------------------
# Stress design for quantile estimation
# ---------------------------------------------------------------------------


def _group_optimum(basis: Basis, x_u: np.ndarray, grid: int, notes: list) -> ApproximateDesign:
    if basis.kind == "linear":
        return extrapolation_two_point(float(x_u[0]), basis.lower[0], basis.upper[0])
    cand = basis.grid(grid)
    c = basis.at(x_u)
    sol = elfving_solve(basis, cand, c)
    design = sol.design
    M = information_matrix(design, basis)
    if matrix_rank(M) < basis.dimension:
        # mix with the opposite tie-break: mixtures of c-optimal designs stay c-optimal
        alt = elfving_solve(basis, cand, c, tie_break="reverse").design
        mix = ApproximateDesign(np.vstack([design.support, alt.support]),
                                np.concatenate([0.5 * design.weights, 0.5 * alt.weights]))
        if matrix_rank(information_matrix(mix, basis)) > matrix_rank(M):
            notes.append(f"factor {basis.variables}: singular LP optimum mixed with its reverse-order counterpart")
            design = mix
    return design


def stress_benchmarks(model: ProductModel, c1: np.ndarray, optimum: ApproximateDesign) -> tuple[dict, dict]:
    """Criterion values and efficiencies of uniform benchmark designs."""
    values, effs = {}, {}
    phi_opt = c_value(stress_info(optimum, model), c1)
    bench = {"uniform_vertices": uniform_vertex_design(model)}
    if len(model.stress_bases) == 1 and model.stress_bases[0].input_dim == 1:
        b = model.stress_bases[0]
        for m in (2, 3, 4, 5):
            bench[f"uniform_{m}"] = uniform_grid_design(m, b.lower[0], b.upper[0])
    for name, d in bench.items():
        phi = c_value(stress_info(d, model), c1)
        values[name] = phi
        effs[name] = phi_opt / phi if math.isfinite(phi) else 0.0
    return values, effs


def optimal_stress_for_quantile(scenario: Scenario, grid: int = DEFAULT_GRID, benchmark: bool = True,
                                certify: bool = True) -> DesignReport:
    """c-optimal stress design for ``c = f1(x_u)``, valid for every non-degenerate quantile.

    Each stress factor group is optimized in its own submarginal model and
    the group optima are combined as a product design.
    """
    model = scenario.model
    quantile(use_profile(scenario), scenario.alpha, with_gradients=False).require()
    notes = [
        "extrapolation c-optimal for c = f1(x_u); the design does not depend on alpha "
        "as long as the quantile is non-degenerate"
    ]
    flags = []
    x_u = scenario.use_condition
    design, start = None, 0
    for b in model.stress_bases:
        part = _group_optimum(b, x_u[start:start + b.input_dim], grid, notes)
        design = part if design is None else product_design(design, part)
        start += b.input_dim
    c1 = model.f1(x_u, check=False)[0]
    M1 = stress_info(design, model)
    phi = c_value(M1, c1)
    if matrix_rank(M1) < model.p1:
        flags.append("non-estimable full model")
        notes.append("information matrix is singular: maximum likelihood needs more distinct support points")
    gap = verify_c_optimality(design, model, model.stress_grid(grid), c1) if certify else math.nan
    crit = CriterionReport(criterion_value=phi, efficiency=1.0, certificate_gap=gap)
    if benchmark:
        crit.benchmark_values, crit.benchmark_efficiencies = stress_benchmarks(model, c1, design)
    return DesignReport(kind="stress", design=design, variables=model.stress_variables, criterion=crit,
                        flags=flags, notes=notes, extra={"c": c1.tolist(), "grid": grid})


def stress_efficiency(candidate: ApproximateDesign, scenario: Scenario, optimum: ApproximateDesign | None = None,
                      grid: int = DEFAULT_GRID) -> float:
    """Efficiency of a stress design for quantile estimation (equals its c-efficiency)."""
    if optimum is None:
        optimum = optimal_stress_for_quantile(scenario, grid, benchmark=False, certify=False).design
    c1 = scenario.model.f1(scenario.use_condition, check=False)[0]
    return efficiency(candidate, optimum, scenario.model, c1)
