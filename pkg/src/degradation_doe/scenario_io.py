"""JSON scenario files and design CSV files.

A scenario file mirrors the nominal-value tables of a study::

    {
      "name": "example1",
      "model": {
        "stress_factors": [{"kind": "linear", "variables": ["x"], "lower": 0, "upper": 1}],
        "time": {"kind": "linear", "variable": "t", "lower": 0, "upper": 1}
      },
      "beta": [2.397, 1.018, 1.629, 0.0696],
      "variance": {"sigma1": 0.114, "sigma2": 0.105, "rho": -0.143, "sigma_eps": 0.048},
      "use_condition": [-0.056],
      "threshold": 3.912,
      "alpha": 0.5
    }

Optional keys: ``description``, ``time_plan`` (fixed measurement times),
``time_grid`` (``delta_t``, ``k``).  Variance components may instead be
given as ``{"sigma_gamma": [[...]], "sigma_eps": s}`` or with a full
``"eps_cov"`` matrix.  Unknown keys are rejected.
"""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .designs import ApproximateDesign
from .errors import DesignError
from .model import (
    ProductModel,
    Scenario,
    VarianceComponents,
    additive_basis,
    linear_basis,
    quadratic_basis,
    sd_corr_parametrization,
)


class ScenarioError(DesignError):
    """Malformed scenario or design file."""


TOP_KEYS = {"name", "description", "model", "beta", "variance", "use_condition", "threshold", "alpha",
            "time_plan", "time_grid"}
REQUIRED = {"model", "beta", "variance", "use_condition", "threshold"}
FACTOR_KEYS = {"kind", "variables", "lower", "upper"}
TIME_KEYS = {"kind", "variable", "lower", "upper"}
GRID_KEYS = {"delta_t", "k"}
SD_KEYS = {"sigma1", "sigma2", "rho", "sigma_eps"}
MATRIX_KEYS = {"sigma_gamma", "sigma_eps", "eps_cov"}


def _check_keys(d, allowed, where, required=()):
    if not isinstance(d, dict):
        raise ScenarioError(f"{where}: expected an object")
    unknown = set(d) - set(allowed)
    if unknown:
        raise ScenarioError(f"{where}: unknown key(s) {sorted(unknown)}")
    missing = set(required) - set(d)
    if missing:
        raise ScenarioError(f"{where}: missing key(s) {sorted(missing)}")


def _factor_basis(spec: dict, i: int):
    where = f"model.stress_factors[{i}]"
    _check_keys(spec, FACTOR_KEYS, where, {"kind", "variables"})
    kind = spec["kind"]
    names = spec["variables"]
    if isinstance(names, str):
        names = [names]
    lo, hi = spec.get("lower", 0.0), spec.get("upper", 1.0)
    if kind in ("linear", "quadratic"):
        if len(names) != 1:
            raise ScenarioError(f"{where}: kind '{kind}' takes exactly one variable")
        make = linear_basis if kind == "linear" else quadratic_basis
        return make(names[0], float(lo), float(hi))
    if kind == "additive":
        if len(names) < 2:
            raise ScenarioError(f"{where}: kind 'additive' needs at least two variables")
        return additive_basis(tuple(names), lo, hi)
    raise ScenarioError(f"{where}: unknown kind '{kind}' (linear, quadratic, additive)")


def _time_basis(spec: dict):
    _check_keys(spec, TIME_KEYS, "model.time", {"kind"})
    kind = spec["kind"]
    args = (spec.get("variable", "t"), float(spec.get("lower", 0.0)), float(spec.get("upper", 1.0)))
    if kind == "linear":
        return linear_basis(*args)
    if kind == "quadratic":
        return quadratic_basis(*args)
    raise ScenarioError(f"model.time: unknown kind '{kind}' (linear, quadratic)")


def _variance(spec: dict, p2: int):
    if not isinstance(spec, dict):
        raise ScenarioError("variance: expected an object")
    if set(spec) & {"sigma1", "sigma2", "rho"}:
        _check_keys(spec, SD_KEYS, "variance", SD_KEYS)
        if p2 != 2:
            raise ScenarioError("variance: (sigma1, sigma2, rho) needs a two-parameter time basis")
        vals = [float(spec[k]) for k in ("sigma1", "sigma2", "rho", "sigma_eps")]
        vc = VarianceComponents.from_sd_corr(*vals)
        return vc, sd_corr_parametrization(*vals)
    _check_keys(spec, MATRIX_KEYS, "variance", {"sigma_gamma"})
    sg = np.asarray(spec["sigma_gamma"], dtype=float)
    if sg.shape != (p2, p2):
        raise ScenarioError(f"variance.sigma_gamma must be {p2} x {p2}")
    if ("sigma_eps" in spec) == ("eps_cov" in spec):
        raise ScenarioError("variance: give exactly one of sigma_eps and eps_cov")
    if "sigma_eps" in spec:
        return VarianceComponents(sg, eps_var=float(spec["sigma_eps"]) ** 2), None
    return VarianceComponents(sg, eps_cov=np.asarray(spec["eps_cov"], dtype=float)), None


def scenario_from_dict(d: dict) -> Scenario:
    _check_keys(d, TOP_KEYS, "scenario", REQUIRED)
    m = d["model"]
    _check_keys(m, {"stress_factors", "time"}, "model", {"stress_factors", "time"})
    factors = m["stress_factors"]
    if not isinstance(factors, list) or not factors:
        raise ScenarioError("model.stress_factors must be a non-empty list")
    try:
        model = ProductModel(tuple(_factor_basis(f, i) for i, f in enumerate(factors)), _time_basis(m["time"]))
        vc, par = _variance(d["variance"], model.p2)
        extra = {}
        if "time_grid" in d:
            _check_keys(d["time_grid"], GRID_KEYS, "time_grid", GRID_KEYS)
            extra["time_grid"] = {"delta_t": float(d["time_grid"]["delta_t"]), "k": int(d["time_grid"]["k"])}
        if "description" in d:
            extra["description"] = str(d["description"])
        return Scenario(
            model=model,
            beta=d["beta"],
            varcomps=vc,
            use_condition=d["use_condition"],
            threshold=float(d["threshold"]),
            alpha=float(d.get("alpha", 0.5)),
            parametrization=par,
            time_plan=d.get("time_plan"),
            name=str(d.get("name", "")),
            extra=extra,
        )
    except ScenarioError:
        raise
    except (TypeError, ValueError) as e:
        raise ScenarioError(f"invalid scenario: {e}") from e


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ScenarioError(f"cannot read scenario file {path}: {e.strerror}") from e
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"{path}: not valid JSON ({e})") from e
    return scenario_from_dict(d)


# ---------------------------------------------------------------------------
# Design CSV
# ---------------------------------------------------------------------------


def design_to_csv(design: ApproximateDesign, variables) -> str:
    """One row per support point; floats written with ``repr`` so a re-read is bit-exact."""
    variables = list(variables)
    if len(variables) != design.dim:
        raise ValueError("variable names do not match the design dimension")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(variables + ["weight"])
    for p, wt in zip(design.support, design.weights):
        w.writerow([repr(float(v)) for v in p] + [repr(float(wt))])
    return buf.getvalue()


def read_design_csv(path_or_text, variables=None) -> tuple[ApproximateDesign, list[str]]:
    """Read a design CSV with a ``weight`` (or ``count``) column.

    With ``variables`` given, the remaining columns are selected in that
    order and must all be present.
    """
    if isinstance(path_or_text, Path) or (isinstance(path_or_text, str) and "\n" not in path_or_text):
        try:
            text = Path(path_or_text).read_text()
        except OSError as e:
            raise ScenarioError(f"cannot read design file {path_or_text}: {e.strerror}") from e
    else:
        text = path_or_text
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if len(rows) < 2:
        raise ScenarioError("design file needs a header and at least one row")
    header = [h.strip() for h in rows[0]]
    if "weight" in header:
        wcol = header.index("weight")
    elif "count" in header:
        wcol = header.index("count")
    else:
        raise ScenarioError("design file needs a 'weight' or 'count' column")
    names = [h for i, h in enumerate(header) if i != wcol]
    if variables is not None:
        missing = [v for v in variables if v not in header]
        if missing:
            raise ScenarioError(f"design file lacks column(s) {missing}")
        names = list(variables)
    cols = [header.index(v) for v in names]
    try:
        pts = np.array([[float(r[j]) for j in cols] for r in rows[1:]])
        w = np.array([float(r[wcol]) for r in rows[1:]])
    except (ValueError, IndexError) as e:
        raise ScenarioError(f"design file: bad numeric entry ({e})") from e
    if np.any(w < 0) or w.sum() <= 0:
        raise ScenarioError("design file: weights must be non-negative with positive total")
    keep = w > 0
    w = w[keep] / w[keep].sum()
    try:
        return ApproximateDesign(pts[keep], w), names
    except ValueError as e:
        raise ScenarioError(f"design file: {e}") from e
