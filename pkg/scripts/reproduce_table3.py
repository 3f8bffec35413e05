"""Efficiency of uniform stress designs for extrapolation, closed form next to direct evaluation.

    python3 scripts/reproduce_table3.py
"""
import math

from degradation_doe.designs import (
    ApproximateDesign,
    c_criterion,
    c_value,
    continuous_uniform_info,
    uniform_efficiency_closed,
    uniform_grid_design,
)
from degradation_doe.model import linear_basis
from degradation_doe.stress_design import extrapolation_two_point

X_U = [0.0, -0.056, -0.4, -0.5, -1.0, -math.inf]
M_VALUES = [2, 3, 4, 5, math.inf]


def numeric(m, xu, basis):
    xu = -1e6 if math.isinf(xu) else xu
    c = basis.at(xu)
    opt = extrapolation_two_point(xu) if xu < 0 else ApproximateDesign([0.0], [1.0])
    val = c_value(continuous_uniform_info(basis), c) if math.isinf(m) else c_criterion(uniform_grid_design(m), basis, c)
    return c_criterion(opt, basis, c) / val


def main():
    lb = linear_basis("x")
    print("m     " + "".join(f"{x:>16}" for x in ("0", "-0.056", "-0.4", "-0.5", "-1", "-inf")))
    for m in M_VALUES:
        cells = []
        for xu in X_U:
            cl, nu = uniform_efficiency_closed(m, xu), numeric(m, xu, lb)
            cells.append(f"{cl:7.4f}/{nu:7.4f} ")
        print(f"{'inf' if math.isinf(m) else m:<6}" + "".join(cells))
    print("(closed form / direct criterion evaluation)")


if __name__ == "__main__":
    main()
