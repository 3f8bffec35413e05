"""Plot data for the destructive-design sensitivity study (CSV only, no images).

    python3 scripts/sensitivity_figures.py [SCENARIO] [OUT_DIR]

Writes efficiencies of the nominal optimal, two-point uniform and six-point
uniform time plans against misspecified median and standard-deviation ratio,
and the optimal weight pi* along both paths.
"""
import sys
from pathlib import Path

import numpy as np

from degradation_doe.destructive import pi_star_curves, sensitivity_curves
from degradation_doe.scenario_io import load_scenario

ROOT = Path(__file__).resolve().parent.parent


def main(scenario_path, out_dir):
    sc = load_scenario(scenario_path)
    out_dir.mkdir(parents=True, exist_ok=True)
    t_curve, r_curve = sensitivity_curves(sc)
    (out_dir / "sensitivity_t_half.csv").write_text(t_curve.to_csv())
    (out_dir / "sensitivity_ratio.csv").write_text(r_curve.to_csv())
    by_t, by_r = pi_star_curves(sc)
    np.savetxt(out_dir / "pi_star_t_half.csv", by_t, delimiter=",", header="t_half,pi_star", comments="", fmt="%.12g")
    np.savetxt(out_dir / "pi_star_ratio.csv", by_r, delimiter=",", header="sigma_ratio,pi_star", comments="",
               fmt="%.12g")
    for c in (t_curve, r_curve):
        i = int(np.nanargmin(c.eff_uniform2))
        print(f"{c.parameter}: lowest two-point uniform efficiency {c.eff_uniform2[i]:.3f} at {c.probe[i]:.3g}")
    print(f"wrote 4 files to {out_dir}")


if __name__ == "__main__":
    scen = Path(sys.argv[1]) if len(sys.argv) > 1 else ROOT / "scenarios" / "example1.json"
    out = Path(sys.argv[2]) if len(sys.argv) > 2 else ROOT / "results" / "sensitivity"
    main(scen, out)
