"""Run the command line tool on the bundled example scenarios.

    python3 scripts/run_examples.py [OUT_DIR]

Writes one subdirectory per example with the failure-time report and the
stress, time and destructive designs that apply to it.
"""
import sys
from pathlib import Path

from degradation_doe.cli import main as cli

ROOT = Path(__file__).resolve().parent.parent
JOBS = {
    "example1": [["failure-time"], ["design", "stress", "--benchmark"], ["design", "destructive", "--sensitivity"]],
    "example2": [["failure-time"], ["design", "stress", "--benchmark"], ["design", "time"],
                 ["design", "destructive"]],
    "example3": [["failure-time"], ["design", "stress", "--benchmark"]],
}


def run(out_root: Path) -> int:
    worst = 0
    for name, jobs in JOBS.items():
        scen = ROOT / "scenarios" / f"{name}.json"
        out = out_root / name
        out.mkdir(parents=True, exist_ok=True)
        for job in jobs:
            head = 2 if job[0] == "design" else 1
            args = job[:head] + [str(scen)] + job[head:]
            print(f"== {name}: {' '.join(job)}", flush=True)
            code = cli(args + ["--out-dir", str(out)])
            worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(run(Path(sys.argv[1]) if len(sys.argv) > 1 else ROOT / "results"))
