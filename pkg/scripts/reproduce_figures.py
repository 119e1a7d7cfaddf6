"""Run both experiment presets on the bundled graph and write CSVs and SVGs.

    python scripts/reproduce_figures.py [out_dir] [--jobs N] [--quick]

--quick cuts seeds and training runs for a smoke test.
"""

import argparse
import time
from dataclasses import replace
from pathlib import Path

from modfleet.experiments import (
    ArrivalSweepConfig,
    PreferenceModesConfig,
    arrival_sweep,
    preference_modes,
    write_modes,
    write_sweep,
)
from modfleet.network import load_bundled_graph
from modfleet.plots import plot_modes, plot_sweep
from modfleet.positioning import ensure_table


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out", nargs="?", default="results")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--quick", action="store_true")
    args = ap.parse_args()
    out = Path(args.out)

    g = load_bundled_graph()
    table, path, built = ensure_table(g, 3)
    print(f"wait table {path} ({'built' if built else 'cached'})")

    sweep_cfg = ArrivalSweepConfig()
    modes_cfg = PreferenceModesConfig()
    if args.quick:
        sweep_cfg.seeds = 5
        modes_cfg.seeds, modes_cfg.training_runs = 2, 2

    t = time.perf_counter()
    res = arrival_sweep(sweep_cfg, g, table, args.jobs)
    paths = write_sweep(res, out / "arrival_sweep")
    plot_sweep(paths["aggregate"], out / "arrival_sweep" / "arrival_sweep.svg")
    print(f"arrival sweep: {time.perf_counter() - t:.0f}s")
    for lam in (0.1, 0.2, 0.5):
        base = res.mean_at("unmanaged_q1", lam)
        print(f"  rate {lam}: predictive_q1 {1 - res.mean_at('predictive_q1', lam) / base:+.1%}, "
              f"predictive_q3 {1 - res.mean_at('predictive_q3', lam) / base:+.1%} vs unmanaged_q1")

    t = time.perf_counter()
    mres = preference_modes(modes_cfg, g, table, args.jobs)
    paths = write_modes(mres, out / "preference_modes")
    plot_modes(paths["aggregate"], out / "preference_modes" / "preference_modes.svg")
    print(f"preference modes: {time.perf_counter() - t:.0f}s")
    print("strategy     " + " ".join(f"{m:>8s}" for m in (*mres.modes, "average")))
    for row in mres.table():
        print(f"{row[0]:12s} " + " ".join(f"{v:8.3f}" for v in row[1:]))


if __name__ == "__main__":
    main()
