"""Simulate rated rides under one preference mode and write a training CSV
for `modfleet train-ratings`.

    python scripts/rating_dataset.py out.csv --mode wait --rows 2000
"""

import argparse
import csv
import os

from modfleet.network import load_bundled_graph
from modfleet.positioning import ensure_table
from modfleet.ratings import PREFERENCE_MODES
from modfleet.simulator import CUSTOMER_COLUMNS, SimConfig, run_simulation, write_customers

COSTS = ("distance", "rater_ride", "rater_service", "rater_wait")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out")
    ap.add_argument("--mode", choices=sorted(PREFERENCE_MODES), default="wait")
    ap.add_argument("--rows", type=int, default=2000)
    ap.add_argument("--rate", type=float, default=0.35)
    ap.add_argument("--seed", type=int, default=10_000)
    args = ap.parse_args()

    g = load_bundled_graph()
    table, _, _ = ensure_table(g, 3)
    n, k = 0, 0
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CUSTOMER_COLUMNS)
        while n < args.rows:
            cfg = SimConfig(arrival_rate_per_vehicle=args.rate, capacity=3, positioning="predictive",
                            cost=COSTS[k % len(COSTS)], preference_mode=args.mode, seed=args.seed + k)
            res = run_simulation(cfg, g, table)
            tmp = f"{args.out}.part"
            write_customers(res, tmp)
            with open(tmp) as part:
                rows = [r for r in csv.reader(part)][1:]
            rows = [r for r in rows if r[-1] == "1"][: args.rows - n]
            w.writerows(rows)
            n += len(rows)
            k += 1
    os.remove(f"{args.out}.part")
    print(f"{n} rated rides from {k} simulations -> {args.out}")


if __name__ == "__main__":
    main()
