"""Experiment presets: the arrival-rate sweep and the preference-mode grid.

Each preset fans independent (config, seed) simulations out over a process
pool. Results are collected in submission order, so output files do not
depend on ``jobs``.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .forest import ForestParams, RandomForest, train_on_metrics
from .network import NetworkGraph
from .positioning import WaitTimeTable
from .ratings import PREFERENCE_MODES
from .simulator import SimConfig, run_simulation

PRESETS = ("arrival-sweep", "preference-modes")

# label -> (positioning, capacity)
SWEEP_STRATEGIES = {
    "unmanaged_q1": ("unmanaged", 1),
    "predictive_q1": ("predictive", 1),
    "unmanaged_q3": ("unmanaged", 3),
    "predictive_q3": ("predictive", 3),
}

# label -> cost preset; the focused strategies score candidates with the
# ground-truth rater skewed fully toward their own metric
MODE_STRATEGIES = {
    "Distance": "distance",
    "RideTime": "rater_ride",
    "ServiceTime": "rater_service",
    "WaitTime": "rater_wait",
    "Ratings": "ratings",
}
TRAINING_COSTS = ("distance", "rater_ride", "rater_service", "rater_wait")


def default_rates():
    return [round(0.05 * k, 2) for k in range(1, 13)]


@dataclass
class ArrivalSweepConfig:
    base: SimConfig = field(default_factory=lambda: SimConfig(cost="service_time"))
    rates: list = field(default_factory=default_rates)
    seeds: int = 100
    strategies: tuple = tuple(SWEEP_STRATEGIES)


@dataclass
class PreferenceModesConfig:
    base: SimConfig = field(
        default_factory=lambda: SimConfig(arrival_rate_per_vehicle=0.35, capacity=3, positioning="predictive")
    )
    modes: tuple = tuple(PREFERENCE_MODES)
    strategies: tuple = tuple(MODE_STRATEGIES)
    seeds: int = 20
    training_runs: int = 10
    training_seed_base: int = 10_000
    drop_distance_features: bool = True
    forest: ForestParams = field(default_factory=ForestParams)


# worker state, set once per process so the graph and table are not re-sent per task
_WORKER = {}


def _init_worker(graph, table, forests):
    _WORKER.update(graph=graph, table=table, forests=forests)


def _run_one(task):
    cfg, forest_key, keep_rows = task
    forest = _WORKER["forests"].get(forest_key) if forest_key is not None else None
    res = run_simulation(cfg, _WORKER["graph"], _WORKER["table"], forest=forest)
    rows = None
    if keep_rows:
        counted = res.counted()
        rows = (np.array([r.metrics.as_array() for r in counted]), np.array([r.rating for r in counted]))
    return res.summary(), rows


def _map(tasks, graph, table, forests, jobs):
    if jobs <= 1:
        _init_worker(graph, table, forests)
        return [_run_one(t) for t in tasks]
    with ProcessPoolExecutor(jobs, initializer=_init_worker, initargs=(graph, table, forests)) as ex:
        return list(ex.map(_run_one, tasks, chunksize=max(1, len(tasks) // (8 * jobs))))


def _std(xs) -> float:
    return float(np.std(xs, ddof=1)) if len(xs) > 1 else 0.0


def _nanmean(xs) -> float:
    xs = [x for x in xs if not math.isnan(x)]
    return math.fsum(xs) / len(xs) if xs else float("nan")


@dataclass
class SweepResult:
    runs: list  # (strategy, rate, seed, summary)
    table: list  # (strategy, rate, mean, std, n)
    elapsed_s: float = 0.0

    def series(self, strategy):
        rows = [r for r in self.table if r[0] == strategy]
        return np.array([r[1] for r in rows]), np.array([r[2] for r in rows]), np.array([r[3] for r in rows])

    def mean_at(self, strategy, rate) -> float:
        for s, lam, m, _, _ in self.table:
            if s == strategy and math.isclose(lam, rate):
                return m
        raise KeyError((strategy, rate))


def arrival_sweep(cfg: ArrivalSweepConfig, graph: NetworkGraph, table: WaitTimeTable | None, jobs: int = 1) -> SweepResult:
    """Mean normalized service time per strategy and fleet-normalized arrival rate."""
    t0 = time.perf_counter()
    keys, tasks = [], []
    for s in cfg.strategies:
        positioning, capacity = SWEEP_STRATEGIES[s]
        for lam in cfg.rates:
            for seed in range(cfg.seeds):
                c = replace(cfg.base, positioning=positioning, capacity=capacity, arrival_rate_per_vehicle=lam,
                            rates_per_min=None, seed=seed)
                keys.append((s, lam, seed))
                tasks.append((c, None, False))
    out = _map(tasks, graph, table, {}, jobs)
    runs = [(s, lam, seed, summ) for (s, lam, seed), (summ, _) in zip(keys, out)]
    agg = []
    for s in cfg.strategies:
        for lam in cfg.rates:
            vals = [summ["mean_normalized_service"] for st, l, _, summ in runs if st == s and l == lam]
            vals = [v for v in vals if not math.isnan(v)]
            agg.append((s, lam, _nanmean(vals), _std(vals), len(vals)))
    return SweepResult(runs, agg, time.perf_counter() - t0)


@dataclass
class ModesResult:
    runs: list  # (strategy, mode, seed, summary)
    grid: dict  # (strategy, mode) -> mean rating
    forests: dict
    strategies: tuple
    modes: tuple
    elapsed_s: float = 0.0

    def average(self, strategy) -> float:
        return float(np.mean([self.grid[(strategy, m)] for m in self.modes]))

    def table(self):
        """Rows of [strategy, one mean rating per mode..., average]."""
        return [[s] + [self.grid[(s, m)] for m in self.modes] + [self.average(s)] for s in self.strategies]


def train_mode_forest(cfg: PreferenceModesConfig, mode: str, graph, table, jobs: int = 1) -> RandomForest:
    """Forest fitted to ratings gathered from ``training_runs`` simulations under ``mode``."""
    tasks = []
    for k in range(cfg.training_runs):
        c = replace(cfg.base, preference_mode=mode, cost=TRAINING_COSTS[k % len(TRAINING_COSTS)],
                    seed=cfg.training_seed_base + k)
        tasks.append((c, None, True))
    out = _map(tasks, graph, table, {}, jobs)
    X = np.concatenate([rows[0] for _, rows in out if len(rows[1])])
    Y = np.concatenate([rows[1] for _, rows in out if len(rows[1])])
    return train_on_metrics(X, Y, cfg.forest, drop_distance=cfg.drop_distance_features)


def preference_modes(cfg: PreferenceModesConfig, graph: NetworkGraph, table: WaitTimeTable | None, jobs: int = 1) -> ModesResult:
    """Mean customer rating per (strategy, preference mode)."""
    t0 = time.perf_counter()
    forests = {}
    if "Ratings" in cfg.strategies:
        for mode in cfg.modes:
            forests[mode] = train_mode_forest(cfg, mode, graph, table, jobs)
    keys, tasks = [], []
    for mode in cfg.modes:
        for s in cfg.strategies:
            cost = MODE_STRATEGIES[s]
            for seed in range(cfg.seeds):
                c = replace(cfg.base, preference_mode=mode, cost=cost, seed=seed)
                keys.append((s, mode, seed))
                tasks.append((c, mode if cost == "ratings" else None, False))
    out = _map(tasks, graph, table, forests, jobs)
    runs = [(s, mode, seed, summ) for (s, mode, seed), (summ, _) in zip(keys, out)]
    grid = {}
    for s in cfg.strategies:
        for mode in cfg.modes:
            grid[(s, mode)] = _nanmean([summ["mean_rating"] for st, m, _, summ in runs if st == s and m == mode])
    return ModesResult(runs, grid, forests, tuple(cfg.strategies), tuple(cfg.modes), time.perf_counter() - t0)


def _fmt(x) -> str:
    if isinstance(x, float):
        return "" if math.isnan(x) else repr(x)
    return str(x)


def _write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return Path(path)


RUN_COLUMNS = ("mean_normalized_service", "mean_rating", "rejection_rate", "n_counted", "fleet_distance_m")


def write_sweep(result: SweepResult, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return {
        "aggregate": _write(out / "arrival_sweep.csv",
                            ["strategy", "rate_per_vehicle", "mean_normalized_service", "std_normalized_service", "n_runs"],
                            result.table),
        "runs": _write(out / "arrival_sweep_runs.csv", ["strategy", "rate_per_vehicle", "seed", *RUN_COLUMNS],
                       [(s, lam, seed, *(summ[k] for k in RUN_COLUMNS)) for s, lam, seed, summ in result.runs]),
    }


def write_modes(result: ModesResult, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "aggregate": _write(out / "preference_modes.csv", ["strategy", *result.modes, "average"], result.table()),
        "runs": _write(out / "preference_modes_runs.csv", ["strategy", "mode", "seed", *RUN_COLUMNS],
                       [(s, m, seed, *(summ[k] for k in RUN_COLUMNS)) for s, m, seed, summ in result.runs]),
    }
    for mode, f in result.forests.items():
        paths[f"forest_{mode}"] = out / f"forest_{mode}.npz"
        f.save(paths[f"forest_{mode}"])
    return paths


def read_sweep(path):
    with open(path) as fh:
        return [(r["strategy"], float(r["rate_per_vehicle"]), float(r["mean_normalized_service"]),
                 float(r["std_normalized_service"]), int(r["n_runs"])) for r in csv.DictReader(fh)]


def read_modes(path):
    with open(path) as fh:
        rd = csv.reader(fh)
        header = next(rd)
        return header[1:], [(r[0], [float(x) for x in r[1:]]) for r in rd]
