"""Command-line entry point: ``modfleet <subcommand>``.

Exit codes: 0 success, 2 configuration error, 3 missing artifact (wait-table
cache or ratings model), 4 runtime failure.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import sys
from pathlib import Path

import click
import numpy as np

from . import experiments as ex
from .forest import ForestParams, RandomForest, features_from_rows, train_on_metrics
from .metrics import COL, CSV_COLUMNS, FIELDS, WIDTH
from .network import GraphError, bundled_graph_path, load_graph, precompute_routes
from .plots import plot_modes, plot_sweep
from .positioning import cache_path, ensure_table, load_table
from .simulator import ConfigError, MissingArtifactError, SimConfig, audit, run_simulation, write_outputs

EXIT_CONFIG, EXIT_MISSING, EXIT_RUNTIME = 2, 3, 4

_SIM_TYPES = {
    "graph_path": (str, type(None)),
    "duration_s": (int, float),
    "rates_per_min": (dict, type(None)),
    "arrival_rate_per_vehicle": (int, float, type(None)),
    "n_active_nodes": int,
    "max_node_rate_per_min": (int, float),
    "n_vehicles": int,
    "capacity": int,
    "positioning": str,
    "cost": str,
    "preference_mode": str,
    "rater_concentration": (list, type(None)),
    "seed": int,
    "decision_latency_s": (int, float),
    "pedestrian_speed_mps": (int, float),
    "initial_nodes": (list, type(None)),
    "scripted_arrivals": (list, type(None)),
    "cache_dir": (str, type(None)),
    "audit": bool,
}
_TOP_TYPES = {"output_dir": str, "plots": bool, "forest_path": (str, type(None)), "experiment": dict}
_EXP_TYPES = {
    "rates": list,
    "seeds": int,
    "strategies": list,
    "modes": list,
    "training_runs": int,
    "training_seed_base": int,
    "drop_distance_features": bool,
    "forest_trees": int,
    "jobs": int,
}


def _check_types(doc: dict, types: dict, where: str):
    for k, v in doc.items():
        if k not in types:
            raise ConfigError(f"{where}: unknown key {k!r}")
        t = types[k]
        # bool is an int subclass; do not let true/false stand in for numbers
        if isinstance(v, bool) and t is not bool and (not isinstance(t, tuple) or bool not in t):
            raise ConfigError(f"{where}.{k}: expected a number, got {v!r}")
        if not isinstance(v, t):
            raise ConfigError(f"{where}.{k}: wrong type {type(v).__name__}")


def parse_config(doc: dict) -> tuple[SimConfig, dict]:
    """Validate a scenario document; returns the simulation config and the remaining options."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    sim_keys = {k: v for k, v in doc.items() if k in _SIM_TYPES}
    rest = {k: v for k, v in doc.items() if k not in _SIM_TYPES}
    _check_types(sim_keys, _SIM_TYPES, "config")
    _check_types(rest, _TOP_TYPES, "config")
    _check_types(rest.get("experiment", {}), _EXP_TYPES, "config.experiment")
    if "rater_concentration" in sim_keys and sim_keys["rater_concentration"] is not None:
        sim_keys["rater_concentration"] = tuple(sim_keys["rater_concentration"])
    cfg = SimConfig(**sim_keys)
    if cfg.cost.startswith("rater_"):
        if cfg.cost[len("rater_"):] not in ("wait", "ride", "service", "stops", "distance"):
            raise ConfigError(f"unknown cost {cfg.cost!r}")
    elif cfg.cost not in ("service_time", "wait_time", "ride_time", "distance", "ratings"):
        raise ConfigError(f"unknown cost {cfg.cost!r}")
    return cfg.validate(), rest


def read_config(path) -> tuple[SimConfig, dict]:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: not valid JSON ({e})") from e
    return parse_config(doc)


def _graph(cfg: SimConfig):
    try:
        return precompute_routes(load_graph(cfg.graph_path or bundled_graph_path(), pedestrian_speed_mps=cfg.pedestrian_speed_mps))
    except GraphError as e:
        raise ConfigError(str(e)) from e


def _table(cfg: SimConfig, graph, n_vehicles=None):
    n = n_vehicles or cfg.n_vehicles
    path = cache_path(graph, n, cfg.cache_dir)
    if not path.exists():
        raise MissingArtifactError(
            f"predictive positioning needs a wait-time table at {path}; run `modfleet precompute --vehicles {n}` first"
        )
    return load_table(path, graph)


def _forest(path):
    if path is None:
        raise MissingArtifactError("the ratings cost needs `forest_path` in the config (see `modfleet train-ratings`)")
    if not Path(path).exists():
        raise MissingArtifactError(f"ratings model {path} not found; run `modfleet train-ratings` first")
    return RandomForest.load(path)


def _guard(fn):
    """Map package exceptions onto exit codes."""

    def wrapped(*a, **kw):
        try:
            return fn(*a, **kw)
        except (click.ClickException, click.exceptions.Exit, click.Abort):
            raise
        except MissingArtifactError as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(EXIT_MISSING)
        except ConfigError as e:
            click.echo(f"config error: {e}", err=True)
            sys.exit(EXIT_CONFIG)
        except Exception as e:  # noqa: BLE001
            click.echo(f"failed: {type(e).__name__}: {e}", err=True)
            sys.exit(EXIT_RUNTIME)

    wrapped.__name__ = fn.__name__
    wrapped.__doc__ = fn.__doc__
    return wrapped


@click.group()
def main():
    """Mobility-on-demand fleet simulation: positioning, ridesharing and ratings."""


@main.command()
@click.option("--graph", "graph_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Graph JSON (default: bundled campus graph).")
@click.option("--vehicles", type=click.IntRange(min=1), required=True, help="Fleet size.")
@click.option("--out", type=click.Path(file_okay=False), default=None,
              help="Cache directory (default: $MOD_CACHE_DIR or ~/.cache/modfleet).")
@_guard
def precompute(graph_path, vehicles, out):
    """Build the route table and the wait-time table cache."""
    g = _graph(SimConfig(graph_path=graph_path))
    try:
        table, path, built = ensure_table(g, vehicles, out)
    except MemoryError as e:
        raise ConfigError(str(e)) from e
    state = "written" if built else "up to date"
    click.echo(f"{path}: {state} ({g.n_nodes} nodes, {g.n_links} links, f=1..{table.n_vehicles})")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--seed", type=int, default=None, help="Overrides the config seed.")
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")
@_guard
def simulate(config_path, seed, out):
    """Run one simulation and write events, per-customer metrics and a summary."""
    cfg, rest = read_config(config_path)
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
    g = _graph(cfg)
    table = _table(cfg, g) if cfg.positioning == "predictive" else None
    forest = _forest(rest.get("forest_path")) if cfg.cost == "ratings" else None
    result = run_simulation(cfg, g, table, forest=forest)
    problems = audit(result, g) if cfg.audit else []
    out_dir = Path(out or Path(rest.get("output_dir", "runs")) / f"seed_{cfg.seed}")
    paths = write_outputs(result, out_dir)
    s = result.summary()
    click.echo(
        f"{s['n_customers']} customers, {s['n_rejected']} rejected; mean normalized service "
        f"{s['mean_normalized_service']:.4f}, mean rating {s['mean_rating']:.3f} -> {paths['summary'].parent}"
    )
    if problems:
        for p in problems:
            click.echo(f"audit: {p}", err=True)
        sys.exit(EXIT_RUNTIME)


def _sweep_config(cfg: SimConfig, opts: dict) -> ex.ArrivalSweepConfig:
    sc = ex.ArrivalSweepConfig(base=cfg)
    if "rates" in opts:
        sc.rates = [float(x) for x in opts["rates"]]
    if "seeds" in opts:
        sc.seeds = opts["seeds"]
    if "strategies" in opts:
        bad = set(opts["strategies"]) - set(ex.SWEEP_STRATEGIES)
        if bad:
            raise ConfigError(f"unknown sweep strategies {sorted(bad)}; choose from {list(ex.SWEEP_STRATEGIES)}")
        sc.strategies = tuple(opts["strategies"])
    return sc


def _modes_config(cfg: SimConfig, opts: dict) -> ex.PreferenceModesConfig:
    mc = ex.PreferenceModesConfig(base=cfg)
    for k in ("seeds", "training_runs", "training_seed_base", "drop_distance_features"):
        if k in opts:
            setattr(mc, k, opts[k])
    if "modes" in opts:
        mc.modes = tuple(opts["modes"])
    if "strategies" in opts:
        bad = set(opts["strategies"]) - set(ex.MODE_STRATEGIES)
        if bad:
            raise ConfigError(f"unknown strategies {sorted(bad)}; choose from {list(ex.MODE_STRATEGIES)}")
        mc.strategies = tuple(opts["strategies"])
    if "forest_trees" in opts:
        mc.forest = dataclasses.replace(mc.forest, n_trees=opts["forest_trees"])
    for m in mc.modes:
        dataclasses.replace(cfg, preference_mode=m).validate()
    return mc


@main.command()
@click.argument("preset", type=click.Choice(ex.PRESETS))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Scenario JSON; preset defaults apply when omitted.")
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")
@click.option("--jobs", type=click.IntRange(min=1), default=None, help="Parallel worker processes.")
@_guard
def experiment(preset, config_path, out, jobs):
    """Run an experiment preset and write aggregate CSVs and SVG plots."""
    if config_path:
        cfg, rest = read_config(config_path)
    else:
        cfg, rest = SimConfig(), {}
    opts = rest.get("experiment", {})
    jobs = jobs or opts.get("jobs", 1)
    out_dir = Path(out or rest.get("output_dir", f"results/{preset}"))
    g = _graph(cfg)
    if preset == "arrival-sweep":
        sc = _sweep_config(cfg, opts)
        needs_table = any(ex.SWEEP_STRATEGIES[s][0] == "predictive" for s in sc.strategies)
        table = _table(cfg, g) if needs_table else None
        res = ex.arrival_sweep(sc, g, table, jobs)
        paths = ex.write_sweep(res, out_dir)
        if rest.get("plots", True):
            paths["plot"] = plot_sweep(paths["aggregate"], out_dir / "arrival_sweep.svg")
        for s, lam, m, sd, n in res.table:
            click.echo(f"{s:14s} rate {lam:.2f}: {m:.4f} +- {sd:.4f} (n={n})")
    else:
        if not config_path:
            cfg = ex.PreferenceModesConfig().base
        mc = _modes_config(cfg, opts)
        table = _table(mc.base, g) if mc.base.positioning == "predictive" else None
        res = ex.preference_modes(mc, g, table, jobs)
        paths = ex.write_modes(res, out_dir)
        if rest.get("plots", True):
            paths["plot"] = plot_modes(paths["aggregate"], out_dir / "preference_modes.svg")
        click.echo("strategy     " + " ".join(f"{m:>8s}" for m in (*res.modes, "average")))
        for row in res.table():
            click.echo(f"{row[0]:12s} " + " ".join(f"{v:8.3f}" for v in row[1:]))
    click.echo(f"wrote {out_dir} in {res.elapsed_s:.1f}s")


def read_rated_rows(path) -> tuple[np.ndarray, np.ndarray]:
    """Metric rows and ratings from a customers CSV (as written by ``simulate``)."""
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        if rd.fieldnames is None:
            raise ConfigError(f"{path}: empty file")
        missing = [c for c in (*CSV_COLUMNS, "rating") if c not in rd.fieldnames]
        if missing:
            raise ConfigError(f"{path}: missing columns {missing}")
        rows, ys = [], []
        for i, r in enumerate(rd, start=2):
            if r.get("counted", "1") == "0":
                continue
            v = np.full(WIDTH, np.nan)
            try:
                for name, col in zip(FIELDS, CSV_COLUMNS):
                    v[COL[name]] = float(r[col]) if r[col] != "" else math.nan
                y = int(r["rating"])
            except (TypeError, ValueError) as e:
                raise ConfigError(f"{path}:{i}: malformed row ({e})") from e
            if not 1 <= y <= 5 or v[0] not in (0.0, 1.0):
                raise ConfigError(f"{path}:{i}: rating must be 1..5 and rejected 0 or 1")
            rows.append(v)
            ys.append(y)
    return np.array(rows).reshape(-1, WIDTH), np.array(ys, dtype=np.int64)


@main.command("train-ratings")
@click.option("--data", type=click.Path(exists=True, dir_okay=False), required=True, multiple=True,
              help="Customers CSV with metrics and ratings; repeatable.")
@click.option("--drop-distance-features", is_flag=True, help="Leave traveled distance out of the features.")
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Model file (.npz).")
@click.option("--test-fraction", type=click.FloatRange(0.0, 0.9), default=0.2, show_default=True)
@click.option("--trees", type=click.IntRange(min=1), default=ForestParams.n_trees, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@_guard
def train_ratings(data, drop_distance_features, out, test_fraction, trees, seed):
    """Train the ratings forest and report held-out accuracy and MAE."""
    parts = [read_rated_rows(p) for p in data]
    M = np.concatenate([p[0] for p in parts])
    Y = np.concatenate([p[1] for p in parts])
    params = ForestParams(n_trees=trees, seed=seed)
    n_test = int(round(test_fraction * len(Y)))
    if len(Y) - n_test < 2 * params.min_leaf:
        raise ConfigError(f"too few samples ({len(Y)}) to train")
    perm = np.random.default_rng(seed).permutation(len(Y))
    test, train = perm[:n_test], perm[n_test:]
    forest = train_on_metrics(M[train], Y[train], params, drop_distance=drop_distance_features)
    if n_test:
        pred = forest.predict_rows(M[test])
        mae = float(np.abs(pred - Y[test]).mean())
        acc = float((forest.predict_class(features_from_rows(M[test], forest.layout)) == Y[test]).mean())
        click.echo(f"held-out n={n_test}: MAE {mae:.4f} stars, accuracy {acc:.4f}")
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    forest.save(out)
    click.echo(f"trained on {len(train)} rows ({len(forest.layout)} features) -> {out}")


if __name__ == "__main__":
    main()
