import csv
import json

import numpy as np
import pytest
from click.testing import CliRunner

from modfleet.cli import main, parse_config, read_rated_rows
from modfleet.metrics import COL, WIDTH, RideMetrics
from modfleet.ratings import PREFERENCE_MODES, SimulatedRater, simulated_rating
from modfleet.simulator import ConfigError


@pytest.fixture
def cache(tmp_path, monkeypatch, campus, campus_table):
    from modfleet.positioning import cache_path, save_table

    d = tmp_path / "cache"
    save_table(campus_table, cache_path(campus, 3, d))
    monkeypatch.setenv("MOD_CACHE_DIR", str(d))
    return d


def write_config(path, **kw):
    doc = {"duration_s": 1800, "arrival_rate_per_vehicle": 0.4, "capacity": 3, "positioning": "predictive",
           "audit": True}
    doc.update(kw)
    path.write_text(json.dumps(doc))
    return str(path)


def run(args):
    return CliRunner().invoke(main, args, catch_exceptions=False)


def test_precompute_and_noop(tmp_path):
    out = tmp_path / "c"
    r = run(["precompute", "--vehicles", "2", "--out", str(out)])
    assert r.exit_code == 0 and "written" in r.output
    files = list(out.iterdir())
    before = files[0].read_bytes()
    r = run(["precompute", "--vehicles", "2", "--out", str(out)])
    assert r.exit_code == 0 and "up to date" in r.output
    assert files[0].read_bytes() == before
    from modfleet.positioning import load_table

    t = load_table(files[0])
    assert sorted(t.tables) == [1, 2]


def test_precompute_rejects_zero():
    assert run(["precompute", "--vehicles", "0"]).exit_code == 2


def test_simulate_twice_identical(tmp_path, cache):
    cfg = write_config(tmp_path / "c.json")
    for d in ("a", "b"):
        assert run(["simulate", "--config", cfg, "--seed", "7", "--out", str(tmp_path / d)]).exit_code == 0
    for name in ("events.csv", "customers.csv", "summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_summary_recomputes_from_customers(tmp_path, cache):
    cfg = write_config(tmp_path / "c.json", positioning="unmanaged")
    run(["simulate", "--config", cfg, "--seed", "3", "--out", str(tmp_path / "o")])
    with open(tmp_path / "o" / "customers.csv") as fh:
        rows = [r for r in csv.DictReader(fh) if r["counted"] == "1"]
    service = [float(r["service_s"]) for r in rows if r["rejected"] == "0.0"]
    with open(tmp_path / "o" / "summary.csv") as fh:
        s = next(csv.DictReader(fh))
    assert float(s["mean_service_s"]) == pytest.approx(np.mean(service), rel=1e-12)


def test_missing_cache_exit_code(tmp_path, monkeypatch):
    monkeypatch.setenv("MOD_CACHE_DIR", str(tmp_path / "nothing"))
    cfg = write_config(tmp_path / "c.json")
    r = run(["simulate", "--config", cfg])
    assert r.exit_code == 3
    assert "precompute" in r.output


def test_missing_forest_exit_code(tmp_path, cache):
    cfg = write_config(tmp_path / "c.json", cost="ratings", forest_path=str(tmp_path / "none.npz"))
    assert run(["simulate", "--config", cfg]).exit_code == 3


@pytest.mark.parametrize(
    "doc",
    [{"capacity": "3"}, {"capacity": True}, {"colour": 1}, {"positioning": "teleport"}, {"cost": "cheapest"},
     {"duration_s": -5}, {"experiment": {"bogus": 1}}],
)
def test_schema_violations(tmp_path, doc):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(doc))
    assert run(["simulate", "--config", str(p)]).exit_code == 2
    with pytest.raises(ConfigError):
        parse_config(doc)


def test_invalid_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{nope")
    assert run(["simulate", "--config", str(p)]).exit_code == 2


def test_sample_config_parses():
    from pathlib import Path

    cfg, rest = parse_config(json.loads((Path(__file__).parents[1] / "configs" / "sample.json").read_text()))
    assert cfg.n_vehicles == 3 and "output_dir" in rest


def test_experiment_sweep(tmp_path, cache):
    cfg = write_config(tmp_path / "c.json", experiment={"rates": [0.2], "seeds": 2})
    out = tmp_path / "o"
    r = run(["experiment", "arrival-sweep", "--config", cfg, "--out", str(out)])
    assert r.exit_code == 0
    svg = (out / "arrival_sweep.svg").read_text()
    assert svg.count("<polyline") == 4


def test_experiment_modes(tmp_path, cache):
    cfg = write_config(tmp_path / "c.json", duration_s=900, arrival_rate_per_vehicle=0.35,
                       experiment={"seeds": 1, "training_runs": 2, "forest_trees": 5, "modes": ["wait", "ride"]})
    out = tmp_path / "o"
    r = run(["experiment", "preference-modes", "--config", cfg, "--out", str(out)])
    assert r.exit_code == 0, r.output
    with open(out / "preference_modes.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["strategy", "wait", "ride", "average"]
    assert len(rows) == 6


def _synthetic_csv(path, mode, n, seed):
    rng = np.random.default_rng(seed)
    rater = SimulatedRater(PREFERENCE_MODES[mode], np.random.default_rng(seed + 1))
    cols = ["rejected", "ride_s", "wait_s", "service_s", "ratio", "excess_ride_s", "n_stops", "notify_s", "traveled_m",
            "walk_s", "excess_walk_s", "rating"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for _ in range(n):
            direct = rng.uniform(60, 400)
            walk = direct * rng.uniform(3, 8)
            wait = rng.exponential(150)
            ride = direct + rng.exponential(80)
            dd = direct * 8
            trav = dd * (1 + rng.exponential(0.2))
            m = RideMetrics.accepted(ride_time_s=ride, wait_time_s=wait, service_time_s=wait + ride, ratio=ride / direct,
                                     excess_ride_s=ride - direct, n_stops=int(rng.integers(0, 4)), notify_time_s=0.0,
                                     traveled_m=trav, walk_time_s=walk, excess_walk_s=wait + ride - walk,
                                     direct_time_s=direct, direct_m=dd)
            w.writerow(m.csv_row() + [simulated_rating(rater, m)])
    return str(path)


def _mae(output):
    line = next(l for l in output.splitlines() if "MAE" in l)
    return float(line.split("MAE ")[1].split()[0])


def test_train_ratings_wait_focused(tmp_path):
    data = _synthetic_csv(tmp_path / "d.csv", "wait", 2000, 1)
    r = run(["train-ratings", "--data", data, "--out", str(tmp_path / "m.npz")])
    assert r.exit_code == 0
    assert _mae(r.output) <= 0.5
    from modfleet.forest import RandomForest

    assert RandomForest.load(tmp_path / "m.npz").n_trees == 100


def test_drop_distance_features_degrades_gently(tmp_path):
    data = _synthetic_csv(tmp_path / "d.csv", "distance", 2000, 2)
    full = _mae(run(["train-ratings", "--data", data, "--out", str(tmp_path / "a.npz"), "--trees", "40"]).output)
    dropped = _mae(run(["train-ratings", "--data", data, "--out", str(tmp_path / "b.npz"), "--trees", "40",
                        "--drop-distance-features"]).output)
    assert dropped - full < 0.5


def test_train_ratings_errors(tmp_path):
    empty = tmp_path / "e.csv"
    empty.write_text("")
    assert run(["train-ratings", "--data", str(empty), "--out", str(tmp_path / "m.npz")]).exit_code == 2
    bad = tmp_path / "b.csv"
    bad.write_text("rejected,ride_s\n0,1\n")
    assert run(["train-ratings", "--data", str(bad), "--out", str(tmp_path / "m.npz")]).exit_code == 2
    tiny = _synthetic_csv(tmp_path / "t.csv", "wait", 5, 0)
    assert run(["train-ratings", "--data", tiny, "--out", str(tmp_path / "m.npz")]).exit_code == 2
    rows = open(_synthetic_csv(tmp_path / "x.csv", "wait", 30, 0)).read().splitlines()
    rows[3] = rows[3].rsplit(",", 1)[0] + ",9"
    (tmp_path / "x.csv").write_text("\n".join(rows) + "\n")
    with pytest.raises(ConfigError):
        read_rated_rows(tmp_path / "x.csv")
