import numpy as np
import pytest

from modfleet.experiments import (
    MODE_STRATEGIES,
    SWEEP_STRATEGIES,
    ArrivalSweepConfig,
    PreferenceModesConfig,
    arrival_sweep,
    default_rates,
    preference_modes,
    read_modes,
    read_sweep,
    write_modes,
    write_sweep,
)
from modfleet.forest import ForestParams
from modfleet.plots import modes_svg, plot_modes, plot_sweep, sweep_svg
from modfleet.simulator import SimConfig


def small_sweep():
    return ArrivalSweepConfig(base=SimConfig(duration_s=1800.0), rates=[0.1, 0.4], seeds=3)


def test_default_grid():
    assert default_rates() == [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6]
    assert len(SWEEP_STRATEGIES) == 4 and len(MODE_STRATEGIES) == 5


def test_sweep_schema_and_plot(campus, campus_table, tmp_path):
    res = arrival_sweep(small_sweep(), campus, campus_table)
    assert len(res.table) == 4 * 2
    assert len(res.runs) == 4 * 2 * 3
    paths = write_sweep(res, tmp_path)
    rows = read_sweep(paths["aggregate"])
    assert [r[:2] for r in rows] == [(s, lam) for s in SWEEP_STRATEGIES for lam in (0.1, 0.4)]
    for (s, lam, m, sd, n), ref in zip(rows, res.table):
        assert m == ref[2] and sd == ref[3] and n == 3
    svg = plot_sweep(paths["aggregate"], tmp_path / "a.svg").read_text()
    assert svg.count("<polyline") == 4
    for s in SWEEP_STRATEGIES:
        assert f">{s}</text>" in svg
    assert plot_sweep(paths["aggregate"], tmp_path / "b.svg").read_bytes() == (tmp_path / "a.svg").read_bytes()


def test_sweep_std_is_sample_std(campus, campus_table):
    res = arrival_sweep(small_sweep(), campus, campus_table)
    vals = [summ["mean_normalized_service"] for s, lam, _, summ in res.runs if s == "unmanaged_q1" and lam == 0.4]
    assert res.mean_at("unmanaged_q1", 0.4) == pytest.approx(np.mean(vals))
    assert res.table[1][3] == pytest.approx(np.std(vals, ddof=1))


def test_parallel_matches_serial(campus, campus_table, tmp_path):
    cfg = ArrivalSweepConfig(base=SimConfig(duration_s=1200.0), rates=[0.3], seeds=4, strategies=("predictive_q3",))
    a = write_sweep(arrival_sweep(cfg, campus, campus_table, jobs=1), tmp_path / "a")
    b = write_sweep(arrival_sweep(cfg, campus, campus_table, jobs=2), tmp_path / "b")
    for k in a:
        assert a[k].read_bytes() == b[k].read_bytes()


def test_modes_grid_shape(campus, campus_table, tmp_path):
    cfg = PreferenceModesConfig(
        base=SimConfig(arrival_rate_per_vehicle=0.35, capacity=3, positioning="predictive", duration_s=1200.0),
        seeds=2, training_runs=2, forest=ForestParams(n_trees=10),
    )
    res = preference_modes(cfg, campus, campus_table)
    table = res.table()
    assert len(table) == 5 and all(len(r) == 1 + 6 + 1 for r in table)
    assert [r[0] for r in table] == ["Distance", "RideTime", "ServiceTime", "WaitTime", "Ratings"]
    for r in table:
        assert all(1.0 <= v <= 5.0 for v in r[1:])
        assert r[-1] == pytest.approx(np.mean(r[1:-1]))
    paths = write_modes(res, tmp_path)
    header, rows = read_modes(paths["aggregate"])
    assert header == ["wait", "ride", "service", "stops", "distance", "combined", "average"]
    svg = plot_modes(paths["aggregate"], tmp_path / "m.svg").read_text()
    assert svg.count("<rect") >= 5 * 7
    assert set(res.forests) == set(cfg.modes)


def test_svg_pure_functions():
    rows = [("a", 0.1, 1.2, 0.1, 3), ("a", 0.2, 1.4, 0.2, 3), ("b", 0.1, 1.1, 0.0, 3), ("b", 0.2, 1.3, 0.1, 3)]
    assert sweep_svg(rows) == sweep_svg(list(rows))
    assert sweep_svg(rows).startswith("<svg")
    assert modes_svg(["x", "y"], [("s", [3.0, 4.0])]).count('data-label="s"') == 2
