import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modfleet.network import (
    GraphError,
    Link,
    Route,
    load_graph,
    precompute_routes,
    shortest_route,
    travel_distance,
    travel_time,
    walk_time,
)

from .conftest import make_graph, random_graph
from .oracles import min_path_time


def test_load_minimal_graph():
    g = load_graph({"nodes": [{"id": 0, "x": 0, "y": 0}, {"id": 1, "x": 1, "y": 0}],
                    "links": [{"from": 0, "to": 1, "length_m": 100, "speed_mps": 10}]})
    assert (g.n_nodes, g.n_links) == (2, 1)
    assert g.route_table == {}


def test_load_from_json_text_and_file(tmp_path):
    doc = {"nodes": [{"id": 3}, {"id": 9}], "links": [{"from": 3, "to": 9, "length_m": 5.0, "speed_mps": 1.0}]}
    assert load_graph(json.dumps(doc)).n_links == 1
    p = tmp_path / "g.json"
    p.write_text(json.dumps(doc))
    assert load_graph(p).nodes == [3, 9]
    assert load_graph(str(p)).nodes == [3, 9]


@pytest.mark.parametrize(
    "link",
    [
        {"from": 0, "to": 1, "length_m": 100, "speed_mps": 0},
        {"from": 0, "to": 1, "length_m": -1, "speed_mps": 3},
        {"from": 0, "to": 7, "length_m": 10, "speed_mps": 3},
        {"from": 0, "to": 1, "length_m": 10},
    ],
)
def test_invalid_links_rejected(link):
    with pytest.raises(GraphError):
        load_graph({"nodes": [{"id": 0}, {"id": 1}], "links": [link]})


def test_malformed_document():
    with pytest.raises(GraphError):
        load_graph('{"nodes": [}')
    with pytest.raises(GraphError):
        load_graph({"nodes": []})


def test_bundled_graph_scale(campus):
    assert campus.n_nodes == 27
    assert campus.n_links == 106
    # one route per ordered pair of distinct nodes; the graph is strongly connected
    assert len(campus.route_table) == 27 * 26
    assert {l.speed_mps for l in campus.links} == {4.0, 11.0}


def test_identity_route():
    g = make_graph([(0, 1, 100, 10)])
    r = shortest_route(g, 0, 0)
    assert r.links == () and r.total_time_s == 0 and r.total_distance_m == 0


def test_single_link_route():
    g = make_graph([(0, 1, 100, 10)])
    r = shortest_route(g, 0, 1)
    assert r.total_time_s == pytest.approx(10.0)
    assert r.total_distance_m == pytest.approx(100.0)


def test_diamond_prefers_time_over_distance():
    # 0-1-3 is 200 m at 4 m/s (50 s); 0-2-3 is 300 m at 11 m/s (27.3 s)
    g = make_graph([(0, 1, 100, 4), (1, 3, 100, 4), (0, 2, 150, 11), (2, 3, 150, 11)])
    r = shortest_route(g, 0, 3)
    assert r.nodes == (0, 2, 3)
    assert r.total_time_s == pytest.approx(min_path_time(g, 0, 3))
    assert r.total_distance_m == pytest.approx(300.0)


def test_tie_break_fewer_links_then_lexicographic():
    # 0->3 direct (30 s) ties with 0->1->3 (10 + 20 s); fewer links wins
    g = make_graph([(0, 3, 300, 10), (0, 1, 100, 10), (1, 3, 200, 10)])
    assert shortest_route(g, 0, 3).nodes == (0, 3)
    # equal time and equal link count: smallest node sequence wins
    g = make_graph([(0, 2, 100, 10), (2, 3, 100, 10), (0, 1, 100, 10), (1, 3, 100, 10)])
    assert shortest_route(g, 0, 3).nodes == (0, 1, 3)


def test_unreachable_and_unknown():
    g = make_graph([(0, 1, 100, 10)])
    with pytest.raises(GraphError):
        shortest_route(g, 1, 0)
    with pytest.raises(GraphError):
        shortest_route(g, 0, 42)


def test_precompute_counts():
    tri = make_graph([(a, b, 100, 10) for a in range(3) for b in range(3) if a != b])
    assert len(precompute_routes(tri).route_table) == 6
    one_way = make_graph([(0, 1, 100, 10)])
    assert set(one_way.route_table) == {(0, 1)}


def test_precompute_idempotent(campus):
    before = dict(campus.route_table)
    T = campus.time_matrix.copy()
    precompute_routes(campus)
    assert campus.route_table == before
    assert np.array_equal(campus.time_matrix, T)


def test_travel_sums():
    assert travel_time(Route()) == 0 and travel_distance(Route()) == 0
    r = Route((Link(0, 1, 100, 10), Link(1, 2, 44, 4)))
    assert travel_time(r) == pytest.approx(21.0)
    assert travel_distance(r) == pytest.approx(144.0)


def test_campus_routes_resum(campus):
    for (o, d), r in campus.route_table.items():
        assert r.total_time_s == pytest.approx(sum(l.length_m / l.speed_mps for l in r.links), rel=1e-9)
        assert campus.time(o, d) == pytest.approx(r.total_time_s, rel=1e-9)
        assert campus.distance(o, d) == pytest.approx(sum(l.length_m for l in r.links), rel=1e-12)
        nodes = r.nodes
        assert nodes[0] == o and nodes[-1] == d
        for a, b in zip(r.links, r.links[1:]):
            assert a.dst == b.src


def test_walk_time():
    g = make_graph([(0, 1, 140, 10)])
    assert walk_time(g, 0, 0) == 0
    assert walk_time(g, 0, 1) == pytest.approx(100.0)
    with pytest.raises(GraphError):
        walk_time(g, 1, 0)


def test_walk_respects_walkable_flag():
    g = make_graph([(0, 1, 100, 10, False), (0, 2, 100, 10), (2, 1, 100, 10)])
    assert walk_time(g, 0, 1) == pytest.approx(200 / 1.4)
    assert g.time(0, 1) == pytest.approx(10.0)


def test_walk_never_faster_than_driving(campus):
    assert (campus.walk_matrix >= campus.time_matrix - 1e-9).all()


def test_triangle_inequality(campus):
    T = campus.time_matrix
    assert (T[:, None, :] <= T[:, :, None] + T[None, :, :] + 1e-9).all()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 8))
def test_route_optimality_against_enumeration(seed, n):
    g = random_graph(np.random.default_rng(seed), n)
    for (o, d), r in g.route_table.items():
        assert r.total_time_s == pytest.approx(min_path_time(g, o, d), rel=1e-9)
    for o in g.nodes:
        for d in g.nodes:
            if o != d:
                assert walk_time(g, o, d) == pytest.approx(min_path_time(g, o, d, speed=1.4), rel=1e-9)


def test_random_ten_node_graph_against_enumeration():
    g = random_graph(np.random.default_rng(7), 10, extra=6)
    assert len(g.route_table) == 90
    for (o, d), r in g.route_table.items():
        assert r.total_time_s == pytest.approx(min_path_time(g, o, d), rel=1e-9)


def test_relabeling_preserves_times():
    rng = np.random.default_rng(3)
    g = random_graph(rng, 6)
    perm = {n: 100 - n for n in g.nodes}
    h = make_graph([(perm[l.src], perm[l.dst], l.length_m, l.speed_mps) for l in g.links])
    for o in g.nodes:
        for d in g.nodes:
            assert h.time(perm[o], perm[d]) == pytest.approx(g.time(o, d))


def test_content_hash_tracks_routing_fields():
    a = make_graph([(0, 1, 100, 10)])
    b = make_graph([(0, 1, 100, 11)])
    assert a.content_hash() != b.content_hash()
    assert a.content_hash() == make_graph([(0, 1, 100, 10)]).content_hash()
