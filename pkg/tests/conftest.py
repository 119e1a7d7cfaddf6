import hypothesis
import numpy as np
import pytest

from modfleet.network import load_bundled_graph, load_graph, precompute_routes

hypothesis.settings.register_profile("default", max_examples=50, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.load_profile("default")


def make_graph(links, n_nodes=None, pedestrian_speed=1.4):
    """Graph from (src, dst, length, speed[, walkable]) tuples."""
    nodes = sorted({l[0] for l in links} | {l[1] for l in links} | set(range(n_nodes or 0)))
    doc = {
        "nodes": [{"id": n, "x": float(n), "y": 0.0} for n in nodes],
        "links": [
            {"from": l[0], "to": l[1], "length_m": l[2], "speed_mps": l[3], "walkable": l[4] if len(l) > 4 else True}
            for l in links
        ],
    }
    return precompute_routes(load_graph(doc, pedestrian_speed_mps=pedestrian_speed))


def line_graph(n=4, length=100.0, speed=10.0):
    links = []
    for i in range(n - 1):
        links += [(i, i + 1, length, speed), (i + 1, i, length, speed)]
    return make_graph(links)


def random_graph(rng, n_nodes, extra=None, speeds=(4.0, 11.0)):
    """Random strongly connected graph: a bidirectional ring plus random chords."""
    links = []
    for i in range(n_nodes):
        j = (i + 1) % n_nodes
        if n_nodes == 2 and i == 1:
            break
        L = float(rng.integers(50, 400))
        s = float(rng.choice(speeds))
        links += [(i, j, L, s), (j, i, L, s)]
    extra = n_nodes if extra is None else extra
    for _ in range(extra):
        a, b = rng.choice(n_nodes, size=2, replace=False)
        links.append((int(a), int(b), float(rng.integers(50, 600)), float(rng.choice(speeds))))
    return make_graph(links)


@pytest.fixture
def line4():
    return line_graph(4)


@pytest.fixture(scope="session")
def campus():
    return load_bundled_graph()


@pytest.fixture(scope="session")
def campus_table(campus):
    from modfleet.positioning import precompute_wait_table

    return precompute_wait_table(campus, None, 3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
