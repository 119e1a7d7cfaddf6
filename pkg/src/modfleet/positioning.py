"""Predictive positioning: offline wait-time tables and expected-wait placement."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from itertools import combinations_with_replacement, permutations
from pathlib import Path

import numpy as np
from scipy.special import gammaln

from ._npz import savez_stable
from .arrivals import ArrivalModel, ArrivalVector
from .network import NetworkGraph, precompute_routes

CACHE_FORMAT = "modfleet-waittable"
CACHE_VERSION = 1
DEFAULT_MAX_ENTRIES = 60_000_000
TIE_RTOL = 1e-9


@dataclass(frozen=True)
class PlacementVector:
    counts: tuple[int, ...]

    @property
    def total(self) -> int:
        return sum(self.counts)

    def slots(self, nodes) -> list[int]:
        """Node ids, one per vehicle, in node order."""
        out = []
        for n, k in zip(nodes, self.counts):
            out += [n] * k
        return out


def _to_counts(rows: np.ndarray, n_nodes: int) -> np.ndarray:
    counts = np.zeros((len(rows), n_nodes), dtype=np.int64)
    for col in range(rows.shape[1]):
        np.add.at(counts, (np.arange(len(rows)), rows[:, col]), 1)
    return counts


def greedy_pairs(cost: np.ndarray) -> list[tuple[int, int]]:
    """Repeatedly match the globally cheapest unmatched (row, col) pair.

    Ties resolve to the first pair in row-major order. Scalar reference path.
    """
    cost = np.asarray(cost, dtype=float)
    rows, cols = list(range(cost.shape[0])), list(range(cost.shape[1]))
    pairs = []
    while rows and cols:
        best = None
        for r in rows:
            for c in cols:
                if best is None or cost[r, c] < best[0]:
                    best = (cost[r, c], r, c)
        _, r, c = best
        pairs.append((r, c))
        rows.remove(r)
        cols.remove(c)
    return pairs


def greedy_wait_time(graph: NetworkGraph, k: PlacementVector, a: ArrivalVector) -> float:
    """Total vehicle-to-arrival travel time under greedy matching."""
    if k.total != a.total:
        raise ValueError(f"placement has {k.total} vehicles but {a.total} arrivals")
    precompute_routes(graph)
    cost = graph.time_matrix[np.ix_(_expand(k.counts), _expand(a.counts))]
    return float(sum(cost[r, c] for r, c in greedy_pairs(cost)))


def _expand(counts) -> list[int]:
    """Row index per unit of a count vector (counts follow graph node order)."""
    out = []
    for i, cnt in enumerate(counts):
        out += [i] * cnt
    return out


def _greedy_batch(C: np.ndarray) -> np.ndarray:
    """Vectorized greedy matching over a stack of square cost matrices (B, f, f)."""
    B, f, _ = C.shape
    C = C.reshape(B, f * f).copy()
    total = np.zeros(B)
    rows = np.arange(B)
    for _ in range(f):
        k = np.argmin(C, axis=1)
        total += C[rows, k]
        r, c = np.divmod(k, f)
        Cv = C.reshape(B, f, f)
        Cv[rows, r, :] = np.inf
        Cv[rows, :, c] = np.inf
    return total


def _exact_batch(C: np.ndarray) -> np.ndarray:
    B, f, _ = C.shape
    best = np.full(B, np.inf)
    for perm in permutations(range(f)):
        best = np.minimum(best, C[:, np.arange(f), list(perm)].sum(axis=1))
    return best


@dataclass
class SubTable:
    placements: np.ndarray  # (K, f) node row indices, each row non-decreasing
    arrivals: np.ndarray  # (A, f)
    wait: np.ndarray  # (K, A) seconds


@dataclass
class WaitTimeTable:
    graph_hash: str
    nodes: tuple[int, ...]
    support: tuple[int, ...]
    n_vehicles: int
    matching: str = "greedy"
    tables: dict[int, SubTable] = field(default_factory=dict)

    def sub(self, n_free: int) -> SubTable:
        if n_free not in self.tables:
            raise KeyError(f"wait table has no entry for {n_free} free vehicles")
        return self.tables[n_free]

    def lookup(self, k: PlacementVector, a: ArrivalVector) -> float:
        st = self.sub(k.total)
        kr = _row_of(st.placements, k.counts)
        ar = _row_of(st.arrivals, a.counts)
        return float(st.wait[kr, ar])


def _row_of(rows: np.ndarray, counts) -> int:
    hit = np.flatnonzero((rows == np.asarray(_expand(counts))).all(axis=1))
    if not len(hit):
        raise KeyError(f"{counts} not in table")
    return int(hit[0])


def _multisets(indices, f) -> np.ndarray:
    return np.array(list(combinations_with_replacement(indices, f)), dtype=np.int64).reshape(-1, f)


def table_size(n_nodes: int, n_support: int, f: int) -> int:
    return math.comb(n_nodes + f - 1, f) * math.comb(n_support + f - 1, f)


def precompute_wait_table(
    graph: NetworkGraph,
    model: ArrivalModel | None = None,
    n_vehicles: int = 1,
    support=None,
    matching: str = "greedy",
    max_entries: int = DEFAULT_MAX_ENTRIES,
    chunk_pairs: int = 1_000_000,
) -> WaitTimeTable:
    """Wait times for every (placement, arrival) pair and every free count 1..n_vehicles.

    Placements range over all nodes; arrivals over ``support`` (default: the
    model's non-zero-rate nodes, or every node when no model is given).
    """
    if n_vehicles < 1:
        raise ValueError("n_vehicles must be >= 1")
    precompute_routes(graph)
    if support is None:
        support = model.support if model is not None else tuple(graph.nodes)
    support = tuple(sorted(support, key=graph.index.__getitem__))
    total = sum(table_size(graph.n_nodes, len(support), f) for f in range(1, n_vehicles + 1))
    if total > max_entries:
        raise MemoryError(
            f"wait table needs {total:,} entries for {graph.n_nodes} nodes, {len(support)} arrival nodes "
            f"and {n_vehicles} vehicles; the limit is {max_entries:,}"
        )
    batch_fn = {"greedy": _greedy_batch, "exact": _exact_batch}[matching]
    T = graph.time_matrix
    sup_idx = [graph.index[n] for n in support]
    table = WaitTimeTable(graph.content_hash(), tuple(graph.nodes), support, n_vehicles, matching)
    for f in range(1, n_vehicles + 1):
        K = _multisets(range(graph.n_nodes), f)
        A = _multisets(sup_idx, f)
        W = np.empty((len(K), len(A)))
        step = max(1, chunk_pairs // max(1, len(A)))
        for s in range(0, len(K), step):
            kb = K[s : s + step]
            C = T[kb[:, None, :, None], A[None, :, None, :]]  # (kb, A, f, f)
            W[s : s + step] = batch_fn(C.reshape(-1, f, f)).reshape(len(kb), len(A))
        table.tables[f] = SubTable(K, A, W)
    return table


def arrival_log_probs(arrivals: np.ndarray, model: ArrivalModel, graph: NetworkGraph) -> np.ndarray:
    """Log multinomial probability of each arrival row (node row indices)."""
    rate = np.zeros(graph.n_nodes)
    for n, r in zip(model.nodes, model.rates):
        rate[graph.index[n]] = r
    total = rate.sum()
    if total <= 0:
        raise ValueError("total arrival rate is zero")
    f = arrivals.shape[1]
    counts = _to_counts(arrivals, graph.n_nodes)
    with np.errstate(divide="ignore", invalid="ignore"):
        logp_node = np.log(rate / total)
        terms = np.where(counts > 0, counts * logp_node[None, :] - gammaln(counts + 1), 0.0)
    return gammaln(f + 1) + terms.sum(axis=1)


def expected_waits(table: WaitTimeTable, model: ArrivalModel, n_free: int, graph: NetworkGraph) -> np.ndarray:
    st = table.sub(n_free)
    known = set(table.support)
    missing = [n for n in model.support if n not in known]
    if missing:
        raise ValueError(f"wait table does not cover arrival nodes {missing}")
    p = np.exp(arrival_log_probs(st.arrivals, model, graph))
    keep = p > 0
    return st.wait[:, keep] @ p[keep]


def _pick(values: np.ndarray, counts: np.ndarray) -> int:
    """Index of the minimum; near-ties go to the lexicographically smallest count vector."""
    m = float(values.min())
    tied = np.flatnonzero(values <= m + TIE_RTOL * max(1.0, abs(m)))
    if len(tied) == 1:
        return int(tied[0])
    sub = counts[tied]
    order = np.lexsort(sub.T[::-1])
    return int(tied[order[0]])


def optimal_placement(table: WaitTimeTable, model: ArrivalModel, n_free: int, graph: NetworkGraph) -> PlacementVector:
    """Placement minimizing the probability-weighted total wait."""
    if table is None:
        raise ValueError("no wait table; run precompute first")
    if table.graph_hash != graph.content_hash():
        raise ValueError("wait table was built for a different graph")
    st = table.sub(n_free)
    values = expected_waits(table, model, n_free, graph)
    counts = _to_counts(st.placements, graph.n_nodes)
    k = _pick(values, counts)
    return PlacementVector(tuple(int(x) for x in counts[k]))


def placement_targets(graph: NetworkGraph, table: WaitTimeTable, model: ArrivalModel) -> dict[int, list[int]]:
    """Target node ids for each free-vehicle count."""
    if model.total_rate <= 0:
        return {}
    return {
        f: optimal_placement(table, model, f, graph).slots(graph.nodes) for f in range(1, table.n_vehicles + 1)
    }


def match_to_slots(graph: NetworkGraph, vehicle_nodes: list[int], slots: list[int], offsets=None) -> list[int]:
    """Greedy minimum-travel-time matching of vehicles to placement slots.

    Returns the target slot node for each vehicle in input order.
    """
    C = graph.time_matrix[np.ix_([graph.index[n] for n in vehicle_nodes], [graph.index[n] for n in slots])]
    if offsets is not None:
        C = C + np.asarray(offsets)[:, None]
    target = [None] * len(vehicle_nodes)
    for r, c in greedy_pairs(C):
        target[r] = slots[c]
    return target


def cache_dir() -> Path:
    return Path(os.environ.get("MOD_CACHE_DIR", Path.home() / ".cache" / "modfleet"))


def cache_path(graph: NetworkGraph, n_vehicles: int, directory=None) -> Path:
    d = Path(directory) if directory is not None else cache_dir()
    return d / f"waittable_{graph.content_hash()}_v{n_vehicles}.npz"


def save_table(table: WaitTimeTable, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "format": CACHE_FORMAT,
        "version": CACHE_VERSION,
        "graph_hash": table.graph_hash,
        "nodes": list(table.nodes),
        "support": list(table.support),
        "n_vehicles": table.n_vehicles,
        "matching": table.matching,
    }
    arrays = {"header": np.array(json.dumps(header))}
    for f, st in table.tables.items():
        arrays[f"K{f}"] = st.placements
        arrays[f"A{f}"] = st.arrivals
        arrays[f"W{f}"] = st.wait
    tmp = path.with_suffix(".tmp")
    with open(tmp, "wb") as fh:
        savez_stable(fh, **arrays)
    tmp.replace(path)
    return path


def read_header(path) -> dict:
    with np.load(Path(path), allow_pickle=False) as z:
        return json.loads(str(z["header"]))


def load_table(path, graph: NetworkGraph | None = None) -> WaitTimeTable:
    with np.load(Path(path), allow_pickle=False) as z:
        header = json.loads(str(z["header"]))
        if header.get("format") != CACHE_FORMAT or header.get("version") != CACHE_VERSION:
            raise ValueError(f"{path}: unsupported wait-table file")
        if graph is not None and header["graph_hash"] != graph.content_hash():
            raise ValueError(f"{path}: built for a different graph")
        table = WaitTimeTable(
            header["graph_hash"], tuple(header["nodes"]), tuple(header["support"]), header["n_vehicles"], header["matching"]
        )
        for f in range(1, header["n_vehicles"] + 1):
            table.tables[f] = SubTable(z[f"K{f}"], z[f"A{f}"], z[f"W{f}"])
    return table


def ensure_table(graph: NetworkGraph, n_vehicles: int, directory=None, **kw) -> tuple[WaitTimeTable, Path, bool]:
    """Load the cached table if its header matches, else build and save it.

    Returns ``(table, path, built)``.
    """
    path = cache_path(graph, n_vehicles, directory)
    if path.exists():
        try:
            h = read_header(path)
            if h["graph_hash"] == graph.content_hash() and h["n_vehicles"] == n_vehicles:
                return load_table(path, graph), path, False
        except (ValueError, KeyError, OSError):
            pass
    table = precompute_wait_table(graph, None, n_vehicles, **kw)
    save_table(table, path)
    return table, path, True
