"""Directed logistics networks, edge typing, and path-cost evaluation.

A :class:`Network` is an immutable directed multigraph over nodes ``1..n`` with
planar positions; edges carry a kind (highway / maritime / local / storage) and
a length in km.  Costs come in two flavours:

* Markov mode — an explicit per-edge cost table; a path costs the sum of its
  steps.  Absent pairs cost ``math.inf`` (infinity is always the explicit
  ``inf`` value, never a large finite sentinel).
* Ruled mode — the whole edge-kind sequence sets the price: maritime legs are
  multiplied, storage legs cost a flat fee, maximal highway runs earn a
  discount, and every switch between kinds adds a fixed penalty.  This makes
  the path cost genuinely non-additive over steps.

`enumerate_paths` materialises the finite path space used by every solver in
the package: all horizon-``T`` node sequences that start in the source support,
end in the sink support, and use an existing finite-cost edge at every step,
in lexicographic order.
"""

from __future__ import annotations

import itertools
import json
import math
import os
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InfeasibleError, ValidationError


class EdgeKind(Enum):
    HIGHWAY = "highway"
    MARITIME = "maritime"
    LOCAL = "local"
    STORAGE = "storage"


@dataclass(frozen=True)
class Node:
    id: int
    x_km: float
    y_km: float
    label: str = ""


@dataclass(frozen=True)
class Edge:
    tail: int
    head: int
    kind: EdgeKind
    length_km: float


@dataclass(frozen=True)
class Network:
    """Immutable directed network; use :func:`build_network` to construct."""

    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]
    # derived lookup tables, filled in __post_init__
    _by_pair: dict = field(default_factory=dict, repr=False, compare=False)
    _succ: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        by_pair: dict[tuple[int, int], tuple[Edge, ...]] = {}
        succ: dict[int, tuple[int, ...]] = {}
        for e in self.edges:
            by_pair.setdefault((e.tail, e.head), [])
            by_pair[(e.tail, e.head)].append(e)
        for k in by_pair:
            by_pair[k] = tuple(by_pair[k])
        for i in range(1, len(self.nodes) + 1):
            succ[i] = tuple(sorted({h for (t, h) in by_pair if t == i}))
        object.__setattr__(self, "_by_pair", by_pair)
        object.__setattr__(self, "_succ", succ)

    @property
    def n(self) -> int:
        return len(self.nodes)

    def position(self, node_id: int) -> tuple[float, float]:
        node = self.nodes[node_id - 1]
        return (node.x_km, node.y_km)

    def has_edge(self, tail: int, head: int) -> bool:
        return (tail, head) in self._by_pair

    def edges_between(self, tail: int, head: int) -> tuple[Edge, ...]:
        return self._by_pair.get((tail, head), ())

    def successors(self, node_id: int) -> tuple[int, ...]:
        return self._succ.get(node_id, ())

    def edge_pairs(self) -> list[tuple[int, int]]:
        return sorted(self._by_pair)


def euclidean_km(a: Node, b: Node) -> float:
    return math.hypot(a.x_km - b.x_km, a.y_km - b.y_km)


def build_network(nodes: Sequence[Node | tuple],
                  edges: Iterable[Edge | tuple]) -> Network:
    """Validate and assemble a :class:`Network`.

    ``nodes`` may be :class:`Node` objects or ``(id, x_km, y_km[, label])``
    tuples; ``edges`` may be :class:`Edge` objects or
    ``(tail, head, kind[, length_km])`` tuples.  A missing length defaults to
    the Euclidean distance between the endpoints (0 for self-loops).

    Raises :class:`ValidationError` for non-dense ids, dangling endpoints,
    duplicate (tail, head, kind) triples, negative lengths, or non-storage
    self-loops.
    """
    node_objs = []
    for spec in nodes:
        node_objs.append(spec if isinstance(spec, Node) else Node(*spec))
    ids = [nd.id for nd in node_objs]
    n = len(ids)
    if sorted(ids) != list(range(1, n + 1)):
        raise ValidationError(f"node ids must be exactly 1..{n}, got {sorted(ids)}")
    node_objs.sort(key=lambda nd: nd.id)

    edge_objs: list[Edge] = []
    seen: set[tuple[int, int, EdgeKind]] = set()
    for spec in edges:
        if isinstance(spec, Edge):
            e = spec
        else:
            tail, head, kind = spec[0], spec[1], spec[2]
            if not isinstance(kind, EdgeKind):
                kind = EdgeKind(kind)
            if len(spec) > 3 and spec[3] is not None:
                length = float(spec[3])
            else:
                length = euclidean_km(node_objs[tail - 1], node_objs[head - 1])
            e = Edge(tail, head, kind, length)
        if not (1 <= e.tail <= n and 1 <= e.head <= n):
            raise ValidationError(f"edge ({e.tail},{e.head}) references unknown node")
        if e.tail == e.head and e.kind is not EdgeKind.STORAGE:
            raise ValidationError(
                f"self-loop at node {e.tail} must be storage, got {e.kind.value}")
        if e.length_km < 0:
            raise ValidationError(f"edge ({e.tail},{e.head}) has negative length")
        key = (e.tail, e.head, e.kind)
        if key in seen:
            raise ValidationError(f"duplicate edge {key}")
        seen.add(key)
        edge_objs.append(e)

    return Network(tuple(node_objs), tuple(edge_objs))


# ---------------------------------------------------------------------------
# cost models
# ---------------------------------------------------------------------------

MARKOV = "markov"
RULED = "ruled"


@dataclass(frozen=True)
class CostModel:
    """Path-cost model; build via :meth:`markov` or :meth:`ruled`.

    ``edge_multipliers`` holds per-edge re-pricing factors (e.g. a disaster
    multiplying affected-edge costs); in ruled mode they scale the kind-adjusted
    per-edge contribution before run discounts, and the switch penalty is never
    scaled.
    """

    mode: str
    edge_costs: Mapping[tuple[int, int], float] | None = None
    highway_discount_2: float = 0.20
    highway_discount_3plus: float = 0.30
    switch_penalty_km: float = 20.0
    storage_cost_km: float = 10.0
    maritime_multiplier: float = 4.0
    edge_multipliers: Mapping[tuple[int, int], float] = field(default_factory=dict)

    @classmethod
    def markov(cls, edge_costs: Mapping[tuple[int, int], float]) -> "CostModel":
        table = {}
        for (i, j), c in edge_costs.items():
            c = float(c)
            if not math.isfinite(c) or c < 0:
                raise ValidationError(
                    f"markov cost for ({i},{j}) must be finite nonnegative, got {c}")
            table[(int(i), int(j))] = c
        if not table:
            raise ValidationError("markov cost table is empty")
        return cls(mode=MARKOV, edge_costs=table)

    @classmethod
    def ruled(cls, *, highway_discount_2: float = 0.20,
              highway_discount_3plus: float = 0.30,
              switch_penalty_km: float = 20.0,
              storage_cost_km: float = 10.0,
              maritime_multiplier: float = 4.0) -> "CostModel":
        for name, val, lo, hi in [
            ("highway_discount_2", highway_discount_2, 0.0, 1.0),
            ("highway_discount_3plus", highway_discount_3plus, 0.0, 1.0),
        ]:
            if not (lo <= val <= hi):
                raise ValidationError(f"{name} must be in [{lo},{hi}], got {val}")
        for name, val in [("switch_penalty_km", switch_penalty_km),
                          ("storage_cost_km", storage_cost_km),
                          ("maritime_multiplier", maritime_multiplier)]:
            if val < 0:
                raise ValidationError(f"{name} must be nonnegative, got {val}")
        return cls(mode=RULED,
                   highway_discount_2=highway_discount_2,
                   highway_discount_3plus=highway_discount_3plus,
                   switch_penalty_km=switch_penalty_km,
                   storage_cost_km=storage_cost_km,
                   maritime_multiplier=maritime_multiplier)


def markov_edge_cost(model: CostModel, tail: int, head: int) -> float:
    """Per-step cost in Markov mode; ``math.inf`` for an absent pair."""
    if model.mode != MARKOV:
        raise ValidationError("markov_edge_cost requires a markov-mode CostModel")
    c = model.edge_costs.get((tail, head))
    if c is None:
        return math.inf
    return c * model.edge_multipliers.get((tail, head), 1.0)


def _kind_order(kind: EdgeKind) -> str:
    return kind.value


def _edge_contribution(model: CostModel, edge: Edge) -> float:
    """Kind-adjusted, re-priced contribution of one edge (before run discounts)."""
    if edge.kind is EdgeKind.MARITIME:
        base = model.maritime_multiplier * edge.length_km
    elif edge.kind is EdgeKind.STORAGE:
        base = model.storage_cost_km
    else:
        base = edge.length_km
    return base * model.edge_multipliers.get((edge.tail, edge.head), 1.0)


def _resolve_step(model: CostModel, network: Network, tail: int, head: int) -> Edge:
    """Pick the edge used for one step; cheapest kind wins among parallels."""
    candidates = network.edges_between(tail, head)
    if not candidates:
        raise InfeasibleError(f"path step ({tail},{head}) uses no existing edge")
    if len(candidates) == 1:
        return candidates[0]
    return min(candidates, key=lambda e: (_edge_contribution(model, e), _kind_order(e.kind)))


def ruled_path_cost(model: CostModel, network: Network, path: Sequence[int]) -> float:
    """Rule-based cost of a whole path (non-additive over steps).

    Per-edge kind-adjusted contributions are re-priced by any edge multipliers,
    maximal runs of consecutive highway edges get the run discount (20% for a
    run of 2, 30% for 3 or more, on the run's total), and each position where
    consecutive edges differ in kind adds the flat switch penalty.
    """
    if model.mode != RULED:
        raise ValidationError("ruled_path_cost requires a ruled-mode CostModel")
    if len(path) < 2:
        raise ValidationError("a path needs at least one step")
    edges = [_resolve_step(model, network, a, b) for a, b in zip(path, path[1:])]
    contribs = [_edge_contribution(model, e) for e in edges]

    total = 0.0
    i = 0
    while i < len(edges):
        if edges[i].kind is EdgeKind.HIGHWAY:
            j = i
            while j < len(edges) and edges[j].kind is EdgeKind.HIGHWAY:
                j += 1
            run_total = sum(contribs[i:j])
            run_len = j - i
            if run_len == 2:
                run_total *= 1.0 - model.highway_discount_2
            elif run_len >= 3:
                run_total *= 1.0 - model.highway_discount_3plus
            total += run_total
            i = j
        else:
            total += contribs[i]
            i += 1
    switches = sum(1 for a, b in zip(edges, edges[1:]) if a.kind is not b.kind)
    total += model.switch_penalty_km * switches
    return total


def path_cost(model: CostModel, network: Network, path: Sequence[int]) -> float:
    """Cost of a path under either model; ``math.inf`` if any step is absent."""
    if model.mode == MARKOV:
        return sum(markov_edge_cost(model, a, b) for a, b in zip(path, path[1:]))
    for a, b in zip(path, path[1:]):
        if not network.has_edge(a, b):
            return math.inf
    return ruled_path_cost(model, network, path)


def step_feasible(model: CostModel, network: Network, tail: int, head: int) -> bool:
    """True when one step is usable: edge present and finite per-step cost."""
    if not network.has_edge(tail, head):
        return False
    if model.mode == MARKOV:
        return (tail, head) in model.edge_costs
    return True


def reprice(model: CostModel, edges: Iterable[tuple[int, int]],
            multiplier: float) -> CostModel:
    """Return a model with the given ordered pairs re-priced by ``multiplier``.

    Factors compose multiplicatively with any existing multipliers.  Markov
    tables are scaled directly.
    """
    if multiplier < 0:
        raise ValidationError(f"multiplier must be nonnegative, got {multiplier}")
    pairs = [(int(i), int(j)) for i, j in edges]
    if model.mode == MARKOV:
        table = dict(model.edge_costs)
        for pair in pairs:
            if pair in table:
                table[pair] = table[pair] * multiplier
        return replace(model, edge_costs=table)
    mults = dict(model.edge_multipliers)
    for pair in pairs:
        mults[pair] = mults.get(pair, 1.0) * multiplier
    return replace(model, edge_multipliers=mults)


def markov_model_from_network(network: Network,
                              ruled: CostModel | None = None) -> CostModel:
    """Derive a per-edge (Markov) cost table from network geometry.

    Each pair costs its kind-adjusted contribution (maritime legs multiplied,
    storage loops at the flat fee, roads at length); parallel kinds resolve to
    the cheapest.  Run discounts and switch penalties are path-level rules and
    do not enter the table.
    """
    if ruled is None:
        ruled = CostModel.ruled()
    table: dict[tuple[int, int], float] = {}
    for (i, j) in network.edge_pairs():
        edge = _resolve_step(ruled, network, i, j)
        table[(i, j)] = _edge_contribution(ruled, edge)
    model = CostModel.markov(table)
    return replace(model,
                   highway_discount_2=ruled.highway_discount_2,
                   highway_discount_3plus=ruled.highway_discount_3plus,
                   switch_penalty_km=ruled.switch_penalty_km,
                   storage_cost_km=ruled.storage_cost_km,
                   maritime_multiplier=ruled.maritime_multiplier)


# ---------------------------------------------------------------------------
# path space
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PathSpace:
    """All feasible horizon-``T`` paths, in lexicographic order.

    ``array`` is the ``(N, T+1)`` integer matrix of node ids; ``starts`` and
    ``ends`` are its first/last columns (used for endpoint marginalisation).
    """

    horizon: int
    n: int
    paths: tuple[tuple[int, ...], ...]
    array: np.ndarray = field(repr=False, compare=False, default=None)
    starts: np.ndarray = field(repr=False, compare=False, default=None)
    ends: np.ndarray = field(repr=False, compare=False, default=None)
    index: dict = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        arr = np.asarray(self.paths, dtype=np.int64).reshape(len(self.paths),
                                                             self.horizon + 1)
        object.__setattr__(self, "array", arr)
        object.__setattr__(self, "starts", arr[:, 0].copy())
        object.__setattr__(self, "ends", arr[:, -1].copy())
        object.__setattr__(self, "index", {p: k for k, p in enumerate(self.paths)})

    @property
    def size(self) -> int:
        return len(self.paths)


def enumerate_paths(network: Network, horizon: int,
                    start_support: Iterable[int],
                    end_support: Iterable[int],
                    model: CostModel) -> PathSpace:
    """Materialise the feasible path space.

    Forward frontier extension pruned by backward reachability; partial paths
    are kept in lexicographic order throughout, so the result is lexicographic
    without a sort.  Raises :class:`InfeasibleError` when no path survives.
    """
    if horizon < 1:
        raise ValidationError(f"horizon must be >= 1, got {horizon}")
    n = network.n
    starts = sorted({int(s) for s in start_support})
    ends = {int(s) for s in end_support}
    for s in itertools.chain(starts, ends):
        if not (1 <= s <= n):
            raise ValidationError(f"support references unknown node {s}")
    if not starts or not ends:
        raise ValidationError("start and end supports must be nonempty")

    feasible = {(i, j) for (i, j) in network.edge_pairs()
                if step_feasible(model, network, i, j)}
    preds: dict[int, list[int]] = {i: [] for i in range(1, n + 1)}
    succs: dict[int, list[int]] = {i: [] for i in range(1, n + 1)}
    for (i, j) in sorted(feasible):
        preds[j].append(i)
        succs[i].append(j)

    # reach[t] = nodes from which the end support is reachable in horizon-t steps
    reach = [set() for _ in range(horizon + 1)]
    reach[horizon] = set(ends)
    for t in range(horizon - 1, -1, -1):
        reach[t] = {i for j in reach[t + 1] for i in preds[j]}

    frontier: list[tuple[int, ...]] = [(s,) for s in starts if s in reach[0]]
    for t in range(horizon):
        nxt: list[tuple[int, ...]] = []
        allowed = reach[t + 1]
        for partial in frontier:
            tail = partial[-1]
            for head in succs[tail]:
                if head in allowed:
                    nxt.append(partial + (head,))
        frontier = nxt
        if not frontier:
            break
    if not frontier:
        raise InfeasibleError(
            f"empty path space: no horizon-{horizon} path from {starts} "
            f"to {sorted(ends)} over feasible edges")
    return PathSpace(horizon=horizon, n=n, paths=tuple(frontier))


def strongly_connected(network: Network) -> bool:
    """True when every node reaches every other along directed edges."""
    n = network.n
    pairs = network.edge_pairs()
    succ: dict[int, list[int]] = {i: [] for i in range(1, n + 1)}
    pred: dict[int, list[int]] = {i: [] for i in range(1, n + 1)}
    for (i, j) in pairs:
        succ[i].append(j)
        pred[j].append(i)

    def covers(adj: dict[int, list[int]]) -> bool:
        seen = {1}
        stack = [1]
        while stack:
            for j in adj[stack.pop()]:
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        return len(seen) == n

    return covers(succ) and covers(pred)


def path_costs(space: PathSpace, model: CostModel, network: Network) -> np.ndarray:
    """Vector of path costs aligned with ``space.paths`` (all finite)."""
    out = np.array([path_cost(model, network, p) for p in space.paths], dtype=float)
    if not np.all(np.isfinite(out)):
        bad = [space.paths[k] for k in np.nonzero(~np.isfinite(out))[0][:5]]
        raise ValidationError(f"path space contains infinite-cost paths, e.g. {bad}")
    return out


# ---------------------------------------------------------------------------
# network file I/O
# ---------------------------------------------------------------------------


def network_to_dict(network: Network, ruled: CostModel | None = None) -> dict:
    doc = {
        "nodes": [{"id": nd.id, "x_km": nd.x_km, "y_km": nd.y_km,
                   **({"label": nd.label} if nd.label else {})}
                  for nd in network.nodes],
        "edges": [{"from": e.tail, "to": e.head, "kind": e.kind.value,
                   "length_km": e.length_km}
                  for e in network.edges],
    }
    if ruled is not None:
        doc["cost_rules"] = {
            "highway_discount_2": ruled.highway_discount_2,
            "highway_discount_3plus": ruled.highway_discount_3plus,
            "switch_penalty_km": ruled.switch_penalty_km,
            "storage_cost_km": ruled.storage_cost_km,
            "maritime_multiplier": ruled.maritime_multiplier,
        }
    return doc


def network_from_dict(doc: dict) -> tuple[Network, CostModel]:
    try:
        nodes = [Node(int(nd["id"]), float(nd["x_km"]), float(nd["y_km"]),
                      str(nd.get("label", ""))) for nd in doc["nodes"]]
        edges = [(int(e["from"]), int(e["to"]), str(e["kind"]),
                  e.get("length_km")) for e in doc["edges"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed network document: {exc}") from exc
    try:
        network = build_network(nodes, edges)
    except ValueError as exc:  # unknown EdgeKind value
        raise ValidationError(str(exc)) from exc
    rules = doc.get("cost_rules", {})
    allowed = {"highway_discount_2", "highway_discount_3plus", "switch_penalty_km",
               "storage_cost_km", "maritime_multiplier"}
    unknown = set(rules) - allowed
    if unknown:
        raise ValidationError(f"unknown cost_rules keys: {sorted(unknown)}")
    model = CostModel.ruled(**{k: float(v) for k, v in rules.items()})
    return network, model


def load_network(path: str) -> tuple[Network, CostModel]:
    """Load a network JSON file; returns the network and its ruled cost model."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read network file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"network file {path} is not valid JSON: {exc}") from exc
    return network_from_dict(doc)


def save_network(network: Network, path: str,
                 ruled: CostModel | None = None) -> None:
    from .fileio import atomic_write_text
    atomic_write_text(path, json.dumps(network_to_dict(network, ruled), indent=2,
                                       sort_keys=True) + "\n")
