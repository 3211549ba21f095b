"""Node partitioning for micro-deltas.

A timespan's nodes are split into groups so every stored delta stays small.
Two modes: hashing node ids (no bookkeeping, no locality) or min-cut style
partitioning of the span's time-collapsed graph (locality, needs a stored
node-to-partition map).  Collapsing projects the evolving span onto one
static weighted graph; partitioning that graph then holds for the whole
span.  Cut edges can be patched over by replicating each group's one-hop
frontier into an auxiliary record.

State over a span is treated as a right-continuous step function: the state
reached at time t holds from t until the next change.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .deltas import (
    OUT,
    Event,
    EventKind,
    StaticNode,
    apply_event,
    is_tombstone,
)
from .errors import InfeasibleBalance
from .storage import _PID_SALT, splitmix64

COLLAPSE_FNS = ("median", "union_max", "union_mean")
NODE_WEIGHT_FNS = ("unit", "degree", "mean_degree")

DEFAULT_COLLAPSE = "union_max"
DEFAULT_NODE_WEIGHTS = "unit"

WEIGHT_ATTR = "weight"


@dataclass(frozen=True)
class SpanHistory:
    """One timespan's worth of history.

    start_state holds the live nodes just before the span begins; events are
    the span's own events, times within [span[0], span[1]).
    """

    start_state: Mapping[int, StaticNode]
    events: tuple[Event, ...]
    span: tuple[int, int]

    def __post_init__(self) -> None:
        lo, hi = self.span
        if hi <= lo:
            raise ValueError(f"empty span {self.span}")
        last = lo
        for e in self.events:
            if not lo <= e.time < hi:
                raise ValueError(f"event at {e.time} outside span {self.span}")
            if e.time < last:
                raise ValueError("span events out of order")
            last = e.time


@dataclass
class CollapsedGraph:
    """Static undirected weighted projection of a span."""

    span: tuple[int, int]
    node_weights: dict[int, float]
    # key (a, b) with a < b
    edge_weights: dict[tuple[int, int], float]
    _adj: dict[int, dict[int, float]] | None = field(default=None, repr=False)

    @property
    def adjacency(self) -> dict[int, dict[int, float]]:
        if self._adj is None:
            adj: dict[int, dict[int, float]] = {n: {} for n in self.node_weights}
            for (a, b), w in self.edge_weights.items():
                adj[a][b] = w
                adj[b][a] = w
            self._adj = adj
        return self._adj

    def neighbors(self, nid: int) -> dict[int, float]:
        return self.adjacency.get(nid, {})


@dataclass
class PartitionMap:
    assign: dict[int, int]
    k: int
    method: str = "locality"
    tsid: int = 0

    def members(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {r: [] for r in range(self.k)}
        for nid in sorted(self.assign):
            out[self.assign[nid]].append(nid)
        return out


@dataclass(frozen=True)
class AuxiliaryMicroDelta:
    """One partition's replicated one-hop frontier."""

    pid: int
    nodes: dict[int, StaticNode]


def _edge_weight(node: StaticNode, neighbor: int, direction: str) -> float:
    # attrs are free-form strings; a missing or non-numeric weight counts as 1
    er = node.edge(neighbor, direction)
    assert er is not None
    raw = er.attr_map().get(WEIGHT_ATTR)
    if raw is None:
        return 1.0
    try:
        return float(raw)
    except ValueError:
        return 1.0


def _undirected(directed: Mapping[tuple[int, int], float]) -> dict[tuple[int, int], float]:
    und: dict[tuple[int, int], float] = {}
    for (a, b), w in directed.items():
        key = (a, b) if a < b else (b, a)
        prev = und.get(key)
        und[key] = w if prev is None else max(prev, w)
    return und


class _Sweep:
    """Chronological walk of a span accumulating time-weighted aggregates."""

    def __init__(self, history: SpanHistory) -> None:
        self.lo, self.hi = history.span
        self.state: dict[int, StaticNode] = dict(history.start_state)
        self.directed: dict[tuple[int, int], float] = {}
        for node in history.start_state.values():
            for er in node.edges:
                if er.direction == OUT:
                    self.directed[(node.id, er.neighbor)] = _edge_weight(
                        node, er.neighbor, OUT
                    )
        self.ever: set[int] = set(self.state)
        self.max_w: dict[tuple[int, int], float] = {}
        self.integral_w: dict[tuple[int, int], float] = defaultdict(float)
        self.integral_deg: dict[int, float] = defaultdict(float)
        self._run(history.events)

    def _accumulate(self, dt: int) -> None:
        und = _undirected(self.directed)
        for key, w in und.items():
            self.integral_w[key] += w * dt
            prev = self.max_w.get(key)
            self.max_w[key] = w if prev is None else max(prev, w)
            a, b = key
            self.integral_deg[a] += dt
            self.integral_deg[b] += dt

    def _apply(self, e: Event) -> None:
        if e.kind is EventKind.ADD_NODE:
            self.ever.add(e.subject)
        updates = apply_event(self.state.get, e)
        for nid, entry in updates.items():
            if is_tombstone(entry):
                self.state.pop(nid, None)
            else:
                self.state[nid] = entry  # type: ignore[assignment]
        if e.kind in (
            EventKind.ADD_EDGE,
            EventKind.DELETE_EDGE,
            EventKind.SET_EDGE_ATTR,
            EventKind.DEL_EDGE_ATTR,
        ):
            src, dst = (e.subject, e.peer) if e.direction == OUT else (e.peer, e.subject)
            assert src is not None and dst is not None
            if e.kind is EventKind.DELETE_EDGE:
                self.directed.pop((src, dst), None)
            else:
                self.directed[(src, dst)] = _edge_weight(self.state[src], dst, OUT)

    def _run(self, events: Sequence[Event]) -> None:
        cur = self.lo
        for e in events:
            if e.time > cur:
                self._accumulate(e.time - cur)
                cur = e.time
            self._apply(e)
        if self.hi > cur:
            self._accumulate(self.hi - cur)


def _median_change_point(history: SpanHistory) -> int:
    times = sorted({e.time for e in history.events})
    if not times:
        return history.span[0]
    # even count: the earlier of the two middle points
    return times[(len(times) - 1) // 2]


def _state_at(history: SpanHistory, t: int) -> dict[int, StaticNode]:
    state = dict(history.start_state)
    for e in history.events:
        if e.time > t:
            break
        updates = apply_event(state.get, e)
        for nid, entry in updates.items():
            if is_tombstone(entry):
                state.pop(nid, None)
            else:
                state[nid] = entry  # type: ignore[assignment]
    return state


def collapse(
    history: SpanHistory,
    fn: str = DEFAULT_COLLAPSE,
    wfn: str = DEFAULT_NODE_WEIGHTS,
) -> CollapsedGraph:
    """Project a span onto a static weighted graph.

    fn picks the edge set and weights: "median" takes the snapshot at the
    middle change point; "union_max" keeps every edge that was ever alive at
    its maximum weight; "union_mean" keeps the same edges at their
    time-fraction averaged weight, counting absence as 0.  wfn picks node
    weights: 1, degree in the collapsed graph, or time-averaged degree.
    Every node alive at any point in the span appears in the result.
    """
    if fn not in COLLAPSE_FNS:
        raise ValueError(f"unknown collapse fn {fn!r}")
    if wfn not in NODE_WEIGHT_FNS:
        raise ValueError(f"unknown node weight fn {wfn!r}")
    sweep = _Sweep(history)
    lo, hi = history.span

    if fn == "median":
        state = _state_at(history, _median_change_point(history))
        directed: dict[tuple[int, int], float] = {}
        for node in state.values():
            for er in node.edges:
                if er.direction == OUT:
                    directed[(node.id, er.neighbor)] = _edge_weight(
                        node, er.neighbor, OUT
                    )
        edges = _undirected(directed)
    elif fn == "union_max":
        edges = dict(sweep.max_w)
    else:
        span_len = hi - lo
        edges = {
            key: total / span_len
            for key, total in sweep.integral_w.items()
            if total > 0
        }

    degree: dict[int, int] = defaultdict(int)
    for a, b in edges:
        degree[a] += 1
        degree[b] += 1

    nodes: dict[int, float] = {}
    for nid in sweep.ever:
        if wfn == "unit":
            nodes[nid] = 1.0
        elif wfn == "degree":
            nodes[nid] = float(degree.get(nid, 0))
        else:
            nodes[nid] = sweep.integral_deg.get(nid, 0.0) / (hi - lo)
    return CollapsedGraph(span=history.span, node_weights=nodes, edge_weights=edges)


def edge_cut(g: CollapsedGraph, assign: Mapping[int, int]) -> float:
    """Total weight of edges whose endpoints land in different partitions."""
    return sum(
        w for (a, b), w in g.edge_weights.items() if assign[a] != assign[b]
    )


def partition_random(nids: Iterable[int], k: int, tsid: int = 0) -> PartitionMap:
    """Structure-blind balanced assignment.

    Ids are ordered by a fixed hash and dealt round-robin, so the result
    is deterministic for a given id set and every partition size stays
    within the floor/ceil balance band."""
    if k < 1:
        raise ValueError("k must be >= 1")
    order = sorted(nids, key=lambda nid: (splitmix64(nid ^ _PID_SALT), nid))
    assign = {nid: i % k for i, nid in enumerate(order)}
    return PartitionMap(assign=assign, k=k, method="random", tsid=tsid)


class _Balancer:
    """Size bookkeeping for one partitioning run.

    Unit weights get the exact bound floor(|V|/k) <= size <= ceil(|V|/k).
    Varying weights relax to target +- the heaviest node, since exact
    floor/ceil counts can be infeasible then.
    """

    def __init__(self, weights: Mapping[int, float], k: int) -> None:
        self.w = weights
        self.k = k
        self.unit = all(v == 1.0 for v in weights.values())
        n = len(weights)
        if self.unit:
            self.floor = n // k
            self.ceil = -(-n // k)
            base, rem = divmod(n, k)
            self.caps = [base + 1 if r < rem else base for r in range(k)]
        else:
            total = sum(weights.values())
            maxw = max(weights.values())
            self.target = total / k
            self.lo_w = self.target - maxw
            self.hi_w = self.target + maxw
            self.caps = None
        self.load = [0.0] * k
        self.count = [0] * k

    def add(self, r: int, nid: int) -> None:
        self.load[r] += self.w[nid]
        self.count[r] += 1

    def remove(self, r: int, nid: int) -> None:
        self.load[r] -= self.w[nid]
        self.count[r] -= 1

    def grow_room(self, r: int) -> bool:
        if self.unit:
            return self.count[r] < self.caps[r]
        return self.load[r] < self.target

    def can_accept(self, r: int, nid: int) -> bool:
        if self.unit:
            return self.count[r] + 1 <= self.ceil
        return self.load[r] + self.w[nid] <= self.hi_w

    def can_release(self, r: int, nid: int) -> bool:
        if self.unit:
            return self.count[r] - 1 >= self.floor
        return self.load[r] - self.w[nid] >= self.lo_w

    def can_swap(self, a: int, u: int, b: int, v: int) -> bool:
        if self.unit:
            return True
        la = self.load[a] - self.w[u] + self.w[v]
        lb = self.load[b] - self.w[v] + self.w[u]
        return self.lo_w <= la <= self.hi_w and self.lo_w <= lb <= self.hi_w

    def lightest(self) -> int:
        key = self.count if self.unit else self.load
        return min(range(self.k), key=lambda r: (key[r], r))


def _conn(adj: Mapping[int, Mapping[int, float]], assign: Mapping[int, int], nid: int) -> dict[int, float]:
    out: dict[int, float] = defaultdict(float)
    for m, w in adj.get(nid, {}).items():
        r = assign.get(m)
        if r is not None:
            out[r] += w
    return out


def _grow_fresh(g: CollapsedGraph, bal: _Balancer, k: int) -> dict[int, int]:
    adj = g.adjacency
    strength = {n: sum(adj[n].values()) for n in g.node_weights}
    unassigned = set(g.node_weights)
    assign: dict[int, int] = {}
    for r in range(k):
        if not unassigned:
            break
        seed = min(unassigned, key=lambda n: (-strength[n], n))
        assign[seed] = r
        bal.add(r, seed)
        unassigned.discard(seed)
        conn: dict[int, float] = defaultdict(float)
        for m, w in adj[seed].items():
            if m in unassigned:
                conn[m] += w
        while unassigned and bal.grow_room(r):
            if conn:
                pick = min(conn, key=lambda n: (-conn[n], n))
            else:
                pick = min(unassigned, key=lambda n: (-strength[n], n))
            assign[pick] = r
            bal.add(r, pick)
            unassigned.discard(pick)
            conn.pop(pick, None)
            for m, w in adj[pick].items():
                if m in unassigned:
                    conn[m] += w
    # leftovers go wherever there is room, preferring attached partitions
    for nid in sorted(unassigned, key=lambda n: (-strength[n], n)):
        by_conn = _conn(adj, assign, nid)
        choices = sorted(range(k), key=lambda r: (-by_conn.get(r, 0.0), r))
        target = next((r for r in choices if bal.can_accept(r, nid)), None)
        if target is None:
            target = bal.lightest()
        assign[nid] = target
        bal.add(target, nid)
    return assign


def _seed_from_prev(
    g: CollapsedGraph, bal: _Balancer, k: int, prev: Mapping[int, int]
) -> dict[int, int]:
    adj = g.adjacency
    assign: dict[int, int] = {}
    for nid in sorted(g.node_weights):
        r = prev.get(nid)
        if r is not None and 0 <= r < k and bal.can_accept(r, nid):
            assign[nid] = r
            bal.add(r, nid)
    for nid in sorted(set(g.node_weights) - set(assign)):
        by_conn = _conn(adj, assign, nid)
        choices = sorted(range(k), key=lambda r: (-by_conn.get(r, 0.0), r))
        target = next((r for r in choices if bal.can_accept(r, nid)), None)
        if target is None:
            target = bal.lightest()
        assign[nid] = target
        bal.add(target, nid)
    return assign


def _fix_underfull(g: CollapsedGraph, bal: _Balancer, assign: dict[int, int]) -> None:
    # only the unit path has hard lower bounds to restore
    if not bal.unit:
        return
    adj = g.adjacency
    while True:
        poor = next((r for r in range(bal.k) if bal.count[r] < bal.floor), None)
        if poor is None:
            return
        # take the donor node with the least to lose: most attached to the
        # poor partition, least attached to its own
        best = None
        for nid in sorted(assign):
            r = assign[nid]
            if r == poor or not bal.can_release(r, nid):
                continue
            by_conn = _conn(adj, assign, nid)
            score = by_conn.get(poor, 0.0) - by_conn.get(r, 0.0)
            if best is None or score > best[0]:
                best = (score, nid)
        assert best is not None, "partition counts cannot sum correctly"
        _, nid = best
        bal.remove(assign[nid], nid)
        assign[nid] = poor
        bal.add(poor, nid)


def _fix_weighted(g: CollapsedGraph, bal: _Balancer, assign: dict[int, int]) -> None:
    # shuttle nodes from the heaviest partition to the lightest until every
    # load sits within target +- max node weight; each strict move lowers
    # the sum of squared loads, so this terminates
    if bal.unit:
        return
    adj = g.adjacency
    while True:
        hi_r = max(range(bal.k), key=lambda r: (bal.load[r], -r))
        lo_r = min(range(bal.k), key=lambda r: (bal.load[r], r))
        if bal.load[hi_r] <= bal.hi_w and bal.load[lo_r] >= bal.lo_w:
            return
        spread = bal.load[hi_r] - bal.load[lo_r]
        movable = [n for n, r in assign.items() if r == hi_r and bal.w[n] < spread]
        if not movable:
            return

        def score(n: int) -> tuple[float, int]:
            c = _conn(adj, assign, n)
            return (c.get(lo_r, 0.0) - c.get(hi_r, 0.0), -n)

        nid = max(movable, key=score)
        bal.remove(hi_r, nid)
        assign[nid] = lo_r
        bal.add(lo_r, nid)


def _refine(
    g: CollapsedGraph, bal: _Balancer, assign: dict[int, int], passes: int = 10
) -> None:
    adj = g.adjacency
    order = sorted(assign)
    edges = sorted(g.edge_weights)
    for _ in range(passes):
        improved = False
        for nid in order:
            a = assign[nid]
            by_conn = _conn(adj, assign, nid)
            if not by_conn:
                continue
            b = min(by_conn, key=lambda r: (-by_conn[r], r))
            gain = by_conn.get(b, 0.0) - by_conn.get(a, 0.0)
            if b != a and gain > 0 and bal.can_release(a, nid) and bal.can_accept(b, nid):
                bal.remove(a, nid)
                assign[nid] = b
                bal.add(b, nid)
                improved = True
        for u, v in edges:
            a, b = assign[u], assign[v]
            if a == b:
                continue
            w_uv = g.edge_weights[(u, v)]
            cu = _conn(adj, assign, u)
            cv = _conn(adj, assign, v)
            gain = (
                cu.get(b, 0.0) - cu.get(a, 0.0)
                + cv.get(a, 0.0) - cv.get(b, 0.0)
                - 2 * w_uv
            )
            if gain > 0 and bal.can_swap(a, u, b, v):
                bal.remove(a, u)
                bal.remove(b, v)
                assign[u], assign[v] = b, a
                bal.add(b, u)
                bal.add(a, v)
                improved = True
        if not improved:
            return


def partition_locality(
    g: CollapsedGraph,
    k: int,
    prev: Mapping[int, int] | None = None,
    tsid: int = 0,
) -> PartitionMap:
    """Balanced low-cut partitioning of a collapsed graph.

    Greedy seeded growth (or the previous span's map as a warm start),
    followed by move/swap refinement under the balance bounds.  Fully
    deterministic for a given input.
    """
    n = len(g.node_weights)
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise InfeasibleBalance(f"cannot split {n} nodes into {k} partitions")
    bal = _Balancer(g.node_weights, k)
    if prev:
        assign = _seed_from_prev(g, bal, k, prev)
    else:
        assign = _grow_fresh(g, bal, k)
    _fix_underfull(g, bal, assign)
    _fix_weighted(g, bal, assign)
    _refine(g, bal, assign)
    return PartitionMap(assign=assign, k=k, method="locality", tsid=tsid)


def build_auxiliary(
    snapshot: Mapping[int, StaticNode], pm: PartitionMap
) -> dict[int, AuxiliaryMicroDelta]:
    """Per partition, the foreign one-hop neighbors of its members.

    With these replicas alongside, a one-hop query resolves from a single
    partition's records.  Home records are untouched.
    """
    aux: dict[int, dict[int, StaticNode]] = {r: {} for r in range(pm.k)}
    for nid, node in snapshot.items():
        home = pm.assign[nid]
        for m in node.neighbor_ids():
            if pm.assign.get(m, home) != home:
                peer = snapshot.get(m)
                if peer is not None:
                    aux[home][m] = peer
    return {
        r: AuxiliaryMicroDelta(pid=r, nodes=nodes)
        for r, nodes in aux.items()
    }


def npids_for(node_count: int, psize: int) -> int:
    """Partition count that keeps groups at psize nodes or fewer."""
    if psize < 1:
        raise ValueError("psize must be >= 1")
    return max(1, -(-node_count // psize))


def repartition_for_span(
    prev: PartitionMap | None,
    history: SpanHistory,
    psize: int,
    partitioning: str = "locality",
    collapse_fn: str = DEFAULT_COLLAPSE,
    node_weights: str = DEFAULT_NODE_WEIGHTS,
    tsid: int = 0,
) -> PartitionMap:
    """Fresh per-span partitioning, warm-started from the previous span."""
    g = collapse(history, collapse_fn, node_weights)
    k = npids_for(len(g.node_weights), psize)
    if partitioning == "random":
        return partition_random(g.node_weights, k, tsid=tsid)
    if partitioning != "locality":
        raise ValueError(f"unknown partitioning {partitioning!r}")
    prev_assign = prev.assign if prev is not None else None
    return partition_locality(g, k, prev=prev_assign, tsid=tsid)
