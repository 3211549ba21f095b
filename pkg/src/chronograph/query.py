"""Temporal retrieval over a built index.

Every query starts from the same plan: locate the timespan holding the
query time, anchor at the highest checkpoint at or before it (falling back
to the previous span's last checkpoint, or to nothing at the very start of
history), then close the remaining distance with eventlist replay.  Whole
snapshots fold the anchor leaf from per-level tree records; single-node
reads walk the node's version chain instead and touch only records the
chain points at.  Neighborhood expansion can resolve out-of-partition
neighbors from the auxiliary replicas co-located with the expanding node's
micro-partition, keeping the touched partition count at two per group.

Workers pair with storage shards; the coordinator merges in plan order, so
results are identical for any worker count.
"""

from __future__ import annotations

from bisect import bisect_right
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

from .codec import EventBlock, TimespanMeta
from .deltas import (
    Delta,
    Entry,
    Event,
    EventKind,
    NodeId,
    StaticNode,
    Time,
    apply_event,
    apply_event_partial,
    event_touches,
    flip_direction,
)
from .errors import InconsistentDelta, OutOfSpan
from .graphs import GraphS
from .layout import gap_did, gap_of_did, gaps_covering, tree_shape
from .storage import AUX_DID_BIT, DeltaKey, GraphStore, shard_of_placement, sid_of


@dataclass
class QueryStats:
    """Fetch instrumentation for one reader; reset between measurements.

    tree/eventlist counts cover home records only; auxiliary replicas are
    tallied separately so isolation (node and snapshot reads never touch
    them) stays checkable.  partition_fetches is the number of distinct
    micro-partition groups consulted, the unit the locality design aims to
    minimize.
    """

    tree_reads: int = 0
    eventlist_reads: int = 0
    aux_reads: int = 0
    chain_reads: int = 0
    events_applied: int = 0
    keys: list[DeltaKey] = field(default_factory=list)
    groups: set[tuple[int, int, int, bool]] = field(default_factory=set)

    @property
    def record_reads(self) -> int:
        return self.tree_reads + self.eventlist_reads + self.aux_reads

    @property
    def partition_fetches(self) -> int:
        return len(self.groups)


def _fold_member(entry: Entry | None, nid: NodeId, items: list[tuple[int, Event]]) -> Entry | None:
    """Apply a node's own side of the given (seq, event) items to entry."""
    items.sort(key=lambda x: x[0])
    working: dict[NodeId, Entry] = {} if entry is None else {nid: entry}
    for _seq, e in items:
        working.update(apply_event_partial(working.get, e, lambda x: x == nid))
    return working.get(nid)


@dataclass(frozen=True)
class NodeHistory:
    """One node's evolution over a window: state at start, events after.

    Events cover (start, end]; materializing at t folds the initial state
    with the events at or before t.
    """

    id: NodeId
    start: Time
    end: Time
    initial: StaticNode | None
    events: tuple[Event, ...]

    def at(self, t: Time) -> StaticNode | None:
        if not self.start <= t <= self.end:
            raise OutOfSpan(f"time {t} outside [{self.start}, {self.end}]")
        items = [(i, e) for i, e in enumerate(self.events) if e.time <= t]
        entry = _fold_member(self.initial, self.id, items)
        return entry if isinstance(entry, StaticNode) else None


@dataclass(frozen=True)
class NeighborSlice:
    """A neighbor's history during one closed adjacency interval."""

    start: Time
    end: Time
    history: NodeHistory


@dataclass(frozen=True)
class NeighborhoodHistory:
    """A node's history plus per-neighbor histories clipped to adjacency."""

    center: NodeHistory
    neighbors: dict[NodeId, tuple[NeighborSlice, ...]]

    def materialize(self, t: Time) -> GraphS:
        """Snapshot of the 1-hop neighborhood at t in (start, end]."""
        if not self.center.start < t <= self.center.end:
            raise OutOfSpan(f"time {t} outside ({self.center.start}, {self.center.end}]")
        state = self.center.at(t)
        if state is None:
            return GraphS.empty()
        entries: dict[NodeId, StaticNode] = {self.center.id: state}
        for nid, slices in self.neighbors.items():
            for s in slices:
                if s.start <= t <= s.end:
                    got = s.history.at(t)
                    if got is None:
                        raise InconsistentDelta(f"adjacent node {nid} absent at {t}")
                    entries[nid] = got
                    break
        return GraphS(entries).induced(entries.keys())


@dataclass(frozen=True)
class _Plan:
    """Resolved anchor for one query time."""

    span: TimespanMeta                 # timespan the query time falls in
    anchor_ts: TimespanMeta | None     # span holding the anchor leaf
    anchor_time: Time | None
    leaf: int                          # leaf index within anchor_ts
    # (did, lo, hi) of the query span's eventlist gaps intersecting
    # (anchor_time, t]; lo is None for the first gap of history
    gaps: tuple[tuple[int, Time | None, Time], ...]


class _AuxView:
    """Lazily fetched auxiliary replicas of one micro-partition group.

    Valid only when the anchor leaf lies in the query span: replica scopes
    are per-span, so a cross-span anchor would pair the wrong partition
    map with the tree path.
    """

    def __init__(self, reader: "IndexReader", plan: _Plan, sid: int, pid: int):
        self.reader = reader
        self.plan = plan
        self.sid = sid
        self.pid = pid
        shape = tree_shape(len(plan.span.checkpts), plan.span.k)
        self.path = shape.path_dids(plan.leaf)
        self._tree: dict[int, Delta | None] = {}
        self._blocks: list[EventBlock] | None = None

    def _fetch(self, did: int) -> Delta | EventBlock | None:
        key = DeltaKey(self.plan.span.tsid, self.sid, did | AUX_DID_BIT, self.pid)
        value = self.reader.store.try_get_delta(key)
        if value is not None:
            self.reader._count(key)
        return value

    def _tree_rec(self, did: int) -> Delta | None:
        if did not in self._tree:
            self._tree[did] = self._fetch(did)  # type: ignore[assignment]
        return self._tree[did]

    def _gap_blocks(self) -> list[EventBlock]:
        if self._blocks is None:
            self._blocks = []
            for did, _lo, _hi in self.plan.gaps:
                block = self._fetch(did)
                if block is not None:
                    self._blocks.append(block)  # type: ignore[arg-type]
        return self._blocks

    def prefetch(self) -> None:
        """Pull the whole replica up front.  Under replication the home
        micro-delta and its auxiliary travel as one co-located unit, so a
        neighborhood query pays for both whether or not the frontier ends
        up being needed."""
        for did in self.path:
            self._tree_rec(did)
        self._gap_blocks()

    def entry_at(self, nid: NodeId, t: Time) -> Entry | None:
        entry: Entry | None = None
        for did in reversed(self.path):
            rec = self._tree_rec(did)
            if rec is not None and nid in rec:
                entry = rec.get(nid)
                break
        anchor = self.plan.anchor_time
        items = []
        for block in self._gap_blocks():
            for seq, e in block.items:
                if anchor < e.time <= t and event_touches(e, (nid,)):  # type: ignore[operator]
                    items.append((seq, e))
        if items:
            self.reader.stats.events_applied += len(items)
            entry = _fold_member(entry, nid, items)
        return entry


class IndexReader:
    """Read-side API over a built index.

    Safe for concurrent independent queries; the stats object is not, so
    measure fetch counts from a single thread.
    """

    def __init__(self, store: GraphStore, workers: int = 1):
        if workers < 1:
            raise ValueError("worker count must be >= 1")
        self.store = store
        self.workers = workers
        self.stats = QueryStats()

    def reset_stats(self) -> None:
        self.stats = QueryStats()

    # -- plumbing ---------------------------------------------------------

    def _count(self, key: DeltaKey) -> None:
        s = self.stats
        s.keys.append(key)
        s.groups.add((key.tsid, key.sid, key.pid, key.is_aux))
        if key.is_aux:
            s.aux_reads += 1
        elif (key.did & ~AUX_DID_BIT) % 2:
            s.eventlist_reads += 1
        else:
            s.tree_reads += 1

    def _spans(self) -> list[TimespanMeta]:
        return sorted(self.store.list_timespans(), key=lambda m: m.tsid)

    def _plan(self, t: Time) -> _Plan | None:
        spans = self._spans()
        if not spans or t < spans[0].start:
            return None
        idx = bisect_right([sp.start for sp in spans], t) - 1
        span = spans[idx]
        ci = bisect_right(span.checkpts, t) - 1
        if ci >= 0:
            anchor_ts, leaf, anchor_time = span, ci, span.checkpts[ci]
        elif idx > 0:
            prev = spans[idx - 1]
            anchor_ts, leaf, anchor_time = prev, len(prev.checkpts) - 1, prev.checkpts[-1]
        else:
            anchor_ts, leaf, anchor_time = None, -1, None
        gaps = []
        for j in gaps_covering(list(span.checkpts), anchor_time, t):
            if j >= 2:
                lo: Time | None = span.checkpts[j - 2]
            else:
                lo = spans[idx - 1].checkpts[-1] if idx > 0 else None
            gaps.append((gap_did(j), lo, span.checkpts[j - 1]))
        return _Plan(span, anchor_ts, anchor_time, leaf, tuple(gaps))

    def _run_fetches(
        self, fetches: Sequence[tuple[str, int, int, int]], workers: int | None
    ) -> list[list[tuple[DeltaKey, Delta | EventBlock]]]:
        """Run (kind, tsid, sid, did) prefix scans, worker per shard group."""

        def scan_one(f: tuple[str, int, int, int]) -> list:
            _kind, tsid, sid, did = f
            return list(self.store.scan_deltas(tsid, sid, did))

        c = self.workers if workers is None else max(1, workers)
        if c <= 1 or len(fetches) <= 1:
            return [scan_one(f) for f in fetches]
        shards = self.store.backend.shards
        by_shard: dict[int, list[int]] = defaultdict(list)
        for i, f in enumerate(fetches):
            by_shard[shard_of_placement(f[1], f[2], shards)].append(i)

        def run_group(idxs: list[int]) -> list:
            return [(i, scan_one(fetches[i])) for i in idxs]

        results: list = [None] * len(fetches)
        with ThreadPoolExecutor(max_workers=min(c, len(by_shard))) as pool:
            for chunk in pool.map(run_group, by_shard.values()):
                for i, recs in chunk:
                    results[i] = recs
        return results

    # -- whole-graph reads ------------------------------------------------

    def _snapshot_entries(self, t: Time, workers: int | None = None) -> dict[NodeId, Entry]:
        plan = self._plan(t)
        if plan is None:
            return {}
        fetches: list[tuple[str, int, int, int]] = []
        if plan.anchor_ts is not None:
            shape = tree_shape(len(plan.anchor_ts.checkpts), plan.anchor_ts.k)
            for did in shape.path_dids(plan.leaf):
                for sid in range(plan.anchor_ts.ns):
                    fetches.append(("tree", plan.anchor_ts.tsid, sid, did))
        for did, _lo, _hi in plan.gaps:
            for sid in range(plan.span.ns):
                fetches.append(("gap", plan.span.tsid, sid, did))
        results = self._run_fetches(fetches, workers)

        entries: dict[NodeId, Entry] = {}
        pending: dict[int, Event] = {}
        for f, recs in zip(fetches, results):
            for key, value in recs:
                self._count(key)
                if f[0] == "tree":
                    assert isinstance(value, Delta)
                    entries.update(value.entries)
                else:
                    assert isinstance(value, EventBlock)
                    for seq, e in value.items:
                        if plan.anchor_time is not None and e.time <= plan.anchor_time:
                            continue
                        if e.time <= t:
                            pending[seq] = e  # same event may arrive from both endpoints' groups
        for seq in sorted(pending):
            entries.update(apply_event(entries.get, pending[seq]))
            self.stats.events_applied += 1
        return entries

    def snapshot_state(self, t: Time, workers: int | None = None) -> dict[NodeId, StaticNode]:
        """Live nodes at t as a plain dict (tombstones dropped)."""
        return {
            n: e
            for n, e in self._snapshot_entries(t, workers).items()
            if isinstance(e, StaticNode)
        }

    def get_snapshot(self, t: Time, workers: int | None = None) -> GraphS:
        """The whole graph at t; empty before the first event."""
        return GraphS(self.snapshot_state(t, workers))

    def scan_events(self, ts: Time, te: Time, workers: int | None = None) -> list[Event]:
        """Every stored event with ts < time <= te, in log order."""
        if ts > te:
            raise ValueError(f"bad window ({ts}, {te}]")
        fetches: list[tuple[str, int, int, int]] = []
        for sp in self._spans():
            if sp.start > te or sp.end <= ts:
                continue
            for j in gaps_covering(list(sp.checkpts), ts, te):
                for sid in range(sp.ns):
                    fetches.append(("gap", sp.tsid, sid, gap_did(j)))
        pending: dict[int, Event] = {}
        for recs in self._run_fetches(fetches, workers):
            for key, value in recs:
                self._count(key)
                assert isinstance(value, EventBlock)
                for seq, e in value.items:
                    if ts < e.time <= te:
                        pending[seq] = e
        return [pending[seq] for seq in sorted(pending)]

    # -- single-node reads ------------------------------------------------

    def _node_entry_at(
        self,
        nid: NodeId,
        t: Time,
        plan: _Plan,
        chain: dict[int, list[tuple[Time, DeltaKey]]] | None = None,
    ) -> Entry | None:
        if chain is None:
            chain = self.store.get_chain(nid)
            self.stats.chain_reads += 1
        if not chain:
            return None
        entry: Entry | None = None
        if plan.anchor_ts is not None:
            refs = chain.get(plan.anchor_ts.tsid, [])
            if refs:
                shape = tree_shape(len(plan.anchor_ts.checkpts), plan.anchor_ts.k)
                depth = {did: i for i, did in enumerate(shape.path_dids(plan.leaf))}
                best: DeltaKey | None = None
                best_depth = -1
                for _t_ref, key in refs:
                    if key.did % 2 == 0 and depth.get(key.did, -1) > best_depth:
                        best, best_depth = key, depth[key.did]
                if best is not None:
                    rec = self.store.get_delta(best)
                    self._count(best)
                    assert isinstance(rec, Delta)
                    entry = rec.get(nid)
        gap_index = {did: (lo, hi) for did, lo, hi in plan.gaps}
        items: list[tuple[int, Event]] = []
        for t_ref, key in chain.get(plan.span.tsid, []):
            if key.did % 2 == 0 or key.did not in gap_index or t_ref > t:
                continue
            block = self.store.get_delta(key)
            self._count(key)
            assert isinstance(block, EventBlock)
            for seq, e in block.items:
                if plan.anchor_time is not None and e.time <= plan.anchor_time:
                    continue
                if e.time <= t and event_touches(e, (nid,)):
                    items.append((seq, e))
        if items:
            self.stats.events_applied += len(items)
            entry = _fold_member(entry, nid, items)
        return entry

    def get_node_at(self, nid: NodeId, t: Time) -> StaticNode | None:
        """The node's state at t; None when absent, deleted, or pre-creation."""
        plan = self._plan(t)
        if plan is None:
            return None
        entry = self._node_entry_at(nid, t, plan)
        return entry if isinstance(entry, StaticNode) else None

    def get_node_history(self, nid: NodeId, ts: Time, te: Time) -> NodeHistory:
        """State at ts plus the node's events in (ts, te].

        Fetches only micro-deltas the node's version chain references.
        """
        if ts > te:
            raise ValueError(f"bad window [{ts}, {te}]")
        chain = self.store.get_chain(nid)
        self.stats.chain_reads += 1
        initial: StaticNode | None = None
        plan = self._plan(ts)
        if plan is not None and chain:
            entry = self._node_entry_at(nid, ts, plan, chain)
            initial = entry if isinstance(entry, StaticNode) else None
        items: list[tuple[int, Event]] = []
        spans = self._spans()
        for i, sp in enumerate(spans):
            if sp.start > te or sp.end <= ts:
                continue
            for t_ref, key in chain.get(sp.tsid, []):
                if key.did % 2 == 0 or t_ref > te:
                    continue
                j = gap_of_did(key.did)
                if j >= 2:
                    lo: Time | None = sp.checkpts[j - 2]
                else:
                    lo = spans[i - 1].checkpts[-1] if i > 0 else None
                hi = sp.checkpts[j - 1]
                if hi <= ts or (lo is not None and lo >= te):
                    continue
                block = self.store.get_delta(key)
                self._count(key)
                assert isinstance(block, EventBlock)
                for seq, e in block.items:
                    if ts < e.time <= te and event_touches(e, (nid,)):
                        items.append((seq, e))
        items.sort(key=lambda x: x[0])
        return NodeHistory(nid, ts, te, initial, tuple(e for _seq, e in items))

    # -- neighborhoods ----------------------------------------------------

    def get_k_hop_snapshot_first(
        self, nid: NodeId, t: Time, k: int, workers: int | None = None
    ) -> GraphS:
        """k-hop neighborhood by filtering a whole snapshot."""
        snap = self.get_snapshot(t, workers)
        return snap.induced(snap.khop_ball(nid, k))

    def get_k_hop_expand(self, nid: NodeId, t: Time, k: int) -> GraphS:
        """k-hop neighborhood by frontier expansion, one fetch per node.

        With locality partitioning and replication, neighbors outside the
        expanding node's micro-partition resolve from that partition's
        auxiliary replica, so no lookup leaves the group.
        """
        if k < 0:
            raise ValueError("hop count must be >= 0")
        plan = self._plan(t)
        if plan is None:
            return GraphS.empty()
        entry = self._node_entry_at(nid, t, plan)
        if not isinstance(entry, StaticNode):
            return GraphS.empty()
        sp = plan.span
        fast = (
            sp.partitioning == "locality"
            and sp.replicate_1hop
            and plan.anchor_ts is sp
        )
        views: dict[tuple[int, int], _AuxView] = {}
        pids: dict[NodeId, int] = {}

        def group_of(n: NodeId) -> tuple[int, int]:
            pid = pids.get(n)
            if pid is None:
                got = self.store.get_pid(n, sp.tsid)
                if got is None:
                    raise InconsistentDelta(f"node {n} has no micro-partition in timespan {sp.tsid}")
                pids[n] = pid = got
            return sid_of(n, sp.ns), pid

        if fast and k >= 1:
            g0 = group_of(nid)
            views[g0] = _AuxView(self, plan, *g0)
            views[g0].prefetch()
        ball: dict[NodeId, StaticNode] = {nid: entry}
        frontier = [nid]
        for _ in range(k):
            nxt: dict[NodeId, StaticNode] = {}
            for n in frontier:
                g_n = group_of(n) if fast else None
                for m in sorted(ball[n].neighbor_ids()):
                    if m in ball or m in nxt:
                        continue
                    if fast and group_of(m) != g_n:
                        view = views.get(g_n)  # type: ignore[arg-type]
                        if view is None:
                            view = views[g_n] = _AuxView(self, plan, *g_n)  # type: ignore[index, misc]
                        got = view.entry_at(m, t)
                    else:
                        got = self._node_entry_at(m, t, plan)
                    if not isinstance(got, StaticNode):
                        raise InconsistentDelta(f"live neighbor {m} unresolvable at {t}")
                    nxt[m] = got
            if not nxt:
                break
            ball.update(nxt)
            frontier = sorted(nxt)
        return GraphS(dict(ball)).induced(ball.keys())

    def get_k_hop(
        self,
        nid: NodeId,
        t: Time,
        k: int,
        strategy: str = "auto",
        workers: int | None = None,
    ) -> GraphS:
        """Either neighborhood strategy; auto expands for k <= 2."""
        if strategy not in ("auto", "expand", "snapshot"):
            raise ValueError(f"unknown strategy {strategy!r}")
        if strategy == "expand" or (strategy == "auto" and k <= 2):
            return self.get_k_hop_expand(nid, t, k)
        return self.get_k_hop_snapshot_first(nid, t, k, workers)

    def get_1hop_history(self, nid: NodeId, ts: Time, te: Time) -> NeighborhoodHistory:
        """The node's history plus neighbor histories clipped to adjacency.

        Adjacency intervals are closed [a, b] within (ts, te]; each
        neighbor's clipped history starts at its interval's first instant.
        """
        center = self.get_node_history(nid, ts, te)
        slices: dict[NodeId, list[NeighborSlice]] = {}
        for m, intervals in _adjacency_intervals(center).items():
            out = []
            for a, b in intervals:
                out.append(NeighborSlice(a, b, self.get_node_history(m, a, b)))
            slices[m] = out
        return NeighborhoodHistory(center, {m: tuple(v) for m, v in sorted(slices.items())})

    def get_neighborhood_versions(
        self, nid: NodeId, k: int, times: Sequence[Time]
    ) -> list[GraphS]:
        """The k-hop neighborhood at each listed time, ascending."""
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("times must be sorted ascending")
        return [self.get_k_hop_expand(nid, t, k) for t in times]


def _adjacency_intervals(center: NodeHistory) -> dict[NodeId, list[tuple[Time, Time]]]:
    """Closed intervals within (start, end] when each neighbor was adjacent.

    Adjacency from the initial state opens at start+1; an edge deleted at d
    closes its interval at d-1; intervals still open at the end close at
    end.  Empty intervals are dropped.
    """
    nid = center.id
    live: dict[NodeId, set[str]] = {}
    if center.initial is not None:
        for er in center.initial.edges:
            live.setdefault(er.neighbor, set()).add(er.direction)
    open_at = {m: center.start + 1 for m in live}
    done: dict[NodeId, list[tuple[Time, Time]]] = {}

    def emit(m: NodeId, a: Time, b: Time) -> None:
        if a <= b:
            done.setdefault(m, []).append((a, b))

    for e in center.events:
        if e.kind not in (EventKind.ADD_EDGE, EventKind.DELETE_EDGE):
            continue
        if e.subject == nid:
            m, d = e.peer, e.direction
        else:
            m, d = e.subject, flip_direction(e.direction)  # type: ignore[arg-type]
        assert m is not None and d is not None
        if e.kind is EventKind.ADD_EDGE:
            dirs = live.setdefault(m, set())
            if not dirs:
                open_at[m] = e.time
            dirs.add(d)
        else:
            dirs = live[m]
            dirs.remove(d)
            if not dirs:
                emit(m, open_at.pop(m), e.time - 1)
                del live[m]
    for m, dirs in live.items():
        if dirs:
            emit(m, open_at[m], center.end)
    return {m: sorted(v) for m, v in done.items() if v}
