"""Index construction, batch append, and statistics.

Building walks the sorted log one timespan at a time.  Within a span the
running state is snapshotted at every checkpoint (every `l` events, plus
the span's last event); the checkpoint states become the leaves of an
arity-`k` intersection tree whose records, split per horizontal partition
and micro-partition, go to the store alongside the per-gap eventlists and
the per-node version chains.  Deleted nodes stay in leaf states as
tombstones until the span ends, so intersections stay well defined; the
carry-over state into the next span drops them.

A batch append builds new spans after the existing ones, seeded with the
materialized end state of the old index, and merges the version chains.
Answers over the combined range match a from-scratch build of the full
log; the record layout may differ.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, fields
from typing import Iterable, Iterator, Mapping, Sequence

from .codec import EventBlock, GraphMeta, TimespanMeta
from .deltas import Delta, Entry, Event, StaticNode, apply_event
from .errors import NotFound, OutOfOrderBatch, RefuseOverwrite
from .layout import checkpoint_times, gap_did, tree_shape
from .logfmt import check_sorted
from .partition import (
    DEFAULT_COLLAPSE,
    DEFAULT_NODE_WEIGHTS,
    PartitionMap,
    SpanHistory,
    collapse,
    repartition_for_span,
)
from .storage import AUX_DID_BIT, DeltaKey, GraphStore, delta_prefix, sid_of
from .storage import TABLE_DELTAS


@dataclass(frozen=True)
class IndexConfig:
    ts_events: int = 1000
    ns: int = 1
    l: int = 32
    psize: int = 64
    k: int = 2
    partitioning: str = "locality"
    replicate_1hop: bool = True
    collapse: str = DEFAULT_COLLAPSE
    node_weights: str = DEFAULT_NODE_WEIGHTS
    seed: int = 0

    def validate(self) -> None:
        for name in ("ts_events", "ns", "l", "psize", "k"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.partitioning not in ("random", "locality"):
            raise ValueError(f"unknown partitioning {self.partitioning!r}")

    @property
    def replication_active(self) -> bool:
        # auxiliary replicas need the stored locality map
        return self.replicate_1hop and self.partitioning == "locality"


_BOOL = {"true": True, "1": True, "false": False, "0": False}


def parse_config(text: str) -> IndexConfig:
    """key=value lines; # starts a comment; unknown keys are errors."""
    known = {f.name for f in fields(IndexConfig)}
    got: dict[str, object] = {}
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {i}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in known:
            raise ValueError(f"config line {i}: unknown key {key!r}")
        if key in got:
            raise ValueError(f"config line {i}: duplicate key {key!r}")
        if key == "replicate_1hop":
            if val.lower() not in _BOOL:
                raise ValueError(f"config line {i}: bad bool {val!r}")
            got[key] = _BOOL[val.lower()]
        elif key in ("partitioning", "collapse", "node_weights"):
            got[key] = val
        else:
            try:
                got[key] = int(val)
            except ValueError:
                raise ValueError(f"config line {i}: bad integer {val!r}") from None
    cfg = IndexConfig(**got)  # type: ignore[arg-type]
    cfg.validate()
    return cfg


def format_config(cfg: IndexConfig) -> str:
    lines = []
    for f in fields(IndexConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{f.name}={v}")
    return "\n".join(lines) + "\n"


@dataclass
class BuildStats:
    spans: int = 0
    events: int = 0
    records: int = 0
    aux_records: int = 0
    chain_nodes: int = 0


def _segment(events: Sequence[Event], ts_events: int) -> Iterator[Sequence[Event]]:
    """Chunks of ts_events events, extended so equal times never split."""
    i = 0
    n = len(events)
    while i < n:
        j = min(i + ts_events, n)
        while j < n and events[j].time == events[j - 1].time:
            j += 1
        yield events[i:j]
        i = j


ChainAcc = dict[int, dict[int, list[tuple[int, DeltaKey]]]]


class _SpanWriter:
    """Builds and stores one timespan's records."""

    def __init__(
        self,
        store: GraphStore,
        cfg: IndexConfig,
        tsid: int,
        hist: SpanHistory,
        seq0: int,
        gap_lo: int | None,
        chains: ChainAcc,
        prev_pm: PartitionMap | None,
    ):
        self.store = store
        self.cfg = cfg
        self.tsid = tsid
        self.hist = hist
        self.seq0 = seq0
        self.gap_lo = gap_lo
        self.chains = chains
        self.records = 0
        self.aux_records = 0

        self.pm = repartition_for_span(
            prev_pm,
            hist,
            cfg.psize,
            cfg.partitioning,
            cfg.collapse,
            cfg.node_weights,
            tsid=tsid,
        )
        times = [e.time for e in hist.events]
        self.checkpts = checkpoint_times(times, cfg.l)
        self.shape = tree_shape(len(self.checkpts), cfg.k)
        self.aux_scope: dict[tuple[int, int], frozenset[int]] = {}

    # -- helpers ---------------------------------------------------------

    def _group_of(self, nid: int) -> tuple[int, int]:
        return sid_of(nid, self.cfg.ns), self.pm.assign[nid]

    def _chain_ref(self, nid: int, time: int, key: DeltaKey) -> None:
        self.chains[nid].setdefault(self.tsid, []).append((time, key))

    # -- stages ----------------------------------------------------------

    def _walk(self) -> tuple[list[dict[int, Entry]], list[list[tuple[int, Event]]]]:
        r = len(self.checkpts)
        leaves: list[dict[int, Entry]] = []
        gaps: list[list[tuple[int, Event]]] = [[] for _ in range(r)]
        state: dict[int, Entry] = dict(self.hist.start_state)
        gi = 0
        for off, e in enumerate(self.hist.events):
            while e.time > self.checkpts[gi]:
                leaves.append(dict(state))
                gi += 1
            state.update(apply_event(state.get, e))
            gaps[gi].append((self.seq0 + off, e))
        while len(leaves) < r:
            leaves.append(dict(state))
        self.end_state = state
        return leaves, gaps

    def _tree(self, leaves: list[dict[int, Entry]]) -> dict[int, tuple[int, Delta]]:
        """Stored tree records: did -> (earliest covered checkpoint, value)."""
        shape = self.shape
        levels: list[list[Delta]] = [[Delta(d, kind="snapshot") for d in leaves]]
        for lv in range(1, len(shape.level_sizes)):
            row = []
            for pos in range(shape.level_sizes[lv]):
                kids = [levels[lv - 1][p] for _, p in shape.children_of(lv, pos)]
                node = kids[0]
                for kid in kids[1:]:
                    node = node & kid
                row.append(node)
            levels.append(row)
        top = len(shape.level_sizes) - 1
        out: dict[int, tuple[int, Delta]] = {}
        for lv in range(top, -1, -1):
            for pos in range(shape.level_sizes[lv]):
                did = shape.did_of(lv, pos)
                first_leaf = pos * (shape.arity**lv)
                t_ref = self.checkpts[first_leaf]
                if lv == top:
                    value = levels[lv][pos]
                else:
                    parent = shape.parent_of(lv, pos)
                    assert parent is not None
                    value = levels[lv][pos] - levels[parent[0]][parent[1]]
                out[did] = (t_ref, value)
        return out

    def _compute_aux_scopes(self) -> None:
        if not self.cfg.replication_active or self.pm.method != "locality":
            return
        adj = collapse(self.hist, "union_max", "unit").adjacency
        members: dict[tuple[int, int], set[int]] = defaultdict(set)
        for nid in self.pm.assign:
            members[self._group_of(nid)].add(nid)
        for group, nids in sorted(members.items()):
            scope: set[int] = set()
            for n in nids:
                scope.update(adj.get(n, {}))
            scope -= nids
            if scope:
                self.aux_scope[group] = frozenset(scope)

    def _write_tree(self, stored: dict[int, tuple[int, Delta]]) -> None:
        for did in sorted(stored):
            t_ref, value = stored[did]
            parts: dict[tuple[int, int], dict[int, Entry]] = defaultdict(dict)
            for nid, entry in value.entries.items():
                parts[self._group_of(nid)][nid] = entry
            for (s, p) in sorted(parts):
                key = DeltaKey(self.tsid, s, did, p)
                self.store.put_delta(key, Delta(parts[(s, p)], kind=value.kind))
                self.records += 1
                for nid in parts[(s, p)]:
                    self._chain_ref(nid, t_ref, key)
            for (s, p), scope in sorted(self.aux_scope.items()):
                sub = {n: value.entries[n] for n in scope if n in value.entries}
                if sub:
                    key = DeltaKey(self.tsid, s, did | AUX_DID_BIT, p)
                    self.store.put_delta(key, Delta(sub, kind="aux"))
                    self.aux_records += 1

    def _write_gaps(self, gaps: list[list[tuple[int, Event]]]) -> None:
        for j0, items in enumerate(gaps):
            if not items:
                continue
            did = gap_did(j0 + 1)
            lo = self.checkpts[j0 - 1] if j0 >= 1 else self.gap_lo
            hi = self.checkpts[j0]
            span = (lo, hi)
            by_group: dict[tuple[int, int], list[tuple[int, Event]]] = defaultdict(list)
            for seq, e in items:
                seen = set()
                for nid in e.endpoints():
                    g = self._group_of(nid)
                    if g not in seen:
                        by_group[g].append((seq, e))
                        seen.add(g)
            for (s, p) in sorted(by_group):
                evs = by_group[(s, p)]
                key = DeltaKey(self.tsid, s, did, p)
                self.store.put_delta(key, EventBlock(span=span, items=tuple(evs)))
                self.records += 1
                # chain ref: first event in this block touching the node
                first: dict[int, int] = {}
                for _seq, e in evs:
                    for nid in e.endpoints():
                        if self._group_of(nid) == (s, p) and nid not in first:
                            first[nid] = e.time
                for nid, t in first.items():
                    self._chain_ref(nid, t, key)
            for (s, p), scope in sorted(self.aux_scope.items()):
                evs = tuple(
                    (seq, e)
                    for seq, e in items
                    if any(nid in scope for nid in e.endpoints())
                )
                if evs:
                    key = DeltaKey(self.tsid, s, did | AUX_DID_BIT, p)
                    self.store.put_delta(
                        key, EventBlock(span=span, items=evs, scope=scope)
                    )
                    self.aux_records += 1

    def run(self) -> None:
        for nid in sorted(self.pm.assign):
            self.store.put_pid(nid, self.tsid, self.pm.assign[nid])
        leaves, gaps = self._walk()
        self._compute_aux_scopes()
        self._write_tree(self._tree(leaves))
        self._write_gaps(gaps)
        lo, hi = self.hist.span
        self.store.put_timespan(
            TimespanMeta(
                tsid=self.tsid,
                start=lo,
                end=hi,
                checkpts=tuple(self.checkpts),
                k=self.cfg.k,
                df=self.cfg.l,
                npids=self.pm.k,
                partitioning=self.pm.method,
                replicate_1hop=self.cfg.replication_active,
                ns=self.cfg.ns,
            )
        )


def _append_spans(
    store: GraphStore,
    events: Sequence[Event],
    cfg: IndexConfig,
    tsid0: int,
    seq0: int,
    state0: Mapping[int, StaticNode],
    gap_lo0: int | None,
) -> BuildStats:
    stats = BuildStats(events=len(events))
    chains: ChainAcc = defaultdict(dict)
    state: dict[int, StaticNode] = dict(state0)
    prev_pm: PartitionMap | None = None
    gap_lo = gap_lo0
    span_start: int | None = None
    seq = seq0
    for i, chunk in enumerate(_segment(events, cfg.ts_events)):
        if span_start is None:
            span_start = chunk[0].time if gap_lo0 is None else gap_lo0 + 1
        hist = SpanHistory(state, tuple(chunk), (span_start, chunk[-1].time + 1))
        writer = _SpanWriter(
            store, cfg, tsid0 + i, hist, seq, gap_lo, chains, prev_pm
        )
        writer.run()
        stats.spans += 1
        stats.records += writer.records
        stats.aux_records += writer.aux_records
        state = {
            nid: entry
            for nid, entry in writer.end_state.items()
            if isinstance(entry, StaticNode)
        }
        prev_pm = writer.pm
        gap_lo = writer.checkpts[-1]
        span_start = hist.span[1]
        seq += len(chunk)
    for nid in sorted(chains):
        merged = store.get_chain(nid)
        for tsid, refs in chains[nid].items():
            merged[tsid] = sorted(refs)
        store.put_chain(nid, merged)
    stats.chain_nodes = len(chains)
    return stats


def build_index(
    store: GraphStore, log: Iterable[Event], cfg: IndexConfig, force: bool = False
) -> BuildStats:
    """Build a fresh index from a sorted event log.

    Refuses to write over an existing index unless force is set; force
    assumes the caller has already cleared the store.
    """
    cfg.validate()
    if not force:
        try:
            store.get_graph_meta()
        except NotFound:
            pass
        else:
            raise RefuseOverwrite("store already holds an index")
    events = list(log)
    check_sorted(events)
    store.put_config_text(format_config(cfg))
    stats = _append_spans(store, events, cfg, 0, 0, {}, None)
    start = events[0].time if events else 0
    end = events[-1].time + 1 if events else 0
    store.put_graph_meta(
        GraphMeta(start=start, end=end, events=len(events), tscount=stats.spans)
    )
    store.flush()
    return stats


def update_index(store: GraphStore, batch: Iterable[Event]) -> BuildStats:
    """Append a batch of later events to a built index.

    Creates new spans after the existing ones and merges version chains;
    existing records are never rewritten, so queries over the old range are
    unaffected, and queries anywhere match a from-scratch build of the
    concatenated log.
    """
    meta = store.get_graph_meta()
    cfg = parse_config(store.get_config_text())
    events = list(batch)
    check_sorted(events)
    if not events:
        return BuildStats()
    if meta.events and events[0].time < meta.end:
        raise OutOfOrderBatch(
            f"batch starts at {events[0].time}, index already ends at {meta.end}"
        )
    if meta.events:
        from .query import IndexReader  # deferred: query depends on this module's sibling layer

        state0 = IndexReader(store).snapshot_state(meta.end - 1)
        gap_lo0: int | None = meta.end - 1
    else:
        state0 = {}
        gap_lo0 = None
    stats = _append_spans(store, events, cfg, meta.tscount, meta.events, state0, gap_lo0)
    store.put_graph_meta(
        GraphMeta(
            start=meta.start if meta.events else events[0].time,
            end=events[-1].time + 1,
            events=meta.events + len(events),
            tscount=meta.tscount + stats.spans,
            gtype=meta.gtype,
        )
    )
    store.flush()
    return stats


@dataclass
class SpanStats:
    tsid: int
    start: int
    end: int
    checkpoints: tuple[int, ...]
    npids: int
    partitioning: str
    tree_height: int
    records: int
    aux_records: int
    data_bytes: int


@dataclass
class IndexStats:
    start: int = 0
    end: int = 0
    events: int = 0
    tscount: int = 0
    nodes: int = 0
    records: int = 0
    aux_records: int = 0
    data_bytes: int = 0
    spans: tuple[SpanStats, ...] = ()


def describe(store: GraphStore) -> IndexStats:
    """Index statistics; zeroed for an empty or absent index."""
    try:
        meta = store.get_graph_meta()
    except NotFound:
        return IndexStats()
    spans = []
    for ts in sorted(store.list_timespans(), key=lambda m: m.tsid):
        records = aux = size = 0
        for raw_key, raw_val in store.backend.scan(TABLE_DELTAS, delta_prefix(ts.tsid)):
            key = DeltaKey.decode(raw_key)
            if key.is_aux:
                aux += 1
            else:
                records += 1
            size += len(raw_val)
        spans.append(
            SpanStats(
                tsid=ts.tsid,
                start=ts.start,
                end=ts.end,
                checkpoints=tuple(ts.checkpts),
                npids=ts.npids,
                partitioning=ts.partitioning,
                tree_height=tree_shape(len(ts.checkpts), ts.k).height,
                records=records,
                aux_records=aux,
                data_bytes=size,
            )
        )
    return IndexStats(
        start=meta.start,
        end=meta.end,
        events=meta.events,
        tscount=meta.tscount,
        nodes=len(store.all_node_ids()),
        records=sum(s.records for s in spans),
        aux_records=sum(s.aux_records for s in spans),
        data_bytes=sum(s.data_bytes for s in spans),
        spans=tuple(spans),
    )
