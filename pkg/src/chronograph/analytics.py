"""Temporal analytics operands and their operator algebra.

An operand carries a member's full evolution over a half-open span
[start, end): the state at `start` plus every event strictly inside the
span.  NodeT tracks one node, SubgraphT a k-hop neighborhood with the
member set frozen at the span start.  SoN and SoTS are collections of
those, fetched lazily: scope recorded before fetch() is pushed into the
retrieval plan (id scope, time scope, hop pruning) instead of filtering
a full download after the fact.

Operators: select, timeslice, to_graph, node_compute, the temporal and
incremental per-member computations, compare, evolution, temp_aggregate,
fetch.  Per-member work is independent; fetch partitions members across
a thread pool keyed by the storage shard that holds them, and every
aggregation reduces in sorted member order so worker count never changes
a result.
"""

from __future__ import annotations

import csv
import enum
import statistics
from collections import defaultdict
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import IO, Any, Union

from .deltas import (
    EDGE_KINDS,
    Entry,
    Event,
    NodeId,
    StaticNode,
    Time,
    apply_event,
    apply_events_scoped,
)
from .errors import EmptySeries, MemberComputeError, OutOfSpan, UnalignedOperands
from .graphs import GraphS
from .query import IndexReader
from .storage import shard_of_placement, sid_of

Scalar = Union[int, float]


# -- evaluation time specs ------------------------------------------------


@dataclass(frozen=True)
class AllChangePoints:
    """Evaluate at the span start plus every distinct event time."""


@dataclass(frozen=True)
class UniformSample:
    """Evaluate at n evenly spaced times across the span.

    Endpoints are included; duplicates collapse when the span holds fewer
    than n distinct times.
    """

    n: int


TimepointSpec = Union[AllChangePoints, UniformSample, Sequence[Time], Callable[..., Iterable[Time]]]


def _sample_span(start: Time, end: Time, n: int) -> list[Time]:
    if n < 1:
        raise ValueError("UniformSample needs n >= 1")
    last = end - 1
    if n == 1 or last <= start:
        return [start]
    raw = [start + round(i * (last - start) / (n - 1)) for i in range(n)]
    out = [raw[0]]
    for t in raw[1:]:
        if t != out[-1]:
            out.append(t)
    return out


def _check_in_span(times: Iterable[Time], start: Time, end: Time) -> list[Time]:
    out = sorted(set(times))
    for t in out:
        if not start <= t < end:
            raise OutOfSpan(f"t={t} outside [{start}, {end})")
    return out


def _resolve_times(tp: TimepointSpec, subject, start: Time, end: Time) -> list[Time]:
    """Turn a timepoint selector into a sorted list of valid times."""
    if isinstance(tp, AllChangePoints):
        return subject.change_times()
    if isinstance(tp, UniformSample):
        return _sample_span(start, end, tp.n)
    if callable(tp):
        return _check_in_span(tp(subject), start, end)
    return _check_in_span(tp, start, end)


# -- temporal members -----------------------------------------------------


@dataclass(frozen=True)
class NodeT:
    """One node's evolution over [start, end)."""

    id: NodeId
    start: Time
    end: Time
    initial: StaticNode | None
    events: tuple[Event, ...]

    def _require(self, t: Time) -> None:
        if not self.start <= t < self.end:
            raise OutOfSpan(f"t={t} outside [{self.start}, {self.end})")

    def change_times(self) -> list[Time]:
        """Span start plus each distinct event time."""
        out = [self.start]
        for e in self.events:
            if e.time != out[-1]:
                out.append(e.time)
        return out

    def version_intervals(self) -> list[tuple[Time, Time]]:
        """Half-open validity interval per version; together they tile the span."""
        cuts = self.change_times() + [self.end]
        return list(zip(cuts, cuts[1:]))

    def apply_one(self, state: StaticNode | None, e: Event) -> StaticNode | None:
        entries: dict[NodeId, Entry] = {} if state is None else {self.id: state}
        apply_events_scoped(entries, [e], lambda n: n == self.id)
        got = entries.get(self.id)
        return got if isinstance(got, StaticNode) else None

    def states_at(self, times: Sequence[Time]) -> list[StaticNode | None]:
        """States at ascending times, folded in one pass."""
        for t in times:
            self._require(t)
        out: list[StaticNode | None] = []
        state, ei = self.initial, 0
        for t in times:
            while ei < len(self.events) and self.events[ei].time <= t:
                state = self.apply_one(state, self.events[ei])
                ei += 1
            out.append(state)
        return out

    def at(self, t: Time) -> StaticNode | None:
        return self.states_at([t])[0]

    def crop(self, lo: Time, hi: Time) -> "NodeT":
        if not (self.start <= lo < hi <= self.end):
            raise OutOfSpan(f"[{lo}, {hi}) not inside [{self.start}, {self.end})")
        inside = tuple(e for e in self.events if lo < e.time < hi)
        return NodeT(self.id, lo, hi, self.at(lo), inside)

    def exists(self) -> bool:
        return self.initial is not None or bool(self.events)


@dataclass(frozen=True)
class SubgraphT:
    """A k-hop neighborhood's evolution with membership frozen at start.

    States are induced graphs over the members: only events whose every
    endpoint is a member are kept, so the state never shows a half edge.
    A state always exists (possibly the empty graph), even if the center
    dies inside the span.
    """

    center: NodeId
    k: int
    start: Time
    end: Time
    initial: GraphS
    events: tuple[Event, ...]
    members: frozenset[NodeId]

    @property
    def id(self) -> NodeId:
        return self.center

    def _require(self, t: Time) -> None:
        if not self.start <= t < self.end:
            raise OutOfSpan(f"t={t} outside [{self.start}, {self.end})")

    def change_times(self) -> list[Time]:
        out = [self.start]
        for e in self.events:
            if e.time != out[-1]:
                out.append(e.time)
        return out

    def version_intervals(self) -> list[tuple[Time, Time]]:
        cuts = self.change_times() + [self.end]
        return list(zip(cuts, cuts[1:]))

    def apply_one(self, state: GraphS, e: Event) -> GraphS:
        entries: dict[NodeId, Entry] = dict(state.nodes)
        entries.update(apply_event(entries.get, e))
        return GraphS.from_entries(entries)

    def states_at(self, times: Sequence[Time]) -> list[GraphS]:
        for t in times:
            self._require(t)
        out: list[GraphS] = []
        state, ei = self.initial, 0
        for t in times:
            while ei < len(self.events) and self.events[ei].time <= t:
                state = self.apply_one(state, self.events[ei])
                ei += 1
            out.append(state)
        return out

    def at(self, t: Time) -> GraphS:
        return self.states_at([t])[0]

    def crop(self, lo: Time, hi: Time) -> "SubgraphT":
        if not (self.start <= lo < hi <= self.end):
            raise OutOfSpan(f"[{lo}, {hi}) not inside [{self.start}, {self.end})")
        inside = tuple(e for e in self.events if lo < e.time < hi)
        return SubgraphT(self.center, self.k, lo, hi, self.at(lo), inside, self.members)

    def exists(self) -> bool:
        return True


Member = Union[NodeT, SubgraphT]


# -- scalar time series ---------------------------------------------------


@dataclass(frozen=True)
class TimeSeries:
    """Sorted (time, value) pairs with strictly increasing times."""

    points: tuple[tuple[Time, Scalar], ...] = ()

    def __post_init__(self):
        for (a, _), (b, _) in zip(self.points, self.points[1:]):
            if b <= a:
                raise ValueError(f"times not strictly increasing at {b}")

    def times(self) -> list[Time]:
        return [t for t, _ in self.points]

    def values(self) -> list[Scalar]:
        return [v for _, v in self.points]

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def __bool__(self) -> bool:
        return bool(self.points)


class Aggregation(enum.Enum):
    MAX = "max"
    MIN = "min"
    MEAN = "mean"
    PEAK = "peak"
    SATURATE = "saturate"


def temp_aggregate(
    series: TimeSeries, agg: Aggregation | str, *, eps: float = 0.01
):
    """Collapse a series to a scalar (or to (time, value) for PEAK).

    PEAK picks the local maximum with the globally largest value,
    earliest on ties.  SATURATE returns the earliest time after which
    every value stays within eps (relative to the final value, absolute
    when the final value is zero) of the final value.
    """
    if isinstance(agg, str):
        agg = Aggregation(agg.lower())
    pts = series.points
    if not pts:
        raise EmptySeries(f"cannot {agg.value} an empty series")
    values = [v for _, v in pts]
    if agg is Aggregation.MAX:
        return max(values)
    if agg is Aggregation.MIN:
        return min(values)
    if agg is Aggregation.MEAN:
        return statistics.fmean(values)
    if agg is Aggregation.PEAK:
        best = None
        for i, (t, v) in enumerate(pts):
            if i > 0 and values[i - 1] > v:
                continue
            if i < len(pts) - 1 and values[i + 1] > v:
                continue
            if best is None or v > best[1]:
                best = (t, v)
        return best
    final = values[-1]
    tol = eps * abs(final) if final else eps
    idx = 0
    for i in range(len(values) - 1, -1, -1):
        if abs(values[i] - final) > tol:
            idx = i + 1
            break
    return pts[idx][0]


# -- member construction --------------------------------------------------


def _node_member(reader: IndexReader, nid: NodeId, start: Time, end: Time) -> NodeT | None:
    h = reader.get_node_history(nid, start, end - 1)
    if h.initial is None and not h.events:
        return None
    return NodeT(nid, start, end, h.initial, h.events)


def _subgraph_events(members: frozenset[NodeId], window: list[Event]) -> tuple[Event, ...]:
    out = []
    for e in window:
        ends = e.endpoints()
        if e.kind in EDGE_KINDS:
            if all(n in members for n in ends):
                out.append(e)
        elif ends[0] in members:
            out.append(e)
    return tuple(out)


def _subgraph_member(
    reader: IndexReader, center: NodeId, k: int, start: Time, end: Time, window: list[Event]
) -> SubgraphT:
    ball = reader.get_k_hop(center, start, k)
    members = frozenset(ball.nodes)
    return SubgraphT(center, k, start, end, ball, _subgraph_events(members, window), members)


def _universe(reader: IndexReader, start: Time, end: Time) -> list[NodeId]:
    """Every id alive at start or touched by an event inside the span."""
    ids = set(reader.snapshot_state(start))
    for e in reader.scan_events(start, end - 1):
        ids.update(e.endpoints())
    return sorted(ids)


def _parallel_build(reader: IndexReader, ids: Sequence[NodeId], build_one, workers: int) -> list:
    """Map build_one over ids, one worker per storage shard group.

    Each worker pulls its own members straight from the shard that holds
    them; results are slotted by position so output order is fixed.
    """
    if workers <= 1 or len(ids) <= 1:
        return [build_one(n) for n in ids]
    spans = sorted(reader.store.list_timespans(), key=lambda m: m.tsid)
    if not spans:
        return [build_one(n) for n in ids]
    sp = spans[0]
    shards = reader.store.backend.shards
    groups: dict[int, list[int]] = defaultdict(list)
    for pos, nid in enumerate(ids):
        groups[shard_of_placement(sp.tsid, sid_of(nid, sp.ns), shards)].append(pos)

    def run_group(positions: list[int]) -> list:
        return [(p, build_one(ids[p])) for p in positions]

    results: list = [None] * len(ids)
    with ThreadPoolExecutor(max_workers=min(workers, len(groups))) as pool:
        for chunk in pool.map(run_group, groups.values()):
            for p, built in chunk:
                results[p] = built
    return results


# -- per-member computations ----------------------------------------------


def _guarded(f, member_id: NodeId):
    def call(*args):
        try:
            return f(*args)
        except Exception as exc:
            raise MemberComputeError(member_id, exc) from exc

    return call


def _full_series(member: Member, f, times: Sequence[Time]) -> TimeSeries:
    call = _guarded(f, member.id)
    pts = []
    for t, state in zip(times, member.states_at(times)):
        if state is not None:
            pts.append((t, call(state)))
    return TimeSeries(tuple(pts))


def _incremental_series(
    member: Member, f, f_delta, times: Sequence[Time], check_every: int
) -> TimeSeries:
    """Seed with f once, then advance the value through f_delta per event.

    f_delta(state_before, aux, value, event) -> (value, aux) must agree
    with recomputing f from scratch; check_every > 0 verifies that every
    n-th event.  A member reborn after a gap of nonexistence is reseeded
    with f (only NodeT members can die).
    """
    call_f = _guarded(f, member.id)
    call_fd = _guarded(f_delta, member.id)
    state = member.initial
    value: Any = call_f(state) if state is not None else None
    aux: Any = None
    pts = []
    ei, applied = 0, 0
    events = member.events
    for t in times:
        while ei < len(events) and events[ei].time <= t:
            e = events[ei]
            ei += 1
            before = state
            state = member.apply_one(state, e)
            if before is None:
                if state is not None:
                    value, aux = call_f(state), None
            elif state is None:
                value, aux = None, None
            else:
                value, aux = call_fd(before, aux, value, e)
            applied += 1
            if check_every and applied % check_every == 0 and state is not None:
                expect = call_f(state)
                if expect != value:
                    raise MemberComputeError(
                        member.id,
                        ValueError(f"f_delta drifted at {e}: {value!r} != {expect!r}"),
                    )
        if state is not None:
            pts.append((t, value))
    return TimeSeries(tuple(pts))


def _as_scalar(v, member_id: NodeId) -> Scalar:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise MemberComputeError(
            member_id, TypeError(f"compare needs a numeric value, got {type(v).__name__}")
        )
    return v


# -- operand collections --------------------------------------------------


@dataclass(frozen=True)
class _TemporalSet:
    """Shared machinery of SoN and SoTS; members sorted by id, unique."""

    reader: IndexReader | None
    start: Time
    end: Time
    id_scope: tuple[NodeId, ...] | None = None
    preds: tuple[Callable[[Member], bool], ...] = ()
    members: tuple[Member, ...] | None = None
    workers: int = 1

    def __post_init__(self):
        if self.end <= self.start:
            raise ValueError(f"empty span [{self.start}, {self.end})")

    @property
    def fetched(self) -> bool:
        return self.members is not None

    def _ensure(self):
        return self if self.fetched else self.fetch()

    def __len__(self) -> int:
        return len(self._ensure().members)

    def __iter__(self):
        return iter(self._ensure().members)

    def __contains__(self, nid: NodeId) -> bool:
        return nid in self._ensure().member_map()

    def __getitem__(self, nid: NodeId) -> Member:
        return self._ensure().member_map()[nid]

    def member_map(self) -> dict[NodeId, Member]:
        return {m.id: m for m in self._ensure().members}

    def ids(self) -> list[NodeId]:
        return [m.id for m in self._ensure().members]

    def select(self, pred: Callable[[Member], bool]):
        """Entity filter; recorded for pushdown until the set is fetched."""
        if not self.fetched:
            return replace(self, preds=self.preds + (pred,))
        kept = tuple(m for m in self.members if pred(m))
        return replace(self, members=kept)

    def _accept(self, member: Member | None) -> bool:
        return member is not None and all(p(member) for p in self.preds)

    # fetch() on the subclasses fills members via _materialize

    def fetch(self, workers: int | None = None):
        if self.fetched:
            return self
        if self.reader is None:
            raise ValueError("no reader attached and no members fetched")
        c = self.workers if workers is None else max(1, workers)
        built = self._materialize(c)
        return replace(self, preds=(), members=tuple(built), workers=c)

    def timeslice(self, t):
        """State(s) as of t: a time, an half-open (lo, hi) pair, or a list."""
        if isinstance(t, list):
            return [self.timeslice(x) for x in t]
        s = self._ensure()
        if isinstance(t, tuple):
            lo, hi = t
        else:
            lo, hi = t, t + 1
        if not (s.start <= lo < hi <= s.end):
            raise OutOfSpan(f"[{lo}, {hi}) not inside [{s.start}, {s.end})")
        kept = tuple(
            c for m in s.members for c in [m.crop(lo, hi)] if c.exists()
        )
        return replace(s, start=lo, end=hi, members=kept)

    def node_compute(self, f, at: Time | None = None) -> dict[NodeId, Any]:
        """f per member state at one time; members without a state are skipped."""
        s = self._ensure()
        t = s.start if at is None else at
        out = {}
        for m in s.members:
            state = m.at(t)
            if state is not None:
                out[m.id] = _guarded(f, m.id)(state)
        return out

    def node_compute_temporal(
        self, f, tp: TimepointSpec = AllChangePoints(), f_delta=None, check_every: int = 0
    ) -> dict[NodeId, TimeSeries]:
        """A per-member series of f over the evaluation times.

        With an f_delta hint the work is delegated to node_compute_delta.
        """
        if f_delta is not None:
            return self.node_compute_delta(f, f_delta, tp, check_every=check_every)
        s = self._ensure()
        return {
            m.id: _full_series(m, f, _resolve_times(tp, m, s.start, s.end))
            for m in s.members
        }

    def node_compute_delta(
        self, f, f_delta, tp: TimepointSpec = AllChangePoints(), check_every: int = 0
    ) -> dict[NodeId, TimeSeries]:
        """Same output as node_compute_temporal, computed incrementally:
        f runs once per member, f_delta once per event."""
        s = self._ensure()
        return {
            m.id: _incremental_series(m, f, f_delta, _resolve_times(tp, m, s.start, s.end), check_every)
            for m in s.members
        }

    def evolution(self, f, tp: TimepointSpec = AllChangePoints()) -> TimeSeries:
        """Sample f of the whole operand over time."""
        s = self._ensure()
        if isinstance(tp, AllChangePoints):
            cuts = sorted({t for m in s.members for t in m.change_times()})
        else:
            cuts = _resolve_times(tp, s, s.start, s.end)
        return TimeSeries(tuple((t, f(s._whole_at(t))) for t in cuts))


@dataclass(frozen=True)
class SoN(_TemporalSet):
    """A set of temporal nodes over a shared span."""

    @classmethod
    def over(
        cls,
        reader: IndexReader,
        start: Time | None = None,
        end: Time | None = None,
        ids: Iterable[NodeId] | None = None,
        workers: int = 1,
    ) -> "SoN":
        """Lazy whole-graph set; narrow with ids/select before fetching."""
        spans = sorted(reader.store.list_timespans(), key=lambda m: m.tsid)
        if start is None:
            start = spans[0].start if spans else 0
        if end is None:
            end = spans[-1].end + 1 if spans else start + 1
        scope = None if ids is None else tuple(sorted(set(ids)))
        return cls(reader, start, end, id_scope=scope, workers=workers)

    def _materialize(self, workers: int) -> list[NodeT]:
        ids = list(self.id_scope) if self.id_scope is not None else _universe(
            self.reader, self.start, self.end
        )
        built = _parallel_build(
            self.reader, ids, lambda n: _node_member(self.reader, n, self.start, self.end), workers
        )
        return [m for m in built if self._accept(m)]

    def to_graph(self, t: Time | None = None) -> GraphS:
        """In-memory graph of the members at t, edges to non-members dropped."""
        s = self._ensure()
        at = s.start if t is None else t
        states = {}
        for m in s.members:
            state = m.at(at)
            if state is not None:
                states[m.id] = state
        return GraphS(states).induced(states.keys())

    def _whole_at(self, t: Time) -> GraphS:
        return self.to_graph(t)


@dataclass(frozen=True)
class SoTS(_TemporalSet):
    """A set of temporal k-hop subgraphs over a shared span."""

    k: int = 1

    @classmethod
    def over(
        cls,
        reader: IndexReader,
        k: int,
        start: Time | None = None,
        end: Time | None = None,
        centers: Iterable[NodeId] | None = None,
        workers: int = 1,
    ) -> "SoTS":
        spans = sorted(reader.store.list_timespans(), key=lambda m: m.tsid)
        if start is None:
            start = spans[0].start if spans else 0
        if end is None:
            end = spans[-1].end + 1 if spans else start + 1
        scope = None if centers is None else tuple(sorted(set(centers)))
        return cls(reader, start, end, id_scope=scope, workers=workers, k=k)

    def _materialize(self, workers: int) -> list[SubgraphT]:
        centers = list(self.id_scope) if self.id_scope is not None else _universe(
            self.reader, self.start, self.end
        )
        window = self.reader.scan_events(self.start, self.end - 1)
        built = _parallel_build(
            self.reader,
            centers,
            lambda n: _subgraph_member(self.reader, n, self.k, self.start, self.end, window),
            workers,
        )
        return [m for m in built if self._accept(m)]

    def _whole_at(self, t: Time) -> dict[NodeId, GraphS]:
        s = self._ensure()
        return {m.id: m.at(t) for m in s.members}


# -- operator spellings ---------------------------------------------------


def select(s, pred):
    return s.select(pred)


def timeslice(s, t):
    return s.timeslice(t)


def to_graph(s: SoN, t: Time | None = None) -> GraphS:
    return s.to_graph(t)


def node_compute(s, f, at: Time | None = None) -> dict[NodeId, Any]:
    return s.node_compute(f, at)


def node_compute_temporal(s, f, tp: TimepointSpec = AllChangePoints(), f_delta=None):
    return s.node_compute_temporal(f, tp, f_delta)


def node_compute_delta(s, f, f_delta, tp: TimepointSpec = AllChangePoints(), check_every: int = 0):
    return s.node_compute_delta(f, f_delta, tp, check_every=check_every)


def evolution(s, f, tp: TimepointSpec = AllChangePoints()) -> TimeSeries:
    return s.evolution(f, tp)


def fetch(s, workers: int | None = None):
    return s.fetch(workers)


def compare(a, b, f, at: Time | None = None) -> dict[NodeId, Scalar]:
    """Per-id difference f(a member) - f(b member), states taken at `at`
    (default: each operand's own span start).

    Member universes must match; ids without a state on either side are
    skipped.  f must produce numbers.
    """
    sa, sb = a._ensure(), b._ensure()
    if sa.ids() != sb.ids():
        raise UnalignedOperands(f"member ids differ: {sa.ids()[:5]}... vs {sb.ids()[:5]}...")
    ta = sa.start if at is None else at
    tb = sb.start if at is None else at
    mb = sb.member_map()
    out = {}
    for m in sa.members:
        va, vb = m.at(ta), mb[m.id].at(tb)
        if va is None or vb is None:
            continue
        fa = _as_scalar(_guarded(f, m.id)(va), m.id)
        fb = _as_scalar(_guarded(f, m.id)(vb), m.id)
        out[m.id] = fa - fb
    return out


def compare_times(s, f, t1: Time, t2: Time) -> dict[NodeId, Scalar]:
    """One-operand form: the change of f from t1 to t2 per member."""
    return compare(s.timeslice(t2), s.timeslice(t1), f)


# -- export ---------------------------------------------------------------


def series_to_csv(series_by_id: dict[NodeId, TimeSeries], out: IO[str]) -> None:
    """Rows (id, time, value), sorted by id then time."""
    w = csv.writer(out)
    w.writerow(["id", "time", "value"])
    for nid in sorted(series_by_id):
        for t, v in series_by_id[nid]:
            w.writerow([nid, t, v])


def points_to_csv(values_by_id: dict[NodeId, Any], out: IO[str]) -> None:
    """Rows (id, value), sorted by id."""
    w = csv.writer(out)
    w.writerow(["id", "value"])
    for nid in sorted(values_by_id):
        w.writerow([nid, values_by_id[nid]])
