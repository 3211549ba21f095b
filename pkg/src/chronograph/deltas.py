"""Node-centric delta algebra for evolving graphs.

A graph's history is a log of timestamped events.  State is represented
node-centrically: each node record carries its attributes plus all incident
edges, and every edge is mirrored at both endpoints.  A delta is a keyed map
from node id to either a static node description or a tombstone, and deltas
are closed under sum, difference, intersection and union.  Applying a prefix
of the event log to the empty delta yields the snapshot at a time.

Time is a logical non-negative integer.  All intervals are half open from
below: the window (t1, t2] contains an event e iff t1 < e.time <= t2, so the
snapshot "at t" includes every event with time <= t.

Values here are immutable after construction.  Node attribute maps and edge
sets are canonicalized to sorted tuples so equality, hashing and serialized
bytes are all structural and deterministic.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Mapping

from .errors import InvalidEvent

NodeId = int
Time = int

OUT = "out"
IN = "in"

Attrs = tuple[tuple[str, str], ...]


def flip_direction(direction: str) -> str:
    return IN if direction == OUT else OUT


def freeze_attrs(attrs: Mapping[str, str] | Iterable[tuple[str, str]] | None) -> Attrs:
    """Canonicalize an attribute mapping to a sorted tuple of pairs."""
    if not attrs:
        return ()
    if isinstance(attrs, Mapping):
        items = attrs.items()
    else:
        items = dict(attrs).items()
    return tuple(sorted(items))


def _attrs_set(attrs: Attrs, key: str, value: str) -> Attrs:
    kept = tuple(p for p in attrs if p[0] != key)
    return tuple(sorted(kept + ((key, value),)))


def _attrs_del(attrs: Attrs, key: str) -> Attrs:
    return tuple(p for p in attrs if p[0] != key)


@dataclass(frozen=True, slots=True)
class EdgeRecord:
    """One directed edge as seen from its owning node.

    direction is "out" when the owner is the source and "in" when it is the
    destination.  The mirrored copy at the other endpoint has the flipped
    direction and identical attributes.
    """

    neighbor: NodeId
    direction: str
    attrs: Attrs = ()

    def attr_map(self) -> dict[str, str]:
        return dict(self.attrs)


@dataclass(frozen=True, slots=True)
class StaticNode:
    """Full description of one node at one instant: attributes plus edges.

    Edge tuples are kept sorted by (neighbor, direction); at most one edge
    per (neighbor, direction) pair, so there are no multi-edges.
    """

    id: NodeId
    edges: tuple[EdgeRecord, ...] = ()
    attrs: Attrs = ()

    @staticmethod
    def make(
        node_id: NodeId,
        edges: Iterable[EdgeRecord] = (),
        attrs: Mapping[str, str] | Iterable[tuple[str, str]] | None = None,
    ) -> "StaticNode":
        ordered = tuple(sorted(edges, key=lambda e: (e.neighbor, e.direction)))
        seen = {(e.neighbor, e.direction) for e in ordered}
        if len(seen) != len(ordered):
            raise ValueError(f"duplicate edge on node {node_id}")
        return StaticNode(node_id, ordered, freeze_attrs(attrs))

    # -- attribute helpers ------------------------------------------------

    def attr(self, key: str) -> str | None:
        for k, v in self.attrs:
            if k == key:
                return v
        return None

    def attr_map(self) -> dict[str, str]:
        return dict(self.attrs)

    def with_attr(self, key: str, value: str) -> "StaticNode":
        return StaticNode(self.id, self.edges, _attrs_set(self.attrs, key, value))

    def without_attr(self, key: str) -> "StaticNode":
        return StaticNode(self.id, self.edges, _attrs_del(self.attrs, key))

    # -- edge helpers -----------------------------------------------------

    def edge(self, neighbor: NodeId, direction: str) -> EdgeRecord | None:
        for e in self.edges:
            if e.neighbor == neighbor and e.direction == direction:
                return e
        return None

    def has_edge(self, neighbor: NodeId, direction: str) -> bool:
        return self.edge(neighbor, direction) is not None

    def with_edge(self, neighbor: NodeId, direction: str, attrs: Attrs = ()) -> "StaticNode":
        if self.has_edge(neighbor, direction):
            raise ValueError(f"edge ({self.id} {direction} {neighbor}) already present")
        edges = self.edges + (EdgeRecord(neighbor, direction, attrs),)
        return StaticNode(self.id, tuple(sorted(edges, key=lambda e: (e.neighbor, e.direction))), self.attrs)

    def without_edge(self, neighbor: NodeId, direction: str) -> "StaticNode":
        edges = tuple(e for e in self.edges if not (e.neighbor == neighbor and e.direction == direction))
        return StaticNode(self.id, edges, self.attrs)

    def replace_edge(self, record: EdgeRecord) -> "StaticNode":
        edges = tuple(
            record if (e.neighbor == record.neighbor and e.direction == record.direction) else e
            for e in self.edges
        )
        return StaticNode(self.id, edges, self.attrs)

    def neighbor_ids(self) -> set[NodeId]:
        return {e.neighbor for e in self.edges}

    def degree(self) -> int:
        return len(self.edges)


class Tombstone:
    """Marker recording that a node was deleted.  A single shared instance."""

    _instance: "Tombstone | None" = None

    def __new__(cls) -> "Tombstone":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "TOMBSTONE"


TOMBSTONE = Tombstone()

Entry = StaticNode | Tombstone


def is_tombstone(entry: Entry | None) -> bool:
    return entry is TOMBSTONE


class Delta:
    """Keyed change set: at most one entry (node state or tombstone) per id.

    cardinality is the number of unique entries; size is the total number of
    node descriptions accumulated into the delta, so summing two deltas adds
    their sizes even when entries collide.  Equality compares entries only.
    """

    __slots__ = ("entries", "kind", "size")

    def __init__(
        self,
        entries: Mapping[NodeId, Entry] | None = None,
        kind: str | None = None,
        size: int | None = None,
    ):
        self.entries: dict[NodeId, Entry] = dict(entries) if entries else {}
        self.kind = kind
        self.size = len(self.entries) if size is None else size

    @staticmethod
    def empty(kind: str | None = None) -> "Delta":
        return Delta({}, kind=kind)

    @property
    def cardinality(self) -> int:
        return len(self.entries)

    def get(self, node_id: NodeId) -> Entry | None:
        return self.entries.get(node_id)

    def __contains__(self, node_id: NodeId) -> bool:
        return node_id in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def __bool__(self) -> bool:
        return bool(self.entries)

    def items(self) -> list[tuple[NodeId, Entry]]:
        return sorted(self.entries.items())

    def ids(self) -> set[NodeId]:
        return set(self.entries)

    def materialize(self) -> dict[NodeId, StaticNode]:
        """Live nodes only; tombstones are dropped at materialization."""
        return {nid: e for nid, e in self.entries.items() if not is_tombstone(e)}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Delta):
            return NotImplemented
        return self.entries == other.entries

    def __repr__(self) -> str:
        return f"Delta({len(self.entries)} entries, kind={self.kind!r})"

    def __add__(self, other: "Delta") -> "Delta":
        return delta_sum(self, other)

    def __sub__(self, other: "Delta") -> "Delta":
        return delta_diff(self, other)

    def __and__(self, other: "Delta") -> "Delta":
        return delta_intersect(self, other)

    def __or__(self, other: "Delta") -> "Delta":
        return delta_union(self, other)


# -- delta operations -----------------------------------------------------


def delta_sum(a: Delta, b: Delta) -> Delta:
    """Apply b after a: on an id collision the right operand wins.

    Associative, not commutative.  The result's size accumulates both
    operands' sizes.
    """
    entries = dict(a.entries)
    entries.update(b.entries)
    return Delta(entries, kind="derived", size=a.size + b.size)


def delta_diff(a: Delta, b: Delta) -> Delta:
    """Entries of a whose (id, state) pair is absent from b."""
    entries = {nid: e for nid, e in a.entries.items() if b.entries.get(nid) != e}
    return Delta(entries, kind="derived")


def delta_intersect(a: Delta, b: Delta) -> Delta:
    """Entries with identical (id, state) in both operands."""
    entries = {nid: e for nid, e in a.entries.items() if b.entries.get(nid) == e}
    return Delta(entries, kind="derived")


def delta_union(a: Delta, b: Delta) -> Delta:
    """All entries of both; an id conflict resolves to the right operand."""
    entries = dict(a.entries)
    entries.update(b.entries)
    return Delta(entries, kind="derived")


# -- events ---------------------------------------------------------------


class EventKind(enum.Enum):
    ADD_NODE = "ADD_NODE"
    DELETE_NODE = "DELETE_NODE"
    ADD_EDGE = "ADD_EDGE"
    DELETE_EDGE = "DELETE_EDGE"
    SET_NODE_ATTR = "SET_NODE_ATTR"
    DEL_NODE_ATTR = "DEL_NODE_ATTR"
    SET_EDGE_ATTR = "SET_EDGE_ATTR"
    DEL_EDGE_ATTR = "DEL_EDGE_ATTR"


EDGE_KINDS = frozenset(
    {EventKind.ADD_EDGE, EventKind.DELETE_EDGE, EventKind.SET_EDGE_ATTR, EventKind.DEL_EDGE_ATTR}
)
KEYED_KINDS = frozenset(
    {EventKind.SET_NODE_ATTR, EventKind.DEL_NODE_ATTR, EventKind.SET_EDGE_ATTR, EventKind.DEL_EDGE_ATTR}
)
VALUED_KINDS = frozenset({EventKind.SET_NODE_ATTR, EventKind.SET_EDGE_ATTR})


@dataclass(frozen=True, slots=True)
class Event:
    """One timestamped change.  Edge events name both endpoints; direction
    is read from the subject's side ("out" means subject -> peer)."""

    time: Time
    kind: EventKind
    subject: NodeId
    peer: NodeId | None = None
    direction: str | None = None
    key: str | None = None
    value: str | None = None

    def validate(self) -> None:
        if self.time < 0:
            raise ValueError(f"negative time in {self}")
        if self.kind in EDGE_KINDS:
            if self.peer is None or self.direction not in (OUT, IN):
                raise ValueError(f"edge event missing peer/direction: {self}")
            if self.peer == self.subject:
                raise ValueError(f"self loop not allowed: {self}")
        else:
            if self.peer is not None or self.direction is not None:
                raise ValueError(f"non-edge event carries peer/direction: {self}")
        if self.kind in KEYED_KINDS:
            if self.key is None:
                raise ValueError(f"attr event missing key: {self}")
        elif self.key is not None:
            raise ValueError(f"event carries unexpected key: {self}")
        if self.kind in VALUED_KINDS:
            if self.value is None:
                raise ValueError(f"set event missing value: {self}")
        elif self.value is not None:
            raise ValueError(f"event carries unexpected value: {self}")

    def endpoints(self) -> tuple[NodeId, ...]:
        """Node ids whose state this event touches."""
        if self.kind in EDGE_KINDS:
            return (self.subject, self.peer)  # type: ignore[return-value]
        return (self.subject,)


def event_touches(e: Event, ids: Iterable[NodeId]) -> bool:
    idset = ids if isinstance(ids, (set, frozenset)) else set(ids)
    return any(n in idset for n in e.endpoints())


@dataclass(frozen=True)
class EventList:
    """Chronologically sorted events over a half-open-low window (lo, hi].

    lo may be None for "from the beginning of history".
    """

    events: tuple[Event, ...]
    span: tuple[Time | None, Time]

    def __post_init__(self) -> None:
        lo, hi = self.span
        last = None
        for e in self.events:
            if lo is not None and e.time <= lo:
                raise ValueError(f"event at {e.time} not inside ({lo}, {hi}]")
            if e.time > hi:
                raise ValueError(f"event at {e.time} not inside ({lo}, {hi}]")
            if last is not None and e.time < last:
                raise ValueError("events out of order")
            last = e.time

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)


@dataclass(frozen=True)
class PartitionedEventList(EventList):
    """An event list constrained to the scope of a node set."""

    scope: frozenset[NodeId] = field(default_factory=frozenset)


# -- event application ----------------------------------------------------


def _live(entry: Entry | None, node_id: NodeId, e: Event) -> StaticNode:
    if entry is None or is_tombstone(entry):
        raise InvalidEvent(f"node {node_id} does not exist at {e}")
    return entry


def apply_event(lookup: Callable[[NodeId], Entry | None], e: Event) -> dict[NodeId, Entry]:
    """Compute the post-state entries an event produces.

    lookup returns the current entry for a node id (None when never seen).
    Edge events yield entries for both endpoints.  Raises InvalidEvent when
    the event does not fit the state: deleting what is absent, re-adding a
    live node, duplicating an edge, or touching a missing edge.
    """
    k = e.kind
    s = e.subject
    if k is EventKind.ADD_NODE:
        entry = lookup(s)
        if entry is not None and not is_tombstone(entry):
            raise InvalidEvent(f"node {s} already exists at {e}")
        return {s: StaticNode(s)}
    if k is EventKind.DELETE_NODE:
        node = _live(lookup(s), s, e)
        if node.edges:
            raise InvalidEvent(f"node {s} still has edges at {e}")
        return {s: TOMBSTONE}
    if k is EventKind.SET_NODE_ATTR:
        node = _live(lookup(s), s, e)
        return {s: node.with_attr(e.key, e.value)}  # type: ignore[arg-type]
    if k is EventKind.DEL_NODE_ATTR:
        node = _live(lookup(s), s, e)
        return {s: node.without_attr(e.key)}  # type: ignore[arg-type]

    # edge kinds from here on
    p = e.peer
    d = e.direction
    assert p is not None and d is not None
    subj = _live(lookup(s), s, e)
    peer = _live(lookup(p), p, e)
    if k is EventKind.ADD_EDGE:
        if subj.has_edge(p, d):
            raise InvalidEvent(f"edge already present at {e}")
        return {s: subj.with_edge(p, d), p: peer.with_edge(s, flip_direction(d))}
    existing = subj.edge(p, d)
    if existing is None:
        raise InvalidEvent(f"edge absent at {e}")
    if k is EventKind.DELETE_EDGE:
        return {s: subj.without_edge(p, d), p: peer.without_edge(s, flip_direction(d))}
    if k is EventKind.SET_EDGE_ATTR:
        attrs = _attrs_set(existing.attrs, e.key, e.value)  # type: ignore[arg-type]
    else:  # DEL_EDGE_ATTR
        attrs = _attrs_del(existing.attrs, e.key)  # type: ignore[arg-type]
    return {
        s: subj.replace_edge(EdgeRecord(p, d, attrs)),
        p: peer.replace_edge(EdgeRecord(s, flip_direction(d), attrs)),
    }


def event_to_delta(
    e: Event,
    prior: Entry | None = None,
    peer_prior: Entry | None = None,
) -> Delta:
    """Delta holding the post-state of the nodes an event touches.

    prior is the subject's entry just before e.time (None for a fresh
    AddNode); edge events additionally need the peer's entry.
    """

    def lookup(nid: NodeId) -> Entry | None:
        if nid == e.subject:
            return prior
        return peer_prior

    return Delta(apply_event(lookup, e), kind="event")


def apply_events(state: Delta | None, events: EventList | Iterable[Event]) -> Delta:
    """Fold events into a state delta via event_to_delta and delta_sum.

    The result keeps tombstones (the algebra is closed); call materialize()
    for the live snapshot.  Size accumulates like repeated sums.
    """
    working: dict[NodeId, Entry] = dict(state.entries) if state is not None else {}
    size = state.size if state is not None else 0
    for e in events:
        updates = apply_event(working.get, e)
        working.update(updates)
        size += len(updates)
    return Delta(working, kind="snapshot", size=size)


def apply_events_scoped(
    entries: dict[NodeId, Entry],
    events: Iterable[Event],
    member: Callable[[NodeId], bool],
) -> None:
    """Replay events onto a partial state in place, one endpoint at a time.

    Only endpoints for which member() holds are updated; out-of-scope sides
    of edge events are skipped silently.  In-scope violations still raise
    InvalidEvent since they indicate a corrupt partition.
    """
    for e in events:
        updates = apply_event_partial(entries.get, e, member)
        entries.update(updates)


def apply_event_partial(
    lookup: Callable[[NodeId], Entry | None],
    e: Event,
    member: Callable[[NodeId], bool],
) -> dict[NodeId, Entry]:
    """Like apply_event but restricted to endpoints selected by member()."""
    k = e.kind
    out: dict[NodeId, Entry] = {}
    if k not in EDGE_KINDS:
        if member(e.subject):
            return apply_event(lookup, e)
        return out
    s, p, d = e.subject, e.peer, e.direction
    assert p is not None and d is not None
    for this, other, direction in ((s, p, d), (p, s, flip_direction(d))):
        if not member(this):
            continue
        node = _live(lookup(this), this, e)
        if k is EventKind.ADD_EDGE:
            if node.has_edge(other, direction):
                raise InvalidEvent(f"edge already present on node {this} at {e}")
            out[this] = node.with_edge(other, direction)
            continue
        existing = node.edge(other, direction)
        if existing is None:
            raise InvalidEvent(f"edge absent on node {this} at {e}")
        if k is EventKind.DELETE_EDGE:
            out[this] = node.without_edge(other, direction)
        elif k is EventKind.SET_EDGE_ATTR:
            out[this] = node.replace_edge(
                EdgeRecord(other, direction, _attrs_set(existing.attrs, e.key, e.value))  # type: ignore[arg-type]
            )
        else:  # DEL_EDGE_ATTR
            out[this] = node.replace_edge(
                EdgeRecord(other, direction, _attrs_del(existing.attrs, e.key))  # type: ignore[arg-type]
            )
    return out


# -- filters --------------------------------------------------------------


def filter_events_window(
    events: Iterable[Event], lo: Time | None, hi: Time | None
) -> tuple[Event, ...]:
    """Events with lo < time <= hi; either bound may be None (unbounded)."""
    out = []
    for e in events:
        if lo is not None and e.time <= lo:
            continue
        if hi is not None and e.time > hi:
            continue
        out.append(e)
    return tuple(out)


def filter_by_time(el: EventList, t1: Time, t2: Time) -> EventList:
    """Sub-window (t1, t2] of an event list."""
    if t1 > t2:
        raise ValueError(f"bad window ({t1}, {t2}]")
    return EventList(filter_events_window(el.events, t1, t2), (t1, t2))


def filter_delta_by_id(d: Delta, ids: Iterable[NodeId]) -> Delta:
    """Entries touching any of the ids: keyed by one, or edging into one."""
    idset = set(ids)
    entries = {}
    for nid, entry in d.entries.items():
        if nid in idset:
            entries[nid] = entry
        elif not is_tombstone(entry) and any(e.neighbor in idset for e in entry.edges):
            entries[nid] = entry
    return Delta(entries, kind=d.kind)


def filter_el_by_id(el: EventList, ids: Iterable[NodeId]) -> EventList:
    """Events whose subject or edge peer is one of the ids."""
    idset = set(ids)
    kept = tuple(e for e in el.events if event_touches(e, idset))
    return EventList(kept, el.span)


def filter_by_id(x: Delta | EventList, ids: Iterable[NodeId]) -> Delta | EventList:
    if isinstance(x, Delta):
        return filter_delta_by_id(x, ids)
    return filter_el_by_id(x, ids)
