"""Canonical text format for event logs.

One event per line, UTF-8, tab separated, newline terminated:

    time<TAB>kind<TAB>subject[<TAB>peer<TAB>direction][<TAB>key][<TAB>value]

Kinds are the upper-snake names of EventKind.  Times and node ids are
decimal integers.  Field presence is fixed per kind:

    ADD_NODE       time kind subject
    DELETE_NODE    time kind subject
    ADD_EDGE       time kind subject peer direction
    DELETE_EDGE    time kind subject peer direction
    SET_NODE_ATTR  time kind subject key value
    DEL_NODE_ATTR  time kind subject key
    SET_EDGE_ATTR  time kind subject peer direction key value
    DEL_EDGE_ATTR  time kind subject peer direction key

Keys and values must not contain tabs or newlines.  No trailing whitespace.
Round-tripping a parsed log reproduces the input bit for bit.
"""

from __future__ import annotations

from typing import Iterable, Iterator, TextIO

from .deltas import EDGE_KINDS, KEYED_KINDS, VALUED_KINDS, Event, EventKind
from .errors import ParseError, UnsortedLog

_KINDS = {k.name: k for k in EventKind}

# fields after (time, kind, subject), per kind
_TAIL = {
    EventKind.ADD_NODE: (),
    EventKind.DELETE_NODE: (),
    EventKind.ADD_EDGE: ("peer", "direction"),
    EventKind.DELETE_EDGE: ("peer", "direction"),
    EventKind.SET_NODE_ATTR: ("key", "value"),
    EventKind.DEL_NODE_ATTR: ("key",),
    EventKind.SET_EDGE_ATTR: ("peer", "direction", "key", "value"),
    EventKind.DEL_EDGE_ATTR: ("peer", "direction", "key"),
}


def format_event(e: Event) -> str:
    """One canonical line, without the trailing newline."""
    e.validate()
    parts = [str(e.time), e.kind.name, str(e.subject)]
    for name in _TAIL[e.kind]:
        v = getattr(e, name)
        if isinstance(v, str) and ("\t" in v or "\n" in v):
            raise ValueError(f"field {name} contains tab or newline: {v!r}")
        parts.append(str(v))
    return "\t".join(parts)


def parse_line(line: str, line_no: int | None = None) -> Event:
    if line.endswith("\n"):
        line = line[:-1]
    if not line or line != line.rstrip():
        raise ParseError("empty line or trailing whitespace", line_no)
    parts = line.split("\t")
    if len(parts) < 3:
        raise ParseError(f"expected at least 3 fields, got {len(parts)}", line_no)
    try:
        time = int(parts[0])
    except ValueError:
        raise ParseError(f"bad time {parts[0]!r}", line_no) from None
    kind = _KINDS.get(parts[1])
    if kind is None:
        raise ParseError(f"unknown kind {parts[1]!r}", line_no)
    try:
        subject = int(parts[2])
    except ValueError:
        raise ParseError(f"bad subject {parts[2]!r}", line_no) from None
    tail_names = _TAIL[kind]
    tail = parts[3:]
    if len(tail) != len(tail_names):
        raise ParseError(
            f"{kind.name} takes {3 + len(tail_names)} fields, got {len(parts)}", line_no
        )
    fields: dict[str, object] = {}
    for name, raw in zip(tail_names, tail):
        if name == "peer":
            try:
                fields[name] = int(raw)
            except ValueError:
                raise ParseError(f"bad peer {raw!r}", line_no) from None
        elif name == "direction":
            if raw not in ("out", "in"):
                raise ParseError(f"bad direction {raw!r}", line_no)
            fields[name] = raw
        else:
            fields[name] = raw
    e = Event(time=time, kind=kind, subject=subject, **fields)  # type: ignore[arg-type]
    try:
        e.validate()
    except ValueError as exc:
        raise ParseError(str(exc), line_no) from None
    return e


def parse_log(stream: TextIO | Iterable[str]) -> Iterator[Event]:
    """Parse a whole log; raises ParseError with the 1-based line number."""
    for i, line in enumerate(stream, start=1):
        yield parse_line(line, i)


def read_log(path: str, require_sorted: bool = True) -> list[Event]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        events = list(parse_log(fh))
    if require_sorted:
        check_sorted(events)
    return events


def check_sorted(events: Iterable[Event]) -> None:
    last = None
    for i, e in enumerate(events, start=1):
        if last is not None and e.time < last:
            raise UnsortedLog(f"event {i} at time {e.time} after time {last}")
        last = e.time


def write_log(path: str, events: Iterable[Event]) -> int:
    """Write a canonical log file; returns the number of events written."""
    n = 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for e in events:
            fh.write(format_event(e))
            fh.write("\n")
            n += 1
    return n


# re-export the structural sets for callers that format selectively
__all__ = [
    "format_event",
    "parse_line",
    "parse_log",
    "read_log",
    "write_log",
    "check_sorted",
    "EDGE_KINDS",
    "KEYED_KINDS",
    "VALUED_KINDS",
]
