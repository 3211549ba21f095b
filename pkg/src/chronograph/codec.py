"""Versioned binary serialization for stored values.

Every value starts with a fixed header: magic byte, format version, flags
byte (bit 0: zlib-compressed payload, off by default), and a type tag.
Payloads are built from length-prefixed sections with fixed-width
big-endian integers.  Encoders emit canonical bytes: entries, attributes
and scopes are sorted, so equal values always serialize identically.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

from .deltas import (
    IN,
    OUT,
    TOMBSTONE,
    Attrs,
    Delta,
    EdgeRecord,
    Event,
    EventKind,
    StaticNode,
    is_tombstone,
)
from .errors import CodecError

MAGIC = 0xC7
VERSION = 1
FLAG_COMPRESSED = 0x01

T_DELTA = 1
T_EVENT_BLOCK = 2
T_VERSION_CHAIN = 3
T_TIMESPAN = 4
T_GRAPH_META = 5

_DELTA_KINDS = {None: 0, "event": 1, "eventlist": 2, "snapshot": 3, "derived": 4}
_DELTA_KINDS_BACK = {v: k for k, v in _DELTA_KINDS.items()}

_KIND_CODES = {k: i for i, k in enumerate(EventKind)}
_KIND_BACK = {i: k for k, i in _KIND_CODES.items()}

_DIR_CODES = {OUT: 0, IN: 1}
_DIR_BACK = {0: OUT, 1: IN}


class _Writer:
    __slots__ = ("buf",)

    def __init__(self) -> None:
        self.buf = bytearray()

    def u8(self, v: int) -> None:
        self.buf.append(v)

    def u32(self, v: int) -> None:
        self.buf += struct.pack(">I", v)

    def u64(self, v: int) -> None:
        self.buf += struct.pack(">Q", v)

    def opt_u64(self, v: int | None) -> None:
        if v is None:
            self.u8(0)
        else:
            self.u8(1)
            self.u64(v)

    def text(self, s: str) -> None:
        raw = s.encode("utf-8")
        self.u32(len(raw))
        self.buf += raw


class _Reader:
    __slots__ = ("buf", "pos")

    def __init__(self, buf: bytes) -> None:
        self.buf = buf
        self.pos = 0

    def _take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CodecError("truncated payload")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self._take(1)[0]

    def u32(self) -> int:
        return struct.unpack(">I", self._take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self._take(8))[0]

    def opt_u64(self) -> int | None:
        return self.u64() if self.u8() else None

    def text(self) -> str:
        n = self.u32()
        return self._take(n).decode("utf-8")

    def done(self) -> bool:
        return self.pos == len(self.buf)


# -- payload pieces -------------------------------------------------------


def _put_attrs(w: _Writer, attrs: Attrs) -> None:
    w.u32(len(attrs))
    for k, v in attrs:
        w.text(k)
        w.text(v)


def _get_attrs(r: _Reader) -> Attrs:
    return tuple((r.text(), r.text()) for _ in range(r.u32()))


def _put_node(w: _Writer, node: StaticNode) -> None:
    w.u64(node.id)
    _put_attrs(w, node.attrs)
    w.u32(len(node.edges))
    for e in node.edges:
        w.u64(e.neighbor)
        w.u8(_DIR_CODES[e.direction])
        _put_attrs(w, e.attrs)


def _get_node(r: _Reader) -> StaticNode:
    nid = r.u64()
    attrs = _get_attrs(r)
    edges = tuple(
        EdgeRecord(r.u64(), _DIR_BACK[r.u8()], _get_attrs(r)) for _ in range(r.u32())
    )
    return StaticNode(nid, edges, attrs)


def _put_event(w: _Writer, e: Event) -> None:
    w.u64(e.time)
    w.u8(_KIND_CODES[e.kind])
    w.u64(e.subject)
    if e.peer is not None:
        w.u8(1)
        w.u64(e.peer)
        w.u8(_DIR_CODES[e.direction])  # type: ignore[index]
    else:
        w.u8(0)
    if e.key is not None:
        w.u8(1)
        w.text(e.key)
    else:
        w.u8(0)
    if e.value is not None:
        w.u8(1)
        w.text(e.value)
    else:
        w.u8(0)


def _get_event(r: _Reader) -> Event:
    time = r.u64()
    kind = _KIND_BACK[r.u8()]
    subject = r.u64()
    peer = direction = None
    if r.u8():
        peer = r.u64()
        direction = _DIR_BACK[r.u8()]
    key = r.text() if r.u8() else None
    value = r.text() if r.u8() else None
    return Event(time, kind, subject, peer, direction, key, value)


# -- top-level values -----------------------------------------------------


@dataclass(frozen=True)
class EventBlock:
    """Stored slice of the event log: (sequence, event) pairs over a window.

    scope, when present, names the node set the block was filtered for
    (used by replicated frontier blocks).
    """

    span: tuple[int | None, int]
    items: tuple[tuple[int, Event], ...]
    scope: frozenset[int] | None = None


@dataclass(frozen=True)
class TimespanMeta:
    tsid: int
    start: int
    end: int
    checkpts: tuple[int, ...]
    k: int
    df: int
    npids: int
    partitioning: str  # "random" | "locality"
    replicate_1hop: bool
    ns: int


@dataclass(frozen=True)
class GraphMeta:
    start: int
    end: int
    events: int
    tscount: int
    gtype: str = "directed"


def _encode_payload(value: object) -> tuple[int, bytes]:
    w = _Writer()
    if isinstance(value, Delta):
        w.u8(_DELTA_KINDS.get(value.kind, 4))
        w.u64(value.size)
        items = value.items()
        w.u32(len(items))
        for nid, entry in items:
            if is_tombstone(entry):
                w.u64(nid)
                w.u8(0)
            else:
                node = entry
                w.u64(nid)
                w.u8(1)
                _put_node(w, node)  # type: ignore[arg-type]
        return T_DELTA, bytes(w.buf)
    if isinstance(value, EventBlock):
        lo, hi = value.span
        w.opt_u64(lo)
        w.u64(hi)
        if value.scope is None:
            w.u32(0xFFFFFFFF)
        else:
            w.u32(len(value.scope))
            for nid in sorted(value.scope):
                w.u64(nid)
        w.u32(len(value.items))
        for seq, e in value.items:
            w.u64(seq)
            _put_event(w, e)
        return T_EVENT_BLOCK, bytes(w.buf)
    if isinstance(value, TimespanMeta):
        w.u32(value.tsid)
        w.u64(value.start)
        w.u64(value.end)
        w.u32(len(value.checkpts))
        for t in value.checkpts:
            w.u64(t)
        w.u32(value.k)
        w.u32(value.df)
        w.u32(value.npids)
        w.u8(1 if value.partitioning == "locality" else 0)
        w.u8(1 if value.replicate_1hop else 0)
        w.u32(value.ns)
        return T_TIMESPAN, bytes(w.buf)
    if isinstance(value, GraphMeta):
        w.u64(value.start)
        w.u64(value.end)
        w.u64(value.events)
        w.u32(value.tscount)
        w.text(value.gtype)
        return T_GRAPH_META, bytes(w.buf)
    if isinstance(value, dict):  # version chain: {tsid: [(time, key_bytes20)]}
        w.u32(len(value))
        for tsid in sorted(value):
            w.u32(tsid)
            entries = value[tsid]
            w.u32(len(entries))
            for time, key_bytes in entries:
                w.u64(time)
                if len(key_bytes) != 20:
                    raise CodecError("chain entry key must be 20 bytes")
                w.buf += key_bytes
        return T_VERSION_CHAIN, bytes(w.buf)
    raise CodecError(f"cannot encode {type(value).__name__}")


def encode_value(value: object, compress: bool = False) -> bytes:
    tag, payload = _encode_payload(value)
    flags = 0
    if compress:
        flags |= FLAG_COMPRESSED
        payload = zlib.compress(payload, 6)
    return bytes([MAGIC, VERSION, flags, tag]) + payload


def decode_value(raw: bytes) -> object:
    if len(raw) < 4:
        raise CodecError("value too short")
    if raw[0] != MAGIC:
        raise CodecError(f"bad magic 0x{raw[0]:02x}")
    if raw[1] != VERSION:
        raise CodecError(f"unsupported format version {raw[1]}")
    flags, tag = raw[2], raw[3]
    payload = raw[4:]
    if flags & FLAG_COMPRESSED:
        try:
            payload = zlib.decompress(payload)
        except zlib.error as exc:
            raise CodecError(f"bad compressed payload: {exc}") from None
    r = _Reader(payload)
    if tag == T_DELTA:
        kind = _DELTA_KINDS_BACK.get(r.u8())
        size = r.u64()
        entries = {}
        for _ in range(r.u32()):
            nid = r.u64()
            if r.u8():
                entries[nid] = _get_node(r)
            else:
                entries[nid] = TOMBSTONE
        value: object = Delta(entries, kind=kind, size=size)
    elif tag == T_EVENT_BLOCK:
        lo = r.opt_u64()
        hi = r.u64()
        nscope = r.u32()
        scope = None if nscope == 0xFFFFFFFF else frozenset(r.u64() for _ in range(nscope))
        items = tuple((r.u64(), _get_event(r)) for _ in range(r.u32()))
        value = EventBlock((lo, hi), items, scope)
    elif tag == T_TIMESPAN:
        value = TimespanMeta(
            tsid=r.u32(),
            start=r.u64(),
            end=r.u64(),
            checkpts=tuple(r.u64() for _ in range(r.u32())),
            k=r.u32(),
            df=r.u32(),
            npids=r.u32(),
            partitioning="locality" if r.u8() else "random",
            replicate_1hop=bool(r.u8()),
            ns=r.u32(),
        )
    elif tag == T_GRAPH_META:
        value = GraphMeta(r.u64(), r.u64(), r.u64(), r.u32(), r.text())
    elif tag == T_VERSION_CHAIN:
        chain: dict[int, list[tuple[int, bytes]]] = {}
        for _ in range(r.u32()):
            tsid = r.u32()
            n = r.u32()
            chain[tsid] = [(r.u64(), bytes(r._take(20))) for _ in range(n)]
        value = chain
    else:
        raise CodecError(f"unknown type tag {tag}")
    if not r.done():
        raise CodecError("trailing bytes after payload")
    return value
