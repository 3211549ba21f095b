"""Ordered key-value storage: key layout, placement, and two backends.

Index state lives in five logical tables:

    deltas           (tsid, sid, did, pid) -> tree delta or event block
    versions         nid -> per-timespan chain of (time, delta key) pointers
    timespans        tsid -> timespan metadata
    graph            singleton graph metadata + index config text
    micropartitions  (nid, tsid) -> pid, written by the locality partitioner

Delta keys serialize to 20 fixed-width big-endian bytes so byte order
equals tuple order; the (tsid, sid) prefix is the placement key that routes
a record to its shard.  Records of one delta therefore sit contiguously,
clustered by partition id.

Replicated-frontier records reuse the delta key shape with a high bit set
on the did, which keeps them out of every plain prefix scan; snapshot and
node reads never touch them.

Two interchangeable backends: a dict-based in-memory store and a
file-backed store with one append-only segment per shard plus a side index
that is rewritten atomically on flush.  Writers follow a single-writer
discipline per build epoch; values are immutable once written.
"""

from __future__ import annotations

import bisect
import os
import struct
from dataclasses import dataclass
from typing import Iterator

from . import codec
from .codec import EventBlock, GraphMeta, TimespanMeta
from .deltas import Delta
from .errors import BackendIO, NotFound

TABLE_DELTAS = 1
TABLE_VERSIONS = 2
TABLE_TIMESPANS = 3
TABLE_GRAPH = 4
TABLE_MICRO = 5

TABLES = (TABLE_DELTAS, TABLE_VERSIONS, TABLE_TIMESPANS, TABLE_GRAPH, TABLE_MICRO)

AUX_DID_BIT = 1 << 63

_KEY_STRUCT = struct.Struct(">IIQI")
_PLACEMENT_STRUCT = struct.Struct(">II")

_SID_SALT = 0x9E3779B97F4A7C15
_PID_SALT = 0xC2B2AE3D27D4EB4F
_SHARD_SALT = 0x165667B19E3779F9


def splitmix64(x: int) -> int:
    """Deterministic 64-bit mix; stable across processes and runs."""
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


def sid_of(nid: int, ns: int) -> int:
    """Horizontal partition of a node id; fixed random hash."""
    return splitmix64(nid ^ _SID_SALT) % ns


def shard_of_placement(tsid: int, sid: int, shards: int) -> int:
    return splitmix64(((tsid << 32) | sid) ^ _SHARD_SALT) % shards


@dataclass(frozen=True, order=True)
class DeltaKey:
    """Clustering key of one stored micro portion of a delta."""

    tsid: int
    sid: int
    did: int
    pid: int

    def encode(self) -> bytes:
        return _KEY_STRUCT.pack(self.tsid, self.sid, self.did, self.pid)

    @staticmethod
    def decode(raw: bytes) -> "DeltaKey":
        return DeltaKey(*_KEY_STRUCT.unpack(raw))

    def placement(self) -> bytes:
        return _PLACEMENT_STRUCT.pack(self.tsid, self.sid)

    @property
    def is_aux(self) -> bool:
        return bool(self.did & AUX_DID_BIT)


def delta_prefix(tsid: int, sid: int | None = None, did: int | None = None) -> bytes:
    """Scan prefix over leading key fields, in clustering order."""
    out = struct.pack(">I", tsid)
    if sid is not None:
        out += struct.pack(">I", sid)
        if did is not None:
            out += struct.pack(">Q", did)
    return out


# -- backends -------------------------------------------------------------


class Backend:
    """Ordered KV over numbered tables.  Keys and values are bytes."""

    shards: int

    def put(self, table: int, key: bytes, value: bytes) -> None:
        raise NotImplementedError

    def get(self, table: int, key: bytes) -> bytes:
        raise NotImplementedError

    def delete(self, table: int, key: bytes) -> None:
        raise NotImplementedError

    def scan(self, table: int, prefix: bytes = b"") -> Iterator[tuple[bytes, bytes]]:
        """Key-ordered iteration over keys starting with prefix."""
        raise NotImplementedError

    def shard_of(self, table: int, key: bytes) -> int:
        if table == TABLE_DELTAS and len(key) >= 8:
            tsid, sid = _PLACEMENT_STRUCT.unpack(key[:8])
            return shard_of_placement(tsid, sid, self.shards)
        return 0

    def flush(self) -> None:
        pass

    def close(self) -> None:
        pass


class _SortedIndex:
    """Per-table sorted key list with bisect lookups."""

    __slots__ = ("keys",)

    def __init__(self) -> None:
        self.keys: list[bytes] = []

    def add(self, key: bytes) -> None:
        i = bisect.bisect_left(self.keys, key)
        if i == len(self.keys) or self.keys[i] != key:
            self.keys.insert(i, key)

    def remove(self, key: bytes) -> None:
        i = bisect.bisect_left(self.keys, key)
        if i < len(self.keys) and self.keys[i] == key:
            del self.keys[i]

    def with_prefix(self, prefix: bytes) -> Iterator[bytes]:
        i = bisect.bisect_left(self.keys, prefix)
        while i < len(self.keys) and self.keys[i].startswith(prefix):
            yield self.keys[i]
            i += 1


class MemoryBackend(Backend):
    """Dict-backed store; the reference implementation for tests."""

    def __init__(self, shards: int = 1):
        self.shards = shards
        self._data: dict[int, dict[bytes, bytes]] = {t: {} for t in TABLES}
        self._index: dict[int, _SortedIndex] = {t: _SortedIndex() for t in TABLES}

    def put(self, table: int, key: bytes, value: bytes) -> None:
        if key not in self._data[table]:
            self._index[table].add(key)
        self._data[table][key] = value

    def get(self, table: int, key: bytes) -> bytes:
        try:
            return self._data[table][key]
        except KeyError:
            raise NotFound(f"table {table} key {key.hex()}") from None

    def delete(self, table: int, key: bytes) -> None:
        if self._data[table].pop(key, None) is not None:
            self._index[table].remove(key)

    def scan(self, table: int, prefix: bytes = b"") -> Iterator[tuple[bytes, bytes]]:
        data = self._data[table]
        for k in self._index[table].with_prefix(prefix):
            yield k, data[k]


_SEG_HEADER = struct.Struct(">BBII")  # table, op, klen, vlen
_OP_PUT = 1
_OP_DEL = 2
_IDX_MAGIC = b"CGIX"


class FileBackend(Backend):
    """Append-only segment per shard plus a side index.

    Segments only grow; deletes append a tombstone record.  The side index
    snapshots the live key map and the covered segment length; reopening
    loads it and replays any segment tail written after the last flush.
    Index files are replaced atomically so readers see the old or the new
    epoch, never a torn one.
    """

    def __init__(self, root: str, shards: int | None = None):
        self.root = root
        try:
            os.makedirs(root, exist_ok=True)
            cfg_path = os.path.join(root, "store.cfg")
            if os.path.exists(cfg_path):
                with open(cfg_path, "r", encoding="utf-8") as fh:
                    stored = dict(
                        line.strip().split("=", 1) for line in fh if line.strip()
                    )
                self.shards = int(stored["shards"])
            else:
                self.shards = shards if shards is not None else 1
                with open(cfg_path, "w", encoding="utf-8") as fh:
                    fh.write(f"shards={self.shards}\n")
        except OSError as exc:
            raise BackendIO(f"cannot open store at {root}: {exc}") from None
        self._fds: list[int] = []
        self._sizes: list[int] = []
        # (table, key) -> (shard, offset, vlen)
        self._where: dict[int, dict[bytes, tuple[int, int, int]]] = {t: {} for t in TABLES}
        self._index: dict[int, _SortedIndex] = {t: _SortedIndex() for t in TABLES}
        try:
            for s in range(self.shards):
                path = self._seg_path(s)
                fd = os.open(path, os.O_RDWR | os.O_CREAT, 0o644)
                self._fds.append(fd)
                self._sizes.append(os.fstat(fd).st_size)
                self._load_shard(s)
        except OSError as exc:
            raise BackendIO(f"cannot open segments: {exc}") from None

    def _seg_path(self, shard: int) -> str:
        return os.path.join(self.root, f"seg-{shard:03d}.dat")

    def _idx_path(self, shard: int) -> str:
        return os.path.join(self.root, f"seg-{shard:03d}.idx")

    # -- loading ----------------------------------------------------------

    def _load_shard(self, shard: int) -> None:
        covered = self._load_side_index(shard)
        self._replay_segment(shard, covered)

    def _load_side_index(self, shard: int) -> int:
        path = self._idx_path(shard)
        if not os.path.exists(path):
            return 0
        try:
            with open(path, "rb") as fh:
                raw = fh.read()
        except OSError as exc:
            raise BackendIO(f"cannot read index: {exc}") from None
        if len(raw) < 16 or raw[:4] != _IDX_MAGIC:
            return 0
        covered, count = struct.unpack(">QI", raw[4:16])
        if covered > self._sizes[shard]:
            return 0  # stale index from a longer-lived epoch; rebuild
        pos = 16
        try:
            for _ in range(count):
                table, klen = struct.unpack(">BI", raw[pos : pos + 5])
                pos += 5
                key = raw[pos : pos + klen]
                pos += klen
                offset, vlen = struct.unpack(">QI", raw[pos : pos + 12])
                pos += 12
                self._where[table][key] = (shard, offset, vlen)
                self._index[table].add(key)
        except (struct.error, KeyError):
            # corrupt index: fall back to a full segment scan
            for t in TABLES:
                for k in [k for k, w in self._where[t].items() if w[0] == shard]:
                    del self._where[t][k]
                    self._index[t].remove(k)
            return 0
        return covered

    def _replay_segment(self, shard: int, start: int) -> None:
        fd = self._fds[shard]
        size = self._sizes[shard]
        pos = start
        while pos + _SEG_HEADER.size <= size:
            head = os.pread(fd, _SEG_HEADER.size, pos)
            table, op, klen, vlen = _SEG_HEADER.unpack(head)
            body_at = pos + _SEG_HEADER.size
            if body_at + klen + vlen > size:
                break  # torn tail from an interrupted write; ignore
            key = os.pread(fd, klen, body_at)
            if op == _OP_PUT:
                self._where[table][key] = (shard, body_at + klen, vlen)
                self._index[table].add(key)
            elif op == _OP_DEL:
                if self._where[table].pop(key, None) is not None:
                    self._index[table].remove(key)
            pos = body_at + klen + vlen
        self._sizes[shard] = pos

    # -- operations -------------------------------------------------------

    def _append(self, shard: int, table: int, op: int, key: bytes, value: bytes) -> int:
        fd = self._fds[shard]
        rec = _SEG_HEADER.pack(table, op, len(key), len(value)) + key + value
        try:
            offset = self._sizes[shard]
            os.pwrite(fd, rec, offset)
        except OSError as exc:
            raise BackendIO(f"segment write failed: {exc}") from None
        self._sizes[shard] += len(rec)
        return offset + _SEG_HEADER.size + len(key)

    def put(self, table: int, key: bytes, value: bytes) -> None:
        shard = self.shard_of(table, key)
        voff = self._append(shard, table, _OP_PUT, key, value)
        if key not in self._where[table]:
            self._index[table].add(key)
        self._where[table][key] = (shard, voff, len(value))

    def get(self, table: int, key: bytes) -> bytes:
        where = self._where[table].get(key)
        if where is None:
            raise NotFound(f"table {table} key {key.hex()}")
        shard, offset, vlen = where
        try:
            return os.pread(self._fds[shard], vlen, offset)
        except OSError as exc:
            raise BackendIO(f"segment read failed: {exc}") from None

    def delete(self, table: int, key: bytes) -> None:
        if key not in self._where[table]:
            return
        shard = self.shard_of(table, key)
        self._append(shard, table, _OP_DEL, key, b"")
        del self._where[table][key]
        self._index[table].remove(key)

    def scan(self, table: int, prefix: bytes = b"") -> Iterator[tuple[bytes, bytes]]:
        for k in list(self._index[table].with_prefix(prefix)):
            yield k, self.get(table, k)

    # -- lifecycle --------------------------------------------------------

    def flush(self) -> None:
        """Fsync segments, then swap in fresh side indexes atomically."""
        try:
            for fd in self._fds:
                os.fsync(fd)
            for shard in range(self.shards):
                self._write_side_index(shard)
        except OSError as exc:
            raise BackendIO(f"flush failed: {exc}") from None

    def _write_side_index(self, shard: int) -> None:
        entries = []
        for table in TABLES:
            for key, (s, offset, vlen) in self._where[table].items():
                if s == shard:
                    entries.append((table, key, offset, vlen))
        entries.sort(key=lambda e: (e[0], e[1]))
        buf = bytearray()
        buf += _IDX_MAGIC
        buf += struct.pack(">QI", self._sizes[shard], len(entries))
        for table, key, offset, vlen in entries:
            buf += struct.pack(">BI", table, len(key))
            buf += key
            buf += struct.pack(">QI", offset, vlen)
        tmp = self._idx_path(shard) + ".tmp"
        with open(tmp, "wb") as fh:
            fh.write(buf)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, self._idx_path(shard))

    def close(self) -> None:
        self.flush()
        for fd in self._fds:
            os.close(fd)
        self._fds = []


def store_is_populated(root: str) -> bool:
    """True when the directory already holds index segments with data."""
    if not os.path.isdir(root):
        return False
    for name in os.listdir(root):
        if name.startswith("seg-") and name.endswith(".dat"):
            if os.path.getsize(os.path.join(root, name)) > 0:
                return True
    return False


def wipe_store(root: str) -> None:
    """Remove index files from a store directory (for --force rebuilds)."""
    if not os.path.isdir(root):
        return
    for name in os.listdir(root):
        if name.startswith("seg-") and (name.endswith(".dat") or name.endswith(".idx")):
            os.unlink(os.path.join(root, name))
        elif name == "store.cfg":
            os.unlink(os.path.join(root, name))


# -- typed facade ---------------------------------------------------------

_GRAPH_META_KEY = b"meta"
_GRAPH_CONFIG_KEY = b"config"
_MICRO_STRUCT = struct.Struct(">QI")


class GraphStore:
    """Typed view over a backend: encodes keys and values per table."""

    def __init__(self, backend: Backend):
        self.backend = backend

    # deltas --------------------------------------------------------------

    def put_delta(self, key: DeltaKey, value: Delta | EventBlock, compress: bool = False) -> None:
        self.backend.put(TABLE_DELTAS, key.encode(), codec.encode_value(value, compress))

    def get_delta(self, key: DeltaKey) -> Delta | EventBlock:
        return codec.decode_value(self.backend.get(TABLE_DELTAS, key.encode()))  # type: ignore[return-value]

    def try_get_delta(self, key: DeltaKey) -> Delta | EventBlock | None:
        try:
            return self.get_delta(key)
        except NotFound:
            return None

    def scan_deltas(
        self, tsid: int, sid: int | None = None, did: int | None = None
    ) -> Iterator[tuple[DeltaKey, Delta | EventBlock]]:
        prefix = delta_prefix(tsid, sid, did)
        for k, v in self.backend.scan(TABLE_DELTAS, prefix):
            yield DeltaKey.decode(k), codec.decode_value(v)  # type: ignore[misc]

    # version chains ------------------------------------------------------

    def put_chain(self, nid: int, chain: dict[int, list[tuple[int, DeltaKey]]]) -> None:
        raw = {
            tsid: [(t, key.encode()) for t, key in entries]
            for tsid, entries in chain.items()
        }
        self.backend.put(TABLE_VERSIONS, struct.pack(">Q", nid), codec.encode_value(raw))

    def get_chain(self, nid: int) -> dict[int, list[tuple[int, DeltaKey]]]:
        try:
            raw = codec.decode_value(self.backend.get(TABLE_VERSIONS, struct.pack(">Q", nid)))
        except NotFound:
            return {}
        return {
            tsid: [(t, DeltaKey.decode(kb)) for t, kb in entries]
            for tsid, entries in raw.items()  # type: ignore[union-attr]
        }

    def all_node_ids(self) -> list[int]:
        return [
            struct.unpack(">Q", k)[0] for k, _ in self.backend.scan(TABLE_VERSIONS)
        ]

    # timespans -----------------------------------------------------------

    def put_timespan(self, meta: TimespanMeta) -> None:
        self.backend.put(TABLE_TIMESPANS, struct.pack(">I", meta.tsid), codec.encode_value(meta))

    def get_timespan(self, tsid: int) -> TimespanMeta:
        return codec.decode_value(self.backend.get(TABLE_TIMESPANS, struct.pack(">I", tsid)))  # type: ignore[return-value]

    def list_timespans(self) -> list[TimespanMeta]:
        return [codec.decode_value(v) for _, v in self.backend.scan(TABLE_TIMESPANS)]  # type: ignore[misc]

    # graph meta ----------------------------------------------------------

    def put_graph_meta(self, meta: GraphMeta) -> None:
        self.backend.put(TABLE_GRAPH, _GRAPH_META_KEY, codec.encode_value(meta))

    def get_graph_meta(self) -> GraphMeta:
        return codec.decode_value(self.backend.get(TABLE_GRAPH, _GRAPH_META_KEY))  # type: ignore[return-value]

    def put_config_text(self, text: str) -> None:
        self.backend.put(TABLE_GRAPH, _GRAPH_CONFIG_KEY, text.encode("utf-8"))

    def get_config_text(self) -> str:
        return self.backend.get(TABLE_GRAPH, _GRAPH_CONFIG_KEY).decode("utf-8")

    # micro-partition map -------------------------------------------------

    def put_pid(self, nid: int, tsid: int, pid: int) -> None:
        self.backend.put(TABLE_MICRO, _MICRO_STRUCT.pack(nid, tsid), struct.pack(">I", pid))

    def get_pid(self, nid: int, tsid: int) -> int | None:
        try:
            raw = self.backend.get(TABLE_MICRO, _MICRO_STRUCT.pack(nid, tsid))
        except NotFound:
            return None
        return struct.unpack(">I", raw)[0]

    def flush(self) -> None:
        self.backend.flush()

    def close(self) -> None:
        self.backend.close()
