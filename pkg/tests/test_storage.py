"""Key encoding order, placement stability, backend equivalence."""

from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chronograph.errors import NotFound
from chronograph.storage import (
    AUX_DID_BIT,
    TABLE_DELTAS,
    TABLE_VERSIONS,
    DeltaKey,
    FileBackend,
    GraphStore,
    MemoryBackend,
    delta_prefix,
    shard_of_placement,
    sid_of,
    splitmix64,
    store_is_populated,
    wipe_store,
)

KEY_FIELD = st.integers(0, 2**32 - 1)
DID_FIELD = st.integers(0, 2**64 - 1)


@settings(max_examples=300, deadline=None)
@given(KEY_FIELD, KEY_FIELD, DID_FIELD, KEY_FIELD, KEY_FIELD, KEY_FIELD, DID_FIELD, KEY_FIELD)
def test_key_bytes_order_matches_tuple_order(t1, s1, d1, p1, t2, s2, d2, p2):
    a = DeltaKey(t1, s1, d1, p1)
    b = DeltaKey(t2, s2, d2, p2)
    assert (a.encode() < b.encode()) == ((t1, s1, d1, p1) < (t2, s2, d2, p2))


def test_key_round_trip():
    k = DeltaKey(1, 2, 3, 4)
    assert DeltaKey.decode(k.encode()) == k
    assert len(k.encode()) == 20
    assert k.placement() == k.encode()[:8]


def test_aux_bit_separates_namespaces():
    home = DeltaKey(1, 0, 4, 2)
    aux = DeltaKey(1, 0, 4 | AUX_DID_BIT, 2)
    assert aux.is_aux and not home.is_aux
    # a (tsid, sid, did) prefix scan never matches the aux twin
    assert not aux.encode().startswith(delta_prefix(1, 0, 4))
    assert home.encode().startswith(delta_prefix(1, 0, 4))


def test_hashes_deterministic_and_spread():
    assert splitmix64(12345) == splitmix64(12345)
    assert sid_of(77, 4) == sid_of(77, 4)
    # uniform grid of placements over 4 shards lands within 2x of each other
    counts = [0, 0, 0, 0]
    for tsid in range(32):
        for sid in range(32):
            counts[shard_of_placement(tsid, sid, 4)] += 1
    assert max(counts) <= 2 * min(counts)


def _op_suite(rng: random.Random, n_ops: int = 400):
    """A reproducible interleaving of puts, deletes, gets and scans."""
    ops = []
    live = []
    for _ in range(n_ops):
        r = rng.random()
        table = rng.choice([TABLE_DELTAS, TABLE_VERSIONS])
        if r < 0.55 or not live:
            key = bytes(rng.randrange(256) for _ in range(rng.randint(1, 24)))
            val = bytes(rng.randrange(256) for _ in range(rng.randint(0, 64)))
            ops.append(("put", table, key, val))
            live.append((table, key))
        elif r < 0.7:
            t, k = rng.choice(live)
            ops.append(("del", t, k, b""))
        elif r < 0.9:
            t, k = rng.choice(live)
            ops.append(("get", t, k, b""))
        else:
            ops.append(("scan", table, bytes(rng.randrange(256) for _ in range(rng.randint(0, 2))), b""))
    return ops


def _run_suite(backend, ops):
    trace = []
    for op, table, key, val in ops:
        if op == "put":
            backend.put(table, key, val)
        elif op == "del":
            backend.delete(table, key)
        elif op == "get":
            try:
                trace.append(("get", backend.get(table, key)))
            except NotFound:
                trace.append(("get", None))
        else:
            trace.append(("scan", list(backend.scan(table, key))))
    # terminal full scans
    for table in (TABLE_DELTAS, TABLE_VERSIONS):
        trace.append(("final", list(backend.scan(table))))
    return trace


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4, 5])
def test_backend_differential(seed, tmp_path):
    ops = _op_suite(random.Random(seed))
    mem = MemoryBackend(shards=2)
    fb = FileBackend(str(tmp_path / f"s{seed}"), shards=2)
    assert _run_suite(mem, ops) == _run_suite(fb, ops)
    fb.close()


def test_file_backend_persistence(tmp_path):
    root = str(tmp_path / "p")
    fb = FileBackend(root, shards=2)
    rng = random.Random(42)
    ops = _op_suite(rng, 200)
    _run_suite(fb, ops)
    want = {t: list(fb.scan(t)) for t in (TABLE_DELTAS, TABLE_VERSIONS)}
    fb.close()

    # clean reopen via the side index
    fb2 = FileBackend(root)
    assert fb2.shards == 2
    got = {t: list(fb2.scan(t)) for t in (TABLE_DELTAS, TABLE_VERSIONS)}
    assert got == want

    # writes after the flushed index are replayed from the segment tail
    fb2.put(TABLE_DELTAS, b"tail-key", b"tail-val")
    fb2.close()
    fb3 = FileBackend(root)
    assert fb3.get(TABLE_DELTAS, b"tail-key") == b"tail-val"
    fb3.close()


def test_file_backend_survives_missing_index(tmp_path):
    root = str(tmp_path / "noidx")
    fb = FileBackend(root, shards=1)
    fb.put(TABLE_DELTAS, b"k1", b"v1")
    fb.close()
    for f in (tmp_path / "noidx").glob("*.idx"):
        f.unlink()
    fb2 = FileBackend(root)
    assert fb2.get(TABLE_DELTAS, b"k1") == b"v1"
    fb2.close()


def test_store_population_and_wipe(tmp_path):
    root = str(tmp_path / "w")
    assert not store_is_populated(root)
    fb = FileBackend(root, shards=1)
    assert not store_is_populated(root)  # empty segments
    fb.put(TABLE_DELTAS, b"k", b"v")
    fb.close()
    assert store_is_populated(root)
    wipe_store(root)
    assert not store_is_populated(root)


def test_graph_store_typed_round_trips(tmp_path):
    from chronograph.codec import EventBlock, GraphMeta, TimespanMeta
    from chronograph.deltas import Delta, Event, EventKind, StaticNode

    gs = GraphStore(MemoryBackend())
    key = DeltaKey(0, 0, 2, 1)
    d = Delta({5: StaticNode(5)}, kind="snapshot")
    gs.put_delta(key, d)
    assert gs.get_delta(key) == d
    assert gs.try_get_delta(DeltaKey(9, 9, 9, 9)) is None

    blk = EventBlock((None, 9), ((0, Event(1, EventKind.ADD_NODE, 5)),), None)
    gs.put_delta(DeltaKey(0, 0, 1, 0), blk)
    got = list(gs.scan_deltas(0, 0))
    assert [k for k, _ in got] == [DeltaKey(0, 0, 1, 0), key]

    chain = {0: [(1, key)]}
    gs.put_chain(5, chain)
    assert gs.get_chain(5) == chain
    assert gs.get_chain(404) == {}
    assert gs.all_node_ids() == [5]

    ts = TimespanMeta(0, 1, 9, (4, 9), 2, 4, 1, "random", False, 1)
    gs.put_timespan(ts)
    assert gs.get_timespan(0) == ts
    assert gs.list_timespans() == [ts]

    gm = GraphMeta(1, 9, 4, 1)
    gs.put_graph_meta(gm)
    assert gs.get_graph_meta() == gm
    gs.put_config_text("ts_events=4\n")
    assert gs.get_config_text() == "ts_events=4\n"

    gs.put_pid(5, 0, 3)
    assert gs.get_pid(5, 0) == 3
    assert gs.get_pid(5, 1) is None
