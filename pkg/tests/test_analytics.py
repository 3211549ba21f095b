"""Temporal operands and operators: tiling, equivalences, aggregation."""

import io
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chronograph.analytics import (
    Aggregation,
    AllChangePoints,
    NodeT,
    SoN,
    SoTS,
    SubgraphT,
    TimeSeries,
    UniformSample,
    compare,
    compare_times,
    evolution,
    fetch,
    node_compute,
    node_compute_delta,
    node_compute_temporal,
    points_to_csv,
    select,
    series_to_csv,
    temp_aggregate,
    timeslice,
    to_graph,
)
from chronograph.builder import IndexConfig, build_index
from chronograph.deltas import (
    EDGE_KINDS,
    Event,
    EventKind,
    StaticNode,
    apply_events,
    event_touches,
)
from chronograph.errors import (
    EmptySeries,
    MemberComputeError,
    OutOfSpan,
    UnalignedOperands,
)
from chronograph.graphs import GraphS
from chronograph.query import IndexReader
from chronograph.storage import GraphStore, MemoryBackend

import oracle
from conftest import node_to_plain
from genlog import random_log


@pytest.fixture(scope="module")
def env():
    events = random_log(91, 600)
    store = GraphStore(MemoryBackend())
    build_index(store, events, IndexConfig(ts_events=150, ns=2, l=8, psize=5, k=3))
    return events, IndexReader(store)


def log_ids(events):
    ids = set()
    for e in events:
        ids.update(e.endpoints())
    return sorted(ids)


def node_t_from_log(events, nid, start, end):
    """Independent NodeT construction straight from the raw log."""
    entry = apply_events(None, [e for e in events if e.time <= start]).entries.get(nid)
    init = entry if isinstance(entry, StaticNode) else None
    inside = tuple(
        e for e in events if start < e.time < end and event_touches(e, [nid])
    )
    return NodeT(nid, start, end, init, inside)


def has_label(node) -> bool:
    return any(k == "label" for k, _ in node.attrs)


# ---------------------------------------------------------- member types

@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_node_t_versions_tile_the_span(seed):
    events = random_log(seed, 150)
    rng = random.Random(seed)
    hi = events[-1].time
    start = rng.randint(0, hi - 1)
    end = rng.randint(start + 1, hi + 2)
    for nid in rng.sample(log_ids(events), 5):
        m = node_t_from_log(events, nid, start, end)
        ivals = m.version_intervals()
        assert ivals[0][0] == start and ivals[-1][1] == end
        for (_, a), (b, _) in zip(ivals, ivals[1:]):
            assert a == b  # contiguous, hence disjoint with full union
        assert all(lo < hi for lo, hi in ivals)


def test_node_t_at_matches_replay():
    events = random_log(8, 300)
    rng = random.Random(8)
    hi = events[-1].time
    for _ in range(20):
        nid = rng.choice(log_ids(events))
        start = rng.randint(0, hi - 1)
        end = rng.randint(start + 1, hi + 2)
        m = node_t_from_log(events, nid, start, end)
        t = rng.randint(start, end - 1)
        want = oracle.replay(events, t).get(nid)
        got = m.at(t)
        assert (got is None and want is None) or node_to_plain(got) == want


def test_node_t_crop_keeps_states():
    events = random_log(9, 200)
    m = node_t_from_log(events, log_ids(events)[0], 0, events[-1].time + 1)
    lo, hi = m.start + 3, m.end - 3
    c = m.crop(lo, hi)
    for t in range(lo, hi):
        assert c.at(t) == m.at(t)
    with pytest.raises(OutOfSpan):
        m.crop(m.start - 1, hi)


def test_node_t_out_of_span():
    m = NodeT(1, 5, 9, StaticNode(1), ())
    with pytest.raises(OutOfSpan):
        m.at(4)
    with pytest.raises(OutOfSpan):
        m.at(9)  # end is exclusive
    assert m.at(8) == StaticNode(1)


def test_subgraph_states_match_induced_oracle(env):
    events, reader = env
    rng = random.Random(191)
    hi = events[-1].time
    for _ in range(6):
        center = rng.choice(log_ids(events))
        start = rng.randint(1, hi - 10)
        end = rng.randint(start + 5, hi + 1)
        sub = SoTS.over(reader, k=1, start=start, end=end, centers=[center]).fetch()[center]
        assert sub.members == frozenset(reader.get_k_hop(center, start, 1).ids())
        for t in sorted(rng.sample(range(start, end), 4)):
            state = oracle.replay(events, t)
            want = oracle.induced(state, set(sub.members) & set(state))
            got = {n: node_to_plain(s) for n, s in sub.at(t).items()}
            assert got == want, (center, t)


# ------------------------------------------------------------ timeseries

def test_timeseries_requires_increasing_times():
    TimeSeries(((1, 0.0), (2, 0.0)))
    with pytest.raises(ValueError):
        TimeSeries(((2, 0.0), (2, 1.0)))
    with pytest.raises(ValueError):
        TimeSeries(((3, 0.0), (1, 1.0)))


def test_temp_aggregate_basics():
    flat = TimeSeries(((0, 5.0), (2, 5.0), (7, 5.0)))
    assert temp_aggregate(flat, "max") == 5.0
    assert temp_aggregate(flat, Aggregation.MIN) == 5.0
    assert temp_aggregate(flat, "mean") == 5.0
    assert temp_aggregate(flat, "saturate") == 0
    assert temp_aggregate(TimeSeries(((1, 2), (2, 4))), "mean") == 3.0


def test_temp_aggregate_peak():
    assert temp_aggregate(TimeSeries(((0, 1), (1, 3), (2, 2))), "peak") == (1, 3)
    # two local maxima, global one wins
    ts = TimeSeries(((0, 4), (1, 1), (2, 6), (3, 0)))
    assert temp_aggregate(ts, "peak") == (2, 6)
    # tie resolves to the earliest
    tie = TimeSeries(((0, 6), (1, 1), (2, 6)))
    assert temp_aggregate(tie, "peak") == (0, 6)


def test_temp_aggregate_saturate_band():
    ts = TimeSeries(((0, 50.0), (1, 99.5), (2, 100.5), (3, 100.0)))
    assert temp_aggregate(ts, "saturate") == 1  # within 1% of 100 from t=1 on
    assert temp_aggregate(ts, "saturate", eps=0.004) == 3  # 0.5 off at t=1 and t=2


def test_temp_aggregate_empty_series():
    for agg in Aggregation:
        with pytest.raises(EmptySeries):
            temp_aggregate(TimeSeries(()), agg)


def test_uniform_sample_point_counts(env):
    _, reader = env
    son = SoN.over(reader).fetch()
    series = son.evolution(lambda g: len(g), UniformSample(10))
    assert len(series) == 10
    assert series.times()[0] == son.start and series.times()[-1] == son.end - 1
    one = son.evolution(lambda g: len(g), UniformSample(1))
    assert one.times() == [son.start]


# ------------------------------------------------------------------ SoN

def test_fetch_universe_covers_span(env):
    events, reader = env
    son = SoN.over(reader).fetch()
    alive = set(oracle.replay(events, son.start))
    touched = set()
    for e in events:
        if son.start < e.time < son.end:
            touched.update(e.endpoints())
    assert son.ids() == sorted(alive | touched)


def test_select_identity_and_composition(env):
    _, reader = env
    son = SoN.over(reader).fetch()
    assert select(son, lambda m: True).members == son.members
    evens = son.select(lambda m: m.id % 2 == 0)
    assert [i for i in son.ids() if i % 2 == 0] == evens.ids()
    small_evens = son.select(lambda m: m.id % 2 == 0).select(lambda m: m.id < 40)
    both = son.select(lambda m: m.id % 2 == 0 and m.id < 40)
    assert small_evens.members == both.members


def test_select_pushdown_equals_post_filter(env):
    _, reader = env
    pred = lambda m: m.id % 3 == 1
    pushed = SoN.over(reader).select(pred).fetch()
    filtered = SoN.over(reader).fetch().select(pred)
    assert pushed.members == filtered.members


def test_timeslice_matches_point_reads(env):
    events, reader = env
    son = SoN.over(reader).fetch()
    rng = random.Random(192)
    for _ in range(50):
        t = rng.randint(son.start, son.end - 1)
        sliced = son.timeslice(t)
        assert sliced.start == t and sliced.end == t + 1
        for m in rng.sample(sliced.members, min(4, len(sliced.members))):
            assert m.initial == reader.get_node_at(m.id, t)
        # members absent at t are dropped
        assert set(sliced.ids()) == set(reader.snapshot_state(t)) & set(son.ids())


def test_timeslice_start_list_interval(env):
    _, reader = env
    son = SoN.over(reader).fetch()
    at_start = son.timeslice(son.start)
    for m in at_start.members:
        assert m.initial == son[m.id].initial
    sliced = son.timeslice([son.start, son.start + 10])
    assert isinstance(sliced, list) and len(sliced) == 2
    mid = (son.start + son.end) // 2
    window = son.timeslice((mid, mid + 20))
    assert window.start == mid and window.end == mid + 20
    assert window.to_graph(mid) == son.to_graph(mid)
    with pytest.raises(OutOfSpan):
        son.timeslice(son.end)
    with pytest.raises(OutOfSpan):
        timeslice(son, son.start - 1)


def test_to_graph_cases(env):
    events, reader = env
    son = SoN.over(reader).fetch()
    t = (son.start + son.end) // 2
    # whole set == stored snapshot
    assert to_graph(son, t) == reader.get_snapshot(t)
    # one member: a single-node graph without edges
    alive = sorted(reader.snapshot_state(t))
    one = SoN.over(reader, ids=[alive[0]]).fetch()
    g1 = one.to_graph(t)
    assert g1.ids() == [alive[0]] and g1.edge_count() == 0
    # subset: edges to non-members dropped
    some = alive[: len(alive) // 2]
    got = SoN.over(reader, ids=some).fetch().to_graph(t)
    want = oracle.induced(oracle.replay(events, t), set(some))
    assert {n: node_to_plain(s) for n, s in got.items()} == want


def test_node_compute_hand_checked():
    events = [
        Event(1, EventKind.ADD_NODE, 1),
        Event(2, EventKind.ADD_NODE, 2),
        Event(3, EventKind.ADD_NODE, 3),
        Event(4, EventKind.ADD_EDGE, 1, peer=2, direction="out"),
        Event(5, EventKind.ADD_EDGE, 1, peer=3, direction="out"),
    ]
    store = GraphStore(MemoryBackend())
    build_index(store, events, IndexConfig(ts_events=20, l=3, psize=4))
    son = SoN.over(IndexReader(store)).fetch()
    sliced = son.timeslice(5)
    assert node_compute(sliced, lambda n: n.degree()) == {1: 2, 2: 1, 3: 1}
    assert sliced.node_compute(lambda n: 7) == {1: 7, 2: 7, 3: 7}
    assert len(sliced.node_compute(lambda n: n.id)) == len(sliced)


def test_node_compute_wraps_member_failures(env):
    _, reader = env
    son = SoN.over(reader).fetch().timeslice(SoN.over(reader).fetch().start)
    with pytest.raises(MemberComputeError) as info:
        son.node_compute(lambda n: 1 / 0)
    assert info.value.member_id in son.ids()


# ----------------------------------------------- temporal + incremental

def label_flag(node) -> int:
    return 1 if has_label(node) else 0


def label_flag_delta(before, aux, value, e):
    if e.kind is EventKind.SET_NODE_ATTR and e.key == "label":
        return 1, aux
    if e.kind is EventKind.DEL_NODE_ATTR and e.key == "label":
        return 0, aux
    return value, aux


def sub_label_count(gs: GraphS) -> int:
    return sum(1 for _, node in gs.items() if has_label(node))


def sub_label_count_delta(before: GraphS, aux, value, e):
    if e.kind is EventKind.SET_NODE_ATTR and e.key == "label":
        return value + (0 if has_label(before.node(e.subject)) else 1), aux
    if e.kind is EventKind.DEL_NODE_ATTR and e.key == "label":
        return value - (1 if has_label(before.node(e.subject)) else 0), aux
    if e.kind is EventKind.DELETE_NODE:
        return value - (1 if has_label(before.node(e.subject)) else 0), aux
    return value, aux


def test_temporal_series_matches_bruteforce(env):
    events, reader = env
    son = SoN.over(reader).fetch()
    series = son.node_compute_temporal(label_flag)
    rng = random.Random(193)
    for nid in rng.sample(son.ids(), 10):
        m = son[nid]
        for t, v in series[nid]:
            state = oracle.replay(events, t).get(nid)
            assert state is not None
            assert v == (1 if "label" in state["attrs"] else 0)
        # sampled times are exactly the change points with a live state
        want = [t for t in m.change_times() if m.at(t) is not None]
        assert series[nid].times() == want


def test_temporal_single_version_member():
    m = NodeT(4, 2, 10, StaticNode(4), ())
    son = SoN(None, 2, 10, members=(m,))
    out = son.node_compute_temporal(lambda n: n.degree())
    assert out == {4: TimeSeries(((2, 0),))}


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_delta_equals_temporal_on_node_members(seed):
    events = random_log(seed, 150, ensure_all_kinds=True)
    rng = random.Random(seed + 1)
    hi = events[-1].time
    start = rng.randint(0, hi // 2)
    end = hi + 1
    members = tuple(
        m
        for nid in rng.sample(log_ids(events), 8)
        for m in [node_t_from_log(events, nid, start, end)]
        if m.exists()
    )
    son = SoN(None, start, end, members=members)
    assert son.node_compute_delta(label_flag, label_flag_delta) == son.node_compute_temporal(
        label_flag
    )


def test_delta_equals_temporal_on_subgraphs(env):
    events, reader = env
    centers = sorted(reader.snapshot_state(100))[:15]
    sots = SoTS.over(reader, k=1, start=100, centers=centers).fetch()
    full = sots.node_compute_temporal(sub_label_count)
    inc = sots.node_compute_delta(sub_label_count, sub_label_count_delta)
    assert full == inc
    assert sum(len(s) for s in full.values()) > 30  # the comparison saw real data


def test_delta_hint_delegates(env):
    _, reader = env
    centers = sorted(reader.snapshot_state(100))[:5]
    sots = SoTS.over(reader, k=1, start=100, centers=centers).fetch()
    hinted = node_compute_temporal(sots, sub_label_count, f_delta=sub_label_count_delta)
    assert hinted == node_compute_delta(sots, sub_label_count, sub_label_count_delta)


def attr_round_log(n_members, n_rounds):
    events = [Event(i, EventKind.ADD_NODE, i) for i in range(1, n_members + 1)]
    t = n_members
    for r in range(n_rounds):
        for nid in range(1, n_members + 1):
            t += 1
            events.append(
                Event(t, EventKind.SET_NODE_ATTR, nid, key="label", value=str(r))
            )
    return events, n_members, t + 1


def test_delta_evaluation_counts():
    events, start, end = attr_round_log(25, 6)
    store = GraphStore(MemoryBackend())
    build_index(store, events, IndexConfig(ts_events=60, l=5, psize=6))
    reader = IndexReader(store)
    centers = list(range(1, 26))
    sots = SoTS.over(reader, k=0, start=start, end=end, centers=centers).fetch()
    calls = {"f": 0, "fd": 0, "full": 0}

    def f(gs):
        calls["f"] += 1
        return sub_label_count(gs)

    def fd(before, aux, value, e):
        calls["fd"] += 1
        return sub_label_count_delta(before, aux, value, e)

    def f_full(gs):
        calls["full"] += 1
        return sub_label_count(gs)

    inc = sots.node_compute_delta(f, fd)
    assert calls["f"] == 25          # once per member
    assert calls["fd"] == 25 * 6     # once per event
    full = sots.node_compute_temporal(f_full)
    assert calls["full"] == 25 * 7   # every version of every member
    assert inc == full


def test_delta_zero_events():
    m = SubgraphT(1, 0, 5, 9, GraphS({1: StaticNode(1)}), (), frozenset([1]))
    out = SoTS(None, 5, 9, members=(m,)).node_compute_delta(
        lambda g: len(g), lambda b, a, v, e: (v, a)
    )
    assert out == {1: TimeSeries(((5, 1),))}


def test_check_every_catches_inconsistent_pair(env):
    _, reader = env
    centers = sorted(reader.snapshot_state(100))[:6]
    sots = SoTS.over(reader, k=1, start=100, centers=centers).fetch()
    bad = lambda before, aux, value, e: (value, aux)  # never updates
    with pytest.raises(MemberComputeError, match="drifted"):
        sots.node_compute_delta(sub_label_count, bad, check_every=1)


# --------------------------------------------------- compare + evolution

def test_compare_equal_operands_is_zero(env):
    _, reader = env
    son = SoN.over(reader).fetch()
    t = (son.start + son.end) // 2
    diffs = compare(son, son, lambda n: n.degree(), at=t)
    assert diffs and set(diffs.values()) == {0}


def test_compare_hand_checked_degrees():
    events = [
        Event(1, EventKind.ADD_NODE, 1),
        Event(2, EventKind.ADD_NODE, 2),
        Event(3, EventKind.ADD_EDGE, 1, peer=2, direction="out"),
        Event(4, EventKind.DELETE_EDGE, 1, peer=2, direction="out"),
    ]
    store = GraphStore(MemoryBackend())
    build_index(store, events, IndexConfig(ts_events=20, l=3, psize=4))
    son = SoN.over(IndexReader(store)).fetch()
    diffs = compare_times(son, lambda n: n.degree(), 3, 4)
    assert diffs == {1: -1, 2: -1}
    slices = compare(son.timeslice(4), son.timeslice(3), lambda n: n.degree())
    assert slices == diffs


def test_compare_rejects_mismatch_and_nonscalar(env):
    _, reader = env
    son = SoN.over(reader).fetch()
    ids = son.ids()
    small = SoN.over(reader, ids=ids[:4]).fetch()
    with pytest.raises(UnalignedOperands):
        compare(son, small, lambda n: 0)
    with pytest.raises(MemberComputeError):
        compare(small, small, lambda n: "text")


def test_evolution_constant_and_density(env):
    events, reader = env
    son = SoN.over(reader).fetch()
    flat = evolution(son, lambda g: 3.5, UniformSample(5))
    assert flat.values() == [3.5] * 5
    dens = son.evolution(lambda g: g.density(), UniformSample(10))
    for t, v in dens:
        assert v == pytest.approx(oracle.density(oracle.replay(events, t)))
    single = son.evolution(lambda g: len(g), [son.start + 7])
    assert len(single) == 1


# -------------------------------------------------- fetch and execution

def test_fetch_workers_identical(env):
    _, reader = env
    base = SoN.over(reader).fetch()
    for w in (2, 4):
        assert SoN.over(reader, workers=w).fetch().members == base.members
    sots1 = SoTS.over(reader, k=1, centers=base.ids()[:20]).fetch()
    sots4 = fetch(SoTS.over(reader, k=1, centers=base.ids()[:20], workers=4))
    assert sots1.members == sots4.members


def test_member_order_never_matters(env):
    _, reader = env
    ids = SoN.over(reader).fetch().ids()[:30]
    shuffled = ids[:]
    random.Random(7).shuffle(shuffled)
    a = SoN.over(reader, ids=ids).fetch()
    b = SoN.over(reader, ids=shuffled).fetch()
    assert a.members == b.members
    assert a.node_compute_temporal(label_flag) == b.node_compute_temporal(label_flag)


def test_subgraph_events_only_touch_members(env):
    _, reader = env
    sots = SoTS.over(reader, k=1, start=50, centers=sorted(reader.snapshot_state(50))[:8]).fetch()
    for sub in sots:
        for e in sub.events:
            ends = e.endpoints()
            if e.kind in EDGE_KINDS:
                assert all(n in sub.members for n in ends)
            else:
                assert ends[0] in sub.members


# ---------------------------------------------------------------- export

def test_csv_exports():
    buf = io.StringIO()
    series_to_csv({2: TimeSeries(((1, 0.5), (3, 1))), 1: TimeSeries(((4, 2),))}, buf)
    assert buf.getvalue() == "id,time,value\r\n1,4,2\r\n2,1,0.5\r\n2,3,1\r\n"
    buf = io.StringIO()
    points_to_csv({3: "x", 1: 2}, buf)
    assert buf.getvalue() == "id,value\r\n1,2\r\n3,x\r\n"
