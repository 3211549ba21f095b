"""Build an index from an event log and query it.

The store segments history into fixed-event-count timespans, drops a
checkpoint snapshot every few events, arranges the checkpoints of each
timespan into an intersection tree, and keeps the events between
checkpoints as sorted gap lists.  Queries then touch a handful of small
records instead of replaying the log.
"""

from chronograph import (
    Event,
    EventKind,
    GraphStore,
    IndexConfig,
    IndexReader,
    MemoryBackend,
    build_index,
    describe,
)


def story_log() -> list[Event]:
    """A little collaboration graph that grows, churns and shrinks."""
    E, K = Event, EventKind
    log = []
    t = 0
    for nid in (1, 2, 3, 4, 5):
        t += 1
        log.append(E(time=t, kind=K.ADD_NODE, subject=nid))
        log.append(E(time=t, kind=K.SET_NODE_ATTR, subject=nid, key="team", value="core" if nid <= 3 else "web"))
    for u, v in ((1, 2), (2, 3), (1, 3), (4, 5), (3, 4)):
        t += 1
        log.append(E(time=t, kind=K.ADD_EDGE, subject=u, peer=v, direction="out"))
    t += 1
    log.append(E(time=t, kind=K.SET_EDGE_ATTR, subject=3, peer=4, direction="out", key="weight", value="2"))
    t += 1
    log.append(E(time=t, kind=K.SET_NODE_ATTR, subject=2, key="team", value="web"))
    t += 1
    log.append(E(time=t, kind=K.DELETE_EDGE, subject=3, peer=4, direction="out"))
    t += 1
    log.append(E(time=t, kind=K.DELETE_EDGE, subject=4, peer=5, direction="out"))
    t += 1
    log.append(E(time=t, kind=K.DELETE_NODE, subject=5))
    return log


def main() -> None:
    log = story_log()
    store = GraphStore(MemoryBackend())
    stats = build_index(store, log, IndexConfig(ts_events=12, ns=1, l=4, psize=3, k=2))
    print(f"built: {stats.events} events, {stats.spans} spans, "
          f"{stats.records} records, {stats.chain_nodes} chained nodes")
    st = describe(store)
    print(f"index covers times [{st.start}, {st.end}), {st.nodes} nodes ever\n")

    reader = IndexReader(store)
    mid = log[len(log) // 2].time
    end = log[-1].time

    for t in (mid, end):
        g = reader.get_snapshot(t)
        teams = sorted(f"{nid}:{g.node(nid).attr_map().get('team')}" for nid in g.ids())
        print(f"snapshot t={t}: {len(g)} nodes  {teams}")

    h = reader.get_node_history(4, 0, end)
    print(f"\nnode 4 history: initial={'alive' if h.initial else 'absent'}, "
          f"{len(h.events)} events")
    for e in h.events:
        where = f" edge {e.subject}->{e.peer}" if e.peer is not None else ""
        print(f"  t={e.time} {e.kind.value}{where}")

    t_edges = log[15].time
    ball = reader.get_k_hop(1, t_edges, 2)
    print(f"\n2 hops around node 1 at t={t_edges}: nodes {ball.ids()}")

    s = reader.stats
    print(f"\nwork done: {s.record_reads} record reads "
          f"({s.tree_reads} tree, {s.eventlist_reads} gap, {s.chain_reads} chain), "
          f"{s.events_applied} events applied, {s.partition_fetches} partition fetches")


if __name__ == "__main__":
    main()
