"""Partition placement and what it does to neighborhood queries.

Every timespan's nodes are collapsed into one weighted graph and split
into balanced partitions.  The locality method grows partitions around
seeds and refines the cut; the random method just deals nodes out.  With
1-hop replication each partition also carries an auxiliary copy of its
members' frontier, so a neighborhood query touches the home partition
plus its auxiliary and nothing else.
"""

from dataclasses import replace

from chronograph import (
    Event,
    EventKind,
    GraphStore,
    IndexConfig,
    IndexReader,
    MemoryBackend,
    SpanHistory,
    build_index,
    collapse,
    edge_cut,
    partition_locality,
    partition_random,
)


def community_log(groups: int, size: int) -> list[Event]:
    """Dense cliques joined in a ring by single bridge edges."""
    E, K = Event, EventKind
    log = []
    members = lambda g: range(g * size + 1, (g + 1) * size + 1)
    for g in range(groups):
        for nid in members(g):
            log.append(E(time=1, kind=K.ADD_NODE, subject=nid))
    t = 1
    for g in range(groups):
        ids = list(members(g))
        for i, u in enumerate(ids):
            for v in ids[i + 1:]:
                t += 1
                log.append(E(time=t, kind=K.ADD_EDGE, subject=u, peer=v, direction="out"))
    for g in range(groups):
        t += 1
        u = list(members(g))[-1]
        v = list(members((g + 1) % groups))[0]
        log.append(E(time=t, kind=K.ADD_EDGE, subject=u, peer=v, direction="out"))
    return log


def fetch_cost(cfg: IndexConfig, log: list[Event], probes: list[int]) -> list[int]:
    store = GraphStore(MemoryBackend())
    build_index(store, log, cfg)
    t = log[-1].time
    counts = []
    for nid in probes:
        reader = IndexReader(store)
        reader.get_k_hop_expand(nid, t, 1)
        counts.append(reader.stats.partition_fetches)
    return counts


def main() -> None:
    groups, size = 4, 8
    log = community_log(groups, size)
    history = SpanHistory(start_state={}, events=tuple(log), span=(1, log[-1].time + 1))
    cg = collapse(history)
    print(f"collapsed span: {len(cg.node_weights)} nodes, "
          f"{len(cg.edge_weights)} weighted edges")

    k = groups
    pm_loc = partition_locality(cg, k)
    pm_rand = partition_random(cg.node_weights, k)
    for pm in (pm_loc, pm_rand):
        sizes = sorted(len(m) for m in pm.members().values())
        print(f"{pm.method:>8}: sizes={sizes} edge_cut={edge_cut(cg, pm.assign)}")

    cfg = IndexConfig(ts_events=len(log) + 1, ns=1, l=64, psize=size, k=2)
    probes = [g * size + size // 2 for g in range(groups)]
    grouped = fetch_cost(cfg, log, probes)
    scattered = fetch_cost(
        replace(cfg, partitioning="random", replicate_1hop=False), log, probes)
    print(f"\n1-hop fetches, one probe per community:")
    print(f"  locality + replication: {grouped}")
    print(f"  random, no replication: {scattered}")


if __name__ == "__main__":
    main()
