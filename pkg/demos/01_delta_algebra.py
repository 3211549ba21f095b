"""Change sets and their algebra.

A delta is a keyed set of node states: each entry is either the full
description of a node (attributes plus mirrored edges) or a tombstone
marking a deletion.  Summing, diffing, intersecting and unioning deltas
is what the whole index is built from, so this demo starts there.
"""

from chronograph import (
    TOMBSTONE,
    Delta,
    Event,
    EventKind,
    StaticNode,
    apply_events,
    delta_diff,
    delta_intersect,
    delta_sum,
    delta_union,
)


def show(label: str, d: Delta) -> None:
    cells = []
    for nid, entry in d.items():
        if entry is TOMBSTONE:
            cells.append(f"{nid}:gone")
        else:
            cells.append(f"{nid}:{dict(entry.attrs) or '{}'}")
    print(f"{label:<14} {{{', '.join(cells)}}}")


def main() -> None:
    a = Delta({
        1: StaticNode.make(1, attrs={"color": "red"}),
        2: StaticNode.make(2, attrs={"color": "blue"}),
        3: TOMBSTONE,
    })
    b = Delta({
        2: StaticNode.make(2, attrs={"color": "green"}),
        4: StaticNode.make(4),
    })
    show("a", a)
    show("b", b)

    # sum is ordered: the right side wins on colliding ids
    show("a + b", delta_sum(a, b))
    show("b + a", delta_sum(b, a))

    # diff removes entries that agree; intersection keeps them
    show("a - a", delta_diff(a, a))
    show("a & (a + b)", delta_intersect(a, delta_sum(a, b)))
    show("a | b", delta_union(a, b))

    print()
    print("replaying an event log into a delta:")
    log = [
        Event(time=1, kind=EventKind.ADD_NODE, subject=7),
        Event(time=2, kind=EventKind.SET_NODE_ATTR, subject=7, key="label", value="hub"),
        Event(time=3, kind=EventKind.ADD_NODE, subject=8),
        Event(time=4, kind=EventKind.ADD_EDGE, subject=7, peer=8, direction="out"),
        Event(time=5, kind=EventKind.DELETE_EDGE, subject=7, peer=8, direction="out"),
        Event(time=6, kind=EventKind.DELETE_NODE, subject=8),
    ]
    state = apply_events(None, log[:4])
    show("after t=4", state)
    node = state.get(7)
    print(f"node 7 edges while 8 is alive: {[e.neighbor for e in node.edges]}")
    state = apply_events(state, log[4:])
    show("after t=6", state)
    node = state.get(7)
    print(f"node 7 edges after the neighbor died: {[e.neighbor for e in node.edges]}")


if __name__ == "__main__":
    main()
