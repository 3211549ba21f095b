"""Closed-form access-cost estimates for competing history layouts.

For a query primitive against a storage layout, the estimator returns two
metrics: the total size of the deltas that must be read, and how many
separate deltas that is.  A third function gives the layout's storage
footprint.  These are planning heuristics evaluated symbolically from a
handful of workload parameters; nothing here touches a store.

Parameters (averages over the history):
    G  total number of events
    S  snapshot size (node + edge descriptions at one time)
    E  events per stored eventlist
    h  height of the hierarchy of snapshot deltas
    V  number of changes to one node over the queried range
    R  neighbor count of a node
    p  micro-partitions per snapshot
    N  number of nodes
    C  size of one node's full history
"""

from __future__ import annotations

import enum
from dataclasses import dataclass


class Layout(enum.Enum):
    """How the history is stored."""

    EVENT_LOG = "event_log"  # one flat log, replay everything
    SNAPSHOT_COPY = "snapshot_copy"  # full snapshot at every change
    COPY_PLUS_LOG = "copy_plus_log"  # periodic snapshots plus event gaps
    PER_NODE_LOG = "per_node_log"  # one change list per node
    DELTA_TREE = "delta_tree"  # hierarchical deltas, unpartitioned
    PARTITIONED_DELTA_TREE = "partitioned_delta_tree"  # this package


class Primitive(enum.Enum):
    SNAPSHOT = "snapshot"
    STATIC_NODE = "static_node"
    NODE_VERSIONS = "node_versions"
    ONE_HOP = "one_hop"
    ONE_HOP_VERSIONS = "one_hop_versions"


@dataclass(frozen=True)
class CostParams:
    G: float = 0.0
    S: float = 0.0
    E: float = 1.0
    h: float = 1.0
    V: float = 0.0
    R: float = 0.0
    p: float = 1.0
    N: float = 0.0
    C: float = 0.0


# (layout, primitive) -> (sum of delta sizes, delta count)
_COST: dict[tuple[Layout, Primitive], object] = {}


def _fill(layout: Layout, cells: dict[Primitive, object]) -> None:
    for prim, fn in cells.items():
        _COST[(layout, prim)] = fn


_fill(
    Layout.EVENT_LOG,
    {prim: (lambda c: (c.G, c.G / c.E)) for prim in Primitive},
)

_fill(
    Layout.SNAPSHOT_COPY,
    {
        Primitive.SNAPSHOT: lambda c: (c.S, 1.0),
        Primitive.STATIC_NODE: lambda c: (c.S, 1.0),
        Primitive.NODE_VERSIONS: lambda c: (c.S * c.G, c.G),
        Primitive.ONE_HOP: lambda c: (c.S, 1.0),
        Primitive.ONE_HOP_VERSIONS: lambda c: (c.S * c.G, c.G),
    },
)

_fill(
    Layout.COPY_PLUS_LOG,
    {
        Primitive.SNAPSHOT: lambda c: (c.S + c.E, 2.0),
        Primitive.STATIC_NODE: lambda c: (c.S + c.E, 2.0),
        Primitive.NODE_VERSIONS: lambda c: (c.G, c.G / c.E),
        Primitive.ONE_HOP: lambda c: (c.S + c.E, 2.0),
        Primitive.ONE_HOP_VERSIONS: lambda c: (c.G, c.G / c.E),
    },
)

_fill(
    Layout.PER_NODE_LOG,
    {
        Primitive.SNAPSHOT: lambda c: (2.0 * c.G, c.N),
        Primitive.STATIC_NODE: lambda c: (c.C, 1.0),
        Primitive.NODE_VERSIONS: lambda c: (c.C, 1.0),
        Primitive.ONE_HOP: lambda c: (c.R * c.V, c.R),
        Primitive.ONE_HOP_VERSIONS: lambda c: (c.R * c.V, c.R),
    },
)

_fill(
    Layout.DELTA_TREE,
    {
        Primitive.SNAPSHOT: lambda c: (c.h * c.S + c.E, 2.0 * c.h),
        Primitive.STATIC_NODE: lambda c: (c.h * c.S + c.E, 2.0 * c.h),
        Primitive.NODE_VERSIONS: lambda c: (c.G, c.G / c.E),
        Primitive.ONE_HOP: lambda c: (c.h * (c.S + c.E), 2.0 * c.h),
        Primitive.ONE_HOP_VERSIONS: lambda c: (c.G, c.G / c.E),
    },
)

_fill(
    Layout.PARTITIONED_DELTA_TREE,
    {
        Primitive.SNAPSHOT: lambda c: (c.h * c.S + c.E, 2.0 * c.h),
        Primitive.STATIC_NODE: lambda c: (c.h * c.S / c.p + c.E / c.p, 2.0 * c.h),
        Primitive.NODE_VERSIONS: lambda c: (c.V * (1.0 + c.S / c.p), c.V + 1.0),
        Primitive.ONE_HOP: lambda c: (c.h * (c.S + c.E) / c.p, 2.0 * c.h),
        Primitive.ONE_HOP_VERSIONS: lambda c: (c.V * (1.0 + c.S / c.p), c.V + 1.0),
    },
)

_STORAGE: dict[Layout, object] = {
    Layout.EVENT_LOG: lambda c: c.G,
    Layout.SNAPSHOT_COPY: lambda c: c.G * c.G,
    Layout.COPY_PLUS_LOG: lambda c: c.G * c.G / c.E,
    Layout.PER_NODE_LOG: lambda c: 2.0 * c.G,
    Layout.DELTA_TREE: lambda c: c.G * (c.h + 1.0),
    Layout.PARTITIONED_DELTA_TREE: lambda c: c.G * (2.0 * c.h + 3.0),
}


def estimate_cost(
    layout: Layout, primitive: Primitive, params: CostParams
) -> tuple[float, float]:
    """(total delta size read, number of deltas read) for one primitive."""
    fn = _COST[(layout, primitive)]
    return fn(params)  # type: ignore[operator]


def estimate_storage(layout: Layout, params: CostParams) -> float:
    """Storage footprint of the layout in node/edge description units."""
    return _STORAGE[layout](params)  # type: ignore[operator]
