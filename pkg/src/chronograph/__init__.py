"""Compact storage and analytics for the full change history of large graphs.

The library keeps every version of an evolving graph reachable: event logs
are folded into per-timespan delta trees over micro-partitioned storage,
and a query layer reconstructs snapshots, node histories, and evolving
neighborhoods from the minimal set of stored records.  A separate operator
algebra runs temporal analytics over fetched histories, incrementally
where the caller can supply an update rule.
"""

from .analytics import (
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
from .builder import (
    BuildStats,
    IndexConfig,
    IndexStats,
    build_index,
    describe,
    format_config,
    parse_config,
    update_index,
)
from .costs import CostParams, Layout, Primitive, estimate_cost, estimate_storage
from .deltas import (
    TOMBSTONE,
    Delta,
    EdgeRecord,
    Event,
    EventKind,
    EventList,
    StaticNode,
    apply_events,
    delta_diff,
    delta_intersect,
    delta_sum,
    delta_union,
)
from .errors import (
    BackendIO,
    ChronographError,
    DataError,
    EmptySeries,
    InconsistentDelta,
    InfeasibleBalance,
    InvalidEvent,
    NotFound,
    OutOfOrderBatch,
    OutOfSpan,
    ParseError,
    RefuseOverwrite,
    UnalignedOperands,
    UnsortedLog,
)
from .graphs import GraphS
from .logfmt import format_event, parse_line, parse_log, read_log, write_log
from .partition import (
    CollapsedGraph,
    PartitionMap,
    SpanHistory,
    collapse,
    edge_cut,
    partition_locality,
    partition_random,
)
from .query import IndexReader, NeighborhoodHistory, NodeHistory, QueryStats
from .storage import DeltaKey, FileBackend, GraphStore, MemoryBackend

__version__ = "0.1.0"
