"""In-memory materialized snapshots.

A GraphS is the answer shape of snapshot and neighborhood queries: a plain
map of live nodes, each carrying its full attribute and edge lists.  Edges
are mirrored, so every helper here works off a single node map without a
separate edge table.  Structural measures (density, clustering) treat the
graph as undirected and simple: a pair of nodes counts once no matter how
many directed records connect it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

from .deltas import Delta, Entry, NodeId, StaticNode


@dataclass(frozen=True)
class GraphS:
    """Materialized snapshot: node id -> full static node, tombstones dropped."""

    nodes: dict[NodeId, StaticNode] = field(default_factory=dict)

    @staticmethod
    def from_entries(entries: Mapping[NodeId, Entry]) -> "GraphS":
        return GraphS({n: e for n, e in entries.items() if isinstance(e, StaticNode)})

    @staticmethod
    def empty() -> "GraphS":
        return GraphS({})

    def __len__(self) -> int:
        return len(self.nodes)

    def __bool__(self) -> bool:
        return bool(self.nodes)

    def __contains__(self, nid: NodeId) -> bool:
        return nid in self.nodes

    def __iter__(self) -> Iterator[NodeId]:
        return iter(sorted(self.nodes))

    def ids(self) -> list[NodeId]:
        return sorted(self.nodes)

    def node(self, nid: NodeId) -> StaticNode:
        return self.nodes[nid]

    def items(self) -> list[tuple[NodeId, StaticNode]]:
        return sorted(self.nodes.items())

    def to_delta(self) -> Delta:
        return Delta(dict(self.nodes), kind="snapshot")

    # -- structure --------------------------------------------------------

    def neighbors(self, nid: NodeId) -> set[NodeId]:
        """Adjacent ids, edge direction ignored."""
        return self.nodes[nid].neighbor_ids()

    def undirected_pairs(self) -> set[tuple[NodeId, NodeId]]:
        pairs = set()
        for nid, node in self.nodes.items():
            for e in node.edges:
                pairs.add((min(nid, e.neighbor), max(nid, e.neighbor)))
        return pairs

    def edge_count(self) -> int:
        return len(self.undirected_pairs())

    def khop_ball(self, nid: NodeId, k: int) -> set[NodeId]:
        """Ids within k undirected hops of nid; empty if nid is absent."""
        if k < 0:
            raise ValueError("hop count must be >= 0")
        if nid not in self.nodes:
            return set()
        ball = {nid}
        frontier = {nid}
        for _ in range(k):
            nxt = set()
            for u in frontier:
                nxt |= self.nodes[u].neighbor_ids() - ball
            if not nxt:
                break
            ball |= nxt
            frontier = nxt
        return ball

    def induced(self, ids: Iterable[NodeId]) -> "GraphS":
        """Subgraph on ids: edges to non-members are dropped."""
        keep = set(ids)
        out = {}
        for nid in keep:
            node = self.nodes.get(nid)
            if node is None:
                continue
            edges = tuple(e for e in node.edges if e.neighbor in keep)
            out[nid] = StaticNode(nid, edges, node.attrs) if edges != node.edges else node
        return GraphS(out)

    # -- measures ---------------------------------------------------------

    def density(self) -> float:
        """Undirected density: realized pairs over possible pairs."""
        n = len(self.nodes)
        if n < 2:
            return 0.0
        return self.edge_count() / (n * (n - 1) / 2)

    def clustering(self, nid: NodeId) -> float:
        """Local clustering coefficient of nid over the undirected view."""
        nbrs = sorted(self.nodes[nid].neighbor_ids() - {nid})
        deg = len(nbrs)
        if deg < 2:
            return 0.0
        links = 0
        for i, u in enumerate(nbrs):
            # membership check on u's own edge list keeps this local
            reach = self.nodes[u].neighbor_ids() if u in self.nodes else set()
            for v in nbrs[i + 1 :]:
                if v in reach:
                    links += 1
        return 2.0 * links / (deg * (deg - 1))
