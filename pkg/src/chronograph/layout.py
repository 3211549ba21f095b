"""Shape arithmetic for the per-span delta tree.

Each timespan stores, per horizontal partition, a tree whose leaves are the
span's checkpoint states.  A parent holds the intersection of up to `arity`
consecutive children; the stored record for a non-root node is its
difference from the parent, and the root is stored whole.  Reconstruction
of leaf j is the running sum of records along the root-to-leaf path.

Record numbering within a (timespan, horizontal partition) pair:

    tree nodes   even dids, breadth-first from the root (root = 0)
    eventlists   odd dids, gap j (1-based) = 2j - 1

Gap j carries the events in (checkpoint[j-1], checkpoint[j]]; the first gap
reaches back to the previous span's last checkpoint.  Auxiliary replicas
reuse these dids with a high marker bit set, keeping them out of plain did
scans.
"""

from __future__ import annotations

from dataclasses import dataclass


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


@dataclass(frozen=True)
class TreeShape:
    leaves: int
    arity: int
    # bottom-up: level_sizes[0] = leaf count, last entry = 1 (the root)
    level_sizes: tuple[int, ...]

    @property
    def height(self) -> int:
        return len(self.level_sizes) - 1

    @property
    def node_count(self) -> int:
        return sum(self.level_sizes)

    def _nodes_above(self, level: int) -> int:
        return sum(self.level_sizes[level + 1 :])

    def did_of(self, level: int, pos: int) -> int:
        """Even did of the tree node at (bottom-up level, left-to-right pos)."""
        if not 0 <= level < len(self.level_sizes):
            raise ValueError(f"no level {level}")
        if not 0 <= pos < self.level_sizes[level]:
            raise ValueError(f"no node {pos} at level {level}")
        return 2 * (self._nodes_above(level) + pos)

    def node_at(self, did: int) -> tuple[int, int]:
        """Inverse of did_of."""
        if did % 2 or did < 0:
            raise ValueError(f"not a tree did: {did}")
        rank = did // 2
        for level in range(len(self.level_sizes) - 1, -1, -1):
            size = self.level_sizes[level]
            if rank < size:
                return level, rank
            rank -= size
        raise ValueError(f"did {did} out of range")

    def parent_of(self, level: int, pos: int) -> tuple[int, int] | None:
        if level == len(self.level_sizes) - 1:
            return None
        return level + 1, pos // self.arity

    def children_of(self, level: int, pos: int) -> list[tuple[int, int]]:
        if level == 0:
            return []
        below = self.level_sizes[level - 1]
        lo = pos * self.arity
        hi = min(lo + self.arity, below)
        return [(level - 1, p) for p in range(lo, hi)]

    def path_dids(self, leaf: int) -> list[int]:
        """Root-to-leaf dids whose stored records sum to the leaf state."""
        if not 0 <= leaf < self.leaves:
            raise ValueError(f"no leaf {leaf}")
        path = []
        pos = leaf
        for level in range(len(self.level_sizes)):
            path.append(self.did_of(level, pos))
            pos //= self.arity
        path.reverse()
        return path

    def all_tree_dids(self) -> list[int]:
        return [2 * rank for rank in range(self.node_count)]


def tree_shape(leaves: int, arity: int) -> TreeShape:
    if leaves < 1:
        raise ValueError("a span always has at least one checkpoint")
    if arity < 1:
        raise ValueError("arity must be >= 1")
    sizes = [leaves]
    while sizes[-1] > 1:
        # arity 1 would never converge; treat it as a straight chain
        nxt = _ceil_div(sizes[-1], arity) if arity > 1 else 1
        sizes.append(nxt)
    return TreeShape(leaves=leaves, arity=arity, level_sizes=tuple(sizes))


def gap_did(gap: int) -> int:
    """Odd did of 1-based eventlist gap."""
    if gap < 1:
        raise ValueError("gaps are numbered from 1")
    return 2 * gap - 1


def gap_of_did(did: int) -> int:
    if did < 1 or did % 2 == 0:
        raise ValueError(f"not an eventlist did: {did}")
    return (did + 1) // 2


def checkpoint_times(event_times: list[int], every: int) -> list[int]:
    """Checkpoint times for one span's events: every `every` events plus the
    last event, as sorted unique times."""
    if every < 1:
        raise ValueError("eventlist size must be >= 1")
    n = len(event_times)
    if n == 0:
        return []
    picks = {event_times[min(j * every, n) - 1] for j in range(1, _ceil_div(n, every) + 1)}
    picks.add(event_times[-1])
    return sorted(picks)


def gaps_covering(checkpts: list[int], lo_exclusive: int | None, hi: int) -> list[int]:
    """1-based gap numbers whose interval intersects (lo_exclusive, hi]."""
    out = []
    for j in range(1, len(checkpts) + 1):
        c_prev = checkpts[j - 2] if j >= 2 else None
        c_j = checkpts[j - 1]
        # gap j spans (c_prev, c_j]
        if lo_exclusive is not None and c_j <= lo_exclusive:
            continue
        if c_prev is not None and c_prev >= hi:
            break
        out.append(j)
    return out
