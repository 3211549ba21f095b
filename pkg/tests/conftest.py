"""Shared fixtures and comparison helpers for the test suite."""

from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from chronograph.deltas import StaticNode  # noqa: E402


def node_to_plain(n: StaticNode) -> dict:
    """Library node -> the oracle's plain representation."""
    return {
        "attrs": n.attr_map(),
        "edges": {(e.neighbor, e.direction): e.attr_map() for e in n.edges},
    }


def states_equal(lib_state: dict[int, StaticNode], oracle_state: dict) -> bool:
    if set(lib_state) != set(oracle_state):
        return False
    return all(node_to_plain(n) == oracle_state[nid] for nid, n in lib_state.items())


def assert_states_equal(lib_state: dict[int, StaticNode], oracle_state: dict) -> None:
    assert set(lib_state) == set(oracle_state), (
        f"node sets differ: extra={set(lib_state) - set(oracle_state)} "
        f"missing={set(oracle_state) - set(lib_state)}"
    )
    for nid, n in lib_state.items():
        assert node_to_plain(n) == oracle_state[nid], f"node {nid} differs"


@pytest.fixture
def tmp_store(tmp_path):
    d = tmp_path / "store"
    d.mkdir()
    return str(d)
