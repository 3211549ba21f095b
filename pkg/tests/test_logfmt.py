"""Log text format: canonical lines, strict parsing, bit-exact round trips."""

import random

import pytest

from chronograph.deltas import Event, EventKind
from chronograph.errors import ParseError, UnsortedLog
from chronograph.logfmt import (
    check_sorted,
    format_event,
    parse_line,
    parse_log,
    read_log,
    write_log,
)

from genlog import random_log


def test_format_per_kind():
    assert format_event(Event(1, EventKind.ADD_NODE, 7)) == "1\tADD_NODE\t7"
    assert format_event(Event(2, EventKind.DELETE_NODE, 7)) == "2\tDELETE_NODE\t7"
    assert (
        format_event(Event(3, EventKind.ADD_EDGE, 1, peer=2, direction="out"))
        == "3\tADD_EDGE\t1\t2\tout"
    )
    assert (
        format_event(Event(4, EventKind.DELETE_EDGE, 2, peer=1, direction="in"))
        == "4\tDELETE_EDGE\t2\t1\tin"
    )
    assert (
        format_event(Event(5, EventKind.SET_NODE_ATTR, 1, key="color", value="red"))
        == "5\tSET_NODE_ATTR\t1\tcolor\tred"
    )
    assert (
        format_event(Event(6, EventKind.DEL_NODE_ATTR, 1, key="color"))
        == "6\tDEL_NODE_ATTR\t1\tcolor"
    )
    assert (
        format_event(
            Event(7, EventKind.SET_EDGE_ATTR, 1, peer=2, direction="out", key="w", value="3")
        )
        == "7\tSET_EDGE_ATTR\t1\t2\tout\tw\t3"
    )
    assert (
        format_event(Event(8, EventKind.DEL_EDGE_ATTR, 1, peer=2, direction="out", key="w"))
        == "8\tDEL_EDGE_ATTR\t1\t2\tout\tw"
    )


def test_parse_inverts_format():
    events = random_log(seed=11, n_events=400, ensure_all_kinds=True)
    for e in events:
        assert parse_line(format_event(e)) == e


def test_value_may_contain_spaces():
    e = Event(1, EventKind.SET_NODE_ATTR, 5, key="name", value="a b c")
    assert parse_line(format_event(e)) == e


def test_tab_in_value_rejected():
    e = Event(1, EventKind.SET_NODE_ATTR, 5, key="k", value="a\tb")
    with pytest.raises(ValueError):
        format_event(e)


@pytest.mark.parametrize(
    "line",
    [
        "",  # empty
        "1\tADD_NODE\t7 ",  # trailing whitespace
        "1\tADD_NODE",  # too few fields
        "1\tADD_NODE\t7\t8",  # too many fields
        "1\tADD_EDGE\t1\t2",  # missing direction
        "1\tADD_EDGE\t1\t2\tout\tx",  # extra field
        "x\tADD_NODE\t7",  # bad time
        "1\tRENAME_NODE\t7",  # unknown kind
        "1\tADD_NODE\tseven",  # bad subject
        "1\tADD_EDGE\t1\ttwo\tout",  # bad peer
        "1\tADD_EDGE\t1\t2\tsideways",  # bad direction
        "1\tADD_EDGE\t1\t1\tout",  # self loop fails validate()
        "1\tSET_NODE_ATTR\t1\tk",  # missing value
    ],
)
def test_parse_rejects(line):
    with pytest.raises(ParseError):
        parse_line(line)


def test_parse_error_carries_line_number():
    lines = ["1\tADD_NODE\t1\n", "2\tBROKEN\t1\n"]
    with pytest.raises(ParseError) as err:
        list(parse_log(lines))
    assert err.value.line_no == 2


def test_file_round_trip_bit_exact(tmp_path):
    events = random_log(seed=23, n_events=600, ensure_all_kinds=True)
    p1 = tmp_path / "a.log"
    p2 = tmp_path / "b.log"
    assert write_log(str(p1), events) == len(events)
    back = read_log(str(p1))
    assert back == events
    write_log(str(p2), back)
    assert p1.read_bytes() == p2.read_bytes()
    assert p1.read_bytes().endswith(b"\n")


def test_read_log_requires_sorted(tmp_path):
    p = tmp_path / "bad.log"
    p.write_text("5\tADD_NODE\t1\n3\tADD_NODE\t2\n")
    with pytest.raises(UnsortedLog):
        read_log(str(p))
    assert [e.subject for e in read_log(str(p), require_sorted=False)] == [1, 2]


def test_check_sorted_allows_ties():
    events = [Event(4, EventKind.ADD_NODE, 1), Event(4, EventKind.ADD_NODE, 2)]
    check_sorted(events)


def test_random_logs_round_trip(tmp_path):
    rng = random.Random(6)
    for trial in range(5):
        events = random_log(seed=rng.randrange(1 << 30), n_events=150)
        p = tmp_path / f"t{trial}.log"
        write_log(str(p), events)
        assert read_log(str(p)) == events
