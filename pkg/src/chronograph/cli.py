"""Command-line front end: ingest, build, update, describe, query, analyze.

One command per process.  Results go to stdout (CSV by default, JSON
lines with --format jsonl); instrumentation counters go to stderr as
key=value lines so pipelines can capture them separately.  Every command
is deterministic given the store contents, the arguments, and --seed.

Exit codes: 0 success, 2 usage error, 3 data error, 4 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import shutil
import sys
from dataclasses import replace
from typing import IO

from .analytics import SoN, SoTS, UniformSample
from .builder import IndexConfig, build_index, describe, parse_config, update_index
from .deltas import Event, EventKind, StaticNode
from .errors import ChronographError, DataError, NotFound, ParseError, UnknownScript
from .graphs import GraphS
from .logfmt import format_event, read_log, write_log
from .query import IndexReader
from .storage import FileBackend, GraphStore

STAGED_NAME = "staged.log"

ANALYSES = (
    "max-clustering-coefficient",
    "community-compare",
    "network-density-evolution",
    "label-count-temporal",
    "label-count-delta",
)


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--store", help="store directory (or env STORE_DIR)")
    common.add_argument("--config", help="index config file for build")
    common.add_argument("-c", "--workers", type=int, default=1, help="worker threads")
    common.add_argument("-m", "--shards", type=int, default=1, help="shards for a new store")
    common.add_argument("--seed", type=int, help="override the partitioner seed")
    common.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    common.add_argument("--force", action="store_true", help="overwrite an existing index")

    p = argparse.ArgumentParser(prog="chronograph", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("ingest", parents=[common], help="validate a log and stage it")
    sp.add_argument("logfile")

    sp = sub.add_parser("build", parents=[common], help="build an index from a log")
    sp.add_argument("logfile", nargs="?", help="defaults to the staged log")

    sp = sub.add_parser("update", parents=[common], help="append a later batch")
    sp.add_argument("logfile")

    sub.add_parser("describe", parents=[common], help="print index statistics")

    sp = sub.add_parser("query", parents=[common], help="run a retrieval query")
    sp.add_argument(
        "kind",
        choices=(
            "snapshot",
            "node-at",
            "node-history",
            "khop",
            "1hop-history",
            "neigh-versions",
        ),
    )
    sp.add_argument("--id", type=int, help="node id")
    sp.add_argument("-t", type=int, help="time point")
    sp.add_argument("--from", dest="t_from", type=int, help="window start")
    sp.add_argument("--to", dest="t_to", type=int, help="window end")
    sp.add_argument("-k", type=int, default=1, help="hop count")
    sp.add_argument("--times", help="comma-separated ascending times")
    sp.add_argument("--strategy", choices=("auto", "expand", "snapshot"), default="auto")

    sp = sub.add_parser("analyze", parents=[common], help="run a built-in analysis")
    sp.add_argument("script")
    sp.add_argument("-t", type=int, help="time point")
    sp.add_argument("--t1", type=int, help="first compare time")
    sp.add_argument("--t2", type=int, help="second compare time")
    sp.add_argument("--points", type=int, default=10, help="sample point count")
    sp.add_argument("--key", default="label", help="attribute key to count")
    sp.add_argument("-k", type=int, default=1, help="hop count for subgraph operands")
    sp.add_argument("--from", dest="t_from", type=int, help="span start")
    sp.add_argument("--to", dest="t_to", type=int, help="span end, exclusive")
    return p


def _store_dir(args) -> str:
    d = args.store or os.environ.get("STORE_DIR")
    if not d:
        raise UsageError("no store directory: pass --store or set STORE_DIR")
    return d


class UsageError(Exception):
    pass


def _open_store(args, create: bool = False) -> GraphStore:
    d = _store_dir(args)
    if not create and not os.path.isdir(d):
        raise NotFound(f"no store at {d}")
    return GraphStore(FileBackend(d, shards=args.shards))


# -- output helpers -------------------------------------------------------


def _emit(rows: list[dict], columns: list[str], fmt: str, out: IO[str]) -> None:
    if fmt == "jsonl":
        for r in rows:
            out.write(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n")
        return
    w = csv.writer(out)
    w.writerow(columns)
    for r in rows:
        w.writerow([r[c] for c in columns])


def _counters(reader: IndexReader | None, extra: dict | None = None) -> None:
    vals = {}
    if reader is not None:
        s = reader.stats
        vals.update(
            record_reads=s.record_reads,
            tree_reads=s.tree_reads,
            eventlist_reads=s.eventlist_reads,
            aux_reads=s.aux_reads,
            chain_reads=s.chain_reads,
            events_applied=s.events_applied,
            partition_fetches=s.partition_fetches,
        )
    vals.update(extra or {})
    for name in sorted(vals):
        print(f"{name}={vals[name]}", file=sys.stderr)


def _node_cells(node: StaticNode) -> tuple[str, str]:
    attrs = json.dumps(dict(node.attrs), sort_keys=True, separators=(",", ":"))
    edges = json.dumps(
        [[e.neighbor, e.direction, dict(e.attrs)] for e in node.edges],
        sort_keys=True,
        separators=(",", ":"),
    )
    return attrs, edges


def _graph_rows(g: GraphS, time: int | None = None) -> list[dict]:
    rows = []
    for nid in g.ids():
        attrs, edges = _node_cells(g.node(nid))
        row = {"id": nid, "attrs": attrs, "edges": edges}
        if time is not None:
            row = {"time": time, **row}
        rows.append(row)
    return rows


# -- commands -------------------------------------------------------------


def cmd_ingest(args) -> int:
    events = read_log(args.logfile)
    d = _store_dir(args)
    os.makedirs(d, exist_ok=True)
    write_log(os.path.join(d, STAGED_NAME), events)
    nodes = set()
    for e in events:
        nodes.update(e.endpoints())
    print(f"events={len(events)}")
    print(f"nodes={len(nodes)}")
    return 0


def _load_build_log(args) -> list[Event]:
    if args.logfile:
        return read_log(args.logfile)
    staged = os.path.join(_store_dir(args), STAGED_NAME)
    if not os.path.exists(staged):
        raise NotFound("no staged log; run ingest first or pass a logfile")
    return read_log(staged)


def _load_config(path: str) -> IndexConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise NotFound(f"cannot read config {path}: {exc}") from None
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def cmd_build(args) -> int:
    events = _load_build_log(args)
    cfg = _load_config(args.config) if args.config else IndexConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    d = _store_dir(args)
    staged = os.path.join(d, STAGED_NAME)
    if args.force and os.path.isdir(d):
        keep = read_log(staged) if os.path.exists(staged) else None
        shutil.rmtree(d)
        os.makedirs(d)
        if keep is not None:
            write_log(staged, keep)
    store = _open_store(args, create=True)
    try:
        stats = build_index(store, events, cfg, force=args.force)
    finally:
        store.close()
    print(f"events={stats.events}")
    print(f"spans={stats.spans}")
    print(f"records={stats.records}")
    print(f"aux_records={stats.aux_records}")
    print(f"chain_nodes={stats.chain_nodes}")
    return 0


def cmd_update(args) -> int:
    events = read_log(args.logfile)
    store = _open_store(args)
    try:
        stats = update_index(store, events)
    finally:
        store.close()
    print(f"events={stats.events}")
    print(f"spans={stats.spans}")
    print(f"records={stats.records}")
    print(f"aux_records={stats.aux_records}")
    print(f"chain_nodes={stats.chain_nodes}")
    return 0


def cmd_describe(args) -> int:
    store = _open_store(args)
    try:
        st = describe(store)
    finally:
        store.close()
    for name in ("start", "end", "events", "tscount", "nodes", "records", "aux_records", "data_bytes"):
        print(f"{name}={getattr(st, name)}")
    for sp in st.spans:
        print(
            f"span tsid={sp.tsid} start={sp.start} end={sp.end} "
            f"checkpoints={len(sp.checkpoints)} npids={sp.npids} "
            f"partitioning={sp.partitioning} tree_height={sp.tree_height} "
            f"records={sp.records} aux_records={sp.aux_records} bytes={sp.data_bytes}"
        )
    return 0


_FLAGS = {
    "id": ("--id", "id"),
    "t": ("-t", "t"),
    "from": ("--from", "t_from"),
    "to": ("--to", "t_to"),
    "times": ("--times", "times"),
}


def _require(args, *names) -> None:
    for n in names:
        flag, attr = _FLAGS[n]
        if getattr(args, attr) is None:
            raise UsageError(f"query kind {args.kind!r} needs {flag}")


def cmd_query(args) -> int:
    store = _open_store(args)
    reader = IndexReader(store, workers=args.workers)
    out = sys.stdout
    try:
        if args.kind == "snapshot":
            _require(args, "t")
            g = reader.get_snapshot(args.t, workers=args.workers)
            _emit(_graph_rows(g), ["id", "attrs", "edges"], args.format, out)
        elif args.kind == "node-at":
            _require(args, "id", "t")
            node = reader.get_node_at(args.id, args.t)
            rows = []
            if node is not None:
                attrs, edges = _node_cells(node)
                rows.append({"id": node.id, "attrs": attrs, "edges": edges})
            _emit(rows, ["id", "attrs", "edges"], args.format, out)
        elif args.kind == "khop":
            _require(args, "id", "t")
            g = reader.get_k_hop(args.id, args.t, args.k, strategy=args.strategy)
            _emit(_graph_rows(g), ["id", "attrs", "edges"], args.format, out)
        elif args.kind == "node-history":
            _require(args, "id", "from", "to")
            h = reader.get_node_history(args.id, args.t_from, args.t_to)
            if h.initial is None:
                print(f"state id={args.id} time={args.t_from} absent")
            else:
                attrs, edges = _node_cells(h.initial)
                print(f"state id={args.id} time={args.t_from} attrs={attrs} edges={edges}")
            for e in h.events:
                print(format_event(e))
        elif args.kind == "1hop-history":
            _require(args, "id", "from", "to")
            nh = reader.get_1hop_history(args.id, args.t_from, args.t_to)
            rows = [
                {"id": m, "start": s.start, "end": s.end}
                for m in sorted(nh.neighbors)
                for s in nh.neighbors[m]
            ]
            _emit(rows, ["id", "start", "end"], args.format, out)
        else:  # neigh-versions
            _require(args, "id", "times")
            try:
                times = [int(x) for x in args.times.split(",") if x]
            except ValueError:
                raise UsageError(f"--times must be comma-separated integers, got {args.times!r}")
            rows = []
            for t, g in zip(times, reader.get_neighborhood_versions(args.id, args.k, times)):
                rows.extend(_graph_rows(g, time=t))
            _emit(rows, ["time", "id", "attrs", "edges"], args.format, out)
        _counters(reader)
        return 0
    finally:
        store.close()


def _analysis_span(args, store: GraphStore) -> tuple[int, int]:
    meta = store.get_graph_meta()
    start = args.t_from if args.t_from is not None else meta.start
    end = args.t_to if args.t_to is not None else meta.end + 1
    return start, end


def cmd_analyze(args) -> int:
    if args.script not in ANALYSES:
        raise UnknownScript(f"unknown analysis {args.script!r}; have: {', '.join(ANALYSES)}")
    store = _open_store(args)
    reader = IndexReader(store, workers=args.workers)
    out = sys.stdout
    try:
        if args.script == "max-clustering-coefficient":
            t = args.t if args.t is not None else store.get_graph_meta().end
            g = reader.get_snapshot(t, workers=args.workers)
            best_id, best = None, -1.0
            for nid in g.ids():
                c = g.clustering(nid)
                if c > best:
                    best_id, best = nid, c
            rows = [] if best_id is None else [{"id": best_id, "value": best}]
            _emit(rows, ["id", "value"], args.format, out)
            _counters(reader)
        elif args.script == "community-compare":
            if args.t1 is None or args.t2 is None:
                raise UsageError("community-compare needs --t1 and --t2")
            rows = _community_compare(reader, args.t1, args.t2)
            _emit(rows, ["id", "value"], args.format, out)
            _counters(reader)
        elif args.script == "network-density-evolution":
            start, end = _analysis_span(args, store)
            son = SoN.over(reader, start, end, workers=args.workers).fetch()
            series = son.evolution(lambda g: g.density(), UniformSample(args.points))
            rows = [{"id": "graph", "time": t, "value": v} for t, v in series]
            _emit(rows, ["id", "time", "value"], args.format, out)
            _counters(reader, {"sample_points": len(series)})
        else:
            rows, extra = _label_count(reader, store, args)
            _emit(rows, ["id", "time", "value"], args.format, out)
            _counters(reader, extra)
        return 0
    finally:
        store.close()


def _community_compare(reader: IndexReader, t1: int, t2: int) -> list[dict]:
    """Mean degree change per stored community between t1 and t2.

    Nodes are grouped by their micro-partition in the timespan covering
    t1; communities present at only one of the two times still count.
    """
    spans = sorted(reader.store.list_timespans(), key=lambda m: m.tsid)
    if not spans:
        return []
    covering = spans[0]
    for sp in spans:
        if sp.start <= t1:
            covering = sp
    means: dict[int, list[float]] = {}
    for t in (t1, t2):
        g = reader.get_snapshot(t)
        deg: dict[int, list[int]] = {}
        for nid in g.ids():
            pid = reader.store.get_pid(nid, covering.tsid)
            if pid is None:
                continue
            deg.setdefault(pid, []).append(g.node(nid).degree())
        for pid, ds in deg.items():
            means.setdefault(pid, [0.0, 0.0])
        for pid in means:
            ds = deg.get(pid, [])
            means[pid][0 if t == t1 else 1] = sum(ds) / len(ds) if ds else 0.0
    return [
        {"id": pid, "value": means[pid][1] - means[pid][0]} for pid in sorted(means)
    ]


def _label_count(reader: IndexReader, store: GraphStore, args) -> tuple[list[dict], dict]:
    start, end = _analysis_span(args, store)
    key = args.key
    centers = sorted(reader.snapshot_state(start))
    sots = SoTS.over(reader, k=args.k, start=start, end=end, centers=centers, workers=args.workers)
    sots = sots.fetch()
    calls = {"f_calls": 0, "f_delta_calls": 0}

    def count(gs: GraphS) -> int:
        calls["f_calls"] += 1
        return sum(1 for _, node in gs.items() if any(k == key for k, _ in node.attrs))

    def count_delta(before: GraphS, aux, value, e):
        calls["f_delta_calls"] += 1
        if e.kind in (EventKind.SET_NODE_ATTR, EventKind.DEL_NODE_ATTR) and e.key == key:
            had = any(k == key for k, _ in before.node(e.subject).attrs)
            now = e.kind is EventKind.SET_NODE_ATTR
            return value + (1 if now and not had else 0) - (1 if had and not now else 0), aux
        if e.kind is EventKind.DELETE_NODE:
            had = any(k == key for k, _ in before.node(e.subject).attrs)
            return value - (1 if had else 0), aux
        return value, aux

    if args.script == "label-count-delta":
        series = sots.node_compute_delta(count, count_delta)
    else:
        series = sots.node_compute_temporal(count)
    rows = [
        {"id": nid, "time": t, "value": v}
        for nid in sorted(series)
        for t, v in series[nid]
    ]
    return rows, calls


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    handlers = {
        "ingest": cmd_ingest,
        "build": cmd_build,
        "update": cmd_update,
        "describe": cmd_describe,
        "query": cmd_query,
        "analyze": cmd_analyze,
    }
    try:
        return handlers[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except UnknownScript as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ChronographError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 4
    except Exception as exc:  # noqa: BLE001  - the contract is exit code 4
        print(f"internal error: {exc!r}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
