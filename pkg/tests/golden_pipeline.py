"""Shared runner for the end-to-end pipeline over the bundled sample log.

The same command sequence generates the committed golden outputs and, in
the test suite, reproduces them byte for byte.  Regenerate after an
intentional format change with:

    python3 tests/golden_pipeline.py
"""

from __future__ import annotations

import os
import shutil
import subprocess
import sys

HERE = os.path.dirname(os.path.abspath(__file__))
SAMPLE = os.path.join(HERE, "data", "sample.log")
GOLDEN_DIR = os.path.join(HERE, "data", "golden")


def _exe() -> list[str]:
    exe = shutil.which("chronograph")
    if exe:
        return [exe]
    return [sys.executable, "-m", "chronograph.cli"]


def pipeline_params(sample: str = SAMPLE) -> dict[str, int]:
    """Query parameters derived from the sample itself, so the log file
    stays the single source of truth.  The probe node is the most-touched
    node still alive at the midpoint time."""
    from collections import Counter

    from chronograph.deltas import EventKind
    from chronograph.logfmt import read_log

    events = read_log(sample)
    mid = len(events) // 2
    alive = set()
    for e in events[: mid + 1]:
        if e.kind is EventKind.ADD_NODE:
            alive.add(e.subject)
        elif e.kind is EventKind.DELETE_NODE:
            alive.discard(e.subject)
    touch: Counter[int] = Counter()
    for e in events:
        for nid in e.endpoints():
            touch[nid] += 1
    return {
        "t_mid": events[mid].time,
        "nid": max(alive, key=lambda n: (touch[n], -n)),
        "t_q1": events[1000].time,
        "t_q2": events[4000].time,
    }


def run_pipeline(store: str, sample: str = SAMPLE) -> list[tuple[str, bytes]]:
    """Run every pipeline step single-threaded; return (name, stdout bytes)."""
    p = pipeline_params(sample)
    exe = _exe()
    steps = [
        ("ingest.txt", ["ingest", sample]),
        ("build.txt", ["build"]),
        ("describe.txt", ["describe"]),
        ("snapshot.csv", ["query", "snapshot", "-t", str(p["t_mid"])]),
        (
            "history.txt",
            [
                "query", "node-history", "--id", str(p["nid"]),
                "--from", str(p["t_q1"]), "--to", str(p["t_q2"]),
            ],
        ),
        ("khop.csv", ["query", "khop", "--id", str(p["nid"]), "-t", str(p["t_mid"]), "-k", "2"]),
        ("density.csv", ["analyze", "network-density-evolution", "--points", "12"]),
        ("labels.csv", ["analyze", "label-count-delta", "--from", str(p["t_mid"])]),
        ("clustering.csv", ["analyze", "max-clustering-coefficient"]),
    ]
    outs = []
    for name, argv in steps:
        proc = subprocess.run(
            exe + argv + ["--store", store],
            capture_output=True,
            timeout=120,
        )
        if proc.returncode != 0:
            raise RuntimeError(f"{name}: rc={proc.returncode}\n{proc.stderr.decode()}")
        outs.append((name, proc.stdout))
    return outs


def main() -> int:
    import tempfile

    os.makedirs(GOLDEN_DIR, exist_ok=True)
    with tempfile.TemporaryDirectory() as td:
        outs = run_pipeline(os.path.join(td, "store"))
    for name, data in outs:
        with open(os.path.join(GOLDEN_DIR, name), "wb") as fh:
            fh.write(data)
        print(f"wrote {name} ({len(data)} bytes)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
