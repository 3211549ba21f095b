"""Compare history layouts with the closed-form cost model.

The estimator prices five query primitives against six ways of storing
the same history, in two currencies: total bytes of deltas read and the
number of separate deltas touched.  Nothing here runs a query; the table
is computed symbolically from workload averages.
"""

from chronograph import CostParams, Layout, Primitive, estimate_cost, estimate_storage

# a mid-sized history: 100k events, snapshots of ~5k descriptions,
# 32-event gap lists, tree height 6, busy nodes with 40 versions and
# 12 neighbors, 20 micro-partitions per snapshot
PARAMS = CostParams(
    G=100_000.0,
    S=5_000.0,
    E=32.0,
    h=6.0,
    V=40.0,
    R=12.0,
    p=20.0,
    N=2_000.0,
    C=50.0,
)


def fmt(x: float) -> str:
    return f"{x:,.0f}"


def main() -> None:
    prims = list(Primitive)
    width = max(len(l.value) for l in Layout) + 2

    for metric, idx in (("total delta size read", 0), ("deltas read", 1)):
        print(f"== {metric} ==")
        header = "".join(f"{p.value:>18}" for p in prims)
        print(" " * width + header)
        for layout in Layout:
            cells = [estimate_cost(layout, p, PARAMS)[idx] for p in prims]
            row = "".join(f"{fmt(c):>18}" for c in cells)
            print(f"{layout.value:<{width}}{row}")
        print()

    print("== storage footprint ==")
    for layout in Layout:
        print(f"{layout.value:<{width}}{fmt(estimate_storage(layout, PARAMS)):>18}")

    # the partitioned tree's point: neighborhood reads stop scaling with
    # snapshot size once deltas are split into micro-partitions
    flat = estimate_cost(Layout.DELTA_TREE, Primitive.ONE_HOP, PARAMS)[0]
    part = estimate_cost(Layout.PARTITIONED_DELTA_TREE, Primitive.ONE_HOP, PARAMS)[0]
    print(f"\none-hop read volume, tree without partitions vs with: "
          f"{fmt(flat)} vs {fmt(part)} ({flat / part:,.1f}x)")


if __name__ == "__main__":
    main()
