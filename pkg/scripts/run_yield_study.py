#!/usr/bin/env python3
"""Run the 18-month maintenance-free scenario and print the yield story.

Reproduces the long-deployment analysis: daily yield for the whole
network vs the surviving nodes, maintenance-interval percentiles, and the
failure-cause mix.
"""

import argparse
import statistics
from pathlib import Path

from soilnet.world import load_scenario

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"


def sparkline(values, width=60):
    blocks = " .:-=+*#%@"
    step = max(1, len(values) // width)
    out = []
    for i in range(0, len(values), step):
        chunk = values[i:i + step]
        level = sum(chunk) / len(chunk)
        out.append(blocks[min(len(blocks) - 1, int(level * (len(blocks) - 1)))])
    return "".join(out)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenario", default=str(SCENARIOS / "cubhill_longterm.json"))
    ap.add_argument("--days", type=float, default=548.0)
    args = ap.parse_args()

    world = load_scenario(args.scenario)
    print(f"running {world.scenario.name!r} for {args.days:.0f} days "
          f"({len(world.motes)} motes)...")
    summary = world.advance(args.days * 86400.0)
    print(f"samples {summary.samples}, downloads {summary.downloads}")

    ys = world.compute_yield()
    print("\ndaily yield (total network):")
    print(" ", sparkline(ys.total_yield))
    print("daily yield (surviving nodes):")
    print(" ", sparkline(ys.surviving_yield))
    print(f"\nmean total yield      {statistics.fmean(ys.total_yield):.3f}")
    print(f"mean surviving yield  {statistics.fmean(ys.surviving_yield):.3f}")
    print(f"maintenance intervals: "
          f"{ys.maintenance_fraction_exceeding(182) * 100:.0f}% > 6 months, "
          f"{ys.maintenance_fraction_exceeding(365) * 100:.0f}% > 1 year")

    dead = {m: s for m, s in world.motes.items() if not s.alive}
    print(f"\ndead motes: {len(dead)} of {len(world.motes)}")
    for cause, frac in world.failure_breakdown().items():
        print(f"  {cause:<9} {frac * 100:5.1f}%")


if __name__ == "__main__":
    main()
