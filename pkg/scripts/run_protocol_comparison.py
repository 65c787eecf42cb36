#!/usr/bin/env python3
"""Compare the three download protocols on a lossy grid.

Paired seeds, random source/sink pairs: delivery ratio, energy, slots.
Optionally runs the low-voltage-relay pathology variant where nodes with
the best links silently fail to push data out.
"""

import argparse
import random
import statistics

from soilnet.mote import MoteConfig, MoteState
from soilnet.protocols import DownloadSession, run_download
from soilnet.radio import NetworkView, grid_view
from soilnet.records import SampleRecord
from soilnet.util import make_rng


def fill_log(mote_id, n):
    mote = MoteState(MoteConfig(barcode=mote_id), seed=1)
    for i in range(n):
        mote.log.append(SampleRecord(mote_id, 700, i % 8, i, i * 600, i))
    return mote.log


def build_view(rows, cols, prr, pathology):
    base = grid_view(rows, cols, prr)
    if not pathology:
        return base, set()
    n = rows * cols
    rng = random.Random(4242)
    low_v = set(rng.sample(range(n), max(1, n // 8)))
    base_prr = base.prr

    def prr_fn(i, j):
        p = base_prr(i, j)
        if p > 0 and (i in low_v or j in low_v):
            return min(0.95, p * 1.18)
        return p

    return NetworkView(members=base.members, prr=prr_fn,
                       data_tx_ok=lambda node: node not in low_v), low_v


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rows", type=int, default=5)
    ap.add_argument("--cols", type=int, default=10)
    ap.add_argument("--prr", type=float, default=0.8)
    ap.add_argument("--records", type=int, default=120)
    ap.add_argument("--seeds", type=int, default=100)
    ap.add_argument("--pathology", action="store_true",
                    help="inject low-voltage relays with shiny links")
    args = ap.parse_args()

    view, low_v = build_view(args.rows, args.cols, args.prr, args.pathology)
    if low_v:
        print(f"low-voltage nodes: {sorted(low_v)}")
    n = args.rows * args.cols
    picker = random.Random(2468)
    stats = {p: {"ratio": [], "energy": [], "slots": [], "complete": 0}
             for p in ("cxfs", "koala", "flood")}
    for k in range(args.seeds):
        src, sink = picker.sample(range(n), 2)
        view.log_of = {src: fill_log(src, args.records)}.get
        for proto in stats:
            s = DownloadSession(source=src, sink=sink, start_cookie=0,
                                length=1 << 30, protocol=proto)
            run_download(s, view, make_rng("cmp", k, proto))
            stats[proto]["ratio"].append(len(s.entries) / args.records)
            stats[proto]["energy"].append(s.total_energy_mc())
            stats[proto]["slots"].append(s.slots_used)
            stats[proto]["complete"] += s.complete

    print(f"\n{args.rows}x{args.cols} grid, prr {args.prr}, "
          f"{args.records} records, {args.seeds} paired seeds")
    print(f"{'protocol':<8} {'delivery':>9} {'complete':>9} "
          f"{'energy mC':>10} {'slots':>7}")
    for proto, st in stats.items():
        print(f"{proto:<8} {statistics.fmean(st['ratio']):>9.3f} "
              f"{st['complete'] / args.seeds:>9.2f} "
              f"{statistics.fmean(st['energy']):>10.1f} "
              f"{statistics.fmean(st['slots']):>7.1f}")


if __name__ == "__main__":
    main()
