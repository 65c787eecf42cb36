"""Radio medium: link PRR model, hop-count flooding, concurrent slots.

Links follow a logistic decay of packet reception ratio with distance,
with a seeded per-link offset that makes links fickle and asymmetric. The
2.4 GHz band loses effective range as ambient humidity rises; 900 MHz does
not. Identical packets transmitted in the same slot reinforce (union of
independent captures); different packets in one slot destroy each other at
common receivers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .util import make_rng

BANDS = ("900MHz", "2.4GHz")


@dataclass(frozen=True)
class BandProfile:
    band: str
    base_range_m: float
    humidity_attenuation_coeff: float = 0.0
    prr_ceiling: float = 0.99
    edge_width_frac: float = 0.15
    link_noise_sd: float = 0.6

    def validate(self) -> None:
        if self.band not in BANDS:
            raise ValueError(f"unknown band {self.band!r}")
        if self.band == "900MHz" and self.humidity_attenuation_coeff != 0.0:
            raise ValueError("900MHz band takes no humidity attenuation")


def link_prr(
    distance_m: float,
    profile: BandProfile,
    humidity_frac: float = 0.0,
    link_offset: float = 0.0,
) -> float:
    """PRR for one directed link: logistic edge around the effective range."""
    r_eff = profile.base_range_m * (
        1.0 - profile.humidity_attenuation_coeff * humidity_frac
    )
    width = profile.edge_width_frac * profile.base_range_m
    x = (r_eff - distance_m) / width + link_offset
    return profile.prr_ceiling / (1.0 + math.exp(-x))


class RadioPlane:
    """One broadcast domain: members, their geometry, and the link table."""

    def __init__(
        self,
        members: list[int],
        positions: dict[int, tuple[float, float]],
        profile: BandProfile,
        seed: int = 0,
        humidity_frac: float = 0.0,
    ):
        profile.validate()
        self.members = sorted(members)
        self.positions = positions
        self.profile = profile
        self.seed = seed
        self.humidity_frac = humidity_frac
        self._offsets: dict[tuple[int, int], float] = {}
        for i in self.members:
            for j in self.members:
                if i != j:
                    rng = make_rng(seed, "link", i, j)
                    self._offsets[(i, j)] = rng.gauss(0.0, profile.link_noise_sd)

    def prr(self, i: int, j: int) -> float:
        if i == j:
            return 0.0
        xi, yi = self.positions[i]
        xj, yj = self.positions[j]
        d = math.hypot(xi - xj, yi - yj)
        return link_prr(d, self.profile, self.humidity_frac, self._offsets[(i, j)])

    def link_table_csv(self) -> str:
        lines = ["from,to,prr"]
        for i in self.members:
            for j in self.members:
                if i != j:
                    lines.append(f"{i},{j},{self.prr(i, j):.4f}")
        return "\n".join(lines) + "\n"


@dataclass
class NetworkView:
    """What protocols see: membership, link odds, liveness, and logs."""

    members: list[int]
    prr: "callable"
    alive: "callable" = staticmethod(lambda n: True)
    data_tx_ok: "callable" = staticmethod(lambda n: True)
    log_of: "callable" = None


def grid_view(rows: int, cols: int, prr: float, first_id: int = 0) -> NetworkView:
    """Synthetic grid with 4-adjacency links at a uniform PRR (test fixture)."""
    ids = [first_id + r * cols + c for r in range(rows) for c in range(cols)]

    def link(i, j):
        a, b = i - first_id, j - first_id
        ra, ca = divmod(a, cols)
        rb, cb = divmod(b, cols)
        return prr if abs(ra - rb) + abs(ca - cb) == 1 else 0.0

    return NetworkView(members=ids, prr=link)


def concurrent_slot_delivery(transmitters, receivers, view: NetworkView, rng) -> set:
    """Receivers that capture a packet sent simultaneously by all transmitters.

    Identical packets never destructively collide: each receiver captures
    with probability 1 - prod(1 - prr[t][r]).
    """
    got = set()
    txs = [t for t in transmitters]
    for r in receivers:
        miss = 1.0
        for t in txs:
            miss *= 1.0 - view.prr(t, r)
            if miss == 0.0:
                break
        if rng.random() < 1.0 - miss:
            got.add(r)
    return got


def deliver_slot(transmissions: dict, receivers, view: NetworkView, rng) -> dict:
    """One slot carrying possibly different packets: {packet_id: tx set}.

    A receiver capturing two or more distinct packets gets neither
    (destructive collision); exactly one capture delivers it.
    """
    outcome = {}
    for r in receivers:
        arrived = []
        for pid in sorted(transmissions):
            txs = transmissions[pid]
            miss = 1.0
            for t in txs:
                miss *= 1.0 - view.prr(t, r)
            if rng.random() < 1.0 - miss:
                arrived.append(pid)
        outcome[r] = arrived[0] if len(arrived) == 1 else None
    return outcome


@dataclass
class HopField:
    root: int
    hops: dict[int, float]
    round_id: int = 0

    def hop(self, node: int) -> float:
        return self.hops.get(node, math.inf)


def _flood_round(root, view: NetworkView, rng, max_waves: int, tx_count: int = 2):
    """One flood round: BFS-like epidemic with per-edge stochastic draws.

    Nodes announce their hop, retransmitting `tx_count` times per adopted
    value; hearing a smaller hop relaxes a node's own and re-announces.
    Runs to a fixpoint (or the wave budget). The deliveries of the final,
    change-free sweep are the round's realized exchanges: at the fixpoint
    every such edge satisfies hop(rx) <= hop(tx) + 1.
    """
    alive = [n for n in view.members if view.alive(n)]
    hops = {root: 0}
    budget = {root: tx_count}
    tx_done: dict[int, int] = {}
    deliveries = []            # (wave, (transmitter,), receiver) of final sweep
    wave = 0
    while wave < max_waves:
        wave += 1
        txs = sorted(n for n, b in budget.items() if b > 0 and view.alive(n))
        final_sweep = not txs
        if final_sweep:
            txs = sorted(n for n in hops if view.alive(n))
        sweep_edges = []
        changed = False
        for t in txs:
            if not final_sweep:
                budget[t] -= 1
            tx_done[t] = tx_done.get(t, 0) + 1
            ht = hops[t]
            for r in alive:
                if r == t:
                    continue
                if rng.random() < view.prr(t, r):
                    sweep_edges.append((wave, (t,), r))
                    if ht + 1 < hops.get(r, math.inf):
                        hops[r] = ht + 1
                        budget[r] = tx_count
                        changed = True
        if final_sweep:
            if not changed:
                deliveries = sweep_edges
                break
            # a late relaxation happened during the announce sweep; keep going
    return hops, deliveries, {"waves": wave, "tx": tx_done}


def flood_hopcount(
    root: int,
    view: NetworkView,
    rng,
    repetitions: int = 3,
    round_id: int = 0,
    energy_mc: dict | None = None,
    tx_charge_mc: float = 0.06,
    rx_charge_mc: float = 0.02,
    tx_count: int = 2,
) -> HopField:
    """Epidemic hop-count flood from `root`; min hops over repetitions.

    Unreachable nodes keep an infinite hop. With tx_count=1 every realized
    delivery edge satisfies |hop(tx) - hop(rx)| = 1 exactly; the default of
    two transmissions per node trades that per-edge tightness (<= 2) for
    reach on lossy links. Optionally accounts slot energy into `energy_mc`.
    """
    if not view.alive(root):
        raise ValueError(f"flood root {root} is not alive")
    max_waves = len(view.members) + 2
    best: dict[int, float] = {n: math.inf for n in view.members}
    best[root] = 0
    for _ in range(max(1, repetitions)):
        hops, _deliveries, stats = _flood_round(root, view, rng, max_waves, tx_count)
        for n, h in hops.items():
            if h < best[n]:
                best[n] = h
        if energy_mc is not None:
            alive = [n for n in view.members if view.alive(n)]
            for n in alive:
                energy_mc[n] = energy_mc.get(n, 0.0) + stats["waves"] * rx_charge_mc
            for n, count in stats["tx"].items():
                energy_mc[n] = energy_mc.get(n, 0.0) + count * tx_charge_mc
    return HopField(root=root, hops=best, round_id=round_id)
