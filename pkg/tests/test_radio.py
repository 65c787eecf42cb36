import math
from collections import deque

import pytest

from soilnet.radio import (
    BandProfile,
    NetworkView,
    RadioPlane,
    _flood_round,
    concurrent_slot_delivery,
    deliver_slot,
    flood_hopcount,
    grid_view,
    link_prr,
)
from soilnet.util import make_rng

B900 = BandProfile("900MHz", base_range_m=100.0)
B24 = BandProfile("2.4GHz", base_range_m=100.0, humidity_attenuation_coeff=0.5)


def test_prr_near_ceiling_at_zero_distance():
    for profile in (B900, B24):
        assert link_prr(0.1, profile) == pytest.approx(0.99, abs=0.01)


def test_24ghz_prr_strictly_drops_with_humidity():
    for d in (10.0, 50.0, 90.0, 150.0):
        dry = link_prr(d, B24, humidity_frac=0.0)
        wet = link_prr(d, B24, humidity_frac=1.0)
        assert wet < dry


def test_900mhz_prr_constant_over_humidity():
    for h in (0.0, 0.3, 0.6, 1.0):
        assert link_prr(50.0, B900, humidity_frac=h) == link_prr(50.0, B900)


def test_band_profile_validation():
    with pytest.raises(ValueError):
        BandProfile("900MHz", 100.0, humidity_attenuation_coeff=0.2).validate()
    with pytest.raises(ValueError):
        BandProfile("5GHz", 100.0).validate()


def test_plane_links_are_seeded_and_asymmetric():
    positions = {i: (i * 30.0, 0.0) for i in range(4)}
    p1 = RadioPlane([0, 1, 2, 3], positions, B900, seed=7)
    p2 = RadioPlane([0, 1, 2, 3], positions, B900, seed=7)
    p3 = RadioPlane([0, 1, 2, 3], positions, B900, seed=8)
    assert p1.prr(0, 2) == p2.prr(0, 2)
    assert p1.prr(0, 2) != p3.prr(0, 2)
    asym = [abs(p1.prr(i, j) - p1.prr(j, i)) for i in range(4) for j in range(i)]
    assert max(asym) > 0.0


def test_link_table_csv():
    positions = {1: (0.0, 0.0), 2: (40.0, 0.0)}
    plane = RadioPlane([1, 2], positions, B900, seed=1)
    csv = plane.link_table_csv()
    lines = csv.strip().split("\n")
    assert lines[0] == "from,to,prr"
    assert len(lines) == 3


# --- concurrent slots -------------------------------------------------------


def fixed_view(prr_map, members):
    return NetworkView(members=members, prr=lambda i, j: prr_map.get((i, j), 0.0))


def test_single_transmitter_is_bernoulli():
    view = fixed_view({(1, 2): 0.6}, [1, 2])
    rng = make_rng("bern")
    hits = sum(
        2 in concurrent_slot_delivery([1], [2], view, rng) for _ in range(20000)
    )
    assert hits / 20000 == pytest.approx(0.6, abs=0.02)


def test_two_transmitters_union_probability():
    # closed form 1 - (1-0.5)^2 = 0.75, checked by Monte-Carlo
    view = fixed_view({(1, 3): 0.5, (2, 3): 0.5}, [1, 2, 3])
    rng = make_rng("union")
    hits = sum(
        3 in concurrent_slot_delivery([1, 2], [3], view, rng) for _ in range(20000)
    )
    assert hits / 20000 == pytest.approx(0.75, abs=0.02)


def test_union_capture_monotone_exact_formula():
    # exact from the formula: 1 - prod(1 - p_i) never decreases when a
    # transmitter joins, for any link probabilities
    from hypothesis import given, strategies as st

    @given(
        st.lists(st.floats(0.0, 1.0), min_size=1, max_size=8),
        st.floats(0.0, 1.0),
    )
    def check(prrs, extra):
        def union(ps):
            miss = 1.0
            for p in ps:
                miss *= 1.0 - p
            return 1.0 - miss

        assert union(prrs + [extra]) >= union(prrs) - 1e-12

    check()


def test_adding_same_packet_transmitter_never_hurts():
    # exact from the union formula: estimate both ways with common seeds
    view = fixed_view({(1, 3): 0.4, (2, 3): 0.4}, [1, 2, 3])
    n = 20000
    one = sum(
        3 in concurrent_slot_delivery([1], [3], view, make_rng("mono", k))
        for k in range(n)
    )
    two = sum(
        3 in concurrent_slot_delivery([1, 2], [3], view, make_rng("mono", k))
        for k in range(n)
    )
    assert two >= one


def test_different_packets_destroy_at_common_receiver():
    view = fixed_view({(1, 3): 1.0, (2, 3): 1.0}, [1, 2, 3])
    rng = make_rng("collide")
    out = deliver_slot({"a": [1], "b": [2]}, [3], view, rng)
    assert out[3] is None


def test_all_reliable_delivers_union_of_neighborhoods():
    view = fixed_view({(1, 2): 1.0, (1, 3): 1.0}, [1, 2, 3, 4])
    rng = make_rng("nbr")
    got = concurrent_slot_delivery([1], [2, 3, 4], view, rng)
    assert got == {2, 3}


# --- flooding ---------------------------------------------------------------


def test_reliable_line_hops():
    prr = {(i, i + 1): 1.0 for i in range(4)}
    prr.update({(i + 1, i): 1.0 for i in range(4)})
    view = fixed_view(prr, [0, 1, 2, 3, 4])
    field = flood_hopcount(0, view, make_rng("line"))
    assert [field.hop(i) for i in range(5)] == [0, 1, 2, 3, 4]


def test_partitioned_network_infinite_hops():
    prr = {(0, 1): 1.0, (1, 0): 1.0}
    view = fixed_view(prr, [0, 1, 2])
    field = flood_hopcount(0, view, make_rng("part"))
    assert field.hop(1) == 1
    assert math.isinf(field.hop(2))


def bfs_distances(view, root):
    dist = {root: 0}
    q = deque([root])
    while q:
        u = q.popleft()
        for v in view.members:
            if v not in dist and view.prr(u, v) > 0:
                dist[v] = dist[u] + 1
                q.append(v)
    return dist


def test_grid_flood_matches_bfs_oracle():
    # 50-node grid, prr 0.8, 3 repetitions: >=95% of nodes at BFS distance
    view = grid_view(5, 10, 0.8)
    oracle = bfs_distances(view, 0)
    match = 0
    trials = 20
    for t in range(trials):
        field = flood_hopcount(0, view, make_rng("grid", t), repetitions=3)
        match += sum(field.hop(n) == oracle[n] for n in view.members)
    assert match / (trials * len(view.members)) >= 0.95


def test_flood_neighbor_invariant_on_realized_edges():
    # the round's exchanged edges (final fixpoint sweep) tie any
    # communicating pair's hops to within one
    view = grid_view(4, 5, 0.7)
    for t in range(10):
        hops, deliveries, _ = _flood_round(0, view, make_rng("inv", t), max_waves=60)
        received_from = {}  # receiver -> set of transmitters heard
        for wave, txs, r in deliveries:
            received_from.setdefault(r, set()).update(txs)
        for u, senders in received_from.items():
            for v in senders:
                if u in received_from.get(v, set()):
                    assert abs(hops[u] - hops[v]) <= 1


def test_flood_reliable_links_equals_bfs():
    view = grid_view(4, 5, 1.0)
    oracle = bfs_distances(view, 0)
    hops, _, _ = _flood_round(0, view, make_rng("inv-rel"), max_waves=60)
    assert hops == oracle


def test_flood_accounts_energy():
    view = grid_view(3, 3, 1.0)
    energy = {}
    flood_hopcount(0, view, make_rng("en"), repetitions=1, energy_mc=energy)
    assert sum(energy.values()) > 0
    assert set(energy) <= set(view.members)
