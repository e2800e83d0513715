import itertools
import random

import pytest
from hypothesis import given, strategies as st

from hermes.errors import (ConfigError, DomainError, InsufficientBandwidthError, OrderingFault,
                           ProtocolViolation)
from hermes.flow import (BroadcastArbiter, LinearArbiter, LinearReservationTable, OrderTag, Retry,
                         broadcast_arbitrate, divide, divide_efficient, divide_fair, divide_grouped,
                         global_order, linear_arbitrate, relay_tag, rotate_priorities)
from hermes.topology import build_linear


def successor_scan(n, active):
    """Shares in units: walk forward from each sender over idle nodes."""
    units = [0] * n
    for node in range(n):
        if node not in active:
            continue
        units[node] = 1
        nxt = (node + 1) % n
        while nxt not in active:
            units[node] += 1
            nxt = (nxt + 1) % n
    return units


def patterns(n):
    for mask in range(1 << n):
        yield {i for i in range(n) if mask >> i & 1}


def test_fair_examples():
    assert divide_fair(8, 64).shares == (8,) * 8
    assert divide_fair(1, 64).shares == (64,)
    a = divide_fair(8, 60)
    assert a.shares == (7,) * 8 and a.unassigned == 4


def test_fair_needs_a_channel_per_node():
    with pytest.raises(InsufficientBandwidthError):
        divide_fair(8, 7)


def test_efficient_example_from_ring_of_eight():
    # senders 1, 2 and 7 in 1-based numbering
    a = divide_efficient(8, 64, {0, 1, 6})
    assert a.units() == (1, 5, 0, 0, 0, 0, 2, 0)


def test_efficient_sole_sender_takes_everything():
    assert divide_efficient(8, 64, {2}).shares[2] == 64


def test_efficient_no_sender_no_shares():
    assert divide_efficient(8, 64, set()).shares == (0,) * 8


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5, 8])
def test_efficient_matches_successor_scan(n):
    for active in patterns(n):
        assert list(divide_efficient(n, 8 * n, active).units()) == successor_scan(n, active)


def test_grouped_interleaved_example():
    # groups {1,3,5,7} and {2,4,6,8}; senders 1, 7 and 2 (1-based)
    a = divide_grouped(8, 64, [(0, 2, 4, 6), (1, 3, 5, 7)], {0, 6, 1})
    assert a.units() == (3, 4, 0, 0, 0, 0, 1, 0)


def test_grouped_singletons_reduce_to_fair():
    groups = [(i,) for i in range(8)]
    for active in patterns(8):
        g = divide_grouped(8, 64, groups, active)
        assert g.shares == divide("fair", 8, 64, active).shares


def test_grouped_single_group_is_efficient():
    for active in patterns(6):
        assert divide_grouped(6, 48, [tuple(range(6))], active).shares == \
            divide_efficient(6, 48, active).shares


@pytest.mark.parametrize("groups", [[(0, 1), (1, 2)], [(0, 1)], [(0, 1, 2), ()], [(0, 1, 5)]])
def test_grouped_rejects_non_partitions(groups):
    with pytest.raises(ConfigError):
        divide_grouped(3, 12, groups, {0})


SCHEME_CASES = [
    ("fair", None),
    ("efficient", None),
    ("grouped", [(0, 2, 4, 6), (1, 3, 5, 7)]),
    ("grouped", [(0, 1, 2, 3), (4, 5, 6, 7)]),
]


@pytest.mark.parametrize("scheme,groups", SCHEME_CASES)
def test_conservation_and_minimum_share(scheme, groups):
    for total in (8, 60, 64, 100):
        unit = total // 8
        for active in patterns(8):
            a = divide(scheme, 8, total, active, groups)
            assert sum(a.shares) <= total
            assert all(a.shares[i] >= unit for i in active)
            if scheme != "fair":
                assert all(a.shares[i] == 0 for i in range(8) if i not in active)


def test_efficient_uses_every_divisible_channel():
    for active in patterns(8):
        if active:
            assert divide_efficient(8, 64, active).utilization == 1.0


@pytest.mark.parametrize("groups", [[(0, 2, 4, 6), (1, 3, 5, 7)], [(0, 1, 2, 3), (4, 5, 6, 7)],
                                    [(0, 1), (2, 3), (4, 5), (6, 7)]])
def test_grouped_utilization_never_exceeds_efficient(groups):
    for active in patterns(8):
        g = divide_grouped(8, 64, groups, active)
        e = divide_efficient(8, 64, active)
        f = divide("fair", 8, 64, active)
        assert f.assigned <= g.assigned <= e.assigned


def test_grouped_max_share_can_exceed_efficient():
    # groups {0,1,2},{3,4,5}; one lone sender in the second group absorbs all of it
    active = {0, 2, 4}
    g = divide_grouped(6, 60, [(0, 1, 2), (3, 4, 5)], active)
    e = divide_efficient(6, 60, active)
    assert e.max_share == 20
    assert g.max_share == 30


def test_broadcast_sole_requester_gets_data_bandwidth_next_cycle():
    arb = BroadcastArbiter(8, 72)
    g = broadcast_arbitrate({5}, arb, cycle=10)
    assert g.grant_cycle == 11
    assert g.granted == (5,)
    assert g.allocation.shares[5] == 64 == arb.data_channels


def test_broadcast_all_requesters_equal_shares():
    g = BroadcastArbiter(8, 72).arbitrate(set(range(8)), cycle=0)
    assert g.allocation.shares == (8,) * 8


def test_broadcast_no_requests_no_grant():
    g = BroadcastArbiter(8, 72).arbitrate(set(), cycle=3)
    assert g.granted == () and g.grant_cycle is None
    assert g.allocation.assigned == 0


def test_broadcast_request_wavelengths_come_out_of_channels():
    with pytest.raises(InsufficientBandwidthError):
        BroadcastArbiter(8, 15)
    assert BroadcastArbiter(8, 17, reserved=1).data_channels == 8


def test_priorities_single_node():
    assert rotate_priorities(7, 3, 1).ranks == (0,)


@given(st.integers(0, 2 ** 64 - 1), st.integers(0, 10 ** 6), st.integers(1, 64))
def test_priorities_bijective_and_deterministic(seed, epoch, n):
    a = rotate_priorities(seed, epoch, n)
    assert sorted(a.ranks) == list(range(n))
    assert a == rotate_priorities(seed, epoch, n)


@pytest.mark.parametrize("n", [2, 5, 16, 33])
def test_every_node_reaches_top_rank(n):
    seen = {rotate_priorities(12345, e, n).top for e in range(n * n)}
    assert seen == set(range(n))
    # stronger: any n consecutive epochs
    tops = [rotate_priorities(99, e, n).top for e in range(3 * n)]
    for start in range(2 * n):
        assert set(tops[start:start + n]) == set(range(n))


def test_priorities_change_between_epochs():
    perms = {rotate_priorities(1, e, 16).ranks for e in range(10)}
    assert len(perms) == 10


def test_priority_seed_must_be_u64():
    with pytest.raises(DomainError):
        rotate_priorities(-1, 0, 4)
    with pytest.raises(DomainError):
        rotate_priorities(2 ** 64, 0, 4)


def test_global_order_examples():
    a, b = OrderTag(5, 2), OrderTag(5, 1)
    assert global_order([a, b]) == [b, a]
    assert global_order([a]) == [a]


@given(st.lists(st.tuples(st.integers(0, 50), st.integers(0, 31), st.integers(0, 3)), unique=True,
                max_size=40), st.randoms())
def test_global_order_ignores_input_order(triples, rnd):
    tags = [OrderTag(*t) for t in triples]
    shuffled = tags[:]
    rnd.shuffle(shuffled)
    assert global_order(shuffled) == global_order(tags) == sorted(tags, key=lambda t: t.key)


def test_global_order_duplicate_is_a_fault():
    with pytest.raises(OrderingFault):
        global_order([OrderTag(3, 1, 0), OrderTag(3, 1, 0)])


def test_local_order_fits_five_bits():
    OrderTag(0, 31)
    with pytest.raises(DomainError):
        OrderTag(0, 32)


def test_relayed_packet_takes_relay_order():
    t = relay_tag(OrderTag(4, 17, 2), 0, 9)
    assert (t.completion_time, t.local_order, t.domain_of_origin) == (9, 0, 2)


# ---------------------------------------------------------------- linear arbitration

def disjoint_pair(topo):
    for a, b, c, d in itertools.permutations(range(topo.n_nodes), 4):
        ra, rc = topo.route(a, b), topo.route(c, d)
        if not set(ra.segments) & set(rc.segments):
            return (a, b), (c, d)


def blocking_pair(topo):
    """Two requests where every route of one overlaps every route of the other."""
    for a, b, c, d in itertools.permutations(range(topo.n_nodes), 4):
        if all(set(r1.segments) & set(r2.segments)
               for r1 in topo.routes(a, b) for r2 in topo.routes(c, d)):
            return (a, b), (c, d)


def test_single_request_takes_two_arbitration_cycles():
    topo = build_linear(32)
    arb = LinearArbiter(topo, seed=1)
    arb.request(3, 20, duration=5)
    assert arb.step(10).granted == []
    [txn] = arb.step(11).granted
    assert txn.reserve_cycle == 11 and txn.start_cycle == 12
    assert txn.route == topo.route(3, 20)
    done = []
    for t in range(12, 20):
        done += arb.step(t).completed
    assert [d.id for d in done] == [txn.id]
    assert txn.end_cycle == 16 and txn.complete_cycle == 10 + 2 + 5
    assert all(s is None for s in arb.tables[0].slots)


def test_disjoint_requests_granted_together():
    topo = build_linear(16)
    (a, b), (c, d) = disjoint_pair(topo)
    arb = LinearArbiter(topo, seed=3)
    arb.request(a, b, 4)
    arb.request(c, d, 4)
    arb.step(0)
    assert sorted(t.requester for t in arb.step(1).granted) == sorted([a, c])


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_conflict_goes_to_higher_rank(seed):
    topo = build_linear(8)
    (a, b), (c, d) = blocking_pair(topo)
    arb = LinearArbiter(topo, seed=seed, period=64)
    arb.request(a, b, 3)
    arb.request(c, d, 3)
    arb.step(0)
    res = arb.step(1)
    ranks = arb.priorities.at(1).ranks
    winner, loser = (a, c) if ranks[a] < ranks[c] else (c, a)
    assert [t.requester for t in res.granted] == [winner]
    assert res.retried == [loser]
    # the loser retries every cycle and gets the circuit once the winner releases
    granted_at = None
    for t in range(2, 10):
        res = arb.step(t)
        if res.granted:
            granted_at = t
            assert [g.requester for g in res.granted] == [loser]
            break
    assert granted_at == 1 + 3 + 1


def test_linear_arbitrate_leaves_table_untouched():
    topo = build_linear(8)
    table = LinearReservationTable(topo.n_segments)
    epoch = rotate_priorities(0, 0, 8)
    out = linear_arbitrate({0: topo.routes(0, 5), 1: topo.routes(1, 6)}, table, epoch)
    assert set(out) == {0, 1}
    assert all(s is None for s in table.slots)


def test_blocked_table_yields_retry():
    topo = build_linear(8)
    table = LinearReservationTable(topo.n_segments)
    table.reserve(range(topo.n_segments), (9, 1))
    out = linear_arbitrate({2: topo.routes(2, 3)}, table, rotate_priorities(0, 0, 8))
    assert out[2] == Retry(2, "no clear path")


def test_table_divergence_is_a_protocol_violation():
    topo = build_linear(8)
    arb = LinearArbiter(topo)
    arb.tables[3].slots[0] = (1, 99)
    with pytest.raises(ProtocolViolation):
        arb.check_coherence()


def test_table_refuses_double_reservation():
    t = LinearReservationTable(4)
    t.reserve([1, 2], (0, 1))
    with pytest.raises(ProtocolViolation):
        t.reserve([2, 3], (1, 2))


def test_request_validation():
    arb = LinearArbiter(build_linear(8))
    with pytest.raises(DomainError):
        arb.request(2, 2, 3)
    with pytest.raises(DomainError):
        arb.request(9, 2, 3)
    arb.request(1, 2, 3)
    with pytest.raises(DomainError):
        arb.request(1, 4, 3)


def test_attached_requester_shares_node_access_points():
    topo = build_linear(8)
    arb = LinearArbiter(topo, attach={8: 0})
    arb.request(8, 5, 2)
    arb.step(0)
    [txn] = arb.step(1).granted
    assert txn.src == 0 and txn.route == topo.route(0, 5)


def test_trace_csv_columns():
    arb = LinearArbiter(build_linear(8), trace=True)
    arb.request(0, 5, 2)
    for t in range(6):
        arb.step(t)
    lines = arb.trace_csv().splitlines()
    assert lines[0] == "cycle,node,phase,segments,outcome"
    phases = [int(l.split(",")[2]) for l in lines[1:]]
    assert phases == [1, 2, 3, 4, 5, 6]


def test_random_load_keeps_tables_coherent_and_safe():
    topo = build_linear(16)
    arb = LinearArbiter(topo, seed=5, period=40)
    rng = random.Random(5)
    held = {}
    for t in range(3000):
        for r in range(16):
            if not arb.busy(r) and r not in {x.requester for x in held.values()} and rng.random() < 0.3:
                arb.request(r, rng.choice([d for d in range(16) if d != r]), rng.randint(1, 6))
        res = arb.step(t)
        for txn in res.completed:
            del held[txn.id]
        for txn in res.granted:
            for other in held.values():
                assert not set(other.route.segments) & set(txn.route.segments)
            held[txn.id] = txn
        arb.check_coherence()
    assert arb.double_reservations == 0
