"""Bandwidth division, broadcast/linear arbitration and global packet ordering.

Nodes are numbered from 0. Channel shares are whole channels; a remainder
that does not divide evenly among the nodes stays unassigned.
"""
import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import (ConfigError, DomainError, InsufficientBandwidthError, OrderingFault,
                     ProtocolViolation)

SCHEMES = ("fair", "efficient", "grouped")
PRNG_ID = "numpy-pcg64-seedsequence-v1"
LOCAL_ORDER_BITS = 5
DEFAULT_PRIORITY_PERIOD = 64
SEED_LIMIT = 1 << 64


@dataclass(frozen=True)
class BandwidthAllocation:
    n_nodes: int
    total_channels: int
    shares: tuple
    scheme: str
    groups: tuple = None

    @property
    def unit(self):
        """Fair share of one node, in channels."""
        return self.total_channels // self.n_nodes

    @property
    def assigned(self):
        return sum(self.shares)

    @property
    def unassigned(self):
        return self.total_channels - self.assigned

    @property
    def utilization(self):
        """Assigned fraction of the channels that divide evenly among the nodes."""
        return self.assigned / (self.unit * self.n_nodes)

    @property
    def max_share(self):
        return max(self.shares)

    def units(self):
        return tuple(s // self.unit for s in self.shares)


def _check_channels(n, total_channels):
    if n < 1:
        raise DomainError(f"need at least one node, got {n}")
    if total_channels < n:
        raise InsufficientBandwidthError(
            f"{total_channels} channels cannot give each of {n} nodes a channel")


def _check_active(n, active):
    active = set(active)
    bad = [a for a in active if not (isinstance(a, (int, np.integer)) and 0 <= a < n)]
    if bad:
        raise DomainError(f"active nodes {sorted(bad)} outside 0..{n - 1}")
    return active


def divide_fair(n, total_channels):
    _check_channels(n, total_channels)
    unit = total_channels // n
    return BandwidthAllocation(n, total_channels, (unit,) * n, "fair")


def _circular_runs(order, active, unit, shares):
    # each active member takes its own slot plus idle successors up to the next active one
    m = len(order)
    idx = [k for k, node in enumerate(order) if node in active]
    for pos, k in enumerate(idx):
        nxt = idx[(pos + 1) % len(idx)]
        run = (nxt - k) % m or m
        shares[order[k]] = run * unit


def divide_efficient(n, total_channels, active):
    _check_channels(n, total_channels)
    active = _check_active(n, active)
    shares = [0] * n
    _circular_runs(list(range(n)), active, total_channels // n, shares)
    return BandwidthAllocation(n, total_channels, tuple(shares), "efficient")


def check_groups(n, groups):
    groups = tuple(tuple(g) for g in groups)
    members = [m for g in groups for m in g]
    if (any(len(g) == 0 for g in groups) or len(members) != n
            or sorted(members) != list(range(n))):
        raise ConfigError(f"groups: {groups!r} is not a partition of nodes 0..{n - 1}")
    return groups


def divide_grouped(n, total_channels, groups, active):
    """Efficient division inside each group; groups never lend to each other.

    Within a group the circular order is the order its members are listed in.
    """
    _check_channels(n, total_channels)
    groups = check_groups(n, groups)
    active = _check_active(n, active)
    shares = [0] * n
    unit = total_channels // n
    for g in groups:
        _circular_runs(list(g), active, unit, shares)
    return BandwidthAllocation(n, total_channels, tuple(shares), "grouped", groups)


def divide(scheme, n, total_channels, active, groups=None):
    if scheme == "fair":
        alloc = divide_fair(n, total_channels)
        active = _check_active(n, active)
        return BandwidthAllocation(n, total_channels,
                                   tuple(s if i in active else 0 for i, s in enumerate(alloc.shares)),
                                   "fair")
    if scheme == "efficient":
        return divide_efficient(n, total_channels, active)
    if scheme == "grouped":
        if groups is None:
            raise ConfigError("groups: required by the grouped scheme")
        return divide_grouped(n, total_channels, groups, active)
    raise ConfigError(f"scheme: unknown bandwidth scheme {scheme!r} (known: {', '.join(SCHEMES)})")


@dataclass(frozen=True)
class BroadcastGrant:
    request_cycle: int
    grant_cycle: int
    granted: tuple
    allocation: BandwidthAllocation


class BroadcastArbiter:
    """Request/grant over ``n`` dedicated request wavelengths.

    The request wavelengths and ``reserved`` channels (e.g. an access-point lane)
    come out of ``total_channels``; what remains is divided among grantees.
    """

    def __init__(self, n, total_channels, scheme="efficient", groups=None, reserved=0):
        if scheme not in SCHEMES:
            raise ConfigError(f"scheme: unknown bandwidth scheme {scheme!r}")
        if scheme == "grouped":
            groups = check_groups(n, groups or ())
        self.n = n
        self.total_channels = total_channels
        self.scheme = scheme
        self.groups = groups
        self.reserved = reserved
        self.data_channels = total_channels - n - reserved
        if self.data_channels < n:
            raise InsufficientBandwidthError(
                f"{total_channels} channels leave {self.data_channels} data channels after "
                f"{n} request wavelengths and {reserved} reserved; need >= {n}")

    def allocate(self, active):
        return divide(self.scheme, self.n, self.data_channels, active, self.groups)

    def arbitrate(self, requests, cycle=0):
        requests = tuple(sorted(_check_active(self.n, requests)))
        alloc = self.allocate(requests)
        grant_cycle = cycle + 1 if requests else None
        return BroadcastGrant(cycle, grant_cycle, requests, alloc)


def broadcast_arbitrate(requests, arbiter, cycle=0):
    return arbiter.arbitrate(requests, cycle)


@dataclass(frozen=True)
class PriorityEpoch:
    seed: int
    epoch: int
    period: int
    ranks: tuple          # ranks[node]; 0 is the highest priority
    prng: str = PRNG_ID

    @property
    def order(self):
        return tuple(sorted(range(len(self.ranks)), key=self.ranks.__getitem__))

    @property
    def top(self):
        return self.order[0]


def _rng(*words):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(list(words))))


def _check_seed(seed):
    if not (isinstance(seed, (int, np.integer)) and 0 <= seed < SEED_LIMIT):
        raise DomainError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
    return int(seed)


def rotate_priorities(seed, epoch, n, period=DEFAULT_PRIORITY_PERIOD):
    """Shared-seed pseudo-random priority permutation for one epoch.

    The top rank walks a seed-fixed random cyclic order of the nodes, so every
    node holds rank 0 once in any ``n`` consecutive epochs; the remaining ranks
    are a fresh permutation each epoch.
    """
    seed = _check_seed(seed)
    if n < 1 or epoch < 0 or period < 1:
        raise DomainError("need n >= 1, epoch >= 0, period >= 1")
    cycle_order = _rng(seed, 0).permutation(n)
    top = int(cycle_order[epoch % n])
    rest = [v for v in range(n) if v != top]
    perm = _rng(seed, 1, epoch).permutation(len(rest)) if rest else []
    order = [top] + [rest[i] for i in perm]
    ranks = [0] * n
    for rank, node in enumerate(order):
        ranks[node] = rank
    return PriorityEpoch(seed, epoch, period, tuple(ranks))


class PrioritySchedule:
    """Per-cycle lookup of the epoch permutation, cached per epoch."""

    def __init__(self, seed, n, period=DEFAULT_PRIORITY_PERIOD):
        self.seed = _check_seed(seed)
        self.n = n
        self.period = period
        self._cache = {}

    def epoch_of(self, cycle):
        return cycle // self.period

    def at(self, cycle):
        e = cycle // self.period
        pe = self._cache.get(e)
        if pe is None:
            if len(self._cache) > 64:
                self._cache.clear()
            pe = self._cache[e] = rotate_priorities(self.seed, e, self.n, self.period)
        return pe


@dataclass(frozen=True)
class OrderTag:
    completion_time: int
    local_order: int
    domain_of_origin: int = 0

    def __post_init__(self):
        if not 0 <= self.local_order < 1 << LOCAL_ORDER_BITS:
            raise DomainError(f"local order must fit in {LOCAL_ORDER_BITS} bits, got {self.local_order}")

    @property
    def key(self):
        return (self.completion_time, self.local_order, self.domain_of_origin)


def relay_tag(tag, relay_order, completion_time):
    """Tag of a packet re-sent into a domain: it takes the relaying node's order."""
    return OrderTag(completion_time, relay_order, tag.domain_of_origin)


def global_order(tags):
    """Total order by completion time, then local order (origin domain breaks relay ties)."""
    tags = list(tags)
    keys = [t.key for t in tags]
    if len(set(keys)) != len(keys):
        seen = set()
        dup = next(k for k in keys if k in seen or seen.add(k))
        raise OrderingFault(f"duplicate order tag {dup}")
    return sorted(tags, key=lambda t: t.key)


# ---------------------------------------------------------------- linear network

FREE = None


class LinearReservationTable:
    """One node's copy of the segment table: ``None`` or ``(requester, txn_id)`` per segment."""

    __slots__ = ("slots", "held")

    def __init__(self, n_segments):
        self.slots = [FREE] * n_segments
        self.held = set()         # mirrors the non-FREE slots; makes the phase-1 lookup one set test

    def is_clear(self, segments):
        return self.held.isdisjoint(segments)

    def reserve(self, segments, owner):
        for s in segments:
            if self.slots[s] is not FREE:
                raise ProtocolViolation(f"segment {s} already held by {self.slots[s]}")
            self.slots[s] = owner
        self.held.update(segments)

    def clear(self, segments, owner):
        for s in segments:
            if self.slots[s] != owner:
                raise ProtocolViolation(f"segment {s} not held by {owner}")
            self.slots[s] = FREE
        self.held.difference_update(segments)

    def __eq__(self, other):
        return self.slots == other.slots

    def __len__(self):
        return len(self.slots)


@dataclass
class Transaction:
    id: int
    requester: int
    src: int
    dst: int
    route: object
    duration: int
    request_cycle: int
    reserve_cycle: int = None
    payload: object = None

    @property
    def start_cycle(self):
        return self.reserve_cycle + 1

    @property
    def end_cycle(self):
        """Last cycle of the transfer; phase 6 releases at the end of it."""
        return self.reserve_cycle + self.duration

    @property
    def complete_cycle(self):
        return self.end_cycle + 1

    @property
    def owner(self):
        return (self.requester, self.id)


@dataclass(frozen=True)
class Retry:
    requester: int
    reason: str


def find_clear_route(table, routes):
    """Phase-1 lookup: first route whose segments are all free in ``table``."""
    for route in routes:
        if table.is_clear(route.segments):
            return route
    return None


def linear_arbitrate(requests, table, epoch):
    """Resolve one round of same-cycle linear-network requests (phase 4).

    ``requests`` maps requester -> candidate routes (shortest first). In rank
    order each requester takes its first route that is free in ``table`` and
    not claimed by a higher-ranked loser; a loser claims its shortest route so
    lower ranks cannot keep starving it. Returns requester -> route or Retry.
    ``table`` is not modified.
    """
    ranks = epoch.ranks
    blocked = set(table.held)     # held, taken by a higher rank, or claimed by a higher-ranked loser
    out = {}
    for req in sorted(requests, key=ranks.__getitem__):
        routes = requests[req]
        chosen = None
        for route in routes:
            if blocked.isdisjoint(route.segments):
                chosen = route
                break
        if chosen is None:
            out[req] = Retry(req, "no clear path")
            if routes:
                blocked.update(routes[0].segments)
        else:
            out[req] = chosen
            blocked.update(chosen.segments)
    return out


@dataclass
class StepResult:
    granted: list = field(default_factory=list)
    completed: list = field(default_factory=list)
    retried: list = field(default_factory=list)


class LinearArbiter:
    """Six-phase circuit reservation over replicated per-node lookup tables.

    Cycle t of a request: (1) lookup in the requester's table, (2) raise the
    request signal. Cycle t+1: (3) broadcast the destination, (4) every node
    marks the chosen segments. Cycles t+2.. t+1+D: (5) data transfer. End of
    the last transfer cycle: (6) drop the signal, every node clears.

    ``attach`` maps extra requesters (e.g. an access point) onto the node whose
    access points they share.
    """

    def __init__(self, topology, seed=0, period=DEFAULT_PRIORITY_PERIOD, attach=None,
                 trace=False, check_every_cycle=True):
        self.topology = topology
        self.attach = dict(attach or {})
        self.n_requesters = topology.n_nodes + len(self.attach)
        for req in self.attach:
            if req < topology.n_nodes:
                raise ConfigError(f"attach: requester {req} collides with a node id")
        self.priorities = PrioritySchedule(seed, self.n_requesters, period)
        n_seg = topology.n_segments
        self.tables = [LinearReservationTable(n_seg) for _ in range(topology.n_nodes)]
        self.check_every_cycle = check_every_cycle
        self._route_cache = {}
        self._new = []            # (requester, dst, duration, payload, cycle)
        self._signaled = {}       # requester -> Transaction (reserve_cycle None)
        self._live = {}           # txn id -> Transaction
        self._release_at = {}     # cycle -> [txn]
        self._next_id = 1
        self._version = 0
        self._denied_fp = None
        self.monitor = {}         # independent segment -> txn id map for the safety check
        self.double_reservations = 0
        self.trace_rows = [] if trace else None

    def node_of(self, requester):
        return self.attach.get(requester, requester)

    def routes(self, src_node, dst_node):
        key = (src_node, dst_node)
        r = self._route_cache.get(key)
        if r is None:
            r = self._route_cache[key] = tuple(self.topology.routes(src_node, dst_node))
        return r

    def busy(self, requester):
        return requester in self._signaled or any(r == requester for r, *_ in self._new)

    @property
    def idle(self):
        return not (self._new or self._signaled or self._live)

    def request(self, requester, dst, duration, payload=None, cycle=None):
        """Queue a request for the next ``step``; ``duration`` may be a function of the granted route."""
        if not 0 <= requester < self.n_requesters:
            raise DomainError(f"unknown requester {requester}")
        if self.node_of(requester) == dst:
            raise DomainError("linear request to the requester's own node")
        if not callable(duration) and duration < 1:
            raise DomainError("transfer duration must be >= 1 cycle")
        if self.busy(requester):
            raise DomainError(f"requester {requester} already has a pending request")
        self._new.append((requester, dst, duration, payload, cycle))

    def _log(self, cycle, node, phase, segments, outcome):
        if self.trace_rows is not None:
            self.trace_rows.append((cycle, node, phase, " ".join(map(str, segments)), outcome))

    def step(self, cycle):
        result = StepResult()
        epoch = self.priorities.epoch_of(cycle)
        changed = False
        if self._signaled and self._denied_fp != (self._version, epoch):
            changed |= self._phase4(cycle, result)
        if self._new:
            self._phase12(cycle)
        releases = self._release_at.pop(cycle, None)
        if releases:
            for txn in releases:
                self._phase6(cycle, txn, result)
            changed = True
        if changed and self.check_every_cycle:
            self.check_coherence()
        return result

    def _phase12(self, cycle):
        own = self.tables
        for requester, dst, duration, payload, req_cycle in self._new:
            node = self.node_of(requester)
            routes = self.routes(node, dst)
            txn = Transaction(self._next_id, requester, node, dst, None, duration,
                              cycle if req_cycle is None else req_cycle, payload=payload)
            self._next_id += 1
            clear = find_clear_route(own[node], routes)
            self._log(cycle, requester, 1, clear.segments if clear else (),
                      "clear" if clear else "retry")
            self._log(cycle, requester, 2, (), "signal")
            self._signaled[requester] = txn
        self._new = []
        self._version += 1

    def _phase4(self, cycle, result):
        pe = self.priorities.at(cycle)
        requests = {r: self.routes(t.src, t.dst) for r, t in self._signaled.items()}
        decisions = linear_arbitrate(requests, self.tables[0], pe)
        granted_any = False
        for requester, decision in decisions.items():
            txn = self._signaled[requester]
            if isinstance(decision, Retry):
                self._log(cycle, requester, 4, (), "deny")
                result.retried.append(requester)
                continue
            del self._signaled[requester]
            txn.route = decision
            txn.reserve_cycle = cycle
            if callable(txn.duration):
                txn.duration = txn.duration(decision)
                if txn.duration < 1:
                    raise DomainError("transfer duration must be >= 1 cycle")
            self._log(cycle, requester, 3, (), f"dst={txn.dst}")
            for table in self.tables:
                table.reserve(decision.segments, txn.owner)
            self._monitor_reserve(txn)
            self._log(cycle, requester, 4, decision.segments, "grant")
            self._live[txn.id] = txn
            self._release_at.setdefault(txn.end_cycle, []).append(txn)
            result.granted.append(txn)
            granted_any = True
        if granted_any:
            self._version += 1
            self._denied_fp = None
        else:
            self._denied_fp = (self._version, self.priorities.epoch_of(cycle))
        return granted_any

    def _phase6(self, cycle, txn, result):
        for table in self.tables:
            table.clear(txn.route.segments, txn.owner)
        for s in txn.route.segments:
            self.monitor.pop(s, None)
        del self._live[txn.id]
        self._version += 1
        self._denied_fp = None
        self._log(cycle, txn.requester, 5, txn.route.segments, f"transfer {txn.duration}")
        self._log(cycle, txn.requester, 6, txn.route.segments, "release")
        result.completed.append(txn)

    def _monitor_reserve(self, txn):
        for s in txn.route.segments:
            holder = self.monitor.get(s)
            if holder is not None and holder in self._live:
                self.double_reservations += 1
            self.monitor[s] = txn.id

    def check_coherence(self):
        ref = self.tables[0]
        for node, table in enumerate(self.tables[1:], 1):
            if table != ref:
                bad = [s for s, (a, b) in enumerate(zip(ref.slots, table.slots)) if a != b]
                raise ProtocolViolation(f"node {node} table diverges at segments {bad}")

    def trace_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["cycle", "node", "phase", "segments", "outcome"])
        writer.writerows(self.trace_rows or [])
        return buf.getvalue()
