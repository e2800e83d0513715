"""Cycle-driven simulation of the two-level broadcast + linear network.

Multicasts ride the broadcast networks; cache-line unicasts ride the linear
networks. A domain's access point sits at local node 0, owns a dedicated lane
on the local broadcast network and shares node 0's linear access points.
"""
import csv
import heapq
import io
import json
import math
from collections import defaultdict, deque
from dataclasses import dataclass, field

import numpy as np

from .. import __version__
from ..config import from_dict, to_dict
from ..errors import ConfigError, RoutingFault
from ..flow import (LOCAL_ORDER_BITS, SCHEMES, BroadcastArbiter, LinearArbiter, OrderTag,
                    check_groups, relay_tag)
from ..optics import DeviceCatalog, energy_per_bit, link_budget, required_laser_power
from ..topology import HierarchicalTopology
from .bloom import BloomFilter, bloom_insert, bloom_query
from .traffic import MULTICAST, UNICAST, TrafficConfig, generate_traffic

SPEED_OF_LIGHT_CM_PER_PS = 0.0299792458


@dataclass(frozen=True)
class TopologyConfig:
    total_cores: int = 64
    domain_size: int = 32
    chip_side: float = 2.0


@dataclass(frozen=True)
class NetworkConfig:
    local_broadcast_channels: int = 128
    global_broadcast_channels: int = 64
    linear_channels: int = 64
    global_linear_channels: int = 64
    access_point_channels: int = 1
    bits_per_channel_cycle: int = 2
    scheme: str = "efficient"
    groups: tuple = None
    priority_period: int = 64
    regeneration_cycles: int = 1
    modulator: str = "electro-optic"


@dataclass(frozen=True)
class SimConfig:
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    catalog: dict = field(default_factory=dict)     # DeviceCatalog overrides
    bloom_bits: int = 1024
    bloom_hashes: int = 7
    horizon: int = 2000
    seed: int = 0
    clock_ps: float = 200.0
    group_index: float = 4.0
    trace: bool = False
    record_deliveries: bool = False

    @classmethod
    def from_dict(cls, data, prefix=""):
        return from_dict(cls, data, prefix)

    def to_dict(self):
        return to_dict(self)


@dataclass
class Packet:
    id: int
    kind: str
    src: int
    dst: int
    size: int
    inject_time: int
    address: int
    complete_time: int = None
    order_tag: OrderTag = None
    global_: bool = False
    pending: int = 0

    @property
    def latency(self):
        return None if self.complete_time is None else self.complete_time - self.inject_time


@dataclass
class AccessPoint:
    domain: int
    bloom: BloomFilter
    regeneration_cycles: int = 1
    occupancy: int = 0
    max_occupancy: int = 0

    def enter(self):
        self.occupancy += 1
        self.max_occupancy = max(self.max_occupancy, self.occupancy)

    def leave(self):
        self.occupancy -= 1


@dataclass(frozen=True)
class RouteDecision:
    legs: tuple             # e.g. ("local-linear", "global-linear", "local-linear")
    access_point_regenerations: int

    @property
    def uses_global(self):
        return any(leg.startswith("global") for leg in self.legs)


def route(packet, hierarchy, access_points):
    """Which networks a packet traverses; multicasts consult the source domain's filter."""
    da, la = hierarchy.locate(packet.src)
    if packet.kind == MULTICAST:
        if bloom_query(access_points[da], packet.address):
            return RouteDecision(("local-broadcast", "global-broadcast", "local-broadcast"), 2)
        return RouteDecision(("local-broadcast",), 0)
    if packet.kind != UNICAST:
        raise RoutingFault(f"unknown packet kind {packet.kind!r}")
    db, lb = hierarchy.locate(packet.dst)
    if da == db:
        return RouteDecision(("local-linear",), 0)
    ap = hierarchy.access_point_node
    legs = (("local-linear",) if la != ap else ()) + ("global-linear",) + \
           (("local-linear",) if lb != ap else ())
    return RouteDecision(legs, 2)


def validate(config):
    """Every configuration problem, as dotted-key messages."""
    out = []
    t, n = config.topology, config.network
    try:
        hier = HierarchicalTopology(t.total_cores, t.domain_size, t.chip_side)
    except ConfigError as exc:
        out.extend(f"topology.{m}" for m in exc.messages)
        hier = None
    if t.domain_size > 1 << LOCAL_ORDER_BITS:
        out.append(f"topology.domain_size: local orders must fit {LOCAL_ORDER_BITS} bits "
                   f"(<= {1 << LOCAL_ORDER_BITS} nodes), got {t.domain_size}")
    out.extend(config.traffic.problems(t.total_cores))
    if n.scheme not in SCHEMES:
        out.append(f"network.scheme: unknown scheme {n.scheme!r}")
    elif n.scheme == "grouped":
        try:
            check_groups(t.domain_size, n.groups or ())
        except ConfigError as exc:
            out.append(f"network.{exc.messages[0]}")
    if n.local_broadcast_channels - t.domain_size - n.access_point_channels < t.domain_size:
        out.append(f"network.local_broadcast_channels: {n.local_broadcast_channels} leaves fewer "
                   f"than {t.domain_size} data channels after request wavelengths and the "
                   f"access-point lane")
    if hier is not None and n.global_broadcast_channels < 2 * hier.n_domains:
        out.append(f"network.global_broadcast_channels: need >= {2 * hier.n_domains}")
    for name in ("linear_channels", "global_linear_channels", "access_point_channels",
                 "bits_per_channel_cycle", "priority_period"):
        if getattr(n, name) < 1:
            out.append(f"network.{name}: must be >= 1")
    if n.regeneration_cycles < 0:
        out.append("network.regeneration_cycles: must be >= 0")
    for name in ("bloom_bits", "bloom_hashes"):
        if getattr(config, name) < 1:
            out.append(f"{name}: must be >= 1")
    if config.horizon < 0:
        out.append("horizon: must be >= 0")
    if not (isinstance(config.seed, int) and 0 <= config.seed < 1 << 64):
        out.append("seed: must be an unsigned 64-bit integer")
    if config.clock_ps <= 0 or config.group_index <= 0:
        out.append("clock_ps/group_index: must be > 0")
    try:
        cat = DeviceCatalog.from_dict(config.catalog)
        if n.modulator not in cat.modulator_energy:
            out.append(f"network.modulator: unknown kind {n.modulator!r}")
    except ConfigError as exc:
        out.extend(f"catalog.{m}" for m in exc.messages)
    if not out and hier is not None:
        sim_probe = _Timing(config, hier)
        need = 2 * (sim_probe.max_linear_duration + 3)
        if n.priority_period < need:
            out.append(f"network.priority_period: must be >= {need} (twice the longest "
                       f"transfer plus three) for the starvation bound")
    return out


class _Timing:
    def __init__(self, config, hier):
        self.clock = config.clock_ps
        self.v = SPEED_OF_LIGHT_CM_PER_PS / config.group_index
        net = config.network
        self.bpc = net.bits_per_channel_cycle
        self.cacheline = config.traffic.cacheline_bits
        self.local_bcast_prop = self.cycles(_max_broadcast_length(hier.local_broadcast))
        self.global_bcast_prop = self.cycles(_max_broadcast_length(hier.global_broadcast))
        self.max_linear_duration = max(
            1 + self.cycles(hier.local_linear.total_length)
            + math.ceil(self.cacheline / (net.linear_channels * self.bpc)),
            1 + self.cycles(hier.global_linear.total_length)
            + math.ceil(self.cacheline / (net.global_linear_channels * self.bpc)))

    def cycles(self, length_cm):
        return math.ceil(length_cm / self.v / self.clock - 1e-9)


def _max_broadcast_length(topo):
    return max(topo.route(s, d).length for s in range(topo.n_nodes) for d in range(topo.n_nodes))


class _BroadcastNet:
    """Request/grant broadcast medium plus an optional dedicated lane."""

    def __init__(self, arbiter, bpc, lane_channels=0):
        self.arbiter = arbiter
        self.bpc = bpc
        self.queues = [deque() for _ in range(arbiter.n)]
        self.current = {}          # node -> [packet, remaining bits]
        self.granted_next = ()
        self.lane_channels = lane_channels
        self.lane = deque()
        self.lane_current = None
        self.capacity_bits = arbiter.data_channels * bpc
        self.max_load = 0.0
        self.bits = 0
        self.lane_bits = 0

    def step(self, t):
        finished = []
        for node in self.granted_next:
            pkt = self.queues[node].popleft()
            self.current[node] = [pkt, pkt.size]
        self.granted_next = ()
        if self.current:
            active = sorted(self.current)
            alloc = self.arbiter.allocate(active)
            used = 0
            for node in active:
                entry = self.current[node]
                send = alloc.shares[node] * self.bpc
                used += send
                self.bits += min(send, entry[1])
                entry[1] -= send
                if entry[1] <= 0:
                    finished.append((node, entry[0]))
                    del self.current[node]
            self.max_load = max(self.max_load, used / self.capacity_bits)
        waiting = [i for i, q in enumerate(self.queues) if q and i not in self.current]
        if waiting:
            self.granted_next = self.arbiter.arbitrate(waiting, t).granted
        lane_done = None
        if self.lane_current is None and self.lane:
            pkt = self.lane.popleft()
            self.lane_current = [pkt, pkt.size]
        if self.lane_current is not None:
            send = self.lane_channels * self.bpc
            self.lane_bits += min(send, self.lane_current[1])
            self.lane_current[1] -= send
            if self.lane_current[1] <= 0:
                lane_done = self.lane_current[0]
                self.lane_current = None
        return finished, lane_done

    @property
    def busy(self):
        return bool(self.current or self.granted_next or self.lane or self.lane_current
                    or any(self.queues))


class _LinearNet:
    """Per-requester FIFO in front of a LinearArbiter; one transaction per requester at a time."""

    def __init__(self, topology, seed, period, channels, timing, attach=None):
        self.arbiter = LinearArbiter(topology, seed=seed, period=period, attach=attach)
        self.queues = defaultdict(deque)
        self.busy = set()
        self.timing = timing
        self.channels = channels
        self.max_wait = 0
        self.bits = 0

    def duration(self, packet):
        """Circuit hold time: one setup cycle, flight time, then serialization."""
        ser = math.ceil(packet.size / (self.channels * self.timing.bpc))
        return lambda r: 1 + self.timing.cycles(r.length) + ser

    def enqueue(self, requester, packet, dst, on_done):
        self.queues[requester].append((packet, dst, on_done))

    def step(self, t, schedule):
        for req in sorted(r for r, q in self.queues.items() if q and r not in self.busy):
            packet, dst, on_done = self.queues[req].popleft()
            self.arbiter.request(req, dst, self.duration(packet), payload=(packet, on_done), cycle=t)
            self.busy.add(req)
        res = self.arbiter.step(t)
        for txn in res.granted:
            self.max_wait = max(self.max_wait, txn.reserve_cycle - txn.request_cycle)
        for txn in res.completed:
            self.busy.discard(txn.requester)
            packet, on_done = txn.payload
            self.bits += packet.size
            schedule(txn.complete_cycle, on_done, txn)

    @property
    def active(self):
        return bool(self.busy or any(self.queues.values()))


@dataclass
class Metrics:
    data: dict

    def to_json(self):
        return json.dumps(self.data, sort_keys=True, indent=2) + "\n"


def _summary(values):
    if not values:
        return None
    arr = np.asarray(values, dtype=float)
    return {"count": int(arr.size), "mean": float(arr.mean()), "p50": float(np.percentile(arr, 50)),
            "p95": float(np.percentile(arr, 95)), "p99": float(np.percentile(arr, 99)),
            "max": float(arr.max())}


class Simulator:
    def __init__(self, config):
        problems = validate(config)
        if problems:
            raise ConfigError(problems)
        self.config = config
        t, n = config.topology, config.network
        self.hier = HierarchicalTopology(t.total_cores, t.domain_size, t.chip_side)
        self.catalog = DeviceCatalog.from_dict(config.catalog)
        self.timing = _Timing(config, self.hier)
        m, size = self.hier.n_domains, t.domain_size
        self.ap_node = self.hier.access_point_node
        self.ap_requester = size
        self.aps = [AccessPoint(d, BloomFilter(config.bloom_bits, config.bloom_hashes),
                                n.regeneration_cycles) for d in range(m)]
        bpc = n.bits_per_channel_cycle
        self.local_bcast = [
            _BroadcastNet(BroadcastArbiter(size, n.local_broadcast_channels, n.scheme, n.groups,
                                           reserved=n.access_point_channels), bpc,
                          n.access_point_channels) for _ in range(m)]
        self.global_bcast = _BroadcastNet(BroadcastArbiter(m, n.global_broadcast_channels), bpc)
        seeds = np.random.SeedSequence([config.seed, 1]).generate_state(m + 1, dtype=np.uint64)
        self.local_linear = [
            _LinearNet(self.hier.local_linear, int(seeds[d]), n.priority_period, n.linear_channels,
                       self.timing, attach={self.ap_requester: self.ap_node}) for d in range(m)]
        self.global_linear = _LinearNet(self.hier.global_linear, int(seeds[m]), n.priority_period,
                                        n.global_linear_channels, self.timing)
        self.packets = []
        self.timeline = defaultdict(list)
        self.buffers = [[] for _ in range(m)]
        self.deliveries = [[] for _ in range(m)]
        self.truth = [set() for _ in range(m)]     # addresses each domain exchanged across domains
        self.bloom_false_negatives = 0
        self.bloom_false_positives = 0
        self.energy_fj = 0.0
        self.traffic = generate_traffic(config.traffic, config.seed, t.total_cores, config.horizon,
                                        size)

    # -- plumbing
    def schedule(self, cycle, fn, *args):
        self.timeline[cycle].append((fn, args))

    def _leg_energy(self, bits, regens):
        self.energy_fj += bits * energy_per_bit(self.config.network.modulator, regens, self.catalog)

    def _complete(self, packet, cycle):
        packet.complete_time = cycle if packet.complete_time is None else max(packet.complete_time, cycle)

    # -- injection
    def _inject(self, inj, t):
        tc = self.config.traffic
        size = tc.multicast_bits if inj.kind == MULTICAST else tc.cacheline_bits
        p = Packet(len(self.packets), inj.kind, inj.src, inj.dst, size, t, inj.address)
        self.packets.append(p)
        da, la = self.hier.locate(p.src)
        if p.kind == MULTICAST:
            self.local_bcast[da].queues[la].append(p)
            return
        db, lb = self.hier.locate(p.dst)
        if da == db:
            self.local_linear[da].enqueue(la, p, lb, lambda c, txn: self._unicast_done(p, c, txn))
            return
        p.global_ = True
        for d in (da, db):
            bloom_insert(self.aps[d], p.address)
            self.truth[d].add(p.address)
        if la == self.ap_node:
            self._ap_egress(p, da, t)
        else:
            self.local_linear[da].enqueue(la, p, self.ap_node,
                                          lambda c, txn: self._leg_then(txn, self._ap_egress, p, da, c))

    def _leg_then(self, txn, fn, p, d, cycle):
        self._leg_energy(p.size, len(txn.route.regen_points))
        fn(p, d, cycle)

    def _unicast_done(self, p, cycle, txn):
        self._leg_energy(p.size, len(txn.route.regen_points))
        self._complete(p, cycle)

    def _ap_egress(self, p, d, cycle):
        ap = self.aps[d]
        ap.enter()
        db, lb = self.hier.locate(p.dst)

        def global_done(c, txn):
            ap.leave()
            self._leg_then(txn, self._ap_ingress, p, db, c)

        self.schedule(cycle + ap.regeneration_cycles, lambda c: self.global_linear.enqueue(
            d, p, db, global_done))

    def _ap_ingress(self, p, d, cycle):
        ap = self.aps[d]
        ap.enter()
        _, lb = self.hier.locate(p.dst)
        ready = cycle + ap.regeneration_cycles
        if lb == self.ap_node:
            ap.leave()
            self._complete(p, ready)
            return

        def local_done(c, txn):
            ap.leave()
            self._unicast_done(p, c, txn)

        self.schedule(ready, lambda c: self.local_linear[d].enqueue(self.ap_requester, p, lb, local_done))

    # -- broadcast
    def _local_bcast_done(self, d, node, p, t):
        p.order_tag = OrderTag(t, node, d)
        heapq.heappush(self.buffers[d], (p.order_tag.key, p.id))
        self._leg_energy(p.size, 0)
        arrive = t + 1 + self.timing.local_bcast_prop
        self._complete(p, arrive)
        decision = route(p, self.hier, self.aps)
        genuine = p.address in self.truth[d]
        if genuine and not decision.uses_global:
            self.bloom_false_negatives += 1
        if decision.uses_global:
            if not genuine:
                self.bloom_false_positives += 1
            p.global_ = True
            ap = self.aps[d]
            ap.enter()
            p.pending = self.hier.n_domains - 1
            self.schedule(arrive + ap.regeneration_cycles,
                          lambda c: self.global_bcast.queues[d].append(p))

    def _global_bcast_done(self, d, p, t):
        self.aps[d].leave()
        self._leg_energy(p.size, self.hier.global_broadcast_regens)
        arrive = t + 1 + self.timing.global_bcast_prop
        for e in range(self.hier.n_domains):
            if e == d:
                continue
            ap = self.aps[e]
            self.schedule(arrive, lambda c, ap=ap: ap.enter())
            self.schedule(arrive + ap.regeneration_cycles,
                          lambda c, e=e: self.local_bcast[e].lane.append(p))

    def _relay_done(self, e, p, t):
        self.aps[e].leave()
        tag = relay_tag(p.order_tag, self.ap_node, t)
        heapq.heappush(self.buffers[e], (tag.key, p.id))
        self._leg_energy(p.size, 0)
        p.pending -= 1
        self._complete(p, t + 1 + self.timing.local_bcast_prop)

    def _flush(self, t):
        hold = self.timing.local_bcast_prop + 1
        for d, buf in enumerate(self.buffers):
            while buf and buf[0][0][0] <= t - hold:
                key, pid = heapq.heappop(buf)
                if self.config.record_deliveries:
                    self.deliveries[d].append((OrderTag(*key), pid))

    # -- main loop
    def run(self):
        horizon = self.config.horizon
        inj = iter(self.traffic)
        nxt = next(inj, None)
        for t in range(horizon):
            while nxt is not None and nxt.cycle == t:
                self._inject(nxt, t)
                nxt = next(inj, None)
            for fn, args in self.timeline.pop(t, ()):
                fn(t, *args)
            for net in self.local_linear:
                net.step(t, self.schedule)
            self.global_linear.step(t, self.schedule)
            for d, net in enumerate(self.local_bcast):
                finished, relayed = net.step(t)
                for node, p in finished:
                    self._local_bcast_done(d, node, p, t)
                if relayed is not None:
                    self._relay_done(d, relayed, t)
            for d, p in self.global_bcast.step(t)[0]:
                self._global_bcast_done(d, p, t)
            self._flush(t)
        return self.metrics()

    def _done(self, p):
        return p.complete_time is not None and p.complete_time <= self.config.horizon and p.pending == 0

    def metrics(self):
        cfg = self.config
        horizon = cfg.horizon
        done = [p for p in self.packets if self._done(p)]
        by_kind = {k: [p.latency for p in done if p.kind == k] for k in (MULTICAST, UNICAST)}
        per_cycle = (lambda bits: bits / horizon) if horizon else (lambda bits: 0.0)
        n = cfg.network
        data = {
            "version": __version__,
            "seed": cfg.seed,
            "config": cfg.to_dict(),
            "prng": "numpy-pcg64-seedsequence-v1",
            "packets": {
                "injected": len(self.packets),
                "completed": len(done),
                "in_flight": len(self.packets) - len(done),
                "by_kind": {k: sum(1 for p in self.packets if p.kind == k) for k in (MULTICAST, UNICAST)},
            },
            "latency_cycles": {k: _summary(v) for k, v in by_kind.items()},
            "throughput_bits_per_cycle": {
                "local_broadcast": per_cycle(sum(b.bits + b.lane_bits for b in self.local_bcast)),
                "global_broadcast": per_cycle(self.global_bcast.bits),
                "local_linear": per_cycle(sum(l.bits for l in self.local_linear)),
                "global_linear": per_cycle(self.global_linear.bits),
            },
            "capacity_bits_per_cycle": {
                "local_broadcast": self.local_bcast[0].capacity_bits,
                "global_broadcast": self.global_bcast.capacity_bits,
                "local_linear": n.linear_channels * n.bits_per_channel_cycle,
                "global_linear": n.global_linear_channels * n.bits_per_channel_cycle,
            },
            "max_broadcast_load": max([b.max_load for b in self.local_bcast] + [self.global_bcast.max_load]),
            "global_traffic_fraction": (sum(1 for p in self.packets if p.global_) / len(self.packets)
                                        if self.packets else 0.0),
            "energy_fj": self.energy_fj,
            "laser_power_mw": self.laser_power(),
            "bloom": {
                "false_negatives": self.bloom_false_negatives,
                "false_positive_forwards": self.bloom_false_positives,
            },
            "access_point_max_occupancy": [ap.max_occupancy for ap in self.aps],
            "arbitration": {
                "max_linear_grant_wait": max([l.max_wait for l in self.local_linear]
                                             + [self.global_linear.max_wait]),
                "double_reservations": sum(l.arbiter.double_reservations
                                           for l in self.local_linear + [self.global_linear]),
            },
        }
        return Metrics(data)

    def laser_power(self):
        h, cat = self.hier, self.catalog
        out = {}
        for name, topo in (("local_broadcast", h.local_broadcast), ("global_broadcast", h.global_broadcast)):
            worst = max(link_budget(topo.path(s, d, cat), cat).worst_span_db
                        for s in range(topo.n_nodes) for d in range(topo.n_nodes))
            out[name] = required_laser_power(worst, cat.rx_sensitivity)
        for name, topo in (("local_linear", h.local_linear), ("global_linear", h.global_linear)):
            worst = max(link_budget(topo.path_for_route(r, cat), cat).worst_span_db
                        for s in range(topo.n_nodes) for d in range(topo.n_nodes) if s != d
                        for r in topo.routes(s, d))
            out[name] = required_laser_power(worst, cat.rx_sensitivity)
        return out

    def trace_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["packet", "kind", "src", "dst", "inject", "complete"])
        for p in self.packets:
            w.writerow([p.id, p.kind, p.src, "" if p.kind == MULTICAST else p.dst, p.inject_time,
                        "" if not self._done(p) else p.complete_time])
        return buf.getvalue()


def run(config):
    """Simulate ``config`` and return its Metrics."""
    return Simulator(config).run()


__all__ = ["AccessPoint", "Metrics", "Packet", "RouteDecision", "SimConfig",
           "Simulator", "NetworkConfig", "TopologyConfig", "route", "run", "validate"]
