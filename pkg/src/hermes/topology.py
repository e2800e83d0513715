"""Broadcast butterfly, serpentine linear and two-level hierarchical layouts.

Geometry is model-derived: nodes sit on a square chip of side ``chip_side``
(cm) in Z-order, so aligned groups of 2, 4, 8 ... nodes are spatially compact.
"""
import math
from dataclasses import dataclass, field
from functools import cached_property

from . import optics
from .errors import ConfigError, DomainError, RoutingFault, UnsupportedSizeError
from .optics import DEFAULT_CATALOG, OpticalPath, Segment

DEFAULT_CHIP_SIDE = 2.0
LOCAL_CLUSTER = 8          # nodes per cluster before the direct inter-cluster links
NOMINAL_LEVEL_DB = 3.0     # rounded per-level figure used by the level/crossing tradeoff
LOCAL_LINEAR_REGENS = 2
GLOBAL_LINEAR_REGENS = 8
GLOBAL_BROADCAST_REGENS = 1


def is_power_of_two(n):
    return isinstance(n, int) and n >= 1 and n & (n - 1) == 0


def grid_shape(n):
    """(rows, cols) of the Z-order grid holding ``n`` (a power of two) nodes."""
    k = n.bit_length() - 1
    cols = 1 << ((k + 1) // 2)
    return n // cols, cols


def morton_cell(i):
    x = y = 0
    bit = 0
    while i:
        x |= (i & 1) << bit
        y |= ((i >> 1) & 1) << bit
        i >>= 2
        bit += 1
    return x, y


def node_coords(n, side):
    rows, cols = grid_shape(n)
    out = []
    for i in range(n):
        x, y = morton_cell(i)
        out.append(((x + 0.5) * side / cols, (y + 0.5) * side / rows))
    return out


def _dist(a, b):
    return math.hypot(a[0] - b[0], a[1] - b[1])


@dataclass(frozen=True)
class Coupler:
    id: str
    level: int
    x: float
    y: float
    ports: tuple


@dataclass(frozen=True)
class Link:
    src: str
    dst: str
    length: float
    crossings: int = 0
    feedback: bool = False


@dataclass(frozen=True)
class BroadcastRoute:
    src: int
    dst: int
    hops: tuple           # Link records in traversal order
    split_levels: int
    regenerate_after: int = None   # hop index after which a regeneration sits

    @property
    def length(self):
        return sum(h.length for h in self.hops)

    @property
    def crossings(self):
        return sum(h.crossings for h in self.hops)

    @property
    def feedback(self):
        return any(h.feedback for h in self.hops)


def _node_id(i):
    return f"n{i}"


@dataclass(frozen=True)
class BroadcastTopology:
    """Folded 2-ary butterfly of 2x2 adiabatic couplers.

    Every path crosses one coupler per level. Levels past the third reach the
    rest of the chip over direct links that cross one waveguide; a source hears
    itself over a dedicated feedback link that crosses the outgoing bundle once
    more.
    """
    n_nodes: int
    extra_levels: int = 0
    chip_side: float = DEFAULT_CHIP_SIDE
    regeneration_after_level: int = None

    def __post_init__(self):
        if not is_power_of_two(self.n_nodes) or not 2 <= self.n_nodes <= 1024:
            raise UnsupportedSizeError(
                f"broadcast size must be a power of two in [2, 1024], got {self.n_nodes}")
        if self.extra_levels < 0:
            raise DomainError("extra_levels must be >= 0")
        if self.chip_side <= 0:
            raise DomainError("chip_side must be > 0")

    @property
    def base_levels(self):
        return self.n_nodes.bit_length() - 1

    @property
    def levels(self):
        return self.base_levels + self.extra_levels

    @cached_property
    def node_xy(self):
        return node_coords(self.n_nodes, self.chip_side)

    def stage_crossings(self, level):
        """Crossings on the link leaving a coupler of ``level`` toward the next level."""
        return 1 if level == 3 and self.n_nodes > LOCAL_CLUSTER else 0

    @property
    def feedback_crossings(self):
        return 1 if self.n_nodes > LOCAL_CLUSTER else 0

    def _coupler_id(self, level, pos):
        if level <= self.base_levels:
            return f"c{level}.{pos & ~(1 << (level - 1))}"
        return f"x{level}.{pos}"

    def _coupler_xy(self, level, pos):
        if level > self.base_levels:
            level, pos = self.base_levels, pos
        low = pos & ~(1 << (level - 1))
        a, b = self.node_xy[low], self.node_xy[low | (1 << (level - 1))]
        return ((a[0] + b[0]) / 2, (a[1] + b[1]) / 2)

    @cached_property
    def couplers(self):
        out = []
        for level in range(1, self.base_levels + 1):
            bit = 1 << (level - 1)
            for low in range(self.n_nodes):
                if low & bit:
                    continue
                x, y = self._coupler_xy(level, low)
                out.append(Coupler(self._coupler_id(level, low), level, x, y, (low, low | bit)))
        for level in range(self.base_levels + 1, self.levels + 1):
            for pos in range(self.n_nodes):
                x, y = self._coupler_xy(level, pos)
                out.append(Coupler(self._coupler_id(level, pos), level, x, y, (pos,)))
        return tuple(out)

    def _hop(self, level_from, pos_from, level_to, pos_to):
        a = self._coupler_xy(level_from, pos_from)
        b = self._coupler_xy(level_to, pos_to)
        return Link(self._coupler_id(level_from, pos_from), self._coupler_id(level_to, pos_to),
                    _dist(a, b), self.stage_crossings(level_from))

    def route(self, src, dst):
        n = self.n_nodes
        for node in (src, dst):
            if not (isinstance(node, int) and 0 <= node < n):
                raise RoutingFault(f"unknown node {node!r} in {n}-node broadcast network")
        hops = []
        first = self._coupler_xy(1, src)
        hops.append(Link(_node_id(src), self._coupler_id(1, src), _dist(self.node_xy[src], first)))
        pos = src
        for level in range(1, self.levels):
            nxt = pos
            if level <= self.base_levels:
                bit = 1 << (level - 1)
                nxt = (pos & ~bit) | (dst & bit)
            hops.append(self._hop(level, pos, level + 1, nxt))
            pos = nxt
        last = self.levels
        if last <= self.base_levels:
            bit = 1 << (last - 1)
            pos = (pos & ~bit) | (dst & bit)
        assert pos == dst
        tail = _dist(self._coupler_xy(last, pos), self.node_xy[dst])
        if src == dst:
            hops.append(Link(self._coupler_id(last, pos), _node_id(dst), tail,
                             self.feedback_crossings, feedback=True))
        else:
            hops.append(Link(self._coupler_id(last, pos), _node_id(dst), tail))
        regen = self.regeneration_after_level
        return BroadcastRoute(src, dst, tuple(hops), self.levels, regen)

    def routes(self):
        for s in range(self.n_nodes):
            for d in range(self.n_nodes):
                yield self.route(s, d)

    def path(self, src, dst, catalog=DEFAULT_CATALOG):
        route = self.route(src, dst)
        segs = []
        for i, hop in enumerate(route.hops):
            if hop.length:
                segs.append(Segment(optics.WAVEGUIDE, hop.length))
            if hop.crossings:
                segs.append(Segment(optics.CROSSING, hop.crossings))
            # hop i ends at the coupler of level i + 1
            if i < len(route.hops) - 1:
                segs.append(Segment(optics.SPLIT, 1))
                if route.regenerate_after is not None and i + 1 == route.regenerate_after:
                    segs.append(Segment(optics.REGENERATION, 1, label="inline"))
        return OpticalPath(tuple(segs))

    def receiver_fraction(self, src, dst, split=(0.5, 0.5)):
        """Power fraction reaching ``dst``: the cross output of each coupler keeps
        ``split[0]`` and the straight output ``split[1]``; extra levels keep
        ``split[1]`` and terminate the other port."""
        low, high = split
        frac = 1.0
        for level in range(1, self.levels + 1):
            if level <= self.base_levels:
                bit = 1 << (level - 1)
                frac *= low if (src ^ dst) & bit else high
            else:
                frac *= high
        return frac

    @cached_property
    def links(self):
        out = []
        for s in range(self.n_nodes):
            out.append(Link(_node_id(s), self._coupler_id(1, s),
                            _dist(self.node_xy[s], self._coupler_xy(1, s))))
        for level in range(1, self.levels):
            for pos in range(self.n_nodes):
                if level <= self.base_levels:
                    bit = 1 << (level - 1)
                    if pos & bit:
                        continue  # one coupler per pair; both outputs listed below
                    sources, targets = (pos,), (pos, pos | bit)
                else:
                    sources, targets = (pos,), (pos,)
                for src in sources:
                    for t in targets:
                        out.append(self._hop(level, src, level + 1, t))
        last = self.levels
        for d in range(self.n_nodes):
            tail = _dist(self._coupler_xy(last, d), self.node_xy[d])
            out.append(Link(self._coupler_id(last, d), _node_id(d), tail))
            out.append(Link(self._coupler_id(last, d), _node_id(d), tail,
                            self.feedback_crossings, feedback=True))
        return tuple(out)

    @property
    def feedback_links(self):
        return tuple(l for l in self.links if l.feedback)

    def to_dict(self):
        return {
            "kind": "broadcast",
            "n_nodes": self.n_nodes,
            "levels": self.levels,
            "extra_levels": self.extra_levels,
            "chip_side_cm": self.chip_side,
            "nodes": [{"id": _node_id(i), "x": x, "y": y} for i, (x, y) in enumerate(self.node_xy)],
            "couplers": [{"id": c.id, "level": c.level, "x": c.x, "y": c.y, "ports": list(c.ports)}
                         for c in self.couplers],
            "links": [{"src": l.src, "dst": l.dst, "length_cm": l.length, "crossings": l.crossings,
                       "feedback": l.feedback} for l in self.links],
            "max_crossings": crossing_counts(self),
        }


def build_broadcast(n, extra_levels=0, chip_side=DEFAULT_CHIP_SIDE, regeneration_after_level=None):
    return BroadcastTopology(n, extra_levels, chip_side, regeneration_after_level)


def crossing_counts(topo):
    """Maximum crossings over forward paths and over feedback (self) paths."""
    stage = sum(topo.stage_crossings(level) for level in range(1, topo.levels))
    return {"forward": stage, "feedback": stage + topo.feedback_crossings}


def max_crossings(topo):
    counts = crossing_counts(topo)
    return max(counts.values())


def forward_crossings_per_path(n):
    return 1 if n > LOCAL_CLUSTER else 0


def level_vs_crossing_tradeoff(n, parallel_waveguides, catalog=DEFAULT_CATALOG):
    """Crossing loss vs. added coupler levels for a bundle of parallel waveguides.

    Each path crosses the whole bundle once per crossover; every extra level
    halves the crossovers (a modeling assumption) and costs a nominal 3 dB.
    """
    if n < 1 or parallel_waveguides < 1:
        raise DomainError("n and parallel_waveguides must be >= 1")
    if not is_power_of_two(n):
        raise UnsupportedSizeError(f"n must be a power of two, got {n}")
    base = parallel_waveguides * forward_crossings_per_path(n)
    rows = []
    for extra in range(0, n.bit_length()):
        crossing_db = optics.crossing_loss(base / 2 ** extra, catalog)
        level_db = NOMINAL_LEVEL_DB * extra
        rows.append({"extra_levels": extra, "crossing_db": crossing_db, "level_db": level_db,
                     "total_db": crossing_db + level_db})
    return rows


@dataclass(frozen=True)
class LinearRoute:
    src: int
    dst: int
    src_access: int       # which crossing of the source node (0 or 1)
    dst_access: int
    start: float          # arc positions along the waveguide, start <= end
    end: float
    segments: tuple       # reservation-segment indices covered
    regen_points: tuple   # arc positions of regenerations strictly inside
    passed_access: tuple  # access positions strictly inside, per optical span

    @property
    def length(self):
        return self.end - self.start


@dataclass(frozen=True)
class LinearTopology:
    """Serpentine waveguide with two horizontal tracks per node row.

    Each node is passed twice (once per track) and has a modulator and a
    detector at each pass, 4 taps per node in all. Regeneration points split
    the waveguide into equal spans.
    """
    n_nodes: int
    chip_side: float = DEFAULT_CHIP_SIDE
    regenerations: int = LOCAL_LINEAR_REGENS
    access_points_per_node: int = 4

    def __post_init__(self):
        if not isinstance(self.n_nodes, int) or self.n_nodes < 2:
            raise DomainError(f"linear network needs >= 2 nodes, got {self.n_nodes}")
        if not is_power_of_two(self.n_nodes):
            raise UnsupportedSizeError(f"linear size must be a power of two, got {self.n_nodes}")
        if self.chip_side <= 0 or self.regenerations < 0:
            raise DomainError("chip_side must be > 0 and regenerations >= 0")

    @property
    def node_rows(self):
        return grid_shape(self.n_nodes)[0]

    @property
    def tracks(self):
        return 2 * self.node_rows

    @property
    def crossings(self):
        return 0

    @property
    def track_pitch(self):
        return self.chip_side / self.tracks

    @cached_property
    def polyline(self):
        """Corner points of the waveguide, lead-in at the bottom edge to lead-out at the top."""
        side, pitch = self.chip_side, self.track_pitch
        pts = [(0.0, 0.0)]
        for t in range(self.tracks):
            y = (t + 0.5) * pitch
            left_to_right = t % 2 == 0
            start, end = (0.0, side) if left_to_right else (side, 0.0)
            pts.append((start, y))
            pts.append((end, y))
        pts.append((pts[-1][0], side))
        return tuple(pts)

    @property
    def waveguide_pieces(self):
        pts = self.polyline
        return tuple((pts[i], pts[i + 1]) for i in range(len(pts) - 1))

    @property
    def bends(self):
        return self.tracks - 1

    @cached_property
    def total_length(self):
        return sum(_dist(a, b) for a, b in self.waveguide_pieces)

    def _track_start(self, t):
        side, pitch = self.chip_side, self.track_pitch
        return pitch / 2 + t * side + t * pitch

    @cached_property
    def node_xy(self):
        return node_coords(self.n_nodes, self.chip_side)

    @cached_property
    def access_positions(self):
        """Per node, arc positions of its two passes (outbound track, return track)."""
        out = []
        for i in range(self.n_nodes):
            col, row = morton_cell(i)
            x = self.node_xy[i][0]
            positions = []
            for t in (2 * row, 2 * row + 1):
                offset = x if t % 2 == 0 else self.chip_side - x
                positions.append(self._track_start(t) + offset)
            out.append(tuple(positions))
        return tuple(out)

    @cached_property
    def _sorted_access(self):
        return tuple(sorted(p for pair in self.access_positions for p in pair))

    @cached_property
    def _access_index(self):
        return {p: i for i, p in enumerate(self._sorted_access)}

    @cached_property
    def segments(self):
        """Reservation segments: waveguide between consecutive access positions."""
        pos = self._sorted_access
        return tuple((pos[i], pos[i + 1]) for i in range(len(pos) - 1))

    @property
    def n_segments(self):
        return len(self.segments)

    @cached_property
    def regeneration_points(self):
        k = self.regenerations
        return tuple(self.total_length * (i + 1) / (k + 1) for i in range(k))

    @cached_property
    def longest_span(self):
        """Longest waveguide run between an access point and a regeneration or another access point."""
        pos = self._sorted_access
        bounds = [pos[0]] + [r for r in self.regeneration_points if pos[0] < r < pos[-1]] + [pos[-1]]
        return max(b - a for a, b in zip(bounds, bounds[1:]))

    def routes(self, src, dst):
        """The four access-point routes between two nodes, shortest first."""
        for node in (src, dst):
            if not (isinstance(node, int) and 0 <= node < self.n_nodes):
                raise RoutingFault(f"unknown node {node!r} in {self.n_nodes}-node linear network")
        out = []
        for a, pa in enumerate(self.access_positions[src]):
            for b, pb in enumerate(self.access_positions[dst]):
                out.append(self._make_route(src, dst, a, b, pa, pb))
        out.sort(key=lambda r: (r.length, r.src_access, r.dst_access))
        return out

    def _make_route(self, src, dst, a, b, pa, pb):
        lo, hi = min(pa, pb), max(pa, pb)
        i, j = self._access_index[lo], self._access_index[hi]
        regens = tuple(r for r in self.regeneration_points if lo < r < hi)
        bounds = [lo, *regens, hi]
        inner = self._sorted_access[i + 1:j]
        passed = tuple(sum(1 for p in inner if s < p < e or (p == e and e != hi))
                       for s, e in zip(bounds, bounds[1:]))
        return LinearRoute(src, dst, a, b, lo, hi, tuple(range(i, j)), regens, passed)

    def route(self, src, dst):
        return self.routes(src, dst)[0]

    def path_for_route(self, route, catalog=DEFAULT_CATALOG):
        if route.length == 0:
            return OpticalPath(())
        bounds = [route.start, *route.regen_points, route.end]
        segs = []
        for k, (s, e) in enumerate(zip(bounds, bounds[1:])):
            if k:
                segs.append(Segment(optics.REGENERATION, 1, label="inline"))
            segs.append(Segment(optics.WAVEGUIDE, e - s))
            rings = 2 * route.passed_access[k]
            if rings:
                segs.append(Segment(optics.OFF_RESONANCE, rings * catalog.off_resonance_per_ring))
        return OpticalPath(tuple(segs))

    def path(self, src, dst, catalog=DEFAULT_CATALOG):
        if src == dst:
            self.routes(src, dst)
            return OpticalPath(())
        return self.path_for_route(self.route(src, dst), catalog)

    def to_dict(self):
        return {
            "kind": "linear",
            "n_nodes": self.n_nodes,
            "chip_side_cm": self.chip_side,
            "tracks": self.tracks,
            "access_points_per_node": self.access_points_per_node,
            "total_length_cm": self.total_length,
            "longest_span_cm": self.longest_span,
            "regeneration_points_cm": list(self.regeneration_points),
            "crossings": 0,
            "polyline": [list(p) for p in self.polyline],
            "nodes": [{"id": _node_id(i), "x": xy[0], "y": xy[1],
                       "access_cm": list(self.access_positions[i])} for i, xy in enumerate(self.node_xy)],
            "segments": [{"index": k, "start_cm": s, "end_cm": e, "length_cm": e - s}
                         for k, (s, e) in enumerate(self.segments)],
        }


def build_linear(n, chip_side=DEFAULT_CHIP_SIDE, regenerations=LOCAL_LINEAR_REGENS):
    return LinearTopology(n, chip_side, regenerations)


@dataclass(frozen=True)
class HierarchicalTopology:
    total_cores: int
    domain_size: int
    chip_side: float = DEFAULT_CHIP_SIDE
    local_broadcast: BroadcastTopology = field(init=False)
    local_linear: LinearTopology = field(init=False)
    global_broadcast: BroadcastTopology = field(init=False)
    global_linear: LinearTopology = field(init=False)

    def __post_init__(self):
        total, size = self.total_cores, self.domain_size
        errors = []
        if not is_power_of_two(total):
            errors.append(f"total_cores: must be a power of two, got {total}")
        if not is_power_of_two(size) or size < 2:
            errors.append(f"domain_size: must be a power of two >= 2, got {size}")
        if not errors and (total % size or total // size < 2):
            errors.append(f"domain_size: {size} must divide total_cores {total} into >= 2 domains")
        if errors:
            raise ConfigError(errors)
        m = total // size
        local_side = self.chip_side * math.sqrt(size / total)
        object.__setattr__(self, "local_broadcast", build_broadcast(size, 0, local_side))
        object.__setattr__(self, "local_linear", build_linear(size, local_side, LOCAL_LINEAR_REGENS))
        regen_level = math.ceil((m.bit_length() - 1) / 2) if m > 2 else None
        object.__setattr__(self, "global_broadcast", build_broadcast(m, 0, self.chip_side, regen_level))
        object.__setattr__(self, "global_linear", build_linear(m, self.chip_side, GLOBAL_LINEAR_REGENS))

    @property
    def n_domains(self):
        return self.total_cores // self.domain_size

    @property
    def access_point_node(self):
        """Local node index every domain's access point attaches to."""
        return 0

    @property
    def access_points(self):
        return tuple((d, d * self.domain_size + self.access_point_node) for d in range(self.n_domains))

    @property
    def global_parallelism(self):
        """Waveguide-parallelism budget of the global networks relative to a domain (area ratio)."""
        return self.n_domains

    @property
    def global_broadcast_regens(self):
        return GLOBAL_BROADCAST_REGENS if self.global_broadcast.regeneration_after_level else 0

    @property
    def global_linear_regens(self):
        return self.global_linear.regenerations

    def locate(self, core):
        if not (isinstance(core, int) and 0 <= core < self.total_cores):
            raise RoutingFault(f"unknown core {core!r} in {self.total_cores}-core hierarchy")
        return divmod(core, self.domain_size)

    def path(self, src, dst, network="linear", catalog=DEFAULT_CATALOG):
        if network not in ("linear", "broadcast"):
            raise DomainError(f"network must be 'linear' or 'broadcast', got {network!r}")
        (da, la), (db, lb) = self.locate(src), self.locate(dst)
        local = self.local_linear if network == "linear" else self.local_broadcast
        glob = self.global_linear if network == "linear" else self.global_broadcast
        if da == db:
            return local.path(la, lb, catalog)
        ap = self.access_point_node
        regen = OpticalPath((Segment(optics.REGENERATION, 1, label="access-point"),))
        return (local.path(la, ap, catalog) + regen + glob.path(da, db, catalog)
                + regen + local.path(ap, lb, catalog))

    def span_paths(self, src, dst, network="linear", catalog=DEFAULT_CATALOG):
        """The local, global and local sub-paths a cross-domain path concatenates."""
        (da, la), (db, lb) = self.locate(src), self.locate(dst)
        local = self.local_linear if network == "linear" else self.local_broadcast
        glob = self.global_linear if network == "linear" else self.global_broadcast
        ap = self.access_point_node
        return (local.path(la, ap, catalog), glob.path(da, db, catalog), local.path(ap, lb, catalog))

    def to_dict(self):
        return {
            "kind": "hierarchy",
            "total_cores": self.total_cores,
            "domain_size": self.domain_size,
            "n_domains": self.n_domains,
            "chip_side_cm": self.chip_side,
            "access_points": [{"domain": d, "core": c} for d, c in self.access_points],
            "global_parallelism": self.global_parallelism,
            "global_broadcast_regens": self.global_broadcast_regens,
            "global_linear_regens": self.global_linear_regens,
            "local_broadcast": self.local_broadcast.to_dict(),
            "local_linear": self.local_linear.to_dict(),
            "global_broadcast": self.global_broadcast.to_dict(),
            "global_linear": self.global_linear.to_dict(),
        }


def build_hierarchy(total, domain_size, chip_side=DEFAULT_CHIP_SIDE):
    return HierarchicalTopology(total, domain_size, chip_side)


def enumerate_path(topo, src, dst, network="linear", catalog=DEFAULT_CATALOG):
    if isinstance(topo, HierarchicalTopology):
        return topo.path(src, dst, network, catalog)
    return topo.path(src, dst, catalog)


def to_dot(topo):
    """Graphviz text for a broadcast or linear topology."""
    lines = [f"graph {topo.to_dict()['kind']} {{"]
    if isinstance(topo, BroadcastTopology):
        for i in range(topo.n_nodes):
            lines.append(f'  {_node_id(i)} [shape=box];')
        for c in topo.couplers:
            lines.append(f'  "{c.id}" [shape=circle, label="{c.id}"];')
        for l in topo.links:
            attrs = [f'label="{l.length:.3f}cm/{l.crossings}x"']
            if l.feedback:
                attrs.append("color=red")
            lines.append(f'  "{l.src}" -- "{l.dst}" [{", ".join(attrs)}];')
    elif isinstance(topo, LinearTopology):
        order = sorted(range(topo.n_nodes * 2), key=lambda k: topo.access_positions[k // 2][k % 2])
        names = [f'"{_node_id(k // 2)}.{k % 2}"' for k in order]
        for a, b in zip(names, names[1:]):
            lines.append(f"  {a} -- {b};")
    else:
        raise DomainError(f"no DOT export for {type(topo).__name__}")
    lines.append("}")
    return "\n".join(lines) + "\n"
