"""Closed-form power, per-core bandwidth and latency of photonic network classes.

Classes: ``bus`` (Kirman, ATAC, Corona), ``hybrid`` (Phastlane, Clos, Mesh),
``crossbar`` (Corona, Flexishare), ``antenna`` (Iris) and ``hermes``.
Every constant lives in ``ScaleParams`` with a tag in ``PROVENANCE``:
``published`` device or design figures, ``calibrated`` values fitted to an
anchor (hybrid reaches 10 W at N=32), and ``assumed`` modeling choices.
"""
import csv
import functools
import io
import math
from dataclasses import dataclass, field

from . import __version__
from .config import from_dict, to_dict
from .errors import ConfigError, DomainError, PortLimitError

CLASSES = ("bus", "hybrid", "crossbar", "antenna", "hermes")
METRICS = ("power", "bandwidth", "latency")
NETWORKS = {
    "bus": ("Kirman", "ATAC", "Corona"),
    "hybrid": ("Phastlane", "Clos", "Mesh"),
    "crossbar": ("Corona", "Flexishare"),
    "antenna": ("Iris",),
    "hermes": ("Hermes",),
}
ARBITRATED = ("Corona", "Flexishare")
SPEED_OF_LIGHT = 299_792_458.0  # m/s

ASYMPTOTIC_TAGS = {
    ("power", "bus"): "O(2^N)",
    ("power", "hybrid"): "O(N)",
    ("power", "crossbar"): "O(10^sqrt(N))",
    ("power", "antenna"): "O(N)",
    ("power", "hermes"): "O(sqrt(N))",
    ("bandwidth", "bus"): "O(1/sqrt(N))",
    ("bandwidth", "hybrid"): "O(1/N)",
    ("bandwidth", "crossbar"): "O(1/sqrt(N))",
    ("bandwidth", "antenna"): "O(1/N)",
    ("bandwidth", "hermes"): "O(1/sqrt(N))",
    ("latency", "bus"): "O(N)",
    ("latency", "hybrid"): "O(sqrt(N))",
    ("latency", "crossbar"): "O(N)",
    ("latency", "antenna"): "O(1)",
    ("latency", "hermes"): "O(sqrt(N))",
}


@dataclass(frozen=True)
class HybridNetwork:
    power_scale: float       # relative to the class coefficient
    energy_per_bit: float    # J/bit
    router_delay: float      # s


@dataclass(frozen=True)
class ScaleParams:
    chip_side: float = 2.0                 # cm
    rx_power: float = 1e-5                 # W at the receiver (-20 dBm)
    waveguide_loss: float = 2.5            # dB/cm
    crossbar_wavelengths: int = 64
    hybrid_watts_per_node: float = 0.3125  # 10 W at N=32
    electrical_budget: float = 5.0         # W
    energy_per_bit: float = 1e-12          # J/bit, hybrid class default
    router_delay: float = 500e-12          # s, hybrid class default
    antenna_efficiency: float = 0.23
    antenna_max_ports: int = 64
    antenna_channels: int = 64
    channel_rate: float = 10e9             # b/s per wavelength
    base_bandwidth: float = 2.56e12        # b/s, class 1/3 per-core scale at N=1
    hermes_bandwidth_factor: float = 0.8
    group_index: float = 4.0
    clock: float = 200e-12                 # s
    node_pitch: float = 0.5                # cm of serpentine per node
    arbitration_cycles: int = 1
    regeneration_cycles: int = 1
    hermes_domain_size: int = 32
    hybrid_networks: dict = field(default_factory=lambda: {
        "Clos": {"power_scale": 1.0, "energy_per_bit": 2e-12, "router_delay": 500e-12},
        "Mesh": {"power_scale": 0.8, "energy_per_bit": 1e-12, "router_delay": 200e-12},
        "Phastlane": {"power_scale": 0.6, "energy_per_bit": 0.5e-12, "router_delay": 500e-12},
    })

    def __post_init__(self):
        errors = []
        for name in ("chip_side", "rx_power", "electrical_budget", "energy_per_bit", "channel_rate",
                     "base_bandwidth", "group_index", "clock", "node_pitch", "hybrid_watts_per_node"):
            if not getattr(self, name) > 0:
                errors.append(f"{name}: must be > 0")
        if not 0 < self.hermes_bandwidth_factor < 1:
            errors.append("hermes_bandwidth_factor: must lie in (0, 1)")
        if not 0 < self.antenna_efficiency <= 1:
            errors.append("antenna_efficiency: must lie in (0, 1]")
        for name in ("router_delay", "waveguide_loss"):
            if getattr(self, name) < 0:
                errors.append(f"{name}: must be >= 0")
        if errors:
            raise ConfigError(errors)

    @property
    def velocity(self):
        """Group velocity in cm/s."""
        return SPEED_OF_LIGHT * 100 / self.group_index

    def hybrid(self, network):
        if network is None:
            return HybridNetwork(1.0, self.energy_per_bit, self.router_delay)
        try:
            return HybridNetwork(**self.hybrid_networks[network])
        except KeyError:
            raise ConfigError(f"network: unknown hybrid network {network!r}") from None

    @classmethod
    def from_dict(cls, data, prefix=""):
        return from_dict(cls, data, prefix)


PROVENANCE = {
    "chip_side": "assumed",
    "rx_power": "assumed",
    "waveguide_loss": "published",
    "crossbar_wavelengths": "assumed",
    "hybrid_watts_per_node": "calibrated",
    "electrical_budget": "published",
    "energy_per_bit": "assumed",
    "router_delay": "assumed",
    "antenna_efficiency": "published",
    "antenna_max_ports": "published",
    "antenna_channels": "published",
    "channel_rate": "assumed",
    "base_bandwidth": "assumed",
    "hermes_bandwidth_factor": "assumed",
    "group_index": "assumed",
    "clock": "assumed",
    "node_pitch": "assumed",
    "arbitration_cycles": "published",
    "regeneration_cycles": "assumed",
    "hermes_domain_size": "published",
    "hybrid_networks": "assumed",
    "hermes_power_coefficient": "calibrated",
}

MODEL_NOTES = [
    "hermes power is modeled as c_h * sqrt(N); summing sqrt(N) domains of sqrt(N)-node "
    "networks would give O(N) aggregate laser power instead",
    "hermes latency uses the constant diagonal paths of the local and global networks, so it "
    "does not grow with N and no O(sqrt(N)) latency trend appears",
    "class 1/3 serpentine length is node_pitch per node, so latency grows linearly in N",
]

DEFAULT_PARAMS = ScaleParams()


def _check(cls, n, params):
    if cls not in CLASSES:
        raise ConfigError(f"classes: unknown network class {cls!r} (known: {', '.join(CLASSES)})")
    if not isinstance(n, int) or n < 2:
        raise DomainError(f"N must be an integer >= 2, got {n!r}")
    if cls == "antenna" and n > params.antenna_max_ports:
        raise PortLimitError(f"antenna networks stop at {params.antenna_max_ports} ports, got N={n}")


def _check_network(cls, network):
    if network is not None and network not in NETWORKS[cls]:
        raise ConfigError(f"network: {network!r} is not a {cls} network")


@functools.lru_cache(maxsize=None)
def _domain_laser_power(domain_size):
    from .optics import link_budget, required_laser_power
    from .topology import build_broadcast
    topo = build_broadcast(domain_size)
    worst = max(link_budget(topo.path(s, d)).worst_span_db
                for s in range(domain_size) for d in range(domain_size))
    return domain_size * required_laser_power(worst) / 1000.0


def hermes_power_coefficient(params=DEFAULT_PARAMS):
    """c_h such that c_h * sqrt(D) is the laser power (W) of one D-node broadcast domain."""
    d = params.hermes_domain_size
    return _domain_laser_power(d) / math.sqrt(d)


def power(cls, n, params=DEFAULT_PARAMS, network=None):
    """Total network power in W."""
    _check(cls, n, params)
    _check_network(cls, network)
    p = params
    try:
        if cls == "bus":
            value = p.rx_power * 2.0 ** (n - 1)
        elif cls == "hybrid":
            value = p.hybrid(network).power_scale * p.hybrid_watts_per_node * n
        elif cls == "crossbar":
            loss_db = p.waveguide_loss / 10 * p.chip_side * math.sqrt(n)
            value = n * p.crossbar_wavelengths * p.rx_power * 10 ** loss_db
        elif cls == "antenna":
            value = n * p.rx_power / p.antenna_efficiency
        else:
            value = hermes_power_coefficient(p) * math.sqrt(n)
    except OverflowError:
        raise DomainError(f"{cls} power overflows at N={n}") from None
    if not math.isfinite(value):
        raise DomainError(f"{cls} power overflows at N={n}")
    return value


def bandwidth_per_core(cls, n, params=DEFAULT_PARAMS, network=None):
    """Per-core bandwidth in b/s."""
    _check(cls, n, params)
    _check_network(cls, network)
    p = params
    if cls in ("bus", "crossbar"):
        return p.base_bandwidth / math.sqrt(n)
    if cls == "hybrid":
        return p.electrical_budget / (p.hybrid(network).energy_per_bit * n)
    if cls == "antenna":
        return aggregate_antenna_bandwidth(p) / n
    return p.hermes_bandwidth_factor * p.base_bandwidth / math.sqrt(n)


def aggregate_antenna_bandwidth(params=DEFAULT_PARAMS):
    return params.antenna_channels * params.channel_rate


def latency(cls, n, params=DEFAULT_PARAMS, network=None, cross_domain=False):
    """Zero-load latency in s; ``cross_domain`` selects the hermes global path."""
    _check(cls, n, params)
    _check_network(cls, network)
    p = params
    v = p.velocity
    diagonal = p.chip_side * math.sqrt(2) / v
    if cls in ("bus", "crossbar"):
        t = n * p.node_pitch / v
        if network in ARBITRATED:
            t += p.arbitration_cycles * p.clock
        return t
    if cls == "hybrid":
        return math.sqrt(n) * p.hybrid(network).router_delay + p.chip_side / v
    if cls == "antenna":
        return diagonal
    if cross_domain:
        return 3 * diagonal + 2 * p.regeneration_cycles * p.clock
    return diagonal


_METRIC_FN = {"power": power, "bandwidth": bandwidth_per_core, "latency": latency}


@dataclass(frozen=True)
class ScalingCurve:
    metric: str
    cls: str
    samples: tuple        # ((N, value), ...)
    asymptotic_tag: str
    network: str = None
    notes: tuple = ()

    def __post_init__(self):
        ns = [n for n, _ in self.samples]
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise DomainError("curve N values must be strictly increasing")
        if any(not (math.isfinite(v) and v > 0) for _, v in self.samples):
            raise DomainError("curve values must be finite and positive")

    @property
    def label(self):
        return self.cls if self.network is None else f"{self.cls}/{self.network}"

    @property
    def ns(self):
        return [n for n, _ in self.samples]

    @property
    def values(self):
        return [v for _, v in self.samples]


def parse_class(spec):
    """``"bus"`` or ``"bus/Corona"`` -> (class, network or None)."""
    cls, _, network = spec.partition("/")
    if cls not in CLASSES:
        raise ConfigError(f"classes: unknown network class {cls!r}")
    network = network or None
    _check_network(cls, network)
    return cls, network


@dataclass
class SweepResult:
    curves: list
    notes: list
    params: ScaleParams

    def csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "class", "N", "value"])
        for curve in self.curves:
            for n, v in curve.samples:
                w.writerow([curve.metric, curve.label, n, repr(float(v))])
        return buf.getvalue()

    def metadata(self):
        constants = to_dict(self.params)
        constants["hermes_power_coefficient"] = hermes_power_coefficient(self.params)
        return {
            "version": __version__,
            "constants": {k: {"value": v, "provenance": PROVENANCE[k]} for k, v in constants.items()},
            "asymptotic_tags": {c.label + ":" + c.metric: c.asymptotic_tag for c in self.curves},
            "notes": list(self.notes),
            "model_notes": MODEL_NOTES,
        }


def sweep(metrics, classes, n_list, params=DEFAULT_PARAMS):
    """Evaluate every (metric, class) over ``n_list``; failing points become notes."""
    curves, notes = [], []
    for metric in metrics:
        if metric not in METRICS:
            raise ConfigError(f"metric: unknown metric {metric!r} (known: {', '.join(METRICS)})")
        fn = _METRIC_FN[metric]
        for spec in classes:
            cls, network = parse_class(spec)
            samples, curve_notes = [], []
            for n in sorted(set(n_list)):
                try:
                    samples.append((n, fn(cls, n, params, network=network)))
                except (PortLimitError, DomainError) as exc:
                    marker = "port-limit" if isinstance(exc, PortLimitError) else "error"
                    curve_notes.append(f"{metric} {spec} N={n}: {marker}: {exc}")
            notes.extend(curve_notes)
            curves.append(ScalingCurve(metric, cls, tuple(samples), ASYMPTOTIC_TAGS[(metric, cls)],
                                       network, tuple(curve_notes)))
    return SweepResult(curves, notes, params)


def parse_n_list(text):
    """Expand ``"16,32,64,...,1024"`` (doubling) or an explicit list."""
    items = [t.strip() for t in text.split(",") if t.strip()]
    out = []
    for i, item in enumerate(items):
        if item in ("...", "…"):
            if len(out) < 2 or i + 1 >= len(items):
                raise ConfigError("n: '...' needs two leading values and an end value")
            a, b = out[-2], out[-1]
            end = int(items[i + 1])
            if b == 2 * a:
                nxt = b * 2
                while nxt < end:
                    out.append(nxt)
                    nxt *= 2
            elif b > a:
                out.extend(range(b + (b - a), end, b - a))
            else:
                raise ConfigError("n: '...' needs an increasing sequence")
            continue
        try:
            out.append(int(item))
        except ValueError:
            raise ConfigError(f"n: not an integer: {item!r}") from None
    return out
