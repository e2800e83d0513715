"""Seeded Bernoulli injection streams."""
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError

PATTERNS = ("uniform", "hotspot", "local-biased")
MULTICAST = "multicast"
UNICAST = "unicast-cacheline"
_CHUNK = 4096


@dataclass(frozen=True)
class TrafficConfig:
    pattern: str = "uniform"
    rate: float = 0.002             # per node per cycle; access points saturate near 0.005
    multicast_fraction: float = 0.2
    local_fraction: float = 0.5     # local-biased: share of intra-domain destinations
    hotspot: int = 0
    hotspot_fraction: float = 0.5
    address_space: int = 4096
    multicast_bits: int = 64
    cacheline_bits: int = 512

    def problems(self, n_cores=None):
        out = []
        if self.pattern not in PATTERNS:
            out.append(f"traffic.pattern: unknown pattern {self.pattern!r} (known: {', '.join(PATTERNS)})")
        for name in ("rate", "multicast_fraction", "local_fraction", "hotspot_fraction"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                out.append(f"traffic.{name}: must lie in [0, 1], got {v}")
        if self.address_space < 1:
            out.append("traffic.address_space: must be >= 1")
        for name in ("multicast_bits", "cacheline_bits"):
            if getattr(self, name) < 1:
                out.append(f"traffic.{name}: must be >= 1")
        if n_cores is not None and not 0 <= self.hotspot < n_cores:
            out.append(f"traffic.hotspot: node {self.hotspot} outside 0..{n_cores - 1}")
        return out


@dataclass(frozen=True)
class Injection:
    cycle: int
    src: int
    kind: str
    dst: int        # -1 for multicast
    address: int


def _other(rng, n, src):
    """Uniform destination != src for each entry of ``src``."""
    d = rng.integers(0, n - 1, size=src.size)
    return d + (d >= src)


def generate_traffic(config, seed, n_cores, cycles, domain_size=None):
    """Injection list ordered by (cycle, src) for ``cycles`` cycles."""
    if isinstance(config, str):
        config = TrafficConfig(pattern=config)
    problems = config.problems(n_cores)
    if n_cores < 2:
        problems.append("n_cores: need at least 2 cores")
    if config.pattern == "local-biased" and (not domain_size or domain_size < 2 or n_cores % domain_size
                                               or n_cores // domain_size < 2):
        problems.append("topology.domain_size: local-biased traffic needs >= 2 domains of >= 2 cores")
    if problems:
        raise ConfigError(problems)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), 2])))
    out = []
    if config.rate == 0 or cycles <= 0:
        return out
    for start in range(0, cycles, _CHUNK):
        rows = min(_CHUNK, cycles - start)
        hit_cycle, hit_src = np.nonzero(rng.random((rows, n_cores)) < config.rate)
        k = hit_src.size
        if not k:
            continue
        multicast = rng.random(k) < config.multicast_fraction
        address = rng.integers(0, config.address_space, size=k)
        dst = _other(rng, n_cores, hit_src)
        if config.pattern == "hotspot":
            to_hot = (rng.random(k) < config.hotspot_fraction) & (hit_src != config.hotspot)
            dst = np.where(to_hot, config.hotspot, dst)
        elif config.pattern == "local-biased":
            local = rng.random(k) < config.local_fraction
            base = hit_src - hit_src % domain_size
            in_dom = _other(rng, domain_size, hit_src % domain_size) + base
            n_dom = n_cores // domain_size
            other_dom = (hit_src // domain_size + 1 + rng.integers(0, n_dom - 1, size=k)) % n_dom
            out_dom = other_dom * domain_size + rng.integers(0, domain_size, size=k)
            dst = np.where(local, in_dom, out_dom)
        for c, s, mc, a, d in zip(hit_cycle.tolist(), hit_src.tolist(), multicast.tolist(),
                                  address.tolist(), dst.tolist()):
            if mc:
                out.append(Injection(start + c, s, MULTICAST, -1, a))
            else:
                out.append(Injection(start + c, s, UNICAST, d, a))
    return out
