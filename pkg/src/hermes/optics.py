"""Device loss/energy figures and per-path optical power budgets.

Losses are in dB, lengths in cm, energies in fJ/bit, powers in mW unless
a name says otherwise.
"""
import math
from dataclasses import dataclass, field

from .config import from_dict, load_json
from .errors import ConfigError, DomainError, StructuralError

WAVEGUIDE = "waveguide"
CROSSING = "crossing"
SPLIT = "coupler-split"
OFF_RESONANCE = "off-resonance"
REGENERATION = "regeneration"
SEGMENT_KINDS = (WAVEGUIDE, CROSSING, SPLIT, OFF_RESONANCE, REGENERATION)
LOSS_KINDS = SEGMENT_KINDS[:4] + ("coupler-excess",)

DEFAULT_RX_SENSITIVITY_DBM = -20.0  # assumed; not a published figure


@dataclass(frozen=True)
class DeviceCatalog:
    waveguide_loss: float = 2.5
    crossing_loss: float = 0.045
    crossing_crosstalk: float = -35.0
    split_fraction_nominal: tuple = (0.48, 0.52)
    split_fraction_worstcase: tuple = (0.45, 0.55)
    coupler_efficiency: float = 0.96
    off_resonance_cap: float = 4.0
    modulator_energy: dict = field(default_factory=lambda: {"thermo-optic": 7.0, "electro-optic": 86.0})
    detector_energy: float = 33.0
    antenna_efficiency: float = 0.23
    antenna_max_ports: int = 64
    y_trench_efficiency: float = 0.80
    # model knobs without a published value
    off_resonance_per_ring: float = 0.05
    rx_sensitivity: float = DEFAULT_RX_SENSITIVITY_DBM
    coupler_excess_loss: bool = False

    def __post_init__(self):
        errors = []
        for name in ("waveguide_loss", "crossing_loss", "off_resonance_cap", "detector_energy",
                     "off_resonance_per_ring"):
            if getattr(self, name) < 0:
                errors.append(f"{name}: must be >= 0")
        if self.crossing_crosstalk > 0:
            errors.append("crossing_crosstalk: must be <= 0 dB")
        for name in ("split_fraction_nominal", "split_fraction_worstcase"):
            pair = getattr(self, name)
            if len(pair) != 2 or not all(0 < f < 1 for f in pair) or sum(pair) > 1 + 1e-12:
                errors.append(f"{name}: need two fractions in (0,1) summing to <= 1")
        for name in ("coupler_efficiency", "antenna_efficiency", "y_trench_efficiency"):
            if not 0 < getattr(self, name) <= 1:
                errors.append(f"{name}: must lie in (0, 1]")
        if any(v < 0 for v in self.modulator_energy.values()):
            errors.append("modulator_energy: energies must be >= 0")
        if self.antenna_max_ports < 1:
            errors.append("antenna_max_ports: must be >= 1")
        if errors:
            raise ConfigError(errors)

    def min_split_fraction(self, process_variation=False):
        pair = self.split_fraction_worstcase if process_variation else self.split_fraction_nominal
        return min(pair)

    @property
    def coupler_excess_db(self):
        """Per-coupler excess loss implied by the coupler efficiency (~0.177 dB at 96%)."""
        return 10 * math.log10(1 / self.coupler_efficiency)

    @classmethod
    def from_dict(cls, data, prefix=""):
        return from_dict(cls, data, prefix)

    @classmethod
    def from_json(cls, path):
        return cls.from_dict(load_json(path))


DEFAULT_CATALOG = DeviceCatalog()


def waveguide_loss(length, catalog=DEFAULT_CATALOG):
    if length < 0:
        raise DomainError(f"waveguide length must be >= 0 cm, got {length}")
    return length * catalog.waveguide_loss


def crossing_loss(n_crossings, catalog=DEFAULT_CATALOG):
    if n_crossings < 0:
        raise DomainError(f"crossing count must be >= 0, got {n_crossings}")
    return n_crossings * catalog.crossing_loss


def splitter_chain_loss(levels, fraction):
    """Loss through ``levels`` cascaded splitters keeping ``fraction`` of the power each."""
    if levels < 0:
        raise DomainError(f"levels must be >= 0, got {levels}")
    if not 0 < fraction < 1:
        raise DomainError(f"split fraction must lie in (0, 1), got {fraction}")
    return levels * -10 * math.log10(fraction)


def required_laser_power(worst_span_db, rx_sensitivity=DEFAULT_RX_SENSITIVITY_DBM):
    """Launch power in mW that leaves ``rx_sensitivity`` dBm after the worst span."""
    if not (math.isfinite(worst_span_db) and math.isfinite(rx_sensitivity)):
        raise DomainError("laser power inputs must be finite")
    return 10 ** ((rx_sensitivity + worst_span_db) / 10)


def energy_per_bit(modulator="electro-optic", regenerations=0, catalog=DEFAULT_CATALOG):
    """Link energy; each regeneration repeats one detect + modulate pair."""
    try:
        mod = catalog.modulator_energy[modulator]
    except KeyError:
        raise ConfigError(f"modulator: unknown kind {modulator!r} "
                          f"(known: {sorted(catalog.modulator_energy)})") from None
    if regenerations < 0:
        raise DomainError("regenerations must be >= 0")
    return (mod + catalog.detector_energy) * (1 + regenerations)


@dataclass(frozen=True)
class Segment:
    """One loss contributor. ``magnitude`` is cm, a count, levels or dB by kind.

    ``fraction`` overrides the kept branch of a split segment; ``label`` tags
    regeneration points (e.g. ``"access-point"``).
    """
    kind: str
    magnitude: float = 1.0
    fraction: float = None
    label: str = None

    def __post_init__(self):
        if self.kind not in SEGMENT_KINDS:
            raise StructuralError(f"unknown segment kind {self.kind!r}")
        if not isinstance(self.magnitude, (int, float)) or not math.isfinite(self.magnitude):
            raise StructuralError(f"{self.kind}: magnitude must be a finite number")
        if self.magnitude < 0:
            raise StructuralError(f"{self.kind}: magnitude must be >= 0, got {self.magnitude}")
        if self.fraction is not None and not 0 < self.fraction < 1:
            raise StructuralError(f"{self.kind}: fraction must lie in (0, 1)")


@dataclass(frozen=True)
class OpticalPath:
    segments: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        for seg in self.segments:
            if not isinstance(seg, Segment):
                raise StructuralError(f"path entries must be Segment records, got {seg!r}")

    def __add__(self, other):
        return OpticalPath(self.segments + other.segments)

    def __len__(self):
        return len(self.segments)

    def spans(self):
        spans = [[]]
        for seg in self.segments:
            if seg.kind == REGENERATION:
                spans.append([])
            else:
                spans[-1].append(seg)
        return spans

    def regenerations(self, label=None):
        return sum(1 for s in self.segments
                   if s.kind == REGENERATION and (label is None or s.label == label))

    def total(self, kind):
        return sum(s.magnitude for s in self.segments if s.kind == kind)

    @classmethod
    def parse(cls, text):
        """Parse ``"waveguide:8,off-resonance:4,regeneration"`` style descriptions."""
        segments = []
        for item in filter(None, (p.strip() for p in text.split(","))):
            kind, _, rest = item.partition(":")
            parts = rest.split("@") if rest else []
            try:
                magnitude = float(parts[0]) if parts and parts[0] else 1.0
                fraction = float(parts[1]) if len(parts) > 1 else None
            except ValueError:
                raise StructuralError(f"cannot parse segment {item!r}") from None
            segments.append(Segment(kind.strip(), magnitude, fraction))
        return cls(tuple(segments))


@dataclass
class SpanBudget:
    per_kind: dict
    total_db: float
    off_resonance_raw_db: float = 0.0
    off_resonance_clamped: bool = False


@dataclass
class LossBreakdown:
    spans: list

    @property
    def worst_span_db(self):
        return max(s.total_db for s in self.spans)

    @property
    def total_db(self):
        return sum(s.total_db for s in self.spans)

    @property
    def per_kind(self):
        out = dict.fromkeys(LOSS_KINDS, 0.0)
        for span in self.spans:
            for kind, value in span.per_kind.items():
                out[kind] += value
        return out

    @property
    def warnings(self):
        return [f"span {i}: off-resonance {s.off_resonance_raw_db:.3f} dB exceeds cap, clamped"
                for i, s in enumerate(self.spans) if s.off_resonance_clamped]

    def as_dict(self):
        return {
            "spans": [{"per_kind_db": s.per_kind, "total_db": s.total_db,
                       "off_resonance_clamped": s.off_resonance_clamped} for s in self.spans],
            "per_kind_db": self.per_kind,
            "total_db": self.total_db,
            "worst_span_db": self.worst_span_db,
            "warnings": self.warnings,
        }


def _span_budget(segments, catalog, process_variation):
    per_kind = dict.fromkeys(LOSS_KINDS, 0.0)
    default_fraction = catalog.min_split_fraction(process_variation)
    for seg in segments:
        if seg.kind == WAVEGUIDE:
            per_kind[WAVEGUIDE] += waveguide_loss(seg.magnitude, catalog)
        elif seg.kind == CROSSING:
            per_kind[CROSSING] += crossing_loss(seg.magnitude, catalog)
        elif seg.kind == SPLIT:
            per_kind[SPLIT] += splitter_chain_loss(seg.magnitude, seg.fraction or default_fraction)
            if catalog.coupler_excess_loss:
                per_kind["coupler-excess"] += seg.magnitude * catalog.coupler_excess_db
        elif seg.kind == OFF_RESONANCE:
            per_kind[OFF_RESONANCE] += seg.magnitude
    raw = per_kind[OFF_RESONANCE]
    clamped = raw > catalog.off_resonance_cap
    if clamped:
        per_kind[OFF_RESONANCE] = catalog.off_resonance_cap
    return SpanBudget(per_kind, sum(per_kind.values()), raw, clamped)


def link_budget(path, catalog=DEFAULT_CATALOG, process_variation=False):
    """Per-span loss totals; regeneration entries start a fresh span.

    Splits default to the weakest branch fraction of the catalog (nominal, or
    the process-variation corner when ``process_variation`` is set).
    """
    if not isinstance(path, OpticalPath):
        raise StructuralError(f"expected an OpticalPath, got {type(path).__name__}")
    return LossBreakdown([_span_budget(span, catalog, process_variation) for span in path.spans()])
