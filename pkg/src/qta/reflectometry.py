"""Reflectometry traces of an optical circuit as seen by a probing eavesdropper.

A circuit is a chain of components along one fiber axis. Light entering at
z = 0 may bounce back and forth between reflective components before leaving
towards the instrument; each such path is a :class:`ReflectionEvent`. Events
are turned into OTDR traces (pulsed, time domain) or OFDR traces (swept
laser beating against a local-oscillator reflection, Fourier transformed).

All distances are one-way equivalent meters: optical round trip / 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
from scipy.signal import find_peaks
from scipy.signal.windows import blackmanharris

from ._io import csv_text
from .errors import FormatError, InvalidParameter, NyquistViolation, PathExplosion
from .eve_info import trojan_info

C_VACUUM = 299_792_458.0
DEFAULT_GROUP_INDEX = 1.468
DEFAULT_PATH_CAP = 1_000_000
DEFAULT_NOISE_FLOOR_DB = -150.0
# Blackman-Harris sidelobes sit ~92 dB under each peak
DEFAULT_OFDR_NOISE_FLOOR_DB = -110.0


class ComponentKind(str, Enum):
    FIBER_SPAN = "fiber_span"
    CONNECTOR = "connector"
    BEAM_SPLITTER = "beam_splitter"
    ATTENUATOR = "attenuator"
    PHASE_MODULATOR = "phase_modulator"
    FARADAY_MIRROR = "faraday_mirror"
    DETECTOR_TAP = "detector_tap"
    FILTER = "filter"


# kind -> {extra key: default}; None means required
_EXTRA_KEYS: dict[ComponentKind, dict[str, float | None]] = {
    ComponentKind.FIBER_SPAN: {"length_m": None, "rayleigh_db_per_m": -70.0},
    ComponentKind.BEAM_SPLITTER: {"split_ratio": 0.5},
    ComponentKind.PHASE_MODULATOR: {"contrast_db": 0.0},
}


def db_to_lin(db: float) -> float:
    return 0.0 if db == -math.inf else 10.0 ** (db / 10.0)


def lin_to_db(x: float) -> float:
    return -math.inf if x <= 0 else 10.0 * math.log10(x)


@dataclass(frozen=True)
class OpticalComponent:
    kind: ComponentKind
    position_m: float
    reflectance_db: float = -math.inf
    insertion_loss_db: float = 0.0
    extra: Mapping[str, float] = field(default_factory=dict)
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "kind", ComponentKind(self.kind))
        if self.reflectance_db > 0 or math.isnan(self.reflectance_db):
            raise InvalidParameter(f"reflectance_db must be <= 0, got {self.reflectance_db}")
        if not (self.insertion_loss_db <= 0 and math.isfinite(self.insertion_loss_db)):
            raise InvalidParameter(f"insertion_loss_db must be finite and <= 0, got {self.insertion_loss_db}")
        if not math.isfinite(self.position_m):
            raise InvalidParameter("position_m must be finite")
        extra = dict(self.extra)
        for key, default in _EXTRA_KEYS.get(self.kind, {}).items():
            if key not in extra:
                if default is None:
                    raise InvalidParameter(f"{self.kind.value} requires extra field {key!r}")
                extra[key] = default
        if self.kind == ComponentKind.FIBER_SPAN and not extra["length_m"] > 0:
            raise InvalidParameter("fiber_span length_m must be > 0")
        if self.kind == ComponentKind.BEAM_SPLITTER and not 0 < extra["split_ratio"] < 1:
            raise InvalidParameter("beam_splitter split_ratio must lie in (0, 1)")
        object.__setattr__(self, "extra", extra)
        if not self.label:
            object.__setattr__(self, "label", self.kind.value)

    @property
    def reflective(self) -> bool:
        return self.reflectance_db > -math.inf


@dataclass(frozen=True)
class InterferometerSpec:
    """Unbalanced interferometer; events beyond ``position_m`` are split in three."""

    arm_difference_m: float
    split_ratio: float = 0.5
    position_m: float = 0.0

    def __post_init__(self):
        if not self.arm_difference_m > 0:
            raise InvalidParameter("arm_difference_m must be > 0")
        if not 0.0 <= self.split_ratio <= 1.0:
            raise InvalidParameter("split_ratio must lie in [0, 1]")


@dataclass(frozen=True)
class OpticalCircuit:
    components: tuple[OpticalComponent, ...]
    interferometer: InterferometerSpec | None = None

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise InvalidParameter("circuit needs at least one component")
        for a, b in zip(comps, comps[1:]):
            if not b.position_m > a.position_m:
                raise InvalidParameter(
                    f"component positions must be strictly increasing ({a.position_m} then {b.position_m})")
        object.__setattr__(self, "components", comps)

    def with_losses(self, kind: ComponentKind, insertion_loss_db: float) -> "OpticalCircuit":
        """Copy with every component of ``kind`` set to the given insertion loss."""
        comps = tuple(
            OpticalComponent(c.kind, c.position_m, c.reflectance_db, insertion_loss_db, c.extra, c.label)
            if c.kind == kind else c
            for c in self.components
        )
        return OpticalCircuit(comps, self.interferometer)

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"components": []}
        for c in self.components:
            item = {
                "kind": c.kind.value,
                "position_m": c.position_m,
                "reflectance_db": None if c.reflectance_db == -math.inf else c.reflectance_db,
                "insertion_loss_db": c.insertion_loss_db,
            }
            if c.extra:
                item["extra"] = dict(c.extra)
            if c.label != c.kind.value:
                item["label"] = c.label
            out["components"].append(item)
        if self.interferometer is not None:
            i = self.interferometer
            out["interferometer"] = {"arm_difference_m": i.arm_difference_m,
                                     "split_ratio": i.split_ratio, "position_m": i.position_m}
        return out

    @classmethod
    def from_dict(cls, obj: Any) -> "OpticalCircuit":
        return circuit_from_dict(obj)


def _num(obj: Mapping, key: str, where: str, default: Any = ...) -> float:
    if key not in obj:
        if default is ...:
            raise FormatError("missing required field", f"{where}.{key}")
        return default
    val = obj[key]
    if val is None:
        return -math.inf
    if isinstance(val, str) and val.strip().lower() in ("-inf", "-infinity"):
        return -math.inf
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise FormatError(f"expected a number, got {val!r}", f"{where}.{key}")
    return float(val)


_BASE_KEYS = {"kind", "position_m", "reflectance_db", "insertion_loss_db", "extra", "label"}


def circuit_from_dict(obj: Any) -> OpticalCircuit:
    """Parse the circuit JSON layout; errors name the offending field."""
    if not isinstance(obj, Mapping):
        raise FormatError("circuit must be a JSON object")
    unknown = set(obj) - {"components", "interferometer"}
    if unknown:
        raise FormatError("unknown field", sorted(unknown)[0])
    raw = obj.get("components")
    if not isinstance(raw, list):
        raise FormatError("expected a list of components", "components")
    if not raw:
        raise FormatError("circuit has no components", "components")
    comps = []
    for i, item in enumerate(raw):
        where = f"components[{i}]"
        if not isinstance(item, Mapping):
            raise FormatError("expected an object", where)
        kind = item.get("kind")
        try:
            kind = ComponentKind(kind)
        except ValueError:
            raise FormatError(f"unknown component kind {kind!r}", f"{where}.kind") from None
        allowed = set(_EXTRA_KEYS.get(kind, {}))
        extra = dict(item.get("extra") or {})
        for key in item:
            if key in _BASE_KEYS:
                continue
            if key in allowed:
                extra[key] = item[key]
            else:
                raise FormatError(f"unexpected field for {kind.value}", f"{where}.{key}")
        for key in extra:
            if key not in allowed:
                raise FormatError(f"unexpected extra field for {kind.value}", f"{where}.extra.{key}")
            extra[key] = _num(extra, key, f"{where}.extra")
        label = item.get("label", "")
        if not isinstance(label, str):
            raise FormatError("expected a string", f"{where}.label")
        try:
            comps.append(OpticalComponent(
                kind=kind,
                position_m=_num(item, "position_m", where),
                reflectance_db=_num(item, "reflectance_db", where, -math.inf),
                insertion_loss_db=_num(item, "insertion_loss_db", where, 0.0),
                extra=extra,
                label=label,
            ))
        except InvalidParameter as exc:
            raise FormatError(str(exc), where) from None
    interf = None
    if obj.get("interferometer") is not None:
        spec = obj["interferometer"]
        if not isinstance(spec, Mapping):
            raise FormatError("expected an object", "interferometer")
        bad = set(spec) - {"arm_difference_m", "split_ratio", "position_m"}
        if bad:
            raise FormatError("unknown field", f"interferometer.{sorted(bad)[0]}")
        try:
            interf = InterferometerSpec(
                _num(spec, "arm_difference_m", "interferometer"),
                _num(spec, "split_ratio", "interferometer", 0.5),
                _num(spec, "position_m", "interferometer", 0.0),
            )
        except InvalidParameter as exc:
            raise FormatError(str(exc), "interferometer") from None
    try:
        return OpticalCircuit(tuple(comps), interf)
    except InvalidParameter as exc:
        raise FormatError(str(exc), "components") from None


@dataclass(frozen=True)
class ReflectionEvent:
    distance_m: float
    power_db: float
    order: int = 1
    path: tuple[int, ...] = ()
    label: str = ""

    @property
    def round_trip_distance_m(self) -> float:
        return 2.0 * self.distance_m

    @property
    def power_lin(self) -> float:
        return db_to_lin(self.power_db)


def count_candidate_paths(circuit: OpticalCircuit, max_order: int) -> int:
    """Number of odd-order reflection sequences before any power pruning.

    A sequence alternates forward and backward reflections, so its indices
    zig-zag: r1 > r2 < r3 > ... ; only odd lengths exit the circuit.
    """
    k = sum(1 for c in circuit.components if c.reflective)
    a = [1] * k  # sequences ending with a forward-travel reflection at j
    total = k
    for _ in range(3, max_order + 1, 2):
        # b[i]: sequences that just reflected at i while travelling backwards
        suffix = 0
        b = [0] * k
        for i in range(k - 1, -1, -1):
            b[i] = suffix
            suffix += a[i]
        prefix = 0
        new_a = [0] * k
        for j in range(k):
            new_a[j] = prefix
            prefix += b[j]
        a = new_a
        total += sum(a)
    return total


def enumerate_reflection_paths(circuit: OpticalCircuit, max_order: int = 1,
                               floor_db: float = -math.inf, *,
                               cap: int = DEFAULT_PATH_CAP) -> list[ReflectionEvent]:
    """All reflection paths with at most ``max_order`` reflections above ``floor_db``.

    Path power is the sum of the reflectances hit plus the insertion loss of
    every component passed through, once per pass. A component that reflects
    the light is not also counted as traversed on that bounce.
    """
    if max_order < 1:
        raise InvalidParameter("max_order must be >= 1")
    if not floor_db < 0:
        raise InvalidParameter("floor_db must be < 0")
    n_cand = count_candidate_paths(circuit, max_order)
    if n_cand > cap:
        raise PathExplosion(f"{n_cand} candidate reflection paths exceed the cap of {cap}")

    comps = circuit.components
    pos = [c.position_m for c in comps]
    refl = [c.reflectance_db for c in comps]
    # prefix[k] = summed insertion loss of components 0..k-1
    prefix = [0.0]
    for c in comps:
        prefix.append(prefix[-1] + c.insertion_loss_db)
    reflective = [i for i, c in enumerate(comps) if c.reflective]

    events: list[ReflectionEvent] = []

    def between(a: int, b: int) -> float:
        lo, hi = min(a, b), max(a, b)
        return prefix[hi] - prefix[lo + 1]

    def emit(path: list[int], power: float, length: float):
        last = path[-1]
        total = power + prefix[last]
        if total >= floor_db:
            dist = (length + pos[last]) / 2.0
            label = "-".join(comps[i].label for i in path)
            events.append(ReflectionEvent(dist, total, len(path), tuple(path), label))

    def forward(path: list[int], power: float, length: float):
        # light last reflected at path[-1] and now travels back towards the entry
        emit(path, power, length)
        if len(path) + 2 > max_order:
            return
        last = path[-1]
        for i in reflective:
            if i >= last:
                break
            p_i = power + between(i, last) + refl[i]
            if p_i < floor_db:
                continue
            l_i = length + pos[last] - pos[i]
            for j in reflective:
                if j <= i:
                    continue
                p_j = p_i + between(i, j) + refl[j]
                if p_j < floor_db:
                    continue
                forward(path + [i, j], p_j, l_i + pos[j] - pos[i])

    for j in reflective:
        p = prefix[j] + refl[j]
        if p >= floor_db:
            forward([j], p, pos[j])

    events.sort(key=lambda e: (e.distance_m, -e.power_db, e.order, e.path))
    return events


def expand_interferometer(events: Sequence[ReflectionEvent], spec: InterferometerSpec) -> list[ReflectionEvent]:
    """Split every event beyond the interferometer into short/short, mixed, long/long copies.

    Going in and coming back each pick an arm: offsets 0, d, 2d with linear
    weights r^2, 2r(1-r), (1-r)^2 for short-arm power fraction r.
    """
    r = spec.split_ratio
    weights = ((0.0, r * r), (spec.arm_difference_m, 2.0 * r * (1.0 - r)),
               (2.0 * spec.arm_difference_m, (1.0 - r) ** 2))
    out = []
    for ev in events:
        if ev.distance_m <= spec.position_m:
            out.append(ev)
            continue
        for offset, w in weights:
            if w > 0:
                out.append(ReflectionEvent(ev.distance_m + offset, ev.power_db + lin_to_db(w),
                                           ev.order, ev.path, ev.label))
    out.sort(key=lambda e: (e.distance_m, -e.power_db, e.order, e.path))
    return out


def circuit_events(circuit: OpticalCircuit, max_order: int = 1, floor_db: float = -math.inf,
                   *, cap: int = DEFAULT_PATH_CAP) -> list[ReflectionEvent]:
    """Reflection paths with the circuit's interferometer (if any) applied."""
    events = enumerate_reflection_paths(circuit, max_order, floor_db, cap=cap)
    if circuit.interferometer is not None:
        events = expand_interferometer(events, circuit.interferometer)
    return events


@dataclass(frozen=True)
class RayleighSegment:
    """Distributed backscatter of one fiber span.

    ``level_db`` is the backscatter per meter of pulse at the span start,
    two-way upstream losses included; ``slope_db_per_m`` is the extra two-way
    loss per meter inside the span.
    """

    start_m: float
    stop_m: float
    level_db: float
    slope_db_per_m: float = 0.0


def rayleigh_segments(circuit: OpticalCircuit) -> list[RayleighSegment]:
    segs = []
    upstream = 0.0
    for c in circuit.components:
        if c.kind == ComponentKind.FIBER_SPAN:
            length = c.extra["length_m"]
            segs.append(RayleighSegment(
                c.position_m, c.position_m + length,
                c.extra["rayleigh_db_per_m"] + 2.0 * upstream,
                2.0 * c.insertion_loss_db / length,
            ))
        upstream += c.insertion_loss_db
    return segs


@dataclass(frozen=True)
class GridSpec:
    start_m: float
    stop_m: float
    step_m: float

    def axis(self) -> np.ndarray:
        if not self.step_m > 0:
            raise InvalidParameter("grid step must be > 0")
        if not self.stop_m > self.start_m:
            raise InvalidParameter("grid stop must exceed start")
        n = int(math.floor((self.stop_m - self.start_m) / self.step_m + 1e-9)) + 1
        return self.start_m + self.step_m * np.arange(n)


@dataclass(frozen=True, eq=False)
class Trace:
    axis: np.ndarray
    power_db: np.ndarray
    noise_floor_db: float

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=float)
        power = np.asarray(self.power_db, dtype=float)
        if axis.shape != power.shape or axis.ndim != 1:
            raise InvalidParameter("axis and power_db must be 1-D arrays of equal length")
        if axis.size > 1 and not np.all(np.diff(axis) > 0):
            raise InvalidParameter("trace axis must be increasing")
        if not np.all(np.isfinite(power)):
            raise InvalidParameter("trace samples must be finite")
        axis.setflags(write=False)
        power.setflags(write=False)
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "power_db", power)

    @property
    def step_m(self) -> float:
        return float(self.axis[1] - self.axis[0]) if self.axis.size > 1 else 0.0

    def to_csv(self) -> str:
        return csv_text(("distance_m", "power_db"), zip(self.axis, self.power_db))


def synthesize_otdr(events: Iterable[ReflectionEvent], pulse_width_m: float,
                    grid: GridSpec | None = None,
                    rayleigh: Sequence[RayleighSegment] = (), *,
                    noise_floor_db: float = DEFAULT_NOISE_FLOOR_DB,
                    noise_sigma: float = 0.0, seed: int = 0) -> Trace:
    """OTDR trace with a rectangular probe pulse.

    Each event contributes its power over [z - w/2, z + w/2]; Rayleigh
    backscatter adds ``10^(level/10) * w`` along its span. Contributions add in
    linear power, so events closer than the pulse width merge. Optional
    Gaussian noise (linear power, std ``noise_sigma``) is drawn from a
    Philox generator seeded with ``seed``.
    """
    w = float(pulse_width_m)
    if not w > 0:
        raise InvalidParameter("pulse_width_m must be > 0")
    events = list(events)
    if grid is None:
        ends = [e.distance_m for e in events] + [s.stop_m for s in rayleigh] + [0.0]
        starts = [e.distance_m for e in events] + [s.start_m for s in rayleigh] + [0.0]
        grid = GridSpec(min(starts) - 2 * w, max(ends) + 2 * w, w / 10.0)
    if grid.step_m > w / 2 * (1 + 1e-12):
        raise InvalidParameter("grid step must be <= pulse_width_m / 2")
    x = grid.axis()
    lin = np.zeros_like(x)
    eps = 1e-9 * grid.step_m
    for seg in rayleigh:
        mask = (x >= seg.start_m - eps) & (x < seg.stop_m - eps)
        lin[mask] += 10.0 ** ((seg.level_db + seg.slope_db_per_m * (x[mask] - seg.start_m)) / 10.0) * w
    for ev in events:
        p = ev.power_lin
        if p > 0:
            lin[(x >= ev.distance_m - w / 2 - eps) & (x <= ev.distance_m + w / 2 + eps)] += p
    if noise_sigma > 0:
        rng = np.random.Generator(np.random.Philox(seed))
        lin = lin + rng.normal(0.0, noise_sigma, size=x.size)
    floor = 10.0 ** (noise_floor_db / 10.0)
    return Trace(x, 10.0 * np.log10(np.maximum(lin, floor)), noise_floor_db)


@dataclass(frozen=True)
class SweepSpec:
    sweep_rate_hz_per_s: float = 5e11
    duration_s: float = 0.02
    sample_rate_hz: float = 1e6

    def __post_init__(self):
        for name in ("sweep_rate_hz_per_s", "duration_s", "sample_rate_hz"):
            if not getattr(self, name) > 0:
                raise InvalidParameter(f"{name} must be > 0")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * self.sample_rate_hz))

    def beat_frequency(self, distance_m: float, group_index: float = DEFAULT_GROUP_INDEX) -> float:
        return self.sweep_rate_hz_per_s * 2.0 * group_index * distance_m / C_VACUUM

    def max_distance(self, group_index: float = DEFAULT_GROUP_INDEX) -> float:
        return self.sample_rate_hz / 2.0 * C_VACUUM / (2.0 * group_index * self.sweep_rate_hz_per_s)

    def bin_m(self, group_index: float = DEFAULT_GROUP_INDEX) -> float:
        """Distance spanned by one transform bin."""
        t_total = self.n_samples / self.sample_rate_hz
        return C_VACUUM / (2.0 * group_index * self.sweep_rate_hz_per_s * t_total)


def synthesize_ofdr(events: Iterable[ReflectionEvent], sweep: SweepSpec,
                    coherence_length_m: float, lo_reflectance_db: float = -20.0, *,
                    group_index: float = DEFAULT_GROUP_INDEX,
                    noise_floor_db: float = DEFAULT_OFDR_NOISE_FLOOR_DB,
                    noise_sigma: float = 0.0, seed: int = 0) -> Trace:
    """OFDR trace: spectrum of the beat between the LO reflection and each event.

    A linear sweep of rate g turns a reflector at z into a beat at
    f = g * 2 n_g z / c with amplitude sqrt(P_lo P) * exp(-z / L_c). The
    signal is Blackman-Harris windowed before the FFT to keep sidelobes of
    strong reflectors below weak ones. The trace is normalized by the LO
    power so an isolated, fully coherent event reads its own power in dB.
    """
    if not coherence_length_m > 0:
        raise InvalidParameter("coherence_length_m must be > 0")
    if lo_reflectance_db > 0:
        raise InvalidParameter("lo_reflectance_db must be <= 0")
    events = list(events)
    nyq = sweep.sample_rate_hz / 2.0
    for ev in events:
        f = sweep.beat_frequency(ev.distance_m, group_index)
        if f > nyq:
            raise NyquistViolation(
                f"event at {ev.distance_m:g} m beats at {f:.6g} Hz, above Nyquist {nyq:.6g} Hz")
    n = sweep.n_samples
    if n < 16:
        raise InvalidParameter("sweep must produce at least 16 samples")
    t = np.arange(n) / sweep.sample_rate_hz
    p_lo = db_to_lin(lo_reflectance_db)
    signal = np.zeros(n)
    for ev in events:
        amp = math.sqrt(p_lo * ev.power_lin) * math.exp(-abs(ev.distance_m) / coherence_length_m)
        if amp > 0:
            signal += amp * np.cos(2.0 * np.pi * sweep.beat_frequency(ev.distance_m, group_index) * t)
    if noise_sigma > 0:
        rng = np.random.Generator(np.random.Philox(seed))
        signal = signal + rng.normal(0.0, noise_sigma, size=n)
    win = blackmanharris(n, sym=False)
    spec = np.fft.rfft(signal * win)
    amp = 2.0 * np.abs(spec) / win.sum()
    freqs = np.fft.rfftfreq(n, 1.0 / sweep.sample_rate_hz)
    dist = freqs * C_VACUUM / (2.0 * group_index * sweep.sweep_rate_hz_per_s)
    floor = 10.0 ** (noise_floor_db / 10.0)
    power = amp ** 2 / p_lo if p_lo > 0 else np.zeros_like(amp)
    return Trace(dist, 10.0 * np.log10(np.maximum(power, floor)), noise_floor_db)


@dataclass(frozen=True)
class Peak:
    distance_m: float
    power_db: float


def detect_peaks(trace: Trace, min_prominence_db: float) -> list[Peak]:
    """Local maxima standing ``min_prominence_db`` above their surroundings."""
    if not min_prominence_db > 0:
        raise InvalidParameter("min_prominence_db must be > 0")
    idx, _ = find_peaks(trace.power_db, prominence=min_prominence_db)
    return [Peak(float(trace.axis[i]), float(trace.power_db[i])) for i in idx]


def modulator_distinguishability(contrast_db: float, mu_probe: float,
                                 reflectance_db: float = -20.0) -> float:
    """Bits Eve can learn from the setting-dependent reflection of a modulator.

    Setting 0 reflects ``reflectance_db``, setting 1 reflects
    ``reflectance_db - |contrast_db|``. Only the difference in returned mean
    photon number carries setting information:
    mu_eff = mu_probe * |10^(r0/10) - 10^(r1/10)|.
    """
    if mu_probe < 0:
        raise InvalidParameter("mu_probe must be >= 0")
    r0 = db_to_lin(reflectance_db)
    r1 = db_to_lin(reflectance_db - abs(contrast_db))
    return trojan_info(mu_probe * abs(r0 - r1))
