"""End-to-end Trojan-horse audit of one apparatus.

The monitor detector bounds how bright a probe Eve can inject unnoticed;
the circuit's reflection paths, the filter and the gate turn that into the
mean photon number she gets back; the information bounds turn that into the
privacy-amplification sacrifice per sifted bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

from . import eve_info
from ._io import csv_text
from .errors import FormatError, InvalidParameter
from .photon_stats import PhotonNumberDistribution, multi_photon_prob_exact
from .reflectometry import (
    ComponentKind,
    OpticalCircuit,
    circuit_from_dict,
    db_to_lin,
    enumerate_reflection_paths,
)


@dataclass(frozen=True)
class FilterBand:
    center_nm: float = 1550.0
    width_nm: float = 1.0
    rejection_db: float = 0.0

    def __post_init__(self):
        if not self.rejection_db <= 0:
            raise InvalidParameter("rejection_db must be <= 0")
        if not self.width_nm > 0:
            raise InvalidParameter("filter width_nm must be > 0")


@dataclass(frozen=True)
class CountermeasureConfig:
    monitor_threshold_mean: float = 0.0
    monitor_sigma: float = 0.0
    monitor_k: float = 3.0
    filter_band: FilterBand = field(default_factory=FilterBand)
    gate_duty: float = 1.0
    attenuator_db: float = 0.0
    phase_randomization: bool = False
    # extra loss for a probe arriving outside the modulator gate
    off_gate_penalty_db: float = 0.0

    def __post_init__(self):
        if not self.monitor_threshold_mean >= 0:
            raise InvalidParameter("monitor_threshold_mean must be >= 0")
        if not self.monitor_sigma >= 0:
            raise InvalidParameter("monitor_sigma must be >= 0")
        if not self.monitor_k > 0:
            raise InvalidParameter("monitor_k must be > 0")
        if not 0 < self.gate_duty <= 1:
            raise InvalidParameter("gate_duty must lie in (0, 1]")
        if not (self.attenuator_db <= 0 and math.isfinite(self.attenuator_db)):
            raise InvalidParameter("attenuator_db must be finite and <= 0")
        if not self.off_gate_penalty_db <= 0:
            raise InvalidParameter("off_gate_penalty_db must be <= 0")


@dataclass(frozen=True)
class AttackScenario:
    circuit: OpticalCircuit
    countermeasures: CountermeasureConfig = field(default_factory=CountermeasureConfig)
    probe_wavelength_in_band: bool = True
    probe_within_gate: bool = True
    max_order: int = 3
    floor_db: float = -150.0


@dataclass(frozen=True)
class AuditReport:
    mu_in_max: float
    mu_back: float
    info_bits: float
    pa_fraction: float
    multi_photon_bound: float
    phase_randomization: bool = False
    t_go_return: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_text(self) -> str:
        rows = [
            ("max undetected probe (photons/pulse)", self.mu_in_max),
            ("returned to Eve (photons/qubit)", self.mu_back),
            ("go-and-return transmission", self.t_go_return),
            ("Eve information (bits/qubit)", self.info_bits),
            ("PA sacrifice (bits/sifted bit)", self.pa_fraction),
            ("multi-photon probability bound", self.multi_photon_bound),
        ]
        width = max(len(k) for k, _ in rows)
        lines = [f"phase randomization: {'on' if self.phase_randomization else 'off'}"]
        lines += [f"{k:<{width}}  {v:.6g}" for k, v in rows]
        return "\n".join(lines) + "\n"


def max_undetected_probe(cm: CountermeasureConfig) -> float:
    """Brightest per-pulse probe that hides inside the monitor's fluctuations."""
    return cm.monitor_threshold_mean + cm.monitor_k * cm.monitor_sigma


def _audit_circuit(scenario: AttackScenario) -> tuple[OpticalCircuit, float]:
    """Circuit with the variable attenuator applied, plus any extra two-way dB.

    With attenuator components in the circuit the setting becomes their
    insertion loss; otherwise it acts as an input attenuator crossed twice.
    """
    att = scenario.countermeasures.attenuator_db
    circuit = scenario.circuit
    if any(c.kind == ComponentKind.ATTENUATOR for c in circuit.components):
        return circuit.with_losses(ComponentKind.ATTENUATOR, att), 0.0
    return circuit, 2.0 * att


def return_fraction(scenario: AttackScenario) -> float:
    """Summed linear power of every reflection path (attenuator included)."""
    circuit, extra_db = _audit_circuit(scenario)
    events = enumerate_reflection_paths(circuit, scenario.max_order, scenario.floor_db)
    return math.fsum(e.power_lin for e in events) * db_to_lin(extra_db)


def back_reflected_mu(scenario: AttackScenario, mu_in: float) -> float:
    """Mean photon number returned to Eve for a probe of ``mu_in`` photons."""
    if not mu_in >= 0:
        raise InvalidParameter("mu_in must be >= 0")
    cm = scenario.countermeasures
    l_filter = 1.0 if scenario.probe_wavelength_in_band else db_to_lin(cm.filter_band.rejection_db)
    l_gate = 1.0 if scenario.probe_within_gate else db_to_lin(cm.off_gate_penalty_db)
    return mu_in * l_gate * l_filter * return_fraction(scenario)


def two_way_reduction_check(mu_in_bound: float, t_go_return: float, family: str | None = None,
                            t3_margin: float = 0.0) -> float:
    """Bound on Prob(m >= 2) for the pulse leaving Alice in a 2-way setup.

    ``family`` selects "coherent" (E[n(n-1)] = mu^2) or "fock" with the
    largest admissible photon number N = floor(mu); ``None`` returns the
    worst case over both. ``t3_margin * t^3`` is added as a safety margin.
    """
    if not mu_in_bound >= 0:
        raise InvalidParameter("mu_in_bound must be >= 0")
    t = float(t_go_return)
    if not 0 <= t <= 1:
        raise InvalidParameter("t_go_return must lie in [0, 1]")
    coherent = mu_in_bound ** 2
    n = math.floor(mu_in_bound)
    fock = float(n * n - n)
    if family is None:
        moment = max(coherent, fock)
    elif family == "coherent":
        moment = coherent
    elif family == "fock":
        moment = fock
    else:
        raise InvalidParameter(f"unknown input-state family {family!r}")
    if t == 0 or moment == 0:
        return 0.0
    return moment * t * t / 2.0 + t3_margin * t ** 3


def multi_photon_bound_for(d: PhotonNumberDistribution, t_go_return: float) -> float:
    """Exact Prob(m >= 2) for an explicit input photon-number distribution."""
    return multi_photon_prob_exact(d, t_go_return)


def run_audit(scenario: AttackScenario) -> AuditReport:
    cm = scenario.countermeasures
    mu_in = max_undetected_probe(cm)
    t = min(1.0, return_fraction(scenario))
    mu_back = back_reflected_mu(scenario, mu_in)
    if not scenario.probe_within_gate:
        # static reflections return light but no setting information
        info = 0.0
    elif cm.phase_randomization:
        info = eve_info.reduced_info(mu_back)
    else:
        info = eve_info.trojan_info(mu_back)
    return AuditReport(
        mu_in_max=mu_in,
        mu_back=mu_back,
        info_bits=info,
        pa_fraction=info,
        multi_photon_bound=two_way_reduction_check(mu_in, t),
        phase_randomization=cm.phase_randomization,
        t_go_return=t,
    )


def pa_budget_sweep(mu_grid: Iterable[float], scenario: AttackScenario | None = None) -> list[dict]:
    """Information bounds over a grid of returned mean photon numbers.

    With an off-gate ``scenario`` both bit columns are zero, as in run_audit.
    """
    off_gate = scenario is not None and not scenario.probe_within_gate
    rows = []
    for mu in mu_grid:
        if not mu >= 0:
            raise InvalidParameter("grid values must be >= 0")
        if off_gate:
            rows.append({"mu_back": float(mu), "trojan_bits": 0.0, "reduced_bits": 0.0})
        else:
            rows.append({"mu_back": float(mu), "trojan_bits": eve_info.trojan_info(mu),
                         "reduced_bits": eve_info.reduced_info(mu)})
    return rows


def pa_budget_csv(rows: list[dict]) -> str:
    cols = ("mu_back", "trojan_bits", "reduced_bits")
    return csv_text(cols, ([r[c] for c in cols] for r in rows))


# --- scenario files -------------------------------------------------------

_CM_FIELDS = {"monitor_threshold_mean", "monitor_sigma", "monitor_k", "filter_band", "gate_duty",
              "attenuator_db", "phase_randomization", "off_gate_penalty_db"}
_SCENARIO_FIELDS = {"circuit", "circuit_file", "countermeasures", "probe_wavelength_in_band",
                    "probe_within_gate", "max_order", "floor_db"}


def _number(val: Any, where: str) -> float:
    if isinstance(val, str) and val.strip().lower() in ("-inf", "-infinity"):
        return -math.inf
    if val is None:
        return -math.inf
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise FormatError(f"expected a number, got {val!r}", where)
    return float(val)


def _bool(val: Any, where: str) -> bool:
    if not isinstance(val, bool):
        raise FormatError(f"expected true/false, got {val!r}", where)
    return val


def countermeasures_from_dict(obj: Any) -> CountermeasureConfig:
    if not isinstance(obj, Mapping):
        raise FormatError("expected an object", "countermeasures")
    bad = set(obj) - _CM_FIELDS
    if bad:
        raise FormatError("unknown field", f"countermeasures.{sorted(bad)[0]}")
    kw: dict[str, Any] = {}
    for key, val in obj.items():
        where = f"countermeasures.{key}"
        if key == "phase_randomization":
            kw[key] = _bool(val, where)
        elif key == "filter_band":
            if not isinstance(val, Mapping):
                raise FormatError("expected an object", where)
            fb_bad = set(val) - {"center_nm", "width_nm", "rejection_db"}
            if fb_bad:
                raise FormatError("unknown field", f"{where}.{sorted(fb_bad)[0]}")
            try:
                kw[key] = FilterBand(**{k: _number(v, f"{where}.{k}") for k, v in val.items()})
            except InvalidParameter as exc:
                raise FormatError(str(exc), where) from None
        else:
            kw[key] = _number(val, where)
    try:
        return CountermeasureConfig(**kw)
    except InvalidParameter as exc:
        raise FormatError(str(exc), "countermeasures") from None


def scenario_from_dict(obj: Any, base_dir: str | Path | None = None) -> AttackScenario:
    """Parse a scenario; the circuit is inline or a path relative to ``base_dir``."""
    if not isinstance(obj, Mapping):
        raise FormatError("scenario must be a JSON object")
    bad = set(obj) - _SCENARIO_FIELDS
    if bad:
        raise FormatError("unknown field", sorted(bad)[0])
    if "circuit" in obj:
        circuit = circuit_from_dict(obj["circuit"])
    elif "circuit_file" in obj:
        ref = Path(obj["circuit_file"])
        if base_dir is not None and not ref.is_absolute():
            ref = Path(base_dir) / ref
        try:
            circuit = circuit_from_dict(json.loads(ref.read_text()))
        except OSError as exc:
            raise FormatError(f"cannot read circuit file ({exc.strerror})", "circuit_file") from None
        except json.JSONDecodeError as exc:
            raise FormatError(f"invalid JSON in circuit file: {exc}", "circuit_file") from None
    else:
        raise FormatError("scenario needs 'circuit' or 'circuit_file'", "circuit")
    cm = countermeasures_from_dict(obj.get("countermeasures", {}))
    max_order = obj.get("max_order", 3)
    if isinstance(max_order, bool) or not isinstance(max_order, int) or max_order < 1:
        raise FormatError("expected an integer >= 1", "max_order")
    floor_db = _number(obj.get("floor_db", -150.0), "floor_db")
    if not floor_db < 0:
        raise FormatError("must be < 0", "floor_db")
    return AttackScenario(
        circuit=circuit,
        countermeasures=cm,
        probe_wavelength_in_band=_bool(obj.get("probe_wavelength_in_band", True), "probe_wavelength_in_band"),
        probe_within_gate=_bool(obj.get("probe_within_gate", True), "probe_within_gate"),
        max_order=max_order,
        floor_db=floor_db,
    )


def load_scenario(path: str | Path) -> AttackScenario:
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc}") from None
    return scenario_from_dict(obj, base_dir=path.parent)
