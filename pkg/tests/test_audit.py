import json
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qta import demo_path
from qta.audit import (
    AttackScenario,
    CountermeasureConfig,
    FilterBand,
    back_reflected_mu,
    load_scenario,
    max_undetected_probe,
    multi_photon_bound_for,
    pa_budget_csv,
    pa_budget_sweep,
    run_audit,
    scenario_from_dict,
    two_way_reduction_check,
)
from qta.errors import FormatError, InvalidParameter
from qta.photon_stats import fock, poisson_distribution
from qta.reflectometry import ComponentKind, OpticalCircuit, OpticalComponent


def single_reflector(refl_db=-10.0):
    return OpticalCircuit((OpticalComponent(ComponentKind.PHASE_MODULATOR, 5.0, refl_db),))


def baseline_scenario(**cm):
    base = dict(monitor_threshold_mean=1e6, attenuator_db=-30.0)
    base.update(cm)
    return AttackScenario(single_reflector(), CountermeasureConfig(**base))


# --- max_undetected_probe -------------------------------------------------------

def test_max_undetected_probe():
    assert max_undetected_probe(CountermeasureConfig(1e6, 0.0, 3.0)) == 1e6
    assert max_undetected_probe(CountermeasureConfig(1e6, 1e4, 3.0)) == pytest.approx(1.03e6)
    assert max_undetected_probe(CountermeasureConfig(0.0, 0.0)) == 0.0


def test_countermeasure_validation():
    with pytest.raises(InvalidParameter):
        CountermeasureConfig(gate_duty=0.0)
    with pytest.raises(InvalidParameter):
        CountermeasureConfig(attenuator_db=3.0)
    with pytest.raises(InvalidParameter):
        FilterBand(rejection_db=1.0)
    with pytest.raises(InvalidParameter):
        CountermeasureConfig(monitor_sigma=-1.0)


# --- back_reflected_mu ------------------------------------------------------------

def test_back_reflected_mu_baseline():
    assert back_reflected_mu(baseline_scenario(), 1e6) == pytest.approx(0.1, rel=1e-12)
    assert back_reflected_mu(baseline_scenario(), 0.0) == 0.0


def test_attenuator_component_takes_setting():
    circuit = OpticalCircuit((
        OpticalComponent(ComponentKind.ATTENUATOR, 1.0, -math.inf, -1.0),
        OpticalComponent(ComponentKind.PHASE_MODULATOR, 5.0, -10.0),
    ))
    sc = AttackScenario(circuit, CountermeasureConfig(1e6, attenuator_db=-30.0))
    assert back_reflected_mu(sc, 1e6) == pytest.approx(0.1, rel=1e-12)


def test_filter_and_gate_factors():
    sc = baseline_scenario(filter_band=FilterBand(rejection_db=-20.0), off_gate_penalty_db=-10.0)
    assert back_reflected_mu(replace(sc, probe_wavelength_in_band=False), 1e6) == pytest.approx(1e-3)
    assert back_reflected_mu(replace(sc, probe_within_gate=False), 1e6) == pytest.approx(1e-2)
    perfect = replace(baseline_scenario(filter_band=FilterBand(rejection_db=-math.inf)),
                      probe_wavelength_in_band=False)
    assert back_reflected_mu(perfect, 1e6) == 0.0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-60.0, -1.0), min_size=1, max_size=5), st.floats(0.0, 1e7), st.floats(-40.0, 0.0))
def test_back_reflected_mu_linear(refls, mu_in, att):
    comps = tuple(OpticalComponent(ComponentKind.CONNECTOR, float(i + 1), r, -0.3) for i, r in enumerate(refls))
    sc = AttackScenario(OpticalCircuit(comps), CountermeasureConfig(attenuator_db=att))
    one = back_reflected_mu(sc, 1.0)
    assert back_reflected_mu(sc, mu_in) == pytest.approx(mu_in * one, rel=1e-12, abs=0.0)
    assert back_reflected_mu(sc, 2 * mu_in) == pytest.approx(2 * back_reflected_mu(sc, mu_in), rel=1e-12)


# --- run_audit ----------------------------------------------------------------------

def test_run_audit_baseline():
    rep = run_audit(baseline_scenario())
    assert rep.mu_back == pytest.approx(0.1, rel=1e-12)
    assert rep.info_bits == pytest.approx(0.135, abs=1e-3)
    assert rep.pa_fraction == rep.info_bits
    rep_r = run_audit(baseline_scenario(phase_randomization=True))
    assert rep_r.info_bits == pytest.approx(0.095, abs=1e-3)
    assert rep_r.pa_fraction < rep.pa_fraction


def test_run_audit_perfect_countermeasures():
    rep = run_audit(baseline_scenario(monitor_threshold_mean=0.0))
    assert rep.mu_back == 0.0 and rep.info_bits == 0.0 and rep.pa_fraction == 0.0
    assert rep.multi_photon_bound == 0.0


def test_run_audit_off_gate():
    rep = run_audit(replace(baseline_scenario(), probe_within_gate=False))
    assert rep.info_bits == 0.0
    assert rep.mu_back == pytest.approx(0.1)


def test_run_audit_multi_photon_bound():
    rep = run_audit(baseline_scenario())
    # mu_in = 1e6, t = 1e-7 -> mu = 0.1, bound mu^2 / 2
    assert rep.t_go_return == pytest.approx(1e-7)
    assert rep.multi_photon_bound == pytest.approx(0.005, rel=1e-9)


@pytest.mark.parametrize("field,weaker,stronger", [
    ("monitor_threshold_mean", 1e6, 5e5),
    ("monitor_sigma", 1e4, 1e3),
    ("attenuator_db", -20.0, -35.0),
])
def test_audit_monotone_in_countermeasures(field, weaker, stronger):
    for rand in (False, True):
        a = run_audit(baseline_scenario(**{field: weaker, "phase_randomization": rand}))
        b = run_audit(baseline_scenario(**{field: stronger, "phase_randomization": rand}))
        assert b.info_bits <= a.info_bits


def test_audit_monotone_in_filter_rejection():
    infos = []
    for rej in (0.0, -10.0, -30.0, -math.inf):
        sc = replace(baseline_scenario(filter_band=FilterBand(rejection_db=rej)), probe_wavelength_in_band=False)
        infos.append(run_audit(sc).info_bits)
    assert infos == sorted(infos, reverse=True)
    assert infos[-1] == 0.0


@settings(max_examples=30, deadline=None)
@given(st.floats(1.0, 1e8), st.floats(-60.0, -1.0))
def test_randomization_always_helps(threshold, refl):
    sc = AttackScenario(single_reflector(refl), CountermeasureConfig(threshold, attenuator_db=-30.0))
    plain = run_audit(sc)
    rand = run_audit(replace(sc, countermeasures=replace(sc.countermeasures, phase_randomization=True)))
    if plain.mu_back > 0:
        assert rand.pa_fraction < plain.pa_fraction or plain.pa_fraction == 1.0 == rand.pa_fraction


def test_report_serialization():
    rep = run_audit(baseline_scenario())
    obj = json.loads(rep.to_json())
    assert set(obj) >= {"mu_in_max", "mu_back", "info_bits", "pa_fraction", "multi_photon_bound"}
    assert "Eve information" in rep.to_text()


# --- two_way_reduction_check --------------------------------------------------------

def test_two_way_coherent():
    assert two_way_reduction_check(1e6, 1e-7, "coherent") == pytest.approx(0.1 ** 2 / 2, rel=1e-12)


def test_two_way_fock():
    n, t = 7, 0.02
    fock_val = two_way_reduction_check(n, t, "fock")
    assert fock_val == pytest.approx((n * n - n) * t * t / 2)
    assert fock_val < two_way_reduction_check(n, t, "coherent")


def test_two_way_zero_and_worst_case():
    assert two_way_reduction_check(0.0, 0.5) == 0.0
    assert two_way_reduction_check(3.0, 0.1) == two_way_reduction_check(3.0, 0.1, "coherent")
    assert two_way_reduction_check(3.0, 0.1, t3_margin=2.0) == pytest.approx(0.045 + 2e-3)
    with pytest.raises(InvalidParameter):
        two_way_reduction_check(1.0, 0.1, "squeezed")


@pytest.mark.parametrize("mu", [0.5, 1.0, 1.1, 2.5, 10.0, 1e3])
@pytest.mark.parametrize("t", [1e-4, 1e-2, 0.3])
def test_two_way_coherent_dominates_fock(mu, t):
    assert two_way_reduction_check(mu, t, "coherent") >= two_way_reduction_check(mu, t, "fock")


@pytest.mark.parametrize("n", [2, 5, 30])
def test_two_way_leading_bounds_exact(n):
    t = 0.01
    assert multi_photon_bound_for(fock(n), t) <= two_way_reduction_check(n, t, "fock") + 1e-15
    mu = float(n)
    assert multi_photon_bound_for(poisson_distribution(mu), t) <= two_way_reduction_check(mu, t, "coherent")


# --- pa_budget_sweep ------------------------------------------------------------------

def test_pa_budget_sweep():
    assert pa_budget_sweep([0.0]) == [{"mu_back": 0.0, "trojan_bits": 0.0, "reduced_bits": 0.0}]
    (row,) = pa_budget_sweep([0.1])
    assert row["mu_back"] == 0.1
    assert row["trojan_bits"] == pytest.approx(0.135, abs=1e-3)
    assert row["reduced_bits"] == pytest.approx(0.095, abs=1e-3)
    rows = pa_budget_sweep(np.linspace(0.0, 5.0, 200))
    for col in ("trojan_bits", "reduced_bits"):
        vals = [r[col] for r in rows]
        assert vals == sorted(vals)
    assert pa_budget_csv(rows).splitlines()[0] == "mu_back,trojan_bits,reduced_bits"


def test_pa_budget_sweep_off_gate():
    sc = replace(baseline_scenario(), probe_within_gate=False)
    assert all(r["trojan_bits"] == 0.0 for r in pa_budget_sweep([0.1, 1.0], sc))


# --- scenario files ---------------------------------------------------------------------

def test_load_demo_scenario():
    sc = load_scenario(demo_path("scenario"))
    assert sc.countermeasures.monitor_threshold_mean == 1e6
    assert run_audit(sc).mu_back == pytest.approx(0.1, rel=1e-12)


def test_scenario_circuit_file_reference(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps(single_reflector().to_dict()))
    (tmp_path / "s.json").write_text(json.dumps({
        "circuit_file": "c.json",
        "countermeasures": {"monitor_threshold_mean": 1e6, "attenuator_db": -30},
    }))
    assert run_audit(load_scenario(tmp_path / "s.json")).mu_back == pytest.approx(0.1)


def test_scenario_errors_name_field():
    good = {"circuit": single_reflector().to_dict()}
    with pytest.raises(FormatError, match="countermeasures.colour"):
        scenario_from_dict({**good, "countermeasures": {"colour": 1}})
    with pytest.raises(FormatError, match="countermeasures.phase_randomization"):
        scenario_from_dict({**good, "countermeasures": {"phase_randomization": "yes"}})
    with pytest.raises(FormatError, match="circuit"):
        scenario_from_dict({})
    sc = scenario_from_dict({**good, "countermeasures": {"filter_band": {"rejection_db": "-inf"}}})
    assert sc.countermeasures.filter_band.rejection_db == -math.inf
