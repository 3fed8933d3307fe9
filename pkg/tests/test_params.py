"""Parameter-chain unit tests: every published anchor value plus the
algebraic identities between the derived quantities."""
import math

import pytest

from qstransfer import (CONSTANTS, CavityGeometry, ModelError, RydbergPair,
                        cavity_decay_rate, cavity_mode_frequency,
                        coupling_rate, effective_rates, magnetic_chain,
                        mode_volume, parameter_chain, swap_time,
                        thermal_occupation, vacuum_field)
from qstransfer.experiments import OMEGA_HF
from qstransfer.params import (qubit_frequency,
                               rydberg_transition_frequency)

TWO_PI = 2.0 * math.pi


@pytest.fixture(scope="module")
def chain():
    return {row.name: row for row in parameter_chain()}


def test_rydberg_transition_matches_published_value():
    omega = rydberg_transition_frequency(RydbergPair())
    assert omega == pytest.approx(TWO_PI * 12.2e9, rel=0.02)


def test_rydberg_frequency_rejects_inverted_pair():
    with pytest.raises(ModelError):
        # defects chosen so the p level sits above the s level
        rydberg_transition_frequency(RydbergPair(n=68, delta_s=5.0,
                                                 delta_p=0.5))


def test_cavity_mode_frequency_formula():
    geom = CavityGeometry()
    omega = cavity_mode_frequency(geom)
    expected = (math.pi * geom.mode_index * CONSTANTS.c
                / (geom.length * math.sqrt(geom.eps_r)))
    assert omega == pytest.approx(expected, rel=1e-12)
    assert omega == pytest.approx(expected, rel=0.01)


def test_cavity_resonant_with_rydberg_transition():
    # the full-wave mode of the 1 cm resonator must sit within a percent
    # of the 68p -> 69s transition for the resonant protocol to work
    omega_c = cavity_mode_frequency(CavityGeometry())
    omega_ri = rydberg_transition_frequency(RydbergPair())
    assert abs(omega_c - omega_ri) / omega_ri < 0.01


def test_vacuum_field_amplitude():
    geom = CavityGeometry()
    omega_c = cavity_mode_frequency(geom)
    field = vacuum_field(omega_c, mode_volume(geom))
    assert field == pytest.approx(0.54, rel=0.10)


def test_single_atom_coupling_rate(chain):
    assert chain["eta_ac"].value == pytest.approx(TWO_PI * 3.85e6, rel=0.03)


def test_photon_lifetime_at_launch_q():
    kappa = cavity_decay_rate(CavityGeometry())
    assert 1.0 / kappa == pytest.approx(13e-6, rel=0.01)


def test_thermal_occupation_anchor():
    omega_c = cavity_mode_frequency(CavityGeometry())
    t = 0.2 * CONSTANTS.hbar * omega_c / CONSTANTS.k_B
    n_bar = thermal_occupation(omega_c, t)
    assert 0.006 <= n_bar <= 0.008


def test_thermal_occupation_limits():
    omega = TWO_PI * 12.2e9
    assert thermal_occupation(omega, 0.0) == 0.0
    cold = thermal_occupation(omega, 1e-3)
    hot = thermal_occupation(omega, 1.0)
    assert cold < 1e-100
    assert hot > 1.0
    with pytest.raises(ModelError):
        thermal_occupation(omega, -1.0)


def test_transfer_time_anchors(chain):
    assert chain["tau_gr"].value == pytest.approx(0.65e-6, rel=0.02)
    assert chain["tau_rs"].value == 1.0e-6          # exact in binary64
    assert chain["tau_qc"].value == pytest.approx(5e-9, rel=1e-12)


def test_swap_time_pi_pulse_identity():
    rate = TWO_PI * 250e3
    # a pi pulse of the exchange -eta(a b^dag + h.c.) lasts pi/(2 eta)
    assert swap_time(rate) == 0.5 * math.pi / rate
    with pytest.raises(ModelError):
        swap_time(0.0)


def test_protocol_total_time_under_photon_lifetime(chain):
    total = chain["protocol_time"].value
    lifetime = chain["photon_lifetime"].value
    assert total < 0.2 * lifetime


def test_effective_rates_adiabatic_elimination():
    eta_qc = TWO_PI * 50e6
    eta_ac = TWO_PI * 20.0
    delta = 10.0 * eta_qc
    kappa = 5e4
    collective, kappa_eff = effective_rates(eta_qc, eta_ac, delta, 1e6, kappa)
    assert collective == pytest.approx(TWO_PI * 2e3, rel=1e-12)
    assert kappa_eff == pytest.approx(kappa * 0.01, rel=1e-12)
    assert kappa_eff == pytest.approx(TWO_PI * 100.0, rel=0.30)
    with pytest.raises(ModelError):
        effective_rates(eta_qc, eta_ac, 0.0, 1e6, kappa)


def test_dispersive_loss_estimate():
    collective, kappa_eff = effective_rates(TWO_PI * 50e6, TWO_PI * 20.0,
                                            TWO_PI * 500e6, 1e6, 5e4)
    p_loss = kappa_eff * swap_time(collective)
    assert p_loss == pytest.approx(0.08, abs=0.02)


def test_magnetic_chain_anchor_values():
    rows = {row.name: row for row in magnetic_chain(OMEGA_HF)}
    assert rows["rtN_eta_sg"].value == pytest.approx(TWO_PI * 20e3, rel=0.05)
    assert rows["tau_sg"].value == pytest.approx(12.5e-6, rel=0.05)
    # crude full-exposure photon-loss estimate behind the 0.5 figure
    assert rows["loss_sg_estimate"].value == pytest.approx(0.63, abs=0.05)


def test_loss_estimate_scales_with_kappa(chain):
    loss = chain["loss_gr_estimate"].value
    kappa = chain["kappa"].value
    tau = chain["tau_gr"].value
    assert loss == pytest.approx(kappa * tau, rel=1e-12)


def test_qubit_frequency_flux_tuning():
    e_j = 1e-24
    assert qubit_frequency(e_j, 0.0, 1.0) == pytest.approx(
        2.0 * e_j / CONSTANTS.hbar)
    # cos(pi/2) leaves only float residue relative to the zero-flux splitting
    half = qubit_frequency(e_j, 0.5, 1.0)
    assert abs(half) < 1e-15 * qubit_frequency(e_j, 0.0, 1.0)
    with pytest.raises(ModelError):
        qubit_frequency(e_j, 0.1, 0.0)


def test_geometry_validation():
    with pytest.raises(ModelError):
        CavityGeometry(length=-1.0)
    with pytest.raises(ModelError):
        CavityGeometry(eps_r=0.5)
    with pytest.raises(ModelError):
        CavityGeometry(mode_index=0)


def test_derived_value_display(chain):
    text = chain["eta_ac"].display()
    assert "eta_ac" in text
    assert "2pi x" in text
