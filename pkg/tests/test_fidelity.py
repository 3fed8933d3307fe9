"""Fidelity tests: targets, calibration, cardinal averages, and the
Haar-average equivalence of the six-state mean."""
import math

import numpy as np
import pytest

from qstransfer import (CARDINAL_LABELS, CalibrationError, DimensionError,
                        InputState, IntegratorConfig, LayoutError,
                        SpaceLayout, StateError, SystemParams, TargetState,
                        calibrate_phase, cardinal_states,
                        conditional_fidelity, fidelity_point, initial_state,
                        mean_fidelity, run_transfer, three_step_protocol,
                        transfer_fidelities)
from qstransfer.experiments import SWEEP_INTEGRATOR, sweep_layout
from qstransfer.hilbert import MODE_S, QUBIT, basis_ket

SMALL = sweep_layout(0.0)          # (2, 3, 2, 4, 4), dimension 192


@pytest.fixture(scope="module")
def cold_point():
    """Calibration phase and cardinal fidelities at zero temperature."""
    return fidelity_point(SystemParams.defaults())


def test_input_state_labels_and_normalization():
    for label in CARDINAL_LABELS:
        s = InputState.from_label(label)
        assert abs(abs(s.alpha) ** 2 + abs(s.beta) ** 2 - 1.0) < 1e-12
        assert s.label == label
    with pytest.raises(StateError):
        InputState.from_label("up")
    with pytest.raises(StateError):
        InputState(1.0, 1.0)
    s = InputState.from_bloch(math.pi / 2, math.pi / 2)
    assert s.beta == pytest.approx(1j / math.sqrt(2))
    assert cardinal_states()[2].qubit_ket()[1] == pytest.approx(
        1 / math.sqrt(2))


def test_target_state_build_and_validation():
    t = TargetState.build(SMALL, InputState.from_label("+"),
                          theta_cal=math.pi / 2)
    vac = basis_ket(SMALL)
    stored = basis_ket(SMALL, {MODE_S: 1})
    assert np.vdot(vac, t.ket) == pytest.approx(1 / math.sqrt(2))
    assert np.vdot(stored, t.ket) == pytest.approx(1j / math.sqrt(2))
    with pytest.raises(LayoutError):
        TargetState.build(SpaceLayout([(QUBIT, 2)]), InputState.from_label("+"))
    with pytest.raises(DimensionError):
        TargetState(np.zeros(7), SMALL, 0.0)
    with pytest.raises(StateError):
        TargetState(np.zeros(SMALL.total_dim), SMALL, 0.0)


def test_fidelity_of_pure_target_is_one():
    t = TargetState.build(SMALL, InputState.from_label("+i"), theta_cal=0.3)
    rho = np.outer(t.ket, t.ket.conj())
    assert conditional_fidelity(rho, t) == pytest.approx(1.0, abs=1e-12)


def test_fidelity_of_code_space_mixture_is_half():
    # the maximally mixed state on the two-dimensional storage code
    # space has fidelity 1/2 with any equatorial target
    vac = basis_ket(SMALL)
    stored = basis_ket(SMALL, {MODE_S: 1})
    rho = 0.5 * (np.outer(vac, vac.conj()) + np.outer(stored, stored.conj()))
    for label in ("+", "-", "+i", "-i"):
        t = TargetState.build(SMALL, InputState.from_label(label),
                              theta_cal=1.234)
        assert conditional_fidelity(rho, t) == pytest.approx(0.5, abs=1e-12)


def test_fidelity_input_validation():
    t = TargetState.build(SMALL, InputState.from_label("0"))
    with pytest.raises(DimensionError):
        conditional_fidelity(np.eye(7) / 7, t)
    bad = np.outer(t.ket, t.ket.conj()) * (1.0 + 1e-8j)
    with pytest.raises(StateError):
        conditional_fidelity(bad, t)


def test_fidelity_linear_in_state():
    rng = np.random.default_rng(5)
    d = SMALL.total_dim
    t = TargetState.build(SMALL, InputState.from_label("+"), theta_cal=0.7)

    def random_rho(seed):
        r = np.random.default_rng(seed)
        m = r.normal(size=(d, d)) + 1j * r.normal(size=(d, d))
        m = m @ m.conj().T
        return m / np.trace(m).real

    a, b = random_rho(1), random_rho(2)
    for w in (0.0, 0.25, 0.5, 0.9, 1.0):
        mix = w * a + (1.0 - w) * b
        want = w * conditional_fidelity(a, t) \
            + (1.0 - w) * conditional_fidelity(b, t)
        assert conditional_fidelity(mix, t) == pytest.approx(want, abs=1e-10)


def test_calibration_phase_value_and_idempotence(cold_point):
    # three sequential half-swaps imprint a deterministic +pi/2 on the
    # stored amplitude
    params = SystemParams.defaults()
    theta = calibrate_phase(params, SMALL, config=SWEEP_INTEGRATOR)
    assert theta == pytest.approx(math.pi / 2, abs=1e-6)
    again = calibrate_phase(params, SMALL, config=SWEEP_INTEGRATOR)
    assert abs(again - theta) < 1e-6
    assert cold_point.theta_cal == pytest.approx(theta, abs=1e-9)


def test_calibration_agrees_between_equatorial_inputs():
    params = SystemParams.defaults()
    plus = calibrate_phase(params, SMALL, config=SWEEP_INTEGRATOR,
                           state=InputState.from_label("+"))
    plus_i = calibrate_phase(params, SMALL, config=SWEEP_INTEGRATOR,
                             state=InputState.from_label("+i"))
    assert abs(plus - plus_i) < 1e-4


def test_calibration_rejects_polar_input():
    with pytest.raises(CalibrationError):
        calibrate_phase(SystemParams.defaults(), SMALL,
                        state=InputState.from_label("1"))


def test_calibration_rejects_broken_protocol():
    # zeroed qubit-cavity coupling cannot transfer anything; hand the
    # schedule in explicitly so the failure surfaces in calibration
    params = SystemParams.defaults()
    sched = three_step_protocol(params)
    with pytest.raises(CalibrationError):
        calibrate_phase(params.replace(eta_qc=0.0), SMALL, schedule=sched,
                        config=SWEEP_INTEGRATOR)


def test_cardinal_fidelities_with_defaults(cold_point):
    # all six stored cardinal states keep conditional fidelity >= 0.96
    # at zero temperature with every decoherence channel active
    assert set(cold_point.fidelities) == set(CARDINAL_LABELS)
    for label, value in cold_point.fidelities.items():
        assert value >= 0.96, f"F({label}) = {value}"
    assert cold_point.fidelities["0"] >= 0.999
    assert cold_point.f_mean == pytest.approx(
        mean_fidelity(cold_point.fidelities))


def test_mean_fidelity_constant_and_missing_labels():
    assert mean_fidelity({lab: 0.9 for lab in CARDINAL_LABELS}) \
        == pytest.approx(0.9)
    with pytest.raises(StateError):
        mean_fidelity({"0": 1.0, "1": 0.9})


def test_mean_fidelity_matches_haar_monte_carlo(cold_point):
    # the channel is linear, so E(rho) for any input follows from four
    # basis runs; 500 Haar-random pure states then estimate the Haar
    # average, which must sit within two standard errors of the
    # six-cardinal mean (exact by the 2-design property)
    params = SystemParams.defaults()
    theta = cold_point.theta_cal
    layout = SMALL
    vac = basis_ket(layout)
    stored = basis_ket(layout, {MODE_S: 1})
    code = np.stack([vac, stored])

    def code_block(label):
        traj = run_transfer(params, layout, InputState.from_label(label),
                            config=SWEEP_INTEGRATOR)
        return code.conj() @ traj.final.matrix @ code.T

    b0, b1, bp, bpi = (code_block(lab) for lab in ("0", "1", "+", "+i"))
    # E(|0><1|) reconstructed from the four runs
    e01 = bp + 1j * bpi - 0.5 * (1.0 + 1j) * (b0 + b1)

    rng = np.random.default_rng(20240803)
    n = 500
    amps = rng.normal(size=(n, 2)) + 1j * rng.normal(size=(n, 2))
    amps /= np.linalg.norm(amps, axis=1, keepdims=True)
    samples = np.empty(n)
    for k, (a, b) in enumerate(amps):
        block = (abs(a) ** 2 * b0 + abs(b) ** 2 * b1
                 + a * np.conj(b) * e01 + np.conj(a * np.conj(b)) * e01.conj().T)
        t = np.array([a, b * np.exp(1j * theta)])
        samples[k] = np.vdot(t, block @ t).real
    mc_mean = samples.mean()
    se = samples.std(ddof=1) / math.sqrt(n)
    assert abs(mc_mean - cold_point.f_mean) <= 2.0 * se, \
        f"MC {mc_mean} vs cardinal {cold_point.f_mean} (SE {se})"

    # linearity assembly cross-check: integrate two of the sampled
    # states directly and compare per-state fidelities
    for a, b in amps[:2]:
        traj = run_transfer(params, layout, InputState(a, b),
                            config=SWEEP_INTEGRATOR)
        blk = code.conj() @ traj.final.matrix @ code.T
        t = np.array([a, b * np.exp(1j * theta)])
        direct = np.vdot(t, blk @ t).real
        assembled = (abs(a) ** 2 * b0 + abs(b) ** 2 * b1
                     + a * np.conj(b) * e01
                     + np.conj(a * np.conj(b)) * e01.conj().T)
        assert abs(np.vdot(t, assembled @ t).real - direct) < 1e-6


def test_mean_fidelity_cold_threshold():
    point = fidelity_point(SystemParams.defaults(n_bar=0.01))
    assert point.f_mean > 0.98


def test_mean_fidelity_non_increasing_in_n_bar(cold_point):
    values = [cold_point.f_mean]
    for nb in (0.02, 0.05, 0.1):
        values.append(fidelity_point(SystemParams.defaults(n_bar=nb)).f_mean)
    for lo, hi in zip(values[1:], values[:-1]):
        assert lo <= hi + 5e-6, f"mean fidelity increased: {values}"


def test_initial_state_layout_requirements():
    with pytest.raises(LayoutError):
        initial_state(SpaceLayout([(MODE_S, 3), ("cavity", 2)]),
                      InputState.from_label("0"))
    rho = initial_state(SMALL, InputState.from_label("-i"), n_bar=0.02,
                        tail_tol=1e-4)
    assert rho.trace == pytest.approx(1.0)
    assert rho.expectation(np.kron(
        np.diag([0.0, 1.0]), np.eye(SMALL.total_dim // 2))) \
        == pytest.approx(0.5)


def test_transfer_fidelities_keys_follow_inputs():
    params = SystemParams.defaults()
    states = [InputState.from_label("0"), InputState(0.6, 0.8)]
    out = transfer_fidelities(params, SMALL, math.pi / 2, states=states,
                              config=SWEEP_INTEGRATOR)
    assert list(out) == ["0", "state1"]
    assert 0.0 <= out["state1"] <= 1.0
