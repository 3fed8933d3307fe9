"""Integrator unit tests: RHS algebra, oracle agreement, convergence
order, invariant enforcement, and trajectory export."""
import io
import math

import numpy as np
import pytest

from qstransfer import (CAVITY, MODE_I, MODE_R, MODE_S, QUBIT,
                        DensityMatrix, IntegrationError, IntegratorConfig,
                        InputState, PulseSchedule, SpaceLayout, SystemParams,
                        TransferModel, basis_state, expm_oracle,
                        initial_state, lindblad_rhs, liouvillian_matrix,
                        propagate, thermal_cavity_state, trace_distance,
                        three_step_protocol)
from qstransfer.integrator import METHODS

TWO_PI = 2.0 * math.pi


def small_model(n_bar=0.2, **overrides):
    """Magnetic-coupling model on an 18-dimensional space."""
    params = SystemParams.magnetic_defaults(n_bar=n_bar, **overrides)
    layout = SpaceLayout([(QUBIT, 2), (CAVITY, 3), (MODE_S, 3)])
    return params, layout, TransferModel.build("magnetic", params, layout)


def random_density(layout, seed=0):
    rng = np.random.default_rng(seed)
    d = layout.total_dim
    m = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    m = m @ m.conj().T
    return DensityMatrix(m / np.trace(m).real, layout)


def parked_hold(duration):
    return PulseSchedule.from_durations(
        [(duration, {"Delta_qc": TWO_PI * 500e6, "Omega_gi": 0.0,
                     "Omega_rs": 0.0})])


def test_config_validation():
    with pytest.raises(IntegrationError):
        IntegratorConfig(method="euler")
    with pytest.raises(IntegrationError):
        IntegratorConfig(rel_tol=0.0)
    with pytest.raises(IntegrationError):
        IntegratorConfig(samples=1)
    with pytest.raises(IntegrationError):
        IntegratorConfig(max_step=-1e-9)
    assert set(METHODS) == {"krylov", "rk45", "rk4"}


def test_rhs_matches_dense_formula():
    params, layout, model = small_model()
    h = model.hamiltonian({"Delta_qc": 0.0, "Omega_gi": 0.0, "Omega_rs": 0.0})
    ops = model.collapse
    rho = random_density(layout, seed=3).matrix
    got = lindblad_rhs(rho, h, ops)
    want = -1j * (h @ rho - rho @ h)
    for op in ops:
        l = op.matrix
        ld = l.conj().T
        want += l @ rho @ ld - 0.5 * (ld @ l @ rho + rho @ ld @ l)
    assert np.linalg.norm(got - want) < 1e-10 * np.linalg.norm(want)


def test_rhs_zero_without_generator():
    layout = SpaceLayout([(QUBIT, 2), (CAVITY, 3)])
    rho = random_density(layout, seed=1).matrix
    rhs = lindblad_rhs(rho, np.zeros_like(rho), ())
    assert np.linalg.norm(rhs) == 0.0


def test_rhs_trace_free_and_hermiticity_preserving():
    params, layout, model = small_model()
    h = model.hamiltonian({"Delta_qc": 0.0, "Omega_gi": 0.0, "Omega_rs": 0.0})
    rho = random_density(layout, seed=5).matrix
    rhs = lindblad_rhs(rho, h, model.collapse)
    scale = params.kappa * np.linalg.norm(rho)
    assert abs(np.trace(rhs)) < 1e-12 * scale
    assert np.linalg.norm(rhs - rhs.conj().T) < 1e-12 * np.linalg.norm(rhs)


def test_rhs_thermal_stationarity():
    params, layout, model = small_model(n_bar=0.4)
    thermal = thermal_cavity_state(layout, params.n_bar, tail_tol=0.05)
    cavity_ops = [op for op in model.collapse if op.name.startswith("kappa")]
    rhs = lindblad_rhs(thermal.matrix, np.zeros((18, 18), dtype=complex),
                       cavity_ops)
    assert np.abs(rhs).max() < 1e-12 * params.kappa


def test_liouvillian_column_stacking_identity():
    params, layout, model = small_model()
    h = model.hamiltonian({"Delta_qc": 0.0, "Omega_gi": 0.0, "Omega_rs": 0.0})
    sup = liouvillian_matrix(h, model.collapse)
    rho = random_density(layout, seed=7).matrix
    direct = lindblad_rhs(rho, h, model.collapse)
    via_sup = (sup @ rho.ravel(order="F")).reshape(rho.shape, order="F")
    assert np.linalg.norm(direct - via_sup) < 1e-9 * np.linalg.norm(direct)


def test_expm_oracle_identity_and_semigroup():
    params, layout, model = small_model()
    h = model.hamiltonian({"Delta_qc": 0.0, "Omega_gi": 0.0, "Omega_rs": 0.0})
    rho0 = random_density(layout, seed=11)
    ops = model.collapse
    t = 1.0 / params.kappa
    frozen = expm_oracle(rho0, h, ops, 0.0)
    assert np.allclose(frozen.matrix, rho0.matrix)
    full = expm_oracle(rho0, h, ops, t)
    halves = expm_oracle(expm_oracle(rho0, h, ops, 0.5 * t), h, ops, 0.5 * t)
    assert trace_distance(full.matrix, halves.matrix) < 1e-8


def test_expm_oracle_rejects_large_spaces():
    layout = SpaceLayout([(QUBIT, 2), (CAVITY, 40)])
    rho = basis_state(layout)
    with pytest.raises(Exception):
        expm_oracle(rho, np.zeros((80, 80)), (), 1e-6)


@pytest.mark.parametrize("method", ["krylov", "rk45"])
def test_propagate_agrees_with_oracle(method):
    params, layout, model = small_model()
    rho0 = random_density(layout, seed=13)
    t = 2.0 / params.kappa
    sched = parked_hold(t)
    config = IntegratorConfig(method=method, rel_tol=1e-9, abs_tol=1e-12,
                              samples=4, positivity_stride=1)
    traj = propagate(rho0, sched, model, config)
    h = model.hamiltonian(sched.controls_at(0.0))
    want = expm_oracle(rho0, h, model.collapse, t)
    assert trace_distance(traj.final.matrix, want.matrix) < 1e-6


def test_oracle_agreement_on_randomized_generators():
    # cross-check expm_oracle against an independent RK45 integration of
    # the same RHS, with fully random Hermitian H and jump operators on
    # spaces of total dimension <= 64
    from scipy.integrate import solve_ivp

    from qstransfer import Operator

    layout = SpaceLayout([(QUBIT, 2), (CAVITY, 4), (MODE_S, 2)])
    d = layout.total_dim
    scale = 1e5
    for seed in range(3):
        rng = np.random.default_rng(seed)
        h = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        h = scale * (h + h.conj().T) / 2.0
        jump = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        jump *= math.sqrt(scale) / np.linalg.norm(jump)
        ops = (Operator(jump, layout, name="random"),)
        rho0 = random_density(layout, seed=seed + 100)
        t = 5.0 / scale
        oracle = expm_oracle(rho0, h, ops, t)

        def rhs(_t, y):
            rho = y.reshape(d, d)
            return lindblad_rhs(rho, h, ops).ravel()

        sol = solve_ivp(rhs, (0.0, t), rho0.matrix.ravel(), method="RK45",
                        rtol=1e-10, atol=1e-13)
        got = sol.y[:, -1].reshape(d, d)
        got = (got + got.conj().T) / 2.0
        assert trace_distance(got, oracle.matrix) < 1e-6


def test_rk4_fourth_order_convergence():
    params, layout, model = small_model()
    rho0 = random_density(layout, seed=17)
    t = 3e-6
    sched = parked_hold(t)
    h = model.hamiltonian(sched.controls_at(0.0))
    exact = expm_oracle(rho0, h, model.collapse, t).matrix

    def rk4_error(step):
        config = IntegratorConfig(method="rk4", max_step=step, samples=2,
                                  positivity_stride=0)
        traj = propagate(rho0, sched, model, config)
        return trace_distance(traj.final.matrix, exact)

    coarse = rk4_error(t / 4.0)
    fine = rk4_error(t / 8.0)
    assert coarse > 1e-11, "step too small to resolve the convergence order"
    factor = coarse / fine
    assert 8.0 <= factor <= 32.0, f"RK4 convergence factor {factor}"


def test_segment_boundaries_never_crossed():
    # two segments with different controls; a single Krylov/RK step may
    # not straddle the control jump, so the composed result must match
    # the product of the two segment propagators
    params, layout, model = small_model(n_bar=0.0)
    rho0 = initial_state(layout, InputState.from_label("1"))
    t1 = 0.5 * math.pi / params.eta_qc
    t2 = 2e-7
    sched = PulseSchedule.from_durations([
        (t1, {"Delta_qc": 0.0, "Omega_gi": 0.0, "Omega_rs": 0.0}),
        (t2, {"Delta_qc": TWO_PI * 500e6, "Omega_gi": 0.0, "Omega_rs": 0.0}),
    ])
    config = IntegratorConfig(rel_tol=1e-10, abs_tol=1e-13, samples=3,
                              positivity_stride=1)
    traj = propagate(rho0, sched, model, config)
    h1 = model.hamiltonian(sched.controls_at(0.0))
    h2 = model.hamiltonian(sched.controls_at(t1 + 0.5 * t2))
    mid = expm_oracle(rho0, h1, model.collapse, t1)
    want = expm_oracle(mid, h2, model.collapse, t2)
    assert trace_distance(traj.final.matrix, want.matrix) < 1e-7


def test_unitary_purity_and_invariants():
    params, layout, model = small_model(n_bar=0.0, kappa=0.0, gamma_1=0.0,
                                        gamma_phi=0.0, gamma_s=0.0)
    rho0 = initial_state(layout, InputState.from_label("1"))
    sched = PulseSchedule.from_durations(
        [(0.5 * math.pi / params.eta_qc,
          {"Delta_qc": 0.0, "Omega_gi": 0.0, "Omega_rs": 0.0})])
    config = IntegratorConfig(samples=9, positivity_stride=1)
    traj = propagate(rho0, sched, model, config)
    assert np.all(np.abs(traj.trace - 1.0) < 1e-6)
    assert np.all(traj.purity <= 1.0 + 1e-8)
    assert np.all(np.abs(traj.purity - 1.0) < 1e-7)   # no dissipation
    assert np.nanmin(traj.min_eig) >= -1e-7


def test_qubit_cavity_rabi_against_analytic():
    params, layout, model = small_model(n_bar=0.0, kappa=0.0, gamma_1=0.0,
                                        gamma_phi=0.0, gamma_s=0.0,
                                        eta_ac=0.0)
    rho0 = initial_state(layout, InputState.from_label("1"))
    t = math.pi / params.eta_qc          # one full vacuum Rabi period
    sched = PulseSchedule.from_durations(
        [(t, {"Delta_qc": 0.0, "Omega_gi": 0.0, "Omega_rs": 0.0})])
    config = IntegratorConfig(samples=17, rel_tol=1e-10, abs_tol=1e-13)
    traj = propagate(rho0, sched, model, config)
    expected = np.cos(params.eta_qc * traj.times) ** 2
    assert np.max(np.abs(traj.pq - expected)) < 1e-7
    assert traj.nc[8] == pytest.approx(1.0, abs=1e-7)   # half period


def test_thermal_hold_is_stationary():
    # a thermal cavity state under the thermal-pair dissipator drifts by
    # less than 1e-8 trace distance over several damping times
    params, layout, model = small_model(n_bar=0.3, eta_ac=0.0, gamma_1=0.0,
                                        gamma_phi=0.0, gamma_s=0.0)
    rho0 = thermal_cavity_state(layout, 0.3, tail_tol=0.05)
    sched = parked_hold(3.0 / params.kappa)
    config = IntegratorConfig(rel_tol=1e-10, abs_tol=1e-13, samples=4)
    traj = propagate(rho0, sched, model, config)
    assert trace_distance(traj.final.matrix, rho0.matrix) < 1e-8


def test_invariant_violation_aborts():
    params, layout, model = small_model()
    bad = DensityMatrix(1.5 * basis_state(layout).matrix, layout)
    with pytest.raises(IntegrationError):
        propagate(bad, parked_hold(1e-6), model, IntegratorConfig())


def test_rk4_requires_max_step():
    params, layout, model = small_model()
    rho0 = basis_state(layout)
    with pytest.raises(IntegrationError):
        propagate(rho0, parked_hold(1e-6), model,
                  IntegratorConfig(method="rk4"))


def test_first_segment_alone_fills_cavity():
    # with dissipation off and only the first transfer step applied, the
    # qubit excitation lands in the cavity essentially completely
    params = SystemParams.defaults(kappa=0.0, gamma_1=0.0, gamma_phi=0.0,
                                   gamma_r=0.0, gamma_s=0.0)
    layout = SpaceLayout([(QUBIT, 2), (CAVITY, 3), (MODE_I, 2),
                          (MODE_R, 2), (MODE_S, 2)])
    model = TransferModel.build("full", params, layout)
    first = three_step_protocol(params).segments[0]
    sched = PulseSchedule.from_durations([(first.duration, first.controls)])
    rho0 = initial_state(layout, InputState.from_label("1"))
    traj = propagate(rho0, sched, model, IntegratorConfig(samples=3))
    assert traj.nc[-1] > 0.999


def test_trajectory_csv_round_trip():
    params, layout, model = small_model()
    rho0 = initial_state(layout, InputState.from_label("1"), n_bar=0.2,
                         tail_tol=0.05)
    traj = propagate(rho0, parked_hold(1e-6), model,
                     IntegratorConfig(samples=5))
    text = traj.to_csv()
    assert text.splitlines()[0] == "t,pq,nc,ni,nr,ns,trace,purity"
    data = np.genfromtxt(io.StringIO(text), delimiter=",", names=True)
    assert data.shape == (5,)
    assert np.allclose(data["t"], traj.times)
    assert np.allclose(data["ns"], traj.ns)
    # %.17g columns reproduce the floats exactly
    assert data["pq"][3] == traj.pq[3]


def test_sample_grid_spans_schedule():
    params, layout, model = small_model()
    rho0 = basis_state(layout)
    traj = propagate(rho0, parked_hold(2e-6), model,
                     IntegratorConfig(samples=11))
    assert traj.times[0] == 0.0
    assert traj.times[-1] == pytest.approx(2e-6)
    assert np.all(np.diff(traj.times) > 0)
    assert traj.times.size == 11
