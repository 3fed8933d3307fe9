"""Transfer fidelities: input states, calibrated targets, cardinal averages.

The storage map sends the qubit state alpha |0> + beta |1> to
alpha |vacuum> + beta e^(i theta_cal) |n_s = 1>, where theta_cal is the
deterministic phase the three swaps imprint on the transferred
amplitude.  Fidelities are evaluated against the target on the full
composite space, so any population leaked outside the two-dimensional
code space counts as infidelity.

The mean fidelity is the unweighted average over the six cardinal Bloch
states.  Those form a projective 2-design and the conditional fidelity
is quadratic in the input projector, so this equals the Haar average
exactly; the Monte Carlo check lives in the test suite, not here.
"""
from __future__ import annotations

import cmath
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import CalibrationError, DimensionError, LayoutError, StateError
from .hilbert import (CAVITY, MODE_S, QUBIT, THERMAL_TAIL_TOL, DensityMatrix,
                      SpaceLayout, basis_ket, thermal_probabilities)
from .integrator import IntegratorConfig, Trajectory, propagate
from .model import SystemParams, TransferModel
from .pulses import PulseSchedule, three_step_protocol

NORMALIZATION_TOL = 1e-12
FIDELITY_IMAG_TOL = 1e-10
#: minimum acceptable noiseless fidelity after phase calibration
CALIBRATION_MIN = 0.999

CARDINAL_LABELS = ("0", "1", "+", "-", "+i", "-i")

_LABEL_AMPLITUDES = {
    "0": (1.0, 0.0),
    "1": (0.0, 1.0),
    "+": (1.0 / math.sqrt(2.0), 1.0 / math.sqrt(2.0)),
    "-": (1.0 / math.sqrt(2.0), -1.0 / math.sqrt(2.0)),
    "+i": (1.0 / math.sqrt(2.0), 1j / math.sqrt(2.0)),
    "-i": (1.0 / math.sqrt(2.0), -1j / math.sqrt(2.0)),
}


@dataclass(frozen=True)
class InputState:
    """Qubit state alpha |0> + beta |1> to be stored.

    ``label`` records the cardinal name when the state came from one;
    custom amplitudes leave it empty.
    """

    alpha: complex
    beta: complex
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "alpha", complex(self.alpha))
        object.__setattr__(self, "beta", complex(self.beta))
        norm = abs(self.alpha) ** 2 + abs(self.beta) ** 2
        if abs(norm - 1.0) > NORMALIZATION_TOL:
            raise StateError(
                f"input state not normalized: |alpha|^2 + |beta|^2 = {norm!r}")

    @classmethod
    def from_label(cls, label: str) -> "InputState":
        try:
            alpha, beta = _LABEL_AMPLITUDES[label]
        except KeyError:
            raise StateError(
                f"unknown input-state label {label!r}; expected one of "
                f"{CARDINAL_LABELS}") from None
        return cls(alpha, beta, label=label)

    @classmethod
    def from_bloch(cls, theta: float, phi: float) -> "InputState":
        """State at polar angle theta, azimuth phi on the Bloch sphere."""
        return cls(math.cos(theta / 2.0),
                   cmath.exp(1j * phi) * math.sin(theta / 2.0))

    def qubit_ket(self) -> np.ndarray:
        return np.array([self.alpha, self.beta], dtype=complex)


def cardinal_states() -> tuple[InputState, ...]:
    """The six Pauli eigenstates, the discrete 2-design behind F-bar."""
    return tuple(InputState.from_label(lab) for lab in CARDINAL_LABELS)


@dataclass(frozen=True)
class TargetState:
    """Ideal stored state on the full composite space."""

    ket: np.ndarray
    layout: SpaceLayout
    theta_cal: float

    def __post_init__(self):
        k = np.asarray(self.ket, dtype=complex)
        if k.shape != (self.layout.total_dim,):
            raise DimensionError(
                f"target ket shape {k.shape} mismatches layout dim "
                f"{self.layout.total_dim}")
        norm = float(np.linalg.norm(k))
        if abs(norm - 1.0) > 1e-10:
            raise StateError(f"target state norm {norm!r} deviates from 1")
        k.flags.writeable = False
        object.__setattr__(self, "ket", k)

    @classmethod
    def build(cls, layout: SpaceLayout, state: InputState,
              theta_cal: float = 0.0) -> "TargetState":
        """alpha |all ground/vacuum> + beta e^(i theta_cal) |n_s = 1>."""
        if not layout.has(MODE_S):
            raise LayoutError("target state needs a storage mode in the layout")
        ket = state.alpha * basis_ket(layout)
        ket = ket + (state.beta * cmath.exp(1j * theta_cal)
                     * basis_ket(layout, {MODE_S: 1}))
        return cls(ket, layout, float(theta_cal))


def conditional_fidelity(rho: DensityMatrix | np.ndarray,
                         target: TargetState) -> float:
    """<psi_target| rho |psi_target>, clamped to [0, 1].

    The imaginary residue must stay below 1e-10; larger values mean the
    state is not physical and raise instead of being discarded.
    """
    mat = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    if mat.shape != (target.ket.size, target.ket.size):
        raise DimensionError(
            f"state shape {mat.shape} mismatches target dim {target.ket.size}")
    value = complex(np.vdot(target.ket, mat @ target.ket))
    if abs(value.imag) > FIDELITY_IMAG_TOL:
        raise StateError(
            f"fidelity has imaginary residue {value.imag:.3e}; "
            "state is not Hermitian enough")
    real = value.real
    if real < -1e-6 or real > 1.0 + 1e-6:
        raise StateError(f"fidelity {real!r} outside [0, 1]")
    return min(1.0, max(0.0, real))


def initial_state(layout: SpaceLayout, state: InputState, n_bar: float = 0.0,
                  tail_tol: float = THERMAL_TAIL_TOL) -> DensityMatrix:
    """Qubit in the input state, cavity thermal at n_bar, modes in vacuum."""
    if not layout.has(QUBIT):
        raise LayoutError("transfer initial state needs a qubit in the layout")
    if n_bar > 0 and not layout.has(CAVITY):
        raise LayoutError("thermal occupation given but the layout has no cavity")
    rho = None
    for label, dim in layout.subsystems:
        if label == QUBIT:
            ket = state.qubit_ket()
            local = np.outer(ket, ket.conj())
        elif label == CAVITY:
            local = np.diag(thermal_probabilities(n_bar, dim, tail_tol)
                            ).astype(complex)
        else:
            local = np.zeros((dim, dim), dtype=complex)
            local[0, 0] = 1.0
        rho = local if rho is None else np.kron(rho, local)
    return DensityMatrix(rho, layout).validate()


def resolve_workers(max_workers: int | None = None) -> int:
    """Worker count for concurrent runs (QSTRANSFER_WORKERS overrides)."""
    if max_workers is not None:
        return max(1, int(max_workers))
    env = os.environ.get("QSTRANSFER_WORKERS")
    if env:
        return max(1, int(env))
    return max(1, min(6, os.cpu_count() or 1))


def run_transfer(params: SystemParams, layout: SpaceLayout, state: InputState,
                 variant: str = "effective",
                 schedule: PulseSchedule | None = None,
                 config: IntegratorConfig | None = None,
                 tail_tol: float = THERMAL_TAIL_TOL) -> Trajectory:
    """Propagate one input state through the transfer protocol."""
    if schedule is None:
        schedule = three_step_protocol(params)
    if config is None:
        config = IntegratorConfig(samples=2)
    model = TransferModel.build(variant, params, layout)
    rho0 = initial_state(layout, state, n_bar=params.n_bar, tail_tol=tail_tol)
    return propagate(rho0, schedule, model, config)


def transfer_fidelities(params: SystemParams, layout: SpaceLayout,
                        theta_cal: float,
                        states: Sequence[InputState] | None = None,
                        variant: str = "effective",
                        schedule: PulseSchedule | None = None,
                        config: IntegratorConfig | None = None,
                        tail_tol: float = THERMAL_TAIL_TOL,
                        max_workers: int | None = None) -> dict[str, float]:
    """Conditional fidelity for each input state, keyed by label.

    The per-state protocol runs are independent and execute on a thread
    pool; results are keyed (and ordered) by the input list, so the
    outcome does not depend on scheduling.
    """
    if states is None:
        states = cardinal_states()
    if schedule is None:
        schedule = three_step_protocol(params)

    def one(state: InputState) -> float:
        traj = run_transfer(params, layout, state, variant=variant,
                            schedule=schedule, config=config,
                            tail_tol=tail_tol)
        target = TargetState.build(layout, state, theta_cal)
        return conditional_fidelity(traj.final, target)

    with ThreadPoolExecutor(max_workers=resolve_workers(max_workers)) as pool:
        values = list(pool.map(one, states))
    return {(s.label or f"state{i}"): v
            for i, (s, v) in enumerate(zip(states, values))}


def mean_fidelity(fidelities: Mapping[str, float]) -> float:
    """Unweighted average over the six cardinal states.

    Exact Haar mean by the 2-design property.  Requires a value for
    every cardinal label.
    """
    missing = [lab for lab in CARDINAL_LABELS if lab not in fidelities]
    if missing:
        raise StateError(f"mean fidelity needs all six cardinal states; "
                         f"missing {missing}")
    return float(sum(fidelities[lab] for lab in CARDINAL_LABELS)
                 / len(CARDINAL_LABELS))


def _noiseless(params: SystemParams) -> SystemParams:
    return params.replace(kappa=0.0, n_bar=0.0, gamma_1=0.0, gamma_phi=0.0,
                          gamma_r=0.0, gamma_s=0.0)


def calibrate_phase(params: SystemParams, layout: SpaceLayout,
                    variant: str = "effective",
                    schedule: PulseSchedule | None = None,
                    config: IntegratorConfig | None = None,
                    state: InputState | None = None) -> float:
    """Calibration phase theta_cal of the stored amplitude.

    Runs the protocol with every decoherence rate zeroed on an
    equatorial input, reads the code-space coherence c = <vac| rho
    |n_s=1> of the final state, and returns the theta maximizing the
    phase-parameterized fidelity, which is theta = -arg(conj(alpha)
    beta c) in closed form.  A misconfigured protocol (no transfer)
    cannot reach the noiseless fidelity floor and raises.
    """
    if state is None:
        state = InputState.from_label("+")
    if abs(state.alpha) < 1e-6 or abs(state.beta) < 1e-6:
        raise CalibrationError(
            "calibration needs an input with weight on both poles; "
            "use an equatorial state")
    quiet = _noiseless(params)
    if schedule is None:
        schedule = three_step_protocol(quiet)
    traj = run_transfer(quiet, layout, state, variant=variant,
                        schedule=schedule, config=config)
    rho = traj.final.matrix
    vac = basis_ket(layout)
    stored = basis_ket(layout, {MODE_S: 1})
    coherence = complex(np.vdot(vac, rho @ stored))
    theta = -cmath.phase(np.conj(state.alpha) * state.beta * coherence)
    check = conditional_fidelity(
        traj.final, TargetState.build(layout, state, theta))
    if check < CALIBRATION_MIN:
        raise CalibrationError(
            f"noiseless fidelity {check:.6f} after calibration is below "
            f"{CALIBRATION_MIN}; the protocol does not implement the "
            "storage map (check couplings, detunings and durations)")
    return theta
