"""Hamiltonians and collapse operators for the transfer schemes.

hbar = 1 throughout: Hamiltonian matrix elements and all rates are
angular frequencies (rad/s).  Hamiltonians are factored into a static
part plus control-coupled parts so a piecewise-constant schedule can
assemble H(t) cheaply.

Control labels
--------------
Delta_qc   qubit-cavity detuning, multiplies the qubit projector
qc_on      0/1 gate on the qubit-cavity exchange term
Omega_gi   lower-leg drive rate of the two-photon ladder
Omega_rs   Rydberg-to-storage drive rate

``qc_on`` models flux-parking the qubit as an ideal decoupling: with
the exchange term always on, a parked qubit would dispersively pull
the cavity by eta_qc^2 / Delta_park, which is far larger than the
collective transfer rate and would block the slow transfer steps.
Physically the parked qubit is taken as decoupled; the parked free
phase Delta_park on the residual excited amplitude is dropped with it
(nothing measured depends on that phase, and keeping it would force
integrators to resolve a GHz rotation carried by error-weight
coherences).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping

import numpy as np

from .errors import LayoutError, ModelError
from .hilbert import (CAVITY, HERMITICITY_TOL, MODE_I, MODE_R, MODE_S, QUBIT,
                      Operator, SpaceLayout, annihilation, embed, number_op,
                      qubit_sigma_minus, qubit_sigma_z)

TWO_PI = 2.0 * math.pi
CONTROL_LABELS = ("Delta_qc", "qc_on", "Omega_gi", "Omega_rs")


@dataclass(frozen=True)
class SystemParams:
    """Rates and detunings of the composite system, all in rad/s.

    ``eta_ac`` is the single-emitter atom-cavity rate of whichever
    atomic transition the model variant uses (Rydberg electric dipole
    or ground-state magnetic dipole).  ``gamma_r`` applies to both
    Rydberg modes, ``gamma_s`` to the storage mode.
    """

    eta_qc: float
    eta_ac: float
    omega_gi: float
    omega_rs: float
    delta_qc: float
    delta_ig: float
    delta_ri: float
    delta_ac: float
    n_atoms: float
    kappa: float
    n_bar: float
    gamma_1: float
    gamma_phi: float
    gamma_r: float
    gamma_s: float

    def __post_init__(self):
        for name in ("n_atoms", "kappa", "n_bar", "gamma_1", "gamma_phi",
                     "gamma_r", "gamma_s"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ModelError(f"{name} must be finite, got {value}")
            if value < 0:
                raise ModelError(f"{name} must be >= 0, got {value}")
        if self.n_atoms < 1:
            raise ModelError(f"n_atoms must be >= 1, got {self.n_atoms}")

    @property
    def delta(self) -> float:
        """Ladder detuning Delta = -delta_ig (the i level sits at -Delta)."""
        return -self.delta_ig

    @property
    def root_n(self) -> float:
        return math.sqrt(self.n_atoms)

    def replace(self, **changes) -> "SystemParams":
        return replace(self, **changes)

    @classmethod
    def defaults(cls, n_bar: float = 0.0, compensate_stark: bool = True,
                 **overrides) -> "SystemParams":
        """Nominal Rydberg-ladder operating point.

        The two-photon resonance is Stark-shifted by eta_ac^2 / Delta
        (virtual population of the i level); with ``compensate_stark``
        the r-level detuning absorbs that shift so the single-photon
        manifold is exactly resonant, as an experiment tuned to the
        observed line would be.
        """
        eta_ac = TWO_PI * 3.85e6
        delta = 10.0 * eta_ac
        n_atoms = 1.0e6
        stark = eta_ac**2 / delta if compensate_stark else 0.0
        base = dict(
            eta_qc=TWO_PI * 50.0e6,
            eta_ac=eta_ac,
            omega_gi=eta_ac / math.sqrt(n_atoms),
            omega_rs=TWO_PI * 250.0e3,
            delta_qc=0.0,
            delta_ig=-delta,
            delta_ri=delta - stark,
            delta_ac=0.0,
            n_atoms=n_atoms,
            kappa=76899.8,          # omega_c / Q at Q = 1e6, 1/kappa = 13 us
            n_bar=n_bar,
            gamma_1=5.0e5,
            gamma_phi=5.0e5,
            gamma_r=1.0e4,
            gamma_s=1.0,
        )
        base.update(overrides)
        return cls(**base)

    @classmethod
    def magnetic_defaults(cls, n_bar: float = 0.0, **overrides) -> "SystemParams":
        """Direct magnetic-dipole coupling point: weak eta_ac, slower cavity."""
        base = dict(
            eta_qc=TWO_PI * 50.0e6,
            eta_ac=TWO_PI * 20.0,
            omega_gi=0.0,
            omega_rs=0.0,
            delta_qc=0.0,
            delta_ig=0.0,
            delta_ri=0.0,
            delta_ac=0.0,
            n_atoms=1.0e6,
            kappa=5.0e4,            # 1/kappa = 20 us at the lower mode frequency
            n_bar=n_bar,
            gamma_1=5.0e5,
            gamma_phi=5.0e5,
            gamma_r=0.0,
            gamma_s=1.0,
        )
        base.update(overrides)
        return cls(**base)


@dataclass(frozen=True)
class HamiltonianSet:
    """H(controls) = static + sum_k controls[label_k] * part_k."""

    static: Operator
    controlled: tuple[tuple[str, Operator], ...] = ()

    def __post_init__(self):
        self.static.require_hermitian(HERMITICITY_TOL)
        seen = set()
        for label, part in self.controlled:
            if label not in CONTROL_LABELS:
                raise ModelError(f"unknown control label {label!r}; "
                                 f"expected one of {CONTROL_LABELS}")
            if label in seen:
                raise ModelError(f"duplicate control label {label!r}")
            if part.layout != self.static.layout:
                raise LayoutError(f"control part {label!r} on a different layout")
            seen.add(label)
            part.require_hermitian(HERMITICITY_TOL)

    @property
    def layout(self) -> SpaceLayout:
        return self.static.layout

    def __add__(self, other: "HamiltonianSet") -> "HamiltonianSet":
        if other.layout != self.layout:
            raise LayoutError("cannot add Hamiltonian sets on different layouts")
        merged: dict[str, np.ndarray] = {}
        for label, part in self.controlled + other.controlled:
            if label in merged:
                merged[label] = merged[label] + part.matrix
            else:
                merged[label] = part.matrix
        static = Operator(self.static.matrix + other.static.matrix, self.layout,
                          name="H_static")
        controlled = tuple((label, Operator(arr, self.layout, name=label))
                           for label, arr in merged.items())
        return HamiltonianSet(static, controlled)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.controlled)

    def evaluate(self, controls: Mapping[str, float]) -> np.ndarray:
        """Dense H for the given control values (must cover all labels)."""
        h = self.static.matrix.copy()
        for label, part in self.controlled:
            try:
                value = controls[label]
            except KeyError:
                raise ModelError(f"missing control value for {label!r}") from None
            if value != 0.0:
                h += value * part.matrix
        return h


def _zero(layout: SpaceLayout) -> Operator:
    n = layout.total_dim
    return Operator(np.zeros((n, n), dtype=complex), layout, name="0")


def _require(layout: SpaceLayout, *labels: str) -> None:
    missing = [lab for lab in labels if not layout.has(lab)]
    if missing:
        raise LayoutError(f"layout {layout.labels} lacks required "
                          f"subsystem(s) {missing}")


def _lower(layout: SpaceLayout, label: str) -> np.ndarray:
    """Embedded annihilation operator (sigma-minus on the qubit)."""
    if label == QUBIT:
        return embed(qubit_sigma_minus(), QUBIT, layout)
    return embed(annihilation(layout.dim(label)), label, layout)


def _num(layout: SpaceLayout, label: str) -> np.ndarray:
    if label == QUBIT:
        return embed(number_op(2), QUBIT, layout)
    return embed(number_op(layout.dim(label)), label, layout)


def _exchange(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """a^dag b + b^dag a for embedded lowering operators a, b."""
    term = a.conj().T @ b
    return term + term.conj().T


def build_H_qc(params: SystemParams, layout: SpaceLayout) -> HamiltonianSet:
    """Qubit-cavity block: Delta_qc sigma+sigma- - eta_qc (sigma+ c + h.c.).

    The detuning rides the Delta_qc control; the exchange term rides
    the qc_on gate (1 while the qubit is tuned to the cavity, 0 while
    parked; see the module docstring).
    """
    _require(layout, QUBIT, CAVITY)
    sm = _lower(layout, QUBIT)
    c = _lower(layout, CAVITY)
    controlled = (
        ("Delta_qc", Operator(_num(layout, QUBIT), layout, name="Delta_qc")),
        ("qc_on", Operator(-params.eta_qc * _exchange(sm, c), layout, name="qc_on")),
    )
    return HamiltonianSet(_zero(layout), controlled)


def build_H_ac_rydberg(params: SystemParams, layout: SpaceLayout) -> HamiltonianSet:
    """Two-photon ladder block of the cavity and Rydberg modes i, r.

    Static: delta_ig n_i + (delta_ig + delta_ri) n_r
    - eta_ac (r^dag i c + h.c.).  The collective lower-leg drive
    -sqrt(N) (i^dag + i) rides the Omega_gi control (the ensemble
    ground mode is replaced by sqrt(N) in the large-N limit).
    """
    _require(layout, CAVITY, MODE_I, MODE_R)
    c = _lower(layout, CAVITY)
    i_op = _lower(layout, MODE_I)
    r = _lower(layout, MODE_R)
    three = r.conj().T @ i_op @ c
    static = (params.delta_ig * _num(layout, MODE_I)
              + (params.delta_ig + params.delta_ri) * _num(layout, MODE_R)
              - params.eta_ac * (three + three.conj().T))
    drive = -params.root_n * (i_op.conj().T + i_op)
    return HamiltonianSet(
        Operator(static, layout, name="H_ac"),
        (("Omega_gi", Operator(drive, layout, name="Omega_gi")),))


def build_H_ac_magnetic(params: SystemParams, layout: SpaceLayout) -> HamiltonianSet:
    """Direct cavity-storage block: Delta_ac n_s + sqrt(N) eta_ac (s^dag c + h.c.)."""
    _require(layout, CAVITY, MODE_S)
    c = _lower(layout, CAVITY)
    s = _lower(layout, MODE_S)
    static = (params.delta_ac * _num(layout, MODE_S)
              + params.root_n * params.eta_ac * _exchange(s, c))
    return HamiltonianSet(Operator(static, layout, name="H_ac_magnetic"))


def build_H_rs(params: SystemParams, layout: SpaceLayout) -> HamiltonianSet:
    """Rydberg-to-storage drive: -(s^dag r + h.c.) riding Omega_rs."""
    _require(layout, MODE_R, MODE_S)
    r = _lower(layout, MODE_R)
    s = _lower(layout, MODE_S)
    return HamiltonianSet(
        _zero(layout),
        (("Omega_rs", Operator(-_exchange(s, r), layout, name="Omega_rs")),))


def build_effective_V_ac(params: SystemParams, layout: SpaceLayout) -> HamiltonianSet:
    """Ladder block with the i level adiabatically eliminated.

    Keeps all second-order terms: the swap (eta_ac / Delta)
    sqrt(N) (r^dag c + h.c.) riding Omega_gi, the r-level detuning
    delta_ig + delta_ri, and the cavity-coupling Stark shift
    (eta_ac^2 / Delta) n_r (n_c + 1).  The drive's own Stark shift
    N Omega_gi^2 / Delta is a multiple of the identity and is dropped.
    """
    _require(layout, CAVITY, MODE_R)
    delta = params.delta
    if delta == 0:
        raise ModelError(
            "effective ladder model undefined at Delta = 0; the i level is "
            "resonant there, use the full resonant model")
    c = _lower(layout, CAVITY)
    r = _lower(layout, MODE_R)
    n_r = _num(layout, MODE_R)
    n_c = _num(layout, CAVITY)
    eye = np.eye(layout.total_dim)
    static = ((params.delta_ig + params.delta_ri) * n_r
              + (params.eta_ac**2 / delta) * (n_r @ (n_c + eye)))
    swap = params.root_n * (params.eta_ac / delta) * _exchange(r, c)
    return HamiltonianSet(
        Operator(static, layout, name="V_ac_static"),
        (("Omega_gi", Operator(swap, layout, name="Omega_gi")),))


def build_effective_V_qa(params: SystemParams, layout: SpaceLayout) -> HamiltonianSet:
    """Cavity-eliminated qubit-storage swap sqrt(N) eta_eff (s^dag sigma- + h.c.).

    eta_eff = eta_qc eta_ac / Delta_qc with the cavity detuned by
    Delta_qc from both the qubit and the storage transition.  The
    dispersive qubit shift eta_qc^2 / Delta_qc is assumed retuned
    away (the qubit frequency is the adjustable knob).
    """
    _require(layout, QUBIT, MODE_S)
    if params.delta_qc == 0:
        raise ModelError(
            "effective qubit-storage model undefined at Delta_qc = 0; "
            "use the resonant qubit-cavity model")
    eta_eff = params.eta_qc * params.eta_ac / params.delta_qc
    sm = _lower(layout, QUBIT)
    s = _lower(layout, MODE_S)
    swap = params.root_n * eta_eff * _exchange(s, sm)
    return HamiltonianSet(Operator(swap, layout, name="V_qa"))


def collapse_operators(params: SystemParams, layout: SpaceLayout,
                       kappa_override: float | None = None) -> tuple[Operator, ...]:
    """Lindblad jump operators for every subsystem present in the layout.

    Cavity: thermal pair sqrt(kappa (1 + n_bar)) c and sqrt(kappa n_bar)
    c^dag.  Qubit: sqrt(gamma_1) sigma- and sqrt(gamma_phi / 2) sigma_z.
    Modes i, r: sqrt(gamma_r) amplitude damping (decay out of the
    collective mode, not back to the ground mode).  Mode s:
    sqrt(gamma_s) s.  Channels with zero rate are omitted.
    """
    kappa = params.kappa if kappa_override is None else kappa_override
    ops: list[Operator] = []
    if layout.has(CAVITY):
        c = _lower(layout, CAVITY)
        if kappa > 0:
            ops.append(Operator(math.sqrt(kappa * (1.0 + params.n_bar)) * c,
                                layout, name="kappa_down"))
            if params.n_bar > 0:
                ops.append(Operator(math.sqrt(kappa * params.n_bar) * c.conj().T,
                                    layout, name="kappa_up"))
    if layout.has(QUBIT):
        if params.gamma_1 > 0:
            ops.append(Operator(math.sqrt(params.gamma_1) * _lower(layout, QUBIT),
                                layout, name="gamma_1"))
        if params.gamma_phi > 0:
            sz = embed(qubit_sigma_z(), QUBIT, layout)
            ops.append(Operator(math.sqrt(params.gamma_phi / 2.0) * sz,
                                layout, name="gamma_phi"))
    for label, rate in ((MODE_I, params.gamma_r), (MODE_R, params.gamma_r),
                        (MODE_S, params.gamma_s)):
        if layout.has(label) and rate > 0:
            ops.append(Operator(math.sqrt(rate) * _lower(layout, label),
                                layout, name=f"decay_{label}"))
    return tuple(ops)


def total_excitation(layout: SpaceLayout) -> np.ndarray:
    """Sum of number operators over all present subsystems."""
    total = np.zeros((layout.total_dim, layout.total_dim), dtype=complex)
    for label in layout.labels:
        total += _num(layout, label)
    return total


VARIANTS = ("full", "effective", "magnetic", "dispersive")


@dataclass(frozen=True)
class TransferModel:
    """A Hamiltonian set plus collapse operators on a fixed layout.

    ``decouple_parked`` applies the qc_on gate from the Delta_qc
    control value: the qubit-cavity exchange is active only while
    Delta_qc = 0, and a parked qubit is dropped from the coherent
    dynamics entirely (exchange and free phase both off; its residual
    excited amplitude still decays).  With it off, the exchange stays
    on and a parked qubit drags the cavity dispersively (useful for
    sensitivity checks, not for reproducing the protocol).
    """

    variant: str
    layout: SpaceLayout
    params: SystemParams
    hamiltonians: HamiltonianSet
    collapse: tuple[Operator, ...]
    decouple_parked: bool = True

    @classmethod
    def build(cls, variant: str, params: SystemParams, layout: SpaceLayout,
              decouple_parked: bool = True) -> "TransferModel":
        if variant == "full":
            ham = (build_H_qc(params, layout)
                   + build_H_ac_rydberg(params, layout)
                   + build_H_rs(params, layout))
            ops = collapse_operators(params, layout)
        elif variant == "effective":
            ham = (build_H_qc(params, layout)
                   + build_effective_V_ac(params, layout)
                   + build_H_rs(params, layout))
            ops = collapse_operators(params, layout)
        elif variant == "magnetic":
            ham = build_H_qc(params, layout) + build_H_ac_magnetic(params, layout)
            ops = collapse_operators(params, layout)
        elif variant == "dispersive":
            ham = build_effective_V_qa(params, layout)
            ops = collapse_operators(params, layout, kappa_override=0.0)
            kappa_eff = params.kappa * (params.eta_qc / params.delta_qc) ** 2
            if kappa_eff > 0:
                sm = _lower(layout, QUBIT)
                ops = ops + (Operator(math.sqrt(kappa_eff) * sm, layout,
                                      name="kappa_eff"),)
        else:
            raise ModelError(f"unknown model variant {variant!r}; "
                             f"expected one of {VARIANTS}")
        return cls(variant, layout, params, ham, ops, decouple_parked)

    def adapt_controls(self, controls: Mapping[str, float]) -> dict[str, float]:
        """Schedule controls (Delta_qc, Omega_gi, Omega_rs) -> model controls."""
        out = dict(controls)
        if "qc_on" not in out:
            if self.decouple_parked:
                if out.get("Delta_qc", 0.0) == 0.0:
                    out["qc_on"] = 1.0
                else:
                    out["qc_on"] = 0.0
                    out["Delta_qc"] = 0.0
            else:
                out["qc_on"] = 1.0
        return out

    def hamiltonian(self, controls: Mapping[str, float]) -> np.ndarray:
        return self.hamiltonians.evaluate(self.adapt_controls(controls))
