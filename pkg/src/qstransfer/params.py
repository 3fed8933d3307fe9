"""Physical constants and the parameter chain for the hybrid interface.

Everything is SI; frequencies are angular (rad/s) unless a name says
otherwise.  Display helpers convert to the conventional "2 pi x Hz"
form.  The chain goes geometry -> cavity mode -> vacuum field ->
coupling rates -> transfer times and loss estimates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

from .errors import ModelError

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class PhysicalConstants:
    """CODATA values (2018 adjustment), at least six significant digits."""

    hbar: float = 1.054571817e-34        # J s
    c: float = 299792458.0               # m / s
    e: float = 1.602176634e-19           # C
    a0: float = 5.29177210903e-11        # m
    eps0: float = 8.8541878128e-12       # F / m
    k_B: float = 1.380649e-23            # J / K
    alpha: float = 7.2973525693e-3       # fine-structure constant
    rydberg_energy: float = 2.1798723611035e-18   # J, infinite nuclear mass
    m_e: float = 9.1093837015e-31        # kg
    m_Rb87: float = 86.909180531 * 1.66053906660e-27   # kg

    @property
    def rydberg_energy_Rb(self) -> float:
        """Rydberg energy corrected for the finite 87Rb nuclear mass."""
        return self.rydberg_energy / (1.0 + self.m_e / self.m_Rb87)


CONSTANTS = PhysicalConstants()


@dataclass(frozen=True)
class CavityGeometry:
    """Coplanar-waveguide resonator geometry.

    Parameters
    ----------
    length
        Resonator length L in meters.
    width
        Transverse confinement scale w of the mode in meters.
    eps_r
        Effective relative permittivity of the substrate.
    mode_index
        Harmonic index m >= 1 (m = 2 for the full-wave mode).
    q_factor
        Loaded quality factor.
    """

    length: float = 1.0e-2
    width: float = 1.0e-5
    eps_r: float = 6.0
    mode_index: int = 2
    q_factor: float = 1.0e6

    def __post_init__(self):
        if self.length <= 0 or self.width <= 0:
            raise ModelError("cavity length and width must be positive")
        if self.eps_r < 1:
            raise ModelError(f"relative permittivity must be >= 1, got {self.eps_r}")
        if self.mode_index < 1:
            raise ModelError(f"mode index must be >= 1, got {self.mode_index}")
        if self.q_factor <= 0:
            raise ModelError("quality factor must be positive")


@dataclass(frozen=True)
class RydbergPair:
    """Adjacent Rydberg levels np and (n+1)s with their quantum defects."""

    n: int = 68
    delta_s: float = 3.131
    delta_p: float = 2.6545

    def __post_init__(self):
        if self.delta_s < 0 or self.delta_p < 0:
            raise ModelError("quantum defects must be non-negative")
        if self.n <= max(self.delta_s, self.delta_p):
            raise ModelError(
                f"principal quantum number {self.n} must exceed both defects "
                f"({self.delta_s}, {self.delta_p})")


def qubit_frequency(E_J: float, flux: float, flux_quantum: float,
                    constants: PhysicalConstants = CONSTANTS) -> float:
    """Charge-qubit level splitting (2 E_J / hbar) cos(pi Phi / Phi_0).

    Negative values are legitimate: the splitting changes sign when the
    flux bias crosses half a flux quantum.
    """
    if flux_quantum == 0:
        raise ModelError("flux quantum must be nonzero")
    return 2.0 * E_J / constants.hbar * math.cos(math.pi * flux / flux_quantum)


def rydberg_transition_frequency(pair: RydbergPair,
                                 constants: PhysicalConstants = CONSTANTS) -> float:
    """Angular frequency of the np -> (n+1)s microwave transition.

    Uses the quantum-defect series with the mass-corrected Rydberg
    energy: omega = (Ry/hbar) [1/(n - delta_p)^2 - 1/(n + 1 - delta_s)^2].
    """
    n_p = pair.n - pair.delta_p
    n_s = pair.n + 1 - pair.delta_s
    omega = constants.rydberg_energy_Rb / constants.hbar * (1.0 / n_p**2 - 1.0 / n_s**2)
    if omega <= 0:
        raise ModelError(
            f"Rydberg pair n={pair.n} (delta_s={pair.delta_s}, delta_p={pair.delta_p}) "
            "gives a non-positive transition frequency; pick adjacent levels with "
            "the p state below the s state")
    return omega


def cavity_mode_frequency(geom: CavityGeometry,
                          constants: PhysicalConstants = CONSTANTS) -> float:
    """Angular frequency pi m c / (L sqrt(eps_r)) of harmonic m."""
    return math.pi * geom.mode_index * constants.c / (geom.length * math.sqrt(geom.eps_r))


def mode_volume(geom: CavityGeometry) -> float:
    """Effective mode volume (pi/2) w^2 L of the coplanar resonator."""
    return 0.5 * math.pi * geom.width**2 * geom.length


def vacuum_field(omega_c: float, volume: float,
                 constants: PhysicalConstants = CONSTANTS) -> float:
    """Root-mean-square vacuum field sqrt(hbar omega_c / (2 eps0 V_c)) in V/m."""
    if omega_c <= 0 or volume <= 0:
        raise ModelError("vacuum field needs positive frequency and volume")
    return math.sqrt(constants.hbar * omega_c / (2.0 * constants.eps0 * volume))


def coupling_rate(dipole: float, field: float, mode_amplitude: float = 1.0,
                  constants: PhysicalConstants = CONSTANTS) -> float:
    """Single-emitter vacuum Rabi rate dipole * field * u / hbar.

    ``mode_amplitude`` is the dimensionless mode function u(r) at the
    emitter position, between 0 and 1.
    """
    if not 0.0 <= mode_amplitude <= 1.0:
        raise ModelError(f"mode amplitude u must lie in [0, 1], got {mode_amplitude}")
    return dipole * field * mode_amplitude / constants.hbar


def cavity_decay_rate(geom: CavityGeometry,
                      constants: PhysicalConstants = CONSTANTS) -> float:
    """Photon decay rate kappa = omega_c / Q."""
    return cavity_mode_frequency(geom, constants) / geom.q_factor


def thermal_occupation(omega: float, temperature: float,
                       constants: PhysicalConstants = CONSTANTS) -> float:
    """Bose-Einstein occupation of a mode at ``omega`` and temperature T."""
    if omega <= 0:
        raise ModelError("thermal occupation needs a positive mode frequency")
    if temperature < 0:
        raise ModelError("temperature must be >= 0")
    if temperature == 0:
        return 0.0
    x = constants.hbar * omega / (constants.k_B * temperature)
    if x > 700:
        return 0.0
    return 1.0 / math.expm1(x)


def effective_rates(drive: float, eta_ac: float, delta: float, n_atoms: float,
                    kappa: float) -> tuple[float, float]:
    """Second-order rates after adiabatic elimination of the detuned link.

    Returns the collective swap rate sqrt(N) * drive * eta_ac / delta and
    the effective photon decay kappa * (drive / delta)^2.  A vanishing
    detuning has no dispersive limit; use the resonant model instead.
    """
    if delta == 0:
        raise ModelError(
            "effective rates diverge at delta = 0; the adiabatic elimination "
            "only holds off resonance, use the resonant (first-order) model")
    if n_atoms < 1:
        raise ModelError(f"atom number must be >= 1, got {n_atoms}")
    collective = math.sqrt(n_atoms) * drive * eta_ac / delta
    kappa_eff = kappa * (drive / delta) ** 2
    return collective, kappa_eff


def swap_time(rate: float) -> float:
    """Half-oscillation (pi-pulse) duration pi / (2 rate) of a coherent swap."""
    if rate <= 0:
        raise ModelError(
            f"swap rate must be positive for a finite pulse, got {rate}")
    return 0.5 * math.pi / rate


def transfer_times_and_loss(rates: Mapping[str, float],
                            kappa: float) -> dict[str, tuple[float, float]]:
    """Swap time and first-order photon-loss estimate per labeled rate.

    Each entry maps name -> (tau, kappa * tau) with tau = pi / (2 rate).
    The loss estimate assumes the excitation sits in the decaying mode
    for the whole swap, which upper-bounds the master-equation result.
    """
    out: dict[str, tuple[float, float]] = {}
    for name, rate in rates.items():
        tau = swap_time(rate)
        out[name] = (tau, kappa * tau)
    return out


def hz(omega: float) -> float:
    """Angular frequency in 'ordinary' Hz, i.e. omega / 2 pi."""
    return omega / TWO_PI


def fmt_angular(omega: float) -> str:
    return f"2pi x {omega / TWO_PI:.6g} Hz"


@dataclass(frozen=True)
class DerivedValue:
    name: str
    value: float
    unit: str
    description: str

    def display(self) -> str:
        shown = f"{self.value:.6g} {self.unit}"
        if self.unit == "rad/s":
            shown += f" ({fmt_angular(self.value)})"
        return f"{self.name:<22s} {shown:<42s} {self.description}"


# Nominal interface parameters: dipole moments are inputs, not derived.
DIPOLE_IR_A0E = 1520.0     # |np> <-> |(n+1)s> Rydberg dipole, units of a0 e
MODE_AMPLITUDE_ATOMS = math.exp(-1.0)   # evanescent mode amplitude at the trap
N_ATOMS_DEFAULT = 1.0e6
ETA_QC_DEFAULT = TWO_PI * 50.0e6        # qubit-cavity coupling, rad/s
OMEGA_RS_DEFAULT = TWO_PI * 250.0e3     # Rydberg -> storage Raman rate, rad/s
GAMMA_R_DEFAULT = 1.0e4                 # Rydberg decay, 1 / (100 us)
GAMMA_Q_DEFAULT = 1.0e6                 # total qubit decoherence budget, 1/s
GAMMA_S_DEFAULT = 1.0                   # storage-state decay, 1/s


def parameter_chain(geom: CavityGeometry = CavityGeometry(),
                    pair: RydbergPair = RydbergPair(),
                    constants: PhysicalConstants = CONSTANTS,
                    n_atoms: float = N_ATOMS_DEFAULT,
                    dipole_ir_a0e: float = DIPOLE_IR_A0E,
                    mode_amplitude: float = MODE_AMPLITUDE_ATOMS,
                    eta_qc: float = ETA_QC_DEFAULT,
                    omega_rs: float = OMEGA_RS_DEFAULT) -> list[DerivedValue]:
    """Full derivation chain from geometry and atomic data to protocol times."""
    omega_ri = rydberg_transition_frequency(pair, constants)
    omega_c = cavity_mode_frequency(geom, constants)
    v_c = mode_volume(geom)
    eps_c = vacuum_field(omega_c, v_c, constants)
    dipole = dipole_ir_a0e * constants.a0 * constants.e
    eta_ac = coupling_rate(dipole, eps_c, mode_amplitude, constants)
    kappa = cavity_decay_rate(geom, constants)
    delta = 10.0 * eta_ac
    # collective two-photon drive balanced against the cavity coupling
    omega_gi = eta_ac / math.sqrt(n_atoms)
    rtn_eta_eff, _ = effective_rates(omega_gi, eta_ac, delta, n_atoms, kappa)
    tau_qc = swap_time(eta_qc)
    tau_gr = swap_time(rtn_eta_eff)
    tau_rs = swap_time(omega_rs)
    rows = [
        DerivedValue("omega_ri", omega_ri, "rad/s",
                     f"{pair.n}p -> {pair.n + 1}s Rydberg transition (quantum defects)"),
        DerivedValue("omega_c", omega_c, "rad/s",
                     f"cavity harmonic m={geom.mode_index}, L={geom.length:g} m, "
                     f"eps_r={geom.eps_r:g}"),
        DerivedValue("mode_volume", v_c, "m^3", "effective mode volume (pi/2) w^2 L"),
        DerivedValue("vacuum_field", eps_c, "V/m", "rms vacuum field in the gap"),
        DerivedValue("eta_ac", eta_ac, "rad/s",
                     f"single-atom Rydberg coupling, u(r)={mode_amplitude:.4g}"),
        DerivedValue("kappa", kappa, "1/s", f"photon decay at Q={geom.q_factor:g}"),
        DerivedValue("photon_lifetime", 1.0 / kappa, "s", "1 / kappa"),
        DerivedValue("delta", delta, "rad/s", "two-photon ladder detuning, 10 eta_ac"),
        DerivedValue("rtN_omega_gi", math.sqrt(n_atoms) * omega_gi, "rad/s",
                     "collective lower-leg Rabi rate, balanced to eta_ac"),
        DerivedValue("rtN_eta_eff", rtn_eta_eff, "rad/s",
                     "collective second-order transfer rate"),
        DerivedValue("tau_qc", tau_qc, "s", "qubit -> cavity swap, pi/(2 eta_qc)"),
        DerivedValue("tau_gr", tau_gr, "s", "cavity -> Rydberg transfer time"),
        DerivedValue("tau_rs", tau_rs, "s", "Rydberg -> storage pi pulse"),
        DerivedValue("protocol_time", tau_qc + tau_gr + tau_rs, "s",
                     "total three-step duration"),
        DerivedValue("loss_gr_estimate", kappa * tau_gr, "",
                     "first-order photon-loss bound during the transfer"),
    ]
    return rows


def magnetic_chain(omega_c: float, n_atoms: float = N_ATOMS_DEFAULT,
                   kappa: float = 5.0e4,
                   constants: PhysicalConstants = CONSTANTS) -> list[DerivedValue]:
    """Direct magnetic-dipole scheme: hyperfine coupling and swap budget."""
    dipole_sg = 0.5 * constants.alpha * constants.a0 * constants.e
    # reuse the geometric field of the nominal resonator at this frequency
    geom = CavityGeometry(mode_index=1, length=math.pi * constants.c /
                          (omega_c * math.sqrt(CavityGeometry().eps_r)))
    eps_c = vacuum_field(omega_c, mode_volume(geom), constants)
    eta_sg = coupling_rate(dipole_sg, eps_c, 1.0, constants)
    rtn = math.sqrt(n_atoms) * eta_sg
    tau_sg = swap_time(rtn)
    return [
        DerivedValue("dipole_sg", dipole_sg, "C m",
                     "hyperfine magnetic transition, alpha a0 e / 2"),
        DerivedValue("eta_sg", eta_sg, "rad/s", "single-atom hyperfine coupling"),
        DerivedValue("rtN_eta_sg", rtn, "rad/s", "collective hyperfine coupling"),
        DerivedValue("tau_sg", tau_sg, "s", "photon -> storage swap time"),
        DerivedValue("loss_sg_estimate", kappa * tau_sg, "",
                     "first-order photon-loss bound during the swap"),
    ]
