"""Lindblad simulator for qubit-to-atomic-ensemble state transfer.

A superconducting charge qubit exchanges a single excitation with an
ultracold atomic ensemble through a coplanar-waveguide cavity.  The
package builds the composite Hilbert space, the protocol Hamiltonians
and collapse channels, integrates the Lindblad master equation, and
reproduces the published transfer trajectories, error probabilities,
fidelity-versus-temperature curves, and the physical-parameter chain.
"""
__version__ = "0.1.0"

from .errors import (CalibrationError, ConfigError, DimensionError,
                     IntegrationError, LayoutError, ModelError, QstError,
                     ScheduleError, StateError)
from .hilbert import (CAVITY, MODE_I, MODE_R, MODE_S, QUBIT, DensityMatrix,
                      Operator, SpaceLayout, annihilation, basis_ket,
                      basis_state, default_layout, embed, number_op,
                      partial_trace, thermal_cavity_state,
                      thermal_probabilities, trace_distance)
from .model import (CONTROL_LABELS, VARIANTS, HamiltonianSet, SystemParams,
                    TransferModel, collapse_operators, total_excitation)
from .params import (CONSTANTS, CavityGeometry, DerivedValue, RydbergPair,
                     cavity_decay_rate, cavity_mode_frequency, coupling_rate,
                     effective_rates, magnetic_chain, mode_volume,
                     parameter_chain, swap_time, thermal_occupation,
                     vacuum_field)
from .pulses import (PulseSchedule, PulseSegment, dispersive_protocol, hold,
                     magnetic_protocol, parse_schedule, reverse_protocol,
                     three_step_protocol)
from .integrator import (IntegratorConfig, Trajectory, expm_oracle,
                         lindblad_rhs, liouvillian_matrix, propagate)
from .fidelity import (CARDINAL_LABELS, InputState, TargetState,
                       calibrate_phase, cardinal_states, conditional_fidelity,
                       initial_state, mean_fidelity, run_transfer,
                       transfer_fidelities)
from .experiments import (SCENARIOS, PointFidelities, ScenarioConfig,
                          SweepResult, SweepRow, fidelity_point, parse_config,
                          q_degradation_study, roundtrip_fidelity,
                          run_scenario, run_validation, thermal_cavity_dim)

__all__ = [name for name in dir() if not name.startswith("_")]
