"""Phase-equivalent local potentials from imaginary S-matrix poles.

Transformation chains over the free particle, their Wronskian potentials,
closed-form Jost functions and phase shifts, a pole fit to phase-shift data
and an independent Numerov oracle.
"""

__version__ = "0.1.0"

from .chain import (
    S1_POLES,
    ChainError,
    ChainSpec,
    PoleSet,
    RegularA,
    RegularB,
    SameEnergyPair,
    SingularDecaying,
    SingularMixed,
    deep_chain,
    enumerate_configurations,
    extend_with_pair,
    shallow_chain,
    v8_chain,
    validate,
)
from .core import DEFAULT_CONSTANTS, DEFAULT_POLICY, Constants, DomainError, NumericPolicy, elab_from_k, k_from_elab
from .fit import PhaseShiftDataset, fit_poles, load_dataset, model_scan
from .oracle import SolverConfig, bound_states, extract_phase, integrate_regular, verify_phase_equivalence
from .potential import ChainPotential, PotentialTable, build_potential, potential_values
from .scattering import jost, jost_from_solution, levinson_check, observables, phase_shift, s_matrix

__all__ = [
    "S1_POLES", "ChainError", "ChainSpec", "PoleSet", "RegularA", "RegularB", "SameEnergyPair",
    "SingularDecaying", "SingularMixed", "deep_chain", "enumerate_configurations", "extend_with_pair",
    "shallow_chain", "v8_chain", "validate", "DEFAULT_CONSTANTS", "DEFAULT_POLICY", "Constants",
    "DomainError", "NumericPolicy", "elab_from_k", "k_from_elab", "PhaseShiftDataset", "fit_poles",
    "load_dataset", "model_scan", "SolverConfig", "bound_states", "extract_phase", "integrate_regular",
    "verify_phase_equivalence", "ChainPotential", "PotentialTable", "build_potential", "potential_values",
    "jost", "jost_from_solution", "levinson_check", "observables", "phase_shift", "s_matrix",
]
