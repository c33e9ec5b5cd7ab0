"""Degenerate perturbation theory for periodically driven quantum systems.

Builds effective Hamiltonians and subspace transformations for multi-photon
resonances to arbitrary order, predicts the full state evolution including
fast oscillations and leakage, designs flat-top pulses, and validates every
prediction against an exact integrator.
"""

__version__ = "0.1.0"

from . import errors, evolve, model, opalg, oracle, pert, pulse, sambe
from .evolve import EvolutionResult, amplitudes, first_order_amplitudes, max_transfer, u_eff
from .model import (
    DrivenSystem,
    FluxoniumSpec,
    ResonantDecomposition,
    decompose,
    fluxonium,
    rabi_model,
    system_from_positive_harmonics,
    transmon,
    transmon_rwa_reference,
    xz_model,
)
from .opalg import CoefficientTable, StringSum, heff_table, w_table
from .oracle import (
    IntegratorConfig,
    integrate,
    optimize_transfer,
    quasi_energies,
    resonance_crossing,
)
from .pert import (
    EffectiveHamiltonian,
    ProcessTerm,
    WOperator,
    closed_form_leading,
    effective_hamiltonian,
    enumerate_processes,
    rabi_frequency,
    resonance_frequency,
    w_operator,
)
from .pulse import Envelope, MagnusDesign, evaluate_pulse, heff_vs_envelope, solve_pulse
from .sambe import SambeOperators, SambeSpace, build_operators, build_space, evaluate_string

__all__ = [
    "CoefficientTable",
    "DrivenSystem",
    "EffectiveHamiltonian",
    "Envelope",
    "EvolutionResult",
    "FluxoniumSpec",
    "IntegratorConfig",
    "MagnusDesign",
    "ProcessTerm",
    "ResonantDecomposition",
    "SambeOperators",
    "SambeSpace",
    "StringSum",
    "WOperator",
    "amplitudes",
    "build_operators",
    "build_space",
    "closed_form_leading",
    "decompose",
    "effective_hamiltonian",
    "enumerate_processes",
    "errors",
    "evaluate_pulse",
    "evaluate_string",
    "first_order_amplitudes",
    "fluxonium",
    "heff_table",
    "heff_vs_envelope",
    "integrate",
    "max_transfer",
    "optimize_transfer",
    "quasi_energies",
    "rabi_frequency",
    "rabi_model",
    "resonance_crossing",
    "resonance_frequency",
    "solve_pulse",
    "system_from_positive_harmonics",
    "transmon",
    "transmon_rwa_reference",
    "u_eff",
    "w_operator",
    "w_table",
    "xz_model",
]
