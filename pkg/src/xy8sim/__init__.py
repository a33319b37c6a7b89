"""Simulation and design tools for electron-controlled nuclear spin gates under XY8 decoupling."""

__version__ = "0.1.0"

from .algebra import AxisAngle, BlochVector, NormalizationError, axis_angle_from_su2, su2_from_axis_angle
from .engine import (ConditionalGate, ConditionalPair, FastPathError, GateError, bloch_trace,
                     conditional_unitaries, dd_signal, effective_gate, evolve_density, photon_readout_mc)
from .program import PulseProgram, build_xy8_block, validate_program
from .spectroscopy import FitBounds, FitResult, NonIdentifiableError, fit_hyperfine, simulate_spectrum
from .system import HyperfineCoupling, NuclearSpinModel, SystemModel, reference_system, resonance_tau

__all__ = [
    "AxisAngle", "BlochVector", "NormalizationError", "axis_angle_from_su2", "su2_from_axis_angle",
    "ConditionalGate", "ConditionalPair", "FastPathError", "GateError", "bloch_trace",
    "conditional_unitaries", "dd_signal", "effective_gate", "evolve_density", "photon_readout_mc",
    "PulseProgram", "build_xy8_block", "validate_program",
    "FitBounds", "FitResult", "NonIdentifiableError", "fit_hyperfine", "simulate_spectrum",
    "HyperfineCoupling", "NuclearSpinModel", "SystemModel", "reference_system", "resonance_tau",
]
