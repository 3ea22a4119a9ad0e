"""Simulator for phase-randomised Glauber-state key exchange over a roundtrip
fiber, with tapping and intercept-resend eavesdroppers."""
from .config import ConfigError, ExperimentConfig, load, loads
from .modulation import ReferenceList, Scheme, SymbolWord, decode, encode
from .phasespace import GlauberState, NoiseModel, PhaseShiftGate, canonicalize
from .protocol import SessionResult, run_session

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ExperimentConfig", "GlauberState", "NoiseModel", "PhaseShiftGate", "ReferenceList",
    "Scheme", "SessionResult", "SymbolWord", "canonicalize", "decode", "encode", "load", "loads", "run_session",
]
