"""Deterministic simulator for the two-step authenticated QKD post-processing
channel, its man-in-the-middle attack, and the countermeasures against it."""

__version__ = "0.1.0"

from .auth import AuthScheme, Bounds, KeyPool, analytic_bounds, make_tag, verify_tag
from .bits import BitString
from .errors import (ConfigError, ContractViolation, GuardRefused, KeyExhausted, LengthMismatch,
                     Unimplemented)
from .hash_core import (PublicHashDescriptor, SpaceParams, Su2Family, count_preimages,
                        find_collision_in_ball, verify_su2_family)
from .protocol import Phase, PhaseMessage, ProtocolConfig, SessionOutcome, run_session
from .adversary import AdversaryStrategy, Eve, build_list, intercept_resend
from .experiments import ExperimentPlan, ExperimentResult, emit_csv, read_csv, run_trials

__all__ = [
    "AdversaryStrategy", "AuthScheme", "BitString", "Bounds", "ConfigError", "ContractViolation",
    "Eve", "ExperimentPlan", "ExperimentResult", "GuardRefused", "KeyExhausted", "KeyPool",
    "LengthMismatch", "Phase", "PhaseMessage", "ProtocolConfig", "PublicHashDescriptor",
    "SessionOutcome", "SpaceParams", "Su2Family", "Unimplemented", "analytic_bounds",
    "build_list", "count_preimages", "emit_csv", "find_collision_in_ball", "intercept_resend",
    "make_tag", "read_csv", "run_session", "run_trials", "verify_su2_family", "verify_tag",
]
