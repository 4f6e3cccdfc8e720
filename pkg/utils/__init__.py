"""
Private read/write scheme utilities package.
"""

# Make imports easier
from .codec import Database, ServerStorage, decode_database, encode_storage
from .errors import (
    InvalidInputError,
    InvariantViolation,
    SchemeError,
)
from .field import FieldContext
from .params import RawConfig, RoundParams, SystemParams, derive, round_params
from .sim import (
    DropoutSchedule,
    RoundReport,
    RoundSource,
    SimulationState,
    closed_form_costs,
    init,
    run_round,
    run_schedule,
)

__all__ = [
    'Database',
    'ServerStorage',
    'decode_database',
    'encode_storage',
    'InvalidInputError',
    'InvariantViolation',
    'SchemeError',
    'FieldContext',
    'RawConfig',
    'RoundParams',
    'SystemParams',
    'derive',
    'round_params',
    'DropoutSchedule',
    'RoundReport',
    'RoundSource',
    'SimulationState',
    'init',
    'run_round',
    'run_schedule',
    'closed_form_costs',
]
