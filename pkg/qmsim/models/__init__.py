from .params import ModelParams, SweepProtocol, RelaxationSettings, QS_PARAMETERS, DT_STABILITY_LIMIT
from .state import FieldState, QubitAmplitudes, SystemState
from .records import (
    EnergyBreakdown, TransitionEvent, SweepRow, SweepRecord,
    Soliton, SolitonCensus, RelaxationReport,
    FieldTransition, CycleLoop, LoopSummary, CriticalCouplingResult, FieldEnergyPoint,
    SWEEP_COLUMNS, EVENT_COLUMNS, ENERGY_CURVE_COLUMNS
)

__all__ = [
    'ModelParams',
    'SweepProtocol',
    'RelaxationSettings',
    'QS_PARAMETERS',
    'DT_STABILITY_LIMIT',
    'FieldState',
    'QubitAmplitudes',
    'SystemState',
    'EnergyBreakdown',
    'TransitionEvent',
    'SweepRow',
    'SweepRecord',
    'Soliton',
    'SolitonCensus',
    'RelaxationReport',
    'FieldTransition',
    'CycleLoop',
    'LoopSummary',
    'CriticalCouplingResult',
    'FieldEnergyPoint',
    'SWEEP_COLUMNS',
    'EVENT_COLUMNS',
    'ENERGY_CURVE_COLUMNS'
]
