from typing import List, Optional
from pydantic import BaseModel, Field, model_validator
from .state import SystemState


class EnergyBreakdown(BaseModel):
    """Energies in units of E_J; q_conserved = e_field + 2*(e_int + e_qubit)"""

    e_field: float
    e_int: float
    e_qubit: float
    e_total: float
    q_conserved: float

    @classmethod
    def from_terms(cls, e_field: float, e_int: float, e_qubit: float) -> "EnergyBreakdown":
        return cls(
            e_field=e_field,
            e_int=e_int,
            e_qubit=e_qubit,
            e_total=e_field + e_int + e_qubit,
            q_conserved=e_field + 2.0 * (e_int + e_qubit),
        )


class TransitionEvent(BaseModel):
    tau: float
    h_ext: float
    winding_before: int
    winding_after: int
    phi_before: float
    phi_after: float

    @model_validator(mode="after")
    def _check_jump(self) -> "TransitionEvent":
        if self.winding_before == self.winding_after:
            raise ValueError("a transition must change the winding")
        return self

    @property
    def delta(self) -> int:
        return self.winding_after - self.winding_before


class SweepRow(BaseModel):
    tau: float
    h_ext: float
    phi: float
    winding: int
    e_field: float
    e_int: float
    e_qubit: float
    e_total: float
    q_conserved: float
    max_excitation: float
    cycle: int = 0


SWEEP_COLUMNS = list(SweepRow.model_fields.keys())
EVENT_COLUMNS = list(TransitionEvent.model_fields.keys())


class SweepRecord(BaseModel):
    rows: List[SweepRow] = Field(default_factory=list)
    events: List[TransitionEvent] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_ordering(self) -> "SweepRecord":
        for previous, current in zip(self.rows, self.rows[1:]):
            if not current.tau > previous.tau:
                raise ValueError(f"rows must be strictly increasing in tau (at tau={current.tau})")
            if current.cycle < previous.cycle:
                raise ValueError(f"cycle index decreased at tau={current.tau}")
        return self

    def append(self, row: SweepRow) -> None:
        # Hot path: ordering is checked here instead of revalidating the model
        if self.rows:
            if not row.tau > self.rows[-1].tau:
                raise ValueError(f"rows must be strictly increasing in tau (at tau={row.tau})")
            if row.cycle < self.rows[-1].cycle:
                raise ValueError(f"cycle index decreased at tau={row.tau}")
        self.rows.append(row)

    def cycles(self) -> List[int]:
        return sorted({row.cycle for row in self.rows})

    def rows_in_cycle(self, cycle: int) -> List[SweepRow]:
        return [row for row in self.rows if row.cycle == cycle]


class Soliton(BaseModel):
    site_position: float
    polarity: int
    peak_field: float
    first_link: int
    last_link: int
    touches_boundary: bool = False


class SolitonCensus(BaseModel):
    solitons: List[Soliton] = Field(default_factory=list)
    net_winding: int = 0

    @property
    def count(self) -> int:
        return len(self.solitons)

    @property
    def polarity_sum(self) -> int:
        return sum(soliton.polarity for soliton in self.solitons)


class RelaxationReport(BaseModel):
    h_ext: float
    final_state: SystemState
    steady: bool
    elapsed_tau: float
    events: List[TransitionEvent] = Field(default_factory=list)
    energies: EnergyBreakdown
    census: SolitonCensus
    renormalizations: int = 0


class FieldTransition(BaseModel):
    h_ext: float
    delta: int
    winding_after: int


class CycleLoop(BaseModel):
    """Phi(H_ext) of one cycle resampled on fixed, per-branch monotone field grids"""

    cycle: int
    h_descending: List[float]
    phi_descending: List[float]
    h_ascending: List[float]
    phi_ascending: List[float]
    winding_at_zero_descending: Optional[int] = None
    winding_at_zero_ascending: Optional[int] = None
    transitions: List[FieldTransition] = Field(default_factory=list)
    closure_error: float = 0.0


class LoopSummary(BaseModel):
    loops: List[CycleLoop] = Field(default_factory=list)
    last_cycle: int
    winding_at_zero_descending: Optional[int] = None
    winding_at_zero_ascending: Optional[int] = None
    transitions: List[FieldTransition] = Field(default_factory=list)
    converged: bool = False
    cycle_difference: Optional[float] = None
    closure_error: float = 0.0
    match_tol: float = 0.1


class CriticalCouplingResult(BaseModel):
    h_ext: float
    s_critical: float
    s_lo: float
    s_hi: float
    tol: float


class FieldEnergyPoint(BaseModel):
    """Relaxed energies, flux and winding at one applied field"""

    h_ext: float
    steady: bool
    winding: int
    phi: float
    e_field: float
    e_int: float
    e_qubit: float
    e_total: float
    q_conserved: float


ENERGY_CURVE_COLUMNS = list(FieldEnergyPoint.model_fields.keys())
