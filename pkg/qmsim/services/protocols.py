from typing import Callable, Deque, List, Optional, Sequence, Tuple
from collections import deque
from concurrent.futures import ProcessPoolExecutor
import logging
import time
import numpy as np

from models import (
    ModelParams, SweepProtocol, RelaxationSettings, SystemState,
    SweepRecord, SweepRow, TransitionEvent, RelaxationReport,
    CycleLoop, LoopSummary, FieldTransition, CriticalCouplingResult, FieldEnergyPoint
)
from core.config import settings
from core.errors import BracketError, IntegrationBlowupError, TooFewCyclesError
from core.lattice import init_vacuum, require_valid, MAX_SEED
from services.dynamics import LatticeIntegrator
from services.observables import energy_breakdown, is_steady, observe, soliton_census, trapped_flux
from services.schedule import SweepSchedule

logger = logging.getLogger(__name__)

DEFAULT_MATCH_TOL = 0.1
DEFAULT_GRID_POINTS = 201


class TransitionRecorder:
    """Observer that samples rows and logs every change of winding"""

    def __init__(
        self,
        params: ModelParams,
        run_id: str,
        cycle_of: Optional[Callable[[float], int]] = None,
        keep: Optional[int] = None
    ):
        self.params = params
        self.run_id = run_id
        self.cycle_of = cycle_of
        self.rows: Deque[SweepRow] = deque(maxlen=keep)
        self.events: List[TransitionEvent] = []
        self.last: Optional[SweepRow] = None

    def record(self, state: SystemState) -> SweepRow:
        # The step that produced this sample started one dt earlier
        cycle = self.cycle_of(state.tau - self.params.dt) if self.cycle_of else 0
        row = observe(state, self.params, cycle=cycle)
        if self.last is not None and row.winding != self.last.winding:
            event = TransitionEvent(
                tau=row.tau,
                h_ext=row.h_ext,
                winding_before=self.last.winding,
                winding_after=row.winding,
                phi_before=self.last.phi,
                phi_after=row.phi,
            )
            self.events.append(event)
            logger.info(
                f"[{self.run_id}] Transition {event.winding_before} -> {event.winding_after} "
                f"at h_ext={event.h_ext:.5f}, tau={event.tau:.2f}"
            )
        self.rows.append(row)
        self.last = row
        return row


def relax_at_field(
    params: ModelParams,
    h_ext: float,
    max_tau: float = 5e4,
    window: int = 100,
    tol: float = 1e-4,
    min_tau: float = 1e3,
    record_stride: int = 100,
    initial_state: Optional[SystemState] = None,
    rng: Optional[np.random.Generator] = None
) -> RelaxationReport:
    """
    Evolve at constant h_ext until the trailing window is steady or max_tau elapses.

    Not reaching a steady state is reported (steady=False), not raised.
    """
    if max_tau <= 0:
        raise ValueError(f"max_tau must be > 0, got {max_tau}")
    require_valid(params)

    run_id = f"relax s={params.s:g} h={h_ext:g}"
    state = initial_state.copy_state() if initial_state is not None else init_vacuum(params)
    state.h_ext = h_ext
    tau_start = state.tau
    min_tau = min(min_tau, max_tau)

    integrator = LatticeIntegrator(params, state, rng=rng)
    recorder = TransitionRecorder(params, run_id, keep=window)
    recorder.record(state)
    outcome = {"steady": False}

    def check(sample: SystemState, step: int) -> bool:
        recorder.record(sample)
        if sample.tau - tau_start >= min_tau and is_steady(recorder.rows, window, tol):
            outcome["steady"] = True
            return True
        return False

    started = time.time()
    logger.info(f"[{run_id}] Relaxing for up to tau={max_tau:g} (N={params.n_sites}, dt={params.dt:g})")
    integrator.run(max_tau, observer=check, record_stride=record_stride)

    final = integrator.state()
    elapsed = final.tau - tau_start
    if outcome["steady"]:
        logger.info(f"[{run_id}] Steady after tau={elapsed:.1f} ({time.time() - started:.1f}s wall)")
    else:
        logger.warning(f"[{run_id}] Not steady by tau={elapsed:.1f}")

    return RelaxationReport(
        h_ext=h_ext,
        final_state=final,
        steady=outcome["steady"],
        elapsed_tau=elapsed,
        events=recorder.events,
        energies=energy_breakdown(final, params),
        census=soliton_census(final, params),
        renormalizations=integrator.renormalizations,
    )


def relax_with_settings(
    params: ModelParams,
    h_ext: float,
    relax: RelaxationSettings,
    initial_state: Optional[SystemState] = None
) -> RelaxationReport:
    return relax_at_field(params, h_ext, initial_state=initial_state, **relax.model_dump())


def run_sweep(
    params: ModelParams,
    protocol: SweepProtocol,
    rng: Optional[np.random.Generator] = None
) -> SweepRecord:
    """Virgin branch plus cycles from the vacuum, sampled every record_stride steps"""
    require_valid(params)
    run_id = f"sweep N={params.n_sites} h=[{protocol.h_min:g},{protocol.h_max:g}]"
    schedule = SweepSchedule(protocol)

    state = init_vacuum(params)
    integrator = LatticeIntegrator(params, state, rng=rng)
    recorder = TransitionRecorder(params, run_id, cycle_of=schedule.cycle_at)
    recorder.record(state)

    def sample(snapshot: SystemState, step: int) -> bool:
        row = recorder.record(snapshot)
        if step % (protocol.record_stride * 1000) == 0:
            logger.debug(f"[{run_id}] tau={row.tau:.1f} h_ext={row.h_ext:.4f} winding={row.winding}")
        return False

    started = time.time()
    logger.info(
        f"[{run_id}] Sweeping {protocol.n_cycles} cycles at rate {protocol.rate:g} "
        f"(tau={schedule.duration:.0f}, {int(schedule.duration / params.dt)} steps)"
    )
    try:
        integrator.run(schedule.duration, schedule, observer=sample, record_stride=protocol.record_stride)
    except IntegrationBlowupError as e:
        located = e.located(schedule.cycle_at(e.tau - params.dt), schedule.h_at(e.tau - params.dt))
        logger.error(f"[{run_id}] {located}")
        raise located from e

    logger.info(f"[{run_id}] Sweep finished in {time.time() - started:.1f}s wall, {len(recorder.events)} transitions")
    return SweepRecord(rows=list(recorder.rows), events=recorder.events)


def virgin_then_cycle(
    params: ModelParams,
    protocol: SweepProtocol,
    match_tol: float = DEFAULT_MATCH_TOL,
    rng: Optional[np.random.Generator] = None
) -> Tuple[SweepRecord, LoopSummary]:
    record = run_sweep(params, protocol, rng=rng)
    return record, summarize_loops(record, match_tol)


def prescan_h_max(
    params: ModelParams,
    rate: float = 2.5e-4,
    target_winding: int = 7,
    h_cap: float = 50.0,
    margin: float = 0.1,
    record_stride: int = 100
) -> float:
    """
    Smallest field (plus margin) at which a virgin ramp from the vacuum reaches
    target_winding; h_cap with a warning when the ramp never gets there.
    """
    require_valid(params)
    run_id = f"prescan N={params.n_sites}"
    integrator = LatticeIntegrator(params, init_vacuum(params))
    recorder = TransitionRecorder(params, run_id, keep=1)
    reached = {"h": None}

    def watch(sample: SystemState, step: int) -> bool:
        row = recorder.record(sample)
        if abs(row.winding) >= target_winding:
            reached["h"] = row.h_ext
            return True
        return False

    integrator.run(h_cap / rate, lambda tau: rate * tau, observer=watch, record_stride=record_stride)
    if reached["h"] is None:
        logger.warning(f"[{run_id}] Winding {target_winding} not reached below h_cap={h_cap:g}")
        return h_cap
    h_max = reached["h"] * (1.0 + margin)
    logger.info(f"[{run_id}] Winding {target_winding} reached at h_ext={reached['h']:.4f}; h_max={h_max:.4f}")
    return h_max


def _branch_rows(rows: List[SweepRow]) -> Tuple[List[SweepRow], List[SweepRow]]:
    """Split one cycle into its (descending, ascending) branches; the turning row belongs to both"""
    h = np.array([row.h_ext for row in rows])
    descending_first = h[0] >= np.mean(h)
    turn = int(np.argmin(h) if descending_first else np.argmax(h))
    first, second = rows[:turn + 1], rows[turn:]
    return (first, second) if descending_first else (second, first)


def _resample(rows: List[SweepRow], grid: np.ndarray) -> np.ndarray:
    h = np.array([row.h_ext for row in rows])
    phi = np.array([row.phi for row in rows])
    order = np.argsort(h, kind="stable")
    return np.interp(grid, h[order], phi[order])


def _winding_at_zero(rows: List[SweepRow]) -> Optional[int]:
    h = np.array([row.h_ext for row in rows])
    if not (h.min() <= 0.0 <= h.max()):
        return None
    return rows[int(np.argmin(np.abs(h)))].winding


def extract_cycle_loop(
    record: SweepRecord,
    cycle: int,
    n_grid: int = DEFAULT_GRID_POINTS
) -> CycleLoop:
    rows = record.rows_in_cycle(cycle)
    if len(rows) < 2:
        raise TooFewCyclesError(f"cycle {cycle} has {len(rows)} rows")

    descending, ascending = _branch_rows(rows)
    h_desc = [row.h_ext for row in descending]
    h_asc = [row.h_ext for row in ascending]
    grid_desc = np.linspace(max(h_desc), min(h_desc), n_grid)
    grid_asc = np.linspace(min(h_asc), max(h_asc), n_grid)

    first_tau, last_tau = rows[0].tau, rows[-1].tau
    transitions = [
        FieldTransition(h_ext=event.h_ext, delta=event.delta, winding_after=event.winding_after)
        for event in record.events
        if first_tau <= event.tau <= last_tau
    ]

    return CycleLoop(
        cycle=cycle,
        h_descending=grid_desc.tolist(),
        phi_descending=_resample(descending, grid_desc).tolist(),
        h_ascending=grid_asc.tolist(),
        phi_ascending=_resample(ascending, grid_asc).tolist(),
        winding_at_zero_descending=_winding_at_zero(descending),
        winding_at_zero_ascending=_winding_at_zero(ascending),
        transitions=transitions,
        closure_error=abs(rows[0].phi - rows[-1].phi),
    )


def cycle_difference(
    record: SweepRecord,
    cycle_a: int,
    cycle_b: int,
    n_grid: int = DEFAULT_GRID_POINTS
) -> float:
    """Max |Phi_a(H) - Phi_b(H)| over both branches on the field range the cycles share"""
    worst = 0.0
    branches_a = _branch_rows(record.rows_in_cycle(cycle_a))
    branches_b = _branch_rows(record.rows_in_cycle(cycle_b))
    for rows_a, rows_b in zip(branches_a, branches_b):
        h_a = [row.h_ext for row in rows_a]
        h_b = [row.h_ext for row in rows_b]
        lo = max(min(h_a), min(h_b))
        hi = min(max(h_a), max(h_b))
        grid = np.linspace(lo, hi, n_grid)
        worst = max(worst, float(np.max(np.abs(_resample(rows_a, grid) - _resample(rows_b, grid)))))
    return worst


def summarize_loops(
    record: SweepRecord,
    match_tol: float = DEFAULT_MATCH_TOL,
    n_grid: int = DEFAULT_GRID_POINTS
) -> LoopSummary:
    cycles = [cycle for cycle in record.cycles() if cycle >= 1]
    if not cycles:
        raise TooFewCyclesError("record contains no completed field cycle")

    loops = [extract_cycle_loop(record, cycle, n_grid) for cycle in cycles]
    last = loops[-1]
    difference = None
    if len(cycles) >= 2:
        difference = cycle_difference(record, cycles[-2], cycles[-1], n_grid)

    return LoopSummary(
        loops=loops,
        last_cycle=last.cycle,
        winding_at_zero_descending=last.winding_at_zero_descending,
        winding_at_zero_ascending=last.winding_at_zero_ascending,
        transitions=last.transitions,
        converged=difference is not None and difference <= match_tol,
        cycle_difference=difference,
        closure_error=last.closure_error,
        match_tol=match_tol,
    )


def steady_loop_extract(
    record: SweepRecord,
    match_tol: float = DEFAULT_MATCH_TOL,
    n_grid: int = DEFAULT_GRID_POINTS
) -> LoopSummary:
    """Last cycle's loop, converged iff it matches the previous cycle within match_tol"""
    cycles = [cycle for cycle in record.cycles() if cycle >= 1]
    if len(cycles) < 2:
        raise TooFewCyclesError(f"need at least 2 full cycles, record has {len(cycles)}")
    return summarize_loops(record, match_tol, n_grid)


def _leaves_vacuum(
    template: ModelParams,
    s: float,
    h_ext: float,
    trial_index: int,
    relax: RelaxationSettings
) -> bool:
    # Fresh vacuum and a per-trial seed so thresholds never inherit history
    params = template.with_changes(s=s, rng_seed=(template.rng_seed + trial_index) % MAX_SEED)
    report = relax_with_settings(params, h_ext, relax)
    winding = report.census.net_winding
    logger.info(f"[scan h={h_ext:g}] trial {trial_index}: s={s:.4f} -> winding {winding}")
    return winding != 0


def critical_coupling_scan(
    template: ModelParams,
    h_ext: float,
    s_lo: float,
    s_hi: float,
    tol: float = 0.02,
    relax: RelaxationSettings = RelaxationSettings()
) -> float:
    """
    Bisect on s for the smallest coupling whose relaxation leaves the vacuum.

    Raises:
        BracketError: s_lo already transitions, s_hi does not, or s_lo > s_hi
    """
    require_valid(template)
    if s_lo > s_hi:
        raise BracketError(f"s_lo ({s_lo}) must not exceed s_hi ({s_hi})")

    if s_lo == s_hi:
        if _leaves_vacuum(template, s_hi, h_ext, 0, relax):
            return s_hi
        raise BracketError(f"s={s_hi} does not leave the vacuum at h_ext={h_ext}")

    if _leaves_vacuum(template, s_lo, h_ext, 0, relax):
        raise BracketError(f"vacuum already unstable at s_lo={s_lo}, h_ext={h_ext}")
    if not _leaves_vacuum(template, s_hi, h_ext, 1, relax):
        raise BracketError(f"vacuum still stable at s_hi={s_hi}, h_ext={h_ext}")

    trial = 2
    while s_hi - s_lo > tol:
        middle = 0.5 * (s_lo + s_hi)
        if _leaves_vacuum(template, middle, h_ext, trial, relax):
            s_hi = middle
        else:
            s_lo = middle
        trial += 1

    logger.info(f"[scan h={h_ext:g}] s* = {s_hi:.4f} after {trial} trials")
    return s_hi


def _scan_one(
    template: ModelParams,
    h_ext: float,
    s_lo: float,
    s_hi: float,
    tol: float,
    relax: RelaxationSettings
) -> CriticalCouplingResult:
    s_critical = critical_coupling_scan(template, h_ext, s_lo, s_hi, tol, relax)
    return CriticalCouplingResult(h_ext=h_ext, s_critical=s_critical, s_lo=s_lo, s_hi=s_hi, tol=tol)


def critical_coupling_curve(
    template: ModelParams,
    h_values: Sequence[float],
    s_lo: float,
    s_hi: float,
    tol: float = 0.02,
    relax: RelaxationSettings = RelaxationSettings(),
    workers: Optional[int] = None
) -> List[CriticalCouplingResult]:
    """s*(h_ext) for each field; independent scans run in separate worker processes"""
    workers = max(1, min(workers or settings.threads, len(h_values)))
    if workers == 1:
        return [_scan_one(template, h, s_lo, s_hi, tol, relax) for h in h_values]

    logger.info(f"Scanning {len(h_values)} fields on {workers} workers")
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_scan_one, template, h, s_lo, s_hi, tol, relax) for h in h_values]
        return [future.result() for future in futures]


def _energy_point(params: ModelParams, h_ext: float, relax: RelaxationSettings) -> FieldEnergyPoint:
    report = relax_with_settings(params, h_ext, relax)
    return FieldEnergyPoint(
        h_ext=h_ext,
        steady=report.steady,
        winding=report.census.net_winding,
        phi=trapped_flux(report.final_state),
        **report.energies.model_dump(),
    )


def relaxation_curve(
    params: ModelParams,
    h_values: Sequence[float],
    relax: RelaxationSettings = RelaxationSettings(),
    workers: Optional[int] = None
) -> List[FieldEnergyPoint]:
    """
    Relaxed energy, flux and winding versus applied field.

    Every field starts from a fresh vacuum with the same seed, so points are
    independent and run in separate worker processes.
    """
    require_valid(params)
    workers = max(1, min(workers or settings.threads, len(h_values)))
    if workers == 1:
        return [_energy_point(params, h, relax) for h in h_values]

    logger.info(f"Relaxing at {len(h_values)} fields on {workers} workers")
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_energy_point, params, h, relax) for h in h_values]
        return [future.result() for future in futures]


def is_nonincreasing(values: Sequence[float]) -> bool:
    return all(later <= earlier for earlier, later in zip(values, values[1:]))
