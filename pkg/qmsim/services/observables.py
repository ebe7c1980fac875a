from typing import List, Optional, Protocol, Sequence
import math
import logging
import numpy as np

from models import ModelParams, SystemState, EnergyBreakdown, Soliton, SolitonCensus, SweepRow
from core.lattice import kink_width
from services.dynamics import coupling_v, ghost_cells

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi


class SteadySample(Protocol):
    e_total: float
    winding: int


def local_field(state: SystemState, params: ModelParams) -> np.ndarray:
    """Magnetic field b on all N+1 links, the two ghost links included (both equal h_ext)"""
    a = state.field.a
    left, right = ghost_cells(a, state.h_ext, params.l)
    padded = np.concatenate(([left], a, [right]))
    return np.diff(padded) / params.l


def energy_breakdown(state: SystemState, params: ModelParams) -> EnergyBreakdown:
    a = state.field.a
    v = state.field.v
    links = local_field(state, params)

    e_field = float(np.sum(v * v) + params.beta ** 2 * np.sum(links * links))
    e_int = float(np.sum((1.0 - np.cos(a)) * coupling_v(state, params)))
    c1 = state.qubits.c1
    e_qubit = float(params.epsilon * np.sum(c1.real ** 2 + c1.imag ** 2))
    return EnergyBreakdown.from_terms(e_field, e_int, e_qubit)


def magnetic_enthalpy(state: SystemState, params: ModelParams) -> float:
    """
    q_conserved minus the work done through the boundaries by h_ext.

    Constant along gamma=0, noise-free trajectories at any fixed h_ext.
    """
    q = energy_breakdown(state, params).q_conserved
    span = state.field.a[-1] - state.field.a[0]
    return q - 2.0 * params.beta ** 2 * state.h_ext * span / params.l


def trapped_flux(state: SystemState) -> float:
    """Net flux in flux quanta"""
    return float((state.field.a[-1] - state.field.a[0]) / TWO_PI)


def net_winding(state: SystemState) -> int:
    return int(round(trapped_flux(state)))


def default_census_threshold(params: ModelParams) -> float:
    """Half the peak field 2/w of the analytic kink"""
    return 1.0 / kink_width(params)


def soliton_census(
    state: SystemState,
    params: ModelParams,
    threshold: Optional[float] = None
) -> SolitonCensus:
    """
    Count solitons as contiguous same-sign runs of interior links with |b| >= threshold.

    Each run yields one soliton at its |b|-weighted centroid (fractional site index).
    """
    if threshold is None:
        threshold = default_census_threshold(params)
    if threshold <= 0:
        raise ValueError(f"threshold must be > 0, got {threshold}")

    b = np.diff(state.field.a) / params.l
    last_link = len(b) - 1
    signs = np.where(np.abs(b) >= threshold, np.sign(b), 0.0).astype(int)

    solitons: List[Soliton] = []
    start = None
    for index in range(len(signs) + 1):
        current = signs[index] if index < len(signs) else 0
        if start is not None and current != signs[start]:
            solitons.append(_soliton_from_run(b, start, index - 1, last_link))
            start = None
        if start is None and current != 0:
            start = index

    return SolitonCensus(solitons=solitons, net_winding=net_winding(state))


def _soliton_from_run(b: np.ndarray, first: int, last: int, last_link: int) -> Soliton:
    strength = np.abs(b[first:last + 1])
    # Link k sits between sites k and k+1
    positions = np.arange(first, last + 1) + 0.5
    return Soliton(
        site_position=float(np.sum(positions * strength) / np.sum(strength)),
        polarity=int(np.sign(b[first])),
        peak_field=float(np.max(strength)),
        first_link=first,
        last_link=last,
        touches_boundary=first == 0 or last == last_link,
    )


def occupation_profile(state: SystemState) -> np.ndarray:
    c1 = state.qubits.c1
    return c1.real ** 2 + c1.imag ** 2


def is_steady(series: Sequence[SteadySample], window: int, tol: float) -> bool:
    """
    True iff the trailing window keeps one winding and E_total spans at most
    tol * max(1, |mean E_total|). Series shorter than the window are not steady.
    """
    if window < 1 or len(series) < window:
        return False

    tail = list(series)[-window:]
    if len({sample.winding for sample in tail}) != 1:
        return False

    totals = np.array([sample.e_total for sample in tail])
    spread = float(np.max(totals) - np.min(totals))
    return spread <= tol * max(1.0, abs(float(np.mean(totals))))


def observe(state: SystemState, params: ModelParams, cycle: int = 0) -> SweepRow:
    """One record row for the current state"""
    energies = energy_breakdown(state, params)
    phi = trapped_flux(state)
    return SweepRow(
        tau=state.tau,
        h_ext=state.h_ext,
        phi=phi,
        winding=int(round(phi)),
        e_field=energies.e_field,
        e_int=energies.e_int,
        e_qubit=energies.e_qubit,
        e_total=energies.e_total,
        q_conserved=energies.q_conserved,
        max_excitation=float(np.max(occupation_profile(state))),
        cycle=cycle,
    )
