import pytest
from pathlib import Path
import sys
import os

# Add parent directory to path for imports
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from models import ModelParams, SweepRecord, SweepRow, TransitionEvent
from core.lattice import init_vacuum

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture
def qs_params():
    """Quasi-superradiant parameter set (N=400, s=1)"""
    return ModelParams()


@pytest.fixture
def small_params():
    """Short noiseless line with live qubits"""
    return ModelParams(n_sites=16, noise_amp=0.0)


@pytest.fixture
def classical_params():
    """Qubits frozen at V=1: plain damped sine-Gordon"""
    return ModelParams(n_sites=32, noise_amp=0.0, frozen_v=1.0)


@pytest.fixture
def vacuum(small_params):
    return init_vacuum(small_params)


@pytest.fixture(scope="session")
def config_dir():
    return CONFIG_DIR


def _row(tau, h_ext, phi, cycle):
    return SweepRow(
        tau=tau,
        h_ext=h_ext,
        phi=phi,
        winding=int(round(phi)),
        e_field=1.0 + tau,
        e_int=-0.5,
        e_qubit=0.25,
        e_total=0.75 + tau,
        q_conserved=0.5 + tau,
        max_excitation=0.01 * cycle,
        cycle=cycle,
    )


@pytest.fixture
def three_row_record():
    """Minimal record with one transition"""
    rows = [
        _row(0.0, 0.0, 0.0, 0),
        _row(1.0, 0.1, 0.123456789012345678, 0),
        _row(2.0, 0.2, 1.0000000000000002, 0),
    ]
    events = [
        TransitionEvent(tau=2.0, h_ext=0.2, winding_before=0, winding_after=1,
                        phi_before=0.123456789012345678, phi_after=1.0000000000000002)
    ]
    return SweepRecord(rows=rows, events=events)


def _loop_phi(h, descending, offset=0.0):
    # Square hysteresis: +1 flux quantum above h=-0.5 on the way down, below h=0.5 on the way up
    if descending:
        return (1.0 if h > -0.5 else -1.0) + offset
    return (-1.0 if h < 0.5 else 1.0) + offset


@pytest.fixture
def loop_record_factory():
    """
    Synthetic sweep: virgin ramp 0 -> 1 (cycle 0) then n_cycles of 1 -> -1 -> 1,
    with a square loop switching at +-0.5 and an optional per-cycle phi offset.
    """
    def build(n_cycles=3, offsets=None, points=41):
        offsets = offsets or [0.0] * n_cycles
        rows = []
        tau = 0.0
        for k in range(points):
            h = k / (points - 1)
            rows.append(_row(tau, h, 0.0 if h < 0.5 else 1.0, 0))
            tau += 1.0
        for cycle in range(1, n_cycles + 1):
            offset = offsets[cycle - 1]
            for k in range(1, 2 * points - 1):
                h = 1.0 - 2.0 * k / (2 * points - 2)
                rows.append(_row(tau, h, _loop_phi(h, True, offset), cycle))
                tau += 1.0
            for k in range(1, 2 * points - 1):
                h = -1.0 + 2.0 * k / (2 * points - 2)
                rows.append(_row(tau, h, _loop_phi(h, False, offset), cycle))
                tau += 1.0
        return SweepRecord(rows=rows, events=[])
    return build
