from typing import List, Optional, Sequence
import math
import logging
import numpy as np

from models import ModelParams, SystemState, FieldState, QubitAmplitudes, DT_STABILITY_LIMIT
from core.errors import ParameterValidationError

logger = logging.getLogger(__name__)

MAX_SEED = 2 ** 64


def validate(params: ModelParams) -> List[str]:
    """
    Check every bound on ModelParams.

    Returns:
        One message per violated bound, empty when params are valid
    """
    violations = []

    if params.n_sites < 3:
        violations.append("n_sites must be ≥ 3")
    for name in ("s", "beta", "epsilon", "l", "dt"):
        if not getattr(params, name) > 0:
            violations.append(f"{name} must be > 0")
    for name in ("gamma", "noise_amp"):
        if not getattr(params, name) >= 0:
            violations.append(f"{name} must be ≥ 0")
    if params.dt > DT_STABILITY_LIMIT:
        violations.append(f"dt must be ≤ {DT_STABILITY_LIMIT}")
    if not 0 <= params.rng_seed < MAX_SEED:
        violations.append("rng_seed must be a 64-bit unsigned integer")
    if params.frozen_v is not None and not math.isfinite(params.frozen_v):
        violations.append("frozen_v must be finite")

    return violations


def require_valid(params: ModelParams) -> None:
    violations = validate(params)
    if violations:
        raise ParameterValidationError(violations)


def _assemble(a: np.ndarray, v: np.ndarray, c0: np.ndarray, c1: np.ndarray) -> SystemState:
    return SystemState(
        tau=0.0,
        h_ext=0.0,
        field=FieldState(a=a, v=v),
        qubits=QubitAmplitudes(c0=c0, c1=c1),
    )


def init_vacuum(params: ModelParams) -> SystemState:
    """Meissner vacuum: no field, every qubit in its ground state"""
    require_valid(params)
    n = params.n_sites
    return _assemble(
        np.zeros(n),
        np.zeros(n),
        np.ones(n, dtype=np.complex128),
        np.zeros(n, dtype=np.complex128),
    )


def kink_profile(
    n_sites: int,
    l: float,
    center: float,
    width: float,
    polarity: int = 1
) -> np.ndarray:
    """Continuum sine-Gordon kink 4*arctan(exp(+-(n - center)*l/width)) sampled on the sites"""
    x = (np.arange(n_sites) - center) * l / width
    return 4.0 * np.arctan(np.exp(polarity * x))


def kink_width(params: ModelParams) -> float:
    coupling = params.frozen_v if params.frozen_v is not None else 1.0
    return params.beta / math.sqrt(abs(coupling)) if coupling else params.beta


def init_kink(
    params: ModelParams,
    center: Optional[float] = None,
    polarity: int = 1,
    width: Optional[float] = None
) -> SystemState:
    """Analytic kink at rest with the qubits in the ground state"""
    state = init_vacuum(params)
    if center is None:
        center = (params.n_sites - 1) / 2.0
    state.field.a = kink_profile(
        params.n_sites, params.l, center, width or kink_width(params), polarity
    )
    return state


def cosine_mode(n_sites: int, mode: int) -> np.ndarray:
    """Eigenvector of the zero-field (Neumann) lattice Laplacian"""
    return np.cos(mode * math.pi * (np.arange(n_sites) + 0.5) / n_sites)


def init_perturbed(
    params: ModelParams,
    amplitude: float = 0.1,
    c1_amplitude: float = 0.01,
    modes: Sequence[int] = (1, 2, 3),
    seed: int = 0
) -> SystemState:
    """
    Smooth random excitation: a superposition of lattice cosine modes with
    max|a| = amplitude, and qubits carrying |c1| = c1_amplitude with random phases.
    """
    state = init_vacuum(params)
    rng = np.random.default_rng(seed)
    n = params.n_sites

    a = np.zeros(n)
    for mode in modes:
        a += rng.uniform(-1.0, 1.0) * cosine_mode(n, mode)
    peak = np.max(np.abs(a))
    if peak > 0:
        a *= amplitude / peak

    phases = rng.uniform(0.0, 2.0 * math.pi, n)
    c1 = c1_amplitude * np.exp(1j * phases)
    c0 = np.full(n, math.sqrt(1.0 - c1_amplitude ** 2), dtype=np.complex128)

    state.field.a = a
    state.qubits.c0 = c0
    state.qubits.c1 = c1
    return state


def norm_drift(state: SystemState) -> float:
    """Largest per-site deviation of |c0|^2 + |c1|^2 from one"""
    return float(np.max(np.abs(state.qubits.norms() - 1.0)))
