from typing import Callable, Optional, Tuple
import cmath
import math
import logging
import numpy as np
from pydantic import BaseModel, ConfigDict

from models import ModelParams, SystemState, FieldState, QubitAmplitudes
from core.config import settings
from core.errors import IntegrationBlowupError

logger = logging.getLogger(__name__)

# Rows of the packed (4, N) complex state; a and v carry zero imaginary parts
A, V, C0, C1 = 0, 1, 2, 3

# RK4 stability interval on the imaginary axis
RK4_STABILITY_LIMIT = 2.0 * math.sqrt(2.0)

Schedule = Callable[[float], float]
Observer = Callable[[SystemState, int], Optional[bool]]


class Derivative(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    da: np.ndarray
    dv: np.ndarray
    dc0: np.ndarray
    dc1: np.ndarray


def ghost_cells(a: np.ndarray, h_ext: float, l: float) -> Tuple[float, float]:
    """a_{-1} and a_N such that both edge gradients equal h_ext"""
    return a[0] - l * h_ext, a[-1] + l * h_ext


def laplacian(a: np.ndarray, h_ext: float, l: float) -> np.ndarray:
    """Discrete a_{n+1} + a_{n-1} - 2a_n with the ghost cells folded into the edges"""
    lap = np.empty_like(a)
    lap[1:-1] = a[2:] + a[:-2] - 2.0 * a[1:-1]
    lap[0] = a[1] - a[0] - l * h_ext
    lap[-1] = a[-2] - a[-1] + l * h_ext
    return lap


def _phase(params: ModelParams, tau: float) -> complex:
    return cmath.exp(-1j * params.rotation_rate * tau)


def _coupling(c0: np.ndarray, c1: np.ndarray, phase: complex, params: ModelParams) -> np.ndarray:
    if params.frozen_v is not None:
        return np.full(c0.shape, params.frozen_v, dtype=np.float64)
    return 2.0 * (np.conj(c0) * c1 * phase).real


def _acceleration(
    a: np.ndarray,
    v: np.ndarray,
    v_n: np.ndarray,
    h_ext: float,
    params: ModelParams
) -> np.ndarray:
    stiffness = params.beta ** 2 / params.l ** 2
    return stiffness * laplacian(a, h_ext, params.l) - v_n * np.sin(a) - params.gamma * v


def coupling_v(state: SystemState, params: ModelParams) -> np.ndarray:
    """Effective critical current V_n = 2 Re(c0* c1 exp(-i s eps tau)), or frozen_v"""
    return _coupling(state.qubits.c0, state.qubits.c1, _phase(params, state.tau), params)


def qubit_derivatives(state: SystemState, params: ModelParams) -> Tuple[np.ndarray, np.ndarray]:
    c0, c1 = state.qubits.c0, state.qubits.c1
    if params.frozen_v is not None:
        return np.zeros_like(c0), np.zeros_like(c1)

    phase = _phase(params, state.tau)
    drive = -1j * params.s * (1.0 - np.cos(state.field.a))
    return drive * c1 * phase, drive * c0 * phase.conjugate()


def field_acceleration(state: SystemState, params: ModelParams, v_n: np.ndarray) -> np.ndarray:
    return _acceleration(state.field.a, state.field.v, v_n, state.h_ext, params)


def derivative(state: SystemState, params: ModelParams) -> Derivative:
    dc0, dc1 = qubit_derivatives(state, params)
    return Derivative(
        da=state.field.v.copy(),
        dv=field_acceleration(state, params, coupling_v(state, params)),
        dc0=dc0,
        dc1=dc1,
    )


def pack(state: SystemState) -> np.ndarray:
    y = np.empty((4, state.n_sites), dtype=np.complex128)
    y[A] = state.field.a
    y[V] = state.field.v
    y[C0] = state.qubits.c0
    y[C1] = state.qubits.c1
    return y


def unpack(y: np.ndarray, tau: float, h_ext: float) -> SystemState:
    return SystemState(
        tau=tau,
        h_ext=h_ext,
        field=FieldState(a=y[A].real, v=y[V].real),
        qubits=QubitAmplitudes(c0=y[C0], c1=y[C1]),
    )


def packed_rhs(y: np.ndarray, tau: float, h_ext: float, params: ModelParams) -> np.ndarray:
    a = y[A].real
    v = y[V].real
    c0 = y[C0]
    c1 = y[C1]
    phase = _phase(params, tau)

    out = np.empty_like(y)
    out[A] = v
    if params.frozen_v is None:
        drive = -1j * params.s * (1.0 - np.cos(a))
        out[C0] = drive * c1 * phase
        out[C1] = drive * c0 * phase.conjugate()
    else:
        out[C0] = 0.0
        out[C1] = 0.0
    out[V] = _acceleration(a, v, _coupling(c0, c1, phase, params), h_ext, params)
    return out


def packed_rk4(y: np.ndarray, tau: float, h_ext: float, params: ModelParams) -> np.ndarray:
    """Classical RK4 over (a, v, c0, c1) with h_ext held over the step; raises on non-finite output"""
    dt = params.dt
    half = 0.5 * dt

    k1 = packed_rhs(y, tau, h_ext, params)
    k2 = packed_rhs(y + half * k1, tau + half, h_ext, params)
    k3 = packed_rhs(y + half * k2, tau + half, h_ext, params)
    k4 = packed_rhs(y + dt * k3, tau + dt, h_ext, params)
    y_next = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    if not np.isfinite(y_next).all():
        site = int(np.argwhere(~np.isfinite(y_next))[0][1])
        raise IntegrationBlowupError(site=site, tau=tau + dt)
    return y_next


def unstable_site(y: np.ndarray, params: ModelParams) -> Optional[int]:
    """
    First site whose linearized frequency sqrt(|V_n| + 4 beta^2/l^2) puts dt*omega
    outside the RK4 stability interval, or None.

    Sites couple only to neighbours, so the local bound is the Gershgorin one.
    """
    if params.frozen_v is not None:
        v_n = np.full(y.shape[1], abs(params.frozen_v))
    else:
        # |V_n| <= 2|c0||c1| <= |c0|^2 + |c1|^2
        v_n = np.abs(y[C0]) ** 2 + np.abs(y[C1]) ** 2
    omega = np.sqrt(v_n + 4.0 * params.beta ** 2 / params.l ** 2)
    unstable = np.flatnonzero(params.dt * omega > RK4_STABILITY_LIMIT)
    return int(unstable[0]) if unstable.size else None


def rk4_step(state: SystemState, params: ModelParams) -> SystemState:
    y_next = packed_rk4(pack(state), state.tau, state.h_ext, params)
    return unpack(y_next, state.tau + params.dt, state.h_ext)


def noise_kick(params: ModelParams, rng: np.random.Generator) -> Optional[np.ndarray]:
    if params.noise_amp <= 0:
        return None
    return params.noise_amp * math.sqrt(params.dt) * rng.standard_normal(params.n_sites)


def apply_noise(state: SystemState, params: ModelParams, rng: np.random.Generator) -> SystemState:
    """Euler-Maruyama velocity kick v_n += noise_amp*sqrt(dt)*xi_n"""
    kick = noise_kick(params, rng)
    result = state.copy_state()
    if kick is not None:
        result.field.v = result.field.v + kick
    return result


class LatticeIntegrator:
    """
    Advances one trajectory: RK4 step, additive noise on v, amplitude renormalization.

    Owns its generator, so independent integrators never share mutable state.
    """

    def __init__(
        self,
        params: ModelParams,
        state: SystemState,
        rng: Optional[np.random.Generator] = None,
        norm_tol: Optional[float] = None
    ):
        self.params = params
        self.y = pack(state)
        self.tau0 = state.tau
        self.h_ext = state.h_ext
        self.steps = 0
        self.rng = rng if rng is not None else np.random.default_rng(params.rng_seed)
        self.norm_tol = norm_tol if norm_tol is not None else settings.norm_tol
        self.renormalizations = 0

    @property
    def tau(self) -> float:
        return self.tau0 + self.steps * self.params.dt

    def state(self) -> SystemState:
        return unpack(self.y, self.tau, self.h_ext)

    def step(self, h_ext: float) -> None:
        site = unstable_site(self.y, self.params)
        if site is not None:
            raise IntegrationBlowupError(
                site=site, tau=self.tau + self.params.dt, reason="dt exceeds the RK4 linear stability bound"
            )
        self.h_ext = h_ext
        self.y = packed_rk4(self.y, self.tau, h_ext, self.params)
        self.steps += 1

        kick = noise_kick(self.params, self.rng)
        if kick is not None:
            self.y[V] += kick

        if self.params.frozen_v is None:
            self._renormalize()

    def _renormalize(self) -> None:
        c0 = self.y[C0]
        c1 = self.y[C1]
        norms = c0.real ** 2 + c0.imag ** 2 + c1.real ** 2 + c1.imag ** 2
        drift = float(np.max(np.abs(norms - 1.0)))
        if drift > self.norm_tol:
            scale = 1.0 / np.sqrt(norms)
            self.y[C0] *= scale
            self.y[C1] *= scale
            self.renormalizations += 1
            logger.warning(f"Renormalized qubit amplitudes at tau={self.tau:.4f} (norm drift {drift:.3e})")

    def run(
        self,
        duration: float,
        h_schedule: Optional[Schedule] = None,
        observer: Optional[Observer] = None,
        record_stride: int = 1
    ) -> int:
        """
        Step until tau has advanced by duration or the observer asks to stop.

        Returns:
            Number of steps taken
        """
        n_steps = max(0, math.ceil(duration / self.params.dt - 1e-9))
        start = self.steps
        for _ in range(n_steps):
            h = h_schedule(self.tau) if h_schedule is not None else self.h_ext
            self.step(h)
            if observer is not None and (self.steps - start) % record_stride == 0:
                if observer(self.state(), self.steps):
                    break
        return self.steps - start


def evolve(
    state: SystemState,
    params: ModelParams,
    duration: float,
    h_schedule: Optional[Schedule] = None,
    observer: Optional[Observer] = None,
    record_stride: int = 1,
    rng: Optional[np.random.Generator] = None
) -> SystemState:
    if duration < 0:
        raise ValueError(f"duration must be >= 0, got {duration}")
    if duration == 0:
        return state

    integrator = LatticeIntegrator(params, state, rng=rng)
    integrator.run(duration, h_schedule, observer, record_stride)
    return integrator.state()
