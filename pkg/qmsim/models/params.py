from typing import Optional, Literal
import math
from pydantic import BaseModel, ConfigDict, Field, model_validator

# Parameter set quoted for the quasi-superradiant runs (400 charge qubits)
QS_PARAMETERS = {
    "n_sites": 400,
    "s": 1.0,
    "beta": 0.25,
    "epsilon": math.pi,
    "l": 0.05,
    "gamma": 0.25,
}

DT_STABILITY_LIMIT = 0.1


class ModelParams(BaseModel):
    """
    Dimensionless constants of one run.

    The physical scales (C, D, L, E_J, I_c, Phi_0, omega_J, lambda and the
    island phases phi_n) are all absorbed by the normalization
    a = pi*D*A/Phi_0, tau = omega_J*t, E = energy/E_J, l = L/lambda,
    s = E_J/(hbar*omega_J). Only the dimensionless values live here.

    Construction never rejects out-of-range values; `core.lattice.validate`
    reports every violated bound at once.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    n_sites: int = QS_PARAMETERS["n_sites"]
    s: float = QS_PARAMETERS["s"]
    beta: float = QS_PARAMETERS["beta"]
    epsilon: float = QS_PARAMETERS["epsilon"]
    l: float = QS_PARAMETERS["l"]
    gamma: float = QS_PARAMETERS["gamma"]
    dt: float = 0.01
    noise_amp: float = 1e-3
    rng_seed: int = 0
    # Pins V_n and disables the qubits (classical sine-Gordon validation mode)
    frozen_v: Optional[float] = None

    @property
    def qubits_frozen(self) -> bool:
        return self.frozen_v is not None

    @property
    def rotation_rate(self) -> float:
        """Interaction-picture phase rate s*epsilon"""
        return self.s * self.epsilon

    def with_changes(self, **changes) -> "ModelParams":
        return self.model_copy(update=changes)


class SweepProtocol(BaseModel):
    """Field-cycling protocol: settle at zero, virgin ramp, then n_cycles full loops"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    h_max: float
    h_min: float
    rate: float = Field(default=2.5e-4, gt=0)
    n_cycles: int = Field(default=3, ge=1)
    settle_tau: float = Field(default=0.0, ge=0)
    record_stride: int = Field(default=100, ge=1)
    virgin_direction: Literal["up", "down"] = "up"

    @model_validator(mode="after")
    def _check_bounds(self) -> "SweepProtocol":
        if not self.h_min < self.h_max:
            raise ValueError(f"h_min ({self.h_min}) must be < h_max ({self.h_max})")
        return self


class RelaxationSettings(BaseModel):
    """Budget and steadiness gate for relaxation at fixed field"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    max_tau: float = Field(default=5e4, gt=0)
    # Steadiness is not declared before min_tau so noise-seeded instabilities can develop
    min_tau: float = Field(default=1e3, ge=0)
    window: int = Field(default=100, ge=1)
    tol: float = Field(default=1e-4, gt=0)
    record_stride: int = Field(default=100, ge=1)
