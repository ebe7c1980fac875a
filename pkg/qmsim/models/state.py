from typing import Any, Dict
import numpy as np
from pydantic import BaseModel, ConfigDict, field_serializer, field_validator


def _complex_from_json(value: Any) -> np.ndarray:
    if isinstance(value, dict):
        return np.asarray(value["real"], dtype=np.float64) + 1j * np.asarray(value["imag"], dtype=np.float64)
    return np.asarray(value, dtype=np.complex128)


def _complex_to_json(value: np.ndarray) -> Dict[str, list]:
    return {"real": value.real.tolist(), "imag": value.imag.tolist()}


class FieldState(BaseModel):
    """Vector potential a_{z,n} (radians-like, unbounded) and its velocity"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    a: np.ndarray
    v: np.ndarray

    @field_validator("a", "v", mode="before")
    @classmethod
    def _as_real(cls, value: Any) -> np.ndarray:
        return np.array(value, dtype=np.float64)

    @field_serializer("a", "v")
    def _dump_real(self, value: np.ndarray) -> list:
        return value.tolist()


class QubitAmplitudes(BaseModel):
    """Interaction-picture amplitudes C_0^n, C_1^n of the factorized qubit state"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    c0: np.ndarray
    c1: np.ndarray

    @field_validator("c0", "c1", mode="before")
    @classmethod
    def _as_complex(cls, value: Any) -> np.ndarray:
        return np.array(_complex_from_json(value), dtype=np.complex128)

    @field_serializer("c0", "c1")
    def _dump_complex(self, value: np.ndarray) -> Dict[str, list]:
        return _complex_to_json(value)

    def norms(self) -> np.ndarray:
        return np.abs(self.c0) ** 2 + np.abs(self.c1) ** 2


class SystemState(BaseModel):
    tau: float = 0.0
    h_ext: float = 0.0
    field: FieldState
    qubits: QubitAmplitudes

    @property
    def n_sites(self) -> int:
        return int(self.field.a.shape[0])

    def copy_state(self) -> "SystemState":
        return SystemState(
            tau=self.tau,
            h_ext=self.h_ext,
            field=FieldState(a=self.field.a.copy(), v=self.field.v.copy()),
            qubits=QubitAmplitudes(c0=self.qubits.c0.copy(), c1=self.qubits.c1.copy()),
        )

    def bit_identical(self, other: "SystemState") -> bool:
        return (
            self.tau == other.tau
            and self.h_ext == other.h_ext
            and np.array_equal(self.field.a, other.field.a)
            and np.array_equal(self.field.v, other.field.v)
            and np.array_equal(self.qubits.c0, other.qubits.c0)
            and np.array_equal(self.qubits.c1, other.qubits.c1)
        )
