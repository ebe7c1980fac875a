from typing import List, Optional


class QmsError(Exception):
    """Base class for all simulation errors"""


class ParameterValidationError(QmsError):
    def __init__(self, violations: List[str]):
        self.violations = list(violations)
        super().__init__("invalid parameters: " + "; ".join(self.violations))


class IntegrationBlowupError(QmsError):
    """
    Raised when the integrator produces a non-finite value or is asked to step
    outside the RK4 stability region.

    Protocols re-raise it with the sweep location (cycle, h_ext) attached.
    """

    def __init__(
        self,
        site: int,
        tau: float,
        cycle: Optional[int] = None,
        h_ext: Optional[float] = None,
        reason: str = "non-finite value"
    ):
        self.site = site
        self.tau = tau
        self.cycle = cycle
        self.h_ext = h_ext
        self.reason = reason
        message = f"integration blew up at site {site}, tau={tau:.6g} ({reason})"
        if cycle is not None:
            message += f", cycle={cycle}"
        if h_ext is not None:
            message += f", h_ext={h_ext:.6g}"
        super().__init__(message)

    def located(self, cycle: int, h_ext: float) -> "IntegrationBlowupError":
        return IntegrationBlowupError(self.site, self.tau, cycle=cycle, h_ext=h_ext, reason=self.reason)


class BracketError(QmsError):
    pass


class TooFewCyclesError(QmsError):
    pass


class ConfigError(QmsError):
    def __init__(
        self,
        violations: List[str],
        line: Optional[int] = None,
        column: Optional[int] = None
    ):
        self.violations = list(violations)
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__("configuration error" + where + ": " + "; ".join(self.violations))


class RecordError(QmsError):
    pass
