from typing import List, NamedTuple
import bisect

from models import SweepProtocol


class Segment(NamedTuple):
    tau_start: float
    tau_end: float
    h_start: float
    h_end: float
    cycle: int

    def h_at(self, tau: float) -> float:
        if self.tau_end <= self.tau_start:
            return self.h_end
        fraction = (tau - self.tau_start) / (self.tau_end - self.tau_start)
        return self.h_start + (self.h_end - self.h_start) * min(max(fraction, 0.0), 1.0)


class SweepSchedule:
    """
    Piecewise-linear H_ext(tau): hold at zero for settle_tau, virgin ramp to
    the first turning field, then n_cycles full loops at |dH/dtau| = rate.

    Cycle 0 is the settle + virgin part; loops are numbered from 1.
    """

    def __init__(self, protocol: SweepProtocol, tau0: float = 0.0):
        self.protocol = protocol
        self.tau0 = tau0
        self.segments: List[Segment] = []

        if protocol.virgin_direction == "up":
            first, second = protocol.h_max, protocol.h_min
        else:
            first, second = protocol.h_min, protocol.h_max

        tau = tau0
        if protocol.settle_tau > 0:
            tau = self._add(tau, 0.0, 0.0, 0, duration=protocol.settle_tau)
        tau = self._add(tau, 0.0, first, 0)
        for cycle in range(1, protocol.n_cycles + 1):
            tau = self._add(tau, first, second, cycle)
            tau = self._add(tau, second, first, cycle)

        self._starts = [segment.tau_start for segment in self.segments]

    def _add(self, tau: float, h_start: float, h_end: float, cycle: int, duration: float = None) -> float:
        if duration is None:
            duration = abs(h_end - h_start) / self.protocol.rate
        self.segments.append(Segment(tau, tau + duration, h_start, h_end, cycle))
        return tau + duration

    @property
    def duration(self) -> float:
        return self.segments[-1].tau_end - self.tau0

    def segment_at(self, tau: float) -> Segment:
        index = bisect.bisect_right(self._starts, tau) - 1
        return self.segments[min(max(index, 0), len(self.segments) - 1)]

    def h_at(self, tau: float) -> float:
        return self.segment_at(tau).h_at(tau)

    def cycle_at(self, tau: float) -> int:
        return self.segment_at(tau).cycle

    def __call__(self, tau: float) -> float:
        return self.h_at(tau)
