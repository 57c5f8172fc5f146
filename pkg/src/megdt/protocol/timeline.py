"""Run metrics and timeline bookkeeping shared by all mechanisms."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..core import DistortionReport
from ..errors import MegdtError


class TimelineError(MegdtError, RuntimeError):
    pass


@dataclass(frozen=True)
class RunMetrics:
    t_tx_s: float
    t_compute_s: float
    t_e2e_s: float
    payload_bits_ul: int
    payload_bits_dl: int
    distortion: DistortionReport
    timeline: tuple[tuple[str, float], ...]
    # mechanism-specific extras: per-side distortions, flags, counters
    extra: dict = field(default_factory=dict, compare=False)
    # decoded tensors some invariants need (PEU shared view, multi-user fusion)
    artifacts: dict = field(default_factory=dict, compare=False, repr=False)


class Timeline:
    """Collects ``(event, completion time)`` pairs and totals airtime/compute."""

    def __init__(self):
        self.events: list[tuple[str, float]] = []
        self.tx = 0.0
        self.compute = 0.0

    def mark(self, name: str, t: float) -> float:
        self.events.append((name, t))
        return t

    def transfer(self, name: str, start: float, airtime: float) -> float:
        self.tx += airtime
        return self.mark(name, start + airtime)

    def work(self, name: str, start: float, seconds: float) -> float:
        self.compute += seconds
        return self.mark(name, start + seconds)

    def ordered(self) -> tuple[tuple[str, float], ...]:
        # stable: simultaneous events keep the order they were recorded in
        return tuple(sorted(self.events, key=lambda e: e[1]))

    def finish(self, distortion: DistortionReport, bits_ul: int, bits_dl: int, **kw) -> RunMetrics:
        events = self.ordered()
        m = RunMetrics(
            t_tx_s=self.tx,
            t_compute_s=self.compute,
            t_e2e_s=events[-1][1] if events else 0.0,
            payload_bits_ul=int(bits_ul),
            payload_bits_dl=int(bits_dl),
            distortion=distortion,
            timeline=events,
            **kw,
        )
        audit_timeline(m)
        return m


def audit_timeline(m: RunMetrics, sequential: bool = False) -> None:
    """Raise :class:`TimelineError` unless ``m``'s timeline is causally consistent."""
    times = [t for _, t in m.timeline]
    if any(not math.isfinite(t) or t < 0 for t in times):
        raise TimelineError(f"timeline has negative or non-finite timestamps: {m.timeline}")
    if any(b < a for a, b in zip(times, times[1:])):
        raise TimelineError(f"timeline is not ordered: {m.timeline}")
    final = times[-1] if times else 0.0
    if m.t_e2e_s != final or (times and m.t_e2e_s != max(times)):
        raise TimelineError(f"t_e2e_s={m.t_e2e_s} but the last event completes at {final}")
    if sequential and (m.t_e2e_s < m.t_tx_s or m.t_e2e_s < m.t_compute_s):
        raise TimelineError("sequential run finished before its own transmissions or compute")
