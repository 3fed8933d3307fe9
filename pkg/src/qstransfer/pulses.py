"""Piecewise-constant control schedules for the transfer protocols.

A schedule is an ordered list of segments tiling [0, T] with no gaps
or overlaps.  Each segment carries values for the three external
controls Delta_qc, Omega_gi, Omega_rs (rad/s).  Between pulses the
qubit is parked at a large detuning rather than left resonant.

Schedules serialize to plain text, one segment per line:
``t_start duration Delta_qc Omega_gi Omega_rs`` with times in seconds
and rates in ordinary Hz (value / 2 pi).  Parsing multiplies back by
2 pi; the conversion costs at most one unit in the last place, and
serialize(parse(text)) == text exactly.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import ScheduleError
from .model import SystemParams

TWO_PI = 2.0 * math.pi
SCHEDULE_CONTROLS = ("Delta_qc", "Omega_gi", "Omega_rs")
DEFAULT_PARK_RATIO = 10.0


def _checked_controls(controls: Mapping[str, float]) -> dict[str, float]:
    unknown = sorted(set(controls) - set(SCHEDULE_CONTROLS))
    if unknown:
        raise ScheduleError(f"unknown control label(s) {unknown}; "
                            f"expected {SCHEDULE_CONTROLS}")
    out = {}
    for label in SCHEDULE_CONTROLS:
        value = float(controls.get(label, 0.0))
        if not math.isfinite(value):
            raise ScheduleError(f"control {label} must be finite, got {value}")
        out[label] = value
    return out


@dataclass(frozen=True)
class PulseSegment:
    """One constant-control interval [t_start, t_start + duration)."""

    t_start: float
    duration: float
    controls: Mapping[str, float]

    def __post_init__(self):
        if not (self.duration > 0 and math.isfinite(self.duration)):
            raise ScheduleError(f"segment duration must be positive and finite, "
                                f"got {self.duration}")
        if self.t_start < 0 or not math.isfinite(self.t_start):
            raise ScheduleError(f"segment start must be >= 0, got {self.t_start}")
        object.__setattr__(self, "controls", _checked_controls(self.controls))

    @property
    def t_end(self) -> float:
        return self.t_start + self.duration


class PulseSchedule:
    """Contiguous, ordered segments tiling [0, T]."""

    def __init__(self, segments: Iterable[PulseSegment]):
        segs = tuple(segments)
        if not segs:
            raise ScheduleError("schedule needs at least one segment")
        if segs[0].t_start != 0.0:
            raise ScheduleError(
                f"first segment must start at t = 0, got {segs[0].t_start}")
        for prev, nxt in zip(segs, segs[1:]):
            if nxt.t_start != prev.t_end:
                raise ScheduleError(
                    f"segments must tile contiguously: segment ending at "
                    f"{prev.t_end!r} followed by one starting at {nxt.t_start!r}")
        self._segments = segs
        self._starts = [s.t_start for s in segs]

    @classmethod
    def from_durations(cls, steps: Sequence[tuple[float, Mapping[str, float]]]
                       ) -> "PulseSchedule":
        """Build from (duration, controls) pairs; starts are running sums."""
        segments = []
        t = 0.0
        for duration, controls in steps:
            segments.append(PulseSegment(t, duration, controls))
            t = segments[-1].t_end
        return cls(segments)

    @property
    def segments(self) -> tuple[PulseSegment, ...]:
        return self._segments

    @property
    def duration(self) -> float:
        return self._segments[-1].t_end

    @property
    def boundaries(self) -> tuple[float, ...]:
        return tuple(self._starts) + (self.duration,)

    def __len__(self) -> int:
        return len(self._segments)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PulseSchedule):
            return NotImplemented
        return [(s.t_start, s.duration, s.controls) for s in self._segments] == \
               [(s.t_start, s.duration, s.controls) for s in other._segments]

    def segment_at(self, t: float) -> PulseSegment:
        """Segment containing t; intervals are right-open, t = T maps to the last."""
        if not 0.0 <= t <= self.duration:
            raise ScheduleError(
                f"t = {t} outside the schedule span [0, {self.duration}]")
        if t == self.duration:
            return self._segments[-1]
        idx = bisect.bisect_right(self._starts, t) - 1
        return self._segments[idx]

    def controls_at(self, t: float) -> Mapping[str, float]:
        return self.segment_at(t).controls

    def then(self, other: "PulseSchedule") -> "PulseSchedule":
        """Concatenate, shifting the other schedule to start at this one's end."""
        steps = [(s.duration, s.controls) for s in self._segments]
        steps += [(s.duration, s.controls) for s in other._segments]
        return PulseSchedule.from_durations(steps)

    def serialize(self) -> str:
        lines = ["# t_start duration Delta_qc Omega_gi Omega_rs  (s, s, Hz, Hz, Hz)"]
        for s in self._segments:
            cols = [repr(s.t_start), repr(s.duration)]
            cols += [repr(s.controls[k] / TWO_PI) for k in SCHEDULE_CONTROLS]
            lines.append(" ".join(cols))
        return "\n".join(lines) + "\n"


def parse_schedule(text: str) -> PulseSchedule:
    """Inverse of PulseSchedule.serialize; ignores blank and # lines."""
    steps = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ScheduleError(
                f"line {lineno}: expected 5 columns "
                f"(t_start duration Delta_qc Omega_gi Omega_rs), got {len(parts)}")
        try:
            values = [float(p) for p in parts]
        except ValueError as exc:
            raise ScheduleError(f"line {lineno}: {exc}") from None
        controls = dict(zip(SCHEDULE_CONTROLS, (TWO_PI * v for v in values[2:])))
        steps.append(PulseSegment(values[0], values[1], controls))
    return PulseSchedule(steps)


def _rate_or_error(name: str, rate: float) -> float:
    if rate <= 0:
        raise ScheduleError(
            f"{name} = {rate} gives an unbounded segment duration; "
            "the swap rate must be positive")
    return 0.5 * math.pi / rate


def _with_ramps(steps: list[tuple[float, dict[str, float]]], ramp_time: float,
                ramp_steps: int) -> list[tuple[float, dict[str, float]]]:
    """Approximate linear drive ramps by staircases of constant sub-segments.

    Only the optical drives ramp; Delta_qc steps are instantaneous
    flux jumps.  Each driven segment loses ramp_time at both ends to
    the staircase, so its total duration is unchanged.
    """
    if ramp_steps < 1:
        raise ScheduleError(f"ramp_steps must be >= 1, got {ramp_steps}")
    out: list[tuple[float, dict[str, float]]] = []
    for duration, controls in steps:
        driven = [k for k in ("Omega_gi", "Omega_rs") if controls.get(k, 0.0) != 0.0]
        if not driven or ramp_time == 0.0:
            out.append((duration, controls))
            continue
        if 2.0 * ramp_time >= duration:
            raise ScheduleError(
                f"ramp time {ramp_time} too long for a {duration} s segment")
        dt = ramp_time / ramp_steps
        for j in range(ramp_steps):        # rising staircase, midpoint values
            frac = (j + 0.5) / ramp_steps
            sub = dict(controls)
            for k in driven:
                sub[k] = controls[k] * frac
            out.append((dt, sub))
        out.append((duration - 2.0 * ramp_time, dict(controls)))
        for j in reversed(range(ramp_steps)):
            frac = (j + 0.5) / ramp_steps
            sub = dict(controls)
            for k in driven:
                sub[k] = controls[k] * frac
            out.append((dt, sub))
    return out


def _three_steps(params: SystemParams, park_ratio: float
                 ) -> list[tuple[float, dict[str, float]]]:
    tau_qc = _rate_or_error("eta_qc", params.eta_qc)
    if params.delta == 0:
        raise ScheduleError("ladder detuning Delta = 0 has no dispersive "
                            "transfer rate; set delta_ig = -Delta")
    rate_gr = params.root_n * params.omega_gi * params.eta_ac / params.delta
    tau_gr = _rate_or_error("sqrt(N) Omega_gi eta_ac / Delta", rate_gr)
    tau_rs = _rate_or_error("Omega_rs", params.omega_rs)
    park = park_ratio * params.eta_qc
    return [
        (tau_qc, {"Delta_qc": 0.0, "Omega_gi": 0.0, "Omega_rs": 0.0}),
        (tau_gr, {"Delta_qc": park, "Omega_gi": params.omega_gi, "Omega_rs": 0.0}),
        (tau_rs, {"Delta_qc": park, "Omega_gi": 0.0, "Omega_rs": params.omega_rs}),
    ]


def three_step_protocol(params: SystemParams,
                        park_ratio: float = DEFAULT_PARK_RATIO,
                        ramp_time: float = 0.0, ramp_steps: int = 8,
                        gap: float = 0.0) -> PulseSchedule:
    """Canonical storage sequence: qubit->cavity, cavity->r, r->s.

    Durations are pi-pulse times computed from params: pi/(2 eta_qc),
    pi/(2 sqrt(N) Omega_gi eta_ac / Delta), pi/(2 Omega_rs).  ``gap``
    inserts idle parked segments between pulses; ``ramp_time`` turns
    the drive edges into staircase ramps.
    """
    steps = _three_steps(params, park_ratio)
    if gap > 0.0:
        park = park_ratio * params.eta_qc
        idle = {"Delta_qc": park, "Omega_gi": 0.0, "Omega_rs": 0.0}
        steps = [steps[0], (gap, idle), steps[1], (gap, idle), steps[2]]
    steps = _with_ramps(steps, ramp_time, ramp_steps)
    return PulseSchedule.from_durations(steps)


def reverse_protocol(params: SystemParams,
                     park_ratio: float = DEFAULT_PARK_RATIO,
                     ramp_time: float = 0.0, ramp_steps: int = 8,
                     gap: float = 0.0) -> PulseSchedule:
    """Retrieval sequence: the three steps in reverse order, same durations."""
    steps = list(reversed(_three_steps(params, park_ratio)))
    if gap > 0.0:
        park = park_ratio * params.eta_qc
        idle = {"Delta_qc": park, "Omega_gi": 0.0, "Omega_rs": 0.0}
        steps = [steps[0], (gap, idle), steps[1], (gap, idle), steps[2]]
    steps = _with_ramps(steps, ramp_time, ramp_steps)
    return PulseSchedule.from_durations(steps)


def magnetic_protocol(params: SystemParams,
                      park_ratio: float = DEFAULT_PARK_RATIO) -> PulseSchedule:
    """Two-step direct scheme: qubit->cavity swap, then the slow
    cavity->storage swap of duration pi/(2 sqrt(N) eta_ac)."""
    tau_qc = _rate_or_error("eta_qc", params.eta_qc)
    tau_sg = _rate_or_error("sqrt(N) eta_ac", params.root_n * params.eta_ac)
    park = park_ratio * params.eta_qc
    return PulseSchedule.from_durations([
        (tau_qc, {"Delta_qc": 0.0, "Omega_gi": 0.0, "Omega_rs": 0.0}),
        (tau_sg, {"Delta_qc": park, "Omega_gi": 0.0, "Omega_rs": 0.0}),
    ])


def dispersive_protocol(params: SystemParams) -> PulseSchedule:
    """Single segment covering the cavity-eliminated qubit-storage swap."""
    if params.delta_qc == 0:
        raise ScheduleError("dispersive swap needs delta_qc != 0")
    rate = params.root_n * params.eta_qc * params.eta_ac / abs(params.delta_qc)
    tau = _rate_or_error("sqrt(N) eta_qc eta_ac / Delta_qc", rate)
    return PulseSchedule.from_durations([
        (tau, {"Delta_qc": params.delta_qc, "Omega_gi": 0.0, "Omega_rs": 0.0}),
    ])


def hold(duration: float, park: float) -> PulseSchedule:
    """Idle schedule with the qubit parked and all drives off."""
    return PulseSchedule.from_durations([
        (duration, {"Delta_qc": park, "Omega_gi": 0.0, "Omega_rs": 0.0}),
    ])
