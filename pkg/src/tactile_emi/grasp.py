"""Closed-loop grip simulation driven by the (possibly spoofed) fingertip reading.

Timeline of a scenario: the grip setpoint ramps up over ``approach_frames``
while the object still rests on the table, the object is lifted at
``lift_frame`` (gravity load appears), then the grip is held. An optional
EMI injection corrupts the reading the PI controller sees. When the reading
is suppressed the controller sees a vanishing grip, winds up, and squeezes
until the crush threshold is crossed.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .core import ForceVec, RngStream
from .emi import AttackConfig, CouplingModel, perturb_array
from .sensor import SensorModel, transduce_array

GRAVITY = 9.81
EVENT_ORDER = ("attack_on", "slip", "drop", "crush")
TRACE_COLUMNS = ["frame", "time_s", "cmd_n", "real_fx", "real_fy", "real_fz", "meas_fx", "meas_fy", "meas_fz", "events"]


@dataclass(frozen=True)
class ControllerParams:
    kp: float = 0.4
    ki: float = 0.05  # per frame
    integrator_limit: float = 1000.0  # accumulated error, N*frames
    max_grip_force: float = 100.0
    ramp_rate: float = 0.5  # N per frame

    def __post_init__(self) -> None:
        if self.kp < 0 or self.ki < 0:
            raise ValueError("controller gains must be >= 0")
        if self.integrator_limit < 0 or self.max_grip_force <= 0:
            raise ValueError("integrator_limit must be >= 0 and max_grip_force > 0")
        if not self.ramp_rate > 0:
            raise ValueError("ramp_rate must be > 0")


@dataclass(frozen=True)
class GraspScenario:
    object_mass: float = 1.0  # kg
    friction_coeff: float = 0.8
    crush_force: float = 80.0
    target_normal_force: float = 35.0
    controller: ControllerParams = ControllerParams()
    total_frames: int = 1000
    attack: AttackConfig | None = None
    seed: int = 42
    approach_frames: int = 200
    lift_frame: int = 250
    drop_latency: int = 50

    def __post_init__(self) -> None:
        if not self.friction_coeff > 0:
            raise ValueError("friction_coeff must be > 0")
        if not self.crush_force > self.target_normal_force > 0:
            raise ValueError("need crush_force > target_normal_force > 0")
        if self.total_frames <= 0:
            raise ValueError("total_frames must be > 0")
        if self.object_mass < 0 or self.approach_frames < 0 or self.lift_frame < 0 or self.drop_latency < 1:
            raise ValueError("invalid scenario timing or mass")

    def setpoint(self, frame: int) -> float:
        if self.approach_frames == 0:
            return self.target_normal_force
        return self.target_normal_force * min(1.0, frame / self.approach_frames)


@dataclass
class ControllerState:
    integrator: float = 0.0


def controller_step(
    params: ControllerParams, state: ControllerState, measured_normal: float, target: float
) -> tuple[float, ControllerState]:
    """Discrete PI around a feed-forward setpoint."""
    error = target - measured_normal
    integ = min(params.integrator_limit, max(-params.integrator_limit, state.integrator + error))
    command = target + params.kp * error + params.ki * integ
    return min(params.max_grip_force, max(0.0, command)), ControllerState(integ)


@dataclass
class EventState:
    slip_run: int = 0
    dropped: bool = False
    crushed: bool = False


def detect_events(
    scenario: GraspScenario,
    state: EventState,
    applied_grip: float,
    lifted: bool,
    attack_on: bool = False,
) -> tuple[frozenset[str], EventState]:
    """Events for one frame; drop and crush latch once fired."""
    load = scenario.object_mass * GRAVITY if lifted else 0.0
    slip = lifted and scenario.friction_coeff * applied_grip < load
    run = state.slip_run + 1 if slip else 0
    dropped = state.dropped or run >= scenario.drop_latency
    crushed = state.crushed or applied_grip >= scenario.crush_force
    events = {name for name, on in zip(EVENT_ORDER, (attack_on, slip, dropped, crushed)) if on}
    return frozenset(events), EventState(run, dropped, crushed)


@dataclass
class SimTrace:
    sample_rate: float
    commanded_grip: np.ndarray
    real_normal_force: np.ndarray
    true_force: np.ndarray  # (n, 3)
    spoofed_reading: np.ndarray  # (n, 3)
    events: list[frozenset[str]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.commanded_grip)

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self)) / self.sample_rate

    def event_mask(self, name: str) -> np.ndarray:
        return np.array([name in ev for ev in self.events])

    def first_event(self, name: str) -> int | None:
        hits = np.flatnonzero(self.event_mask(name))
        return int(hits[0]) if len(hits) else None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for i in range(len(self)):
            ev = ";".join(e for e in EVENT_ORDER if e in self.events[i])
            w.writerow(
                [
                    i,
                    repr(i / self.sample_rate),
                    repr(float(self.commanded_grip[i])),
                    *(repr(float(v)) for v in self.true_force[i]),
                    *(repr(float(v)) for v in self.spoofed_reading[i]),
                    ev,
                ]
            )
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, sample_rate: float = 1000.0) -> SimTrace:
        rows = list(csv.DictReader(io.StringIO(text)))
        true = np.array([[float(r[k]) for k in ("real_fx", "real_fy", "real_fz")] for r in rows])
        meas = np.array([[float(r[k]) for k in ("meas_fx", "meas_fy", "meas_fz")] for r in rows])
        cmd = np.array([float(r["cmd_n"]) for r in rows])
        events = [frozenset(e for e in r["events"].split(";") if e) for r in rows]
        return cls(sample_rate, cmd, true[:, 2].copy(), true, meas, events)


def run_scenario(scenario: GraspScenario, sensor: SensorModel, coupling: CouplingModel | None = None) -> SimTrace:
    if scenario.attack is not None and coupling is None:
        raise ValueError("an attack needs a coupling model")
    ctl = scenario.controller
    rng = RngStream(scenario.seed, "grasp/sensor")
    n = scenario.total_frames
    cmd_log = np.empty(n)
    real = np.empty(n)
    true_log = np.empty((n, 3))
    meas_log = np.empty((n, 3))
    events: list[frozenset[str]] = []

    applied = 0.0
    command = scenario.setpoint(0)
    cstate = ControllerState()
    estate = EventState()
    for t in range(n):
        applied += min(ctl.ramp_rate, max(-ctl.ramp_rate, command - applied))
        lifted = t >= scenario.lift_frame
        # normal load on z; the finger's share of the object's weight on y
        tangential = scenario.object_mass * GRAVITY / 2.0 if lifted else 0.0
        true = np.array([[0.0, tangential, applied]])
        measured = transduce_array(sensor, true, rng)
        attack_on = False
        if scenario.attack is not None:
            attack_on = bool(scenario.attack.active(t)) and scenario.attack.emitter_power > 0
            measured = perturb_array(coupling, scenario.attack, [t], measured, sensor.saturation)
        command, cstate = controller_step(ctl, cstate, float(measured[0, 2]), scenario.setpoint(t))
        ev, estate = detect_events(scenario, estate, applied, lifted, attack_on)

        cmd_log[t] = command
        real[t] = applied
        true_log[t] = true[0]
        meas_log[t] = measured[0]
        events.append(ev)
    return SimTrace(sensor.sample_rate, cmd_log, real, true_log, meas_log, events)


def spoofed_normal(trace: SimTrace) -> np.ndarray:
    return trace.spoofed_reading[:, 2]


def spoofed_magnitude(trace: SimTrace) -> np.ndarray:
    return np.linalg.norm(trace.spoofed_reading, axis=1)


def real_magnitude(trace: SimTrace) -> np.ndarray:
    return np.linalg.norm(trace.true_force, axis=1)


def force_at(trace: SimTrace, frame: int) -> ForceVec:
    return ForceVec.from_array(trace.true_force[frame])


def crush_bound(scenario: GraspScenario, pre_attack_grip: float) -> int:
    """Frames after onset by which a fully suppressed reading must cause a crush.

    Worst case the command saturates immediately and the actuator slews at
    ``ramp_rate``; the integrator needs ``ceil`` frames to lift the command
    over the crush threshold first.
    """
    ctl = scenario.controller
    target = scenario.target_normal_force
    if not ctl.ki > 0:
        raise ValueError("crush is only guaranteed with ki > 0")
    if ctl.max_grip_force < scenario.crush_force or ctl.ki * ctl.integrator_limit < scenario.crush_force - target - ctl.kp * target:
        raise ValueError("controller limits keep the command below crush_force")
    need = scenario.crush_force - target - ctl.kp * target
    wind = 0 if need <= 0 else math.ceil(need / (ctl.ki * target))
    slew = math.ceil((scenario.crush_force - pre_attack_grip) / ctl.ramp_rate)
    return wind + slew + 1
