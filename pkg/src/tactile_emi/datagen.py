"""Synthetic calibration-weight press protocol.

Each trace is one press of one weight: half-cosine ramp up, dwell at the
weight's load, half-cosine ramp down. Contact direction is near-vertical with
a per-trace tilt, so datasets carry a little directional spread.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import ForceVec, RngStream
from .emi import Injection, apply_profile
from .sensor import SensorModel, Trace, frame_count, transduce_array

GRAVITY = 9.81

PRESS, DWELL, RELEASE = 0, 1, 2


@dataclass(frozen=True)
class PressProtocol:
    weight_classes: tuple[float, ...] = (50.0, 100.0, 200.0, 500.0, 1000.0)  # grams
    press_duration: float = 0.3
    dwell_duration: float = 1.0
    release_duration: float = 0.3
    repetitions: int = 40
    contact_angle_jitter: float = 2.0  # deg, std of tilt per horizontal axis
    load_jitter: float = 0.01  # relative std of the held load
    train_fraction: float = 0.7
    seed: int = 42

    def __post_init__(self) -> None:
        w = tuple(float(x) for x in self.weight_classes)
        if not w:
            raise ValueError("weight_classes must be non-empty")
        if any(x <= 0 for x in w) or any(b <= a for a, b in zip(w, w[1:])):
            raise ValueError("weight_classes must be positive and strictly increasing")
        object.__setattr__(self, "weight_classes", w)
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if min(self.press_duration, self.dwell_duration, self.release_duration) <= 0:
            raise ValueError("protocol phase durations must be > 0")
        if self.contact_angle_jitter < 0 or self.load_jitter < 0:
            raise ValueError("jitter must be >= 0")
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must be in (0, 1)")

    @property
    def n_classes(self) -> int:
        return len(self.weight_classes)


@dataclass
class LabeledTrace:
    trace: Trace
    label: int
    phase: np.ndarray  # per-frame PRESS / DWELL / RELEASE
    metadata: dict = field(default_factory=dict)

    @property
    def dwell(self) -> np.ndarray:
        return self.phase == DWELL

    def __len__(self) -> int:
        return len(self.trace)


def contact_direction(jitter_deg: float, rng: RngStream) -> np.ndarray:
    tilt = np.radians(rng.normal(0.0, jitter_deg, size=2)) if jitter_deg > 0 else np.zeros(2)
    d = np.array([math.tan(tilt[0]), math.tan(tilt[1]), 1.0])
    return d / np.linalg.norm(d)


def press_profile(protocol: PressProtocol, peak: float, sample_rate: float) -> tuple[np.ndarray, np.ndarray]:
    """Load magnitude per frame and phase labels."""
    n_p = frame_count(protocol.press_duration, sample_rate)
    n_d = frame_count(protocol.dwell_duration, sample_rate)
    n_r = frame_count(protocol.release_duration, sample_rate)
    up = peak * (1.0 - np.cos(np.pi * np.arange(n_p) / n_p)) / 2.0
    hold = np.full(n_d, peak)
    down = peak * (1.0 + np.cos(np.pi * np.arange(1, n_r + 1) / n_r)) / 2.0
    phase = np.concatenate([np.full(n_p, PRESS), np.full(n_d, DWELL), np.full(n_r, RELEASE)])
    return np.concatenate([up, hold, down]), phase


def generate_press(
    protocol: PressProtocol,
    class_index: int,
    rep_index: int,
    sensor: SensorModel,
    rng: RngStream,
) -> LabeledTrace:
    if not 0 <= class_index < protocol.n_classes:
        raise IndexError(f"class_index {class_index} out of range")
    grams = protocol.weight_classes[class_index]
    load = grams / 1000.0 * GRAVITY
    if protocol.load_jitter > 0:
        load *= 1.0 + float(rng.child("load").normal(0.0, protocol.load_jitter))
    direction = contact_direction(protocol.contact_angle_jitter, rng.child("direction"))
    magnitude, phase = press_profile(protocol, load, sensor.sample_rate)
    true = magnitude[:, None] * direction[None, :]
    measured = transduce_array(sensor, true, rng.child("sensor"))
    meta = {
        "class_index": class_index,
        "rep_index": rep_index,
        "weight_g": grams,
        "rng_label": rng.label,
        "seed": rng.seed,
    }
    return LabeledTrace(Trace(sensor.sample_rate, true, measured), class_index, phase, meta)


def trace_stream(protocol: PressProtocol, class_index: int, rep_index: int) -> RngStream:
    return RngStream(protocol.seed, f"press/c{class_index}/r{rep_index}")


def build_dataset(
    protocol: PressProtocol,
    sensor: SensorModel,
    attack: Sequence[Injection] | None = None,
) -> list[LabeledTrace]:
    """Every (class, rep) press, ordered by class then repetition.

    With ``attack`` the injections are applied to each trace's measured
    readings; true forces are identical to the benign build.
    """
    out = []
    for c in range(protocol.n_classes):
        for r in range(protocol.repetitions):
            lt = generate_press(protocol, c, r, sensor, trace_stream(protocol, c, r))
            if attack:
                lt = attack_trace(lt, attack, sensor)
            out.append(lt)
    return out


def attack_trace(lt: LabeledTrace, attack: Sequence[Injection], sensor: SensorModel) -> LabeledTrace:
    idx = np.arange(len(lt))
    measured = apply_profile(attack, idx, lt.trace.measured_force, sensor.saturation)
    trace = Trace(lt.trace.sample_rate, lt.trace.true_force, measured)
    return LabeledTrace(trace, lt.label, lt.phase, dict(lt.metadata, attacked=True))


def stratified_split(labels: Sequence[int], train_fraction: float, rng: RngStream) -> tuple[list[int], list[int]]:
    """Seeded per-class shuffle; returns sorted (train, test) trace indices."""
    labels = np.asarray(labels)
    train, test = [], []
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        members = members[rng.child(f"class{int(c)}").permutation(len(members))]
        k = int(round(train_fraction * len(members)))
        train.extend(int(i) for i in members[:k])
        test.extend(int(i) for i in members[k:])
    return sorted(train), sorted(test)


def split_for(protocol: PressProtocol, traces: Sequence[LabeledTrace]) -> tuple[list[int], list[int]]:
    return stratified_split([t.label for t in traces], protocol.train_fraction, RngStream(protocol.seed, "split"))


# --- persistence -----------------------------------------------------------

TRACE_COLUMNS = ["frame", "time_s", "true_fx", "true_fy", "true_fz", "meas_fx", "meas_fy", "meas_fz", "phase"]


def _trace_filename(meta: dict) -> str:
    return f"c{meta['class_index']:02d}_r{meta['rep_index']:03d}.csv"


def write_trace_csv(path: Path, lt: LabeledTrace) -> None:
    tr = lt.trace
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for i, (t, m, p) in enumerate(zip(tr.true_force.tolist(), tr.measured_force.tolist(), lt.phase.tolist())):
            w.writerow([i, repr(i / tr.sample_rate), *map(repr, t), *map(repr, m), p])


def read_trace_csv(path: Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 2:5], data[:, 5:8], data[:, 8].astype(int)


def save_dataset(
    directory: str | Path,
    protocol: PressProtocol,
    sensor: SensorModel,
    traces: Sequence[LabeledTrace],
    split: tuple[list[int], list[int]],
    extra: dict | None = None,
) -> Path:
    directory = Path(directory)
    (directory / "traces").mkdir(parents=True, exist_ok=True)
    entries = []
    for lt in traces:
        name = _trace_filename(lt.metadata)
        write_trace_csv(directory / "traces" / name, lt)
        entries.append({"file": f"traces/{name}", "label": lt.label, **lt.metadata})
    manifest = {
        "format": "tactile-emi-dataset/1",
        "protocol": asdict(protocol),
        "sensor": asdict(sensor),
        "seed": protocol.seed,
        "split": {"train": split[0], "test": split[1]},
        "traces": entries,
        **(extra or {}),
    }
    path = directory / "dataset.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_dataset(directory: str | Path) -> tuple[dict, list[LabeledTrace]]:
    directory = Path(directory)
    manifest = json.loads((directory / "dataset.json").read_text())
    rate = manifest["sensor"]["sample_rate"]
    traces = []
    for e in manifest["traces"]:
        true, meas, phase = read_trace_csv(directory / e["file"])
        meta = {k: v for k, v in e.items() if k not in ("file", "label")}
        traces.append(LabeledTrace(Trace(rate, true, meas), int(e["label"]), phase, meta))
    return manifest, traces


def protocol_from_manifest(manifest: dict) -> PressProtocol:
    return PressProtocol(**{**manifest["protocol"], "weight_classes": tuple(manifest["protocol"]["weight_classes"])})


def sensor_from_manifest(manifest: dict) -> SensorModel:
    return SensorModel(**{**manifest["sensor"], "axis_gain": tuple(manifest["sensor"]["axis_gain"])})


def dwell_force(lt: LabeledTrace) -> ForceVec:
    return ForceVec.from_array(lt.trace.true_force[lt.dwell].mean(axis=0))
