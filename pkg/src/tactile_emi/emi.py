"""EMI coupling model, perturbation injection and carrier-frequency sweeps.

The carrier itself is never sampled: at kHz sensor rates a 100-400 MHz tone
only shows up as its rectified envelope, so an injection is a per-frame
force-domain perturbation whose strength is

    A = coupling_gain(carrier, standoff) * emitter_power

with a Lorentzian resonance and a power-law near-field distance decay.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import ForceVec
from .sensor import SensorFrame


class Mode(str, enum.Enum):
    ADDITIVE_OFFSET = "additive_offset"
    CHANNEL_GAIN = "channel_gain"
    SUPPRESSION = "suppression"


def unit(v: Sequence[float]) -> tuple[float, float, float]:
    arr = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(arr))
    if n == 0:
        raise ValueError("cannot normalise a zero vector")
    x, y, z = (float(c) for c in arr / n)
    return (x, y, z)


@dataclass(frozen=True)
class CouplingModel:
    resonant_freq: float = 313e6  # Hz
    quality_factor: float = 40.0
    peak_gain: float = 1.0  # perturbation units per watt at reference_distance
    path_loss_exponent: float = 3.0
    reference_distance: float = 0.005  # m
    coupling_direction: tuple[float, float, float] = field(default_factory=lambda: unit((1, 1, 1)))
    mode: Mode = Mode.ADDITIVE_OFFSET

    def __post_init__(self) -> None:
        if not self.resonant_freq > 0:
            raise ValueError("resonant_freq must be > 0")
        if not self.quality_factor > 0:
            raise ValueError("quality_factor must be > 0")
        if not self.path_loss_exponent >= 0:
            raise ValueError("path_loss_exponent must be >= 0")
        if not self.reference_distance > 0:
            raise ValueError("reference_distance must be > 0")
        d = tuple(float(c) for c in self.coupling_direction)
        if len(d) != 3 or abs(math.sqrt(sum(c * c for c in d)) - 1.0) > 1e-9:
            raise ValueError(f"coupling_direction must be a unit 3-vector, got {d}")
        object.__setattr__(self, "coupling_direction", d)
        object.__setattr__(self, "mode", Mode(self.mode))


@dataclass(frozen=True)
class Envelope:
    """``constant`` or on-off keyed with ``period_frames`` and ``duty`` in (0, 1]."""

    kind: str = "constant"
    period_frames: int = 1
    duty: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("constant", "on_off_keyed"):
            raise ValueError(f"unknown envelope {self.kind!r}")
        if self.kind == "on_off_keyed":
            if self.period_frames < 1 or not 0 < self.duty <= 1:
                raise ValueError("on_off_keyed needs period_frames >= 1 and 0 < duty <= 1")

    def on_frames(self, offsets: np.ndarray) -> np.ndarray:
        """Envelope state for frame offsets counted from the attack start."""
        offsets = np.asarray(offsets)
        if self.kind == "constant":
            return np.ones(offsets.shape, dtype=bool)
        return (offsets % self.period_frames) < self.duty * self.period_frames


@dataclass(frozen=True)
class AttackConfig:
    carrier_freq: float = 313e6  # Hz
    emitter_power: float = 0.0  # W
    standoff_distance: float = 0.005  # m
    start_frame: int = 0
    end_frame: int | None = None  # inclusive; None runs to the end of the trace
    envelope: Envelope = Envelope()

    def __post_init__(self) -> None:
        if not self.carrier_freq > 0:
            raise ValueError("carrier_freq must be > 0")
        if not self.emitter_power >= 0:
            raise ValueError("emitter_power must be >= 0")
        if not self.standoff_distance > 0:
            raise ValueError("standoff_distance must be > 0")
        if self.start_frame < 0:
            raise ValueError("start_frame must be >= 0")
        if self.end_frame is not None and self.end_frame < self.start_frame:
            raise ValueError("end_frame must be >= start_frame")

    def active(self, frame_indices) -> np.ndarray:
        idx = np.asarray(frame_indices)
        on = idx >= self.start_frame
        if self.end_frame is not None:
            on &= idx <= self.end_frame
        return on & self.envelope.on_frames(idx - self.start_frame)


@dataclass(frozen=True)
class Injection:
    """One emitter acting through one coupling path."""

    coupling: CouplingModel
    attack: AttackConfig

    @property
    def amplitude(self) -> float:
        return injection_amplitude(self.coupling, self.attack)


def lorentzian(model: CouplingModel, freq):
    """Normalised resonance, 1 at ``resonant_freq`` and -> 0 in both tails."""
    f = np.asarray(freq, dtype=float)
    r = f / model.resonant_freq
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        detune = r - 1.0 / r
        out = 1.0 / (1.0 + model.quality_factor**2 * detune * detune)
    out = np.where(np.isfinite(detune), out, 0.0)
    return float(out) if out.ndim == 0 else out


def coupling_gain(model: CouplingModel, freq: float, distance: float) -> float:
    if not freq > 0 or not distance > 0:
        raise ValueError("freq and distance must be > 0")
    decay = (model.reference_distance / distance) ** model.path_loss_exponent
    return model.peak_gain * lorentzian(model, freq) * decay


def injection_amplitude(model: CouplingModel, attack: AttackConfig) -> float:
    return coupling_gain(model, attack.carrier_freq, attack.standoff_distance) * attack.emitter_power


def _apply_mode(model: CouplingModel, amplitude: float, measured: np.ndarray) -> np.ndarray:
    direction = np.asarray(model.coupling_direction)
    if model.mode is Mode.ADDITIVE_OFFSET:
        return measured + amplitude * direction
    if model.mode is Mode.CHANNEL_GAIN:
        return measured * (1.0 + amplitude * np.abs(direction))
    return measured * max(0.0, 1.0 - amplitude)


def perturb_array(
    model: CouplingModel,
    attack: AttackConfig,
    frame_indices,
    measured: np.ndarray,
    saturation: float = math.inf,
) -> np.ndarray:
    """Perturb an (n, 3) block of readings; rows outside the schedule are returned untouched."""
    measured = np.asarray(measured, dtype=float)
    on = attack.active(frame_indices)
    if attack.emitter_power == 0 or not on.any():
        return measured.copy()
    amp = injection_amplitude(model, attack)
    if on.all():
        return np.clip(_apply_mode(model, amp, measured), -saturation, saturation)
    out = measured.copy()
    out[on] = np.clip(_apply_mode(model, amp, measured[on]), -saturation, saturation)
    return out


def perturb(
    model: CouplingModel,
    attack: AttackConfig,
    frame: SensorFrame,
    saturation: float = math.inf,
) -> ForceVec:
    if attack.emitter_power == 0 or not attack.active(frame.frame_index):
        return frame.measured_force
    out = perturb_array(model, attack, [frame.frame_index], frame.measured_force.as_array()[None, :], saturation)
    return ForceVec.from_array(out[0])


def apply_profile(
    injections: Sequence[Injection],
    frame_indices,
    measured: np.ndarray,
    saturation: float = math.inf,
) -> np.ndarray:
    """Apply several injections in order (each re-clamped to saturation)."""
    out = np.asarray(measured, dtype=float)
    for inj in injections:
        out = perturb_array(inj.coupling, inj.attack, frame_indices, out, saturation)
    return out


@dataclass
class SweepResult:
    best_freq: float
    curve: list[tuple[float, float]]  # (Hz, response per watt)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["frequency_hz", "gain"])
            for f, g in self.curve:
                w.writerow([repr(float(f)), repr(float(g))])


def sweep_frequencies(f_start: float, f_end: float, step: float) -> np.ndarray:
    if not step > 0:
        raise ValueError("sweep step must be > 0")
    if not f_start < f_end:
        raise ValueError(f"empty sweep band [{f_start}, {f_end}]")
    n = int(math.floor((f_end - f_start) / step * (1 + 1e-12))) + 1
    # integer multiples keep grid points exact (100e6 + 213 * 1e6 == 313e6)
    return f_start + np.arange(n) * step


def default_reference_trace(n: int = 100, normal_force: float = 1.0) -> np.ndarray:
    """Noise-free constant normal load used as the sweep's benign probe trace."""
    return np.tile([0.0, 0.0, normal_force], (n, 1))


def frequency_sweep(
    model: CouplingModel,
    f_start: float,
    f_end: float,
    step: float,
    probe_distance: float,
    probe_power: float = 1e-3,
    reference: np.ndarray | None = None,
) -> SweepResult:
    """Step a probe carrier across the band and locate the strongest response.

    The response at each frequency is the mean perturbation magnitude the
    probe induces on a fixed benign trace, divided by ``probe_power``. The
    probe power is kept small so suppression-mode coupling stays linear.
    Ties resolve to the lower frequency.
    """
    freqs = sweep_frequencies(f_start, f_end, step)
    ref = default_reference_trace() if reference is None else np.asarray(reference, dtype=float)
    idx = np.arange(len(ref))
    response = np.empty(len(freqs))
    for i, f in enumerate(freqs):
        attack = AttackConfig(carrier_freq=float(f), emitter_power=probe_power, standoff_distance=probe_distance)
        delta = perturb_array(model, attack, idx, ref) - ref
        response[i] = np.linalg.norm(delta, axis=1).mean() / probe_power
    best = int(np.argmax(response))  # first maximum, i.e. lowest frequency
    return SweepResult(float(freqs[best]), [(float(f), float(g)) for f, g in zip(freqs, response)])
