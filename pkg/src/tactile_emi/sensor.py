"""Hall-effect fingertip sensor forward model.

The sensor is treated at the force-reading level: per-axis gain, additive
Gaussian noise, symmetric saturation and quantization, sampled at a fixed
rate. No magnet/field physics and no sensor dynamics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .core import ForceVec, RngStream


@dataclass(frozen=True)
class SensorModel:
    sample_rate: float = 1000.0  # Hz
    noise_sigma: float = 0.02  # N, per axis
    saturation: float = 100.0  # N, symmetric per-axis clamp
    quantization_step: float = 0.001  # N; 0 disables
    axis_gain: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self) -> None:
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be > 0")
        if not self.noise_sigma >= 0:
            raise ValueError("noise_sigma must be >= 0")
        if not self.saturation > 0:
            raise ValueError("saturation must be > 0")
        if not self.quantization_step >= 0:
            raise ValueError("quantization_step must be >= 0")
        if len(self.axis_gain) != 3:
            raise ValueError("axis_gain needs three entries")
        object.__setattr__(self, "axis_gain", tuple(float(g) for g in self.axis_gain))

    def finish(self, values: np.ndarray) -> np.ndarray:
        """Clamp then quantize raw readings (any shape ending in 3)."""
        out = np.clip(values, -self.saturation, self.saturation)
        if self.quantization_step > 0:
            steps = np.round(out / self.quantization_step)
            per_newton = 1.0 / self.quantization_step
            if abs(per_newton - round(per_newton)) < 1e-9:
                # k / 1000 is the closest double to k mN; k * 0.001 often is not
                out = steps / round(per_newton)
            else:
                out = steps * self.quantization_step
            # rounding can step just past the rail when saturation is not a multiple of the step
            out = np.clip(out, -self.saturation, self.saturation)
        return out


@dataclass(frozen=True)
class SensorFrame:
    frame_index: int
    time: float
    true_force: ForceVec
    measured_force: ForceVec


def transduce(model: SensorModel, true_force: ForceVec, rng: RngStream) -> ForceVec:
    """One reading. Consumes exactly three normal draws from ``rng``."""
    return ForceVec.from_array(transduce_array(model, true_force.as_array()[None, :], rng)[0])


def transduce_array(model: SensorModel, true_forces: np.ndarray, rng: RngStream) -> np.ndarray:
    """Vectorised transduce over an (n, 3) array; same draws as n calls to :func:`transduce`."""
    true_forces = np.asarray(true_forces, dtype=float)
    raw = true_forces * np.asarray(model.axis_gain)
    noise = rng.normal(0.0, 1.0, size=true_forces.shape)
    raw = raw + model.noise_sigma * noise
    return model.finish(raw)


@dataclass
class Trace:
    """A sampled recording; arrays are (n, 3) in newtons."""

    sample_rate: float
    true_force: np.ndarray
    measured_force: np.ndarray

    def __len__(self) -> int:
        return len(self.true_force)

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self)) / self.sample_rate

    def frame(self, i: int) -> SensorFrame:
        return SensorFrame(
            frame_index=i,
            time=i / self.sample_rate,
            true_force=ForceVec.from_array(self.true_force[i]),
            measured_force=ForceVec.from_array(self.measured_force[i]),
        )

    def frames(self) -> Iterator[SensorFrame]:
        for i in range(len(self)):
            yield self.frame(i)


def frame_count(duration: float, sample_rate: float) -> int:
    # tolerate 0.3 * 1000 = 299.99999999999994
    return int(math.floor(duration * sample_rate + 1e-9))


def sample_trace(
    model: SensorModel,
    force_fn: Callable[[float], ForceVec],
    duration: float,
    rng: RngStream,
) -> Trace:
    n = frame_count(duration, model.sample_rate)
    if n < 1:
        raise ValueError(f"duration {duration} s is shorter than one sample period")
    true = np.array([force_fn(i / model.sample_rate).as_array() for i in range(n)])
    return Trace(model.sample_rate, true, transduce_array(model, true, rng))
