"""Signal-level EMI detector: slew-rate and plausibility rules with persistence."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class DetectorConfig:
    jump_threshold: float = 5.0  # N per frame
    plausibility_max: float = 100.0  # N; defaults to the sensor saturation
    window: int = 10  # frames

    def __post_init__(self) -> None:
        if not (self.jump_threshold > 0 and self.plausibility_max > 0 and self.window > 0):
            raise ValueError("detector thresholds must be > 0")


@dataclass
class Detection:
    flags: np.ndarray  # bool per frame, after persistence
    fired: np.ndarray  # bool per frame, raw rule firings

    @property
    def flagged_fraction(self) -> float:
        return float(self.flags.mean())

    @property
    def first_flag(self) -> int | None:
        hits = np.flatnonzero(self.flags)
        return int(hits[0]) if len(hits) else None

    def latency(self, onset: int) -> int | None:
        """Frames observed from ``onset`` until the alarm, counting the onset frame.

        A step caught on the frame it happens has latency 1.
        """
        hits = np.flatnonzero(self.flags[onset:])
        return int(hits[0]) + 1 if len(hits) else None

    def summary(self, onset: int | None = None) -> dict:
        out = {
            "frames": int(len(self.flags)),
            "flagged": int(self.flags.sum()),
            "flagged_fraction": self.flagged_fraction,
            "first_flag": self.first_flag,
        }
        if onset is not None:
            out["onset"] = onset
            out["detection_latency"] = self.latency(onset)
        return out


def detect(measured, config: DetectorConfig = DetectorConfig()) -> Detection:
    """Flag frames whose reading jumps or leaves the plausible range.

    ``measured`` is an (n, 3) array of readings (or a sequence of
    SensorFrames). A frame fires when the change from the previous frame
    exceeds ``jump_threshold`` or its magnitude exceeds ``plausibility_max``.
    Frames between two firings at most ``window`` frames apart stay flagged.
    """
    if len(measured) and hasattr(measured[0], "measured_force"):
        measured = [f.measured_force.as_array() for f in measured]
    m = np.asarray(measured, dtype=float).reshape(-1, 3)
    if len(m) == 0:
        raise ValueError("empty trace")
    jump = np.zeros(len(m))
    jump[1:] = np.linalg.norm(np.diff(m, axis=0), axis=1)
    fired = (jump > config.jump_threshold) | (np.linalg.norm(m, axis=1) > config.plausibility_max)
    flags = fired.copy()
    hits = np.flatnonzero(fired)
    for a, b in zip(hits, hits[1:]):
        if b - a <= config.window:
            flags[a:b] = True
    return Detection(flags, fired)
