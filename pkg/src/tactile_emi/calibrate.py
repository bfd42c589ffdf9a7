"""Fit an attack profile to target force-fidelity statistics.

The profile family is three injections at one carrier, applied in order:

    suppression (a_s)  ->  additive offset (B)  ->  channel gain (g)

i.e. reading' = g * ((1 - a_s) * reading + B * d). Uniform channel gain does
not move the direction, so the direction statistic is set by (a_s, B) and
the magnitude statistic is then matched with g >= 1. For each suppression
level on a grid, B is solved so the amplitude target holds at g = 1; if that
leaves the cosine below target, B is reduced to hit the cosine exactly and g
makes up the amplitude. The grid point with the smallest tolerance-scaled
error wins; ties go to the weaker suppression.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .datagen import LabeledTrace
from .emi import AttackConfig, CouplingModel, Injection, Mode, apply_profile, coupling_gain


@dataclass(frozen=True)
class CalibrationTarget:
    cos_sim: float = 0.56
    amp_ratio: float = 9.2
    cos_tol: float = 0.10
    amp_tol: float = 1.0

    def error(self, cos: float, amp: float) -> float:
        return math.hypot((cos - self.cos_sim) / self.cos_tol, (amp - self.amp_ratio) / self.amp_tol)


@dataclass
class CalibrationResult:
    suppression: float
    offset: float
    gain: float
    cos_sim: float
    amp_ratio: float
    error: float
    injections: list[Injection]
    grid: list[dict] = field(default_factory=list)


def build_profile(
    suppression: float,
    offset: float,
    gain: float,
    template: CouplingModel,
    carrier_freq: float,
    standoff: float,
) -> list[Injection]:
    """Injections realising the given amplitudes; emitter powers are back-solved from the coupling."""
    per_watt = coupling_gain(template, carrier_freq, standoff)
    if per_watt <= 0:
        raise ValueError("carrier does not couple at this standoff")
    axis = max(abs(c) for c in template.coupling_direction)
    amplitudes = [
        (Mode.SUPPRESSION, suppression),
        (Mode.ADDITIVE_OFFSET, offset),
        (Mode.CHANNEL_GAIN, (gain - 1.0) / axis),
    ]
    out = []
    for mode, amp in amplitudes:
        if amp <= 0:
            continue
        coupling = CouplingModel(
            resonant_freq=template.resonant_freq,
            quality_factor=template.quality_factor,
            peak_gain=template.peak_gain,
            path_loss_exponent=template.path_loss_exponent,
            reference_distance=template.reference_distance,
            coupling_direction=template.coupling_direction,
            mode=mode,
        )
        attack = AttackConfig(carrier_freq=carrier_freq, emitter_power=amp / per_watt, standoff_distance=standoff)
        out.append(Injection(coupling, attack))
    return out


class _DwellData:
    """Dwell-phase rows of a dataset, flattened once for repeated evaluation."""

    def __init__(self, traces: Sequence[LabeledTrace]):
        true, meas, idx, group = [], [], [], []
        for g, lt in enumerate(traces):
            rows = np.flatnonzero(lt.dwell)
            true.append(lt.trace.true_force[rows])
            meas.append(lt.trace.measured_force[rows])
            idx.append(rows)
            group.append(np.full(len(rows), g))
        self.true = np.vstack(true)
        self.measured = np.vstack(meas)
        self.frames = np.concatenate(idx)
        self.group = np.concatenate(group)
        self.n = len(traces)
        counts = np.bincount(self.group, minlength=self.n)[:, None]
        if (counts == 0).any():
            raise ValueError("every trace needs dwell frames")
        self._starts = np.concatenate([[0], np.cumsum(counts[:-1, 0])])
        self.true_mean = self._group_sum(self.true) / counts
        self._counts = counts

    def _group_sum(self, arr: np.ndarray) -> np.ndarray:
        return np.add.reduceat(arr, self._starts, axis=0)

    def stats(self, injections: Sequence[Injection], saturation: float) -> tuple[float, float]:
        """Mean per-trace cosine similarity and amplitude ratio of dwell means."""
        m = apply_profile(injections, self.frames, self.measured, saturation)
        mm = self._group_sum(m) / self._counts
        t = self.true_mean
        tn = np.linalg.norm(t, axis=1)
        mn = np.linalg.norm(mm, axis=1)
        cos = np.clip(np.einsum("ij,ij->i", t, mm) / (tn * np.where(mn > 0, mn, np.inf)), -1, 1)
        return float(cos.mean()), float((mn / tn).mean())


def calibrate(
    traces: Sequence[LabeledTrace],
    template: CouplingModel,
    saturation: float,
    target: CalibrationTarget = CalibrationTarget(),
    carrier_freq: float | None = None,
    standoff: float | None = None,
    suppression_grid: Sequence[float] = tuple(np.round(np.linspace(0.0, 1.0, 21), 10)),
) -> CalibrationResult:
    carrier = template.resonant_freq if carrier_freq is None else carrier_freq
    standoff = template.reference_distance if standoff is None else standoff
    data = _DwellData(traces)

    def stats(a_s: float, b: float, g: float) -> tuple[float, float]:
        return data.stats(build_profile(a_s, b, g, template, carrier, standoff), saturation)

    def upper_bracket(fn, lo_val: float) -> float:
        hi = 1.0
        while fn(hi) <= lo_val:
            hi *= 2.0
            if hi > 1e6:
                raise RuntimeError("calibration target unreachable: offset diverges")
        return hi

    best: CalibrationResult | None = None
    grid_log = []
    for a_s in suppression_grid:
        a_s = float(a_s)

        def amp_at(b: float) -> float:
            return stats(a_s, b, 1.0)[1]

        cos0, amp0 = stats(a_s, 0.0, 1.0)
        if amp0 >= target.amp_ratio:
            b, g = 0.0, 1.0
        else:
            f_amp = lambda b: amp_at(b) - target.amp_ratio  # noqa: E731
            b = brentq(f_amp, 0.0, upper_bracket(amp_at, target.amp_ratio), xtol=1e-10, rtol=1e-12)
            g = 1.0
            cos_b = stats(a_s, b, 1.0)[0]
            if cos_b < target.cos_sim and cos0 > target.cos_sim:
                f_cos = lambda x: stats(a_s, x, 1.0)[0] - target.cos_sim  # noqa: E731
                b = brentq(f_cos, 0.0, b, xtol=1e-10, rtol=1e-12)
                g = target.amp_ratio / amp_at(b)
        cos, amp = stats(a_s, b, g)
        err = target.error(cos, amp)
        grid_log.append({"suppression": a_s, "offset": b, "gain": g, "cos_sim": cos, "amp_ratio": amp, "error": err})
        if best is None or err < best.error - 1e-12:
            best = CalibrationResult(a_s, b, g, cos, amp, err, build_profile(a_s, b, g, template, carrier, standoff))
    assert best is not None
    best.grid = grid_log
    return best
