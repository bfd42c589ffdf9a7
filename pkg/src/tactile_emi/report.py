"""Force-fidelity statistics, the benign vs attack results table and grasp plot data.

Standard deviations are population (ddof=0). Fidelity is reported two ways:
``per_trace`` compares the dwell-window mean measured vector with the dwell
mean true vector (one value per press), ``frame_pooled`` pools every
contact frame (|true| > EPSILON) of the selected phase.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import EPSILON, amplitude_ratio_rows, cosine_similarity_rows
from .datagen import LabeledTrace
from .grasp import SimTrace


@dataclass
class Stat:
    mean: float
    std: float
    n: int

    @classmethod
    def of(cls, values) -> Stat:
        v = np.asarray(values, dtype=float)
        if v.size == 0:
            return cls(math.nan, math.nan, 0)
        return cls(float(v.mean()), float(v.std()), int(v.size))

    def fmt(self, digits: int = 2) -> str:
        sd = 4 if self.std < 0.01 else digits
        return f"{self.mean:.{digits}f} ({self.std:.{sd}f})"


@dataclass
class FidelityStats:
    cos_sim: Stat
    amp_ratio: Stat
    mean_angle_deg: float
    max_angle_deg: float

    @classmethod
    def from_vectors(cls, true: np.ndarray, measured: np.ndarray) -> FidelityStats:
        """Statistics over aligned (n, 3) arrays; rows with |true| <= EPSILON are dropped.

        Rows whose measurement is zero have no direction: they count toward
        the amplitude ratio (as 0) but not toward the cosine.
        """
        true = np.asarray(true, dtype=float)
        measured = np.asarray(measured, dtype=float)
        contact = np.linalg.norm(true, axis=1) > EPSILON
        true, measured = true[contact], measured[contact]
        amp = amplitude_ratio_rows(true, measured)
        directed = np.linalg.norm(measured, axis=1) > EPSILON
        cos = cosine_similarity_rows(true[directed], measured[directed])
        angles = np.degrees(np.arccos(cos))
        return cls(
            Stat.of(cos),
            Stat.of(amp),
            float(angles.mean()) if angles.size else math.nan,
            float(angles.max()) if angles.size else math.nan,
        )


def force_fidelity(pairs: Iterable[tuple[np.ndarray, np.ndarray]]) -> FidelityStats:
    """Frame-pooled fidelity over (true, measured) sequence pairs."""
    trues, meas = [], []
    for t, m in pairs:
        t = np.asarray(t, dtype=float).reshape(-1, 3)
        m = np.asarray(m, dtype=float).reshape(-1, 3)
        if t.shape != m.shape:
            raise ValueError(f"unaligned pair: {t.shape} vs {m.shape}")
        trues.append(t)
        meas.append(m)
    if not trues:
        raise ValueError("no traces")
    return FidelityStats.from_vectors(np.vstack(trues), np.vstack(meas))


def dataset_fidelity(traces: Sequence[LabeledTrace], dwell_only: bool = True) -> dict[str, FidelityStats]:
    """Both granularities for a press dataset."""
    def rows(lt: LabeledTrace) -> np.ndarray:
        return lt.dwell if dwell_only else np.ones(len(lt), dtype=bool)

    per_trace_true = np.array([lt.trace.true_force[rows(lt)].mean(axis=0) for lt in traces])
    per_trace_meas = np.array([lt.trace.measured_force[rows(lt)].mean(axis=0) for lt in traces])
    pooled = force_fidelity((lt.trace.true_force[rows(lt)], lt.trace.measured_force[rows(lt)]) for lt in traces)
    return {
        "per_trace": FidelityStats.from_vectors(per_trace_true, per_trace_meas),
        "frame_pooled": pooled,
    }


@dataclass
class CaseMetrics:
    label: str
    fidelity: dict[str, FidelityStats]
    precision: Stat
    recall: Stat
    f1: Stat | None  # None: every per-class F1 undefined in every repetition
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "fidelity": {k: asdict(v) for k, v in self.fidelity.items()},
            "precision": asdict(self.precision),
            "recall": asdict(self.recall),
            "f1": None if self.f1 is None else asdict(self.f1),
            "extra": self.extra,
        }

    @classmethod
    def from_dict(cls, d: dict) -> CaseMetrics:
        fid = {
            k: FidelityStats(Stat(**v["cos_sim"]), Stat(**v["amp_ratio"]), v["mean_angle_deg"], v["max_angle_deg"])
            for k, v in d["fidelity"].items()
        }
        f1 = None if d["f1"] is None else Stat(**d["f1"])
        return cls(d["label"], fid, Stat(**d["precision"]), Stat(**d["recall"]), f1, d.get("extra", {}))


@dataclass
class MetricsReport:
    cases: list[CaseMetrics]
    provenance: dict

    def case(self, label: str) -> CaseMetrics:
        for c in self.cases:
            if c.label == label:
                return c
        raise KeyError(label)

    def to_dict(self) -> dict:
        return {"format": "tactile-emi-report/1", "provenance": self.provenance, "cases": [c.to_dict() for c in self.cases]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> MetricsReport:
        d = json.loads(text)
        return cls([CaseMetrics.from_dict(c) for c in d["cases"]], d["provenance"])

    def table(self, granularity: str = "per_trace") -> str:
        header = ["Cases", "Cos. Sim.", "Amp. Rat.", "P", "R", "F1"]
        rows = []
        for c in self.cases:
            fid = c.fidelity[granularity]
            rows.append(
                [
                    c.label,
                    fid.cos_sim.fmt(),
                    fid.amp_ratio.fmt(),
                    c.precision.fmt(),
                    c.recall.fmt(),
                    "--" if c.f1 is None else c.f1.fmt(),
                ]
            )
        widths = [max(len(r[i]) for r in [header, *rows]) for i in range(len(header))]
        line = lambda r: "  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip()  # noqa: E731
        out = [
            f"Force fidelity ({granularity.replace('_', '-')}) and classifier scores, mean (std)",
            line(header),
            "  ".join("-" * w for w in widths),
            *(line(r) for r in rows),
        ]
        return "\n".join(out) + "\n"


def plot_rows(trace: SimTrace) -> list[list[str]]:
    real = np.linalg.norm(trace.true_force, axis=1)
    spoof = np.linalg.norm(trace.spoofed_reading, axis=1)
    return [[str(i), repr(float(real[i])), repr(float(spoof[i])), repr(float(trace.commanded_grip[i]))] for i in range(len(trace))]


def write_plot_csv(path: Path, trace: SimTrace) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame", "real_force_n", "spoofed_force_n", "grip_command_n"])
        w.writerows(plot_rows(trace))


def emit_report(
    report: MetricsReport | None,
    destination: str | Path,
    scenarios: dict[str, SimTrace] | None = None,
) -> list[Path]:
    """Write table.txt, report.json and one ``plot_<name>.csv`` per scenario."""
    dest = Path(destination)
    written = []
    try:
        dest.mkdir(parents=True, exist_ok=True)
        if report is not None:
            table = dest / "table.txt"
            text = report.table("per_trace") + "\n" + report.table("frame_pooled")
            table.write_text(text)
            js = dest / "report.json"
            js.write_text(report.to_json())
            written += [table, js]
        for name, trace in (scenarios or {}).items():
            p = dest / f"plot_{name}.csv"
            write_plot_csv(p, trace)
            written.append(p)
    except OSError as exc:
        raise OSError(f"cannot write report under {dest}: {exc}") from exc
    return written
