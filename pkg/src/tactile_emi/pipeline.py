"""End-to-end runs shared by the CLI and the acceptance suite."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from . import config as C
from .calibrate import CalibrationResult, calibrate
from .core import RngStream
from .datagen import LabeledTrace, attack_trace, build_dataset, split_for, stratified_split
from .emi import Injection
from .learn import Evaluation, Forest, evaluate, train_forest, windowed_dataset
from .report import CaseMetrics, MetricsReport, Stat, dataset_fidelity


def repeat_split(traces: Sequence[LabeledTrace], protocol, repeat: int) -> tuple[list[int], list[int]]:
    """Repetition 0 is the canonical split recorded with the dataset."""
    if repeat == 0:
        return split_for(protocol, traces)
    rng = RngStream(protocol.seed, f"split/repeat{repeat}")
    return stratified_split([t.label for t in traces], protocol.train_fraction, rng)


def run_calibration(cfg: C.Config, traces: Sequence[LabeledTrace], sensor) -> CalibrationResult:
    target, step = C.calibration_target(cfg)
    grid = tuple(np.round(np.arange(0.0, 1.0 + step / 2, step), 10))
    attack = C.attack_config(cfg)
    return calibrate(
        traces,
        C.coupling_model(cfg),
        sensor.saturation,
        target,
        carrier_freq=None if attack is None else attack.carrier_freq,
        standoff=None if attack is None else attack.standoff_distance,
        suppression_grid=grid,
    )


def _class_scores(evals: list[Evaluation]) -> tuple[Stat, Stat, Stat | None]:
    p = Stat.of([e.macro_precision for e in evals])
    r = Stat.of([e.macro_recall for e in evals])
    f1s = [e.macro_f1 for e in evals if e.macro_f1 is not None]
    return p, r, (Stat.of(f1s) if f1s else None)


@dataclass
class Table1Run:
    report: MetricsReport
    forests: list[Forest]
    benign: list[LabeledTrace]
    attacked: list[LabeledTrace]
    profile: list[Injection]
    calibration: CalibrationResult | None = None
    evaluations: dict[str, list[Evaluation]] = field(default_factory=dict)


def reproduce_table1(
    cfg: C.Config,
    seed: int | None = None,
    profile: Sequence[Injection] | None = None,
    profile_hash: str | None = None,
) -> Table1Run:
    """Benign vs attacked force fidelity and classifier scores.

    The attack profile is ``profile`` if given, else calibrated when the
    config has a [calibration] section, else taken from its injection
    sections. Classifier scores are repeated over ``[evaluation] repeats``
    stratified splits, each with its own forest.
    """
    seed = cfg.seed if seed is None else seed
    sensor = C.sensor_model(cfg)
    protocol = C.press_protocol(cfg, seed)
    spec = C.window_spec(cfg)
    params = C.forest_params(cfg)
    benign = build_dataset(protocol, sensor)

    calib = None
    if profile is None:
        if cfg.has("calibration"):
            calib = run_calibration(cfg, benign, sensor)
            profile = calib.injections
        else:
            profile = C.injections(cfg)
    profile = list(profile)
    if not profile:
        raise C.ConfigError(f"{cfg.source}: no attack profile (add [calibration] or [injection:*] sections)")
    attacked = [attack_trace(lt, profile, sensor) for lt in benign]

    forests, evals = [], {"non-attack": [], "attack": []}
    class_names = [f"{w:g}g" for w in protocol.weight_classes]
    for r in range(C.eval_repeats(cfg)):
        train, test = repeat_split(benign, protocol, r)
        X, y = windowed_dataset([benign[i] for i in train], spec)
        forest = train_forest(X, y, params, seed + r, protocol.n_classes, class_names)
        forests.append(forest)
        for label, traces in (("non-attack", benign), ("attack", attacked)):
            Xt, yt = windowed_dataset([traces[i] for i in test], spec)
            evals[label].append(evaluate(forest, Xt, yt))

    cases = []
    for label, traces in (("non-attack", benign), ("attack", attacked)):
        p, rcl, f1 = _class_scores(evals[label])
        first = evals[label][0]
        cases.append(CaseMetrics(label, dataset_fidelity(traces), p, rcl, f1, {"confusion_repeat0": first.confusion.tolist()}))

    provenance = {
        "tool_version": __version__,
        "config_source": Path(cfg.source).name,
        "config_hash": cfg.hash,
        "seed": seed,
        "repeats": C.eval_repeats(cfg),
        "traces": len(benign),
        "profile_hash": profile_hash,
    }
    if calib is not None:
        provenance["calibration"] = {
            "suppression": calib.suppression,
            "offset": calib.offset,
            "gain": calib.gain,
            "cos_sim": calib.cos_sim,
            "amp_ratio": calib.amp_ratio,
        }
    return Table1Run(MetricsReport(cases, provenance), forests, benign, attacked, profile, calib, evals)
