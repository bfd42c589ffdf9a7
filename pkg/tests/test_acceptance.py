"""End-to-end acceptance criteria, one test per criterion.

Each test records a ``PASS``/``FAIL`` line (with its measured values and
runtime) that is printed in the terminal summary, then asserts.
"""

from __future__ import annotations

import math
import time
from pathlib import Path

import mpmath
import numpy as np
import pytest

from tactile_emi import config as C
from tactile_emi.cli import main
from tactile_emi.core import ForceVec, RngStream, amplitude_ratio, angle_between_deg, cosine_similarity
from tactile_emi.datagen import build_dataset, split_for
from tactile_emi.detect import detect
from tactile_emi.emi import AttackConfig, CouplingModel, Envelope, Mode, frequency_sweep, perturb
from tactile_emi.grasp import GraspScenario, run_scenario, spoofed_magnitude
from tactile_emi.learn import Forest, ForestParams, Tree, confusion_matrix, evaluate, predict, scores_from_confusion, train_forest, windowed_dataset
from tactile_emi.pipeline import reproduce_table1, run_calibration
from tactile_emi.report import dataset_fidelity
from tactile_emi.sensor import SensorFrame

pytestmark = pytest.mark.acceptance


def record(log: list, number: int, title: str, checks: dict[str, bool], detail: str, seconds: float) -> None:
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    suffix = "" if ok else f" | failed: {', '.join(failed)}"
    log.append(f"{'PASS' if ok else 'FAIL'} criterion {number}: {title} | {detail} | {seconds:.2f} s{suffix}")
    assert ok, f"criterion {number} failed: {failed} ({detail})"


def test_criterion_1_benign_row(configs_dir, acceptance_log):
    t0 = time.perf_counter()
    cfg = C.Config.load(configs_dir / "benign.cfg")
    sensor = C.sensor_model(cfg)
    protocol = C.press_protocol(cfg)
    traces = build_dataset(protocol, sensor)
    train, test = split_for(protocol, traces)
    spec = C.window_spec(cfg)
    X, y = windowed_dataset([traces[i] for i in train], spec)
    forest = train_forest(X, y, C.forest_params(cfg), cfg.seed, protocol.n_classes)
    Xt, yt = windowed_dataset([traces[i] for i in test], spec)
    ev = evaluate(forest, Xt, yt)
    fid = dataset_fidelity(traces)["per_trace"]
    elapsed = time.perf_counter() - t0
    f1 = ev.macro_f1
    checks = {
        "cos mean >= 0.99": fid.cos_sim.mean >= 0.99,
        "cos std <= 0.001": fid.cos_sim.std <= 0.001,
        "amp in [0.99, 1.01]": 0.99 <= fid.amp_ratio.mean <= 1.01,
        "P in [0.90, 1]": 0.90 <= ev.macro_precision <= 1.0,
        "R in [0.90, 1]": 0.90 <= ev.macro_recall <= 1.0,
        "F1 in [0.90, 1]": f1 is not None and 0.90 <= f1 <= 1.0,
        "runtime < 30 s": elapsed < 30,
    }
    detail = (
        f"cos {fid.cos_sim.mean:.6f} ({fid.cos_sim.std:.2e}), amp {fid.amp_ratio.mean:.4f}, "
        f"P {ev.macro_precision:.3f} R {ev.macro_recall:.3f} F1 {f1:.3f}"
    )
    record(acceptance_log, 1, "benign row", checks, detail, elapsed)


def test_criterion_2_attack_row(configs_dir, acceptance_log):
    t0 = time.perf_counter()
    cfg = C.Config.load(configs_dir / "table1-attack.cfg")
    sensor = C.sensor_model(cfg)
    benign = build_dataset(C.press_protocol(cfg), sensor)
    calib = run_calibration(cfg, benign, sensor)
    run = reproduce_table1(cfg, profile=calib.injections)
    elapsed = time.perf_counter() - t0
    atk = run.report.case("attack")
    fid = atk.fidelity["per_trace"]
    checks = {
        "cos 0.56 +- 0.10": abs(fid.cos_sim.mean - 0.56) <= 0.10,
        "amp 9.2 +- 1.0": abs(fid.amp_ratio.mean - 9.2) <= 1.0,
        "P <= 0.05": atk.precision.mean <= 0.05,
        "R <= 0.05": atk.recall.mean <= 0.05,
        "runtime < 30 s": elapsed < 30,
    }
    detail = (
        f"cos {fid.cos_sim.mean:.4f} ({fid.cos_sim.std:.3f}), amp {fid.amp_ratio.mean:.3f} ({fid.amp_ratio.std:.2f}), "
        f"P {atk.precision.mean:.3f} R {atk.recall.mean:.3f}"
    )
    record(acceptance_log, 2, "attack row", checks, detail, elapsed)


def test_criterion_3_fig3(configs_dir, acceptance_log):
    t0 = time.perf_counter()
    cfg = C.Config.load(configs_dir / "fig3-phantom-release.cfg")
    scenario = C.grasp_scenario(cfg)
    tr = run_scenario(scenario, C.sensor_model(cfg), C.coupling_model(cfg))
    elapsed = time.perf_counter() - t0
    hold = tr.real_normal_force[350:551]
    spoof = spoofed_magnitude(tr)[560:701]
    crush = tr.first_event("crush")
    checks = {
        "hold 35 +- 1 over 350-550": bool(np.all(np.abs(hold - 35.0) <= 1.0)),
        "attack_on first at 550": tr.first_event("attack_on") == 550,
        "|spoofed| < 1 over 560-700": bool(np.all(spoof < 1.0)),
        "real >= 34 at 560": tr.real_normal_force[560] >= 34.0,
        "crush before end": crush is not None,
        "cmd >= crush_force": crush is not None and tr.commanded_grip[crush:].max() >= scenario.crush_force,
        "runtime < 5 s": elapsed < 5,
    }
    detail = (
        f"hold [{hold.min():.3f}, {hold.max():.3f}], attack_on {tr.first_event('attack_on')}, "
        f"max |spoofed| {spoof.max():.3f}, real@560 {tr.real_normal_force[560]:.2f}, crush frame {crush}"
    )
    record(acceptance_log, 3, "phantom-release grasp", checks, detail, elapsed)


def test_criterion_4_sweep(acceptance_log):
    t0 = time.perf_counter()
    best = frequency_sweep(CouplingModel(resonant_freq=313e6), 100e6, 400e6, 1e6, 0.005).best_freq
    rng = RngStream(42, "acceptance/sweep")
    offsets = []
    for f_res in rng.random(20) * 300e6 + 100e6:
        got = frequency_sweep(CouplingModel(resonant_freq=float(f_res)), 100e6, 400e6, 1e6, 0.005).best_freq
        offsets.append(abs(got - f_res))
    elapsed = time.perf_counter() - t0
    checks = {"313 MHz exactly": best == 313e6, "20 random within one step": max(offsets) <= 1e6}
    detail = f"best {best:.0f} Hz, worst random offset {max(offsets) / 1e6:.3f} MHz"
    record(acceptance_log, 4, "carrier sweep", checks, detail, elapsed)


def test_criterion_5_zero_power_identity(acceptance_log):
    t0 = time.perf_counter()
    rng = RngStream(42, "acceptance/zero-power")
    g = rng.generator
    modes = list(Mode)
    identical = 0
    n = 2000
    for _ in range(n):
        start = int(g.integers(0, 1000))
        end = None if g.random() < 0.3 else start + int(g.integers(0, 1000))
        env = Envelope("on_off_keyed", int(g.integers(1, 20)), float(g.uniform(0.05, 1))) if g.random() < 0.5 else Envelope()
        model = CouplingModel(
            resonant_freq=float(g.uniform(50e6, 500e6)),
            quality_factor=float(g.uniform(1, 200)),
            peak_gain=float(g.uniform(0.1, 100)),
            mode=modes[int(g.integers(0, 3))],
        )
        attack = AttackConfig(float(g.uniform(10e6, 1e9)), 0.0, float(g.uniform(1e-4, 0.05)), start, end, env)
        meas = ForceVec(*(g.normal(size=3) * 10 ** g.uniform(-3, 3)))
        frame = SensorFrame(int(g.integers(0, 3000)), 0.0, meas, meas)
        out = perturb(model, attack, frame, saturation=float(g.uniform(1, 1e4)))
        identical += out.as_array().tobytes() == meas.as_array().tobytes()
    elapsed = time.perf_counter() - t0
    record(acceptance_log, 5, "zero-power identity", {f"{n} frames bit-identical": identical == n}, f"{identical}/{n} identical", elapsed)


def _reproduction(configs_dir: Path, out: Path) -> None:
    c = lambda name: str(configs_dir / name)  # noqa: E731
    assert main(["sweep", "--config", c("sweep.cfg"), "--out", str(out / "sweep"), "--quiet"]) == 0
    assert main(["calibrate", "--config", c("table1-attack.cfg"), "--out", str(out / "calibrate"), "--quiet"]) == 0
    assert main(["simulate", "--config", c("fig3-phantom-release.cfg"), "--out", str(out / "simulate"), "--quiet"]) == 0
    assert main([
        "report", "--config", c("table1-attack.cfg"), "--attack-profile", str(out / "calibrate" / "profile.cfg"),
        "--trace", str(out / "simulate" / "trace.csv"), "--out", str(out / "report"), "--quiet",
    ]) == 0


def test_criterion_6_determinism(configs_dir, tmp_path, acceptance_log):
    t0 = time.perf_counter()
    a, b = tmp_path / "a", tmp_path / "b"
    _reproduction(configs_dir, a)
    _reproduction(configs_dir, b)
    elapsed = time.perf_counter() - t0
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file() and p.name != "run_manifest.json")
    differ = [str(p) for p in files if (a / p).read_bytes() != (b / p).read_bytes()]
    kinds = {
        "traces": any(p.name == "trace.csv" for p in files),
        "forests": any(p.name.startswith("forest_") for p in files),
        "reports": any(p.name == "report.json" for p in files),
    }
    checks = {**{f"{k} present": v for k, v in kinds.items()}, "byte-identical": not differ}
    detail = f"{len(files)} files compared, {len(differ)} differ"
    record(acceptance_log, 6, "determinism", checks, detail, elapsed)


def _rel_ok(got: float, want: float, tol: float = 1e-9) -> bool:
    if want == 0:
        return got == 0
    return abs(got - want) <= tol * abs(want)


def test_criterion_7_metric_oracles(acceptance_log):
    t0 = time.perf_counter()
    mpmath.mp.dps = 40
    g = RngStream(42, "acceptance/oracles").generator
    bad = {"cosine_similarity": 0, "amplitude_ratio": 0, "angle_between_deg": 0, "evaluate P/R/F1": 0}
    for _ in range(1000):
        a = g.normal(size=3) * 10 ** g.uniform(-2, 2)
        b = g.normal(size=3) * 10 ** g.uniform(-2, 2)
        ma, mb = [mpmath.mpf(float(x)) for x in a], [mpmath.mpf(float(x)) for x in b]
        dot = sum(x * y for x, y in zip(ma, mb))
        na = mpmath.sqrt(sum(x * x for x in ma))
        nb = mpmath.sqrt(sum(x * x for x in mb))
        cos = dot / (na * nb)
        fa, fb = ForceVec(*a), ForceVec(*b)
        bad["cosine_similarity"] += not _rel_ok(cosine_similarity(fa, fb), float(cos))
        bad["amplitude_ratio"] += not _rel_ok(amplitude_ratio(fa, fb), float(nb / na))
        bad["angle_between_deg"] += not _rel_ok(angle_between_deg(fa, fb), float(mpmath.degrees(mpmath.acos(cos))))

        k = int(g.integers(2, 7))
        n = int(g.integers(1, 80))
        yt = g.integers(0, k, n).tolist()
        yp = g.integers(0, k, n).tolist()
        ev = scores_from_confusion(confusion_matrix(yt, yp, k))
        for c in range(k):
            tp = sum(1 for t, p in zip(yt, yp) if t == c == p)
            pp, ap = yp.count(c), yt.count(c)
            p = tp / pp if pp else 0.0
            r = tp / ap if ap else 0.0
            f = 2 * p * r / (p + r) if p + r > 0 else 0.0
            if not (_rel_ok(ev.precision[c], p) and _rel_ok(ev.recall[c], r) and _rel_ok(ev.f1[c], f)):
                bad["evaluate P/R/F1"] += 1
                break
    elapsed = time.perf_counter() - t0
    checks = {f"{k} matches oracle": v == 0 for k, v in bad.items()}
    detail = "mismatches: " + ", ".join(f"{k} {v}" for k, v in bad.items())
    record(acceptance_log, 7, "metric oracles (1000 inputs)", checks, detail, elapsed)


def test_criterion_8_detector(configs_dir, acceptance_log):
    t0 = time.perf_counter()
    cfg = C.Config.load(configs_dir / "fig3-phantom-release.cfg")
    sensor = C.sensor_model(cfg)
    det_cfg = C.detector_config(cfg)
    scenario = C.grasp_scenario(cfg)
    attacked = run_scenario(scenario, sensor, C.coupling_model(cfg))
    benign = run_scenario(GraspScenario(**{**scenario.__dict__, "attack": None}), sensor)
    first = detect(attacked.spoofed_reading, det_cfg).first_flag
    frac = detect(benign.spoofed_reading, det_cfg).flagged_fraction
    elapsed = time.perf_counter() - t0
    checks = {
        "first flag within 2 of 550": first is not None and abs(first - 550) <= 2,
        "benign flagged < 1%": frac < 0.01,
    }
    record(acceptance_log, 8, "detector baseline", checks, f"first flag {first}, benign fraction {frac:.4f}", elapsed)


def test_criterion_9_forest(acceptance_log):
    t0 = time.perf_counter()
    g = RngStream(42, "acceptance/forest").generator
    y = np.repeat([0, 1, 2], 10)
    X = g.uniform(0, 1, size=(30, 16))
    X[:, 10] = y * 3 + g.uniform(0, 1, size=30)  # separable along one feature
    X[:, 15] = y * 2 + g.uniform(0, 1, size=30)
    forest = train_forest(X, y, ForestParams(), seed=42)
    acc = float((forest.predict(X) == y).mean())

    def stump(label: int) -> Tree:
        votes = np.zeros((1, 4), dtype=int)
        votes[0, label] = 5
        return Tree(np.array([-1]), np.array([0.0]), np.array([-1]), np.array([-1]), votes)

    tie = Forest([stump(3), stump(1)], 4, ForestParams(n_trees=2), 0)
    label, dist = predict(tie, np.zeros(16))
    elapsed = time.perf_counter() - t0
    checks = {
        "training accuracy 1.0": acc == 1.0,
        "2-tree tie -> lowest class": label == 1 and math.isclose(dist[1], 0.5) and math.isclose(dist[3], 0.5),
    }
    record(acceptance_log, 9, "forest correctness", checks, f"train acc {acc:.3f}, tie label {label}", elapsed)
