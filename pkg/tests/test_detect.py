from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tactile_emi import config as C
from tactile_emi.core import ForceVec
from tactile_emi.detect import DetectorConfig, detect
from tactile_emi.grasp import GraspScenario, run_scenario
from tactile_emi.sensor import SensorFrame


def test_config_invariants():
    for kw in [{"jump_threshold": 0}, {"plausibility_max": -1}, {"window": 0}]:
        with pytest.raises(ValueError):
            DetectorConfig(**kw)


def test_empty_trace_rejected():
    with pytest.raises(ValueError):
        detect(np.zeros((0, 3)))


@given(st.floats(0, 99), st.integers(1, 500))
def test_constant_trace_never_flagged(level, n):
    assert not detect(np.tile([0.0, 0.0, level], (n, 1))).flags.any()


@given(st.floats(5.01, 90), st.integers(1, 200))
def test_step_latency_is_one(size, onset):
    m = np.zeros((onset + 50, 3))
    m[onset:, 2] = size
    det = detect(m, DetectorConfig(jump_threshold=5.0))
    assert det.first_flag == onset
    assert det.latency(onset) == 1


def test_plausibility_rule_and_persistence():
    m = np.zeros((40, 3))
    m[10, 2] = 150.0
    m[15, 2] = 150.0
    det = detect(m, DetectorConfig(plausibility_max=100.0, window=10))
    assert det.flags[10:17].all() and not det.flags[:10].any() and not det.flags[17:].any()


def test_accepts_sensor_frames():
    frames = [SensorFrame(i, i / 1000, ForceVec(0, 0, 1), ForceVec(0, 0, 1 if i < 3 else 20)) for i in range(6)]
    assert detect(frames).first_flag == 3


def test_fig3_attack_and_benign(fig3_config):
    sensor = C.sensor_model(fig3_config)
    cfg = C.detector_config(fig3_config)
    attacked = run_scenario(C.grasp_scenario(fig3_config), sensor, C.coupling_model(fig3_config))
    assert abs(detect(attacked.spoofed_reading, cfg).first_flag - 550) <= 2
    benign = run_scenario(GraspScenario(seed=42), sensor)
    assert detect(benign.spoofed_reading, cfg).flagged_fraction < 0.01


def test_summary_fields():
    m = np.zeros((10, 3))
    m[5:, 2] = 30
    s = detect(m).summary(onset=5)
    assert s == {"frames": 10, "flagged": 1, "flagged_fraction": 0.1, "first_flag": 5, "onset": 5, "detection_latency": 1}
