"""Scenario configuration files.

One INI-style file (``.cfg``) describes a run. Sections and keys are
checked against a fixed schema so typos fail loudly. Every output is stamped
with :attr:`Config.hash`, a sha256 over the normalised section/key/value
content (comments and layout do not change it).

Injection profiles use ``[injection:<name>]`` sections, applied in file
order; each takes any ``[coupling]`` or ``[attack]`` key and inherits the
rest from those sections.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .calibrate import CalibrationTarget
from .datagen import PressProtocol
from .detect import DetectorConfig
from .emi import AttackConfig, CouplingModel, Envelope, Injection, unit
from .grasp import ControllerParams, GraspScenario
from .learn import ForestParams, WindowSpec
from .sensor import SensorModel


class ConfigError(ValueError):
    """Malformed or unknown configuration content."""


class InvariantError(ValueError):
    """Configuration parses but violates a model invariant."""


COUPLING_KEYS = {
    "resonant_freq": float,
    "quality_factor": float,
    "peak_gain": float,
    "path_loss_exponent": float,
    "reference_distance": float,
    "coupling_direction": "vec3",
    "mode": str,
}
ATTACK_KEYS = {
    "carrier_freq": float,
    "emitter_power": float,
    "standoff_distance": float,
    "start_frame": int,
    "end_frame": "opt_int",
    "envelope": str,
    "period_frames": int,
    "duty": float,
}
SCHEMA: dict[str, dict] = {
    "run": {"seed": int},
    "sensor": {
        "sample_rate": float,
        "noise_sigma": float,
        "saturation": float,
        "quantization_step": float,
        "axis_gain": "vec3",
    },
    "coupling": COUPLING_KEYS,
    "attack": ATTACK_KEYS,
    "protocol": {
        "weight_classes": "floats",
        "press_duration": float,
        "dwell_duration": float,
        "release_duration": float,
        "repetitions": int,
        "contact_angle_jitter": float,
        "load_jitter": float,
        "train_fraction": float,
    },
    "window": {"window_len": int, "stride": int, "phase_filter": str},
    "forest": {"n_trees": int, "max_depth": int, "min_leaf": int, "feature_subsample": int},
    "evaluation": {"repeats": int},
    "scenario": {
        "object_mass": float,
        "friction_coeff": float,
        "crush_force": float,
        "target_normal_force": float,
        "total_frames": int,
        "approach_frames": int,
        "lift_frame": int,
        "drop_latency": int,
        "attack": bool,
    },
    "controller": {"kp": float, "ki": float, "integrator_limit": float, "max_grip_force": float, "ramp_rate": float},
    "detector": {"jump_threshold": float, "plausibility_max": float, "window": int},
    "sweep": {"f_start": float, "f_end": float, "step": float, "probe_distance": float, "probe_power": float},
    "calibration": {"cos_sim": float, "amp_ratio": float, "cos_tol": float, "amp_tol": float, "suppression_step": float},
    "calibration_result": {"suppression": float, "offset": float, "gain": float, "cos_sim": float, "amp_ratio": float},
}
INJECTION_KEYS = {**COUPLING_KEYS, **ATTACK_KEYS}


def _convert(kind, raw: str, where: str):
    raw = raw.strip()
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("1", "yes", "true", "on"):
                return True
            if low in ("0", "no", "false", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is str:
            return raw
        if kind == "opt_int":
            return None if raw in ("", "none", "None") else int(raw)
        parts = [float(p) for p in raw.replace(",", " ").split()]
        if kind == "vec3" and len(parts) != 3:
            raise ValueError("expected three numbers")
        return tuple(parts)
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {raw!r} ({exc})") from None


@dataclass
class Config:
    sections: dict[str, dict[str, str]]
    source: str = "<string>"

    @classmethod
    def from_text(cls, text: str, source: str = "<string>") -> Config:
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        try:
            parser.read_string(text, source=source)
        except configparser.Error as exc:
            raise ConfigError(f"{source}: {exc}") from None
        sections = {s: dict(parser.items(s)) for s in parser.sections()}
        cfg = cls(sections, source)
        cfg._validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> Config:
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise OSError(f"cannot read config {path}: {exc}") from exc
        return cls.from_text(text, str(path))

    @classmethod
    def empty(cls) -> Config:
        return cls({}, "<defaults>")

    def _validate(self) -> None:
        for name, keys in self.sections.items():
            schema = INJECTION_KEYS if name.startswith("injection:") else SCHEMA.get(name)
            if schema is None:
                raise ConfigError(f"{self.source}: unknown section [{name}]")
            for key in keys:
                if key not in schema:
                    raise ConfigError(f"{self.source}: unknown key {key!r} in [{name}]")
                _convert(schema[key], keys[key], f"{self.source} [{name}] {key}")

    @property
    def hash(self) -> str:
        canon = {s: {k: v.strip() for k, v in kv.items()} for s, kv in self.sections.items()}
        return hashlib.sha256(json.dumps(canon, sort_keys=True).encode()).hexdigest()

    def has(self, section: str) -> bool:
        return section in self.sections

    def values(self, section: str, schema: dict | None = None) -> dict:
        schema = schema or SCHEMA[section]
        raw = self.sections.get(section, {})
        return {k: _convert(schema[k], v, f"{self.source} [{section}] {k}") for k, v in raw.items()}

    @property
    def seed(self) -> int:
        return self.values("run").get("seed", 42)

    def to_text(self) -> str:
        lines = []
        for name, kv in self.sections.items():
            lines.append(f"[{name}]")
            lines += [f"{k} = {v}" for k, v in kv.items()]
            lines.append("")
        return "\n".join(lines)


def _build(factory, **kwargs):
    try:
        return factory(**kwargs)
    except (ValueError, TypeError) as exc:
        raise InvariantError(f"{getattr(factory, '__name__', factory)}: {exc}") from None


def sensor_model(cfg: Config) -> SensorModel:
    return _build(SensorModel, **cfg.values("sensor"))


def _coupling(values: dict) -> CouplingModel:
    v = {k: values[k] for k in COUPLING_KEYS if k in values}
    if "coupling_direction" in v:
        try:
            v["coupling_direction"] = unit(v["coupling_direction"])
        except ValueError as exc:
            raise InvariantError(str(exc)) from None
    return _build(CouplingModel, **v)


def _attack(values: dict) -> AttackConfig:
    v = {k: values[k] for k in ATTACK_KEYS if k in values}
    env_kw = {k: v.pop(k) for k in ("period_frames", "duty") if k in v}
    kind = v.pop("envelope", "constant")
    v["envelope"] = _build(Envelope, kind=kind, **env_kw)
    return _build(AttackConfig, **v)


def coupling_model(cfg: Config) -> CouplingModel:
    return _coupling(cfg.values("coupling"))


def attack_config(cfg: Config) -> AttackConfig | None:
    return _attack(cfg.values("attack")) if cfg.has("attack") else None


def injections(cfg: Config) -> list[Injection]:
    """``[injection:*]`` sections in order, else the single [coupling]+[attack] pair, else nothing."""
    base = {**cfg.values("coupling"), **cfg.values("attack")}
    named = [s for s in cfg.sections if s.startswith("injection:")]
    if named:
        out = []
        for s in named:
            values = {**base, **cfg.values(s, INJECTION_KEYS)}
            out.append(Injection(_coupling(values), _attack(values)))
        return out
    if cfg.has("attack"):
        return [Injection(coupling_model(cfg), attack_config(cfg))]
    return []


def press_protocol(cfg: Config, seed: int | None = None) -> PressProtocol:
    v = cfg.values("protocol")
    if "weight_classes" in v:
        v["weight_classes"] = tuple(v["weight_classes"])
    return _build(PressProtocol, seed=cfg.seed if seed is None else seed, **v)


def window_spec(cfg: Config) -> WindowSpec:
    return _build(WindowSpec, **cfg.values("window"))


def forest_params(cfg: Config) -> ForestParams:
    return _build(ForestParams, **cfg.values("forest"))


def eval_repeats(cfg: Config) -> int:
    n = cfg.values("evaluation").get("repeats", 5)
    if n < 1:
        raise InvariantError("evaluation repeats must be >= 1")
    return n


def grasp_scenario(cfg: Config, seed: int | None = None) -> GraspScenario:
    v = cfg.values("scenario")
    with_attack = v.pop("attack", cfg.has("attack"))
    controller = _build(ControllerParams, **cfg.values("controller"))
    attack = attack_config(cfg) if with_attack else None
    if with_attack and attack is None:
        raise ConfigError(f"{cfg.source}: [scenario] attack = yes needs an [attack] section")
    return _build(GraspScenario, controller=controller, attack=attack, seed=cfg.seed if seed is None else seed, **v)


def detector_config(cfg: Config, sensor: SensorModel | None = None) -> DetectorConfig:
    v = cfg.values("detector")
    v.setdefault("plausibility_max", (sensor or sensor_model(cfg)).saturation)
    return _build(DetectorConfig, **v)


def sweep_settings(cfg: Config) -> dict:
    v = {"f_start": 100e6, "f_end": 400e6, "step": 1e6, "probe_distance": None, "probe_power": 1e-3}
    v.update(cfg.values("sweep"))
    if v["probe_distance"] is None:
        v["probe_distance"] = coupling_model(cfg).reference_distance
    return v


def calibration_target(cfg: Config) -> tuple[CalibrationTarget, float]:
    v = cfg.values("calibration")
    step = v.pop("suppression_step", 0.05)
    if not 0 < step <= 1:
        raise InvariantError("suppression_step must be in (0, 1]")
    return _build(CalibrationTarget, **v), step


def profile_text(result, source_hash: str) -> str:
    """Render a calibrated profile as an injection-only config file."""
    lines = [
        "# attack profile written by `tactile-emi calibrate`",
        f"# source config sha256 {source_hash}",
        "",
        "[calibration_result]",
        f"suppression = {result.suppression!r}",
        f"offset = {result.offset!r}",
        f"gain = {result.gain!r}",
        f"cos_sim = {result.cos_sim!r}",
        f"amp_ratio = {result.amp_ratio!r}",
        "",
    ]
    for inj in result.injections:
        c, a = inj.coupling, inj.attack
        lines += [
            f"[injection:{c.mode.value}]",
            f"mode = {c.mode.value}",
            f"resonant_freq = {c.resonant_freq!r}",
            f"quality_factor = {c.quality_factor!r}",
            f"peak_gain = {c.peak_gain!r}",
            f"path_loss_exponent = {c.path_loss_exponent!r}",
            f"reference_distance = {c.reference_distance!r}",
            "coupling_direction = " + ", ".join(repr(x) for x in c.coupling_direction),
            f"carrier_freq = {a.carrier_freq!r}",
            f"emitter_power = {a.emitter_power!r}",
            f"standoff_distance = {a.standoff_distance!r}",
            f"start_frame = {a.start_frame}",
            "end_frame = " + ("" if a.end_frame is None else str(a.end_frame)),
            f"envelope = {a.envelope.kind}",
            "",
        ]
    return "\n".join(lines)
