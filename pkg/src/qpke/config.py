"""Experiment configuration: dataclasses, YAML loading with line-anchored
validation errors, and a normalised dump for round-tripping.

Numeric fields carry their unit in the name (``_deg``, ``_km``, ``_ns``).
"""
from __future__ import annotations

import dataclasses
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .modulation import Scheme
from .phasespace import UNCERTAINTY_ANCHORS_DEG, NoiseModel

ATTACKS = ("none", "intercept_resend", "tapping")


class ConfigError(ValueError):
    """Invalid configuration; ``line`` is 1-based when known."""

    def __init__(self, message, field_path=None, line=None, source=None):
        self.message = message
        self.field_path = field_path
        self.line = line
        self.source = source
        where = ""
        if source:
            where += f"{source}:"
        if line is not None:
            where += f"{line}:"
        if field_path:
            where += f" {field_path}:" if where else f"{field_path}:"
        super().__init__(f"{where} {message}".strip())


@dataclass
class SchemeConfig:
    kind: str = "psk"
    phases: int = 16
    rings: list | None = None
    phases_per_ring: list | None = None

    def build(self) -> Scheme:
        if self.kind.lower() == "psk":
            return Scheme.psk(self.phases)
        if self.rings is None and self.phases_per_ring is None:
            return Scheme.apsk(self.phases)
        return Scheme("apsk", tuple(self.phases_per_ring), tuple(self.rings))


@dataclass
class ReferenceConfig:
    keys_per_reference: int = 1
    list_size: int = 1
    period_pulses: int = 10_000
    schedule_seed: int | None = None


@dataclass
class ChannelConfig:
    length_km: float = 10.0
    attenuation_db_per_km: float = 0.2
    path_drift_step_deg: float = 0.1
    initial_path_phase_deg: float = 0.0
    excess_delay_ns: float = 0.0
    delay_jitter_ns: float = 0.0
    double_pass_phase: bool = False


@dataclass
class DetectorConfig:
    equipment_sigma_deg: float = 5.0
    include_quantum: bool = True
    lo_offset_deg: float | None = 0.0
    lo_drift_step_deg: float = 0.1
    anchors_deg: list = field(default_factory=lambda: [list(a) for a in UNCERTAINTY_ANCHORS_DEG])
    asymptotic_rule: bool = True

    def noise_model(self) -> NoiseModel:
        return NoiseModel.from_degrees(
            self.equipment_sigma_deg,
            tuple(tuple(a) for a in self.anchors_deg),
            asymptotic_rule=self.asymptotic_rule,
            include_quantum=self.include_quantum,
        )


@dataclass
class MonitorConfig:
    intensity_window: int = 1000
    intensity_z: float = 3.0
    delay_tolerance_ns: float = 100.0
    drop_on_alarm: bool = True


@dataclass
class AttackConfig:
    kind: str = "none"
    # tapping
    tap1_position: float = 0.9
    tap2_position: float = 0.9
    tap1_ratio: float = 0.1
    tap2_ratio: float = 0.1
    shared_lo: bool = True
    inter_tap: str = "calibrated"
    mode: str = "dpsk"
    # intercept-resend
    position: float = 0.5
    leg: str = "return"
    regeneration_amplitude_ratio: float = 1.0
    regeneration_sigma_deg: float | None = None
    processing_delay_ns: float = 0.0
    # attacker's own detector; lo_offset_deg None draws a uniform offset per session
    detector: DetectorConfig = field(default_factory=lambda: DetectorConfig(lo_offset_deg=None))


@dataclass
class OutputConfig:
    directory: str = "qpke_out"
    ledger: bool = True
    ledger_debug: bool = False
    constellation: bool = True


@dataclass
class ExperimentConfig:
    master_seed: int
    session_id: int = 0
    pulses: int = 10_000
    base_mean_photon_number: float = 100.0
    randomizer_alphabet_size: int | None = 1024
    extraction: str = "dpsk"
    calibration_window: int = 128
    scheme: SchemeConfig = field(default_factory=SchemeConfig)
    reference: ReferenceConfig = field(default_factory=ReferenceConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    bob: DetectorConfig = field(default_factory=DetectorConfig)
    monitors: MonitorConfig = field(default_factory=MonitorConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def validate(self) -> "ExperimentConfig":
        """Raise ConfigError listing the first problem found."""
        for problem in self.problems():
            raise ConfigError(problem[1], problem[0])
        return self

    def problems(self):
        out = []

        def need(cond, path, msg):
            if not cond:
                out.append((path, msg))

        need(self.pulses > 0, "pulses", "must be positive")
        need(self.base_mean_photon_number > 0, "base_mean_photon_number", "must be positive")
        need(self.randomizer_alphabet_size is None or self.randomizer_alphabet_size >= 1,
             "randomizer_alphabet_size", "must be >= 1 or null for continuous")
        need(self.extraction in ("dpsk", "calibrated"), "extraction", "must be 'dpsk' or 'calibrated'")
        try:
            self.scheme.build()
        except (ValueError, TypeError) as exc:
            out.append(("scheme", str(exc)))
        r = self.reference
        need(r.keys_per_reference >= 1, "reference.keys_per_reference", "must be >= 1")
        need(r.list_size >= 1, "reference.list_size", "must be >= 1")
        need(r.period_pulses >= 0, "reference.period_pulses", "must be >= 0")
        need(r.period_pulses % (r.keys_per_reference + 1) == 0, "reference.period_pulses",
             "must be a multiple of keys_per_reference + 1 so a reference and its keys share a list")
        c = self.channel
        for name in ("length_km", "attenuation_db_per_km", "path_drift_step_deg", "delay_jitter_ns"):
            need(getattr(c, name) >= 0, f"channel.{name}", "must be nonnegative")
        for prefix, det in (("bob", self.bob), ("attack.detector", self.attack.detector)):
            need(det.equipment_sigma_deg >= 0, f"{prefix}.equipment_sigma_deg", "must be nonnegative")
            need(det.lo_drift_step_deg >= 0, f"{prefix}.lo_drift_step_deg", "must be nonnegative")
            try:
                det.noise_model()
            except (ValueError, TypeError) as exc:
                out.append((f"{prefix}.anchors_deg", str(exc)))
        m = self.monitors
        need(m.intensity_window >= 1, "monitors.intensity_window", "must be >= 1")
        need(m.intensity_z > 0, "monitors.intensity_z", "must be positive")
        need(m.delay_tolerance_ns >= 0, "monitors.delay_tolerance_ns", "must be nonnegative")
        a = self.attack
        need(a.kind in ATTACKS, "attack.kind", f"unknown attack {a.kind!r}; supported: {', '.join(ATTACKS)}")
        for name in ("tap1_position", "tap2_position", "position"):
            need(0 < getattr(a, name) < 1, f"attack.{name}", "must lie strictly between 0 and 1")
        for name in ("tap1_ratio", "tap2_ratio"):
            need(0 <= getattr(a, name) < 1, f"attack.{name}", "must lie in [0, 1)")
        need(a.inter_tap in ("calibrated", "drift"), "attack.inter_tap", "must be 'calibrated' or 'drift'")
        need(a.mode in ("dpsk", "direct"), "attack.mode", "must be 'dpsk' or 'direct'")
        need(a.leg in ("forward", "return"), "attack.leg", "must be 'forward' or 'return'")
        need(a.regeneration_amplitude_ratio >= 0, "attack.regeneration_amplitude_ratio",
             "must be nonnegative")
        return out

    # convenience accessors in internal units
    def noise_model(self) -> NoiseModel:
        return self.bob.noise_model()

    @property
    def group_size(self) -> int:
        return self.reference.keys_per_reference + 1


def _type_of(cls, name):
    return typing.get_type_hints(cls)[name]


def _is_dataclass_type(tp):
    return isinstance(tp, type) and dataclasses.is_dataclass(tp)


def _coerce(value, tp, path):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(value, inner[0], path)
    if _is_dataclass_type(tp):
        if not isinstance(value, dict):
            raise ConfigError("expected a mapping", path)
        return _from_dict(tp, value, path)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"expected true/false, got {value!r}", path)
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", path)
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", path)
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", path)
        return value
    if tp is list or origin is list:
        if not isinstance(value, list):
            raise ConfigError(f"expected a list, got {value!r}", path)
        return value
    return value


def _from_dict(cls, data: dict, prefix=""):
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        path = f"{prefix}.{key}" if prefix else str(key)
        if key not in known:
            raise ConfigError("unknown field", path)
        kwargs[key] = _coerce(value, _type_of(cls, key), path)
    for name, f in known.items():
        if name not in kwargs and f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            path = f"{prefix}.{name}" if prefix else name
            raise ConfigError("required field is missing", path)
    return cls(**kwargs)


def _key_lines(node, prefix="", out=None):
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = f"{prefix}.{k.value}" if prefix else k.value
            out[path] = k.start_mark.line + 1
            _key_lines(v, path, out)
    return out


def _line_for(lines: dict, path: str | None):
    if not path:
        return None
    parts = path.split(".")
    while parts:
        p = ".".join(parts)
        if p in lines:
            return lines[p]
        parts.pop()
    return None


def from_dict(data: dict) -> ExperimentConfig:
    return _from_dict(ExperimentConfig, data).validate()


def loads(text: str, source: str | None = None) -> ExperimentConfig:
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"cannot parse: {getattr(exc, 'problem', exc)}",
                          line=mark.line + 1 if mark else None, source=source) from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping", line=1, source=source)
    lines = _key_lines(node) if node is not None else {}
    try:
        return from_dict(data)
    except ConfigError as exc:
        line = _line_for(lines, exc.field_path)
        if line is None and exc.field_path and "." in exc.field_path:
            line = _line_for(lines, exc.field_path.rsplit(".", 1)[0])
        raise ConfigError(exc.message, exc.field_path, line, source) from None


def load(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", source=str(path)) from exc
    return loads(text, source=str(path))


def to_dict(cfg) -> dict:
    return dataclasses.asdict(cfg)


def dumps(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False, default_flow_style=None)


def with_override(cfg: ExperimentConfig, path: str, value) -> ExperimentConfig:
    """Copy of ``cfg`` with the dotted field ``path`` set to ``value``."""
    data = to_dict(cfg)
    node = data
    parts = path.split(".")
    for p in parts[:-1]:
        if not isinstance(node, dict) or p not in node:
            raise ConfigError("unknown field", path)
        node = node[p]
    if not isinstance(node, dict) or parts[-1] not in node:
        raise ConfigError("unknown field", path)
    node[parts[-1]] = value
    return from_dict(data)


def radians(deg):
    return float(np.radians(deg))
