"""Parameter sweeps with replications.

Every (point, replication) pair runs as its own session id under the base
config's master seed, so each gets an independent derived RNG family and
results do not depend on execution order.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from ..config import ConfigError, ExperimentConfig, from_dict, load, to_dict, with_override
from ..protocol import run_session

SWEEP_COLUMNS = (
    "point", "value", "replication", "session_id", "ber", "symbol_error_rate", "bob_phase_error_std_deg",
    "attacker_ber", "attacker_symbol_error_rate", "attacker_phase_error_std_deg", "intensity_alarm_rate",
    "delay_alarms", "kept_key_pulses", "throughput_fraction", "phase_spacing_deg", "spacing_below_20_deg",
)


@dataclass(frozen=True)
class SweepSpec:
    parameters: tuple  # dotted config paths, all set to the swept value
    values: tuple
    replications: int = 1

    def __post_init__(self):
        if isinstance(self.parameters, str):
            object.__setattr__(self, "parameters", (self.parameters,))
        if not self.parameters:
            raise ConfigError("at least one parameter path is required", "parameter")
        if len(self.values) == 0:
            raise ConfigError("value list is empty", "values")
        if self.replications < 1:
            raise ConfigError("must be >= 1", "replications")

    def session_id(self, point: int, rep: int) -> int:
        return point * self.replications + rep

    def configs(self, base: ExperimentConfig):
        """-> list of (point, value, rep, config), in row order."""
        out = []
        for p, v in enumerate(self.values):
            cfg = base
            for path in self.parameters:
                cfg = with_override(cfg, path, v)
            for r in range(self.replications):
                out.append((p, v, r, with_override(cfg, "session_id", self.session_id(p, r))))
        return out


def load_sweep(path):
    """Sweep spec file -> (SweepSpec, base config, output path or None).

    ``base`` is either a path to a config file (relative to the spec) or an
    inline mapping.
    """
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read sweep spec: {exc.strerror}", source=str(path)) from exc
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"cannot parse: {getattr(exc, 'problem', exc)}",
                          line=mark.line + 1 if mark else None, source=str(path)) from exc
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping", line=1, source=str(path))
    for key in ("base", "parameter", "values"):
        if key not in data:
            raise ConfigError("required field is missing", key, source=str(path))
    base = data["base"]
    try:
        base_cfg = load(path.parent / base) if isinstance(base, str) else from_dict(base)
        params = data["parameter"]
        values = data["values"]
        if not isinstance(values, list):
            raise ConfigError("expected a list", "values")
        spec = SweepSpec(tuple(params) if isinstance(params, list) else (params,), tuple(values),
                         int(data.get("replications", 1)))
        spec.configs(base_cfg)  # validate every override up front
    except ConfigError as exc:
        if exc.source:
            raise
        raise ConfigError(exc.message, exc.field_path, exc.line, str(path)) from None
    return spec, base_cfg, data.get("output")


def _row(args):
    point, value, rep, cfg = args
    res = run_session(cfg)
    s = res.summary()
    att = s.get("attack", {})
    return {
        "point": point,
        "value": value,
        "replication": rep,
        "session_id": cfg.session_id,
        "ber": s["ber"],
        "symbol_error_rate": s["symbol_error_rate"],
        "bob_phase_error_std_deg": s["bob_phase_error_std_deg"],
        "attacker_ber": att.get("attacker_ber_vs_alice", math.nan),
        "attacker_symbol_error_rate": att.get("attacker_symbol_error_rate", math.nan),
        "attacker_phase_error_std_deg": att.get("attacker_phase_error_std_deg", math.nan),
        "intensity_alarm_rate": s["intensity_alarm_rate"],
        "delay_alarms": s["alarm_counts"].get("delay", 0),
        "kept_key_pulses": s["kept_key_pulses"],
        "throughput_fraction": s["throughput_fraction"],
        "phase_spacing_deg": s["phase_spacing_deg"],
        "spacing_below_20_deg": s["spacing_below_20_deg"],
    }


def run_sweep(spec: SweepSpec, base: ExperimentConfig, parallel: bool = False, workers: int | None = None) -> list:
    jobs = spec.configs(base)
    if parallel:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_row, jobs))
    else:
        rows = [_row(j) for j in jobs]
    return sorted(rows, key=lambda r: (r["point"], r["replication"]))


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return "nan" if not math.isfinite(x) else f"{x:.10g}"
    return str(x)


def write_sweep_csv(path, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in SWEEP_COLUMNS])
    return path


def aggregate(rows, column: str):
    """Mean of ``column`` per point -> (values, means)."""
    points = sorted({r["point"] for r in rows})
    vals = [next(r["value"] for r in rows if r["point"] == p) for p in points]
    means = [float(np.nanmean([r[column] for r in rows if r["point"] == p])) for p in points]
    return vals, np.array(means)


def sweep_spec_dict(spec: SweepSpec, base: ExperimentConfig) -> dict:
    return {"base": to_dict(base), "parameter": list(spec.parameters), "values": list(spec.values),
            "replications": spec.replications}
