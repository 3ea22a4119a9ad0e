"""File outputs. Phases are written in degrees; floats use fixed formats so
repeated runs are byte-identical."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from ..detection import write_constellation_csv
from ..modulation import int_to_bits
from ..protocol import SessionResult

PUBLIC_LEDGER_COLUMNS = ("index", "role", "bob_measured_phase_deg", "decoded_bits")
DEBUG_LEDGER_COLUMNS = ("alice_bits", "kept", "random_phase_deg", "key_phase_deg", "path_phase_deg", "lo_phase_deg")


def _clean(obj):
    """JSON-safe copy: NaN/inf become null, numpy scalars become Python ones."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return None if not math.isfinite(x) else round(x, 12)
    return obj


def summary_text(result: SessionResult) -> str:
    return json.dumps(_clean(result.summary()), indent=2, sort_keys=True) + "\n"


def write_summary(path, result: SessionResult) -> Path:
    path = Path(path)
    path.write_text(summary_text(result))
    return path


def _bits_str(value, width):
    if value < 0:
        return ""
    return "".join(str(b) for b in int_to_bits(int(value), width))


def _deg(x):
    return "" if not np.isfinite(x) else f"{np.degrees(x):.6f}"


def write_ledger(path, result: SessionResult, debug: bool = False) -> Path:
    """Per-pulse ledger. Bob's random phases and the other true phases only
    appear with ``debug``; the public columns never include them."""
    if result.ledger is None:
        raise ValueError("session was run without collect_ledger=True")
    led = result.ledger
    width = result.config.scheme.build().bits_per_symbol
    path = Path(path)
    cols = PUBLIC_LEDGER_COLUMNS + (DEBUG_LEDGER_COLUMNS if debug else ())
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for i in range(led["index"].size):
            role = "reference" if led["role"][i] == 0 else "key"
            row = [int(led["index"][i]), role, _deg(led["bob_phase"][i]), _bits_str(led["bob_value"][i], width)]
            if debug:
                row += [_bits_str(led["alice_value"][i], width), int(bool(led["kept"][i])),
                        _deg(led["random_phase"][i]), _deg(led["key_phase"][i]), _deg(led["path_phase"][i]), _deg(led["lo_phase"][i])]
            w.writerow(row)
    return path


def write_constellation(path, result: SessionResult) -> Path:
    c = result.constellation
    if c is None:
        raise ValueError("session was run without collect_ledger=True")
    write_constellation_csv(path, c["index"], c["symbol"], c["phase"], c["ring"])
    return Path(path)


def write_session_outputs(directory, result: SessionResult) -> dict:
    """Summary, ledger and constellation files as enabled by the config."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    opts = result.config.output
    files = {"summary": write_summary(out / "summary.json", result)}
    if opts.ledger:
        files["ledger"] = write_ledger(out / "ledger.csv", result, debug=opts.ledger_debug)
    if opts.constellation:
        files["constellation"] = write_constellation(out / "constellation.csv", result)
    return files


def attack_table(baseline: SessionResult, attacked: SessionResult) -> str:
    """Side-by-side comparison of a clean and an attacked session."""
    rows = [("metric", "no attack", attacked.config.attack.kind)]

    def fmt(x, pct=False):
        if x is None or (isinstance(x, float) and not math.isfinite(x)):
            return "-"
        return f"{x:.4f}" if not pct else f"{100 * x:.2f}%"

    def total_alarms(r):
        return sum(v for k, v in r.alarm_counts.items())

    rep = attacked.attack
    rows += [
        ("Bob BER", fmt(baseline.ber), fmt(attacked.ber)),
        ("Bob symbol error rate", fmt(baseline.symbol_error_rate), fmt(attacked.symbol_error_rate)),
        ("Bob phase error std (deg)", fmt(np.degrees(baseline.bob_phase_error_std)),
         fmt(np.degrees(attacked.bob_phase_error_std))),
        ("attacker BER", "-", fmt(rep.attacker_ber_vs_alice) if rep else "-"),
        ("attacker symbol error rate", "-", fmt(rep.symbol_error_rate) if rep else "-"),
        ("attacker phase error std (deg)", "-", fmt(np.degrees(rep.phase_error_std)) if rep else "-"),
        ("intensity alarm rate", fmt(baseline.intensity_alarm_rate), fmt(attacked.intensity_alarm_rate)),
        ("alarms (all kinds)", str(total_alarms(baseline)), str(total_alarms(attacked))),
        ("kept key pulses", str(baseline.kept_key_pulses), str(attacked.kept_key_pulses)),
    ]
    if rep is not None and math.isfinite(rep.nominal_sigma):
        rows += [
            ("nominal attacker sigma (deg)", "-", fmt(np.degrees(rep.nominal_sigma))),
            ("two-point phase budget (deg)", "-", fmt(np.degrees(rep.worst_case_two_point))),
            ("DPSK phase budget (deg)", "-", fmt(np.degrees(rep.worst_case_dpsk))),
        ]
    widths = [max(len(r[i]) for r in rows) for i in range(3)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def constellation_table(stats) -> str:
    lines = ["symbol  count  centroid_deg  phase_std_deg  ring_mean  ring_std"]
    for s in stats:
        lines.append(f"{s.symbol:>6}  {s.count:>5}  {np.degrees(s.centroid_phase):>12.3f}  "
                     f"{np.degrees(s.phase_std):>13.3f}  {s.centroid_ring:>9.4f}  {s.ring_std:>8.4f}")
    return "\n".join(lines) + "\n"
