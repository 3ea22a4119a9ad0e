import csv
import json

import numpy as np
import pytest

from qpke.config import dumps, with_override
from qpke.harness import presets
from qpke.harness.cli import main
from qpke.harness.report import PUBLIC_LEDGER_COLUMNS
from qpke.harness.sweep import SweepSpec, aggregate, load_sweep, run_sweep, write_sweep_csv
from qpke.config import ConfigError


@pytest.fixture
def cfg_file(tmp_path):
    cfg = with_override(presets.minimal(), "pulses", 2000)
    p = tmp_path / "cfg.yaml"
    p.write_text(dumps(cfg))
    return p


def test_run_writes_outputs(cfg_file, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", str(cfg_file), "--output-dir", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["throughput_fraction"] == 0.5 and "ber" in summary and "alarm_counts" in summary
    assert json.loads(capsys.readouterr().out) == summary
    with open(out / "ledger.csv") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == PUBLIC_LEDGER_COLUMNS
    assert len(rows) == 2001
    assert rows[2][1] == "key" and len(rows[2][3]) == 4 and rows[1][3] == ""
    assert (out / "constellation.csv").exists()


def test_debug_ledger_is_opt_in(tmp_path):
    cfg = with_override(with_override(presets.minimal(), "pulses", 100), "output.ledger_debug", True)
    p = tmp_path / "c.yaml"
    p.write_text(dumps(cfg))
    main(["run", str(p), "--output-dir", str(tmp_path / "o")])
    header = (tmp_path / "o" / "ledger.csv").read_text().splitlines()[0]
    assert "random_phase_deg" in header


def test_env_overrides_output_dir(cfg_file, tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("QPKE_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["run", str(cfg_file)]) == 0
    assert (tmp_path / "env" / "summary.json").exists()


def test_run_twice_identical(cfg_file, tmp_path, capsys):
    for d in ("a", "b"):
        main(["run", str(cfg_file), "--output-dir", str(tmp_path / d)])
    for name in ("summary.json", "ledger.csv", "constellation.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_invalid_config_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.yaml"
    p.write_text("master_seed: 1\nscheme:\n  phases: 6\n")
    assert main(["run", str(p)]) == 2
    err = capsys.readouterr().err
    assert f"{p}:2:" in err
    assert main(["run", str(tmp_path / "missing.yaml")]) == 2
    p.write_text("pulses: 4\n")
    assert main(["run", str(p)]) == 2
    assert "master_seed" in capsys.readouterr().err


def test_attack_command(cfg_file, tmp_path, capsys):
    assert main(["attack", str(cfg_file), "--attack", "intercept_resend", "--output-dir", str(tmp_path)]) == 0
    table = capsys.readouterr().out
    assert "Bob BER" in table and "attacker BER" in table and "alarms" in table
    assert main(["attack", str(cfg_file), "--attack", "mitm"]) == 2
    assert "intercept_resend, tapping" in capsys.readouterr().err


def test_attack_none_matches_run(cfg_file, tmp_path, capsys):
    main(["run", str(cfg_file), "--output-dir", str(tmp_path / "r")])
    run_ber = json.loads((tmp_path / "r" / "summary.json").read_text())["ber"]
    capsys.readouterr()
    main(["attack", str(cfg_file), "--output-dir", str(tmp_path / "a")])
    line = next(l for l in capsys.readouterr().out.splitlines() if l.startswith("Bob BER"))
    assert line.split()[2] == line.split()[3] == f"{run_ber:.4f}"


def test_constellation_command(cfg_file, tmp_path, capsys):
    assert main(["constellation", str(cfg_file), "--output-dir", str(tmp_path)]) == 0
    assert capsys.readouterr().out.startswith("symbol")
    assert (tmp_path / "constellation.csv").exists()


def test_preset_run(tmp_path, capsys):
    assert main(["run", "--preset", "nope"]) == 2
    assert main(["run", "--preset", "exact_cancellation", "--output-dir", str(tmp_path)]) == 0


class TestSweep:
    def test_empty_values(self):
        with pytest.raises(ConfigError):
            SweepSpec(("scheme.phases",), ())

    def test_distinct_seeds(self):
        spec = SweepSpec("scheme.phases", (4, 8), 3)
        ids = [c.session_id for _, _, _, c in spec.configs(presets.minimal())]
        assert len(set(ids)) == 6

    def test_spec_file(self, tmp_path, capsys):
        (tmp_path / "base.yaml").write_text("master_seed: 4\npulses: 1000\n")
        (tmp_path / "s.yaml").write_text("base: base.yaml\nparameter: scheme.phases\nvalues: [4, 8]\n"
                                         "replications: 2\noutput: out.csv\n")
        spec, base, out = load_sweep(tmp_path / "s.yaml")
        assert spec.values == (4, 8) and base.master_seed == 4 and out == "out.csv"
        assert main(["sweep", str(tmp_path / "s.yaml"), "--output-dir", str(tmp_path)]) == 0
        rows = (tmp_path / "out.csv").read_text().splitlines()
        assert len(rows) == 5 and rows[0].startswith("point,value,replication")
        (tmp_path / "e.yaml").write_text("base: base.yaml\nparameter: scheme.phases\nvalues: []\n")
        assert main(["sweep", str(tmp_path / "e.yaml")]) == 2
        (tmp_path / "b.yaml").write_text("base: base.yaml\nparameter: scheme.phases\nvalues: [5]\n")
        assert main(["sweep", str(tmp_path / "b.yaml")]) == 2

    def test_parallel_matches_serial(self, tmp_path):
        base = with_override(presets.canonical_tapping(2000), "attack.tap1_ratio", 0.05)
        spec = SweepSpec(("attack.tap2_ratio",), (0.01, 0.1), 2)
        a = write_sweep_csv(tmp_path / "a.csv", run_sweep(spec, base))
        b = write_sweep_csv(tmp_path / "b.csv", run_sweep(spec, base, parallel=True, workers=2))
        assert a.read_bytes() == b.read_bytes()

    def test_phase_count_sweep(self):
        base, spec = presets.phase_count(replications=2, pulses=40_000)
        rows = run_sweep(spec, base)
        _, att = aggregate(rows, "attacker_ber")
        _, bob = aggregate(rows, "ber")
        assert np.all(np.diff(att) > 0)
        assert np.all(np.diff(bob) > 0)
        # Bob stays below the attacker at every point and grows by less in absolute terms
        assert np.all(bob <= att) and np.all(bob[1:] < att[1:])
        assert bob[-1] - bob[0] < att[-1] - att[0]
        flags = [r["spacing_below_20_deg"] for r in rows]
        assert flags == [False] * 6 + [True] * 2

    def test_wide_tap_sweep_monotone(self):
        base, _ = presets.tap_tradeoff(replications=3, pulses=20_000)
        spec = SweepSpec(("attack.tap1_ratio", "attack.tap2_ratio"), (0.001, 0.003, 0.01, 0.03, 0.1, 0.5), 3)
        rows = run_sweep(spec, base)
        _, std = aggregate(rows, "attacker_phase_error_std_deg")
        _, alarm = aggregate(rows, "intensity_alarm_rate")
        assert np.all(np.diff(std) < 0)
        assert np.all(np.diff(alarm) >= 0) and alarm[-1] == 1.0
