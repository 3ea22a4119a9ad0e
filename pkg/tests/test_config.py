import pytest
from hypothesis import given
from hypothesis import strategies as st

from qpke.config import ConfigError, ExperimentConfig, dumps, from_dict, load, loads, to_dict, with_override


def test_minimal():
    cfg = loads("master_seed: 3\n")
    assert cfg.master_seed == 3 and cfg.scheme.phases == 16 and cfg.reference.keys_per_reference == 1


def test_missing_seed_names_field():
    with pytest.raises(ConfigError) as e:
        loads("pulses: 10\n", source="x.yaml")
    assert e.value.field_path == "master_seed"
    assert "master_seed" in str(e.value)


def test_error_carries_line():
    text = "master_seed: 1\nscheme:\n  kind: psk\n  phases: 12\n"
    with pytest.raises(ConfigError) as e:
        loads(text, source="c.yaml")
    assert e.value.line == 2 and str(e.value).startswith("c.yaml:2:")
    text = "master_seed: 1\nchannel:\n  length_km: -5\n"
    with pytest.raises(ConfigError) as e:
        loads(text)
    assert e.value.line == 3 and e.value.field_path == "channel.length_km"


def test_unknown_field_and_types():
    with pytest.raises(ConfigError) as e:
        loads("master_seed: 1\nchanel: {}\n")
    assert e.value.field_path == "chanel" and e.value.line == 2
    with pytest.raises(ConfigError):
        loads("master_seed: one\n")
    with pytest.raises(ConfigError):
        loads("master_seed: 1\nmonitors:\n  drop_on_alarm: 3\n")
    with pytest.raises(ConfigError):
        loads("- a\n- b\n")
    with pytest.raises(ConfigError) as e:
        loads("master_seed: [1\n")
    assert e.value.line is not None


def test_unknown_attack_lists_supported():
    with pytest.raises(ConfigError) as e:
        loads("master_seed: 1\nattack:\n  kind: mitm\n")
    assert "intercept_resend" in str(e.value) and "tapping" in str(e.value)


def test_period_must_hold_whole_groups():
    with pytest.raises(ConfigError):
        from_dict({"master_seed": 1, "reference": {"keys_per_reference": 2, "period_pulses": 10000}})


def test_unreadable(tmp_path):
    with pytest.raises(ConfigError):
        load(tmp_path / "nope.yaml")


def test_override():
    cfg = ExperimentConfig(master_seed=1)
    assert with_override(cfg, "attack.tap1_ratio", 0.3).attack.tap1_ratio == 0.3
    with pytest.raises(ConfigError):
        with_override(cfg, "attack.nope", 1)
    with pytest.raises(ConfigError):
        with_override(cfg, "scheme.phases", 5)


@given(st.integers(0, 2**32), st.sampled_from([4, 8, 16, 32]), st.floats(0, 50), st.sampled_from(["none", "tapping"]),
       st.one_of(st.none(), st.integers(1, 4096)))
def test_roundtrip(seed, m, length, attack, alphabet):
    cfg = from_dict({"master_seed": seed, "scheme": {"phases": m}, "channel": {"length_km": length},
                     "attack": {"kind": attack}, "randomizer_alphabet_size": alphabet})
    again = loads(dumps(cfg))
    assert again == cfg
    assert dumps(again) == dumps(cfg)
    assert to_dict(again) == to_dict(cfg)
