import json

import pytest

from bellforge.config import (NoiseSpec, RunConfig, SpecialsSpec, config_from_dict, load_config,
                              thread_count)
from bellforge.errors import ConfigError


def write_config(tmp_path, raw):
    target = tmp_path / "config.json"
    target.write_text(json.dumps(raw), encoding="utf-8")
    return target


def test_defaults_without_a_file():
    config = load_config(None)
    assert config == RunConfig()
    assert config.specials.explicit is None
    assert not config.noise.active


def test_load_full_config(tmp_path):
    config = load_config(write_config(tmp_path, {
        "n": 3,
        "specials": ["123", "333"],
        "noise": {"kind": "depolarizing", "p": 0.05},
        "trials_per_cell": 200,
        "seed": 42,
    }))
    assert config.n == 3
    assert config.specials.explicit == ["123", "333"]
    assert config.noise == NoiseSpec("depolarizing", 0.05)
    assert config.noise.active
    assert config.trials_per_cell == 200


def test_random_specials_section():
    config = config_from_dict({"specials": {"count": 4, "min_z_fraction": 0.5}})
    assert config.specials == SpecialsSpec(count=4, min_z_fraction=0.5)
    with pytest.raises(ConfigError):
        config_from_dict({"specials": {"count": 4, "draws": 2}})
    with pytest.raises(ConfigError):
        config_from_dict({"specials": "123"})


def test_numbers_are_coerced():
    config = config_from_dict({"n": "2", "alpha": "0.05"})
    assert config.n == 2
    assert config.alpha == pytest.approx(0.05)
    with pytest.raises(ConfigError):
        config_from_dict({"n": "two"})


@pytest.mark.parametrize("raw", [
    {"colour": "blue"},
    {"alpha": 1.0},
    {"alpha": 0.0},
    {"n": 0},
    {"m": 1},
    {"trials_per_cell": -1},
    {"gate": -0.5},
    {"seed": -1},
    {"specials": []},
    {"specials": {"count": 0}},
    {"specials": {"min_z_fraction": 1.5}},
    {"noise": {"kind": "amplitude"}},
    {"noise": {"kind": "depolarizing", "p": 2.0}},
    {"noise": {"kind": "none", "p": 0.1}},
    {"noise": [0.1]},
])
def test_invalid_configs(raw):
    with pytest.raises(ConfigError):
        config_from_dict(raw)


def test_unreadable_config(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.json")
    target = tmp_path / "broken.json"
    target.write_text("{", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(target)
    target.write_text("[1, 2]", encoding="utf-8")
    with pytest.raises(ConfigError, match="object"):
        load_config(target)


def test_overrides():
    config = RunConfig().with_overrides(seed=7, out=None, gate=0.5)
    assert config.seed == 7
    assert config.gate == 0.5
    assert config.out == RunConfig().out
    with pytest.raises(ConfigError):
        RunConfig().with_overrides(alpha=2.0)
    with pytest.raises(ConfigError, match="Unknown"):
        RunConfig().with_overrides(colour="blue")


def test_thread_count(monkeypatch):
    monkeypatch.delenv("BELLFORGE_THREADS", raising=False)
    assert thread_count() == 1
    monkeypatch.setenv("BELLFORGE_THREADS", "4")
    assert thread_count() == 4
    monkeypatch.setenv("BELLFORGE_THREADS", " ")
    assert thread_count() == 1
    for bad in ("0", "many"):
        monkeypatch.setenv("BELLFORGE_THREADS", bad)
        with pytest.raises(ConfigError):
            thread_count()
