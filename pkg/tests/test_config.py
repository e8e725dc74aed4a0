"""Config resolution: presets, overrides, unknown keys, hashing."""

import pytest
import yaml

from sawlab.config import PRESETS, ExperimentConfig
from sawlab.errors import ConfigError


def test_defaults_resolve():
    cfg = ExperimentConfig.resolve()
    assert cfg.preset is None and cfg.seed == 0
    assert cfg.model.with_arms


@pytest.mark.parametrize("name, forces, durations", [
    ("single-contact", [200.0, 800.0], [0.02, 0.02]),
    ("single-contact-plus-plus", [20.0, 200.0], [0.2, 0.5]),
    ("balance-smoke", [20.0, 60.0], [0.02, 0.02]),
])
def test_preset_push_ranges(name, forces, durations):
    cfg = ExperimentConfig.resolve(preset=name)
    assert list(cfg.sim.push.force_range) == forces
    assert list(cfg.sim.push.duration_range) == durations
    assert cfg.sim.push.probability == 0.01


def test_balance_smoke_shape():
    cfg = ExperimentConfig.resolve(preset="balance-smoke")
    assert tuple(cfg.policy.hidden) == (16, 16)
    assert not cfg.model.with_arms
    assert not cfg.domain_randomization.enabled
    assert cfg.ppo.eval_episodes == 20


def test_file_overrides_preset_and_cli_overrides_file():
    cfg = ExperimentConfig.resolve({"preset": "balance-smoke", "ppo": {"lr": 5e-4}, "seed": 3},
                                   overrides={"seed": 9, "ppo": {"iterations": 7}})
    assert cfg.ppo.lr == 5e-4 and cfg.ppo.iterations == 7 and cfg.seed == 9
    assert cfg.ppo.batch_steps == PRESETS["balance-smoke"]["ppo"]["batch_steps"]


@pytest.mark.parametrize("data", [
    {"bogus": 1},
    {"ppo": {"learning_rate": 1e-3}},
    {"sim": {"push": {"force": 3}}},
    {"ppo": {"gamma": 1.5}},
    {"seed": "abc"},
    {"policy": [1, 2]},
])
def test_bad_config_rejected(data):
    with pytest.raises(ConfigError):
        ExperimentConfig.resolve(data)


def test_unknown_preset():
    with pytest.raises(ConfigError):
        ExperimentConfig.resolve(preset="moonwalk")


def test_load_from_yaml(tmp_path):
    p = tmp_path / "exp.yaml"
    p.write_text(yaml.safe_dump({"preset": "single-contact", "seed": 4}))
    cfg = ExperimentConfig.load(p)
    assert cfg.preset == "single-contact" and cfg.seed == 4
    (tmp_path / "bad.yaml").write_text("a: [1,\n")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "bad.yaml")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "missing.yaml")


def test_written_config_round_trips(tmp_path):
    cfg = ExperimentConfig.resolve(preset="balance-smoke", overrides={"seed": 2})
    back = ExperimentConfig.load(cfg.write(tmp_path / "c.yaml"))
    assert back.to_dict() == cfg.to_dict()
    assert back.hash() == cfg.hash()


def test_hash_ignores_out_but_not_seed():
    a = ExperimentConfig.resolve(overrides={"out": "x"})
    b = ExperimentConfig.resolve(overrides={"out": "y"})
    c = ExperimentConfig.resolve(overrides={"seed": 1})
    assert a.hash() == b.hash() != c.hash()


def test_default_grid_scales_with_weight():
    cfg = ExperimentConfig.resolve(preset="balance-smoke")
    g = cfg.grid()
    w = cfg.model.total_mass * cfg.sim.gravity
    assert g.forces[0] == pytest.approx(79.0 * w / 428.0)
    assert g.forces[-1] == pytest.approx(214.0 * w / 428.0)
    assert cfg.grid(forces=[5.0, 10.0]).forces == [5.0, 10.0]
