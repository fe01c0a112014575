"""Tests for run configuration loading, profiles and hashing."""
from pathlib import Path

import pytest

from driqn.config import (
    PROFILES, AgentKind, RestGradient, RunConfig, Strategy, config_from_dict, config_hash, config_to_dict,
    dump_config, load_config, profile_config,
)
from driqn.types import ConfigError, NoiseKind

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


class TestDefaults:
    def test_declared_values(self):
        cfg = RunConfig()
        assert cfg.agent is AgentKind.DRIQN
        assert cfg.strategy is Strategy.GREEDY
        assert cfg.total_steps == 50_000
        assert cfg.eval_envs == 15
        assert cfg.distrl.n == cfg.distrl.n_prime == 8
        assert cfg.distrl.k == 32
        assert cfg.distrl.gamma == 0.99
        assert cfg.replay.batch_size == 32
        assert cfg.dro.shrink_cap == 1.0
        assert cfg.dro.rest_gradient is RestGradient.UNIFORM

    def test_eval_seeds_frozen(self):
        cfg = RunConfig(eval_envs=3, eval_seed_base=500)
        assert cfg.eval_seeds == [500, 501, 502]

    def test_agent_kind_properties(self):
        assert not AgentKind.APF.learned
        assert AgentKind.DQN.learned and not AgentKind.DQN.distributional
        assert AgentKind.IQN.distributional and not AgentKind.IQN.robust
        assert AgentKind.DRIQN_W.robust
        assert AgentKind("driqn-w") is AgentKind.DRIQN_W


class TestProfiles:
    def test_desk(self):
        cfg = profile_config("desk")
        assert (cfg.total_steps, cfg.eval_interval, cfg.eval_envs) == (50_000, 5000, 15)
        assert len(cfg.seeds) == 3
        assert (cfg.optim.lr_start, cfg.optim.lr_end) == (1e-4, 1e-6)
        assert cfg.desk_scale

    def test_full(self):
        cfg = profile_config("full")
        assert cfg.total_steps == 1_500_000
        assert cfg.eval_interval == 10_000
        assert len(cfg.seeds) == 9
        assert not cfg.desk_scale

    def test_multi_noise_has_four_subgroups(self):
        cfg = profile_config("multi_noise")
        assert len(cfg.noise.kinds) == 4
        assert cfg.noise.intensity == 0.2
        assert (cfg.optim.lr_start, cfg.optim.lr_end) == (1e-4, 1e-6)

    def test_overrides_win(self):
        cfg = profile_config("desk", optim={"lr_end": 1e-5})
        assert cfg.optim.lr_start == 1e-4
        assert cfg.optim.lr_end == 1e-5

    def test_unknown_profile(self):
        with pytest.raises(ConfigError, match="unknown profile"):
            config_from_dict({"profile": "nope"})

    def test_every_profile_validates(self):
        for name in PROFILES:
            profile_config(name)


class TestDocuments:
    def test_unknown_key_named(self):
        with pytest.raises(ConfigError) as exc:
            config_from_dict({"distrl": {"n_quantiles": 8}})
        assert exc.value.key == "distrl.n_quantiles"

    def test_bad_enum(self):
        with pytest.raises(ConfigError, match="driqn-w"):
            config_from_dict({"agent": "rainbow"})

    def test_bad_type(self):
        with pytest.raises(ConfigError) as exc:
            config_from_dict({"total_steps": "many"})
        assert exc.value.key == "total_steps"

    def test_range_check(self):
        with pytest.raises(ConfigError) as exc:
            config_from_dict({"noise": {"intensity": 1.5}})
        assert exc.value.key == "noise.intensity"

    def test_duplicate_noise_kind(self):
        with pytest.raises(ConfigError):
            config_from_dict({"noise": {"kinds": ["gaussian", "gaussian"]}})

    def test_nested_values_coerced(self):
        cfg = config_from_dict({"noise": {"kinds": ["occlusion"]}, "dro": {"rest_gradient": "weighted",
                                                                            "lr_last": 1}})
        assert cfg.noise.kinds == (NoiseKind.OCCLUSION,)
        assert cfg.dro.rest_gradient is RestGradient.WEIGHTED
        assert cfg.dro.lr_last == 1.0

    def test_round_trip(self, small_cfg, tmp_path):
        assert config_from_dict(config_to_dict(small_cfg)) == small_cfg
        dump_config(small_cfg, tmp_path / "cfg.yaml")
        assert load_config(tmp_path / "cfg.yaml") == small_cfg

    def test_yaml_fixture_matches_dataclass(self, small_cfg, small_yaml):
        assert load_config(small_yaml()) == small_cfg

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "absent.yaml")

    def test_malformed_yaml(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("agent: [driqn\n")
        with pytest.raises(ConfigError, match="malformed"):
            load_config(path)

    def test_non_mapping(self, tmp_path):
        path = tmp_path / "list.yaml"
        path.write_text("- driqn\n")
        with pytest.raises(ConfigError, match="mapping"):
            load_config(path)

    def test_empty_document_is_defaults(self, tmp_path):
        path = tmp_path / "empty.yaml"
        path.write_text("")
        assert load_config(path) == RunConfig()

    @pytest.mark.parametrize("name", ["desk", "desk_iqn", "desk_dqn", "desk_adaptive", "multi_noise", "full"])
    def test_shipped_configs_load(self, name):
        cfg = load_config(CONFIGS / f"{name}.yaml")
        assert cfg.agent.learned


class TestHash:
    def test_stable(self, small_cfg):
        assert config_hash(small_cfg) == config_hash(config_from_dict(config_to_dict(small_cfg)))
        assert len(config_hash(small_cfg)) == 64

    def test_sensitive(self, small_cfg):
        assert config_hash(small_cfg) != config_hash(small_cfg.replace(total_steps=151))
