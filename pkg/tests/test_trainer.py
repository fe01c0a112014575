"""End-to-end tests of the training loop on a tiny configuration."""
import json

import numpy as np
import pytest

import driqn.agents as agents
from driqn.checkpoint import read_checkpoint
from driqn.config import AgentKind, NoiseConfig
from driqn.evaluation import read_metrics
from driqn.qnet import NumericalFault
from driqn.trainer import Trainer, TrainStreams, train
from driqn.types import ConfigError, NoiseKind

from tests.conftest import small_config

SIX = ("SR", "CR", "TR", "FCR", "AT", "AE")


def single_kind(agent: AgentKind, **changes):
    return small_config(agent, noise=NoiseConfig(kinds=(NoiseKind.GAUSSIAN,), intensity=0.6), **changes)


class TestRunDirectory:
    def test_layout(self, small_cfg, tmp_path):
        run_dir = train(small_cfg, 0, tmp_path / "run")
        meta = json.loads((run_dir / "run.json").read_text())
        assert meta["agent"] == "driqn"
        assert meta["eval_seeds"] == small_cfg.eval_seeds
        rows = read_metrics(run_dir / "metrics.csv")
        assert [r["step"] for r in rows] == [75, 150]
        for r in rows:
            assert r["SR"] + r["CR"] + r["TR"] == pytest.approx(1.0)
            assert r["mean_lambda_entropy"] is not None
        assert (run_dir / "checkpoints" / "step_150.ckpt").exists()
        assert (run_dir / "trajectories" / "step_75" / "episode_1.csv").exists()
        lines = (run_dir / "dro_log.jsonl").read_text().splitlines()
        assert len(lines) > 0
        record = json.loads(lines[-1])
        assert sum(record["lam"]) == pytest.approx(1.0, abs=1e-9)

    def test_checkpoint_carries_config(self, small_cfg, tmp_path):
        run_dir = train(small_cfg, 0, tmp_path / "run")
        _, meta, target = read_checkpoint(run_dir / "checkpoints" / "step_150.ckpt")
        assert meta["step"] == 150
        assert meta["seed"] == 0
        assert meta["config"]["agent"] == "driqn"
        assert target is not None

    def test_plain_agents_have_no_dro_log(self, tmp_path):
        run_dir = train(small_config(AgentKind.DQN), 0, tmp_path / "dqn")
        assert not (run_dir / "dro_log.jsonl").exists()
        assert all(r["mean_lambda_entropy"] is None for r in read_metrics(run_dir / "metrics.csv"))

    def test_planners_are_not_trained(self, tmp_path):
        with pytest.raises(ConfigError):
            Trainer(small_config(AgentKind.BUG), 0, tmp_path / "bug")


class TestDeterminism:
    def test_same_seed_same_log(self, small_cfg, tmp_path):
        a = train(small_cfg, 3, tmp_path / "a")
        b = train(small_cfg, 3, tmp_path / "b")
        assert (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()

    def test_streams_are_independent(self):
        s = TrainStreams.from_seed(0)
        draws = [g.random() for g in (s.init, s.env, s.noise, s.act, s.sample)]
        assert len(set(draws)) == 5

    def test_single_subgroup_robust_run_matches_iqn(self, tmp_path):
        iqn = train(single_kind(AgentKind.IQN), 1, tmp_path / "iqn")
        robust = train(single_kind(AgentKind.DRIQN), 1, tmp_path / "driqn")
        for x, y in zip(read_metrics(iqn / "metrics.csv"), read_metrics(robust / "metrics.csv")):
            assert [x[m] for m in SIX] == [y[m] for m in SIX]
            assert x["grad_norm"] == y["grad_norm"]
        a, _, _ = read_checkpoint(iqn / "checkpoints" / "step_150.ckpt")
        b, _, _ = read_checkpoint(robust / "checkpoints" / "step_150.ckpt")
        assert np.array_equal(a.theta, b.theta)

    def test_evaluation_does_not_shift_training(self, tmp_path):
        often = train(small_config(eval_interval=75), 2, tmp_path / "often")
        rarely = train(small_config(eval_interval=150), 2, tmp_path / "rarely")
        a, _, _ = read_checkpoint(often / "checkpoints" / "step_150.ckpt")
        b, _, _ = read_checkpoint(rarely / "checkpoints" / "step_150.ckpt")
        assert np.array_equal(a.theta, b.theta)


class TestFaults:
    def test_numerical_fault_writes_dump(self, small_cfg, tmp_path, monkeypatch):
        def explode(self, batches, step):
            raise NumericalFault("non-finite loss", layer="hidden.W", dump={"update": self.updates})

        monkeypatch.setattr(agents.Learner, "update", explode)
        with pytest.raises(NumericalFault):
            train(small_cfg, 0, tmp_path / "run")
        dump = json.loads((tmp_path / "run" / "fault.json").read_text())
        assert dump["layer"] == "hidden.W"
        assert dump["step"] >= small_cfg.replay.min_fill
        assert dump["update"] == 0
