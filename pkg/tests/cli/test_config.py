"""
Tests for the layered run configuration.
"""
from pathlib import Path

import pytest

from cli.config import RunConfig, load_run_config
from services.pose_solver import PnPMode
from training.losses import LossWeights
from utils.errors import ConfigError

ROOT = Path(__file__).resolve().parents[2]


def test_builtin_defaults():
    cfg = load_run_config()
    assert cfg == RunConfig()
    assert cfg.eval.iou_threshold == 0.7 and cfg.eval.interpolation == 11
    assert cfg.eval.alp_distances == (1.0, 2.0)
    assert cfg.inference.nms_threshold == 0.5 and cfg.inference.max_proposals == 200
    assert cfg.camera.fx == pytest.approx(721.5377)
    assert cfg.pnp.mode is PnPMode.YAW
    assert cfg.run.seed == 0


def test_bundled_config_matches_defaults(monkeypatch):
    for var in ("VEHICLE3D_BANK", "VEHICLE3D_CALIB", "VEHICLE3D_OUT", "VEHICLE3D_SEED"):
        monkeypatch.delenv(var, raising=False)
    cfg = load_run_config(str(ROOT / "config.yaml"))
    assert cfg.paths.bank == "data/shape_bank.json" and cfg.paths.calib is None
    assert cfg.eval == RunConfig().eval
    assert cfg.loss == LossWeights.preset("all_tasks")
    assert cfg.run.seed == 0


def test_environment_placeholders(monkeypatch):
    monkeypatch.setenv("VEHICLE3D_SEED", "5")
    monkeypatch.setenv("VEHICLE3D_OUT", "/tmp/runs")
    cfg = load_run_config(str(ROOT / "config.yaml"))
    assert cfg.run.seed == 5 and cfg.paths.out == "/tmp/runs"


def test_overrides_win_over_file(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("eval:\n  interpolation: 41\n  difficulty: hard\npnp:\n  mode: 6dof\n")
    cfg = load_run_config(str(path))
    assert cfg.eval.interpolation == 41 and cfg.pnp.mode is PnPMode.FULL_6DOF
    cfg = load_run_config(str(path), {"eval": {"interpolation": 11, "difficulty": None}})
    assert cfg.eval.interpolation == 11 and cfg.eval.difficulty == "hard"


@pytest.mark.parametrize("text", [
    "bogus:\n  x: 1\n",
    "eval:\n  bogus: 1\n",
    "run:\n  seed: abc\n",
    "eval:\n  interpolation: 12\n",
    "loss:\n  preset: everything\n",
    "eval: [1, 2]\n",
    "- a\n- b\n",
])
def test_malformed_config_raises(tmp_path, text):
    path = tmp_path / "bad.yaml"
    path.write_text(text)
    with pytest.raises(ConfigError):
        load_run_config(str(path))


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(str(tmp_path / "absent.yaml"))


def test_to_dict_is_json_ready():
    data = RunConfig().to_dict()
    assert data["pnp"]["mode"] == "yaw"
    assert data["eval"]["alp_distances"] == [1.0, 2.0]
    assert set(data) >= {"paths", "camera", "eval", "loss", "pnp", "noise", "scene", "run"}
    assert "anchors" not in data
    with pytest.raises(ConfigError):
        load_run_config(overrides={"anchors": {"stride": 16.0}})
