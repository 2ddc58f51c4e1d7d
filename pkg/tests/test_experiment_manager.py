import json

import numpy as np
import pytest

from src.exceptions import ExperimentConfigError
from src.utils.experiment_manager import (
    ExperimentConfig, ExperimentManager, get_experiment_manager, load_config_file, parse_angle,
    parse_base, parse_grid_spec,
)


@pytest.mark.parametrize("text, value", [
    ("pi", np.pi),
    ("-pi/2", -np.pi / 2),
    ("2pi/3", 2 * np.pi / 3),
    ("3*pi/4", 3 * np.pi / 4),
    ("0.25", 0.25),
    (1, 1.0),
])
def test_parse_angle(text, value):
    assert parse_angle(text) == pytest.approx(value)


def test_parse_angle_rejects_garbage():
    with pytest.raises(ExperimentConfigError) as excinfo:
        parse_angle("tau/2")
    assert excinfo.value.key == "base"
    with pytest.raises(ExperimentConfigError):
        parse_angle(True)


def test_parse_base():
    assert parse_base("pi/2, pi/3") == pytest.approx((np.pi / 2, np.pi / 3))
    assert parse_base([0, "pi"]) == pytest.approx((0.0, np.pi))
    with pytest.raises(ExperimentConfigError):
        parse_base("0,0,0")


def test_parse_grid_spec():
    assert parse_grid_spec("logspace:-3:-1:3") == pytest.approx([1e-3, 1e-2, 1e-1])
    assert parse_grid_spec("linspace:0:1:5") == pytest.approx([0.0, 0.25, 0.5, 0.75, 1.0])
    assert parse_grid_spec([1, 10, 100]) == [1.0, 10.0, 100.0]
    for bad in ("geomspace:1:2:3", "logspace:a:b:c", ["x"]):
        with pytest.raises(ExperimentConfigError):
            parse_grid_spec(bad)


class TestExperimentConfig:
    def test_defaults(self):
        config = ExperimentConfig.from_dict({"subcommand": "flow"})
        assert config.base == (0.0, 0.0)
        assert config.init == "flat"
        assert config.p == [2.0]
        assert len(config.t_grid) == 20

    def test_conversions(self):
        config = ExperimentConfig.from_dict({
            "subcommand": "scan-lambda", "base": "pi,0", "t_grid": "logspace:-2:-1:4",
            "p": [2, 3, "inf"], "t_max": 10, "sample_times": [1, 2],
        })
        assert config.base == pytest.approx((np.pi, 0.0))
        assert len(config.t_grid) == 4
        assert config.p == [2.0, 3.0, float("inf")]
        assert isinstance(config.t_max, float)
        assert config.sample_times == [1.0, 2.0]

    @pytest.mark.parametrize("raw, key", [
        ({"subcommand": "flow", "gird": 8}, "gird"),
        ({"grid": 8}, "subcommand"),
        ({"subcommand": "integrate"}, "subcommand"),
        ({"subcommand": "flow", "grid": "8"}, "grid"),
        ({"subcommand": "flow", "grid": True}, "grid"),
        ({"subcommand": "flow", "grid": 7}, "grid"),
        ({"subcommand": "flow", "seed": -1}, "seed"),
        ({"subcommand": "flow", "t_max": False}, "t_max"),
        ({"subcommand": "scan-lambda", "p": 0.5}, "p"),
        ({"subcommand": "loja", "functions": ["quadratic", 3]}, "functions"),
    ])
    def test_rejections_name_the_key(self, raw, key):
        with pytest.raises(ExperimentConfigError) as excinfo:
            ExperimentConfig.from_dict(raw)
        assert excinfo.value.key == key
        assert key in str(excinfo.value)

    def test_to_dict_is_json_ready(self):
        config = ExperimentConfig.from_dict({"subcommand": "kuranishi", "mu": 1})
        json.dumps(config.to_dict())


class TestConfigFiles:
    def test_json_and_yaml(self, tmp_path):
        (tmp_path / "run.json").write_text('{"subcommand": "flow", "grid": 8}')
        (tmp_path / "run.yaml").write_text("subcommand: flow\ngrid: 8\n")
        assert load_config_file(tmp_path / "run.json") == load_config_file(tmp_path / "run.yaml")

    @pytest.mark.parametrize("name, text", [("bad.json", '{"subcommand": '), ("bad.yaml", "a: [1, 2"),
                                            ("list.json", "[1, 2]")])
    def test_malformed_files(self, tmp_path, name, text):
        (tmp_path / name).write_text(text)
        with pytest.raises(ExperimentConfigError) as excinfo:
            load_config_file(tmp_path / name)
        assert excinfo.value.key == "config"

    def test_missing_file(self, tmp_path):
        with pytest.raises(ExperimentConfigError):
            load_config_file(tmp_path / "missing.yaml")


class TestExperimentManager:
    def test_bundled_presets_load(self):
        manager = get_experiment_manager()
        assert manager.list_presets() == sorted([
            "kuranishi_cone", "lambda_morse_bott", "lambda_product", "lojasiewicz_corpus",
            "morse_bott_flow", "product_ray_flow", "retraction_batch",
        ])
        for name in manager.list_presets():
            info = manager.get_preset_info(name)
            assert info["description"]
            config = manager.build_config(preset=name, overrides={"subcommand": info["subcommand"]})
            assert config.subcommand == info["subcommand"]

    def test_unknown_preset(self):
        with pytest.raises(ExperimentConfigError) as excinfo:
            get_experiment_manager().get_preset("nope")
        assert excinfo.value.key == "preset"

    def test_layering(self, tmp_path):
        (tmp_path / "p.yaml").write_text("name: p\nsubcommand: flow\ngrid: 16\nseed: 3\nt_max: 5\n")
        (tmp_path / "override.json").write_text('{"subcommand": "flow", "seed": 4}')
        manager = ExperimentManager(tmp_path)
        config = manager.build_config(preset="p", config_path=tmp_path / "override.json",
                                      overrides={"subcommand": "flow", "t_max": 1.0, "grid": None})
        assert (config.grid, config.seed, config.t_max) == (16, 4, 1.0)

    def test_subcommand_mismatch(self, tmp_path):
        (tmp_path / "p.yaml").write_text("name: p\nsubcommand: loja\n")
        manager = ExperimentManager(tmp_path)
        with pytest.raises(ExperimentConfigError) as excinfo:
            manager.build_config(preset="p", overrides={"subcommand": "flow"})
        assert excinfo.value.key == "subcommand"

    def test_broken_preset_is_skipped(self, tmp_path):
        (tmp_path / "good.yaml").write_text("name: good\nsubcommand: flow\n")
        (tmp_path / "bad.yaml").write_text("name: bad\nsubcommand: flow\ngrid: 5\n")
        assert ExperimentManager(tmp_path).list_presets() == ["good"]

    def test_reload(self, tmp_path):
        manager = ExperimentManager(tmp_path)
        assert manager.list_presets() == []
        (tmp_path / "late.yaml").write_text("name: late\nsubcommand: selftest\n")
        manager.reload_presets()
        assert manager.list_presets() == ["late"]
