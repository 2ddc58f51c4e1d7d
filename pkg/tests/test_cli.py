import json

import pandas as pd
import pytest

from main import build_parser, dispatch

INTERIOR_ARGS = ["--grid", "8", "--base", "pi/2,pi/3"]


def test_parser_lists_every_subcommand():
    help_text = build_parser().format_help()
    for name in ("flow", "retract", "scan-lambda", "pillowcase", "kuranishi", "loja", "selftest", "presets"):
        assert name in help_text


def test_presets(capsys):
    assert dispatch(["presets"]) == 0
    out = capsys.readouterr().out
    assert "product_ray_flow" in out
    assert "[scan-lambda]" in out


class TestExitCodes:
    def test_missing_subcommand(self):
        assert dispatch([]) == 2

    def test_unknown_option(self):
        assert dispatch(["flow", "--nonsense"]) == 2

    def test_invalid_grid(self, capsys):
        assert dispatch(["flow", "--grid", "7"]) == 2
        assert "grid" in capsys.readouterr().err

    def test_zero_workers(self):
        assert dispatch(["retract", "--workers", "0"]) == 2

    def test_malformed_config_names_the_key(self, tmp_path, capsys):
        path = tmp_path / "run.json"
        path.write_text('{"subcommand": "flow", "grid": "eight"}')
        assert dispatch(["flow", "--config", str(path)]) == 2
        err = capsys.readouterr().err
        assert any(line.startswith("ym flow: configuration error") for line in err.splitlines())
        assert "grid" in err

    def test_unparseable_config_file(self, tmp_path, capsys):
        path = tmp_path / "run.json"
        path.write_text('{"subcommand": ')
        assert dispatch(["flow", "--config", str(path)]) == 2
        assert "config" in capsys.readouterr().err

    def test_preset_for_another_subcommand(self):
        assert dispatch(["flow", "--preset", "lojasiewicz_corpus"]) == 2

    def test_unknown_loja_function(self):
        assert dispatch(["loja", "--functions", "quadratic,bogus"]) == 2

    def test_flow_timeout_is_a_failure(self, tmp_path, capsys):
        out = tmp_path / "stalled.csv"
        code = dispatch(["flow", "--grid", "8", "--init", "ray:product:0.1", "--t-max", "1", "--out", str(out)])
        assert code == 1
        assert "DidNotConverge" in capsys.readouterr().err
        # the partial trajectory is still written
        assert out.exists()
        assert json.loads(out.with_suffix(".json").read_text())["converged"] is False

    def test_retraction_of_curved_data_fails(self, tmp_path):
        out = tmp_path / "curved.csv"
        assert dispatch(["retract", "--grid", "8", "--init", "ray:product:1.0", "--out", str(out)]) == 1


def test_flow_outputs_are_reproducible(tmp_path):
    out = tmp_path / "flow.csv"
    args = ["flow", *INTERIOR_ARGS, "--init", "random:0.05", "--seed", "7", "--out", str(out)]
    assert dispatch(args) == 0
    first = (out.read_bytes(), out.with_suffix(".json").read_bytes())
    assert dispatch(args) == 0
    assert (out.read_bytes(), out.with_suffix(".json").read_bytes()) == first

    table = pd.read_csv(out)
    assert list(table.columns) == ["t", "energy", "grad_l2", "slice_residual", "dist_l2", "arclength"]
    assert table["t"].iloc[0] == 0.0
    summary = json.loads(out.with_suffix(".json").read_text())
    assert summary["converged"] is True
    assert summary["energy_identity_ok"] is True


def test_flow_default_output_goes_to_results(results_dir):
    assert dispatch(["flow", *INTERIOR_ARGS, "--init", "flat", "--name", "fixed_point"]) == 0
    assert (results_dir / "fixed_point.csv").exists()
    assert (results_dir / "fixed_point.json").exists()
    assert (results_dir / "fixed_point_terminal.json").exists()


def test_terminal_snapshot_feeds_pillowcase(tmp_path):
    out = tmp_path / "near.csv"
    assert dispatch(["flow", *INTERIOR_ARGS, "--init", "random:0.01", "--seed", "5", "--out", str(out)]) == 0
    snapshot = tmp_path / "near_terminal.json"
    assert json.loads(snapshot.read_text())["N"] == 8

    located = tmp_path / "located.csv"
    assert dispatch(["pillowcase", "--init", f"snapshot:{snapshot}", "--out", str(located)]) == 0
    summary = json.loads(located.with_suffix(".json").read_text())
    assert summary["stratum"] == "abelian"
    assert summary["curvature_norm"] < 1e-6
    assert summary["loop_spread"] < 1e-4


def test_retract_batch(tmp_path):
    out = tmp_path / "batch.csv"
    args = ["retract", *INTERIOR_ARGS, "--init", "random:0.02", "--seed", "11", "--batch", "3",
            "--workers", "2", "--out", str(out)]
    assert dispatch(args) == 0
    table = pd.read_csv(out)
    assert list(table["seed"]) == [11, 12, 13]
    assert (table["stratum"] == "abelian").all()
    assert not (tmp_path / "batch_path.csv").exists()


def test_retract_single_writes_path(tmp_path):
    out = tmp_path / "single.csv"
    assert dispatch(["retract", *INTERIOR_ARGS, "--init", "random:0.02", "--out", str(out)]) == 0
    path = pd.read_csv(tmp_path / "single_path.csv")
    assert "homotopy_s" in path.columns


def test_scan_lambda_several_exponents(tmp_path):
    out = tmp_path / "scan.csv"
    args = ["scan-lambda", "--grid", "8", "--ray", "product", "--t-grid", "logspace:-3:-1:6",
            "--p", "2,3", "--out", str(out)]
    assert dispatch(args) == 0
    for p in ("2", "3"):
        summary = json.loads((tmp_path / f"scan_p{p}.json").read_text())
        assert summary["lambda"] == pytest.approx(0.5, abs=1e-6)
        assert len(pd.read_csv(tmp_path / f"scan_p{p}.csv")) == 6


def test_pillowcase(tmp_path):
    out = tmp_path / "pc.csv"
    assert dispatch(["pillowcase", *INTERIOR_ARGS, "--out", str(out)]) == 0
    table = pd.read_csv(out)
    assert list(table["label"]) == ["input", "corner_00", "corner_0pi", "corner_pi0", "corner_pipi"]
    assert list(table["h1"]) == [2, 6, 6, 6, 6]
    summary = json.loads(out.with_suffix(".json").read_text())
    assert summary["stratum"] == "abelian"
    assert summary["cohomology"] == [1, 2, 1]


def test_kuranishi(tmp_path):
    out = tmp_path / "bal.csv"
    args = ["kuranishi", "--grid", "8", "--base", "0,0", "--samples", "10", "--radius", "0.05",
            "--seed", "3", "--out", str(out)]
    assert dispatch(args) == 0
    table = pd.read_csv(out)
    assert len(table) == 10
    assert (table["pairing"] >= -1e-15).all()
    assert json.loads(out.with_suffix(".json").read_text())["dimension"] == 6


def test_loja(tmp_path):
    out = tmp_path / "loja.csv"
    assert dispatch(["loja", "--functions", "quadratic,quartic", "--samples", "50", "--out", str(out)]) == 0
    assert list(pd.read_csv(out)["function"]) == ["quadratic", "quartic"]
    assert len(pd.read_csv(tmp_path / "loja_distance.csv")) == 2


@pytest.mark.slow
def test_selftest_passes(capsys):
    assert dispatch(["selftest"]) == 0
    assert "checks passed" in capsys.readouterr().out
