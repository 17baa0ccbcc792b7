import json
import os
import re

import numpy as np

from app.modules.dataset.repositories import PGMRepository, PPMRepository
from app.modules.network.models import NetworkSpec
from app.modules.network.repositories import WeightRepository
from app.modules.network.services import NetworkService

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "..", "configs")


def trained_weights(invoke, config, data, path, *extra):
    result = invoke("train", "--config", config, "--data", data, "--out", path, *extra)
    assert result.exit_code == 0, result.output
    return path


# --------------------
# gen-data
# --------------------


def test_gen_data_writes_pairs(invoke, tmp_path):
    result = invoke("gen-data", "--out", tmp_path / "data", "--count", 10)
    assert result.exit_code == 0, result.output
    assert len(os.listdir(tmp_path / "data" / "images")) == 10
    assert len(os.listdir(tmp_path / "data" / "masks")) == 10
    assert "Wrote 10 pairs of 64x64" in result.output


def test_gen_data_is_byte_identical_across_runs(invoke, tmp_path):
    for name in ("a", "b"):
        assert invoke("gen-data", "--out", tmp_path / name, "--count", 3, "--seed", 9).exit_code == 0
    for relative in ("images/img00002.ppm", "masks/img00002.pgm"):
        assert (tmp_path / "a" / relative).read_bytes() == (tmp_path / "b" / relative).read_bytes()


def test_gen_data_rejects_invalid_size(invoke, tmp_path):
    result = invoke("gen-data", "--out", tmp_path / "data", "--size", 60)
    assert result.exit_code == 1
    assert "divisible by 32" in result.output


# --------------------
# train
# --------------------


def test_train_zero_iterations_saves_initialization(invoke, tiny_config, cli_dataset, tmp_path):
    path = trained_weights(invoke, tiny_config, cli_dataset, tmp_path / "init.rasw", "--iterations", 0)
    spec = NetworkSpec.toy(stage_channels=(4, 8, 8, 8, 8), side_channels=4, global_channels=8)
    expected = WeightRepository().encode(NetworkService().build_network(spec, seed=0))
    assert path.read_bytes() == expected
    assert (tmp_path / "init_loss.csv").read_text() == "iteration,lr,loss\n"


def test_train_writes_weights_and_loss_log(invoke, tiny_config, cli_dataset, tmp_path):
    log = tmp_path / "log.csv"
    result = invoke("train", "--config", tiny_config, "--data", cli_dataset, "--out", tmp_path / "m.rasw", "--loss-log", log)
    assert result.exit_code == 0, result.output
    assert "over 1 iterations" in result.output
    assert len((tmp_path / "log.csv").read_text().splitlines()) == 2
    NetworkService().load_weights(str(tmp_path / "m.rasw"))


def test_train_without_attention_differs(invoke, tiny_config, cli_dataset, tmp_path):
    with_ra = trained_weights(invoke, tiny_config, cli_dataset, tmp_path / "ras.rasw")
    without_ra = trained_weights(invoke, tiny_config, cli_dataset, tmp_path / "no_ra.rasw", "--no-attention")
    assert with_ra.read_bytes() != without_ra.read_bytes()
    assert not NetworkService().load_weights(str(without_ra)).spec.attention_enabled


def test_train_requires_data(invoke, tiny_config, tmp_path):
    result = invoke("train", "--config", tiny_config, "--out", tmp_path / "m.rasw")
    assert result.exit_code == 1
    assert "No training data" in result.output


def test_train_rejects_invalid_config(invoke, tmp_path, cli_dataset):
    config = tmp_path / "bad.json"
    config.write_text(json.dumps({"training": {"momentum": 1.5}}))
    result = invoke("train", "--config", config, "--data", cli_dataset, "--out", tmp_path / "m.rasw")
    assert result.exit_code == 1
    assert "training.momentum" in result.output


def test_missing_config_file_is_a_usage_error(invoke, tmp_path):
    result = invoke("train", "--config", tmp_path / "missing.json", "--out", tmp_path / "m.rasw")
    assert result.exit_code == 1


# --------------------
# predict
# --------------------


def test_predict_writes_map_with_image_dimensions(invoke, tiny_config, cli_dataset, tmp_path):
    model = trained_weights(invoke, tiny_config, cli_dataset, tmp_path / "m.rasw", "--iterations", 0)
    image = cli_dataset / "images" / "img00000.ppm"
    sides = tmp_path / "sides"
    result = invoke("predict", "--model", model, "--image", image, "--out", tmp_path / "out.pgm", "--dump-sides", sides)
    assert result.exit_code == 0, result.output

    saliency = PGMRepository().load(str(tmp_path / "out.pgm"))
    assert saliency.shape == (64, 64)
    assert sorted(os.listdir(tmp_path / "sides")) == [
        f"img00000_{name}.pgm" for name in sorted(["global", "side5", "side4", "side3", "side2", "side1"])
    ]


def test_predict_zero_residual_model_outputs_upsampled_global(invoke, tiny_config, cli_dataset, tmp_path):
    model = trained_weights(invoke, tiny_config, cli_dataset, tmp_path / "m.rasw", "--iterations", 0)
    image = cli_dataset / "images" / "img00001.ppm"
    result = invoke("predict", "--model", model, "--image", image, "--out", tmp_path / "out.pgm", "--dump-sides", tmp_path / "s")
    assert result.exit_code == 0, result.output
    final = PGMRepository().load(str(tmp_path / "out.pgm"))
    global_map = PGMRepository().load(str(tmp_path / "s" / "img00001_global.pgm"))
    np.testing.assert_array_equal(final, global_map)


def test_predict_directory(invoke, tiny_config, cli_dataset, tmp_path):
    model = trained_weights(invoke, tiny_config, cli_dataset, tmp_path / "m.rasw", "--iterations", 0)
    result = invoke("predict", "--model", model, "--image", cli_dataset / "images", "--out", tmp_path / "preds")
    assert result.exit_code == 0, result.output
    assert sorted(os.listdir(tmp_path / "preds")) == ["img00000.pgm", "img00001.pgm", "img00002.pgm"]


def test_predict_rejects_non_divisible_image_without_pad(invoke, tiny_config, cli_dataset, tmp_path):
    model = trained_weights(invoke, tiny_config, cli_dataset, tmp_path / "m.rasw", "--iterations", 0)
    odd = tmp_path / "odd.ppm"
    PPMRepository().save(np.full((50, 64, 3), 128, dtype=np.uint8), str(odd))

    result = invoke("predict", "--model", model, "--image", odd, "--out", tmp_path / "odd.pgm")
    assert result.exit_code == 1
    assert "pad height by 14" in result.output

    result = invoke("predict", "--model", model, "--image", odd, "--out", tmp_path / "odd.pgm", "--pad")
    assert result.exit_code == 0, result.output
    assert PGMRepository().load(str(tmp_path / "odd.pgm")).shape == (50, 64)


def test_predict_rejects_corrupt_weights(invoke, cli_dataset, tmp_path):
    corrupt = tmp_path / "corrupt.rasw"
    corrupt.write_bytes(b"NOPE" + b"\x00" * 16)
    image = cli_dataset / "images" / "img00000.ppm"
    result = invoke("predict", "--model", corrupt, "--image", image, "--out", tmp_path / "o.pgm")
    assert result.exit_code == 1
    assert "bad magic" in result.output


# --------------------
# eval
# --------------------


def test_eval_perfect_predictions(invoke, cli_dataset, tmp_path):
    result = invoke(
        "eval", "--pred", cli_dataset / "masks", "--gt", cli_dataset, "--report", tmp_path / "r.json", "--pr", tmp_path / "pr.csv"
    )
    assert result.exit_code == 0, result.output
    assert "Max F-measure: 1.000000" in result.output
    assert "MAE: 0.000000" in result.output
    assert json.loads((tmp_path / "r.json").read_text())["num_images"] == 3
    assert len((tmp_path / "pr.csv").read_text().splitlines()) == 257


def test_eval_reports_orphans(invoke, cli_dataset, tmp_path):
    preds = tmp_path / "preds"
    preds.mkdir()
    PGMRepository().save(np.zeros((64, 64), dtype=np.uint8), str(preds / "stray.pgm"))
    result = invoke("eval", "--pred", preds, "--gt", cli_dataset)
    assert result.exit_code == 1
    assert "No common stems" in result.output


def test_eval_rejects_non_positive_beta2(invoke, cli_dataset):
    result = invoke("eval", "--pred", cli_dataset / "masks", "--gt", cli_dataset, "--beta2", 0)
    assert result.exit_code == 1


# --------------------
# end to end
# --------------------


def run_pipeline(invoke, config, root):
    steps = [
        ("gen-data", "--out", root / "data", "--count", 3, "--seed", 7),
        ("train", "--config", config, "--data", root / "data", "--out", root / "m.rasw", "--iterations", 2),
        ("predict", "--model", root / "m.rasw", "--image", root / "data" / "images", "--out", root / "preds"),
        ("eval", "--pred", root / "preds", "--gt", root / "data", "--report", root / "report.json", "--pr", root / "pr.csv"),
    ]
    for args in steps:
        result = invoke(*args)
        assert result.exit_code == 0, result.output


def test_same_seed_pipeline_runs_are_byte_identical(invoke, tiny_config, tmp_path):
    run_pipeline(invoke, tiny_config, tmp_path / "first")
    run_pipeline(invoke, tiny_config, tmp_path / "second")

    predictions = sorted(os.listdir(tmp_path / "first" / "preds"))
    assert predictions == ["img00000.pgm", "img00001.pgm", "img00002.pgm"]
    artifacts = ["m.rasw", "m_loss.csv", "report.json", "pr.csv"] + [os.path.join("preds", name) for name in predictions]
    for relative in artifacts:
        assert (tmp_path / "first" / relative).read_bytes() == (tmp_path / "second" / relative).read_bytes(), relative
    assert len((tmp_path / "first" / "m_loss.csv").read_text().splitlines()) == 3


# --------------------
# param-count / grad-check / ablation / info
# --------------------


def test_param_count_vgg16(invoke):
    result = invoke("param-count", "--config", os.path.join(CONFIG_DIR, "vgg16.json"))
    assert result.exit_code == 0, result.output
    assert "Parameters: 20228934" in result.output
    size = float(re.search(r"Size: ([\d.]+) MB", result.output).group(1))
    assert 77 <= size <= 86


def test_param_count_toy_enumerated(invoke):
    result = invoke("param-count", "--config", os.path.join(CONFIG_DIR, "toy.json"), "--enumerate")
    assert result.exit_code == 0, result.output
    assert float(re.search(r"Size: ([\d.]+) MB", result.output).group(1)) < 1
    count = re.search(r"Parameters: (\d+)", result.output).group(1)
    assert f"Enumerated: {count}" in result.output


def test_grad_check_subset_passes(invoke):
    result = invoke("grad-check", "-k", "relu", "--seeds", 3)
    assert result.exit_code == 0, result.output
    assert "PASS" in result.output
    assert "All 1 checks passed" in result.output


def test_grad_check_unknown_case(invoke):
    result = invoke("grad-check", "-k", "no_such_op")
    assert result.exit_code == 1


def test_ablation_writes_report(invoke, tiny_config, cli_dataset, tmp_path):
    args = ["--config", tiny_config, "--data", cli_dataset, "--held-out", cli_dataset]
    result = invoke("ablation", *args, "--out", tmp_path / "abl")
    assert result.exit_code == 0, result.output
    report = json.loads((tmp_path / "abl" / "ablation.json").read_text())
    assert [variant["name"] for variant in report["variants"]] == ["ras_depth2", "no_ra_depth2"]
    assert "depth_2" in report["attention_gain"]


def test_ablation_rejects_bad_depths(invoke, tiny_config, cli_dataset, tmp_path):
    args = ["--config", tiny_config, "--data", cli_dataset, "--held-out", cli_dataset]
    result = invoke("ablation", *args, "--out", tmp_path, "--depths", "1,x")
    assert result.exit_code == 1


def test_info_shows_environment(invoke):
    result = invoke("info")
    assert result.exit_code == 0, result.output
    assert "Name: rasnet" in result.output
    assert "Environment: testing" in result.output


def test_unknown_command(invoke):
    result = invoke("frobnicate")
    assert result.exit_code == 1
    assert "No such command" in result.output
