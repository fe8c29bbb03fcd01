import json

import pytest
from PIL import Image

from app import EXIT_FAILED, EXIT_INVALID, EXIT_OK, run
from attacks.patch import random_patch, save_patch
from models.data_store import load_checkpoint
from utils.config import load_config, parse_eps
from utils.errors import ConfigError

DATA = ["--synthetic-count", "200", "--synthetic-size", "16", "--synthetic-seed", "5"]


def csv_rows(path):
    return [line.split(",") for line in path.read_text().splitlines()]


@pytest.fixture(scope="module")
def trained_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    code = run(["train", *DATA, "--epochs", "1", "--batch-size", "16", "--out-dir", str(out)])
    assert code == EXIT_OK
    return out


def test_train_writes_checkpoint_report_and_manifest(trained_run):
    model = load_checkpoint(trained_run / "model.gstm")
    assert model.spec.input_shape == (1, 16, 16)
    assert model.class_names[0] == "zero"
    rows = csv_rows(trained_run / "eval.csv")
    assert rows[0] == ["model", "dataset", "top1_error", "top5_error", "num_images"]
    assert rows[1][0] == "model"
    assert rows[1][4] == "40"
    assert csv_rows(trained_run / "training_history.csv")[0] == ["epoch", "train_loss", "train_error"]

    manifest = json.loads((trained_run / "manifest.json").read_text())
    assert manifest["subcommand"] == "train"
    assert manifest["resolved_config"]["train"]["epochs"] == 1
    assert manifest["seeds"]["synthetic"] == 5
    assert manifest["toolkit_version"]


def test_zero_epsilon_sweep_equals_clean_eval(trained_run, tmp_path):
    checkpoint = str(trained_run / "model.gstm")
    assert run(["eval", *DATA, "--checkpoint", checkpoint, "--out-dir", str(tmp_path / "eval")]) == EXIT_OK
    assert run(["sweep", *DATA, "--checkpoint", checkpoint, "--eps", "0.0",
                "--out-dir", str(tmp_path / "sweep")]) == EXIT_OK
    clean = csv_rows(tmp_path / "eval" / "eval.csv")[1]
    sweep = csv_rows(tmp_path / "sweep" / "sweep.csv")
    assert sweep[0] == ["epsilon", "top1_error", "top5_error"]
    assert sweep[1] == ["0", clean[2], clean[3]]


def test_eps_range_gives_one_row_per_step(trained_run, tmp_path):
    code = run(["sweep", *DATA, "--checkpoint", str(trained_run / "model.gstm"), "--eps", "0.01:0.10:0.01",
                "--format", "csv,json,svg", "--out-dir", str(tmp_path)])
    assert code == EXIT_OK
    rows = csv_rows(tmp_path / "sweep.csv")[1:]
    assert [row[0] for row in rows] == ["0.01", "0.02", "0.03", "0.04", "0.05", "0.06", "0.07", "0.08",
                                        "0.09", "0.1"]
    assert (tmp_path / "sweep.svg").read_text().startswith("<svg")
    assert json.loads((tmp_path / "sweep.json").read_text())["kind"] == "sweep"


def test_manifest_replay_is_byte_identical_across_thread_counts(trained_run, tmp_path):
    first, second = tmp_path / "first", tmp_path / "second"
    assert run(["sweep", *DATA, "--checkpoint", str(trained_run / "model.gstm"), "--eps", "0,0.05,0.2",
                "--threads", "1", "--out-dir", str(first)]) == EXIT_OK
    assert run(["sweep", "--config", str(first / "manifest.json"), "--threads", "4",
                "--out-dir", str(second)]) == EXIT_OK
    assert (first / "sweep.csv").read_bytes() == (second / "sweep.csv").read_bytes()
    assert (first / "sweep.json").read_bytes() == (second / "sweep.json").read_bytes()


def test_manifest_replay_rejects_other_subcommand(trained_run, tmp_path):
    code = run(["eval", "--config", str(trained_run / "manifest.json"), "--checkpoint",
                str(trained_run / "model.gstm"), "--out-dir", str(tmp_path / "out")])
    assert code == EXIT_INVALID
    assert not (tmp_path / "out").exists()


def test_fgsm_writes_breakdowns_and_images(trained_run, tmp_path):
    code = run(["fgsm", *DATA, "--checkpoint", str(trained_run / "model.gstm"), "--eps", "0.1",
                "--images", "3", "--top-k", "3", "--out-dir", str(tmp_path)])
    assert code == EXIT_OK
    clean = csv_rows(tmp_path / "fgsm_clean.csv")
    adversarial = csv_rows(tmp_path / "fgsm_adversarial.csv")
    assert clean[0] == ["image", "true_class", "rank", "class_name", "confidence"]
    assert len(clean) == len(adversarial) == 1 + 3 * 3
    for index in range(3):
        with Image.open(tmp_path / "adversarial" / f"image{index:04d}.png") as img:
            assert img.size == (16, 16)


def test_patch_train_then_patch_eval(trained_run, tmp_path):
    checkpoint = str(trained_run / "model.gstm")
    code = run(["patch-train", *DATA, "--checkpoint", checkpoint, "--sizes", "3", "--targets", "1",
                "--steps", "5", "--patch-batch", "8", "--pivot", "--out-dir", str(tmp_path / "train")])
    assert code == EXIT_OK
    rows = csv_rows(tmp_path / "train" / "patches.csv")
    assert rows[0] == ["patch", "size", "top1_success", "top5_success"]
    assert [row[:2] for row in rows[1:]] == [["one", "3"], ["control-one", "3"]]
    assert csv_rows(tmp_path / "train" / "patches_pivot.csv")[0] == ["patch", "size_3"]

    patch_file = tmp_path / "train" / "patches" / "one-3.gstp"
    code = run(["patch-eval", *DATA, "--checkpoint", checkpoint, "--patch", str(patch_file),
                "--out-dir", str(tmp_path / "eval")])
    assert code == EXIT_OK
    assert csv_rows(tmp_path / "eval" / "patches.csv")[1] == rows[1]

    clean = csv_rows(tmp_path / "train" / "patch_clean.csv")
    patched = csv_rows(tmp_path / "train" / "patched.csv")
    assert clean[0] == patched[0] == ["image", "true_class", "rank", "class_name", "confidence"]
    assert len(clean) == len(patched) == 1 + 4 * 5
    assert patched[1][0] == "one-3/image0000"
    with Image.open(tmp_path / "train" / "patch_images" / "one-3.png") as img:
        assert img.size == (3, 3)
    for index in range(4):
        with Image.open(tmp_path / "train" / "patched" / "one-3" / f"image{index:04d}.png") as img:
            assert img.size == (16, 16)
    assert (tmp_path / "eval" / "patched.csv").read_bytes() == (tmp_path / "train" / "patched.csv").read_bytes()
    assert (tmp_path / "eval" / "patched" / "one-3" / "image0003.png").exists()


def test_report_reemits_a_saved_json(trained_run, tmp_path):
    source = tmp_path / "sweep"
    assert run(["sweep", *DATA, "--checkpoint", str(trained_run / "model.gstm"), "--eps", "0,0.1",
                "--out-dir", str(source)]) == EXIT_OK
    code = run(["report", "--input", str(source / "sweep.json"), "--format", "csv,svg",
                "--out-dir", str(tmp_path / "again")])
    assert code == EXIT_OK
    assert (tmp_path / "again" / "sweep.csv").read_bytes() == (source / "sweep.csv").read_bytes()
    assert (tmp_path / "again" / "sweep.svg").exists()


def test_unknown_subcommand_and_flag_exit_one(capsys):
    assert run(["bogus"]) == EXIT_INVALID
    assert run(["train", "--bogus"]) == EXIT_INVALID
    assert "usage" in capsys.readouterr().err


def test_invalid_configuration_writes_nothing(tmp_path):
    out = tmp_path / "out"
    assert run(["sweep", "--checkpoint", str(tmp_path / "missing.gstm"), "--out-dir", str(out)]) == EXIT_INVALID
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"attack": {"epsilons": [0.1]}}))
    assert run(["train", "--config", str(bad), "--out-dir", str(out)]) == EXIT_INVALID
    assert run(["sweep", "--checkpoint", str(bad), "--eps", "0.2,0.1", "--out-dir", str(out)]) == EXIT_INVALID
    assert not out.exists()


def test_corrupt_checkpoint_is_invalid_input(tmp_path):
    garbage = tmp_path / "model.gstm"
    garbage.write_bytes(b"not a checkpoint")
    assert run(["eval", *DATA, "--checkpoint", str(garbage), "--out-dir", str(tmp_path / "out")]) == EXIT_INVALID


def test_out_of_range_target_is_invalid_and_writes_nothing(trained_run, tmp_path):
    out = tmp_path / "out"
    code = run(["patch-train", *DATA, "--checkpoint", str(trained_run / "model.gstm"), "--sizes", "3",
                "--targets", "12", "--steps", "2", "--out-dir", str(out)])
    assert code == EXIT_INVALID
    assert not out.exists()


def test_patch_for_another_model_is_invalid(trained_run, tmp_path):
    wide = tmp_path / "wide.gstp"
    save_patch(random_patch(3, 1, target_class=10, seed=0), wide)
    big = tmp_path / "big.gstp"
    save_patch(random_patch(20, 1, target_class=1, seed=0), big)
    for patch_file in (wide, big):
        out = tmp_path / f"eval-{patch_file.stem}"
        assert run(["patch-eval", *DATA, "--checkpoint", str(trained_run / "model.gstm"), "--patch",
                    str(patch_file), "--out-dir", str(out)]) == EXIT_INVALID
        assert not out.exists()


def test_unwritable_output_exits_two(trained_run, tmp_path):
    blocker = tmp_path / "taken"
    blocker.write_text("a file where the output directory should go")
    code = run(["eval", *DATA, "--checkpoint", str(trained_run / "model.gstm"), "--out-dir", str(blocker)])
    assert code == EXIT_FAILED


@pytest.mark.parametrize("payload", [
    {"threads": "4"},
    {"data": {"synthetic_count": "10"}},
    {"attack": {"eps_list": ["a"]}},
    {"output": {"pivot": "yes"}},
    {"train": {"epochs": 2.5}},
])
def test_wrongly_typed_config_values_exit_one(tmp_path, payload):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(payload))
    out = tmp_path / "out"
    assert run(["train", "--config", str(path), "--out-dir", str(out)]) == EXIT_INVALID
    assert not out.exists()
    with pytest.raises(ConfigError):
        load_config(path)


def test_config_numbers_are_accepted_as_floats(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"attack": {"eps_list": [0, 0.1], "learning_rate": 1}}))
    config, replayed = load_config(path)
    assert replayed is None
    assert config.attack.eps_list == (0.0, 0.1)
    assert config.attack.learning_rate == 1.0


def test_bad_log_level_exits_one(tmp_path, monkeypatch):
    out = tmp_path / "out"
    assert run(["train", *DATA, "--log-level", "verbose", "--out-dir", str(out)]) == EXIT_INVALID
    monkeypatch.setenv("GRADSIGN_LOG_LEVEL", "chatty")
    assert run(["train", *DATA, "--out-dir", str(out)]) == EXIT_INVALID
    assert not out.exists()
    monkeypatch.setenv("GRADSIGN_LOG_LEVEL", "warning")
    assert run(["train", *DATA, "--log-level", "info", "--epochs", "1", "--out-dir", str(out)]) == EXIT_OK


def test_parse_eps_forms():
    assert parse_eps("0.01:0.10:0.01")[-1] == 0.1
    assert len(parse_eps("0.01:0.10:0.01")) == 10
    assert parse_eps("0.1, 0.2") == [0.1, 0.2]
    with pytest.raises(ConfigError):
        parse_eps("0:1:0")
    with pytest.raises(ConfigError):
        parse_eps("a,b")


def test_config_file_rejects_unknown_keys(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"data": {"format": "synthetic"}, "verbose": True}))
    with pytest.raises(ConfigError):
        load_config(path)
