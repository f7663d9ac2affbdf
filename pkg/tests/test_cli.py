"""Tests for config parsing, the CLI subcommands and output determinism."""

import json

import numpy as np
import pytest

from fedssl.cli import cmd_train, format_metrics_csv, load_model, main, save_model
from fedssl.config import parse_config, serialize_config
from fedssl.data import PartitionPlan, gen_synthetic, partition_dirichlet, save_npz
from fedssl.errors import ConfigError
from fedssl.nn import MlpModel
from fedssl.orchestrator import evaluate

SMALL_RUN = {
    "scenario": "labels_at_client",
    "dataset": "synthetic",
    "classes": "4",
    "dims": "8",
    "samples": "400",
    "test-samples": "200",
    "hidden": "16",
    "k": "5",
    "f": "0.6",
    "t": "2",
    "b-u": "20",
    "b-s": "10",
    "n": "30",
    "labeled-per-client": "20",
    "seed": "7",
}


def small_flags(out_dir, **extra):
    merged = dict(SMALL_RUN)
    merged.update({k: str(v) for k, v in extra.items()})
    merged["out-dir"] = str(out_dir)
    flags = []
    for key, value in merged.items():
        flags.extend([f"--{key}", value])
    return flags


# ---------------------------------------------------------------------------
# parse_config
# ---------------------------------------------------------------------------


def test_defaults_labels_at_client():
    cfg = parse_config(overrides={"scenario": "labels_at_client"})
    assert cfg.rounds == 600
    assert cfg.eta == 0.01
    assert cfg.batch_labeled == 10
    assert cfg.batch_unlabeled == 100
    assert cfg.augmentations == 3
    assert cfg.selection == "uncertainty"
    assert (cfg.lambda_s, cfg.lambda_l2) == (10.0, 15.0)
    assert (cfg.alpha, cfg.beta, cfg.gamma) == (0.5, 0.3, 0.2)
    assert (cfg.num_clients, cfg.participation) == (100, 0.05)
    assert cfg.epochs_unlabeled == 1 and cfg.epochs_labeled == 1


def test_defaults_labels_at_server():
    cfg = parse_config(overrides={"scenario": "labels_at_server"})
    assert cfg.rounds == 150
    assert cfg.eta == 0.001
    assert cfg.batch_labeled == 64
    assert cfg.augmentations == 5
    assert cfg.selection == "random"
    assert cfg.labeled_server == 1000


def test_config_file_and_flag_precedence(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\nscenario=labels_at_client\nt=50\neta=0.5\n")
    cfg = parse_config(str(path), overrides={"eta": "0.25"})
    assert cfg.rounds == 50
    assert cfg.eta == 0.25  # flag wins over file


def test_unknown_key_rejected(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("learning_rate=1\n")
    with pytest.raises(ConfigError, match="learning_rate"):
        parse_config(str(path))
    with pytest.raises(ConfigError, match="bogus"):
        parse_config(overrides={"bogus": "1"})


def test_mix_weight_sum_violation():
    with pytest.raises(ConfigError, match="alpha"):
        parse_config(overrides={"alpha": "0.6", "beta": "0.5"})


def test_dataset_path_requirements():
    with pytest.raises(ConfigError, match="image-path"):
        parse_config(overrides={"dataset": "idx"})
    with pytest.raises(ConfigError, match="cifar-path"):
        parse_config(overrides={"dataset": "cifar_bin"})


def test_serialize_roundtrip():
    cfg = parse_config(overrides=dict(SMALL_RUN))
    text = serialize_config(cfg)
    reparsed = parse_config(overrides={
        line.split("=", 1)[0]: line.split("=", 1)[1]
        for line in text.strip().splitlines()
    })
    assert reparsed == cfg


def test_serialize_roundtrip_via_file(tmp_path):
    cfg = parse_config(overrides={"scenario": "labels_at_server", "mu-or-iid": "0.37"})
    path = tmp_path / "cfg.txt"
    path.write_text(serialize_config(cfg))
    assert parse_config(str(path)) == cfg


# ---------------------------------------------------------------------------
# cmd_train outputs
# ---------------------------------------------------------------------------


def test_train_writes_t_rows_and_meta(tmp_path):
    rc = main(["train", *small_flags(tmp_path / "run")])
    assert rc == 0
    lines = (tmp_path / "run" / "metrics.csv").read_text().strip().splitlines()
    assert lines[0] == "round,test_accuracy,sup_loss,unsup_loss,lambda_t,selected,weights,wall_ms"
    assert len(lines) == 1 + 2  # header + T rows
    meta = json.loads((tmp_path / "run" / "run_meta.json").read_text())
    assert meta["seed"] == 7
    assert meta["rounds_completed"] == 2
    assert meta["config"]["t"] == "2"


def test_train_same_seed_identical_bytes(tmp_path):
    assert main(["train", *small_flags(tmp_path / "a")]) == 0
    assert main(["train", *small_flags(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "metrics.csv").read_bytes()
    b = (tmp_path / "b" / "metrics.csv").read_bytes()
    assert a == b


def test_train_frozen_global_model_constant_accuracy(tmp_path):
    rc = main(["train", *small_flags(tmp_path / "run", alpha="0.0", beta="0.0", gamma="1.0", t="3")])
    assert rc == 0
    lines = (tmp_path / "run" / "metrics.csv").read_text().strip().splitlines()[1:]
    accuracies = {line.split(",")[1] for line in lines}
    assert len(accuracies) == 1


def test_train_lambda_column_monotone(tmp_path):
    rc = main(["train", *small_flags(tmp_path / "run", t="4")])
    assert rc == 0
    lines = (tmp_path / "run" / "metrics.csv").read_text().strip().splitlines()[1:]
    ramp = [float(line.split(",")[4]) for line in lines]
    assert all(b >= a for a, b in zip(ramp, ramp[1:]))


def test_run_meta_reproduces_run(tmp_path):
    assert main(["train", *small_flags(tmp_path / "a")]) == 0
    meta = json.loads((tmp_path / "a" / "run_meta.json").read_text())
    replay = dict(meta["config"])
    replay["out-dir"] = str(tmp_path / "b")
    cfg = parse_config(overrides=replay)
    assert cmd_train(cfg) == 0
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (
        tmp_path / "b" / "metrics.csv"
    ).read_bytes()


# ---------------------------------------------------------------------------
# partition / evaluate / gen-synthetic
# ---------------------------------------------------------------------------


def test_partition_output_covers_dataset(tmp_path):
    rc = main([
        "partition", "--dataset", "synthetic", "--classes", "4", "--dims", "8",
        "--samples", "120", "--k", "6", "--f", "1.0", "--mu-or-iid", "0.4",
        "--seed", "3", "--out-dir", str(tmp_path),
    ])
    assert rc == 0
    plan = PartitionPlan.from_json((tmp_path / "partition.json").read_text())
    flat = sorted(i for shard in plan.assignments for i in shard)
    assert flat == list(range(120))
    assert plan.mu == 0.4  # round-trips through JSON


def test_partition_matches_library_call(tmp_path):
    rc = main([
        "partition", "--dataset", "synthetic", "--classes", "4", "--dims", "8",
        "--samples", "120", "--k", "6", "--f", "1.0", "--mu-or-iid", "0.4",
        "--seed", "3", "--out-dir", str(tmp_path),
    ])
    assert rc == 0
    plan = PartitionPlan.from_json((tmp_path / "partition.json").read_text())
    ds = gen_synthetic(4, 8, 120, 0.15, (3, 1))
    want = partition_dirichlet(ds, 6, 0.4, (3, 4))
    assert plan.assignments == want.assignments


def test_checkpoint_roundtrip(tmp_path):
    model = MlpModel.init((6, 12, 3), 5)
    path = str(tmp_path / "model.bin")
    save_model(path, model.layer_dims, model.params)
    back = load_model(path)
    assert back.layer_dims == (6, 12, 3)
    np.testing.assert_array_equal(back.params.values, model.params.values)


def test_evaluate_command_prints_accuracy(tmp_path, capsys):
    assert main(["train", *small_flags(tmp_path / "run")]) == 0
    test_ds = gen_synthetic(4, 8, 300, 0.15, seed=123)
    npz = str(tmp_path / "test.npz")
    save_npz(npz, test_ds)
    rc = main(["evaluate", "--model", str(tmp_path / "run" / "model.bin"), "--data-npz", npz])
    assert rc == 0
    printed = capsys.readouterr().out.strip()
    model = load_model(str(tmp_path / "run" / "model.bin"))
    want = evaluate(model, test_ds)
    assert printed == f"accuracy {format(want, '.6g')}"


def test_train_with_dirichlet_partition_and_meta_flag(tmp_path):
    # f=0.6, k=5 selects 3 of an expected 3.0, so no weight rescaling.
    rc = main(["train", *small_flags(tmp_path / "a", **{"mu-or-iid": "0.5"})])
    assert rc == 0
    meta = json.loads((tmp_path / "a" / "run_meta.json").read_text())
    assert meta["fedfreq_weights_rescaled"] is False
    # f=0.55, k=5 rounds 2.75 up to 3 selected: weights get rescaled.
    rc = main(["train", *small_flags(tmp_path / "b", f="0.55")])
    assert rc == 0
    meta = json.loads((tmp_path / "b" / "run_meta.json").read_text())
    assert meta["fedfreq_weights_rescaled"] is True


def test_evaluate_command_with_dataset_flags(tmp_path, capsys):
    assert main(["train", *small_flags(tmp_path / "run")]) == 0
    capsys.readouterr()
    rc = main([
        "evaluate", "--model", str(tmp_path / "run" / "model.bin"),
        "--dataset", "synthetic", "--classes", "4", "--dims", "8",
        "--samples", "400", "--test-samples", "200", "--seed", "7",
        "--k", "5", "--f", "0.6",
    ])
    assert rc == 0
    printed = capsys.readouterr().out.strip()
    # Same test set as the training run, so the same accuracy as its last round.
    lines = (tmp_path / "run" / "metrics.csv").read_text().strip().splitlines()
    final_accuracy = lines[-1].split(",")[1]
    assert printed == f"accuracy {final_accuracy}"


def test_gen_synthetic_writes_npz(tmp_path):
    out = str(tmp_path / "blob.npz")
    rc = main([
        "gen-synthetic", "--out", out, "--classes", "3", "--dims", "5",
        "--samples", "60", "--spread", "0.1", "--seed", "11",
    ])
    assert rc == 0
    archive = np.load(out)
    assert archive["features"].shape == (60, 5)
    assert int(archive["num_classes"]) == 3


# ---------------------------------------------------------------------------
# Exit codes
# ---------------------------------------------------------------------------


def write_idx_fixture(tmp_path, count, seed):
    """Tiny 4x4 image IDX pair with 4 classes: blocky per-class patterns."""
    import struct

    rng = np.random.default_rng(seed)
    labels = (np.arange(count) % 4).astype(np.uint8)
    pixels = bytearray()
    for label in labels:
        img = np.full((4, 4), 30 * label, dtype=np.uint8)
        img += rng.integers(0, 20, size=(4, 4), dtype=np.uint8)
        pixels.extend(img.tobytes())
    img_path = tmp_path / f"imgs{seed}.idx"
    lab_path = tmp_path / f"labs{seed}.idx"
    img_path.write_bytes(struct.pack(">IIII", 0x803, count, 4, 4) + bytes(pixels))
    lab_path.write_bytes(struct.pack(">II", 0x801, count) + labels.tobytes())
    return img_path.name, lab_path.name


def test_train_on_idx_dataset_with_data_dir_env(tmp_path, monkeypatch):
    # Relative paths resolve against FEDSSL_DATA_DIR; the image layout
    # routes the shift/flip augmentations.
    train_img, train_lab = write_idx_fixture(tmp_path, 120, seed=1)
    test_img, test_lab = write_idx_fixture(tmp_path, 40, seed=2)
    monkeypatch.setenv("FEDSSL_DATA_DIR", str(tmp_path))
    rc = main([
        "train", "--dataset", "idx",
        "--image-path", train_img, "--label-path", train_lab,
        "--test-image-path", test_img, "--test-label-path", test_lab,
        "--scenario", "labels_at_client", "--k", "3", "--f", "1.0", "--t", "2",
        "--b-u", "10", "--b-s", "5", "--n", "10", "--labeled-per-client", "10",
        "--hidden", "8", "--seed", "5", "--out-dir", str(tmp_path / "run"),
    ])
    assert rc == 0
    lines = (tmp_path / "run" / "metrics.csv").read_text().strip().splitlines()
    assert len(lines) == 3


def test_config_error_exit_code(capsys):
    rc = main(["train", "--alpha", "0.9", "--beta", "0.5"])
    assert rc == 2
    assert "config error" in capsys.readouterr().err


def test_runtime_error_exit_code(tmp_path, capsys):
    rc = main(["evaluate", "--model", str(tmp_path / "missing.bin")])
    assert rc == 1


def test_metrics_formatting_six_significant_digits():
    from fedssl.orchestrator import RoundRecord

    record = RoundRecord(
        round=0,
        test_accuracy=0.123456789,
        sup_loss=13.7222151,
        unsup_loss=float("nan"),
        lambda_t=0.0,
        selected=(0, 2),
        weights=(2.0 / 3.0, 1.0 / 3.0),
        wall_ms=0,
    )
    text = format_metrics_csv([record])
    assert "0.123457" in text
    assert "13.7222" in text
    assert "nan" in text
    assert "0.666667 0.333333" in text
