"""Command-line front end.

Subcommands:
  train          run the configured protocol, write metrics.csv, run_meta.json
                 and the final global model checkpoint
  partition      write a partition plan for the configured dataset as JSON
  evaluate       print the accuracy of a saved model on a test set
  gen-synthetic  materialize a synthetic dataset as a .npz archive

Every ExperimentConfig key is exposed as a --key flag; --config points at a
key=value file and flags override it. Exit codes: 0 ok, 2 configuration
error, 1 runtime error.

Outputs are byte-deterministic for a fixed config and seed: floats are
printed with 6 significant digits and per-round wall-clock times are only
measured when timing=true (they are 0 otherwise, keeping metrics.csv
reproducible).
"""

from __future__ import annotations

import argparse
import json
import os
import struct
import sys

import numpy as np

from . import __version__
from .config import (
    KEYS,
    ExperimentConfig,
    config_as_mapping,
    parse_config,
    resolve_data_path,
)
from .data import gen_synthetic, load_npz, save_npz
from .errors import ConfigError
from .nn import MlpModel, ParamVector, shape_spec
from .orchestrator import (
    RoundRecord,
    evaluate,
    load_train_test,
    round_half_up,
    run_experiment_full,
)

METRICS_HEADER = "round,test_accuracy,sup_loss,unsup_loss,lambda_t,selected,weights,wall_ms"


# ---------------------------------------------------------------------------
# Serialization helpers
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".6g")


def format_metrics_csv(records: list[RoundRecord]) -> str:
    lines = [METRICS_HEADER]
    for r in records:
        lines.append(
            ",".join(
                [
                    str(r.round),
                    _fmt(r.test_accuracy),
                    _fmt(r.sup_loss),
                    _fmt(r.unsup_loss),
                    _fmt(r.lambda_t),
                    " ".join(str(k) for k in r.selected),
                    " ".join(_fmt(w) for w in r.weights),
                    str(r.wall_ms),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def save_model(path: str, layer_dims: tuple[int, ...], params: ParamVector) -> None:
    """Checkpoint format: u32 little-endian header length, JSON header with
    the layer dims and value count, then the raw little-endian float64s."""
    header = json.dumps({"layer_dims": list(layer_dims), "count": params.size}).encode()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(params.values.astype("<f8").tobytes())


def load_model(path: str) -> MlpModel:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise ConfigError(f"{path}: truncated model file")
    header_len = struct.unpack_from("<I", raw, 0)[0]
    header = json.loads(raw[4 : 4 + header_len])
    dims = tuple(int(d) for d in header["layer_dims"])
    count = int(header["count"])
    values = np.frombuffer(raw, dtype="<f8", offset=4 + header_len)
    if values.size != count:
        raise ConfigError(f"{path}: expected {count} parameters, found {values.size}")
    return MlpModel(dims, ParamVector(values.copy(), shape_spec(dims)))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_train(cfg: ExperimentConfig) -> int:
    result = run_experiment_full(cfg)
    records = result.records
    os.makedirs(cfg.out_dir, exist_ok=True)
    with open(os.path.join(cfg.out_dir, "metrics.csv"), "w", encoding="utf-8") as fh:
        fh.write(format_metrics_csv(records))
    expected_selection = cfg.participation * cfg.num_clients
    selection_size = max(round_half_up(expected_selection), 1)
    meta = {
        "code_version": __version__,
        "seed": cfg.seed,
        "config": config_as_mapping(cfg),
        "rounds_completed": len(records),
        "final_test_accuracy": records[-1].test_accuracy if records else None,
        "total_wall_ms": sum(r.wall_ms for r in records),
        # Frequency weights are rescaled to sum to 1 whenever rounding makes
        # the selection size differ from F*K.
        "fedfreq_weights_rescaled": bool(
            cfg.aggregation == "fedfreq"
            and selection_size >= 2
            and abs(selection_size - expected_selection) > 1e-12
        ),
    }
    with open(os.path.join(cfg.out_dir, "run_meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    save_model(os.path.join(cfg.out_dir, "model.bin"), result.layer_dims, result.final_model)
    return 0


def cmd_partition(cfg: ExperimentConfig) -> int:
    from .data import partition_dirichlet, partition_iid

    train, _ = load_train_test(cfg)
    if cfg.mu_or_iid == "iid":
        plan = partition_iid(train, cfg.num_clients, (cfg.seed, 4))
    else:
        plan = partition_dirichlet(train, cfg.num_clients, float(cfg.mu_or_iid), (cfg.seed, 4))
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = os.path.join(cfg.out_dir, "partition.json")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(plan.to_json())
        fh.write("\n")
    print(path)
    return 0


def cmd_evaluate(model_path: str, data_npz: str | None, cfg: ExperimentConfig | None) -> int:
    model = load_model(resolve_data_path(model_path))
    if data_npz is not None:
        test_ds = load_npz(resolve_data_path(data_npz))
    elif cfg is not None:
        _, test_ds = load_train_test(cfg)
    else:
        raise ConfigError("evaluate needs --data-npz or dataset flags")
    accuracy = evaluate(model, test_ds)
    print(f"accuracy {_fmt(accuracy)}")
    return 0


def cmd_gen_synthetic(out_path: str, cfg: ExperimentConfig) -> int:
    ds = gen_synthetic(cfg.classes, cfg.dims, cfg.samples, cfg.spread, (cfg.seed, 1))
    save_npz(out_path, ds)
    print(out_path)
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value config file")
    for key in KEYS:
        parser.add_argument(f"--{key}", dest=f"key_{key}", metavar="V")


def _collect_overrides(args: argparse.Namespace) -> dict[str, str]:
    overrides = {}
    for key in KEYS:
        value = getattr(args, f"key_{key}", None)
        if value is not None:
            overrides[key] = value
    return overrides


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedssl",
        description="Deterministic semi-supervised federated learning simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run a training protocol")
    _add_config_flags(train)

    partition = sub.add_parser("partition", help="write a partition plan as JSON")
    _add_config_flags(partition)

    ev = sub.add_parser("evaluate", help="accuracy of a saved model on a test set")
    ev.add_argument("--model", required=True, help="model checkpoint path")
    ev.add_argument("--data-npz", help="test set as a .npz archive")
    _add_config_flags(ev)

    gen = sub.add_parser("gen-synthetic", help="write a synthetic dataset as .npz")
    gen.add_argument("--out", required=True, help="output .npz path")
    _add_config_flags(gen)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(getattr(args, "config", None), _collect_overrides(args))
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "partition":
            return cmd_partition(cfg)
        if args.command == "evaluate":
            return cmd_evaluate(args.model, args.data_npz, cfg)
        return cmd_gen_synthetic(args.out, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports and exits
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
