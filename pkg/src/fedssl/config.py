"""Experiment configuration: defaults, file/flag parsing and serialization.

A configuration is a flat key=value document; command-line flags use the same
kebab-case keys and override file values. Unset keys fall back to defaults,
a few of which depend on the scenario (training runs much longer, with a
larger learning rate and smaller labeled batches, when labels live on the
clients).

Relative dataset paths are resolved against the FEDSSL_DATA_DIR environment
variable when it is set.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Mapping

from .errors import ConfigError

SCENARIOS = ("labels_at_client", "labels_at_server")
METHODS = ("fedmix", "sl_fedavg", "ssl_fedavg", "naive_decomposition")
AGGREGATIONS = ("fedavg", "fedfreq")
SELECTIONS = ("uncertainty", "min_entropy", "random")
DATASETS = ("idx", "cifar_bin", "synthetic")

DATA_DIR_ENV = "FEDSSL_DATA_DIR"


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved description of one run."""

    scenario: str
    method: str
    aggregation: str
    selection: str
    dataset: str
    num_clients: int
    participation: float
    rounds: int
    augmentations: int
    select_n: int
    batch_unlabeled: int
    batch_labeled: int
    epochs_unlabeled: int
    epochs_labeled: int
    eta: float
    lambda_s: float
    lambda_l2: float
    alpha: float
    beta: float
    gamma: float
    mu_or_iid: float | str
    streaming: bool
    seed: int
    labeled_per_client: int
    labeled_server: int
    hidden: tuple[int, ...]
    classes: int
    dims: int
    samples: int
    test_samples: int
    spread: float
    noise_sigma: float
    image_path: str | None
    label_path: str | None
    test_image_path: str | None
    test_label_path: str | None
    cifar_paths: tuple[str, ...]
    test_cifar_paths: tuple[str, ...]
    out_dir: str
    timing: bool


def _parse_bool(raw: str) -> bool:
    if raw.lower() in ("true", "1", "yes"):
        return True
    if raw.lower() in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_mu(raw: str):
    if raw == "iid":
        return "iid"
    return float(raw)


def _parse_hidden(raw: str) -> tuple[int, ...]:
    dims = tuple(int(part) for part in raw.split(",") if part.strip())
    if not dims:
        raise ValueError("hidden layer list is empty")
    return dims


def _parse_paths(raw: str) -> tuple[str, ...]:
    return tuple(p for p in (part.strip() for part in raw.split(",")) if p)


def _parse_optional_path(raw: str) -> str | None:
    return raw or None


# key -> (attribute, parser). Key order here is the canonical serialization order.
KEYS: dict[str, tuple[str, object]] = {
    "scenario": ("scenario", str),
    "method": ("method", str),
    "aggregation": ("aggregation", str),
    "selection": ("selection", str),
    "dataset": ("dataset", str),
    "k": ("num_clients", int),
    "f": ("participation", float),
    "t": ("rounds", int),
    "a": ("augmentations", int),
    "n": ("select_n", int),
    "b-u": ("batch_unlabeled", int),
    "b-s": ("batch_labeled", int),
    "e-u": ("epochs_unlabeled", int),
    "e-s": ("epochs_labeled", int),
    "eta": ("eta", float),
    "lambda-s": ("lambda_s", float),
    "lambda-l2": ("lambda_l2", float),
    "alpha": ("alpha", float),
    "beta": ("beta", float),
    "gamma": ("gamma", float),
    "mu-or-iid": ("mu_or_iid", _parse_mu),
    "streaming": ("streaming", _parse_bool),
    "seed": ("seed", int),
    "labeled-per-client": ("labeled_per_client", int),
    "labeled-server": ("labeled_server", int),
    "hidden": ("hidden", _parse_hidden),
    "classes": ("classes", int),
    "dims": ("dims", int),
    "samples": ("samples", int),
    "test-samples": ("test_samples", int),
    "spread": ("spread", float),
    "noise-sigma": ("noise_sigma", float),
    "image-path": ("image_path", _parse_optional_path),
    "label-path": ("label_path", _parse_optional_path),
    "test-image-path": ("test_image_path", _parse_optional_path),
    "test-label-path": ("test_label_path", _parse_optional_path),
    "cifar-path": ("cifar_paths", _parse_paths),
    "test-cifar-path": ("test_cifar_paths", _parse_paths),
    "out-dir": ("out_dir", str),
    "timing": ("timing", _parse_bool),
}

DEFAULTS: dict[str, str] = {
    "scenario": "labels_at_client",
    "method": "fedmix",
    "aggregation": "fedfreq",
    "dataset": "synthetic",
    "k": "100",
    "f": "0.05",
    "n": "100",
    "b-u": "100",
    "e-u": "1",
    "e-s": "1",
    "lambda-s": "10.0",
    "lambda-l2": "15.0",
    "alpha": "0.5",
    "beta": "0.3",
    "gamma": "0.2",
    "mu-or-iid": "iid",
    "streaming": "false",
    "seed": "0",
    "labeled-per-client": "50",
    "labeled-server": "1000",
    "hidden": "64",
    "classes": "10",
    "dims": "32",
    "samples": "6000",
    "test-samples": "2000",
    "spread": "0.15",
    "noise-sigma": "0.1",
    "image-path": "",
    "label-path": "",
    "test-image-path": "",
    "test-label-path": "",
    "cifar-path": "",
    "test-cifar-path": "",
    "out-dir": "runs",
    "timing": "false",
}

# Scenario-dependent defaults: rounds, learning rate, labeled batch size,
# augmentation copies for the pseudo-label vote, and selection strategy.
SCENARIO_DEFAULTS: dict[str, dict[str, str]] = {
    "labels_at_client": {
        "t": "600",
        "eta": "0.01",
        "b-s": "10",
        "a": "3",
        "selection": "uncertainty",
    },
    "labels_at_server": {
        "t": "150",
        "eta": "0.001",
        "b-s": "64",
        "a": "5",
        "selection": "random",
    },
}


def read_config_file(path: str) -> dict[str, str]:
    """Read a flat key=value document, rejecting unknown keys."""
    pairs: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            key = key.strip()
            if key not in KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            pairs[key] = value.strip()
    return pairs


def resolve_data_path(path: str) -> str:
    """Resolve a dataset path against FEDSSL_DATA_DIR when it is relative."""
    base = os.environ.get(DATA_DIR_ENV)
    if base and not os.path.isabs(path):
        return os.path.join(base, path)
    return path


def parse_config(
    path: str | None = None, overrides: Mapping[str, str] | None = None
) -> ExperimentConfig:
    """Build a validated configuration from defaults, a file, and overrides.

    Precedence: flag overrides beat file values beat scenario defaults beat
    global defaults. Unknown keys and invariant violations raise ConfigError
    naming the offending key.
    """
    merged: dict[str, str] = {}
    if path is not None:
        merged.update(read_config_file(path))
    for key, value in (overrides or {}).items():
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}")
        merged[key] = str(value)

    scenario = merged.get("scenario", DEFAULTS["scenario"])
    if scenario not in SCENARIOS:
        raise ConfigError(f"scenario: unknown tag {scenario!r}")

    resolved = dict(DEFAULTS)
    resolved.update(SCENARIO_DEFAULTS[scenario])
    resolved.update(merged)

    values: dict[str, object] = {}
    for key, raw in resolved.items():
        attr, parser = KEYS[key]
        try:
            values[attr] = parser(raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{key}: cannot parse {raw!r} ({exc})") from exc

    cfg = ExperimentConfig(**values)
    _validate(cfg)
    return cfg


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


def _validate(cfg: ExperimentConfig) -> None:
    _require(cfg.method in METHODS, f"method: unknown tag {cfg.method!r}")
    _require(cfg.aggregation in AGGREGATIONS, f"aggregation: unknown tag {cfg.aggregation!r}")
    _require(cfg.selection in SELECTIONS, f"selection: unknown tag {cfg.selection!r}")
    _require(cfg.dataset in DATASETS, f"dataset: unknown tag {cfg.dataset!r}")
    _require(0.0 < cfg.participation <= 1.0, f"f: {cfg.participation} not in (0, 1]")
    _require(
        cfg.participation * cfg.num_clients >= 1.0,
        "f: participation times k must be at least 1",
    )
    _require(cfg.num_clients >= 1, "k: need at least one client")
    _require(cfg.rounds >= 0, "t: rounds must be nonnegative")
    _require(cfg.augmentations >= 1, "a: need at least one augmentation copy")
    _require(cfg.select_n >= 1, "n: selection size must be positive")
    _require(
        min(cfg.batch_unlabeled, cfg.batch_labeled, cfg.epochs_unlabeled, cfg.epochs_labeled) >= 1,
        "b-u/b-s/e-u/e-s: batch sizes and epochs must be positive",
    )
    _require(cfg.eta >= 0.0, f"eta: {cfg.eta} is negative")
    _require(cfg.lambda_s >= 0.0 and cfg.lambda_l2 >= 0.0, "lambda-s/lambda-l2: must be nonnegative")
    if cfg.method == "naive_decomposition":
        _require(
            min(cfg.alpha, cfg.beta, cfg.gamma) >= 0.0,
            "alpha/beta/gamma: must be nonnegative",
        )
    else:
        _require(
            abs(cfg.alpha + cfg.beta + cfg.gamma - 1.0) <= 1e-9
            and min(cfg.alpha, cfg.beta, cfg.gamma) >= 0.0,
            "alpha/beta/gamma: mix weights must be nonnegative and sum to 1",
        )
    if cfg.mu_or_iid != "iid":
        _require(float(cfg.mu_or_iid) > 0.0, "mu-or-iid: concentration must be positive")
    _require(cfg.noise_sigma >= 0.0, "noise-sigma: must be nonnegative")
    _require(cfg.spread >= 0.0, "spread: must be nonnegative")
    _require(all(h >= 1 for h in cfg.hidden), "hidden: layer widths must be positive")
    _require(
        not (cfg.method == "sl_fedavg" and cfg.scenario == "labels_at_server"),
        "method: sl_fedavg needs client-side labels (labels_at_client)",
    )
    if cfg.dataset == "synthetic":
        _require(cfg.classes >= 2, "classes: need at least two")
        _require(cfg.dims >= 1, "dims: must be positive")
        _require(cfg.samples >= cfg.classes, "samples: need at least one per class")
        _require(cfg.test_samples >= 1, "test-samples: must be positive")
    elif cfg.dataset == "idx":
        _require(bool(cfg.image_path), "image-path: required for dataset=idx")
        _require(bool(cfg.label_path), "label-path: required for dataset=idx")
        _require(bool(cfg.test_image_path), "test-image-path: required for dataset=idx")
        _require(bool(cfg.test_label_path), "test-label-path: required for dataset=idx")
    elif cfg.dataset == "cifar_bin":
        _require(bool(cfg.cifar_paths), "cifar-path: required for dataset=cifar_bin")
        _require(bool(cfg.test_cifar_paths), "test-cifar-path: required for dataset=cifar_bin")
    if cfg.scenario == "labels_at_client":
        _require(cfg.labeled_per_client >= 1, "labeled-per-client: must be positive")
    else:
        _require(cfg.labeled_server >= 1, "labeled-server: must be positive")


def _format_value(key: str, value: object) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return ""
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical key=value rendering; parse_config(serialize(cfg)) == cfg."""
    lines = []
    for key, (attr, _) in KEYS.items():
        lines.append(f"{key}={_format_value(key, getattr(cfg, attr))}")
    return "\n".join(lines) + "\n"


def config_as_mapping(cfg: ExperimentConfig) -> dict[str, str]:
    """The same canonical rendering as a key -> string mapping."""
    return {key: _format_value(key, getattr(cfg, attr)) for key, (attr, _) in KEYS.items()}
