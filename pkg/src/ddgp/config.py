"""Experiment configuration: YAML with strict unknown-key rejection at every
nesting level, so a typo fails loudly instead of silently using a default."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .train import TrainConfig

EXPERIMENTS = ("fit", "collapse_curve", "banana_map", "smoothness", "ood",
               "moments_demo", "gradcheck")

DATASET_KEYS = {
    "toy_1d": {"kind", "n", "seed", "scale", "noise", "test_fraction"},
    "banana": {"kind", "n", "seed", "test_fraction"},
    "csv": {"kind", "path", "target_column", "task", "test_fraction"},
    "idx": {"kind", "images", "labels", "downsample_to", "test_fraction"},
    "standin_images": {"kind", "data_dir", "downsample_to", "test_fraction"},
}

MODEL_KEYS = {"kind", "hidden_widths", "layers", "width", "n_inducing",
              "mean_function", "likelihood", "kernel_variance", "lengthscale",
              "noise_variance", "inducing_dist_variance", "q_mu_range"}

PARAM_KEYS = {
    "fit": set(),
    "collapse_curve": {"inducing_counts", "n_layers", "models"},
    "banana_map": {"grid_size", "margin", "models"},
    "smoothness": {"grid_size", "margin", "focus_points", "n_field_samples",
                   "models"},
    "ood": {"inducing_counts", "models", "n_train_cap", "n_eval_cap"},
    "moments_demo": {"input_variances", "n_grid", "mc_draws", "probe_offset"},
    "gradcheck": {"fd_step", "n_points"},
}

TRAIN_KEYS = {f.name for f in fields(TrainConfig)} - {"seed"}


class ConfigError(ValueError):
    """Schema violation; the message names the offending keys."""


def _require_mapping(obj, context: str) -> dict:
    if obj is None:
        return {}
    if not isinstance(obj, dict):
        raise ConfigError(f"{context}: expected a mapping, got {type(obj).__name__}")
    return obj


def _check_keys(d: dict, allowed: set, context: str) -> None:
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(f"{context}: unknown keys {unknown}; allowed: "
                          f"{sorted(allowed)}")


@dataclass
class ExperimentConfig:
    experiment: str
    name: str
    seeds: list[int]
    dataset: dict
    model: dict
    train: TrainConfig
    params: dict = field(default_factory=dict)
    output_dir: str | None = None

    def resolved(self) -> dict:
        """Plain-dict view for serialization into the run directory."""
        train = {k: getattr(self.train, k) for k in sorted(TRAIN_KEYS)}
        return {"experiment": self.experiment, "name": self.name,
                "seeds": list(self.seeds), "dataset": dict(self.dataset),
                "model": dict(self.model), "train": train,
                "params": dict(self.params), "output_dir": self.output_dir}


def _validate_model(model: dict) -> dict:
    _check_keys(model, MODEL_KEYS, "model")
    model = dict(model)
    if model.get("kind") not in ("dgp", "ddgp"):
        raise ConfigError(f"model.kind must be dgp or ddgp, got {model.get('kind')!r}")
    if "layers" in model or "width" in model:
        if "hidden_widths" in model:
            raise ConfigError("model: give either hidden_widths or layers/width")
        layers = model.pop("layers", None)
        width = model.pop("width", 1)
        if not isinstance(layers, int) or layers < 1:
            raise ConfigError(f"model.layers must be a positive integer, got {layers!r}")
        model["hidden_widths"] = [int(width)] * (layers - 1)
    widths = model.get("hidden_widths", [])
    if not isinstance(widths, list) or any(not isinstance(w, int) or w < 1
                                           for w in widths):
        raise ConfigError(f"model.hidden_widths must be positive integers, got {widths!r}")
    model["hidden_widths"] = widths
    m = model.get("n_inducing")
    if not isinstance(m, int) or m < 1:
        raise ConfigError(f"model.n_inducing must be a positive integer, got {m!r}")
    if model.get("mean_function", "pca") not in ("pca", "zero"):
        raise ConfigError(f"model.mean_function must be pca or zero, "
                          f"got {model.get('mean_function')!r}")
    return model


def validate(raw: dict, name: str = "config") -> ExperimentConfig:
    raw = _require_mapping(raw, "config")
    _check_keys(raw, {"experiment", "name", "seeds", "dataset", "model",
                      "train", "params", "output_dir"}, "config")
    exp = raw.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {list(EXPERIMENTS)}, got {exp!r}")

    seeds = raw.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds or \
            any(not isinstance(s, int) for s in seeds):
        raise ConfigError(f"seeds must be a nonempty list of integers, got {seeds!r}")

    dataset = _require_mapping(raw.get("dataset"), "dataset")
    kind = dataset.get("kind")
    if kind not in DATASET_KEYS:
        raise ConfigError(f"dataset.kind must be one of {sorted(DATASET_KEYS)}, "
                          f"got {kind!r}")
    _check_keys(dataset, DATASET_KEYS[kind], "dataset")

    model = _validate_model(_require_mapping(raw.get("model"), "model"))

    train_raw = _require_mapping(raw.get("train"), "train")
    _check_keys(train_raw, TRAIN_KEYS, "train")
    train = TrainConfig(**train_raw)

    params = _require_mapping(raw.get("params"), "params")
    _check_keys(params, PARAM_KEYS[exp], f"params ({exp})")

    return ExperimentConfig(experiment=exp, name=raw.get("name", name),
                            seeds=list(seeds), dataset=dict(dataset),
                            model=model, train=train, params=dict(params),
                            output_dir=raw.get("output_dir"))


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    return validate(raw, name=path.stem)
