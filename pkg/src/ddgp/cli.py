"""Config-driven experiment runner.

Verbs: run (execute an experiment, write artifacts to a timestamped
directory), describe (print the resolved plan without training or writing),
list-experiments (name the known experiment kinds and shipped configs).

Every run directory holds a copy of the resolved config, a manifest (the only
place timestamps appear, so reruns are byte-comparable), metrics as JSON plus
tidy CSV, probe CSVs, and checkpoints. Exit codes: 0 ok, 2 config error,
3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime
import json
import os
import sys
import time
import traceback
from pathlib import Path

import numpy as np
import torch
import yaml

from . import data, diagnostics, rng, uncertainty
from . import eval as evaluation
from .checkpoint import save_checkpoint
from .config import EXPERIMENTS, ConfigError, ExperimentConfig, load_config
from .deep import DeepModel, build_model, elbo, forward
from .gaussmath import NumericalError
from .moments import ExactGP, NoisyInput, exact_moments, mc_moments, taylor_moments
from .train import TrainConfig, TrainingDiverged, fit, gradient_check

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4

OUT_ROOT_ENV = "DDGP_OUT_ROOT"
DATA_DIR_ENV = "DDGP_DATA_DIR"


class DataError(Exception):
    """Dataset missing or unreadable."""


# ---------------------------------------------------------------- datasets

def _resolve_path(p, config_dir: Path) -> Path:
    p = Path(p)
    return p if p.is_absolute() else config_dir / p


def _image_dir(spec: dict, config_dir: Path) -> Path:
    if spec.get("data_dir"):
        return _resolve_path(spec["data_dir"], config_dir)
    env = os.environ.get(DATA_DIR_ENV)
    if env:
        return Path(env)
    return config_dir / "data" / "standin"


def load_dataset(spec: dict, config_dir: Path, seed: int) -> data.Dataset:
    """Synthesize or read the configured dataset; file problems raise DataError."""
    kind = spec["kind"]
    try:
        if kind == "toy_1d":
            return data.make_toy_1d(spec.get("n", 200), seed=spec.get("seed", seed),
                                    scale=spec.get("scale", 1.0),
                                    noise=spec.get("noise", 0.1))
        if kind == "banana":
            return data.make_banana(spec.get("n", 200), seed=spec.get("seed", seed))
        if kind == "csv":
            return data.load_csv(_resolve_path(spec["path"], config_dir),
                                 spec["target_column"], spec["task"])
        if kind == "idx":
            return data.load_idx(_resolve_path(spec["images"], config_dir),
                                 _resolve_path(spec["labels"], config_dir),
                                 spec.get("downsample_to", 7))
        if kind == "standin_images":
            _, train, _, _ = data.resolve_image_corpus(
                _image_dir(spec, config_dir), spec.get("downsample_to"))
            return train
    except (OSError, ValueError) as exc:
        raise DataError(f"dataset {kind}: {exc}") from exc
    raise ConfigError(f"unhandled dataset kind {kind!r}")


def _out_dim(ds: data.Dataset) -> int:
    if ds.task == "classification":
        return int(np.unique(ds.y).size)
    y = np.asarray(ds.y)
    return 1 if y.ndim == 1 else y.shape[1]


# ------------------------------------------------------------------ models

_BUILD_PASSTHROUGH = ("kernel_variance", "lengthscale", "noise_variance",
                      "inducing_dist_variance", "q_mu_range")


def _build(cfg: ExperimentConfig, x_train: np.ndarray, out_dim: int, task: str,
           seed: int, kind: str | None = None) -> DeepModel:
    model = cfg.model
    likelihood = model.get("likelihood") or \
        ("softmax" if task == "classification" else "gaussian")
    kwargs = {k: model[k] for k in _BUILD_PASSTHROUGH if k in model}
    return build_model(kind or model["kind"], x_train,
                       hidden_widths=model["hidden_widths"], out_dim=out_dim,
                       n_inducing=model["n_inducing"], likelihood=likelihood,
                       seed=seed, mean_function=model.get("mean_function", "pca"),
                       **kwargs)


def _train_config(cfg: ExperimentConfig, seed: int) -> TrainConfig:
    return dataclasses.replace(cfg.train, seed=seed)


def _grid(x: np.ndarray, grid_size: int, margin: float) -> np.ndarray:
    lo = x.min(axis=0) - margin
    hi = x.max(axis=0) + margin
    axes = [np.linspace(lo[d], hi[d], grid_size) for d in range(x.shape[1])]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def _param_count(model: DeepModel) -> dict:
    """Per-group and total parameter element counts, grouped by name prefix."""
    groups: dict[str, int] = {}
    for name, p in model.parameters().items():
        prefix = ".".join(name.split(".")[:2]) if name.startswith("layers.") \
            else name.split(".")[0]
        groups[prefix] = groups.get(prefix, 0) + p.numel()
    return {"groups": groups, "total": sum(groups.values())}


# ------------------------------------------------------------- experiments

def _run_fit(cfg, ds, seed, run_dir, config_dir):
    split = data.train_test_split(ds, cfg.dataset.get("test_fraction", 0.2),
                                  seed=seed)
    model = _build(cfg, split.x_train, _out_dim(ds), ds.task, seed)
    trace = fit(model, split.x_train, split.y_train, _train_config(cfg, seed))
    save_checkpoint(model, run_dir / f"checkpoint_seed{seed}.npz")
    evaluation.write_csv_rows(run_dir / f"trace_seed{seed}.csv", ["step", "elbo"],
                              list(enumerate(trace.elbo)))
    metrics = evaluation.standard_metrics(model, split.x_test, split.y_test,
                                          key=rng.mix(seed, rng.DOMAIN_EVAL, 0))
    metrics["elbo_final"] = trace.elbo[-1]
    metrics["converged"] = trace.converged
    return metrics


def _run_collapse(cfg, ds, seed, run_dir, config_dir):
    p = cfg.params
    counts = p.get("inducing_counts", [5, 10, 20, 50])
    n_layers = p.get("n_layers", len(cfg.model["hidden_widths"]) + 1)
    kinds = p.get("models", ["dgp", "ddgp"])
    rows, out = [], {}
    for kind in kinds:
        probe = diagnostics.collapse_curve(
            ds.x, np.asarray(ds.y, dtype=np.float64).reshape(len(ds.x), -1),
            counts, n_layers=n_layers, seed=seed, kind=kind,
            train_config=_train_config(cfg, seed), key=seed,
            kernel_variance=cfg.model.get("kernel_variance", 1.0),
            lengthscale=cfg.model.get("lengthscale", 0.3))
        out[kind] = {"curve": {str(m): v for m, v in probe.measured["curve"].items()},
                     "failed": probe.measured["failed"]}
        rows += [[kind, m, v] for m, v in sorted(probe.measured["curve"].items())]
    evaluation.write_csv_rows(run_dir / f"collapse_seed{seed}.csv",
                              ["model", "n_inducing", "far_field_var_nonparam"],
                              rows)
    return out


def _manifold_ratio(grid, x_train, field, near=0.25, far=1.0):
    d = np.sqrt(((grid[:, None, :] - x_train[None, :, :]) ** 2).sum(-1)).min(1)
    on, off = field[d <= near], field[d >= far]
    if not on.size or not off.size:
        return float("nan")
    return float(off.mean() / max(on.mean(), 1e-300))


def _perp_ratio(grid, x_train, field, near=0.25, far=1.0):
    """Same ratio restricted to off-manifold cells that sit mostly along the
    direction orthogonal to the first principal axis of the training inputs.
    A width-1 PCA mean projects those cells back onto mid-manifold values,
    which is where a plain model goes confidently flat."""
    center = x_train.mean(axis=0)
    _, _, vt = np.linalg.svd(x_train - center, full_matrices=False)
    d = np.sqrt(((grid[:, None, :] - x_train[None, :, :]) ** 2).sum(-1)).min(1)
    offset = grid - center
    along = np.abs(offset @ vt[0])
    ortho = np.sqrt(np.maximum((offset**2).sum(-1) - along**2, 0.0))
    on = field[d <= near]
    off = field[(d >= far) & (ortho > along)]
    if not on.size or not off.size:
        return float("nan")
    return float(off.mean() / max(on.mean(), 1e-300))


def _run_banana_map(cfg, ds, seed, run_dir, config_dir):
    p = cfg.params
    grid = _grid(ds.x, p.get("grid_size", 30), p.get("margin", 1.5))
    out = {}
    for kind in p.get("models", ["dgp", "ddgp"]):
        model = _build(cfg, ds.x, _out_dim(ds), ds.task, seed, kind=kind)
        fit(model, ds.x, ds.y, _train_config(cfg, seed))
        report = uncertainty.decompose(model, grid,
                                       key=rng.mix(seed, rng.DOMAIN_EVAL, 1))
        header = ["x0", "x1"]
        cols = [grid[:, 0], grid[:, 1]]
        ratios, ratios_perp = {}, {}
        for li in range(model.n_layers):
            vn = report.layer_var_nonparametric[li].mean(axis=1)
            vp = report.layer_var_parametric[li].mean(axis=1)
            header += [f"var_nonparam_l{li}", f"var_param_l{li}"]
            cols += [vn, vp]
            ratios[f"layer{li}"] = _manifold_ratio(grid, ds.x, vn)
            ratios_perp[f"layer{li}"] = _perp_ratio(grid, ds.x, vn)
        evaluation.write_csv_rows(run_dir / f"field_{kind}_seed{seed}.csv", header,
                                  np.stack(cols, axis=1).tolist())
        out[kind] = {"ood_to_manifold_var_ratio": ratios,
                     "ood_to_manifold_var_ratio_perp": ratios_perp}
    return out


def _run_smoothness(cfg, ds, seed, run_dir, config_dir):
    p = cfg.params
    grid = _grid(ds.x, p.get("grid_size", 25), p.get("margin", 1.5))
    focus = np.asarray(p.get("focus_points", [[0.0, 0.25]]), dtype=np.float64)
    out = {}
    for kind in p.get("models", ["dgp", "ddgp"]):
        model = _build(cfg, ds.x, _out_dim(ds), ds.task, seed, kind=kind)
        fit(model, ds.x, ds.y, _train_config(cfg, seed))
        probe = diagnostics.smoothness_map(model, focus, grid,
                                           n_samples=p.get("n_field_samples", 200),
                                           key=rng.mix(seed, rng.DOMAIN_EVAL, 2))
        header = ["x0", "x1"]
        cols = [grid[:, 0], grid[:, 1]]
        areas = {}
        for li in range(model.n_layers):
            field = probe.measured[f"layer{li}_field"]
            for fi in range(focus.shape[0]):
                header.append(f"abs_corr_l{li}_f{fi}")
                cols.append(field[fi])
            areas[f"layer{li}"] = float(np.mean(
                [diagnostics.smoothness_area(field[fi])
                 for fi in range(focus.shape[0])]))
        evaluation.write_csv_rows(run_dir / f"corr_{kind}_seed{seed}.csv", header,
                                  np.stack(cols, axis=1).tolist())
        out[kind] = {"area_above_half": areas}
    return out


def _run_ood(cfg, ds, seed, run_dir, config_dir):
    p = cfg.params
    name, train_ds, held, ood_ds = data.resolve_image_corpus(
        _image_dir(cfg.dataset, config_dir), cfg.dataset.get("downsample_to"))
    if held is None:
        split = data.train_test_split(
            train_ds, cfg.dataset.get("test_fraction", 0.2), seed=seed)
        x_tr, y_tr, x_in = split.x_train, split.y_train, split.x_test
        scaler = split.x_standardizer
    else:
        scaler = data.Standardizer.fit(train_ds.x)
        x_tr, y_tr = scaler.transform(train_ds.x), train_ds.y
        x_in = scaler.transform(held.x)
    x_out = scaler.transform(ood_ds.x)

    cap_tr = p.get("n_train_cap", 5000)
    cap_ev = p.get("n_eval_cap", 1000)
    x_tr, y_tr = x_tr[:cap_tr], y_tr[:cap_tr]
    x_in, x_out = x_in[:cap_ev], x_out[:cap_ev]

    rows, out = [], {"corpus": name}
    kwargs = {k: cfg.model[k] for k in _BUILD_PASSTHROUGH if k in cfg.model}
    for kind in p.get("models", ["dgp", "ddgp"]):
        for m in p.get("inducing_counts", [50, 100]):
            model = build_model(kind, x_tr,
                                hidden_widths=cfg.model["hidden_widths"],
                                out_dim=_out_dim(train_ds), n_inducing=int(m),
                                likelihood="softmax", seed=seed,
                                mean_function=cfg.model.get("mean_function", "pca"),
                                **kwargs)
            fit(model, x_tr, y_tr, _train_config(cfg, seed))
            key = rng.mix(seed, rng.DOMAIN_EVAL, int(m))
            s_in = uncertainty.ood_score(model, x_in, key=key)
            s_out = uncertainty.ood_score(model, x_out, key=key)
            score = uncertainty.auc(s_out, s_in)
            rows.append([kind, int(m), seed, score])
            out[f"{kind}_m{m}"] = {"auc": score}
    evaluation.write_csv_rows(run_dir / f"auc_seed{seed}.csv",
                              ["model", "n_inducing", "seed", "auc"], rows)
    return out


def _run_moments_demo(cfg, ds, seed, run_dir, config_dir):
    p = cfg.params
    split = data.train_test_split(ds, cfg.dataset.get("test_fraction", 0.2),
                                  seed=seed)
    model_cfg = cfg.model
    gp = ExactGP(split.x_train, split.y_train,
                 variance=model_cfg.get("kernel_variance", 1.0),
                 lengthscales=model_cfg.get("lengthscale", 1.0),
                 noise_variance=model_cfg.get("noise_variance", 0.1))
    variances = p.get("input_variances", [1e-6, 0.01, 0.1, 1.0])
    n_grid = p.get("n_grid", 9)
    mc_draws = p.get("mc_draws", 20000)
    means = np.linspace(split.x_train.min(), split.x_train.max(), n_grid)
    d = split.x_train.shape[1]
    rows = []
    for s in variances:
        for i, m0 in enumerate(means):
            ni = NoisyInput(np.full(d, m0), np.full(d, s))
            em, ev = exact_moments(gp, ni)
            tm, tv = taylor_moments(gp, ni)
            mm, mv, _, _ = mc_moments(gp, ni, n_draws=mc_draws,
                                      seed=rng.mix(seed, rng.DOMAIN_EVAL, i))
            rows.append([s, m0, em, ev, tm, tv, mm, mv])
    evaluation.write_csv_rows(
        run_dir / f"moments_seed{seed}.csv",
        ["input_variance", "input_mean", "mean_exact", "var_exact",
         "mean_taylor", "var_taylor", "mean_mc", "var_mc"], rows)

    # derivative-ratio probe on a trained two-layer model, second layer
    model = _build(cfg, split.x_train, _out_dim(ds), ds.task, seed)
    fit(model, split.x_train, split.y_train, _train_config(cfg, seed))
    probe_rows = []
    max_dev = 0.0
    if model.n_layers >= 2 and cfg.model["hidden_widths"][:1] == [1] and d == 1:
        grid = np.linspace(-3.0, 3.0, 121)
        sigma_sq_prev = float(model.layers[0].kernel.variance.detach())
        offset = p.get("probe_offset", 1.0)
        for s in variances:
            pr = diagnostics.mean_derivative_probe(
                model, 1, grid, m_in=offset, v_in=float(s),
                sigma_sq_prev=sigma_sq_prev, key=rng.mix(seed, rng.DOMAIN_EVAL, 9))
            probe_rows.append([s, pr.measured["dmean_at_m_in"],
                               pr.measured["dmean_at_zero"],
                               pr.measured["ratio_lhs"], pr.measured["ratio_rhs"],
                               int(bool(pr.passed))])
        evaluation.write_csv_rows(
            run_dir / f"derivative_seed{seed}.csv",
            ["input_variance", "d_mean_at_offset", "d_mean_at_zero",
             "ratio_sq", "bound", "within_bound"], probe_rows)
    for r in rows:
        _, _, em, ev, tm, tv, _, _ = r
        max_dev = max(max_dev, abs(em - tm), abs(ev - tv))
    return {"n_rows": len(rows), "max_taylor_vs_exact_dev": max_dev,
            "derivative_rows": len(probe_rows)}


def _run_gradcheck(cfg, ds, seed, run_dir, config_dir):
    p = cfg.params
    split = data.train_test_split(ds, cfg.dataset.get("test_fraction", 0.2),
                                  seed=seed)
    n = min(p.get("n_points", 8), len(split.x_train))
    x = torch.as_tensor(split.x_train[:n])
    y = torch.as_tensor(np.asarray(split.y_train[:n]))
    model = _build(cfg, split.x_train, _out_dim(ds), ds.task, seed)
    key = rng.mix(seed, rng.DOMAIN_FORWARD, 0)

    def objective():
        return -elbo(model, x, y, n_total=n, n_samples=cfg.train.n_samples,
                     key=key)

    report = gradient_check(objective, model.parameters(),
                            step=p.get("fd_step", 1e-4))
    evaluation.write_json(run_dir / f"gradcheck_seed{seed}.json", report)
    return {"max_rel_err": report["max_rel_err"],
            "max_abs_err": report["max_abs_err"]}


_RUNNERS = {
    "fit": _run_fit,
    "collapse_curve": _run_collapse,
    "banana_map": _run_banana_map,
    "smoothness": _run_smoothness,
    "ood": _run_ood,
    "moments_demo": _run_moments_demo,
    "gradcheck": _run_gradcheck,
}


# ------------------------------------------------------------------- verbs

def run(cfg: ExperimentConfig, config_dir: Path, out_root=None) -> Path:
    """Execute the experiment for every seed; returns the run directory."""
    root = Path(out_root or cfg.output_dir or
                os.environ.get(OUT_ROOT_ENV, "runs"))
    started = time.time()
    stamp = datetime.datetime.now(datetime.timezone.utc).strftime("%Y%m%d-%H%M%S-%f")
    run_dir = root / f"{cfg.name}-{stamp}"
    run_dir.mkdir(parents=True, exist_ok=False)
    evaluation._atomic_write(run_dir / "config.yaml",
                             yaml.safe_dump(cfg.resolved(), sort_keys=True))

    needs_dataset = cfg.experiment != "ood"
    per_seed = {}
    records = []
    provenance = None
    try:
        for seed in cfg.seeds:
            ds = load_dataset(cfg.dataset, config_dir, seed) if needs_dataset \
                else None
            if ds is not None:
                provenance = ds.provenance
            result = _RUNNERS[cfg.experiment](cfg, ds, seed, run_dir, config_dir)
            per_seed[str(seed)] = result
            for k, v in result.items():
                if isinstance(v, (int, float)) and not isinstance(v, bool):
                    records += evaluation.metrics_records(
                        cfg.dataset["kind"], cfg.model["kind"], seed, {k: v})
    except Exception as exc:
        evaluation.write_json(run_dir / "error.json",
                              {"type": type(exc).__name__, "message": str(exc),
                               "seeds_completed": sorted(per_seed)})
        raise

    metrics = {"experiment": cfg.experiment, "name": cfg.name,
               "per_seed": per_seed}
    evaluation.write_json(run_dir / "metrics.json", metrics)
    if records:
        header = sorted(records[0])
        evaluation.write_csv_rows(run_dir / "metrics.csv", header,
                                  [[r[k] for k in header] for r in records])
    manifest = {
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "wall_time_s": time.time() - started,
        "experiment": cfg.experiment, "name": cfg.name, "seeds": cfg.seeds,
        "dataset_provenance": provenance,
        "versions": {"python": sys.version.split()[0],
                     "numpy": np.__version__, "torch": torch.__version__},
    }
    evaluation.write_json(run_dir / "manifest.json", manifest)
    return run_dir


def describe(cfg: ExperimentConfig, config_dir: Path, stream=None) -> dict:
    """Print the resolved plan: architecture, parameter counts, data shapes.

    Reads data files when the dataset is file-backed, writes nothing.
    """
    stream = stream or sys.stdout
    spec = cfg.dataset
    kind = spec["kind"]
    note = ""
    if kind == "toy_1d":
        n, d_in, out_dim, task = spec.get("n", 200), 1, 1, "regression"
    elif kind == "banana":
        n, d_in, out_dim, task = spec.get("n", 200), 2, 2, "classification"
    elif kind == "standin_images":
        base = _image_dir(spec, config_dir)
        side = spec.get("downsample_to")
        literal = all((base / f).exists() for f in data.MNIST_LAYOUT.values())
        standin = all((base / f).exists() for f in data.STANDIN_FILES.values())
        if literal or standin:
            name, train, _, _ = data.resolve_image_corpus(base, side)
            n, d_in = train.x.shape
            out_dim, task = _out_dim(train), "classification"
            note = f"corpus: {name}"
        else:
            d_in = (side or 4) ** 2
            n, out_dim, task = 1797, 10, "classification"
            note = "stand-in corpus not materialized yet; run creates it"
    else:
        ds = load_dataset(spec, config_dir, cfg.seeds[0])
        n, d_in = ds.x.shape[0], ds.x.shape[1]
        out_dim, task = _out_dim(ds), ds.task

    x_stub = np.zeros((max(cfg.model["n_inducing"], 2), d_in))
    model = _build(cfg, x_stub, out_dim, task, cfg.seeds[0])
    counts = _param_count(model)

    widths = cfg.model["hidden_widths"]
    dims = [d_in, *widths, out_dim]
    lines = [f"experiment: {cfg.experiment}",
             f"name: {cfg.name}",
             f"seeds: {cfg.seeds}",
             f"dataset: {kind} (n={n}, d_in={d_in}, task={task})"
             + (f" [{note}]" if note else ""),
             f"model: {cfg.model['kind']}, {len(dims) - 1} layers, "
             f"dims {'->'.join(str(d) for d in dims)}, "
             f"n_inducing={cfg.model['n_inducing']}, "
             f"mean_function={cfg.model.get('mean_function', 'pca')}",
             "parameters:"]
    for g in sorted(counts["groups"]):
        lines.append(f"  {g}: {counts['groups'][g]}")
    lines.append(f"  total: {counts['total']}")
    lines.append(f"train: max_iters={cfg.train.max_iters}, "
                 f"batch_size={cfg.train.batch_size}, "
                 f"learning_rate={cfg.train.learning_rate}")
    print("\n".join(lines), file=stream)
    return {"n": n, "d_in": d_in, "out_dim": out_dim, "task": task,
            "param_count": counts["total"], "param_groups": counts["groups"]}


def list_experiments(stream=None) -> None:
    stream = stream or sys.stdout
    print("experiment kinds: " + ", ".join(EXPERIMENTS), file=stream)
    shipped = Path(__file__).resolve().parents[2] / "configs"
    if shipped.is_dir():
        names = sorted(p.stem for p in shipped.glob("*.yaml"))
        if names:
            print("shipped configs: " + ", ".join(names), file=stream)


# -------------------------------------------------------------------- main

def _error_record(kind: str, exc: Exception) -> str:
    return json.dumps({"error": kind, "type": type(exc).__name__,
                       "message": str(exc)}, sort_keys=True)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ddgp", description="deep GP experiment runner")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in ("run", "describe"):
        sp = sub.add_parser(verb)
        sp.add_argument("--config", required=True, help="path to a YAML config")
        sp.add_argument("--seed", type=int, default=None,
                        help="override the config's seed list with one seed")
        if verb == "run":
            sp.add_argument("--out", default=None,
                            help=f"output root (default: config, then "
                                 f"${OUT_ROOT_ENV}, then ./runs)")
    sub.add_parser("list-experiments")

    args = parser.parse_args(argv)
    if args.verb == "list-experiments":
        list_experiments()
        return EXIT_OK

    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seeds=[args.seed])
    except (ConfigError, yaml.YAMLError, TypeError, FileNotFoundError) as exc:
        print(_error_record("config", exc), file=sys.stderr)
        return EXIT_CONFIG

    config_dir = Path(args.config).resolve().parent
    try:
        if args.verb == "describe":
            describe(cfg, config_dir)
            return EXIT_OK
        run_dir = run(cfg, config_dir, out_root=args.out)
        print(run_dir)
        return EXIT_OK
    except DataError as exc:
        print(_error_record("data", exc), file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, TrainingDiverged) as exc:
        print(_error_record("numerical", exc), file=sys.stderr)
        traceback.print_exc(file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
