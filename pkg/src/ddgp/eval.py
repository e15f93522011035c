"""Test-time metrics and deterministic artifact writers.

Regression metrics are computed in the standardized target space (train
statistics); the predictive density is the S-component mixture over forward
draws rather than a moment-matched Gaussian. Output files are written
atomically with sorted keys so identical runs are byte-identical; wall-clock
stamps live only in run manifests, never in metric files.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from pathlib import Path

import numpy as np
import torch

from .deep import DeepModel, predict_f
from .likelihoods import SoftmaxLikelihood
from .uncertainty import auc, ood_score

EVAL_SAMPLES = 20


def test_log_likelihood(model: DeepModel, x_test, y_test,
                        n_samples: int = EVAL_SAMPLES, key: int = 0) -> float:
    """Mean per-point log predictive density (mixture over forward draws)."""
    with torch.no_grad():
        out = predict_f(model, x_test, n_samples=n_samples, key=key)[-1].out
        y = torch.as_tensor(np.asarray(y_test), dtype=torch.float64)
        return float(model.likelihood.log_density_mixture(out, y).mean())


def rmse(model: DeepModel, x_test, y_test, n_samples: int = EVAL_SAMPLES,
         key: int = 0) -> float:
    with torch.no_grad():
        out = predict_f(model, x_test, n_samples=n_samples, key=key)[-1].out
        pred = out.mean.mean(0).numpy()
    resid = pred - np.asarray(y_test, dtype=np.float64)
    return float(np.sqrt((resid**2).mean()))


def accuracy(model: DeepModel, x_test, y_test, n_samples: int = EVAL_SAMPLES,
             key: int = 0) -> float:
    with torch.no_grad():
        out = predict_f(model, x_test, n_samples=n_samples, key=key)[-1].out
        probs = model.likelihood.predict_probs(out).numpy()
    pred = probs.argmax(axis=1)
    return float((pred == np.asarray(y_test).ravel()).mean())


def standard_metrics(model: DeepModel, x_test, y_test,
                     n_samples: int = EVAL_SAMPLES, key: int = 0) -> dict:
    """The task-appropriate metric bundle."""
    metrics = {"test_log_likelihood": test_log_likelihood(
        model, x_test, y_test, n_samples=n_samples, key=key)}
    if isinstance(model.likelihood, SoftmaxLikelihood):
        metrics["accuracy"] = accuracy(model, x_test, y_test,
                                       n_samples=n_samples, key=key)
    else:
        metrics["rmse"] = rmse(model, x_test, y_test, n_samples=n_samples, key=key)
    return metrics


def ood_table(models: dict[str, DeepModel], x_in, out_sets: dict[str, np.ndarray],
              n_samples: int = EVAL_SAMPLES, key: int = 0) -> dict:
    """AUC of each model's OOD score, held-out in-distribution vs each out set.

    Returns {out_set_name: {model_name: auc}}.
    """
    in_scores = {name: ood_score(m, x_in, n_samples=n_samples, key=key)
                 for name, m in models.items()}
    table: dict[str, dict[str, float]] = {}
    for out_name, x_out in out_sets.items():
        row = {}
        for name, m in models.items():
            scores_out = ood_score(m, x_out, n_samples=n_samples, key=key)
            row[name] = auc(scores_out, in_scores[name])
        table[out_name] = row
    return table


def metrics_records(dataset: str, model: str, seed: int, metrics: dict,
                    n_samples: int = EVAL_SAMPLES) -> list[dict]:
    """One flat record per metric: {dataset, model, seed, metric, value, n_samples}."""
    return [{"dataset": dataset, "model": model, "seed": seed, "metric": k,
             "value": v, "n_samples": n_samples}
            for k, v in sorted(metrics.items())]


def _atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj) -> None:
    _atomic_write(path, json.dumps(obj, sort_keys=True, indent=2) + "\n")


def write_csv_rows(path, header: list[str], rows) -> None:
    from io import StringIO
    buf = StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                    for v in row])
    _atomic_write(path, buf.getvalue())
