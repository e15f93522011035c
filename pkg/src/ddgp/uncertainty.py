"""Uncertainty decomposition and out-of-distribution scoring.

Model uncertainty at each layer splits into a parametric part (propagated
through the variational posterior over inducing outputs) and a non-parametric
part (the Schur-complement term that grows off the data manifold). The OOD
score for a point is the differential entropy of the diagonal Gaussian built
from its output-layer non-parametric variances, averaged over forward draws.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .deep import DeepModel, forward
from .gaussmath import diff_entropy_diag
from .likelihoods import SoftmaxLikelihood

EVAL_SAMPLES = 20


@dataclass
class UncertaintyReport:
    layer_mean: list[np.ndarray]
    layer_var_parametric: list[np.ndarray]
    layer_var_nonparametric: list[np.ndarray]
    ood_scores: np.ndarray
    predictive_entropy: np.ndarray | None = None

    def to_rows(self) -> tuple[list[str], list[list[float]]]:
        """Flatten to a per-point table (CSV-ready header + rows)."""
        header, cols = [], []
        for li, (m, vp, vn) in enumerate(zip(self.layer_mean,
                                             self.layer_var_parametric,
                                             self.layer_var_nonparametric)):
            for d in range(m.shape[1]):
                header += [f"layer{li}_mean_{d}", f"layer{li}_var_param_{d}",
                           f"layer{li}_var_nonparam_{d}"]
                cols += [m[:, d], vp[:, d], vn[:, d]]
        header.append("ood_score")
        cols.append(self.ood_scores)
        if self.predictive_entropy is not None:
            header.append("predictive_entropy")
            cols.append(self.predictive_entropy)
        rows = np.stack(cols, axis=1).tolist()
        return header, rows


def decompose(model: DeepModel, x, n_samples: int = EVAL_SAMPLES,
              key: int = 0) -> UncertaintyReport:
    """Per-layer moment summary averaged over n_samples forward draws."""
    x = torch.as_tensor(np.asarray(x, dtype=np.float64))
    with torch.no_grad():
        passes = forward(model, x, n_samples=n_samples, key=key)
        means, var_p, var_np = [], [], []
        for lf in passes:
            means.append(lf.out.mean.mean(0).numpy())
            var_p.append(lf.out.var_parametric.mean(0).numpy())
            var_np.append(lf.out.var_nonparametric.mean(0).numpy())
        scores = diff_entropy_diag(passes[-1].out.var_nonparametric.mean(0)).numpy()
        pred_ent = None
        if isinstance(model.likelihood, SoftmaxLikelihood):
            probs = model.likelihood.predict_probs(passes[-1].out).numpy()
            pred_ent = predictive_entropy(probs)
    return UncertaintyReport(means, var_p, var_np, scores, pred_ent)


def ood_score(model: DeepModel, x, n_samples: int = EVAL_SAMPLES,
              key: int = 0) -> np.ndarray:
    """Differential entropy of the output layer's non-parametric variance.

    Higher means farther from the data manifold.
    """
    x = torch.as_tensor(np.asarray(x, dtype=np.float64))
    with torch.no_grad():
        out = forward(model, x, n_samples=n_samples, key=key)[-1].out
        return diff_entropy_diag(out.var_nonparametric.mean(0)).numpy()


def auc(scores_pos, scores_neg) -> float:
    """Mann-Whitney U / (n_pos * n_neg) with ties counted half.

    Probability that a random positive outranks a random negative; 1.0 means
    the positive scores are fully above the negatives.
    """
    pos = np.asarray(scores_pos, dtype=np.float64).ravel()
    neg = np.asarray(scores_neg, dtype=np.float64).ravel()
    if pos.size == 0 or neg.size == 0:
        raise ValueError("auc needs nonempty score sets")
    combined = np.concatenate([pos, neg])
    order = np.argsort(combined, kind="mergesort")
    ranks = np.empty(combined.size, dtype=np.float64)
    sorted_vals = combined[order]
    i = 0
    while i < sorted_vals.size:  # average ranks across each tie group
        j = i
        while j + 1 < sorted_vals.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i: j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    u = ranks[: pos.size].sum() - pos.size * (pos.size + 1) / 2.0
    return float(u / (pos.size * neg.size))


def predictive_entropy(class_probs) -> np.ndarray:
    """Shannon entropy -sum p log p per row of a probability table."""
    p = np.asarray(class_probs, dtype=np.float64)
    if np.any(p < 0):
        raise ValueError("probabilities must be nonnegative")
    if np.any(np.abs(p.sum(axis=-1) - 1.0) > 1e-6):
        raise ValueError("rows must sum to 1")
    terms = np.where(p > 0, p * np.log(np.clip(p, 1e-300, None)), 0.0)
    return -terms.sum(axis=-1)
