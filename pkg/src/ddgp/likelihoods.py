"""Observation models: Gaussian (regression) and softmax-categorical
(classification).

The Gaussian expected log density under the posterior marginal is analytic;
the categorical one is a single-sample Monte Carlo estimate through the
sampled output-layer values (and an S-sample average at evaluation time).
"""

from __future__ import annotations

import math

import torch

from .gaussmath import DTYPE
from .svgp import LayerOutput

_LOG2PI = math.log(2.0 * math.pi)


class GaussianLikelihood:
    def __init__(self, noise_variance: float = 1.0, trainable: bool = True):
        if noise_variance <= 0:
            raise ValueError("noise variance must be positive")
        self.log_noise_variance = torch.log(torch.tensor(float(noise_variance), dtype=DTYPE))
        if trainable:
            self.log_noise_variance.requires_grad_(True)

    @property
    def noise_variance(self) -> torch.Tensor:
        return torch.exp(self.log_noise_variance)

    def parameters(self) -> dict:
        return {"log_noise_variance": self.log_noise_variance}

    def expected_log_density(self, out: LayerOutput, y: torch.Tensor) -> torch.Tensor:
        """E_q [log N(y | f, noise)] per point, averaged over draws: [n]."""
        nv = self.noise_variance
        fmean, fvar = out.mean, out.var_total
        ll = -0.5 * (_LOG2PI + torch.log(nv)) - ((y - fmean) ** 2 + fvar) / (2.0 * nv)
        return ll.sum(-1).mean(0)

    def predict(self, out: LayerOutput):
        """Observation-space moments per draw: mean [S,n,D], var [S,n,D]."""
        return out.mean, out.var_total + self.noise_variance

    def log_density_mixture(self, out: LayerOutput, y: torch.Tensor) -> torch.Tensor:
        """log of the S-component Gaussian mixture density at y, per point [n]."""
        s = out.mean.shape[0]
        v = out.var_total + self.noise_variance
        comp = -0.5 * (_LOG2PI + torch.log(v)) - (y - out.mean) ** 2 / (2.0 * v)
        comp = comp.sum(-1)  # [S, n]
        return torch.logsumexp(comp, dim=0) - math.log(s)


class SoftmaxLikelihood:
    def __init__(self, n_classes: int):
        if n_classes < 2:
            raise ValueError("need at least two classes")
        self.n_classes = n_classes

    def parameters(self) -> dict:
        return {}

    def expected_log_density(self, out: LayerOutput, y: torch.Tensor) -> torch.Tensor:
        """Monte Carlo E_q [log softmax(f)_y] through sampled logits: [n]."""
        logp = torch.log_softmax(out.samples, dim=-1)  # [S, n, C]
        yi = y.reshape(1, -1, 1).long().expand(logp.shape[0], -1, 1)
        return logp.gather(-1, yi).squeeze(-1).mean(0)

    def predict_probs(self, out: LayerOutput) -> torch.Tensor:
        """Class probabilities averaged over draws: [n, C]."""
        return torch.softmax(out.samples, dim=-1).mean(0)

    def log_density_mixture(self, out: LayerOutput, y: torch.Tensor) -> torch.Tensor:
        probs = self.predict_probs(out)
        yi = y.reshape(-1, 1).long()
        return torch.log(probs.gather(-1, yi).squeeze(-1).clamp_min(1e-300))
