"""Stationary kernels: squared-exponential (ARD), Wasserstein-2 RBF, and the
hybrid product kernel used by hidden layers that carry Gaussian marginals.

Convention: the squared exponential is
    k(x, y) = variance * exp(-sum_d (x_d - y_d)^2 / l_d^2)
with one lengthscale per input dimension and no extra factor of 1/2 in the
exponent. The Wasserstein-2 RBF replaces squared Euclidean coordinates with
squared W2 distances between the per-dimension Gaussian marginals; the hybrid
kernel multiplies the SE factor (on sampled features, where the signal
variance lives) with the W2 exponential factor, so the signal variance is
applied exactly once.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .gaussmath import DTYPE, w2_sq


@dataclass
class KernelParams:
    """SE-family hyperparameters stored as unconstrained logs."""

    log_variance: torch.Tensor  # scalar
    log_lengthscales: torch.Tensor  # [D]

    @staticmethod
    def create(variance: float, lengthscales, input_dim: int | None = None,
               trainable: bool = True) -> "KernelParams":
        ls = torch.as_tensor(lengthscales, dtype=DTYPE)
        if ls.ndim == 0:
            if input_dim is None:
                raise ValueError("scalar lengthscale needs input_dim")
            ls = ls.repeat(input_dim)
        if float(variance) <= 0 or bool((ls <= 0).any()):
            raise ValueError("variance and lengthscales must be positive")
        p = KernelParams(
            log_variance=torch.log(torch.tensor(float(variance), dtype=DTYPE)),
            log_lengthscales=torch.log(ls.clone()),
        )
        if trainable:
            p.log_variance.requires_grad_(True)
            p.log_lengthscales.requires_grad_(True)
        return p

    @property
    def variance(self) -> torch.Tensor:
        return torch.exp(self.log_variance)

    @property
    def lengthscales(self) -> torch.Tensor:
        return torch.exp(self.log_lengthscales)


@dataclass(frozen=True)
class GaussianVector:
    """n independent D-dimensional Gaussians: means [..., n, D], variances [..., n, D]."""

    means: torch.Tensor
    variances: torch.Tensor


def _scaled_sqdist(a: torch.Tensor, b: torch.Tensor, lengthscales: torch.Tensor) -> torch.Tensor:
    """sum_d (a_d - b_d)^2 / l_d^2 for all row pairs; a [..., n, D], b [..., m, D]."""
    sa = a / lengthscales
    sb = b / lengthscales
    # (x - y)^2 summed: expand rather than the x^2 - 2xy + y^2 trick; the
    # matrices here are small and the expanded form keeps tiny negative
    # round-off out of the diagonal.
    diff = sa.unsqueeze(-2) - sb.unsqueeze(-3)  # [..., n, m, D]
    return (diff**2).sum(-1)


def se_ard(a: torch.Tensor, b: torch.Tensor, params: KernelParams) -> torch.Tensor:
    """SE-ARD Gram matrix k(a, b) of shape [..., n, m]."""
    a = torch.as_tensor(a, dtype=DTYPE)
    b = torch.as_tensor(b, dtype=DTYPE)
    return params.variance * torch.exp(-_scaled_sqdist(a, b, params.lengthscales))


def se_ard_diag(a: torch.Tensor, params: KernelParams) -> torch.Tensor:
    """diag k(a, a) = variance for every row."""
    a = torch.as_tensor(a, dtype=DTYPE)
    return params.variance.expand(a.shape[:-1]).clone()


def w2_factor(dist_a: GaussianVector, dist_b: GaussianVector,
              lengthscales: torch.Tensor) -> torch.Tensor:
    """exp(-sum_d W2^2(a_{i,d}, b_{j,d}) / l_d^2), shape [..., n, m]."""
    d2 = w2_sq(
        dist_a.means.unsqueeze(-2), dist_a.variances.unsqueeze(-2),
        dist_b.means.unsqueeze(-3), dist_b.variances.unsqueeze(-3),
    )  # [..., n, m, D]
    return torch.exp(-(d2 / lengthscales**2).sum(-1))


def w2_ard(dist_a: GaussianVector, dist_b: GaussianVector, params: KernelParams) -> torch.Tensor:
    """Wasserstein-2 RBF Gram matrix over Gaussian vectors."""
    return params.variance * w2_factor(dist_a, dist_b, params.lengthscales)


def hybrid(samples_a: torch.Tensor, samples_b: torch.Tensor,
           dist_a: GaussianVector, dist_b: GaussianVector,
           params: KernelParams) -> torch.Tensor:
    """Hybrid kernel: SE on sampled features times the W2 factor.

    The signal variance enters through the SE factor only.
    """
    return se_ard(samples_a, samples_b, params) * w2_factor(dist_a, dist_b, params.lengthscales)


def hybrid_diag(samples_a: torch.Tensor, params: KernelParams) -> torch.Tensor:
    """diag of hybrid(a, a): W2 term vanishes against itself, leaving variance."""
    return se_ard_diag(samples_a, params)


def hybrid_multisample(samples_a: torch.Tensor, samples_b: torch.Tensor,
                       dist_a: GaussianVector, dist_b: GaussianVector,
                       params: KernelParams) -> torch.Tensor:
    """Hybrid kernel with S sample paths per side: the SE factor is averaged
    over all S x S path pairs before multiplying the (path-free) W2 factor.

    samples_a: [S, n, D]; samples_b: [S, m, D]; returns [n, m].
    """
    s = samples_a.shape[0]
    se = se_ard(samples_a.unsqueeze(1), samples_b.unsqueeze(0), params)  # [S, S, n, m]
    se_mean = se.reshape(s * s, *se.shape[2:]).mean(0)
    return se_mean * w2_factor(dist_a, dist_b, params.lengthscales)
