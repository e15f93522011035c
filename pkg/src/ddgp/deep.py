"""Deep GP composition.

The model is a stack of variational layers. The first layer always works on
Euclidean inputs with the SE kernel; subsequent layers either stay Euclidean
(plain deep GP) or carry Gaussian-marginal inputs and distributional inducing
inputs through the hybrid kernel (distribution-aware deep GP). Each layer
consumes the previous layer's sampled features together with its marginal
(mean, total variance); layers are noiseless between each other, observation
noise lives in the likelihood.

The training objective is the uncollapsed evidence bound: the scaled expected
log likelihood at the output layer minus every layer's KL term, with the KL
of distributional layers estimated at the same single inducing draw the
forward pass used.
"""

from __future__ import annotations

import numpy as np
import torch
from scipy.cluster.vq import kmeans2

from . import rng
from .gaussmath import DTYPE, chol_with_jitter
from .kernels import GaussianVector, KernelParams, se_ard, w2_factor
from .likelihoods import GaussianLikelihood, SoftmaxLikelihood
from .svgp import (
    InducingDistribution,
    InducingPoints,
    LayerForward,
    MeanFunction,
    VariationalLayer,
    conditional,
    kl_layer,
)

KERNEL_INIT = 1.351  # shared default for signal variance and lengthscales


class DeepModel:
    def __init__(self, layers: list[VariationalLayer], likelihood, meta: dict):
        self.layers = layers
        self.likelihood = likelihood
        self.meta = dict(meta)

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    def parameters(self) -> dict:
        out = {}
        for i, layer in enumerate(self.layers):
            for k, v in layer.parameters().items():
                out[f"layers.{i}.{k}"] = v
        for k, v in self.likelihood.parameters().items():
            out[f"likelihood.{k}"] = v
        return out


def _pca_weights(x: np.ndarray, widths: list[int]) -> list[np.ndarray]:
    """Fixed linear mean-function weights for the hidden layers.

    Layer l's weight holds the leading right singular vectors of its
    (analytically propagated) input representation; widths beyond the input
    rank get zero-padded columns.
    """
    weights = []
    cur = np.asarray(x, dtype=np.float64)
    for w in widths:
        _, _, vt = np.linalg.svd(cur - cur.mean(0, keepdims=True), full_matrices=False)
        v = vt.T  # [D, rank]
        if w <= v.shape[1]:
            wt = v[:, :w]
        else:
            wt = np.zeros((v.shape[0], w))
            wt[:, : v.shape[1]] = v
        weights.append(wt)
        cur = cur @ wt
    return weights


def _kmeans_inducing(x: np.ndarray, m: int, seed: int) -> np.ndarray:
    n = x.shape[0]
    if m >= n:
        reps = np.resize(x, (m, x.shape[1])).astype(np.float64)
        if m > n:  # break exact duplicates
            reps += rng.numpy_rng(seed, rng.DOMAIN_INIT, 1).normal(scale=1e-3, size=reps.shape)
        return reps
    centers, _ = kmeans2(np.asarray(x, dtype=np.float64), m, minit="++",
                         seed=rng.mix(seed, rng.DOMAIN_INIT, 0) % (2**32))
    return centers


def build_model(kind: str, x_train: np.ndarray, hidden_widths: list[int], out_dim: int,
                n_inducing: int, likelihood: str, seed: int,
                mean_function: str = "pca", kernel_variance: float = KERNEL_INIT,
                lengthscale: float = KERNEL_INIT, q_sqrt_diag: float = 1e-5,
                inducing_dist_variance: float = 0.1, noise_variance: float = 1.0,
                q_mu_range: float = 2.0) -> DeepModel:
    """Assemble a plain ('dgp') or distribution-aware ('ddgp') deep GP.

    First-layer inducing inputs are the k-means centers of x_train; hidden and
    output layers draw inducing locations uniformly from [-q_mu_range,
    q_mu_range] per dimension, as do the q_mu inits. Hidden layers receive the
    PCA linear mean functions unless mean_function == 'zero'; the output layer
    mean is always zero.
    """
    if kind not in ("dgp", "ddgp"):
        raise ValueError(f"unknown model kind {kind!r}")
    x_train = np.asarray(x_train, dtype=np.float64)
    d_in = x_train.shape[1]
    dims = [d_in, *hidden_widths, out_dim]
    n_layers = len(dims) - 1

    pca = _pca_weights(x_train, hidden_widths) if mean_function == "pca" else None
    init_rng = rng.numpy_rng(seed, rng.DOMAIN_INIT, 2)

    layers = []
    for li in range(n_layers):
        di, do = dims[li], dims[li + 1]
        kern = KernelParams.create(kernel_variance, lengthscale, input_dim=di)
        if li == 0:
            inducing = InducingPoints(torch.as_tensor(_kmeans_inducing(x_train, n_inducing, seed)))
        else:
            means = init_rng.uniform(-q_mu_range, q_mu_range, size=(n_inducing, di))
            if kind == "ddgp":
                inducing = InducingDistribution(
                    torch.as_tensor(means),
                    torch.tensor(inducing_dist_variance, dtype=DTYPE))
            else:
                inducing = InducingPoints(torch.as_tensor(means))
        if li < n_layers - 1 and pca is not None:
            mean_fn = MeanFunction("linear", weight=pca[li])
        else:
            mean_fn = MeanFunction("zero", out_dim=do)
        q_mu = init_rng.uniform(-q_mu_range, q_mu_range, size=(n_inducing, do))
        layers.append(VariationalLayer.create(
            kern, inducing, do, mean_fn, q_mu_init=torch.as_tensor(q_mu),
            q_sqrt_diag=q_sqrt_diag, name=f"layer{li}"))

    if likelihood == "gaussian":
        lik = GaussianLikelihood(noise_variance)
    elif likelihood == "softmax":
        lik = SoftmaxLikelihood(out_dim)
    else:
        raise ValueError(f"unknown likelihood {likelihood!r}")

    meta = {"kind": kind, "hidden_widths": list(hidden_widths), "out_dim": out_dim,
            "n_inducing": n_inducing, "likelihood": likelihood, "seed": seed,
            "mean_function": mean_function, "d_in": d_in}
    return DeepModel(layers, lik, meta)


def forward(model: DeepModel, x: torch.Tensor, n_samples: int = 1, key: int = 0,
            neutralize_w2: bool = False, full_cov: bool = False) -> list[LayerForward]:
    """Propagate x [n, D] through the stack with n_samples paths per point.

    full_cov switches every layer to joint sampling over the batch (needed
    when cross-point correlations of the samples matter).
    """
    x = torch.as_tensor(x, dtype=DTYPE)
    f = x.unsqueeze(0).expand(n_samples, *x.shape)
    dist = None
    results = []
    for li, layer in enumerate(model.layers):
        lf = conditional(layer, f, dist, key, layer_index=li,
                         neutralize_w2=neutralize_w2, full_cov=full_cov)
        results.append(lf)
        f = lf.out.samples
        dist = GaussianVector(lf.out.mean, lf.out.var_total)
    return results


def elbo(model: DeepModel, x: torch.Tensor, y: torch.Tensor, n_total: int,
         key: int = 0, n_samples: int = 1, neutralize_w2: bool = False) -> torch.Tensor:
    """Uncollapsed evidence bound estimate on a minibatch (differentiable)."""
    x = torch.as_tensor(x, dtype=DTYPE)
    y = torch.as_tensor(y, dtype=DTYPE)
    fwd = forward(model, x, n_samples=n_samples, key=key, neutralize_w2=neutralize_w2)
    ell = model.likelihood.expected_log_density(fwd[-1].out, y).sum()
    scale = n_total / x.shape[0]
    kl = sum(kl_layer(layer, lf.lu, lf.m_z) for layer, lf in zip(model.layers, fwd))
    return scale * ell - kl


def predict_f(model: DeepModel, x, n_samples: int = 20, key: int = 0) -> list[LayerForward]:
    """Forward pass without gradient tracking, for evaluation."""
    with torch.no_grad():
        return forward(model, torch.as_tensor(x, dtype=DTYPE), n_samples=n_samples, key=key)


def sample_prior(model: DeepModel, x, n_samples: int, key: int = 0) -> torch.Tensor:
    """Samples of the output layer under the prior process (q(U) ignored).

    Layerwise exact sampling with the full kernel matrix over the batch; the
    marginal fed to hybrid kernels is the prior one, N(mean_fn(input), signal
    variance), identical machinery to the posterior pass but with K_ff in
    place of the sparse conditional.
    """
    with torch.no_grad():
        x = torch.as_tensor(x, dtype=DTYPE)
        n = x.shape[0]
        f = x.unsqueeze(0).expand(n_samples, *x.shape)
        dist = None
        for li, layer in enumerate(model.layers):
            p = layer.kernel
            kff = se_ard(f, f, p)
            if layer.distributional and dist is not None:
                kff = kff * w2_factor(dist, dist, p.lengthscales)
            lff, _ = chol_with_jitter(kff)
            mean = layer.mean_fn(f)
            gen = rng.generator(key, rng.DOMAIN_FORWARD, li)
            eps = torch.randn(n_samples, n, layer.out_dim, generator=gen, dtype=DTYPE)
            fnew = mean + lff @ eps
            var = p.variance.detach().expand(n_samples, n, layer.out_dim)
            dist = GaussianVector(mean, var.clone())
            f = fnew
        return f
