"""Sparse variational GP layer: inducing representations, the predictive
conditional with its parametric / non-parametric variance split, and the KL
term of the uncollapsed evidence bound.

Posterior moments per output dimension d (unwhitened parameterization):

    mean     = m(X) + K_fu K_uu^-1 (q_mu_d - m(Z))
    var_np   = diag(K_ff) - diag(K_fu K_uu^-1 K_uf)
    var_p    = diag(K_fu K_uu^-1 S_d K_uu^-1 K_uf),  S_d = L_d L_d^T

var_np is the kernel Schur complement (what the data density cannot explain:
the distributional part), var_p the variance carried by q(U) (epistemic
part). Layers with an InducingDistribution draw their inducing inputs by
reparameterization and evaluate the hybrid kernel; plain layers use Euclidean
inducing points and the SE kernel.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from . import rng
from .gaussmath import DTYPE, chol_with_jitter
from .kernels import GaussianVector, KernelParams, hybrid_diag, se_ard, se_ard_diag, w2_factor


class ClampCounter:
    """Counts negative-variance clamp events (process-local diagnostic)."""

    def __init__(self):
        self.events = 0

    def bump(self, n: int):
        self.events += int(n)

    def reset(self):
        self.events = 0


CLAMP_COUNTER = ClampCounter()


class MeanFunction:
    """zero, identity, or fixed linear map applied to layer inputs."""

    def __init__(self, kind: str, weight: torch.Tensor | None = None,
                 out_dim: int | None = None):
        if kind not in ("zero", "identity", "linear"):
            raise ValueError(f"unknown mean function kind {kind!r}")
        if kind == "linear" and weight is None:
            raise ValueError("linear mean function needs a weight matrix")
        self.kind = kind
        self.weight = None if weight is None else torch.as_tensor(weight, dtype=DTYPE)
        self.out_dim = out_dim

    def __call__(self, x: torch.Tensor) -> torch.Tensor:
        if self.kind == "zero":
            return torch.zeros(*x.shape[:-1], self.out_dim, dtype=DTYPE)
        if self.kind == "identity":
            return x
        return x @ self.weight


class InducingPoints:
    """Euclidean inducing inputs (trainable)."""

    def __init__(self, z: torch.Tensor, trainable: bool = True):
        self.z = torch.as_tensor(z, dtype=DTYPE).clone()
        if trainable:
            self.z.requires_grad_(True)

    @property
    def num(self) -> int:
        return self.z.shape[0]

    def parameters(self) -> dict:
        return {"z": self.z}


class InducingDistribution:
    """Gaussian inducing inputs N(means, diag(variances)), both trainable.

    Variances are stored as logs; draws are reparameterized so gradients flow
    to both location and spread.
    """

    def __init__(self, means: torch.Tensor, variances: torch.Tensor, trainable: bool = True):
        self.means = torch.as_tensor(means, dtype=DTYPE).clone()
        v = torch.as_tensor(variances, dtype=DTYPE)
        if v.ndim == 0:
            v = v.expand_as(self.means)
        self.log_variances = torch.log(v).clone()
        if trainable:
            self.means.requires_grad_(True)
            self.log_variances.requires_grad_(True)

    @property
    def num(self) -> int:
        return self.means.shape[0]

    @property
    def variances(self) -> torch.Tensor:
        return torch.exp(self.log_variances)

    def draw(self, n_samples: int, gen: torch.Generator) -> torch.Tensor:
        eps = torch.randn(n_samples, *self.means.shape, generator=gen, dtype=DTYPE)
        return self.means + torch.sqrt(self.variances) * eps

    def parameters(self) -> dict:
        return {"z_means": self.means, "z_log_variances": self.log_variances}


@dataclass
class LayerOutput:
    """Per-point posterior marginals and samples, shaped [S, n, D_out]."""

    mean: torch.Tensor
    var_parametric: torch.Tensor
    var_nonparametric: torch.Tensor
    samples: torch.Tensor
    cov: torch.Tensor | None = None  # [S, D, n, n] when requested

    @property
    def var_total(self) -> torch.Tensor:
        return self.var_parametric + self.var_nonparametric


@dataclass
class LayerForward:
    """LayerOutput plus the factorizations the KL term reuses (same inducing
    draw as the conditional, per the single-draw bound estimate)."""

    out: LayerOutput
    lu: torch.Tensor  # chol(K_uu + jitter), [M, M] or [S, M, M]
    m_z: torch.Tensor  # prior mean at inducing inputs, [M, D] or [S, M, D]


class VariationalLayer:
    def __init__(self, kernel: KernelParams, inducing, q_mu: torch.Tensor,
                 q_sqrt_raw: torch.Tensor, mean_fn: MeanFunction, name: str = "layer"):
        self.kernel = kernel
        self.inducing = inducing
        self.q_mu = q_mu
        self.q_sqrt_raw = q_sqrt_raw
        self.mean_fn = mean_fn
        self.name = name

    @property
    def distributional(self) -> bool:
        return isinstance(self.inducing, InducingDistribution)

    @property
    def out_dim(self) -> int:
        return self.q_mu.shape[1]

    @staticmethod
    def create(kernel: KernelParams, inducing, out_dim: int, mean_fn: MeanFunction,
               q_mu_init: torch.Tensor | None = None, q_sqrt_diag: float = 1e-5,
               name: str = "layer") -> "VariationalLayer":
        m = inducing.num
        if q_mu_init is None:
            q_mu = torch.zeros(m, out_dim, dtype=DTYPE)
        else:
            q_mu = torch.as_tensor(q_mu_init, dtype=DTYPE).clone()
        q_mu.requires_grad_(True)
        raw = torch.zeros(out_dim, m, m, dtype=DTYPE)
        raw[:, range(m), range(m)] = float(torch.log(torch.tensor(q_sqrt_diag, dtype=DTYPE)))
        raw.requires_grad_(True)
        return VariationalLayer(kernel, inducing, q_mu, raw, mean_fn, name)

    def q_sqrt(self) -> torch.Tensor:
        """Lower-triangular factors [D_out, M, M] with positive diagonal."""
        lower = torch.tril(self.q_sqrt_raw, diagonal=-1)
        diag = torch.exp(torch.diagonal(self.q_sqrt_raw, dim1=-2, dim2=-1))
        return lower + torch.diag_embed(diag)

    def parameters(self) -> dict:
        out = {"kern_log_variance": self.kernel.log_variance,
               "kern_log_lengthscales": self.kernel.log_lengthscales,
               "q_mu": self.q_mu, "q_sqrt_raw": self.q_sqrt_raw}
        for k, v in self.inducing.parameters().items():
            out[k] = v
        return out


def conditional(layer: VariationalLayer, f_in: torch.Tensor,
                dist_in: GaussianVector | None, key: int, layer_index: int = 0,
                neutralize_w2: bool = False, full_cov: bool = False) -> LayerForward:
    """Posterior marginals of the layer at the inputs f_in [S, n, D_in].

    dist_in carries the inputs' Gaussian marginals (required for hybrid
    layers, ignored by plain ones). key seeds the layer's derived draw
    streams; plain layers consume no inducing stream, so sample paths stay
    aligned between plain and distributional models under a shared key.

    With full_cov the posterior covariance across the whole batch is kept and
    samples are drawn jointly, so cross-point correlations of the process
    survive into the samples (marginal reports are unchanged).
    """
    s, n, _ = f_in.shape
    p = layer.kernel

    if layer.distributional:
        gen_z = rng.generator(key, layer_index, rng.PURPOSE_INDUCING)
        z_value = layer.inducing.draw(s, gen_z)  # [S, M, D]
        kuu = se_ard(z_value, z_value, p)
        kfu = se_ard(f_in, z_value, p)
        if not neutralize_w2:
            if dist_in is None:
                raise ValueError("hybrid layer needs input marginals")
            dist_z = GaussianVector(layer.inducing.means, layer.inducing.variances)
            kuu = kuu * w2_factor(dist_z, dist_z, p.lengthscales)
            kfu = kfu * w2_factor(dist_in, dist_z, p.lengthscales)
        kdiag = hybrid_diag(f_in, p)
        m_z = layer.mean_fn(z_value)
    else:
        z_value = layer.inducing.z
        kuu = se_ard(z_value, z_value, p)
        kfu = se_ard(f_in, z_value, p)
        kdiag = se_ard_diag(f_in, p)
        m_z = layer.mean_fn(z_value)

    lu, _ = chol_with_jitter(kuu)
    lu_b = lu if lu.ndim == 3 else lu.expand(s, *lu.shape)
    kuf = kfu.mT  # [S, M, n]
    a = torch.linalg.solve_triangular(lu_b, kuf, upper=False)  # [S, M, n]
    cov_np = None
    if full_cov:
        kff = se_ard(f_in, f_in, p)
        if layer.distributional and not neutralize_w2:
            kff = kff * w2_factor(dist_in, dist_in, p.lengthscales)
        cov_np = kff - a.mT @ a  # [S, n, n]
        cov_np = 0.5 * (cov_np + cov_np.mT)
        var_np = torch.diagonal(cov_np, dim1=-2, dim2=-1)
    else:
        var_np = kdiag - (a**2).sum(-2)  # [S, n]
    neg = var_np < 0
    if bool(neg.any()):
        CLAMP_COUNTER.bump(int(neg.sum()))
        var_np = torch.clamp(var_np, min=0.0)

    b = torch.linalg.solve_triangular(lu_b.mT, a, upper=True)  # K_uu^-1 K_uf
    resid = layer.q_mu - m_z  # [M, D] or [S, M, D]
    if resid.ndim == 2:
        resid = resid.expand(s, *resid.shape)
    mean = layer.mean_fn(f_in) + torch.einsum("smn,smd->snd", b, resid)

    lq = layer.q_sqrt()  # [D, M, M]
    c = torch.einsum("dpm,spn->sdmn", lq, b)
    var_p = (c**2).sum(-2).permute(0, 2, 1)  # [S, n, D]
    var_np = var_np.unsqueeze(-1).expand_as(var_p)

    gen_f = rng.generator(key, layer_index, rng.PURPOSE_PATH)
    if full_cov:
        cov_p = torch.einsum("sdmi,sdmj->sdij", c, c)
        cov = cov_np.unsqueeze(1) + cov_p  # [S, D, n, n]
        lcov, _ = chol_with_jitter(cov)
        eps = torch.randn(s, lq.shape[0], n, 1, generator=gen_f, dtype=DTYPE)
        samples = mean + (lcov @ eps).squeeze(-1).permute(0, 2, 1)
        out = LayerOutput(mean=mean, var_parametric=var_p, var_nonparametric=var_np,
                          samples=samples, cov=cov)
    else:
        eps = torch.randn(*mean.shape, generator=gen_f, dtype=DTYPE)
        samples = mean + torch.sqrt(var_p + var_np) * eps
        out = LayerOutput(mean=mean, var_parametric=var_p, var_nonparametric=var_np,
                          samples=samples)
    return LayerForward(out=out, lu=lu, m_z=m_z)


def kl_layer(layer: VariationalLayer, lu: torch.Tensor, m_z: torch.Tensor) -> torch.Tensor:
    """KL[q(U) || p(U)] summed over output dimensions.

    p(U_d) = N(m(Z), K_uu), q(U_d) = N(q_mu_d, L_d L_d^T). When lu/m_z carry a
    leading draw dimension (distributional inducing inputs), the per-draw KLs
    are averaged: that is the Monte Carlo estimate of the expected KL under
    the inducing-input distribution.
    """
    batched = lu.ndim == 3
    lu_b = lu if batched else lu.unsqueeze(0)
    s, m, _ = lu_b.shape
    d = layer.out_dim
    m_z_b = m_z if m_z.ndim == 3 else m_z.unsqueeze(0).expand(s, m, d)

    lq = layer.q_sqrt()  # [D, M, M]
    a = torch.linalg.solve_triangular(lu_b.unsqueeze(1), lq.unsqueeze(0), upper=False)
    trace = (a**2).sum((-1, -2))  # [S, D]

    diff = (layer.q_mu - m_z_b).mT.unsqueeze(-1)  # [S, D, M, 1]
    bsol = torch.linalg.solve_triangular(lu_b.unsqueeze(1), diff, upper=False)
    maha = (bsol**2).sum((-1, -2))  # [S, D]

    logdet_p = 2.0 * torch.log(torch.diagonal(lu_b, dim1=-2, dim2=-1)).sum(-1)  # [S]
    logdet_q = 2.0 * torch.diagonal(layer.q_sqrt_raw, dim1=-2, dim2=-1).sum(-1)  # [D]

    kl_sd = 0.5 * (trace + maha - m + logdet_p.unsqueeze(-1) - logdet_q.unsqueeze(0))
    return kl_sd.sum(-1).mean()
