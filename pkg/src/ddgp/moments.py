"""Predictive moments of an exact GP under Gaussian input noise.

Three routes for E[f(x*)], V[f(x*)] when x* ~ N(mu, Sigma) with diagonal
Sigma: Monte Carlo mixing of the clean predictive moments, a second-order
Taylor approximation around the input mean (analytic kernel derivatives), and
the exact Gaussian-integral solution available for SE kernels.

The exact route writes the smoothed kernel weights as Gaussian-density
products: with the library's SE convention k(a,b) = s2 * exp(-sum d^2/l^2),
the kernel is s2 * (2 pi)^{D/2} |W|^{1/2} N(a | b, W) for W = diag(l^2 / 2),
so every expectation reduces to products of Gaussian densities integrated in
closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .gaussmath import FullGaussian, gaussian_product
from .kernels import KernelParams, se_ard


@dataclass(frozen=True)
class NoisyInput:
    """Gaussian test input N(mean, diag(cov_diag))."""

    mean: np.ndarray
    cov_diag: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64))
        object.__setattr__(self, "cov_diag", np.asarray(self.cov_diag, dtype=np.float64))
        if (self.cov_diag < 0).any():
            raise ValueError("input covariance diagonal must be non-negative")


class ExactGP:
    """Dense GP regression with the SE-ARD kernel and Gaussian noise."""

    def __init__(self, x: np.ndarray, y: np.ndarray, variance: float, lengthscales,
                 noise_variance: float):
        self.x = np.asarray(x, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.float64).reshape(-1)
        if noise_variance <= 0:
            raise ValueError("noise variance must be positive")
        d = self.x.shape[1]
        self.params = KernelParams.create(variance, lengthscales, input_dim=d, trainable=False)
        self.noise_variance = float(noise_variance)
        k = self._k(self.x, self.x) + self.noise_variance * np.eye(len(self.x))
        self._chol = np.linalg.cholesky(k)
        self._k_inv = np.linalg.inv(k)
        self.beta = self._k_inv @ self.y

    @property
    def variance(self) -> float:
        return float(self.params.variance)

    @property
    def lengthscales(self) -> np.ndarray:
        return self.params.lengthscales.numpy()

    def _k(self, a, b) -> np.ndarray:
        with torch.no_grad():
            return se_ard(torch.as_tensor(a, dtype=torch.float64),
                          torch.as_tensor(b, dtype=torch.float64), self.params).numpy()

    def predict(self, xs: np.ndarray):
        """Clean predictive moments of the latent function: (mean [m], var [m])."""
        xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
        ks = self._k(xs, self.x)
        mean = ks @ self.beta
        var = self.variance - np.einsum("ij,jk,ik->i", ks, self._k_inv, ks)
        return mean, np.clip(var, 0.0, None)

    def predict_derivatives(self, xs: np.ndarray):
        """Per-dimension first and second derivatives of mean and variance.

        Returns dict with mean, var, dmean [m,D], d2mean [m,D], dvar [m,D],
        d2var [m,D] (diagonal second derivatives only).
        """
        xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
        ls2 = self.lengthscales**2
        ks = self._k(xs, self.x)  # [m, n]
        r = xs[:, None, :] - self.x[None, :, :]  # [m, n, D]
        dk = ks[:, :, None] * (-2.0 * r / ls2)  # [m, n, D]
        d2k = ks[:, :, None] * (4.0 * r**2 / ls2**2 - 2.0 / ls2)

        mean = ks @ self.beta
        dmean = np.einsum("mnd,n->md", dk, self.beta)
        d2mean = np.einsum("mnd,n->md", d2k, self.beta)

        a_ks = ks @ self._k_inv  # [m, n]
        var = self.variance - np.einsum("mn,mn->m", a_ks, ks)
        dvar = -2.0 * np.einsum("mn,mnd->md", a_ks, dk)
        d2var = -2.0 * (np.einsum("mnd,nk,mkd->md", dk, self._k_inv, dk)
                        + np.einsum("mn,mnd->md", a_ks, d2k))
        return {"mean": mean, "var": var, "dmean": dmean, "d2mean": d2mean,
                "dvar": dvar, "d2var": d2var}


def mc_moments(gp: ExactGP, ni: NoisyInput, n_draws: int = 100_000, seed: int = 0,
               chunk: int = 200_000):
    """Monte Carlo moments of the noisy-input predictive distribution.

    Mixture moments over draws x_t ~ N(mu, Sigma):
        m = mean(mu(x_t)),  v = mean(sigma2(x_t) + mu(x_t)^2) - m^2.
    Returns (mean, var, mean_se, var_se); the variance standard error comes
    from the delta method on (a_t, mu_t) with a_t = sigma2_t + mu_t^2.
    """
    rng = np.random.default_rng(seed)
    d = ni.mean.shape[0]
    mu_parts, a_parts = [], []
    remaining = int(n_draws)
    while remaining > 0:
        b = min(chunk, remaining)
        xs = ni.mean + np.sqrt(ni.cov_diag) * rng.standard_normal((b, d))
        mu, var = gp.predict(xs)
        mu_parts.append(mu)
        a_parts.append(var + mu**2)
        remaining -= b
    mu_t = np.concatenate(mu_parts)
    a_t = np.concatenate(a_parts)
    m = mu_t.mean()
    v = a_t.mean() - m**2
    mean_se = mu_t.std(ddof=1) / np.sqrt(n_draws)
    var_se = (a_t - 2.0 * m * mu_t).std(ddof=1) / np.sqrt(n_draws)
    return float(m), float(v), float(mean_se), float(var_se)


def taylor_moments(gp: ExactGP, ni: NoisyInput):
    """Second-order Taylor approximation around the input mean.

        m ~ mu(u) + 1/2 sum_d Sigma_dd mu''_dd(u)
        v ~ sigma2(u) + sum_d Sigma_dd (1/2 sigma2''_dd(u) + mu'_d(u)^2)

    The approximate variance is clamped at zero (it can go negative far from
    the data for large input noise).
    """
    der = gp.predict_derivatives(ni.mean[None, :])
    m = der["mean"][0] + 0.5 * float(ni.cov_diag @ der["d2mean"][0])
    v = der["var"][0] + float(ni.cov_diag @ (0.5 * der["d2var"][0] + der["dmean"][0] ** 2))
    return float(m), float(max(v, 0.0))


def _psi_weights(gp: ExactGP, ni: NoisyInput):
    """Smoothed kernel weights psi_i = E[k(x*, x_i)] and
    psi_ij = E[k(x*, x_i) k(x*, x_j)] via Gaussian density products,
    batched over data points and pairs."""
    n, d = gp.x.shape
    w = np.diag(gp.lengthscales**2 / 2.0)
    w_t = torch.as_tensor(w)
    x_t = torch.as_tensor(gp.x.copy())
    sigma = FullGaussian(torch.as_tensor(ni.mean.copy()),
                         torch.as_tensor(np.diag(ni.cov_diag)))
    c_norm = gp.variance * (2.0 * np.pi) ** (d / 2) * np.sqrt(np.linalg.det(w))

    data = FullGaussian(x_t, w_t.expand(n, d, d))
    _, scale = gaussian_product(data, sigma)
    psi_i = c_norm * scale.numpy()

    pairs_a = FullGaussian(x_t.unsqueeze(1), w_t.expand(n, 1, d, d))
    pairs_b = FullGaussian(x_t.unsqueeze(0), w_t.expand(1, n, d, d))
    pair, s1 = gaussian_product(pairs_a, pairs_b)
    _, s2 = gaussian_product(pair, sigma)
    psi_ij = c_norm**2 * (s1 * s2).numpy()
    return psi_i, psi_ij


def exact_moments(gp: ExactGP, ni: NoisyInput):
    """Exact noisy-input predictive moments (SE kernel, diagonal input cov).

        m = beta^T psi
        v = s2 - sum_ij (K^-1_ij - beta_i beta_j) psi_ij - m^2
    """
    psi_i, psi_ij = _psi_weights(gp, ni)
    m = float(gp.beta @ psi_i)
    corr = gp._k_inv - np.outer(gp.beta, gp.beta)
    v = gp.variance - float(np.sum(corr * psi_ij)) - m**2
    return m, float(max(v, 0.0))
