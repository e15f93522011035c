"""Gaussian identities shared across the library.

All functions operate on torch tensors in float64 and are differentiable
where that matters (KL terms sit inside the training objective). Small
container types carry full-covariance Gaussians between modules.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

DTYPE = torch.float64

VAR_FLOOR = 1e-12  # variances are floored at this before any log


class NumericalError(RuntimeError):
    """Raised when a linear-algebra fallback ladder is exhausted."""


@dataclass(frozen=True)
class Gaussian1D:
    mean: float
    variance: float


@dataclass(frozen=True)
class FullGaussian:
    """Multivariate normal with mean [D] and dense covariance [D, D]."""

    mean: torch.Tensor
    cov: torch.Tensor


def _as_tensor(x) -> torch.Tensor:
    return torch.as_tensor(x, dtype=DTYPE)


def w2_sq(mean_a, var_a, mean_b, var_b) -> torch.Tensor:
    """Squared Wasserstein-2 distance between univariate Gaussians.

    (m_a - m_b)^2 + (sqrt(v_a) - sqrt(v_b))^2, elementwise over broadcastable
    tensors. Variances must be non-negative.
    """
    mean_a, var_a = _as_tensor(mean_a), _as_tensor(var_a)
    mean_b, var_b = _as_tensor(mean_b), _as_tensor(var_b)
    if bool((var_a < 0).any()) or bool((var_b < 0).any()):
        raise ValueError("w2_sq requires non-negative variances")
    return (mean_a - mean_b) ** 2 + (torch.sqrt(var_a) - torch.sqrt(var_b)) ** 2


def w2_sq_gaussians(a: Gaussian1D, b: Gaussian1D) -> float:
    return float(w2_sq(a.mean, a.variance, b.mean, b.variance))


def gaussian_product(a: FullGaussian, b: FullGaussian):
    """Product of two Gaussian densities.

    N(x|a) * N(x|b) = scale * N(x|c) with
      C = (A^-1 + B^-1)^-1,  c = C (A^-1 a + B^-1 b),  scale = N(a.mean | b.mean, A+B).

    Returns (FullGaussian(c, C), scale); means [..., D] and covariances
    [..., D, D] broadcast over leading batch dimensions, scale is [...].
    """
    ma, ca = _as_tensor(a.mean), _as_tensor(a.cov)
    mb, cb = _as_tensor(b.mean), _as_tensor(b.cov)
    d = ma.shape[-1]
    # only the sum needs inverting, so singular components are fine:
    #   C = A (A+B)^-1 B,  c = B (A+B)^-1 a + A (A+B)^-1 b
    s = ca + cb
    sol_b = torch.linalg.solve(s, cb)
    sol_a = torch.linalg.solve(s, ca)
    cov = ca @ sol_b
    cov = 0.5 * (cov + cov.mT)
    mean = (sol_b.mT @ ma.unsqueeze(-1)).squeeze(-1) \
        + (sol_a.mT @ mb.unsqueeze(-1)).squeeze(-1)

    ls = torch.linalg.cholesky(s)
    diff = (ma - mb).expand(s.shape[:-1])
    alpha = torch.linalg.solve_triangular(ls, diff.unsqueeze(-1), upper=False).squeeze(-1)
    log_scale = (
        -0.5 * d * torch.log(torch.tensor(2.0 * torch.pi, dtype=DTYPE))
        - torch.log(torch.diagonal(ls, dim1=-2, dim2=-1)).sum(-1)
        - 0.5 * (alpha**2).sum(-1)
    )
    return FullGaussian(mean, cov), torch.exp(log_scale)


def kl_gaussians(q: FullGaussian, p: FullGaussian) -> torch.Tensor:
    """KL[q || p] between full-covariance Gaussians, in nats."""
    mq, cq = _as_tensor(q.mean), _as_tensor(q.cov)
    mp, cp = _as_tensor(p.mean), _as_tensor(p.cov)
    k = mq.shape[-1]
    lp = torch.linalg.cholesky(cp)
    lq = torch.linalg.cholesky(cq)
    # Tr(Cp^-1 Cq) = ||Lp^-1 Lq||_F^2
    a = torch.linalg.solve_triangular(lp, lq, upper=False)
    trace = (a**2).sum()
    diff = (mp - mq).unsqueeze(-1)
    b = torch.linalg.solve_triangular(lp, diff, upper=False)
    maha = (b**2).sum()
    logdet_p = 2.0 * torch.log(torch.diagonal(lp)).sum()
    logdet_q = 2.0 * torch.log(torch.diagonal(lq)).sum()
    return 0.5 * (trace + maha - k + logdet_p - logdet_q)


def diff_entropy_diag(variances) -> torch.Tensor:
    """Differential entropy of a diagonal Gaussian with the given variances.

    (n/2) log(2 pi) + 1/2 sum log v_i + n/2. Variances are floored at
    VAR_FLOOR before the log.
    """
    v = torch.clamp(_as_tensor(variances), min=VAR_FLOOR)
    n = v.shape[-1]
    two_pi = torch.tensor(2.0 * torch.pi, dtype=DTYPE)
    return 0.5 * n * torch.log(two_pi) + 0.5 * torch.log(v).sum(-1) + 0.5 * n


def chol_with_jitter(m: torch.Tensor, base_jitter: float = 1e-6, max_tries: int = 6):
    """Cholesky factor of m + j*I with geometrically escalating jitter.

    The first attempt already adds base_jitter; each retry multiplies the
    jitter by 10, up to max_tries attempts. Supports batched inputs [..., n, n].
    Returns (L, jitter_used). Raises NumericalError carrying the final jitter
    if every attempt fails.
    """
    m = _as_tensor(m)
    n = m.shape[-1]
    eye = torch.eye(n, dtype=DTYPE)
    jitter = float(base_jitter)
    for attempt in range(max_tries):
        j = jitter * (10.0**attempt)
        chol, info = torch.linalg.cholesky_ex(m + j * eye)
        if int(info.max()) == 0 and bool(torch.isfinite(chol).all()):
            return chol, j
        if j == 0.0:  # allow an exact first attempt, then escalate from a floor
            jitter = 1e-12
    raise NumericalError(
        f"cholesky failed after {max_tries} attempts; final jitter {jitter * 10.0 ** (max_tries - 1):.3e}"
    )
