"""Numerical probes for the variance-propagation claims: derivative
conditions on hidden layers, inducing-count collapse curves, feature-collapse
contraction ratios with their kernel-derivative bound, correlation smoothness
maps, and Gaussian annulus statistics.

Each probe is deterministic given (model state, key) and reports measured
quantities alongside any declared pass/fail condition instead of asserting.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from . import rng
from .deep import DeepModel, build_model, forward
from .gaussmath import DTYPE, chol_with_jitter
from .kernels import GaussianVector, se_ard, w2_factor
from .svgp import InducingDistribution, conditional
from .train import TrainConfig, TrainingDiverged, fit


@dataclass
class ProbeResult:
    name: str
    inputs: dict
    measured: dict
    passed: bool | None = None
    metadata: dict = field(default_factory=dict)

    def summary(self) -> dict:
        """JSON-ready view: scalars kept, arrays reduced to basic stats."""
        out = {"name": self.name, "inputs": self.inputs, "passed": self.passed,
               "metadata": self.metadata, "measured": {}}
        for k, v in self.measured.items():
            arr = np.asarray(v)
            if arr.ndim == 0:
                out["measured"][k] = float(arr)
            else:
                out["measured"][k] = {"shape": list(arr.shape),
                                      "mean": float(arr.mean()),
                                      "min": float(arr.min()),
                                      "max": float(arr.max())}
        return out


def _layer_moments_1d(model: DeepModel, layer_index: int, values: np.ndarray,
                      key: int) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and non-parametric variance of one layer along a 1-D
    slice of its input space (degenerate input marginals for hybrid layers)."""
    layer = model.layers[layer_index]
    f = torch.as_tensor(values, dtype=DTYPE).reshape(1, -1, 1)
    dist = GaussianVector(f[0], torch.zeros_like(f[0]))
    lf = conditional(layer, f, dist, key=key, layer_index=layer_index)
    return lf.out.mean[0, :, 0].numpy(), lf.out.var_nonparametric[0, :, 0].numpy()


def mean_derivative_probe(model: DeepModel, layer_index: int, grid,
                          m_in: float = 0.0, v_in: float = 1.0,
                          sigma_sq_prev: float = 1.0, key: int = 0,
                          step: float = 1e-4) -> ProbeResult:
    """First derivative of the layer mean and second derivative of its
    non-parametric variance along a 1-D grid (central differences).

    Also evaluates the variance-ordering ratio inequality at the declared
    in-distribution summary (m_in, v_in) against the previous layer's signal
    variance: (dmean(m_in))^2 / (dmean(0))^2 <= sigma_sq_prev / v_in. The
    result is reported, not asserted; the summary quantities are idealized.
    """
    grid = np.asarray(grid, dtype=np.float64).ravel()
    if grid.size < 3:
        raise ValueError("derivative probe needs at least 3 grid points")
    layer = model.layers[layer_index]
    if layer.q_mu.shape[1] != 1 or layer.kernel.log_lengthscales.shape[0] != 1:
        raise ValueError("derivative probe is defined for 1-D layer slices")

    with torch.no_grad():
        mu0, v0 = _layer_moments_1d(model, layer_index, grid, key)
        mu_p, v_p = _layer_moments_1d(model, layer_index, grid + step, key)
        mu_m, v_m = _layer_moments_1d(model, layer_index, grid - step, key)
        dmean = (mu_p - mu_m) / (2.0 * step)
        d2var = (v_p - 2.0 * v0 + v_m) / step**2

        d_at = lambda t: float((_layer_moments_1d(model, layer_index,
                                                  np.array([t - step, t + step]), key)[0]
                                * np.array([-1.0, 1.0])).sum() / (2.0 * step))
        d_zero = d_at(0.0)
        d_m_in = d_at(float(m_in))

    lhs = d_m_in**2 / max(d_zero**2, 1e-300)
    rhs = sigma_sq_prev / v_in
    return ProbeResult(
        name="mean_derivative",
        inputs={"layer_index": layer_index, "m_in": m_in, "v_in": v_in,
                "sigma_sq_prev": sigma_sq_prev, "step": step},
        measured={"grid": grid, "mean": mu0, "var_nonparametric": v0,
                  "dmean_df": dmean, "d2var_df2": d2var,
                  "dmean_at_zero": d_zero, "dmean_at_m_in": d_m_in,
                  "ratio_lhs": lhs, "ratio_rhs": rhs},
        passed=bool(lhs <= rhs),
        metadata={"key": key})


def ood_grid(x: np.ndarray, n_per_side: int = 40) -> np.ndarray:
    """1-D far-field evaluation grid: [min-5, min-2] and [max+2, max+5]."""
    lo, hi = float(np.min(x)), float(np.max(x))
    left = np.linspace(lo - 5.0, lo - 2.0, n_per_side)
    right = np.linspace(hi + 2.0, hi + 5.0, n_per_side)
    return np.concatenate([left, right])[:, None]


def collapse_curve(x, y, inducing_counts, n_layers: int = 2, seed: int = 0,
                   kind: str = "dgp", train_config: TrainConfig | None = None,
                   key: int = 0, eval_samples: int = 20,
                   kernel_variance: float = 1.0,
                   lengthscale: float = 0.3) -> ProbeResult:
    """Mean far-field output-layer non-parametric variance per inducing count.

    Trains one zero-mean model per M on (x, y); diverged runs drop out of the
    curve instead of aborting the probe.

    The probe isolates inducing coverage, so everything else is pinned:

    * Kernel hyperparameters stay frozen at their initial values. At small M
      a trainable lengthscale inflates until it covers the inducing gaps,
      which zeros the very variance the probe measures. The default 0.3 is
      short enough that a handful of inducing points cannot cover the band
      the hidden samples of a far input occupy.
    * q_mu starts at the prior mean. A random q_mu init leaves components
      between closely spaced inducing points that the data never constrains;
      K_uu^{-1} q_mu then has enormous norm and the posterior mean explodes
      just outside the inducing hull, drowning the coverage signal at the
      next layer.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    grid = ood_grid(x)
    curve: dict[int, float] = {}
    failed: list[int] = []
    for m in inducing_counts:
        cfg = train_config or TrainConfig(seed=seed)
        model = build_model(kind, x, hidden_widths=[x.shape[1]] * (n_layers - 1),
                            out_dim=y.shape[1], n_inducing=int(m),
                            likelihood="gaussian", seed=seed, mean_function="zero",
                            kernel_variance=kernel_variance, lengthscale=lengthscale)
        with torch.no_grad():
            for layer in model.layers:
                layer.kernel.log_variance.requires_grad_(False)
                layer.kernel.log_lengthscales.requires_grad_(False)
                layer.q_mu.zero_()
        try:
            fit(model, x, y, cfg)
        except TrainingDiverged:
            failed.append(int(m))
            continue
        with torch.no_grad():
            out = forward(model, torch.as_tensor(grid), n_samples=eval_samples,
                          key=rng.mix(key, rng.DOMAIN_EVAL, int(m)))[-1].out
            curve[int(m)] = float(out.var_nonparametric.mean())
    return ProbeResult(
        name="collapse_curve",
        inputs={"inducing_counts": [int(m) for m in inducing_counts],
                "n_layers": n_layers, "kind": kind, "seed": seed},
        measured={"curve": curve, "failed": failed},
        metadata={"grid_points": int(grid.shape[0])})


def bound_factor_formula(sigma_sq: float, lengthscale_sq: float,
                         solve_norm_sq: float) -> float:
    """(sigma^4 / (4 l^4)) * ||K_uu^{-1} U||_F^2, the squared-gradient scale
    of a posterior mean map under the exponentiated-quadratic kernel."""
    return sigma_sq**2 / (4.0 * lengthscale_sq**2) * solve_norm_sq


def bound_factor(layer) -> float:
    """bound_factor_formula evaluated on a trained layer, with l = the
    smallest lengthscale and U = q_mu at the inducing means (the W2
    self-factor included for distributional layers)."""
    with torch.no_grad():
        if isinstance(layer.inducing, InducingDistribution):
            z = layer.inducing.means
            dz = GaussianVector(z, layer.inducing.variances)
            kuu = se_ard(z, z, layer.kernel) * w2_factor(dz, dz, layer.kernel.lengthscales)
        else:
            z = layer.inducing.z
            kuu = se_ard(z, z, layer.kernel)
        lu, _ = chol_with_jitter(kuu)
        a = torch.cholesky_solve(layer.q_mu, lu)
        sigma2 = float(layer.kernel.variance)
        lmin2 = float(layer.kernel.lengthscales.min()) ** 2
        return bound_factor_formula(sigma2, lmin2, float((a**2).sum()))


def feature_collapse_metric(model: DeepModel, x_pairs, n_samples: int = 20,
                            key: int = 0) -> ProbeResult:
    """Layerwise contraction ratios ||f_l(x) - f_l(x')|| / ||x - x'|| averaged
    over nearby pairs and forward samples, plus each layer's bound factor.

    The ratio is measured on the posterior mean paths (the deterministic part
    of the layer map given the sampled inputs); per-point path noise would
    otherwise dominate at small ||x - x'|| regardless of the map.
    """
    pairs = np.asarray(x_pairs, dtype=np.float64)
    if pairs.ndim != 3 or pairs.shape[1] != 2:
        raise ValueError("x_pairs must have shape [P, 2, D]")
    p, _, d = pairs.shape
    flat = torch.as_tensor(pairs.reshape(2 * p, d))
    base = np.linalg.norm(pairs[:, 0] - pairs[:, 1], axis=1)
    with torch.no_grad():
        passes = forward(model, flat, n_samples=n_samples, key=key)
        ratios = []
        for lf in passes:
            s = lf.out.mean.reshape(n_samples, p, 2, -1)
            dist = torch.linalg.norm(s[:, :, 0] - s[:, :, 1], dim=-1).numpy()
            ratios.append(float((dist / base).mean()))
    factors = [bound_factor(layer) for layer in model.layers]
    return ProbeResult(
        name="feature_collapse",
        inputs={"n_pairs": p, "n_samples": n_samples},
        measured={"contraction_ratios": np.array(ratios),
                  "bound_factors": np.array(factors)},
        metadata={"key": key})


def smoothness_map(model: DeepModel, focus_points, grid, n_samples: int = 200,
                   key: int = 0) -> ProbeResult:
    """Per-layer correlation fields between each focus point and every grid
    point, estimated over shared forward draws.

    Field value = mean over layer output dims of |Pearson corr|; grid rows
    that coincide exactly with a focus point reuse its sample path, so
    self-correlation is 1 (to rounding).
    """
    focus = np.asarray(focus_points, dtype=np.float64)
    grid = np.asarray(grid, dtype=np.float64)
    if focus.ndim != 2 or grid.ndim != 2 or focus.shape[1] != 2 or grid.shape[1] != 2:
        raise ValueError("smoothness map supports 2-D inputs only")
    k, g = focus.shape[0], grid.shape[0]
    match = (grid[:, None, :] == focus[None, :, :]).all(-1)  # [G, K]
    row_of = np.full(g, -1, dtype=int)
    extra = []
    for i in range(g):
        hit = np.nonzero(match[i])[0]
        if hit.size:
            row_of[i] = hit[0]
        else:
            row_of[i] = k + len(extra)
            extra.append(grid[i])
    batch = np.concatenate([focus, np.asarray(extra).reshape(len(extra), 2)], axis=0)

    # joint (full-covariance) sampling so cross-point correlation survives;
    # chunked draws with re-keyed sub-streams cap the [S, D, n, n] memory
    chunks = []
    with torch.no_grad():
        done = 0
        while done < n_samples:
            take = min(50, n_samples - done)
            passes = forward(model, torch.as_tensor(batch), n_samples=take,
                             key=rng.mix(key, rng.DOMAIN_EVAL, done), full_cov=True)
            chunks.append([lf.out.samples.numpy() for lf in passes])
            done += take
    fields = []
    for li in range(len(chunks[0])):
        s = np.concatenate([c[li] for c in chunks], axis=0)  # [S, n, D]
        centered = s - s.mean(0, keepdims=True)
        std = np.sqrt((centered**2).mean(0))
        std = np.maximum(std, 1e-12)
        field = np.empty((k, g))
        for fi in range(k):
            cov = (centered[:, fi, None, :] * centered).mean(0)
            corr = cov / (std[fi][None, :] * std)
            field[fi] = np.abs(corr).mean(-1)[row_of]
        fields.append(field)
    return ProbeResult(
        name="smoothness_map",
        inputs={"n_focus": k, "n_grid": g, "n_samples": n_samples},
        measured={f"layer{i}_field": f for i, f in enumerate(fields)},
        metadata={"key": key})


def smoothness_area(field: np.ndarray, threshold: float = 0.5) -> float:
    """Fraction of grid cells whose |correlation| exceeds the threshold,
    averaged over focus points."""
    return float((np.asarray(field) > threshold).mean())


def annulus_stats(samples, beta: float = 1.0) -> dict:
    """Radius statistics of standardized samples against the sqrt(d) law."""
    s = np.asarray(samples, dtype=np.float64)
    radii = np.linalg.norm(s, axis=1)
    d = s.shape[1]
    expected = float(np.sqrt(d))
    return {"mean_radius": float(radii.mean()),
            "std_radius": float(radii.std()),
            "expected_radius": expected,
            "beta": float(beta),
            "fraction_within_beta": float(np.mean(np.abs(radii - expected) <= beta))}


def _two_point_farfield_variance(sigma_sq_in: float, c: float,
                                 lengthscale_sq: float,
                                 sigma_sq_out: float = 1.0) -> float:
    """Far-field variance of the two-inducing-point construction (inducing
    inputs at +-c, a point mapped to 0 between them) as a function of the
    previous layer's variance, which acts through the proof's
    effective-lengthscale smoothing of the cross-covariances."""
    l2 = lengthscale_sq
    smeared = (1.0 + sigma_sq_in / l2) ** -0.5 * np.exp(-c**2 / (l2 + sigma_sq_in))
    rho = np.exp(-2.0 * c**2 / l2)  # inducing-pair correlation, unsmoothed
    return sigma_sq_out * (1.0 - 2.0 * smeared / (1.0 + rho))


def prop32_condition_check(c: float, lengthscale_sq: float,
                           sigma_sq_prev: float = 0.0,
                           step: float = 1e-6) -> ProbeResult:
    """Sign of d var / d sigma^2_in for the two-inducing-point construction,
    finite-differenced at sigma_sq_prev, against the analytic boundary
    lengthscale_sq + sigma_sq_prev = 2 c^2."""
    if c <= 0:
        raise ValueError("c must be positive")
    v = lambda s: _two_point_farfield_variance(s, c, lengthscale_sq)
    lo = max(sigma_sq_prev - step, 0.0)
    hi = sigma_sq_prev + step
    deriv = (v(hi) - v(lo)) / (hi - lo)
    gap = lengthscale_sq + sigma_sq_prev - 2.0 * c**2
    agrees = (deriv >= -1e-12) == (gap >= 0.0) or abs(deriv) < 1e-9
    return ProbeResult(
        name="prop32_condition",
        inputs={"c": c, "lengthscale_sq": lengthscale_sq,
                "sigma_sq_prev": sigma_sq_prev, "step": step},
        measured={"derivative": float(deriv), "boundary_gap": float(gap),
                  "variance_at_point": float(v(sigma_sq_prev))},
        passed=bool(agrees))
