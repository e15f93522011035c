"""Training loop: hand-rolled Adam over the model's parameter dictionary,
minibatched evidence-bound ascent with derived per-step RNG streams,
windowed-convergence early stopping, and divergence abort.

Gradients come from reverse-mode autodiff through the bound; the finite
difference helpers exist for verification (the gradcheck experiment) and use
the same frozen per-step key so both routes differentiate the identical
deterministic function.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import torch

from . import rng
from .deep import DeepModel, elbo
from .gaussmath import DTYPE, NumericalError


class TrainingDiverged(NumericalError):
    """Raised after 10 consecutive non-finite objective evaluations."""


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    max_iters: int = 1000
    n_samples: int = 1
    seed: int = 0
    convergence_window: int = 2000
    convergence_rel_tol: float | None = 1e-5
    eval_every: int | None = None
    # constant lr by default; image runs decay by the factor on a fixed period
    lr_decay_every: int | None = None
    lr_decay_factor: float = 0.1


@dataclass
class TrainTrace:
    elbo: list[float] = field(default_factory=list)
    steps: int = 0
    converged: bool = False
    wall_time: float = 0.0


class Adam:
    """Standard Adam with bias correction over a named parameter dict."""

    def __init__(self, params: dict[str, torch.Tensor], learning_rate: float = 0.001,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = {k: p for k, p in params.items() if p.requires_grad}
        self.lr = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: torch.zeros_like(p) for k, p in self.params.items()}
        self.v = {k: torch.zeros_like(p) for k, p in self.params.items()}
        self.t = 0

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    @torch.no_grad()
    def step(self):
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for k, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            self.m[k].mul_(self.beta1).add_(g, alpha=1.0 - self.beta1)
            self.v[k].mul_(self.beta2).addcmul_(g, g, value=1.0 - self.beta2)
            m_hat = self.m[k] / b1t
            v_hat = self.v[k] / b2t
            p.add_(-self.lr * m_hat / (torch.sqrt(v_hat) + self.eps))


def fit(model: DeepModel, x, y, config: TrainConfig, callback=None,
        checkpoint_path=None) -> TrainTrace:
    """Maximize the evidence bound; returns the per-step trace.

    Batches are sampled without replacement per step from a seed-derived
    stream; the forward key mixes (seed, step) so reruns with the same seed
    replay the identical draw sequence.
    """
    x = torch.as_tensor(np.asarray(x), dtype=DTYPE)
    y_arr = np.asarray(y)
    y = torch.as_tensor(y_arr, dtype=DTYPE)
    n_total = x.shape[0]
    opt = Adam(model.parameters(), config.learning_rate, config.beta1,
               config.beta2, config.eps)
    trace = TrainTrace()
    bad_streak = 0
    t0 = time.perf_counter()

    for step in range(config.max_iters):
        if config.batch_size < n_total:
            idx = rng.numpy_rng(config.seed, rng.DOMAIN_BATCH, step).choice(
                n_total, size=config.batch_size, replace=False)
            xb, yb = x[idx], y[idx]
        else:
            xb, yb = x, y
        key = rng.mix(config.seed, rng.DOMAIN_FORWARD, step)
        if config.lr_decay_every:
            opt.lr = config.learning_rate * config.lr_decay_factor ** (
                step // config.lr_decay_every)
        opt.zero_grad()
        bound = elbo(model, xb, yb, n_total=n_total, key=key, n_samples=config.n_samples)
        value = float(bound.detach())
        if not np.isfinite(value):
            bad_streak += 1
            trace.elbo.append(value)
            if bad_streak >= 10:
                raise TrainingDiverged(
                    f"objective non-finite for {bad_streak} consecutive steps "
                    f"(last at step {step})")
            continue
        bad_streak = 0
        (-bound).backward()
        opt.step()
        trace.elbo.append(value)
        trace.steps = step + 1
        due = config.eval_every is None or (step + 1) % config.eval_every == 0
        if callback is not None and due:
            callback(step, value, model)
        if checkpoint_path is not None and config.eval_every and due:
            from .checkpoint import save_checkpoint
            save_checkpoint(model, checkpoint_path, extra={"step": step + 1})
        if config.convergence_rel_tol is not None:
            w = config.convergence_window
            if len(trace.elbo) >= 2 * w and (step + 1) % w == 0:
                recent = float(np.mean(trace.elbo[-w:]))
                previous = float(np.mean(trace.elbo[-2 * w: -w]))
                denom = max(abs(previous), 1e-12)
                if (recent - previous) / denom < config.convergence_rel_tol:
                    trace.converged = True
                    break

    trace.wall_time = time.perf_counter() - t0
    if checkpoint_path is not None:
        from .checkpoint import save_checkpoint
        save_checkpoint(model, checkpoint_path, extra={"step": trace.steps})
    return trace


def gradients(objective, params: dict[str, torch.Tensor]) -> dict[str, np.ndarray]:
    """Reverse-mode gradients of objective() w.r.t. every trainable param."""
    for p in params.values():
        p.grad = None
    value = objective()
    if not bool(torch.isfinite(value)):
        snapshot = {k: float(p.detach().norm()) for k, p in params.items()}
        raise NumericalError(f"non-finite objective {float(value)}; "
                             f"parameter norms: {snapshot}")
    value.backward()
    return {k: (torch.zeros_like(p) if p.grad is None else p.grad).detach().numpy().copy()
            for k, p in params.items() if p.requires_grad}


def finite_difference_gradients(objective, params: dict[str, torch.Tensor],
                                step: float = 1e-4) -> dict[str, np.ndarray]:
    """Central differences of objective() elementwise over the parameters.

    objective must be a deterministic function of the parameter values (use a
    frozen forward key)."""
    out = {}
    with torch.no_grad():
        for k, p in params.items():
            if not p.requires_grad:
                continue
            flat = p.reshape(-1)
            g = np.zeros(flat.shape[0])
            for i in range(flat.shape[0]):
                orig = float(flat[i])
                flat[i] = orig + step
                up = float(objective())
                flat[i] = orig - step
                down = float(objective())
                flat[i] = orig
                g[i] = (up - down) / (2.0 * step)
            out[k] = g.reshape(p.shape)
    return out


def gradient_check(objective, params: dict[str, torch.Tensor], step: float = 1e-4,
                   rel_floor: float = 1e-6) -> dict:
    """Compare autodiff against central differences.

    Relative error per element is |ad - fd| / max(|ad|, |fd|, rel_floor);
    returns per-parameter and global maxima of both error flavors.
    """
    ad = gradients(objective, params)
    fd = finite_difference_gradients(objective, params, step=step)
    report = {"per_param": {}, "max_abs_err": 0.0, "max_rel_err": 0.0}
    for k in ad:
        abs_err = np.abs(ad[k] - fd[k])
        denom = np.maximum(np.maximum(np.abs(ad[k]), np.abs(fd[k])), rel_floor)
        rel_err = abs_err / denom
        report["per_param"][k] = {"max_abs_err": float(abs_err.max()),
                                  "max_rel_err": float(rel_err.max())}
        report["max_abs_err"] = max(report["max_abs_err"], float(abs_err.max()))
        report["max_rel_err"] = max(report["max_rel_err"], float(rel_err.max()))
    return report
