"""Deep-stack tests: builder wiring, forward determinism, degeneration of the
distribution-aware model to the plain one when the Wasserstein pathway is
switched off, prior equivalence between the two constructions, and the
single-layer evidence bound against a dense oracle (including tightness at
the closed-form optimal variational distribution).
"""

import numpy as np
import pytest
import torch
from scipy.stats import ks_2samp

from ddgp import rng as drng
from ddgp.deep import DeepModel, build_model, elbo, forward, predict_f, sample_prior
from ddgp.kernels import KernelParams
from ddgp.likelihoods import GaussianLikelihood
from ddgp.svgp import InducingPoints, MeanFunction, VariationalLayer


def _t(x):
    return torch.as_tensor(x, dtype=torch.float64)


def se_np(a, b, var, ls):
    diff = a[:, None, :] - b[None, :, :]
    return var * np.exp(-np.sum(diff**2 / ls**2, axis=-1))


def toy_xy(n=20, seed=0):
    r = np.random.default_rng(seed)
    x = np.sort(r.uniform(-3, 3, size=(n, 1)), axis=0)
    y = np.sin(x) + 0.1 * r.normal(size=(n, 1))
    return x, y


class TestBuilder:
    def test_structure_and_kinds(self):
        x, _ = toy_xy(30)
        m = build_model("ddgp", x, [2, 2], 1, n_inducing=8, likelihood="gaussian", seed=0)
        assert m.n_layers == 3
        assert not m.layers[0].distributional
        assert m.layers[1].distributional and m.layers[2].distributional
        assert m.layers[0].out_dim == 2 and m.layers[2].out_dim == 1
        dgp = build_model("dgp", x, [2], 1, n_inducing=8, likelihood="gaussian", seed=0)
        assert all(not l.distributional for l in dgp.layers)

    def test_first_layer_inducing_cover_data(self):
        x, _ = toy_xy(50, seed=1)
        m = build_model("dgp", x, [1], 1, n_inducing=10, likelihood="gaussian", seed=3)
        z = m.layers[0].inducing.z.detach().numpy()
        assert z.shape == (10, 1)
        assert z.min() >= x.min() - 1e-9 and z.max() <= x.max() + 1e-9

    def test_pca_mean_weights_orthonormal_and_padded(self):
        r = np.random.default_rng(2)
        x = r.normal(size=(40, 3))
        m = build_model("dgp", x, [2, 5], 1, n_inducing=6, likelihood="gaussian", seed=0)
        w0 = m.layers[0].mean_fn.weight.numpy()
        assert w0.shape == (3, 2)
        np.testing.assert_allclose(w0.T @ w0, np.eye(2), atol=1e-10)
        w1 = m.layers[1].mean_fn.weight.numpy()
        assert w1.shape == (2, 5)
        np.testing.assert_allclose(w1[:, 2:], 0.0, atol=0)  # padded columns
        assert m.layers[2].mean_fn.kind == "zero"

    def test_seeded_build_is_deterministic(self):
        x, _ = toy_xy(25, seed=4)
        a = build_model("ddgp", x, [2], 1, n_inducing=5, likelihood="gaussian", seed=7)
        b = build_model("ddgp", x, [2], 1, n_inducing=5, likelihood="gaussian", seed=7)
        c = build_model("ddgp", x, [2], 1, n_inducing=5, likelihood="gaussian", seed=8)
        for k in a.parameters():
            assert torch.equal(a.parameters()[k], b.parameters()[k])
        assert not torch.equal(a.parameters()["layers.1.q_mu"], c.parameters()["layers.1.q_mu"])

    def test_default_inits(self):
        x, _ = toy_xy(25, seed=5)
        m = build_model("ddgp", x, [2], 1, n_inducing=5, likelihood="gaussian", seed=0)
        assert float(m.layers[0].kernel.variance.detach()) == pytest.approx(1.351)
        np.testing.assert_allclose(m.layers[0].kernel.lengthscales.detach().numpy(), 1.351)
        assert float(m.likelihood.noise_variance.detach()) == pytest.approx(1.0)
        lq = m.layers[0].q_sqrt().detach()
        np.testing.assert_allclose(torch.diagonal(lq, dim1=-2, dim2=-1).numpy(), 1e-5)
        np.testing.assert_allclose(
            m.layers[1].inducing.variances.detach().numpy(), 0.1, atol=1e-12)


class TestForward:
    def test_shapes_and_variance_signs(self):
        x, _ = toy_xy(12)
        m = build_model("ddgp", x, [3], 2, n_inducing=6, likelihood="gaussian", seed=1)
        fwd = forward(m, _t(x), n_samples=4, key=5)
        assert len(fwd) == 2
        assert fwd[0].out.samples.shape == (4, 12, 3)
        assert fwd[1].out.mean.shape == (4, 12, 2)
        for lf in fwd:
            assert float(lf.out.var_parametric.detach().min()) >= 0
            assert float(lf.out.var_nonparametric.detach().min()) >= 0

    def test_same_key_reproduces_forward(self):
        x, _ = toy_xy(10)
        m = build_model("ddgp", x, [2], 1, n_inducing=5, likelihood="gaussian", seed=2)
        a = forward(m, _t(x), n_samples=3, key=42)
        b = forward(m, _t(x), n_samples=3, key=42)
        c = forward(m, _t(x), n_samples=3, key=43)
        assert torch.equal(a[-1].out.samples, b[-1].out.samples)
        assert not torch.equal(a[-1].out.samples, c[-1].out.samples)

    def test_hybrid_layer_requires_marginals(self):
        x, _ = toy_xy(8)
        m = build_model("ddgp", x, [2], 1, n_inducing=4, likelihood="gaussian", seed=0)
        from ddgp.svgp import conditional
        with pytest.raises(ValueError):
            conditional(m.layers[1], torch.zeros(1, 3, 2, dtype=torch.float64), None, key=0)


def _copy_as_plain(ddgp_model: DeepModel, x, key: int) -> DeepModel:
    """Plain model whose hidden inducing inputs equal the distributional
    draws the keyed forward pass of the distribution-aware model produces."""
    layers = []
    for li, layer in enumerate(ddgp_model.layers):
        if layer.distributional:
            gen = drng.generator(key, li, drng.PURPOSE_INDUCING)
            z = layer.inducing.draw(1, gen)[0].detach()
            inducing = InducingPoints(z, trainable=False)
        else:
            inducing = InducingPoints(layer.inducing.z.detach(), trainable=False)
        clone = VariationalLayer(
            KernelParams(layer.kernel.log_variance.detach().clone(),
                         layer.kernel.log_lengthscales.detach().clone()),
            inducing, layer.q_mu.detach().clone(), layer.q_sqrt_raw.detach().clone(),
            layer.mean_fn, name=layer.name)
        layers.append(clone)
    return DeepModel(layers, ddgp_model.likelihood, {**ddgp_model.meta, "kind": "dgp"})


class TestDegeneration:
    def test_neutralized_w2_equals_plain_model_exactly(self):
        x, _ = toy_xy(15, seed=6)
        m = build_model("ddgp", x, [2, 2], 1, n_inducing=6, likelihood="gaussian", seed=9)
        key = 77
        plain = _copy_as_plain(m, x, key)
        fwd_d = forward(m, _t(x), n_samples=1, key=key, neutralize_w2=True)
        fwd_p = forward(plain, _t(x), n_samples=1, key=key)
        for a, b in zip(fwd_d, fwd_p):
            np.testing.assert_allclose(a.out.mean.detach().numpy(),
                                       b.out.mean.detach().numpy(), atol=1e-12)
            np.testing.assert_allclose(a.out.samples.detach().numpy(),
                                       b.out.samples.detach().numpy(), atol=1e-12)

    def test_elbo_degenerates_with_frozen_inducing_draws(self):
        x, y = toy_xy(15, seed=8)
        m = build_model("ddgp", x, [2], 1, n_inducing=6, likelihood="gaussian", seed=10)
        with torch.no_grad():  # collapse the inducing distributions onto their means
            for layer in m.layers[1:]:
                layer.inducing.log_variances.fill_(-70.0)
        key = 13
        plain = _copy_as_plain(m, x, key)
        e_d = float(elbo(m, _t(x), _t(y), n_total=15, key=key, neutralize_w2=True).detach())
        e_p = float(elbo(plain, _t(x), _t(y), n_total=15, key=key).detach())
        assert e_d == pytest.approx(e_p, abs=1e-10)

    def test_prior_samples_match_in_distribution(self):
        x, _ = toy_xy(5, seed=11)
        kw = dict(hidden_widths=[1], out_dim=1, n_inducing=5, likelihood="gaussian",
                  mean_function="zero")
        a = build_model("dgp", x, seed=1, **kw)
        b = build_model("ddgp", x, seed=2, **kw)
        sa = sample_prior(a, _t(x), n_samples=600, key=100)[:, 0, 0].numpy()
        sb = sample_prior(b, _t(x), n_samples=600, key=200)[:, 0, 0].numpy()
        assert ks_2samp(sa, sb).pvalue > 0.01


class TestElbo:
    def test_single_layer_matches_dense_oracle(self):
        x, y = toy_xy(14, seed=12)
        m = build_model("dgp", x, [], 1, n_inducing=6, likelihood="gaussian", seed=3,
                        mean_function="zero")
        layer = m.layers[0]
        with torch.no_grad():
            layer.q_mu.copy_(_t(np.random.default_rng(1).normal(size=(6, 1))))
        got = float(elbo(m, _t(x), _t(y), n_total=14, key=0).detach())

        z = layer.inducing.z.detach().numpy()
        var = float(layer.kernel.variance.detach())
        ls = layer.kernel.lengthscales.detach().numpy()
        kuu = se_np(z, z, var, ls) + 1e-6 * np.eye(6)
        kfu = se_np(x, z, var, ls)
        kuu_inv = np.linalg.inv(kuu)
        lq = layer.q_sqrt().detach().numpy()[0]
        s_u = lq @ lq.T
        q_mu = layer.q_mu.detach().numpy()
        mean = (kfu @ kuu_inv @ q_mu)[:, 0]
        var_tot = (var - np.sum((kfu @ kuu_inv) * kfu, axis=1)
                   + np.diag(kfu @ kuu_inv @ s_u @ kuu_inv @ kfu.T))
        nv = float(m.likelihood.noise_variance.detach())
        ell = np.sum(-0.5 * np.log(2 * np.pi * nv)
                     - ((y[:, 0] - mean) ** 2 + var_tot) / (2 * nv))
        sign, logdet_k = np.linalg.slogdet(kuu)
        sign2, logdet_s = np.linalg.slogdet(s_u)
        kl = 0.5 * (np.trace(np.linalg.solve(kuu, s_u))
                    + q_mu[:, 0] @ np.linalg.solve(kuu, q_mu[:, 0])
                    - 6 + logdet_k - logdet_s)
        assert got == pytest.approx(ell - kl, rel=1e-9)

    def test_minibatch_scaling(self):
        x, y = toy_xy(16, seed=13)
        m = build_model("dgp", x, [], 1, n_inducing=5, likelihood="gaussian", seed=4)
        full = elbo(m, _t(x), _t(y), n_total=16, key=0)
        half = elbo(m, _t(x[:8]), _t(y[:8]), n_total=16, key=0)
        # the half-batch estimate scales the data fit by 2; both are finite
        # and within the same ballpark for smooth data
        assert np.isfinite(float(full.detach())) and np.isfinite(float(half.detach()))

    def test_elbo_is_differentiable(self):
        x, y = toy_xy(10, seed=14)
        m = build_model("ddgp", x, [2], 1, n_inducing=4, likelihood="gaussian", seed=5)
        e = elbo(m, _t(x), _t(y), n_total=10, key=3)
        e.backward()
        for name, p in m.parameters().items():
            assert p.grad is not None, name
            assert torch.isfinite(p.grad).all(), name


class TestExactGPEquivalence:
    def test_optimal_q_makes_bound_tight_and_moments_exact(self):
        n = 10
        x = np.linspace(-2.5, 2.5, n)[:, None]
        r = np.random.default_rng(15)
        y = np.sin(1.3 * x) + 0.05 * r.normal(size=(n, 1))
        noise = 0.05

        var, ls = 1.2, 1.1
        k = se_np(x, x, var, np.array([ls]))
        ky = k + noise * np.eye(n)
        ky_inv = np.linalg.inv(ky)
        log_marginal = float(
            -0.5 * y[:, 0] @ ky_inv @ y[:, 0]
            - 0.5 * np.linalg.slogdet(ky)[1] - 0.5 * n * np.log(2 * np.pi))
        m_opt = k @ ky_inv @ y
        s_opt = k - k @ ky_inv @ k

        p = KernelParams.create(var, ls, input_dim=1, trainable=False)
        layer = VariationalLayer.create(p, InducingPoints(_t(x), trainable=False), 1,
                                        MeanFunction("zero", out_dim=1))
        with torch.no_grad():
            layer.q_mu.copy_(_t(m_opt))
            l_s = np.linalg.cholesky(s_opt + 1e-10 * np.eye(n))
            raw = np.tril(l_s, -1) + np.diag(np.log(np.diag(l_s)))
            layer.q_sqrt_raw.copy_(_t(raw[None]))
        model = DeepModel([layer], GaussianLikelihood(noise, trainable=False), {"kind": "dgp"})

        got = float(elbo(model, _t(x), _t(y), n_total=n, key=0).detach())
        assert got == pytest.approx(log_marginal, abs=2e-4)

        xs = np.linspace(-3, 3, 17)[:, None]
        fwd = predict_f(model, _t(xs), n_samples=1, key=0)
        ksx = se_np(xs, x, var, np.array([ls]))
        want_mean = ksx @ ky_inv @ y
        want_var = var - np.sum((ksx @ ky_inv) * ksx, axis=1)
        np.testing.assert_allclose(fwd[0].out.mean[0].numpy(), want_mean, atol=1e-4)
        np.testing.assert_allclose(fwd[0].out.var_total[0, :, 0].numpy(), want_var, atol=1e-4)
