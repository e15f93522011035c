"""Probe tests.

The correlation-field oracle sets q(U) equal to the prior so the posterior
process is the prior SE process, whose correlation is known in closed form.
The two-point variance construction is checked against its analytic sign
boundary on a grid.
"""

import json

import numpy as np
import pytest
import torch

from ddgp.deep import KERNEL_INIT, DeepModel, build_model
from ddgp.diagnostics import (annulus_stats, bound_factor,
                              bound_factor_formula, collapse_curve,
                              feature_collapse_metric, mean_derivative_probe,
                              ood_grid, prop32_condition_check, smoothness_area,
                              smoothness_map)
from ddgp.gaussmath import chol_with_jitter
from ddgp.kernels import KernelParams, se_ard
from ddgp.likelihoods import GaussianLikelihood
from ddgp.svgp import InducingPoints, MeanFunction, VariationalLayer
from ddgp.train import TrainConfig


class TestProp32Condition:
    def test_wide_lengthscale_gives_nonnegative_derivative(self):
        res = prop32_condition_check(c=1.0, lengthscale_sq=4.0)
        assert res.measured["derivative"] >= 0
        assert res.passed

    def test_narrow_lengthscale_gives_negative_derivative(self):
        res = prop32_condition_check(c=1.0, lengthscale_sq=1.0)
        assert res.measured["derivative"] < 0
        assert res.passed

    def test_boundary_derivative_vanishes(self):
        res = prop32_condition_check(c=1.0, lengthscale_sq=2.0)
        assert abs(res.measured["derivative"]) < 1e-6
        assert res.passed

    def test_sign_agrees_on_grid(self):
        cs = np.linspace(0.2, 3.0, 20)
        l2s = np.linspace(0.05, 10.0, 20)
        for c in cs:
            for l2 in l2s:
                assert prop32_condition_check(float(c), float(l2)).passed

    def test_nonzero_input_variance_shifts_boundary(self):
        # l2 alone is below 2c^2, but adding the input variance crosses it
        res = prop32_condition_check(c=1.0, lengthscale_sq=1.0, sigma_sq_prev=1.5)
        assert res.measured["derivative"] >= 0
        assert res.passed

    def test_invalid_c(self):
        with pytest.raises(ValueError):
            prop32_condition_check(c=0.0, lengthscale_sq=1.0)


def _data_1d(n=40, seed=0):
    r = np.random.default_rng(seed)
    x = r.uniform(-2, 2, size=(n, 1))
    y = np.sin(x)
    return x, y


class TestMeanDerivativeProbe:
    def test_rejects_tiny_grid(self):
        x, _ = _data_1d()
        model = build_model("dgp", x, hidden_widths=[1], out_dim=1,
                            n_inducing=5, likelihood="gaussian", seed=0)
        with pytest.raises(ValueError):
            mean_derivative_probe(model, 0, [0.0, 1.0])

    def test_rejects_wide_layers(self):
        r = np.random.default_rng(0)
        x = r.uniform(-1, 1, size=(30, 2))
        model = build_model("dgp", x, hidden_widths=[2], out_dim=1,
                            n_inducing=5, likelihood="gaussian", seed=0)
        with pytest.raises(ValueError):
            mean_derivative_probe(model, 0, np.linspace(-1, 1, 5))

    def test_linear_mean_layer_has_constant_derivative(self):
        x, _ = _data_1d()
        model = build_model("dgp", x, hidden_widths=[1], out_dim=1,
                            n_inducing=6, likelihood="gaussian", seed=1)
        layer = model.layers[0]
        with torch.no_grad():  # q matching the prior mean leaves only W f
            layer.q_mu.copy_(layer.mean_fn(layer.inducing.z))
        res = mean_derivative_probe(model, 0, np.linspace(-2, 2, 21))
        d = res.measured["dmean_df"]
        w = float(layer.mean_fn.weight[0, 0])
        assert np.allclose(d, w, atol=1e-6)
        assert d.max() - d.min() < 1e-6

    def test_flat_prior_layer_has_zero_derivative(self):
        x, _ = _data_1d()
        model = build_model("dgp", x, hidden_widths=[1], out_dim=1,
                            n_inducing=6, likelihood="gaussian", seed=2,
                            mean_function="zero")
        with torch.no_grad():
            model.layers[0].q_mu.zero_()
        res = mean_derivative_probe(model, 0, np.linspace(-2, 2, 15))
        assert np.max(np.abs(res.measured["dmean_df"])) < 1e-8

    def test_summary_is_json_ready(self):
        x, _ = _data_1d()
        model = build_model("ddgp", x, hidden_widths=[1], out_dim=1,
                            n_inducing=5, likelihood="gaussian", seed=3)
        res = mean_derivative_probe(model, 1, np.linspace(-2, 2, 9), key=4)
        json.dumps(res.summary())
        assert np.all(np.isfinite(res.measured["d2var_df2"]))


class TestCollapseCurve:
    def test_single_inducing_far_field_sits_at_prior_variance(self):
        x, y = _data_1d()
        cfg = TrainConfig(learning_rate=0.0, max_iters=3, batch_size=64,
                          convergence_rel_tol=None)
        res = collapse_curve(x, y, inducing_counts=[1], n_layers=1,
                             train_config=cfg, kernel_variance=2.0)
        assert res.measured["curve"][1] == pytest.approx(2.0, rel=0.02)

    def test_diverged_runs_drop_out(self):
        x, y = _data_1d(n=16)
        y = y.copy()
        y[0] = np.nan
        cfg = TrainConfig(max_iters=30, batch_size=64, convergence_rel_tol=None)
        res = collapse_curve(x, y, inducing_counts=[2, 4], n_layers=1,
                             train_config=cfg)
        assert res.measured["curve"] == {}
        assert res.measured["failed"] == [2, 4]

    def test_ood_grid_excludes_data_band(self):
        x = np.array([[-1.0], [1.0]])
        g = ood_grid(x, n_per_side=10)
        assert g.shape == (20, 1)
        assert np.all((g <= -3.0) | (g >= 3.0))
        assert g.min() == -6.0 and g.max() == 6.0


def _manual_single_layer(z, mean_fn, q_mu, lengthscale=KERNEL_INIT,
                         variance=KERNEL_INIT):
    kern = KernelParams.create(variance, lengthscale, input_dim=z.shape[1])
    layer = VariationalLayer.create(kern, InducingPoints(torch.as_tensor(z)), 1,
                                    mean_fn, q_mu_init=torch.as_tensor(q_mu))
    return DeepModel([layer], GaussianLikelihood(1.0),
                     {"kind": "dgp", "hidden_widths": [], "out_dim": 1,
                      "n_inducing": z.shape[0], "likelihood": "gaussian",
                      "seed": 0, "mean_function": "zero", "d_in": z.shape[1]})


class TestFeatureCollapse:
    def test_pair_shape_validated(self):
        x, _ = _data_1d()
        model = build_model("dgp", x, hidden_widths=[], out_dim=1,
                            n_inducing=4, likelihood="gaussian", seed=0)
        with pytest.raises(ValueError):
            feature_collapse_metric(model, np.zeros((3, 4)))

    def test_flat_layer_contracts_and_identity_does_not(self):
        z = np.linspace(-1, 1, 8)[:, None]
        pairs = np.stack([np.c_[np.linspace(-0.8, 0.8, 6)],
                          np.c_[np.linspace(-0.8, 0.8, 6) + 0.1]], axis=1)
        flat = _manual_single_layer(z, MeanFunction("zero", out_dim=1),
                                    np.zeros((8, 1)), lengthscale=10.0)
        res = feature_collapse_metric(flat, pairs)
        assert res.measured["contraction_ratios"][0] < 0.05

        ident = _manual_single_layer(z, MeanFunction("identity"), z)
        res = feature_collapse_metric(ident, pairs)
        assert res.measured["contraction_ratios"][0] == pytest.approx(1.0, abs=1e-9)

    def test_bound_factor_quadruples_with_variance(self):
        assert bound_factor_formula(2.0, 1.3, 0.7) == \
            pytest.approx(4.0 * bound_factor_formula(1.0, 1.3, 0.7), rel=1e-15)
        x, _ = _data_1d()
        model = build_model("ddgp", x, hidden_widths=[1], out_dim=1,
                            n_inducing=5, likelihood="gaussian", seed=1)
        for layer in model.layers:
            f = bound_factor(layer)
            assert np.isfinite(f) and f >= 0


def _prior_process_model(seed=0):
    """2-D single SE layer with q(U) = p(U): the posterior equals the prior."""
    r = np.random.default_rng(seed)
    z = r.uniform(-1, 1, size=(10, 2))
    model = _manual_single_layer(z, MeanFunction("zero", out_dim=1),
                                 np.zeros((10, 1)))
    layer = model.layers[0]
    with torch.no_grad():
        kuu = se_ard(layer.inducing.z, layer.inducing.z, layer.kernel)
        lu, _ = chol_with_jitter(kuu)
        raw = torch.tril(lu, diagonal=-1) + torch.diag_embed(
            torch.log(torch.diagonal(lu)))
        layer.q_sqrt_raw.copy_(raw.unsqueeze(0))
    return model


class TestSmoothnessMap:
    def test_rejects_non_2d(self):
        x, _ = _data_1d()
        model = build_model("dgp", x, hidden_widths=[], out_dim=1,
                            n_inducing=4, likelihood="gaussian", seed=0)
        with pytest.raises(ValueError):
            smoothness_map(model, np.zeros((1, 1)), np.zeros((4, 1)))

    def test_self_correlation_is_one(self):
        model = _prior_process_model()
        focus = np.array([[0.3, -0.2]])
        grid = np.array([[0.3, -0.2], [1.0, 1.0], [-0.5, 0.4]])
        res = smoothness_map(model, focus, grid, n_samples=60, key=1)
        assert res.measured["layer0_field"][0, 0] == pytest.approx(1.0, abs=1e-9)

    def test_prior_process_field_matches_se_correlation(self):
        model = _prior_process_model()
        focus = np.array([[0.0, 0.0]])
        rs = np.array([0.0, 0.5, 1.0, 1.5, 2.0, 3.0])
        grid = np.c_[rs, np.zeros_like(rs)]
        res = smoothness_map(model, focus, grid, n_samples=200, key=7)
        field = res.measured["layer0_field"][0]
        expect = np.exp(-rs**2 / KERNEL_INIT**2)
        assert np.max(np.abs(field - expect)) < 0.15
        for i in range(len(rs) - 1):  # monotone along the ray within noise
            assert field[i + 1] <= field[i] + 0.1

    def test_deterministic_given_key(self):
        model = _prior_process_model(3)
        focus = np.array([[0.1, 0.1]])
        grid = np.array([[0.5, 0.0], [0.0, 0.9]])
        a = smoothness_map(model, focus, grid, n_samples=30, key=9)
        b = smoothness_map(model, focus, grid, n_samples=30, key=9)
        assert np.array_equal(a.measured["layer0_field"], b.measured["layer0_field"])

    def test_area_metric(self):
        field = np.array([[1.0, 0.6, 0.2, 0.1]])
        assert smoothness_area(field) == 0.5
        assert smoothness_area(field, threshold=0.05) == 1.0


class TestAnnulus:
    def test_high_dimensional_concentration(self):
        r = np.random.default_rng(0)
        stats = annulus_stats(r.normal(size=(2000, 1000)))
        assert stats["mean_radius"] == pytest.approx(np.sqrt(1000), rel=0.02)
        assert 0.7 < stats["fraction_within_beta"] < 0.95

    def test_low_dimensional_spread(self):
        r = np.random.default_rng(1)
        stats = annulus_stats(r.normal(size=(5000, 2)))
        assert stats["fraction_within_beta"] < 0.9
        assert stats["expected_radius"] == pytest.approx(np.sqrt(2))
