import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ctalign import model as model_mod
from ctalign.distributions import make_point_set
from ctalign.errors import NumericalError, ShapeError
from ctalign.losses import (
    GradientBundle,
    LossConfig,
    asl_loss,
    combined_loss,
    loss_gradients,
    warmup_gradients,
)
from ctalign.numerics import grad_check
from ctalign.transport import NavigatorParams

seeds = st.integers(min_value=0, max_value=2**31 - 1)


def tiny_instance(seed: int, n_labels=3, dim=6, n_patches=6, depth=2, batch=1):
    samples = model_mod.generate_dataset(
        n_labels=n_labels,
        feature_dim=dim,
        n_patches=n_patches,
        n_samples=max(12, 4 * batch),
        noise_sigma=0.3,
        seed=seed,
    )
    params = model_mod.init_params(
        n_labels=n_labels, dim=dim, depth=depth, seed=seed + 1
    )
    return params, samples[:batch]


def flat_gradient(params, bundle) -> np.ndarray:
    order = model_mod.parameter_arrays(params)
    return np.concatenate([bundle.partials[name].ravel() for name in order])


class TestAslLoss:
    def test_perfect_positive_near_zero(self):
        assert asl_loss([1.0 - 1e-7], [1]) < 1e-6

    def test_positive_example(self):
        assert abs(asl_loss([0.9], [1]) - 0.105361) < 1e-6

    def test_negative_example_with_focus(self):
        # (0.5)^2 * ln(0.5) weighted term
        assert abs(asl_loss([0.5], [0]) - 0.173287) < 1e-6

    def test_reduces_to_bce_when_gammas_zero(self):
        rng = np.random.default_rng(0)
        cfg = LossConfig(gamma_plus=0.0, gamma_minus=0.0)
        for _ in range(25):
            m = int(rng.integers(1, 8))
            p = rng.random(m) * 0.98 + 0.01
            y = (rng.random(m) < 0.5).astype(np.int64)
            bce = -(y * np.log(p) + (1 - y) * np.log(1 - p)).mean()
            assert abs(asl_loss(p, y, cfg) - bce) <= 1e-12

    @given(seeds, st.floats(min_value=0, max_value=4), st.floats(min_value=0, max_value=4))
    def test_nonnegative(self, seed, gp, gm):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(1, 8))
        p = rng.random(m)
        y = (rng.random(m) < 0.5).astype(np.int64)
        assert asl_loss(p, y, LossConfig(gamma_plus=gp, gamma_minus=gm)) >= 0.0

    def test_extreme_probabilities_stay_finite(self):
        assert math.isfinite(asl_loss([0.0, 1.0], [1, 0]))

    def test_length_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            asl_loss([0.5, 0.5], [1])

    def test_nan_rejected(self):
        with pytest.raises(NumericalError):
            asl_loss([np.nan], [1])


def outputs_for(params, sample):
    return model_mod.encode(params, sample)


class TestCombinedLoss:
    def test_alpha_zero_equals_asl_exactly(self):
        params, batch = tiny_instance(2)
        enc = outputs_for(params, batch[0])
        cfg = LossConfig(alpha=0.0)
        total, lct, asl = combined_loss(enc, batch[0].y, cfg)
        assert total == asl
        assert lct > 0.0

    def test_additivity_exact(self):
        params, batch = tiny_instance(3)
        enc = outputs_for(params, batch[0])
        cfg = LossConfig(alpha=0.7, start_layer=2)
        total, lct, asl = combined_loss(enc, batch[0].y, cfg)
        assert total - cfg.alpha * lct - asl == 0.0

    def test_identical_single_points_and_perfect_prediction(self):
        point = np.array([[1.0], [1.0]])
        ps = make_point_set(point, [1.0])
        outputs = SimpleNamespace(
            per_layer_patches=[ps],
            per_layer_labels=[ps],
            probabilities=np.array([1.0 - 1e-7]),
            navigator=NavigatorParams(),
        )
        total, lct, asl = combined_loss(outputs, [1], LossConfig())
        assert total < 1e-6
        assert lct == pytest.approx(0.0, abs=1e-12)

    def test_start_layer_reflected(self):
        params, batch = tiny_instance(4)
        enc = outputs_for(params, batch[0])
        _, lct_all, _ = combined_loss(enc, batch[0].y, LossConfig(start_layer=1))
        _, lct_last, _ = combined_loss(enc, batch[0].y, LossConfig(start_layer=2))
        assert lct_all > lct_last > 0.0


class TestLossGradients:
    def test_alpha_zero_navigator_gradient_exactly_zero(self):
        params, batch = tiny_instance(5)
        bundle = loss_gradients(params, batch, LossConfig(alpha=0.0))
        assert np.array_equal(
            bundle.partials["navigator.log_temperature"], np.zeros(1)
        )

    def test_matches_finite_differences(self):
        params, batch = tiny_instance(6, n_labels=3, dim=6, n_patches=4, depth=2)
        cfg = LossConfig(alpha=1.0)
        bundle = loss_gradients(params, batch, cfg)
        flat = flat_gradient(params, bundle)
        x0 = model_mod.flatten_parameters(params).copy()

        def f(vec):
            model_mod.assign_parameters(params, vec)
            value = model_mod.batch_loss_value(params, batch, cfg)
            model_mod.assign_parameters(params, x0)
            return value

        assert grad_check(f, lambda _x: flat, x0) <= 1e-4

    def test_duplicated_sample_equals_single(self):
        params, batch = tiny_instance(7)
        one = loss_gradients(params, batch, LossConfig())
        two = loss_gradients(params, batch * 2, LossConfig())
        for name in one.partials:
            assert np.array_equal(one.partials[name], two.partials[name])

    def test_bundle_components_additive(self):
        params, batch = tiny_instance(8, batch=2)
        cfg = LossConfig(alpha=0.4)
        bundle = loss_gradients(params, batch, cfg)
        assert bundle.total == pytest.approx(
            cfg.alpha * bundle.lct + bundle.asl, abs=1e-12
        )
        assert bundle.total == pytest.approx(
            model_mod.batch_loss_value(params, batch, cfg), abs=0
        )

    def test_nonfinite_gradient_rejected(self):
        with pytest.raises(NumericalError):
            GradientBundle(
                partials={"x": np.array([np.nan])}, total=0.0, lct=0.0, asl=0.0
            )


class TestWarmupGradients:
    def test_model_groups_follow_classification_only(self):
        params, batch = tiny_instance(9, batch=2)
        warm = warmup_gradients(params, batch, LossConfig(alpha=1.0))
        asl_only = loss_gradients(params, batch, LossConfig(alpha=0.0))
        for name in warm.partials:
            if name.startswith("navigator."):
                continue
            assert np.array_equal(warm.partials[name], asl_only.partials[name])

    def test_navigator_follows_raw_transport(self):
        params, batch = tiny_instance(10, batch=2)
        warm = warmup_gradients(params, batch, LossConfig(alpha=1.0))
        joint = loss_gradients(params, batch, LossConfig(alpha=1.0))
        # the classification term never touches the temperature, so the full
        # objective's navigator gradient is the raw transport gradient
        assert np.array_equal(
            warm.partials["navigator.log_temperature"],
            joint.partials["navigator.log_temperature"],
        )

    def test_alpha_zero_leaves_navigator_untouched(self):
        params, batch = tiny_instance(11)
        warm = warmup_gradients(params, batch, LossConfig(alpha=0.0))
        assert np.array_equal(
            warm.partials["navigator.log_temperature"], np.zeros(1)
        )

    def test_reported_total_is_classification_loss(self):
        params, batch = tiny_instance(12)
        warm = warmup_gradients(params, batch, LossConfig(alpha=1.0))
        assert warm.total == warm.asl
