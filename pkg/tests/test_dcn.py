"""Multitask network: forward consistency, mask sampling, MC inference."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dcnpd.data import Standardization
from dcnpd.dcn import (
    DCNParams,
    DcnMasks,
    build_dcn,
    dcn_forward,
    estimate_ite,
    mc_ite_matrix,
    predict_deterministic,
    sample_masks,
)
from dcnpd.nn import DenseLayer, DropoutMask, MLPParams
from dcnpd.propensity import DropoutSchedule, PropensityModel


def small_dcn(seed=0, d=3, shared=(6, 6), heads=()):
    return build_dcn(d, np.random.default_rng(seed), shared, heads)


def zero_dcn(d=3, width=4):
    def stack(*dims, out_act):
        layers = [
            DenseLayer(np.zeros((a, b)), np.zeros(b), "relu")
            for a, b in zip(dims, dims[1:])
        ]
        layers[-1].activation = out_act
        return MLPParams(layers)

    return DCNParams(
        stack(d, width, width, out_act="relu"),
        stack(width, 1, out_act="identity"),
        stack(width, 1, out_act="identity"),
    )


def stub_propensity(logit, d=3, gamma=1.0):
    """Constant-score model: every subject gets sigmoid(logit)."""
    net = MLPParams([DenseLayer(np.zeros((d, 1)), np.array([logit]), "sigmoid")])
    return PropensityModel(
        net, Standardization(np.zeros(d), np.ones(d)), DropoutSchedule(gamma)
    )


class TestParams:
    def test_default_architecture(self):
        params = build_dcn(25, np.random.default_rng(0))
        assert [l.fan_out for l in params.shared.layers] == [200, 200]
        assert all(l.activation == "relu" for l in params.shared.layers)
        assert len(params.head0.layers) == 1
        assert params.head0.layers[0].activation == "identity"
        assert params.mask_widths() == ([200, 200], [], [])

    def test_head_width_mismatch_rejected(self):
        shared = MLPParams([DenseLayer(np.zeros((3, 4)), np.zeros(4), "relu")])
        good = MLPParams([DenseLayer(np.zeros((4, 1)), np.zeros(1), "identity")])
        bad = MLPParams([DenseLayer(np.zeros((5, 1)), np.zeros(1), "identity")])
        with pytest.raises(ValueError):
            DCNParams(shared, good, bad)

    def test_head_must_be_scalar_identity(self):
        shared = MLPParams([DenseLayer(np.zeros((3, 4)), np.zeros(4), "relu")])
        relu_head = MLPParams([DenseLayer(np.zeros((4, 1)), np.zeros(1), "relu")])
        with pytest.raises(ValueError):
            DCNParams(shared, relu_head, relu_head)

    def test_dict_round_trip(self):
        params = small_dcn(1)
        clone = DCNParams.from_dict(params.to_dict())
        x = np.random.default_rng(2).normal(size=(5, 3))
        np.testing.assert_array_equal(
            predict_deterministic(params, x)[2], predict_deterministic(clone, x)[2]
        )

    def test_copy_is_independent(self):
        params = small_dcn(1)
        clone = params.copy()
        clone.shared.layers[0].W[0, 0] += 1.0
        assert params.shared.layers[0].W[0, 0] != clone.shared.layers[0].W[0, 0]


class TestForward:
    def test_zero_net_outputs_zero(self):
        y0, y1 = dcn_forward(zero_dcn(), np.array([1.0, -2.0, 3.0]))
        assert y0 == 0.0 and y1 == 0.0

    def test_identical_heads_agree_for_any_shared_mask(self):
        params = small_dcn(3)
        params.head1 = params.head0.copy()
        rng = np.random.default_rng(4)
        masks = sample_masks(0.5, params.mask_widths(), rng)
        x = rng.normal(size=3)
        y0, y1 = dcn_forward(params, x, masks)
        assert y0 == y1

    def test_all_ones_masks_equal_maskless(self):
        params = small_dcn(5)
        x = np.random.default_rng(6).normal(size=(4, 3))
        masks = sample_masks(1.0, params.mask_widths(), np.random.default_rng(7))
        with_mask = dcn_forward(params, x, masks)
        bare = dcn_forward(params, x)
        np.testing.assert_array_equal(with_mask[0], bare[0])
        np.testing.assert_array_equal(with_mask[1], bare[1])

    def test_both_equals_two_single_head_calls(self):
        params = small_dcn(8, heads=(4,))
        rng = np.random.default_rng(9)
        masks = sample_masks(0.6, params.mask_widths(), rng)
        x = rng.normal(size=(6, 3))
        y0, y1 = dcn_forward(params, x, masks)
        np.testing.assert_array_equal(y0, dcn_forward(params, x, masks, head=0))
        np.testing.assert_array_equal(y1, dcn_forward(params, x, masks, head=1))

    def test_single_vector_matches_batch_row(self):
        params = small_dcn(10)
        X = np.random.default_rng(11).normal(size=(3, 3))
        batch0, batch1 = dcn_forward(params, X)
        s0, s1 = dcn_forward(params, X[1])
        assert (s0, s1) == (batch0[1], batch1[1])

    def test_bad_head_argument(self):
        with pytest.raises(ValueError):
            dcn_forward(small_dcn(), np.zeros(3), head=2)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            dcn_forward(small_dcn(), np.zeros(4))


class TestPredictDeterministic:
    def test_zero_net(self):
        assert predict_deterministic(zero_dcn(), np.ones(3)) == (0.0, 0.0, 0.0)

    def test_bias_offset_between_heads(self):
        params = zero_dcn()
        params.head1.layers[-1].b[0] = 1.75
        for x in np.random.default_rng(12).normal(size=(5, 3)):
            y0, y1, ite = predict_deterministic(params, x)
            assert ite == 1.75 and y1 - y0 == 1.75

    def test_batch_shape(self):
        y0, y1, ite = predict_deterministic(small_dcn(), np.zeros((7, 3)))
        assert y0.shape == y1.shape == ite.shape == (7,)


class TestSampleMasks:
    def test_keep_one_gives_all_ones(self):
        masks = sample_masks(1.0, ([5, 6], [4], []), np.random.default_rng(0))
        for m in masks.shared.masks + masks.head0.masks:
            np.testing.assert_array_equal(m, np.ones_like(m))
        assert masks.head1.masks == []

    def test_keep_zero_rejected(self):
        with pytest.raises(ValueError):
            sample_masks(0.0, ([5], [], []), np.random.default_rng(0))

    def test_binomial_concentration(self):
        masks = sample_masks(0.5, ([10_000], [], []), np.random.default_rng(1))
        frac = masks.shared.masks[0].mean()
        assert 0.48 <= frac <= 0.52

    def test_same_seed_same_masks(self):
        a = sample_masks(0.7, ([8, 8], [3], [3]), np.random.default_rng(2))
        b = sample_masks(0.7, ([8, 8], [3], [3]), np.random.default_rng(2))
        for ma, mb in zip(a.shared.masks, b.shared.masks):
            np.testing.assert_array_equal(ma, mb)
        np.testing.assert_array_equal(a.head0.masks[0], b.head0.masks[0])
        np.testing.assert_array_equal(a.head1.masks[0], b.head1.masks[0])

    def test_stored_keep_prob(self):
        masks = sample_masks(0.35, ([4], [], []), np.random.default_rng(3))
        assert masks.shared.keep_prob == 0.35

    def test_head_masks_drawn_independently(self):
        masks = sample_masks(0.5, ([4], [1000], [1000]), np.random.default_rng(4))
        assert not np.array_equal(masks.head0.masks[0], masks.head1.masks[0])


class TestEstimateIte:
    def test_balanced_subject_has_zero_spread(self):
        # p = 0.5, gamma = 1 means dropout probability exactly 0
        params = small_dcn(13)
        prop = stub_propensity(0.0)
        est = estimate_ite(
            params, prop, DropoutSchedule(1.0), np.ones(3), 50, np.random.default_rng(14)
        )
        assert est.std == 0.0
        assert np.all(est.samples == est.samples[0])
        assert est.quantiles == (est.mean, est.mean)
        _, _, ite = predict_deterministic(params, np.ones(3))
        assert est.mean == ite

    def test_single_sample_convention(self):
        params = small_dcn(15)
        prop = stub_propensity(2.0)
        est = estimate_ite(
            params, prop, DropoutSchedule(1.0), np.ones(3), 1, np.random.default_rng(16)
        )
        assert est.std == 0.0 and len(est.samples) == 1 and est.mean == est.samples[0]

    def test_identical_heads_with_shared_head_mask_give_zero(self):
        params = small_dcn(17, heads=(5,))
        params.head1 = params.head0.copy()
        rng = np.random.default_rng(18)
        x = rng.normal(size=3)
        for _ in range(20):
            masks = sample_masks(0.5, params.mask_widths(), rng)
            forced = DcnMasks(masks.shared, masks.head0, masks.head0)  # inject
            y0, y1 = dcn_forward(params, x, forced)
            assert y1 - y0 == 0.0

    def test_deterministic_given_seed(self):
        params = small_dcn(19)
        prop = stub_propensity(1.5)
        args = (params, prop, DropoutSchedule(1.0), np.ones(3), 40)
        a = estimate_ite(*args, np.random.default_rng(20))
        b = estimate_ite(*args, np.random.default_rng(20))
        np.testing.assert_array_equal(a.samples, b.samples)
        assert (a.mean, a.std, a.quantiles) == (b.mean, b.std, b.quantiles)

    def test_uncertainty_tracks_schedule_not_luck(self):
        # extreme propensity drops harder than balanced, by Eq.-style monotonicity
        sched = DropoutSchedule(1.0)
        from dcnpd.propensity import dropout_probability, predict_propensity

        balanced, extreme = stub_propensity(0.0), stub_propensity(4.0)
        x = np.zeros(3)
        assert dropout_probability(predict_propensity(extreme, x), sched) > (
            dropout_probability(predict_propensity(balanced, x), sched)
        )

    def test_mc_mean_is_stable_at_large_m(self):
        params = small_dcn(21, shared=(16, 16))
        prop = stub_propensity(3.0)  # keep prob well below 1
        sched = DropoutSchedule(1.0)
        x = np.ones(3)
        m = 10_000
        a = estimate_ite(params, prop, sched, x, m, np.random.default_rng(22))
        b = estimate_ite(params, prop, sched, x, m, np.random.default_rng(23))
        assert abs(a.mean - b.mean) < 3.0 * a.std / np.sqrt(m)

    def test_quantiles_ordered_and_bracket_mean_band(self):
        params = small_dcn(24)
        est = estimate_ite(
            params,
            stub_propensity(2.5),
            DropoutSchedule(1.0),
            np.ones(3),
            200,
            np.random.default_rng(25),
        )
        lo, hi = est.quantiles
        assert lo <= hi
        assert lo <= est.mean <= hi

    def test_input_validation(self):
        params = small_dcn()
        prop = stub_propensity(0.0)
        with pytest.raises(ValueError):
            estimate_ite(params, prop, DropoutSchedule(1.0), np.ones((2, 3)))
        with pytest.raises(ValueError):
            estimate_ite(params, prop, DropoutSchedule(1.0), np.ones(3), 0)

    @given(st.integers(0, 10_000))
    @settings(max_examples=15, deadline=None)
    def test_mean_matches_sample_mean(self, seed):
        params = small_dcn(26)
        est = estimate_ite(
            params,
            stub_propensity(2.0),
            DropoutSchedule(1.0),
            np.ones(3),
            30,
            np.random.default_rng(seed),
        )
        assert est.mean == float(np.mean(est.samples))
        assert est.y1_mean - est.y0_mean == pytest.approx(est.mean, abs=1e-12)


class TestMcMatrix:
    def test_shape_and_determinism(self):
        params = small_dcn(27)
        prop = stub_propensity(1.0)
        X = np.random.default_rng(28).normal(size=(6, 3))
        a = mc_ite_matrix(params, prop, DropoutSchedule(1.0), X, 25, np.random.default_rng(29))
        b = mc_ite_matrix(params, prop, DropoutSchedule(1.0), X, 25, np.random.default_rng(29))
        assert a.shape == (6, 25)
        np.testing.assert_array_equal(a, b)

    def test_balanced_rows_are_constant(self):
        params = small_dcn(30)
        prop = stub_propensity(0.0)  # keep prob exactly 1 everywhere
        X = np.random.default_rng(31).normal(size=(4, 3))
        samples = mc_ite_matrix(params, prop, DropoutSchedule(1.0), X, 10, np.random.default_rng(32))
        _, _, ite = predict_deterministic(params, X)
        np.testing.assert_array_equal(samples, np.repeat(ite[:, None], 10, axis=1))

    def test_rejects_flat_input(self):
        with pytest.raises(ValueError):
            mc_ite_matrix(
                small_dcn(),
                stub_propensity(0.0),
                DropoutSchedule(1.0),
                np.ones(3),
                5,
                np.random.default_rng(0),
            )
