import math

import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from foleygen.errors import ModelError
from foleygen.prior import (
    FramePriorNetwork,
    PriorEncoder,
    SelfAttentivePooling,
    batch_stat_loss,
    build_condition,
    inference_style,
    sample_gaussian,
)


class TestSelfAttentivePooling:
    def test_weights_sum_to_one(self):
        torch.manual_seed(0)
        sap = SelfAttentivePooling(16)
        with torch.no_grad():
            sap.score.weight.normal_(0, 1)
        values = torch.randn(3, 16, 25)
        _, weights = sap(values)
        assert torch.allclose(weights.sum(dim=-1), torch.ones(3), atol=1e-6)

    def test_constant_input_returns_the_constant_exactly(self):
        sap = SelfAttentivePooling(8)
        v0 = torch.randn(1, 8, 1)
        values = v0.expand(1, 8, 2).contiguous()  # two identical frames
        pooled, _ = sap(values)
        assert torch.equal(pooled, v0.squeeze(-1))

    def test_constant_input_longer_sequence(self):
        torch.manual_seed(1)
        sap = SelfAttentivePooling(8)
        with torch.no_grad():
            sap.score.weight.normal_(0, 0.5)
        v0 = torch.randn(2, 8, 1)
        values = v0.expand(2, 8, 344).contiguous()
        pooled, _ = sap(values)
        assert torch.allclose(pooled, v0.squeeze(-1), atol=1e-5)

    def test_zero_scores_give_uniform_average(self):
        sap = SelfAttentivePooling(4)  # score head zero-initialized
        a = torch.tensor([1.0, 2.0, 3.0, 4.0])
        b = torch.tensor([5.0, 6.0, 7.0, 8.0])
        values = torch.stack([a, b], dim=-1).unsqueeze(0)
        pooled, weights = sap(values)
        assert torch.allclose(weights, torch.full((1, 2), 0.5))
        assert torch.allclose(pooled.squeeze(0), (a + b) / 2)

    def test_queries_drive_attention(self):
        torch.manual_seed(2)
        sap = SelfAttentivePooling(4)
        with torch.no_grad():
            sap.score.weight.normal_(0, 2.0)
        values = torch.randn(1, 4, 9)
        q1 = torch.randn(1, 4, 9)
        q2 = torch.randn(1, 4, 9)
        p1, _ = sap(values, queries=q1)
        p2, _ = sap(values, queries=q2)
        assert not torch.allclose(p1, p2)

    def test_output_in_convex_hull_of_columns(self):
        torch.manual_seed(3)
        sap = SelfAttentivePooling(6)
        with torch.no_grad():
            sap.score.weight.normal_(0, 1)
        values = torch.randn(2, 6, 15)
        pooled, _ = sap(values)
        lo = values.min(dim=-1).values
        hi = values.max(dim=-1).values
        assert torch.all(pooled >= lo - 1e-6)
        assert torch.all(pooled <= hi + 1e-6)

    def test_nonfinite_rejected(self):
        sap = SelfAttentivePooling(4)
        bad = torch.full((1, 4, 3), float("nan"))
        with pytest.raises(ModelError):
            sap(bad)


class TestBatchStatLoss:
    def test_standardized_batch_scores_zero(self):
        # per dimension: values {-1, +1} -> mean 0, population std 1
        batch = torch.tensor([[-1.0] * 5, [1.0] * 5])
        assert batch_stat_loss(batch).item() == pytest.approx(0.0, abs=1e-12)

    def test_all_zero_batch_scores_one(self):
        batch = torch.zeros(4, 192)
        assert batch_stat_loss(batch).item() == pytest.approx(1.0)

    def test_scalar_pair_hand_case(self):
        batch = torch.tensor([[-1.0], [1.0]])
        assert batch_stat_loss(batch).item() == pytest.approx(0.0, abs=1e-12)

    def test_single_vector_rejected(self):
        with pytest.raises(ModelError, match="at least 2"):
            batch_stat_loss(torch.zeros(1, 8))

    def test_permutation_invariance(self):
        torch.manual_seed(4)
        batch = torch.randn(6, 12)
        perm = batch[torch.randperm(6)]
        assert batch_stat_loss(batch).item() == pytest.approx(
            batch_stat_loss(perm).item(), rel=1e-6
        )

    @given(st.integers(min_value=2, max_value=8), st.integers(min_value=1, max_value=6))
    @settings(max_examples=30, deadline=None)
    def test_nonnegative(self, b, d):
        g = torch.Generator().manual_seed(b * 31 + d)
        batch = torch.randn(b, d, generator=g)
        assert batch_stat_loss(batch).item() >= 0.0


class TestBuildCondition:
    def test_zero_pos_and_style_expand_category(self):
        g_c = torch.randn(2, 8)
        pos = torch.zeros(8, 11)
        style = torch.zeros(2, 8)
        grid = build_condition(g_c, pos, style)
        assert grid.shape == (2, 8, 11)
        for t in range(11):
            assert torch.equal(grid[:, :, t], g_c)

    def test_zero_category_and_style_give_positional(self):
        pos = torch.randn(8, 11)
        grid = build_condition(torch.zeros(1, 8), pos, torch.zeros(1, 8))
        assert torch.equal(grid.squeeze(0), pos)

    def test_elementwise_sum_at_endpoints(self):
        torch.manual_seed(5)
        g_c = torch.randn(1, 8)
        pos = torch.randn(8, 344)
        style = torch.randn(1, 8)
        grid = build_condition(g_c, pos, style)
        for t in (0, 343):
            assert torch.allclose(grid[0, :, t], g_c[0] + pos[:, t] + style[0])

    def test_linearity_in_each_input(self):
        torch.manual_seed(6)
        g_c, pos, style = torch.randn(1, 4), torch.randn(4, 5), torch.randn(1, 4)
        base = build_condition(g_c, pos, style)
        doubled = build_condition(2 * g_c, pos, style)
        assert torch.allclose(doubled - base, build_condition(g_c, torch.zeros(4, 5), torch.zeros(1, 4)))


class TestFramePriorNetwork:
    def test_full_width_output_shapes(self):
        torch.manual_seed(0)
        fpn = FramePriorNetwork(192, kernel=35, layers=6)
        mu, log_std = fpn(torch.randn(1, 192, 344))
        assert mu.shape == log_std.shape == (1, 192, 344)
        assert fpn.receptive_field == 6 * 34 + 1 == 205

    def test_zero_initialized_head_gives_standard_prior(self):
        torch.manual_seed(0)
        fpn = FramePriorNetwork(16, kernel=11, layers=3)
        mu, log_std = fpn(torch.randn(2, 16, 40))
        assert torch.all(mu == 0)
        assert torch.all(log_std == 0)  # sigma = exp(0) = 1

    def test_receptive_field_reach(self):
        torch.manual_seed(1)
        fpn = FramePriorNetwork(192, kernel=35, layers=6)
        with torch.no_grad():
            fpn.out.weight.normal_(0, 0.1)  # non-degenerate head
        base = torch.randn(1, 192, 344)
        poked = base.clone()
        poked[0, :, 0] += 1.0
        mu_a, _ = fpn(base)
        mu_b, _ = fpn(poked)
        diff = (mu_a - mu_b).abs().sum(dim=1).squeeze(0)
        reach = 6 * (35 // 2)  # one-sided reach of the conv stack
        assert diff[:reach - 5].max() > 0
        assert torch.all(diff[reach + 1 :] == 0)

    def test_time_shift_covariance_away_from_boundaries(self):
        torch.manual_seed(2)
        fpn = FramePriorNetwork(8, kernel=11, layers=3)
        with torch.no_grad():
            fpn.out.weight.normal_(0, 0.1)
        reach = 3 * 5
        grid = torch.randn(1, 8, 80)
        shift = 4
        rolled = torch.roll(grid, shifts=shift, dims=-1)
        mu_a, _ = fpn(grid)
        mu_b, _ = fpn(rolled)
        unrolled = torch.roll(mu_b, shifts=-shift, dims=-1)
        margin = reach + shift
        assert torch.allclose(
            mu_a[..., margin:-margin], unrolled[..., margin:-margin], atol=1e-5
        )

    def test_nonfinite_rejected(self):
        fpn = FramePriorNetwork(4, kernel=3, layers=1)
        with pytest.raises(ModelError):
            fpn(torch.full((1, 4, 5), float("inf")))


class TestSampling:
    def test_zero_noise_scale_returns_mean_exactly(self):
        mean = torch.randn(4, 7)
        log_std = torch.randn(4, 7)
        z = sample_gaussian(mean, log_std, 0.0, seed=0)
        assert torch.equal(z, mean)

    def test_seeded_draws_are_deterministic(self):
        mean = torch.zeros(3, 5)
        log_std = torch.zeros(3, 5)
        a = sample_gaussian(mean, log_std, 1.0, seed=11)
        b = sample_gaussian(mean, log_std, 1.0, seed=11)
        c = sample_gaussian(mean, log_std, 1.0, seed=12)
        assert torch.equal(a, b)
        assert not torch.equal(a, c)

    def test_unit_scale_empirical_std(self):
        mean = torch.zeros(192, 344)
        log_std = torch.zeros(192, 344)
        z = sample_gaussian(mean, log_std, 1.0, seed=3)
        assert 0.98 < z.std().item() < 1.02

    def test_negative_scale_rejected(self):
        with pytest.raises(ModelError, match="noise_scale"):
            sample_gaussian(torch.zeros(2, 2), torch.zeros(2, 2), -0.1, seed=0)

    def test_inference_style_determinism_and_stats(self):
        a = inference_style(192, seed=5)
        b = inference_style(192, seed=5)
        c = inference_style(192, seed=6)
        assert torch.equal(a, b)
        assert not torch.equal(a, c)
        draws = torch.stack([inference_style(192, seed=s) for s in range(100)])
        assert abs(draws.mean().item()) < 0.05


class TestPriorEncoder:
    def test_condition_and_stats_shapes(self):
        torch.manual_seed(0)
        prior = PriorEncoder(8, frames=31, kernel=11, layers=3)
        g_c = torch.randn(2, 8)
        style = torch.randn(2, 8)
        grid = prior.condition(g_c, style)
        assert grid.shape == (2, 8, 31)
        mu, log_std = prior(g_c, style)
        assert mu.shape == log_std.shape == (2, 8, 31)
