import numpy as np
import pytest

import climdown.autodiff as ad
from climdown.diffusion import DiffusionProcess, TrainBatch
from climdown.fields import Field
from climdown.schedule import linear_schedule
from climdown.unet import DenoiserConfig, UNetDenoiser, concat_condition, parameter_count

SMALL = dict(base_width=16, level_multipliers=(1, 1, 2), blocks_per_level=1,
             time_embed_dim=16)


class TestConfig:
    def test_defaults_match_full_size_network(self):
        cfg = DenoiserConfig()
        assert cfg.base_width == 128
        assert cfg.level_multipliers == (1, 1, 2, 2, 4)
        assert cfg.n_levels == 5
        assert cfg.blocks_per_level == 2
        assert cfg.spatial_divisor == 16

    def test_in_channels(self):
        assert DenoiserConfig(cond_channels=3, target_channels=1).in_channels == 4
        cfg3 = DenoiserConfig(cond_channels=3, target_channels=3)
        assert cfg3.in_channels == 6

    def test_invalid_configs_rejected(self):
        with pytest.raises(ValueError):
            DenoiserConfig(cond_channels=0)
        with pytest.raises(ValueError):
            DenoiserConfig(target_channels=0)
        with pytest.raises(ValueError):
            DenoiserConfig(level_multipliers=())
        with pytest.raises(ValueError):
            DenoiserConfig(base_width=12)  # 12 >= 8 and not divisible by 8


class TestBuild:
    def test_first_conv_in_channels_3in1out(self):
        net = UNetDenoiser(DenoiserConfig(cond_channels=3, target_channels=1, **SMALL))
        assert net.stem.weight.data.shape[2] == 4

    def test_3in3out_channel_counts(self):
        net = UNetDenoiser(DenoiserConfig(cond_channels=3, target_channels=3, **SMALL))
        assert net.stem.weight.data.shape[2] == 6
        assert net.head_conv.weight.data.shape[3] == 3

    def test_same_seed_identical_bytes(self):
        cfg = DenoiserConfig(cond_channels=3, target_channels=1, **SMALL)
        a = UNetDenoiser(cfg, init_seed=7)
        b = UNetDenoiser(cfg, init_seed=7)
        for (ka, ta), (kb, tb) in zip(a.params.items(), b.params.items()):
            assert ka == kb
            assert ta.data.tobytes() == tb.data.tobytes()

    def test_different_seed_differs(self):
        cfg = DenoiserConfig(cond_channels=3, target_channels=1, **SMALL)
        a = UNetDenoiser(cfg, init_seed=7)
        b = UNetDenoiser(cfg, init_seed=8)
        assert a.stem.weight.data.tobytes() != b.stem.weight.data.tobytes()

    @pytest.mark.parametrize("target", [1, 3])
    def test_parameter_count_closed_form(self, target):
        cfg = DenoiserConfig(cond_channels=3, target_channels=target, **SMALL)
        net = UNetDenoiser(cfg)
        assert net.params.n_parameters() == parameter_count(cfg)

    def test_io_config_count_delta_is_first_and_last_conv(self):
        cfg1 = DenoiserConfig(cond_channels=3, target_channels=1, **SMALL)
        cfg3 = DenoiserConfig(cond_channels=3, target_channels=3, **SMALL)
        w0 = SMALL["base_width"]
        # 3in3out adds 2 input channels to the stem and 2 output channels
        # to the head conv
        delta = (6 - 4) * w0 * 9 + (3 - 1) * (w0 * 9 + 1)
        assert parameter_count(cfg3) - parameter_count(cfg1) == delta

    def test_regression_variant_has_no_time_params(self):
        cfg = DenoiserConfig(cond_channels=3, target_channels=1, **SMALL)
        net = UNetDenoiser(cfg, time_conditioned=False)
        assert not any(k.startswith("time.") or ".emb." in k for k in net.params.names())
        assert net.params.n_parameters() == parameter_count(cfg, time_conditioned=False)
        assert net.in_channels == 3


class TestForward:
    def test_output_shape(self):
        cfg = DenoiserConfig(cond_channels=3, target_channels=1,
                             base_width=16, level_multipliers=(1, 1, 2, 2, 4),
                             blocks_per_level=1, time_embed_dim=16)
        net = UNetDenoiser(cfg)
        x = np.random.default_rng(0).random((2, 4, 48, 48)).astype(np.float32)
        out = net.forward(x, np.array([0, 99]))
        assert out.shape == (2, 1, 48, 48)

    def test_zero_init_head_gives_zero_output(self):
        cfg = DenoiserConfig(cond_channels=3, target_channels=1, **SMALL)
        net = UNetDenoiser(cfg, init_seed=3)
        x = np.random.default_rng(1).random((1, 4, 8, 8)).astype(np.float32)
        out = net.forward(x, np.array([5]))
        assert np.all(out.data == 0.0)

    @pytest.mark.parametrize("size", [16, 32, 48, 64])
    def test_shape_invariance_over_sizes(self, size):
        cfg = DenoiserConfig(cond_channels=2, target_channels=1,
                             base_width=8, level_multipliers=(1, 1, 2, 2, 4),
                             blocks_per_level=1, time_embed_dim=8)
        net = UNetDenoiser(cfg)
        x = np.zeros((1, 3, size, size), np.float32)
        assert net.forward(x, np.array([1])).shape == (1, 1, size, size)

    def test_indivisible_size_rejected(self):
        cfg = DenoiserConfig(cond_channels=3, target_channels=1, **SMALL)
        net = UNetDenoiser(cfg)
        with pytest.raises(ValueError, match="divisible"):
            net.forward(np.zeros((1, 4, 10, 10), np.float32), np.array([0]))

    def test_wrong_channel_count_rejected(self):
        cfg = DenoiserConfig(cond_channels=3, target_channels=1, **SMALL)
        net = UNetDenoiser(cfg)
        with pytest.raises(ValueError, match="channels"):
            net.forward(np.zeros((1, 3, 8, 8), np.float32), np.array([0]))

    def test_finite_outputs_after_training_step(self):
        cfg = DenoiserConfig(cond_channels=3, target_channels=1, **SMALL)
        net = UNetDenoiser(cfg, init_seed=0)
        proc = DiffusionProcess(linear_schedule(10), net, lr=1e-3, total_iters=10)
        rng = np.random.default_rng(0)
        batch = TrainBatch(
            rng.random((2, 3, 8, 8)).astype(np.float32),
            rng.random((2, 1, 8, 8)).astype(np.float32),
            np.array([1, 5]),
            rng.standard_normal((2, 1, 8, 8)).astype(np.float32),
        )
        proc.train_step(batch)
        out = net.forward(rng.random((1, 4, 8, 8)).astype(np.float32), np.array([3]))
        assert np.all(np.isfinite(out.data))

    def test_timestep_changes_output_after_a_few_steps(self):
        cfg = DenoiserConfig(cond_channels=3, target_channels=1, **SMALL)
        net = UNetDenoiser(cfg, init_seed=0)
        proc = DiffusionProcess(linear_schedule(100), net, lr=1e-2, total_iters=20)
        rng = np.random.default_rng(0)
        for _ in range(5):
            batch = TrainBatch(
                rng.random((2, 3, 8, 8)).astype(np.float32),
                rng.random((2, 1, 8, 8)).astype(np.float32),
                rng.integers(0, 100, 2),
                rng.standard_normal((2, 1, 8, 8)).astype(np.float32),
            )
            proc.train_step(batch)
        x = rng.random((1, 4, 8, 8)).astype(np.float32)
        with ad.no_grad():
            a = net.forward(x, np.array([0])).data
            b = net.forward(x, np.array([99])).data
        assert not np.allclose(a, b)

    def test_gradient_reaches_every_parameter_after_warmup(self):
        # identity-at-init gating switches on progressively: the zero head
        # gets gradients first, then the zeroed norm gains, then everything
        # else; after three steps a fresh backward reaches every parameter
        cfg = DenoiserConfig(cond_channels=3, target_channels=1, **SMALL)
        net = UNetDenoiser(cfg, init_seed=1)
        proc = DiffusionProcess(linear_schedule(10), net, lr=1e-3, total_iters=10)
        rng = np.random.default_rng(2)

        def batch():
            return TrainBatch(
                rng.random((2, 3, 8, 8)).astype(np.float32),
                rng.random((2, 1, 8, 8)).astype(np.float32),
                np.array([1, 5]),
                rng.standard_normal((2, 1, 8, 8)).astype(np.float32),
            )

        for _ in range(3):
            proc.train_step(batch())
        b = batch()
        x_t = np.concatenate([b.lr_cond, b.x0], axis=1)
        loss = ad.l1_loss(net.forward(x_t, b.t), ad.Tensor(b.eps))
        loss.backward()
        dead = [k for k, t in net.params.items()
                if t.grad is None or not np.any(t.grad)]
        assert dead == []


class TestConcatCondition:
    def make(self, c, h=8, w=8, seed=0):
        rng = np.random.default_rng(seed)
        names = tuple(f"c{i}" for i in range(c))
        return Field(names, rng.random((c, h, w)).astype(np.float32))

    def test_condition_channels_first(self):
        cond, target = self.make(3, seed=1), self.make(1, seed=2)
        out = concat_condition(cond, target)
        assert out.shape == (4, 8, 8)
        assert np.array_equal(out[:3], cond.data)
        assert np.array_equal(out[3:], target.data)

    def test_slice_recovers_condition_bit_exact(self):
        cond, target = self.make(3, seed=3), self.make(2, seed=4)
        out = concat_condition(cond, target)
        assert out[:3].tobytes() == cond.data.tobytes()

    def test_spatial_mismatch_rejected(self):
        with pytest.raises(ValueError, match="spatial"):
            concat_condition(self.make(3, 8, 8), self.make(1, 4, 4))

    def test_empty_target_rejected(self):
        cond = self.make(3)
        empty = Field((), np.zeros((0, 8, 8), np.float32))
        with pytest.raises(ValueError, match="no channels"):
            concat_condition(cond, empty)
