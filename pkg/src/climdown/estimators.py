"""Scikit-learn style downscaling estimators.

All estimators follow the fit/predict convention on lists of Fields:
fit(X, y) takes raw-unit low-resolution inputs X and high-resolution
targets y, learns normalization statistics from y and trains the model;
predict(X) returns high-resolution fields in raw units. The
interpolation upscalers are stateless (fit is a no-op) and also expose
transform() for pipeline use.
"""

import numpy as np
from sklearn.base import BaseEstimator

from . import autodiff as ad
from .datagen import (
    compute_stats,
    denormalize_array,
    normalize_field,
    upsample_condition_array,
)
from .diffusion import DiffusionProcess, TrainBatch
from .fields import Field, TARGET_CHANNEL, stack_fields
from .nn import Adam, cosine_lr
from .rng import TAG_SAMPLE, TAG_TRAIN, normal, substream
from .resample import bicubic_upscale, bilinear_upscale
from .schedule import linear_schedule
from .srresnet import SRResNet
from .unet import DenoiserConfig, UNetDenoiser
from .validation import check_field_list, check_io_config, check_paired_fields, check_scale


class BilinearUpscaler(BaseEstimator):
    """Parameter-free bilinear upscaling baseline."""

    def __init__(self, scale=4):
        self.scale = scale

    def fit(self, X=None, y=None):
        check_scale(self.scale)
        return self

    def predict(self, X):
        check_scale(self.scale)
        return [bilinear_upscale(f, self.scale) for f in check_field_list(X)]

    def transform(self, X):
        return self.predict(X)


class BicubicUpscaler(BaseEstimator):
    """Parameter-free bicubic (Catmull-Rom) upscaling baseline."""

    def __init__(self, scale=4):
        self.scale = scale

    def fit(self, X=None, y=None):
        check_scale(self.scale)
        return self

    def predict(self, X):
        check_scale(self.scale)
        return [bicubic_upscale(f, self.scale) for f in check_field_list(X)]

    def transform(self, X):
        return self.predict(X)


def training_batches(n_samples, batch_size, seed, start_iter, iters, timesteps=None,
                     noise_shape=None):
    """Per-iteration RNG-derived batch plans.

    Each iteration draws from its own substream keyed by (seed, iter), so
    resuming at any iteration reproduces the uninterrupted run exactly.
    Yields (it, idx) or (it, idx, t, eps) when timesteps is given.
    """
    for it in range(start_iter, iters):
        rs = substream(seed, TAG_TRAIN, it)
        idx = rs.integers(0, n_samples, size=batch_size)
        if timesteps is None:
            yield it, idx
        else:
            t = rs.integers(0, timesteps, size=batch_size)
            eps = normal(rs, (batch_size,) + noise_shape)
            yield it, idx, t, eps


def train_regression(model, cond, target, iters, batch_size, lr, seed,
                     start_iter=0, optimizer=None, on_iter=None):
    """L1-regression training loop shared by the U-Net and SRResNet baselines."""
    opt = optimizer or Adam(model.params)
    log = []
    n = cond.shape[0]
    for it, idx in training_batches(n, batch_size, seed, start_iter, iters):
        pred = model.forward(cond[idx])
        loss = ad.l1_loss(pred, ad.Tensor(target[idx]))
        loss.backward()
        step_lr = cosine_lr(lr, iters, it)
        opt.step(step_lr)
        opt.zero_grad()
        log.append((it, loss.item(), step_lr))
        if on_iter:
            on_iter(it, loss.item(), step_lr)
    return opt, log


def train_diffusion(process, cond, target, iters, batch_size, seed,
                    start_iter=0, on_iter=None):
    """Noise-prediction training loop for the conditional diffusion model."""
    log = []
    n = cond.shape[0]
    timesteps = process.schedule.timesteps
    noise_shape = target.shape[1:]
    for it, idx, t, eps in training_batches(
        n, batch_size, seed, start_iter, iters, timesteps, noise_shape
    ):
        step_lr = process.current_lr()
        loss = process.train_step(TrainBatch(cond[idx], target[idx], t, eps))
        log.append((it, loss, step_lr))
        if on_iter:
            on_iter(it, loss, step_lr)
    return log


class _NeuralDownscaler(BaseEstimator):
    """Shared fit machinery: stats from y, z-score, upsampled conditioning."""

    def _prepare(self, X, y):
        check_scale(self.scale)
        X, y = check_paired_fields(X, y, self.scale)
        self.channels_ = y[0].channels
        self.target_names_ = check_io_config(
            self.io_config, self.channels_, TARGET_CHANNEL
        )
        self.stats_ = compute_stats(y)
        self.hr_size_ = (y[0].height, y[0].width)
        hr = stack_fields([normalize_field(f, self.stats_) for f in y])
        lr = stack_fields([normalize_field(f, self.stats_) for f in X])
        cond = upsample_condition_array(lr, *self.hr_size_)
        tgt_idx = [self.channels_.index(c) for c in self.target_names_]
        return cond.astype(np.float32), hr[:, tgt_idx].astype(np.float32)

    def _check_predict_input(self, X):
        if not hasattr(self, "stats_"):
            raise RuntimeError("estimator is not fitted")
        X = check_field_list(X)
        if X[0].channels != self.channels_:
            raise ValueError(
                f"channels {X[0].channels} differ from training {self.channels_}"
            )
        lr = stack_fields([normalize_field(f, self.stats_) for f in X])
        out_h, out_w = X[0].height * self.scale, X[0].width * self.scale
        return upsample_condition_array(lr, out_h, out_w).astype(np.float32)

    def _emit(self, pred_normalized):
        raw = denormalize_array(pred_normalized, self.target_names_, self.stats_)
        return [Field(self.target_names_, raw[i]) for i in range(raw.shape[0])]


class UNetDownscaler(_NeuralDownscaler):
    """Direct LR->HR regression with the U-Net trunk (no time embedding)."""

    def __init__(self, scale=4, io_config="3in1out", base_width=32,
                 level_multipliers=(1, 1, 2, 2, 4), blocks_per_level=2,
                 iters=2000, batch_size=8, lr=2e-4, seed=0):
        self.scale = scale
        self.io_config = io_config
        self.base_width = base_width
        self.level_multipliers = level_multipliers
        self.blocks_per_level = blocks_per_level
        self.iters = iters
        self.batch_size = batch_size
        self.lr = lr
        self.seed = seed

    def _build(self, cond_channels, target_channels):
        cfg = DenoiserConfig(
            cond_channels=cond_channels,
            target_channels=target_channels,
            base_width=self.base_width,
            level_multipliers=tuple(self.level_multipliers),
            blocks_per_level=self.blocks_per_level,
        )
        return UNetDenoiser(cfg, init_seed=self.seed, time_conditioned=False)

    def fit(self, X, y):
        cond, target = self._prepare(X, y)
        self.model_ = self._build(cond.shape[1], target.shape[1])
        _, self.loss_log_ = train_regression(
            self.model_, cond, target, self.iters, self.batch_size, self.lr, self.seed
        )
        return self

    def predict(self, X):
        cond = self._check_predict_input(X)
        with ad.no_grad():
            pred = self.model_.forward(cond).data
        return self._emit(pred)


class SRResNetDownscaler(UNetDownscaler):
    """Direct LR->HR regression with the SRResNet-like trunk."""

    def __init__(self, scale=4, io_config="3in1out", width=64, n_blocks=8,
                 iters=2000, batch_size=8, lr=2e-4, seed=0):
        self.scale = scale
        self.io_config = io_config
        self.width = width
        self.n_blocks = n_blocks
        self.iters = iters
        self.batch_size = batch_size
        self.lr = lr
        self.seed = seed

    def _build(self, cond_channels, target_channels):
        return SRResNet(
            in_channels=cond_channels,
            out_channels=target_channels,
            width=self.width,
            n_blocks=self.n_blocks,
            init_seed=self.seed,
        )


class DiffusionDownscaler(_NeuralDownscaler):
    """Conditional denoising-diffusion downscaler.

    fit() trains the noise predictor on (upsampled LR condition, HR
    target) pairs; predict() runs the full reverse chain per input,
    seeded per sample, and returns denormalized target fields.
    """

    def __init__(self, scale=4, io_config="3in1out", timesteps=100,
                 beta_start=1e-4, beta_end=0.02, base_width=32,
                 level_multipliers=(1, 1, 2, 2, 4), blocks_per_level=2,
                 time_embed_dim=128, iters=2000, batch_size=8, lr=2e-4, seed=0):
        self.scale = scale
        self.io_config = io_config
        self.timesteps = timesteps
        self.beta_start = beta_start
        self.beta_end = beta_end
        self.base_width = base_width
        self.level_multipliers = level_multipliers
        self.blocks_per_level = blocks_per_level
        self.time_embed_dim = time_embed_dim
        self.iters = iters
        self.batch_size = batch_size
        self.lr = lr
        self.seed = seed

    def _build_process(self, cond_channels, target_channels):
        cfg = DenoiserConfig(
            cond_channels=cond_channels,
            target_channels=target_channels,
            base_width=self.base_width,
            level_multipliers=tuple(self.level_multipliers),
            blocks_per_level=self.blocks_per_level,
            time_embed_dim=self.time_embed_dim,
        )
        net = UNetDenoiser(cfg, init_seed=self.seed)
        sched = linear_schedule(self.timesteps, self.beta_start, self.beta_end)
        return DiffusionProcess(sched, net, lr=self.lr, total_iters=self.iters)

    def fit(self, X, y):
        cond, target = self._prepare(X, y)
        self.process_ = self._build_process(cond.shape[1], target.shape[1])
        self.model_ = self.process_.denoiser
        self.loss_log_ = train_diffusion(
            self.process_, cond, target, self.iters, self.batch_size, self.seed
        )
        return self

    def predict(self, X, sample_seed=None, batch_size=16):
        """Sample one HR field per input; deterministic given the seed."""
        cond = self._check_predict_input(X)
        seed = self.seed if sample_seed is None else sample_seed
        outs = []
        for start in range(0, cond.shape[0], batch_size):
            chunk = cond[start : start + batch_size]
            rngs = [
                substream(seed, TAG_SAMPLE, start + i) for i in range(chunk.shape[0])
            ]
            outs.append(self.process_.sample(chunk, rngs))
        return self._emit(np.concatenate(outs))
