"""Forward noising process, training objective and conditional sampler.

Timesteps are internal indices 0..T-1 (0 = least noisy). The reverse
update subtracts the predicted noise scaled by (1-alpha_t)/sqrt(1-abar_t),
divides by sqrt(alpha_t), and adds sigma_t * z outside that factor; no
noise is added on the final step.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .fields import Field
from .nn import Adam, cosine_lr
from .rng import normal
from .schedule import NoiseSchedule


def _as_array(x):
    return x.data if isinstance(x, Field) else np.asarray(x, dtype=np.float32)


def _batch_normal(rngs, shape):
    """Noise of the given (N, ...) shape from one generator per sample."""
    if isinstance(rngs, np.random.Generator):
        return normal(rngs, shape)
    if len(rngs) != shape[0]:
        raise ValueError(f"{len(rngs)} generators for a batch of {shape[0]}")
    return np.stack([normal(r, shape[1:]) for r in rngs])


def _like(template, data):
    if isinstance(template, Field):
        return Field(template.channels, data)
    return data


def q_sample(x0, t, eps, schedule: NoiseSchedule):
    """Closed-form forward sample: sqrt(abar_t) x0 + sqrt(1-abar_t) eps.

    x0 and eps may be Fields or arrays; t may be an int or a per-sample
    integer array matching a leading batch axis.
    """
    x0a, epsa = _as_array(x0), _as_array(eps)
    if x0a.shape != epsa.shape:
        raise ValueError(f"shape mismatch: x0 {x0a.shape} vs eps {epsa.shape}")
    ab = schedule.alpha_bar[np.asarray(t)]
    ab = np.reshape(ab, np.shape(ab) + (1,) * (x0a.ndim - np.ndim(ab)))
    out = (np.sqrt(ab) * x0a + np.sqrt(1.0 - ab) * epsa).astype(np.float32)
    return _like(x0, out)


def q_step(x_prev, t: int, schedule: NoiseSchedule, rng):
    """One Markov noising step: sqrt(1-beta_t) x + sqrt(beta_t) z."""
    beta, _, _, _ = schedule.lookup(t)
    xa = _as_array(x_prev)
    z = normal(rng, xa.shape)
    out = (np.sqrt(1.0 - beta) * xa + np.sqrt(beta) * z).astype(np.float32)
    return _like(x_prev, out)


@dataclass
class TrainBatch:
    """One training step's inputs, all (N, C, H, W) float32."""

    lr_cond: np.ndarray  # conditioning channels, already at target dims
    x0: np.ndarray  # clean target channels
    t: np.ndarray  # (N,) integer timesteps
    eps: np.ndarray  # noise to inject, same shape as x0

    def __post_init__(self):
        if self.lr_cond.shape[2:] != self.x0.shape[2:]:
            raise ValueError(
                f"condition dims {self.lr_cond.shape} do not match target {self.x0.shape}"
            )
        if self.x0.shape != self.eps.shape:
            raise ValueError("eps must match the target shape")


class DiffusionProcess:
    """Couples a noise schedule with a denoiser for training and sampling."""

    def __init__(self, schedule: NoiseSchedule, denoiser, lr: float = 2e-4, total_iters: int = 10000):
        self.schedule = schedule
        self.denoiser = denoiser
        self.initial_lr = lr
        self.total_iters = total_iters
        self._optimizer = None

    @property
    def optimizer(self) -> Adam:
        # lazy so that sampling-only denoisers (e.g. test oracles) need no params
        if self._optimizer is None:
            self._optimizer = Adam(self.denoiser.params)
        return self._optimizer

    @property
    def iteration(self) -> int:
        return 0 if self._optimizer is None else self._optimizer.step_count

    def current_lr(self) -> float:
        return cosine_lr(self.initial_lr, self.total_iters, self.iteration)

    def train_step(self, batch: TrainBatch) -> float:
        """One denoising-score step: L1 on predicted noise, then Adam."""
        model = self.denoiser
        if batch.lr_cond.shape[1] != model.config.cond_channels:
            raise ValueError(
                f"batch has {batch.lr_cond.shape[1]} conditioning channels, "
                f"model expects {model.config.cond_channels}"
            )
        if batch.x0.shape[1] != model.config.target_channels:
            raise ValueError(
                f"batch has {batch.x0.shape[1]} target channels, "
                f"model expects {model.config.target_channels}"
            )
        x_t = q_sample(batch.x0, batch.t, batch.eps, self.schedule)
        inp = np.concatenate([batch.lr_cond, x_t], axis=1)
        lr = self.current_lr()
        pred = model.forward(inp, batch.t)
        loss = ad.l1_loss(pred, ad.Tensor(batch.eps))
        loss.backward()
        self.optimizer.step(lr)
        self.optimizer.zero_grad()
        return loss.item()

    def p_sample_step(self, x_t: np.ndarray, lr_cond: np.ndarray, t: int, rngs=None) -> np.ndarray:
        """One reverse step from x_t to x_{t-1}.

        No noise is added on the final step (t == 0), nor anywhere when
        rngs is None (the deterministic sigma=0 mode).
        """
        _, alpha, alpha_bar, sigma = self.schedule.lookup(t)
        tt = np.full(x_t.shape[0], t, dtype=np.int64)
        eps_pred = self.denoiser.predict_noise(lr_cond, x_t, tt)
        coef = (1.0 - alpha) / np.sqrt(1.0 - alpha_bar)
        x_prev = (x_t - np.float32(coef) * eps_pred) / np.float32(np.sqrt(alpha))
        if t > 0 and rngs is not None:
            x_prev = x_prev + np.float32(sigma) * _batch_normal(rngs, x_t.shape)
        return x_prev.astype(np.float32)

    def sample(self, lr_cond_hr: np.ndarray, rngs=None, target_channels: int = None,
               x_init: np.ndarray = None) -> np.ndarray:
        """Full reverse chain from pure noise, conditioned at every step.

        lr_cond_hr: conditioning already upsampled to output dims,
        (N, C, H, W). rngs is one generator per sample (so results do not
        depend on batching) or a single shared generator; None runs the
        deterministic sigma=0 chain, which then needs x_init. Returns
        (N, target_channels, H, W) in the normalized units the model was
        trained in.
        """
        n, _, h, w = lr_cond_hr.shape
        ct = target_channels
        if ct is None:
            ct = self.denoiser.config.target_channels
        if x_init is not None:
            x = x_init.astype(np.float32)
        elif rngs is not None:
            x = _batch_normal(rngs, (n, ct, h, w))
        else:
            raise ValueError("deterministic sampling needs an explicit x_init")
        for t in range(self.schedule.timesteps - 1, -1, -1):
            x = self.p_sample_step(x, lr_cond_hr, t, rngs)
        return x
