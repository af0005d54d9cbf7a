"""Conditional U-Net noise predictor.

The network takes the upsampled low-resolution conditioning channels
concatenated with the noisy target channels, plus a timestep, and
predicts the injected noise. Encoder levels halve the spatial
resolution, decoder levels double it with skip concatenations; all
convolutions are 3x3.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .fields import Field
from .nn import Conv2d, GroupNorm, Linear, ParamStore, sinusoidal_embedding
from .rng import TAG_INIT, substream


@dataclass
class DenoiserConfig:
    """Architecture hyperparameters.

    Defaults describe the full-size network (width 128, five levels);
    desk-scale runs shrink base_width through the run config.
    """

    cond_channels: int = 3
    target_channels: int = 1
    base_width: int = 128
    level_multipliers: tuple = (1, 1, 2, 2, 4)
    blocks_per_level: int = 2
    time_embed_dim: int = 128

    def __post_init__(self):
        self.level_multipliers = tuple(int(m) for m in self.level_multipliers)
        if self.cond_channels < 1 or self.target_channels < 1:
            raise ValueError("cond_channels and target_channels must be positive")
        if self.base_width < 1 or self.blocks_per_level < 1 or self.time_embed_dim < 2:
            raise ValueError("invalid width, block count or embedding dim")
        if not self.level_multipliers or any(m < 1 for m in self.level_multipliers):
            raise ValueError(f"bad level multipliers {self.level_multipliers}")
        for w in self.widths:
            if w >= 8 and w % 8 != 0:
                raise ValueError(f"level width {w} not divisible by the 8 norm groups")

    @property
    def in_channels(self) -> int:
        return self.cond_channels + self.target_channels

    @property
    def n_levels(self) -> int:
        return len(self.level_multipliers)

    @property
    def widths(self):
        return [self.base_width * m for m in self.level_multipliers]

    @property
    def spatial_divisor(self) -> int:
        return 2 ** (self.n_levels - 1)


class ResBlock:
    """conv-norm-act twice, timestep injection in between, additive skip.

    With emb_dim=None the block is unconditional (regression baseline).
    """

    def __init__(self, store, name, cin, cout, emb_dim, rng):
        self.conv1 = Conv2d(store, f"{name}.conv1", cin, cout, rng=rng)
        self.norm1 = GroupNorm(store, f"{name}.norm1", cout)
        self.conv2 = Conv2d(store, f"{name}.conv2", cout, cout, rng=rng)
        # zero gain makes the block an identity at init; without it, 5-level
        # stacks collapse to the constant-zero predictor at useful lr
        self.norm2 = GroupNorm(store, f"{name}.norm2", cout, zero_gain=True)
        self.emb_proj = (
            Linear(store, f"{name}.emb", emb_dim, cout, rng=rng, gain=1.0)
            if emb_dim else None
        )
        self.skip = (
            Conv2d(store, f"{name}.skip", cin, cout, k=1, rng=rng, gain=1.0)
            if cin != cout else None
        )

    def __call__(self, x, emb=None):
        h = ad.silu(self.norm1(self.conv1(x)))
        if self.emb_proj is not None:
            e = self.emb_proj(emb)  # (N, C) added onto (N, H, W, C)
            h = ad.add(h, ad.reshape(e, (e.shape[0], 1, 1, e.shape[1])))
        h = ad.silu(self.norm2(self.conv2(h)))
        return ad.add(h, self.skip(x) if self.skip else x)


class UNetDenoiser:
    """Builds the parameterized network from a config and an init seed.

    time_conditioned=False drops the timestep pathway and reads only the
    conditioning channels, which is the direct-regression baseline.
    """

    def __init__(self, config: DenoiserConfig, init_seed: int = 0, dtype=np.float32,
                 time_conditioned: bool = True):
        self.config = config
        self.time_conditioned = time_conditioned
        self.in_channels = config.in_channels if time_conditioned else config.cond_channels
        self.params = ParamStore(dtype=dtype)
        rng = substream(init_seed, TAG_INIT)
        store = self.params
        cfg = config
        w = cfg.widths
        emb = cfg.time_embed_dim if time_conditioned else None
        if time_conditioned:
            self.time_lin1 = Linear(store, "time.lin1", emb, emb, rng=rng)
            self.time_lin2 = Linear(store, "time.lin2", emb, emb, rng=rng, gain=1.0)
        self.stem = Conv2d(store, "stem", self.in_channels, w[0], rng=rng, gain=1.0)
        self.enc = []
        self.down = []
        for lvl in range(cfg.n_levels):
            blocks = []
            cin = w[lvl - 1] if lvl > 0 else w[0]
            for b in range(cfg.blocks_per_level):
                blocks.append(
                    ResBlock(store, f"enc{lvl}.block{b}", cin if b == 0 else w[lvl], w[lvl], emb, rng)
                )
            self.enc.append(blocks)
            if lvl < cfg.n_levels - 1:
                self.down.append(
                    Conv2d(store, f"down{lvl}", w[lvl], w[lvl], stride=2, rng=rng, gain=1.0)
                )
        self.up = []
        self.dec = []
        for lvl in range(cfg.n_levels - 2, -1, -1):
            self.up.append(Conv2d(store, f"up{lvl}", w[lvl + 1], w[lvl], rng=rng, gain=1.0))
            blocks = []
            for b in range(cfg.blocks_per_level):
                blocks.append(
                    ResBlock(store, f"dec{lvl}.block{b}", 2 * w[lvl] if b == 0 else w[lvl], w[lvl], emb, rng)
                )
            self.dec.append(blocks)
        self.head_norm = GroupNorm(store, "head.norm", w[0])
        self.head_conv = Conv2d(store, "head.conv", w[0], cfg.target_channels, zero_init=True)

    def forward(self, x, t=None) -> ad.Tensor:
        """Predict noise for x (N, cond+target, H, W) at timesteps t (N,).

        Input and output are channel-major to match the field layout; the
        network itself runs channels-last.
        """
        if not isinstance(x, ad.Tensor):
            x = ad.Tensor(x, dtype=self.params.dtype)
        n, c, h, w_in = x.shape
        cfg = self.config
        if c != self.in_channels:
            raise ValueError(f"expected {self.in_channels} input channels, got {c}")
        div = cfg.spatial_divisor
        if h % div or w_in % div:
            raise ValueError(f"spatial dims {h}x{w_in} not divisible by {div}")
        if self.time_conditioned:
            if t is None:
                raise ValueError("time-conditioned network needs timesteps")
            emb = ad.Tensor(
                sinusoidal_embedding(t, cfg.time_embed_dim, dtype=self.params.dtype)
            )
            emb = self.time_lin2(ad.silu(self.time_lin1(emb)))
        else:
            emb = None
        x = ad.permute(x, (0, 2, 3, 1))
        x = self.stem(x)
        skips = []
        for lvl in range(cfg.n_levels):
            for block in self.enc[lvl]:
                x = block(x, emb)
            if lvl < cfg.n_levels - 1:
                skips.append(x)
                x = self.down[lvl](x)
        for i, lvl in enumerate(range(cfg.n_levels - 2, -1, -1)):
            x = self.up[i](ad.upsample_nearest2x(x))
            x = ad.concat([x, skips[lvl]], axis=3)
            for block in self.dec[i]:
                x = block(x, emb)
        x = ad.silu(self.head_norm(x))
        return ad.permute(self.head_conv(x), (0, 3, 1, 2))

    def predict_noise(self, cond: np.ndarray, x_t: np.ndarray, t) -> np.ndarray:
        """Inference-mode noise prediction from split condition/target arrays."""
        inp = np.concatenate([cond, x_t], axis=1)
        with ad.no_grad():
            return self.forward(inp, np.asarray(t).reshape(-1)).data


def _conv_count(cin, cout, k):
    return cout * cin * k * k + cout


def _block_count(cin, cout, emb):
    n = _conv_count(cin, cout, 3) + _conv_count(cout, cout, 3)
    n += 2 * (2 * cout)  # two group norms
    if emb:
        n += cout * emb + cout
    if cin != cout:
        n += _conv_count(cin, cout, 1)
    return n


def parameter_count(config: DenoiserConfig, time_conditioned: bool = True) -> int:
    """Closed-form parameter count; must match the built network."""
    cfg = config
    w = cfg.widths
    emb = cfg.time_embed_dim if time_conditioned else 0
    total = 2 * (emb * emb + emb)
    in_ch = cfg.in_channels if time_conditioned else cfg.cond_channels
    total += _conv_count(in_ch, w[0], 3)
    for lvl in range(cfg.n_levels):
        cin = w[lvl - 1] if lvl > 0 else w[0]
        for b in range(cfg.blocks_per_level):
            total += _block_count(cin if b == 0 else w[lvl], w[lvl], emb)
        if lvl < cfg.n_levels - 1:
            total += _conv_count(w[lvl], w[lvl], 3)
    for lvl in range(cfg.n_levels - 2, -1, -1):
        total += _conv_count(w[lvl + 1], w[lvl], 3)
        for b in range(cfg.blocks_per_level):
            total += _block_count(2 * w[lvl] if b == 0 else w[lvl], w[lvl], emb)
    total += 2 * w[0]
    total += _conv_count(w[0], cfg.target_channels, 3)
    return total


def concat_condition(lr_upsampled: Field, x_t: Field) -> np.ndarray:
    """Stack conditioning channels before target channels, (C+Ct, H, W).

    The channel order is fixed: conditioning variables in dataset order,
    then the noisy target channels.
    """
    if x_t.n_channels < 1:
        raise ValueError("target field has no channels")
    if (lr_upsampled.height, lr_upsampled.width) != (x_t.height, x_t.width):
        raise ValueError(
            f"spatial mismatch: condition {lr_upsampled.height}x{lr_upsampled.width} "
            f"vs target {x_t.height}x{x_t.width}"
        )
    return np.concatenate([lr_upsampled.data, x_t.data], axis=0)
