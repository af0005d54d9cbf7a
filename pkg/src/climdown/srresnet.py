"""SRResNet-style regression baseline: a residual conv trunk.

Operates on the pre-upsampled low-resolution input (the same pathway the
diffusion model conditions on), so the tail is a plain conv head rather
than a spatial upsampler.
"""

import numpy as np

from . import autodiff as ad
from .nn import Conv2d, ParamStore
from .rng import TAG_INIT, substream


class TrunkBlock:
    def __init__(self, store, name, width, rng):
        self.conv1 = Conv2d(store, f"{name}.conv1", width, width, rng=rng)
        # gain 1: conv2 sits at a linear position (its output is added raw)
        self.conv2 = Conv2d(store, f"{name}.conv2", width, width, rng=rng, gain=1.0)

    def __call__(self, x):
        return ad.add(self.conv2(ad.silu(self.conv1(x))), x)


class SRResNet:
    def __init__(self, in_channels=3, out_channels=1, width=64, n_blocks=8, init_seed=0,
                 dtype=np.float32):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.params = ParamStore(dtype=dtype)
        rng = substream(init_seed, TAG_INIT)
        self.conv_in = Conv2d(self.params, "conv_in", in_channels, width, rng=rng)
        self.blocks = [
            TrunkBlock(self.params, f"block{i}", width, rng) for i in range(n_blocks)
        ]
        self.conv_mid = Conv2d(self.params, "conv_mid", width, width, rng=rng, gain=1.0)
        self.head = Conv2d(self.params, "head", width, out_channels, zero_init=True)

    def forward(self, x, t=None) -> ad.Tensor:
        """Channel-major (N, C, H, W) in and out; runs channels-last inside."""
        if not isinstance(x, ad.Tensor):
            x = ad.Tensor(x, dtype=self.params.dtype)
        if x.shape[1] != self.in_channels:
            raise ValueError(f"expected {self.in_channels} input channels, got {x.shape[1]}")
        feat = ad.silu(self.conv_in(ad.permute(x, (0, 2, 3, 1))))
        h = feat
        for block in self.blocks:
            h = block(h)
        h = ad.add(self.conv_mid(h), feat)  # global residual
        return ad.permute(self.head(h), (0, 3, 1, 2))
