"""Layers, parameter store, Adam optimizer, LR schedule and checkpoints."""

import math
import struct

import numpy as np

from . import autodiff as ad
from .rng import normal

CKPT_MAGIC = b"CKPT"


class CheckpointError(ValueError):
    """Raised when a checkpoint file is malformed or incompatible."""


class ParamStore:
    """Ordered collection of named trainable tensors."""

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self._params = {}

    def create(self, name: str, array: np.ndarray) -> ad.Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = ad.Tensor(np.asarray(array, dtype=self.dtype), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> ad.Tensor:
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def n_parameters(self) -> int:
        return sum(t.data.size for t in self._params.values())

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    def state_dict(self) -> dict:
        return {k: t.data.copy() for k, t in self._params.items()}

    def load_state_dict(self, state: dict):
        missing = set(self._params) - set(state)
        extra = set(state) - set(self._params)
        if missing or extra:
            raise CheckpointError(
                f"parameter names do not match model (missing={sorted(missing)}, "
                f"unexpected={sorted(extra)})"
            )
        for k, t in self._params.items():
            arr = np.asarray(state[k], dtype=self.dtype)
            if arr.shape != t.data.shape:
                raise CheckpointError(
                    f"shape mismatch for {k!r}: checkpoint {arr.shape} vs model {t.data.shape}"
                )
            t.data = arr.copy()


def scaled_normal(rng, shape, fan_in, gain=2.0, dtype=np.float32):
    """Normal init with variance gain/fan_in (gain 2 = He, 1 = variance
    preserving for linear positions)."""
    scale = np.sqrt(gain / fan_in)
    return (normal(rng, shape, dtype=np.float64) * scale).astype(dtype)


class Conv2d:
    """3x3 (by default) convolution on channels-last activations.

    Weights are stored (k, k, cin, cout) to match the im2col patch order.
    gain=2 (He) suits convs feeding a nonlinearity; convs at linear
    positions (resampling, skips, stems) use gain=1, otherwise the
    variance inflation compounds through the norm-free encoder/decoder
    path and unbalances the skip concatenations badly enough to trap
    training in the constant-zero predictor.
    """

    def __init__(self, store, name, cin, cout, k=3, stride=1, padding=None, rng=None,
                 zero_init=False, gain=2.0):
        self.stride = stride
        self.padding = (k - 1) // 2 if padding is None else padding
        if zero_init:
            w = np.zeros((k, k, cin, cout))
        else:
            w = scaled_normal(rng, (k, k, cin, cout), cin * k * k, gain, dtype=store.dtype)
        self.weight = store.create(f"{name}.weight", w)
        self.bias = store.create(f"{name}.bias", np.zeros(cout))

    def __call__(self, x):
        return ad.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class Linear:
    def __init__(self, store, name, fan_in, fan_out, rng, gain=2.0):
        w = scaled_normal(rng, (fan_out, fan_in), fan_in, gain, dtype=store.dtype)
        self.weight = store.create(f"{name}.weight", w)
        self.bias = store.create(f"{name}.bias", np.zeros(fan_out))

    def __call__(self, x):
        return ad.linear(x, self.weight, self.bias)


class GroupNorm:
    """GroupNorm with 8 groups, or one group per channel below 8 channels.

    zero_gain=True starts gamma at zero, silencing the branch behind it at
    initialization; deep residual stacks train stably at practical learning
    rates only with this (the gain's own gradient is nonzero, so the branch
    switches on after the first update).
    """

    def __init__(self, store, name, channels, groups=None, zero_gain=False):
        if groups is None:
            groups = 8 if channels >= 8 else channels
        if channels % groups != 0:
            raise ValueError(f"{channels} channels not divisible by {groups} groups")
        self.groups = groups
        init_gain = np.zeros(channels) if zero_gain else np.ones(channels)
        self.gamma = store.create(f"{name}.gamma", init_gain)
        self.beta = store.create(f"{name}.beta", np.zeros(channels))

    def __call__(self, x):
        return ad.group_norm(x, self.gamma, self.beta, self.groups)


def sinusoidal_embedding(t, dim, dtype=np.float32):
    """(N, dim) sin/cos positional features of integer timesteps."""
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / max(half - 1, 1))
    args = t[:, None] * freqs[None, :]
    emb = np.concatenate([np.sin(args), np.cos(args)], axis=1)
    if dim % 2 == 1:
        emb = np.pad(emb, ((0, 0), (0, 1)))
    return emb.astype(dtype)


def cosine_lr(initial_lr: float, total_iters: int, it: int, min_lr: float = 0.0) -> float:
    """Cosine annealing from initial_lr at it=0 to min_lr at it=total_iters."""
    if total_iters <= 0:
        return initial_lr
    frac = min(max(it / total_iters, 0.0), 1.0)
    return min_lr + 0.5 * (initial_lr - min_lr) * (1.0 + math.cos(math.pi * frac))


class Adam:
    """Adam with bias correction; state is checkpointable."""

    def __init__(self, store: ParamStore, beta1=0.9, beta2=0.999, eps=1e-8):
        self.store = store
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self.m = {k: np.zeros_like(t.data) for k, t in store.items()}
        self.v = {k: np.zeros_like(t.data) for k, t in store.items()}

    def step(self, lr: float):
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.step_count
        c2 = 1.0 - b2**self.step_count
        for k, t in self.store.items():
            if t.grad is None:
                continue
            g = t.grad
            m = self.m[k]
            v = self.v[k]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            mhat = m / c1
            vhat = v / c2
            t.data = t.data - lr * mhat / (np.sqrt(vhat) + self.eps)

    def zero_grad(self):
        self.store.zero_grad()

    def state_dict(self) -> dict:
        out = {"opt.step": np.array(float(self.step_count), dtype=np.float32)}
        for k in self.m:
            out[f"opt.m.{k}"] = self.m[k].copy()
            out[f"opt.v.{k}"] = self.v[k].copy()
        return out

    def load_state_dict(self, state: dict):
        self.step_count = int(state["opt.step"])
        for k in self.m:
            self.m[k] = np.asarray(state[f"opt.m.{k}"], dtype=self.m[k].dtype).copy()
            self.v[k] = np.asarray(state[f"opt.v.{k}"], dtype=self.v[k].dtype).copy()


# ------------------------------------------------------------- checkpoints


def save_checkpoint(path, arrays: dict):
    """Write named float32 arrays: CKPT magic, count, then per-entry
    (name, rank, dims, little-endian float32 payload)."""
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays.items():
            raw = name.encode("utf-8")
            arr = np.asarray(arr, dtype="<f4")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", arr.ndim))
            for d in arr.shape:
                fh.write(struct.pack("<I", d))
            fh.write(np.ascontiguousarray(arr).tobytes())


def load_checkpoint(path) -> dict:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CKPT_MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:4]!r}")
    (count,) = struct.unpack_from("<I", blob, 4)
    off = 8
    out = {}
    for _ in range(count):
        try:
            (nlen,) = struct.unpack_from("<I", blob, off)
            off += 4
            name = blob[off : off + nlen].decode("utf-8")
            off += nlen
            (rank,) = struct.unpack_from("<I", blob, off)
            off += 4
            dims = struct.unpack_from(f"<{rank}I", blob, off) if rank else ()
            off += 4 * rank
            size = int(np.prod(dims)) if rank else 1
            arr = np.frombuffer(blob, dtype="<f4", count=size, offset=off).reshape(dims)
            off += 4 * size
        except (struct.error, ValueError) as e:
            raise CheckpointError(f"{path}: truncated checkpoint ({e})") from e
        out[name] = arr.copy()
    if off != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - off} trailing bytes")
    return out


# ------------------------------------------------------------ grad checking


def finite_difference_grad(fn, x: np.ndarray, h=None) -> np.ndarray:
    """Central finite differences of a scalar function of one array."""
    x = np.asarray(x, dtype=np.float64)
    if h is None:
        h = max(np.abs(x).max(), 1.0) * 6e-6
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = fn(x)
        flat[i] = orig - h
        fm = fn(x)
        flat[i] = orig
        gf[i] = (fp - fm) / (2 * h)
    return g


def max_relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """Max |a-b| over the joint scale of the two gradients."""
    scale = max(np.abs(a).max(), np.abs(b).max(), 1e-12)
    return float(np.abs(a - b).max() / scale)
