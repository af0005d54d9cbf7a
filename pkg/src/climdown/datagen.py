"""Synthetic climate-like fields and the degradation/normalization pipeline.

Three channels per sample: TS (smooth Gaussian random field), PRECT
(exp-transformed latent sharing a component with TS: nonnegative and
heavy-tailed) and dPHIS (one static topography-gradient field shared by
every sample). Low-resolution inputs are derived from the high-resolution
grids by antialiased bicubic downscaling; normalization is a per-channel
z-score with statistics taken from the training split only.
"""

import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np

from .fields import DEFAULT_CHANNELS, Field, write_fields, read_fields
from .resample import bicubic_resize, resize_array
from .rng import TAG_DATA, TAG_TOPO, normal, substream

SPLIT_NAMES = ("train", "val", "test")
DEFAULT_SPLIT_RATIOS = (53, 5, 15)
STD_FLOOR = 1e-8


@dataclass
class SyntheticSpec:
    """Generator settings; per-channel tuples follow (TS, PRECT, dPHIS)."""

    n_samples: int = 730
    height: int = 48
    width: int = 48
    seed: int = 0
    correlation_length: tuple = (10.0, 6.0, 14.0)
    spectrum_exponent: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.height % 16 or self.width % 16:
            raise ValueError("field dims must be divisible by 16")
        if any(c <= 0 for c in self.correlation_length):
            raise ValueError("correlation lengths must be positive")


def gaussian_random_field(rng, h, w, corr_len, exponent) -> np.ndarray:
    """Zero-mean, unit-variance field via spectral synthesis.

    The amplitude combines a Gaussian envelope sized so the spatial
    autocorrelation decays to ~1/e at lag corr_len with a power-law
    low-frequency boost of the given exponent.
    """
    white = normal(rng, (h, w), dtype=np.float64)
    spec = np.fft.fft2(white)
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    f = np.hypot(fy, fx)
    f0 = 1.0 / max(h, w)
    amp = np.exp(-0.5 * (np.pi * f * corr_len) ** 2)
    amp *= ((f + f0) / f0) ** (-exponent / 2.0)
    amp[0, 0] = 0.0
    g = np.fft.ifft2(spec * amp).real
    g -= g.mean()
    s = g.std()
    return g / s if s > 0 else g


def topography_gradient(seed, h, w, corr_len, exponent) -> np.ndarray:
    """Static dPHIS-like channel: gradient magnitude of a smooth surface."""
    rng = substream(seed, TAG_TOPO)
    topo = gaussian_random_field(rng, h, w, corr_len, exponent)
    gy, gx = np.gradient(topo)
    g = np.hypot(gy, gx)
    g -= g.mean()
    s = g.std()
    return g / s if s > 0 else g


def generate_fields(spec: SyntheticSpec):
    """List of n_samples raw-unit fields with channels (TS, PRECT, dPHIS)."""
    h, w = spec.height, spec.width
    l_ts, l_pr, l_topo = spec.correlation_length
    e_ts, e_pr, e_topo = spec.spectrum_exponent
    dphis = (120.0 * topography_gradient(spec.seed, h, w, l_topo, e_topo)).astype(
        np.float32
    )
    out = []
    for i in range(spec.n_samples):
        rs = substream(spec.seed, TAG_DATA, i)
        ts_latent = gaussian_random_field(rs, h, w, l_ts, e_ts)
        own = gaussian_random_field(rs, h, w, l_pr, e_pr)
        mix = 0.5 * ts_latent + 0.5 * own
        s = mix.std()
        latent = mix / s if s > 0 else mix
        ts = (283.0 + 8.0 * ts_latent).astype(np.float32)
        prect = np.exp(latent).astype(np.float32)
        out.append(Field(DEFAULT_CHANNELS, np.stack([ts, prect, dphis])))
    return out


def split_counts(n: int, ratios=DEFAULT_SPLIT_RATIOS):
    """Proportional split sizes; rounding remainder goes to train."""
    total = sum(ratios)
    counts = [int(n * r / total) for r in ratios]
    counts[0] += n - sum(counts)
    return tuple(counts)


def split_fields(fields, ratios=DEFAULT_SPLIT_RATIOS) -> dict:
    counts = split_counts(len(fields), ratios)
    out, start = {}, 0
    for name, c in zip(SPLIT_NAMES, counts):
        out[name] = fields[start : start + c]
        start += c
    return out


def compute_stats(fields) -> dict:
    """Per-channel (mean, population std) over all samples, float64."""
    if not fields:
        raise ValueError("cannot compute stats of an empty split")
    stats = {}
    for ci, name in enumerate(fields[0].channels):
        data = np.stack([f.data[ci] for f in fields]).astype(np.float64)
        stats[name] = (float(data.mean()), float(data.std()))
    return stats


def normalize_field(f: Field, stats: dict) -> Field:
    cols = []
    for i, name in enumerate(f.channels):
        mean, std = stats[name]
        cols.append((f.data[i] - mean) / max(std, STD_FLOOR))
    return Field(f.channels, np.stack(cols).astype(np.float32))


def denormalize_field(f: Field, stats: dict) -> Field:
    cols = []
    for i, name in enumerate(f.channels):
        mean, std = stats[name]
        cols.append(f.data[i] * max(std, STD_FLOOR) + mean)
    return Field(f.channels, np.stack(cols).astype(np.float32))


def denormalize_array(arr: np.ndarray, channels, stats: dict) -> np.ndarray:
    """(N, C, H, W) inverse z-score for the named channels."""
    out = np.empty_like(arr, dtype=np.float32)
    for i, name in enumerate(channels):
        mean, std = stats[name]
        out[:, i] = arr[:, i] * max(std, STD_FLOOR) + mean
    return out


def degrade(hr: Field, scale: int, antialias: bool = True) -> Field:
    """Antialiased bicubic downscale of an HR field by 4x or 8x."""
    if scale not in (4, 8):
        raise ValueError(f"scale must be 4 or 8, got {scale}")
    if hr.height % scale or hr.width % scale:
        raise ValueError(f"dims {hr.height}x{hr.width} not divisible by {scale}")
    return bicubic_resize(hr, hr.height // scale, hr.width // scale, antialias=antialias)


def upsample_condition(lr: Field, scale: int) -> Field:
    """Bicubic upsample (no antialiasing) of LR data to target dims."""
    return bicubic_resize(lr, lr.height * scale, lr.width * scale, antialias=False)


def upsample_condition_array(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """(N, C, h, w) -> (N, C, out_h, out_w) bicubic, no antialiasing."""
    return np.stack([resize_array(a, out_h, out_w, "bicubic") for a in arr])


@dataclass
class DatasetBundle:
    """Normalized (lr, hr) pairs per split plus the train-HR statistics."""

    train: list
    val: list
    test: list
    stats: dict
    scale: int
    channels: tuple = DEFAULT_CHANNELS

    def split(self, name):
        return {"train": self.train, "val": self.val, "test": self.test}[name]


def build_bundle(splits_raw: dict, scale: int) -> DatasetBundle:
    """Normalize with train-HR stats and derive LR by antialiased degrade."""
    stats = compute_stats(splits_raw["train"])
    out = {}
    for name in SPLIT_NAMES:
        pairs = []
        for hr_raw in splits_raw[name]:
            hr = normalize_field(hr_raw, stats)
            lr = degrade(hr, scale)
            pairs.append((lr, hr))
        out[name] = pairs
    return DatasetBundle(out["train"], out["val"], out["test"], stats, scale)


# ------------------------------------------------------------- dataset files


def _stats_path(outdir):
    return os.path.join(outdir, "stats.json")


def save_stats(outdir, stats: dict):
    """Per-channel mean/std as decimal strings, stable key order."""
    payload = {
        name: {"mean": repr(mean), "std": repr(std)}
        for name, (mean, std) in stats.items()
    }
    with open(_stats_path(outdir), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_stats(outdir) -> dict:
    with open(_stats_path(outdir)) as fh:
        payload = json.load(fh)
    return {name: (float(v["mean"]), float(v["std"])) for name, v in payload.items()}


def save_dataset(outdir, splits_raw: dict, topography: Field) -> str:
    """Write train/val/test.cgf, stats.json and topography.cgf.

    Returns a sha256 hash over the emitted bytes, printed by the CLI so
    reruns can be compared at a glance.
    """
    os.makedirs(outdir, exist_ok=True)
    stats = compute_stats(splits_raw["train"])
    for name in SPLIT_NAMES:
        write_fields(os.path.join(outdir, f"{name}.cgf"), splits_raw[name])
    save_stats(outdir, stats)
    write_fields(os.path.join(outdir, "topography.cgf"), [topography])
    return dataset_hash(outdir)


def dataset_hash(outdir) -> str:
    h = hashlib.sha256()
    for fname in ("train.cgf", "val.cgf", "test.cgf", "stats.json", "topography.cgf"):
        path = os.path.join(outdir, fname)
        with open(path, "rb") as fh:
            h.update(fh.read())
    return h.hexdigest()


def load_dataset(outdir) -> dict:
    """Read the raw HR splits written by save_dataset."""
    return {
        name: read_fields(os.path.join(outdir, f"{name}.cgf")) for name in SPLIT_NAMES
    }


def load_bundle(outdir, scale: int) -> DatasetBundle:
    return build_bundle(load_dataset(outdir), scale)


def generate_dataset(spec: SyntheticSpec, outdir, ratios=DEFAULT_SPLIT_RATIOS) -> str:
    """Generate, split and persist a dataset; returns its hash."""
    fields = generate_fields(spec)
    splits = split_fields(fields, ratios)
    topo_idx = DEFAULT_CHANNELS.index("dPHIS")
    topo = Field(("dPHIS",), fields[0].data[topo_idx : topo_idx + 1]) if fields else None
    return save_dataset(outdir, splits, topo)
