"""Error metrics and the high-frequency sharpness proxy."""

import numpy as np

from .fields import Field


def _target_stack(batch, target_channels):
    """(N, len(target_channels), H, W) float64 from fields or an array."""
    if isinstance(batch, np.ndarray):
        return batch.astype(np.float64)
    rows = []
    for f in batch:
        idx = [f.channels.index(c) for c in target_channels]
        rows.append(f.data[idx])
    return np.stack(rows).astype(np.float64)


def rmse(pred, truth, target_channels=None) -> float:
    """Root mean squared error pooled over all target elements.

    pred/truth are lists of Fields (target channels selected by name) or
    already-stacked arrays. Accumulation is float64.
    """
    if target_channels is None and not isinstance(pred, np.ndarray):
        target_channels = pred[0].channels
    p = _target_stack(pred, target_channels)
    t = _target_stack(truth, target_channels)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: pred {p.shape} vs truth {t.shape}")
    return float(np.sqrt(np.mean((p - t) ** 2)))


def rmse_per_sample(pred, truth, target_channels=None) -> float:
    """Mean of per-sample RMSEs; sensitivity alternative to pooled rmse."""
    if target_channels is None and not isinstance(pred, np.ndarray):
        target_channels = pred[0].channels
    p = _target_stack(pred, target_channels)
    t = _target_stack(truth, target_channels)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: pred {p.shape} vs truth {t.shape}")
    per = np.sqrt(np.mean((p - t) ** 2, axis=tuple(range(1, p.ndim))))
    return float(per.mean())


def percent_improvement(ours: float, baseline: float) -> float:
    """100 * (baseline - ours) / baseline."""
    if baseline == 0:
        raise ZeroDivisionError("baseline RMSE is zero")
    return 100.0 * (baseline - ours) / baseline


LAPLACIAN = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])


def highfreq_energy(f, channel=None) -> float:
    """Mean squared response of the 3x3 discrete Laplacian (interior only).

    A cheap sharpness proxy: blurry upsamplings score low, fields with
    fine-grained structure score high.
    """
    if isinstance(f, Field):
        arr = f.channel(channel) if channel else f.data[0]
    else:
        arr = np.asarray(f)
    arr = arr.astype(np.float64)
    if arr.shape[0] < 3 or arr.shape[1] < 3:
        raise ValueError("field too small for a 3x3 filter")
    core = arr[1:-1, 1:-1]
    lap = (
        arr[:-2, 1:-1] + arr[2:, 1:-1] + arr[1:-1, :-2] + arr[1:-1, 2:] - 4.0 * core
    )
    return float(np.mean(lap**2))
