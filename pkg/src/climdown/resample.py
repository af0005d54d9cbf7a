"""Separable image resampling: Catmull-Rom bicubic (with antialiasing) and
bilinear interpolation.

Both resamplers are expressed as dense per-axis weight matrices, so a
resize is two matrix products per channel. Weights are computed in
float64 and the result is cast to float32, which makes constants exact
after rounding and makes repeated runs bit-identical.
"""

import numpy as np

from .fields import Field


def cubic_kernel(x: np.ndarray) -> np.ndarray:
    """Catmull-Rom cubic convolution kernel (Keys, a = -0.5)."""
    ax = np.abs(x)
    out = np.zeros_like(ax)
    inner = ax <= 1.0
    outer = (ax > 1.0) & (ax < 2.0)
    out[inner] = (1.5 * ax[inner] - 2.5) * ax[inner] ** 2 + 1.0
    out[outer] = ((-0.5 * ax[outer] + 2.5) * ax[outer] - 4.0) * ax[outer] + 2.0
    return out


def linear_kernel(x: np.ndarray) -> np.ndarray:
    ax = np.abs(x)
    return np.clip(1.0 - ax, 0.0, None)


def _resize_matrix(n_in, n_out, kernel, radius, antialias, boundary):
    """(n_out, n_in) float64 weight matrix for one axis.

    Sample centers follow the align-corners=false convention. When
    downscaling with antialias the kernel support is widened by the
    inverse scale and the weights renormalized. Out-of-range taps are
    folded back into real samples: "extend" uses linear extrapolation
    from the two edge samples (preserves constants and ramps), "clamp"
    repeats the edge sample.
    """
    scale = n_out / n_in
    support = 1.0 / scale if (antialias and scale < 1.0) else 1.0
    rad = radius * support
    mat = np.zeros((n_out, n_in), dtype=np.float64)
    for j in range(n_out):
        center = (j + 0.5) / scale - 0.5
        lo = int(np.ceil(center - rad))
        hi = int(np.floor(center + rad))
        taps = np.arange(lo, hi + 1)
        w = kernel((taps - center) / support)
        s = w.sum()
        if s == 0.0:  # degenerate, fall back to nearest
            mat[j, min(max(int(round(center)), 0), n_in - 1)] = 1.0
            continue
        w = w / s
        for i, wi in zip(taps, w):
            if 0 <= i < n_in:
                mat[j, i] += wi
            elif boundary == "clamp":
                mat[j, min(max(i, 0), n_in - 1)] += wi
            elif i < 0:
                # x[-k] = (1+k) x[0] - k x[1]
                k = -i
                mat[j, 0] += wi * (1 + k)
                if n_in > 1:
                    mat[j, 1] -= wi * k
            else:
                k = i - (n_in - 1)
                mat[j, n_in - 1] += wi * (1 + k)
                if n_in > 1:
                    mat[j, n_in - 2] -= wi * k
    return mat


def resize_array(arr, out_h, out_w, kernel="bicubic", antialias=False, boundary=None):
    """Resize a (C, H, W) or (H, W) float array; returns float32.

    kernel: "bicubic" (Catmull-Rom) or "bilinear".
    boundary defaults to linear extrapolation for bicubic (keeps linear
    ramps linear across edges) and clamp-to-edge for bilinear.
    """
    squeeze = arr.ndim == 2
    if squeeze:
        arr = arr[None]
    c, h, w = arr.shape
    if kernel == "bicubic":
        kfun, radius = cubic_kernel, 2.0
        boundary = boundary or "extend"
    elif kernel == "bilinear":
        kfun, radius = linear_kernel, 1.0
        boundary = boundary or "clamp"
    else:
        raise ValueError(f"unknown kernel {kernel!r}")
    mh = _resize_matrix(h, out_h, kfun, radius, antialias, boundary)
    mw = _resize_matrix(w, out_w, kfun, radius, antialias, boundary)
    src = arr.astype(np.float64)
    out = np.einsum("oi,cij,pj->cop", mh, src, mw, optimize=True)
    out = out.astype(np.float32)
    if squeeze:
        out = out[0]
    return out


def bicubic_resize(f: Field, out_h: int, out_w: int, antialias: bool = False) -> Field:
    """Catmull-Rom bicubic resize of a field, per channel."""
    return Field(f.channels, resize_array(f.data, out_h, out_w, "bicubic", antialias))


def bilinear_upscale(f: Field, scale: int) -> Field:
    """Separable bilinear upscaling (align-corners=false, clamped edges)."""
    return Field(
        f.channels,
        resize_array(f.data, f.height * scale, f.width * scale, "bilinear"),
    )


def bicubic_upscale(f: Field, scale: int) -> Field:
    """Bicubic upscaling; the conditioning pathway and bicubic baseline."""
    return bicubic_resize(f, f.height * scale, f.width * scale, antialias=False)
