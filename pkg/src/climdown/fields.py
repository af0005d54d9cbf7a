"""Gridded multi-channel fields and their binary file format.

A Field is an immutable C x H x W float32 grid with named channels; it is
the carrier for every low- and high-resolution variable in the package.
The .cgf file format is a little-endian container holding N same-shaped
samples and round-trips bit-exactly.
"""

import struct

import numpy as np

MAGIC = b"CGF1"

# Channel names used by the synthetic generator; PRECT is the downscaling
# target in the 3in1out configuration.
DEFAULT_CHANNELS = ("TS", "PRECT", "dPHIS")
TARGET_CHANNEL = "PRECT"


class FieldFileError(ValueError):
    """Raised when a .cgf file is malformed or truncated."""


class Field:
    """Named-channel float32 grid of shape (channels, height, width).

    Data is stored channel-major, row-major, so concatenating along the
    channel axis is a contiguous append. Instances are treated as
    immutable: operations return new Fields.
    """

    __slots__ = ("channels", "data")

    def __init__(self, channels, data):
        channels = tuple(str(c) for c in channels)
        if len(set(channels)) != len(channels):
            raise ValueError(f"duplicate channel names: {channels}")
        data = np.ascontiguousarray(data, dtype=np.float32)
        if data.ndim != 3:
            raise ValueError(f"field data must be 3-d (C,H,W), got shape {data.shape}")
        if data.shape[0] != len(channels):
            raise ValueError(
                f"{len(channels)} channel names but data has {data.shape[0]} channels"
            )
        if data.shape[1] < 1 or data.shape[2] < 1:
            raise ValueError(f"empty grid: shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("field contains non-finite values")
        self.channels = channels
        self.data = data
        self.data.flags.writeable = False

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    def channel(self, name: str) -> np.ndarray:
        """Read-only (H, W) view of one channel."""
        try:
            idx = self.channels.index(name)
        except ValueError:
            raise KeyError(f"no channel {name!r} in {self.channels}") from None
        return self.data[idx]

    def select(self, names) -> "Field":
        """New Field holding the given channels, in the given order."""
        names = tuple(names)
        idx = [self.channels.index(n) for n in names]
        return Field(names, self.data[idx])

    def with_data(self, data) -> "Field":
        return Field(self.channels, data)

    def __eq__(self, other):
        return (
            isinstance(other, Field)
            and self.channels == other.channels
            and self.data.shape == other.data.shape
            and bool(np.all(self.data == other.data))
        )

    def __repr__(self):
        return f"Field(channels={self.channels}, h={self.height}, w={self.width})"


def center_crop(f: Field, out_h: int, out_w: int) -> Field:
    """Centered out_h x out_w window of a field.

    When the margin is odd the extra row/column is dropped from the
    high-index side.
    """
    if out_h > f.height or out_w > f.width:
        raise ValueError(
            f"crop {out_h}x{out_w} exceeds field size {f.height}x{f.width}"
        )
    if out_h < 1 or out_w < 1:
        raise ValueError("crop size must be positive")
    top = (f.height - out_h) // 2
    left = (f.width - out_w) // 2
    return Field(f.channels, f.data[:, top : top + out_h, left : left + out_w])


def field_stats(f: Field) -> dict:
    """Per-channel (mean, population std), accumulated in float64."""
    out = {}
    for i, name in enumerate(f.channels):
        ch = f.data[i].astype(np.float64)
        out[name] = (float(ch.mean()), float(ch.std()))
    return out


def stack_fields(fields) -> np.ndarray:
    """(N, C, H, W) float32 array from same-shaped fields."""
    if not fields:
        raise ValueError("no fields to stack")
    first = fields[0]
    for f in fields[1:]:
        if f.channels != first.channels or f.data.shape != first.data.shape:
            raise ValueError("fields differ in channels or shape")
    return np.stack([f.data for f in fields])


def write_fields(path, samples) -> None:
    """Write a list of same-shaped fields to a .cgf file."""
    samples = list(samples)
    if samples:
        first = samples[0]
        for s in samples[1:]:
            if s.channels != first.channels or s.data.shape != first.data.shape:
                raise ValueError("all samples must share channels and dimensions")
        c, h, w = first.data.shape
        channels = first.channels
    else:
        c = h = w = 0
        channels = ()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIII", len(samples), c, h, w))
        for name in channels:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
        for s in samples:
            fh.write(np.ascontiguousarray(s.data, dtype="<f4").tobytes())


def read_fields(path):
    """Read a .cgf file back into a list of fields; bit-exact round trip."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise FieldFileError(f"{path}: bad magic {blob[:4]!r}")
    if len(blob) < 20:
        raise FieldFileError(f"{path}: truncated header")
    n, c, h, w = struct.unpack_from("<IIII", blob, 4)
    off = 20
    channels = []
    for _ in range(c):
        if off + 4 > len(blob):
            raise FieldFileError(f"{path}: truncated channel block")
        (ln,) = struct.unpack_from("<I", blob, off)
        off += 4
        if off + ln > len(blob):
            raise FieldFileError(f"{path}: truncated channel name")
        channels.append(blob[off : off + ln].decode("utf-8"))
        off += ln
    need = n * c * h * w * 4
    if len(blob) - off != need:
        raise FieldFileError(
            f"{path}: payload is {len(blob) - off} bytes, expected {need}"
        )
    if n == 0:
        return []
    flat = np.frombuffer(blob, dtype="<f4", count=n * c * h * w, offset=off)
    data = flat.reshape(n, c, h, w)
    return [Field(channels, data[i]) for i in range(n)]
