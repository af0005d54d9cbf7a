"""Evaluation reports: CSV/text tables and grayscale map rendering."""

import os
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .fields import Field
from .metrics import percent_improvement

CSV_HEADER = "method,io_config,scale,rmse,n"


@dataclass(frozen=True)
class ReportRow:
    method: str
    io_config: str  # "3in1out", "3in3out" or "-" for interpolation
    scale: int
    rmse: float
    n: int


@dataclass
class EvalReport:
    rows: list
    metadata: dict = field(default_factory=dict)


def build_report(rows, metadata=None) -> EvalReport:
    """Sorted report; one row per (method, io_config, scale)."""
    rows = list(rows)
    if not rows:
        raise ValueError("no result rows")
    seen = set()
    for r in rows:
        key = (r.method, r.io_config, r.scale)
        if key in seen:
            raise ValueError(f"duplicate result row {key}")
        seen.add(key)
        if r.rmse < 0:
            raise ValueError(f"negative rmse in {key}")
    rows.sort(key=lambda r: (r.scale, r.method, r.io_config))
    return EvalReport(rows, dict(metadata or {}))


def report_to_csv(report: EvalReport) -> str:
    lines = [CSV_HEADER]
    for r in report.rows:
        lines.append(f"{r.method},{r.io_config},{r.scale},{repr(r.rmse)},{r.n}")
    return "\n".join(lines) + "\n"


def parse_csv(text: str):
    """Inverse of report_to_csv."""
    lines = [ln for ln in text.strip().splitlines() if ln]
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"unexpected CSV header: {lines[:1]}")
    rows = []
    for ln in lines[1:]:
        method, io_config, scale, rmse, n = ln.split(",")
        rows.append(ReportRow(method, io_config, int(scale), float(rmse), int(n)))
    return rows


def write_csv(report: EvalReport, path):
    with open(path, "w") as fh:
        fh.write(report_to_csv(report))


def render_text(report: EvalReport, baseline_method: str = "bicubic") -> str:
    """Aligned table with a percent-improvement column vs the baseline."""
    base = {
        r.scale: r.rmse for r in report.rows if r.method == baseline_method
    }
    header = f"{'method':<12} {'io':<8} {'scale':>5} {'rmse':>14} {'n':>6} {'vs ' + baseline_method:>12}"
    lines = [header, "-" * len(header)]
    for r in report.rows:
        if r.scale in base and base[r.scale] > 0 and r.method != baseline_method:
            imp = f"{percent_improvement(r.rmse, base[r.scale]):+.2f}%"
        else:
            imp = "-"
        lines.append(
            f"{r.method:<12} {r.io_config:<8} {r.scale:>5} {r.rmse:>14.6g} {r.n:>6} {imp:>12}"
        )
    for k, v in sorted(report.metadata.items()):
        lines.append(f"# {k}: {v}")
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------- map rendering


def _to_gray(arr: np.ndarray) -> np.ndarray:
    """Min-max scale to uint8; constant fields map to mid-gray 128."""
    arr = arr.astype(np.float64)
    lo, hi = arr.min(), arr.max()
    if hi == lo:
        return np.full(arr.shape, 128, dtype=np.uint8)
    return np.clip(np.rint((arr - lo) / (hi - lo) * 255.0), 0, 255).astype(np.uint8)


def write_pgm(arr: np.ndarray, path):
    gray = _to_gray(arr)
    h, w = gray.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(gray.tobytes())


def write_png(arr: np.ndarray, path):
    """Minimal 8-bit grayscale PNG writer (zlib, no external deps)."""
    gray = _to_gray(arr)
    h, w = gray.shape
    raw = b"".join(b"\x00" + gray[i].tobytes() for i in range(h))

    def chunk(tag, payload):
        body = tag + payload
        return struct.pack(">I", len(payload)) + body + struct.pack(">I", zlib.crc32(body))

    ihdr = struct.pack(">IIBBBBB", w, h, 8, 0, 0, 0, 0)
    blob = (
        b"\x89PNG\r\n\x1a\n"
        + chunk(b"IHDR", ihdr)
        + chunk(b"IDAT", zlib.compress(raw, 9))
        + chunk(b"IEND", b"")
    )
    with open(path, "wb") as fh:
        fh.write(blob)


def render_map(f: Field, channel: str, path, png: bool = False):
    """Write a grayscale map of one channel; deterministic bytes."""
    arr = f.channel(channel)
    if png or str(path).lower().endswith(".png"):
        write_png(arr, path)
    else:
        write_pgm(arr, path)
    return path
