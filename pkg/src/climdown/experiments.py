"""Experiment matrix: methods x io-configs x scales, with cached cells
and a findings report of directional trend verdicts.

Numeric scores from the synthetic data are not comparable to published
CESM results; what the matrix checks is the direction of the trends
(8x harder than 4x for every method, single-target diffusion vs
all-target diffusion, diffusion output sharper than bicubic).
"""

import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from .datagen import degrade, load_dataset
from .estimators import (
    BicubicUpscaler,
    BilinearUpscaler,
    DiffusionDownscaler,
    SRResNetDownscaler,
    UNetDownscaler,
)
from .fields import TARGET_CHANNEL
from .metrics import highfreq_energy, rmse
from .report import ReportRow, build_report, render_text, write_csv

INTERP_METHODS = ("bilinear", "bicubic")
LEARNED_METHODS = ("srresnet", "unet", "ddpm")
ALL_METHODS = INTERP_METHODS + LEARNED_METHODS
IO_CONFIGS = ("3in3out", "3in1out")


@dataclass(frozen=True)
class MatrixCell:
    method: str
    io_config: str  # "-" for interpolation methods
    scale: int
    seed: int


def cell_seed(method, io_config, scale, base_seed) -> int:
    digest = hashlib.sha256(
        f"{method}|{io_config}|{scale}|{base_seed}".encode()
    ).digest()
    return int.from_bytes(digest[:4], "little")


def build_matrix(methods, io_configs, scales, base_seed) -> list:
    """Fully specified cell list; interpolation ignores io_config."""
    cells = []
    for scale in scales:
        for method in methods:
            ios = ("-",) if method in INTERP_METHODS else tuple(io_configs)
            for io in ios:
                cells.append(
                    MatrixCell(method, io, scale, cell_seed(method, io, scale, base_seed))
                )
    return cells


def make_estimator(method, io_config, scale, model_cfg, train_cfg, seed):
    """Estimator factory shared by the matrix and the CLI."""
    if method == "bilinear":
        return BilinearUpscaler(scale=scale)
    if method == "bicubic":
        return BicubicUpscaler(scale=scale)
    common = dict(
        scale=scale,
        io_config=io_config,
        iters=train_cfg["iters"],
        batch_size=train_cfg["batch_size"],
        lr=train_cfg["lr"],
        seed=seed,
    )
    if method == "unet":
        return UNetDownscaler(
            base_width=model_cfg["base_width"],
            level_multipliers=tuple(model_cfg["level_multipliers"]),
            blocks_per_level=model_cfg["blocks_per_level"],
            **common,
        )
    if method == "srresnet":
        return SRResNetDownscaler(**common)
    if method == "ddpm":
        return DiffusionDownscaler(
            timesteps=train_cfg.get("timesteps", 100),
            beta_start=train_cfg.get("beta_start", 1e-4),
            beta_end=train_cfg.get("beta_end", 0.02),
            base_width=model_cfg["base_width"],
            level_multipliers=tuple(model_cfg["level_multipliers"]),
            blocks_per_level=model_cfg["blocks_per_level"],
            time_embed_dim=model_cfg["time_embed_dim"],
            **common,
        )
    raise ValueError(f"unknown method {method!r}")


def cell_key(cell: MatrixCell, model_cfg, train_cfg, eval_n, dataset_hash) -> str:
    payload = json.dumps(
        {
            "cell": [cell.method, cell.io_config, cell.scale, cell.seed],
            "model": model_cfg,
            "train": train_cfg,
            "eval_n": eval_n,
            "dataset": dataset_hash,
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def eval_pairs(splits, scale, eval_n):
    """(lr_raw, hr_raw) evaluation pairs from the raw test split."""
    hr = splits["test"]
    if eval_n:
        hr = hr[:eval_n]
    lr = [degrade(f, scale) for f in hr]
    return lr, hr


def run_cell(cell: MatrixCell, data_dir, model_cfg, train_cfg, eval_n) -> dict:
    """Train (if needed) and evaluate one cell; returns a result record."""
    t0 = time.perf_counter()
    splits = load_dataset(data_dir)
    hr_train = splits["train"]
    lr_train = [degrade(f, cell.scale) for f in hr_train]
    lr_test, hr_test = eval_pairs(splits, cell.scale, eval_n)

    est = make_estimator(cell.method, cell.io_config, cell.scale, model_cfg, train_cfg, cell.seed)
    if cell.method in LEARNED_METHODS:
        est.fit(lr_train, hr_train)
    else:
        est.fit()
    preds = (
        est.predict(lr_test, sample_seed=cell.seed)
        if cell.method == "ddpm"
        else est.predict(lr_test)
    )
    score = rmse(preds, hr_test, (TARGET_CHANNEL,))
    hf = sum(highfreq_energy(p, TARGET_CHANNEL) for p in preds) / len(preds)
    hf_truth = sum(highfreq_energy(f, TARGET_CHANNEL) for f in hr_test) / len(hr_test)
    return {
        "method": cell.method,
        "io_config": cell.io_config,
        "scale": cell.scale,
        "seed": cell.seed,
        "rmse": score,
        "n": len(hr_test),
        "highfreq": hf,
        "highfreq_truth": hf_truth,
        "wall_seconds": time.perf_counter() - t0,
    }


def _cell_worker(args):
    cell, data_dir, model_cfg, train_cfg, eval_n, path = args
    record = run_cell(cell, data_dir, model_cfg, train_cfg, eval_n)
    with open(path, "w") as fh:
        json.dump(record, fh, indent=1, sort_keys=True)
    return record


def run_matrix(data_dir, out_dir, config, methods=ALL_METHODS, io_configs=IO_CONFIGS,
               scales=(4, 8), train_iters=None, eval_n=None, jobs=1, log=None):
    """Run every cell (skipping cached ones) and write the findings report.

    train_iters/eval_n override the config for reduced-budget runs.
    Returns (records, findings_path).
    """
    log = log or (lambda msg: None)
    model_cfg = config.section("model")
    train_cfg = config.section("train")
    train_cfg["timesteps"] = config["diffusion.timesteps"]
    train_cfg["beta_start"] = config["diffusion.beta_start"]
    train_cfg["beta_end"] = config["diffusion.beta_end"]
    if train_iters is not None:
        train_cfg["iters"] = int(train_iters)
    if eval_n is None:
        eval_n = config["eval.n_samples"]

    from .datagen import dataset_hash

    ds_hash = dataset_hash(data_dir)
    cells = build_matrix(methods, io_configs, scales, train_cfg["seed"])
    cells_dir = os.path.join(out_dir, "cells")
    os.makedirs(cells_dir, exist_ok=True)

    pending, records = [], []
    for cell in cells:
        key = cell_key(cell, model_cfg, train_cfg, eval_n, ds_hash)
        path = os.path.join(cells_dir, f"{key}.json")
        if os.path.exists(path):
            with open(path) as fh:
                records.append(json.load(fh))
            log(f"cell {cell.method}/{cell.io_config}/x{cell.scale}: cached")
        else:
            pending.append((cell, data_dir, model_cfg, train_cfg, eval_n, path))

    def _fail_record(cell, err):
        return {
            "method": cell.method,
            "io_config": cell.io_config,
            "scale": cell.scale,
            "error": str(err),
        }

    if pending and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [(args[0], pool.submit(_cell_worker, args)) for args in pending]
            for cell, fut in futures:
                try:
                    record = fut.result()
                except Exception as e:  # record the failure, keep the matrix going
                    log(f"cell {cell.method}/{cell.io_config}/x{cell.scale} FAILED: {e}")
                    records.append(_fail_record(cell, e))
                    continue
                records.append(record)
                log(_cell_line(record))
    else:
        for args in pending:
            try:
                record = _cell_worker(args)
            except Exception as e:
                cell = args[0]
                log(f"cell {cell.method}/{cell.io_config}/x{cell.scale} FAILED: {e}")
                records.append(_fail_record(cell, e))
                continue
            records.append(record)
            log(_cell_line(record))

    findings = write_findings(out_dir, records, ds_hash, train_cfg, eval_n)
    return records, findings


def _cell_line(r):
    return (
        f"cell {r['method']}/{r['io_config']}/x{r['scale']}: "
        f"rmse={r['rmse']:.6g} n={r['n']} ({r['wall_seconds']:.1f}s)"
    )


def _verdict(flag: bool) -> str:
    return "PASS" if flag else "FAIL"


def trend_verdicts(records) -> dict:
    """The three directional claims checked against the produced numbers."""
    ok = [r for r in records if "error" not in r]
    by = {(r["method"], r["io_config"], r["scale"]): r for r in ok}

    pairs_84 = []
    for (method, io, scale), r in by.items():
        if scale != 4:
            continue
        r8 = by.get((method, io, 8))
        if r8:
            pairs_84.append((method, io, r["rmse"], r8["rmse"]))
    v_a = bool(pairs_84) and all(r8 > r4 for _, _, r4, r8 in pairs_84)

    one = by.get(("ddpm", "3in1out", 4))
    three = by.get(("ddpm", "3in3out", 4))
    v_b = None
    if one and three:
        v_b = one["rmse"] < three["rmse"]

    bic = by.get(("bicubic", "-", 4))
    v_c = None
    if one and bic:
        v_c = one["highfreq"] > bic["highfreq"]
    return {
        "8x_worse_than_4x": (v_a, pairs_84),
        "ddpm_3in1out_beats_3in3out_4x": (v_b, (one, three)),
        "ddpm_sharper_than_bicubic_4x": (v_c, (one, bic)),
    }


def write_findings(out_dir, records, ds_hash, train_cfg, eval_n):
    """findings.md with one explicit verdict line per trend claim,
    plus the consolidated CSV that mirrors the evaluate output."""
    ok = [r for r in records if "error" not in r]
    rows = [
        ReportRow(r["method"], r["io_config"], r["scale"], r["rmse"], r["n"]) for r in ok
    ]
    report = build_report(
        rows,
        metadata={
            "dataset_hash": ds_hash,
            "train_iters": train_cfg["iters"],
            "eval_n": eval_n or "all",
            "seed": train_cfg["seed"],
            "units": "synthetic raw units (not comparable to published values)",
        },
    )
    write_csv(report, os.path.join(out_dir, "consolidated.csv"))

    verdicts = trend_verdicts(records)
    lines = ["# Experiment matrix findings", ""]
    lines.append("Synthetic-data desk-scale run; trends are directional checks,")
    lines.append("not numeric reproductions of published scores.")
    lines.append("")
    lines.append("## Results")
    lines.append("")
    lines.append("```")
    lines.append(render_text(report).rstrip())
    lines.append("```")
    lines.append("")
    lines.append("## Trend verdicts")
    lines.append("")

    v_a, pairs = verdicts["8x_worse_than_4x"]
    lines.append(f"verdict_8x_worse_than_4x: {_verdict(v_a)}")
    for method, io, r4, r8 in sorted(pairs):
        rel = "<" if r4 < r8 else ">="
        lines.append(f"  - {method}/{io}: 4x {r4:.6g} {rel} 8x {r8:.6g}")

    v_b, (one, three) = verdicts["ddpm_3in1out_beats_3in3out_4x"]
    if v_b is None:
        lines.append("verdict_ddpm_3in1out_beats_3in3out_4x: NOT-RUN")
    else:
        lines.append(f"verdict_ddpm_3in1out_beats_3in3out_4x: {_verdict(v_b)}")
        lines.append(
            f"  - ddpm 3in1out {one['rmse']:.6g} vs 3in3out {three['rmse']:.6g} at 4x"
        )

    v_c, (one_c, bic) = verdicts["ddpm_sharper_than_bicubic_4x"]
    if v_c is None:
        lines.append("verdict_ddpm_sharper_than_bicubic_4x: NOT-RUN")
    else:
        lines.append(f"verdict_ddpm_sharper_than_bicubic_4x: {_verdict(v_c)}")
        lines.append(
            f"  - laplacian energy: ddpm {one_c['highfreq']:.6g} vs bicubic "
            f"{bic['highfreq']:.6g} (truth {one_c['highfreq_truth']:.6g})"
        )

    failures = [r for r in records if "error" in r]
    if failures:
        lines.append("")
        lines.append("## Failed cells")
        for r in failures:
            lines.append(f"  - {r['method']}/{r['io_config']}/x{r['scale']}: {r['error']}")

    lines.append("")
    path = os.path.join(out_dir, "findings.md")
    with open(path, "w") as fh:
        fh.write("\n".join(lines))
    return path
