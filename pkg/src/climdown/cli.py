"""Command-line interface.

Subcommands: gen-data, train, sample, evaluate, report, check-grad.
Every command takes --config/--set/--seed/--out; precedence is
defaults < config file < flags. Exit codes: 0 success, 1 usage error,
2 runtime error; runtime errors print one machine-parsable line
"climdown: error: <message>" on stderr.
"""

import argparse
import json
import os
import sys

from .config import ConfigError, load_config, parse_set_overrides
from .datagen import (
    DEFAULT_SPLIT_RATIOS,
    SyntheticSpec,
    degrade,
    generate_dataset,
    load_dataset,
    load_stats,
    split_counts,
)
from .estimators import train_diffusion, train_regression
from .experiments import (
    ALL_METHODS,
    IO_CONFIGS,
    LEARNED_METHODS,
    eval_pairs,
    make_estimator,
    run_matrix,
)
from .fields import FieldFileError, TARGET_CHANNEL, read_fields, write_fields
from .metrics import rmse
from .nn import CheckpointError, load_checkpoint, save_checkpoint
from .report import ReportRow, build_report, render_map, render_text, write_csv
from .validation import check_io_config

EXIT_USAGE = 1
EXIT_RUNTIME = 2


class CliParser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"climdown: usage error: {message}\n")
        sys.exit(EXIT_USAGE)


def _add_common(p):
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--seed", type=int, default=None,
                   help="override data/train/eval seeds at once")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   default=None, help="override one config key (repeatable)")


def _config_from(args):
    overrides = parse_set_overrides(args.set)
    if args.seed is not None:
        overrides.setdefault("data", {})["seed"] = args.seed
        overrides.setdefault("train", {})["seed"] = args.seed
        overrides.setdefault("eval", {})["seed"] = args.seed
    return load_config(args.config, overrides)


def build_parser() -> CliParser:
    parser = CliParser(
        prog="climdown",
        description="Conditional diffusion downscaling toolkit (synthetic desk-scale).",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("gen-data", help="generate the synthetic dataset files",
                       formatter_class=fmt)
    _add_common(p)

    p = sub.add_parser("train", help="train one model on the generated dataset",
                       formatter_class=fmt)
    _add_common(p)
    p.add_argument("--method", choices=sorted(LEARNED_METHODS), default="ddpm")
    p.add_argument("--io", choices=list(IO_CONFIGS), default="3in1out",
                   help="variable input/output configuration")
    p.add_argument("--data", default="data", help="dataset directory from gen-data")
    p.add_argument("--steps", type=int, default=None, help="training iterations (overrides train.iters)")
    p.add_argument("--batch-size", type=int, default=None, help="overrides train.batch_size")
    p.add_argument("--timesteps", type=int, default=None, help="overrides diffusion.timesteps")
    p.add_argument("--resume", default=None, help="checkpoint file to resume from")

    p = sub.add_parser("sample", help="downscale inputs with a trained diffusion model",
                       formatter_class=fmt)
    _add_common(p)
    p.add_argument("--checkpoint", required=True, help="checkpoint written by train")
    p.add_argument("--data", default="data", help="dataset directory (stats + test inputs)")
    p.add_argument("--input", default=None,
                   help="optional .cgf of low-resolution condition fields "
                        "(default: degraded test split)")
    p.add_argument("--n", type=int, default=2, help="number of inputs to downscale")
    p.add_argument("--png", action="store_true", help="also write PNG map renders")

    p = sub.add_parser("evaluate", help="evaluate methods on the test split",
                       formatter_class=fmt)
    _add_common(p)
    p.add_argument("--data", default="data", help="dataset directory")
    p.add_argument("--runs", default=None,
                   help="directory of train outputs (<method>_<io>_x<scale>/) for learned methods")
    p.add_argument("--methods", default=None,
                   help="comma list; learned methods may carry an io suffix like ddpm:3in1out")
    p.add_argument("--scales", default=None, help="comma list of scale factors (4,8)")

    p = sub.add_parser("report", help="run the experiment matrix and write findings",
                       formatter_class=fmt)
    _add_common(p)
    p.add_argument("--data", default="data", help="dataset directory")
    p.add_argument("--methods", default=",".join(ALL_METHODS), help="comma list of methods")
    p.add_argument("--io-configs", default=",".join(IO_CONFIGS), help="comma list of io configs")
    p.add_argument("--scales", default="4,8", help="comma list of scale factors")
    p.add_argument("--quick", action="store_true",
                   help="reduced iteration budget (fast directional check)")
    p.add_argument("--iters", type=int, default=None,
                   help="training iterations per learned cell (overrides config/quick)")
    p.add_argument("--eval-n", type=int, default=None,
                   help="evaluation subset size (0 = whole test split)")
    p.add_argument("--jobs", type=int, default=1, help="parallel cell processes")

    p = sub.add_parser("check-grad", help="finite-difference gradient verification",
                       formatter_class=fmt)
    _add_common(p)

    return parser


# ------------------------------------------------------------------ commands


def cmd_gen_data(args) -> int:
    cfg = _config_from(args)
    data = cfg.section("data")
    spec = SyntheticSpec(
        n_samples=data["n_samples"],
        height=data["height"],
        width=data["width"],
        seed=data["seed"],
    )
    ratios = tuple(data["split_ratios"])
    os.makedirs(args.out, exist_ok=True)
    digest = generate_dataset(spec, args.out, ratios)
    counts = split_counts(data["n_samples"], ratios)
    print(f"wrote {args.out}: train/val/test = {counts[0]}/{counts[1]}/{counts[2]} samples")
    print(f"dataset hash: {digest}")
    return 0


def _train_state(model, optimizer) -> dict:
    state = model.params.state_dict()
    state.update(optimizer.state_dict())
    return state


def _split_state(state):
    model_state = {k: v for k, v in state.items() if not k.startswith("opt.")}
    opt_state = {k: v for k, v in state.items() if k.startswith("opt.")}
    return model_state, opt_state


def run_training(method, io_config, cfg, data_dir, out_dir, resume=None, log=print):
    """Shared train-command body; returns (estimator, loss_rows)."""
    splits = load_dataset(data_dir)
    scale = cfg["data.scale"]
    hr_train = splits["train"]
    lr_train = [degrade(f, scale) for f in hr_train]

    train_cfg = cfg.section("train")
    train_cfg["timesteps"] = cfg["diffusion.timesteps"]
    train_cfg["beta_start"] = cfg["diffusion.beta_start"]
    train_cfg["beta_end"] = cfg["diffusion.beta_end"]
    est = make_estimator(method, io_config, scale, cfg.section("model"), train_cfg,
                         train_cfg["seed"])
    cond, target = est._prepare(lr_train, hr_train)

    iters = train_cfg["iters"]
    every = max(1, cfg["train.checkpoint_every"])
    os.makedirs(out_dir, exist_ok=True)
    ckpt_path = os.path.join(out_dir, "checkpoint.ckpt")

    if method == "ddpm":
        est.process_ = est._build_process(cond.shape[1], target.shape[1])
        est.model_ = est.process_.denoiser
        model = est.model_
        optimizer = est.process_.optimizer
    else:
        est.model_ = est._build(cond.shape[1], target.shape[1])
        model = est.model_
        from .nn import Adam

        optimizer = Adam(model.params)

    start_iter = 0
    if resume:
        model_state, opt_state = _split_state(load_checkpoint(resume))
        model.params.load_state_dict(model_state)
        optimizer.load_state_dict(opt_state)
        start_iter = optimizer.step_count
        log(f"resumed from {resume} at iteration {start_iter}")

    rows = []

    def on_iter(it, loss, lr):
        rows.append((it, loss, lr))
        if (it + 1) % every == 0 and (it + 1) < iters:
            snap = os.path.join(out_dir, f"checkpoint_{it + 1:06d}.ckpt")
            save_checkpoint(snap, _train_state(model, optimizer))
            save_checkpoint(ckpt_path, _train_state(model, optimizer))

    if method == "ddpm":
        train_diffusion(est.process_, cond, target, iters, train_cfg["batch_size"],
                        train_cfg["seed"], start_iter=start_iter, on_iter=on_iter)
    else:
        train_regression(model, cond, target, iters, train_cfg["batch_size"],
                         train_cfg["lr"], train_cfg["seed"], start_iter=start_iter,
                         optimizer=optimizer, on_iter=on_iter)

    save_checkpoint(ckpt_path, _train_state(model, optimizer))
    with open(os.path.join(out_dir, "loss_log.csv"), "w") as fh:
        fh.write("iter,loss,lr\n")
        for it, loss, lr in rows:
            fh.write(f"{it},{repr(loss)},{repr(lr)}\n")
    meta = {
        "method": method,
        "io_config": io_config,
        "scale": scale,
        "model": cfg.section("model"),
        "diffusion": cfg.section("diffusion"),
        "train": cfg.section("train"),
        "channels": list(hr_train[0].channels),
    }
    with open(os.path.join(out_dir, "run.json"), "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
    return est, rows


def cmd_train(args) -> int:
    overrides = {}
    if args.steps is not None:
        overrides.setdefault("train", {})["iters"] = args.steps
    if args.batch_size is not None:
        overrides.setdefault("train", {})["batch_size"] = args.batch_size
    if args.timesteps is not None:
        overrides.setdefault("diffusion", {})["timesteps"] = args.timesteps
    cfg = _config_from(args).with_overrides(overrides)
    est, rows = run_training(args.method, args.io, cfg, args.data, args.out,
                             resume=args.resume)
    last = rows[-1] if rows else (0, float("nan"), 0.0)
    print(f"trained {args.method} ({args.io}) for {len(rows)} iterations; "
          f"final loss {last[1]:.6g}")
    print(f"checkpoint: {os.path.join(args.out, 'checkpoint.ckpt')}")
    return 0


def load_run(run_dir_or_ckpt, data_dir):
    """Rebuild a fitted estimator from a train output directory."""
    if os.path.isdir(run_dir_or_ckpt):
        run_dir = run_dir_or_ckpt
        ckpt = os.path.join(run_dir, "checkpoint.ckpt")
    else:
        ckpt = run_dir_or_ckpt
        run_dir = os.path.dirname(ckpt) or "."
    meta_path = os.path.join(run_dir, "run.json")
    if not os.path.exists(meta_path):
        raise CheckpointError(f"{run_dir}: missing run.json next to the checkpoint")
    with open(meta_path) as fh:
        meta = json.load(fh)
    train_cfg = dict(meta["train"])
    train_cfg.update(meta["diffusion"])
    est = make_estimator(meta["method"], meta["io_config"], meta["scale"],
                         meta["model"], train_cfg, train_cfg["seed"])
    channels = tuple(meta["channels"])
    est.channels_ = channels
    est.target_names_ = check_io_config(meta["io_config"], channels, TARGET_CHANNEL)
    est.stats_ = load_stats(data_dir)
    n_target = len(est.target_names_)
    model_state, _ = _split_state(load_checkpoint(ckpt))
    if meta["method"] == "ddpm":
        est.process_ = est._build_process(len(channels), n_target)
        est.model_ = est.process_.denoiser
    else:
        est.model_ = est._build(len(channels), n_target)
    est.model_.params.load_state_dict(model_state)
    return est, meta


def cmd_sample(args) -> int:
    cfg = _config_from(args)
    est, meta = load_run(args.checkpoint, args.data)
    if meta["method"] != "ddpm":
        raise ValueError(f"sample requires a ddpm checkpoint, got {meta['method']}")
    scale = meta["scale"]
    if args.input:
        lr_fields = read_fields(args.input)[: args.n]
        if not lr_fields:
            raise ValueError(f"{args.input}: no input fields")
    else:
        splits = load_dataset(args.data)
        lr_fields = [degrade(f, scale) for f in splits["test"][: args.n]]
    seed = cfg["eval.seed"]
    preds = est.predict(lr_fields, sample_seed=seed)
    os.makedirs(args.out, exist_ok=True)
    out_cgf = os.path.join(args.out, "samples.cgf")
    write_fields(out_cgf, preds)
    for i, f in enumerate(preds):
        render_map(f, f.channels[0], os.path.join(args.out, f"sample_{i:03d}.pgm"))
        if args.png:
            render_map(f, f.channels[0], os.path.join(args.out, f"sample_{i:03d}.png"))
    print(f"wrote {len(preds)} downscaled samples to {out_cgf} "
          f"({preds[0].height}x{preds[0].width})")
    return 0


def _parse_method_token(token):
    if ":" in token:
        method, io = token.split(":", 1)
    else:
        method, io = token, None
    method = method.strip()
    if method not in ALL_METHODS:
        raise ValueError(f"unknown method {method!r} (known: {', '.join(ALL_METHODS)})")
    if method in LEARNED_METHODS:
        io = io or "3in1out"
        if io not in IO_CONFIGS:
            raise ValueError(f"unknown io config {io!r}")
    else:
        io = "-"
    return method, io


def cmd_evaluate(args) -> int:
    cfg = _config_from(args)
    methods = (args.methods.split(",") if args.methods else cfg["eval.methods"])
    scales = ([int(s) for s in args.scales.split(",")] if args.scales
              else cfg["eval.scales"])
    eval_n = cfg["eval.n_samples"]
    splits = load_dataset(args.data)
    rows = []
    from .datagen import dataset_hash

    for scale in scales:
        lr_test, hr_test = eval_pairs(splits, scale, eval_n)
        for token in methods:
            method, io = _parse_method_token(str(token))
            if method in LEARNED_METHODS:
                if not args.runs:
                    raise ValueError(
                        f"method {method} needs --runs with trained checkpoints"
                    )
                run_dir = os.path.join(args.runs, f"{method}_{io}_x{scale}")
                if not os.path.isdir(run_dir):
                    raise CheckpointError(f"missing trained run {run_dir}")
                est, _ = load_run(run_dir, args.data)
                preds = (est.predict(lr_test, sample_seed=cfg["eval.seed"])
                         if method == "ddpm" else est.predict(lr_test))
            else:
                est = make_estimator(method, io, scale, cfg.section("model"),
                                     cfg.section("train"), cfg["train.seed"])
                preds = est.fit().predict(lr_test)
            rows.append(ReportRow(method, io, scale,
                                  rmse(preds, hr_test, (TARGET_CHANNEL,)), len(hr_test)))

    report = build_report(rows, metadata={
        "dataset_hash": dataset_hash(args.data),
        "seed": cfg["eval.seed"],
        "n_samples": eval_n or "all",
        "units": "synthetic raw units",
    })
    os.makedirs(args.out, exist_ok=True)
    write_csv(report, os.path.join(args.out, "report.csv"))
    text = render_text(report)
    with open(os.path.join(args.out, "report.txt"), "w") as fh:
        fh.write(text)
    print(text, end="")
    return 0


def cmd_report(args) -> int:
    cfg = _config_from(args)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    io_configs = [s.strip() for s in args.io_configs.split(",") if s.strip()]
    scales = [int(s) for s in args.scales.split(",")]
    train_iters = args.iters
    eval_n = args.eval_n
    if args.quick:
        if train_iters is None:
            train_iters = 250
        if eval_n is None:
            eval_n = 16
    os.makedirs(args.out, exist_ok=True)
    records, findings = run_matrix(
        args.data, args.out, cfg, methods=methods, io_configs=io_configs,
        scales=scales, train_iters=train_iters, eval_n=eval_n, jobs=args.jobs,
        log=print,
    )
    with open(findings) as fh:
        for line in fh:
            if line.startswith("verdict_"):
                print(line.rstrip())
    print(f"findings: {findings}")
    return 0


def cmd_check_grad(args) -> int:
    from .gradcheck import run_suite

    seed = args.seed if args.seed is not None else 0
    ok = run_suite(seed=seed)
    if not ok:
        raise ValueError("gradient check failed")
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "sample": cmd_sample,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
    "check-grad": cmd_check_grad,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ValueError, OSError, KeyError, ConfigError, CheckpointError,
            FieldFileError) as e:
        sys.stderr.write(f"climdown: error: {e}\n")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
