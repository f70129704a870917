"""Command-line surface.

    pathroute <synth|train|eval|route-map|sweep> --config FILE
              [--seed N] [--out DIR] [--stage 1|2] [--init CKPT]
              [--force] [--non-regulated]

Configs are flat UTF-8 ``key = value`` files; command-line flags
override file values.  Unknown keys are rejected.  Every command echoes
its config verbatim into the output directory and refuses to write into
a non-empty directory without --force.

Exit codes: 0 success, 1 runtime/numeric failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .distortion import (DegradationSpec, NoiseSpec, PairDirectory, extract_patches,
                         make_dataset, make_eval_pairs)
from .errors import ConfigError, NumericError, UsageError
from .imageio import read_image, write_f32, write_image
from .metrics import evaluate
from .model import (ModelConfig, count_flops, max_route_flops, min_route_flops)
from .reward import RewardConfig
from .trainer import (TrainConfig, load_checkpoint, reset_optimizer, train)

# key -> (type, default); None default means "required where used"
SCHEMA = {
    "blocks": (int, 6),
    "paths": (int, 2),
    "pf_conv_layers": (int, 2),
    "features": (int, 32),
    "hidden": (int, 32),
    "patch": (int, 63),
    "channels": (int, 3),
    "alpha": (float, 0.1),
    "lr": (float, 2e-4),
    "pf_lr_scale": (float, 1.0),
    "stage1_iters": (int, 20000),
    "stage2_iters": (int, 20000),
    "batch": (int, 32),
    "log_interval": (int, 100),
    "ckpt_interval": (int, 5000),
    "penalty": (float, 8e-6),
    "threshold": (float, 5e-4),
    "task": (str, "denoise"),
    "noise": (str, "uniform"),
    "sigma_max": (float, 50.0),
    "sigma_eval": (float, None),
    "blur_max": (float, 5.0),
    "quality_min": (int, 10),
    "quality_max": (int, 100),
    "source": (str, "procedural"),
    "source_size": (int, 160),
    "data": (str, "procedural"),
    "count": (int, 1000),
    "seed": (int, 0),
    "eval_count": (int, 4),
    "image_size": (int, 169),
    "penalties": (str, "3e-6,5e-6,8e-6"),
    "finetune_iters": (int, 2000),
    "image": (str, None),
    "out": (str, None),
    "init": (str, None),
}


def parse_config(path) -> dict:
    """Read a flat ``key = value`` file against the schema."""
    cfg = {k: d for k, (_, d) in SCHEMA.items()}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in SCHEMA:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        typ, _ = SCHEMA[key]
        try:
            cfg[key] = typ(value)
        except ValueError as e:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {e}") from None
    return cfg


def prepare_out(out, force: bool, config_path) -> Path:
    if out is None:
        raise ConfigError("no output directory: set 'out' in the config or pass --out")
    out = Path(out)
    if out.exists() and any(out.iterdir()) and not force:
        raise ConfigError(f"{out}: not empty; pass --force to write into it")
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_bytes(Path(config_path).read_bytes())
    return out


def _echo_resolved(out: Path, cfg: dict):
    lines = [f"{k} = {cfg[k]}" for k in sorted(cfg) if cfg[k] is not None]
    (out / "resolved.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _model_config(cfg: dict) -> ModelConfig:
    return ModelConfig(blocks=cfg["blocks"], paths=cfg["paths"],
                       pf_conv_layers=cfg["pf_conv_layers"], features=cfg["features"],
                       hidden=cfg["hidden"], patch=cfg["patch"], channels=cfg["channels"])


def _spec(cfg: dict):
    if cfg["task"] == "denoise":
        return NoiseSpec(kind=cfg["noise"], sigma_max=cfg["sigma_max"], seed=cfg["seed"])
    if cfg["task"] == "mixed":
        return DegradationSpec(blur_sigma=cfg["blur_max"], noise_sigma=cfg["sigma_max"],
                               quality=(cfg["quality_min"], cfg["quality_max"]))
    raise ConfigError(f"unknown task {cfg['task']!r} (denoise|mixed)")


def _sources(cfg: dict):
    if cfg["source"] == "procedural":
        return None
    src_dir = Path(cfg["source"])
    images = sorted(src_dir.glob("*.ppm")) + sorted(src_dir.glob("*.pgm"))
    if not images:
        raise ConfigError(f"{src_dir}: no .ppm/.pgm source images found")
    return [read_image(p) for p in images]


def _train_config(cfg: dict) -> TrainConfig:
    reward = RewardConfig(penalty=cfg["penalty"], threshold=cfg["threshold"])
    return TrainConfig(alpha=cfg["alpha"], lr0=cfg["lr"],
                       iters_stage1=cfg["stage1_iters"], iters_stage2=cfg["stage2_iters"],
                       batch=cfg["batch"], seed=cfg["seed"], reward=reward,
                       log_interval=cfg["log_interval"], ckpt_interval=cfg["ckpt_interval"],
                       pf_lr_scale=cfg["pf_lr_scale"])


def _train_data(cfg: dict):
    if cfg["data"] == "procedural":
        return make_dataset(None, _spec(cfg), count=1 << 62, seed=cfg["seed"],
                            patch=cfg["patch"], channels=cfg["channels"],
                            source_size=cfg["source_size"])
    return PairDirectory(cfg["data"])


def _eval_pairs(cfg: dict):
    return make_eval_pairs(cfg["eval_count"], cfg["image_size"], _spec(cfg),
                           seed=cfg["seed"] + 1, channels=cfg["channels"],
                           sigma_eval=cfg["sigma_eval"])


def _holdout(cfg: dict, n: int = 8):
    stream = make_dataset(None, _spec(cfg), count=n, seed=cfg["seed"] + 2,
                          patch=cfg["patch"], channels=cfg["channels"])
    return [(s.degraded, s.clean) for s in stream]


# -- commands -----------------------------------------------------------------


def cmd_synth(cfg: dict, out: Path) -> int:
    stream = make_dataset(_sources(cfg), _spec(cfg), count=cfg["count"], seed=cfg["seed"],
                          patch=cfg["patch"], channels=cfg["channels"],
                          source_size=cfg["source_size"])
    with open(out / "manifest.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "row", "col", "sigma", "blur", "quality"])
        for i, s in enumerate(stream):
            write_f32(out / f"{i:06d}_deg.f32", s.degraded)
            write_f32(out / f"{i:06d}_cln.f32", s.clean)
            writer.writerow([i, s.meta["row"], s.meta["col"],
                             f"{s.meta.get('sigma', 0.0):.4f}",
                             f"{s.meta.get('blur', 0.0):.4f}",
                             f"{s.meta.get('quality', 100.0):.2f}"])
    print(f"wrote {cfg['count']} pairs to {out}")
    return 0


def _new_model(cfg: dict):
    from .model import MultiPathRestorer

    return MultiPathRestorer(_model_config(cfg), seed=cfg["seed"])


def cmd_train(cfg: dict, out: Path, stage: int, init) -> int:
    if stage == 2:
        if init is None:
            raise ConfigError("--stage 2 requires --init pointing at a stage-1 checkpoint")
        model, _ = load_checkpoint(init)
        reset_optimizer(model)
    elif init is not None:
        model, _ = load_checkpoint(init)
    else:
        model = _new_model(cfg)
    tc = _train_config(cfg)
    state = train(model, _train_data(cfg), tc, stage, out, holdout=_holdout(cfg))
    print(f"stage {stage} done at iteration {state.iteration}; "
          f"checkpoints and metrics_stage{stage}.csv in {out}")
    return 0


def cmd_eval(cfg: dict, out: Path, init) -> int:
    if init is None:
        raise ConfigError("eval requires --init CKPT")
    model, _ = load_checkpoint(init)
    pairs = _eval_pairs(cfg)
    names = [f"image{i:03d}" for i in range(len(pairs))]
    report = evaluate(model, pairs, names)
    report.to_csv(out / "report.csv")
    (out / "report.json").write_text(report.to_text() + "\n", encoding="utf-8")
    for name, (distorted, clean) in zip(names, pairs):
        restored, _ = model.restore_image(distorted)
        write_image(out / f"{name}_restored.ppm", restored)
        write_image(out / f"{name}_input.ppm", distorted)
        write_image(out / f"{name}_clean.ppm", clean)
    print(report.to_text())
    return 0


GREEN = np.array([0, 200, 0], dtype=np.float64)
RED = np.array([220, 0, 0], dtype=np.float64)


def cmd_route_map(cfg: dict, out: Path, init) -> int:
    if init is None:
        raise ConfigError("route-map requires --init CKPT")
    model, _ = load_checkpoint(init)
    if cfg["image"] is not None:
        image = read_image(cfg["image"])
    else:
        # no input image given: synthesize one under the configured noise
        pairs = make_eval_pairs(1, cfg["image_size"], _spec(cfg), seed=cfg["seed"],
                                channels=cfg["channels"], sigma_eval=cfg["sigma_eval"])
        image = pairs[0][0]
    write_image(out / "input.ppm", image)
    restored, traces = model.restore_image(image)
    write_image(out / "restored.ppm", restored)

    grid, _ = extract_patches(image, model.cfg.patch)
    lo, hi = min_route_flops(model.cfg), max_route_flops(model.cfg)
    heat = np.zeros((3,) + grid.padded_shape[1:], dtype=np.float32)
    rows_csv = []
    k = 0
    for r in grid.rows:
        for c in grid.cols:
            tr = traces[k]
            fl = count_flops(tr, model.cfg)
            frac = 0.0 if hi == lo else (fl - lo) / (hi - lo)
            color = (GREEN * (1 - frac) + RED * frac) / 255.0
            heat[:, r : r + grid.patch, c : c + grid.patch] = color[:, None, None]
            rows_csv.append([r, c] + tr.actions + [fl])
            k += 1
    write_image(out / "route_map.ppm", heat[:, : image.shape[1], : image.shape[2]])
    with open(out / "regions.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "col"] + [f"a{i + 1}" for i in range(model.cfg.blocks)] + ["flops"])
        writer.writerows(rows_csv)
    print(f"route map over {k} regions written to {out}")
    return 0


def cmd_sweep(cfg: dict, out: Path, init, non_regulated: bool) -> int:
    if init is None:
        raise ConfigError("sweep requires --init pointing at a stage-1 checkpoint")
    try:
        penalties = [float(tok) for tok in cfg["penalties"].split(",") if tok.strip()]
    except ValueError as e:
        raise ConfigError(f"bad penalties list: {e}") from None
    if not penalties:
        raise ConfigError("penalties list is empty")
    variants = [True, False] if non_regulated else [True]
    pairs = _eval_pairs(cfg)
    rows = []
    for regulated in variants:
        for p in penalties:
            tag = f"p{p:g}" + ("" if regulated else "_nonreg")
            run_dir = out / tag
            model, _ = load_checkpoint(init)
            reset_optimizer(model)
            reward = RewardConfig(penalty=p, threshold=cfg["threshold"], regulated=regulated)
            tc = TrainConfig(alpha=cfg["alpha"], lr0=cfg["lr"],
                             iters_stage1=cfg["stage1_iters"],
                             iters_stage2=cfg["finetune_iters"], batch=cfg["batch"],
                             seed=cfg["seed"], reward=reward,
                             log_interval=cfg["log_interval"], ckpt_interval=0,
                             pf_lr_scale=cfg["pf_lr_scale"])
            train(model, _train_data(cfg), tc, 2, run_dir, holdout=_holdout(cfg))
            report = evaluate(model, pairs)
            rows.append([f"{p:g}", f"{report.psnr:.4f}", f"{report.mean_flops:.1f}",
                         int(regulated)])
            print(f"{tag}: psnr={report.psnr:.3f} mean_flops={report.mean_flops:.3e}")
    with open(out / "sweep.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["p", "psnr", "mean_flops", "regulated"])
        writer.writerows(rows)
    print(f"sweep results in {out / 'sweep.csv'}")
    return 0


# -- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pathroute",
                                     description="Dynamic-routing image restoration pipeline")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("synth", "train", "eval", "route-map", "sweep"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="flat key = value config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--stage", type=int, choices=(1, 2), default=1)
        p.add_argument("--init", default=None, help="checkpoint to start from")
        p.add_argument("--force", action="store_true",
                       help="allow writing into a non-empty output directory")
        p.add_argument("--non-regulated", action="store_true",
                       help="sweep: also run the difficulty-off ablation")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.out is not None:
            cfg["out"] = args.out
        if args.init is not None:
            cfg["init"] = args.init
        out = prepare_out(cfg["out"], args.force, args.config)
        _echo_resolved(out, cfg)
        if args.command == "synth":
            return cmd_synth(cfg, out)
        if args.command == "train":
            return cmd_train(cfg, out, args.stage, cfg["init"])
        if args.command == "eval":
            return cmd_eval(cfg, out, cfg["init"])
        if args.command == "route-map":
            return cmd_route_map(cfg, out, cfg["init"])
        if args.command == "sweep":
            return cmd_sweep(cfg, out, cfg["init"], args.non_regulated)
        raise UsageError(f"unknown command {args.command!r}")
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (UsageError, NumericError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
