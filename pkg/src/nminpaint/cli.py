"""Command-line interface.

Subcommands: ``synth-data``, ``augment``, ``gen-masks``, ``train``,
``evaluate``, ``infer``.  Global flags (before the subcommand): ``--config``
reads a flat ``key = value`` file whose keys equal the flag names (flags on
the command line override it), ``--log`` sets verbosity and ``--threads``
pins the torch thread count (1 guarantees bit-determinism).

Exit codes: 0 success, 1 validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

log = logging.getLogger("nminpaint")


class UsageError(Exception):
    """Invalid flags, config keys, or argument combinations."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _str2bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"cannot interpret {text!r} as a boolean")


def build_parser():
    root = _Parser(prog="nminpaint",
                   description="GAN inpainting of facial normal maps")
    root.add_argument("--config", metavar="PATH",
                      help="flat key = value file; flags override it")
    root.add_argument("--log", choices=["quiet", "info", "debug"],
                      default="info", help="log verbosity")
    root.add_argument("--threads", type=int, default=1, metavar="N",
                      help="torch threads (1 = bit-deterministic)")
    sub = root.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("synth-data", parents=[], prog="nminpaint synth-data",
                       help="render an analytic normal-map dataset")
    p.add_argument("--count", type=int, default=64, help="number of images")
    p.add_argument("--size", type=int, default=64, help="image side in pixels")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, metavar="DIR")

    p = sub.add_parser("augment", prog="nminpaint augment",
                       help="expand a directory of normal maps 4x")
    p.add_argument("--in", dest="in_dir", required=True, metavar="DIR")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--rot-limit", type=float, default=20.0,
                   help="rotation limit in degrees")
    p.add_argument("--zoom-limit", type=float, default=0.10,
                   help="zoom limit as a fraction")
    p.add_argument("--erode", type=int, default=1,
                   help="foreground erosion radius in pixels")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("gen-masks", prog="nminpaint gen-masks",
                       help="write occlusion masks as grayscale PNGs")
    p.add_argument("--style", choices=["lines", "blob", "scatter"],
                   default="lines")
    p.add_argument("--count", type=int, default=10, help="number of masks")
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--elements", type=int, default=None,
                   help="lines/blobs per mask (default: style-specific draw)")
    p.add_argument("--max-thickness", type=int, default=12)
    p.add_argument("--radius-min", type=float, default=None)
    p.add_argument("--radius-max", type=float, default=None)

    p = sub.add_parser("train", prog="nminpaint train",
                       help="train the inpainting GAN")
    p.add_argument("--data", metavar="DIR",
                   help="dataset root with train/ (and optional test/) splits")
    p.add_argument("--synth", type=int, metavar="N",
                   help="train on N synthetic images instead of a dataset")
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--mask-style", choices=["lines", "blob", "scatter"],
                   default="lines")
    p.add_argument("--no-mask-channel", action="store_true",
                   help="feed the generator only the masked image (3 channels)")
    p.add_argument("--lambda-rec", type=float, default=999.0)
    p.add_argument("--lambda-adv", type=float, default=1.0)
    p.add_argument("--disc-period", type=int, default=1,
                   help="generator steps per discriminator update")
    p.add_argument("--disc-gate", type=float, default=None,
                   help="skip disc updates while rolling accuracy exceeds this")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--eval-every", type=int, default=1, metavar="EPOCHS")
    p.add_argument("--panel-every", type=int, default=5, metavar="EPOCHS")
    p.add_argument("--max-steps", type=int, default=None,
                   help="stop after this many generator steps")
    p.add_argument("--resume", metavar="CKPT",
                   help="continue from a training checkpoint")
    p.add_argument("--rec-variant", choices=["per_pixel", "global"],
                   default="per_pixel")
    p.add_argument("--masked-only", action="store_true",
                   help="weight the reconstruction loss to occluded pixels")
    p.add_argument("--skips", action="store_true",
                   help="enable U-Net style skip connections (experimental)")
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--base-width", type=int, default=64)

    p = sub.add_parser("evaluate", prog="nminpaint evaluate",
                       help="compute metrics for a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True, metavar="CKPT")
    p.add_argument("--data", metavar="DIR")
    p.add_argument("--synth", type=int, metavar="N")
    p.add_argument("--seed", type=int, default=0,
                   help="seed for --synth evaluation data")
    p.add_argument("--out", required=True, metavar="DIR")

    p = sub.add_parser("infer", prog="nminpaint infer",
                       help="inpaint one masked normal map")
    p.add_argument("--checkpoint", required=True, metavar="CKPT")
    p.add_argument("--image", required=True, metavar="PNG")
    p.add_argument("--mask", required=True, metavar="PNG")
    p.add_argument("--out", required=True, metavar="DIR")

    return root, sub


def _load_config_file(path: str) -> dict:
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        values[key.strip()] = value.strip()
    return values


def _apply_config(values: dict, root, sub, command):
    parsers = [root]
    if command is not None and command in sub.choices:
        parsers.append(sub.choices[command])
    actions = {}
    for parser in parsers:
        for action in parser._actions:
            for opt in action.option_strings:
                if opt.startswith("--"):
                    actions[opt[2:]] = (parser, action)
    for key, raw in values.items():
        if key == "config":
            raise UsageError("config files cannot nest another config")
        if key not in actions:
            raise UsageError(f"unknown config key {key!r} for "
                             f"command {command or '(none)'}")
        parser, action = actions[key]
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            value = _str2bool(raw)
        elif action.type is not None:
            try:
                value = action.type(raw)
            except (TypeError, ValueError) as exc:
                raise UsageError(f"config key {key!r}: bad value {raw!r} "
                                 f"({exc})") from exc
        else:
            value = raw
        if action.choices and value not in action.choices:
            raise UsageError(f"config key {key!r}: {value!r} is not one of "
                             f"{sorted(action.choices)}")
        parser.set_defaults(**{action.dest: value})


def _find_command(argv, sub) -> str | None:
    skip_next = False
    for token in argv:
        if skip_next:
            skip_next = False
            continue
        if token in ("--config", "--log", "--threads"):
            skip_next = True
            continue
        if token.startswith("-"):
            continue
        if token in sub.choices:
            return token
        return None
    return None


def parse_args(argv):
    root, sub = build_parser()
    config_path = None
    for i, token in enumerate(argv):
        if token == "--config" and i + 1 < len(argv):
            config_path = argv[i + 1]
        elif token.startswith("--config="):
            config_path = token.split("=", 1)[1]
    if config_path is not None:
        command = _find_command(argv, sub)
        _apply_config(_load_config_file(config_path), root, sub, command)
    args = root.parse_args(argv)
    if args.command is None:
        raise UsageError("a subcommand is required (see --help)")
    return args


def _mask_spec_from_args(style: str, elements=None, max_thickness: int = 12,
                         radius_min=None, radius_max=None):
    from .masking import MaskSpec, MaskStyle
    radius_range = None
    if radius_min is not None or radius_max is not None:
        if radius_min is None or radius_max is None:
            raise UsageError("--radius-min and --radius-max go together")
        radius_range = (radius_min, radius_max)
    return MaskSpec(style=MaskStyle(style), count=elements,
                    max_thickness=max_thickness, radius_range=radius_range)


def cmd_synth_data(args) -> int:
    from .data_io import save_normal_map
    from .synthdata import default_scene_spec, generate_dataset
    import dataclasses
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = dataclasses.replace(default_scene_spec(args.size), rng_seed=args.seed)
    maps = generate_dataset(args.count, spec)
    for i, m in enumerate(maps):
        save_normal_map(m, out / f"synth_{i:04d}.png")
    log.info("wrote %d synthetic maps to %s", len(maps), out)
    return 0


def cmd_augment(args) -> int:
    from .augment import AugmentParams, expand_dataset
    from .data_io import load_dataset, save_normal_map
    params = AugmentParams(rotation_limit=args.rot_limit,
                           zoom_limit=args.zoom_limit,
                           erosion_radius=args.erode, rng_seed=args.seed)
    maps = load_dataset(args.in_dir)
    expanded = expand_dataset(maps, params)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    n = len(maps)
    suffix = ["orig", "flip", "rz", "fliprz"]
    for i, m in enumerate(expanded):
        save_normal_map(m, out / f"{i % n:04d}_{suffix[i // n]}.png")
    log.info("expanded %d maps to %d in %s", n, len(expanded), out)
    return 0


def cmd_gen_masks(args) -> int:
    import dataclasses
    from .data_io import save_mask_png
    from .masking import generate_mask
    spec = _mask_spec_from_args(args.style, args.elements, args.max_thickness,
                                args.radius_min, args.radius_max)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        mask = generate_mask(dataclasses.replace(spec, rng_seed=args.seed + i),
                             args.size, args.size)
        save_mask_png(mask, out / f"mask_{args.style}_{i:04d}.png")
    log.info("wrote %d %s masks to %s", args.count, args.style, out)
    return 0


def _train_eval_data(args, size: int, seed: int):
    """Resolve --data / --synth into (train, eval) normal-map lists."""
    if (args.data is None) == (args.synth is None):
        raise UsageError("exactly one of --data and --synth is required")
    if args.synth is not None:
        import dataclasses
        from .synthdata import default_scene_spec, generate_dataset
        spec = default_scene_spec(size)
        train = generate_dataset(
            args.synth, dataclasses.replace(spec, rng_seed=seed))
        eval_n = max(8, args.synth // 4)
        evals = generate_dataset(
            eval_n, dataclasses.replace(spec, rng_seed=seed + 0x0E7A1))
        return train, evals
    from .data_io import DatasetError, load_dataset
    root = Path(args.data)
    train = load_dataset(root, "train", target_size=size)
    try:
        evals = load_dataset(root, "test", target_size=size)
    except DatasetError:
        held = max(1, len(train) // 10)
        evals = train[-held:]
        train = train[:-held]
        if not train:
            raise UsageError("dataset too small to hold out an eval split")
    return train, evals


def cmd_train(args) -> int:
    from .losses import LossWeights
    from .trainer import TrainConfig, run_training
    cfg = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch,
        image_size=args.size,
        disc_update_period=args.disc_period,
        disc_accuracy_gate=args.disc_gate,
        use_mask_channel=not args.no_mask_channel,
        loss_weights=LossWeights(args.lambda_rec, args.lambda_adv),
        mask_spec=_mask_spec_from_args(args.mask_style),
        reconstruction_variant=args.rec_variant,
        masked_only=args.masked_only,
        base_width=args.base_width,
        depth=args.depth,
        skip_connections=args.skips,
        eval_every=args.eval_every,
        panel_every=args.panel_every,
        max_steps=args.max_steps,
        rng_seed=args.seed,
    )
    train, evals = _train_eval_data(args, args.size, args.seed)
    result = run_training(cfg, train, evals, args.out, resume=args.resume,
                          log=log)
    log.info("training done: %s", result.csv_path)
    print(result.checkpoint_path)
    return 0


def cmd_evaluate(args) -> int:
    from .model import AdamState
    from .reporting import CSV_HEADER, format_csv_row, render_metrics_figure
    from .trainer import (TrainConfig, build_networks, emit_eval_panels,
                          evaluate, load_training_checkpoint)
    from . import checkpoint as ckpt
    _, meta = ckpt.load_checkpoint(args.checkpoint)
    cfg = TrainConfig.from_echo(meta["config"])
    gen, disc = build_networks(cfg)
    gen_state = AdamState.for_network(gen, cfg.learning_rate)
    disc_state = AdamState.for_network(disc, cfg.learning_rate)
    epoch, _, _ = load_training_checkpoint(args.checkpoint, cfg, gen, disc,
                                           gen_state, disc_state)
    _, evals = _train_eval_data(args, cfg.image_size, args.seed)
    report = evaluate(gen, disc, evals, cfg, epoch=epoch)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    row = format_csv_row(report.epoch, float("nan"), float("nan"), float("nan"),
                         float("nan"), report.ssim, report.psnr,
                         report.disc_accuracy, report.mean_angular_error)
    (out / "metrics.csv").write_text(CSV_HEADER + "\n" + row + "\n")
    emit_eval_panels(gen, evals, cfg, out / "panels", epoch=report.epoch)
    render_metrics_figure([{
        "epoch": report.epoch, "gen_loss": float("nan"),
        "rec_loss": float("nan"), "adv_loss": float("nan"),
        "disc_loss": float("nan"), "ssim": report.ssim, "psnr": report.psnr,
        "disc_acc": report.disc_accuracy,
        "mae_deg": report.mean_angular_error}], out / "metrics.png")
    print(row)
    return 0


def cmd_infer(args) -> int:
    import numpy as np
    import torch
    from PIL import Image
    from .core import normal_to_rgb
    from .data_io import load_mask_png, load_normal_map, resize_normal_map
    from .model import AdamState
    from .trainer import (TrainConfig, _inputs_tensor, build_networks,
                          load_training_checkpoint)
    from . import checkpoint as ckpt
    _, meta = ckpt.load_checkpoint(args.checkpoint)
    cfg = TrainConfig.from_echo(meta["config"])
    gen, disc = build_networks(cfg)
    gen_state = AdamState.for_network(gen, cfg.learning_rate)
    disc_state = AdamState.for_network(disc, cfg.learning_rate)
    load_training_checkpoint(args.checkpoint, cfg, gen, disc, gen_state,
                             disc_state)
    m = load_normal_map(args.image)
    m = resize_normal_map(m, cfg.image_size, cfg.image_size)
    mask = load_mask_png(args.mask)
    if (mask.height, mask.width) != (cfg.image_size, cfg.image_size):
        raise UsageError(f"mask is {mask.height}x{mask.width}, the checkpoint "
                         f"expects {cfg.image_size}x{cfg.image_size}")
    gen.eval()
    with torch.no_grad():
        pred = gen(_inputs_tensor([m], [mask], cfg.use_mask_channel))
    pred = pred.numpy()[0].transpose(1, 2, 0)
    known = mask.values[..., None].astype(np.float32)
    composite = known * m.vectors + (1.0 - known) * pred
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    Image.fromarray(normal_to_rgb(pred), "RGB").save(out / "predicted.png")
    Image.fromarray(normal_to_rgb(composite), "RGB").save(out / "composite.png")
    log.info("wrote predicted.png and composite.png to %s", out)
    return 0


_COMMANDS = {
    "synth-data": cmd_synth_data,
    "augment": cmd_augment,
    "gen-masks": cmd_gen_masks,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "infer": cmd_infer,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)

    level = {"quiet": logging.WARNING, "info": logging.INFO,
             "debug": logging.DEBUG}[args.log]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")

    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 1
    if args.command in ("train", "evaluate", "infer"):
        import torch
        torch.set_num_threads(args.threads)

    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
