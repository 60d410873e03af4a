"""Command line entry point: ``attention-i2i <command> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np
from PIL import Image

from .ablation import VARIANTS, apply_ablation, variant_flags
from .core import (
    ConfigError,
    ContractError,
    TrainConfig,
    field_types,
    parse_config_text,
    save_config,
)
from .data import DatasetError, list_images, load_dataset, load_folder, synth_domains, to_uint8
from .evaluation import aggregate, emit_grids, evaluate_translation, mse, psnr_from_mse, translate
from .generator import count_parameters
from .trainer import CheckpointError, TrainingError, load_checkpoint, save_checkpoint, train

log = logging.getLogger("attention_i2i")

FULL_SCALE = {"image_size": 256, "channel_scale": 1.0}


class UsageError(Exception):
    pass


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key = value config file")
    p.add_argument("--full-scale", action="store_true",
                   help="256x256 images and full-width networks")
    group = p.add_argument_group("config overrides")
    for name, kind in field_types().items():
        flag = "--" + name.replace("_", "-")
        if kind is bool:
            group.add_argument(flag, dest=name, action=argparse.BooleanOptionalAction, default=None)
        else:
            group.add_argument(flag, dest=name, type=kind, default=None)


def config_from_args(args: argparse.Namespace) -> TrainConfig:
    """Config file < --full-scale < explicit flags."""
    overrides = {f.name: getattr(args, f.name) for f in fields(TrainConfig)
                 if getattr(args, f.name, None) is not None}
    base = {}
    if args.config is not None:
        try:
            base = parse_config_text(args.config.read_text())
        except OSError as e:
            raise ConfigError(f"cannot read config {args.config}: {e}") from e
    if args.full_scale:
        base.update(FULL_SCALE)
    values = {**base, **overrides}
    # a short run keeps its schedule consistent unless told otherwise
    if "epochs" in overrides:
        epochs = overrides["epochs"]
        defaults = TrainConfig()
        values.setdefault("warm_epochs", min(defaults.warm_epochs, epochs))
        values.setdefault("decay_start_epoch", min(defaults.decay_start_epoch, epochs // 2))
    return TrainConfig.from_dict(values)


def _write_trace(path: Path, reports) -> None:
    with path.open("w") as fh:
        for i, r in enumerate(reports):
            fh.write(json.dumps({"epoch": i, **r.as_dict()}) + "\n")


def _run_training(args, cfg: TrainConfig) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dx = load_dataset(args.data, "train", "A", cfg.image_size)
    dy = load_dataset(args.data, "train", "B", cfg.image_size)
    state = load_checkpoint(args.resume, cfg) if args.resume else None
    save_config(cfg, out / "config.txt")
    result = train(dx, dy, cfg, state=state, checkpoint_dir=out / "checkpoints")
    if state is None and cfg.epochs == 0:
        save_checkpoint(result.state, out / "checkpoints" / "epoch_0000.pt")
    _write_trace(out / "losses.jsonl", result.epochs)
    gens = sum(count_parameters(result.state.nets[k]) for k in ("g_xy", "g_yx"))
    total = sum(count_parameters(n) for n in result.state.nets.values())
    log.info("parameters: generators %d, full system %d", gens, total)
    return 0


def cmd_synth(args) -> int:
    synth_domains(args.out, args.n, args.image_size, args.seed)
    log.info("wrote synthetic data to %s", args.out)
    return 0


def cmd_train(args) -> int:
    return _run_training(args, config_from_args(args))


def cmd_ablate(args) -> int:
    cfg = apply_ablation(config_from_args(args), variant_flags(args.variant))
    return _run_training(args, cfg)


def _generator(state, direction: str):
    fwd, back = ("g_xy", "g_yx") if direction == "xy" else ("g_yx", "g_xy")
    return state.nets[fwd], state.nets[back]


def cmd_translate(args) -> int:
    state = load_checkpoint(args.checkpoint)
    gen, reverse = _generator(state, args.direction)
    paths, images = load_folder(args.input, state.cfg.image_size)
    out = Path(args.out)
    (out / "images").mkdir(parents=True, exist_ok=True)
    fake, masks, _ = translate(gen, images)
    for p, f in zip(paths, fake):
        Image.fromarray(to_uint8(f)).save(out / "images" / f"{p.stem}.png")
    emit_grids(gen, images, out / "grids", reverse=reverse)
    log.info("translated %d images into %s", len(paths), out)
    return 0


def _read_u8(path: Path, size: int | None = None) -> np.ndarray:
    with Image.open(path) as im:
        im = im.convert("RGB")
        if size is not None and im.size != (size, size):
            im = im.resize((size, size), Image.BILINEAR)
        return np.asarray(im, dtype=np.uint8)


def cmd_eval(args) -> int:
    if args.generated is not None:
        ref_dir = Path(args.reference or args.input or "")
        if not ref_dir.is_dir():
            raise UsageError("--generated needs --reference (or --input) naming a directory")
        rows = []
        for g in list_images(Path(args.generated)):
            candidates = [p for p in list_images(ref_dir) if p.stem == g.stem]
            if not candidates:
                raise DatasetError(f"no reference image for {g.name} in {ref_dir}")
            a = _read_u8(g)
            b = _read_u8(candidates[0], a.shape[0])
            m = mse(a, b)
            rows.append((g.stem, m, psnr_from_mse(m)))
        report = aggregate(rows, "reference" if args.reference else "input")
    else:
        if args.checkpoint is None or args.input is None:
            raise UsageError("eval needs --generated, or --checkpoint with --input")
        state = load_checkpoint(args.checkpoint)
        gen, _ = _generator(state, args.direction)
        paths, images = load_folder(args.input, state.cfg.image_size)
        ref = load_folder(args.reference, state.cfg.image_size)[1] if args.reference else None
        report = evaluate_translation(gen, images, ref, names=[p.stem for p in paths])
    records, summary = report.write(args.out)
    print(report.table(), end="")
    log.info("metrics written to %s and %s", records, summary)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="attention-i2i",
                                     description="Attention-guided unpaired image translation")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="generate the synthetic two-domain dataset")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--n", type=int, default=200, help="images per split and domain")
    p.add_argument("--image-size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    for name, func, helptext in (("train", cmd_train, "train a model"),
                                 ("ablate", cmd_ablate, "train an ablated variant")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--data", required=True, type=Path, help="root with trainA/ and trainB/")
        p.add_argument("--out", type=Path, default=Path("runs/latest"))
        p.add_argument("--resume", type=Path, help="checkpoint to continue from")
        if name == "ablate":
            p.add_argument("--variant", required=True,
                           help=f"one of {', '.join(VARIANTS)} (write --variant=-ad)")
        _add_config_flags(p)
        p.set_defaults(func=func)

    p = sub.add_parser("translate", help="apply a checkpoint to a folder of images")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--input", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--direction", choices=("xy", "yx"), default="xy")
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("eval", help="MSE/PSNR of translated images")
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--input", type=Path, help="source images (also the reference when unpaired)")
    p.add_argument("--generated", type=Path, help="already translated images to score")
    p.add_argument("--reference", type=Path, help="paired reference images")
    p.add_argument("--direction", choices=("xy", "yx"), default="xy")
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, ContractError) as e:
        parser.print_usage(sys.stderr)
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (DatasetError, CheckpointError, TrainingError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
