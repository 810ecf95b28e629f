"""Command-line entry point.

Exit codes: 0 success, 1 file errors (missing or unreadable input, failed
write), 2 usage errors (unknown flags, malformed or out-of-domain
arguments), 70 internal invariant violations.
"""

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_config
from .errors import (
    AuralkitError,
    ConfigError,
    DomainError,
    InfeasibleSceneError,
    MaterialReferenceError,
    SceneParseError,
    UnsupportedSceneError,
)

EXIT_FILE = 1
EXIT_USAGE = 2
EXIT_INTERNAL = 70


def _vec3(text):
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected x,y,z but got {text!r}") from None
    if len(values) != 3 or not all(map(math.isfinite, values)):
        raise argparse.ArgumentTypeError(f"expected three finite numbers, got {text!r}")
    return np.array(values)


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _scene(path, args):
    from .scene import load_scene

    return load_scene(path, getattr(args, "materials", None))


def _emit(args, result, text):
    if args.json:
        print(json.dumps(result, indent=1, default=float))
    else:
        print(text)


# -- subcommands -------------------------------------------------------------

def cmd_simulate_lor(args, cfg):
    from .ambisonics import write_ir
    from .ga import compute_lor
    from .scene import PositionPair

    scene = _scene(args.scene, args)
    pair = PositionPair(args.src, args.lis)
    ir, arr = compute_lor(scene, pair, args.order, cfg["sample_rate"], args.length,
                          cfg["speed_of_sound"], return_arrivals=True)
    write_ir(args.output, ir)
    result = {"output": str(args.output), "arrivals": len(arr), "samples": len(ir),
              "sample_rate": ir.sample_rate, "order": args.order}
    _emit(args, result, f"wrote {args.output} ({len(arr)} arrivals, {len(ir)} samples)")


def cmd_synthesize(args, cfg):
    from .ambisonics import read_ir, write_ir
    from .synth import load_params, synthesize

    params = load_params(args.params)
    ir = synthesize(params, read_ir(args.lor), seed=args.seed)
    write_ir(args.output, ir)
    _emit(args, {"output": str(args.output), "samples": len(ir)}, f"wrote {args.output}")


def cmd_render(args, cfg):
    from scipy import signal

    from .ambisonics import AmbisonicIR, read_ir, read_mono, write_ir

    srir = read_ir(args.srir)
    rate, audio = read_mono(args.audio)
    if rate != srir.sample_rate:
        raise DomainError(f"audio is {rate} Hz but the SRIR is {srir.sample_rate} Hz")
    channels = args.channels if args.channels is not None else [0, 1, 2, 3]
    if any(not 0 <= c < 4 for c in channels):
        raise DomainError("channel indices must lie in 0..3")
    out = np.zeros((4, len(audio) + len(srir) - 1))
    for c in channels:
        out[c] = signal.fftconvolve(audio, srir.channels[c])
    write_ir(args.output, AmbisonicIR(out, rate, srir.format_tag, meta={"rendered_channels": channels}))
    peak = float(np.max(np.abs(out))) if out.size else 0.0
    _emit(args, {"output": str(args.output), "samples": out.shape[1], "channels": channels, "peak": peak},
          f"wrote {args.output} ({out.shape[1]} samples, channels {channels})")


def cmd_metrics(args, cfg):
    from .ambisonics import read_ir
    from .metrics import metric_report

    report = metric_report(read_ir(args.pred), read_ir(args.target))
    text = "\n".join(f"{k:>6}: {'n/a' if v is None else f'{v:.6g}'}" for k, v in report.items())
    _emit(args, report, text)


def cmd_dataset_gen(args, cfg):
    from .dataset import desk_scenes, generate_dataset

    ds = cfg["dataset"]
    if args.scene:
        scenes = {Path(p).stem: _scene(p, args) for p in args.scene}
    else:
        scenes = desk_scenes(args.scenes or ds["n_scenes"], args.seed)
    manifest = generate_dataset(
        scenes,
        args.variants or ds["variants_per_scene"],
        args.pairs or ds["pairs_per_variant"],
        args.order if args.order is not None else ds["max_order"],
        args.out,
        seed=args.seed,
        refl_range=ds["refl_range"],
        scat_range=ds["scat_range"],
        min_clearance_m=ds["min_clearance_m"],
        correlation=ds["material_correlation"],
        sample_rate=cfg["sample_rate"],
    )
    result = {"manifest": str(Path(args.out) / "manifest.json"), "entries": len(manifest)}
    _emit(args, result, f"wrote {len(manifest)} entries to {args.out}")


def cmd_dataset_analyze(args, cfg):
    from .dataset import analyze_diversity

    report = analyze_diversity(args.manifest, bins=args.bins, out_dir=args.out, plot=args.plot)
    s = report.summary()
    text = (
        f"{s['entries']} entries; PCA variance {s['pca_variance'][0]:.3g} / {s['pca_variance'][1]:.3g}; "
        f"T60 {s['t60_min']:.3f}-{s['t60_max']:.3f} s (ratio {s['t60_ratio']:.2f})"
    )
    _emit(args, s, text)


def cmd_train(args, cfg):
    from .dataset import load_manifest
    from .neural.model import ModelConfig
    from .neural.train import train_toy

    manifest = load_manifest(args.dataset)
    t = cfg["train"]
    result = train_toy(
        manifest,
        steps=args.steps if args.steps is not None else t["steps"],
        seed=args.seed,
        config=ModelConfig.from_dict(cfg["model"]),
        lr=args.lr if args.lr is not None else t["lr"],
        momentum=t["momentum"],
        use_lor=not args.no_lor,
        indices=args.entries,
        checkpoint=args.output,
    )
    out = {"checkpoint": str(args.output), "initial_loss": result.losses[0],
           "final_loss": result.losses[-1], "reduction": result.reduction, "steps": len(result.losses) - 1}
    _emit(args, out, f"loss {result.losses[0]:.4g} -> {result.losses[-1]:.4g}; wrote {args.output}")


def cmd_infer(args, cfg):
    import torch

    from .ambisonics import write_ir
    from .ga import compute_lor
    from .neural.model import lor_tensor, scene_inputs, to_params
    from .neural.train import load_checkpoint
    from .scene import PositionPair
    from .synth import direct_index, synthesize

    model, _ = load_checkpoint(args.checkpoint)
    scene = _scene(args.scene, args)
    pair = PositionPair(args.src, args.lis)
    fs = model.cfg.sample_rate
    h_lor = compute_lor(scene, pair, cfg["lor_order"], fs)
    feats, adj, pos = scene_inputs(scene, pair)
    with torch.no_grad():
        out = model(feats, adj, pos, lor_tensor(h_lor, model.cfg.lor_length))
    params = to_params(out, direct_index(h_lor), fs)
    ir = synthesize(params, h_lor, seed=args.seed)
    write_ir(args.output, ir)
    result = {"output": str(args.output), "t60": params.t60, "g_er": params.g_er,
              "g_lr": params.g_lr, "samples": len(ir)}
    _emit(args, result, f"wrote {args.output} (T60 {params.t60:.3f} s)")


def cmd_bench(args, cfg):
    import torch

    from .bench import bench
    from .dataset import sample_positions
    from .neural.model import ModelConfig, SRIRModel
    from .neural.train import load_checkpoint
    from .scene import make_furnished_room

    scene = _scene(args.scene, args) if args.scene else make_furnished_room(seed=args.seed)
    if args.checkpoint:
        model, _ = load_checkpoint(args.checkpoint)
    else:
        torch.manual_seed(args.seed)
        model = SRIRModel(ModelConfig.from_dict(cfg["model"]))
    pair = sample_positions(scene, 1, cfg["dataset"]["min_clearance_m"], args.seed)[0]
    runs = args.runs or cfg["bench"]["runs"]
    warmup = args.warmup if args.warmup is not None else cfg["bench"]["warmup"]
    report = bench(scene, pair, model, runs, warmup, cfg["lor_order"], args.seed)
    _emit(args, {**report.to_dict(), "faces": len(scene)}, report.format())


# -- parser ------------------------------------------------------------------

def _common(top):
    # subcommands repeat the global flags without resetting values given earlier
    kw = {} if top else {"default": argparse.SUPPRESS}
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable output on stdout", **kw)
    common.add_argument("--seed", type=int, help="master seed (default 0)", **(kw or {"default": 0}))
    common.add_argument("--config", type=Path, help="JSON file overriding the built-in defaults", **kw)
    common.add_argument("--materials", type=Path, help="materials JSON for OBJ scenes", **kw)
    return common


def build_parser():
    common = _common(top=False)
    parser = argparse.ArgumentParser(prog="auralkit", parents=[_common(top=True)],
                                     description="Scene-aware spatial room impulse responses.")
    parser.add_argument("--version", action="version", version=f"auralkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("simulate-lor", parents=[common], help="low-order reflections of a scene")
    p.add_argument("--scene", required=True, type=Path, help="scene JSON or OBJ mesh")
    p.add_argument("--src", required=True, type=_vec3, help="source x,y,z in meters")
    p.add_argument("--lis", required=True, type=_vec3, help="listener x,y,z in meters")
    p.add_argument("--order", type=int, default=2, help="maximum reflection order")
    p.add_argument("--length", type=int, help="output length in samples")
    p.add_argument("-o", "--output", required=True, type=Path)
    p.set_defaults(func=cmd_simulate_lor)

    p = sub.add_parser("synthesize", parents=[common], help="SRIR from parameters and a LoR")
    p.add_argument("--params", required=True, type=Path)
    p.add_argument("--lor", required=True, type=Path)
    p.add_argument("-o", "--output", required=True, type=Path)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("render", parents=[common], help="convolve a mono recording with an SRIR")
    p.add_argument("--srir", required=True, type=Path)
    p.add_argument("--audio", required=True, type=Path, help="anechoic mono WAV")
    p.add_argument("--channels", type=_int_list, help="SRIR channels to render, e.g. 0,1 (default all)")
    p.add_argument("-o", "--output", required=True, type=Path)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("metrics", parents=[common], help="error report between two SRIRs")
    p.add_argument("--pred", required=True, type=Path)
    p.add_argument("--target", required=True, type=Path)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("dataset", parents=[common], help="dataset generation and analysis")
    dsub = p.add_subparsers(dest="dataset_command", required=True, metavar="action")
    g = dsub.add_parser("gen", parents=[common], help="generate a dataset")
    g.add_argument("--out", required=True, type=Path)
    g.add_argument("--scene", action="append", type=Path, help="base scene (repeatable)")
    g.add_argument("--scenes", type=int, help="number of random base shoeboxes")
    g.add_argument("--variants", type=int)
    g.add_argument("--pairs", type=int)
    g.add_argument("--order", type=int)
    g.set_defaults(func=cmd_dataset_gen)
    a = dsub.add_parser("analyze", parents=[common], help="PCA and T60 diversity report")
    a.add_argument("--manifest", required=True, type=Path)
    a.add_argument("--bins", type=int, default=20)
    a.add_argument("--out", type=Path, help="directory for CSV (and PNG) output")
    a.add_argument("--plot", action="store_true")
    a.set_defaults(func=cmd_dataset_analyze)

    p = sub.add_parser("train", parents=[common], help="toy training run")
    p.add_argument("--dataset", required=True, type=Path)
    p.add_argument("--steps", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--entries", type=_int_list, help="train on these oracle entries only")
    p.add_argument("--no-lor", action="store_true", help="zero the LoR embedding")
    p.add_argument("-o", "--output", required=True, type=Path, help="checkpoint path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", parents=[common], help="predict and synthesize an SRIR")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--scene", required=True, type=Path)
    p.add_argument("--src", required=True, type=_vec3)
    p.add_argument("--lis", required=True, type=_vec3)
    p.add_argument("-o", "--output", required=True, type=Path)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("bench", parents=[common], help="per-stage timings")
    p.add_argument("--scene", type=Path, help="scene file (default: furnished 1008-face room)")
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--runs", type=int)
    p.add_argument("--warmup", type=int)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        args.func(args, cfg)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc.filename or ''}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_FILE
    except (OSError, SceneParseError, MaterialReferenceError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FILE
    except (DomainError, ConfigError, UnsupportedSceneError, InfeasibleSceneError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AuralkitError, AssertionError) as exc:
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return 0


if __name__ == "__main__":
    sys.exit(main())
