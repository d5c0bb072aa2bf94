"""Command-line entry point.

Subcommands: generate | train | interpolate | benchmark | ablate.
Config precedence: built-in defaults < profile < --config file < --set
overrides; the POSEFUSE_PROFILE environment variable selects the profile
when --profile is not given. Every run directory receives the fully
resolved config for bit-exact reruns. Validation failures exit nonzero
with a single "error: <reason>" line on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .body import BodyParams, BodyTemplate, default_camera, default_template
from .config import (ConfigError, dilation_radius_for, resolve_config,
                     save_config)
from .dataset import MotionSpec, generate_corpus, load_corpus, read_clip


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None,
                   help="YAML config file merged over defaults")
    p.add_argument("--profile", default=None, choices=["desk", "paper"],
                   help="config profile (default: $POSEFUSE_PROFILE or desk)")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY.PATH=VALUE",
                   help="config override, repeatable")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="posefuse3d",
        description="Controllable human-centric keyframe interpolation "
                    "on a synthetic articulated-body world.")
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("generate", formatter_class=fmt,
                       help="generate and filter a synthetic clip corpus")
    _add_config_args(p)
    p.add_argument("--out", required=True, help="output corpus directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", formatter_class=fmt,
                       help="train the denoiser (+ control model)")
    _add_config_args(p)
    p.add_argument("--data", required=True, help="corpus directory")
    p.add_argument("--out", required=True, help="run output directory")
    p.add_argument("--resume", default=None, help="checkpoint to resume from")
    p.add_argument("--verbose", action="store_true",
                   help="print per-step losses")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("interpolate", formatter_class=fmt,
                       help="interpolate between two keyframes")
    _add_config_args(p)
    p.add_argument("--checkpoint", required=True, help="trained checkpoint")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--clip-dir", default=None,
                   help="clip directory: ground-truth-control mode")
    p.add_argument("--template", default=None,
                   help="body template JSON (defaults to <clip-dir>/../"
                        "template.json in clip mode)")
    p.add_argument("--frame0", default=None, help="first keyframe PNG (ITW mode)")
    p.add_argument("--frameN", default=None, help="last keyframe PNG (ITW mode)")
    p.add_argument("--params0", default=None,
                   help="body params JSON of frame 0 (ITW mode)")
    p.add_argument("--paramsN", default=None,
                   help="body params JSON of frame N (ITW mode)")
    p.add_argument("--gap", type=int, default=None,
                   help="keyframe gap N (default: clip length - 1)")
    p.set_defaults(func=cmd_interpolate)

    p = sub.add_parser("benchmark", formatter_class=fmt,
                       help="run the temporal-gap benchmark on a corpus")
    _add_config_args(p)
    p.add_argument("--checkpoint", required=True, help="trained checkpoint")
    p.add_argument("--data", required=True, help="corpus directory")
    p.add_argument("--out", required=True, help="report output directory")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("ablate", formatter_class=fmt,
                       help="benchmark several strategy checkpoints "
                            "(control-strategy ablation table)")
    _add_config_args(p)
    p.add_argument("--checkpoint", action="append", required=True,
                   metavar="STRATEGY=PATH",
                   help="strategy=checkpoint pair, repeatable")
    p.add_argument("--data", required=True, help="corpus directory")
    p.add_argument("--out", required=True, help="report output directory")
    p.set_defaults(func=cmd_ablate)
    return parser


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _resolve(args) -> dict:
    return resolve_config(args.config, args.profile, args.overrides)


def _echo_config(cfg: dict, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    save_config(cfg, os.path.join(out_dir, "config.yaml"))


def cmd_generate(args) -> int:
    cfg = _resolve(args)
    ds = cfg["dataset"]
    template = default_template()
    camera = default_camera(tuple(ds["resolution"]))
    spec = MotionSpec(
        n_keyposes=ds["motion"]["n_keyposes"],
        easing=ds["motion"]["easing"],
        amplitude=dict(ds["motion"]["amplitude"]),
        camera_drift=ds["motion"]["camera_drift"])
    _echo_config(cfg, args.out)
    summary = generate_corpus(
        args.out, template, camera, corpus_size=ds["corpus_size"],
        clip_length=ds["clip_length"], seed=ds["seed"], base_spec=spec,
        brightness_percentile=ds["filter"]["brightness_percentile"])
    print(f"kept {summary['kept']} clips, "
          f"dropped {summary['dropped_brightness']} by brightness filter, "
          f"regenerated {summary['regenerated_invalid']} invalid")
    return 0


def cmd_train(args) -> int:
    from .training import train
    cfg = _resolve(args)
    if not os.path.exists(os.path.join(args.data, "corpus.json")):
        raise ConfigError(f"no corpus at {args.data}")
    summary = train(cfg, args.data, args.out, resume=args.resume,
                    quiet=not args.verbose)
    print(f"trained {summary['steps']} steps, "
          f"loss {summary['first_loss']:.4f} -> {summary['last_loss']:.4f}, "
          f"checkpoint {summary['checkpoint']}")
    return 0


def _load_params_file(path) -> BodyParams:
    with open(path) as fh:
        return BodyParams.from_json(json.load(fh))


def _control_strip(bundle, pred_frames) -> np.ndarray:
    """Side-by-side strip: rows = pose viz / surface render / output."""
    rows = [np.concatenate(list(bundle.pose_images), axis=1),
            np.concatenate(list(bundle.surface_images), axis=1),
            np.concatenate(list(pred_frames), axis=1)]
    return np.concatenate(rows, axis=0)


def cmd_interpolate(args) -> int:
    from .control import build_control_bundle
    from .evaluate import build_controls_itw, interpolate, slice_clip
    from .render import save_png, load_png
    from .training import load_models

    cfg = _resolve(args)
    clip_mode = args.clip_dir is not None
    itw_args = (args.frame0, args.frameN, args.params0, args.paramsN)
    if not clip_mode and any(a is None for a in itw_args):
        raise ConfigError("need --clip-dir, or all of --frame0/--frameN/"
                          "--params0/--paramsN")
    denoiser, ctrl, ck_cfg = load_models(args.checkpoint)
    codec_patch = ck_cfg["model"]["codec_patch"]

    if clip_mode:
        clip = read_clip(args.clip_dir)
        tpath = args.template or os.path.join(
            os.path.dirname(args.clip_dir.rstrip(os.sep)), "template.json")
        template = BodyTemplate.load(tpath)
        N = args.gap if args.gap is not None else clip.n_frames - 1
        if N < 1 or N > clip.n_frames - 1:
            raise ConfigError(f"gap {N} outside clip length {clip.n_frames}")
        window = slice_clip(clip, 0, N + 1)
        bundle = params = None
        if ctrl is not None:
            bundle = build_control_bundle(window, template, ctrl.strategy)
            params = window.params
        frame0, frameN = window.frames[0], window.frames[N]
    else:
        if args.template is None:
            raise ConfigError("ITW mode requires --template")
        template = BodyTemplate.load(args.template)
        frame0 = load_png(args.frame0)
        frameN = load_png(args.frameN)
        if args.gap is None:
            raise ConfigError("ITW mode requires --gap")
        N = args.gap
        p0 = _load_params_file(args.params0)
        pN = _load_params_file(args.paramsN)
        camera = default_camera((frame0.shape[1], frame0.shape[0]))
        bundle = params = None
        if ctrl is not None:
            bundle, params = build_controls_itw(p0, pN, template, camera, N,
                                                ctrl.strategy)

    _echo_config(cfg, args.out)
    pred = interpolate(denoiser, ctrl, frame0, frameN, bundle, N,
                       params=params, steps=cfg["eval"]["steps"],
                       seed=cfg["eval"]["seed"], codec_patch=codec_patch)
    for i in range(pred.shape[0]):
        save_png(os.path.join(args.out, f"frame_{i + 1:05d}.png"), pred[i])
    if bundle is not None:
        full = np.concatenate([frame0[None], pred, frameN[None]]) \
            if pred.size else np.stack([frame0, frameN])
        save_png(os.path.join(args.out, "controls.png"),
                 _control_strip(bundle, full))
    print(f"wrote {pred.shape[0]} interior frames to {args.out}")
    return 0


def _benchmark_common(args, cfg, checkpoints: dict) -> int:
    from .evaluate import (compare_strategies, format_report_table,
                           reports_to_csv)
    if not os.path.exists(os.path.join(args.data, "corpus.json")):
        raise ConfigError("no clips")
    records, template = load_corpus(args.data)
    if not records:
        raise ConfigError("no clips")
    _echo_config(cfg, args.out)
    radius = dilation_radius_for(cfg, tuple(records[0].camera.resolution))
    reports = compare_strategies(
        checkpoints, records, template, cfg["eval"]["gaps"],
        control_source=cfg["eval"]["control_source"],
        steps=cfg["eval"]["steps"], seed=cfg["eval"]["seed"],
        dilation_radius=radius)
    csv_path = os.path.join(args.out, "metrics.csv")
    reports_to_csv(reports, csv_path)
    table = format_report_table(reports)
    with open(os.path.join(args.out, "report.txt"), "w") as fh:
        fh.write(table + "\n")
    print(table)
    return 0


def cmd_benchmark(args) -> int:
    from .checkpoint import load_checkpoint
    cfg = _resolve(args)
    ck = load_checkpoint(args.checkpoint)
    strategy = ck["config"]["model"]["control"]["strategy"]
    return _benchmark_common(args, cfg, {strategy: args.checkpoint})


def cmd_ablate(args) -> int:
    cfg = _resolve(args)
    checkpoints = {}
    for item in args.checkpoint:
        if "=" not in item:
            raise ConfigError(
                f"--checkpoint must look like STRATEGY=PATH: {item!r}")
        strategy, path = item.split("=", 1)
        checkpoints[strategy] = path
    return _benchmark_common(args, cfg, checkpoints)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, KeyError, FileNotFoundError,
            FileExistsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
