"""Command-line entry point: ``radarfuse <command> [flags]``.

Exit codes: 0 success, 2 usage, 3 invalid config, 4 missing file,
5 malformed data, 6 training failure, 7 config-hash mismatch,
8 gradient check failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .. import __version__
from . import checkpoint as ckpt
from .config import ConfigError, RunConfig, dumps, load, with_overrides
from .formats import FormatError, write_frame, write_manifest

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_MISSING = 4
EXIT_DATA = 5
EXIT_TRAIN = 6
EXIT_HASH = 7
EXIT_GRADCHECK = 8


class HashMismatch(RuntimeError):
    pass


class GradCheckFailed(RuntimeError):
    pass


def _on_off(text: str) -> bool:
    low = text.lower()
    if low in ("on", "true", "1", "yes"):
        return True
    if low in ("off", "false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected on|off, got {text!r}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI config file (defaults apply when omitted)")
    p.add_argument("--seed", type=int, help="run seed (weights, shuffling)")
    p.add_argument("--lambda", dest="lam", type=float, help="X-UA regularization weight")
    p.add_argument("--dmae", type=_on_off, help="motion-aware encoding on|off")
    p.add_argument("--xua", type=_on_off, help="uncertainty alignment on|off")
    p.add_argument("--epochs", type=int, help="training epochs")
    p.add_argument("--frames", type=int, help="total frames (train + held-out)")
    p.add_argument("--out", default="runs", help="output directory (default: runs)")
    p.add_argument("--quiet", action="store_true", help="no progress lines")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="radarfuse", description="LiDAR and 4D radar fusion detector toolkit")
    ap.add_argument("--version", action="version", version=f"radarfuse {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write synthetic frames and a manifest")
    _common(p)

    p = sub.add_parser("train", help="train one configuration, then evaluate it")
    _common(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the held-out frames")
    _common(p)
    p.add_argument("--checkpoint", required=True, help="checkpoint file written by train")
    p.add_argument("--force", action="store_true", help="evaluate even if the config hash differs")

    p = sub.add_parser("ablate", help="train the DMAE x X-UA grid and print the ablation table")
    _common(p)

    p = sub.add_parser("sweep-lambda", help="train one X-UA model per lambda (DMAE off)")
    _common(p)
    p.add_argument("--values", default="0.001,0.1,0.5,1.0", help="comma-separated lambda values")

    p = sub.add_parser("gradcheck", help="finite-difference check of every primitive and loss")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="optional directory for gradcheck.json")

    p = sub.add_parser("plot", help="render loss curves and AP bars from metrics JSON as SVG")
    p.add_argument("metrics", help="metrics.json written by train or eval")
    p.add_argument("--out", default=None, help="output SVG path (default: next to the metrics)")
    return ap


def resolve_config(args) -> RunConfig:
    cfg = load(args.config) if getattr(args, "config", None) else RunConfig()
    frames = getattr(args, "frames", None)
    if frames is not None:
        if frames < 2:
            raise ConfigError("--frames must be at least 2")
        train_frames = cfg.data.train_frames if cfg.data.train_frames < frames else max(1, (4 * frames) // 5)
        cfg = replace(cfg, data=replace(cfg.data, frames=frames, train_frames=train_frames))
    return with_overrides(
        cfg,
        seed=getattr(args, "seed", None),
        lam=getattr(args, "lam", None),
        dmae=getattr(args, "dmae", None),
        xua=getattr(args, "xua", None),
        epochs=getattr(args, "epochs", None),
    )


def _log(args):
    return None if getattr(args, "quiet", False) else (lambda s: print(s, file=sys.stderr, flush=True))


def _write_config(out: Path, cfg: RunConfig) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(f"# config hash {cfg.hash()}\n" + dumps(cfg))


def cmd_simulate(args) -> int:
    from ..simkit import gen_dataset

    cfg = resolve_config(args)
    seed = args.seed if args.seed is not None else cfg.data.sim_seed
    out = Path(args.out)
    frames = gen_dataset(seed, cfg.data.frames, cfg.scene_config())
    entries = [{"id": f.frame_id, "seed": f.seed, "files": write_frame(out, f)} for f in frames]
    write_manifest(out, {"config_hash": cfg.hash(), "sim_seed": seed, "count": len(frames), "frames": entries})
    _write_config(out, cfg)
    print(f"wrote {len(frames)} frames to {out} (config {cfg.hash()})")
    return EXIT_OK


def cmd_train(args) -> int:
    from .train import METRICS_NAME, run

    cfg = resolve_config(args)
    out = Path(args.out)
    _write_config(out, cfg)
    metrics = run(cfg, out, log=_log(args))
    ev = metrics["eval"]
    print(f"config {cfg.hash()} mAP all={ev['all']['mAP']} corridor={ev['corridor']['mAP']} -> {out / METRICS_NAME}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .train import build_metrics, evaluate_model, load_data, model_from_checkpoint, TrainResult, write_metrics
    from ..autodiff import AdamState

    cfg = resolve_config(args)
    ck = ckpt.load(args.checkpoint)
    if ck.config_hash != cfg.hash() and not args.force:
        raise HashMismatch(
            f"checkpoint was trained with config {ck.config_hash}, supplied config hashes to {cfg.hash()}; "
            "pass the matching --config/flags or --force"
        )
    model = model_from_checkpoint(cfg, ck)
    split = load_data(cfg)
    report = evaluate_model(model, split.test)
    metrics = build_metrics(cfg, split, TrainResult(model, [], AdamState(ck.opt_step)), report)
    metrics["checkpoint_config_hash"] = ck.config_hash
    metrics["checkpoint_epoch"] = ck.epoch
    path = write_metrics(Path(args.out) / "eval_metrics.json", metrics)
    print(f"config {cfg.hash()} mAP all={report['all']['mAP']} corridor={report['corridor']['mAP']} -> {path}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    from ..evalkit.experiments import ablation_table, run_ablation

    cfg = resolve_config(args)
    _write_config(Path(args.out), cfg)
    reports = run_ablation(cfg, out_dir=args.out, log=_log(args))
    print(ablation_table(reports), end="")
    return EXIT_OK


def cmd_sweep(args) -> int:
    from ..evalkit.experiments import lambda_sweep, sweep_table

    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--values must be comma-separated numbers, got {args.values!r}") from None
    cfg = resolve_config(args)
    _write_config(Path(args.out), cfg)
    reports = lambda_sweep(cfg, values, out_dir=args.out, log=_log(args))
    print(sweep_table(reports), end="")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradsuite import TOLERANCE, run_suite

    results = run_suite(args.seed)
    for r in results:
        print(f"{'ok  ' if r.passed else 'FAIL'} {r.name:<20} {r.error:.3e}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        payload = {"seed": args.seed, "tolerance": TOLERANCE, "checks": {r.name: r.error for r in results}}
        (out / "gradcheck.json").write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise GradCheckFailed(f"{len(failed)} check(s) above {TOLERANCE:g}: {', '.join(failed)}")
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plots import plot_metrics

    src = Path(args.metrics)
    if not src.is_file():
        raise FileNotFoundError(f"metrics file not found: {src}")
    try:
        metrics = json.loads(src.read_text())
    except ValueError as exc:
        raise FormatError(f"{src}: not valid JSON ({exc})") from exc
    out = Path(args.out) if args.out else src.with_suffix(".svg")
    plot_metrics(metrics, out)
    print(f"wrote {out}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "sweep-lambda": cmd_sweep,
    "gradcheck": cmd_gradcheck,
    "plot": cmd_plot,
}


def main(argv=None) -> int:
    from ..evalkit.metrics import EvalError
    from .model import TrainingError

    args = build_parser().parse_args(argv)  # argparse exits with 2 on usage errors
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        return _fail(args, EXIT_CONFIG, "config error", exc)
    except FileNotFoundError as exc:
        return _fail(args, EXIT_MISSING, "missing file", exc)
    except (FormatError, ckpt.CheckpointError) as exc:
        return _fail(args, EXIT_DATA, "data error", exc)
    except (TrainingError, EvalError) as exc:
        return _fail(args, EXIT_TRAIN, "training error", exc)
    except HashMismatch as exc:
        return _fail(args, EXIT_HASH, "hash mismatch", exc)
    except GradCheckFailed as exc:
        return _fail(args, EXIT_GRADCHECK, "gradcheck failed", exc)


def _fail(args, code: int, kind: str, exc: Exception) -> int:
    print(f"radarfuse {args.command}: {kind}: {exc}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
