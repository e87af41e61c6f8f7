"""Command line: ``echonav train | eval | render``.

Exit codes: 0 ok, 1 other failure, 2 configuration error, 3 data error,
4 checkpoint integrity error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .config import RunConfig, apply_overrides, from_dict, load_config
from .errors import EchoNavError, ProtocolError
from .world import SPLITS, SoundSplits, parse_split

log = logging.getLogger("echonav")

# world fields that define the class pools; eval may not change them
CLASS_FIELDS = ("num_classes", "class_split", "class_seed")


def out_dir_for(args, cfg: RunConfig | None = None, fallback: str = "runs/default") -> Path:
    if args.out:
        return Path(args.out)
    if os.environ.get("ECHONAV_OUT"):
        return Path(os.environ["ECHONAV_OUT"])
    return Path(cfg.run.out_dir if cfg is not None else fallback)


def _run_overrides(args) -> list:
    extra = []
    if getattr(args, "seed", None) is not None:
        extra.append(f"run.seed={args.seed}")
    if getattr(args, "workers", None) is not None:
        extra.append(f"run.workers={args.workers}")
    if getattr(args, "deterministic", None) is not None:
        extra.append(f"run.deterministic={'true' if args.deterministic else 'false'}")
    return extra


def cmd_train(args) -> int:
    from .plotting import plot_training_curves
    from .ppo import train

    cfg = load_config(args.config, list(args.set) + _run_overrides(args))
    out = out_dir_for(args, cfg)
    cfg.run.out_dir = str(out)
    text = cfg.dumps()
    print(text, end="")
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.toml").write_text(text)

    def progress(rec):
        if not args.quiet:
            val = "" if rec["val_sr"] is None else f"  val SR {rec['val_sr']:.1f}  SPL {rec['val_spl']:.1f}"
            print(f"update {rec['update']:4d}  reward {rec['mean_reward']:+.4f}  entropy {rec['entropy']:.3f}{val}",
                  file=sys.stderr)

    result = train(cfg, out, progress=progress)
    if result.records and not args.no_plots:
        plot_training_curves(result.records, out / "training_curves.png")
    print(f"wrote {out / 'checkpoint.bin'} and {out / 'metrics.jsonl'}", file=sys.stderr)
    return 0


def check_protocol(ckpt_cfg: RunConfig, eval_cfg: RunConfig, split: str) -> None:
    """Refuse evaluations whose class pools disagree with the ones the checkpoint was trained under."""
    parse_split(split)
    for name in CLASS_FIELDS:
        if getattr(ckpt_cfg.world, name) != getattr(eval_cfg.world, name):
            raise ProtocolError(f"world.{name} differs from the checkpoint "
                                f"({getattr(eval_cfg.world, name)!r} vs {getattr(ckpt_cfg.world, name)!r}); "
                                "the heard/unheard class pools would not match training")
    sounds = SoundSplits.from_world(eval_cfg.world)
    trained = set(sounds.pool(ckpt_cfg.run.train_split))
    if split.startswith("unheard") and trained & set(sounds.pool(split)):
        raise ProtocolError(f"split {split} shares sound classes with the checkpoint's training split "
                            f"{ckpt_cfg.run.train_split}")


def cmd_eval(args) -> int:
    from .checkpoint import load_policy
    from .metrics import summarize, write_jsonl
    from .plotting import plot_eval_summary
    from .ppo import evaluate_policy

    policy, ckpt_cfg, _ = load_policy(args.checkpoint)
    data = ckpt_cfg.to_dict()
    if args.config:
        data = load_config(args.config).to_dict()
    cfg = from_dict(apply_overrides(data, list(args.set)))
    check_protocol(ckpt_cfg, cfg, args.split)
    if (cfg.fusion, cfg.obs, cfg.policy) != (ckpt_cfg.fusion, ckpt_cfg.obs, ckpt_cfg.policy):
        raise ProtocolError("model sections (fusion, obs, policy) must match the checkpoint")
    results, logs = evaluate_policy(policy, cfg, args.split, args.episodes, args.seed, greedy=not args.sample)
    summary = {"checkpoint": str(args.checkpoint), "split": args.split, "seed": args.seed, **summarize(results)}
    out = out_dir_for(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"eval_{args.split}_s{args.seed}"
    write_jsonl(out / f"{stem}_episodes.jsonl", logs)
    write_jsonl(out / f"{stem}_summary.jsonl", [summary])
    if not args.no_plots:
        plot_eval_summary({args.split: summary}, out / f"{stem}_summary.png")
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_render(args) -> int:
    from .metrics import export_trajectory_map, read_episode_log
    from .plotting import plot_trajectory

    records = read_episode_log(args.episode_log)
    out = Path(args.out) if args.out else out_dir_for(args) / "maps"
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for i, rec in enumerate(records):
        path = out / f"episode_{i:04d}.{args.format}"
        if args.format == "png":
            plot_trajectory(rec, path)
        else:
            export_trajectory_map(rec, None, path, cell_px=args.cell_px)
        written.append(path)
    print(f"wrote {len(written)} map(s) to {out}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="echonav", description="Audio-visual navigation with guided attention.")
    parser.add_argument("--version", action="version", version=f"echonav {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config value (repeatable), e.g. --set ppo.lr=1e-4")
        p.add_argument("--out", help="output directory (default: $ECHONAV_OUT, then run.out_dir)")
        p.add_argument("--no-plots", action="store_true", help="skip matplotlib figures")

    p = sub.add_parser("train", help="train a policy with PPO")
    common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, help="rollout worker processes")
    p.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=None,
                   help="single-worker bit-exact mode")
    p.add_argument("-q", "--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    common(p)
    p.add_argument("checkpoint")
    p.add_argument("--split", default="unheard_test", choices=SPLITS)
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sample", action="store_true", help="sample actions instead of acting greedily")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="draw top-down trajectory maps from an episode log")
    p.add_argument("episode_log")
    p.add_argument("--out", help="output directory (default: $ECHONAV_OUT/maps)")
    p.add_argument("--format", default="ppm", choices=("ppm", "svg", "png"))
    p.add_argument("--cell-px", type=int, default=12)
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except EchoNavError as exc:
        print(f"echonav {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"echonav {args.command}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
