"""Command-line surface: synth / train / eval / align.

Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
All command output is line-oriented key=value records on stdout.
"""

from __future__ import annotations

import argparse
import sys

from ..corpus.synth import SynthConfig, write_dataset
from ..errors import ConfigError, DataError, NumericError
from .config import ExperimentConfig, apply_preset, load_config, PRESETS
from .train import run_training
from .evaluate import run_eval
from .align import run_align


def _range_pair(text: str) -> tuple[int, int]:
    lo, _, hi = text.partition(":")
    return int(lo), int(hi or lo)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lipseq",
                                description="desk-scale viseme lipreading toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate a synthetic rendered-viseme dataset")
    sp.add_argument("--out", required=True)
    sp.add_argument("--n", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--noise", type=float, default=0.1)
    sp.add_argument("--durations", type=_range_pair, default=(4, 10),
                    metavar="LO:HI", help="frames per viseme (default 4:10)")
    sp.add_argument("--lengths", type=_range_pair, default=(10, 65),
                    metavar="LO:HI", help="tokens per sentence incl. framing "
                                          "silences (default 10:65)")
    sp.add_argument("--cache-dct", action="store_true",
                    help="also write DCT feature caches and manifest_dct.tsv")
    sp.add_argument("--force", action="store_true")

    tp = sub.add_parser("train", help="train a model on a manifest")
    tp.add_argument("--manifest", required=True)
    tp.add_argument("--eval-manifest", default=None)
    tp.add_argument("--out", required=True)
    tp.add_argument("--config", default=None)
    tp.add_argument("--preset", default=None, choices=sorted(PRESETS))
    tp.add_argument("--seed", type=int, default=None)
    tp.add_argument("--epochs", type=int, default=None)
    tp.add_argument("--resume", action="store_true")

    ep = sub.add_parser("eval", help="beam-decode and score a manifest")
    ep.add_argument("--checkpoint", required=True)
    ep.add_argument("--manifest", required=True)
    ep.add_argument("--out", default=None)
    ep.add_argument("--config", default=None)
    ep.add_argument("--beam", type=int, default=None)

    ap = sub.add_parser("align", help="export a clip's attention alignment matrix")
    ap.add_argument("--checkpoint", required=True)
    ap.add_argument("--manifest", required=True)
    ap.add_argument("--clip", required=True)
    ap.add_argument("--out", required=True, help="output path prefix (.txt/.pgm)")
    ap.add_argument("--config", default=None)
    return p


def _make_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if getattr(args, "preset", None):
        cfg = apply_preset(cfg, args.preset)
    if getattr(args, "config", None):
        cfg = load_config(args.config, cfg)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "epochs", None) is not None:
        cfg.max_epochs = args.epochs
    return cfg.validate()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            cfg = SynthConfig(n_sentences=args.n, seed=args.seed,
                              noise_sigma=args.noise,
                              duration_range=args.durations,
                              length_range=args.lengths)
            manifest = write_dataset(cfg, args.out, force=args.force,
                                     cache_dct=args.cache_dct)
            print(f"manifest={manifest} n={args.n} seed={args.seed}")
        elif args.command == "train":
            cfg = _make_config(args)
            result = run_training(cfg, args.manifest, args.out,
                                  eval_manifest=args.eval_manifest,
                                  resume=args.resume, echo=print)
            print(f"best_acc={result.best_acc:.2f} best_epoch={result.best_epoch} "
                  f"converged_epoch={result.converged_epoch} "
                  f"checkpoint={result.best_checkpoint}")
        elif args.command == "eval":
            cfg = load_config(args.config) if args.config else None
            result = run_eval(args.checkpoint, args.manifest,
                              beam_width=args.beam, cfg=cfg, out_dir=args.out)
            c = result.counts
            print(f"accuracy={c.accuracy:.2f} error_rate={c.error_rate:.2f} "
                  f"N={c.n_ref} S={c.subs} D={c.dels} I={c.ins}")
        elif args.command == "align":
            cfg = load_config(args.config) if args.config else None
            matrix = run_align(args.checkpoint, args.manifest, args.clip,
                               args.out, cfg)
            print(f"rows={matrix.shape[0]} cols={matrix.shape[1]} "
                  f"out={args.out}.txt,{args.out}.pgm")
    except ConfigError as exc:
        print(f"error=config detail={exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error=data detail={exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"error=numeric detail={exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
