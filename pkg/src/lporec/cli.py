"""``lporec`` command line: generate, prepare, train, evaluate, diagnose, ablate.

Exit status is 0 on success, 2 on invalid input, 3 on runtime failure; errors
are reported on stderr as a single ``error: <ClassName>: <message>`` line.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import config as cfgmod
from .data import (SyntheticSpec, build_splits, core_filter, generate_synthetic, load_splits,
                   parse_interactions, save_splits, write_interactions)
from .errors import ConfigError, EmptyAfterFilter, LPORecError
from .evaluation import evaluate, prob_diagnostics
from .model import load_checkpoint
from .trainer import pretrain_reference, train

log = logging.getLogger("lporec")

SAMPLERS = ("adaptive_gumbel", "topk_select", "uniform_random")


def cmd_generate(args):
    spec = SyntheticSpec(num_users=args.users, num_items=args.items,
                         interactions_per_user=args.per_user, zipf_exponent=args.zipf, seed=args.seed)
    records = generate_synthetic(spec)
    write_interactions(records, args.out)
    log.info("wrote %d interactions to %s", len(records), args.out)


def cmd_prepare(args):
    records = parse_interactions(Path(args.input))
    kept = core_filter(records, 5)
    if not kept:
        raise EmptyAfterFilter(f"no interactions survive 5-core filtering of {args.input}")
    splits = build_splits(kept, L_max=10)
    save_splits(splits, args.out)
    log.info("prepared %d users, %d items, %d training examples -> %s",
             len(splits.test), splits.catalog.num_items, len(splits.train), args.out)


def _load_run_config(args):
    overrides = {"seed": args.seed, "preset": args.preset, "out": args.out,
                 "data.splits": getattr(args, "splits", None)}
    return cfgmod.load_config(args.config, overrides)


def run_training(cfg, out_dir):
    """Train per ``cfg``; writes checkpoints, history.csv and test metrics.json into ``out_dir``."""
    out = Path(out_dir)
    if not cfg.splits:
        raise ConfigError("no split directory: set data.splits or pass --splits")
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved").write_text(cfg.dump())
    splits = load_splits(cfg.splits)
    dims = cfg.dims(splits.catalog.num_items)
    tc = cfg.train_config()
    reference = None
    if tc.loss == "dpo":
        reference, _ = pretrain_reference(splits, dims, tc, checkpoint_dir=out / "reference")
    _, history = train(splits, dims, tc, init=reference, reference=reference, checkpoint_dir=out)
    history.write_csv(out / "history.csv")
    report = evaluate(history.best_params, splits.test, splits.catalog)
    report.to_json(out / "metrics.json")
    return history, report


def cmd_train(args):
    cfg = _load_run_config(args)
    _, report = run_training(cfg, cfg.out)
    print(report.to_json())


def cmd_evaluate(args):
    params = load_checkpoint(args.checkpoint)
    splits = load_splits(args.splits)
    report = evaluate(params, getattr(splits, args.split), splits.catalog)
    if args.out:
        report.to_json(args.out)
    print(report.to_json())


def cmd_diagnose(args):
    params = load_checkpoint(args.checkpoint)
    splits = load_splits(args.splits)
    diag = prob_diagnostics(params, getattr(splits, args.split), splits.catalog, bins=args.bins)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    diag.write(out, out.with_suffix(".summary.txt"))
    print(f"mean_delta={diag.mean_delta!r}")


def ablation_variants():
    for loss in ("ce", "ce_lpo"):
        for kind in SAMPLERS:
            for reweight in (True, False):
                yield loss, kind, reweight


def cmd_ablate(args):
    cfg = _load_run_config(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    rows, cache = [], {}
    for loss, kind, reweight in ablation_variants():
        alphas = (cfg.alpha_T, cfg.alpha_H) if reweight else (0.0, 0.0)
        variant = cfg.replace(loss=loss, sampler_kind=kind, alpha_T=alphas[0], alpha_H=alphas[1])
        # plain CE never samples, so the sampler choice cannot change its result
        key = (loss, kind if loss == "ce_lpo" else None, reweight)
        if key not in cache:
            name = f"{loss}-{kind}-{'rw' if reweight else 'norw'}"
            _, cache[key] = run_training(variant.replace(out=str(out / name)), out / name)
        m = cache[key].metrics
        rows.append([loss, kind, "on" if reweight else "off", m["hr@10"], m["ndcg@10"],
                     m["tail_hr@10"], m["tail_ndcg@10"]])
    with open(out / "ablation.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["loss", "sampler", "reweight", "hr@10", "ndcg@10", "tail_hr@10", "tail_ndcg@10"])
        w.writerows(rows)
    print((out / "ablation.csv").read_text(), end="")


def build_parser():
    parser = argparse.ArgumentParser(prog="lporec", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic interaction TSV")
    p.add_argument("--users", type=int, default=1000)
    p.add_argument("--items", type=int, default=500)
    p.add_argument("--per-user", type=int, default=20)
    p.add_argument("--zipf", type=float, default=1.1)
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("prepare", help="5-core filter and leave-one-out split")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prepare)

    for name, func, helptext in (("train", cmd_train, "train a model from a config file"),
                                 ("ablate", cmd_ablate, "loss x sampler x reweight grid")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config")
        p.add_argument("--splits")
        p.add_argument("--seed", type=int)
        p.add_argument("--preset", choices=sorted(cfgmod.PRESETS))
        p.add_argument("--out")
        p.set_defaults(func=func)

    p = sub.add_parser("evaluate", help="HR/NDCG of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--splits", required=True)
    p.add_argument("--split", choices=("test", "validation"), default="test")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("diagnose", help="tail probability shift histogram")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--splits", required=True)
    p.add_argument("--split", choices=("test", "validation"), default="test")
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except LPORecError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.code
    except (OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
