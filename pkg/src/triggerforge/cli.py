"""Command-line front end.

Subcommands: gen-data, train-clean, optimize-trigger, select-samples,
build-poisoned-set, run-attack, sweep, evaluate. Every command accepts
--config (a key=value file or builtin:<name>), --seed, and --out-dir; flags
override config values which override the builtin desk protocol.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, replace
from pathlib import Path

from . import harness, protocol, selection, trigger
from .corpus import (build_corpus, load_corpus, load_jsonl, load_tsv,
                     non_target_subset, save_corpus, synth_generate)
from .model import load_checkpoint, save_checkpoint, train
from .poison import (LabelMode, PoisonPlan, PositionPolicy, TriggerSpec,
                     build_mixed_set, export_mixed_set, rate_to_count)
from .rng import derive_seed


def _add_common(p):
    p.add_argument("--config", default=None,
                   help="key=value config file or builtin:<name> (default builtin:desk_c2)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out-dir", default="runs", help="output directory")


def _load(args):
    cfg = protocol.read_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    return cfg


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(doc, path=None):
    text = json.dumps(doc, indent=2)
    if path is not None:
        Path(path).write_text(text + "\n", encoding="utf8")
    print(text)


def _corpus_and_cfg(args):
    cfg = _load(args)
    corpus = load_corpus(args.corpus)
    return corpus, cfg


def _label_mode(args, corpus) -> LabelMode:
    return LabelMode(args.label_mode, corpus.target_class)


def cmd_gen_data(args):
    cfg = _load(args)
    if args.from_jsonl or args.from_tsv:
        read = (lambda p: load_jsonl(p)) if args.from_jsonl else load_tsv
        train = read(args.from_jsonl or args.from_tsv)
        test = read(args.test_file) if args.test_file else ()
        corpus = build_corpus(train, test,
                              num_classes=cfg.get("num_classes", 2),
                              target_class=cfg.get("target_class", 1),
                              min_freq=cfg.get("min_freq", 2))
    else:
        corpus = synth_generate(protocol.synth_config_from(cfg))
    out = _out_dir(args) / "corpus"
    save_corpus(corpus, out)
    _emit({"corpus_dir": str(out),
           "train": len(corpus.train), "test": len(corpus.test),
           "num_classes": corpus.num_classes, "target_class": corpus.target_class,
           "vocab_size": len(corpus.vocab),
           "fingerprint": harness.corpus_fingerprint(corpus)})


def cmd_train_clean(args):
    corpus, cfg = _corpus_and_cfg(args)
    mc = protocol.model_config_from(cfg, len(corpus.vocab))
    tc = protocol.train_config_from(cfg)
    params, history = train(corpus, mc, tc)
    out = _out_dir(args)
    save_checkpoint(out / "clean_model.json", params, mc)
    _emit({"checkpoint": str(out / "clean_model.json"),
           "final_test_ca": history[-1].get("test_ca"),
           "history": history}, out / "train_clean.json")


def cmd_optimize_trigger(args):
    corpus, cfg = _corpus_and_cfg(args)
    params, mc = load_checkpoint(args.checkpoint)
    target = corpus.target_class
    pool = non_target_subset(corpus, "train")
    seed = cfg.get("seed", 0)
    report = {"strategy": args.strategy, "position": args.position, "seed": seed}
    if args.strategy in ("l2", "cosine"):
        opt = trigger.optimize_embedding(params, corpus.vocab, pool, target,
                                         epochs=args.epochs, lr=args.lr,
                                         position=args.position)
        exclude = [corpus.vocab.unk_id] + list(corpus.vocab.rare_token_ids)
        rank = (trigger.nearest_by_l2 if args.strategy == "l2"
                else trigger.nearest_by_cosine)(opt.vector, params, topk=args.k,
                                                exclude=exclude)
        spec = TriggerSpec(corpus.vocab.token(rank[0].token_id),
                           PositionPolicy.fixed(args.position))
        asr = trigger.clean_asr(params, corpus.vocab, non_target_subset(corpus, "test"),
                                spec, target)
        report.update(
            chosen_token=spec.token, clean_asr=asr,
            embedding_loss=opt.final_loss,
            history=[{"token": corpus.vocab.token(c.token_id), "score": c.score}
                     for c in rank])
    else:
        sc = trigger.SearchConfig(k=args.k, runs=args.runs, seed=seed)
        best, history = trigger.token_search(params, corpus.vocab, pool, target,
                                             sc, position=args.position)
        spec = TriggerSpec(corpus.vocab.token(best.token_id),
                           PositionPolicy.fixed(args.position))
        asr = trigger.clean_asr(params, corpus.vocab, non_target_subset(corpus, "test"),
                                spec, target)
        report.update(chosen_token=spec.token, clean_asr=asr, history=history)
    _emit(report, _out_dir(args) / "optimize_trigger.json")


def _resolve_count(args, corpus, mode):
    if args.count is not None:
        return args.count, (args.gamma if args.gamma is not None else 0.0)
    gamma = args.gamma if args.gamma is not None else 0.0
    return rate_to_count(gamma, corpus, mode), gamma


def cmd_select_samples(args):
    corpus, cfg = _corpus_and_cfg(args)
    mode = _label_mode(args, corpus)
    seed = cfg.get("seed", 0)
    count, gamma = _resolve_count(args, corpus, mode)
    tspec = TriggerSpec(args.trigger, PositionPolicy.parse(args.position),
                        rng_seed=derive_seed(seed, "trigger"))
    report = {"strategy": args.strategy, "seed": seed, "count": count, "gamma": gamma}
    history = None
    if args.strategy == "random":
        indexes = selection.random_select(corpus, mode, count, derive_seed(seed, "select"))
    elif args.strategy == "fusp":
        mc = protocol.model_config_from(cfg, len(corpus.vocab))
        inner = replace(protocol.train_config_from(cfg), epochs=args.inner_epochs)
        fc = selection.FuspConfig(pool_size=count, iterations=args.iterations,
                                  filter_ratio=args.alpha, inner_train=inner,
                                  trigger=tspec, label_mode=mode,
                                  seed=derive_seed(seed, "select"))
        indexes, state = selection.fusp_select(corpus, mc, fc)
        history = state.history
        report["best_asr"] = state.best_asr
    elif args.strategy == "removal":
        if args.checkpoint:
            params, _ = load_checkpoint(args.checkpoint)
        else:
            mc = protocol.model_config_from(cfg, len(corpus.vocab))
            tc = replace(protocol.train_config_from(cfg), seed=derive_seed(seed, "benign"))
            params, _ = train(corpus, mc, tc)
        indexes = selection.removal_select(corpus, params, count, args.alpha,
                                           tspec, derive_seed(seed, "select"))
    else:
        raise ValueError(f"unknown strategy {args.strategy!r}")
    report.update(config={"trigger": args.trigger, "position": args.position,
                          "label_mode": mode.mode, "alpha": args.alpha,
                          "iterations": args.iterations},
                  best_indexes=indexes, history=history)
    _emit(report, _out_dir(args) / "select_samples.json")


def _plan_from_args(args, corpus, cfg):
    mode = _label_mode(args, corpus)
    seed = cfg.get("seed", 0)
    if args.indexes:
        doc = json.loads(Path(args.indexes).read_text(encoding="utf8"))
        indexes = doc["best_indexes"] if isinstance(doc, dict) else list(doc)
        gamma = args.gamma if args.gamma is not None else 0.0
        tspec = TriggerSpec(args.trigger, PositionPolicy.parse(args.position),
                            rng_seed=derive_seed(seed, "trigger"))
        return PoisonPlan(indexes, tspec, mode, gamma=gamma), None
    mc = protocol.model_config_from(cfg, len(corpus.vocab))
    tc = protocol.train_config_from(cfg)
    gamma = args.gamma if args.gamma is not None else 0.0
    return harness.build_plan(corpus, args.strategy, gamma, args.trigger,
                              args.position, mode, seed, mc, tc,
                              harness.SelectionDefaults(fusp_alpha=args.alpha,
                                                        fusp_iterations=args.iterations,
                                                        fusp_inner_epochs=args.inner_epochs,
                                                        removal_alpha=args.alpha))


def cmd_build_poisoned_set(args):
    corpus, cfg = _corpus_and_cfg(args)
    plan, _ = _plan_from_args(args, corpus, cfg)
    mixed, provenance = build_mixed_set(corpus, plan)
    out = _out_dir(args) / "poisoned_train.jsonl"
    export_mixed_set(out, mixed, provenance)
    _emit({"output": str(out), "n_poisoned": len(provenance),
           "n_train": len(mixed), "gamma": plan.gamma})


def cmd_run_attack(args):
    corpus, cfg = _corpus_and_cfg(args)
    plan, sel_history = _plan_from_args(args, corpus, cfg)
    mc = protocol.model_config_from(cfg, len(corpus.vocab))
    tc = replace(protocol.train_config_from(cfg),
                 seed=derive_seed(cfg.get("seed", 0), "train"))
    record = harness.run_attack(corpus, mc, tc, plan, strategy=args.strategy,
                                history=sel_history)
    _emit(harness.record_to_json(record), _out_dir(args) / "run_attack.json")


def _csv_list(text, cast=str):
    return [cast(part.strip()) for part in str(text).split(",") if part.strip() != ""]


def cmd_sweep(args):
    corpus, cfg = _corpus_and_cfg(args)
    mode = _label_mode(args, corpus)
    mc = protocol.model_config_from(cfg, len(corpus.vocab))
    tc = protocol.train_config_from(cfg)
    out = _out_dir(args)
    rows, _ = harness.sweep(
        corpus,
        gammas=_csv_list(args.gammas, float),
        strategies=_csv_list(args.strategies),
        triggers=_csv_list(args.triggers),
        positions=_csv_list(args.positions),
        seeds=_csv_list(args.seeds, int),
        label_mode=mode, model_config=mc, train_config=tc,
        defaults=harness.SelectionDefaults(fusp_alpha=args.alpha,
                                           fusp_iterations=args.iterations,
                                           fusp_inner_epochs=args.inner_epochs,
                                           removal_alpha=args.alpha),
        out_dir=out, workers=args.workers)
    failed = sum(1 for r in rows if r["status"] != "ok")
    _emit({"rows": len(rows), "failed": failed,
           "csv": str(out / "sweep.csv"), "summary": str(out / "summary.csv"),
           "ledger": str(out / "ledger.jsonl")})


def cmd_evaluate(args):
    corpus, cfg = _corpus_and_cfg(args)
    params, _ = load_checkpoint(args.checkpoint)
    tspec = TriggerSpec(args.trigger, PositionPolicy.parse(args.position),
                        rng_seed=derive_seed(cfg.get("seed", 0), "trigger"))
    metrics = harness.evaluate(params, corpus, tspec, strict=args.strict)
    _emit(asdict(metrics))


def build_parser():
    parser = argparse.ArgumentParser(prog="triggerforge",
                                     description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data",
                       help="generate a synthetic corpus, or ingest JSONL/TSV data")
    _add_common(p)
    p.add_argument("--from-jsonl", default=None,
                   help="ingest a JSON Lines file (fields: text, label) instead")
    p.add_argument("--from-tsv", default=None, help="ingest a text TAB label file")
    p.add_argument("--test-file", default=None, help="held-out split, same format")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train-clean", help="train a clean model and checkpoint it")
    _add_common(p)
    p.add_argument("--corpus", required=True, help="corpus directory from gen-data")
    p.set_defaults(func=cmd_train_clean)

    p = sub.add_parser("optimize-trigger", help="find an effective trigger word")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--checkpoint", required=True, help="clean model checkpoint")
    p.add_argument("--strategy", choices=("l2", "cosine", "search"), default="search")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--runs", type=int, default=3)
    p.add_argument("--epochs", type=int, default=3, help="free-embedding passes")
    p.add_argument("--lr", type=float, default=0.1, help="free-embedding step size")
    p.add_argument("--position", type=int, default=1)
    p.set_defaults(func=cmd_optimize_trigger)

    def add_plan_flags(p, with_strategy=True):
        p.add_argument("--trigger", required=True, help="trigger token")
        p.add_argument("--position", default="1", help="start|random|end|<index>")
        p.add_argument("--label-mode", choices=("dirty", "clean"), default="dirty")
        p.add_argument("--gamma", type=float, default=None)
        p.add_argument("--alpha", type=float, default=0.3)
        p.add_argument("--iterations", type=int, default=5)
        p.add_argument("--inner-epochs", type=int, default=5)
        if with_strategy:
            p.add_argument("--strategy", choices=("random", "fusp", "removal"),
                           default="random")

    p = sub.add_parser("select-samples", help="pick which samples to poison")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    add_plan_flags(p)
    p.add_argument("--count", type=int, default=None, help="budget; overrides --gamma")
    p.add_argument("--checkpoint", default=None, help="benign model for removal")
    p.set_defaults(func=cmd_select_samples)

    p = sub.add_parser("build-poisoned-set", help="export the poisoned mixed training set")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    add_plan_flags(p)
    p.add_argument("--indexes", default=None, help="JSON file with best_indexes")
    p.set_defaults(func=cmd_build_poisoned_set)

    p = sub.add_parser("run-attack", help="poison, train, and evaluate one run")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    add_plan_flags(p)
    p.add_argument("--indexes", default=None, help="JSON file with best_indexes")
    p.set_defaults(func=cmd_run_attack)

    p = sub.add_parser("sweep", help="grid of attack runs with a CSV ledger")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--gammas", required=True, help="comma list, e.g. 0.005,0.01")
    p.add_argument("--strategies", default="random")
    p.add_argument("--triggers", required=True, help="comma list of tokens")
    p.add_argument("--positions", default="1")
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--label-mode", choices=("dirty", "clean"), default="dirty")
    p.add_argument("--alpha", type=float, default=0.3)
    p.add_argument("--iterations", type=int, default=5)
    p.add_argument("--inner-epochs", type=int, default=5)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("evaluate", help="ASR / clean accuracy of a checkpoint")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--trigger", required=True)
    p.add_argument("--position", default="1")
    p.add_argument("--strict", action="store_true",
                   help="exclude samples already predicted as the target class")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
