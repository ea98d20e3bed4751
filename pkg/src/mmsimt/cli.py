"""Command-line entry point: ``mmsimt <verb> ...``.

Every verb prints line-delimited JSON records on stdout (``report`` prints
a table unless asked for JSON). Exit codes: 0 success, 1 usage or config
error, 2 data or format error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .config import dump_config, load_config
from .data import (
    Vocabulary,
    build_vocabularies,
    load_features,
    load_parallel,
    read_hypotheses,
    read_lines,
    synth_task,
    write_features,
    write_text,
)
from .errors import AlignmentError, ConfigError, FormatError, SimtError, TrainingDiverged, UsageError
from .gradsuite import TOLERANCE, run_suite
from .metrics import article_accuracy, score_system
from .model import VARIANTS, TranslationModel
from .oracle import oracle_report
from .policies import ActionTrace, read_records, simulate, write_traces
from .report import format_jsonl, format_table, merge_records, parse_records
from .training import model_config_for, train
from .validation import check_policy

log = logging.getLogger("mmsimt")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _emit(record):
    sys.stdout.write(json.dumps(record, sort_keys=True) + "\n")


def _features_for(path, n, required, what):
    if path is None:
        if required:
            raise ConfigError(f"this model variant needs visual features; pass {what}")
        return None
    return load_features(path, expected_images=n)


# build-vocab

def cmd_build_vocab(args):
    sv, tv = build_vocabularies(args.train_src, args.train_tgt)
    out = Path(args.out)
    src_path, tgt_path = Path(f"{out}.src.vocab"), Path(f"{out}.tgt.vocab")
    if out.parent != Path("."):
        out.parent.mkdir(parents=True, exist_ok=True)
    sv.save(src_path)
    tv.save(tgt_path)
    _emit({"src_vocab": str(src_path), "src_size": len(sv), "tgt_vocab": str(tgt_path), "tgt_size": len(tv)})
    return 0


# train

def _load_training_data(cfg):
    if not cfg.train_src or not cfg.train_tgt:
        raise ConfigError("config must set train_src and train_tgt")
    sv = Vocabulary.load(cfg.src_vocab) if cfg.src_vocab else None
    tv = Vocabulary.load(cfg.tgt_vocab) if cfg.tgt_vocab else None
    corpus = load_parallel(cfg.train_src, cfg.train_tgt, sv, tv)
    multimodal = cfg.variant != "UNI"
    feats = _features_for(cfg.train_features if multimodal else None, len(corpus), multimodal, "train_features")
    if feats is not None:
        corpus.attach_features(feats)
    dev = None
    if cfg.dev_src or cfg.dev_tgt:
        if not (cfg.dev_src and cfg.dev_tgt):
            raise ConfigError("dev_src and dev_tgt must be given together")
        dev = load_parallel(cfg.dev_src, cfg.dev_tgt, corpus.src_vocab, corpus.tgt_vocab)
        dfeats = _features_for(cfg.dev_features if multimodal else None, len(dev), multimodal, "dev_features")
        if dfeats is not None:
            dev.attach_features(dfeats)
    return corpus, dev


def cmd_train(args):
    cfg = load_config(args.config, args.set or ())
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if args.output:
        cfg = cfg.replace(output=args.output)
    corpus, dev = _load_training_data(cfg)
    out = Path(cfg.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    log_path = Path(cfg.log) if cfg.log else Path(f"{out}.log.jsonl")
    meta = {"seed": cfg.seed, "config": dump_config(cfg), "version": __version__}
    best = {"ppl": float("inf"), "saved": False}

    with open(log_path, "w", encoding="utf-8") as log_fh:
        def on_epoch(rec):
            log_fh.write(rec.to_json() + "\n")
            log_fh.flush()

        def checkpoint_fn(model, rec):
            # keep the lowest-perplexity checkpoint on disk as training goes
            if rec.dev_ppl < best["ppl"]:
                best["ppl"] = rec.dev_ppl
                save_checkpoint(out, model, corpus.src_vocab, corpus.tgt_vocab,
                                dict(meta, best_epoch=rec.epoch, dev_ppl=rec.dev_ppl))
                best["saved"] = True

        try:
            result = train(cfg, corpus, dev, seed=cfg.seed, checkpoint_fn=checkpoint_fn, on_epoch=on_epoch)
        except TrainingDiverged as exc:
            if not best["saved"] and exc.params is not None:
                model = TranslationModel(model_config_for(cfg, corpus), exc.params)
                save_checkpoint(out, model, corpus.src_vocab, corpus.tgt_vocab, dict(meta, diverged=True))
            raise
    _emit({"checkpoint": str(out), "log": str(log_path), "epochs": len(result.log),
           "best_epoch": result.best_epoch, "best_dev_ppl": best["ppl"], "stopped_early": result.stopped_early,
           "seed": cfg.seed})
    return 0


# simulate

def _simulate_chunk(job):
    model, items, policy, max_len = job
    out = []
    for ids, feats in items:
        out.append(simulate(model, ids, feats, policy, max_len))
    return out


def cmd_simulate(args):
    model, sv, tv, _ = load_checkpoint(args.checkpoint)
    policy = check_policy(args.policy, args.k, args.delta)
    sources = read_lines(args.src)
    feats = _features_for(args.features if model.config.multimodal else None, len(sources),
                          model.config.multimodal, "--features")
    items = [(sv.encode(s), None if feats is None else feats[i]) for i, s in enumerate(sources)]
    jobs = max(1, args.jobs)
    if jobs == 1:
        results = _simulate_chunk((model, items, policy, args.max_len))
    else:
        size = -(-len(items) // jobs)
        chunks = [(model, items[i:i + size], policy, args.max_len) for i in range(0, len(items), size)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = [r for part in pool.map(_simulate_chunk, chunks) for r in part]
    hyps = [tv.decode(h) for h, _ in results]
    k = None if policy.kind == "consecutive" else policy.k
    delta = policy.delta if policy.kind == "wait_if_diff" else None
    records = [trace.to_record(i, policy.kind, k, delta) for i, (_, trace) in enumerate(results)]
    write_text(args.hyps, hyps)
    write_traces(args.traces, records)
    _emit({"hyps": args.hyps, "traces": args.traces, "sentences": len(hyps), "policy": policy.kind, "k": k,
           "truncated": sum(1 for _, t in results if t.truncated)})
    return 0


# score

def _read_traces(path, n):
    traces = [ActionTrace.from_record(r) for r in read_records(path)]
    if len(traces) != n:
        raise AlignmentError(f"{path} holds {len(traces)} traces for {n} hypotheses")
    return traces


def cmd_score(args):
    hyps, refs = read_hypotheses(args.hyps), read_lines(args.refs)
    if len(hyps) != len(refs):
        raise AlignmentError(f"{args.hyps} has {len(hyps)} lines but {args.refs} has {len(refs)}")
    traces = _read_traces(args.traces, len(hyps)) if args.traces else None
    policy, k = args.policy, args.k
    if traces is not None:
        first = read_records(args.traces)[0]
        policy = policy or first.get("policy")
        k = k if k is not None else first.get("k")
    rec = score_system(hyps, refs, traces, system=args.system, policy=policy, k=k)
    line = rec.to_json()
    sys.stdout.write(line + "\n")
    if args.out:
        with open(args.out, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
    return 0


# oracle

def _resolve(base, p):
    return p if Path(p).is_absolute() else str(base / p)


def _read_manifest(path):
    base = Path(path).parent
    cells = read_records(path)
    if not cells:
        raise FormatError(f"{path}: empty manifest")
    out = {}
    for n, c in enumerate(cells, 1):
        try:
            k, run, hyps = int(c["k"]), int(c["run"]), c["hyps"]
        except KeyError as exc:
            raise FormatError(f"{path}:{n}: manifest entry lacks {exc.args[0]!r}") from None
        if (k, run) in out:
            raise FormatError(f"{path}:{n}: duplicate cell k={k} run={run}")
        traces = c.get("traces")
        out[(k, run)] = (_resolve(base, hyps), _resolve(base, traces) if traces else None)
    return out


def cmd_oracle(args):
    refs = read_lines(args.refs)
    cells = _read_manifest(args.manifest)
    k_set = tuple(sorted({k for k, _ in cells})) if args.k_set is None else args.k_set
    runs = sorted({r for _, r in cells})
    if runs != list(range(len(runs))):
        raise UsageError(f"runs must be numbered 0..n-1, got {runs}")
    grid = {}
    for (k, r), (hyp_path, trace_path) in cells.items():
        if k not in k_set:
            continue
        hyps = read_hypotheses(hyp_path)
        if len(hyps) != len(refs):
            raise AlignmentError(f"{hyp_path} has {len(hyps)} lines for {len(refs)} references")
        traces = _read_traces(trace_path, len(hyps)) if trace_path else [None] * len(hyps)
        for n, (h, t) in enumerate(zip(hyps, traces)):
            grid[(n, k, r)] = (h, t)
    res = oracle_report(refs, grid, k_set=k_set, n_runs=len(runs))
    rec = {"system": args.system, "policy": "oracle", "bleu": res.bleu, "k_set": list(k_set), "runs": len(runs)}
    if res.al == res.al:
        rec["al"] = res.al
    rec["selected_k"] = {str(k): sum(1 for c in res.selected if c.k == k) for k in k_set}
    _emit(rec)
    if args.out:
        with open(args.out, "a", encoding="utf-8") as fh:
            fh.write(json.dumps({k: rec[k] for k in ("system", "policy", "bleu", "al") if k in rec},
                                sort_keys=True) + "\n")
    return 0


# report

def cmd_report(args):
    records = []
    for path in args.records:
        if path == "-":
            records += parse_records(sys.stdin.read().splitlines(), "<stdin>")
        else:
            p = Path(path)
            if not p.exists():
                raise UsageError(f"no such record file: {p}")
            records += parse_records(p.read_text(encoding="utf-8").splitlines(), str(p))
    merged = merge_records(records)
    sys.stdout.write(format_jsonl(merged) if args.format == "jsonl" else format_table(merged))
    if args.out:
        Path(args.out).write_text(format_jsonl(merged), encoding="utf-8")
    return 0


# gendereval

def cmd_gendereval(args):
    hyps, refs = read_hypotheses(args.hyps), read_lines(args.refs)
    if len(hyps) != len(refs):
        raise AlignmentError(f"{args.hyps} has {len(hyps)} lines but {args.refs} has {len(refs)}")
    sys.stdout.write(article_accuracy(hyps, refs, args.articles).to_json() + "\n")
    return 0


# synth

def cmd_synth(args):
    task = synth_task(args.kind, args.n, seed=args.seed, n_regions=args.regions, dim=args.dim)
    prefix = Path(args.out)
    if prefix.parent != Path("."):
        prefix.parent.mkdir(parents=True, exist_ok=True)
    paths = {"src": f"{prefix}.src", "tgt": f"{prefix}.tgt", "features": f"{prefix}.feat"}
    write_text(paths["src"], task.sources)
    write_text(paths["tgt"], task.targets)
    write_features(paths["features"], task.features)
    if any(lab is not None for lab in task.labels):
        paths["labels"] = f"{prefix}.labels"
        Path(paths["labels"]).write_text("".join(f"{lab}\n" for lab in task.labels), encoding="utf-8")
    _emit(dict(paths, kind=args.kind, n=args.n, seed=args.seed))
    return 0


# gradcheck

def cmd_gradcheck(args):
    variants = VARIANTS if args.variant == "all" else (args.variant,)
    results = run_suite(seed=args.seed, variants=variants, ops=not args.loss_only)
    for r in results:
        _emit(r.to_record())
    worst = max(r.max_error for r in results)
    _emit({"summary": True, "checks": len(results), "failed": sum(not r.passed for r in results),
           "max_rel_error": worst, "tolerance": TOLERANCE})
    return 0 if worst < TOLERANCE else 3


def _k_list(text):
    try:
        ks = tuple(sorted({int(x) for x in text.split(",") if x.strip()}))
    except ValueError:
        raise UsageError(f"bad k list {text!r}") from None
    if not ks or ks[0] < 1:
        raise UsageError("k values must be positive integers")
    return ks


def build_parser():
    p = _Parser(prog="mmsimt", description="Multimodal simultaneous machine translation lab.")
    p.add_argument("--version", action="version", version=f"mmsimt {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("build-vocab", help="build source and target vocabularies from training text")
    s.add_argument("--train-src", required=True)
    s.add_argument("--train-tgt", required=True)
    s.add_argument("--out", required=True, help="output prefix; writes PREFIX.src.vocab and PREFIX.tgt.vocab")
    s.set_defaults(func=cmd_build_vocab)

    s = sub.add_parser("train", help="train one model (one seed) from a key=value config")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--output", help="checkpoint path (overrides the config)")
    s.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config entry")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("simulate", help="decode a test set under a simultaneous policy")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--src", required=True)
    s.add_argument("--features")
    s.add_argument("--policy", default="consecutive", help="consecutive, wait-k or wait-if-diff")
    s.add_argument("--k", type=int, default=1)
    s.add_argument("--delta", type=int, default=1)
    s.add_argument("--max-len", type=int)
    s.add_argument("--hyps", required=True, help="output hypotheses, one per line")
    s.add_argument("--traces", required=True, help="output action traces, JSON lines")
    s.add_argument("--jobs", type=int, default=1, help="worker processes")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("score", help="BLEU and latency of a hypothesis file")
    s.add_argument("--hyps", required=True)
    s.add_argument("--refs", required=True)
    s.add_argument("--traces")
    s.add_argument("--system", default="system")
    s.add_argument("--policy")
    s.add_argument("--k", type=int)
    s.add_argument("--out", help="append the record to this file")
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("oracle", help="multi-run, multi-k oracle over a grid manifest")
    s.add_argument("--manifest", required=True, help='JSON lines {"k", "run", "hyps", "traces"}')
    s.add_argument("--refs", required=True)
    s.add_argument("--k-set", type=_k_list, help="comma-separated k values (default: all in the manifest)")
    s.add_argument("--system", default="oracle")
    s.add_argument("--out", help="append a report record to this file")
    s.set_defaults(func=cmd_oracle)

    s = sub.add_parser("report", help="merge metric records into a latency/quality table")
    s.add_argument("records", nargs="+", help="record files (JSON lines); '-' reads stdin")
    s.add_argument("--format", choices=("table", "jsonl"), default="table")
    s.add_argument("--out", help="also write the merged records as JSON lines")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("gendereval", help="article accuracy on sentences whose reference starts with an article")
    s.add_argument("--hyps", required=True)
    s.add_argument("--refs", required=True)
    s.add_argument("--articles", nargs="+", default=["un", "une"])
    s.set_defaults(func=cmd_gendereval)

    s = sub.add_parser("synth", help="generate a synthetic task corpus with features")
    s.add_argument("--kind", choices=("copy", "gender", "reorder"), required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--regions", type=int, default=4)
    s.add_argument("--dim", type=int, default=16)
    s.add_argument("--out", required=True, help="output prefix")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("gradcheck", help="finite-difference check of every op and the full loss")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--variant", choices=("all",) + VARIANTS, default="all")
    s.add_argument("--loss-only", action="store_true")
    s.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.command is None:
            raise UsageError("no command given; see mmsimt --help")
        return args.func(args)
    except SimtError as exc:
        sys.stderr.write(f"mmsimt: error: {exc}\n")
        return exc.exit_code
    except ValueError as exc:
        sys.stderr.write(f"mmsimt: error: {exc}\n")
        return 1
    except OSError as exc:
        sys.stderr.write(f"mmsimt: error: {exc}\n")
        return 2
    except FloatingPointError as exc:
        sys.stderr.write(f"mmsimt: numeric error: {exc}\n")
        return 3


if __name__ == "__main__":
    sys.exit(main())
