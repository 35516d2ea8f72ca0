"""Command-line interface wiring the modules into the experiment pipelines.

Every subcommand is deterministic given its inputs and --seed, writes a
machine-readable JSON report when --report is given, and prints a compact
table to stdout.  Exit codes: 0 success, 1 data/validation error, 2 usage.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional

import numpy as np

from . import bpe as bpe_mod
from . import classif, embed, metrics, normalize, oracle_check, parser as parser_mod, slu
from .corpus_io import (
    ParseError,
    SplitSpec,
    read_conllu,
    read_documents_jsonl,
    read_slu_tsv,
    read_tagset,
    read_utterances_jsonl,
    stratified_split,
    write_conllu,
    write_slu_tsv,
    write_utterances_jsonl,
)

SCHEMA_VERSION = 1
SEED_ENV = "SPOKENNLP_SEED"


def _default_seed() -> int:
    return int(os.environ.get(SEED_ENV, "0"))


def _emit(args, payload: dict, table_rows: list[tuple[str, str]]) -> None:
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": args.command,
        "seed": getattr(args, "seed", None),
        "threads": getattr(args, "threads", 1),
        **payload,
    }
    if getattr(args, "report", None):
        with open(args.report, "w", encoding="utf-8") as f:
            json.dump(report, f, indent=2, sort_keys=True)
            f.write("\n")
    if table_rows:
        width = max(len(k) for k, _ in table_rows)
        for key, value in table_rows:
            print(f"{key:<{width}}  {value}")


def _pm(mean: float, half: float, digits: int = 2) -> str:
    return f"{mean:.{digits}f} ± {half:.{digits}f}"


def _make_provider(spec: str, dim: int, seed: int, words=None) -> embed.EmbeddingProvider:
    if spec == "lookup":
        if not words:
            raise ValueError("lookup provider needs a training corpus to build its vocabulary")
        return embed.LookupProvider.build(words, dim=dim, seed=seed, trainable=True)
    if spec == "char-ngram":
        return embed.CharNgramProvider(dim=dim, seed=seed)
    if spec.startswith("external:"):
        return embed.ExternalProvider.from_file(spec.split(":", 1)[1])
    raise ValueError(f"unknown provider {spec!r} (use lookup, char-ngram or external:FILE)")


# ---------------------------------------------------------------------------
# Handlers


def cmd_normalize(args) -> None:
    with open(args.input, encoding="utf-8") as f:
        lines = [line.rstrip("\n") for line in f]
    out = [normalize.normalize_text(line) for line in lines]
    with open(args.output, "w", encoding="utf-8") as f:
        for line in out:
            f.write(line + "\n")
    _emit(args, {"lines": len(lines), "nonempty_out": sum(1 for l in out if l)},
          [("lines", str(len(lines))), ("non-empty after normalization",
                                        str(sum(1 for l in out if l)))])


def cmd_segment(args) -> None:
    turns = normalize.read_turns_jsonl(args.input)
    utts = normalize.segment_turns(turns)
    write_utterances_jsonl(utts, args.output)
    words = sum(len(u) for u in utts)
    _emit(args, {"turns": len(turns), "utterances": len(utts), "words": words},
          [("turns", str(len(turns))), ("unique utterances", str(len(utts))),
           ("words", str(words))])


def cmd_deanonymize(args) -> None:
    utts = read_utterances_jsonl(args.input)
    names = normalize.NameInventory.from_file(args.names_file)
    out = normalize.deanonymize(utts, args.placeholder, names, args.seed)
    write_utterances_jsonl(out, args.output)
    replaced = sum(
        1 for before, after in zip(utts, out)
        for tb, ta in zip(before.tokens, after.tokens) if tb.surface != ta.surface
    )
    _emit(args, {"utterances": len(out), "replaced_tokens": replaced},
          [("utterances", str(len(out))), ("replaced tokens", str(replaced))])


def cmd_repunc(args) -> None:
    utts = read_utterances_jsonl(args.input)
    out = normalize.repunctuate(utts)
    write_utterances_jsonl(out, args.output)
    _emit(args, {"utterances": len(out), "synthetic_tokens": len(out)},
          [("utterances", str(len(out))), ("synthetic periods added", str(len(out)))])


def _read_text_corpus(path) -> list[str]:
    if str(path).endswith(".jsonl"):
        return [u.text for u in read_utterances_jsonl(path)]
    with open(path, encoding="utf-8") as f:
        return [line.rstrip("\n") for line in f if line.strip()]


def cmd_bpe_train(args) -> None:
    corpus = _read_text_corpus(args.input)
    model = bpe_mod.bpe_train(corpus, args.vocab_size)
    bpe_mod.save_bpe(model, args.output)
    _emit(args, {"merges": len(model.merges), "vocab": len(model.vocab)},
          [("merges", str(len(model.merges))), ("vocabulary units", str(len(model.vocab)))])


def cmd_bpe_apply(args) -> None:
    model = bpe_mod.load_bpe(args.model)
    lines = _read_text_corpus(args.input)
    n_words = n_units = 0
    with open(args.output, "w", encoding="utf-8") as f:
        for line in lines:
            units = []
            for word in line.split():
                encoded = bpe_mod.bpe_encode(model, word)
                units.extend(encoded)
                n_words += 1
                n_units += len(encoded)
            f.write(" ".join(units) + "\n")
    ratio = n_units / n_words if n_words else 0.0
    _emit(args, {"words": n_words, "units": n_units, "units_per_word": ratio},
          [("words", str(n_words)), ("subword units", str(n_units)),
           ("units per word", f"{ratio:.3f}")])


def cmd_bpe_overlap(args) -> None:
    a = bpe_mod.load_bpe(args.model_a)
    b = bpe_mod.load_bpe(args.model_b)
    rep = bpe_mod.overlap_report(a, b)
    _emit(args, rep, [
        ("|A|, |B|", f"{rep['a_size']}, {rep['b_size']}"),
        ("overlap over A", f"{rep['overlap_a_pct']:.2f}%"),
        ("overlap over B", f"{rep['overlap_b_pct']:.2f}%"),
        ("overlap over union", f"{rep['jaccard_pct']:.2f}%"),
    ])


def _parse_hidden(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(","))


def cmd_parse_train(args) -> None:
    train = read_conllu(args.train)
    dev = read_conllu(args.dev)
    dim = args.dim
    if args.desk_scale:
        hidden = _parse_hidden(args.hidden) if args.hidden else (320, 160)
    else:
        hidden = _parse_hidden(args.hidden) if args.hidden else (3200, 1600)
    words = [t.surface for tree in train for t in tree.utterance.tokens]
    provider = _make_provider(args.provider, dim, args.seed, words)
    regime = parser_mod.TrainRegime(
        epochs=args.epochs, explore_start_epoch=args.explore_start,
        explore_prob=args.explore_prob, lr=args.lr,
        batch_size=args.batch_size, seed=args.seed,
    )
    model, history = parser_mod.train_parser(train, dev, provider, regime, hidden)
    parser_mod.save_model(model, args.model_out)
    best = max(history, key=lambda e: (e["dev_las"], -e["epoch"]))
    _emit(args, {"epochs": history, "selected_epoch": best["epoch"],
                 "dev_las": best["dev_las"], "dev_uas": best["dev_uas"],
                 "dev_upos": best["dev_upos"], "hidden_dims": list(hidden),
                 "provider": args.provider},
          [("selected epoch", str(best["epoch"])),
           ("dev LAS", f"{best['dev_las']:.2f}"),
           ("dev UAS", f"{best['dev_uas']:.2f}"),
           ("dev UPOS", f"{best['dev_upos']:.2f}")])


def _load_parse_input(path):
    if str(path).endswith(".jsonl"):
        return read_utterances_jsonl(path)
    return [t.utterance for t in read_conllu(path)]


def cmd_parse_decode(args) -> None:
    model = parser_mod.load_model(args.model)
    utterances = _load_parse_input(args.input)
    provider = None
    if args.provider:
        provider = _make_provider(args.provider, model.feature_spec.word_dim, args.seed)
    trees = parser_mod.decode(model, utterances, provider)
    write_conllu(trees, args.output)
    _emit(args, {"sentences": len(trees),
                 "tokens": sum(len(t) for t in trees)},
          [("sentences parsed", str(len(trees))),
           ("tokens", str(sum(len(t) for t in trees)))])


def cmd_parse_score(args) -> None:
    gold = read_conllu(args.gold)
    pred = read_conllu(args.pred)
    subset = None
    if args.oov_lexicon:
        with open(args.oov_lexicon, encoding="utf-8") as f:
            lexicon = {line.strip() for line in f if line.strip()}
        subset = lambda tok: tok.surface not in lexicon
    report = metrics.attachment_scores(gold, pred, subset)
    rows = [("LAS", f"{report.las:.2f}"), ("UAS", f"{report.uas:.2f}"),
            ("UPOS", f"{report.upos:.2f}"), ("tokens", str(report.token_count))]
    if report.subset is not None:
        rows += [("OOV LAS (Δ)", f"{report.subset.las:.2f} ({report.subset.delta_las:+.2f})"),
                 ("OOV UAS (Δ)", f"{report.subset.uas:.2f} ({report.subset.delta_uas:+.2f})"),
                 ("OOV UPOS (Δ)", f"{report.subset.upos:.2f} ({report.subset.delta_upos:+.2f})"),
                 ("OOV tokens", str(report.subset.token_count))]
    _emit(args, report.to_dict(), rows)


def cmd_oracle_check(args) -> None:
    result = oracle_check.verify_oracle(max_len=args.max_len)
    payload = result.to_dict()
    _emit(args, payload, [
        ("trees checked", str(result.trees_checked)),
        ("configurations checked", str(result.configs_checked)),
        ("actions checked", str(result.actions_checked)),
        ("cost mismatches", str(len(result.cost_mismatches))),
        ("zero-cost failures", str(len(result.zero_cost_failures))),
        ("reconstruction failures", str(len(result.reconstruction_failures))),
        ("verdict", "all-pass" if result.all_pass else "FAIL"),
    ])
    if not result.all_pass:
        raise ValueError("dynamic oracle verification failed; see report")


def cmd_slu_train(args) -> None:
    train = read_slu_tsv(args.train)
    dev = read_slu_tsv(args.dev)
    concepts = sorted({
        t[2:] for s in train + dev for t in s.bio_tags if t != "O"
    })
    words = [t.surface for s in train for t in s.utterance.tokens]
    provider = _make_provider(args.provider, args.dim, args.seed, words)
    if isinstance(provider, embed.LookupProvider):
        provider.trainable = False  # the windowed tagger keeps providers frozen
    tagger, history = slu.train_slu_tagger(
        train, provider, dev, concepts, epochs=args.epochs, lr=args.lr,
        seed=args.seed, hidden_dims=(64, 64) if args.desk_scale else (320, 160),
    )
    slu.save_tagger(tagger, args.model_out)
    best = min(history, key=lambda e: (e["dev_cer"], e["epoch"]))
    _emit(args, {"epochs": history, "selected_epoch": best["epoch"],
                 "dev_cer": best["dev_cer"], "concepts": concepts},
          [("selected epoch", str(best["epoch"])),
           ("dev CER", f"{100 * best['dev_cer']:.2f}%"),
           ("concepts", str(len(concepts)))])


def cmd_slu_decode(args) -> None:
    tagger = slu.load_tagger(args.model)
    samples = read_slu_tsv(args.input)
    provider = _make_provider(args.provider, tagger.word_dim, args.seed,
                              [t.surface for s in samples for t in s.utterance.tokens])
    if isinstance(provider, embed.LookupProvider):
        provider.trainable = False
    hyp = slu.decode_slu(tagger, [s.utterance for s in samples], provider)
    write_slu_tsv(hyp, args.output)
    _emit(args, {"utterances": len(hyp)}, [("utterances tagged", str(len(hyp)))])


def cmd_slu_score(args) -> None:
    refs = read_slu_tsv(args.ref)
    rules = slu.ValueRules.from_json(args.rules) if args.rules else slu.ValueRules.identity()
    scorer = (lambda r, h: slu.score_cver(r, h, rules)) if args.mode == "cver" \
        else slu.score_cer

    hyp_files = args.hyp
    per_split = []
    for path in hyp_files:
        hyps = read_slu_tsv(path)
        if len(hyps) != len(refs):
            raise ValueError(f"{path}: {len(hyps)} hypotheses for {len(refs)} references")
        rate, counts = scorer(refs, hyps)
        per_split.append((rate, counts))
    rate, counts = per_split[0]

    ci = None
    if args.ci == "utterance":
        hyps = read_slu_tsv(hyp_files[0])
        unit_rates = []
        for r, h in zip(refs, hyps):
            c = metrics.align_error_rate(
                slu.concept_sequence(r), slu.concept_sequence(h)
            ) if args.mode == "cer" else metrics.align_error_rate(
                slu.concept_value_sequence(r, rules), slu.concept_value_sequence(h, rules)
            )
            if c.ref_length:
                unit_rates.append(c.errors / c.ref_length)
        if len(unit_rates) >= 2:
            ci = metrics.t_confidence_interval(unit_rates)
    elif args.ci == "split" and len(per_split) >= 2:
        ci = metrics.t_confidence_interval([r for r, _ in per_split])

    payload = {
        "mode": args.mode,
        "rate": rate,
        "substitutions": counts.substitutions,
        "deletions": counts.deletions,
        "insertions": counts.insertions,
        "ref_length": counts.ref_length,
        "ci_unit": args.ci,
        "ci": None if ci is None else {"mean": ci[0], "half_width": ci[1]},
        "splits": [r for r, _ in per_split],
    }
    rows = [(args.mode.upper(), f"{100 * rate:.2f}%"),
            ("S / D / I", f"{counts.substitutions} / {counts.deletions} / {counts.insertions}"),
            ("reference length", str(counts.ref_length))]
    if ci is not None:
        rows.append((f"{args.mode.upper()} CI ({args.ci})", _pm(100 * ci[0], 100 * ci[1])))
    _emit(args, payload, rows)


def cmd_classif_run(args) -> None:
    docs = read_documents_jsonl(args.docs)
    if args.model == "svm":
        factory = lambda: classif.SvmTextClassifier(
            vocab_size=args.vocab, kernel=args.kernel, C=args.C, seed=args.seed)
    else:
        provider = embed.CharNgramProvider(dim=args.dim, seed=args.seed)
        factory = lambda: classif.MeanPoolMlpClassifier(
            provider, hidden_dims=(64, 64), epochs=args.epochs, seed=args.seed)
    report = classif.run_splits(
        docs, factory, n_splits=args.splits,
        train_size=args.train_size, test_size=args.test_size, seed=args.seed,
    )
    _emit(args, report, [
        ("model", args.model),
        ("splits", str(report["n_splits"])),
        ("train / test", f"{report['train_size']} / {report['test_size']}"),
        ("weighted F1", _pm(report["mean_weighted_f1"], report["std_weighted_f1"], 3)),
        ("95% CI half-width", f"{report['ci95_half_width']:.4f}"),
    ])


def cmd_split(args) -> None:
    ratios = tuple(float(x) for x in args.ratios.split(","))
    if len(ratios) != 3:
        raise ValueError("--ratios needs three comma-separated values")
    path = str(args.input)
    if path.endswith(".conllu"):
        trees = read_conllu(args.input)
        items = list(range(len(trees)))
        lengths = {i: len(trees[i]) for i in items}
        stratum = lambda i: "all"
        ids = lambda i: f"sent-{i:06d}"
    elif path.endswith(".jsonl") and args.stratum_field:
        docs = read_documents_jsonl(args.input)
        items = list(range(len(docs)))
        lengths = {i: len(docs[i].text.split()) for i in items}
        stratum = lambda i: getattr(docs[i], args.stratum_field)
        ids = lambda i: docs[i].doc_id or f"doc-{i:06d}"
    elif path.endswith(".jsonl"):
        utts = read_utterances_jsonl(args.input)
        items = list(range(len(utts)))
        lengths = {i: len(utts[i]) for i in items}
        stratum = lambda i: utts[i].recording_id
        ids = lambda i: f"utt-{i:06d}"
    else:
        raise ValueError(f"cannot split {path!r}: expected .conllu or .jsonl")
    spec = stratified_split(items, ratios, args.seed, stratum_key=stratum, id_key=ids)
    spec.to_json(args.output)
    id_to_len = {ids(i): lengths[i] for i in items}
    word_counts = {p: sum(id_to_len[k] for k in spec.part(p)) for p in SplitSpec.PARTS}
    sizes = spec.sizes()
    _emit(args, {"sizes": sizes, "word_counts": word_counts},
          [("train / dev / test items",
            f"{sizes['train']} / {sizes['dev']} / {sizes['test']}"),
           ("train / dev / test words",
            f"{word_counts['train']} / {word_counts['dev']} / {word_counts['test']}")])


# ---------------------------------------------------------------------------
# Argument parsing


def build_arg_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="spokennlp", description=__doc__)
    sub = top.add_subparsers(dest="command", required=True)

    def add(name, func, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(func=func)
        p.add_argument("--seed", type=int, default=_default_seed())
        p.add_argument("--threads", type=int, default=1,
                       help="parallelism cap (recorded in reports)")
        p.add_argument("--report", help="write the JSON report here")
        return p

    p = add("normalize", cmd_normalize, help="lowercase and strip punctuation, line by line")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)

    p = add("segment", cmd_segment, help="diarization turns -> deduplicated utterances")
    p.add_argument("--input", required=True, help="turns as JSON lines")
    p.add_argument("--output", required=True, help="utterances as JSON lines")

    p = add("deanonymize", cmd_deanonymize, help="replace masked proper-name placeholders")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--placeholder", default="<pers>")
    p.add_argument("--names-file", required=True)

    p = add("repunc", cmd_repunc, help="append synthetic final periods")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)

    p = add("bpe-train", cmd_bpe_train, help="train a BPE subword model")
    p.add_argument("--input", required=True, help="utterances .jsonl or plain text")
    p.add_argument("--output", required=True, help="model file")
    p.add_argument("--vocab-size", type=int, default=2000,
                   help="desk-scale default 2000; use 50000 for paper scale")

    p = add("bpe-apply", cmd_bpe_apply, help="segment a corpus into subword units")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)

    p = add("bpe-overlap", cmd_bpe_overlap, help="compare two BPE vocabularies")
    p.add_argument("--model-a", required=True)
    p.add_argument("--model-b", required=True)

    p = add("parse-train", cmd_parse_train, help="train the transition parser")
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--model-out", required=True)
    p.add_argument("--provider", default="lookup",
                   help="lookup | char-ngram | external:FILE")
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--hidden", help="comma-separated hidden sizes, e.g. 3200,1600")
    p.add_argument("--desk-scale", action="store_true",
                   help="default to hidden dims 320,160")
    p.add_argument("--dim", type=int, default=embed.DEFAULT_DIM)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--explore-start", type=int, default=2)
    p.add_argument("--explore-prob", type=float, default=0.9)

    p = add("parse-decode", cmd_parse_decode, help="greedy parsing of a corpus")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help=".conllu or utterances .jsonl")
    p.add_argument("--output", required=True)
    p.add_argument("--provider", help="needed unless the model embeds its word table")

    p = add("parse-score", cmd_parse_score, help="LAS / UAS / UPOS, optional OOV subset")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--oov-lexicon", help="one in-vocabulary word per line")

    p = add("oracle-check", cmd_oracle_check,
            help="exhaustive dynamic-oracle vs brute-force verification")
    p.add_argument("--max-len", type=int, default=5)

    p = add("slu-train", cmd_slu_train, help="train the windowed concept tagger")
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--model-out", required=True)
    p.add_argument("--provider", default="char-ngram")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--dim", type=int, default=embed.DEFAULT_DIM)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--desk-scale", action="store_true")

    p = add("slu-decode", cmd_slu_decode, help="tag utterances with BIO concepts")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--provider", default="char-ngram")

    p = add("slu-score", cmd_slu_score, help="CER / CVER with confidence intervals")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True, nargs="+",
                   help="one or more hypothesis files (several = splits)")
    p.add_argument("--mode", choices=("cer", "cver"), default="cer")
    p.add_argument("--rules", help="value rules JSON (cver)")
    p.add_argument("--ci", choices=("utterance", "split"), default="utterance")

    p = add("classif-run", cmd_classif_run, help="repeated-split classification experiment")
    p.add_argument("--docs", required=True)
    p.add_argument("--vocab", type=int, default=5000, help="TF-IDF vocabulary size")
    p.add_argument("--model", choices=("svm", "mlp"), default="svm")
    p.add_argument("--kernel", default="triangular", choices=sorted(classif.KERNELS))
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--splits", type=int, default=10)
    p.add_argument("--train-size", type=int)
    p.add_argument("--test-size", type=int)
    p.add_argument("--epochs", type=int, default=10, help="mlp model only")
    p.add_argument("--dim", type=int, default=embed.DEFAULT_DIM)

    p = add("split", cmd_split, help="stratified train/dev/test split")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True, help="SplitSpec JSON")
    p.add_argument("--ratios", default="0.8,0.1,0.1")
    p.add_argument("--stratum-field", help="document field to stratify on (e.g. category)")

    return top


def main(argv: Optional[list[str]] = None) -> int:
    arg_parser = build_arg_parser()
    try:
        args = arg_parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code else 0
    try:
        args.func(args)
    except (ValueError, ParseError, OSError, KeyError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
