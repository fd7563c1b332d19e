"""Command-line interface: index, oracle, traces, run, bench, map, synth."""

from __future__ import annotations

import argparse
import json
import sys

from .bench import load_examples, run_benchmark, write_reports, format_summary
from .corpus import load_corpus, map_paragraph
from .models import build_model_factory, load_manifest
from .oracle import UntrainableExample, oracle_trace_record
from .pipeline import (
    PipelineConfig,
    QuestionExample,
    TraceConfig,
    generate_training_traces,
    run_question,
    step_log_record,
    trace_record,
)
from .search import build_index, load_index, save_index
from .synth import make_chain_benchmark, write_benchmark


def _add_pipeline_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--docs-per-step", type=int, default=50,
                        help="paragraphs retrieved per reasoning step (e.g. 50, 100, 150)")
    parser.add_argument("--k-cap", type=int, default=5,
                        help="maximum paragraphs on a reasoning path")
    parser.add_argument("--stop-threshold", type=float, default=0.0,
                        help="answerability needed to stop and answer")
    parser.add_argument("--fixed-steps", type=int, default=None,
                        help="force answering at exactly this step (disables dynamic stopping)")
    parser.add_argument("--models", default=None,
                        help="path to a JSON model manifest (default: oracle retriever, "
                             "gold reader, baseline reranker)")


def _pipeline_config(args) -> PipelineConfig:
    return PipelineConfig(
        k_cap=args.k_cap,
        docs_per_step=args.docs_per_step,
        stop_threshold=args.stop_threshold,
        fixed_steps=args.fixed_steps,
    )


def _factory(args, index, corpus):
    if args.models:
        manifest = load_manifest(args.models)
    else:
        manifest = {"retriever": "oracle", "reader": "gold", "reranker": "baseline"}
    return build_model_factory(manifest, index, corpus)


def _index_for(args, corpus):
    if getattr(args, "index", None):
        return load_index(args.index)
    return build_index(corpus)


def cmd_index(args) -> int:
    corpus = load_corpus(args.corpus)
    index = build_index(corpus)
    save_index(index, args.out)
    print(f"indexed {index.n_para} paragraphs / {index.n_article} articles -> {args.out}")
    return 0


def cmd_oracle(args) -> int:
    corpus = load_corpus(args.corpus)
    index = _index_for(args, corpus)
    examples = load_examples(args.questions)
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    skipped = 0
    try:
        for example in examples:
            from .pipeline import initial_path

            path = initial_path(example.question)
            for gold_id in example.gold_ids:
                target = corpus.paragraphs[gold_id]
                try:
                    record = oracle_trace_record(index, path.path_tokens(), target)
                except UntrainableExample:
                    skipped += 1
                    break
                record["qid"] = example.qid
                out.write(json.dumps(record) + "\n")
                path = path.extended(target)
    finally:
        if out is not sys.stdout:
            out.close()
    print(f"oracle queries for {len(examples)} questions ({skipped} skipped)", file=sys.stderr)
    return 0


def cmd_traces(args) -> int:
    corpus = load_corpus(args.corpus)
    index = _index_for(args, corpus)
    examples = load_examples(args.questions)
    config = TraceConfig(
        max_steps=args.max_steps,
        augment_nongold=not args.no_augment,
        docs_per_step=args.docs_per_step,
    )
    generation = generate_training_traces(corpus, index, examples, config)
    with open(args.out, "w", encoding="utf-8") as out:
        for trace in generation.traces:
            out.write(json.dumps(trace_record(trace)) + "\n")
    print(
        f"wrote {len(generation.traces)} traces to {args.out} "
        f"({len(generation.skipped)} examples skipped: no path/target overlap)"
    )
    return 0


def cmd_run(args) -> int:
    corpus = load_corpus(args.corpus)
    index = _index_for(args, corpus)
    if args.question_file:
        example = load_examples(args.question_file)[0]
    else:
        example = QuestionExample(qid="cli", question=args.question)
    factory = _factory(args, index, corpus)
    result = run_question(
        example.question, corpus, index, factory(example), _pipeline_config(args)
    )
    for i, outcome in enumerate(result.steps, start=1):
        record = step_log_record(outcome)
        record["step"] = i
        print(json.dumps(record))
    if result.status == "answered":
        print(f"answer: {result.answer.text!r} "
              f"(answerability {result.answer.answerability:.3f}, "
              f"{len(result.answer.path_snapshot)} steps)", file=sys.stderr)
    else:
        attempt = result.best_attempt.text if result.best_attempt else "(none)"
        print(f"exhausted; best attempt: {attempt!r}", file=sys.stderr)
    return 0


def cmd_bench(args) -> int:
    corpus = load_corpus(args.corpus)
    index = _index_for(args, corpus)
    examples = load_examples(args.questions)
    factory = _factory(args, index, corpus)
    report = run_benchmark(
        examples,
        corpus,
        index,
        factory,
        _pipeline_config(args),
        fixed_k_grid=args.fixed_k_grid or (),
        docs_grid=args.docs_grid or (),
    )
    print(format_summary(report), end="")
    if args.report_dir:
        write_reports(report, args.report_dir)
        print(f"reports written to {args.report_dir}")
    return 0


def cmd_map(args) -> int:
    original = load_corpus(args.original)
    candidate = load_corpus(args.candidate)
    by_title = {a.title: a for a in candidate.articles.values()}
    matched = 0
    total = 0
    with open(args.out, "w", encoding="utf-8") as out:
        for para in original.paragraphs.values():
            if not para.tokens:
                continue
            total += 1
            article = candidate.articles.get(para.article_id) or by_title.get(para.title)
            if article is None or not article.paragraphs:
                record = {"paragraph_id": para.id, "matched": False, "reason": "article not found"}
            else:
                verdict = map_paragraph(para, article)
                matched += int(verdict.matched)
                record = {
                    "paragraph_id": para.id,
                    "matched": verdict.matched,
                    "unigram_recall": verdict.unigram_recall,
                    "lcs_coverage": verdict.lcs_coverage,
                    "target_paragraph_ids": list(verdict.target_paragraph_ids),
                }
            out.write(json.dumps(record) + "\n")
    print(f"mapped {matched}/{total} paragraphs -> {args.out}")
    return 0


def cmd_synth(args) -> int:
    benchmark = make_chain_benchmark(
        n_per_hop=tuple(args.per_hop), n_distractors=args.distractors, seed=args.seed
    )
    write_benchmark(benchmark, args.corpus_out, args.questions_out)
    stats = benchmark.corpus.stats
    print(
        f"wrote {stats.n_paragraphs} paragraphs / {stats.n_articles} articles "
        f"and {len(benchmark.examples)} questions"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iterqa",
        description="Iterative retrieve-read-rerank question answering over a paragraph corpus.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="build and persist an inverted index")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("oracle", help="emit oracle queries along gold paths")
    p.add_argument("--corpus", required=True)
    p.add_argument("--questions", required=True)
    p.add_argument("--index", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("traces", help="emit training traces, with optional augmentation")
    p.add_argument("--corpus", required=True)
    p.add_argument("--questions", required=True)
    p.add_argument("--index", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--max-steps", type=int, default=3)
    p.add_argument("--docs-per-step", type=int, default=50)
    p.add_argument("--no-augment", action="store_true")
    p.set_defaults(func=cmd_traces)

    p = sub.add_parser("run", help="answer a single question with a verbose step log")
    p.add_argument("--corpus", required=True)
    p.add_argument("--index", default=None)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--question")
    group.add_argument("--question-file")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="run a questions file and report EM/F1 + behavior")
    p.add_argument("--corpus", required=True)
    p.add_argument("--questions", required=True)
    p.add_argument("--index", default=None)
    p.add_argument("--report-dir", default=None)
    p.add_argument("--fixed-k-grid", type=int, nargs="*", default=None,
                   help="also evaluate fixed-step policies at these K values")
    p.add_argument("--docs-grid", type=int, nargs="*", default=None,
                   help="also evaluate at these docs-per-step settings")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("map", help="map one corpus's paragraphs onto another version")
    p.add_argument("--original", required=True)
    p.add_argument("--candidate", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("synth", help="generate a planted-chain benchmark")
    p.add_argument("--corpus-out", required=True)
    p.add_argument("--questions-out", required=True)
    p.add_argument("--per-hop", type=int, nargs=3, default=[100, 100, 100],
                   metavar=("ONE", "TWO", "THREE"))
    p.add_argument("--distractors", type=int, default=150)
    p.add_argument("--seed", type=int, default=13)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
