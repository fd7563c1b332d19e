"""Benchmark runs over question files: EM/F1 plus retrieval-behavior reports."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

from .corpus import Corpus
from .metrics import exact_match, unigram_f1
from .models import ModelBundle
from .pipeline import PipelineConfig, QuestionExample, RunResult, run_question
from .search import InvertedIndex

ModelFactory = Callable[[QuestionExample], ModelBundle]


class QuestionsFormatError(ValueError):
    pass


def load_examples(path) -> list[QuestionExample]:
    """Read a line-delimited questions file.

    Each line is an object with id and question; answers,
    gold_paragraph_ids, answer_kind, fixed_steps, and dataset are optional.
    """
    examples = []
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise QuestionsFormatError(f"line {line_no}: invalid JSON ({exc.msg})") from exc
            if "id" not in record or "question" not in record:
                raise QuestionsFormatError(f"line {line_no}: needs id and question fields")
            answers = tuple(record.get("answers", ()))
            kind = record.get("answer_kind")
            if kind is None:
                kind = answers[0] if tuple(answers) in (("yes",), ("no",)) else "span"
            examples.append(
                QuestionExample(
                    qid=str(record["id"]),
                    question=record["question"],
                    answers=answers,
                    gold_ids=tuple(record.get("gold_paragraph_ids", ())),
                    answer_kind=kind,
                    fixed_steps=record.get("fixed_steps"),
                    dataset=record.get("dataset", ""),
                )
            )
    return examples


@dataclass(frozen=True)
class PerQuestion:
    qid: str
    em: float | None  # None when the question has no gold answers
    f1: float | None
    steps_used: int
    paragraphs_retrieved_total: int
    status: str
    prediction: str


@dataclass(frozen=True)
class EvalResult:
    """Aggregate EM/F1 (means over scored questions) plus per-question rows."""

    em: float
    f1: float
    per_question: tuple[PerQuestion, ...]
    n_scored: int
    n_unscored: int


@dataclass
class BenchmarkReport:
    result: EvalResult
    step_histogram: dict[int, int] = field(default_factory=dict)
    # rows of (docs_per_step, mean paragraphs retrieved per question, em, f1)
    budget_table: list[tuple[int, float, float, float]] = field(default_factory=list)
    # rows of (policy name, em, f1); "dynamic" first, then fixed-K policies
    dynamic_vs_fixed: list[tuple[str, float, float]] = field(default_factory=list)


def _run_example(
    example: QuestionExample,
    corpus: Corpus,
    index: InvertedIndex,
    factory: ModelFactory,
    config: PipelineConfig,
) -> tuple[RunResult, PerQuestion]:
    if example.fixed_steps is not None:
        config = replace(config, fixed_steps=example.fixed_steps)
    result = run_question(example.question, corpus, index, factory(example), config)
    prediction = result.prediction
    if example.answers:
        em: float | None = float(exact_match(prediction, example.answers))
        f1: float | None = unigram_f1(prediction, example.answers)
    else:
        em = f1 = None
    row = PerQuestion(
        qid=example.qid,
        em=em,
        f1=f1,
        steps_used=len(result.final_path.steps),
        paragraphs_retrieved_total=result.paragraphs_retrieved,
        status=result.status,
        prediction=prediction,
    )
    return result, row


def evaluate(
    examples: Sequence[QuestionExample],
    corpus: Corpus,
    index: InvertedIndex,
    factory: ModelFactory,
    config: PipelineConfig = PipelineConfig(),
) -> EvalResult:
    """Run every question once and aggregate EM/F1 over the scored ones."""
    rows = [_run_example(ex, corpus, index, factory, config)[1] for ex in examples]
    scored = [r for r in rows if r.em is not None]
    return EvalResult(
        em=sum(r.em for r in scored) / len(scored) if scored else 0.0,
        f1=sum(r.f1 for r in scored) / len(scored) if scored else 0.0,
        per_question=tuple(rows),
        n_scored=len(scored),
        n_unscored=len(rows) - len(scored),
    )


def run_benchmark(
    examples: Sequence[QuestionExample],
    corpus: Corpus,
    index: InvertedIndex,
    factory: ModelFactory,
    config: PipelineConfig = PipelineConfig(),
    fixed_k_grid: Sequence[int] = (),
    docs_grid: Sequence[int] = (),
) -> BenchmarkReport:
    """Evaluate plus the retrieval-behavior reports.

    ``fixed_k_grid`` adds a dynamic-vs-fixed-steps comparison table;
    ``docs_grid`` adds a retrieval-budget-vs-F1 table across docs-per-step
    settings. Both rerun the full question set per setting.
    """
    if not examples:
        raise ValueError("no questions to run")
    result = evaluate(examples, corpus, index, factory, config)
    report = BenchmarkReport(result=result)

    for row in result.per_question:
        report.step_histogram[row.steps_used] = report.step_histogram.get(row.steps_used, 0) + 1

    if docs_grid:
        for docs in docs_grid:
            grid_result = evaluate(
                examples, corpus, index, factory, replace(config, docs_per_step=docs)
            )
            mean_retrieved = sum(
                r.paragraphs_retrieved_total for r in grid_result.per_question
            ) / len(grid_result.per_question)
            report.budget_table.append((docs, mean_retrieved, grid_result.em, grid_result.f1))

    if fixed_k_grid:
        report.dynamic_vs_fixed.append(("dynamic", result.em, result.f1))
        for k in fixed_k_grid:
            fixed_result = evaluate(
                examples, corpus, index, factory, replace(config, fixed_steps=k)
            )
            report.dynamic_vs_fixed.append((f"fixed-{k}", fixed_result.em, fixed_result.f1))
    return report


def write_reports(report: BenchmarkReport, directory) -> None:
    """Emit per-question records (JSONL) and a human-readable summary."""
    import os

    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "per_question.jsonl"), "w", encoding="utf-8") as out:
        for row in report.result.per_question:
            out.write(json.dumps(row.__dict__) + "\n")
    with open(os.path.join(directory, "summary.txt"), "w", encoding="utf-8") as out:
        out.write(format_summary(report))


def format_summary(report: BenchmarkReport) -> str:
    result = report.result
    lines = [
        f"questions scored: {result.n_scored} (unscored: {result.n_unscored})",
        f"exact match: {result.em:.4f}",
        f"unigram F1:  {result.f1:.4f}",
        "",
        "steps-per-question histogram:",
    ]
    total = len(result.per_question) or 1
    for steps in sorted(report.step_histogram):
        count = report.step_histogram[steps]
        lines.append(f"  {steps} steps: {count:5d}  ({100.0 * count / total:.1f}%)")
    if report.budget_table:
        lines += ["", "retrieval budget vs quality:"]
        lines.append("  docs/step  mean retrieved     EM      F1")
        for docs, retrieved, em, f1 in report.budget_table:
            lines.append(f"  {docs:9d}  {retrieved:14.1f}  {em:.4f}  {f1:.4f}")
    if report.dynamic_vs_fixed:
        lines += ["", "stopping policy comparison:"]
        lines.append("  policy        EM      F1")
        for name, em, f1 in report.dynamic_vs_fixed:
            lines.append(f"  {name:10s}  {em:.4f}  {f1:.4f}")
    return "\n".join(lines) + "\n"
