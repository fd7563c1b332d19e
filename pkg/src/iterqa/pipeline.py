"""The iterative retrieve-read-rerank loop.

A reasoning path starts as just the question. Each step generates a query
from the path, retrieves paragraphs, and lets the reader try every
candidate extension; when the best answerability clears the stop
threshold the answer is emitted, otherwise the reranker's argmax extends
the path and the loop continues, up to a cap of K paragraphs.

Also generates training traces: oracle queries and reranker candidate sets
along gold paths, optionally with "polluted" non-gold branches the oracle
then recovers from.

Runs only read the corpus and index, so questions can be processed
concurrently; within a step, every choice breaks ties deterministically
(score first, then paragraph id), so the outcome never depends on
candidate evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

from .corpus import Corpus, Paragraph, tokenize
from .models import (
    ModelBundle,
    SerializedPath,
    find_answer_span,
    pick_answer,
    serialize_path,
)
from .oracle import OracleQuery, UntrainableExample, build_oracle_query
from .search import InvertedIndex, SearchHit, search_topk

ACTIVE = "active"
ANSWERED = "answered"
EXHAUSTED = "exhausted"


@dataclass(frozen=True)
class PipelineConfig:
    k_cap: int = 5
    docs_per_step: int = 50
    stop_threshold: float = 0.0
    reranker_candidates: int = 5
    # When set, answerability is ignored and the answer is forced from the
    # candidates at exactly this step.
    fixed_steps: int | None = None


@dataclass(frozen=True)
class ReasoningPath:
    """The question plus the paragraphs selected so far."""

    question: str
    steps: tuple[Paragraph, ...] = ()
    status: str = ACTIVE

    def step_ids(self) -> tuple[str, ...]:
        return tuple(p.id for p in self.steps)

    def path_tokens(self) -> list[str]:
        """Normalized tokens of the whole path: question, titles, texts."""
        tokens = tokenize(self.question)
        for para in self.steps:
            tokens.extend(tokenize(para.title))
            tokens.extend(para.tokens)
        return tokens

    def extended(self, paragraph: Paragraph) -> ReasoningPath:
        if paragraph.id in self.step_ids():
            raise ValueError(f"paragraph {paragraph.id!r} is already on the path")
        return replace(self, steps=self.steps + (paragraph,))


def initial_path(question: str) -> ReasoningPath:
    return ReasoningPath(question=question)


@dataclass(frozen=True)
class AnswerRecord:
    kind: str  # span | yes | no
    text: str
    answerability: float
    path_snapshot: tuple[str, ...]


@dataclass(frozen=True)
class StepOutcome:
    """One loop iteration: what was asked, found, and decided."""

    query_used: tuple[str, ...]
    retrieved: tuple[SearchHit, ...]
    answer: AnswerRecord | None
    chosen_paragraph: str | None
    candidate_answerabilities: tuple[tuple[str, float], ...] = ()
    best_candidate: AnswerRecord | None = None
    exhausted_reason: str | None = None


@dataclass(frozen=True)
class RunResult:
    question: str
    status: str  # answered | exhausted
    answer: AnswerRecord | None
    best_attempt: AnswerRecord | None
    steps: tuple[StepOutcome, ...]
    paragraphs_retrieved: int
    final_path: ReasoningPath

    @property
    def prediction(self) -> str:
        """Answer text for scoring: the accepted answer, else the best attempt."""
        if self.answer is not None:
            return self.answer.text
        if self.best_attempt is not None:
            return self.best_attempt.text
        return ""


def _answer_record(
    kind: str, answerability: float, ext: ReasoningPath, serialized: SerializedPath, span
) -> AnswerRecord:
    if kind == "span":
        start, end = span
        text = " ".join(serialized.tokens[start : end + 1])
    else:
        text = kind
    return AnswerRecord(
        kind=kind, text=text, answerability=answerability, path_snapshot=ext.step_ids()
    )


def _exhausted(path: ReasoningPath, query: tuple[str, ...], reason: str):
    outcome = StepOutcome(
        query_used=query,
        retrieved=(),
        answer=None,
        chosen_paragraph=None,
        exhausted_reason=reason,
    )
    return replace(path, status=EXHAUSTED), outcome


def step(
    path: ReasoningPath,
    corpus: Corpus,
    index: InvertedIndex,
    models: ModelBundle,
    config: PipelineConfig,
) -> tuple[ReasoningPath, StepOutcome]:
    """Run one retrieve-read-rerank iteration; returns the new path.

    The input path is not mutated. Zero-score hits count as not retrieved.
    """
    if path.status != ACTIVE:
        raise ValueError(f"cannot step a path with status {path.status!r}")

    query = tuple(models.retriever(path))
    if not query:
        return _exhausted(path, query, "empty query")
    hits = tuple(h for h in search_topk(index, list(query), config.docs_per_step) if h.score > 0.0)
    if not hits:
        return _exhausted(path, query, "no results")

    on_path = set(path.step_ids())
    candidates = [
        corpus.paragraphs[h.paragraph_id] for h in hits if h.paragraph_id not in on_path
    ][: config.reranker_candidates]
    if not candidates:
        return _exhausted(path, query, "no new candidates")

    evaluated = []
    for para in candidates:
        ext = path.extended(para)
        output = models.reader(ext)
        kind, score = pick_answer(output)
        evaluated.append((para, ext, output, kind, score))

    best = min(evaluated, key=lambda e: (-e[4], e[0].id))
    best_para, best_ext, best_output, best_kind, best_score = best
    best_record = _answer_record(
        best_kind, best_score, best_ext, serialize_path(best_ext), best_output.best_span
    )
    answerabilities = tuple((para.id, score) for para, _, _, _, score in evaluated)

    if config.fixed_steps is not None:
        stop = len(path.steps) + 1 == config.fixed_steps
    else:
        stop = best_score > config.stop_threshold
    if stop:
        outcome = StepOutcome(
            query_used=query,
            retrieved=hits,
            answer=best_record,
            chosen_paragraph=None,
            candidate_answerabilities=answerabilities,
            best_candidate=best_record,
        )
        return replace(best_ext, status=ANSWERED), outcome

    scored = [(models.reranker(path, para), para) for para, _, _, _, _ in evaluated]
    _, chosen = min(scored, key=lambda item: (-item[0], item[1].id))
    outcome = StepOutcome(
        query_used=query,
        retrieved=hits,
        answer=None,
        chosen_paragraph=chosen.id,
        candidate_answerabilities=answerabilities,
        best_candidate=best_record,
    )
    return path.extended(chosen), outcome


def run_question(
    question: str,
    corpus: Corpus,
    index: InvertedIndex,
    models: ModelBundle,
    config: PipelineConfig = PipelineConfig(),
) -> RunResult:
    """Iterate until an answer clears the threshold or the path cap is hit.

    Exhausted runs carry the best low-confidence candidate seen, so they
    can still be inspected and scored.
    """
    path = initial_path(question)
    outcomes: list[StepOutcome] = []
    best_attempt: AnswerRecord | None = None
    retrieved_total = 0

    while path.status == ACTIVE and len(path.steps) < config.k_cap:
        path, outcome = step(path, corpus, index, models, config)
        outcomes.append(outcome)
        retrieved_total += len(outcome.retrieved)
        candidate = outcome.best_candidate
        if candidate is not None and (
            best_attempt is None or candidate.answerability > best_attempt.answerability
        ):
            best_attempt = candidate

    answered = path.status == ANSWERED
    if path.status == ACTIVE:
        path = replace(path, status=EXHAUSTED)
    return RunResult(
        question=question,
        status=ANSWERED if answered else EXHAUSTED,
        answer=outcomes[-1].answer if answered else None,
        best_attempt=best_attempt,
        steps=tuple(outcomes),
        paragraphs_retrieved=retrieved_total,
        final_path=path,
    )


def step_log_record(outcome: StepOutcome) -> dict:
    """JSON-serializable per-step record for line-delimited run logs."""
    record = {
        "query": list(outcome.query_used),
        "retrieved": [(h.paragraph_id, h.score) for h in outcome.retrieved],
        "answerabilities": [list(item) for item in outcome.candidate_answerabilities],
    }
    if outcome.answer is not None:
        record["answer"] = {
            "kind": outcome.answer.kind,
            "text": outcome.answer.text,
            "answerability": outcome.answer.answerability,
            "path": list(outcome.answer.path_snapshot),
        }
    if outcome.chosen_paragraph is not None:
        record["chosen"] = outcome.chosen_paragraph
    if outcome.exhausted_reason is not None:
        record["exhausted"] = outcome.exhausted_reason
    return record


@dataclass(frozen=True)
class QuestionExample:
    """A question with its gold supervision, as read from a questions file."""

    qid: str
    question: str
    answers: tuple[str, ...] = ()
    gold_ids: tuple[str, ...] = ()
    answer_kind: str = "span"  # span | yes | no
    fixed_steps: int | None = None
    dataset: str = ""


@dataclass(frozen=True)
class TraceConfig:
    max_steps: int = 3
    max_steps_by_dataset: Mapping[str, int] | None = None
    augment_nongold: bool = True
    docs_per_step: int = 50
    reranker_candidates: int = 5

    def cap_for(self, dataset: str) -> int:
        if self.max_steps_by_dataset and dataset in self.max_steps_by_dataset:
            return self.max_steps_by_dataset[dataset]
        return self.max_steps


@dataclass(frozen=True)
class TrainingTrace:
    """One supervision record for the retriever, reranker, and reader."""

    qid: str
    variant: str  # gold | recovery
    path_state: ReasoningPath
    oracle_query: OracleQuery
    candidates: tuple[str, ...]
    gold_flags: tuple[bool, ...]
    reader_label: str  # SPAN | YES | NO | NOANSWER
    span: tuple[int, int] | None


@dataclass
class TraceGeneration:
    traces: list[TrainingTrace] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)  # qids with no usable overlap


def _trace_candidates(
    hits: list[SearchHit], on_path: set[str], index: InvertedIndex, count: int
) -> tuple[str, ...]:
    candidates = [h.paragraph_id for h in hits if h.paragraph_id not in on_path][:count]
    if len(candidates) < count:
        # Pad from the remaining corpus so the reranker always sees a
        # fixed-size candidate set.
        used = set(candidates) | on_path
        for pid in sorted(index.doc_lengths):
            if len(candidates) == count:
                break
            if pid not in used:
                candidates.append(pid)
    return tuple(candidates)


def _reader_label(
    next_path: ReasoningPath, example: QuestionExample
) -> tuple[str, tuple[int, int] | None]:
    if not set(example.gold_ids) <= set(next_path.step_ids()):
        return "NOANSWER", None
    if example.answer_kind == "yes":
        return "YES", None
    if example.answer_kind == "no":
        return "NO", None
    serialized = serialize_path(next_path)
    labels = [f"para:{t}" for t in range(1, len(next_path.steps) + 1)]
    span = find_answer_span(serialized, example.answers, labels)
    if span is None:
        return "NOANSWER", None
    return "SPAN", span


def generate_training_traces(
    corpus: Corpus,
    index: InvertedIndex,
    gold_examples: Iterable[QuestionExample],
    config: TraceConfig = TraceConfig(),
) -> TraceGeneration:
    """Emit supervision traces along each example's gold path.

    Each gold step yields one trace (oracle query, top candidates, gold
    flags, reader label for the gold continuation). With augmentation, each
    step also yields a recovery trace: the top-ranked non-gold hit is
    appended instead and the oracle re-derives a query from that polluted
    path. Examples whose gold target shares no token with the path are
    skipped and counted.
    """
    result = TraceGeneration()
    for example in gold_examples:
        cap = config.cap_for(example.dataset)
        try:
            traces = list(_example_traces(corpus, index, example, config, cap))
        except UntrainableExample:
            result.skipped.append(example.qid)
            continue
        result.traces.extend(traces)
    return result


def _example_traces(
    corpus: Corpus,
    index: InvertedIndex,
    example: QuestionExample,
    config: TraceConfig,
    cap: int,
) -> Iterable[TrainingTrace]:
    path = initial_path(example.question)
    for gold_id in example.gold_ids[:cap]:
        target = corpus.paragraphs[gold_id]
        oracle_query = build_oracle_query(index, path.path_tokens(), target)
        hits = search_topk(index, list(oracle_query.terms), config.docs_per_step)
        on_path = set(path.step_ids())
        candidates = _trace_candidates(hits, on_path, index, config.reranker_candidates)
        next_path = path.extended(target)
        label, span = _reader_label(next_path, example)
        yield TrainingTrace(
            qid=example.qid,
            variant="gold",
            path_state=path,
            oracle_query=oracle_query,
            candidates=candidates,
            gold_flags=tuple(c in set(example.gold_ids) for c in candidates),
            reader_label=label,
            span=span,
        )

        if config.augment_nongold:
            trace = _recovery_trace(corpus, index, example, config, cap, path, target, hits)
            if trace is not None:
                yield trace
        path = next_path


def _recovery_trace(
    corpus: Corpus,
    index: InvertedIndex,
    example: QuestionExample,
    config: TraceConfig,
    cap: int,
    path: ReasoningPath,
    target: Paragraph,
    hits: list[SearchHit],
) -> TrainingTrace | None:
    gold_set = set(example.gold_ids)
    on_path = set(path.step_ids())
    nongold = next(
        (
            h.paragraph_id
            for h in hits
            if h.score > 0.0 and h.paragraph_id not in gold_set and h.paragraph_id not in on_path
        ),
        None,
    )
    if nongold is None:
        return None
    polluted = path.extended(corpus.paragraphs[nongold])
    if len(polluted.steps) + 1 > cap:
        return None
    try:
        recovery_query = build_oracle_query(index, polluted.path_tokens(), target)
    except UntrainableExample:
        return None
    recovery_hits = search_topk(index, list(recovery_query.terms), config.docs_per_step)
    candidates = _trace_candidates(
        recovery_hits, set(polluted.step_ids()), index, config.reranker_candidates
    )
    label, span = _reader_label(polluted.extended(target), example)
    return TrainingTrace(
        qid=example.qid,
        variant="recovery",
        path_state=polluted,
        oracle_query=recovery_query,
        candidates=candidates,
        gold_flags=tuple(c in gold_set for c in candidates),
        reader_label=label,
        span=span,
    )


def trace_record(trace: TrainingTrace) -> dict:
    """JSON-serializable form of one training trace."""
    return {
        "qid": trace.qid,
        "variant": trace.variant,
        "question": trace.path_state.question,
        "path_ids": list(trace.path_state.step_ids()),
        "oracle_query": list(trace.oracle_query.terms),
        "achieved_rank": trace.oracle_query.achieved_rank,
        "candidates": list(trace.candidates),
        "gold_flags": list(trace.gold_flags),
        "reader_label": trace.reader_label,
        "span": list(trace.span) if trace.span is not None else None,
    }
