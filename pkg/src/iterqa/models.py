"""Model contracts and deterministic baselines.

The pipeline needs three roles: a retriever (path -> query), a reader
(path -> class logits + span logits), and a reranker (path, candidate ->
score). A trained network would fill all three; here each role is a plain
callable, with lexical baselines and a gold-answer-aware reader so the
whole system runs and can be tested without any trained weights.

Also home to reasoning-path serialization and the answerability score that
drives dynamic stopping.
"""

from __future__ import annotations

import importlib
import json
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, Collection, Sequence

from .corpus import Corpus, Paragraph, tokenize
from .oracle import UntrainableExample, build_oracle_query
from .search import InvertedIndex, idf_paragraph

if TYPE_CHECKING:  # pragma: no cover - typing only, avoids an import cycle
    from .pipeline import ReasoningPath

CLS = "[CLS]"
SEP = "[SEP]"
CONT = "[CONT]"

SPAN = "SPAN"
YES = "YES"
NO = "NO"
NOANSWER = "NOANSWER"
READER_CLASSES = (SPAN, YES, NO, NOANSWER)

# Answer spans must sit inside a single paragraph and not exceed this length.
MAX_SPAN_TOKENS = 30

# Closed stopword list used by the lexical retriever baseline.
STOPWORDS = frozenset(
    """
    a about above after again against all am an and any are as at be because
    been before being below between both but by could did do does doing down
    during each few for from further had has have having he her here hers
    herself him himself his how i if in into is it its itself just me more
    most my myself no nor not of off on once only or other our ours ourselves
    out over own same she should so some such than that the their theirs them
    themselves then there these they this those through to too under until up
    very was we were what when where which while who whom why will with you
    your yours yourself yourselves
    """.split()
)


@dataclass(frozen=True)
class SerializedPath:
    """A reasoning path flattened to one token sequence.

    ``text`` is "[CLS] question [SEP] title1 [CONT] para1 [SEP] ..." and
    ``segment_map[i]`` labels token i as "special", "question", "title:t",
    or "para:t". Whitespace inside each component is normalized to single
    spaces so the text splits back into exactly these tokens.
    """

    text: str
    tokens: tuple[str, ...]
    segment_map: tuple[str, ...]

    def segment_range(self, label: str) -> tuple[int, int]:
        """Half-open token range of a segment; (0, 0) when absent."""
        start = None
        end = 0
        for i, seg in enumerate(self.segment_map):
            if seg == label:
                if start is None:
                    start = i
                end = i + 1
        return (start, end) if start is not None else (0, 0)


def serialize_path(path: ReasoningPath) -> SerializedPath:
    """Flatten a reasoning path into the reader's input format."""
    pieces = [CLS]
    labels = ["special"]

    def emit(text: str, label: str) -> None:
        for word in text.split():
            pieces.append(word)
            labels.append(label)

    emit(path.question, "question")
    pieces.append(SEP)
    labels.append("special")
    for t, para in enumerate(path.steps, start=1):
        emit(para.title, f"title:{t}")
        pieces.append(CONT)
        labels.append("special")
        emit(para.text, f"para:{t}")
        pieces.append(SEP)
        labels.append("special")
    return SerializedPath(
        text=" ".join(pieces), tokens=tuple(pieces), segment_map=tuple(labels)
    )


@dataclass(frozen=True)
class ReaderOutput:
    """Four-way class logits plus per-token span logits.

    ``best_span`` maximizes start+end logit sum over valid intervals
    (start <= end, inside one paragraph segment, at most MAX_SPAN_TOKENS
    long); (0, 0) - the [CLS] position - marks "no span".
    """

    class_logits: dict[str, float]
    start_logits: tuple[float, ...]
    end_logits: tuple[float, ...]
    best_span: tuple[int, int]


def find_best_span(
    start_logits: Sequence[float],
    end_logits: Sequence[float],
    segment_map: Sequence[str],
    max_span_tokens: int = MAX_SPAN_TOKENS,
) -> tuple[int, int]:
    """Highest start+end interval within a single paragraph segment.

    Ties resolve to the earliest (start, end). Paths with no paragraph have
    no valid interval; the [CLS] marker position (0, 0) is returned.
    """
    best: tuple[int, int] | None = None
    best_score = -math.inf
    for i, seg in enumerate(segment_map):
        if not seg.startswith("para:"):
            continue
        for j in range(i, min(i + max_span_tokens, len(segment_map))):
            if segment_map[j] != seg:
                break
            score = start_logits[i] + end_logits[j]
            if score > best_score:
                best_score = score
                best = (i, j)
    return best if best is not None else (0, 0)


def answerability_span(
    class_logits: dict[str, float],
    start_logits: Sequence[float],
    end_logits: Sequence[float],
    span: tuple[int, int],
) -> float:
    """Log-likelihood-ratio answerability for a span answer.

    Combines the SPAN-vs-NOANSWER class margin with half the start and end
    margins of the span over the no-span marker at position 0. Depends only
    on logit differences, so it is invariant to shifting all logits.
    """
    start, end = span
    return (
        class_logits[SPAN]
        - class_logits[NOANSWER]
        + (start_logits[start] - start_logits[0]) / 2.0
        + (end_logits[end] - end_logits[0]) / 2.0
    )


def answerability_yesno(class_logits: dict[str, float], which: str) -> float:
    """Answerability of a yes/no answer: its logit minus the NOANSWER logit."""
    if which not in (YES, NO):
        raise ValueError(f"which must be {YES!r} or {NO!r}, got {which!r}")
    return class_logits[which] - class_logits[NOANSWER]


def pick_answer(output: ReaderOutput) -> tuple[str, float]:
    """Most likely positive answer kind and its answerability.

    Exact ties between positive classes resolve SPAN, then YES, then NO.
    """
    # max() keeps the first of equals, and the tuple is in preference order.
    kind = max((SPAN, YES, NO), key=lambda c: output.class_logits[c])
    if kind == SPAN:
        score = answerability_span(
            output.class_logits, output.start_logits, output.end_logits, output.best_span
        )
    else:
        score = answerability_yesno(output.class_logits, kind)
    return kind.lower(), score


def _normalize_piece(piece: str) -> str:
    toks = tokenize(piece)
    return toks[0] if toks else ""


def find_answer_span(
    serialized: SerializedPath,
    answers: Sequence[str],
    segment_labels: Sequence[str],
) -> tuple[int, int] | None:
    """First occurrence of any answer inside the given paragraph segments.

    Matching compares normalized tokens, so case and surrounding
    punctuation in the serialized text do not break it. Returns global
    (start, end) token positions, inclusive, or None.
    """
    normalized = [_normalize_piece(tok) for tok in serialized.tokens]
    for label in segment_labels:
        lo, hi = serialized.segment_range(label)
        for answer in answers:
            want = tokenize(answer)
            if not want or len(want) > hi - lo:
                continue
            for start in range(lo, hi - len(want) + 1):
                if normalized[start : start + len(want)] == want:
                    return (start, start + len(want) - 1)
    return None


class LexicalRetriever:
    """Query generator: keep the highest-idf fraction of the path's tokens.

    Stopwords are dropped, path order is preserved, and the query is capped
    at ``max_query_len`` tokens (highest idf first). Lowering the keep
    fraction only ever removes terms; raising it only ever adds them.
    """

    def __init__(
        self,
        index: InvertedIndex,
        keep_fraction: float = 0.4,
        max_query_len: int = 20,
    ):
        if not 0.0 < keep_fraction <= 1.0:
            raise ValueError("keep_fraction must be in (0, 1]")
        self.index = index
        self.keep_fraction = keep_fraction
        self.max_query_len = max_query_len

    def __call__(self, path: ReasoningPath) -> list[str]:
        tokens = [t for t in path.path_tokens() if t not in STOPWORDS]
        if not tokens:
            return []
        idfs = [idf_paragraph(self.index, t) for t in tokens]
        ordered = sorted(idfs, reverse=True)
        keep_n = max(1, math.ceil(self.keep_fraction * len(ordered)))
        threshold = ordered[keep_n - 1]
        kept = [i for i, v in enumerate(idfs) if v >= threshold]
        if not kept:
            kept = list(range(len(tokens)))
        if len(kept) > self.max_query_len:
            by_value = sorted(kept, key=lambda i: (-idfs[i], i))[: self.max_query_len]
            kept = sorted(by_value)
        return [tokens[i] for i in kept]


class LexicalReranker:
    """Idf-weighted overlap of a candidate with the question and last step."""

    def __init__(self, index: InvertedIndex):
        self.index = index

    def __call__(self, path: ReasoningPath, candidate: Paragraph) -> float:
        if not candidate.tokens:
            return 0.0
        reference = set(tokenize(path.question))
        if path.steps:
            reference |= set(path.steps[-1].tokens)
        shared = reference & set(candidate.tokens)
        total = sum(idf_paragraph(self.index, t) for t in shared)
        return total / math.sqrt(len(candidate.tokens))


class OracleRetriever:
    """Query generator backed by the dynamic oracle.

    Targets the first gold paragraph not yet on the path and builds the
    oracle query against it. Needs the question's gold paragraph ids, so it
    only exists for training-data generation and gold-annotated evaluation.
    Falls back to the lexical baseline when the gold set is exhausted or
    shares no token with the path.
    """

    def __init__(
        self,
        index: InvertedIndex,
        corpus: Corpus,
        gold_ids: Sequence[str],
        fallback: Callable[[ReasoningPath], list[str]] | None = None,
    ):
        self.index = index
        self.corpus = corpus
        self.gold_ids = tuple(gold_ids)
        self.fallback = fallback if fallback is not None else LexicalRetriever(index)

    def __call__(self, path: ReasoningPath) -> list[str]:
        on_path = set(path.step_ids())
        target_id = next((g for g in self.gold_ids if g not in on_path), None)
        if target_id is None:
            return self.fallback(path)
        target = self.corpus.paragraphs[target_id]
        try:
            return list(build_oracle_query(self.index, path.path_tokens(), target).terms)
        except UntrainableExample:
            return self.fallback(path)


class GoldReader:
    """Reader for tests and gold-annotated evaluation.

    Produces a confidently answerable output (fixed +10 margin) only when
    every gold paragraph is on the path and, for span answers, a gold
    answer string occurs in the last appended paragraph; otherwise NOANSWER
    dominates.
    """

    MARGIN = 10.0

    def __init__(
        self,
        answers: Sequence[str],
        gold_ids: Collection[str],
        kind: str = "span",
    ):
        if kind not in ("span", "yes", "no"):
            raise ValueError(f"kind must be span, yes, or no, got {kind!r}")
        self.answers = tuple(answers)
        self.gold_ids = frozenset(gold_ids)
        self.kind = kind

    def __call__(self, path: ReasoningPath) -> ReaderOutput:
        serialized = serialize_path(path)
        n = len(serialized.tokens)
        complete = bool(path.steps) and self.gold_ids <= set(path.step_ids())

        if complete and self.kind in ("yes", "no"):
            positive = YES if self.kind == "yes" else NO
            class_logits = {c: -self.MARGIN for c in READER_CLASSES}
            class_logits[positive] = self.MARGIN
            class_logits[NOANSWER] = 0.0
            start = self._marker_logits(n, None)
            end = self._marker_logits(n, None)
            best = find_best_span(start, end, serialized.segment_map)
            return ReaderOutput(class_logits, start, end, best)

        span = None
        if complete and self.kind == "span":
            last = f"para:{len(path.steps)}"
            span = find_answer_span(serialized, self.answers, [last])
        if span is not None:
            class_logits = {SPAN: self.MARGIN, YES: -self.MARGIN, NO: -self.MARGIN, NOANSWER: 0.0}
            start = self._marker_logits(n, span[0])
            end = self._marker_logits(n, span[1])
            return ReaderOutput(class_logits, start, end, span)

        class_logits = {SPAN: -self.MARGIN, YES: -self.MARGIN, NO: -self.MARGIN, NOANSWER: 0.0}
        start = self._marker_logits(n, None)
        end = self._marker_logits(n, None)
        best = find_best_span(start, end, serialized.segment_map)
        return ReaderOutput(class_logits, start, end, best)

    @staticmethod
    def _marker_logits(n: int, hot: int | None) -> tuple[float, ...]:
        # Position 0 (the no-span marker) and the hot position share the
        # peak logit, so the answerability margin stays exactly the class
        # margin while best_span still lands on the hot interval.
        logits = [0.0] * n
        logits[0] = 1.0
        if hot is not None:
            logits[hot] = 1.0
        return tuple(logits)


@dataclass(frozen=True)
class ModelBundle:
    """The three pluggable roles the pipeline consumes. All must be pure."""

    retriever: Callable[[ReasoningPath], list[str]]
    reader: Callable[[ReasoningPath], ReaderOutput]
    reranker: Callable[[ReasoningPath, Paragraph], float]


class ManifestError(ValueError):
    """A model manifest names an unknown implementation or is malformed."""


def _load_external(ref: str):
    module_name, _, attr = ref.partition(":")
    if not module_name or not attr:
        raise ManifestError(f"external model must be 'module:attribute', got {ref!r}")
    try:
        module = importlib.import_module(module_name)
        return getattr(module, attr)
    except (ImportError, AttributeError) as exc:
        raise ManifestError(f"cannot load external model {ref!r}: {exc}") from exc


def build_model_factory(
    manifest: dict, index: InvertedIndex, corpus: Corpus
) -> Callable[[object], ModelBundle]:
    """Turn a manifest into a per-question ModelBundle factory.

    Manifest keys: ``retriever`` ("baseline", "oracle", or
    "external:module:attr"), ``reader`` ("gold" or external), ``reranker``
    ("baseline" or external), plus optional ``keep_fraction`` and
    ``max_query_len`` for the baseline retriever. External attributes are
    called with (example, index, corpus) and must return the role callable.
    Gold-aware roles read ``gold_ids``, ``answers``, and ``answer_kind``
    off the example passed to the factory.
    """
    retriever_kind = manifest.get("retriever", "baseline")
    reader_kind = manifest.get("reader", "gold")
    reranker_kind = manifest.get("reranker", "baseline")

    def factory(example) -> ModelBundle:
        if retriever_kind == "baseline":
            retriever = LexicalRetriever(
                index,
                keep_fraction=manifest.get("keep_fraction", 0.4),
                max_query_len=manifest.get("max_query_len", 20),
            )
        elif retriever_kind == "oracle":
            retriever = OracleRetriever(index, corpus, example.gold_ids)
        elif retriever_kind.startswith("external:"):
            retriever = _load_external(retriever_kind[len("external:"):])(example, index, corpus)
        else:
            raise ManifestError(f"unknown retriever {retriever_kind!r}")

        if reader_kind == "gold":
            reader = GoldReader(example.answers, example.gold_ids, example.answer_kind)
        elif reader_kind.startswith("external:"):
            reader = _load_external(reader_kind[len("external:"):])(example, index, corpus)
        else:
            raise ManifestError(f"unknown reader {reader_kind!r}")

        if reranker_kind == "baseline":
            reranker = LexicalReranker(index)
        elif reranker_kind.startswith("external:"):
            reranker = _load_external(reranker_kind[len("external:"):])(example, index, corpus)
        else:
            raise ManifestError(f"unknown reranker {reranker_kind!r}")

        return ModelBundle(retriever=retriever, reader=reader, reranker=reranker)

    return factory


def load_manifest(path) -> dict:
    with open(path, encoding="utf-8") as handle:
        manifest = json.load(handle)
    if not isinstance(manifest, dict):
        raise ManifestError("manifest must be a JSON object")
    return manifest
