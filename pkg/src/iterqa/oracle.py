"""Dynamic oracle for query generation.

Given a reasoning path and the gold target paragraph, find the maximal
token spans the two share, estimate each span's importance from two search
ranks, and greedily assemble a query that pushes the target as high as
possible in the ranking - in a number of rank evaluations linear in the
span count, instead of enumerating all 2^N span subsets.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

from .corpus import Paragraph
from .search import InvertedIndex, rank_of


class UntrainableExample(ValueError):
    """Path and target share no tokens, so no oracle query can be built."""


@dataclass
class OverlapSpan:
    """A maximal contiguous token run common to the path and the target.

    Extending the run by one token on either side breaks the match.
    ``importance`` is filled in by span_importance / build_oracle_query.
    """

    tokens: tuple[str, ...]
    path_offset: int
    importance: float = 0.0


@dataclass(frozen=True)
class OracleQuery:
    spans_included: tuple[OverlapSpan, ...]
    terms: tuple[str, ...]
    achieved_rank: int


def extract_overlap_spans(path_tokens: Sequence[str], target: Paragraph) -> list[OverlapSpan]:
    """All maximal contiguous runs of path tokens occurring in the target.

    Spans are deduplicated by token content and ordered by first occurrence
    in the path. No overlap yields an empty list.
    """
    if not path_tokens:
        raise ValueError("path_tokens must be non-empty")
    target_tokens = target.tokens
    positions: dict[str, list[int]] = {}
    for idx, token in enumerate(target_tokens):
        positions.setdefault(token, []).append(idx)

    n = len(path_tokens)
    # longest[i] = length of the longest target match starting at path position i
    longest = [0] * n
    for i in range(n):
        best = 0
        for pos in positions.get(path_tokens[i], ()):
            length = 0
            while (
                i + length < n
                and pos + length < len(target_tokens)
                and path_tokens[i + length] == target_tokens[pos + length]
            ):
                length += 1
            best = max(best, length)
        longest[i] = best

    spans: list[OverlapSpan] = []
    seen: set[tuple[str, ...]] = set()
    for i in range(n):
        if longest[i] == 0:
            continue
        # A match of length m at i-1 implies one of length m-1 at i, so the
        # run at i is left-maximal unless the previous run strictly covers it.
        if i > 0 and longest[i - 1] > longest[i]:
            continue
        tokens = tuple(path_tokens[i : i + longest[i]])
        if tokens in seen:
            continue
        seen.add(tokens)
        spans.append(OverlapSpan(tokens=tokens, path_offset=i))
    return spans


def span_importance(
    index: InvertedIndex,
    target_id: str,
    spans: Sequence[OverlapSpan],
    i: int,
    rank_fn: Callable[[InvertedIndex, str, Sequence[str]], int] = rank_of,
) -> float:
    """Rank of the target without span i, minus its rank under span i alone.

    The first term captures what the span contributes in combination with
    the others; the second what it achieves by itself. Costs exactly two
    rank evaluations.
    """
    if not spans:
        raise ValueError("spans must be non-empty")
    others = [t for j, span in enumerate(spans) if j != i for t in span.tokens]
    alone = list(spans[i].tokens)
    return float(rank_fn(index, target_id, others) - rank_fn(index, target_id, alone))


def _scored_spans(
    index: InvertedIndex,
    path_tokens: Sequence[str],
    target: Paragraph,
    rank_fn: Callable[[InvertedIndex, str, Sequence[str]], int],
) -> tuple[list[OverlapSpan], list[int]]:
    spans = extract_overlap_spans(path_tokens, target)
    if not spans:
        raise UntrainableExample(
            f"no overlap between path and target paragraph {target.id!r}"
        )
    singleton_rank = [rank_fn(index, target.id, list(span.tokens)) for span in spans]
    for i, span in enumerate(spans):
        others = [t for j, other in enumerate(spans) if j != i for t in other.tokens]
        span.importance = float(rank_fn(index, target.id, others) - singleton_rank[i])
    return spans, singleton_rank


def _greedy_query(
    index: InvertedIndex,
    target_id: str,
    spans: list[OverlapSpan],
    singleton_rank: list[int],
    rank_fn: Callable[[InvertedIndex, str, Sequence[str]], int],
) -> OracleQuery:
    # Ties in importance resolve to the earlier path position.
    order = sorted(range(len(spans)), key=lambda i: (-spans[i].importance, spans[i].path_offset))

    included: list[OverlapSpan] = []
    terms: list[str] = []
    best_rank = index.sentinel_rank
    for step, i in enumerate(order):
        span = spans[i]
        if step == 0:
            # The first candidate query is the top span alone; its rank is
            # already known, and span tokens occur in the target, so it
            # always beats the sentinel and is always accepted.
            rank = singleton_rank[i]
        else:
            rank = rank_fn(index, target_id, terms + list(span.tokens))
        if rank >= best_rank:
            break
        included.append(span)
        terms.extend(span.tokens)
        best_rank = rank
        if best_rank == 1:
            break
    return OracleQuery(
        spans_included=tuple(included),
        terms=tuple(terms),
        achieved_rank=best_rank,
    )


def build_oracle_query(
    index: InvertedIndex,
    path_tokens: Sequence[str],
    target: Paragraph,
    rank_fn: Callable[[InvertedIndex, str, Sequence[str]], int] = rank_of,
) -> OracleQuery:
    """Greedily build an oracle query from the path/target overlap spans.

    Every span's importance is estimated first (two rank evaluations each,
    singleton ranks shared with the greedy pass), then spans are appended
    in descending-importance order for as long as the target's rank keeps
    strictly improving. At most 3N+1 rank evaluations for N spans.

    Raises UntrainableExample when the path and target share no tokens.
    """
    spans, singleton_rank = _scored_spans(index, path_tokens, target, rank_fn)
    return _greedy_query(index, target.id, spans, singleton_rank, rank_fn)


@dataclass(frozen=True)
class RecallCurve:
    """Fraction of examples whose target lands in the top k, per k."""

    ks: tuple[int, ...]
    recall: tuple[float, ...]
    n_examples: int
    n_untrainable: int

    def at(self, k: int) -> float:
        return self.recall[self.ks.index(k)]


def oracle_recall_curve(
    index: InvertedIndex,
    examples: Sequence[tuple[Sequence[str], Paragraph]],
    ks: Sequence[int],
) -> RecallCurve:
    """Recall of the oracle queries' targets at each cutoff in ``ks``.

    Examples whose path shares no token with the target cannot produce a
    query; they stay in the denominator and count as misses at every k.
    """
    if not examples:
        raise ValueError("examples must be non-empty")
    if not ks or list(ks) != sorted(ks):
        raise ValueError("ks must be non-empty and sorted ascending")

    ranks: list[int | None] = []
    for path_tokens, target in examples:
        try:
            ranks.append(build_oracle_query(index, path_tokens, target).achieved_rank)
        except UntrainableExample:
            ranks.append(None)
    recall = tuple(
        sum(1 for r in ranks if r is not None and r <= k) / len(ranks) for k in ks
    )
    return RecallCurve(
        ks=tuple(ks),
        recall=recall,
        n_examples=len(ranks),
        n_untrainable=sum(1 for r in ranks if r is None),
    )


def oracle_trace_record(
    index: InvertedIndex, path_tokens: Sequence[str], target: Paragraph
) -> dict:
    """JSON-serializable record of one oracle run, for line-delimited output.

    Lists every extracted span with its importance, not just the spans the
    greedy pass kept. Raises UntrainableExample when no span exists.
    """
    spans, singleton_rank = _scored_spans(index, path_tokens, target, rank_of)
    query = _greedy_query(index, target.id, spans, singleton_rank, rank_of)
    return {
        "path_tokens": list(path_tokens),
        "target_id": target.id,
        "spans": [list(span.tokens) for span in spans],
        "importances": [span.importance for span in spans],
        "query": list(query.terms),
        "achieved_rank": query.achieved_rank,
    }
