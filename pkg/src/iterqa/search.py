"""Inverted-index retrieval with combined paragraph and article scoring.

Paragraphs are scored with BM25 (k1=1.2, b=0.75, idf = ln(1 + (N-n+0.5)/(n+0.5))).
The parent article's full text is scored with a squared, clamped idf and no
length normalization:

    score(D, Q) = sum_i max(0, ln((N-n_i+0.5)/(n_i+0.5)))^2 * f_i*(1+k1)/(f_i+k1)

A paragraph's relevance to a query is the sum of both parts. Natural log
throughout; queries are multisets, so repeated terms contribute repeatedly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

from .corpus import Corpus

# Scoring constants. Persisted indexes record them; loading an index built
# with different constants is an error.
K1 = 1.2
B = 0.75
ARTICLE_K1 = 1.2
ARTICLE_B = 0.0

INDEX_MAGIC = "iterqa-index"
INDEX_FORMAT_VERSION = 1

# A query is an ordered multiset of normalized tokens (tokenize() output).
Query = Sequence[str]


@dataclass
class InvertedIndex:
    """Paragraph- and article-level postings over an ingested corpus.

    Immutable after build_index; concurrent reads are safe.
    """

    postings: dict[str, dict[str, int]]          # term -> {paragraph_id: tf}
    article_postings: dict[str, dict[str, int]]  # term -> {article_id: tf}
    doc_lengths: dict[str, int]                  # paragraph_id -> token count
    article_lengths: dict[str, int]              # article_id -> token count
    avg_doc_length: float
    n_para: int
    n_article: int
    df_para: dict[str, int]
    df_article: dict[str, int]
    para_article: dict[str, str]                 # paragraph_id -> parent article_id
    article_paragraphs: dict[str, tuple[str, ...]]

    @property
    def sentinel_rank(self) -> int:
        """Rank assigned when a query fails to retrieve a target at all."""
        return self.n_para + 1


class IndexFormatError(ValueError):
    """A persisted index file is unreadable or was built with other constants."""


def build_index(corpus: Corpus) -> InvertedIndex:
    if not corpus.paragraphs:
        raise ValueError("cannot index an empty corpus")

    postings: dict[str, dict[str, int]] = {}
    article_postings: dict[str, dict[str, int]] = {}
    doc_lengths: dict[str, int] = {}
    article_lengths: dict[str, int] = {}
    para_article: dict[str, str] = {}
    article_paragraphs: dict[str, tuple[str, ...]] = {}

    for para in corpus.paragraphs.values():
        doc_lengths[para.id] = len(para.tokens)
        para_article[para.id] = para.article_id
        for term, tf in _term_counts(para.tokens).items():
            postings.setdefault(term, {})[para.id] = tf
    for article in corpus.articles.values():
        article_lengths[article.article_id] = len(article.full_text_tokens)
        article_paragraphs[article.article_id] = tuple(p.id for p in article.paragraphs)
        for term, tf in _term_counts(article.full_text_tokens).items():
            article_postings.setdefault(term, {})[article.article_id] = tf

    return InvertedIndex(
        postings=postings,
        article_postings=article_postings,
        doc_lengths=doc_lengths,
        article_lengths=article_lengths,
        avg_doc_length=sum(doc_lengths.values()) / len(doc_lengths),
        n_para=len(doc_lengths),
        n_article=len(article_lengths),
        df_para={term: len(entry) for term, entry in postings.items()},
        df_article={term: len(entry) for term, entry in article_postings.items()},
        para_article=para_article,
        article_paragraphs=article_paragraphs,
    )


def _term_counts(tokens: Sequence[str]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for token in tokens:
        counts[token] = counts.get(token, 0) + 1
    return counts


def idf_paragraph(index: InvertedIndex, term: str) -> float:
    """Paragraph-level idf, ln(1 + (N-n+0.5)/(n+0.5)); always positive."""
    n = index.df_para.get(term, 0)
    return math.log(1.0 + (index.n_para - n + 0.5) / (n + 0.5))


def idf_article_clamped(index: InvertedIndex, term: str) -> float:
    """Article-level idf, max(0, ln((N-n+0.5)/(n+0.5)))."""
    n = index.df_article.get(term, 0)
    return max(0.0, math.log((index.n_article - n + 0.5) / (n + 0.5)))


def score_paragraph(index: InvertedIndex, paragraph_id: str, query: Query) -> float:
    """BM25 score of the paragraph's own text against the query."""
    length = index.doc_lengths.get(paragraph_id)
    if length is None:
        raise KeyError(f"unknown paragraph id {paragraph_id!r}")
    score = 0.0
    for term in query:
        tf = index.postings.get(term, {}).get(paragraph_id, 0)
        if tf == 0:
            continue
        norm = K1 * (1.0 - B + B * length / index.avg_doc_length)
        score += idf_paragraph(index, term) * tf * (K1 + 1.0) / (tf + norm)
    return score


def score_article(index: InvertedIndex, article_id: str, query: Query) -> float:
    """Squared-idf, length-unnormalized score of an article's full text."""
    if article_id not in index.article_lengths:
        raise KeyError(f"unknown article id {article_id!r}")
    score = 0.0
    for term in query:
        tf = index.article_postings.get(term, {}).get(article_id, 0)
        if tf == 0:
            continue
        idf = idf_article_clamped(index, term)
        score += idf * idf * tf * (ARTICLE_K1 + 1.0) / (tf + ARTICLE_K1)
    return score


def combined_score(index: InvertedIndex, paragraph_id: str, query: Query) -> float:
    """Paragraph BM25 plus the parent article's squared-idf score."""
    para_part = score_paragraph(index, paragraph_id, query)
    return para_part + score_article(index, index.para_article[paragraph_id], query)


@dataclass(frozen=True)
class SearchHit:
    paragraph_id: str
    score: float
    rank: int


def _candidate_paragraphs(index: InvertedIndex, query: Query) -> set[str]:
    # Every paragraph term also occurs in its article's full text, so
    # expanding matching articles covers all nonzero-scoring paragraphs.
    candidates: set[str] = set()
    for term in set(query):
        for article_id in index.article_postings.get(term, ()):
            candidates.update(index.article_paragraphs[article_id])
    return candidates


def search_topk(index: InvertedIndex, query: Query, k: int) -> list[SearchHit]:
    """The k highest-combined-score paragraphs, ties broken by ascending id.

    Returns min(k, N) hits; when fewer than k paragraphs score above zero,
    the remainder is filled with zero-score paragraphs in id order, so the
    result always matches a full brute-force sort of the corpus.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    scored = []
    for pid in _candidate_paragraphs(index, query):
        score = combined_score(index, pid, query)
        if score > 0.0:
            scored.append((score, pid))
    scored.sort(key=lambda item: (-item[0], item[1]))
    top = scored[:k]
    if len(top) < k and len(top) < index.n_para:
        taken = {pid for _, pid in top}
        fill = sorted(pid for pid in index.doc_lengths if pid not in taken)
        top.extend((0.0, pid) for pid in fill[: k - len(top)])
    return [SearchHit(pid, score, rank) for rank, (score, pid) in enumerate(top, start=1)]


def rank_of(index: InvertedIndex, target_paragraph_id: str, query: Query) -> int:
    """1-based rank of the target under combined scoring.

    An empty query, or a target the query does not reach, yields the
    sentinel rank N_para + 1 ("not retrieved").
    """
    if target_paragraph_id not in index.doc_lengths:
        raise KeyError(f"unknown paragraph id {target_paragraph_id!r}")
    if not query:
        return index.sentinel_rank
    target_score = combined_score(index, target_paragraph_id, query)
    if target_score <= 0.0:
        return index.sentinel_rank
    rank = 1
    for pid in _candidate_paragraphs(index, query):
        if pid == target_paragraph_id:
            continue
        score = combined_score(index, pid, query)
        if score > target_score or (score == target_score and pid < target_paragraph_id):
            rank += 1
    return rank


def save_index(index: InvertedIndex, path) -> None:
    """Write the index as line-delimited JSON with a versioned header."""
    with open(path, "w", encoding="utf-8") as out:
        header = {
            "magic": INDEX_MAGIC,
            "format_version": INDEX_FORMAT_VERSION,
            "k1": K1,
            "b": B,
            "article_k1": ARTICLE_K1,
            "article_b": ARTICLE_B,
            "n_para": index.n_para,
            "n_article": index.n_article,
            "avg_doc_length": index.avg_doc_length,
        }
        out.write(json.dumps(header) + "\n")
        for pid in sorted(index.doc_lengths):
            record = {"kind": "para", "id": pid, "len": index.doc_lengths[pid],
                      "article": index.para_article[pid]}
            out.write(json.dumps(record) + "\n")
        for aid in sorted(index.article_lengths):
            record = {"kind": "article", "id": aid, "len": index.article_lengths[aid],
                      "paragraphs": list(index.article_paragraphs[aid])}
            out.write(json.dumps(record) + "\n")
        terms = sorted(set(index.postings) | set(index.article_postings))
        for term in terms:
            record = {
                "kind": "term",
                "t": term,
                "p": sorted(index.postings.get(term, {}).items()),
                "a": sorted(index.article_postings.get(term, {}).items()),
            }
            out.write(json.dumps(record) + "\n")


def load_index(path) -> InvertedIndex:
    """Load a persisted index, refusing headers with mismatched constants."""
    with open(path, encoding="utf-8") as handle:
        header_line = handle.readline()
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise IndexFormatError(f"unreadable index header: {exc.msg}") from exc
        if header.get("magic") != INDEX_MAGIC:
            raise IndexFormatError("not an index file (bad magic)")
        if header.get("format_version") != INDEX_FORMAT_VERSION:
            raise IndexFormatError(f"unsupported index format version {header.get('format_version')!r}")
        expected = {"k1": K1, "b": B, "article_k1": ARTICLE_K1, "article_b": ARTICLE_B}
        for name, value in expected.items():
            if header.get(name) != value:
                raise IndexFormatError(
                    f"index was built with {name}={header.get(name)!r}, this build uses {value!r}"
                )

        postings: dict[str, dict[str, int]] = {}
        article_postings: dict[str, dict[str, int]] = {}
        doc_lengths: dict[str, int] = {}
        article_lengths: dict[str, int] = {}
        para_article: dict[str, str] = {}
        article_paragraphs: dict[str, tuple[str, ...]] = {}
        for line in handle:
            if not line.strip():
                continue
            record = json.loads(line)
            kind = record.get("kind")
            if kind == "para":
                doc_lengths[record["id"]] = record["len"]
                para_article[record["id"]] = record["article"]
            elif kind == "article":
                article_lengths[record["id"]] = record["len"]
                article_paragraphs[record["id"]] = tuple(record["paragraphs"])
            elif kind == "term":
                if record["p"]:
                    postings[record["t"]] = {pid: tf for pid, tf in record["p"]}
                if record["a"]:
                    article_postings[record["t"]] = {aid: tf for aid, tf in record["a"]}
            else:
                raise IndexFormatError(f"unknown record kind {kind!r}")

    if len(doc_lengths) != header["n_para"] or len(article_lengths) != header["n_article"]:
        raise IndexFormatError("index file is truncated")
    return InvertedIndex(
        postings=postings,
        article_postings=article_postings,
        doc_lengths=doc_lengths,
        article_lengths=article_lengths,
        avg_doc_length=header["avg_doc_length"],
        n_para=header["n_para"],
        n_article=header["n_article"],
        df_para={term: len(entry) for term, entry in postings.items()},
        df_article={term: len(entry) for term, entry in article_postings.items()},
        para_article=para_article,
        article_paragraphs=article_paragraphs,
    )
