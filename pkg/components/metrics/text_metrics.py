#!/usr/bin/env python3
"""
Text Metrics Module

Tokenization and every scalar text metric used by the training loop's stopping rule
and by evaluation. All functions are pure: same input, same output, no hidden state,
so they are safe to call from any number of worker threads.

Key Components:
- tokenize / split_sentences / count_syllables: word, sentence and syllable accounting
- flesch: reading ease, 206.835 - 1.015*(TW/TSE) - 84.6*(TSY/TW), unclamped
- compression_rate: summary length over source length (word tokens by default)
- rouge_n / rouge_l / bleu: overlap metrics against one or more references
- build_idf / cosine_similarity: TF-IDF bag-of-words similarity

Usage:
    from components.metrics.text_metrics import flesch, rouge_n
    flesch("cat sat. dog ran.").score      # 120.205
    rouge_n("the cat sat", "the cat ran", 1).f1
"""

import math
import re
from collections import Counter

from pydantic import BaseModel, ConfigDict

FLESCH_BASE = 206.835
FLESCH_SENTENCE_WEIGHT = 1.015
FLESCH_SYLLABLE_WEIGHT = 84.6

BLEU_EPSILON = 1e-9

_WORD_RE = re.compile(r"[^\W_]+")
_SENTENCE_BOUNDARY_RE = re.compile(r"(?<=[.!?])\s+")
_VOWEL_GROUP_RE = re.compile(r"[aeiouy]+")


class MetricError(ValueError):
    """Raised when a metric is undefined for its input (e.g. zero words)."""


class RougeScore(BaseModel):
    model_config = ConfigDict(frozen=True)

    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, overlap, candidate_total, reference_total):
        precision = overlap / candidate_total if candidate_total else 0.0
        recall = overlap / reference_total if reference_total else 0.0
        return cls(precision=precision, recall=recall, f1=_f1(precision, recall))


class ReadabilityBreakdown(BaseModel):
    model_config = ConfigDict(frozen=True)

    tw: int
    tse: int
    tsy: int
    score: float


def _f1(precision, recall):
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def tokenize(text):
    """Lowercase alphanumeric word tokens; any other character is a separator."""
    return _WORD_RE.findall(text.lower())


def split_sentences(text):
    """
    Split on '.', '!' or '?' followed by whitespace or end of text.

    No abbreviation handling: "Dr. Who?" is two sentences. A trailing fragment
    without a terminator counts as one sentence.
    """
    return [s.strip() for s in _SENTENCE_BOUNDARY_RE.split(text) if s.strip()]


def count_syllables(word):
    """Vowel-group count, minus a terminal silent 'e' while the count stays >= 1."""
    if not word:
        raise MetricError("count_syllables needs a non-empty word")
    word = word.lower()
    count = len(_VOWEL_GROUP_RE.findall(word))
    if word.endswith("e") and count - 1 >= 1:
        count -= 1
    return max(count, 1)


def flesch(text):
    tokens = tokenize(text)
    if not tokens:
        raise MetricError("flesch is undefined for text without words")
    # Punctuation-only fragments are not sentences; keeps tw >= tse
    tse = sum(1 for sentence in split_sentences(text) if tokenize(sentence))
    tw = len(tokens)
    tsy = sum(count_syllables(token) for token in tokens)
    score = FLESCH_BASE - FLESCH_SENTENCE_WEIGHT * (tw / tse) - FLESCH_SYLLABLE_WEIGHT * (tsy / tw)
    return ReadabilityBreakdown(tw=tw, tse=tse, tsy=tsy, score=score)


def compression_rate(summary, text, unit="words"):
    """length(summary) / length(text); unit is 'words' (token count) or 'characters'."""
    if unit == "words":
        text_len = len(tokenize(text))
        summary_len = len(tokenize(summary))
    elif unit == "characters":
        text_len = len(text.strip())
        summary_len = len(summary.strip())
    else:
        raise MetricError(f"Unknown compression unit: {unit}")
    if text_len == 0:
        raise MetricError("compression_rate needs a non-empty source text")
    return summary_len / text_len


def ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate, reference, n):
    if n < 1:
        raise MetricError("rouge_n needs n >= 1")
    cand = ngrams(tokenize(candidate), n)
    ref = ngrams(tokenize(reference), n)
    overlap = sum((cand & ref).values())
    return RougeScore.from_counts(overlap, sum(cand.values()), sum(ref.values()))


def lcs_length(a, b):
    """Longest common subsequence length, two-row dynamic programme."""
    if len(a) < len(b):
        a, b = b, a
    previous = [0] * (len(b) + 1)
    for x in a:
        current = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                current.append(previous[j - 1] + 1)
            else:
                current.append(max(previous[j], current[j - 1]))
        previous = current
    return previous[-1]


def rouge_l(candidate, reference):
    cand = tokenize(candidate)
    ref = tokenize(reference)
    return RougeScore.from_counts(lcs_length(cand, ref), len(cand), len(ref))


def bleu(candidate, references, max_n=4):
    """
    Corpus-free sentence BLEU.

    Clipped modified n-gram precisions for n = 1..max_n, combined by geometric
    mean, times the brevity penalty min(1, exp(1 - r/c)) with r the closest
    reference length. Orders the candidate is too short to contain are left out
    (so a short candidate scored against itself still gets 1.0); zero
    precisions are replaced by BLEU_EPSILON.
    """
    if max_n < 1:
        raise MetricError("bleu needs max_n >= 1")
    cand = tokenize(candidate)
    refs = [tokenize(r) for r in references]
    if not cand or not refs:
        return 0.0

    log_precisions = []
    for n in range(1, min(max_n, len(cand)) + 1):
        cand_counts = ngrams(cand, n)
        max_ref_counts = Counter()
        for ref in refs:
            max_ref_counts |= ngrams(ref, n)
        clipped = sum(min(count, max_ref_counts[gram]) for gram, count in cand_counts.items())
        precision = clipped / sum(cand_counts.values())
        log_precisions.append(math.log(precision if precision > 0 else BLEU_EPSILON))

    c = len(cand)
    r = min((len(ref) for ref in refs), key=lambda length: (abs(length - c), length))
    brevity_penalty = 1.0 if c > r else math.exp(1 - r / c)
    return brevity_penalty * math.exp(sum(log_precisions) / len(log_precisions))


def build_idf(texts):
    """Smoothed IDF over a text set: log((1 + N) / (1 + df)) + 1, always > 0."""
    documents = [set(tokenize(t)) for t in texts]
    df = Counter(token for doc in documents for token in doc)
    n_docs = len(documents)
    return {token: math.log((1 + n_docs) / (1 + count)) + 1 for token, count in df.items()}


def unseen_idf(n_docs):
    """IDF of a token absent from all n_docs texts, under build_idf's smoothing."""
    return math.log(1 + n_docs) + 1


def tfidf_vector(text, idf=None, oov_weight=1.0):
    counts = Counter(tokenize(text))
    if idf is None:
        return {token: float(tf) for token, tf in counts.items()}
    return {token: tf * idf.get(token, oov_weight) for token, tf in counts.items()}


def cosine_similarity(a, b, idf=None, oov_weight=1.0):
    """Cosine of TF-IDF vectors; unit IDF when idf is None; 0 when either vector is zero."""
    va = tfidf_vector(a, idf, oov_weight)
    vb = tfidf_vector(b, idf, oov_weight)
    norm_a = math.sqrt(sum(w * w for w in va.values()))
    norm_b = math.sqrt(sum(w * w for w in vb.values()))
    if norm_a == 0 or norm_b == 0:
        return 0.0
    dot = sum(w * vb[token] for token, w in va.items() if token in vb)
    return max(0.0, min(1.0, dot / (norm_a * norm_b)))
