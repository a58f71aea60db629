#!/usr/bin/env python3
"""
Scoring Module

Per-document ROUGE-1/2/L, BLEU and LLM-judge Factscore for one run's summaries.

Key Components:
- score_run: overlap metrics against the gold summary (summarization datasets) or the
  source text (QA datasets)
- factscore_judge: one judge call with the fixed rubric template, lenient number
  extraction, clamped to [0, 100], one retry, absent on failure
- judge_report: fills Factscore for every scored document through the worker pool

Aggregates are arithmetic means over the scored documents; failed documents are
listed separately and never enter a mean. Factscore means skip documents the
judge could not score.

Usage:
    from components.eval.scoring import score_run
    report = score_run(outputs, test_set, 'gold_summary', run_id='bbc-t3')
"""

import re
from enum import Enum
from typing import Optional

import pandas as pd
from pydantic import BaseModel, Field

from components.data.corpus_utils import DatasetKind
from components.engine import prompts
from components.engine.workers import run_documents
from components.logging_utils import get_logger
from components.metrics.text_metrics import RougeScore, bleu, rouge_l, rouge_n

logger = get_logger(__name__)

METRICS = ('rouge1', 'rouge2', 'rougeL', 'bleu', 'factscore')
OVERLAP_METRICS = ('rouge1', 'rouge2', 'rougeL', 'bleu')

FACTSCORE_MIN = 0.0
FACTSCORE_MAX = 100.0

_NUMBER = r"-?\d+(?:\.\d+)?"
_NUMBER_RE = re.compile(_NUMBER)
# "0-100", "0 to 100", "from 0 (...) to 100": the rubric's scale, not a score
_SCALE_RE = re.compile(r"\b0\s*(?:\([^)]*\)\s*)?(?:-|–|to)\s*100\b", re.IGNORECASE)
_OUT_OF_RE = re.compile(rf"({_NUMBER})\s*(?:/|out of)\s*100\b", re.IGNORECASE)
_AFTER_SCORE_RE = re.compile(rf"score\b[^\d-]{{0,20}}({_NUMBER})", re.IGNORECASE)

JUDGE_RETRY_SUFFIX = "\n\nReply with a single number between 0 and 100 and nothing else."


class ScoringError(ValueError):
    pass


class ReferenceMode(str, Enum):
    gold_summary = 'gold_summary'
    source_text = 'source_text'


class DocScore(BaseModel):
    doc_id: str
    rouge1: RougeScore
    rouge2: RougeScore
    rougeL: RougeScore
    bleu: float = Field(ge=0, le=1)
    factscore: Optional[float] = Field(default=None, ge=FACTSCORE_MIN, le=FACTSCORE_MAX)
    empty_output: bool = False

    def value(self, metric):
        score = getattr(self, metric)
        return score.f1 if isinstance(score, RougeScore) else score


class MetricReport(BaseModel):
    run_id: str
    reference_mode: ReferenceMode
    scores: list[DocScore]
    means: dict[str, Optional[float]] = Field(default_factory=dict)
    failed: list[str] = Field(default_factory=list)
    model_label: Optional[str] = None
    dataset: Optional[str] = None
    judge_template: Optional[str] = None

    def doc_ids(self):
        return {s.doc_id for s in self.scores}

    def values(self, metric):
        """Per-document values of one metric in doc_id order; absent Factscores are skipped."""
        ordered = sorted(self.scores, key=lambda s: s.doc_id)
        return [v for v in (s.value(metric) for s in ordered) if v is not None]

    def with_scores(self, scores):
        report = self.model_copy(update={'scores': scores})
        return report.model_copy(update={'means': aggregate_means(report)})


def default_reference_mode(kind):
    """Summarization sets score against their gold summaries, QA sets against the source text."""
    return ReferenceMode.gold_summary if DatasetKind(kind) == DatasetKind.summarization else ReferenceMode.source_text


def aggregate_means(report):
    if not report.scores:
        return {metric: None for metric in METRICS}
    frame = pd.DataFrame(
        [{'doc_id': s.doc_id, **{m: s.value(m) for m in METRICS}} for s in report.scores]
    ).sort_values('doc_id')
    means = {}
    for metric in METRICS:
        column = frame[metric].dropna()
        means[metric] = float(column.mean()) if len(column) else None
    return means


def score_document(doc_id, summary, reference):
    if not summary or not summary.strip():
        zero = RougeScore(precision=0.0, recall=0.0, f1=0.0)
        return DocScore(doc_id=doc_id, rouge1=zero, rouge2=zero, rougeL=zero, bleu=0.0, empty_output=True)
    return DocScore(
        doc_id=doc_id,
        rouge1=rouge_n(summary, reference, 1),
        rouge2=rouge_n(summary, reference, 2),
        rougeL=rouge_l(summary, reference),
        bleu=bleu(summary, [reference]),
    )


def score_run(outputs, refs, reference_mode, failed=(), run_id='', model_label=None):
    """
    Score a run's summaries against their references.

    Args:
        outputs: mapping doc_id -> summary text
        refs: Dataset holding the references
        reference_mode: gold_summary or source_text
        failed: ids of documents the run failed on, reported separately
        run_id: label stored in the report

    Returns:
        MetricReport
    """
    reference_mode = ReferenceMode(reference_mode)
    by_id = refs.by_id()
    unknown = sorted(set(outputs) - set(by_id))
    if unknown:
        raise ScoringError(f"Output ids not in dataset {refs.name}: {', '.join(unknown[:5])}")

    scores = []
    for doc_id, summary in outputs.items():
        doc = by_id[doc_id]
        if reference_mode == ReferenceMode.gold_summary:
            if not doc.gold_summary:
                raise ScoringError(f"Document {doc_id} has no gold summary; use reference mode source_text")
            reference = doc.gold_summary
        else:
            reference = doc.text
        score = score_document(doc_id, summary, reference)
        if score.empty_output:
            logger.warning(f"⚠ {run_id}: empty summary for {doc_id}, scored as zeros")
        scores.append(score)

    report = MetricReport(
        run_id=run_id, reference_mode=reference_mode, scores=scores,
        failed=sorted(failed), model_label=model_label, dataset=refs.name,
    )
    return report.with_scores(scores)


def parse_judge_score(raw):
    """
    Score in a judge reply, clamped to [0, 100]; None when there is none.

    The numerator of "N/100" or "N out of 100" wins, then a number after "score",
    then the last number. Scale ranges such as "0-100" are ignored.
    """
    text = _SCALE_RE.sub(' ', raw or '')
    match = _OUT_OF_RE.search(text) or _AFTER_SCORE_RE.search(text)
    if match is not None:
        value = match.group(1)
    else:
        numbers = _NUMBER_RE.findall(text)
        if not numbers:
            return None
        value = numbers[-1]
    return min(FACTSCORE_MAX, max(FACTSCORE_MIN, float(value)))


def factscore_judge(summary, source, provider, template=None, templates_dir=None):
    template = template or prompts.load_template(prompts.FACTSCORE_JUDGE, templates_dir)
    prompt = prompts.render(template, {prompts.ARTICLE: source, prompts.SUMMARY: summary})
    raw = provider.complete(provider.build_request(prompt)).raw_text
    score = parse_judge_score(raw)
    if score is None:
        raw = provider.complete(provider.build_request(prompt + JUDGE_RETRY_SUFFIX)).raw_text
        score = parse_judge_score(raw)
    if score is None:
        logger.warning(f"⚠ Judge reply has no score after one retry: {raw[:80]!r}")
    return score


def judge_report(report, outputs, refs, provider, workers=1, failure_threshold=1.0, templates_dir=None):
    """Fill Factscore on every non-empty scored document; judge failures leave the field absent."""
    template = prompts.load_template(prompts.FACTSCORE_JUDGE, templates_dir)
    by_id = refs.by_id()
    to_judge = [by_id[s.doc_id] for s in report.scores if not s.empty_output]

    def judge(doc):
        return factscore_judge(outputs[doc.id], doc.text, provider, template=template)

    results, _ = run_documents(to_judge, judge, workers, failure_threshold, label=f"judge {report.run_id}")
    factscores = {doc.id: score for doc, score in results}
    scores = [s.model_copy(update={'factscore': factscores.get(s.doc_id)}) for s in report.scores]
    judged = report.with_scores(scores)
    return judged.model_copy(update={'judge_template': template.version})
