#!/usr/bin/env python3
"""
Training Module

Runs the experience-learning loop on the assistant (QA) task and the target
(summarization) task over the same training documents.

For every training document, in order:
1. generate QA pairs with the current QA experience, then replace the QA experience
   with the one the model returns (once per document);
2. repeat up to K times: generate a summary from the document, gold and generated
   QA pairs and the current summary experience, replace the summary experience
   (every iteration), score the candidate (similarity S_i, readability R_i,
   compression C_i) and stop as soon as S_i > S and R_i > R and C_i < C.

Experiences carry over from one document to the next. Training is strictly
sequential: each call depends on the experience produced by the previous one.

Usage:
    from components.engine.training import train
    experiences, traces = train(train_set, cfg, provider)
"""

from enum import Enum
from typing import Optional

from pydantic import BaseModel

from components.data.corpus_utils import DatasetError, DatasetKind, QaPair
from components.engine import prompts
from components.engine.workers import check_failure_threshold
from components.experience.experience_store import ExperienceError, ExperienceKind, init, update
from components.logging_utils import get_logger
from components.metrics.text_metrics import (
    MetricError,
    build_idf,
    compression_rate,
    cosine_similarity,
    flesch,
    tokenize,
    unseen_idf,
)
from components.provider.llm_utils import ProviderAuthError, ProviderError
from components.provider.parsing import OutputShape, StructuredOutputError, parse_structured

logger = get_logger(__name__)


class StopReason(str, Enum):
    thresholds_met = 'thresholds_met'
    k_exhausted = 'k_exhausted'
    failed = 'failed'


class IterationTrace(BaseModel):
    doc_id: str
    k: int
    summary_candidate: str = ''
    s_i: Optional[float] = None
    r_i: Optional[float] = None
    c_i: Optional[float] = None
    stopped: bool = False
    stop_reason: Optional[StopReason] = None
    # Generated QA pairs of the document, on its first row only
    generated_qa: Optional[list[QaPair]] = None
    error: Optional[str] = None


class CandidateScorer:
    """S_i, R_i and C_i for a summary candidate against its source document."""

    def __init__(self, train_texts, idf_mode='corpus', compression_unit='words'):
        if idf_mode == 'corpus':
            self.idf = build_idf(train_texts)
            self.oov_weight = unseen_idf(len(train_texts))
        else:
            self.idf, self.oov_weight = None, 1.0
        self.compression_unit = compression_unit

    def score(self, summary, text):
        """R_i is None for a candidate without words; such a candidate never meets the thresholds."""
        s_i = cosine_similarity(summary, text, self.idf, self.oov_weight)
        r_i = flesch(summary).score if tokenize(summary) else None
        c_i = compression_rate(summary, text, self.compression_unit)
        return s_i, r_i, c_i


def call_structured(provider, prompt, shape, strict=False):
    """One provider call parsed into the expected JSON shape, with a single re-prompt on a parse failure."""
    response = provider.complete(provider.build_request(prompt))
    try:
        return parse_structured(response.raw_text, shape, strict=strict)
    except StructuredOutputError as e:
        logger.warning(f"⚠ Unparseable {OutputShape(shape).value} ({e}); re-prompting once")
    response = provider.complete(provider.build_request(prompt + prompts.REPROMPT_SUFFIX))
    return parse_structured(response.raw_text, shape, strict=strict)


def _train_document(doc, es, cfg, provider, templates, scorer):
    thresholds = cfg.thresholds
    rows, k = [], 0
    try:
        qa_prompt = prompts.render(templates['qa'], {
            prompts.ARTICLE: doc.text,
            prompts.GOLD_QA: prompts.format_qa_pairs(doc.gold_qa),
            prompts.QA_EXPERIENCE: es.exp_qa,
        })
        generated = call_structured(provider, qa_prompt, OutputShape.qa_output, cfg.strict_parsing)
        es = update(es, ExperienceKind.qa, generated.qa_experience, doc.id)

        for k in range(1, thresholds.k_max + 1):
            sum_prompt = prompts.render(templates['sum'], {
                prompts.ARTICLE: doc.text,
                prompts.GOLD_QA: prompts.format_qa_pairs(doc.gold_qa),
                prompts.GENERATED_QA: prompts.format_qa_pairs(generated.qa_pairs),
                prompts.SUM_EXPERIENCE: es.exp_sum,
                prompts.QA_EXPERIENCE: es.exp_qa,
            })
            candidate = call_structured(provider, sum_prompt, OutputShape.summary_output, cfg.strict_parsing)
            es = update(es, ExperienceKind.sum, candidate.summary_experience, doc.id)

            s_i, r_i, c_i = scorer.score(candidate.summary, doc.text)
            met = r_i is not None and thresholds.met(s_i, r_i, c_i)
            stop_reason = None
            if met:
                stop_reason = StopReason.thresholds_met
            elif k == thresholds.k_max:
                stop_reason = StopReason.k_exhausted
            rows.append(IterationTrace(
                doc_id=doc.id, k=k, summary_candidate=candidate.summary,
                s_i=s_i, r_i=r_i, c_i=c_i,
                stopped=stop_reason is not None, stop_reason=stop_reason,
                generated_qa=generated.qa_pairs if k == 1 else None,
            ))
            readability = '-' if r_i is None else f"{r_i:.1f}"
            logger.info(f"{doc.id} k={k}: S={s_i:.3f} R={readability} C={c_i:.3f}{' → stop' if met else ''}")
            if met:
                break
    except ProviderAuthError:
        raise
    except (ProviderError, StructuredOutputError, ExperienceError, MetricError) as e:
        logger.warning(f"⚠ Training document {doc.id} failed at k={k}: {e}")
        rows.append(IterationTrace(doc_id=doc.id, k=k, stopped=True, stop_reason=StopReason.failed, error=str(e)))
    return es, rows


def train(train_set, cfg, provider, experiences=None):
    """
    Learn QA and summary experiences from a QA-labeled training set.

    Args:
        train_set: Dataset of kind qa (gold QA pairs drive the assistant task)
        cfg: RunConfig (thresholds, failure threshold, idf/compression settings)
        provider: LLMProvider or any object with build_request/complete
        experiences: starting ExperienceSet; empty stores when None

    Returns:
        (ExperienceSet, list of IterationTrace)
    """
    if train_set.kind != DatasetKind.qa:
        raise DatasetError(f"Training needs a qa dataset, got {train_set.name} ({train_set.kind.value})")

    logger.info(f"Stop thresholds: {cfg.thresholds.describe()} (engine defaults unless configured)")
    templates = {
        'qa': prompts.load_template(prompts.TRAIN_QA, cfg.templates_dir),
        'sum': prompts.load_template(prompts.TRAIN_SUMMARY, cfg.templates_dir),
    }
    scorer = CandidateScorer(
        [doc.text for doc in train_set.documents], cfg.similarity_idf, cfg.compression_unit,
    )

    es = experiences if experiences is not None else init()
    traces, failed = [], 0
    for doc in train_set.documents:
        es, rows = _train_document(doc, es, cfg, provider, templates, scorer)
        traces.extend(rows)
        if rows[-1].stop_reason == StopReason.failed:
            failed += 1
            check_failure_threshold(failed, len(train_set), cfg.failure_threshold, 'train', partial=(es, traces))

    logger.info(f"✓ Training done: {len(train_set) - failed}/{len(train_set)} documents, experience revision {es.revision}")
    return es, traces
