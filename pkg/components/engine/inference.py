#!/usr/bin/env python3
"""
Inference Module

Zero-shot test processes and the plain baseline.

Key Components:
- test_summarization: one composite prompt that asks the model to generate QA pairs with the
  learned QA experience and then summarize with the learned summary experience
- test_qa_dataset: same, with the document's own gold QA pairs in the prompt
- baseline_summary: single call with the fixed baseline instruction, no experience
- extract_final_summary: pulls the final summary out of the composite output

Experience slots are blanked according to the run's ablation (no_sum_exp / no_qa_exp);
nothing else in the rendered prompt changes. There is no threshold loop at test time.

Usage:
    from components.engine import inference
    output = inference.generate(doc, es, cfg, provider)
"""

import re

from pydantic import BaseModel

from components.engine import prompts
from components.engine.run_config import Ablation, Mode
from components.logging_utils import get_logger

logger = get_logger(__name__)

# "Summary:", "**Final Summary:**", "## Summary" on its own line
_SUMMARY_HEADING_RE = re.compile(
    r"^[ \t#*>_-]*(?:final[ \t]+)?summary[ \t]*\**[ \t]*(?::|$)\**",
    re.IGNORECASE | re.MULTILINE,
)


class TestOutput(BaseModel):
    __test__ = False

    doc_id: str
    summary: str
    raw_text: str


def experience_bindings(es, ablation=Ablation.full):
    """Experience slot bindings for a test prompt; ablated slots are bound to ''."""
    ablation = Ablation(ablation)
    return {
        prompts.SUM_EXPERIENCE: '' if ablation == Ablation.no_sum_exp else es.exp_sum,
        prompts.QA_EXPERIENCE: '' if ablation == Ablation.no_qa_exp else es.exp_qa,
    }


def build_test_prompt(doc, es, cfg, template=None):
    """Rendered test prompt for the run's mode (test_summarization or test_qa)."""
    mode = Mode(cfg.mode)
    if mode == Mode.test_qa:
        if not doc.gold_qa:
            raise ValueError(f"Document {doc.id} has no gold QA pairs; test_qa needs them")
        name = prompts.TEST_QA
    elif mode == Mode.test_summarization:
        name = prompts.TEST_SUMMARIZATION
    else:
        raise ValueError(f"Mode {mode.value} has no test prompt")
    template = template or prompts.load_template(name, cfg.templates_dir)
    bindings = {prompts.ARTICLE: doc.text, **experience_bindings(es, cfg.ablation)}
    if mode == Mode.test_qa:
        bindings[prompts.GOLD_QA] = prompts.format_qa_pairs(doc.gold_qa)
    return prompts.render(template, bindings)


def extract_final_summary(raw):
    """Text after the last Summary heading of a composite output, or the whole output when there is none."""
    matches = list(_SUMMARY_HEADING_RE.finditer(raw))
    if matches:
        tail = raw[matches[-1].end():].strip().strip('*').strip()
        if tail:
            return tail
    return raw.strip()


def generate(doc, es, cfg, provider, template=None):
    """One test-phase call for a document; returns the summary and the raw output (which holds the generated QA pairs)."""
    if not doc.text.strip():
        raise ValueError(f"Document {doc.id} has empty text")
    prompt = build_test_prompt(doc, es, cfg, template)
    raw = provider.complete(provider.build_request(prompt)).raw_text
    summary = extract_final_summary(raw) if cfg.extract_summary_section else raw.strip()
    return TestOutput(doc_id=doc.id, summary=summary, raw_text=raw)


def test_summarization(doc, es, cfg, provider):
    """Zero-shot summary with transferred QA and summary experience."""
    return generate(doc, es, cfg.model_copy(update={'mode': Mode.test_summarization}), provider).summary


def test_qa_dataset(doc, es, cfg, provider):
    """Summary of a QA-dataset document guided by its own gold QA pairs."""
    return generate(doc, es, cfg.model_copy(update={'mode': Mode.test_qa}), provider).summary


def build_baseline_prompt(doc, templates_dir=None, template=None):
    template = template or prompts.load_template(prompts.BASELINE, templates_dir)
    return prompts.render(template, {prompts.ARTICLE: doc.text})


def baseline_output(doc, provider, templates_dir=None, template=None):
    if not doc.text.strip():
        raise ValueError(f"Document {doc.id} has empty text")
    raw = provider.complete(provider.build_request(build_baseline_prompt(doc, templates_dir, template))).raw_text
    return TestOutput(doc_id=doc.id, summary=raw.strip(), raw_text=raw)


def baseline_summary(doc, provider, templates_dir=None):
    return baseline_output(doc, provider, templates_dir).summary
