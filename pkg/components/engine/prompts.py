"""
Prompt templates with bracketed placeholders, e.g. "Article: [Article]".

Substitution is a single pass over the template body: text inside a binding
is inserted verbatim and never substituted again, and every other character
of the body is left untouched.
"""

import json
import os
import re

from pydantic import BaseModel, ConfigDict

from components.config import config
from components.data.data_store_utils import sha256_text
from components.provider.parsing import qa_pairs_as_mapping

ARTICLE = 'Article'
GOLD_QA = 'Question Pair with answer'
GENERATED_QA = 'Generated QA pairs'
SUM_EXPERIENCE = 'Summary generation experience'
QA_EXPERIENCE = 'QA generation experience'
SUMMARY = 'Summary'

PLACEHOLDERS = (ARTICLE, GOLD_QA, GENERATED_QA, SUM_EXPERIENCE, QA_EXPERIENCE, SUMMARY)

_PLACEHOLDER_RE = re.compile(r"\[(" + "|".join(re.escape(p) for p in PLACEHOLDERS) + r")\]")

TRAIN_QA = 'train_qa'
TRAIN_SUMMARY = 'train_summary'
TEST_SUMMARIZATION = 'test_summarization'
TEST_QA = 'test_qa'
BASELINE = 'baseline'
FACTSCORE_JUDGE = 'factscore_judge'

REPROMPT_SUFFIX = (
    "\n\nYour previous reply could not be parsed. Reply with the JSON object only, "
    "exactly in the format given above."
)


class PromptTemplateError(ValueError):
    pass


class PromptTemplate(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    body: str
    path: str = ''

    @property
    def placeholders(self):
        return sorted(set(_PLACEHOLDER_RE.findall(self.body)))

    @property
    def version(self):
        return f"{self.name}@{sha256_text(self.body)[:12]}"


def render(template, bindings):
    """Fill every placeholder of the template; an empty string is a legal binding."""
    missing = [p for p in template.placeholders if p not in bindings or bindings[p] is None]
    if missing:
        raise PromptTemplateError(f"Template '{template.name}' has unbound placeholder(s): {', '.join('[' + m + ']' for m in missing)}")
    return _PLACEHOLDER_RE.sub(lambda m: bindings[m.group(1)], template.body)


def load_template(name, templates_dir=None):
    path = os.path.join(templates_dir or config.PROMPTS_DIR, f"{name}.txt")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            body = f.read()
    except OSError as e:
        raise PromptTemplateError(f"Cannot load prompt template {path}: {e}")
    return PromptTemplate(name=name, body=body, path=path)


def format_qa_pairs(pairs):
    """QA pairs in the numbered JSON layout the training prompts ask the model to mirror."""
    return json.dumps(qa_pairs_as_mapping(pairs), indent=2, ensure_ascii=False)
