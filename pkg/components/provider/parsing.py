"""
Parsing of the JSON objects the training prompts ask the model to return.

Lenient by default: markdown fences and surrounding prose are ignored and the
first balanced JSON object is parsed. strict=True requires the whole reply to
be the JSON object.
"""

import json
import re
from enum import Enum

from pydantic import BaseModel, ConfigDict, ValidationError

from components.data.corpus_utils import QaPair

QA_PAIRS_KEY = 'Generated_QA_pairs'
QA_EXPERIENCE_KEY = 'QA_generation_experience'
SUMMARY_KEY = 'Summary'
SUMMARY_EXPERIENCE_KEY = 'Summary_generation_experience'

_FENCE_RE = re.compile(r"```[a-zA-Z]*\s*(.*?)```", re.DOTALL)


class OutputShape(str, Enum):
    qa_output = 'qa_output'
    summary_output = 'summary_output'


class StructuredOutputError(ValueError):
    pass


class ParsedQaOutput(BaseModel):
    model_config = ConfigDict(frozen=True)

    qa_pairs: list[QaPair]
    qa_experience: str


class ParsedSummaryOutput(BaseModel):
    model_config = ConfigDict(frozen=True)

    summary: str
    summary_experience: str


def first_balanced_object(text):
    """Return the first {...} span with balanced braces, ignoring braces inside JSON strings."""
    start = text.find('{')
    while start != -1:
        depth, in_string, escaped = 0, False, False
        for i in range(start, len(text)):
            ch = text[i]
            if in_string:
                if escaped:
                    escaped = False
                elif ch == '\\':
                    escaped = True
                elif ch == '"':
                    in_string = False
            elif ch == '"':
                in_string = True
            elif ch == '{':
                depth += 1
            elif ch == '}':
                depth -= 1
                if depth == 0:
                    return text[start:i + 1]
        start = text.find('{', start + 1)
    return None


def _load_object(raw, strict):
    if strict:
        candidate = raw.strip()
    else:
        fenced = _FENCE_RE.search(raw)
        candidate = first_balanced_object(fenced.group(1) if fenced else raw)
        if candidate is None and fenced:
            candidate = first_balanced_object(raw)
    if not candidate:
        raise StructuredOutputError('No JSON object found in model output')
    try:
        value = json.loads(candidate)
    except json.JSONDecodeError as e:
        raise StructuredOutputError(f"Model output is not valid JSON: {e}")
    if not isinstance(value, dict):
        raise StructuredOutputError('Model output JSON is not an object')
    return value


def _require(obj, key):
    if key not in obj:
        raise StructuredOutputError(f"Required key '{key}' missing from model output")
    return obj[key]


def _pair_field(item, name):
    for key in (name, name.lower()):
        if key in item:
            return item[key]
    return ''


def _joined_text(value, separator):
    # Some models return the experience points or summary sentences as a list
    if isinstance(value, list):
        return separator.join(str(v).strip() for v in value)
    return str(value)


def _experience_text(value):
    return _joined_text(value, '\n')


def _parse_qa(obj):
    raw_pairs = _require(obj, QA_PAIRS_KEY)
    if isinstance(raw_pairs, dict):
        items = [raw_pairs[k] for k in sorted(raw_pairs, key=lambda k: (len(k), k))]
    elif isinstance(raw_pairs, list):
        items = raw_pairs
    else:
        raise StructuredOutputError(f"'{QA_PAIRS_KEY}' must be an object or a list")
    pairs = []
    for n, item in enumerate(items, start=1):
        if not isinstance(item, dict):
            raise StructuredOutputError(f"QA pair {n} is not an object")
        try:
            pairs.append(QaPair(question=str(_pair_field(item, 'Question')), answer=str(_pair_field(item, 'Answer'))))
        except ValidationError:
            raise StructuredOutputError(f"QA pair {n} has an empty question or answer")
    return ParsedQaOutput(qa_pairs=pairs, qa_experience=_experience_text(_require(obj, QA_EXPERIENCE_KEY)))


def _parse_summary(obj):
    return ParsedSummaryOutput(
        summary=_joined_text(_require(obj, SUMMARY_KEY), ' '),
        summary_experience=_experience_text(_require(obj, SUMMARY_EXPERIENCE_KEY)),
    )


def parse_structured(raw, shape, strict=False):
    obj = _load_object(raw, strict)
    if OutputShape(shape) == OutputShape.qa_output:
        return _parse_qa(obj)
    return _parse_summary(obj)


def qa_pairs_as_mapping(pairs):
    """The {"1": {"Question": ..., "Answer": ...}} layout used by the prompts."""
    return {str(n): {'Question': p.question, 'Answer': p.answer} for n, p in enumerate(pairs, start=1)}


def serialize_structured(parsed):
    if isinstance(parsed, ParsedQaOutput):
        obj = {QA_PAIRS_KEY: qa_pairs_as_mapping(parsed.qa_pairs), QA_EXPERIENCE_KEY: parsed.qa_experience}
    else:
        obj = {SUMMARY_KEY: parsed.summary, SUMMARY_EXPERIENCE_KEY: parsed.summary_experience}
    return json.dumps(obj, ensure_ascii=False)
