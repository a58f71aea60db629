#!/usr/bin/env python3
"""
Corpus Utilities Module

Loads, validates, filters and splits the dataset styles the engine works with
(summarization-labeled and QA-labeled) into one uniform document model.

Key Components:
- QaPair / Document / Dataset models with their invariants
- load_dataset: canonical JSONL ingestion with adapter field mapping and a rejection report
- filter_long / split_train_test / sample_documents: deterministic selection helpers
- write_dataset: canonical JSONL serialization (ingest caches)

Usage:
    from components.data.corpus_utils import load_dataset, split_train_test
    ds = load_dataset('data/fairytaleqa.jsonl', 'qa', style='narrative')
    train, test = split_train_test(ds, n_train=10, seed=13)
"""

import json
import os
from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from components.logging_utils import get_logger
from components.metrics.text_metrics import tokenize

logger = get_logger(__name__)

CANONICAL_FIELDS = ('id', 'text', 'summary', 'qa', 'question', 'answer')


class DatasetKind(str, Enum):
    summarization = 'summarization'
    qa = 'qa'


class Style(str, Enum):
    news = 'news'
    narrative = 'narrative'


class DatasetError(ValueError):
    """Unreadable dataset file or a dataset with no usable documents."""


class DatasetValidationError(DatasetError):
    """A document violates the dataset kind's invariant."""


class QaPair(BaseModel):
    model_config = ConfigDict(frozen=True)

    question: str
    answer: str

    @field_validator('question', 'answer')
    @classmethod
    def _non_empty(cls, value):
        value = value.strip()
        if not value:
            raise ValueError('must be non-empty after trimming')
        return value


class Document(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str
    text: str
    gold_summary: Optional[str] = None
    gold_qa: list[QaPair] = Field(default_factory=list)
    style: Style = Style.news

    @field_validator('text')
    @classmethod
    def _text_non_empty(cls, value):
        if not value.strip():
            raise ValueError('text must be non-empty')
        return value


class Dataset(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    kind: DatasetKind
    documents: list[Document] = Field(default_factory=list)

    @model_validator(mode='after')
    def _check_invariants(self):
        seen = set()
        for doc in self.documents:
            if doc.id in seen:
                raise ValueError(f"duplicate document id '{doc.id}'")
            seen.add(doc.id)
            if self.kind == DatasetKind.qa and not doc.gold_qa:
                raise ValueError(f"document '{doc.id}' has no QA pairs in a qa dataset")
            if self.kind == DatasetKind.summarization and not doc.gold_summary:
                raise ValueError(f"document '{doc.id}' has no summary in a summarization dataset")
        return self

    def __len__(self):
        return len(self.documents)

    def ids(self):
        return [doc.id for doc in self.documents]

    def by_id(self):
        return {doc.id: doc for doc in self.documents}

    def with_documents(self, documents):
        return Dataset(name=self.name, kind=self.kind, documents=list(documents))


def load_adapter(path):
    """Read an adapter JSON mapping canonical field names to the source file's names."""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            adapter = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise DatasetError(f"Cannot read adapter config {path}: {e}")
    unknown = set(adapter) - set(CANONICAL_FIELDS)
    if unknown:
        raise DatasetError(f"Adapter {path} maps unknown canonical fields: {', '.join(sorted(unknown))}")
    return adapter


def rejection_report_path(path):
    root, _ = os.path.splitext(path)
    return f"{root}.rejected.jsonl"


def _document_from_record(record, adapter, default_id, style):
    def field(name):
        return record.get(adapter.get(name, name))

    text = field('text')
    if not isinstance(text, str) or not text.strip():
        raise ValueError("missing or empty 'text'")

    raw_id = field('id')
    doc_id = str(raw_id) if raw_id not in (None, '') else default_id

    summary = field('summary')
    if summary is not None and not isinstance(summary, str):
        raise ValueError("'summary' must be a string")

    question_key = adapter.get('question', 'question')
    answer_key = adapter.get('answer', 'answer')
    raw_pairs = field('qa') or []
    if isinstance(raw_pairs, dict):
        # Keyed "1", "2", ... as in the model's own output format
        raw_pairs = [raw_pairs[k] for k in sorted(raw_pairs, key=lambda k: (len(k), k))]
    if not isinstance(raw_pairs, list):
        raise ValueError("'qa' must be a list of question/answer objects")
    pairs = [QaPair(question=p.get(question_key, ''), answer=p.get(answer_key, '')) for p in raw_pairs]

    return Document(
        id=doc_id,
        text=text,
        gold_summary=summary.strip() if isinstance(summary, str) and summary.strip() else None,
        gold_qa=pairs,
        style=style,
    )


def load_dataset(path, kind, name=None, style='news', adapter=None):
    """
    Load a JSONL dataset, one document object per line.

    Malformed lines (bad JSON, missing text, empty QA fields, duplicate ids)
    are written to a rejection report beside the input and skipped. A
    document violating the dataset kind (a summarization document without a
    summary, a qa document without pairs) fails the whole load.

    Args:
        path: JSONL file in the canonical schema, or a foreign schema plus adapter
        kind: 'summarization' or 'qa'
        name: dataset name (defaults to the file stem)
        style: 'news' or 'narrative', selects the experience prompt set
        adapter: dict or path of an adapter JSON mapping canonical -> source field names

    Returns:
        Dataset
    """
    kind = DatasetKind(kind)
    style = Style(style)
    name = name or os.path.splitext(os.path.basename(path))[0]
    if isinstance(adapter, str):
        adapter = load_adapter(adapter)
    adapter = adapter or {}

    try:
        with open(path, 'r', encoding='utf-8') as f:
            lines = f.readlines()
    except OSError as e:
        raise DatasetError(f"Cannot read dataset {path}: {e}")

    documents, rejections, seen = [], [], set()
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            if not isinstance(record, dict):
                raise ValueError('line is not a JSON object')
            doc = _document_from_record(record, adapter, f"{name}-{line_no}", style)
            if doc.id in seen:
                raise ValueError(f"duplicate id '{doc.id}'")
        except (ValueError, ValidationError, AttributeError) as e:
            rejections.append({'line': line_no, 'error': str(e).splitlines()[0], 'raw': line.rstrip('\n')})
            continue
        seen.add(doc.id)
        documents.append(doc)

    report_path = rejection_report_path(path)
    if rejections:
        with open(report_path, 'w', encoding='utf-8') as f:
            for rejection in rejections:
                f.write(json.dumps(rejection, ensure_ascii=False) + '\n')
        logger.warning(f"⚠ {len(rejections)} malformed lines in {path} written to {report_path}")
    elif os.path.exists(report_path):
        os.remove(report_path)

    if not documents:
        raise DatasetError(f"No valid documents in {path}")

    try:
        dataset = Dataset(name=name, kind=kind, documents=documents)
    except ValidationError as e:
        raise DatasetValidationError(f"{path} does not satisfy kind={kind.value}: {e.errors()[0]['msg']}")

    logger.info(f"✓ Loaded {len(dataset)} documents from {path} ({kind.value}, {style.value})")
    return dataset


def write_dataset(ds, path):
    """Serialize a dataset to canonical JSONL."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        for doc in ds.documents:
            record = {'id': doc.id, 'text': doc.text}
            if doc.gold_summary is not None:
                record['summary'] = doc.gold_summary
            if doc.gold_qa:
                record['qa'] = [{'question': p.question, 'answer': p.answer} for p in doc.gold_qa]
            f.write(json.dumps(record, ensure_ascii=False) + '\n')
    return path


def filter_long(ds, min_words=1000):
    """Keep documents with at least min_words word tokens, order preserved."""
    kept = [doc for doc in ds.documents if len(tokenize(doc.text)) >= min_words]
    if not kept and ds.documents:
        logger.warning(f"⚠ No document in {ds.name} reaches {min_words} words; dataset is now empty")
    return ds.with_documents(kept)


def split_train_test(ds, n_train, seed):
    """Seeded shuffle then prefix split into disjoint (train, test) datasets."""
    if n_train < 0 or n_train > len(ds):
        raise DatasetError(f"n_train={n_train} outside [0, {len(ds)}] for {ds.name}")
    order = np.random.default_rng(seed).permutation(len(ds))
    shuffled = [ds.documents[i] for i in order]
    return ds.with_documents(shuffled[:n_train]), ds.with_documents(shuffled[n_train:])


def sample_documents(ds, n, seed):
    """Seeded draw of n documents, kept in their original order."""
    if n >= len(ds):
        return ds
    chosen = sorted(np.random.default_rng(seed).choice(len(ds), size=n, replace=False))
    return ds.with_documents(ds.documents[i] for i in chosen)
