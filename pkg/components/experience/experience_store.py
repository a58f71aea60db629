#!/usr/bin/env python3
"""
Experience Store Module

Maintains, versions and persists the two experience stores the training loop starts
empty and refreshes after every generation step: the QA generation experience and the
summary generation experience.

Key Components:
- ExperienceSet: current rule text of both stores, revision counter and full update history
- update: replacement semantics (the model returns the whole refreshed experience)
- persist / load: JSON round trip, history included
- load_published: the ready-made news / narrative experience files shipped under assets/experiences

Usage:
    from components.experience.experience_store import init, update, persist
    es = update(init(), 'qa', '1. Ask about every key point.', 'doc-1')
    persist(es, 'runs/demo/train/experience.json')
"""

import json
import os
from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from components.config import config
from components.data.data_store_utils import write_json
from components.logging_utils import get_logger
from components.metrics.text_metrics import tokenize

logger = get_logger(__name__)


class ExperienceKind(str, Enum):
    qa = 'qa'
    sum = 'sum'


class ExperienceError(ValueError):
    pass


class HistoryEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    revision: int
    kind: ExperienceKind
    source_doc_id: str
    text: str


class ExperienceSet(BaseModel):
    model_config = ConfigDict(frozen=True)

    exp_qa: str = ''
    exp_sum: str = ''
    revision: int = 0
    history: list[HistoryEntry] = Field(default_factory=list)

    @model_validator(mode='after')
    def _check_history(self):
        if len(self.history) != self.revision:
            raise ValueError(f"history length {len(self.history)} != revision {self.revision}")
        for expected, entry in enumerate(self.history, start=1):
            if entry.revision != expected:
                raise ValueError(f"history entry {expected} carries revision {entry.revision}")
        # The current text of each store is the last history entry of its kind
        for kind in ExperienceKind:
            entries = [h.text for h in self.history if h.kind == kind]
            last = entries[-1] if entries else ''
            if self.text(kind) != last:
                raise ValueError(f"{kind.value} experience differs from its last history entry")
        return self

    def text(self, kind):
        return self.exp_qa if ExperienceKind(kind) == ExperienceKind.qa else self.exp_sum


def init():
    return ExperienceSet()


def _warn_if_over_cap(kind, text):
    words = len(tokenize(text))
    if words > config.EXPERIENCE_WORD_CAP:
        logger.warning(f"⚠ {kind.value} experience is {words} words, over the {config.EXPERIENCE_WORD_CAP}-word cap")


def update(es, kind, new_text, doc_id):
    """Replace one store with the model's refreshed experience; the old state stays reachable via history."""
    kind = ExperienceKind(kind)
    if not new_text or not new_text.strip():
        raise ExperienceError(f"Empty {kind.value} experience update from document {doc_id}")
    _warn_if_over_cap(kind, new_text)
    revision = es.revision + 1
    entry = HistoryEntry(revision=revision, kind=kind, source_doc_id=doc_id, text=new_text)
    changes = {'exp_qa': new_text} if kind == ExperienceKind.qa else {'exp_sum': new_text}
    return es.model_copy(update={**changes, 'revision': revision, 'history': [*es.history, entry]})


def replay_history(history):
    """Rebuild an ExperienceSet from its history alone."""
    es = init()
    for entry in history:
        es = update(es, entry.kind, entry.text, entry.source_doc_id)
    return es


def snapshot(es):
    """Independent copy handed to concurrent readers in the test phase."""
    return es.model_copy(deep=True)


def persist(es, path):
    try:
        return write_json(path, es)
    except OSError as e:
        raise ExperienceError(f"Cannot write experience file {path}: {e}")


def load(path):
    try:
        with open(path, 'r', encoding='utf-8') as f:
            raw = json.load(f)
    except FileNotFoundError:
        raise ExperienceError(f"Experience file not found: {path}")
    except (OSError, json.JSONDecodeError) as e:
        raise ExperienceError(f"Cannot read experience file {path}: {e}")
    try:
        es = ExperienceSet.model_validate(raw)
    except ValidationError as e:
        raise ExperienceError(f"Invalid experience file {path}: {e.errors()[0]['msg']}")
    for kind in ExperienceKind:
        _warn_if_over_cap(kind, es.text(kind))
    return es


def published_path(style):
    return os.path.join(config.EXPERIENCES_DIR, f"{style}.json")


def load_published(style):
    """Ready-made experiences for zero-training test runs ('news' or 'narrative')."""
    if style not in ('news', 'narrative'):
        raise ExperienceError(f"No published experience for style '{style}'")
    return load(published_path(style))
