#!/usr/bin/env python3
"""
Data Store Utilities Module

This module provides centralized artifact storage for pipeline runs.
It consolidates the output directory layout and provides a single source of truth for
where each stage reads and writes its artifacts.

Key Components:
- Run directory layout: <out>/<run_id>/<stage>/
- Deterministic JSON / JSONL writers (sorted keys, fixed separators, trailing newline)
- Stage manifests (config snapshot, template hashes, experience revision, provider mode)
- Explicit errors naming missing prerequisite artifacts

Usage:
    from components.data.data_store_utils import get_run_store
    store = get_run_store('runs', 'bbc-gpt4o')
    store.write_jsonl('train', 'traces.jsonl', rows)
"""

import hashlib
import json
import os
import time

from components.config import config as app_config
from components.logging_utils import get_logger

logger = get_logger(__name__)


class MissingArtifactError(FileNotFoundError):
    """A stage needs an artifact that an earlier stage has not produced."""


def canonical_json(value):
    """Stable serialization used for hashing and for byte-identical artifacts."""
    return json.dumps(value, sort_keys=True, separators=(',', ':'), ensure_ascii=False)


def sha256_text(text):
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


def sha256_file(path):
    with open(path, 'rb') as f:
        return hashlib.sha256(f.read()).hexdigest()


def _to_plain(row):
    return row.model_dump(mode='json') if hasattr(row, 'model_dump') else row


def write_json(path, value):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(json.dumps(_to_plain(value), sort_keys=True, indent=2, ensure_ascii=False) + '\n')
    return path


def read_json(path):
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


def write_jsonl(path, rows):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        for row in rows:
            f.write(canonical_json(_to_plain(row)) + '\n')
    return path


def read_jsonl(path):
    with open(path, 'r', encoding='utf-8') as f:
        return [json.loads(line) for line in f if line.strip()]


class RunStore:
    """Artifact directory of a single run, one sub-directory per stage."""

    def __init__(self, out_dir, run_id):
        self.out_dir = out_dir
        self.run_id = run_id
        self.root = os.path.join(out_dir, run_id)

    def path(self, stage, filename):
        return os.path.join(self.root, stage, filename)

    def exists(self, stage, filename):
        return os.path.exists(self.path(stage, filename))

    def require(self, stage, filename, hint):
        """Return the artifact path or raise naming the missing artifact and how to produce it."""
        path = self.path(stage, filename)
        if not os.path.exists(path):
            raise MissingArtifactError(f"Missing artifact {path}: {hint}")
        return path

    def write_json(self, stage, filename, value):
        return write_json(self.path(stage, filename), value)

    def write_jsonl(self, stage, filename, rows):
        _t0 = time.perf_counter()
        path = write_jsonl(self.path(stage, filename), rows)
        logger.debug(f"[perf] wrote {path} in {time.perf_counter() - _t0:.2f}s")
        return path

    def read_json(self, stage, filename, hint='run the producing stage first'):
        return read_json(self.require(stage, filename, hint))

    def read_jsonl(self, stage, filename, hint='run the producing stage first'):
        return read_jsonl(self.require(stage, filename, hint))

    def write_manifest(self, stage, cfg, provider_mode, template_paths=(), experience_revision=None, extra=None):
        """
        Write <stage>/manifest.json.

        Holds everything needed to re-execute the stage under replay: the full
        config snapshot (including the seed), hashes of every prompt template
        used, the experience revision and the provider mode. No timestamps, so
        replayed runs produce identical manifests.
        """
        manifest = {
            'run_id': self.run_id,
            'stage': stage,
            'config': _to_plain(cfg),
            'seed': getattr(cfg, 'seed', None),
            'provider_mode': provider_mode,
            'templates': {os.path.basename(p): sha256_file(p) for p in template_paths},
            'experience_revision': experience_revision,
        }
        if extra:
            manifest.update(extra)
        return self.write_json(stage, 'manifest.json', manifest)


def get_run_store(out_dir=None, run_id='default'):
    """
    Get the artifact store for a run.

    Args:
        out_dir: output root; defaults to OUTPUT_DIR from the environment
        run_id: run identifier, one directory per run

    Returns:
        RunStore
    """
    return RunStore(out_dir or app_config.OUTPUT_DIR, run_id)
