"""
Append-only JSONL transcript of provider traffic, keyed by request hash.

Each line is {"hash": str, "request": {...}, "response": {...}}. Lookups are
exact-match on the hash; when a hash was recorded more than once the last
entry wins.
"""

import json
import os
import threading

from components.data.data_store_utils import canonical_json
from components.logging_utils import get_logger
from components.provider.llm_utils import ProviderResponse, ReplayMissError

logger = get_logger(__name__)


class TranscriptStoreError(OSError):
    pass


class TranscriptStore:
    def __init__(self, path):
        self.path = path
        self._entries = {}
        self._lock = threading.Lock()
        if os.path.exists(path):
            self._load()

    def _load(self):
        try:
            with open(self.path, 'r', encoding='utf-8') as f:
                for line_no, line in enumerate(f, start=1):
                    if not line.strip():
                        continue
                    entry = json.loads(line)
                    if entry['hash'] in self._entries:
                        logger.warning(f"⚠ Transcript {self.path} line {line_no} repeats hash {entry['hash'][:12]}; last entry wins")
                    self._entries[entry['hash']] = entry
        except (OSError, json.JSONDecodeError, KeyError) as e:
            raise TranscriptStoreError(f"Cannot read transcript store {self.path}: {e}")
        logger.info(f"✓ Loaded {len(self._entries)} transcript entries from {self.path}")

    def __len__(self):
        return len(self._entries)

    def __contains__(self, request_hash):
        return request_hash in self._entries

    def record(self, req, resp):
        """Append one exchange; appends from concurrent workers are serialized."""
        entry = {
            'hash': req.request_hash,
            'request': req.model_dump(mode='json'),
            'response': resp.model_dump(mode='json'),
        }
        with self._lock:
            if entry['hash'] in self._entries:
                logger.warning(f"⚠ Re-recording hash {entry['hash'][:12]}; last write wins")
            try:
                os.makedirs(os.path.dirname(os.path.abspath(self.path)), exist_ok=True)
                with open(self.path, 'a', encoding='utf-8') as f:
                    f.write(canonical_json(entry) + '\n')
            except OSError as e:
                raise TranscriptStoreError(f"Cannot append to transcript store {self.path}: {e}")
            self._entries[entry['hash']] = entry
        return entry

    def lookup(self, request_hash):
        entry = self._entries.get(request_hash)
        if entry is None:
            raise ReplayMissError(request_hash)
        return ProviderResponse(**entry['response'])


def record_transcript(store, req, resp):
    return store.record(req, resp)


def replay_lookup(store, request_hash):
    return store.lookup(request_hash)
