#!/usr/bin/env python3
"""
LLM Provider Utilities Module

Uniform chat-completion invocation across live HTTP backends and a deterministic
record/replay backend.

Key Components:
- ProviderRequest / ProviderResponse with a stable content hash
- Backend adapters: OpenAI-compatible chat completions, Anthropic messages, Gemini generateContent
- Bounded exponential-backoff retry for transient failures (tenacity); auth failures are never retried
- Per-backend token-bucket rate limiter shared by all worker threads
- Record mode appends every exchange to a transcript store; replay mode answers from it

Usage:
    from components.provider.llm_utils import LLMProvider, ProviderSettings
    provider = LLMProvider(ProviderSettings(backend='gemini', model='gemini-1.5-pro'))
    response = provider.complete(provider.build_request(prompt))
"""

import threading
import time
from enum import Enum
from typing import Optional

import httpx
from pydantic import BaseModel, ConfigDict, Field, field_validator
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt, wait_exponential

from components.config import config
from components.data.data_store_utils import canonical_json, sha256_text
from components.logging_utils import get_logger

logger = get_logger(__name__)

GEMINI_SAFETY_CATEGORIES = (
    'HARM_CATEGORY_HARASSMENT',
    'HARM_CATEGORY_HATE_SPEECH',
    'HARM_CATEGORY_SEXUALLY_EXPLICIT',
    'HARM_CATEGORY_DANGEROUS_CONTENT',
)

ANTHROPIC_DEFAULT_MAX_TOKENS = 4096


class Backend(str, Enum):
    openai_compatible = 'openai_compatible'
    anthropic = 'anthropic'
    gemini = 'gemini'
    replay = 'replay'


class SafetyMode(str, Enum):
    default = 'default'
    block_none = 'block_none'


class ProviderError(RuntimeError):
    """A provider call failed for good."""


class ProviderAuthError(ProviderError):
    """Credentials missing or rejected; never retried."""


class TransientProviderError(ProviderError):
    """Retryable failure: 5xx, connection trouble."""


class RateLimitError(TransientProviderError):
    """HTTP 429; raised to the caller once retries are exhausted."""


class ProviderTimeoutError(TransientProviderError):
    pass


class ReplayMissError(ProviderError):
    def __init__(self, request_hash):
        super().__init__(f"Replay miss: no recorded response for request hash {request_hash}")
        self.request_hash = request_hash


class ProviderSettings(BaseModel):
    """Provider section of the run config."""

    backend: Backend = Backend.replay
    model: str = 'gpt-4o'
    base_url: Optional[str] = None
    # None means "provider default" and the field is left out of the wire request
    temperature: Optional[float] = None
    max_output_tokens: Optional[int] = None
    safety_mode: SafetyMode = SafetyMode.default
    requests_per_minute: Optional[float] = Field(default_factory=lambda: config.RATE_LIMIT_RPM, gt=0)
    max_attempts: int = Field(default=3, ge=1)
    backoff_base_s: float = Field(default=1.0, ge=0)
    timeout_s: float = Field(default_factory=lambda: config.HTTP_TIMEOUT_S)
    transcript_path: Optional[str] = None
    # Backend whose recorded traffic a replay run answers from
    replay_backend: Optional[Backend] = None


class ProviderRequest(BaseModel):
    model_config = ConfigDict(frozen=True)

    backend: Backend
    model: str
    prompt: str
    temperature: Optional[float] = None
    max_output_tokens: Optional[int] = None
    safety_mode: SafetyMode = SafetyMode.default

    @field_validator('prompt')
    @classmethod
    def _prompt_non_empty(cls, value):
        if not value:
            raise ValueError('prompt must be non-empty')
        return value

    @property
    def request_hash(self):
        """sha256 of the canonical JSON of every field; stable across processes and platforms."""
        return sha256_text(canonical_json(self.model_dump(mode='json')))


class ProviderResponse(BaseModel):
    model_config = ConfigDict(frozen=True)

    raw_text: str
    request_hash: str
    latency_ms: int
    usage: Optional[dict[str, int]] = None


class TokenBucket:
    """Refills at requests_per_minute / 60 tokens per second, capacity one: calls are spaced evenly."""

    def __init__(self, requests_per_minute, capacity=1.0):
        self.rate = requests_per_minute / 60.0
        self.capacity = capacity
        self._tokens = capacity
        self._last = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self):
        while True:
            with self._lock:
                now = time.monotonic()
                self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
                self._last = now
                if self._tokens >= 1:
                    self._tokens -= 1
                    return
                wait = (1 - self._tokens) / self.rate
            time.sleep(wait)


_limiters = {}
_limiters_lock = threading.Lock()


def get_rate_limiter(backend, requests_per_minute):
    """One shared bucket per (backend, rate); None disables limiting."""
    if not requests_per_minute:
        return None
    key = (Backend(backend).value, float(requests_per_minute))
    with _limiters_lock:
        if key not in _limiters:
            _limiters[key] = TokenBucket(requests_per_minute)
        return _limiters[key]


# httpx.Client is thread-safe: worker threads share one client per timeout
_http_clients = {}
_http_clients_lock = threading.Lock()


def _get_http_client(timeout_s):
    with _http_clients_lock:
        client = _http_clients.get(timeout_s)
        if client is None or client.is_closed:
            client = httpx.Client(timeout=timeout_s)
            _http_clients[timeout_s] = client
        return client


def close_http_clients():
    """Close the shared clients; the next call opens a fresh one."""
    with _http_clients_lock:
        for client in _http_clients.values():
            client.close()
        _http_clients.clear()


def _openai_call(req, settings):
    payload = {'model': req.model, 'messages': [{'role': 'user', 'content': req.prompt}]}
    if req.temperature is not None:
        payload['temperature'] = req.temperature
    if req.max_output_tokens is not None:
        payload['max_tokens'] = req.max_output_tokens
    url = f"{(settings.base_url or config.OPENAI_BASE_URL).rstrip('/')}/chat/completions"
    headers = {'Authorization': f"Bearer {config.OPENAI_API_KEY}", 'Content-Type': 'application/json'}

    def extract(body):
        text = body['choices'][0]['message']['content'] or ''
        usage = body.get('usage') or {}
        return text, {k: usage[k] for k in ('prompt_tokens', 'completion_tokens') if k in usage} or None

    return url, headers, payload, extract


def _anthropic_call(req, settings):
    payload = {
        'model': req.model,
        'max_tokens': req.max_output_tokens or ANTHROPIC_DEFAULT_MAX_TOKENS,
        'messages': [{'role': 'user', 'content': req.prompt}],
    }
    if req.temperature is not None:
        payload['temperature'] = req.temperature
    url = f"{(settings.base_url or config.ANTHROPIC_BASE_URL).rstrip('/')}/messages"
    headers = {
        'x-api-key': config.ANTHROPIC_API_KEY or '',
        'anthropic-version': config.ANTHROPIC_VERSION,
        'Content-Type': 'application/json',
    }

    def extract(body):
        text = ''.join(block.get('text', '') for block in body.get('content', []) if block.get('type') == 'text')
        usage = body.get('usage') or {}
        return text, {k: usage[k] for k in ('input_tokens', 'output_tokens') if k in usage} or None

    return url, headers, payload, extract


def gemini_payload(req):
    payload = {'contents': [{'role': 'user', 'parts': [{'text': req.prompt}]}]}
    generation_config = {}
    if req.temperature is not None:
        generation_config['temperature'] = req.temperature
    if req.max_output_tokens is not None:
        generation_config['maxOutputTokens'] = req.max_output_tokens
    if generation_config:
        payload['generationConfig'] = generation_config
    if req.safety_mode == SafetyMode.block_none:
        payload['safetySettings'] = [
            {'category': category, 'threshold': 'BLOCK_NONE'} for category in GEMINI_SAFETY_CATEGORIES
        ]
    return payload


def _gemini_call(req, settings):
    url = f"{(settings.base_url or config.GEMINI_BASE_URL).rstrip('/')}/models/{req.model}:generateContent"
    headers = {'x-goog-api-key': config.GEMINI_API_KEY or '', 'Content-Type': 'application/json'}

    def extract(body):
        candidates = body.get('candidates') or []
        if not candidates:
            raise ProviderError(f"Gemini returned no candidates: {body.get('promptFeedback')}")
        parts = candidates[0].get('content', {}).get('parts', [])
        usage = body.get('usageMetadata') or {}
        counts = {k: usage[k] for k in ('promptTokenCount', 'candidatesTokenCount') if k in usage}
        return ''.join(part.get('text', '') for part in parts), counts or None

    return url, headers, gemini_payload(req), extract


_ADAPTERS = {
    Backend.openai_compatible: _openai_call,
    Backend.anthropic: _anthropic_call,
    Backend.gemini: _gemini_call,
}


def _post(client, url, headers, payload, timeout_s):
    """One HTTP attempt, with failures sorted into retryable and final errors."""
    try:
        response = client.post(url, headers=headers, json=payload, timeout=timeout_s)
    except httpx.TimeoutException as e:
        raise ProviderTimeoutError(f"Timeout calling {url}: {e}")
    except httpx.TransportError as e:
        raise TransientProviderError(f"Connection error calling {url}: {e}")

    status = response.status_code
    if status in (401, 403):
        raise ProviderAuthError(f"Authentication failed ({status}) for {url}")
    if status == 429:
        raise RateLimitError(f"Rate limited (429) by {url}")
    if status >= 500:
        raise TransientProviderError(f"Server error ({status}) from {url}")
    if status >= 400:
        raise ProviderError(f"Request rejected ({status}) by {url}: {response.text[:200]}")
    try:
        return response.json()
    except ValueError:
        raise ProviderError(f"Response from {url} is not JSON ({status}): {response.text[:200]!r}")


class LLMProvider:
    """
    The "model M" every engine and eval operation calls.

    Live backends go over HTTP; backend=replay answers from the transcript
    store; record=True wraps a live backend and persists every exchange.
    """

    def __init__(self, settings, store=None, record=False, http_client=None):
        self.settings = settings
        self.store = store
        self.record = record
        self._http_client = http_client
        if settings.backend == Backend.replay:
            if record:
                raise ProviderError("Cannot record with the replay backend selected")
            if store is None:
                raise ProviderError("Replay backend needs a transcript store")
        if record and store is None:
            raise ProviderError("Record mode needs a transcript store")
        self._limiter = None
        if settings.backend != Backend.replay:
            self._limiter = get_rate_limiter(settings.backend, settings.requests_per_minute)

    @property
    def mode(self):
        if self.settings.backend == Backend.replay:
            return 'replay'
        return 'record' if self.record else 'live'

    def build_request(self, prompt):
        settings = self.settings
        backend = settings.backend
        if backend == Backend.replay and settings.replay_backend:
            backend = settings.replay_backend
        return ProviderRequest(
            backend=backend,
            model=settings.model,
            prompt=prompt,
            temperature=settings.temperature,
            max_output_tokens=settings.max_output_tokens,
            safety_mode=settings.safety_mode,
        )

    def complete(self, req):
        if self.settings.backend == Backend.replay:
            return self.store.lookup(req.request_hash)

        backend = Backend(self.settings.backend)
        try:
            config.validate_provider_config(backend.value)
        except ValueError as e:
            raise ProviderAuthError(str(e))

        url, headers, payload, extract = _ADAPTERS[backend](req, self.settings)
        client = self._http_client or _get_http_client(self.settings.timeout_s)

        def attempt():
            if self._limiter is not None:
                self._limiter.acquire()
            return _post(client, url, headers, payload, self.settings.timeout_s)

        retrying = Retrying(
            stop=stop_after_attempt(self.settings.max_attempts),
            wait=wait_exponential(multiplier=self.settings.backoff_base_s, max=60),
            retry=retry_if_exception_type(TransientProviderError),
            before_sleep=lambda state: logger.warning(
                f"⚠ {backend.value} attempt {state.attempt_number} failed "
                f"({state.outcome.exception()}); retrying"
            ),
            reraise=True,
        )

        _t0 = time.perf_counter()
        body = retrying(attempt)
        latency_ms = int((time.perf_counter() - _t0) * 1000)
        try:
            text, usage = extract(body)
        except (KeyError, IndexError, TypeError, AttributeError) as e:
            raise ProviderError(f"Unexpected {backend.value} response shape: {e}")

        response = ProviderResponse(raw_text=text, request_hash=req.request_hash, latency_ms=latency_ms, usage=usage)
        logger.debug(f"[perf] {backend.value}/{req.model} → {len(text)} chars in {latency_ms} ms")
        if self.record:
            self.store.record(req, response)
        return response
