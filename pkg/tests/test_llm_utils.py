import json

import httpx
import pytest
from pydantic import ValidationError

from components.config import Config
from components.provider import llm_utils
from components.provider.llm_utils import (
    GEMINI_SAFETY_CATEGORIES,
    Backend,
    LLMProvider,
    ProviderAuthError,
    ProviderError,
    ProviderRequest,
    ProviderResponse,
    ProviderSettings,
    RateLimitError,
    ReplayMissError,
    TokenBucket,
    close_http_clients,
    gemini_payload,
    get_rate_limiter,
)
from components.provider.transcript_store import TranscriptStore


def _settings(backend, **kwargs):
    return ProviderSettings(backend=backend, model='m', requests_per_minute=None, backoff_base_s=0, **kwargs)


def _client(handler):
    return httpx.Client(transport=httpx.MockTransport(handler))


@pytest.fixture
def credentials(monkeypatch):
    monkeypatch.setattr(Config, 'OPENAI_API_KEY', 'sk-test')
    monkeypatch.setattr(Config, 'ANTHROPIC_API_KEY', 'ak-test')
    monkeypatch.setattr(Config, 'GEMINI_API_KEY', 'gk-test')


def test_request_hash_is_stable_and_content_sensitive():
    a = ProviderRequest(backend='openai_compatible', model='gpt-4o', prompt='Summarize this.')
    b = ProviderRequest(backend='openai_compatible', model='gpt-4o', prompt='Summarize this.')
    c = ProviderRequest(backend='openai_compatible', model='gpt-4o', prompt='Summarize this. ')
    assert a.request_hash == b.request_hash
    assert a.request_hash != c.request_hash
    assert len(a.request_hash) == 64


def test_empty_prompt_is_rejected():
    with pytest.raises(ValueError):
        ProviderRequest(backend='replay', model='m', prompt='')


def test_openai_call_leaves_temperature_out_by_default(credentials):
    seen = {}

    def handler(request):
        seen['url'] = str(request.url)
        seen['auth'] = request.headers['authorization']
        seen['body'] = json.loads(request.content)
        return httpx.Response(200, json={'choices': [{'message': {'content': 'hello'}}], 'usage': {'prompt_tokens': 3}})

    provider = LLMProvider(_settings(Backend.openai_compatible), http_client=_client(handler))
    response = provider.complete(provider.build_request('Say hello.'))

    assert response.raw_text == 'hello'
    assert response.usage == {'prompt_tokens': 3}
    assert seen['url'].endswith('/chat/completions')
    assert seen['auth'] == 'Bearer sk-test'
    assert 'temperature' not in seen['body']
    assert seen['body']['messages'] == [{'role': 'user', 'content': 'Say hello.'}]


def test_anthropic_call(credentials):
    def handler(request):
        assert request.headers['x-api-key'] == 'ak-test'
        body = json.loads(request.content)
        assert body['max_tokens'] == 4096
        return httpx.Response(200, json={'content': [{'type': 'text', 'text': 'hi'}], 'usage': {'input_tokens': 2}})

    provider = LLMProvider(_settings(Backend.anthropic), http_client=_client(handler))
    assert provider.complete(provider.build_request('x')).raw_text == 'hi'


def test_gemini_block_none_carries_four_categories(credentials):
    def handler(request):
        body = json.loads(request.content)
        assert body['safetySettings'] == [{'category': c, 'threshold': 'BLOCK_NONE'} for c in GEMINI_SAFETY_CATEGORIES]
        assert request.url.path.endswith('/models/m:generateContent')
        return httpx.Response(200, json={'candidates': [{'content': {'parts': [{'text': 'ok'}]}}]})

    provider = LLMProvider(_settings(Backend.gemini, safety_mode='block_none'), http_client=_client(handler))
    assert provider.complete(provider.build_request('x')).raw_text == 'ok'


def test_gemini_default_safety_sends_no_settings():
    req = ProviderRequest(backend='gemini', model='m', prompt='x')
    assert 'safetySettings' not in gemini_payload(req)
    assert set(GEMINI_SAFETY_CATEGORIES) == {
        'HARM_CATEGORY_HARASSMENT', 'HARM_CATEGORY_HATE_SPEECH',
        'HARM_CATEGORY_SEXUALLY_EXPLICIT', 'HARM_CATEGORY_DANGEROUS_CONTENT',
    }


def test_invalid_key_is_an_auth_error_without_retries(credentials):
    calls = []

    def handler(request):
        calls.append(request)
        return httpx.Response(401, json={'error': 'bad key'})

    provider = LLMProvider(_settings(Backend.openai_compatible), http_client=_client(handler))
    with pytest.raises(ProviderAuthError):
        provider.complete(provider.build_request('x'))
    assert len(calls) == 1


def test_missing_credentials_is_an_auth_error(monkeypatch):
    monkeypatch.setattr(Config, 'ANTHROPIC_API_KEY', None)
    provider = LLMProvider(_settings(Backend.anthropic), http_client=_client(lambda r: httpx.Response(200)))
    with pytest.raises(ProviderAuthError, match='ANTHROPIC_API_KEY'):
        provider.complete(provider.build_request('x'))


def test_transient_errors_are_retried_then_succeed(credentials):
    statuses = iter([503, 500, 200])

    def handler(request):
        status = next(statuses)
        if status != 200:
            return httpx.Response(status)
        return httpx.Response(200, json={'choices': [{'message': {'content': 'third time'}}]})

    provider = LLMProvider(_settings(Backend.openai_compatible), http_client=_client(handler))
    assert provider.complete(provider.build_request('x')).raw_text == 'third time'


def test_rate_limit_exhaustion_raises_after_max_attempts(credentials):
    calls = []

    def handler(request):
        calls.append(request)
        return httpx.Response(429)

    provider = LLMProvider(_settings(Backend.openai_compatible, max_attempts=2), http_client=_client(handler))
    with pytest.raises(RateLimitError):
        provider.complete(provider.build_request('x'))
    assert len(calls) == 2


def test_client_error_is_not_retried(credentials):
    calls = []

    def handler(request):
        calls.append(request)
        return httpx.Response(400, text='bad request')

    provider = LLMProvider(_settings(Backend.openai_compatible), http_client=_client(handler))
    with pytest.raises(ProviderError):
        provider.complete(provider.build_request('x'))
    assert len(calls) == 1


def test_replay_returns_recorded_response(tmp_path):
    store = TranscriptStore(str(tmp_path / 't.jsonl'))
    provider = LLMProvider(_settings(Backend.replay), store=store)
    req = provider.build_request('Summarize.')
    store.record(req, ProviderResponse(raw_text='recorded', request_hash=req.request_hash, latency_ms=5))

    assert provider.complete(req).raw_text == 'recorded'
    with pytest.raises(ReplayMissError) as excinfo:
        provider.complete(provider.build_request('Summarize!'))
    assert excinfo.value.request_hash in str(excinfo.value)


def test_record_then_replay_with_replay_backend_hashes(credentials, tmp_path):
    def handler(request):
        return httpx.Response(200, json={'choices': [{'message': {'content': 'live answer'}}]})

    path = str(tmp_path / 't.jsonl')
    recorder = LLMProvider(_settings(Backend.openai_compatible), store=TranscriptStore(path), record=True,
                           http_client=_client(handler))
    recorder.complete(recorder.build_request('Question?'))

    replayer = LLMProvider(_settings(Backend.replay, replay_backend='openai_compatible'), store=TranscriptStore(path))
    assert replayer.complete(replayer.build_request('Question?')).raw_text == 'live answer'
    assert replayer.mode == 'replay' and recorder.mode == 'record'


def test_contradictory_modes_are_refused(tmp_path):
    store = TranscriptStore(str(tmp_path / 't.jsonl'))
    with pytest.raises(ProviderError):
        LLMProvider(_settings(Backend.replay), store=store, record=True)
    with pytest.raises(ProviderError):
        LLMProvider(_settings(Backend.replay))
    with pytest.raises(ProviderError):
        LLMProvider(_settings(Backend.openai_compatible), record=True)


def test_non_json_body_is_a_provider_error_without_retries(credentials):
    calls = []

    def handler(request):
        calls.append(request)
        return httpx.Response(200, text='<html>proxy</html>')

    provider = LLMProvider(_settings(Backend.openai_compatible), http_client=_client(handler))
    with pytest.raises(ProviderError, match='not JSON'):
        provider.complete(provider.build_request('x'))
    assert len(calls) == 1


def test_json_body_of_the_wrong_shape(credentials):
    provider = LLMProvider(_settings(Backend.anthropic), http_client=_client(lambda r: httpx.Response(200, json=[1, 2])))
    with pytest.raises(ProviderError, match='response shape'):
        provider.complete(provider.build_request('x'))


class FakeClock:
    def __init__(self):
        self.now = 0.0
        self.sleeps = []

    def monotonic(self):
        return self.now

    def sleep(self, seconds):
        assert seconds >= 0
        self.sleeps.append(seconds)
        self.now += seconds


def test_token_bucket_spaces_calls_at_sixty_over_rpm(monkeypatch):
    clock = FakeClock()
    monkeypatch.setattr(llm_utils, 'time', clock)
    bucket = TokenBucket(120)

    stamps = []
    for _ in range(5):
        bucket.acquire()
        stamps.append(clock.now)

    assert stamps == pytest.approx([0.0, 0.5, 1.0, 1.5, 2.0])


def test_token_bucket_refills_while_idle(monkeypatch):
    clock = FakeClock()
    monkeypatch.setattr(llm_utils, 'time', clock)
    bucket = TokenBucket(60)
    bucket.acquire()
    clock.now = 5.0
    bucket.acquire()
    assert clock.sleeps == []


def test_rate_limiter_is_shared_per_backend_and_rate():
    first = get_rate_limiter('gemini', 30)
    assert get_rate_limiter(Backend.gemini, 30.0) is first
    assert get_rate_limiter('anthropic', 30) is not first
    assert get_rate_limiter('gemini', None) is None


@pytest.mark.parametrize('rpm', [0, -5])
def test_non_positive_rate_is_rejected(rpm):
    with pytest.raises(ValidationError, match='requests_per_minute'):
        ProviderSettings(backend='openai_compatible', requests_per_minute=rpm)


def test_shared_http_client_is_reopened_after_close():
    first = llm_utils._get_http_client(7.0)
    assert llm_utils._get_http_client(7.0) is first
    close_http_clients()
    assert first.is_closed
    second = llm_utils._get_http_client(7.0)
    assert second is not first and not second.is_closed
    close_http_clients()
