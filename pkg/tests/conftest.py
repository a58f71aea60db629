import json

import httpx
import pytest

from components.data.corpus_utils import Dataset, Document, QaPair
from components.engine.run_config import RunConfig, StopThresholds
from components.provider.llm_utils import Backend, ProviderRequest, ProviderResponse
from components.provider.parsing import ParsedQaOutput, ParsedSummaryOutput, serialize_structured


class ScriptedProvider:
    """Answers calls in order from a script; an item may be a string, an exception or a callable(prompt)."""

    mode = 'scripted'

    def __init__(self, script=()):
        self.script = list(script)
        self.prompts = []

    def build_request(self, prompt):
        return ProviderRequest(backend=Backend.replay, model='scripted', prompt=prompt)

    def complete(self, req):
        self.prompts.append(req.prompt)
        if not self.script:
            raise AssertionError(f"Unscripted call #{len(self.prompts)}")
        item = self.script.pop(0)
        if isinstance(item, BaseException):
            raise item
        text = item(req.prompt) if callable(item) else item
        return ProviderResponse(raw_text=text, request_hash=req.request_hash, latency_ms=0)


def qa_reply(experience='1. Ask about every key point.', pairs=(('Who?', 'Someone.'),)):
    return serialize_structured(ParsedQaOutput(
        qa_pairs=[QaPair(question=q, answer=a) for q, a in pairs], qa_experience=experience,
    ))


def summary_reply(summary, experience='1. Keep it short.'):
    return serialize_structured(ParsedSummaryOutput(summary=summary, summary_experience=experience))


def make_doc(doc_id, n_words=100, prefix='w', summary=None, qa=(('What is it?', 'A list of words.'),)):
    """A one-sentence document of n_words distinct tokens: <prefix>0 <prefix>1 ... ."""
    text = ' '.join(f"{prefix}{i}" for i in range(n_words)) + '.'
    return Document(
        id=doc_id,
        text=text,
        gold_summary=summary,
        gold_qa=[QaPair(question=q, answer=a) for q, a in qa],
    )


def head_summary(prefix='w', n=10):
    """First n tokens of a make_doc document: compression n/100, high readability."""
    return ' '.join(f"{prefix}{i}" for i in range(n)) + '.'


def full_copy(prefix='w'):
    """The whole 100-word document: compression 1.0, never under any c_max below 1."""
    return head_summary(prefix, 100)


@pytest.fixture
def scripted():
    return ScriptedProvider


@pytest.fixture
def qa_dataset():
    return Dataset(name='toy-qa', kind='qa', documents=[make_doc('d1', prefix='a'), make_doc('d2', prefix='b')])


@pytest.fixture
def run_config(tmp_path):
    return RunConfig(
        output_dir=str(tmp_path / 'runs'),
        workers=1,
        thresholds=StopThresholds(s_min=0.1, r_min=30.0, c_max=0.25, k_max=3),
    )


def write_jsonl(path, rows):
    path.write_text(''.join(json.dumps(row) + '\n' for row in rows), encoding='utf-8')
    return path


def _article(prompt):
    marker = 'Article: '
    start = prompt.index(marker) + len(marker)
    return prompt[start:].split('\n', 1)[0]


def fake_chat_handler(request):
    """OpenAI-compatible endpoint answering every prompt type of the pipeline deterministically."""
    prompt = json.loads(request.content)['messages'][0]['content']
    if prompt.startswith('You are a careful fact checker'):
        text = 'Score: 87/100'
    elif '"Generated_QA_pairs"' in prompt:
        words = _article(prompt).split()
        text = qa_reply(f"1. Ask about {words[0]}.", pairs=(("What comes first?", words[0]),))
    elif '"Summary_generation_experience"' in prompt:
        words = _article(prompt).split()
        text = summary_reply(' '.join(words[:10]) + '.', experience=f"1. Start with {words[0]}.")
    elif prompt.startswith('You are one helpful text assistant'):
        words = _article(prompt).split()
        text = ' '.join(words[:20]) + '.'
    else:
        words = _article(prompt).split()
        text = f"QA pairs:\n1. What comes first? {words[0]}\n\nFinal Summary:\n{' '.join(words[:12])}."
    return httpx.Response(200, json={
        'choices': [{'message': {'content': text}}],
        'usage': {'prompt_tokens': len(prompt.split()), 'completion_tokens': len(text.split())},
    })


@pytest.fixture
def fake_chat_client():
    return httpx.Client(transport=httpx.MockTransport(fake_chat_handler))
