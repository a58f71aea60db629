import httpx
import pytest

from conftest import full_copy, head_summary, make_doc, qa_reply, summary_reply
from components.config import Config
from components.data.corpus_utils import Dataset
from components.engine import prompts
from components.engine.run_config import StopThresholds
from components.engine.training import StopReason, call_structured, train
from components.engine.workers import RunAbortedError
from components.experience.experience_store import init, replay_history, update
from components.metrics.text_metrics import build_idf, compression_rate, cosine_similarity, flesch, unseen_idf
from components.provider.llm_utils import Backend, LLMProvider, ProviderAuthError, ProviderError, ProviderSettings
from components.provider.parsing import OutputShape


def _one_doc(qa_dataset):
    return Dataset(name='one', kind='qa', documents=qa_dataset.documents[:1])


def test_thresholds_met_on_first_iteration(qa_dataset, run_config, scripted):
    provider = scripted([qa_reply(), summary_reply(head_summary('a'))])
    es, traces = train(_one_doc(qa_dataset), run_config, provider)

    assert len(traces) == 1
    assert traces[0].k == 1
    assert traces[0].stopped
    assert traces[0].stop_reason == StopReason.thresholds_met
    assert es.revision == 2


def test_never_met_runs_exactly_k_iterations(qa_dataset, run_config, scripted):
    provider = scripted([qa_reply()] + [summary_reply(full_copy('a'))] * 3)
    es, traces = train(_one_doc(qa_dataset), run_config, provider)

    assert [t.k for t in traces] == [1, 2, 3]
    assert [t.stopped for t in traces] == [False, False, True]
    assert traces[-1].stop_reason == StopReason.k_exhausted
    assert es.revision == 4


def test_landing_exactly_on_threshold_does_not_stop(qa_dataset, run_config, scripted):
    # 10 of 100 words: compression is exactly 0.1
    cfg = run_config.model_copy(update={'thresholds': StopThresholds(s_min=0.0, r_min=-1000.0, c_max=0.1, k_max=2)})
    provider = scripted([qa_reply()] + [summary_reply(head_summary('a'))] * 2)
    _, traces = train(_one_doc(qa_dataset), cfg, provider)

    assert traces[0].c_i == 0.1
    assert len(traces) == 2
    assert traces[-1].stop_reason == StopReason.k_exhausted


def test_wordless_candidate_is_unmet_and_loop_continues(qa_dataset, run_config, scripted):
    provider = scripted([qa_reply(), summary_reply(''), summary_reply('?!'), summary_reply(head_summary('a'))])
    es, traces = train(_one_doc(qa_dataset), run_config, provider)

    assert [t.k for t in traces] == [1, 2, 3]
    assert [t.r_i for t in traces[:2]] == [None, None]
    assert [t.s_i for t in traces[:2]] == [0.0, 0.0]
    assert not any(t.stopped for t in traces[:2])
    assert traces[-1].stop_reason == StopReason.thresholds_met
    assert len(provider.prompts) == 4
    assert es.revision == 4


def test_k_one_generates_once_regardless_of_scores(qa_dataset, run_config, scripted):
    cfg = run_config.model_copy(update={'thresholds': StopThresholds(k_max=1)})
    provider = scripted([qa_reply(), summary_reply(full_copy('a'))])
    _, traces = train(_one_doc(qa_dataset), cfg, provider)

    assert len(traces) == 1
    assert traces[0].stop_reason == StopReason.k_exhausted


def test_two_documents_revision_arithmetic_and_history(qa_dataset, run_config, scripted):
    provider = scripted([
        qa_reply('1. qa after d1'),
        summary_reply(full_copy('a'), '1. sum d1 k1'),
        summary_reply(head_summary('a'), '1. sum d1 k2'),
        qa_reply('1. qa after d2'),
        summary_reply(full_copy('b'), '1. sum d2 k1'),
        summary_reply(full_copy('b'), '1. sum d2 k2'),
        summary_reply(head_summary('b'), '1. sum d2 k3'),
    ])
    es, traces = train(qa_dataset, run_config, provider)

    assert [(t.doc_id, t.k) for t in traces] == [('d1', 1), ('d1', 2), ('d2', 1), ('d2', 2), ('d2', 3)]
    assert es.revision == 7
    assert [h.kind.value for h in es.history] == ['qa', 'sum', 'sum', 'qa', 'sum', 'sum', 'sum']
    assert es.exp_qa == '1. qa after d2'
    assert es.exp_sum == '1. sum d2 k3'
    assert replay_history(es.history) == es


def test_experience_flows_into_later_prompts(qa_dataset, run_config, scripted):
    provider = scripted([
        qa_reply('1. learned qa rule'),
        summary_reply(head_summary('a'), '1. learned sum rule'),
        qa_reply('1. second qa rule'),
        summary_reply(head_summary('b'), '1. second sum rule'),
    ])
    train(qa_dataset, run_config, provider)

    first_qa, first_sum, second_qa, second_sum = provider.prompts
    assert first_qa.rstrip().endswith('QA Generation Experience:')
    assert '1. learned qa rule' in first_sum
    assert 'Generated QA Pairs: {' in first_sum
    assert 'QA Generation Experience: 1. learned qa rule' in second_qa
    assert 'Summary Generation Experience: 1. learned sum rule' in second_sum


def test_stop_reason_matches_recomputed_predicate(qa_dataset, run_config, scripted):
    provider = scripted([qa_reply(), summary_reply(full_copy('a')), summary_reply(head_summary('a'))])
    _, traces = train(_one_doc(qa_dataset), run_config, provider)

    texts = [d.text for d in _one_doc(qa_dataset).documents]
    idf = build_idf(texts)
    source = texts[0]
    for row in traces:
        s = cosine_similarity(row.summary_candidate, source, idf, unseen_idf(1))
        r = flesch(row.summary_candidate).score
        c = compression_rate(row.summary_candidate, source)
        assert (row.s_i, row.r_i, row.c_i) == (s, r, c)
        assert (row.stop_reason == StopReason.thresholds_met) == run_config.thresholds.met(s, r, c)


def test_generated_qa_recorded_on_first_row_only(qa_dataset, run_config, scripted):
    provider = scripted([
        qa_reply(pairs=(('Q1?', 'A1.'), ('Q2?', 'A2.'))),
        summary_reply(full_copy('a')),
        summary_reply(head_summary('a')),
    ])
    _, traces = train(_one_doc(qa_dataset), run_config, provider)

    assert [p.question for p in traces[0].generated_qa] == ['Q1?', 'Q2?']
    assert traces[1].generated_qa is None


def test_parse_failure_reprompts_once(qa_dataset, run_config, scripted):
    provider = scripted(['I cannot answer in JSON today.', qa_reply(), summary_reply(head_summary('a'))])
    _, traces = train(_one_doc(qa_dataset), run_config, provider)

    assert provider.prompts[1].endswith(prompts.REPROMPT_SUFFIX)
    assert traces[-1].stop_reason == StopReason.thresholds_met


def test_call_structured_gives_up_after_second_failure(scripted):
    provider = scripted(['nope', 'still nope'])
    with pytest.raises(ValueError):
        call_structured(provider, 'prompt', OutputShape.qa_output)


def test_failed_document_is_recorded_and_run_continues(qa_dataset, run_config, scripted):
    cfg = run_config.model_copy(update={'failure_threshold': 0.5})
    provider = scripted([
        ProviderError('upstream exploded'),
        qa_reply(),
        summary_reply(head_summary('b')),
    ])
    es, traces = train(qa_dataset, cfg, provider)

    assert traces[0].doc_id == 'd1'
    assert traces[0].stop_reason == StopReason.failed
    assert 'upstream exploded' in traces[0].error
    assert traces[-1].stop_reason == StopReason.thresholds_met
    assert es.revision == 2


def test_non_json_http_reply_fails_the_document_not_the_run(qa_dataset, run_config, monkeypatch):
    monkeypatch.setattr(Config, 'OPENAI_API_KEY', 'sk-test')
    client = httpx.Client(transport=httpx.MockTransport(lambda request: httpx.Response(200, text='<html>proxy</html>')))
    settings = ProviderSettings(backend=Backend.openai_compatible, requests_per_minute=None, backoff_base_s=0)
    cfg = run_config.model_copy(update={'failure_threshold': 1.0})

    es, traces = train(qa_dataset, cfg, LLMProvider(settings, http_client=client))

    assert [t.stop_reason for t in traces] == [StopReason.failed, StopReason.failed]
    assert 'not JSON' in traces[0].error
    assert es == init()


def test_failures_above_threshold_abort_with_partial_results(qa_dataset, run_config, scripted):
    provider = scripted([ProviderError('down')])
    with pytest.raises(RunAbortedError) as excinfo:
        train(qa_dataset, run_config, provider)

    es, traces = excinfo.value.partial
    assert es == init()
    assert traces[0].stop_reason == StopReason.failed


def test_auth_error_propagates(qa_dataset, run_config, scripted):
    provider = scripted([ProviderAuthError('bad key')])
    with pytest.raises(ProviderAuthError):
        train(qa_dataset, run_config, provider)


def test_training_needs_qa_dataset(run_config, scripted):
    ds = Dataset(name='sum', kind='summarization', documents=[make_doc('s1', summary='gold', qa=())])
    with pytest.raises(ValueError):
        train(ds, run_config, scripted())


def test_continues_from_given_experiences(qa_dataset, run_config, scripted):
    start = update(update(init(), 'qa', '1. prior qa rule', 'seed'), 'sum', '1. prior sum rule', 'seed')
    provider = scripted([qa_reply('1. new'), summary_reply(head_summary('a'))])
    es, _ = train(_one_doc(qa_dataset), run_config, provider, experiences=start)

    assert 'QA Generation Experience: 1. prior qa rule' in provider.prompts[0]
    assert 'Summary Generation Experience: 1. prior sum rule' in provider.prompts[1]
    assert es.revision == 4
    assert es.history[:2] == start.history
