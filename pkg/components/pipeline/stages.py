#!/usr/bin/env python3
"""
Pipeline Stages Module

Wires config -> corpus -> engine -> eval into the stages the command line exposes.
Every stage reads and writes under <out>/<run_id>/<stage>/ and leaves a manifest.

Key Components:
- run_ingest: validated dataset caches (train.jsonl / test.jsonl) and rejection reports
- run_train: learned experience.json and per-iteration traces.jsonl
- run_test / run_baseline: summaries.jsonl, raw_outputs.jsonl, failures.jsonl
- run_eval: per-document scores, metric reports and the w/o | T3 table for this run
- run_report: models x datasets table, improvement rates and ablation table across runs
- run_record: any of train/run/baseline/eval with every provider exchange persisted

Usage:
    from components.pipeline import stages
    cfg = load_run_config('configs/bbc.toml')
    stages.run_ingest(cfg)
    stages.run_train(cfg)
"""

import os

from components.data.corpus_utils import (
    DatasetError,
    DatasetKind,
    filter_long,
    load_dataset,
    sample_documents,
    split_train_test,
    write_dataset,
)
from components.data.data_store_utils import MissingArtifactError, get_run_store
from components.engine import inference, prompts, training
from components.engine.run_config import Ablation, Mode
from components.engine.workers import RunAbortedError, run_documents
from components.eval import report_utils, scoring
from components.experience import experience_store
from components.logging_utils import get_logger
from components.provider.llm_utils import Backend, LLMProvider, ProviderError
from components.provider.transcript_store import TranscriptStore

logger = get_logger(__name__)

INGEST, TRAIN, RUN, BASELINE, EVAL, REPORT = 'ingest', 'train', 'run', 'baseline', 'eval', 'report'
RECORDABLE_STAGES = (TRAIN, RUN, BASELINE, EVAL)

_INGEST_HINT = "run the ingest stage first"


def _store(cfg):
    return get_run_store(cfg.output_dir, cfg.run_id)


def transcript_path(cfg, settings=None):
    settings = settings or cfg.provider
    return settings.transcript_path or _store(cfg).path('', 'transcripts.jsonl')


def build_provider(cfg, record=False, http_client=None, settings=None):
    """
    Provider for a run: live, record (live + transcript) or replay (transcript only).

    Replay needs an existing transcript; recording with the replay backend is refused.
    """
    settings = settings or cfg.provider
    store = None
    if settings.backend == Backend.replay or record:
        path = transcript_path(cfg, settings)
        if settings.backend == Backend.replay and not record and not os.path.exists(path):
            raise MissingArtifactError(f"Missing transcript {path}: record the run first or set provider.transcript_path")
        store = TranscriptStore(path)
    return LLMProvider(settings, store=store, record=record, http_client=http_client)


# ---------------------------------------------------------------- ingest

def _load_spec(spec):
    ds = load_dataset(spec.path, spec.kind, name=spec.label, style=spec.style, adapter=spec.adapter)
    return filter_long(ds, spec.min_words)


def run_ingest(cfg):
    """Validate the configured datasets and write the canonical caches the later stages read."""
    if cfg.train_dataset is None and cfg.test_dataset is None:
        raise DatasetError("No train_dataset or test_dataset in the run config")
    store = _store(cfg)
    counts = {}

    train_set = test_set = None
    same_file = (
        cfg.train_dataset is not None and cfg.test_dataset is not None
        and os.path.abspath(cfg.train_dataset.path) == os.path.abspath(cfg.test_dataset.path)
    )
    if same_file:
        if cfg.n_train is None:
            raise DatasetError("train_dataset and test_dataset share a file: set n_train to split it")
        train_set, test_set = split_train_test(_load_spec(cfg.train_dataset), cfg.n_train, cfg.seed)
    else:
        if cfg.train_dataset is not None:
            train_set = _load_spec(cfg.train_dataset)
            if cfg.n_train is not None:
                train_set = sample_documents(train_set, cfg.n_train, cfg.seed)
        if cfg.test_dataset is not None:
            test_set = _load_spec(cfg.test_dataset)

    if test_set is not None and cfg.test_dataset.sample_size:
        test_set = sample_documents(test_set, cfg.test_dataset.sample_size, cfg.seed)

    for split, ds in (('train', train_set), ('test', test_set)):
        if ds is None:
            continue
        if not len(ds):
            raise DatasetError(f"No {split} documents left in {ds.name} after filtering")
        write_dataset(ds, store.path(INGEST, f"{split}.jsonl"))
        counts[split] = len(ds)
        logger.info(f"✓ {split}: {len(ds)} documents from {ds.name}")

    store.write_manifest(INGEST, cfg, 'none', extra={'counts': counts})
    return counts


def _cached_dataset(cfg, split):
    spec = cfg.train_dataset if split == 'train' else cfg.test_dataset
    if spec is None:
        raise DatasetError(f"No {split}_dataset in the run config")
    path = _store(cfg).require(INGEST, f"{split}.jsonl", _INGEST_HINT)
    return load_dataset(path, spec.kind, name=spec.label, style=spec.style)


# ---------------------------------------------------------------- train

def run_train(cfg, provider=None):
    store = _store(cfg)
    provider = provider or build_provider(cfg)
    train_set = _cached_dataset(cfg, 'train')
    logger.info(f"Training on {len(train_set)} documents, {cfg.thresholds.describe()}, provider {provider.mode}")

    aborted = None
    try:
        es, traces = training.train(train_set, cfg, provider)
    except RunAbortedError as e:
        es, traces = e.partial
        aborted = e

    experience_store.persist(es, store.path(TRAIN, 'experience.json'))
    store.write_jsonl(TRAIN, 'traces.jsonl', traces)
    store.write_manifest(
        TRAIN, cfg, provider.mode,
        template_paths=[prompts.load_template(n, cfg.templates_dir).path for n in (prompts.TRAIN_QA, prompts.TRAIN_SUMMARY)],
        experience_revision=es.revision,
        extra={'aborted': aborted is not None},
    )
    if aborted is not None:
        raise aborted
    return es, traces


# ---------------------------------------------------------------- test / baseline

def _test_mode(cfg, test_set):
    if cfg.mode in (Mode.test_summarization, Mode.test_qa):
        return cfg.mode
    return Mode.test_qa if test_set.kind == DatasetKind.qa else Mode.test_summarization


def load_run_experiences(cfg, published_style=None):
    """Experiences for a test run: the shipped set for a style, or this run's trained file."""
    if published_style:
        return experience_store.load_published(published_style), f"published:{published_style}"
    store = _store(cfg)
    path = store.path(TRAIN, 'experience.json')
    if not os.path.exists(path):
        raise MissingArtifactError(
            f"Missing artifact {path}: run the train stage first or pass --use-published-experience {{news|narrative}}"
        )
    return experience_store.load(path), path


def _write_outputs(store, stage, results, failures):
    store.write_jsonl(stage, 'summaries.jsonl', [{'doc_id': out.doc_id, 'summary': out.summary} for _, out in results])
    store.write_jsonl(stage, 'raw_outputs.jsonl', [{'doc_id': out.doc_id, 'raw_text': out.raw_text} for _, out in results])
    store.write_jsonl(stage, 'failures.jsonl', failures)


def _fan_out(cfg, store, stage, test_set, fn):
    try:
        results, failures = run_documents(test_set.documents, fn, cfg.workers, cfg.failure_threshold, label=stage)
    except RunAbortedError as e:
        _write_outputs(store, stage, *e.partial)
        raise
    _write_outputs(store, stage, results, failures)
    return results, failures


def run_test(cfg, provider=None, published_style=None, ablation=None):
    """Zero-shot test phase over the cached test set with a read-only experience snapshot."""
    store = _store(cfg)
    if ablation is not None:
        cfg = cfg.model_copy(update={'ablation': Ablation(ablation)})
    test_set = _cached_dataset(cfg, 'test')
    es, source = load_run_experiences(cfg, published_style)
    es = experience_store.snapshot(es)
    cfg = cfg.model_copy(update={'mode': _test_mode(cfg, test_set)})
    provider = provider or build_provider(cfg)

    template_name = prompts.TEST_QA if cfg.mode == Mode.test_qa else prompts.TEST_SUMMARIZATION
    template = prompts.load_template(template_name, cfg.templates_dir)
    logger.info(f"Test run {cfg.mode.value} ({cfg.ablation.value}) on {len(test_set)} documents, experience revision {es.revision}")

    results, failures = _fan_out(cfg, store, RUN, test_set, lambda doc: inference.generate(doc, es, cfg, provider, template))
    store.write_manifest(
        RUN, cfg, provider.mode, template_paths=[template.path], experience_revision=es.revision,
        extra={'mode': cfg.mode.value, 'ablation': cfg.ablation.value, 'experience_source': source,
               'documents': len(results), 'failed': len(failures)},
    )
    return results, failures


def run_baseline(cfg, provider=None):
    store = _store(cfg)
    test_set = _cached_dataset(cfg, 'test')
    provider = provider or build_provider(cfg)
    template = prompts.load_template(prompts.BASELINE, cfg.templates_dir)
    logger.info(f"Baseline run on {len(test_set)} documents")

    results, failures = _fan_out(
        cfg, store, BASELINE, test_set, lambda doc: inference.baseline_output(doc, provider, template=template),
    )
    store.write_manifest(
        BASELINE, cfg, provider.mode, template_paths=[template.path],
        extra={'documents': len(results), 'failed': len(failures)},
    )
    return results, failures


# ---------------------------------------------------------------- eval / report

def _read_outputs(store, stage):
    hint = f"run the {stage} stage first"
    summaries = {row['doc_id']: row['summary'] for row in store.read_jsonl(stage, 'summaries.jsonl', hint)}
    failed = [row['doc_id'] for row in store.read_jsonl(stage, 'failures.jsonl', hint)]
    return summaries, failed


def _judge_provider(cfg, provider, record, http_client):
    settings = cfg.eval.judge_provider
    if settings is None:
        return provider or build_provider(cfg, record=record, http_client=http_client)
    return build_provider(cfg, record=record, http_client=http_client, settings=settings)


def run_eval(cfg, provider=None, record=False, http_client=None):
    """Score baseline (w/o) and T3 outputs of this run, then compare them."""
    store = _store(cfg)
    test_set = _cached_dataset(cfg, 'test')
    reference_mode = scoring.default_reference_mode(test_set.kind)
    judge = _judge_provider(cfg, provider, record, http_client) if cfg.eval.factscore else None

    reports = {}
    for side, stage in (('baseline', BASELINE), ('t3', RUN)):
        outputs, failed = _read_outputs(store, stage)
        report = scoring.score_run(outputs, test_set, reference_mode, failed=failed,
                                   run_id=f"{cfg.run_id}/{stage}", model_label=cfg.model_label)
        if judge is not None:
            report = scoring.judge_report(report, outputs, test_set, judge, cfg.workers,
                                          cfg.failure_threshold, cfg.templates_dir)
        store.write_jsonl(EVAL, f"scores_{side}.jsonl", report.scores)
        store.write_json(EVAL, f"report_{side}.json", report)
        reports[side] = report

    common = reports['baseline'].doc_ids() & reports['t3'].doc_ids()
    wo = reports['baseline'].with_scores([s for s in reports['baseline'].scores if s.doc_id in common])
    t3 = reports['t3'].with_scores([s for s in reports['t3'].scores if s.doc_id in common])
    table = report_utils.compare_runs(wo, t3, cfg.eval.alpha, cfg.eval.star_rule,
                                      model=cfg.model_label, dataset=test_set.name)
    for fmt, ext in (('markdown', 'md'), ('csv', 'csv'), ('json', 'json')):
        report_utils.render_report(table, fmt, store.path(EVAL, f"table.{ext}"))

    store.write_manifest(
        EVAL, cfg, judge.mode if judge is not None else 'none',
        template_paths=[prompts.load_template(prompts.FACTSCORE_JUDGE, cfg.templates_dir).path] if judge is not None else (),
        extra={'reference_mode': reference_mode.value, 'documents': len(common)},
    )
    return table


def run_report(cfg):
    """Stack the eval tables of several runs and, when configured, build the ablation table."""
    out = get_run_store(cfg.output_dir, cfg.run_id)
    run_ids = cfg.eval.report_runs or [cfg.run_id]
    tables = [
        report_utils.SignificanceTable.model_validate(
            get_run_store(cfg.output_dir, rid).read_json(EVAL, 'table.json', f"run the eval stage for {rid} first")
        )
        for rid in run_ids
    ]
    table = report_utils.combine_tables(tables)
    for fmt, ext in (('markdown', 'md'), ('csv', 'csv'), ('json', 'json')):
        report_utils.render_report(table, fmt, out.path(REPORT, f"table.{ext}"))
    rates = report_utils.improvement_rates(table)
    out.write_json(REPORT, 'improvement.json', rates)
    for metric, rate in rates.items():
        if rate is not None:
            logger.info(f"{report_utils.METRIC_LABELS[metric]}: {rate:+.2f}% average change with T3")

    ablation = None
    if cfg.eval.ablation_runs:
        reports = {
            Ablation(strategy): scoring.MetricReport.model_validate(
                get_run_store(cfg.output_dir, rid).read_json(EVAL, 'report_t3.json', f"run the eval stage for {rid} first")
            )
            for strategy, rid in cfg.eval.ablation_runs.items()
        }
        dataset = next(iter(reports.values())).dataset or ''
        ablation = report_utils.ablation_table(reports, cfg.model_label, dataset)
        for fmt, ext in (('markdown', 'md'), ('csv', 'csv'), ('json', 'json')):
            report_utils.render_report(ablation, fmt, out.path(REPORT, f"ablation.{ext}"))

    out.write_manifest(REPORT, cfg, 'none', extra={'runs': run_ids})
    return table, ablation


def run_record(stage, cfg, http_client=None, published_style=None, ablation=None):
    """Run a provider-backed stage live while persisting every exchange for later replay."""
    if stage not in RECORDABLE_STAGES:
        raise ValueError(f"Cannot record stage '{stage}' (expected one of {', '.join(RECORDABLE_STAGES)})")
    if cfg.provider.backend == Backend.replay:
        raise ProviderError("Cannot record with the replay backend selected; choose a live provider")
    provider = build_provider(cfg, record=True, http_client=http_client)
    if stage == TRAIN:
        result = run_train(cfg, provider)
    elif stage == RUN:
        result = run_test(cfg, provider, published_style, ablation)
    elif stage == BASELINE:
        result = run_baseline(cfg, provider)
    else:
        result = run_eval(cfg, provider, record=True, http_client=http_client)
    logger.info(f"✓ Recorded {len(provider.store)} exchanges to {provider.store.path}")
    return result
