#!/usr/bin/env python3
"""
Command-line entry point.

    python app.py ingest   --config configs/bbc.toml
    python app.py train    --config configs/bbc.toml --provider replay
    python app.py run      --config configs/bbc.toml --use-published-experience news
    python app.py baseline --config configs/bbc.toml
    python app.py eval     --config configs/bbc.toml
    python app.py report   --config configs/summary.toml
    python app.py record train --config configs/bbc.toml --provider openai_compatible

Exit codes: 0 success, 1 usage / prerequisite / provider error, 2 run aborted by the
failure threshold.
"""

import argparse
import json
import sys

from dotenv import load_dotenv

from components.data.corpus_utils import DatasetError
from components.data.data_store_utils import MissingArtifactError
from components.engine.prompts import PromptTemplateError
from components.engine.run_config import Ablation, ConfigError, load_run_config
from components.engine.workers import RunAbortedError
from components.eval.report_utils import ReportError
from components.eval.scoring import ScoringError
from components.eval.significance import TTestError
from components.experience.experience_store import ExperienceError
from components.logging_utils import configure_logging, get_logger
from components.pipeline import stages
from components.provider.llm_utils import Backend, ProviderError, close_http_clients
from components.provider.parsing import StructuredOutputError

load_dotenv()

logger = get_logger('app')

EXIT_OK, EXIT_ERROR, EXIT_ABORTED = 0, 1, 2

_HANDLED_ERRORS = (
    ConfigError,
    DatasetError,
    MissingArtifactError,
    PromptTemplateError,
    ProviderError,
    StructuredOutputError,
    ExperienceError,
    ScoringError,
    TTestError,
    ReportError,
    OSError,
)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='run config file (.json or .toml)')
    common.add_argument('--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
                        help='dotted override applied after the config file, e.g. thresholds.k_max=5')
    common.add_argument('--out', help='output root directory (default: OUTPUT_DIR)')
    common.add_argument('--provider', choices=[b.value for b in Backend], help='provider backend')
    common.add_argument('--use-published-experience', choices=['news', 'narrative'],
                        help='test with the shipped experience files instead of a trained one')
    common.add_argument('--ablation', choices=[a.value for a in Ablation], help='blank one experience slot at test time')
    common.add_argument('-v', '--verbose', action='store_true', help='debug logging')

    parser = argparse.ArgumentParser(description='Experience-transfer summarization pipeline')
    sub = parser.add_subparsers(dest='command', required=True)
    sub.add_parser('ingest', parents=[common], help='validate datasets and write canonical caches')
    sub.add_parser('train', parents=[common], help='learn QA and summary experiences')
    sub.add_parser('run', parents=[common], help='zero-shot test phase with learned experiences')
    sub.add_parser('baseline', parents=[common], help='plain-prompt summaries without experience')
    sub.add_parser('eval', parents=[common], help='score baseline and T3 outputs, compare them')
    sub.add_parser('report', parents=[common], help='combine eval tables across runs')
    record = sub.add_parser('record', parents=[common], help='run a stage live and persist its provider traffic')
    record.add_argument('stage', choices=list(stages.RECORDABLE_STAGES))
    return parser


def _cli_overrides(args):
    overrides = list(args.overrides)
    if args.out:
        overrides.append(f"output_dir={json.dumps(args.out)}")
    if args.provider:
        overrides.append(f"provider.backend={json.dumps(args.provider)}")
    if args.ablation:
        overrides.append(f"ablation={json.dumps(args.ablation)}")
    return overrides


def dispatch(args, cfg, http_client=None):
    command = args.command
    published = args.use_published_experience
    if command == 'ingest':
        counts = stages.run_ingest(cfg)
        print(', '.join(f"{n} {split} documents loaded" for split, n in counts.items()))
    elif command == 'train':
        es, traces = stages.run_train(cfg)
        print(f"✓ experience revision {es.revision}, {len(traces)} trace rows")
    elif command == 'run':
        results, failures = stages.run_test(cfg, published_style=published)
        print(f"✓ {len(results)} summaries, {len(failures)} failed")
    elif command == 'baseline':
        results, failures = stages.run_baseline(cfg)
        print(f"✓ {len(results)} baseline summaries, {len(failures)} failed")
    elif command == 'eval':
        table = stages.run_eval(cfg)
        print(f"✓ compared {len(table.metrics)} metrics for {cfg.model_label}")
    elif command == 'report':
        table, _ = stages.run_report(cfg)
        print(f"✓ report with {len(table.rows)} rows")
    elif command == 'record':
        stages.run_record(args.stage, cfg, http_client=http_client, published_style=published)
        print(f"✓ recorded {args.stage} to {stages.transcript_path(cfg)}")


def main(argv=None, http_client=None):
    args = build_parser().parse_args(argv)
    configure_logging('DEBUG' if args.verbose else None)
    try:
        cfg = load_run_config(args.config, _cli_overrides(args))
        logger.info(f"Run {cfg.run_id}: seed {cfg.seed}, {cfg.thresholds.describe()}")
        dispatch(args, cfg, http_client)
    except RunAbortedError as e:
        print(f"✗ Aborted: {e}", file=sys.stderr)
        return EXIT_ABORTED
    except _HANDLED_ERRORS as e:
        print(f"✗ {e}", file=sys.stderr)
        return EXIT_ERROR
    finally:
        close_http_clients()
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
