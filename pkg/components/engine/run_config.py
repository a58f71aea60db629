"""
Run configuration: one human-editable JSON or TOML file per run.

Every stopping-rule parameter of the training loop (K, S, R, C) is a first-class
key under "thresholds". Command-line overrides use dotted keys
(--set thresholds.k_max=5) and are applied before validation.
"""

import json
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from enum import Enum
from typing import Optional

from pydantic import BaseModel, Field, ValidationError, model_validator

from components.config import config
from components.data.corpus_utils import DatasetKind, Style
from components.provider.llm_utils import ProviderSettings


class Mode(str, Enum):
    train = 'train'
    test_summarization = 'test_summarization'
    test_qa = 'test_qa'
    baseline = 'baseline'


class Ablation(str, Enum):
    full = 'full'
    no_sum_exp = 'no_sum_exp'
    no_qa_exp = 'no_qa_exp'


class StarRule(str, Enum):
    all = 'all'
    any = 'any'


class ConfigError(ValueError):
    pass


class StopThresholds(BaseModel):
    s_min: float = Field(default=0.30, ge=0, le=1)
    r_min: float = 30.0
    c_max: float = Field(default=0.25, gt=0)
    k_max: int = Field(default=3, ge=1)

    def met(self, s_i, r_i, c_i):
        """All three strict inequalities of the stopping rule."""
        return s_i > self.s_min and r_i > self.r_min and c_i < self.c_max

    def describe(self):
        return f"S>{self.s_min:.2f} R>{self.r_min:.1f} C<{self.c_max:.2f} K={self.k_max}"


class DatasetSpec(BaseModel):
    path: str
    kind: DatasetKind
    name: Optional[str] = None
    style: Style = Style.news
    adapter: Optional[str] = None
    min_words: int = Field(default=1000, ge=0)
    sample_size: Optional[int] = Field(default=None, ge=1)

    @property
    def label(self):
        return self.name or os.path.splitext(os.path.basename(self.path))[0]


class EvalSettings(BaseModel):
    alpha: float = Field(default=0.05, gt=0, lt=1)
    star_rule: StarRule = StarRule.all
    factscore: bool = True
    # Judge model for Factscore; the run's own provider when unset
    judge_provider: Optional[ProviderSettings] = None
    model_label: Optional[str] = None
    # Run ids whose eval tables `report` stacks into one models x datasets table
    report_runs: list[str] = Field(default_factory=list)
    # Strategy -> run id, for the ablation table (full / no_sum_exp / no_qa_exp)
    ablation_runs: dict[Ablation, str] = Field(default_factory=dict)


class RunConfig(BaseModel):
    run_id: str = 'default'
    seed: int = 13
    mode: Mode = Mode.train
    style: Style = Style.news
    ablation: Ablation = Ablation.full
    thresholds: StopThresholds = Field(default_factory=StopThresholds)
    provider: ProviderSettings = Field(default_factory=ProviderSettings)
    train_dataset: Optional[DatasetSpec] = None
    test_dataset: Optional[DatasetSpec] = None
    # When train and test point at the same file, this many documents go to training
    n_train: Optional[int] = Field(default=None, ge=0)
    compression_unit: str = Field(default='words', pattern='^(words|characters)$')
    similarity_idf: str = Field(default='corpus', pattern='^(corpus|unit)$')
    workers: int = Field(default_factory=lambda: config.MAX_WORKERS, ge=1)
    failure_threshold: float = Field(default=0.10, ge=0, le=1)
    output_dir: str = Field(default_factory=lambda: config.OUTPUT_DIR)
    templates_dir: Optional[str] = None
    extract_summary_section: bool = True
    strict_parsing: bool = False
    eval: EvalSettings = Field(default_factory=EvalSettings)

    @model_validator(mode='after')
    def _mode_matches_dataset(self):
        if self.mode == Mode.train and self.train_dataset and self.train_dataset.kind != DatasetKind.qa:
            raise ValueError('mode=train needs a qa training dataset (gold QA pairs drive the assistant task)')
        if self.mode == Mode.test_qa and self.test_dataset and self.test_dataset.kind != DatasetKind.qa:
            raise ValueError('mode=test_qa needs a qa test dataset')
        return self

    @property
    def model_label(self):
        return self.eval.model_label or self.provider.model


def _parse_value(raw):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(data, overrides):
    """Apply 'a.b.c=value' overrides to a nested mapping in place."""
    for item in overrides or []:
        if '=' not in item:
            raise ConfigError(f"Override '{item}' is not of the form key=value")
        key, raw = item.split('=', 1)
        parts = key.strip().split('.')
        node = data
        for part in parts[:-1]:
            if node.get(part) is None:
                node[part] = {}
            node = node[part]
        node[parts[-1]] = _parse_value(raw)
    return data


def read_config_file(path):
    try:
        with open(path, 'rb') as f:
            if path.endswith('.toml'):
                return tomllib.load(f)
            return json.loads(f.read().decode('utf-8'))
    except FileNotFoundError:
        raise ConfigError(f"Config file not found: {path}")
    except (OSError, ValueError) as e:
        raise ConfigError(f"Cannot parse config file {path}: {e}")


def load_run_config(path=None, overrides=None):
    data = read_config_file(path) if path else {}
    apply_overrides(data, overrides)
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        location = '.'.join(str(p) for p in first['loc'])
        raise ConfigError(f"Invalid run config{' ' + path if path else ''}: {location}: {first['msg']}")
