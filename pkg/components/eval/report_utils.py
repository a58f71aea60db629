#!/usr/bin/env python3
"""
Report Utilities Module

Comparison tables between a run without experience transfer (w/o) and the same model
with it (T3), per dataset, with Welch p-values.

Key Components:
- compare_runs: paired w/o | T3 means per metric, bold on the larger mean, per-metric
  p-values, star on the model when the p-values pass the star rule, row highlight when
  T3 wins every metric
- combine_tables: stack per-(model, dataset) rows into one models x datasets table
- improvement_rates: average relative gain of T3 over w/o per metric
- ablation_table: Full T3 / w/o summary / w/o qa means per model and dataset
- render_report: markdown (jinja2), csv (pandas, one row per model x dataset) or json

ROUGE and BLEU are stored as fractions and displayed x100; Factscore is already 0-100.

Usage:
    from components.eval.report_utils import compare_runs, render_report
    table = compare_runs(report_wo, report_t3, alpha=0.05)
    render_report(table, 'markdown', 'runs/demo/eval/table.md')
"""

import os
from typing import Optional

import pandas as pd
from jinja2 import Template
from pydantic import BaseModel, Field

from components.data.data_store_utils import write_json
from components.engine.run_config import Ablation, StarRule
from components.eval.scoring import METRICS, OVERLAP_METRICS
from components.eval.significance import TTestError, welch_t
from components.logging_utils import get_logger

logger = get_logger(__name__)

METRIC_LABELS = {
    'rouge1': 'ROUGE-1',
    'rouge2': 'ROUGE-2',
    'rougeL': 'ROUGE-L',
    'bleu': 'BLEU',
    'factscore': 'Factscore',
}

ABLATION_LABELS = {
    Ablation.full: 'Full T3',
    Ablation.no_sum_exp: 'w/o summary',
    Ablation.no_qa_exp: 'w/o qa',
}

REPORT_FORMATS = ('markdown', 'csv', 'json')


class ReportError(ValueError):
    pass


class MetricCell(BaseModel):
    wo: float
    t3: float
    t: Optional[float] = None
    p: Optional[float] = None
    # 'wo', 't3' or None on a tie
    bold: Optional[str] = None


class ComparisonRow(BaseModel):
    model: str
    dataset: str
    cells: dict[str, MetricCell]
    starred: bool = False
    highlighted: bool = False


class SignificanceTable(BaseModel):
    alpha: float
    star_rule: StarRule = StarRule.all
    metrics: list[str]
    rows: list[ComparisonRow] = Field(default_factory=list)
    judge_template: Optional[str] = None


class AblationRow(BaseModel):
    model: str
    dataset: str
    strategy: Ablation
    means: dict[str, Optional[float]]


class AblationTable(BaseModel):
    metrics: list[str]
    rows: list[AblationRow] = Field(default_factory=list)


def _display(metric, value):
    if value is None:
        return '-'
    return f"{value * 100:.2f}" if metric in OVERLAP_METRICS else f"{value:.2f}"


def _starred(p_values, alpha, star_rule):
    p_values = [p for p in p_values if p is not None]
    if not p_values:
        return False
    if StarRule(star_rule) == StarRule.any:
        return any(p < alpha for p in p_values)
    return all(p < alpha for p in p_values)


def compare_runs(report_wo, report_t3, alpha=0.05, star_rule=StarRule.all, model=None, dataset=None):
    """
    One comparison row for a (model, dataset) pair.

    Both reports must cover the same documents. Factscore enters the row only
    when both sides have it; p-values need at least two values per side.
    """
    if report_wo.doc_ids() != report_t3.doc_ids():
        only_wo = sorted(report_wo.doc_ids() - report_t3.doc_ids())
        only_t3 = sorted(report_t3.doc_ids() - report_wo.doc_ids())
        raise ReportError(
            f"Reports {report_wo.run_id} and {report_t3.run_id} cover different documents "
            f"(only w/o: {only_wo[:5]}, only T3: {only_t3[:5]})"
        )

    metrics = [m for m in METRICS if report_wo.means.get(m) is not None and report_t3.means.get(m) is not None]
    cells = {}
    for metric in metrics:
        wo, t3 = report_wo.means[metric], report_t3.means[metric]
        cell = MetricCell(wo=wo, t3=t3, bold='t3' if t3 > wo else 'wo' if wo > t3 else None)
        try:
            result = welch_t(report_t3.values(metric), report_wo.values(metric), alpha)
            cell.t, cell.p = result.t, result.p
        except TTestError as e:
            logger.warning(f"⚠ No p-value for {metric}: {e}")
        cells[metric] = cell

    row = ComparisonRow(
        model=model or report_t3.model_label or report_t3.run_id,
        dataset=dataset or report_t3.dataset or '',
        cells=cells,
        starred=_starred([c.p for c in cells.values()], alpha, star_rule),
        highlighted=bool(cells) and all(c.t3 > c.wo for c in cells.values()),
    )
    return SignificanceTable(
        alpha=alpha, star_rule=star_rule, metrics=metrics, rows=[row],
        judge_template=report_t3.judge_template or report_wo.judge_template,
    )


def combine_tables(tables):
    """Stack rows of several tables; the metric set is the union, in canonical order."""
    if not tables:
        raise ReportError("No tables to combine")
    alphas = {t.alpha for t in tables}
    if len(alphas) > 1:
        raise ReportError(f"Cannot combine tables with different alpha values: {sorted(alphas)}")
    present = {m for t in tables for m in t.metrics}
    return SignificanceTable(
        alpha=tables[0].alpha,
        star_rule=tables[0].star_rule,
        metrics=[m for m in METRICS if m in present],
        rows=[row for t in tables for row in t.rows],
        judge_template=next((t.judge_template for t in tables if t.judge_template), None),
    )


def improvement_rates(table):
    """Mean relative gain (percent) of T3 over w/o per metric, across rows with a nonzero w/o mean."""
    rates = {}
    for metric in table.metrics:
        gains = [
            (row.cells[metric].t3 - row.cells[metric].wo) / row.cells[metric].wo * 100
            for row in table.rows
            if metric in row.cells and row.cells[metric].wo
        ]
        rates[metric] = sum(gains) / len(gains) if gains else None
    return rates


def ablation_table(reports, model, dataset):
    """
    Args:
        reports: mapping Ablation -> MetricReport of the run with that strategy

    Returns:
        AblationTable with rows in Full / w/o summary / w/o qa order
    """
    rows = [
        AblationRow(model=model, dataset=dataset, strategy=strategy, means=dict(reports[strategy].means))
        for strategy in Ablation if strategy in reports
    ]
    if not rows:
        raise ReportError(f"No ablation runs for {model} on {dataset}")
    metrics = [m for m in METRICS if any(r.means.get(m) is not None for r in rows)]
    return AblationTable(metrics=metrics, rows=rows)


_COMPARISON_MD = Template("""\
| Model | Dataset |{% for label in labels %} {{ label }} | |{% endfor %} T3 wins all |
|---|---|{% for label in labels %}---|---|{% endfor %}---|
| | |{% for label in labels %} w/o | T3 |{% endfor %} |
{% for row in rows %}
| {{ row.model }} | {{ row.dataset }} |{% for cell in row.cells %} {{ cell.wo }} | {{ cell.t3 }} |{% endfor %} {{ row.mark }} |
{% endfor %}

p-values (Welch t-test, alpha = {{ alpha }}; * = {{ star_note }})

| Model | Dataset |{% for label in labels %} {{ label }} |{% endfor %}

|---|---|{% for label in labels %}---|{% endfor %}

{% for row in rows %}
| {{ row.model }} | {{ row.dataset }} |{% for p in row.p_values %} {{ p }} |{% endfor %}

{% endfor %}
{% if judge_template %}

Factscore judge: {{ judge_template }}
{% endif %}
""", trim_blocks=True, keep_trailing_newline=True)

_ABLATION_MD = Template("""\
| Model | Dataset | Strategy |{% for label in labels %} {{ label }} |{% endfor %}

|---|---|---|{% for label in labels %}---|{% endfor %}

{% for row in rows %}
| {{ row.model }} | {{ row.dataset }} | {{ row.strategy }} |{% for value in row.metric_values %} {{ value }} |{% endfor %}

{% endfor %}
""", trim_blocks=True, keep_trailing_newline=True)


def _bold(text, on):
    return f"**{text}**" if on else text


def comparison_markdown(table):
    rows = []
    for row in table.rows:
        cells, p_values = [], []
        for metric in table.metrics:
            cell = row.cells.get(metric)
            if cell is None:
                cells.append({'wo': '-', 't3': '-'})
                p_values.append('-')
                continue
            cells.append({
                'wo': _bold(_display(metric, cell.wo), cell.bold == 'wo'),
                't3': _bold(_display(metric, cell.t3), cell.bold == 't3'),
            })
            p_values.append('-' if cell.p is None else f"{cell.p:.4f}")
        rows.append({
            'model': row.model + ('*' if row.starred else ''),
            'dataset': row.dataset,
            'cells': cells,
            'p_values': p_values,
            'mark': '✓' if row.highlighted else '',
        })
    star_note = 'every p < alpha' if StarRule(table.star_rule) == StarRule.all else 'some p < alpha'
    return _COMPARISON_MD.render(
        labels=[METRIC_LABELS[m] for m in table.metrics],
        rows=rows, alpha=table.alpha, star_note=star_note, judge_template=table.judge_template,
    )


def ablation_markdown(table):
    rows = [{
        'model': row.model,
        'dataset': row.dataset,
        'strategy': ABLATION_LABELS[row.strategy],
        'metric_values': [_display(m, row.means.get(m)) for m in table.metrics],
    } for row in table.rows]
    return _ABLATION_MD.render(labels=[METRIC_LABELS[m] for m in table.metrics], rows=rows)


def comparison_frame(table):
    """One row per model x dataset; columns <metric>_wo, <metric>_t3, <metric>_p."""
    records = []
    for row in table.rows:
        record = {'model': row.model, 'dataset': row.dataset}
        for metric in table.metrics:
            cell = row.cells.get(metric)
            record[f"{metric}_wo"] = cell.wo if cell else None
            record[f"{metric}_t3"] = cell.t3 if cell else None
            record[f"{metric}_p"] = cell.p if cell else None
        record['starred'] = row.starred
        record['highlighted'] = row.highlighted
        records.append(record)
    return pd.DataFrame.from_records(records)


def ablation_frame(table):
    return pd.DataFrame.from_records([
        {'model': r.model, 'dataset': r.dataset, 'strategy': r.strategy.value,
         **{m: r.means.get(m) for m in table.metrics}}
        for r in table.rows
    ])


def render_report(table, fmt, path):
    """Write a SignificanceTable or AblationTable as markdown, csv or json; returns the path."""
    if fmt not in REPORT_FORMATS:
        raise ReportError(f"Unknown report format '{fmt}' (expected one of {', '.join(REPORT_FORMATS)})")
    is_ablation = isinstance(table, AblationTable)
    try:
        if fmt == 'json':
            return write_json(path, table)
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        if fmt == 'csv':
            frame = ablation_frame(table) if is_ablation else comparison_frame(table)
            frame.to_csv(path, index=False, lineterminator='\n')
        else:
            text = ablation_markdown(table) if is_ablation else comparison_markdown(table)
            with open(path, 'w', encoding='utf-8') as f:
                f.write(text)
    except OSError as e:
        raise ReportError(f"Cannot write report {path}: {e}")
    logger.info(f"✓ Wrote {fmt} report {path}")
    return path
