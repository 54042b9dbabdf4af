"""Per-condition result tables with recomputed averages.

Input rows have the shape written by :mod:`tsakit.pipeline.evaluate`::

    {"step": "step3", "label": "3. Speech combination", "metric": "tcpWER",
     "unit": "%", "primary": true, "values": {"0.2": 17.8, "0.4": 17.3, ...}}

Condition keys are overlap fractions (``"0.2"``) or percentages (``"20"``).
Any ``average`` field in the input is ignored.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

logger = logging.getLogger(__name__)

__all__ = [
    'DEFAULT_CONDITIONS',
    'PRIMARY_METRICS',
    'ConditionReport',
    'parse_condition',
    'mean_of',
    'load_rows',
    'build_reports',
    'render_text',
    'render_csv',
    'render_json',
    'reports_from_json',
]

DEFAULT_CONDITIONS = (0.2, 0.4, 0.6, 0.8, 1.0)
# (step, metric) pairs flagged as headline privacy / utility numbers.
PRIMARY_METRICS = {('attack', 'EER'), ('step3', 'tcpWER')}


@dataclass(frozen=True)
class ConditionReport:
    metric: str
    values: Dict[float, Optional[float]]
    label: str = ''
    step: str = ''
    unit: str = '%'
    primary: bool = False
    data: str = ''
    missing: Tuple[float, ...] = ()
    average: Optional[float] = field(default=None)

    def as_dict(self) -> dict:
        return {'metric': self.metric, 'label': self.label, 'step': self.step,
                'unit': self.unit, 'primary': self.primary, 'data': self.data,
                'values': {f'{c:g}': v for c, v in sorted(self.values.items())},
                'missing': [f'{c:g}' for c in self.missing], 'average': self.average}


def parse_condition(key) -> float:
    """``"0.2"``, ``0.2``, ``"20"`` and ``"20%"`` all mean 20 % overlap."""
    text = str(key).strip().rstrip('%')
    value = float(text)
    if value > 1 or str(key).strip().endswith('%'):
        value /= 100.0
    if not 0 < value <= 1:
        raise ValueError(f'overlap condition out of range: {key!r}')
    return round(value, 6)


def mean_of(values: Iterable[Optional[float]]) -> Optional[float]:
    """Unweighted mean of the finite values, or None when there are none."""
    present = [v for v in values if v is not None and math.isfinite(v)]
    return sum(present) / len(present) if present else None


def load_rows(source) -> List[dict]:
    """Rows from a bundle directory (its ``metrics.json``) or a JSON file."""
    path = Path(source)
    if path.is_dir():
        path = path / 'metrics.json'
    doc = json.loads(path.read_text(encoding='utf-8'))
    rows = doc.get('rows', doc.get('reports')) if isinstance(doc, dict) else doc
    if not isinstance(rows, list):
        raise ValueError(f'{path}: expected a list of rows')
    return rows


def build_reports(rows: Iterable[Mapping], conditions: Sequence[float] = None) -> List[ConditionReport]:
    """One report per row; averages are recomputed from the per-condition values."""
    rows = list(rows)
    parsed = []
    seen = set()
    for row in rows:
        if 'metric' not in row or 'values' not in row:
            raise ValueError(f'row lacks "metric" or "values": {row!r}')
        values = {}
        for k, v in row['values'].items():
            values[parse_condition(k)] = None if v is None else float(v)
        parsed.append((row, values))
        seen.update(values)
    if conditions is None:
        # Columns are the conditions present anywhere in the input.
        conditions = sorted(seen) if seen else list(DEFAULT_CONDITIONS)
    conditions = [parse_condition(c) for c in conditions]
    reports = []
    for row, values in parsed:
        missing = tuple(c for c in conditions if values.get(c) is None)
        step, metric = row.get('step', ''), row['metric']
        name = row.get('label') or step or metric
        if missing and len(missing) < len(conditions):
            logger.warning('%s %s: no value for %s', name, metric,
                           ', '.join(f'{c * 100:g}%' for c in missing))
        reports.append(ConditionReport(
            metric=metric,
            values={c: values.get(c) for c in conditions},
            label=row.get('label', ''),
            step=step,
            unit=row.get('unit', '%'),
            primary=bool(row.get('primary')) or (step, metric) in PRIMARY_METRICS,
            data=row.get('data', ''),
            missing=missing,
            average=mean_of(values.get(c) for c in conditions),
        ))
    return reports


def _fmt(v: Optional[float]) -> str:
    if v is None:
        return '-'
    if math.isinf(v):
        return 'inf' if v > 0 else '-inf'
    return f'{v:.1f}'


def _columns(reports: Sequence[ConditionReport]) -> List[float]:
    cols = []
    for r in reports:
        for c in r.values:
            if c not in cols:
                cols.append(c)
    return sorted(cols)


def render_text(reports: Sequence[ConditionReport]) -> str:
    """Fixed-width table; primary rows are prefixed with ``*``."""
    cols = _columns(reports)
    header = ['', 'Step', 'Metric'] + [f'{c * 100:g}%' for c in cols] + ['Aver']
    body = []
    for r in reports:
        body.append(['*' if r.primary else '', r.label or r.step, f'{r.metric} ({r.unit})']
                    + [_fmt(r.values.get(c)) for c in cols] + [_fmt(r.average)])
    widths = [max(len(row[i]) for row in [header] + body) for i in range(len(header))]
    lines = []
    for row in [header] + body:
        cells = [row[i].ljust(widths[i]) if i < 3 else row[i].rjust(widths[i])
                 for i in range(len(row))]
        lines.append('  '.join(cells).rstrip())
    lines.insert(1, '-' * len(lines[0]))
    if any(r.primary for r in reports):
        lines.append('* primary privacy / utility metric')
    return '\n'.join(lines) + '\n'


def render_csv(reports: Sequence[ConditionReport]) -> str:
    cols = _columns(reports)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator='\n')
    w.writerow(['step', 'label', 'metric', 'unit', 'primary'] + [f'{c:g}' for c in cols]
               + ['average'])
    for r in reports:
        w.writerow([r.step, r.label, r.metric, r.unit, int(r.primary)]
                   + ['' if r.values.get(c) is None else repr(r.values[c]) for c in cols]
                   + ['' if r.average is None else repr(r.average)])
    return buf.getvalue()


def render_json(reports: Sequence[ConditionReport]) -> str:
    """Full-precision JSON; :func:`reports_from_json` inverts it."""
    return json.dumps({'reports': [r.as_dict() for r in reports]}, indent=1) + '\n'


def reports_from_json(text: str) -> List[ConditionReport]:
    doc = json.loads(text)
    out = []
    for d in doc['reports']:
        out.append(ConditionReport(
            metric=d['metric'],
            values={parse_condition(k): v for k, v in d['values'].items()},
            label=d.get('label', ''), step=d.get('step', ''), unit=d.get('unit', '%'),
            primary=bool(d.get('primary')), data=d.get('data', ''),
            missing=tuple(parse_condition(k) for k in d.get('missing', ())),
            average=d.get('average')))
    return out
