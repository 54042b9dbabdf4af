"""Whitespace-delimited ASV protocol files: trial lists, score files, embeddings."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, IO, Iterable, List, Optional, Tuple, Union

from tsakit.formats.errors import FormatError
from tsakit.model import TARGET, NONTARGET, Embedding, ScoredTrial, Trial


@dataclass(frozen=True)
class TrialList:
    trials: Tuple[Trial, ...]
    condition: Optional[float] = None

    def __len__(self):
        return len(self.trials)

    def __iter__(self):
        return iter(self.trials)

    def counts(self) -> Dict[str, int]:
        out = {TARGET: 0, NONTARGET: 0}
        for t in self.trials:
            out[t.label] += 1
        return out


def _records(text, source):
    lines = text.splitlines() if isinstance(text, str) else text
    for lineno, line in enumerate(lines, start=1):
        fields = line.split()
        if fields and not fields[0].startswith('#'):
            yield lineno, fields


def parse_trials(text: Union[str, IO[str]], source: str = None) -> TrialList:
    trials = []
    seen = set()
    for lineno, fields in _records(text, source):
        if len(fields) != 3:
            raise FormatError(f'expected 3 fields, got {len(fields)}', lineno, source)
        enroll_id, test_id, label = fields
        if label not in (TARGET, NONTARGET):
            raise FormatError(f'label must be target or nontarget, got {label!r}', lineno, source)
        if (enroll_id, test_id) in seen:
            raise FormatError(f'duplicate trial ({enroll_id}, {test_id})', lineno, source)
        seen.add((enroll_id, test_id))
        trials.append(Trial(enroll_id, test_id, label))
    return TrialList(tuple(trials))


def write_trials(trials: Iterable[Trial]) -> str:
    return ''.join(f'{t.enroll_id} {t.test_id} {t.label}\n' for t in trials)


def parse_scores(text: Union[str, IO[str]], trials: Iterable[Trial],
                 source: str = None) -> List[ScoredTrial]:
    """Join score lines against ``trials``; every trial needs exactly one score.

    The result follows trial-list order.
    """
    trials = list(trials)
    index = {(t.enroll_id, t.test_id): t for t in trials}
    scores: Dict[Tuple[str, str], float] = {}
    unknown, duplicate = [], []
    for lineno, fields in _records(text, source):
        if len(fields) != 3:
            raise FormatError(f'expected 3 fields, got {len(fields)}', lineno, source)
        key = (fields[0], fields[1])
        try:
            score = float(fields[2])
        except ValueError:
            raise FormatError(f'score must be numeric, got {fields[2]!r}', lineno, source) from None
        if not math.isfinite(score):
            raise FormatError('score must be finite', lineno, source)
        if key not in index:
            unknown.append(key)
        elif key in scores:
            duplicate.append(key)
        scores[key] = score
    missing = [k for k in index if k not in scores]
    problems = []
    if unknown:
        problems.append(f'unmatched score pairs: {_pairs(unknown)}')
    if duplicate:
        problems.append(f'duplicate score pairs: {_pairs(duplicate)}')
    if missing:
        problems.append(f'trials without score: {_pairs(missing)}')
    if problems:
        raise FormatError('; '.join(problems), source=source)
    return [ScoredTrial(t, scores[(t.enroll_id, t.test_id)]) for t in trials]


def _pairs(keys, limit=10):
    shown = ', '.join(f'({a}, {b})' for a, b in keys[:limit])
    if len(keys) > limit:
        shown += f', ... ({len(keys)} total)'
    return shown


def write_scores(scored: Iterable[ScoredTrial]) -> str:
    return ''.join(f'{s.trial.enroll_id} {s.trial.test_id} {s.score!r}\n' for s in scored)


def parse_embeddings(text: Union[str, IO[str]], source: str = None) -> Dict[str, Embedding]:
    out: Dict[str, Embedding] = {}
    dim = None
    for lineno, fields in _records(text, source):
        if len(fields) < 2:
            raise FormatError('expected an id followed by at least one value', lineno, source)
        key = fields[0]
        try:
            values = [float(v) for v in fields[1:]]
        except ValueError:
            raise FormatError('embedding values must be numeric', lineno, source) from None
        if not all(math.isfinite(v) for v in values):
            raise FormatError('embedding values must be finite', lineno, source)
        if dim is None:
            dim = len(values)
        elif len(values) != dim:
            raise FormatError(f'dimension {len(values)} differs from {dim}', lineno, source)
        if key in out:
            raise FormatError(f'duplicate embedding id {key!r}', lineno, source)
        out[key] = Embedding(values)
    return out


def write_embeddings(embeddings: Dict[str, Embedding]) -> str:
    out = io.StringIO()
    for key, emb in embeddings.items():
        out.write(key + ' ' + ' '.join(repr(float(v)) for v in emb.values) + '\n')
    return out.getvalue()


def read_text(path) -> str:
    return Path(path).read_text(encoding='utf-8')
