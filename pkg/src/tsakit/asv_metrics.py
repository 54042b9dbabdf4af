"""Speaker-verification scoring: EER, enrollment averaging, cosine scores."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Sequence

import numpy as np

from tsakit.model import Embedding, ScoredTrial, Trial

__all__ = ['EerResult', 'roc_points', 'eer', 'average_embedding', 'cosine_score', 'score_trials']


@dataclass(frozen=True)
class EerResult:
    eer: float
    threshold: float


def roc_points(target_scores, nontarget_scores):
    """Operating points ``(threshold, far, frr)`` for every distinct score,
    highest first, preceded by the accept-nothing point at ``+inf``.

    A trial is accepted when its score is ``>= threshold``.
    """
    tar = np.sort(np.asarray(target_scores, dtype=np.float64))
    non = np.sort(np.asarray(nontarget_scores, dtype=np.float64))
    thresholds = np.unique(np.concatenate([tar, non]))[::-1]
    # Counts of scores >= t via the left insertion point.
    non_accept = len(non) - np.searchsorted(non, thresholds, side='left')
    tar_reject = np.searchsorted(tar, thresholds, side='left')
    far = np.concatenate([[0.0], non_accept / len(non)])
    frr = np.concatenate([[1.0], tar_reject / len(tar)])
    return np.concatenate([[np.inf], thresholds]), far, frr


def eer(scored: Iterable[ScoredTrial]) -> EerResult:
    """Equal error rate with linear interpolation at the FAR/FRR crossing.

    >>> from tsakit.model import Trial
    >>> trials = [ScoredTrial(Trial('a', str(i), lab), s) for i, (lab, s) in
    ...           enumerate([('target', .6), ('target', .2), ('nontarget', .4), ('nontarget', .1)])]
    >>> eer(trials).eer
    0.5
    """
    tar, non = [], []
    for s in scored:
        (tar if s.trial.is_target else non).append(s.score)
    if not tar or not non:
        raise ValueError('need both target and nontarget trials')
    thresholds, far, frr = roc_points(tar, non)
    diff = far - frr
    # diff goes from -1 to +1 monotonically; find the first non-negative point.
    k = int(np.argmax(diff >= 0))
    if diff[k] == 0:
        return EerResult(float(far[k]), float(thresholds[k]))
    f0, r0, f1, r1 = far[k - 1], frr[k - 1], far[k], frr[k]
    lam = (r0 - f0) / ((f1 - f0) - (r1 - r0))
    value = f0 + lam * (f1 - f0)
    threshold = thresholds[k] if abs(diff[k]) <= abs(diff[k - 1]) else thresholds[k - 1]
    return EerResult(float(value), float(threshold))


def average_embedding(vectors: Sequence[Embedding]) -> Embedding:
    vectors = list(vectors)
    if not vectors:
        raise ValueError('cannot average an empty list of embeddings')
    dims = {v.dim for v in vectors}
    if len(dims) != 1:
        raise ValueError(f'embedding dimensions differ: {sorted(dims)}')
    return Embedding(np.mean([v.values for v in vectors], axis=0))


def cosine_score(a: Embedding, b: Embedding) -> float:
    if a.dim != b.dim:
        raise ValueError(f'embedding dimensions differ: {a.dim} vs {b.dim}')
    na = np.linalg.norm(a.values)
    nb = np.linalg.norm(b.values)
    if na == 0 or nb == 0:
        raise ValueError('cosine score undefined for a zero vector')
    value = float(np.dot(a.values, b.values) / (na * nb))
    return min(1.0, max(-1.0, value))


def score_trials(trials: Iterable[Trial], enroll: Mapping[str, Embedding],
                 test: Mapping[str, Embedding]) -> List[ScoredTrial]:
    """Cosine-score every trial, preserving order."""
    trials = list(trials)
    missing = sorted({t.enroll_id for t in trials if t.enroll_id not in enroll})
    missing_test = sorted({t.test_id for t in trials if t.test_id not in test})
    if missing or missing_test:
        parts = []
        if missing:
            parts.append(f'enrollment ids: {", ".join(missing)}')
        if missing_test:
            parts.append(f'test ids: {", ".join(missing_test)}')
        raise KeyError('unresolvable ' + '; '.join(parts))
    return [ScoredTrial(t, cosine_score(enroll[t.enroll_id], test[t.test_id]))
            for t in trials]
