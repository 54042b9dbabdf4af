"""Interval algebra and diarization error rate.

DER follows the usual time-weighted accounting over homogeneous regions:
within each region between boundary events with ``n_ref`` reference and
``n_hyp`` hypothesis speakers, of which ``n_correct`` are mapped pairs
active together,

    missed      = d * max(0, n_ref - n_hyp)
    false_alarm = d * max(0, n_hyp - n_ref)
    confusion   = d * (min(n_ref, n_hyp) - n_correct)

The speaker mapping maximizes total mapped overlap on the scored regions.
Overlapped speech is scored.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from tsakit.model import SpeakerActivity

__all__ = [
    'DEFAULT_COLLAR',
    'DerResult',
    'merge_intervals',
    'interval_union_duration',
    'interval_intersection',
    'interval_difference',
    'overlap_ratio',
    'der',
    'der_corpus',
]

DEFAULT_COLLAR = 0.25

Interval = Tuple[float, float]


def merge_intervals(intervals: Iterable[Interval]) -> List[Interval]:
    """Sort and merge overlapping or touching intervals.

    >>> merge_intervals([(3, 8), (0, 5), (9, 10)])
    [(0, 8), (9, 10)]
    """
    merged: List[list] = []
    for start, end in sorted(intervals):
        if end < start:
            raise ValueError(f'Interval end before start: {(start, end)}')
        if merged and start <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], end)
        else:
            merged.append([start, end])
    return [(s, e) for s, e in merged]


def interval_union_duration(intervals: Iterable[Interval]) -> float:
    """Total duration covered by the union of ``intervals``.

    >>> interval_union_duration([(0, 5), (3, 8)])
    8
    """
    return sum(e - s for s, e in merge_intervals(intervals))


def interval_intersection(a: Iterable[Interval], b: Iterable[Interval]) -> List[Interval]:
    """Pointwise intersection of two interval sets, returned merged.

    Zero-length intersections are dropped.

    >>> interval_intersection([(0, 6)], [(4, 10)])
    [(4, 6)]
    """
    a, b = merge_intervals(a), merge_intervals(b)
    out = []
    i = j = 0
    while i < len(a) and j < len(b):
        start = max(a[i][0], b[j][0])
        end = min(a[i][1], b[j][1])
        if end > start:
            out.append((start, end))
        if a[i][1] < b[j][1]:
            i += 1
        else:
            j += 1
    return out


def interval_difference(a: Iterable[Interval], b: Iterable[Interval]) -> List[Interval]:
    """Parts of ``a`` not covered by ``b``.

    >>> interval_difference([(0, 10)], [(2, 3), (5, 6)])
    [(0, 2), (3, 5), (6, 10)]
    """
    b = merge_intervals(b)
    out = []
    for start, end in merge_intervals(a):
        cursor = start
        for bs, be in b:
            if be <= cursor or bs >= end:
                continue
            if bs > cursor:
                out.append((cursor, bs))
            cursor = max(cursor, be)
        if cursor < end:
            out.append((cursor, end))
    return out


def overlap_ratio(a: Iterable[Interval], b: Iterable[Interval]) -> float:
    """Intersection-over-union of two speakers' activity."""
    a, b = list(a), list(b)
    union = interval_union_duration(a + b)
    if union == 0:
        return 0.0
    return interval_union_duration(interval_intersection(a, b)) / union


@dataclass(frozen=True)
class DerResult:
    missed: float
    false_alarm: float
    confusion: float
    total_ref: float
    mapping: Dict[str, Optional[str]] = field(default_factory=dict)

    @property
    def errors(self) -> float:
        return self.missed + self.false_alarm + self.confusion

    @property
    def der(self) -> float:
        if self.total_ref == 0:
            return 0.0 if self.errors == 0 else math.inf
        return self.errors / self.total_ref

    def __add__(self, other: 'DerResult') -> 'DerResult':
        # Mappings are per session and do not survive aggregation.
        return DerResult(
            self.missed + other.missed,
            self.false_alarm + other.false_alarm,
            self.confusion + other.confusion,
            self.total_ref + other.total_ref,
        )


def _speaker_intervals(activity: SpeakerActivity) -> Dict[str, List[Interval]]:
    return {spk: merge_intervals(activity.intervals(spk))
            for spk in activity.speakers()}


def _active(intervals: List[Interval], starts: List[float], t: float) -> bool:
    i = bisect.bisect_right(starts, t) - 1
    return i >= 0 and intervals[i][0] <= t < intervals[i][1]


def _homogeneous_regions(ref, hyp, scored):
    """Yield ``(duration, ref_active, hyp_active)`` for every elementary region."""
    events = set()
    for group in (ref, hyp):
        for ivs in group.values():
            for s, e in ivs:
                events.add(s)
                events.add(e)
    for s, e in scored:
        events.add(s)
        events.add(e)
    events = sorted(events)
    lookup = {
        name: (ivs, [s for s, _ in ivs])
        for group, prefix in ((ref, 'r'), (hyp, 'h'))
        for name, ivs in ((prefix + k, v) for k, v in group.items())
    }
    scored_starts = [s for s, _ in scored]
    for t0, t1 in zip(events, events[1:]):
        mid = (t0 + t1) / 2
        if not _active(scored, scored_starts, mid):
            continue
        r = [k for k in ref if _active(*lookup['r' + k], mid)]
        h = [k for k in hyp if _active(*lookup['h' + k], mid)]
        if r or h:
            yield t1 - t0, r, h


def _optimal_mapping(ref_speakers: List[str], hyp_speakers: List[str],
                     overlap: np.ndarray) -> Dict[str, Optional[str]]:
    from tsakit.assignment import max_weight_assignment

    pairs = max_weight_assignment(overlap)
    mapping: Dict[str, Optional[str]] = {r: None for r in ref_speakers}
    for i, j in pairs:
        if overlap[i, j] > 0:
            mapping[ref_speakers[i]] = hyp_speakers[j]
    return mapping


def der(ref: SpeakerActivity, hyp: SpeakerActivity,
        collar: float = DEFAULT_COLLAR) -> DerResult:
    """Diarization error rate of ``hyp`` against ``ref``.

    ``collar`` seconds on either side of every reference boundary are
    excluded from scoring.

    >>> from tsakit.model import ActivityEntry as E
    >>> r = SpeakerActivity('m', (E('s1', 0, 5), E('s2', 5, 5)))
    >>> h = SpeakerActivity('m', (E('A', 0, 10),))
    >>> res = der(r, h, collar=0)
    >>> res.der, res.confusion, res.mapping
    (0.5, 5.0, {'s1': 'A', 's2': None})
    """
    if ref.session_id != hyp.session_id:
        raise ValueError(
            f'Session mismatch: ref {ref.session_id!r} vs hyp {hyp.session_id!r}')
    if collar < 0:
        raise ValueError(f'collar must be >= 0, got {collar}')
    ref_ivs = _speaker_intervals(ref)
    hyp_ivs = _speaker_intervals(hyp)

    everything = [iv for ivs in list(ref_ivs.values()) + list(hyp_ivs.values())
                  for iv in ivs]
    if not everything:
        return DerResult(0.0, 0.0, 0.0, 0.0, {})
    lo = min(s for s, _ in everything)
    hi = max(e for _, e in everything)
    scored = [(lo, hi)]
    if collar > 0:
        excluded = [(max(0.0, b - collar), b + collar)
                    for ivs in ref_ivs.values()
                    for s, e in ivs for b in (s, e)]
        scored = interval_difference(scored, excluded)

    regions = list(_homogeneous_regions(ref_ivs, hyp_ivs, scored))

    ref_speakers = sorted(ref_ivs)
    hyp_speakers = sorted(hyp_ivs)
    r_index = {k: i for i, k in enumerate(ref_speakers)}
    h_index = {k: i for i, k in enumerate(hyp_speakers)}
    overlap = np.zeros((len(ref_speakers), len(hyp_speakers)))
    for d, r, h in regions:
        for a in r:
            for b in h:
                overlap[r_index[a], h_index[b]] += d
    mapping = _optimal_mapping(ref_speakers, hyp_speakers, overlap)

    missed = false_alarm = confusion = total = 0.0
    for d, r, h in regions:
        hs = set(h)
        n_ref, n_hyp = len(r), len(h)
        n_correct = sum(1 for a in r if mapping[a] is not None and mapping[a] in hs)
        total += d * n_ref
        missed += d * max(0, n_ref - n_hyp)
        false_alarm += d * max(0, n_hyp - n_ref)
        confusion += d * (min(n_ref, n_hyp) - n_correct)
    return DerResult(missed, false_alarm, confusion, total, mapping)


def der_corpus(pairs: Iterable[Tuple[SpeakerActivity, SpeakerActivity]],
               collar: float = DEFAULT_COLLAR) -> DerResult:
    """Time-weighted DER over several sessions (sum of components)."""
    return sum((der(r, h, collar) for r, h in pairs),
               DerResult(0.0, 0.0, 0.0, 0.0))
