"""Domain types shared across the toolkit.

All types are frozen. Constructors do not enforce invariants; call
:func:`validate` to get a list of violations. Parsers in
:mod:`tsakit.formats` validate what they build and raise on violations.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence, Tuple

import numpy as np

__all__ = [
    'TimedWord',
    'Segment',
    'Transcript',
    'ActivityEntry',
    'SpeakerActivity',
    'Waveform',
    'Trial',
    'ScoredTrial',
    'Embedding',
    'SourceRef',
    'MixtureRecord',
    'Violation',
    'validate',
    'TARGET',
    'NONTARGET',
    'WORD_TIME_TOLERANCE',
]

TARGET = 'target'
NONTARGET = 'nontarget'

# Slack allowed between word intervals and their segment bounds.
WORD_TIME_TOLERANCE = 0.01

# Samples beyond this magnitude are rejected by validation.
AMPLITUDE_HEADROOM = 4.0


@dataclass(frozen=True)
class TimedWord:
    text: str
    start: float
    end: float


@dataclass(frozen=True)
class Segment:
    session_id: str
    speaker_id: str
    start: float
    end: float
    words: Tuple[TimedWord, ...] = ()

    @property
    def text(self) -> str:
        return ' '.join(w.text for w in self.words)


@dataclass(frozen=True)
class Transcript:
    session_id: str
    segments: Tuple[Segment, ...] = ()

    def speakers(self) -> list:
        """Speaker ids in lexicographic order."""
        return sorted({s.speaker_id for s in self.segments})

    def by_speaker(self, speaker_id: str) -> 'Transcript':
        return Transcript(
            self.session_id,
            tuple(s for s in self.segments if s.speaker_id == speaker_id),
        )


class ActivityEntry(NamedTuple):
    speaker_id: str
    onset: float
    duration: float

    @property
    def end(self) -> float:
        return self.onset + self.duration


@dataclass(frozen=True)
class SpeakerActivity:
    session_id: str
    entries: Tuple[ActivityEntry, ...] = ()

    def speakers(self) -> list:
        return sorted({e.speaker_id for e in self.entries})

    def intervals(self, speaker_id: str) -> list:
        return [(e.onset, e.end) for e in self.entries
                if e.speaker_id == speaker_id]


@dataclass(frozen=True, eq=False)
class Waveform:
    """Mono audio. ``samples`` is stored as a read-only float64 array."""
    samples: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64).reshape(-1)
        samples.flags.writeable = False
        object.__setattr__(self, 'samples', samples)

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def __eq__(self, other):
        if not isinstance(other, Waveform):
            return NotImplemented
        return (self.sample_rate == other.sample_rate
                and np.array_equal(self.samples, other.samples))

    __hash__ = None


@dataclass(frozen=True)
class Trial:
    enroll_id: str
    test_id: str
    label: str

    @property
    def is_target(self) -> bool:
        return self.label == TARGET


@dataclass(frozen=True)
class ScoredTrial:
    trial: Trial
    score: float


@dataclass(frozen=True, eq=False)
class Embedding:
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        values.flags.writeable = False
        object.__setattr__(self, 'values', values)

    @property
    def dim(self) -> int:
        return len(self.values)

    def __eq__(self, other):
        if not isinstance(other, Embedding):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    __hash__ = None


@dataclass(frozen=True)
class SourceRef:
    utterance_id: str
    speaker_id: str
    offset: float
    gain: float = 1.0


@dataclass(frozen=True)
class MixtureRecord:
    """One synthesized two-speaker mixture; the target is always the first source."""
    mixture_id: str
    target_source: SourceRef
    nontarget_source: SourceRef
    overlap_requested: float
    overlap_measured: float
    activity: SpeakerActivity


class Violation(NamedTuple):
    field: str
    rule: str

    def __str__(self):
        return f'{self.field}: {self.rule}'


@functools.singledispatch
def validate(record) -> list:
    """Return the list of violated invariants of ``record`` (empty if valid).

    >>> validate(TimedWord('cat', 0.0, 0.5))
    []
    >>> validate(Trial('s1', 'u1', 'unknown'))
    [Violation(field='label', rule="must be one of ('target', 'nontarget')")]
    """
    raise TypeError(f'No validation rules for {type(record).__name__}')


def _finite(x) -> bool:
    try:
        return math.isfinite(x)
    except TypeError:
        return False


@validate.register
def _(word: TimedWord) -> list:
    out = []
    if not isinstance(word.text, str) or not word.text.strip():
        out.append(Violation('text', 'must be non-empty'))
    elif len(word.text.split()) != 1 or word.text != word.text.strip():
        out.append(Violation('text', 'must not contain whitespace'))
    if not _finite(word.start) or word.start < 0:
        out.append(Violation('start', 'must be finite and >= 0'))
    if not _finite(word.end) or not word.end >= word.start:
        out.append(Violation('end', 'must be >= start'))
    return out


@validate.register
def _(segment: Segment) -> list:
    out = []
    if not (_finite(segment.start) and _finite(segment.end)) \
            or segment.end < segment.start:
        out.append(Violation('end', 'must be >= start'))
    prev_start = -math.inf
    for i, w in enumerate(segment.words):
        out.extend(Violation(f'words[{i}].{v.field}', v.rule)
                   for v in validate(w))
        if w.start < segment.start - WORD_TIME_TOLERANCE \
                or w.end > segment.end + WORD_TIME_TOLERANCE:
            out.append(Violation(f'words[{i}]', 'must lie within segment bounds'))
        if w.start < prev_start:
            out.append(Violation(f'words[{i}]', 'start times must be non-decreasing'))
        prev_start = w.start
    return out


@validate.register
def _(transcript: Transcript) -> list:
    out = []
    for i, s in enumerate(transcript.segments):
        if s.session_id != transcript.session_id:
            out.append(Violation(f'segments[{i}].session_id',
                                 f'must equal {transcript.session_id!r}'))
        out.extend(Violation(f'segments[{i}].{v.field}', v.rule)
                   for v in validate(s))
    return out


@validate.register
def _(activity: SpeakerActivity) -> list:
    out = []
    for i, e in enumerate(activity.entries):
        if not _finite(e.duration) or e.duration <= 0:
            out.append(Violation(f'entries[{i}].duration', 'must be > 0'))
        if not _finite(e.onset) or e.onset < 0:
            out.append(Violation(f'entries[{i}].onset', 'must be >= 0'))
    return out


@validate.register
def _(waveform: Waveform) -> list:
    out = []
    if not isinstance(waveform.sample_rate, (int, np.integer)) \
            or waveform.sample_rate <= 0:
        out.append(Violation('sample_rate', 'must be a positive integer'))
    if len(waveform.samples) and (
            not np.all(np.isfinite(waveform.samples))
            or np.max(np.abs(waveform.samples)) > AMPLITUDE_HEADROOM):
        out.append(Violation('samples', f'must be finite and within ±{AMPLITUDE_HEADROOM}'))
    return out


@validate.register
def _(trial: Trial) -> list:
    if trial.label not in (TARGET, NONTARGET):
        return [Violation('label', f'must be one of {(TARGET, NONTARGET)}')]
    return []


@validate.register
def _(scored: ScoredTrial) -> list:
    out = [Violation(f'trial.{v.field}', v.rule) for v in validate(scored.trial)]
    if not _finite(scored.score):
        out.append(Violation('score', 'must be finite'))
    return out


@validate.register
def _(embedding: Embedding) -> list:
    out = []
    if embedding.dim == 0:
        out.append(Violation('dim', 'must be positive'))
    elif not np.all(np.isfinite(embedding.values)):
        out.append(Violation('values', 'must be finite'))
    return out


@validate.register
def _(source: SourceRef) -> list:
    out = []
    if not _finite(source.offset) or source.offset < 0:
        out.append(Violation('offset', 'must be >= 0'))
    if not _finite(source.gain) or source.gain <= 0:
        out.append(Violation('gain', 'must be > 0'))
    return out


@validate.register
def _(record: MixtureRecord) -> list:
    # Local import: diar_metrics depends on this module.
    from tsakit.diar_metrics import overlap_ratio

    out = []
    for name in ('target_source', 'nontarget_source'):
        out.extend(Violation(f'{name}.{v.field}', v.rule)
                   for v in validate(getattr(record, name)))
    if not 0 < record.overlap_requested <= 1:
        out.append(Violation('overlap_requested', 'must be in (0, 1]'))
    if not 0 <= record.overlap_measured <= 1:
        out.append(Violation('overlap_measured', 'must be in [0, 1]'))
    out.extend(Violation(f'activity.{v.field}', v.rule)
               for v in validate(record.activity))
    speakers = record.activity.speakers()
    if len(speakers) != 2:
        out.append(Violation('activity', 'must contain exactly 2 speakers'))
    else:
        measured = overlap_ratio(
            record.activity.intervals(record.target_source.speaker_id),
            record.activity.intervals(record.nontarget_source.speaker_id),
        )
        if abs(measured - record.overlap_measured) > 1e-9:
            out.append(Violation(
                'overlap_measured',
                f'must match activity ({measured!r})'))
    return out
