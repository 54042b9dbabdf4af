"""Word error rates for single streams and speaker-attributed transcripts.

* :func:`word_error_rate` is plain Levenshtein WER.
* :func:`cp_wer` concatenates each speaker's utterances and picks the
  speaker assignment with the fewest errors.
* :func:`tcp_wer` does the same with a time-constrained Levenshtein
  distance: a reference and a hypothesis word may only be matched or
  substituted if the hypothesis word overlaps the reference word's interval
  widened by ``collar`` seconds.

Among alignments with equal error count, the one with the fewest
substitutions is reported.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from tsakit.model import Segment, TimedWord, Transcript

__all__ = [
    'UNBOUNDED',
    'DEFAULT_COLLAR',
    'WerStats',
    'CpWerResult',
    'TcpParams',
    'normalize_words',
    'assign_pseudo_timestamps',
    'edit_counts',
    'word_error_rate',
    'cp_wer',
    'tcp_wer',
    'cp_wer_corpus',
    'tcp_wer_corpus',
]

UNBOUNDED = math.inf
DEFAULT_COLLAR = 5.0
STRIP_CHARS = '.,!?;:'


@dataclass(frozen=True)
class WerStats:
    substitutions: int = 0
    insertions: int = 0
    deletions: int = 0
    ref_length: int = 0

    @property
    def errors(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    @property
    def rate(self) -> float:
        """``errors / ref_length``; 0 for an empty exact match, ``inf`` for
        errors against an empty reference."""
        if self.ref_length == 0:
            return 0.0 if self.errors == 0 else math.inf
        return self.errors / self.ref_length

    def __add__(self, other: 'WerStats') -> 'WerStats':
        if not isinstance(other, WerStats):
            return NotImplemented
        return WerStats(
            self.substitutions + other.substitutions,
            self.insertions + other.insertions,
            self.deletions + other.deletions,
            self.ref_length + other.ref_length,
        )

    def __radd__(self, other):
        if other == 0:
            return self
        return NotImplemented

    def as_dict(self) -> dict:
        return {'substitutions': self.substitutions, 'insertions': self.insertions,
                'deletions': self.deletions, 'ref_length': self.ref_length,
                'errors': self.errors, 'rate': self.rate}


@dataclass(frozen=True)
class CpWerResult:
    stats: WerStats
    # reference speaker -> hypothesis speaker, or None when left unmatched
    assignment: Dict[str, Optional[str]] = field(default_factory=dict)


@dataclass(frozen=True)
class TcpParams:
    collar: float = DEFAULT_COLLAR
    pseudo_timestamping: str = 'equal-division'

    def __post_init__(self):
        if math.isnan(self.collar) or self.collar < 0:
            raise ValueError(f'collar must be >= 0 or UNBOUNDED, got {self.collar}')
        if self.pseudo_timestamping != 'equal-division':
            raise ValueError(f'unsupported pseudo-timestamping {self.pseudo_timestamping!r}')


def normalize_word(word: str) -> str:
    return word.lower().strip(STRIP_CHARS)


def normalize_words(words: Iterable[str]) -> List[str]:
    """Lowercase and strip ``.,!?;:`` at token edges; tokens that become
    empty are dropped.

    >>> normalize_words(['Hello,', 'World!', '...'])
    ['hello', 'world']
    """
    out = []
    for w in words:
        w = normalize_word(w)
        if w:
            out.append(w)
    return out


def assign_pseudo_timestamps(segment: Segment) -> Segment:
    """Split the segment into equal, contiguous word intervals.

    >>> seg = Segment('m', 's1', 0.0, 2.0, (TimedWord('a', 0, 2), TimedWord('b', 0, 2)))
    >>> [(w.start, w.end) for w in assign_pseudo_timestamps(seg).words]
    [(0.0, 1.0), (1.0, 2.0)]
    """
    n = len(segment.words)
    if n == 0:
        return segment
    d = segment.end - segment.start
    bounds = [segment.start + d * k / n for k in range(n)] + [segment.end]
    words = tuple(
        TimedWord(w.text, bounds[k], bounds[k + 1])
        for k, w in enumerate(segment.words)
    )
    return replace(segment, words=words)


def edit_counts(ref: Sequence[str], hyp: Sequence[str],
                ref_times: Sequence[Tuple[float, float]] = None,
                hyp_times: Sequence[Tuple[float, float]] = None,
                collar: float = UNBOUNDED) -> Tuple[int, int, int]:
    """Return ``(substitutions, insertions, deletions)`` of the best alignment.

    Without times every pair is admissible. With times, ``ref[i]`` and
    ``hyp[j]`` may be aligned only if ``[rs - collar, re + collar]``
    intersects ``[hs, he]``.
    """
    n, m = len(ref), len(hyp)
    # Lexicographic (errors, substitutions) packed into one integer.
    K = n + m + 1
    timed = ref_times is not None and hyp_times is not None and collar != UNBOUNDED
    if timed:
        r_lo = [s - collar for s, _ in ref_times]
        r_hi = [e + collar for _, e in ref_times]
        h_lo = [s for s, _ in hyp_times]
        h_hi = [e for _, e in hyp_times]
    prev = [j * K for j in range(m + 1)]
    for i in range(1, n + 1):
        r = ref[i - 1]
        cur = [i * K] + [0] * m
        if timed:
            lo, hi = r_lo[i - 1], r_hi[i - 1]
        for j in range(1, m + 1):
            best = prev[j] + K
            ins = cur[j - 1] + K
            if ins < best:
                best = ins
            if not timed or (lo <= h_hi[j - 1] and h_lo[j - 1] <= hi):
                diag = prev[j - 1] if hyp[j - 1] == r else prev[j - 1] + K + 1
                if diag < best:
                    best = diag
            cur[j] = best
        prev = cur
    errors, subs = divmod(prev[m], K)
    # n = M + S + D and m = M + S + I, hence D - I = n - m.
    indel = errors - subs
    deletions = (indel + n - m) // 2
    insertions = (indel - n + m) // 2
    return subs, insertions, deletions


def word_error_rate(ref: Sequence[str], hyp: Sequence[str],
                    normalize: bool = True) -> WerStats:
    """Levenshtein WER of two word lists.

    >>> word_error_rate('a b c'.split(), 'a x c'.split())
    WerStats(substitutions=1, insertions=0, deletions=0, ref_length=3)
    """
    if normalize:
        ref, hyp = normalize_words(ref), normalize_words(hyp)
    s, i, d = edit_counts(list(ref), list(hyp))
    return WerStats(s, i, d, len(ref))


def _stream_words(transcript: Transcript, speaker: str) -> List[str]:
    segments = sorted((s for s in transcript.segments if s.speaker_id == speaker),
                      key=lambda s: s.start)
    return [w.text for s in segments for w in s.words]


def _timed_stream(transcript: Transcript, speaker: str, normalize: bool):
    words = [w for s in transcript.segments if s.speaker_id == speaker
             for w in assign_pseudo_timestamps(s).words]
    words.sort(key=lambda w: w.start)
    if normalize:
        words = [(normalize_word(w.text), (w.start, w.end)) for w in words]
        words = [x for x in words if x[0]]
    else:
        words = [(w.text, (w.start, w.end)) for w in words]
    return [w for w, _ in words], [t for _, t in words]


def _assign(ref_streams, hyp_streams, distance) -> CpWerResult:
    from tsakit.assignment import min_cost_assignment

    ref_speakers = list(ref_streams)
    hyp_speakers = list(hyp_streams)
    size = max(len(ref_speakers), len(hyp_speakers))
    counts = {}
    total_words = sum(len(v[0]) for v in ref_streams.values()) + \
        sum(len(v[0]) for v in hyp_streams.values())
    K = total_words + 1
    cost = [[0] * size for _ in range(size)]
    for i in range(size):
        for j in range(size):
            if i < len(ref_speakers) and j < len(hyp_speakers):
                c = distance(ref_streams[ref_speakers[i]], hyp_streams[hyp_speakers[j]])
            elif i < len(ref_speakers):
                c = (0, 0, len(ref_streams[ref_speakers[i]][0]))
            elif j < len(hyp_speakers):
                c = (0, len(hyp_streams[hyp_speakers[j]][0]), 0)
            else:
                c = (0, 0, 0)
            counts[i, j] = c
            cost[i][j] = sum(c) * K + c[0]
    pairs = min_cost_assignment(cost) if size else []
    stats = WerStats(ref_length=sum(len(v[0]) for v in ref_streams.values()))
    assignment: Dict[str, Optional[str]] = {r: None for r in ref_speakers}
    for i, j in pairs:
        s, ins, d = counts[i, j]
        stats = stats + WerStats(s, ins, d, 0)
        if i < len(ref_speakers) and j < len(hyp_speakers):
            assignment[ref_speakers[i]] = hyp_speakers[j]
    return CpWerResult(stats, assignment)


def cp_wer(ref: Transcript, hyp: Transcript, normalize: bool = True) -> CpWerResult:
    """Concatenated minimum-permutation WER for one session.

    >>> from tsakit.formats import parse_seglst
    >>> r = parse_seglst('{"session_id":"m","speaker":"s1","start_time":0,"end_time":1,"words":"hello world"}')['m']
    >>> h = parse_seglst('{"session_id":"m","speaker":"A","start_time":0,"end_time":1,"words":"hello word"}')['m']
    >>> res = cp_wer(r, h)
    >>> res.stats.rate, res.assignment
    (0.5, {'s1': 'A'})
    """
    def streams(t):
        out = {}
        for spk in t.speakers():
            words = _stream_words(t, spk)
            out[spk] = (normalize_words(words) if normalize else words, None)
        return out

    def distance(r, h):
        return edit_counts(r[0], h[0])

    return _assign(streams(ref), streams(hyp), distance)


def tcp_wer(ref: Transcript, hyp: Transcript, params: TcpParams = TcpParams(),
            normalize: bool = True) -> CpWerResult:
    """Time-constrained cpWER for one session.

    Word times come from equal division of each segment. Each speaker's
    words are ordered by start time.
    """
    def streams(t):
        return {spk: _timed_stream(t, spk, normalize) for spk in t.speakers()}

    def distance(r, h):
        return edit_counts(r[0], h[0], r[1], h[1], params.collar)

    return _assign(streams(ref), streams(hyp), distance)


def _corpus(refs: Mapping[str, Transcript], hyps: Mapping[str, Transcript], score):
    total = WerStats()
    for session in sorted(set(refs) | set(hyps)):
        r = refs.get(session, Transcript(session))
        h = hyps.get(session, Transcript(session))
        total = total + score(r, h).stats
    return total


def cp_wer_corpus(refs: Mapping[str, Transcript], hyps: Mapping[str, Transcript],
                  normalize: bool = True) -> WerStats:
    """Sum of per-session cpWER counts; sessions missing on one side count as empty."""
    return _corpus(refs, hyps, lambda r, h: cp_wer(r, h, normalize))


def tcp_wer_corpus(refs: Mapping[str, Transcript], hyps: Mapping[str, Transcript],
                   params: TcpParams = TcpParams(), normalize: bool = True) -> WerStats:
    return _corpus(refs, hyps, lambda r, h: tcp_wer(r, h, params, normalize))
