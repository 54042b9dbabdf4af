"""Two-speaker sparse mixtures at controlled overlap ratios.

Overlap is intersection-over-union of the two speakers' activity. Each
mixture holds one utterance per speaker; the first (target) speaker's
stem is written as ``s1``, the non-target's as ``s2``.

Dataset layout written by :func:`build_dataset`::

    manifest.json  catalog.json
    wav/mix/<id>.wav  wav/s1/<id>.wav  wav/s2/<id>.wav
    rttm/<id>.rttm    seglst/<id>.seglst
"""
from __future__ import annotations

import functools
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from tsakit.diar_metrics import overlap_ratio
from tsakit.formats.manifest import Manifest, save_manifest
from tsakit.formats.rttm import save_rttm
from tsakit.formats.seglst import save_seglst
from tsakit.formats.wav import read_wav, write_wav
from tsakit.model import (ActivityEntry, MixtureRecord, Segment, SourceRef,
                          SpeakerActivity, TimedWord, Transcript, Waveform)
from tsakit.signal_metrics import add, pad_to

logger = logging.getLogger(__name__)

__all__ = [
    'DEFAULT_CONDITIONS',
    'CatalogEntry',
    'SourceCatalog',
    'OverlapPlan',
    'measure_overlap',
    'max_overlap',
    'plan_offsets',
    'synth_mixture',
    'build_dataset',
    'mixture_paths',
    'synthetic_catalog',
    'to_samples',
]

DEFAULT_CONDITIONS = (0.2, 0.4, 0.6, 0.8, 1.0)


@dataclass(frozen=True)
class CatalogEntry:
    utterance_id: str
    speaker_id: str
    path: str
    duration: float
    transcript: Optional[str] = None


@dataclass(frozen=True)
class SourceCatalog:
    entries: Tuple[CatalogEntry, ...]

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            if e.utterance_id in seen:
                raise ValueError(f'duplicate utterance id {e.utterance_id!r}')
            seen.add(e.utterance_id)
            if not e.duration > 0:
                raise ValueError(f'utterance {e.utterance_id!r}: duration must be > 0')

    def speakers(self) -> List[str]:
        return sorted({e.speaker_id for e in self.entries})

    def by_speaker(self) -> Dict[str, List[CatalogEntry]]:
        out: Dict[str, List[CatalogEntry]] = {}
        for e in sorted(self.entries, key=lambda e: e.utterance_id):
            out.setdefault(e.speaker_id, []).append(e)
        return dict(sorted(out.items()))

    def entry(self, utterance_id: str) -> CatalogEntry:
        for e in self.entries:
            if e.utterance_id == utterance_id:
                return e
        raise KeyError(utterance_id)

    @classmethod
    def load(cls, path) -> 'SourceCatalog':
        """Load a JSON list of entries; relative paths resolve against the file."""
        path = Path(path)
        base = path.parent
        with open(path, encoding='utf-8') as f:
            items = json.load(f)
        entries = []
        for d in items:
            p = Path(d['path'])
            if not p.is_absolute():
                p = base / p
            entries.append(CatalogEntry(
                utterance_id=str(d['utterance_id']),
                speaker_id=str(d['speaker_id']),
                path=str(p),
                duration=float(d['duration']),
                transcript=d.get('transcript'),
            ))
        return cls(tuple(entries))

    def save(self, path) -> None:
        items = []
        for e in self.entries:
            d = {'utterance_id': e.utterance_id, 'speaker_id': e.speaker_id,
                 'path': e.path, 'duration': e.duration}
            if e.transcript is not None:
                d['transcript'] = e.transcript
            items.append(d)
        Path(path).write_text(json.dumps(items, indent=1) + '\n', encoding='utf-8')


@dataclass(frozen=True)
class OverlapPlan:
    conditions: Tuple[float, ...] = DEFAULT_CONDITIONS
    mixtures_per_condition: int = 500
    seed: int = 0

    def __post_init__(self):
        for c in self.conditions:
            if not 0 < c <= 1:
                raise ValueError(f'overlap condition must be in (0, 1], got {c}')
        if self.mixtures_per_condition < 1:
            raise ValueError('mixtures_per_condition must be >= 1')


def to_samples(seconds: float, sample_rate: int) -> int:
    """Round half up to the nearest sample index."""
    return int(math.floor(seconds * sample_rate + 0.5))


def measure_overlap(activity: SpeakerActivity) -> float:
    """Intersection-over-union of the two speakers' activity.

    >>> measure_overlap(SpeakerActivity('m', (ActivityEntry('A', 0, 6), ActivityEntry('B', 4, 6))))
    0.2
    """
    speakers = activity.speakers()
    if len(speakers) != 2:
        raise ValueError(f'overlap needs exactly 2 speakers, got {len(speakers)}')
    a, b = speakers
    return overlap_ratio(activity.intervals(a), activity.intervals(b))


def max_overlap(dur_a: float, dur_b: float) -> float:
    """Largest IoU two single intervals can reach (full containment)."""
    return min(dur_a, dur_b) / max(dur_a, dur_b)


def plan_offsets(dur_a: float, dur_b: float, target_overlap: float) -> Tuple[float, float]:
    """Offsets placing A at 0 and B so that the IoU equals ``target_overlap``.

    With intersection ``x``, ``x / (dur_a + dur_b - x) = target``, so
    ``x = target (dur_a + dur_b) / (1 + target)`` and B starts at ``dur_a - x``.
    """
    if not (dur_a > 0 and dur_b > 0):
        raise ValueError('durations must be > 0')
    if not 0 < target_overlap <= 1:
        raise ValueError(f'target overlap must be in (0, 1], got {target_overlap}')
    limit = max_overlap(dur_a, dur_b)
    if target_overlap > limit * (1 + 1e-12):
        raise ValueError(
            f'overlap {target_overlap} unachievable for durations {dur_a} and {dur_b}; '
            f'maximum achievable ratio is {limit}')
    x = target_overlap * (dur_a + dur_b) / (1 + target_overlap)
    x = min(x, dur_a, dur_b)
    return 0.0, max(0.0, dur_a - x)


def synth_mixture(src_a: Waveform, src_b: Waveform, offsets: Tuple[float, float],
                  gains: Tuple[float, float] = (1.0, 1.0), mixture_id: str = 'mix',
                  speakers: Tuple[str, str] = ('A', 'B'),
                  utterances: Tuple[str, str] = ('a', 'b'),
                  overlap_requested: float = None,
                  durations: Tuple[float, float] = None):
    """Place two sources, scale them and sum.

    ``src_a`` is the target. ``durations`` are the activity lengths in
    seconds (default: the source lengths); placement in samples rounds the
    offsets half up.

    Returns ``(mixture, (stem_a, stem_b), record)``.
    """
    if src_a.sample_rate != src_b.sample_rate:
        raise ValueError(f'sample rate mismatch: {src_a.sample_rate} vs {src_b.sample_rate}')
    if min(gains) <= 0:
        raise ValueError(f'gains must be > 0, got {gains}')
    if min(offsets) < 0:
        raise ValueError(f'offsets must be >= 0, got {offsets}')
    sr = src_a.sample_rate
    if durations is None:
        durations = (src_a.duration, src_b.duration)
    starts = [to_samples(o, sr) for o in offsets]
    length = max(starts[0] + len(src_a), starts[1] + len(src_b))
    stems = []
    for src, start, gain in zip((src_a, src_b), starts, gains):
        padded = np.concatenate([np.zeros(start), gain * src.samples])
        stems.append(Waveform(pad_to(padded, length), sr))
    mixture = add(stems[0], stems[1])
    activity = SpeakerActivity(mixture_id, (
        ActivityEntry(speakers[0], float(offsets[0]), float(durations[0])),
        ActivityEntry(speakers[1], float(offsets[1]), float(durations[1])),
    ))
    measured = measure_overlap(activity)
    record = MixtureRecord(
        mixture_id=mixture_id,
        target_source=SourceRef(utterances[0], speakers[0], float(offsets[0]), float(gains[0])),
        nontarget_source=SourceRef(utterances[1], speakers[1], float(offsets[1]), float(gains[1])),
        overlap_requested=measured if overlap_requested is None else overlap_requested,
        overlap_measured=measured,
        activity=activity,
    )
    return mixture, (stems[0], stems[1]), record


def mixture_paths(root, mixture_id: str) -> Dict[str, Path]:
    root = Path(root)
    return {
        'mix': root / 'wav' / 'mix' / f'{mixture_id}.wav',
        's1': root / 'wav' / 's1' / f'{mixture_id}.wav',
        's2': root / 'wav' / 's2' / f'{mixture_id}.wav',
        'rttm': root / 'rttm' / f'{mixture_id}.rttm',
        'seglst': root / 'seglst' / f'{mixture_id}.seglst',
    }


def condition_tag(condition: float) -> str:
    return f'ov{int(round(condition * 100)):03d}'


def _trim_words(transcript: Optional[str], keep_fraction: float) -> Optional[str]:
    # Keep words whose equal-division midpoint falls inside the kept part.
    if transcript is None or keep_fraction >= 1:
        return transcript
    words = transcript.split()
    n = len(words)
    return ' '.join(w for k, w in enumerate(words) if (k + 0.5) / n <= keep_fraction)


def _segment(session, speaker, onset, duration, text) -> Segment:
    words = tuple(TimedWord(w, onset, onset + duration) for w in (text or '').split())
    return Segment(session, speaker, onset, onset + duration, words)


@functools.lru_cache(maxsize=512)
def _load(path: str) -> Waveform:
    return read_wav(path)


def build_dataset(catalog: SourceCatalog, plan: OverlapPlan, out_dir,
                  gain_jitter_db: float = 0.0, enroll_reserve: int = 15,
                  reference_pool: int = 2) -> Manifest:
    """Synthesize ``plan`` over ``catalog`` into ``out_dir``.

    Per speaker, ``enroll_reserve`` utterances are never mixed (left for
    enrollment) and ``reference_pool`` utterances are kept for TSE
    references; the rest are mixed. When a condition is unreachable for the
    drawn pair (IoU above ``min/max`` duration), the longer source is
    trimmed at the tail to ``shorter / condition`` seconds, and its
    reference words are cut to match.
    """
    by_speaker = catalog.by_speaker()
    speakers = list(by_speaker)
    if len(speakers) < 2:
        raise ValueError(f'insufficient catalog: need >= 2 speakers, got {len(speakers)}')
    if reference_pool < 1:
        raise ValueError('reference_pool must be >= 1')
    rng = np.random.default_rng(plan.seed)

    mix_pool, ref_pool = {}, {}
    need = enroll_reserve + reference_pool + 1
    for spk, entries in by_speaker.items():
        if len(entries) < need:
            raise ValueError(
                f'insufficient catalog: speaker {spk} has {len(entries)} utterances, '
                f'need >= {need} ({enroll_reserve} enrollment reserve + '
                f'{reference_pool} reference + 1 mixable)')
        order = [entries[i] for i in rng.permutation(len(entries))]
        ref_pool[spk] = order[enroll_reserve:enroll_reserve + reference_pool]
        mix_pool[spk] = order[enroll_reserve + reference_pool:]

    pairs = [(a, b) for a in speakers for b in speakers if a != b]
    with_transcripts = all(e.transcript is not None for e in catalog.entries)

    out_dir = Path(out_dir)
    for sub in ('wav/mix', 'wav/s1', 'wav/s2', 'rttm', 'seglst'):
        (out_dir / sub).mkdir(parents=True, exist_ok=True)

    records, references = [], {}
    sample_rate = None
    for condition in plan.conditions:
        chosen: List[Tuple[str, str]] = []
        while len(chosen) < plan.mixtures_per_condition:
            chosen.extend(pairs[i] for i in rng.permutation(len(pairs)))
        chosen = chosen[:plan.mixtures_per_condition]
        for i, (spk_t, spk_n) in enumerate(chosen):
            mixture_id = f'{condition_tag(condition)}_{i:04d}'
            ent_t = mix_pool[spk_t][rng.integers(len(mix_pool[spk_t]))]
            ent_n = mix_pool[spk_n][rng.integers(len(mix_pool[spk_n]))]
            ref_entry = ref_pool[spk_t][rng.integers(len(ref_pool[spk_t]))]
            wav_t, wav_n = _load(ent_t.path), _load(ent_n.path)
            if sample_rate is None:
                sample_rate = wav_t.sample_rate
            if wav_t.sample_rate != sample_rate or wav_n.sample_rate != sample_rate:
                raise ValueError(f'{mixture_id}: catalog sample rates differ')
            dur = [wav_t.duration, wav_n.duration]
            texts = [ent_t.transcript, ent_n.transcript]
            sources = [wav_t, wav_n]
            if condition > max_overlap(*dur):
                longer = 0 if dur[0] > dur[1] else 1
                trimmed = min(dur) / condition
                keep = to_samples(trimmed, sample_rate)
                sources[longer] = Waveform(sources[longer].samples[:keep], sample_rate)
                texts[longer] = _trim_words(texts[longer], trimmed / dur[longer])
                dur[longer] = trimmed
            target_first = bool(rng.random() < 0.5)
            if target_first:
                offsets = plan_offsets(dur[0], dur[1], condition)
            else:
                off_n, off_t = plan_offsets(dur[1], dur[0], condition)
                offsets = (off_t, off_n)
            if gain_jitter_db > 0:
                gains_db = rng.uniform(-gain_jitter_db, gain_jitter_db, size=2)
                gains = tuple(float(10 ** (g / 20)) for g in gains_db)
            else:
                gains = (1.0, 1.0)
            mixture, stems, record = synth_mixture(
                sources[0], sources[1], offsets, gains, mixture_id,
                speakers=(spk_t, spk_n),
                utterances=(ent_t.utterance_id, ent_n.utterance_id),
                overlap_requested=condition, durations=tuple(dur))
            paths = mixture_paths(out_dir, mixture_id)
            write_wav(paths['mix'], mixture)
            write_wav(paths['s1'], stems[0])
            write_wav(paths['s2'], stems[1])
            save_rttm(paths['rttm'], record.activity)
            if with_transcripts:
                save_seglst(paths['seglst'], Transcript(mixture_id, tuple(
                    _segment(mixture_id, e.speaker_id, e.onset, e.duration, text)
                    for e, text in zip(record.activity.entries, texts))))
            records.append(record)
            references[mixture_id] = ref_entry.utterance_id

    manifest = Manifest(tuple(records), sample_rate or 16000, plan.seed, references)
    save_manifest(out_dir / 'manifest.json', manifest)
    SourceCatalog(tuple(replace(e, path=str(Path(e.path).resolve()))
                        for e in catalog.entries)).save(out_dir / 'catalog.json')
    logger.info('wrote %d mixtures to %s', len(records), out_dir)
    return manifest


VOCABULARY = (
    'the of and to a in that was he it his is with for as had you not be her '
    'on at by which have or from this him but all she they were my are me one '
    'their so an said them we who would been will no when there if more out up '
    'into do any your what has man could other than our some very time upon '
    'about may its only now like little then can should made did us such great '
    'before must two these see know over much down after first good men').split()


def synthetic_catalog(out_dir, n_speakers: int = 40, utterances_per_speaker: int = 20,
                      sample_rate: int = 16000, min_duration: float = 0.5,
                      max_duration: float = 1.5, seed: int = 0,
                      amplitude: float = 0.3) -> SourceCatalog:
    """Write a catalog of synthetic single-speaker utterances.

    Each speaker gets a fixed fundamental; utterances are amplitude-modulated
    harmonic tones with light noise and random words at about 2.5 words/s.
    """
    rng = np.random.default_rng(seed)
    out_dir = Path(out_dir)
    (out_dir / 'wav').mkdir(parents=True, exist_ok=True)
    entries = []
    for s in range(n_speakers):
        speaker = f'spk{s:03d}'
        f0 = 90.0 + 160.0 * s / max(1, n_speakers - 1)
        for u in range(utterances_per_speaker):
            utt = f'{speaker}-utt{u:03d}'
            n = int(rng.integers(int(min_duration * sample_rate), int(max_duration * sample_rate) + 1))
            t = np.arange(n) / sample_rate
            sig = sum(np.sin(2 * np.pi * f0 * h * t + rng.uniform(0, 2 * np.pi)) / h
                      for h in range(1, 5))
            envelope = 0.55 + 0.45 * np.sin(2 * np.pi * rng.uniform(2, 5) * t) ** 2
            sig = sig * envelope + 0.05 * rng.standard_normal(n)
            sig = amplitude * sig / np.max(np.abs(sig))
            path = out_dir / 'wav' / f'{utt}.wav'
            write_wav(path, Waveform(sig, sample_rate))
            n_words = max(1, int(round(2.5 * n / sample_rate)))
            words = ' '.join(VOCABULARY[i] for i in rng.integers(len(VOCABULARY), size=n_words))
            entries.append(CatalogEntry(utt, speaker, str(path), n / sample_rate, words))
    catalog = SourceCatalog(tuple(entries))
    catalog.save(out_dir / 'catalog.json')
    return catalog
