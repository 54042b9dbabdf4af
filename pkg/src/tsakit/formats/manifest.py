"""Dataset manifest: a JSON document listing mixture records.

Record field names mirror :class:`tsakit.model.MixtureRecord`. Audio,
RTTM and SegLST files are located by convention relative to the manifest
directory (see :mod:`tsakit.mixgen`).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from tsakit.formats.errors import FormatError
from tsakit.model import ActivityEntry, MixtureRecord, SourceRef, SpeakerActivity, validate

MANIFEST_FORMAT = 'tsakit-manifest/1'


@dataclass(frozen=True)
class Manifest:
    records: Tuple[MixtureRecord, ...]
    sample_rate: int = 16000
    seed: Optional[int] = None
    # mixture_id -> utterance id used as the TSE reference for the target speaker
    references: Dict[str, str] = field(default_factory=dict)

    def conditions(self) -> List[float]:
        return sorted({r.overlap_requested for r in self.records})

    def by_condition(self, condition: float) -> List[MixtureRecord]:
        return [r for r in self.records if r.overlap_requested == condition]

    def record(self, mixture_id: str) -> MixtureRecord:
        for r in self.records:
            if r.mixture_id == mixture_id:
                return r
        raise KeyError(mixture_id)

    def utterance_ids(self) -> set:
        """Every utterance used in a mixture or as a TSE reference."""
        used = set(self.references.values())
        for r in self.records:
            used.add(r.target_source.utterance_id)
            used.add(r.nontarget_source.utterance_id)
        return used


def _source_to_dict(s: SourceRef) -> dict:
    return {'utterance_id': s.utterance_id, 'speaker_id': s.speaker_id,
            'offset': s.offset, 'gain': s.gain}


def record_to_dict(r: MixtureRecord) -> dict:
    return {
        'mixture_id': r.mixture_id,
        'target_source': _source_to_dict(r.target_source),
        'nontarget_source': _source_to_dict(r.nontarget_source),
        'overlap_requested': r.overlap_requested,
        'overlap_measured': r.overlap_measured,
        'activity': {
            'session_id': r.activity.session_id,
            'entries': [{'speaker_id': e.speaker_id, 'onset': e.onset,
                         'duration': e.duration} for e in r.activity.entries],
        },
    }


def record_from_dict(d: dict) -> MixtureRecord:
    try:
        return MixtureRecord(
            mixture_id=str(d['mixture_id']),
            target_source=SourceRef(**d['target_source']),
            nontarget_source=SourceRef(**d['nontarget_source']),
            overlap_requested=float(d['overlap_requested']),
            overlap_measured=float(d['overlap_measured']),
            activity=SpeakerActivity(
                d['activity']['session_id'],
                tuple(ActivityEntry(e['speaker_id'], float(e['onset']), float(e['duration']))
                      for e in d['activity']['entries'])),
        )
    except (KeyError, TypeError, ValueError, OverflowError) as e:
        raise FormatError(f'malformed mixture record: {e!r}') from None


def dumps_manifest(manifest: Manifest) -> str:
    doc = {
        'format': MANIFEST_FORMAT,
        'sample_rate': manifest.sample_rate,
        'seed': manifest.seed,
        'references': dict(sorted(manifest.references.items())),
        'records': [record_to_dict(r) for r in manifest.records],
    }
    return json.dumps(doc, indent=1, sort_keys=True) + '\n'


def loads_manifest(text: str, source: str = None) -> Manifest:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(f'malformed JSON ({e.msg})', e.lineno, source) from None
    if not isinstance(doc, dict) or 'records' not in doc:
        raise FormatError('manifest must be an object with "records"', source=source)
    records = tuple(record_from_dict(d) for d in doc['records'])
    for r in records:
        problems = validate(r)
        if problems:
            raise FormatError(
                f'invalid record {r.mixture_id}: ' + '; '.join(map(str, problems)),
                source=source)
    return Manifest(
        records=records,
        sample_rate=int(doc.get('sample_rate', 16000)),
        seed=doc.get('seed'),
        references=dict(doc.get('references', {})),
    )


def save_manifest(path, manifest: Manifest) -> None:
    Path(path).write_text(dumps_manifest(manifest), encoding='utf-8')


def load_manifest(path) -> Manifest:
    return loads_manifest(Path(path).read_text(encoding='utf-8'), source=str(path))
