"""ASV evaluation protocol: enrollment sets, trial lists, attack configurations."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Sequence

import numpy as np

from tsakit.formats.protocol import TrialList
from tsakit.mixgen import SourceCatalog
from tsakit.model import NONTARGET, TARGET, MixtureRecord, Trial

__all__ = [
    'IGNORANT', 'SEMI_INFORMED', 'ORIGINAL', 'ANONYMIZED',
    'AttackConfig',
    'generate_enrollment',
    'generate_trials',
    'save_enrollment',
    'load_enrollment',
]

IGNORANT = 'ignorant'
SEMI_INFORMED = 'semi-informed'
ORIGINAL = 'original'
ANONYMIZED = 'anonymized'


@dataclass(frozen=True)
class AttackConfig:
    """How the attacker extracts and verifies the target speaker.

    ``attacker_kind`` selects the enrollment data (original for an ignorant
    attacker, anonymized for a semi-informed one); ``reference_kind`` selects
    the TSE reference utterance.
    """
    attacker_kind: str = SEMI_INFORMED
    reference_kind: str = ORIGINAL
    tse_adapter: str = 'tse'
    asv_adapter: str = 'embedder'

    def __post_init__(self):
        if self.attacker_kind not in (IGNORANT, SEMI_INFORMED):
            raise ValueError(f'attacker_kind must be {IGNORANT} or {SEMI_INFORMED}')
        if self.reference_kind not in (ORIGINAL, ANONYMIZED):
            raise ValueError(f'reference_kind must be {ORIGINAL} or {ANONYMIZED}')

    @property
    def tag(self) -> str:
        return f'attack-{self.attacker_kind}-{self.reference_kind}-ref'

    @property
    def needs_anonymized_enrollment(self) -> bool:
        return self.attacker_kind == SEMI_INFORMED

    @property
    def needs_anonymized_reference(self) -> bool:
        return self.reference_kind == ANONYMIZED


def generate_enrollment(catalog: SourceCatalog, per_speaker: int = 15,
                        exclude: Iterable[str] = (), seed: int = 0,
                        speakers: Sequence[str] = None) -> Dict[str, List[str]]:
    """Pick ``per_speaker`` enrollment utterances per speaker outside ``exclude``.

    Selection is a seeded draw without replacement; lists are returned sorted.
    """
    exclude = set(exclude)
    rng = np.random.default_rng(seed)
    by_speaker = catalog.by_speaker()
    if speakers is None:
        speakers = list(by_speaker)
    out = {}
    for spk in sorted(speakers):
        candidates = [e.utterance_id for e in by_speaker.get(spk, [])
                      if e.utterance_id not in exclude]
        if len(candidates) < per_speaker:
            raise ValueError(
                f'speaker {spk} has {len(candidates)} utterances available for '
                f'enrollment, need {per_speaker}')
        picked = rng.choice(len(candidates), size=per_speaker, replace=False)
        out[spk] = sorted(candidates[i] for i in picked)
    return out


def generate_trials(records: Sequence[MixtureRecord], speakers: Iterable[str],
                    condition: float = None) -> TrialList:
    """One target trial and one nontarget trial per other enrolled speaker,
    for every mixture. The test side is the mixture id.
    """
    speakers = sorted(set(speakers))
    enrolled = set(speakers)
    trials = []
    for r in records:
        target = r.target_source.speaker_id
        if target not in enrolled:
            raise ValueError(
                f'mixture {r.mixture_id}: target speaker {target} is not enrolled')
        trials.append(Trial(target, r.mixture_id, TARGET))
        trials.extend(Trial(s, r.mixture_id, NONTARGET) for s in speakers if s != target)
    return TrialList(tuple(trials), condition)


def save_enrollment(path, enrollment: Mapping[str, List[str]]) -> None:
    Path(path).write_text(json.dumps(dict(sorted(enrollment.items())), indent=1) + '\n',
                          encoding='utf-8')


def load_enrollment(path) -> Dict[str, List[str]]:
    return json.loads(Path(path).read_text(encoding='utf-8'))
