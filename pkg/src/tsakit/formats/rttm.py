"""NIST RTTM ``SPEAKER`` lines.

Layout (10 fields)::

    SPEAKER <session> 1 <onset> <duration> <NA> <NA> <speaker> <NA> <NA>
"""
from __future__ import annotations

import io
import math
from pathlib import Path
from typing import Dict, IO, Union

from tsakit.formats.errors import FormatError
from tsakit.model import ActivityEntry, SpeakerActivity


def parse_rttm(text: Union[str, IO[str]], source: str = None) -> Dict[str, SpeakerActivity]:
    """Parse RTTM text into one :class:`SpeakerActivity` per session.

    Blank lines and lines starting with ``;`` are skipped.
    """
    lines = text.splitlines() if isinstance(text, str) else text
    sessions: Dict[str, list] = {}
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith(';'):
            continue
        fields = stripped.split()
        if len(fields) != 10:
            raise FormatError(f'expected 10 fields, got {len(fields)}', lineno, source)
        if fields[0] != 'SPEAKER':
            raise FormatError(f'expected record type SPEAKER, got {fields[0]!r}', lineno, source)
        try:
            onset = float(fields[3])
            duration = float(fields[4])
        except ValueError:
            raise FormatError('onset and duration must be numeric', lineno, source) from None
        if not (math.isfinite(onset) and math.isfinite(duration)):
            raise FormatError('onset and duration must be finite', lineno, source)
        if onset < 0:
            raise FormatError('onset must be >= 0', lineno, source)
        if duration <= 0:
            raise FormatError('duration must be > 0', lineno, source)
        session_id = fields[1]
        sessions.setdefault(session_id, []).append(
            ActivityEntry(fields[7], onset, duration))
    return {k: SpeakerActivity(k, tuple(v)) for k, v in sessions.items()}


def write_rttm(activities, precision: int = 2) -> str:
    """Serialize one activity, a sequence of them, or a session dict."""
    if isinstance(activities, SpeakerActivity):
        activities = [activities]
    elif isinstance(activities, dict):
        activities = activities.values()
    out = io.StringIO()
    for act in activities:
        for e in act.entries:
            out.write(
                f'SPEAKER {act.session_id} 1 {e.onset:.{precision}f} '
                f'{e.duration:.{precision}f} <NA> <NA> {e.speaker_id} <NA> <NA>\n')
    return out.getvalue()


def read_rttm(path) -> Dict[str, SpeakerActivity]:
    with open(path, encoding='utf-8') as f:
        return parse_rttm(f, source=str(path))


def save_rttm(path, activities, precision: int = 2) -> None:
    Path(path).write_text(write_rttm(activities, precision), encoding='utf-8')
