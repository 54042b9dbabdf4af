"""SegLST: one JSON object per line with ``session_id``, ``speaker``,
``start_time``, ``end_time`` and space-separated ``words``.

Parsed words carry placeholder timings equal to their segment bounds;
:func:`tsakit.text_metrics.assign_pseudo_timestamps` refines them.
"""
from __future__ import annotations

import io
import json
import math
from pathlib import Path
from typing import Dict, IO, Iterable, Union

from tsakit.formats.errors import FormatError
from tsakit.model import Segment, TimedWord, Transcript

REQUIRED_KEYS = ('session_id', 'speaker', 'start_time', 'end_time', 'words')


def _lines(text: Union[str, IO[str]]):
    if isinstance(text, str):
        return text.splitlines()
    return text


def _time(value, key, lineno, source):
    if isinstance(value, bool):
        raise FormatError(f'{key} must be numeric', lineno, source)
    try:
        t = float(value)
    except (TypeError, ValueError, OverflowError):
        raise FormatError(f'{key} must be numeric, got {value!r:.40}', lineno, source) from None
    if not math.isfinite(t):
        raise FormatError(f'{key} must be finite', lineno, source)
    return t


def parse_seglst(text: Union[str, IO[str]], source: str = None) -> Dict[str, Transcript]:
    """Parse SegLST text into one :class:`Transcript` per session.

    Sessions appear in order of first occurrence; segment order within a
    session is the input order.
    """
    sessions: Dict[str, list] = {}
    for lineno, line in enumerate(_lines(text), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise FormatError(f'malformed JSON ({e.msg})', lineno, source) from None
        except (ValueError, RecursionError) as e:
            raise FormatError(f'malformed JSON ({e})', lineno, source) from None
        if not isinstance(obj, dict):
            raise FormatError('expected a JSON object', lineno, source)
        for key in REQUIRED_KEYS:
            if key not in obj:
                raise FormatError(f'missing key: {key}', lineno, source)
        start = _time(obj['start_time'], 'start_time', lineno, source)
        end = _time(obj['end_time'], 'end_time', lineno, source)
        if end < start:
            raise FormatError('start_time must be <= end_time', lineno, source)
        words = obj['words']
        if not isinstance(words, str):
            raise FormatError('words must be a string', lineno, source)
        session_id = str(obj['session_id'])
        segment = Segment(
            session_id=session_id,
            speaker_id=str(obj['speaker']),
            start=start,
            end=end,
            words=tuple(TimedWord(w, start, end) for w in words.split()),
        )
        sessions.setdefault(session_id, []).append(segment)
    return {k: Transcript(k, tuple(v)) for k, v in sessions.items()}


def _transcripts(obj) -> Iterable[Transcript]:
    if isinstance(obj, Transcript):
        return [obj]
    if isinstance(obj, dict):
        return obj.values()
    return obj


def write_seglst(transcripts) -> str:
    """Serialize one transcript, a sequence of them, or a session dict."""
    out = io.StringIO()
    for t in _transcripts(transcripts):
        for s in t.segments:
            out.write(json.dumps({
                'session_id': s.session_id,
                'speaker': s.speaker_id,
                'start_time': s.start,
                'end_time': s.end,
                'words': s.text,
            }, ensure_ascii=False))
            out.write('\n')
    return out.getvalue()


def read_seglst(path) -> Dict[str, Transcript]:
    with open(path, encoding='utf-8') as f:
        return parse_seglst(f, source=str(path))


def save_seglst(path, transcripts) -> None:
    Path(path).write_text(write_seglst(transcripts), encoding='utf-8')
