"""Single pipeline steps over files.

Each adapter-backed step calls :func:`invoke`, reads the output back and
enforces the contract for its kind.
"""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, Mapping, Optional

import numpy as np

from tsakit.formats.errors import FormatError
from tsakit.formats.protocol import parse_embeddings
from tsakit.formats.rttm import read_rttm
from tsakit.formats.seglst import read_seglst
from tsakit.formats.wav import read_wav, write_wav
from tsakit.model import Embedding, Segment, SpeakerActivity, Transcript, Waveform
from tsakit.pipeline.adapters import AdapterError, AdapterSpec, invoke
from tsakit.signal_metrics import add, pad_to, subtract

logger = logging.getLogger(__name__)

# Allowed relative drift of anonymizer output length.
DURATION_TOLERANCE = 0.02

__all__ = [
    'DURATION_TOLERANCE',
    'StageError',
    'run_tse',
    'compute_residual',
    'run_anonymizer',
    'recombine',
    'run_asr',
    'run_diarizer',
    'run_embedder',
]


class StageError(RuntimeError):
    def __init__(self, stage: str, adapter: str, message: str):
        self.stage = stage
        self.adapter = adapter
        super().__init__(f'{stage}: {message}')


def _check_kind(adapter: AdapterSpec, kind: str):
    if adapter.kind != kind:
        raise ValueError(f'expected a {kind} adapter, got {adapter.kind}')


def _call(adapter, stage, values, log_path):
    try:
        invoke(adapter, values, log_path)
    except AdapterError as e:
        raise StageError(stage, adapter.label, str(e)) from e


def _read_output(adapter, stage, path):
    try:
        return read_wav(path)
    except (ValueError, OSError) as e:
        raise StageError(stage, adapter.label, f'unreadable output: {e}') from e


def _fit_length(wav: Waveform, length: int, what: str) -> Waveform:
    if len(wav) != length:
        logger.warning('%s: output has %d samples, expected %d; %s',
                       what, len(wav), length,
                       'truncating' if len(wav) > length else 'zero-padding')
        wav = Waveform(pad_to(wav.samples, length), wav.sample_rate)
    return wav


def run_tse(adapter: AdapterSpec, mixture_path, reference_path, out_path,
            mixture_id: str = '', dataset: str = '', stage: str = 'extracted',
            log_path=None, mixture: Waveform = None) -> Waveform:
    """Extract the target speaker from a mixture.

    The output keeps the mixture's sample rate and length; a length
    mismatch is padded or truncated with a warning, a rate mismatch fails.
    """
    _check_kind(adapter, 'tse')
    if mixture is None:
        mixture = read_wav(mixture_path)
    _call(adapter, stage, {'in': mixture_path, 'ref': reference_path, 'out': out_path,
                           'id': mixture_id, 'dataset': dataset, 'stage': stage}, log_path)
    out = _read_output(adapter, stage, out_path)
    if out.sample_rate != mixture.sample_rate:
        raise StageError(stage, adapter.label,
                         f'sample rate {out.sample_rate} differs from mixture {mixture.sample_rate}')
    fitted = _fit_length(out, len(mixture), f'{adapter.label} ({mixture_id})')
    if fitted is not out:
        write_wav(out_path, fitted)
    return fitted


def compute_residual(mixture: Waveform, extracted: Waveform) -> Waveform:
    """Mixture minus extracted target: the non-target speaker's residual signal."""
    return subtract(mixture, extracted)


def run_anonymizer(adapter: AdapterSpec, extracted_path, out_path, mixture_id: str = '',
                   dataset: str = '', stage: str = 'anonymized', log_path=None,
                   extracted: Waveform = None) -> Waveform:
    """Anonymize an extracted utterance.

    Output more than 2% longer or shorter than the input is an error;
    smaller drift is padded or truncated with a warning.
    """
    _check_kind(adapter, 'anonymizer')
    if extracted is None:
        extracted = read_wav(extracted_path)
    _call(adapter, stage, {'in': extracted_path, 'out': out_path, 'id': mixture_id,
                           'dataset': dataset, 'stage': stage}, log_path)
    out = _read_output(adapter, stage, out_path)
    if out.sample_rate != extracted.sample_rate:
        raise StageError(stage, adapter.label,
                         f'sample rate {out.sample_rate} differs from input {extracted.sample_rate}')
    if abs(len(out) - len(extracted)) > DURATION_TOLERANCE * len(extracted):
        raise StageError(stage, adapter.label,
                         f'output length {len(out)} deviates more than '
                         f'{DURATION_TOLERANCE:.0%} from input length {len(extracted)}')
    fitted = _fit_length(out, len(extracted), f'{adapter.label} ({mixture_id})')
    if fitted is not out:
        write_wav(out_path, fitted)
    return fitted


def recombine(anonymized: Waveform, residual: Waveform) -> Waveform:
    return add(anonymized, residual)


def run_asr(adapter: AdapterSpec, wav_path, out_path, mixture_id: str, dataset: str = '',
            stage: str = '', log_path=None) -> Transcript:
    """Transcribe ``wav_path``; all output segments are attributed to ``mixture_id``."""
    _check_kind(adapter, 'asr')
    _call(adapter, f'asr:{stage}', {'in': wav_path, 'out': out_path, 'id': mixture_id,
                                    'dataset': dataset, 'stage': stage}, log_path)
    try:
        sessions = read_seglst(out_path)
    except (FormatError, OSError) as e:
        raise StageError(f'asr:{stage}', adapter.label, f'unreadable output: {e}') from e
    segments = tuple(
        Segment(mixture_id, s.speaker_id, s.start, s.end, s.words)
        for t in sessions.values() for s in t.segments)
    return Transcript(mixture_id, segments)


def run_diarizer(adapter: AdapterSpec, wav_path, out_path, mixture_id: str,
                 dataset: str = '', stage: str = '', log_path=None) -> SpeakerActivity:
    _check_kind(adapter, 'diarizer')
    _call(adapter, f'diarize:{stage}', {'in': wav_path, 'out': out_path, 'id': mixture_id,
                                        'dataset': dataset, 'stage': stage}, log_path)
    try:
        sessions = read_rttm(out_path)
    except (FormatError, OSError) as e:
        raise StageError(f'diarize:{stage}', adapter.label, f'unreadable output: {e}') from e
    entries = tuple(e for act in sessions.values() for e in act.entries)
    return SpeakerActivity(mixture_id, entries)


def run_embedder(adapter: AdapterSpec, items: Mapping[str, str], list_path, out_path,
                 call_id: str = '', dataset: str = '', stage: str = '',
                 log_path=None) -> Dict[str, Embedding]:
    """Embed every ``id -> wav path`` in one call (input is a list file)."""
    _check_kind(adapter, 'embedder')
    list_path = Path(list_path)
    list_path.parent.mkdir(parents=True, exist_ok=True)
    list_path.write_text(''.join(f'{k} {v}\n' for k, v in items.items()), encoding='utf-8')
    _call(adapter, f'embed:{stage}', {'in': list_path, 'out': out_path, 'id': call_id,
                                      'dataset': dataset, 'stage': stage}, log_path)
    try:
        embeddings = parse_embeddings(Path(out_path).read_text(encoding='utf-8'),
                                      source=str(out_path))
    except (FormatError, OSError) as e:
        raise StageError(f'embed:{stage}', adapter.label, f'unreadable output: {e}') from e
    missing = [k for k in items if k not in embeddings]
    if missing:
        raise StageError(f'embed:{stage}', adapter.label,
                         f'no embedding for: {", ".join(missing)}')
    return {k: embeddings[k] for k in items}
