"""Readers and writers for the on-disk formats used by the toolkit."""
from tsakit.formats.errors import FormatError
from tsakit.formats.seglst import parse_seglst, write_seglst, read_seglst, save_seglst
from tsakit.formats.rttm import parse_rttm, write_rttm, read_rttm, save_rttm
from tsakit.formats.wav import read_wav, write_wav, WavFormatError
from tsakit.formats.protocol import (
    TrialList,
    parse_trials,
    write_trials,
    parse_scores,
    write_scores,
    parse_embeddings,
    write_embeddings,
)
from tsakit.formats.manifest import Manifest, load_manifest, save_manifest

__all__ = [
    'FormatError',
    'WavFormatError',
    'parse_seglst', 'write_seglst', 'read_seglst', 'save_seglst',
    'parse_rttm', 'write_rttm', 'read_rttm', 'save_rttm',
    'read_wav', 'write_wav',
    'TrialList', 'parse_trials', 'write_trials',
    'parse_scores', 'write_scores',
    'parse_embeddings', 'write_embeddings',
    'Manifest', 'load_manifest', 'save_manifest',
]
