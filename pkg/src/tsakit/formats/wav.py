"""Minimal RIFF/WAVE codec: mono 16-bit PCM or 32-bit IEEE float in, 16-bit PCM out.

Kept dependency-free (struct + numpy) because adapter processes import it on
every call.
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import BinaryIO, Union

import numpy as np

from tsakit.model import Waveform

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE

_FORMAT_NAMES = {
    0x0001: 'PCM',
    0x0002: 'MS ADPCM',
    0x0003: 'IEEE float',
    0x0006: 'A-law',
    0x0007: 'mu-law',
    0x0011: 'IMA ADPCM',
    0x0055: 'MPEG Layer 3',
    0xFFFE: 'extensible',
}

PCM16_SCALE = 32768.0
PCM16_MAX = 1.0 - 2.0 ** -15


class WavFormatError(ValueError):
    pass


def _format_name(tag: int) -> str:
    return f'0x{tag:04X} ({_FORMAT_NAMES.get(tag, "unknown")})'


def _read_bytes(path_or_file) -> bytes:
    if hasattr(path_or_file, 'read'):
        return path_or_file.read()
    return Path(path_or_file).read_bytes()


def read_wav(path_or_file: Union[str, Path, BinaryIO]) -> Waveform:
    """Read a mono WAV file; 16-bit samples are divided by 32768."""
    data = _read_bytes(path_or_file)
    if len(data) < 12 or data[:4] != b'RIFF' or data[8:12] != b'WAVE':
        raise WavFormatError(f'{path_or_file}: not a RIFF/WAVE file')
    pos = 12
    fmt = None
    payload = None
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        (size,) = struct.unpack('<I', data[pos + 4:pos + 8])
        body = data[pos + 8:pos + 8 + size]
        if chunk_id == b'fmt ':
            if len(body) < 16:
                raise WavFormatError(f'{path_or_file}: truncated fmt chunk')
            fmt = struct.unpack('<HHIIHH', body[:16])
            tag = fmt[0]
            if tag == WAVE_FORMAT_EXTENSIBLE and len(body) >= 26:
                (sub_tag,) = struct.unpack('<H', body[24:26])
                fmt = (sub_tag,) + fmt[1:]
        elif chunk_id == b'data':
            payload = body
        pos += 8 + size + (size & 1)
    if fmt is None:
        raise WavFormatError(f'{path_or_file}: missing fmt chunk')
    if payload is None:
        raise WavFormatError(f'{path_or_file}: missing data chunk')
    tag, channels, sample_rate, _, block_align, bits = fmt
    if channels != 1:
        raise WavFormatError(f'{path_or_file}: mono required, got {channels} channels')
    if tag == WAVE_FORMAT_PCM:
        if bits != 16:
            raise WavFormatError(
                f'{path_or_file}: unsupported PCM bit depth {bits} (format tag {_format_name(tag)})')
        n = len(payload) // 2
        samples = np.frombuffer(payload[:2 * n], dtype='<i2').astype(np.float64) / PCM16_SCALE
    elif tag == WAVE_FORMAT_IEEE_FLOAT:
        if bits != 32:
            raise WavFormatError(
                f'{path_or_file}: unsupported float bit depth {bits} (format tag {_format_name(tag)})')
        n = len(payload) // 4
        samples = np.frombuffer(payload[:4 * n], dtype='<f4').astype(np.float64)
    else:
        raise WavFormatError(f'{path_or_file}: unsupported format tag {_format_name(tag)}')
    return Waveform(samples, int(sample_rate))


def quantize_pcm16(samples) -> np.ndarray:
    """Clip to [-1, 1 - 2**-15] and round half away from zero to int16."""
    x = np.clip(np.asarray(samples, dtype=np.float64), -1.0, PCM16_MAX) * PCM16_SCALE
    q = np.where(x >= 0, np.floor(x + 0.5), np.ceil(x - 0.5))
    return q.astype('<i2')


def encode_wav(waveform: Waveform) -> bytes:
    pcm = quantize_pcm16(waveform.samples).tobytes()
    sr = int(waveform.sample_rate)
    header = b'RIFF' + struct.pack('<I', 36 + len(pcm)) + b'WAVE'
    fmt = b'fmt ' + struct.pack('<IHHIIHH', 16, WAVE_FORMAT_PCM, 1, sr, sr * 2, 2, 16)
    return header + fmt + b'data' + struct.pack('<I', len(pcm)) + pcm


def write_wav(path: Union[str, Path], waveform: Waveform) -> None:
    """Write ``waveform`` as mono 16-bit PCM."""
    Path(path).write_bytes(encode_wav(waveform))


def write_float_wav(path: Union[str, Path], waveform: Waveform) -> None:
    """Write 32-bit IEEE float WAV. Used only to exercise readers and adapters."""
    data = np.asarray(waveform.samples, dtype='<f4').tobytes()
    sr = int(waveform.sample_rate)
    header = b'RIFF' + struct.pack('<I', 36 + len(data)) + b'WAVE'
    fmt = b'fmt ' + struct.pack('<IHHIIHH', 16, WAVE_FORMAT_IEEE_FLOAT, 1, sr, sr * 4, 4, 32)
    Path(path).write_bytes(header + fmt + b'data' + struct.pack('<I', len(data)) + data)
