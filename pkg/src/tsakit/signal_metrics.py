"""SI-SDR and exact waveform arithmetic."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Tuple

import numpy as np

from tsakit.model import Waveform

__all__ = ['SiSdrResult', 'MeanSiSdr', 'si_sdr', 'mean_si_sdr', 'add', 'subtract', 'pad_to']


@dataclass(frozen=True)
class SiSdrResult:
    value_db: float  # math.inf when the scaled reference reproduces the estimate exactly
    scaling: float


@dataclass(frozen=True)
class MeanSiSdr:
    value_db: float
    n_finite: int
    n_infinite: int


def si_sdr(estimate: Waveform, reference: Waveform) -> SiSdrResult:
    """Scale-invariant SDR of ``estimate`` w.r.t. ``reference`` (no mean removal).

    >>> si_sdr(Waveform([1.0, 1.0]), Waveform([1.0, 0.0])).value_db
    0.0
    """
    if estimate.sample_rate != reference.sample_rate:
        raise ValueError(
            f'sample rate mismatch: {estimate.sample_rate} vs {reference.sample_rate}')
    if len(estimate) != len(reference) or len(reference) == 0:
        raise ValueError(
            f'lengths must be equal and >= 1, got {len(estimate)} and {len(reference)}')
    e = estimate.samples
    r = reference.samples
    ref_energy = float(np.dot(r, r))
    if ref_energy == 0:
        raise ValueError('reference has zero energy')
    if not np.any(e):
        raise ValueError('estimate has zero energy; SI-SDR is undefined')
    alpha = float(np.dot(e, r)) / ref_energy
    target = alpha * r
    noise = target - e
    noise_energy = float(np.dot(noise, noise))
    if noise_energy == 0:
        return SiSdrResult(math.inf, alpha)
    target_energy = float(np.dot(target, target))
    if target_energy == 0:
        return SiSdrResult(-math.inf, alpha)
    return SiSdrResult(10 * math.log10(target_energy / noise_energy), alpha)


def mean_si_sdr(values: Iterable) -> MeanSiSdr:
    """Mean of finite SI-SDR values; ``+inf`` entries are counted, not averaged.

    Accepts :class:`SiSdrResult` objects or plain dB values.
    """
    finite, infinite = [], 0
    for v in values:
        v = v.value_db if isinstance(v, SiSdrResult) else float(v)
        if math.isinf(v) and v > 0:
            infinite += 1
        else:
            finite.append(v)
    if not finite:
        if infinite:
            raise ValueError('all SI-SDR values are infinite')
        raise ValueError('no SI-SDR values to average')
    return MeanSiSdr(float(np.mean(finite)), len(finite), infinite)


def pad_to(samples: np.ndarray, length: int) -> np.ndarray:
    """Zero-pad (or truncate) at the tail to ``length`` samples."""
    if len(samples) >= length:
        return np.asarray(samples[:length])
    return np.concatenate([samples, np.zeros(length - len(samples))])


def _aligned(a: Waveform, b: Waveform) -> Tuple[np.ndarray, np.ndarray]:
    if a.sample_rate != b.sample_rate:
        raise ValueError(f'sample rate mismatch: {a.sample_rate} vs {b.sample_rate}')
    n = max(len(a), len(b))
    return pad_to(a.samples, n), pad_to(b.samples, n)


def subtract(minuend: Waveform, subtrahend: Waveform) -> Waveform:
    x, y = _aligned(minuend, subtrahend)
    return Waveform(x - y, minuend.sample_rate)


def add(a: Waveform, b: Waveform) -> Waveform:
    x, y = _aligned(a, b)
    return Waveform(x + y, a.sample_rate)
