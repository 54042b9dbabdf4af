"""Per-condition metrics for a pipeline bundle, written to ``metrics.json``."""
from __future__ import annotations

import json
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional

from tsakit.asv_metrics import eer
from tsakit.diar_metrics import DEFAULT_COLLAR as DER_COLLAR
from tsakit.diar_metrics import DerResult, der
from tsakit.formats.protocol import parse_scores, parse_trials
from tsakit.formats.rttm import read_rttm
from tsakit.formats.seglst import read_seglst
from tsakit.formats.wav import read_wav
from tsakit.mixgen import condition_tag, mixture_paths
from tsakit.model import SpeakerActivity, Transcript
from tsakit.signal_metrics import mean_si_sdr, si_sdr
from tsakit.text_metrics import DEFAULT_COLLAR as TCP_COLLAR
from tsakit.text_metrics import TcpParams, WerStats, tcp_wer, word_error_rate

logger = logging.getLogger(__name__)

__all__ = ['metric_row', 'evaluate_bundle', 'target_wer']

METRICS_FORMAT = 'tsakit-metrics/1'
_STEP_ORDER = {s: i for i, s in enumerate(('original', 'step1', 'step2', 'step3', 'attack'))}


def metric_row(step: str, label: str, metric: str, data: str, unit: str,
               values: Dict[float, Optional[float]], primary: bool = False,
               notes: Dict[float, str] = None) -> dict:
    return {'step': step, 'label': label, 'metric': metric, 'data': data, 'unit': unit,
            'primary': primary,
            'values': {f'{c:g}': v for c, v in sorted(values.items())},
            'notes': {f'{c:g}': n for c, n in sorted((notes or {}).items())}}


def _load_transcript(path: Path, mixture_id: str) -> Optional[Transcript]:
    if not path.exists():
        return None
    return read_seglst(path).get(mixture_id, Transcript(mixture_id))


def _load_activity(path: Path, mixture_id: str) -> Optional[SpeakerActivity]:
    if not path.exists():
        return None
    return read_rttm(path).get(mixture_id, SpeakerActivity(mixture_id))


def _words(transcript: Transcript, speaker: str = None) -> List[str]:
    segs = sorted((s for s in transcript.segments
                   if speaker is None or s.speaker_id == speaker), key=lambda s: s.start)
    return [w.text for s in segs for w in s.words]


def target_wer(reference: Transcript, hypothesis: Transcript, target: str) -> WerStats:
    """WER of a single-speaker hypothesis against the target speaker's words."""
    return word_error_rate(_words(reference, target), _words(hypothesis))


def _pct(x: float) -> Optional[float]:
    return None if x is None or math.isinf(x) or math.isnan(x) else 100.0 * x


def evaluate_bundle(run, tcp_collar: float = TCP_COLLAR, der_collar: float = DER_COLLAR) -> dict:
    """Compute every available metric per overlap condition.

    ``run`` is the :class:`~tsakit.pipeline.runner.PipelineRun` that built
    the bundle. Mixtures listed in the failure log are excluded.
    """
    bundle, dataset, manifest = run.bundle, run.dataset, run.manifest
    failed = {f['mixture_id'] for f in run.failures if f['mixture_id']}
    conditions = manifest.conditions()
    per_cond = {c: [r for r in manifest.by_condition(c) if r.mixture_id not in failed]
                for c in conditions}
    rows = []

    def transcripts(stage):
        out = {}
        for c, records in per_cond.items():
            pairs = []
            for r in records:
                hyp = _load_transcript(bundle / 'transcripts' / stage / f'{r.mixture_id}.seglst',
                                       r.mixture_id)
                if hyp is not None:
                    ref = _load_transcript(mixture_paths(dataset, r.mixture_id)['seglst'],
                                           r.mixture_id)
                    pairs.append((r, ref, hyp))
            out[c] = pairs
        return out

    def wer_row(step, label, stage, primary=False):
        values = {}
        for c, pairs in transcripts(stage).items():
            if pairs:
                total = sum((target_wer(ref, hyp, r.target_source.speaker_id)
                             for r, ref, hyp in pairs), WerStats())
                values[c] = _pct(total.rate)
        if values:
            rows.append(metric_row(step, label, 'WER', stage, '%', values, primary))

    def tcp_row(step, label, stage, primary=False):
        values = {}
        params = TcpParams(tcp_collar)
        for c, pairs in transcripts(stage).items():
            if pairs:
                total = sum((tcp_wer(ref, hyp, params).stats for _, ref, hyp in pairs),
                            WerStats())
                values[c] = _pct(total.rate)
        if values:
            rows.append(metric_row(step, label, 'tcpWER', stage, '%', values, primary))

    def der_row(step, label, stage):
        values = {}
        for c, records in per_cond.items():
            total = DerResult(0.0, 0.0, 0.0, 0.0)
            n = 0
            for r in records:
                hyp = _load_activity(bundle / 'diarization' / stage / f'{r.mixture_id}.rttm',
                                     r.mixture_id)
                if hyp is None:
                    continue
                ref = _load_activity(mixture_paths(dataset, r.mixture_id)['rttm'], r.mixture_id)
                total = total + der(ref, hyp, der_collar)
                n += 1
            if n:
                values[c] = _pct(total.der)
        if values:
            rows.append(metric_row(step, label, 'DER', stage, '%', values))

    def eer_row(step, label, tag, primary=False):
        values = {}
        for c in conditions:
            base = bundle / 'scores' / tag / condition_tag(c)
            scores, trials = base.with_suffix('.txt'), base.with_suffix('.trials')
            if not scores.exists() or not trials.exists():
                continue
            trial_list = parse_trials(trials.read_text(encoding='utf-8'))
            if not len(trial_list):
                continue
            scored = parse_scores(scores.read_text(encoding='utf-8'), trial_list,
                                  source=str(scores))
            try:
                values[c] = _pct(eer(scored).eer)
            except ValueError as e:
                logger.warning('%s %s: %s', tag, condition_tag(c), e)
        if values:
            rows.append(metric_row(step, label, 'EER', tag, '%', values, primary))

    if 'original' in run.steps:
        tcp_row('original', 'Original mixture', 'original')
        der_row('original', 'Original mixture', 'original')
    if 'step1' in run.steps:
        values, notes = {}, {}
        for c, records in per_cond.items():
            results = []
            for r in records:
                path = run.stage_path('extracted', r.mixture_id)
                if not path.exists():
                    continue
                try:
                    results.append(si_sdr(read_wav(path),
                                          read_wav(mixture_paths(dataset, r.mixture_id)['s1'])))
                except ValueError as e:
                    logger.warning('SI-SDR skipped for %s: %s', r.mixture_id, e)
            if not results:
                continue
            if all(math.isinf(x.value_db) and x.value_db > 0 for x in results):
                values[c] = None
                notes[c] = f'all {len(results)} extractions exact (+inf dB)'
                continue
            m = mean_si_sdr(results)
            values[c] = m.value_db
            if m.n_infinite:
                notes[c] = f'{m.n_infinite} exact extractions (+inf dB) excluded'
        if values:
            rows.append(metric_row('step1', '1. TSE (user)', 'SI-SDR', 'extracted', 'dB',
                                   values, notes=notes))
        eer_row('step1', '1. TSE (user)', 'step1')
        wer_row('step1', '1. TSE (user)', 'extracted')
    if 'step2' in run.steps:
        eer_row('step2', '2. TSA', 'step2')
        wer_row('step2', '2. TSA', 'anonymized')
    if 'step3' in run.steps:
        tcp_row('step3', '3. Speech combination', 'recombined', primary=True)
        der_row('step3', '3. Speech combination', 'recombined')
    for cfg in run.attacks:
        eer_row('attack', f'TSE (attacker, {cfg.attacker_kind}, {cfg.reference_kind} ref)',
                cfg.tag, primary=True)

    # Rows from earlier runs over the same bundle (e.g. a separate attack run) are kept.
    path = Path(bundle / 'metrics.json')
    if path.exists():
        fresh = {(r['step'], r['metric'], r['data']) for r in rows}
        previous = json.loads(path.read_text(encoding='utf-8')).get('rows', [])
        rows = [r for r in previous if (r['step'], r['metric'], r['data']) not in fresh] + rows
        rows.sort(key=lambda r: _STEP_ORDER.get(r['step'], len(_STEP_ORDER)))
    failures_path = bundle / 'failures.json'
    n_failures = (len(json.loads(failures_path.read_text(encoding='utf-8')))
                  if failures_path.exists() else len(run.failures))
    doc = {'format': METRICS_FORMAT, 'conditions': [f'{c:g}' for c in conditions],
           'failures': n_failures, 'rows': rows}
    path.write_text(json.dumps(doc, indent=1) + '\n', encoding='utf-8')
    return doc
