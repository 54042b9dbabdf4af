"""Dataset-level orchestration of the anonymization pipeline and attack runs.

Bundle layout::

    stages/<stage>/<mixture_id>.wav          extracted, residual, anonymized, recombined
    stages/attack_extracted/<tag>/<id>.wav
    transcripts/<stage>/<id>.seglst          ASR output
    diarization/<stage>/<id>.rttm            diarizer output
    embeddings/<stage or tag>/<id>.emb       test-side embeddings
    enrollment/<kind>/...                    enrollment embeddings (and anonymized audio)
    references/anonymized/<utt>.wav          anonymized TSE references
    scores/<tag>/<condition>.txt             cosine scores per trial list
    failures.json  metrics.json  logs/

Every produced file has a ``.key`` sidecar holding a hash of its inputs and
producer; a rerun skips any step whose key still matches.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence

from tsakit.asv_metrics import average_embedding, score_trials
from tsakit.formats.errors import FormatError
from tsakit.formats.manifest import Manifest, load_manifest
from tsakit.formats.protocol import (TrialList, parse_embeddings, parse_trials,
                                     write_embeddings, write_scores, write_trials)
from tsakit.formats.rttm import save_rttm
from tsakit.formats.seglst import save_seglst
from tsakit.formats.wav import read_wav, write_wav
from tsakit.mixgen import SourceCatalog, condition_tag, mixture_paths
from tsakit.model import MixtureRecord
from tsakit.pipeline.adapters import AdapterConfigError, AdapterError, AdapterSpec
from tsakit.pipeline.stages import (StageError, compute_residual, recombine, run_anonymizer,
                                    run_asr, run_diarizer, run_embedder, run_tse)
from tsakit.protocol import (ANONYMIZED, IGNORANT, ORIGINAL, SEMI_INFORMED, AttackConfig,
                             generate_trials, load_enrollment)

logger = logging.getLogger(__name__)

__all__ = [
    'STEPS',
    'PipelineConfigError',
    'StageArtifact',
    'RunResult',
    'PipelineRun',
    'run_dataset',
    'run_attack',
    'default_workers',
    'bundle_digest',
]

STEPS = ('original', 'step1', 'step2', 'step3', 'attack')
WORKERS_ENV = 'TSAKIT_WORKERS'


class PipelineConfigError(ValueError):
    pass


def default_workers() -> int:
    value = os.environ.get(WORKERS_ENV)
    if value:
        try:
            n = int(value)
        except ValueError:
            raise PipelineConfigError(f'{WORKERS_ENV} must be an integer, got {value!r}') from None
        if n < 1:
            raise PipelineConfigError(f'{WORKERS_ENV} must be >= 1')
        return n
    return os.cpu_count() or 1


@dataclass(frozen=True)
class StageArtifact:
    mixture_id: str
    stage: str
    path: str
    producer: str
    parents: tuple = ()


@dataclass
class RunResult:
    bundle_dir: Path
    failures: List[dict]
    adapter_calls: int = 0
    reused: int = 0
    completed: List[str] = field(default_factory=list)
    artifacts: List[StageArtifact] = field(default_factory=list)


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 20), b''):
            h.update(chunk)
    return h.hexdigest()


class PipelineRun:
    """One pass over a dataset manifest. Use :func:`run_dataset` / :func:`run_attack`."""

    def __init__(self, dataset_dir, bundle_dir, adapters: Mapping[str, AdapterSpec],
                 steps: Iterable[str] = STEPS, attacks: Sequence[AttackConfig] = (),
                 workers: int = None, enrollment: Mapping[str, List[str]] = None,
                 prepare_references: bool = True):
        self.dataset = Path(dataset_dir).resolve()
        self.bundle = Path(bundle_dir).resolve()
        self.adapters = dict(adapters)
        self.steps = set(steps)
        unknown = self.steps - set(STEPS)
        if unknown:
            raise PipelineConfigError(f'unknown steps: {sorted(unknown)}; expected {STEPS}')
        self.attacks = tuple(attacks) if 'attack' in self.steps else ()
        self.workers = workers or default_workers()
        self.prepare_references = prepare_references
        self.manifest: Manifest = load_manifest(self.dataset / 'manifest.json')
        self.catalog: Optional[SourceCatalog] = None
        if (self.dataset / 'catalog.json').exists():
            self.catalog = SourceCatalog.load(self.dataset / 'catalog.json')
        if enrollment is None and (self.dataset / 'protocol' / 'enrollment.json').exists():
            enrollment = load_enrollment(self.dataset / 'protocol' / 'enrollment.json')
        self.enrollment = dict(enrollment) if enrollment else None
        self._lock = threading.Lock()
        self._ref_locks: Dict[str, threading.Lock] = {}
        self._hash_cache: Dict[str, tuple] = {}
        self.failures: List[dict] = []
        self.adapter_calls = 0
        self.reused = 0
        self._check_config()

    # -- configuration -----------------------------------------------------

    def _need(self, kind, why):
        if kind not in self.adapters:
            raise PipelineConfigError(f'{why} requires a {kind} adapter')

    def _check_config(self):
        for kind, spec in self.adapters.items():
            if spec.kind != kind:
                raise PipelineConfigError(f'adapter for {kind} is declared as {spec.kind}')
        s = self.steps
        if 'step1' in s or 'attack' in s:
            self._need('tse', 'target speaker extraction')
        if 'step2' in s:
            if 'step1' not in s:
                raise PipelineConfigError('step2 requires step1')
            self._need('anonymizer', 'step2')
        if 'step3' in s and not {'step1', 'step2'} <= s:
            raise PipelineConfigError('step3 requires step1 and step2')
        if 'attack' in s and not self.attacks:
            raise PipelineConfigError('attack step requested without attack configurations')
        for cfg in self.attacks:
            self._need('embedder', f'attack {cfg.tag}')
            if cfg.needs_anonymized_enrollment or (cfg.needs_anonymized_reference
                                                   and self.prepare_references):
                self._need('anonymizer', f'attack {cfg.tag}')
        needs_enrollment = 'embedder' in self.adapters and (s & {'step1', 'step2'}) or self.attacks
        if needs_enrollment:
            if self.enrollment is None:
                raise PipelineConfigError(
                    'speaker verification needs an enrollment map '
                    '(protocol/enrollment.json; run `tsakit trials` first)')
            if self.catalog is None:
                raise PipelineConfigError('enrollment audio needs catalog.json in the dataset')
        if (self.attacks or 'step1' in s) and self.catalog is None:
            raise PipelineConfigError('TSE references need catalog.json in the dataset')

    # -- caching -----------------------------------------------------------

    def _file_hash(self, path) -> str:
        path = str(path)
        st = os.stat(path)
        stamp = (st.st_mtime_ns, st.st_size)
        with self._lock:
            cached = self._hash_cache.get(path)
        if cached and cached[0] == stamp:
            return cached[1]
        digest = _sha256_file(path)
        with self._lock:
            self._hash_cache[path] = (stamp, digest)
        return digest

    def _cached(self, out: Path, producer: str, inputs: Sequence, extra=(),
                produce: Callable[[], None] = None, adapter: bool = True) -> bool:
        """Run ``produce`` unless ``out`` exists with a matching input key."""
        key = hashlib.sha256(json.dumps({
            'producer': producer,
            'inputs': [self._file_hash(p) for p in inputs],
            'extra': list(extra),
        }, sort_keys=True).encode()).hexdigest()
        key_path = out.with_name(out.name + '.key')
        if out.exists() and key_path.exists() and key_path.read_text() == key:
            with self._lock:
                self.reused += 1
            return False
        out.parent.mkdir(parents=True, exist_ok=True)
        if key_path.exists():
            key_path.unlink()
        produce()
        if adapter:
            with self._lock:
                self.adapter_calls += 1
        key_path.write_text(key)
        return True

    def _producer(self, kind) -> str:
        spec = self.adapters[kind]
        return json.dumps([spec.kind, list(spec.invocation)])

    def _log(self, *parts) -> Path:
        return self.bundle.joinpath('logs', *parts).with_suffix('.log')

    # -- paths -------------------------------------------------------------

    def stage_path(self, stage, mixture_id, tag=None) -> Path:
        base = self.bundle / 'stages' / stage
        if tag:
            base = base / tag
        return base / f'{mixture_id}.wav'

    def _reference_path(self, mixture_id) -> Path:
        utt = self.manifest.references.get(mixture_id)
        if utt is None:
            raise PipelineConfigError(f'manifest has no TSE reference for {mixture_id}')
        return Path(self.catalog.entry(utt).path)

    def anonymized_reference_path(self, utterance_id) -> Path:
        return self.bundle / 'references' / 'anonymized' / f'{utterance_id}.wav'

    # -- adapter-backed steps with caching ---------------------------------

    def _tse(self, mix_path, ref_path, out, mixture_id, stage):
        self._cached(out, self._producer('tse'), [mix_path, ref_path], [mixture_id, stage],
                     lambda: run_tse(self.adapters['tse'], mix_path, ref_path, out,
                                     mixture_id, str(self.dataset), stage,
                                     self._log(stage, mixture_id, 'tse')))
        return out

    def _anonymize(self, src, out, item_id, stage):
        self._cached(out, self._producer('anonymizer'), [src], [item_id, stage],
                     lambda: run_anonymizer(self.adapters['anonymizer'], src, out, item_id,
                                            str(self.dataset), stage,
                                            self._log(stage, item_id, 'anonymizer')))
        return out

    def _asr(self, wav, stage, mixture_id):
        out = self.bundle / 'transcripts' / stage / f'{mixture_id}.seglst'

        def produce():
            t = run_asr(self.adapters['asr'], wav, out, mixture_id, str(self.dataset), stage,
                        self._log('asr', stage, mixture_id))
            save_seglst(out, t)
        self._cached(out, self._producer('asr'), [wav], [mixture_id, stage], produce)

    def _diarize(self, wav, stage, mixture_id):
        out = self.bundle / 'diarization' / stage / f'{mixture_id}.rttm'

        def produce():
            act = run_diarizer(self.adapters['diarizer'], wav, out, mixture_id,
                               str(self.dataset), stage, self._log('diarize', stage, mixture_id))
            save_rttm(out, act, precision=3)
        self._cached(out, self._producer('diarizer'), [wav], [mixture_id, stage], produce)

    def _embed(self, items: Mapping[str, Path], out: Path, call_id, stage):
        def produce():
            emb = run_embedder(self.adapters['embedder'], {k: str(v) for k, v in items.items()},
                               out.with_suffix('.list'), out, call_id, str(self.dataset), stage,
                               self._log('embed', stage, call_id))
            out.write_text(write_embeddings(emb), encoding='utf-8')
        self._cached(out, self._producer('embedder'), list(items.values()),
                     [call_id, stage, list(items)], produce)
        return parse_embeddings(out.read_text(encoding='utf-8'), source=str(out))

    def _fail(self, mixture_id, stage, adapter, error):
        logger.warning('%s failed at %s: %s', mixture_id or 'run', stage, error)
        with self._lock:
            self.failures.append({'mixture_id': mixture_id, 'stage': stage,
                                  'adapter': adapter, 'error': str(error)})

    # -- enrollment --------------------------------------------------------

    def _enroll_kinds(self) -> List[str]:
        kinds = set()
        if 'embedder' in self.adapters:
            if 'step1' in self.steps:
                kinds.add(ORIGINAL)
            if 'step2' in self.steps:
                kinds.add(ANONYMIZED)
        for cfg in self.attacks:
            kinds.add(ANONYMIZED if cfg.needs_anonymized_enrollment else ORIGINAL)
        return sorted(kinds)

    def _enroll_speaker(self, kind, speaker):
        utts = self.enrollment[speaker]
        paths = {}
        for utt in utts:
            src = Path(self.catalog.entry(utt).path)
            if kind == ANONYMIZED:
                src = self._anonymize(src, self.bundle / 'enrollment' / 'anonymized' / 'wav'
                                      / f'{utt}.wav', utt, 'enrollment')
            paths[utt] = src
        self._embed(paths, self.bundle / 'enrollment' / kind / f'{speaker}.emb',
                    speaker, f'enrollment-{kind}')

    def _run_enrollment(self, pool):
        jobs = [(kind, spk) for kind in self._enroll_kinds() for spk in sorted(self.enrollment)]

        def job(item):
            kind, spk = item
            try:
                self._enroll_speaker(kind, spk)
            except (StageError, FormatError, OSError, ValueError, KeyError) as e:
                self._fail(None, f'enrollment-{kind}:{spk}',
                           getattr(e, 'adapter', None), e)
        list(pool.map(job, jobs))

    def enrollment_embeddings(self, kind) -> Dict[str, object]:
        out = {}
        for spk in sorted(self.enrollment or {}):
            path = self.bundle / 'enrollment' / kind / f'{spk}.emb'
            if path.exists():
                out[spk] = average_embedding(
                    list(parse_embeddings(path.read_text(encoding='utf-8')).values()))
        return out

    # -- per-mixture chain -------------------------------------------------

    def _anonymized_reference(self, mixture_id) -> Path:
        utt = self.manifest.references[mixture_id]
        out = self.anonymized_reference_path(utt)
        if not self.prepare_references:
            if not out.exists():
                raise PipelineConfigError(f'anonymized reference missing: {out}')
            return out
        with self._lock:
            lock = self._ref_locks.setdefault(utt, threading.Lock())
        with lock:
            return self._anonymize(self._reference_path(mixture_id), out, utt, 'reference')

    def _mixture(self, record: MixtureRecord):
        mid = record.mixture_id
        paths = mixture_paths(self.dataset, mid)
        mix = paths['mix']
        stage = 'setup'
        arts: List[StageArtifact] = []

        def art(name, path, kind, parents=(), tag=None):
            producer = self.adapters[kind].label if kind in self.adapters else kind
            arts.append(StageArtifact(mid, f'{name}/{tag}' if tag else name,
                                      str(Path(path).relative_to(self.bundle)), producer,
                                      tuple(parents)))
        try:
            if 'original' in self.steps:
                stage = 'original'
                if 'asr' in self.adapters:
                    self._asr(mix, 'original', mid)
                if 'diarizer' in self.adapters:
                    self._diarize(mix, 'original', mid)
            if 'step1' in self.steps:
                stage = 'extracted'
                extracted = self._tse(mix, self._reference_path(mid),
                                      self.stage_path('extracted', mid), mid, 'extracted')
                art('extracted', extracted, 'tse')
                stage = 'residual'
                residual = self.stage_path('residual', mid)
                self._cached(residual, 'residual', [mix, extracted], [mid],
                             lambda: write_wav(residual, compute_residual(
                                 read_wav(mix), read_wav(extracted))), adapter=False)
                art('residual', residual, 'subtract', ['extracted'])
                if 'embedder' in self.adapters:
                    stage = 'embed:extracted'
                    self._embed({mid: extracted}, self.bundle / 'embeddings' / 'extracted'
                                / f'{mid}.emb', mid, 'extracted')
                if 'asr' in self.adapters:
                    stage = 'asr:extracted'
                    self._asr(extracted, 'extracted', mid)
            if 'step2' in self.steps:
                stage = 'anonymized'
                anonymized = self._anonymize(extracted, self.stage_path('anonymized', mid),
                                             mid, 'anonymized')
                art('anonymized', anonymized, 'anonymizer', ['extracted'])
                if 'embedder' in self.adapters:
                    stage = 'embed:anonymized'
                    self._embed({mid: anonymized}, self.bundle / 'embeddings' / 'anonymized'
                                / f'{mid}.emb', mid, 'anonymized')
                if 'asr' in self.adapters:
                    stage = 'asr:anonymized'
                    self._asr(anonymized, 'anonymized', mid)
            recombined = self.stage_path('recombined', mid)
            if 'step3' in self.steps:
                stage = 'recombined'
                self._cached(recombined, 'recombined', [anonymized, residual], [mid],
                             lambda: write_wav(recombined, recombine(
                                 read_wav(anonymized), read_wav(residual))), adapter=False)
                art('recombined', recombined, 'add', ['anonymized', 'residual'])
                if 'asr' in self.adapters:
                    stage = 'asr:recombined'
                    self._asr(recombined, 'recombined', mid)
                if 'diarizer' in self.adapters:
                    stage = 'diarize:recombined'
                    self._diarize(recombined, 'recombined', mid)
            for cfg in self.attacks:
                stage = f'{cfg.tag}:extract'
                if not recombined.exists():
                    raise StageError(stage, None, f'no recombined audio for {mid}')
                ref = (self._anonymized_reference(mid) if cfg.needs_anonymized_reference
                       else self._reference_path(mid))
                attacked = self._tse(recombined, ref,
                                     self.stage_path('attack_extracted', mid, cfg.tag),
                                     mid, 'attack_extracted')
                art('attack_extracted', attacked, 'tse', ['recombined'], cfg.tag)
                stage = f'{cfg.tag}:embed'
                self._embed({mid: attacked}, self.bundle / 'embeddings' / cfg.tag / f'{mid}.emb',
                            mid, cfg.tag)
        except PipelineConfigError:
            raise
        except (StageError, AdapterError, FormatError, OSError, ValueError, KeyError) as e:
            self._fail(mid, getattr(e, 'stage', stage), getattr(e, 'adapter', None), e)
            return mid, False, arts
        return mid, True, arts

    # -- scoring -----------------------------------------------------------

    def trial_lists(self) -> Dict[float, TrialList]:
        out = {}
        protocol = self.dataset / 'protocol' / 'trials'
        for cond in self.manifest.conditions():
            path = protocol / f'{condition_tag(cond)}.txt'
            if path.exists():
                trials = parse_trials(path.read_text(encoding='utf-8'), source=str(path))
                out[cond] = TrialList(trials.trials, cond)
            else:
                out[cond] = generate_trials(self.manifest.by_condition(cond),
                                            self.enrollment, cond)
        return out

    def score_tags(self) -> Dict[str, tuple]:
        """score tag -> (embedding dir name, enrollment kind)."""
        tags = {}
        if 'embedder' in self.adapters and 'step1' in self.steps:
            tags['step1'] = ('extracted', ORIGINAL)
        if 'embedder' in self.adapters and 'step2' in self.steps:
            tags['step2'] = ('anonymized', ANONYMIZED)
        for cfg in self.attacks:
            tags[cfg.tag] = (cfg.tag, ANONYMIZED if cfg.needs_anonymized_enrollment else ORIGINAL)
        return tags

    def _write_scores(self):
        if not self.enrollment:
            return
        trial_lists = self.trial_lists()
        for tag, (emb_dir, kind) in self.score_tags().items():
            enroll = self.enrollment_embeddings(kind)
            for cond, trials in trial_lists.items():
                test = {}
                for mid in sorted({t.test_id for t in trials}):
                    path = self.bundle / 'embeddings' / emb_dir / f'{mid}.emb'
                    if path.exists() and mid not in self._failed:
                        test.update(parse_embeddings(path.read_text(encoding='utf-8')))
                usable = [t for t in trials if t.test_id in test and t.enroll_id in enroll]
                out = self.bundle / 'scores' / tag / f'{condition_tag(cond)}.txt'
                out.parent.mkdir(parents=True, exist_ok=True)
                out.write_text(write_scores(score_trials(usable, enroll, test)), encoding='utf-8')
                (self.bundle / 'scores' / tag / f'{condition_tag(cond)}.trials').write_text(
                    write_trials(usable), encoding='utf-8')

    def _write_artifacts(self, artifacts, order):
        path = self.bundle / 'artifacts.json'
        rows = [dict(a.__dict__, parents=list(a.parents)) for a in artifacts]
        if path.exists():
            fresh = {(r['mixture_id'], r['stage']) for r in rows}
            rows = [r for r in json.loads(path.read_text(encoding='utf-8'))
                    if (r['mixture_id'], r['stage']) not in fresh] + rows
        stage_order = {s: i for i, s in enumerate(
            ('extracted', 'residual', 'anonymized', 'recombined', 'attack_extracted'))}
        rows.sort(key=lambda r: (order.get(r['mixture_id'], -1),
                                 stage_order.get(r['stage'].split('/')[0], 9), r['stage']))
        path.write_text(json.dumps(rows, indent=1) + '\n', encoding='utf-8')

    # -- entry point -------------------------------------------------------

    def run(self) -> RunResult:
        self.bundle.mkdir(parents=True, exist_ok=True)
        order = {r.mixture_id: i for i, r in enumerate(self.manifest.records)}
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            if self.enrollment and self._enroll_kinds() and 'embedder' in self.adapters:
                self._run_enrollment(pool)
            results = list(pool.map(self._mixture, self.manifest.records))
        self._failed = {mid for mid, ok, _ in results if not ok}
        artifacts = [a for _, _, arts in results for a in arts]
        self._write_artifacts(artifacts, order)
        self._write_scores()
        self.failures.sort(key=lambda f: (f['mixture_id'] is not None,
                                          order.get(f['mixture_id'], -1), f['stage']))
        (self.bundle / 'failures.json').write_text(
            json.dumps(self.failures, indent=1) + '\n', encoding='utf-8')
        return RunResult(self.bundle, self.failures, self.adapter_calls, self.reused,
                         [mid for mid, ok, _ in results if ok], artifacts)


def run_dataset(dataset_dir, bundle_dir, adapters: Mapping[str, AdapterSpec],
                steps: Iterable[str] = STEPS, attacks: Sequence[AttackConfig] = (),
                workers: int = None, enrollment=None, evaluate: bool = True,
                **eval_options) -> RunResult:
    """Run the requested pipeline steps over every mixture of a dataset.

    Per-mixture failures are recorded in ``failures.json`` and do not stop
    the run; missing adapters or protocol files raise
    :class:`PipelineConfigError` before anything runs.
    """
    steps = set(steps)
    if 'attack' in steps and not attacks:
        steps.discard('attack')
    run = PipelineRun(dataset_dir, bundle_dir, adapters, steps, attacks, workers, enrollment)
    result = run.run()
    if evaluate:
        from tsakit.pipeline.evaluate import evaluate_bundle
        evaluate_bundle(run, **eval_options)
    return result


def run_attack(config: AttackConfig, dataset_dir, bundle_dir, adapters: Mapping[str, AdapterSpec],
               workers: int = None, enrollment=None,
               prepare_references: bool = False, evaluate: bool = True) -> RunResult:
    """Attack the recombined audio of an existing bundle with one configuration.

    With ``reference_kind='anonymized'`` the anonymized references must
    already exist in the bundle unless ``prepare_references`` is set.
    """
    run = PipelineRun(dataset_dir, bundle_dir, adapters, {'attack'}, (config,), workers,
                      enrollment, prepare_references)
    if config.needs_anonymized_reference and not prepare_references:
        missing = sorted({
            str(run.anonymized_reference_path(run.manifest.references[r.mixture_id]))
            for r in run.manifest.records
            if not run.anonymized_reference_path(run.manifest.references[r.mixture_id]).exists()})
        if missing:
            raise PipelineConfigError(
                f'anonymized reference audio missing for {len(missing)} utterances, e.g. {missing[0]}')
    previous = []
    failures_path = Path(bundle_dir) / 'failures.json'
    if failures_path.exists():
        previous = [f for f in json.loads(failures_path.read_text(encoding='utf-8'))
                    if not str(f.get('stage', '')).startswith(config.tag)]
    result = run.run()
    merged = previous + result.failures
    failures_path.write_text(json.dumps(merged, indent=1) + '\n', encoding='utf-8')
    if evaluate:
        from tsakit.pipeline.evaluate import evaluate_bundle
        evaluate_bundle(run)
    return result


def bundle_digest(bundle_dir) -> str:
    """Hash of every result file in a bundle (logs and cache keys excluded)."""
    bundle_dir = Path(bundle_dir)
    h = hashlib.sha256()
    for path in sorted(bundle_dir.rglob('*')):
        rel = path.relative_to(bundle_dir)
        if not path.is_file() or rel.parts[0] == 'logs' or path.suffix in ('.key', '.list'):
            continue
        h.update(str(rel).encode() + b'\0')
        h.update(path.read_bytes())
    return h.hexdigest()
