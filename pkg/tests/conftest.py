import json
import time
from pathlib import Path

import pytest

from tsakit.formats.protocol import write_trials
from tsakit.mixgen import OverlapPlan, build_dataset, condition_tag, synthetic_catalog
from tsakit.pipeline.adapters import builtin_spec
from tsakit.pipeline.runner import run_dataset
from tsakit.protocol import IGNORANT, ORIGINAL, SEMI_INFORMED, AttackConfig, generate_enrollment, \
    generate_trials, save_enrollment

TOY_SPEAKERS = 4
TOY_ENROLL = 5
TOY_REFERENCES = 2


def make_toy_dataset(root: Path, mixtures_per_condition: int = 4, seed: int = 7) -> Path:
    """20-mixture dataset (4 per condition) with a protocol directory."""
    catalog = synthetic_catalog(root / 'sources', n_speakers=TOY_SPEAKERS,
                                utterances_per_speaker=TOY_ENROLL + TOY_REFERENCES + 3,
                                min_duration=0.4, max_duration=0.9, seed=seed)
    ds = root / 'dataset'
    manifest = build_dataset(catalog, OverlapPlan(mixtures_per_condition=mixtures_per_condition,
                                                  seed=seed), ds,
                             enroll_reserve=TOY_ENROLL, reference_pool=TOY_REFERENCES)
    enrollment = generate_enrollment(catalog, TOY_ENROLL, manifest.utterance_ids(), seed)
    (ds / 'protocol' / 'trials').mkdir(parents=True)
    save_enrollment(ds / 'protocol' / 'enrollment.json', enrollment)
    for cond in manifest.conditions():
        trials = generate_trials(manifest.by_condition(cond), enrollment, cond)
        (ds / 'protocol' / 'trials' / f'{condition_tag(cond)}.txt').write_text(write_trials(trials))
    return ds


def oracle_adapters(anonymizer='passthrough', embedder=None, fail=None,
                    asr='oracle-asr', diarizer='oracle-diarizer'):
    """Built-in adapter set; ``fail`` maps a kind to a mixture id that makes it exit 3."""
    fail = fail or {}
    specs = {}
    for kind, name in [('tse', 'oracle-tse'), ('anonymizer', anonymizer),
                       ('asr', asr), ('diarizer', diarizer),
                       ('embedder', embedder)]:
        if name is None:
            continue
        args = ['--fail-id', fail[kind]] if kind in fail else []
        specs[kind] = builtin_spec(name, args)
    return specs


ATTACKS = (AttackConfig(IGNORANT, ORIGINAL), AttackConfig(SEMI_INFORMED, ORIGINAL))


@pytest.fixture(scope='session')
def toy_dataset(tmp_path_factory):
    return make_toy_dataset(tmp_path_factory.mktemp('toy'))


@pytest.fixture(scope='session')
def inverse_run(toy_dataset, tmp_path_factory):
    """Oracle TSE + passthrough anonymizer + oracle ASR/diarizer over the toy set."""
    bundle = tmp_path_factory.mktemp('inverse') / 'bundle'
    t0 = time.perf_counter()
    result = run_dataset(toy_dataset, bundle, oracle_adapters(),
                         steps={'step1', 'step2', 'step3'})
    result.elapsed = time.perf_counter() - t0
    return result


FAIL_ID = 'ov060_0002'


@pytest.fixture(scope='session')
def faulty_run(toy_dataset, tmp_path_factory):
    bundle = tmp_path_factory.mktemp('faulty') / 'bundle'
    return run_dataset(toy_dataset, bundle, oracle_adapters(fail={'anonymizer': FAIL_ID}),
                       steps={'step1', 'step2', 'step3'})


def _attack_run(toy_dataset, bundle):
    return run_dataset(toy_dataset, bundle,
                       oracle_adapters('stub-anonymizer', 'hash-embedder', asr=None, diarizer=None),
                       steps={'step1', 'step2', 'step3', 'attack'}, attacks=ATTACKS)


@pytest.fixture(scope='session')
def attack_runs(toy_dataset, tmp_path_factory):
    """The same attack configuration run twice into separate bundles."""
    root = tmp_path_factory.mktemp('attack')
    first = _attack_run(toy_dataset, root / 'a')
    second = _attack_run(toy_dataset, root / 'b')
    return first, second


def load_json(path):
    return json.loads(Path(path).read_text())
