import pytest

from tsakit.formats.protocol import parse_trials, write_trials
from tsakit.mixgen import CatalogEntry, SourceCatalog
from tsakit.model import ActivityEntry, MixtureRecord, SourceRef, SpeakerActivity
from tsakit.protocol import (ANONYMIZED, IGNORANT, ORIGINAL, SEMI_INFORMED, AttackConfig,
                             generate_enrollment, generate_trials, load_enrollment,
                             save_enrollment)


def catalog(n_speakers=3, per_speaker=6):
    return SourceCatalog(tuple(
        CatalogEntry(f's{s}-{u}', f's{s}', f'/x/s{s}-{u}.wav', 1.0)
        for s in range(n_speakers) for u in range(per_speaker)))


def record(mid, target, other):
    act = SpeakerActivity(mid, (ActivityEntry(target, 0, 1), ActivityEntry(other, 0, 1)))
    return MixtureRecord(mid, SourceRef(f'{target}-0', target, 0.0),
                         SourceRef(f'{other}-0', other, 0.0),
                         1.0, 1.0, act)


def test_enrollment_disjoint_and_seeded(tmp_path):
    cat = catalog()
    exclude = {'s0-0', 's1-0', 's2-0'}
    enroll = generate_enrollment(cat, 4, exclude, seed=1)
    assert sorted(enroll) == ['s0', 's1', 's2']
    for spk, utts in enroll.items():
        assert len(utts) == 4 and utts == sorted(utts)
        assert not set(utts) & exclude and all(u.startswith(spk + '-') for u in utts)
    assert generate_enrollment(cat, 4, exclude, seed=1) == enroll
    save_enrollment(tmp_path / 'e.json', enroll)
    assert load_enrollment(tmp_path / 'e.json') == enroll


def test_enrollment_insufficient():
    with pytest.raises(ValueError, match='need 6'):
        generate_enrollment(catalog(), 6, {'s1-3'})


def test_trials_one_target_per_mixture():
    records = [record('m0', 's0', 's1'), record('m1', 's2', 's0')]
    trials = generate_trials(records, ['s0', 's1', 's2'], 1.0)
    assert trials.counts() == {'target': 2, 'nontarget': 4}
    assert parse_trials(write_trials(trials)).trials == trials.trials
    assert [t.enroll_id for t in trials if t.test_id == 'm1' and t.is_target] == ['s2']
    with pytest.raises(ValueError, match='not enrolled'):
        generate_trials(records, ['s0', 's1'])


def test_protocol_scale_counts():
    speakers = [f's{i:02d}' for i in range(40)]
    records = [record(f'm{j:03d}', speakers[j % 40], speakers[(j + 1) % 40]) for j in range(500)]
    counts = generate_trials(records, speakers).counts()
    assert counts == {'target': 500, 'nontarget': 19500}


def test_attack_config():
    cfg = AttackConfig()
    assert (cfg.attacker_kind, cfg.reference_kind) == (SEMI_INFORMED, ORIGINAL)
    assert cfg.needs_anonymized_enrollment and not cfg.needs_anonymized_reference
    ign = AttackConfig(IGNORANT, ANONYMIZED)
    assert ign.tag == 'attack-ignorant-anonymized-ref'
    assert not ign.needs_anonymized_enrollment and ign.needs_anonymized_reference
    with pytest.raises(ValueError):
        AttackConfig('clever')
    with pytest.raises(ValueError):
        AttackConfig(IGNORANT, 'mixture')
