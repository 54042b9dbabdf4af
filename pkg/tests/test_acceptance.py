"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the verdict lines are
written straight to the terminal.
"""
import itertools
import math
import random
import time

import numpy as np
import pytest

from conftest import FAIL_ID, TOY_SPEAKERS, load_json
from metric_oracles import exhaustive_eer, frame_der
from reported_results import ROWS, as_metric_rows
from text_oracles import brute_force_cp_errors, naive_edit_distance
from tsakit.asv_metrics import eer
from tsakit.cli import main
from tsakit.diar_metrics import der
from tsakit.formats.manifest import load_manifest
from tsakit.formats.protocol import parse_scores, parse_trials
from tsakit.formats.wav import read_wav
from tsakit.mixgen import OverlapPlan, build_dataset, mixture_paths, synthetic_catalog
from tsakit.model import (ActivityEntry, ScoredTrial, Segment, SpeakerActivity, TimedWord,
                          Transcript, Trial, Waveform)
from tsakit.pipeline import bundle_digest
from tsakit.report import build_reports
from tsakit.signal_metrics import si_sdr
from tsakit.text_metrics import UNBOUNDED, TcpParams, cp_wer, tcp_wer, word_error_rate

LSB = 2 ** -15


@pytest.fixture
def verdict(capsys, request):
    """Print the criterion's verdict line, then assert it."""
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f'\n[criterion {number:2d}] {"PASS" if ok else "FAIL"}: {detail}')
        assert ok, detail
    return emit


# -- 1 -------------------------------------------------------------------------

def test_01_reported_averages(verdict):
    t0 = time.perf_counter()
    reports = build_reports(as_metric_rows())
    elapsed = time.perf_counter() - t0
    mismatches = []
    for row, rep in zip(ROWS, reports):
        got = round(rep.average, 1)
        if abs(got - row[5]) > 0.05:
            mismatches.append(f'{row[0]} {row[1]} {row[2]}: mean {rep.average:.3f} -> {got} '
                              f'vs printed {row[5]}')
    ok = not mismatches and elapsed < 1.0
    detail = (f'{len(ROWS) - len(mismatches)}/{len(ROWS)} average cells reproduced '
              f'in {elapsed * 1000:.1f} ms')
    if mismatches:
        detail += '; mismatched: ' + '; '.join(mismatches)
    verdict(1, ok, detail)


# -- 2 -------------------------------------------------------------------------

@pytest.fixture(scope='module')
def protocol_dataset(tmp_path_factory):
    ds = tmp_path_factory.mktemp('protocol') / 'ds'
    t0 = time.perf_counter()
    assert main(['mix', '--out', str(ds), '--speakers', '40', '--utterances', '20',
                 '--sample-rate', '8000', '--min-duration', '0.25', '--max-duration', '0.5',
                 '--per-condition', '500', '--seed', '1']) == 0
    assert main(['trials', '--dataset', str(ds), '--per-speaker', '15', '--seed', '1']) == 0
    return ds, time.perf_counter() - t0


def test_02_protocol_counts(verdict, protocol_dataset):
    ds, elapsed = protocol_dataset
    manifest = load_manifest(ds / 'manifest.json')
    per_cond = {c: len(manifest.by_condition(c)) for c in manifest.conditions()}
    trial_counts = {}
    for c in manifest.conditions():
        trials = parse_trials((ds / 'protocol' / 'trials' / f'ov{round(c * 100):03d}.txt')
                              .read_text())
        trial_counts[c] = (len(trials), trials.counts()['target'], trials.counts()['nontarget'])
    ok = (len(manifest.records) == 2500 and set(per_cond.values()) == {500}
          and len(per_cond) == 5 and set(trial_counts.values()) == {(20000, 500, 19500)}
          and elapsed < 300)
    verdict(2, ok, f'{len(manifest.records)} mixtures {sorted(set(per_cond.values()))} per '
                   f'condition; trials per condition {sorted(set(trial_counts.values()))}; '
                   f'{elapsed:.1f} s')


# -- 3-5 -----------------------------------------------------------------------

VOCAB = 'a b c d e f'.split()


def random_transcript(rng, n_speakers, prefix, max_words=5, session='m'):
    segs = []
    for k in range(n_speakers):
        t = rng.uniform(0, 5)
        for _ in range(rng.randint(1, 2)):
            dur = rng.uniform(0.1, 4)
            words = [rng.choice(VOCAB) for _ in range(rng.randint(0, max_words))]
            n = len(words)
            timed = tuple(TimedWord(w, t + dur * i / n, t + dur * (i + 1) / n)
                          for i, w in enumerate(words))
            segs.append(Segment(session, f'{prefix}{k}', t, t + dur, timed))
            t += dur + rng.uniform(0.1, 3)
    rng.shuffle(segs)
    return Transcript(session, tuple(segs))


def streams(t):
    return {spk: [w.text for s in sorted(t.by_speaker(spk).segments, key=lambda s: s.start)
                  for w in s.words] for spk in t.speakers()}


def test_03_tcp_unbounded_equals_cp(verdict):
    rng = random.Random(3)
    bad = 0
    for _ in range(200):
        ref = random_transcript(rng, 2, 's')
        hyp = random_transcript(rng, 2, 'h')
        if tcp_wer(ref, hyp, TcpParams(UNBOUNDED)).stats.errors != cp_wer(ref, hyp).stats.errors:
            bad += 1
    verdict(3, bad == 0, f'{200 - bad}/200 two-speaker cases with identical error counts')


def test_04_cp_matches_permutation_search(verdict):
    rng = random.Random(4)
    bad = 0
    for _ in range(500):
        ref = random_transcript(rng, rng.randint(0, 4), 's')
        hyp = random_transcript(rng, rng.randint(0, 4), 'h')
        if cp_wer(ref, hyp).stats.errors != brute_force_cp_errors(streams(ref), streams(hyp)):
            bad += 1
    verdict(4, bad == 0, f'{500 - bad}/500 cases equal to exhaustive permutation search')


def test_05_edit_distance_oracle(verdict):
    rng = random.Random(5)
    bad = 0
    for _ in range(1000):
        a = [rng.choice('abc') for _ in range(rng.randint(0, 8))]
        b = [rng.choice('abc') for _ in range(rng.randint(0, 8))]
        if word_error_rate(a, b).errors != naive_edit_distance(a, b):
            bad += 1
    verdict(5, bad == 0, f'{1000 - bad}/1000 word pairs equal to naive recursion')


# -- 6 -------------------------------------------------------------------------

def random_activity_spec(rng, prefix):
    spec = {}
    for k in range(rng.randint(1, 3)):
        ivs = []
        for _ in range(rng.randint(1, 3)):
            s = round(rng.uniform(0, 9.5), 3)
            ivs.append((s, round(s + rng.uniform(0.2, 3.0), 3)))
        spec[f'{prefix}{k}'] = ivs
    return spec


def to_activity(spec):
    return SpeakerActivity('m', tuple(ActivityEntry(k, s, e - s)
                                      for k, ivs in spec.items() for s, e in ivs))


def test_06_der_oracle(verdict):
    rng = random.Random(6)
    worst, bad, self_bad, relabel_bad = 0.0, 0, 0, 0
    for i in range(200):
        collar = 0.0 if i % 2 else 0.25
        r, h = random_activity_spec(rng, 's'), random_activity_spec(rng, 'h')
        res = der(to_activity(r), to_activity(h), collar)
        errors, total = frame_der(r, h, collar)
        events = len({t for spec in (r, h) for ivs in spec.values() for iv in ivs for t in iv})
        gap = max(abs(res.errors - errors), abs(res.total_ref - total))
        worst = max(worst, gap / events)
        bad += gap > 0.02 * events
        self_bad += der(to_activity(r), to_activity(r), collar).errors != 0.0
        renamed = {f'q{k[::-1]}': v for k, v in h.items()}
        again = der(to_activity(r), to_activity(renamed), collar)
        relabel_bad += (again.missed, again.false_alarm, again.confusion) != \
            (res.missed, res.false_alarm, res.confusion)
    ok = bad == 0 and self_bad == 0 and relabel_bad == 0
    verdict(6, ok, f'{200 - bad}/200 within 0.02 s x events (worst {worst:.4f} s/event); '
                   f'self-DER nonzero {self_bad}; relabel differences {relabel_bad}')


# -- 7 -------------------------------------------------------------------------

def scored(tar, non):
    return ([ScoredTrial(Trial('e', f't{i}', 'target'), float(s)) for i, s in enumerate(tar)]
            + [ScoredTrial(Trial('e', f'n{i}', 'nontarget'), float(s)) for i, s in enumerate(non)])


def test_07_eer_oracle(verdict):
    worst, cases = 0.0, 0
    for n in range(2, 13):
        for pattern in (lambda i: i, lambda i: i // 2):
            values = [pattern(i) for i in range(n)]
            for mask in range(1, 2 ** n - 1):
                tar = [v for i, v in enumerate(values) if mask >> i & 1]
                non = [v for i, v in enumerate(values) if not mask >> i & 1]
                worst = max(worst, abs(eer(scored(tar, non)).eer - float(exhaustive_eer(tar, non))))
                cases += 1
    rng = np.random.default_rng(7)
    sim = eer(scored(rng.normal(size=10_000), rng.normal(size=10_000))).eer
    ok = worst <= 1e-9 and abs(sim - 0.5) <= 0.02
    verdict(7, ok, f'{cases} score sets of size <= 12, max deviation {worst:.2e}; '
                   f'identical-distribution EER {sim:.4f}')


# -- 8 -------------------------------------------------------------------------

def test_08_si_sdr_properties(verdict, inverse_run, toy_dataset):
    rng = np.random.default_rng(8)
    r = rng.uniform(-0.3, 0.3, 8000)
    e = (r + rng.normal(scale=0.05, size=8000)) * 0.5
    base = si_sdr(Waveform(e), Waveform(r)).value_db
    drift = max(abs(si_sdr(Waveform(b * e), Waveform(r)).value_db - base) for b in (0.1, 10.0))
    hand = si_sdr(Waveform([1.0, 1.0]), Waveform([1.0, 0.0])).value_db
    mid = 'ov060_0001'
    extracted = read_wav(inverse_run.bundle_dir / 'stages' / 'extracted' / f'{mid}.wav')
    oracle = si_sdr(extracted, read_wav(mixture_paths(toy_dataset, mid)['s1'])).value_db
    ok = drift <= 1e-6 and abs(hand) <= 1e-9 and oracle == math.inf
    verdict(8, ok, f'scale drift {drift:.2e} dB; hand case {hand:.1e} dB; oracle TSE {oracle} dB')


# -- 9 -------------------------------------------------------------------------

def tree_bytes(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob('*'))
            if p.is_file()}


def test_09_mixgen_exactness(verdict, protocol_dataset, tmp_path):
    ds, _ = protocol_dataset
    manifest = load_manifest(ds / 'manifest.json')
    overlap_gap = max(abs(r.overlap_measured - r.overlap_requested) for r in manifest.records)
    stem_gap = 0.0
    for r in manifest.records:
        p = mixture_paths(ds, r.mixture_id)
        mix, s1, s2 = (read_wav(p[k]).samples for k in ('mix', 's1', 's2'))
        stem_gap = max(stem_gap, float(np.max(np.abs(s1 + s2 - mix))))
    catalog = synthetic_catalog(tmp_path / 'src', n_speakers=6, utterances_per_speaker=8,
                                sample_rate=8000, seed=9)
    plan = OverlapPlan(mixtures_per_condition=10, seed=9)
    build_dataset(catalog, plan, tmp_path / 'a', gain_jitter_db=2.0, enroll_reserve=4)
    build_dataset(catalog, plan, tmp_path / 'b', gain_jitter_db=2.0, enroll_reserve=4)
    identical = tree_bytes(tmp_path / 'a') == tree_bytes(tmp_path / 'b')
    ok = overlap_gap <= 1e-6 and stem_gap <= 2 * LSB and identical
    verdict(9, ok, f'{len(manifest.records)} mixtures: max overlap error {overlap_gap:.1e}, '
                   f'max stem-sum error {stem_gap / LSB:.2f} LSB; same-seed rerun '
                   f'{"byte-identical" if identical else "differs"}')


# -- 10-12 ---------------------------------------------------------------------

def test_10_inverse_chain(verdict, inverse_run, toy_dataset):
    rows = {(r['step'], r['metric']): r['values']
            for r in load_json(inverse_run.bundle_dir / 'metrics.json')['rows']}
    tcp = rows[('step3', 'tcpWER')]
    der_values = rows[('step3', 'DER')]
    worst = 0.0
    for mid in inverse_run.completed:
        mix = read_wav(mixture_paths(toy_dataset, mid)['mix']).samples
        rec = read_wav(inverse_run.bundle_dir / 'stages' / 'recombined' / f'{mid}.wav').samples
        worst = max(worst, float(np.max(np.abs(rec - mix))))
    ok = (set(tcp.values()) == {0.0} and set(der_values.values()) == {0.0}
          and worst <= LSB and inverse_run.failures == [] and len(inverse_run.completed) == 20
          and inverse_run.elapsed < 120)
    verdict(10, ok, f'tcpWER {sorted(set(tcp.values()))} %, DER {sorted(set(der_values.values()))} %'
                    f' (collar 0.25 s); recombined vs mixture max {worst / LSB:.1f} LSB; '
                    f'{len(inverse_run.failures)} failures; {inverse_run.elapsed:.1f} s')


def test_11_fault_isolation(verdict, faulty_run):
    rows = load_json(faulty_run.bundle_dir / 'metrics.json')['rows']
    tcp = next(r for r in rows if r['metric'] == 'tcpWER')['values']
    failures = load_json(faulty_run.bundle_dir / 'failures.json')
    ok = (len(failures) == 1 and failures[0]['mixture_id'] == FAIL_ID
          and len(faulty_run.completed) == 19 and all(v == 0.0 for v in tcp.values()))
    verdict(11, ok, f'{len(failures)} failure record ({failures[0]["mixture_id"]}, '
                    f'{failures[0]["stage"]}); {len(faulty_run.completed)} mixtures complete')


def test_12_attack_plumbing(verdict, attack_runs, toy_dataset):
    a, b = attack_runs
    tags = ['attack-ignorant-original-ref', 'attack-semi-informed-original-ref']
    distinct = deterministic = True
    unmatched = 0
    for cond in ('ov020', 'ov040', 'ov060', 'ov080', 'ov100'):
        reference = list(parse_trials(
            (toy_dataset / 'protocol' / 'trials' / f'{cond}.txt').read_text()))
        files = [(a.bundle_dir / 'scores' / t / f'{cond}.txt').read_bytes() for t in tags]
        distinct &= files[0] != files[1]
        for t, data in zip(tags, files):
            deterministic &= (b.bundle_dir / 'scores' / t / f'{cond}.txt').read_bytes() == data
            keys = {tuple(line.split()[:2]) for line in data.decode().splitlines()}
            wanted = {(tr.enroll_id, tr.test_id) for tr in reference}
            unmatched += len(keys ^ wanted)
            parse_scores(data.decode(), reference)
    ok = distinct and deterministic and unmatched == 0
    verdict(12, ok, f'score files distinct across configs: {distinct}; byte-identical across '
                    f'runs: {deterministic}; unmatched pairs: {unmatched} '
                    f'({4 * TOY_SPEAKERS} trials per condition)')
