import io
import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tsakit.formats import (FormatError, WavFormatError, load_manifest, parse_embeddings,
                            parse_rttm, parse_scores, parse_seglst, parse_trials, read_wav,
                            save_manifest, write_embeddings, write_rttm, write_seglst,
                            write_trials, write_wav)
from tsakit.formats.manifest import Manifest, dumps_manifest, loads_manifest
from tsakit.formats.wav import encode_wav, quantize_pcm16, write_float_wav
from tsakit.model import (ActivityEntry, Embedding, MixtureRecord, Segment, SourceRef,
                          SpeakerActivity, TimedWord, Transcript, Trial, Waveform)

LINE = '{"session_id":"m1","speaker":"s1","start_time":0.0,"end_time":1.0,"words":"hello world"}'


# -- SegLST ------------------------------------------------------------------

def test_seglst_single_line():
    t = parse_seglst(LINE)['m1']
    assert len(t.segments) == 1
    seg = t.segments[0]
    assert [w.text for w in seg.words] == ['hello', 'world']
    # placeholder timing: every word spans its segment
    assert all((w.start, w.end) == (0.0, 1.0) for w in seg.words)


def test_seglst_empty_input():
    assert parse_seglst('') == {}
    assert parse_seglst('\n  \n') == {}


def test_seglst_missing_key_message():
    line = '{"session_id":"m1","start_time":0.0,"end_time":1.0,"words":""}'
    with pytest.raises(FormatError) as e:
        parse_seglst(line)
    assert str(e.value) == 'missing key: speaker @ line 1'


@pytest.mark.parametrize('text,fragment', [
    ('{"session_id": "m1",', 'malformed JSON'),
    ('[1, 2]', 'expected a JSON object'),
    (LINE.replace('1.0,"words"', '-1.0,"words"'), 'start_time must be <= end_time'),
    (LINE.replace('"start_time":0.0', '"start_time":"x"'), 'start_time must be numeric'),
    (LINE.replace('"hello world"', '3'), 'words must be a string'),
    (LINE.replace('"start_time":0.0', '"start_time":NaN'), 'finite'),
])
def test_seglst_errors(text, fragment):
    with pytest.raises(FormatError, match=fragment):
        parse_seglst(LINE + '\n' + text)


def test_seglst_error_line_number():
    with pytest.raises(FormatError) as e:
        parse_seglst(LINE + '\n\n{bad')
    assert e.value.line == 3


def test_seglst_round_trip():
    t = parse_seglst(LINE)['m1']
    assert parse_seglst(write_seglst(t))['m1'] == t


def test_seglst_empty_words_written():
    t = Transcript('m', (Segment('m', 'a', 0.0, 1.0),))
    assert json.loads(write_seglst(t))['words'] == ''


def test_seglst_interleaved_sessions_grouped_in_input_order():
    lines = [
        {'session_id': 'b', 'speaker': 'x', 'start_time': 0, 'end_time': 1, 'words': 'one'},
        {'session_id': 'a', 'speaker': 'y', 'start_time': 0, 'end_time': 1, 'words': 'two'},
        {'session_id': 'b', 'speaker': 'y', 'start_time': 1, 'end_time': 2, 'words': 'three'},
    ]
    parsed = parse_seglst('\n'.join(json.dumps(x) for x in lines))
    assert list(parsed) == ['b', 'a']
    out = [json.loads(l) for l in write_seglst(parsed).splitlines()]
    # independent reader: group the raw objects by first-seen session
    expected = [lines[0], lines[2], lines[1]]
    assert [(o['session_id'], o['words']) for o in out] == \
        [(o['session_id'], o['words']) for o in expected]


def test_seglst_accepts_stream():
    assert 'm1' in parse_seglst(io.StringIO(LINE + '\n'))


ident = st.text(st.characters(whitelist_categories=('L', 'N')), min_size=1, max_size=6)
seg_words = st.lists(ident, max_size=5)


@st.composite
def transcripts(draw):
    session = draw(ident)
    segs = []
    for _ in range(draw(st.integers(0, 5))):
        start = draw(st.floats(0, 1000, allow_nan=False))
        end = start + draw(st.floats(0, 50, allow_nan=False))
        words = tuple(TimedWord(w, start, end) for w in draw(seg_words))
        segs.append(Segment(session, draw(ident), start, end, words))
    return Transcript(session, tuple(segs))


@given(transcripts())
def test_seglst_round_trip_property(t):
    back = parse_seglst(write_seglst(t)).get(t.session_id, Transcript(t.session_id))
    assert len(back.segments) == len(t.segments)
    for a, b in zip(t.segments, back.segments):
        assert (a.session_id, a.speaker_id, a.text) == (b.session_id, b.speaker_id, b.text)
        assert abs(a.start - b.start) <= 1e-6 and abs(a.end - b.end) <= 1e-6


# -- RTTM --------------------------------------------------------------------

def test_rttm_single_line():
    act = parse_rttm('SPEAKER m1 1 0.00 5.00 <NA> <NA> s1 <NA> <NA>')['m1']
    assert act.entries == (ActivityEntry('s1', 0.0, 5.0),)


def test_rttm_zero_duration():
    with pytest.raises(FormatError, match='duration must be > 0'):
        parse_rttm('SPEAKER m1 1 0.00 0.00 <NA> <NA> s1 <NA> <NA>')


@pytest.mark.parametrize('line,fragment', [
    ('SPEAKER m1 1 0.00 5.00 <NA> <NA> s1 <NA>', 'expected 10 fields'),
    ('SPEAKER m1 1 abc 5.00 <NA> <NA> s1 <NA> <NA>', 'numeric'),
    ('SPEAKER m1 1 -1 5.00 <NA> <NA> s1 <NA> <NA>', 'onset must be >= 0'),
    ('LEXEME m1 1 0 5.00 <NA> <NA> s1 <NA> <NA>', 'SPEAKER'),
])
def test_rttm_errors(line, fragment):
    with pytest.raises(FormatError, match=fragment) as e:
        parse_rttm('; comment\n' + line)
    assert e.value.line == 2


def test_rttm_round_trip_text():
    text = ('SPEAKER m1 1 0.00 5.00 <NA> <NA> s1 <NA> <NA>\n'
            'SPEAKER m1 1 2.50 1.25 <NA> <NA> s2 <NA> <NA>\n'
            'SPEAKER m2 1 0.10 0.20 <NA> <NA> s1 <NA> <NA>\n')
    assert write_rttm(parse_rttm(text)) == text


@given(st.lists(st.tuples(ident, st.floats(0, 1e4), st.floats(0.01, 100)), max_size=8))
def test_rttm_round_trip_property(entries):
    act = SpeakerActivity('s', tuple(ActivityEntry(*e) for e in entries))
    back = parse_rttm(write_rttm(act, precision=6)).get('s', SpeakerActivity('s'))
    assert [e.speaker_id for e in back.entries] == [e.speaker_id for e in act.entries]
    for a, b in zip(act.entries, back.entries):
        assert abs(a.onset - b.onset) <= 1e-6 and abs(a.duration - b.duration) <= 1e-6


# -- WAV ---------------------------------------------------------------------

def test_wav_ramp_round_trip(tmp_path):
    ramp = Waveform(np.linspace(-1, 1, 100), 16000)
    write_wav(tmp_path / 'r.wav', ramp)
    back = read_wav(tmp_path / 'r.wav')
    assert back.sample_rate == 16000 and len(back) == 100
    assert np.max(np.abs(back.samples - ramp.samples)) <= 2 ** -15


def test_wav_empty_round_trip(tmp_path):
    write_wav(tmp_path / 'e.wav', Waveform(np.zeros(0), 8000))
    back = read_wav(tmp_path / 'e.wav')
    assert len(back) == 0 and back.sample_rate == 8000


def test_wav_matches_stdlib_wave_reader(tmp_path):
    import wave
    x = np.sin(np.arange(500) / 7.0) * 0.8
    write_wav(tmp_path / 's.wav', Waveform(x, 22050))
    with wave.open(str(tmp_path / 's.wav')) as w:
        assert (w.getnchannels(), w.getsampwidth(), w.getframerate()) == (1, 2, 22050)
        ints = np.frombuffer(w.readframes(w.getnframes()), '<i2')
    assert np.array_equal(ints, quantize_pcm16(x))
    assert np.array_equal(read_wav(tmp_path / 's.wav').samples, ints / 32768.0)


def test_wav_stereo_rejected(tmp_path):
    import wave
    with wave.open(str(tmp_path / 'st.wav'), 'wb') as w:
        w.setnchannels(2)
        w.setsampwidth(2)
        w.setframerate(16000)
        w.writeframes(b'\0' * 40)
    with pytest.raises(WavFormatError, match='mono required'):
        read_wav(tmp_path / 'st.wav')


def _riff(fmt_tag, bits=16, data=b'\0\0'):
    fmt = struct.pack('<HHIIHH', fmt_tag, 1, 16000, 16000 * bits // 8, bits // 8, bits)
    body = b'WAVE' + b'fmt ' + struct.pack('<I', len(fmt)) + fmt + b'data' + \
        struct.pack('<I', len(data)) + data
    return b'RIFF' + struct.pack('<I', len(body)) + body


def test_wav_unsupported_codec_names_tag(tmp_path):
    (tmp_path / 'a.wav').write_bytes(_riff(6, 8, b'\0'))  # A-law
    with pytest.raises(WavFormatError, match='0x0006'):
        read_wav(tmp_path / 'a.wav')


def test_wav_float32_read(tmp_path):
    x = np.array([0.0, 0.25, -0.5, 1.5], dtype=np.float32)
    write_float_wav(tmp_path / 'f.wav', Waveform(x))
    assert np.array_equal(read_wav(tmp_path / 'f.wav').samples, x.astype(np.float64))


def test_wav_write_clips_and_rounds():
    q = quantize_pcm16(np.array([2.0, -2.0, 0.5 / 32768, -0.5 / 32768, 1.5 / 32768]))
    assert list(q) == [32767, -32768, 1, -1, 2]


def test_wav_not_riff():
    with pytest.raises(WavFormatError):
        read_wav(io.BytesIO(b'hello world, not a wav file'))


@settings(max_examples=200)
@given(st.binary(max_size=80))
def test_wav_parser_total(data):
    try:
        read_wav(io.BytesIO(b'RIFF' + data))
    except WavFormatError:
        pass


@given(st.lists(st.floats(-1, 1 - 2 ** -15), max_size=200))
def test_wav_quantization_bound(values):
    back = read_wav(io.BytesIO(encode_wav(Waveform(np.array(values)))))
    if values:
        assert np.max(np.abs(back.samples - np.array(values))) <= 2 ** -16 + 1e-12


# -- trials / scores / embeddings ---------------------------------------------

def test_trials_and_scores_join():
    trials = parse_trials('a u1 target\nb u1 nontarget\n')
    scored = parse_scores('b u1 -0.5\na u1 0.75\n', trials)
    assert [(s.trial.enroll_id, s.score) for s in scored] == [('a', 0.75), ('b', -0.5)]


def test_scores_unknown_pair():
    trials = parse_trials('a u1 target\nb u1 nontarget\n')
    with pytest.raises(FormatError, match=r'unmatched score pairs: \(c, u1\)'):
        parse_scores('a u1 1\nb u1 0\nc u1 0\n', trials)


def test_scores_duplicate_and_missing():
    trials = parse_trials('a u1 target\nb u1 nontarget\n')
    with pytest.raises(FormatError, match=r'duplicate score pairs: \(a, u1\)') as e:
        parse_scores('a u1 1\na u1 0\n', trials)
    assert 'trials without score: (b, u1)' in str(e.value)


def test_trials_bad_label_and_duplicates():
    with pytest.raises(FormatError, match='label'):
        parse_trials('a u1 maybe\n')
    with pytest.raises(FormatError, match='duplicate trial'):
        parse_trials('a u1 target\na u1 target\n')


def test_trials_20000_counts():
    lines = []
    for m in range(500):
        lines.append(f'spk{m % 40:03d} mix{m:04d} target')
        lines.extend(f'spk{s:03d} mix{m:04d} nontarget' for s in range(40) if s != m % 40)
    trials = parse_trials('\n'.join(lines))
    assert len(trials) == 20000
    assert trials.counts() == {'target': 500, 'nontarget': 19500}
    assert write_trials(trials).splitlines() == lines


def test_embeddings_round_trip():
    emb = {'a': Embedding([0.1, -2.5, 3e-9]), 'b': Embedding([1.0, 2.0, 3.0])}
    assert parse_embeddings(write_embeddings(emb)) == emb


@pytest.mark.parametrize('text,fragment', [
    ('a 1 2\nb 1\n', 'dimension'),
    ('a 1 x\n', 'numeric'),
    ('a\n', 'at least one value'),
    ('a 1\na 2\n', 'duplicate'),
    ('a inf\n', 'finite'),
])
def test_embeddings_errors(text, fragment):
    with pytest.raises(FormatError, match=fragment):
        parse_embeddings(text)


text_parsers = [parse_seglst, parse_rttm, parse_trials, parse_embeddings,
                lambda t: parse_scores(t, [Trial('a', 'b', 'target')])]


@settings(max_examples=300)
@given(st.sampled_from(range(len(text_parsers))),
       st.text(alphabet=st.sampled_from(list('SPEAKER{}[]":,.0123456789-e ;\n\tabnNtrgo<>')),
               max_size=120))
def test_text_parsers_total(which, text):
    try:
        text_parsers[which](text)
    except FormatError as e:
        assert str(e)


@settings(max_examples=100)
@given(st.dictionaries(st.sampled_from(['session_id', 'speaker', 'start_time', 'end_time',
                                        'words']),
                       st.one_of(st.none(), st.booleans(), st.integers(-10 ** 400, 10 ** 400),
                                 st.floats(), ident, st.lists(st.integers(), max_size=2))))
def test_seglst_total_over_json_values(obj):
    try:
        parse_seglst(json.dumps(obj))
    except FormatError:
        pass


# -- manifest ----------------------------------------------------------------

def _record(mid='ov040_0000'):
    act = SpeakerActivity(mid, (ActivityEntry('A', 0.0, 1.0), ActivityEntry('B', 0.5, 1.0)))
    return MixtureRecord(mid, SourceRef('ua', 'A', 0.0, 1.0), SourceRef('ub', 'B', 0.5, 0.8),
                         0.4, 1 / 3, act)


def test_manifest_round_trip(tmp_path):
    m = Manifest((_record(),), 16000, 3, {'ov040_0000': 'ref1'})
    save_manifest(tmp_path / 'm.json', m)
    back = load_manifest(tmp_path / 'm.json')
    assert back == m
    assert dumps_manifest(back) == dumps_manifest(m)
    assert back.utterance_ids() == {'ua', 'ub', 'ref1'}


def test_manifest_field_names_match_record():
    doc = json.loads(dumps_manifest(Manifest((_record(),))))
    assert set(doc['records'][0]) == set(MixtureRecord.__dataclass_fields__)


def test_manifest_rejects_invalid_record():
    doc = json.loads(dumps_manifest(Manifest((_record(),))))
    doc['records'][0]['overlap_measured'] = 0.9
    with pytest.raises(FormatError, match='overlap_measured'):
        loads_manifest(json.dumps(doc))
