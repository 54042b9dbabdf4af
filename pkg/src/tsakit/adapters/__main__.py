import argparse
import hashlib
import json
import shutil
import sys
from pathlib import Path

import numpy as np

from tsakit.formats.protocol import write_embeddings
from tsakit.formats.rttm import read_rttm, write_rttm
from tsakit.formats.seglst import read_seglst, write_seglst
from tsakit.formats.wav import quantize_pcm16, read_wav, write_wav
from tsakit.model import ActivityEntry, Embedding, Segment, SpeakerActivity, Transcript, Waveform

FRAME = 50
EMBED_DIM = 32


def _relabel(order):
    return {spk: f'spk{chr(ord("A") + i)}' for i, spk in enumerate(order)}


def _first_seen(pairs):
    seen = []
    for _, spk in sorted(pairs, key=lambda p: p[0]):
        if spk not in seen:
            seen.append(spk)
    return seen


def oracle_tse(args):
    shutil.copyfile(Path(args.dataset) / 'wav' / 's1' / f'{args.id}.wav', args.out)


def passthrough(args):
    write_wav(args.out, read_wav(args.infile))


def stub_anonymizer(args):
    wav = read_wav(args.infile)
    x = -wav.samples
    rng = np.random.default_rng(args.seed)
    out = np.empty_like(x)
    for start in range(0, len(x), FRAME):
        frame = x[start:start + FRAME]
        out[start:start + len(frame)] = np.roll(frame, int(rng.integers(1, FRAME)))
    write_wav(args.out, Waveform(out, wav.sample_rate))


def _target_speaker(dataset, mixture_id):
    doc = json.loads((Path(dataset) / 'manifest.json').read_text(encoding='utf-8'))
    for r in doc['records']:
        if r['mixture_id'] == mixture_id:
            return r['target_source']['speaker_id']
    raise SystemExit(f'mixture {mixture_id} not in manifest')


def oracle_asr(args):
    ref = read_seglst(Path(args.dataset) / 'seglst' / f'{args.id}.seglst')
    transcript = ref.get(args.id, Transcript(args.id))
    segments = list(transcript.segments)
    if args.stage in ('extracted', 'anonymized', 'attack_extracted'):
        target = _target_speaker(args.dataset, args.id)
        segments = [s for s in segments if s.speaker_id == target]
    names = _relabel(_first_seen([(s.start, s.speaker_id) for s in segments]))
    segments = [Segment(s.session_id, names[s.speaker_id], s.start, s.end, s.words)
                for s in segments]
    Path(args.out).write_text(write_seglst(Transcript(args.id, tuple(segments))),
                              encoding='utf-8')


def oracle_diarizer(args):
    ref = read_rttm(Path(args.dataset) / 'rttm' / f'{args.id}.rttm')
    act = ref.get(args.id, SpeakerActivity(args.id))
    names = _relabel(_first_seen([(e.onset, e.speaker_id) for e in act.entries]))
    act = SpeakerActivity(act.session_id, tuple(
        ActivityEntry(names[e.speaker_id], e.onset, e.duration) for e in act.entries))
    Path(args.out).write_text(write_rttm(act), encoding='utf-8')


def _read_list(path):
    items = []
    for line in Path(path).read_text(encoding='utf-8').splitlines():
        if line.strip():
            key, wav_path = line.split(maxsplit=1)
            items.append((key, wav_path.strip()))
    return items


def _hash_embedding(wav):
    digest = hashlib.sha256(quantize_pcm16(wav.samples).tobytes()).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], 'little'))
    return rng.standard_normal(EMBED_DIM)


def _spectral_embedding(wav, n_fft=512, hop=256):
    x = wav.samples
    if len(x) < n_fft:
        x = np.concatenate([x, np.zeros(n_fft - len(x))])
    n_frames = 1 + (len(x) - n_fft) // hop
    frames = np.stack([x[i * hop:i * hop + n_fft] for i in range(n_frames)])
    power = np.abs(np.fft.rfft(frames * np.hanning(n_fft), axis=1)) ** 2
    energy = power.sum(axis=1)
    active = energy > 1e-3 * energy.max() if energy.max() > 0 else np.ones(n_frames, bool)
    edges = np.unique(np.geomspace(2, power.shape[1], EMBED_DIM + 1).astype(int))
    bands = np.stack([power[active, lo:hi].sum(axis=1)
                      for lo, hi in zip(edges[:-1], edges[1:])], axis=1)
    feats = np.log(bands + 1e-10).mean(axis=0)
    feats = feats - feats.mean()
    if not np.any(feats):
        feats[0] = 1.0
    return feats


def embedder(fn):
    def run(args):
        out = {key: Embedding(fn(read_wav(path))) for key, path in _read_list(args.infile)}
        Path(args.out).write_text(write_embeddings(out), encoding='utf-8')
    return run


COMMANDS = {
    'oracle-tse': oracle_tse,
    'passthrough': passthrough,
    'stub-anonymizer': stub_anonymizer,
    'oracle-asr': oracle_asr,
    'oracle-diarizer': oracle_diarizer,
    'hash-embedder': embedder(_hash_embedding),
    'spectral-embedder': embedder(_spectral_embedding),
}


def main(argv=None):
    parser = argparse.ArgumentParser(prog='python -m tsakit.adapters')
    parser.add_argument('name', choices=sorted(COMMANDS))
    parser.add_argument('--in', dest='infile', required=True)
    parser.add_argument('--out', required=True)
    parser.add_argument('--ref')
    parser.add_argument('--dataset')
    parser.add_argument('--id', default='')
    parser.add_argument('--stage', default='')
    parser.add_argument('--seed', type=int, default=0)
    parser.add_argument('--fail-id', action='append', default=[])
    args = parser.parse_args(argv)
    if args.id and args.id in args.fail_id:
        print(f'injected failure for {args.id}', file=sys.stderr)
        return 3
    COMMANDS[args.name](args)
    return 0


if __name__ == '__main__':
    sys.exit(main())
