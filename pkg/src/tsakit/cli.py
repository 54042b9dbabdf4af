"""``tsakit`` command line.

Exit status: 0 success, 1 usage error, 2 data error.
"""
from __future__ import annotations

import argparse
import difflib
import json
import logging
import sys
from pathlib import Path

logger = logging.getLogger('tsakit')

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

DEFAULT_ADAPTERS = {
    'tse': 'oracle-tse',
    'anonymizer': 'passthrough',
    'asr': 'oracle-asr',
    'diarizer': 'oracle-diarizer',
    'embedder': 'hash-embedder',
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f'{self.prog}: error: {message}')


def _option_strings(parser: argparse.ArgumentParser):
    return [s for a in parser._actions for s in a.option_strings]


def _suggest(word, candidates) -> str:
    close = difflib.get_close_matches(word, candidates, n=1, cutoff=0.5)
    return f" (did you mean '{close[0]}'?)" if close else ''


def _pct(x):
    return f'{100 * x:.1f}%'


def _emit(args, payload: dict, text: str):
    if args.json:
        print(json.dumps(payload, indent=1, default=str))
    else:
        print(text)


def _conditions(text):
    try:
        return tuple(float(x) for x in text.split(','))
    except ValueError:
        raise argparse.ArgumentTypeError(f'expected comma-separated fractions, got {text!r}')


# -- subcommands -------------------------------------------------------------

def cmd_mix(args):
    from tsakit.mixgen import OverlapPlan, SourceCatalog, build_dataset, synthetic_catalog

    out = Path(args.out)
    if args.catalog:
        catalog = SourceCatalog.load(args.catalog)
    else:
        catalog = synthetic_catalog(out / 'sources', args.speakers, args.utterances,
                                    args.sample_rate, args.min_duration, args.max_duration,
                                    args.seed)
    plan = OverlapPlan(args.conditions, args.per_condition, args.seed)
    manifest = build_dataset(catalog, plan, out, args.gain_jitter_db, args.enroll_reserve,
                             args.reference_pool)
    counts = {f'{c:g}': len(manifest.by_condition(c)) for c in manifest.conditions()}
    _emit(args, {'dataset': str(out), 'mixtures': len(manifest.records), 'per_condition': counts},
          f'wrote {len(manifest.records)} mixtures to {out} '
          + ' '.join(f'{k}:{v}' for k, v in counts.items()))


def cmd_trials(args):
    from tsakit.formats.manifest import load_manifest
    from tsakit.formats.protocol import write_trials
    from tsakit.mixgen import SourceCatalog, condition_tag
    from tsakit.protocol import generate_enrollment, generate_trials, save_enrollment

    dataset = Path(args.dataset)
    manifest = load_manifest(dataset / 'manifest.json')
    catalog = SourceCatalog.load(args.catalog or dataset / 'catalog.json')
    enrollment = generate_enrollment(catalog, args.per_speaker, manifest.utterance_ids(),
                                     args.seed)
    protocol = dataset / 'protocol'
    (protocol / 'trials').mkdir(parents=True, exist_ok=True)
    save_enrollment(protocol / 'enrollment.json', enrollment)
    summary = {}
    for cond in manifest.conditions():
        trials = generate_trials(manifest.by_condition(cond), enrollment, cond)
        (protocol / 'trials' / f'{condition_tag(cond)}.txt').write_text(
            write_trials(trials), encoding='utf-8')
        summary[f'{cond:g}'] = dict(trials.counts(), total=len(trials))
    _emit(args, {'speakers': len(enrollment), 'conditions': summary},
          f'{len(enrollment)} enrolled speakers\n' + '\n'.join(
              f'{k}: {v["total"]} trials ({v["target"]} target, {v["nontarget"]} nontarget)'
              for k, v in summary.items()))


def _read_pair_seglst(args):
    from tsakit.formats.seglst import read_seglst
    return read_seglst(args.ref), read_seglst(args.hyp)


def _wer_payload(stats, extra=None):
    d = dict(stats.as_dict(), wer=stats.rate)
    d.update(extra or {})
    return d


def cmd_eval_wer(args):
    from tsakit.model import Transcript
    from tsakit.pipeline.evaluate import target_wer
    from tsakit.text_metrics import WerStats

    refs, hyps = _read_pair_seglst(args)
    total = WerStats()
    for session in sorted(set(refs) | set(hyps)):
        ref = refs.get(session, Transcript(session))
        hyp = hyps.get(session, Transcript(session))
        if args.speaker is None:
            total = total + target_wer(_merge_speakers(ref), hyp, '_')
        else:
            total = total + target_wer(ref, hyp, args.speaker)
    _emit(args, _wer_payload(total), f'WER: {_pct(total.rate)} ' + _counts(total))


def _merge_speakers(t):
    from tsakit.model import Segment, Transcript
    return Transcript(t.session_id, tuple(Segment(s.session_id, '_', s.start, s.end, s.words)
                                          for s in t.segments))


def _counts(stats):
    return (f'(S={stats.substitutions} I={stats.insertions} D={stats.deletions} '
            f'N={stats.ref_length})')


def cmd_eval_cpwer(args):
    from tsakit.text_metrics import cp_wer_corpus
    refs, hyps = _read_pair_seglst(args)
    total = cp_wer_corpus(refs, hyps, normalize=not args.no_normalize)
    _emit(args, _wer_payload(total), f'cpWER: {_pct(total.rate)} ' + _counts(total))


def cmd_eval_tcpwer(args):
    from tsakit.text_metrics import TcpParams, tcp_wer_corpus
    refs, hyps = _read_pair_seglst(args)
    total = tcp_wer_corpus(refs, hyps, TcpParams(args.collar), normalize=not args.no_normalize)
    _emit(args, _wer_payload(total, {'collar': args.collar}),
          f'tcpWER: {_pct(total.rate)} ' + _counts(total))


def cmd_eval_der(args):
    from tsakit.diar_metrics import DerResult, der
    from tsakit.formats.rttm import read_rttm
    from tsakit.model import SpeakerActivity

    refs, hyps = read_rttm(args.ref), read_rttm(args.hyp)
    total = DerResult(0.0, 0.0, 0.0, 0.0)
    for session in sorted(set(refs) | set(hyps)):
        total = total + der(refs.get(session, SpeakerActivity(session)),
                            hyps.get(session, SpeakerActivity(session)), args.collar)
    payload = {'der': total.der, 'missed': total.missed, 'false_alarm': total.false_alarm,
               'confusion': total.confusion, 'total_ref': total.total_ref, 'collar': args.collar}
    _emit(args, payload,
          f'DER: {_pct(total.der)} (missed={total.missed:.3f}s fa={total.false_alarm:.3f}s '
          f'conf={total.confusion:.3f}s ref={total.total_ref:.3f}s)')


def cmd_eval_eer(args):
    from tsakit.asv_metrics import eer
    from tsakit.formats.protocol import parse_scores, parse_trials, read_text

    trials = parse_trials(read_text(args.trials), source=args.trials)
    scored = parse_scores(read_text(args.scores), trials, source=args.scores)
    res = eer(scored)
    counts = trials.counts()
    _emit(args, {'eer': res.eer, 'threshold': res.threshold, **counts},
          f'EER: {_pct(res.eer)} (threshold {res.threshold:.6g}; '
          f'{counts["target"]} target, {counts["nontarget"]} nontarget)')


def cmd_eval_sisdr(args):
    from tsakit.formats.wav import read_wav
    from tsakit.signal_metrics import mean_si_sdr, si_sdr

    est, ref = Path(args.est), Path(args.ref)
    if est.is_dir() != ref.is_dir():
        raise ValueError('--est and --ref must both be files or both be directories')
    if est.is_dir():
        names = sorted(p.name for p in est.glob('*.wav'))
        missing = [n for n in names if not (ref / n).exists()]
        if missing:
            raise ValueError(f'no reference for: {", ".join(missing[:5])}')
        pairs = [(est / n, ref / n) for n in names]
    else:
        pairs = [(est, ref)]
    results = {p.stem: si_sdr(read_wav(p), read_wav(r)).value_db for p, r in pairs}
    finite = [v for v in results.values() if v != float('inf')]
    mean = mean_si_sdr(results.values()) if finite else None
    payload = {'values': {k: (None if v == float('inf') else v) for k, v in results.items()},
               'n_infinite': len(results) - len(finite),
               'mean': mean.value_db if mean else None}
    if len(results) == 1:
        v = next(iter(results.values()))
        text = f'SI-SDR: {v:.2f} dB' if v != float('inf') else 'SI-SDR: +inf dB (exact)'
    else:
        text = (f'SI-SDR: mean {mean.value_db:.2f} dB over {mean.n_finite} files'
                if mean else 'SI-SDR: all files exact (+inf dB)')
        if payload['n_infinite']:
            text += f', {payload["n_infinite"]} exact (+inf) excluded'
    _emit(args, payload, text)


def _load_adapter_config(path):
    from tsakit.pipeline.adapters import load_adapters
    config = dict(DEFAULT_ADAPTERS)
    if path:
        config = json.loads(Path(path).read_text(encoding='utf-8'))
    return config, load_adapters(config)


def _attack_configs(specs, config):
    from tsakit.protocol import AttackConfig
    out = []
    entries = list(specs or [])
    if not entries and 'attacks' in config:
        entries = config['attacks']
    for e in entries:
        if isinstance(e, str):
            kind, _, ref = e.partition(':')
            out.append(AttackConfig(kind, ref or 'original'))
        else:
            out.append(AttackConfig(e.get('attacker_kind', 'semi-informed'),
                                    e.get('reference_kind', 'original')))
    return out


def cmd_run_pipeline(args):
    from tsakit.pipeline.runner import STEPS, run_dataset

    config, adapters = _load_adapter_config(args.adapters)
    steps = set(args.steps.split(',')) if args.steps else set(STEPS)
    attacks = _attack_configs(args.attack, config)
    result = run_dataset(args.dataset, args.bundle, adapters, steps, attacks,
                         workers=args.workers, tcp_collar=args.tcp_collar,
                         der_collar=args.der_collar)
    payload = {'bundle': str(result.bundle_dir), 'completed': len(result.completed),
               'failures': result.failures, 'adapter_calls': result.adapter_calls,
               'reused': result.reused}
    _emit(args, payload,
          f'{len(result.completed)} mixtures complete, {len(result.failures)} failures; '
          f'{result.adapter_calls} adapter calls, {result.reused} reused; bundle {result.bundle_dir}')


def cmd_run_attack(args):
    from tsakit.pipeline.runner import run_attack
    from tsakit.protocol import AttackConfig

    _, adapters = _load_adapter_config(args.adapters)
    cfg = AttackConfig(args.attacker, args.reference)
    result = run_attack(cfg, args.dataset, args.bundle, adapters, workers=args.workers,
                        prepare_references=args.prepare_references)
    scores = sorted(str(p) for p in (Path(args.bundle) / 'scores' / cfg.tag).glob('*.txt'))
    _emit(args, {'tag': cfg.tag, 'scores': scores, 'failures': result.failures},
          f'{cfg.tag}: {len(scores)} score files, {len(result.failures)} failures')


def cmd_report(args):
    from tsakit.report import build_reports, load_rows, render_csv, render_json, render_text

    reports = build_reports(load_rows(args.source))
    fmt = 'json' if args.json else args.format
    text = {'text': render_text, 'csv': render_csv, 'json': render_json}[fmt](reports)
    if args.out:
        Path(args.out).write_text(text, encoding='utf-8')
    else:
        sys.stdout.write(text)


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument('--json', action='store_true', help='machine-readable output')
    common.add_argument('-v', '--verbose', action='count', default=0)

    p = _Parser(prog='tsakit', description='Target speaker anonymization evaluation toolkit.')
    sub = p.add_subparsers(dest='command', metavar='COMMAND', parser_class=_Parser)

    s = sub.add_parser('mix', parents=[common], help='synthesize a two-speaker mixture dataset')
    s.add_argument('--out', required=True)
    s.add_argument('--catalog', help='source catalog JSON (default: synthetic sources)')
    s.add_argument('--speakers', type=int, default=40)
    s.add_argument('--utterances', type=int, default=20, help='per synthetic speaker')
    s.add_argument('--sample-rate', type=int, default=16000)
    s.add_argument('--min-duration', type=float, default=0.5)
    s.add_argument('--max-duration', type=float, default=1.5)
    s.add_argument('--conditions', type=_conditions, default=(0.2, 0.4, 0.6, 0.8, 1.0))
    s.add_argument('--per-condition', type=int, default=500)
    s.add_argument('--seed', type=int, default=0)
    s.add_argument('--gain-jitter-db', type=float, default=0.0)
    s.add_argument('--enroll-reserve', type=int, default=15)
    s.add_argument('--reference-pool', type=int, default=2)
    s.set_defaults(func=cmd_mix)

    s = sub.add_parser('trials', parents=[common], help='enrollment sets and trial lists')
    s.add_argument('--dataset', required=True)
    s.add_argument('--catalog')
    s.add_argument('--per-speaker', type=int, default=15)
    s.add_argument('--seed', type=int, default=0)
    s.set_defaults(func=cmd_trials)

    for name, func, helptext in [('eval-wer', cmd_eval_wer, 'word error rate'),
                                 ('eval-cpwer', cmd_eval_cpwer, 'concatenated minimum-permutation WER'),
                                 ('eval-tcpwer', cmd_eval_tcpwer, 'time-constrained cpWER')]:
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument('--ref', required=True, help='reference SegLST')
        s.add_argument('--hyp', required=True, help='hypothesis SegLST')
        if name == 'eval-wer':
            s.add_argument('--speaker', help='score only this reference speaker')
        else:
            s.add_argument('--no-normalize', action='store_true')
        if name == 'eval-tcpwer':
            s.add_argument('--collar', type=float, default=5.0)
        s.set_defaults(func=func)

    s = sub.add_parser('eval-der', parents=[common], help='diarization error rate')
    s.add_argument('--ref', required=True)
    s.add_argument('--hyp', required=True)
    s.add_argument('--collar', type=float, default=0.25)
    s.set_defaults(func=cmd_eval_der)

    s = sub.add_parser('eval-eer', parents=[common], help='equal error rate')
    s.add_argument('--trials', required=True)
    s.add_argument('--scores', required=True)
    s.set_defaults(func=cmd_eval_eer)

    s = sub.add_parser('eval-sisdr', parents=[common], help='SI-SDR of files or directories')
    s.add_argument('--est', required=True)
    s.add_argument('--ref', required=True)
    s.set_defaults(func=cmd_eval_sisdr)

    s = sub.add_parser('run-pipeline', parents=[common], help='run the anonymization pipeline')
    s.add_argument('--dataset', required=True)
    s.add_argument('--bundle', required=True)
    s.add_argument('--adapters', help='adapter config JSON (default: built-in oracles)')
    s.add_argument('--steps', help='comma-separated subset of original,step1,step2,step3,attack')
    s.add_argument('--attack', action='append',
                   help='attacker[:reference], e.g. ignorant:original (repeatable)')
    s.add_argument('--workers', type=int, help='worker pool width (env TSAKIT_WORKERS)')
    s.add_argument('--tcp-collar', type=float, default=5.0)
    s.add_argument('--der-collar', type=float, default=0.25)
    s.set_defaults(func=cmd_run_pipeline)

    s = sub.add_parser('run-attack', parents=[common], help='attack recombined audio of a bundle')
    s.add_argument('--dataset', required=True)
    s.add_argument('--bundle', required=True)
    s.add_argument('--adapters')
    s.add_argument('--attacker', choices=['ignorant', 'semi-informed'], default='semi-informed')
    s.add_argument('--reference', choices=['original', 'anonymized'], default='original')
    s.add_argument('--prepare-references', action='store_true',
                   help='anonymize missing TSE references instead of failing')
    s.add_argument('--workers', type=int)
    s.set_defaults(func=cmd_run_attack)

    s = sub.add_parser('report', parents=[common], help='render per-condition result tables')
    s.add_argument('source', help='bundle directory or metrics JSON')
    s.add_argument('--format', choices=['text', 'csv', 'json'], default='text')
    s.add_argument('--out')
    s.set_defaults(func=cmd_report)
    return p


def _subparsers(parser):
    for a in parser._actions:
        if isinstance(a, argparse._SubParsersAction):
            return a.choices
    return {}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    commands = _subparsers(parser)
    try:
        if not argv:
            raise UsageError('tsakit: error: a command is required')
        if not argv[0].startswith('-') and argv[0] not in commands:
            raise UsageError(f"tsakit: error: unknown command '{argv[0]}'"
                             + _suggest(argv[0], list(commands)))
        args, extra = parser.parse_known_args(argv)
        if extra:
            sp = commands.get(args.command, parser) if args.command else parser
            flags = [e for e in extra if e.startswith('-')]
            hint = _suggest(flags[0].split('=')[0], _option_strings(sp)) if flags else ''
            raise UsageError(f'{sp.prog}: error: unrecognized arguments: {" ".join(extra)}{hint}')
        if args.command is None:
            raise UsageError('tsakit: error: a command is required')
    except UsageError as e:
        target = parser
        if argv and argv[0] in commands:
            target = commands[argv[0]]
        sys.stderr.write(target.format_usage())
        sys.stderr.write(f'{e}\n')
        return EXIT_USAGE
    except SystemExit as e:  # --help
        return EXIT_OK if not e.code else EXIT_USAGE

    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s')
    try:
        args.func(args)
    except (ValueError, KeyError, OSError) as e:
        # FormatError, PipelineConfigError and AdapterConfigError are ValueErrors.
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        sys.stderr.write(f'tsakit {args.command}: error: {msg}\n')
        return EXIT_DATA
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
