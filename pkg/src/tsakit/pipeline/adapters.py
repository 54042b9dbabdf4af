"""File-based adapter contract for external models.

An adapter is an executable plus an argument template. Placeholders
``{in}``, ``{ref}``, ``{out}``, ``{id}``, ``{dataset}`` and ``{stage}``
are substituted with paths and identifiers before the call; exit status 0
means success and the output file must exist afterwards.

Adapter config (JSON), one entry per kind::

    {"tse": {"builtin": "oracle-tse"},
     "anonymizer": {"command": ["python", "anon.py", "{in}", "{out}"], "timeout": 900}}
"""
from __future__ import annotations

import logging
import os
import subprocess
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Mapping, Optional, Sequence, Tuple

logger = logging.getLogger(__name__)

__all__ = [
    'KINDS',
    'AdapterSpec',
    'AdapterError',
    'AdapterConfigError',
    'BUILTINS',
    'builtin_spec',
    'load_adapters',
    'invoke',
]

KINDS = ('tse', 'anonymizer', 'asr', 'embedder', 'diarizer')
REQUIRED_PLACEHOLDERS = {
    'tse': ('{in}', '{ref}', '{out}'),
    'anonymizer': ('{in}', '{out}'),
    'asr': ('{in}', '{out}'),
    'embedder': ('{in}', '{out}'),
    'diarizer': ('{in}', '{out}'),
}
PLACEHOLDERS = ('in', 'ref', 'out', 'id', 'dataset', 'stage')
DEFAULT_TIMEOUT = 600.0

# builtin name -> (kind, argument template after the module invocation)
BUILTINS = {
    'oracle-tse': ('tse', ['--in', '{in}', '--ref', '{ref}', '--out', '{out}',
                           '--dataset', '{dataset}', '--id', '{id}']),
    'passthrough': ('anonymizer', ['--in', '{in}', '--out', '{out}', '--id', '{id}']),
    'stub-anonymizer': ('anonymizer', ['--in', '{in}', '--out', '{out}', '--id', '{id}']),
    'oracle-asr': ('asr', ['--in', '{in}', '--out', '{out}', '--dataset', '{dataset}',
                           '--id', '{id}', '--stage', '{stage}']),
    'oracle-diarizer': ('diarizer', ['--in', '{in}', '--out', '{out}',
                                     '--dataset', '{dataset}', '--id', '{id}']),
    'hash-embedder': ('embedder', ['--in', '{in}', '--out', '{out}', '--id', '{id}']),
    'spectral-embedder': ('embedder', ['--in', '{in}', '--out', '{out}', '--id', '{id}']),
}


class AdapterConfigError(ValueError):
    pass


class AdapterError(RuntimeError):
    def __init__(self, adapter: str, message: str, returncode: int = None, stderr: str = ''):
        self.adapter = adapter
        self.returncode = returncode
        self.stderr = stderr
        detail = f'adapter {adapter}: {message}'
        if stderr.strip():
            detail += '\n' + stderr.strip()[-2000:]
        super().__init__(detail)


@dataclass(frozen=True)
class AdapterSpec:
    kind: str
    invocation: Tuple[str, ...]
    timeout: float = DEFAULT_TIMEOUT
    workdir: Optional[str] = None
    name: Optional[str] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise AdapterConfigError(f'unknown adapter kind {self.kind!r}; expected one of {KINDS}')
        if not self.invocation:
            raise AdapterConfigError(f'{self.kind} adapter has an empty invocation')
        object.__setattr__(self, 'invocation', tuple(str(a) for a in self.invocation))
        joined = ' '.join(self.invocation)
        missing = [p for p in REQUIRED_PLACEHOLDERS[self.kind] if p not in joined]
        if missing:
            raise AdapterConfigError(
                f'{self.kind} adapter template lacks placeholders: {", ".join(missing)}')
        if not self.timeout > 0:
            raise AdapterConfigError('timeout must be > 0')

    @property
    def label(self) -> str:
        return self.name or Path(self.invocation[0]).name


def builtin_spec(name: str, args: Sequence[str] = (), timeout: float = DEFAULT_TIMEOUT,
                 kind: str = None) -> AdapterSpec:
    if name not in BUILTINS:
        raise AdapterConfigError(f'unknown builtin adapter {name!r}; available: {sorted(BUILTINS)}')
    builtin_kind, template = BUILTINS[name]
    if kind is not None and kind != builtin_kind:
        raise AdapterConfigError(f'builtin {name} is a {builtin_kind} adapter, not {kind}')
    invocation = (sys.executable, '-m', 'tsakit.adapters', name, *template, *args)
    return AdapterSpec(builtin_kind, invocation, timeout, None, name)


def _spec_from_config(kind: str, cfg) -> AdapterSpec:
    if isinstance(cfg, AdapterSpec):
        return cfg
    if isinstance(cfg, str):
        cfg = {'builtin': cfg}
    if not isinstance(cfg, Mapping):
        raise AdapterConfigError(f'{kind}: adapter config must be an object')
    timeout = float(cfg.get('timeout', DEFAULT_TIMEOUT))
    if 'builtin' in cfg:
        return builtin_spec(cfg['builtin'], cfg.get('args', ()), timeout, kind)
    if 'command' not in cfg:
        raise AdapterConfigError(f'{kind}: adapter config needs "builtin" or "command"')
    command = cfg['command']
    if isinstance(command, str):
        command = command.split()
    return AdapterSpec(kind, tuple(command), timeout, cfg.get('workdir'), cfg.get('name'))


def load_adapters(config: Mapping) -> Dict[str, AdapterSpec]:
    """Build adapter specs from a config mapping (non-adapter keys ignored)."""
    return {kind: _spec_from_config(kind, config[kind]) for kind in KINDS if kind in config}


def _substitute(arg: str, values: Mapping[str, str]) -> str:
    for key in PLACEHOLDERS:
        token = '{' + key + '}'
        if token in arg:
            arg = arg.replace(token, str(values.get(key, '')))
    return arg


def invoke(spec: AdapterSpec, values: Mapping[str, str], log_path=None) -> None:
    """Run one adapter call; raise :class:`AdapterError` unless it succeeds
    and produces ``values['out']``."""
    argv = [_substitute(a, values) for a in spec.invocation]
    out = Path(values['out'])
    out.parent.mkdir(parents=True, exist_ok=True)
    if out.exists():
        out.unlink()
    env = dict(os.environ)
    # Builtin adapters live in this package; make sure the child can import it.
    src_root = str(Path(__file__).resolve().parents[2])
    env['PYTHONPATH'] = src_root + (os.pathsep + env['PYTHONPATH'] if env.get('PYTHONPATH') else '')
    try:
        proc = subprocess.run(argv, capture_output=True, text=True, timeout=spec.timeout,
                              cwd=spec.workdir, env=env)
    except subprocess.TimeoutExpired as e:
        stderr = e.stderr.decode(errors='replace') if isinstance(e.stderr, bytes) else (e.stderr or '')
        raise AdapterError(spec.label, f'timed out after {spec.timeout} s', None, stderr) from None
    except OSError as e:
        raise AdapterError(spec.label, f'could not start: {e}') from None
    if log_path is not None:
        log_path = Path(log_path)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        log_path.write_text(
            f'$ {" ".join(argv)}\nexit {proc.returncode}\n'
            f'--- stdout\n{proc.stdout}--- stderr\n{proc.stderr}', encoding='utf-8')
    if proc.returncode != 0:
        raise AdapterError(spec.label, f'exited with status {proc.returncode}',
                           proc.returncode, proc.stderr)
    if not out.exists():
        raise AdapterError(spec.label, f'produced no output at {out}', 0, proc.stderr)
