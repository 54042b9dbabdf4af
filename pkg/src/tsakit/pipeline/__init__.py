"""Pipeline orchestration: adapters, single steps, dataset runs, evaluation."""
from tsakit.pipeline.adapters import (AdapterConfigError, AdapterError, AdapterSpec,
                                      builtin_spec, invoke, load_adapters)
from tsakit.pipeline.runner import (STEPS, PipelineConfigError, PipelineRun, RunResult,
                                    StageArtifact, bundle_digest, run_attack, run_dataset)
from tsakit.pipeline.stages import (StageError, compute_residual, recombine, run_anonymizer,
                                    run_asr, run_diarizer, run_embedder, run_tse)

__all__ = [
    'AdapterConfigError', 'AdapterError', 'AdapterSpec', 'builtin_spec', 'invoke',
    'load_adapters', 'STEPS', 'PipelineConfigError', 'PipelineRun', 'RunResult',
    'StageArtifact', 'bundle_digest', 'run_attack', 'run_dataset', 'StageError',
    'compute_residual', 'recombine', 'run_anonymizer', 'run_asr', 'run_diarizer',
    'run_embedder', 'run_tse',
]
