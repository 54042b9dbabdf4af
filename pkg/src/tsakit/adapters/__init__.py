"""Built-in model-free adapters, run as ``python -m tsakit.adapters <name> ...``.

They honor the same file contract as external model wrappers:

* ``oracle-tse``: copies the ground-truth target stem of the mixture.
* ``passthrough``: anonymizer that returns its input unchanged.
* ``stub-anonymizer``: deterministic polarity inversion plus a seeded
  circular rotation inside every 50-sample frame. Changes the samples,
  keeps the length; no anonymization quality is implied.
* ``oracle-asr``: emits the dataset's reference SegLST with speakers
  relabeled; target-only for the ``extracted`` and ``anonymized`` stages.
* ``oracle-diarizer``: emits the dataset's reference RTTM with speakers relabeled.
* ``hash-embedder``: embedding derived from a SHA-256 of the 16-bit samples.
* ``spectral-embedder``: mean log band energies (crude, but speaker dependent
  on synthetic data).

Every adapter accepts ``--fail-id ID`` to exit with status 3 when ``--id``
equals ``ID`` (fault injection).
"""
