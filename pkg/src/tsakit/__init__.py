"""Evaluation toolkit for target speaker anonymization in two-speaker mixtures.

Submodules are imported on demand; ``import tsakit`` itself is cheap.
"""

__version__ = '0.1.0'
