"""Linear assignment on rectangular matrices (Hungarian method via scipy).

Rows and columns are expected in a fixed (lexicographic) label order, which
makes the chosen assignment deterministic among co-optimal ones.
"""
from __future__ import annotations

from typing import List, Tuple

import numpy as np


def min_cost_assignment(cost) -> List[Tuple[int, int]]:
    """Pairs ``(row, col)`` minimizing total cost; ``min(n_rows, n_cols)`` pairs."""
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ValueError(f'cost must be 2-D, got shape {cost.shape}')
    if cost.size == 0:
        return []
    from scipy.optimize import linear_sum_assignment

    rows, cols = linear_sum_assignment(cost)
    return [(int(r), int(c)) for r, c in zip(rows, cols)]


def max_weight_assignment(weight) -> List[Tuple[int, int]]:
    """Pairs ``(row, col)`` maximizing total weight."""
    weight = np.asarray(weight, dtype=np.float64)
    if weight.size == 0:
        return []
    return min_cost_assignment(-weight)
