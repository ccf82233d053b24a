import itertools
import math
from pathlib import Path

import numpy as np
import pytest
from scipy.optimize import linprog

from sepstat.geometry import PointSet

DATA = Path(__file__).parent / "data"


def random_points(seed: int, n: int, d: int = 2) -> PointSet:
    ps = PointSet.from_coords(np.random.default_rng(seed).standard_normal((n, d)))
    assert ps.in_general_position
    return ps


def convex_points(n: int, phase: float = 0.3) -> PointSet:
    t = phase + 2 * math.pi * np.arange(n) / n
    return PointSet.from_coords(np.column_stack([np.cos(t), 1.7 * np.sin(t)]))


def lp_separable(X: np.ndarray, side: np.ndarray) -> bool:
    """Strict linear separability of ``X[side]`` from ``X[~side]`` by linear programming."""
    if side.all() or not side.any():
        return True
    s = np.where(side, 1.0, -1.0)
    # s_i (w . x_i + b) >= 1
    A = -s[:, None] * np.column_stack([X, np.ones(len(X))])
    res = linprog(np.zeros(X.shape[1] + 1), A_ub=A, b_ub=-np.ones(len(X)), bounds=(None, None), method="highs")
    return res.status == 0


def separable_dichotomies(X: np.ndarray) -> np.ndarray:
    """Every subset (as a boolean row) an open half-space can cut off, found by LP."""
    n = len(X)
    rows = []
    for bits in itertools.product([False, True], repeat=n):
        side = np.array(bits)
        if lp_separable(X, side):
            rows.append(side)
    return np.array(rows)


def oracle_min_errors(D: np.ndarray, labels: np.ndarray) -> tuple[int, int]:
    """(maxside, total) minimum over the half-space dichotomies ``D``."""
    my = (labels[None, :] & ~D).sum(axis=1)
    mz = (~labels[None, :] & D).sum(axis=1)
    return int(np.maximum(my, mz).min()), int((my + mz).min())


@pytest.fixture
def unit_square() -> PointSet:
    return PointSet.from_coords([[0, 0], [1, 0], [1, 1], [0, 1]])
