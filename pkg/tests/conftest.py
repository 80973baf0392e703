"""Shared builders for the test suite."""

import numpy as np
import pytest

from walkrec.corpus import InteractionMatrix, SocialEdges, matrix_from_pairs, social_edges
from walkrec.factors import PreferenceFactors, init_factors


def random_matrix(n: int, m: int, density: float, seed: int,
                  min_row: int = 1) -> InteractionMatrix:
    """Random binary matrix with at least min_row positives per user."""
    rng = np.random.default_rng(seed)
    dense = rng.random((n, m)) < density
    for u in range(n):
        short = min_row - int(dense[u].sum())
        if short > 0:
            off = np.flatnonzero(~dense[u])
            dense[u, rng.choice(off, size=short, replace=False)] = True
    us, its = np.nonzero(dense)
    return matrix_from_pairs(n, m, us, its)


def random_social(n: int, deg: int, seed: int,
                  symmetrize: bool = True) -> SocialEdges:
    rng = np.random.default_rng(seed)
    pairs = []
    for u in range(n):
        for v in rng.choice(n, size=deg, replace=False):
            if int(v) != u:
                pairs.append((u, int(v)))
    return social_edges(n, pairs, symmetrize=symmetrize)


def random_factors(n: int, m: int, d: int, seed: int,
                   scale: float = 0.3) -> PreferenceFactors:
    f = init_factors(n, m, d, seed=seed, scale=1.0)
    return PreferenceFactors(P=f.P * scale, Q=f.Q * scale)


def chi_square_pvalue(counts: np.ndarray, expected: np.ndarray,
                      fixed_total: bool) -> float:
    """Goodness-of-fit p-value; cells with expectation < 5 pool into a tail.

    fixed_total=True for multinomial draws (one dof spent on the total);
    False for Poisson-like counts where the total itself is random.
    """
    from scipy.stats import chi2

    counts = np.asarray(counts, dtype=np.float64).ravel()
    expected = np.asarray(expected, dtype=np.float64).ravel()
    keep = expected >= 5.0
    obs = counts[keep]
    exp = expected[keep]
    stat = float(np.sum((obs - exp) ** 2 / exp))
    cells = int(keep.sum())
    tail_exp = float(expected[~keep].sum())
    if tail_exp >= 5.0:
        tail_obs = float(counts[~keep].sum())
        stat += (tail_obs - tail_exp) ** 2 / tail_exp
        cells += 1
    dof = max(1, cells - (1 if fixed_total else 0))
    return float(chi2.sf(stat, dof))


def stencil_derivative(fn, flat: np.ndarray, j: int, h: float = 1e-4) -> float:
    """Fourth-order central difference; robust for near-zero gradients."""
    keep = flat[j]
    vals = []
    for step in (2 * h, h, -h, -2 * h):
        flat[j] = keep + step
        vals.append(fn())
    flat[j] = keep
    f2p, f1p, f1m, f2m = vals
    return (-f2p + 8 * f1p - 8 * f1m + f2m) / (12 * h)


@pytest.fixture
def tiny_matrix() -> InteractionMatrix:
    # 4 users x 5 items, hand-checkable
    us = np.array([0, 0, 1, 2, 2, 2, 3])
    its = np.array([0, 2, 1, 0, 3, 4, 2])
    return matrix_from_pairs(4, 5, us, its)
