"""Composite RBF similarity between sites from distance, handover and MR features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Dataset, KernelParams


@dataclass(frozen=True, eq=False)
class SimilarityMatrix:
    s: np.ndarray
    params: KernelParams

    def __post_init__(self) -> None:
        s = np.array(self.s, dtype=np.float64, copy=True)
        s.setflags(write=False)
        object.__setattr__(self, "s", s)

    @property
    def m(self) -> int:
        return self.s.shape[0]


def normalize_feature(x: np.ndarray) -> np.ndarray:
    """Divide by the largest off-diagonal entry; all-zero input stays all zero."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] < 2:
        return np.zeros_like(x)
    y = x.copy()
    np.fill_diagonal(y, -np.inf)
    peak = y.max()
    if peak <= 0.0:
        return np.zeros_like(x)
    return x / peak


def build_similarity(ds: Dataset, params: KernelParams) -> SimilarityMatrix:
    """Pairwise similarity ``exp(-gamma * e_ij)`` with

    ``e_ij = alpha*d_ij + (1 - alpha)*(1 - beta*a_ij - (1 - beta)*m_ij)``

    over max-normalized distance ``d``, handover attempts ``a`` and MR counts
    ``m``. Close sites with strong mobility coupling score near 1; the
    diagonal is set to 0.
    """
    d = normalize_feature(ds.dist)
    a = normalize_feature(ds.attempts)
    m = normalize_feature(ds.mrs)
    alpha, beta = params.alpha, params.beta
    expo = alpha * d + (1.0 - alpha) * (1.0 - beta * a - (1.0 - beta) * m)
    s = np.exp(-params.gamma * expo)
    np.fill_diagonal(s, 0.0)
    return SimilarityMatrix(s, params)
