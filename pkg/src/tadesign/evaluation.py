"""Scoring a site partition as a tracking-area plan."""

from __future__ import annotations

import math
from dataclasses import dataclass
from math import comb

import numpy as np

from .model import Dataset, TADesignError


class UndefinedSilhouetteError(TADesignError):
    """Silhouette needs at least two clusters."""


@dataclass(frozen=True, eq=False)
class SilhouetteResult:
    per_site: np.ndarray
    mean: float


@dataclass(frozen=True)
class PlanCosts:
    tau: int
    paging: int


def quality(j_min: float, m: int, c: int) -> float:
    """Clustering quality ``1 - (j_min/m - 1)/c``; 1 for a perfect alignment."""
    return 1.0 - (j_min / m - 1.0) / c


def _labels(labels) -> np.ndarray:
    return np.asarray(labels, dtype=np.int64).ravel()


def silhouette(s, labels) -> SilhouetteResult:
    """Silhouette over the dissimilarity ``1 - s_ij``.

    ``s`` may be a :class:`~tadesign.kernel.SimilarityMatrix` or a plain array.
    Cluster means use correctly rounded sums, so the result does not depend on
    site order. Sites alone in their cluster score 0.
    """
    a = np.asarray(getattr(s, "s", s), dtype=np.float64)
    lab = _labels(labels)
    m = lab.size
    if a.shape != (m, m):
        raise ValueError(f"similarity shape {a.shape} does not match {m} labels")
    classes = np.unique(lab)
    if classes.size < 2:
        raise UndefinedSilhouetteError("silhouette is undefined for a single cluster")

    diss = 1.0 - a
    np.fill_diagonal(diss, 0.0)
    members = [np.flatnonzero(lab == k) for k in classes]
    own = np.searchsorted(classes, lab)
    sigma = np.zeros(m)
    for i in range(m):
        row = diss[i]
        if members[own[i]].size == 1:
            continue
        intra = math.fsum(row[members[own[i]]]) / (members[own[i]].size - 1)
        inter = min(
            math.fsum(row[idx]) / idx.size for k, idx in enumerate(members) if k != own[i]
        )
        denom = max(intra, inter)
        sigma[i] = 0.0 if denom == 0 else (inter - intra) / denom
    return SilhouetteResult(sigma, math.fsum(sigma) / m)


def tau_cost(ds: Dataset, labels) -> int:
    """Handover attempts between sites in different TAs, each unordered pair once."""
    lab = _labels(labels)
    iu, ju = np.triu_indices(ds.m, 1)
    crossing = lab[iu] != lab[ju]
    return int(ds.attempts[iu[crossing], ju[crossing]].sum())


def paging_cost(ds: Dataset, labels) -> int:
    """Sum over TAs of (cells in the TA) x (paging requests addressed to the TA)."""
    lab = _labels(labels)
    p = ds.paging
    total = 0
    for k in np.unique(lab):
        mask = lab == k
        total += int(mask.sum()) * int(p[mask].sum())
    return total


def plan_costs(ds: Dataset, labels) -> PlanCosts:
    return PlanCosts(tau_cost(ds, labels), paging_cost(ds, labels))


def adjusted_rand_index(a, b) -> float:
    """Adjusted Rand index of two labelings (1.0 for identical partitions)."""
    a, b = _labels(a), _labels(b)
    if a.size != b.size:
        raise ValueError("labelings must have the same length")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max(initial=-1) + 1, bi.max(initial=-1) + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    index = sum(comb(int(n), 2) for n in table.ravel())
    sum_a = sum(comb(int(n), 2) for n in table.sum(axis=1))
    sum_b = sum(comb(int(n), 2) for n in table.sum(axis=0))
    pairs = comb(a.size, 2)
    expected = sum_a * sum_b / pairs if pairs else 0.0
    max_index = (sum_a + sum_b) / 2
    if max_index == expected:
        return 1.0
    return (index - expected) / (max_index - expected)
