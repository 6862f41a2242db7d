"""End-to-end tracking-area planning for one kernel setting."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .evaluation import UndefinedSilhouetteError, paging_cost, silhouette, tau_cost
from .kernel import SimilarityMatrix, build_similarity
from .model import Dataset, KernelParams, TAPlan
from .stsc import ClusterCandidate, StscConfig, run_stsc


@dataclass(frozen=True, eq=False)
class PlanResult:
    params: KernelParams
    config: StscConfig
    similarity: SimilarityMatrix
    selected: ClusterCandidate
    candidates: tuple[ClusterCandidate, ...]
    plan: TAPlan


def compact_labels(labels) -> np.ndarray:
    """Renumber labels to ``0..n-1`` keeping their relative order."""
    _, inv = np.unique(np.asarray(labels), return_inverse=True)
    return inv.astype(np.int64).ravel()


def plan_tracking_areas(ds: Dataset, params: KernelParams, cfg: StscConfig) -> PlanResult:
    s = build_similarity(ds, params)
    selected, candidates = run_stsc(s, cfg)
    # a rotated column may win no rows; TA ids only cover the used ones
    labels = compact_labels(selected.labels)
    num_tas = int(labels.max()) + 1
    try:
        sil = silhouette(s, labels).mean
    except UndefinedSilhouetteError:
        sil = math.nan
    plan = TAPlan(
        labels=labels,
        num_tas=num_tas,
        tau=tau_cost(ds, labels),
        paging_cost=paging_cost(ds, labels),
        quality=selected.quality,
        silhouette=sil,
    )
    return PlanResult(params, cfg, s, selected, tuple(candidates), plan)
