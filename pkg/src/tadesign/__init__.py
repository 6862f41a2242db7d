"""Tracking-area design with self-tuning spectral clustering.

Pipeline: :func:`ingest.load_dataset` -> :func:`kernel.build_similarity` ->
:func:`stsc.run_stsc` -> :mod:`evaluation` costs.
:func:`pipeline.plan_tracking_areas` runs all of it.
"""

from .evaluation import adjusted_rand_index, paging_cost, quality, silhouette, tau_cost
from .ingest import build_dataset, haversine_km, load_dataset, parse_inputs
from .kernel import SimilarityMatrix, build_similarity, normalize_feature
from .model import (
    ConvergenceError,
    Dataset,
    InputError,
    KernelParams,
    NumericError,
    RelationRecord,
    SiteRecord,
    TADesignError,
    TAPlan,
    validate_dataset,
)
from .stsc import StscConfig, run_stsc

__version__ = "0.1.0"
