"""Synthetic networks with a planted tracking-area partition.

Random draws come from numpy's ``Generator`` over the PCG64 bit generator,
seeded with ``SynthSpec.seed``. Draw order is fixed: planted labels,
site offsets, handover counts (upper triangle, row-major), MR noise, paging.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ingest import (
    EARTH_RADIUS_KM,
    dataset_relations,
    haversine_matrix,
    write_labels_csv,
    write_relations_csv,
    write_sites_csv,
)
from .model import Dataset, SiteRecord

KM_PER_DEGREE = 2.0 * math.pi * EARTH_RADIUS_KM / 360.0
DEFAULT_ORIGIN = (33.5731, -7.5898)


def ring_centers(k: int, origin: tuple[float, float] = DEFAULT_ORIGIN, radius_km: float = 8.0) -> tuple[tuple[float, float], ...]:
    """``k`` points evenly spaced on a circle of ``radius_km`` around ``origin``."""
    lat0, lon0 = origin
    out = []
    for t in range(k):
        ang = 2.0 * math.pi * t / k
        dlat = radius_km * math.sin(ang) / KM_PER_DEGREE
        dlon = radius_km * math.cos(ang) / (KM_PER_DEGREE * math.cos(math.radians(lat0)))
        out.append((lat0 + dlat, lon0 + dlon))
    return tuple(out)


@dataclass(frozen=True)
class SynthSpec:
    m: int = 120
    k: int = 5
    cluster_centers: tuple[tuple[float, float], ...] | None = None  # None: ring_centers(k)
    spread_km: float = 1.0
    intra_attempts_mean: float = 500.0
    inter_attempts_mean: float = 5.0
    mr_per_attempt: float = 15.0
    mr_noise_mean: float = 50.0
    paging_mean: float = 80_000.0
    first_site_id: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.k < 2:
            raise ValueError(f"need k >= 2 planted clusters, got {self.k}")
        if self.m < self.k:
            raise ValueError(f"need m >= k, got m={self.m}, k={self.k}")
        for name in ("spread_km", "intra_attempts_mean", "inter_attempts_mean",
                     "mr_per_attempt", "mr_noise_mean", "paging_mean"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")
        if self.cluster_centers is not None and len(self.cluster_centers) != self.k:
            raise ValueError(f"expected {self.k} cluster centers, got {len(self.cluster_centers)}")
        if self.first_site_id < 0 or self.seed < 0:
            raise ValueError("first_site_id and seed must be non-negative")

    @property
    def centers(self) -> tuple[tuple[float, float], ...]:
        return self.cluster_centers if self.cluster_centers is not None else ring_centers(self.k)


def separable_spec(seed: int = 0, m: int = 120, k: int = 5) -> SynthSpec:
    """Well separated preset: intra-cluster handovers dominate (500 vs 5)."""
    return SynthSpec(m=m, k=k, intra_attempts_mean=500.0, inter_attempts_mean=5.0, seed=seed)


def generate(spec: SynthSpec) -> tuple[Dataset, np.ndarray]:
    """Draw a dataset and return it with the planted labels (values ``0..k-1``)."""
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    m, k = spec.m, spec.k

    labels = rng.permutation(np.arange(m) % k).astype(np.int64)
    offsets = rng.normal(0.0, spec.spread_km, size=(m, 2))
    centers = np.array(spec.centers, dtype=np.float64)
    lat = centers[labels, 0] + offsets[:, 0] / KM_PER_DEGREE
    lon = centers[labels, 1] + offsets[:, 1] / (KM_PER_DEGREE * np.cos(np.radians(centers[labels, 0])))
    lat = np.clip(lat, -90.0, 90.0)
    lon = (lon + 180.0) % 360.0 - 180.0

    iu, ju = np.triu_indices(m, 1)
    same = labels[iu] == labels[ju]
    means = np.where(same, spec.intra_attempts_mean, spec.inter_attempts_mean)
    upper = rng.poisson(means).astype(np.int64)
    attempts = np.zeros((m, m), dtype=np.int64)
    attempts[iu, ju] = upper
    attempts += attempts.T

    noise = rng.poisson(spec.mr_noise_mean, size=iu.size).astype(np.int64)
    mr_upper = np.rint(spec.mr_per_attempt * upper).astype(np.int64) + noise
    mrs = np.zeros((m, m), dtype=np.int64)
    mrs[iu, ju] = mr_upper
    mrs += mrs.T

    paging = rng.poisson(spec.paging_mean, size=m).astype(np.int64)
    sites = tuple(
        SiteRecord(spec.first_site_id + i, float(lat[i]), float(lon[i]), int(paging[i])) for i in range(m)
    )
    return Dataset(sites, haversine_matrix(lat, lon), attempts, mrs), labels


def write_synth(
    spec: SynthSpec, sites_path: str | Path, relations_path: str | Path, labels_path: str | Path
) -> tuple[Dataset, np.ndarray]:
    """Generate and write the sites, relations (one row per unordered pair) and planted-label CSVs."""
    ds, labels = generate(spec)
    write_sites_csv(sites_path, ds.sites)
    write_relations_csv(relations_path, dataset_relations(ds))
    write_labels_csv(labels_path, ds.site_ids, labels)
    return ds, labels

