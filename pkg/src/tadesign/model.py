"""Core domain types shared across the package.

All containers are frozen; numpy arrays held by a :class:`Dataset` are marked
read-only on construction so a dataset can be shared between workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class TADesignError(Exception):
    """Base class for all errors raised by this package."""


class InputError(TADesignError):
    """Malformed or inconsistent input data.

    ``path``, ``line`` and ``column`` locate the offending field when known
    (lines are 1-based and count the header).
    """

    def __init__(
        self,
        message: str,
        path: str | None = None,
        line: int | None = None,
        column: str | None = None,
    ) -> None:
        self.path = path
        self.line = line
        self.column = column
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column!r}")
        self.message = message
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


class DegenerateInputError(TADesignError):
    """Input that is structurally valid but numerically unusable."""


class NumericError(TADesignError):
    """A numerical routine failed (e.g. eigensolver non-convergence)."""


class ConvergenceError(TADesignError):
    """Rotation optimization could not make progress."""

    def __init__(self, message: str, diagnostics: dict | None = None) -> None:
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


@dataclass(frozen=True)
class SiteRecord:
    site_id: int
    lat: float | None
    lon: float | None
    paging_requests: int

    @property
    def has_coordinates(self) -> bool:
        return (
            self.lat is not None
            and self.lon is not None
            and math.isfinite(self.lat)
            and math.isfinite(self.lon)
        )


@dataclass(frozen=True)
class RelationRecord:
    source_id: int
    target_id: int
    isd_km: float | None  # None: distance not recorded, fall back to coordinates
    ho_attempts: int
    mr_count: int


def _frozen(a: np.ndarray, dtype) -> np.ndarray:
    src = np.asarray(a)
    if np.issubdtype(dtype, np.integer) and not np.issubdtype(src.dtype, np.integer):
        if not np.all(np.isfinite(src)) or np.any(src != np.round(src)):
            raise ValueError("count matrices must hold integer values")
    out = np.array(src, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Dataset:
    """M sites plus dense M x M distance / handover / measurement-report matrices.

    Row and column ``i`` of every matrix refer to ``sites[i]``. Invariants are
    not enforced here; see :func:`validate_dataset`.
    """

    sites: tuple[SiteRecord, ...]
    dist: np.ndarray
    attempts: np.ndarray
    mrs: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "sites", tuple(self.sites))
        object.__setattr__(self, "dist", _frozen(self.dist, np.float64))
        object.__setattr__(self, "attempts", _frozen(self.attempts, np.int64))
        object.__setattr__(self, "mrs", _frozen(self.mrs, np.int64))
        m = len(self.sites)
        for name in ("dist", "attempts", "mrs"):
            shape = getattr(self, name).shape
            if shape != (m, m):
                raise ValueError(f"{name} has shape {shape}, expected {(m, m)}")

    @property
    def m(self) -> int:
        return len(self.sites)

    @property
    def site_ids(self) -> list[int]:
        return [s.site_id for s in self.sites]

    @property
    def paging(self) -> np.ndarray:
        return np.array([s.paging_requests for s in self.sites], dtype=np.int64)


@dataclass(frozen=True)
class KernelParams:
    alpha: float = 0.5
    beta: float = 0.5
    gamma: float = 1.0

    def __post_init__(self) -> None:
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not (self.gamma > 0.0 and math.isfinite(self.gamma)):
            raise ValueError(f"gamma must be a positive finite number, got {self.gamma}")


@dataclass(frozen=True, eq=False)
class TAPlan:
    labels: np.ndarray
    num_tas: int
    tau: int
    paging_cost: int
    quality: float
    silhouette: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "labels", _frozen(self.labels, np.int64))
        used = np.unique(self.labels)
        if not np.array_equal(used, np.arange(self.num_tas)):
            raise ValueError("TA labels must use every value in 0..num_tas-1")


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str
    indices: tuple[int, ...] = field(default=())


ValidationReport = list[Violation]


def validate_dataset(ds: Dataset) -> ValidationReport:
    """Return every invariant violation in ``ds``; an empty list means valid.

    Pairwise violations are reported once per unordered pair ``(i, j)``,
    ``i <= j``, per matrix.
    """
    report: ValidationReport = []
    m = ds.m
    if m < 2:
        report.append(Violation("too_few_sites", f"need at least 2 sites, got {m}"))

    seen: dict[int, int] = {}
    for idx, site in enumerate(ds.sites):
        if site.site_id < 0:
            report.append(Violation("negative_id", f"site_id {site.site_id} < 0", (idx,)))
        if site.site_id in seen:
            report.append(
                Violation(
                    "duplicate_site",
                    f"site_id {site.site_id} appears at {seen[site.site_id]} and {idx}",
                    (seen[site.site_id], idx),
                )
            )
        else:
            seen[site.site_id] = idx
        if site.lat is not None and not (-90.0 <= site.lat <= 90.0):
            report.append(Violation("lat_range", f"lat {site.lat} outside [-90, 90]", (idx,)))
        if site.lon is not None and not (-180.0 <= site.lon <= 180.0):
            report.append(Violation("lon_range", f"lon {site.lon} outside [-180, 180]", (idx,)))
        if site.paging_requests < 0:
            report.append(
                Violation("negative_paging", f"paging_requests {site.paging_requests} < 0", (idx,))
            )

    iu, ju = np.triu_indices(m)
    for name in ("dist", "attempts", "mrs"):
        a = np.asarray(getattr(ds, name), dtype=np.float64)
        upper, lower = a[iu, ju], a[ju, iu]
        bad = ~(np.isfinite(upper) & np.isfinite(lower))
        for i, j in zip(iu[bad], ju[bad]):
            report.append(Violation("nonfinite", f"{name}[{i}][{j}] is not finite", (int(i), int(j))))
        neg = (upper < 0) | (lower < 0)
        for i, j in zip(iu[neg], ju[neg]):
            report.append(Violation("negative", f"{name}[{i}][{j}] is negative", (int(i), int(j))))
        off = iu != ju
        asym = off & (upper != lower) & np.isfinite(upper) & np.isfinite(lower)
        for i, j in zip(iu[asym], ju[asym]):
            report.append(
                Violation(
                    "asymmetry",
                    f"{name}[{i}][{j}] = {a[i, j]!r} differs from {name}[{j}][{i}] = {a[j, i]!r}",
                    (int(i), int(j)),
                )
            )
    diag = np.flatnonzero(np.diag(np.asarray(ds.dist)) != 0)
    for i in diag:
        report.append(Violation("nonzero_diagonal", f"dist[{i}][{i}] is not zero", (int(i), int(i))))
    return report
