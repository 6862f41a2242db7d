"""Reading the sites / relations CSV files and assembling a dense :class:`Dataset`."""

from __future__ import annotations

import csv
import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .model import Dataset, InputError, RelationRecord, SiteRecord, validate_dataset

logger = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0
SITES_HEADER = ("site_id", "lat", "lon", "paging_requests")
RELATIONS_HEADER = ("source_id", "target_id", "isd_km", "ho_attempts", "mr_count")

# Maximum tolerated (max - min) / mean over the recorded distances of one pair.
ISD_REL_SPREAD = 0.01


@dataclass(frozen=True)
class RawTables:
    site_rows: tuple[SiteRecord, ...]
    relation_rows: tuple[RelationRecord, ...]


def haversine_km(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Great-circle distance in km between two ``(lat, lon)`` points in degrees."""
    lat1, lon1 = map(math.radians, a)
    lat2, lon2 = map(math.radians, b)
    h = (
        math.sin((lat2 - lat1) / 2.0) ** 2
        + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2.0) ** 2
    )
    return 2.0 * EARTH_RADIUS_KM * math.asin(math.sqrt(min(1.0, h)))


def haversine_matrix(lat: np.ndarray, lon: np.ndarray) -> np.ndarray:
    """Pairwise haversine distances (km); exactly symmetric with a zero diagonal."""
    phi = np.radians(np.asarray(lat, dtype=np.float64))
    lam = np.radians(np.asarray(lon, dtype=np.float64))
    dphi = phi[None, :] - phi[:, None]
    dlam = lam[None, :] - lam[:, None]
    h = np.sin(dphi / 2.0) ** 2 + np.cos(phi)[:, None] * np.cos(phi)[None, :] * np.sin(dlam / 2.0) ** 2
    d = 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.minimum(1.0, h)))
    d = np.triu(d, 1)
    return d + d.T


def _read_table(path: Path, header: Sequence[str]) -> list[tuple[int, dict[str, str]]]:
    try:
        fh = open(path, newline="", encoding="utf-8-sig")
    except OSError as exc:
        raise InputError(f"cannot open file ({exc.strerror})", path=str(path)) from exc
    with fh:
        reader = csv.reader(fh)
        try:
            got = next(reader, None)
            if got is None:
                return []
            got = [h.strip() for h in got]
            if tuple(got) != tuple(header):
                unknown = [h for h in got if h not in header]
                detail = f"unknown column(s) {unknown}" if unknown else f"got {got}"
                raise InputError(
                    f"bad header, expected {','.join(header)} ({detail})", path=str(path), line=1
                )
            rows = []
            for row in reader:
                if not row or all(not c.strip() for c in row):
                    continue
                if len(row) != len(header):
                    raise InputError(
                        f"expected {len(header)} fields, got {len(row)}",
                        path=str(path),
                        line=reader.line_num,
                    )
                rows.append((reader.line_num, dict(zip(header, (c.strip() for c in row)))))
        except csv.Error as exc:
            raise InputError(f"malformed CSV ({exc})", path=str(path), line=reader.line_num) from exc
    return rows


def _int_field(value: str, path: Path, line: int, column: str) -> int:
    try:
        return int(value)
    except ValueError:
        pass
    try:
        f = float(value)
    except ValueError:
        raise InputError(f"non-numeric value {value!r}", str(path), line, column) from None
    if not f.is_integer():
        raise InputError(f"expected an integer, got {value!r}", str(path), line, column)
    return int(f)


def _float_field(value: str, path: Path, line: int, column: str, optional: bool = False) -> float | None:
    if optional and value == "":
        return None
    try:
        f = float(value)
    except ValueError:
        raise InputError(f"non-numeric value {value!r}", str(path), line, column) from None
    if not math.isfinite(f):
        raise InputError(f"non-finite value {value!r}", str(path), line, column)
    return f


def _nonneg(v, path: Path, line: int, column: str):
    if v is not None and v < 0:
        raise InputError(f"negative value {v!r}", str(path), line, column)
    return v


def parse_inputs(sites_path: str | Path, relations_path: str | Path) -> RawTables:
    """Parse the two input CSVs, preserving row order.

    Empty ``lat``/``lon`` cells and empty ``isd_km`` cells are accepted and
    mean "not recorded". Every other field must be numeric.
    """
    sites_path, relations_path = Path(sites_path), Path(relations_path)

    sites: list[SiteRecord] = []
    known: dict[int, int] = {}
    for line, row in _read_table(sites_path, SITES_HEADER):
        sid = _nonneg(_int_field(row["site_id"], sites_path, line, "site_id"), sites_path, line, "site_id")
        if sid in known:
            raise InputError(f"duplicate site_id {sid} (first on line {known[sid]})", str(sites_path), line, "site_id")
        known[sid] = line
        lat = _float_field(row["lat"], sites_path, line, "lat", optional=True)
        lon = _float_field(row["lon"], sites_path, line, "lon", optional=True)
        if (lat is None) != (lon is None):
            raise InputError("lat and lon must be both present or both empty", str(sites_path), line, "lat")
        if lat is not None and not -90.0 <= lat <= 90.0:
            raise InputError(f"latitude {lat} outside [-90, 90]", str(sites_path), line, "lat")
        if lon is not None and not -180.0 <= lon <= 180.0:
            raise InputError(f"longitude {lon} outside [-180, 180]", str(sites_path), line, "lon")
        paging = _nonneg(
            _int_field(row["paging_requests"], sites_path, line, "paging_requests"),
            sites_path, line, "paging_requests",
        )
        sites.append(SiteRecord(sid, lat, lon, paging))
    if not sites:
        raise InputError("no sites", path=str(sites_path))

    relations: list[RelationRecord] = []
    for line, row in _read_table(relations_path, RELATIONS_HEADER):
        ids = []
        for col in ("source_id", "target_id"):
            v = _int_field(row[col], relations_path, line, col)
            if v not in known:
                raise InputError(f"unknown site {v}", str(relations_path), line, col)
            ids.append(v)
        isd = _nonneg(
            _float_field(row["isd_km"], relations_path, line, "isd_km", optional=True),
            relations_path, line, "isd_km",
        )
        if ids[0] == ids[1] and isd not in (None, 0.0):
            raise InputError(f"self-relation with non-zero distance {isd}", str(relations_path), line, "isd_km")
        ho = _nonneg(_int_field(row["ho_attempts"], relations_path, line, "ho_attempts"), relations_path, line, "ho_attempts")
        mr = _nonneg(_int_field(row["mr_count"], relations_path, line, "mr_count"), relations_path, line, "mr_count")
        relations.append(RelationRecord(ids[0], ids[1], isd, ho, mr))
    if not relations:
        raise InputError("no relations", path=str(relations_path))

    return RawTables(tuple(sites), tuple(relations))


def build_dataset(raw: RawTables) -> Dataset:
    """Symmetrize relation rows into dense matrices indexed by site order.

    Counts of all rows touching an unordered pair are summed (both directions
    and duplicates); recorded distances are averaged, and pairs without any
    recorded distance fall back to the haversine distance of the sites.
    Self-relations are dropped.
    """
    index = {s.site_id: i for i, s in enumerate(raw.site_rows)}
    if len(index) != len(raw.site_rows):
        raise InputError("duplicate site ids in site table")
    m = len(raw.site_rows)

    attempts = np.zeros((m, m), dtype=np.int64)
    mrs = np.zeros((m, m), dtype=np.int64)
    isd: dict[tuple[int, int], list[float]] = defaultdict(list)
    rows_per_pair: dict[tuple[int, int], int] = defaultdict(int)
    n_self = 0
    for rel in raw.relation_rows:
        try:
            i, j = index[rel.source_id], index[rel.target_id]
        except KeyError as exc:
            raise InputError(f"relation references unknown site {exc.args[0]}") from None
        if i == j:
            n_self += 1
            continue
        key = (i, j) if i < j else (j, i)
        rows_per_pair[key] += 1
        attempts[key] += rel.ho_attempts
        mrs[key] += rel.mr_count
        if rel.isd_km is not None:
            isd[key].append(rel.isd_km)
    if n_self:
        logger.debug("dropped %d self-relation rows", n_self)
    multi = sum(1 for n in rows_per_pair.values() if n > 1)
    if multi:
        logger.warning(
            "%d site pairs have more than one relation row; their counts were summed "
            "(check whether the export already reports two-direction totals)",
            multi,
        )

    dist = np.zeros((m, m), dtype=np.float64)
    for (i, j), values in isd.items():
        mean = math.fsum(sorted(values)) / len(values)
        spread = max(values) - min(values)
        if spread > 0 and (mean == 0 or spread / mean > ISD_REL_SPREAD):
            a, b = raw.site_rows[i].site_id, raw.site_rows[j].site_id
            raise InputError(
                f"inconsistent distances recorded for pair ({a}, {b}): {sorted(values)}"
            )
        dist[i, j] = mean

    missing = [(i, j) for i in range(m) for j in range(i + 1, m) if (i, j) not in isd]
    if missing:
        no_coords = [s.site_id for s in raw.site_rows if not s.has_coordinates]
        if no_coords:
            needed = {raw.site_rows[k].site_id for pair in missing for k in pair} & set(no_coords)
            if needed:
                raise InputError(
                    f"sites {sorted(needed)[:10]} lack coordinates but have pairs with no recorded distance"
                )
        lat = np.array([s.lat if s.has_coordinates else 0.0 for s in raw.site_rows])
        lon = np.array([s.lon if s.has_coordinates else 0.0 for s in raw.site_rows])
        hav = haversine_matrix(lat, lon)
        mi, mj = np.array(missing).T
        dist[mi, mj] = hav[mi, mj]

    attempts = attempts + attempts.T
    mrs = mrs + mrs.T
    dist = dist + dist.T

    ds = Dataset(raw.site_rows, dist, attempts, mrs)
    report = validate_dataset(ds)
    if report:
        raise InputError("; ".join(v.message for v in report[:5]))
    return ds


def load_dataset(sites_path: str | Path, relations_path: str | Path) -> Dataset:
    return build_dataset(parse_inputs(sites_path, relations_path))


def write_sites_csv(path: str | Path, sites: Iterable[SiteRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SITES_HEADER)
        for s in sites:
            w.writerow([
                s.site_id,
                "" if s.lat is None else repr(float(s.lat)),
                "" if s.lon is None else repr(float(s.lon)),
                s.paging_requests,
            ])


def write_relations_csv(path: str | Path, relations: Iterable[RelationRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RELATIONS_HEADER)
        for r in relations:
            w.writerow([
                r.source_id,
                r.target_id,
                "" if r.isd_km is None else repr(float(r.isd_km)),
                r.ho_attempts,
                r.mr_count,
            ])


def dataset_relations(ds: Dataset) -> list[RelationRecord]:
    """One record per unordered pair ``i < j``, in row-major order."""
    ids = ds.site_ids
    iu, ju = np.triu_indices(ds.m, 1)
    return [
        RelationRecord(ids[i], ids[j], float(ds.dist[i, j]), int(ds.attempts[i, j]), int(ds.mrs[i, j]))
        for i, j in zip(iu.tolist(), ju.tolist())
    ]


def write_labels_csv(path: str | Path, site_ids, labels, column: str = "ta_label") -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"site_id,{column}\n")
        for sid, lab in zip(site_ids, labels):
            fh.write(f"{int(sid)},{int(lab)}\n")
