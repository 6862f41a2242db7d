"""Command line entry point: ``tadesign plan | sweep | synth``.

Exit codes: 0 success, 2 invalid input or configuration (including I/O
failures), 3 numerical / convergence failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .ingest import load_dataset
from .model import (
    ConvergenceError,
    Dataset,
    DegenerateInputError,
    InputError,
    KernelParams,
    NumericError,
)
from .pipeline import PlanResult, plan_tracking_areas
from .stsc import StscConfig
from .synth import SynthSpec, write_synth

logger = logging.getLogger("tadesign")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3

SWEEP_HEADER = ("alpha", "beta", "num_tas", "taus", "paging_requests", "quality", "silhouette", "status")
DEFAULT_CMAX = 12


def parse_grid(text: str) -> tuple[float, ...]:
    """``start:stop:step`` -> values from start up to stop (inclusive within half a step).

    A bare number is a one-point grid.
    """
    parts = text.split(":")
    try:
        nums = [float(p) for p in parts]
    except ValueError:
        raise ValueError(f"bad grid {text!r}, expected start:stop:step") from None
    if len(nums) == 1:
        nums = [nums[0], nums[0], 1.0]
    if len(nums) != 3:
        raise ValueError(f"bad grid {text!r}, expected start:stop:step")
    start, stop, step = nums
    if not step > 0:
        raise ValueError(f"grid step must be positive, got {step}")
    if stop < start:
        raise ValueError(f"grid stop {stop} is below start {start}")
    n = int(math.floor((stop - start) / step + 0.5)) + 1
    values = tuple(round(start + i * step, 10) for i in range(n))
    if any(not 0.0 <= v <= 1.0 for v in values):
        raise ValueError(f"grid {text!r} leaves [0, 1]")
    return values


@dataclass(frozen=True)
class RunConfig:
    sites: Path
    relations: Path
    kernel: KernelParams = field(default_factory=KernelParams)
    stsc: StscConfig = field(default_factory=StscConfig)
    # True when c_max was not given explicitly; it is then capped at the site count
    cap_c_max: bool = True
    alpha_grid: tuple[float, ...] = (0.5,)
    beta_grid: tuple[float, ...] = (0.5,)
    jobs: int = 1
    out_labels: Path | None = None
    out_report: Path | None = None
    out_geojson: Path | None = None
    out_sweep: Path | None = None

    def __post_init__(self) -> None:
        if not self.alpha_grid or not self.beta_grid:
            raise ValueError("sweep grids must be non-empty")
        if any(not 0.0 <= v <= 1.0 for v in (*self.alpha_grid, *self.beta_grid)):
            raise ValueError("sweep grid values must lie in [0, 1]")
        if self.jobs < 1:
            raise ValueError(f"jobs must be at least 1, got {self.jobs}")

    def stsc_for(self, m: int) -> StscConfig:
        cfg = self.stsc
        if self.cap_c_max and cfg.c_max > m:
            cfg = replace(cfg, c_max=m, c_min=min(cfg.c_min, m))
        cfg.check_sites(m)
        return cfg


def _fmt(x: float) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


def _json_float(x: float) -> float | None:
    return None if math.isnan(x) else float(x)


def _atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def geojson_collection(ds: Dataset, labels) -> dict:
    labels = np.asarray(labels)
    if labels.shape != (ds.m,):
        raise ValueError(f"expected {ds.m} labels, got shape {labels.shape}")
    missing = [s.site_id for s in ds.sites if not s.has_coordinates]
    if missing:
        raise InputError(f"sites {missing[:10]} have no coordinates")
    features = [
        {
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [float(s.lon), float(s.lat)]},
            "properties": {
                "site_id": s.site_id,
                "ta_label": int(lab),
                "paging_requests": s.paging_requests,
            },
        }
        for s, lab in zip(ds.sites, labels)
    ]
    return {"type": "FeatureCollection", "features": features}


def export_geojson(ds: Dataset, labels, path: str | Path) -> None:
    """Write sites as GeoJSON points tagged with their TA; nothing is written on error."""
    text = json.dumps(geojson_collection(ds, labels), indent=1) + "\n"
    _atomic_write(Path(path), text)


def build_report(result: PlanResult, labels_path: str | None) -> dict:
    p, c, plan = result.params, result.config, result.plan
    return {
        "params": {"alpha": p.alpha, "beta": p.beta, "gamma": p.gamma, "c_min": c.c_min, "c_max": c.c_max},
        "selected_c": result.selected.c,
        "num_tas": plan.num_tas,
        "quality": result.selected.quality,
        "j_min": result.selected.j_min,
        "silhouette_mean": _json_float(plan.silhouette),
        "tau": plan.tau,
        "paging": plan.paging_cost,
        "per_candidate": [{"c": k.c, "j_min": k.j_min, "quality": k.quality} for k in result.candidates],
        "labels_path": labels_path,
    }


def _labels_text(ds: Dataset, labels) -> str:
    buf = io.StringIO()
    buf.write("site_id,ta_label\n")
    for sid, lab in zip(ds.site_ids, labels):
        buf.write(f"{sid},{int(lab)}\n")
    return buf.getvalue()


def _summary(result: PlanResult) -> str:
    plan = result.plan
    return (
        f"C={plan.num_tas} Q={result.selected.quality:.6f} silhouette={plan.silhouette:.6f} "
        f"TAU={plan.tau} paging={plan.paging_cost}"
    )


def cmd_plan(cfg: RunConfig) -> int:
    ds = load_dataset(cfg.sites, cfg.relations)
    result = plan_tracking_areas(ds, cfg.kernel, cfg.stsc_for(ds.m))

    outputs: list[tuple[Path, str]] = []
    if cfg.out_labels:
        outputs.append((cfg.out_labels, _labels_text(ds, result.plan.labels)))
    if cfg.out_report:
        report = build_report(result, str(cfg.out_labels) if cfg.out_labels else None)
        outputs.append((cfg.out_report, json.dumps(report, indent=2) + "\n"))
    if cfg.out_geojson:
        outputs.append((cfg.out_geojson, json.dumps(geojson_collection(ds, result.plan.labels), indent=1) + "\n"))
    for path, text in outputs:
        _atomic_write(path, text)
    print(_summary(result))
    return EXIT_OK


_worker_state: dict = {}


def _init_worker(ds: Dataset, cfg: StscConfig, gamma: float) -> None:
    _worker_state.update(ds=ds, cfg=cfg, gamma=gamma)


def _sweep_point(point: tuple[float, float]) -> tuple[str, ...]:
    alpha, beta = point
    ds, cfg, gamma = _worker_state["ds"], _worker_state["cfg"], _worker_state["gamma"]
    try:
        result = plan_tracking_areas(ds, KernelParams(alpha, beta, gamma), cfg)
    except (ConvergenceError, NumericError, DegenerateInputError, ValueError) as exc:
        msg = " ".join(str(exc).split())
        return (_fmt(alpha), _fmt(beta), "", "", "", "", "", f"error: {type(exc).__name__}: {msg}")
    plan = result.plan
    return (
        _fmt(alpha),
        _fmt(beta),
        str(plan.num_tas),
        str(plan.tau),
        str(plan.paging_cost),
        _fmt(result.selected.quality),
        _fmt(plan.silhouette),
        "ok",
    )


def run_sweep(
    ds: Dataset, alphas: Sequence[float], betas: Sequence[float], cfg: StscConfig, gamma: float = 1.0, jobs: int = 1
) -> list[tuple[str, ...]]:
    """One planning run per (alpha, beta); rows sorted by (alpha, beta)."""
    points = sorted({(float(a), float(b)) for a in alphas for b in betas})
    if jobs <= 1 or len(points) == 1:
        _init_worker(ds, cfg, gamma)
        try:
            return [_sweep_point(p) for p in points]
        finally:
            _worker_state.clear()
    with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(ds, cfg, gamma)) as pool:
        return list(pool.map(_sweep_point, points))


def cmd_sweep(cfg: RunConfig) -> int:
    ds = load_dataset(cfg.sites, cfg.relations)
    rows = run_sweep(ds, cfg.alpha_grid, cfg.beta_grid, cfg.stsc_for(ds.m), cfg.kernel.gamma, cfg.jobs)

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    w.writerows(rows)
    _atomic_write(cfg.out_sweep, buf.getvalue())
    ok = sum(1 for r in rows if r[-1] == "ok")
    print(f"{ok}/{len(rows)} grid points succeeded -> {cfg.out_sweep}")
    return EXIT_OK if ok else EXIT_NUMERIC


def run_config(args: argparse.Namespace) -> RunConfig:
    """Validate flags of ``plan`` / ``sweep`` into a :class:`RunConfig`."""
    stsc = StscConfig(
        c_min=args.cmin,
        c_max=args.cmax if args.cmax is not None else max(DEFAULT_CMAX, args.cmin),
        max_iters=args.max_iters,
        step_init=args.step_init,
        step_halvings=args.step_halvings,
        rel_tol=args.rel_tol,
        quality_tie_tol=args.tie_tol,
        warm_start=not args.independent,
    )
    sweep = args.command == "sweep"
    return RunConfig(
        sites=args.sites,
        relations=args.relations,
        kernel=KernelParams(
            alpha=getattr(args, "alpha", 0.5), beta=getattr(args, "beta", 0.5), gamma=args.gamma
        ),
        stsc=stsc,
        cap_c_max=args.cmax is None,
        alpha_grid=parse_grid(args.alpha_grid) if sweep else (getattr(args, "alpha", 0.5),),
        beta_grid=parse_grid(args.beta_grid) if sweep else (getattr(args, "beta", 0.5),),
        jobs=getattr(args, "jobs", 1),
        out_labels=_opt_path(getattr(args, "out_labels", None)),
        out_report=_opt_path(getattr(args, "out_report", None)),
        out_geojson=_opt_path(getattr(args, "out_geojson", None)),
        out_sweep=_opt_path(getattr(args, "out_sweep", None)),
    )


def _opt_path(value) -> Path | None:
    return Path(value) if value else None


def cmd_synth(args: argparse.Namespace) -> int:
    spec = SynthSpec(
        m=args.m,
        k=args.k,
        spread_km=args.spread_km,
        intra_attempts_mean=args.intra,
        inter_attempts_mean=args.inter,
        mr_per_attempt=args.mr_per_attempt,
        mr_noise_mean=args.mr_noise,
        paging_mean=args.paging_mean,
        seed=args.seed,
    )
    write_synth(spec, args.out_sites, args.out_relations, args.out_labels)
    print(f"wrote {spec.m} sites in {spec.k} planted TAs (seed {spec.seed})")
    return EXIT_OK


def _add_stsc_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--sites", required=True, type=Path, help="sites CSV (site_id,lat,lon,paging_requests)")
    p.add_argument("--relations", required=True, type=Path,
                   help="relations CSV (source_id,target_id,isd_km,ho_attempts,mr_count)")
    p.add_argument("--gamma", type=float, default=1.0, help="kernel scale (default 1)")
    p.add_argument("--cmin", type=int, default=2, help="smallest candidate TA count")
    p.add_argument("--cmax", type=int, default=None, help=f"largest candidate TA count (default min({DEFAULT_CMAX}, M))")
    p.add_argument("--max-iters", type=int, default=StscConfig.max_iters)
    p.add_argument("--step-init", type=float, default=StscConfig.step_init)
    p.add_argument("--step-halvings", type=int, default=StscConfig.step_halvings)
    p.add_argument("--rel-tol", type=float, default=StscConfig.rel_tol)
    p.add_argument("--tie-tol", type=float, default=StscConfig.quality_tie_tol,
                   help="quality gap under which the larger TA count wins")
    p.add_argument("--independent", action="store_true",
                   help="optimize every candidate count from the identity rotation")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tadesign", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="design tracking areas for one (alpha, beta)")
    _add_stsc_flags(p)
    p.add_argument("--alpha", type=float, default=0.5, help="weight of distance vs. mobility (default 0.5)")
    p.add_argument("--beta", type=float, default=0.5, help="weight of HO attempts vs. MRs (default 0.5)")
    p.add_argument("--out-labels", default="ta_labels.csv")
    p.add_argument("--out-report", default="ta_report.json")
    p.add_argument("--out-geojson", default=None)
    p.set_defaults(func=lambda args: cmd_plan(run_config(args)))

    p = sub.add_parser("sweep", help="plan over an (alpha, beta) grid")
    _add_stsc_flags(p)
    p.add_argument("--alpha-grid", default="0:1:0.1", help="start:stop:step, inclusive (default 0:1:0.1)")
    p.add_argument("--beta-grid", default="0:1:0.1", help="start:stop:step, inclusive (default 0:1:0.1)")
    p.add_argument("--out-sweep", default="sweep.csv")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.set_defaults(func=lambda args: cmd_sweep(run_config(args)))

    p = sub.add_parser("synth", help="write a synthetic dataset with planted TAs")
    p.add_argument("--m", type=int, default=120, help="number of sites")
    p.add_argument("--k", type=int, default=5, help="number of planted TAs")
    p.add_argument("--seed", type=int, default=0, help="PCG64 seed")
    p.add_argument("--spread-km", type=float, default=SynthSpec.spread_km,
                   help="std. dev. of site offsets around a TA center")
    p.add_argument("--intra", type=float, default=SynthSpec.intra_attempts_mean,
                   help="mean HO attempts between sites of one TA")
    p.add_argument("--inter", type=float, default=SynthSpec.inter_attempts_mean,
                   help="mean HO attempts across TAs")
    p.add_argument("--mr-per-attempt", type=float, default=SynthSpec.mr_per_attempt)
    p.add_argument("--mr-noise", type=float, default=SynthSpec.mr_noise_mean)
    p.add_argument("--paging-mean", type=float, default=SynthSpec.paging_mean)
    p.add_argument("--out-sites", default="sites.csv")
    p.add_argument("--out-relations", default="relations.csv")
    p.add_argument("--out-labels", default="planted_labels.csv")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (ConvergenceError, NumericError, DegenerateInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
