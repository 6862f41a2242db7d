"""Self-tuning spectral clustering.

The normalized affinity is embedded with its leading eigenvectors; for each
candidate cluster count ``c`` the first ``c`` eigenvectors are rotated by a
product of Givens rotations so that every row is as close as possible to a
single coordinate axis. The alignment cost of the best rotation scores ``c``
and the best-scoring count is selected.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .evaluation import quality
from .kernel import SimilarityMatrix
from .model import ConvergenceError, DegenerateInputError, NumericError

logger = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-8
SYMMETRY_TOL = 1e-10


class DegenerateEmbeddingError(NumericError):
    """An embedding row is identically zero, so its alignment is undefined."""


@dataclass(frozen=True)
class StscConfig:
    c_min: int = 2
    c_max: int = 12
    max_iters: int = 200
    step_init: float = 1.0
    step_halvings: int = 30
    rel_tol: float = 1e-4
    quality_tie_tol: float = 1e-3
    # False: every candidate count starts from the identity rotation
    warm_start: bool = True

    def __post_init__(self) -> None:
        if not 2 <= self.c_min <= self.c_max:
            raise ValueError(f"need 2 <= c_min <= c_max, got c_min={self.c_min}, c_max={self.c_max}")
        if self.max_iters < 0 or self.step_halvings < 0:
            raise ValueError("max_iters and step_halvings must be non-negative")
        if not self.step_init > 0:
            raise ValueError("step_init must be positive")
        if self.rel_tol < 0 or self.quality_tie_tol < 0:
            raise ValueError("tolerances must be non-negative")

    def check_sites(self, m: int) -> None:
        if self.c_max > m:
            raise ValueError(f"c_max={self.c_max} exceeds the number of sites ({m})")


@dataclass(frozen=True, eq=False)
class SpectralEmbedding:
    x: np.ndarray
    eigenvalues: np.ndarray


@lru_cache(maxsize=None)
def givens_planes(c: int) -> tuple[tuple[int, int], ...]:
    """The ``c(c-1)/2`` rotation planes ``(i, j)``, ``i < j``, in lexicographic order."""
    return tuple((i, j) for i in range(c) for j in range(i + 1, c))


@dataclass(frozen=True, eq=False)
class RotationState:
    c: int
    theta: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        k = self.c * (self.c - 1) // 2
        theta = np.zeros(k) if self.theta is None else np.array(self.theta, dtype=np.float64)
        if theta.shape != (k,):
            raise ValueError(f"expected {k} angles for c={self.c}, got shape {theta.shape}")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @property
    def plane_order(self) -> tuple[tuple[int, int], ...]:
        return givens_planes(self.c)

    def extended(self, c: int) -> RotationState:
        """Angles for a larger ``c``: existing planes keep their angle, new planes start at 0.

        The resulting rotation is ``R`` padded with an identity block.
        """
        old = dict(zip(self.plane_order, self.theta))
        return RotationState(c, np.array([old.get(p, 0.0) for p in givens_planes(c)]))


@dataclass(frozen=True, eq=False)
class ClusterCandidate:
    c: int
    j_min: float
    quality: float
    labels: np.ndarray
    z: np.ndarray
    theta: np.ndarray


def normalize_affinity(s: SimilarityMatrix | np.ndarray) -> np.ndarray:
    """Symmetric normalization ``D^-1/2 S D^-1/2`` with ``D`` the row sums of ``S``."""
    a = np.asarray(s.s if isinstance(s, SimilarityMatrix) else s, dtype=np.float64)
    deg = a.sum(axis=1)
    if np.any(deg <= 0) or not np.all(np.isfinite(deg)):
        bad = np.flatnonzero(~(deg > 0))
        raise DegenerateInputError(f"rows {bad[:10].tolist()} have zero total similarity")
    inv = 1.0 / np.sqrt(deg)
    n = inv[:, None] * a * inv[None, :]
    return 0.5 * (n + n.T)


def top_eigenvectors(n: np.ndarray, c_max: int) -> SpectralEmbedding:
    """Leading ``c_max`` eigenpairs of a symmetric matrix, largest eigenvalue first.

    Each eigenvector is signed so that its largest-magnitude entry is positive.
    """
    n = np.asarray(n, dtype=np.float64)
    if n.ndim != 2 or n.shape[0] != n.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {n.shape}")
    if not 1 <= c_max <= n.shape[0]:
        raise ValueError(f"c_max must lie in [1, {n.shape[0]}], got {c_max}")
    if np.max(np.abs(n - n.T), initial=0.0) > SYMMETRY_TOL:
        raise ValueError("matrix is not symmetric")
    try:
        w, v = np.linalg.eigh(n)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"symmetric eigensolver failed on a {n.shape[0]}x{n.shape[0]} matrix: {exc}") from exc
    w = w[::-1][:c_max].copy()
    v = v[:, ::-1][:, :c_max].copy()
    pivot = np.argmax(np.abs(v), axis=0)
    v *= np.where(v[pivot, np.arange(c_max)] < 0, -1.0, 1.0)

    residual = np.linalg.norm(n @ v - v * w, axis=0)
    scale = max(1.0, float(np.abs(w).max(initial=0.0)))
    if np.any(residual > RESIDUAL_TOL * scale):
        raise NumericError(
            f"eigenpair residuals too large (max {residual.max():.3e}, tolerance {RESIDUAL_TOL * scale:.1e})"
        )
    return SpectralEmbedding(v, w)


def _rotate_columns(r: np.ndarray, i: int, j: int, theta: float) -> None:
    # r <- r @ G(i, j, theta), in place
    c, s = np.cos(theta), np.sin(theta)
    ri, rj = r[:, i].copy(), r[:, j]
    r[:, i] = c * ri + s * rj
    r[:, j] = -s * ri + c * rj


def _rotation(c: int, theta: np.ndarray) -> np.ndarray:
    r = np.eye(c)
    for (i, j), t in zip(givens_planes(c), theta):
        _rotate_columns(r, i, j, t)
    return r


def rotation_matrix(state: RotationState) -> np.ndarray:
    """``R = G(i_1, j_1, theta_1) @ ... @ G(i_K, j_K, theta_K)`` in plane order.

    ``G(i, j, t)`` is the identity except ``G[i,i] = G[j,j] = cos t``,
    ``G[i,j] = -sin t`` and ``G[j,i] = sin t``.
    """
    return _rotation(state.c, state.theta)


def alignment_cost(z: np.ndarray) -> float:
    """``sum_ij z_ij^2 / mu_i^2`` with ``mu_i = max_j |z_ij|``.

    Equals M for a matrix with one non-zero per row and is at most M*C.
    """
    z = np.asarray(z, dtype=np.float64)
    mu = np.max(np.abs(z), axis=1)
    if np.any(mu == 0):
        raise DegenerateEmbeddingError(f"rows {np.flatnonzero(mu == 0)[:10].tolist()} are all zero")
    return float(np.sum((z / mu[:, None]) ** 2))


def _cost_and_grad_weights(z: np.ndarray) -> tuple[float, np.ndarray]:
    """Cost and dJ/dZ, holding the per-row argmax column fixed."""
    rows = np.arange(z.shape[0])
    m_idx = np.argmax(np.abs(z), axis=1)
    zmax = z[rows, m_idx]
    mu = np.abs(zmax)
    if np.any(mu == 0):
        raise DegenerateEmbeddingError(f"rows {np.flatnonzero(mu == 0)[:10].tolist()} are all zero")
    sq = z**2
    w = 2.0 * z / mu[:, None] ** 2
    w[rows, m_idx] -= 2.0 * np.sign(zmax) * sq.sum(axis=1) / mu**3
    return float(np.sum(sq / mu[:, None] ** 2)), w


def cost_gradient(x: np.ndarray, state: RotationState) -> np.ndarray:
    """Gradient of ``alignment_cost(x @ rotation_matrix(state))`` w.r.t. the angles."""
    x = np.asarray(x, dtype=np.float64)
    c = state.c
    planes = state.plane_order
    theta = state.theta
    k = len(planes)
    if k == 0:
        return np.zeros(0)

    # prefix[t] = G_1 ... G_t,  suffix[t] = G_{t+1} ... G_K
    prefix = np.empty((k + 1, c, c))
    prefix[0] = np.eye(c)
    for t, ((i, j), a) in enumerate(zip(planes, theta)):
        prefix[t + 1] = prefix[t]
        _rotate_columns(prefix[t + 1], i, j, a)
    suffix = np.empty((k + 1, c, c))
    suffix[k] = np.eye(c)
    for t in range(k - 1, -1, -1):
        (i, j), a = planes[t], theta[t]
        # G_t @ S: rows i, j mix
        cs, sn = np.cos(a), np.sin(a)
        s_next = suffix[t + 1]
        suffix[t] = s_next
        suffix[t, i] = cs * s_next[i] - sn * s_next[j]
        suffix[t, j] = sn * s_next[i] + cs * s_next[j]

    _, w = _cost_and_grad_weights(x @ prefix[k])
    y = x.T @ w
    grad = np.empty(k)
    for t, (i, j) in enumerate(planes):
        v = prefix[t].T @ y @ suffix[t + 1].T
        # <v, dG/dtheta>: dG has -sin on (i,i), (j,j), -cos on (i,j), cos on (j,i)
        sn, cs = np.sin(theta[t]), np.cos(theta[t])
        grad[t] = -sn * (v[i, i] + v[j, j]) + cs * (v[j, i] - v[i, j])
    return grad


def optimize_rotation(
    x: np.ndarray, init: RotationState, cfg: StscConfig
) -> tuple[RotationState, float]:
    """Gradient descent on the Givens angles with a halving line search.

    Each iteration tries ``theta - eta * grad`` for ``eta = step_init,
    step_init/2, ...`` and accepts the first step that lowers the cost. Stops
    when the relative decrease falls below ``rel_tol``, when no step lowers the
    cost, or after ``max_iters`` iterations.
    """
    x = np.asarray(x, dtype=np.float64)
    c = init.c
    theta = init.theta.copy()
    j = alignment_cost(x @ _rotation(c, theta))
    if cfg.max_iters == 0 or theta.size == 0:
        return init, j

    it = 0
    for it in range(cfg.max_iters):
        grad = cost_gradient(x, RotationState(c, theta))
        gnorm = float(np.linalg.norm(grad))
        if gnorm == 0.0:
            break
        eta = cfg.step_init
        for _ in range(cfg.step_halvings + 1):
            cand = theta - eta * grad
            j_cand = alignment_cost(x @ _rotation(c, cand))
            if j_cand < j:
                break
            eta *= 0.5
        else:
            if it == 0 and gnorm > cfg.rel_tol * max(j, 1.0):
                raise ConvergenceError(
                    f"no descent step found for c={c}",
                    {"c": c, "iteration": it, "cost": j, "grad_norm": gnorm, "last_step": eta * 2},
                )
            break
        rel = (j - j_cand) / j
        theta, j = cand, j_cand
        if rel < cfg.rel_tol:
            break
    logger.debug("c=%d: J=%.6f after %d iterations", c, j, it + 1)
    return RotationState(c, theta), j


def assign_labels(z: np.ndarray) -> np.ndarray:
    """Column of the largest-magnitude entry per row; ties go to the lower index."""
    return np.argmax(np.abs(np.asarray(z)), axis=1).astype(np.int64)


def select_candidate(candidates: list[ClusterCandidate], tie_tol: float) -> ClusterCandidate:
    """Highest quality wins; candidates within ``tie_tol`` of the best prefer larger ``c``."""
    best = max(cand.quality for cand in candidates)
    return max((cand for cand in candidates if cand.quality >= best - tie_tol), key=lambda cand: cand.c)


def run_stsc(
    s: SimilarityMatrix | np.ndarray, cfg: StscConfig | None = None
) -> tuple[ClusterCandidate, list[ClusterCandidate]]:
    """Cluster a similarity matrix, choosing the cluster count automatically.

    Returns the selected candidate and the candidates for every count in
    ``cfg.c_min .. cfg.c_max``, in increasing order of ``c``.
    """
    cfg = cfg or StscConfig()
    a = s.s if isinstance(s, SimilarityMatrix) else np.asarray(s, dtype=np.float64)
    m = a.shape[0]
    cfg.check_sites(m)
    emb = top_eigenvectors(normalize_affinity(a), cfg.c_max)

    candidates: list[ClusterCandidate] = []
    prev: RotationState | None = None
    for c in range(cfg.c_min, cfg.c_max + 1):
        x = emb.x[:, :c]
        init = prev.extended(c) if (cfg.warm_start and prev is not None) else RotationState(c)
        try:
            state, j_min = optimize_rotation(x, init, cfg)
        except ConvergenceError as exc:
            exc.diagnostics.setdefault("c", c)
            raise
        except NumericError as exc:
            raise NumericError(f"c={c}: {exc}") from exc
        z = x @ rotation_matrix(state)
        candidates.append(
            ClusterCandidate(
                c=c,
                j_min=j_min,
                quality=quality(j_min, m, c),
                labels=assign_labels(z),
                z=z,
                theta=state.theta,
            )
        )
        prev = state
    return select_candidate(candidates, cfg.quality_tie_tol), candidates
