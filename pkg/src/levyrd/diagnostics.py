"""Ensemble statistics: law distances, permutation tests, tightness curves, moment tables."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .paths import PathEnsemble, bochner_norm, xprime_norm


@dataclass(frozen=True)
class NormIndices:
    """Spatial Sobolev indices of the path spaces and their exponents."""

    m: float = 2.0
    m0: float = 2.0
    m1: float = 4.0
    alpha: float = 0.25
    rho: float = 0.0
    rho_prime: float = 0.5
    rho0: float = -1.0


def battery_features(ensemble: PathEnsemble, modes: int = 4, times: int = 5, m: float = 2.0) -> np.ndarray:
    """Feature matrix ``(N, F)``: low modes at a few cells plus the path norm."""
    v = ensemble.values
    if v.ndim != 4:
        raise ValueError(f"ensemble values must have shape (N, K, n, M), got {v.shape}")
    n_paths, K = v.shape[:2]
    cells = np.round(np.arange(times) * (K - 1) / (times - 1)).astype(int)
    k = min(modes, v.shape[3])
    picked = v[:, cells, :, :k].reshape(n_paths, -1)
    norms = np.array([bochner_norm(p, m) for p in ensemble])
    feats = np.column_stack([picked, norms])
    if not np.all(np.isfinite(feats)):
        raise ValueError("battery evaluation produced non-finite features")
    return feats


def _energy(dxy, dxx, dyy) -> float:
    def mean(d):
        return math.fsum(d.ravel()) / d.size

    return max(2.0 * mean(dxy) - mean(dxx) - mean(dyy), 0.0)


def energy_distance(x, y) -> float:
    """Square root of the V-statistic energy distance between two samples."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if x.shape[0] == 0 or y.shape[0] == 0:
        raise ValueError("samples must be nonempty")
    return math.sqrt(_energy(cdist(x, y), cdist(x, x), cdist(y, y)))


def empirical_law_distance(ens_a: PathEnsemble, ens_b: PathEnsemble, battery=battery_features) -> float:
    if len(ens_a) == 0 or len(ens_b) == 0:
        raise ValueError("ensembles must be nonempty")
    return energy_distance(battery(ens_a), battery(ens_b))


@dataclass
class PermutationResult:
    statistic: float
    quantile: float
    p_value: float
    level: float

    @property
    def rejects(self) -> bool:
        return self.p_value <= self.level


def permutation_test(x, y, permutations: int = 1999, level: float = 1e-3,
                     rng: np.random.Generator | None = None) -> PermutationResult:
    """Two-sample energy-distance permutation test.

    The squared statistic is recomputed for relabelled pooled samples using
    indicator vectors against the pooled distance matrix. ``quantile`` is the
    ``1 - level`` quantile of the permutation distribution (of the unsquared
    distance).
    """
    if 1.0 / (permutations + 1) > level:
        raise ValueError(f"{permutations} permutations cannot reach p-values at level {level}")
    rng = rng or np.random.default_rng(0)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    nx, ny = len(x), len(y)
    pooled = np.vstack([x, y])
    d = cdist(pooled, pooled)

    def squared(labels):
        # labels: (n_total, B) with 1 for the first sample
        a = labels
        b = 1.0 - labels
        da = d @ a
        db = d @ b
        s_ab = np.einsum("ij,ij->j", a, db)
        s_aa = np.einsum("ij,ij->j", a, da)
        s_bb = np.einsum("ij,ij->j", b, db)
        return 2 * s_ab / (nx * ny) - s_aa / nx**2 - s_bb / ny**2

    observed = energy_distance(x, y)
    base = np.zeros(nx + ny)
    base[:nx] = 1.0
    labels = np.empty((nx + ny, permutations))
    for j in range(permutations):
        labels[:, j] = rng.permutation(base)
    perm = np.sqrt(np.maximum(squared(labels), 0.0))
    # compare on the same arithmetic to avoid ties broken by rounding
    obs_sq = squared(base[:, None])[0]
    exceed = int(np.sum(perm ** 2 >= obs_sq - 1e-12 * abs(obs_sq)))
    p = (1 + exceed) / (permutations + 1)
    return PermutationResult(observed, float(np.quantile(perm, 1.0 - level)), p, level)


def batch_means_se(values, batches: int = 16) -> float:
    """Standard error of the mean from nonoverlapping batch means."""
    v = np.asarray(values, dtype=float)
    b = min(batches, v.size)
    if b < 2:
        return math.nan
    size = v.size // b
    means = v[: b * size].reshape(b, size).mean(axis=1)
    return float(np.std(means, ddof=1) / math.sqrt(b))


def path_norms(ensemble: PathEnsemble, idx: NormIndices) -> tuple[np.ndarray, np.ndarray]:
    """Per-path norms in the base path space and in the compactly embedded one."""
    x = np.array([bochner_norm(p, idx.m, idx.rho) for p in ensemble])
    xp = np.array([xprime_norm(p, idx.m, idx.alpha, idx.rho_prime, idx.rho0) for p in ensemble])
    return x, xp


@dataclass
class MomentRow:
    name: str
    exponent: float
    mean: float
    se: float


def moment_table(ensemble: PathEnsemble, idx: NormIndices, norms=None) -> list[MomentRow]:
    x, xp = norms if norms is not None else path_norms(ensemble, idx)
    rows = []
    for name, base, p in (("x_m", x, idx.m), ("xprime_m0", xp, idx.m0), ("x_m1", x, idx.m1)):
        vals = base**p
        rows.append(MomentRow(name, p, math.fsum(vals) / len(vals), batch_means_se(vals)))
    return rows


@dataclass
class TightnessRow:
    radius: float
    tail: float
    bound: float
    tail_se: float


def tightness_proxy(ensemble: PathEnsemble, radii, m0: float, idx: NormIndices | None = None,
                    xprime=None) -> list[TightnessRow]:
    """Empirical ``P(|xi|_X' >= R)`` against the Chebyshev bound ``E|xi|^m0 / R^m0``."""
    idx = idx or NormIndices(m0=m0)
    if len(ensemble) == 0:
        raise ValueError("ensemble is empty")
    if xprime is None:
        _, xprime = path_norms(ensemble, idx)
    c = math.fsum(xprime**m0) / len(xprime)
    rows = []
    for r in radii:
        hit = (xprime >= r).astype(float)
        tail = float(hit.mean())
        se = math.sqrt(tail * (1 - tail) / len(hit))
        bound = c / r**m0 if r > 0 else math.inf
        rows.append(TightnessRow(float(r), tail, bound, se))
    return rows


def default_radii(xprime, points: int = 12) -> np.ndarray:
    """Radii spread from well below to well above the observed norms."""
    top = float(np.max(xprime)) if len(xprime) else 1.0
    top = top if top > 0 else 1.0
    return np.geomspace(top / 16, top * 4, points)
