"""Haar projection onto dyadic cells, the one-step time shift, and their composite.

All three operators act on :class:`~levyrd.paths.PathSample` objects. The
projection averages over the cells of level ``kappa``; the shift delays a path
by one such cell, holding a prescribed value on the first cell.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .paths import (
    PathSample,
    TimeGrid,
    bochner_norm,
    frac_sobolev_norm,
    refine,
    segment_power_integral,
    segments,
    spatial_norm,
)


def haar_project(path: PathSample, kappa: int) -> PathSample:
    """Cell averages of ``path`` on level ``kappa`` (piecewise constant)."""
    if kappa < 0:
        raise ValueError(f"kappa must be nonnegative, got {kappa}")
    if path.level < kappa:
        raise ValueError(
            f"path of level {path.level} is too coarse to project onto level {kappa}; "
            "refine it first"
        )
    v = path.values
    means = 0.5 * (v[:-1] + v[1:]) if path.nodal else v
    factor = 2 ** (path.level - kappa)
    coarse = means.reshape((-1, factor) + means.shape[1:]).mean(axis=1)
    return path.with_values(coarse, nodal=False, grid=path.grid.at_level(kappa))


def shift(path: PathSample, kappa: int, hold=None) -> PathSample:
    """Delay ``path`` by ``T / 2**kappa``; the first cell holds ``hold``.

    The result lives on the same grid as ``path``. For node-indexed paths the
    held value defaults to ``f(0)``, which keeps the result continuous.
    """
    if path.level < kappa:
        raise ValueError(f"path of level {path.level} cannot be shifted by a level-{kappa} cell")
    steps = 2 ** (path.level - kappa)
    v = path.values
    if hold is None:
        hold = v[0]
    hold = np.broadcast_to(np.asarray(hold, dtype=float), v.shape[1:])
    head = np.broadcast_to(hold, (steps,) + v.shape[1:])
    if path.nodal:
        out = np.concatenate([head, v[: v.shape[0] - steps]], axis=0)
    else:
        out = np.concatenate([head, v[:-steps]], axis=0)
    return path.with_values(out)


def shifted_projection(path: PathSample, kappa: int, initial=None) -> PathSample:
    """Shift of the Haar projection: cell 0 holds ``initial``, cell k the mean over cell k-1."""
    proj = haar_project(path, kappa)
    if initial is None:
        initial = path.values[0]
    return shift(proj, kappa, initial)


def _head_integral(path: PathSample, kappa: int, m: float, rho: float) -> float:
    """``int_0^tau |f(0) - f(t)|^m dt`` over the first level-``kappa`` cell."""
    steps = 2 ** (path.level - kappa)
    v = path.values
    if path.nodal:
        left, right = v[:steps], v[1 : steps + 1]
    else:
        left = right = v[:steps]
    f0 = v[0]
    per = segment_power_integral(f0 - left, f0 - right, path.grid.tau, m, rho, path.eigenvalues)
    return float(np.sum(per))


# inequality key -> human-readable statement; "norm" is the L^m norm,
# "[f]_W" the fractional seminorm, tau the cell width of level kappa.
INEQUALITIES = {
    "proj_stable": "||P f|| <= ||f||",
    "proj_error": "||P f - f|| <= tau^alpha [f]_W",
    "shift_stable": "||S f||^m <= ||f||^m + tau |f(0)|^m",
    "shift_error": "||S f - f||^m <= int_0^tau |f(0)-f|^m + 2^m ||f||^m",
    "composite_stable": "||SP f||^m <= ||f||^m + tau |f(0)|^m",
    "composite_error": "||SP f - f||^m <= int_0^tau |f(0)-f|^m + tau^(alpha m) [f]_W^m",
    "composite_error_const": "empirical C in ||SP f - f||^m <= int_0^tau |f(0)-f|^m + C tau^(alpha m) [f]_W^m",
    "composite_w_stable_const": "empirical C in [SP f]_W^m <= C ([f]_W^m + tau |f(0)|^m)",
}
REPORTED_ONLY = {"composite_error_const", "composite_w_stable_const"}


@dataclass
class InequalityRow:
    path_id: int
    kappa: int
    m: float
    alpha: float
    inequality: str
    lhs: float
    rhs: float

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def violated(self) -> bool:
        if self.inequality in REPORTED_ONLY:
            return False
        return self.lhs - self.rhs > 1e-9 * max(abs(self.lhs), abs(self.rhs))


def difference_power(a: PathSample, b: PathSample, m: float, rho: float = 0.0) -> float:
    """``int_0^T |a - b|^m`` for two paths on the same grid, of either kind."""
    la, ra = segments(a)
    lb, rb = segments(b)
    per = segment_power_integral(la - lb, ra - rb, a.grid.tau, m, rho, a.eigenvalues)
    return math.fsum(per)


def inequality_rows(path: PathSample, kappa: int, m: float, alpha: float,
                    rho: float = 0.0, path_id: int = 0,
                    semi_m: float | None = None) -> list[InequalityRow]:
    """Evaluate every projection/shift inequality for one path and level.

    ``semi_m`` (the m-th power of the fractional seminorm) does not depend on
    ``kappa`` and may be passed in to avoid recomputing it.
    """
    if semi_m is None:
        semi_m = frac_sobolev_norm(path, alpha, m, rho) ** m
    fine = refine(path, max(path.level, kappa))
    tau = fine.grid.horizon / 2**kappa
    norm_m = bochner_norm(fine, m, rho) ** m
    f0_m = float(spatial_norm(fine.values[:1], rho, fine.eigenvalues)[0]) ** m
    head = _head_integral(fine, kappa, m, rho)

    proj = refine(haar_project(fine, kappa), fine.level)
    sh = shift(fine, kappa)
    coarse = shifted_projection(fine, kappa)
    comp = refine(coarse, fine.level)
    comp_err = difference_power(comp, fine, m, rho)
    rows = [
        ("proj_stable", bochner_norm(proj, m, rho), norm_m ** (1 / m)),
        ("proj_error", difference_power(proj, fine, m, rho) ** (1 / m), tau**alpha * semi_m ** (1 / m)),
        ("shift_stable", bochner_norm(sh, m, rho) ** m, norm_m + tau * f0_m),
        ("shift_error", difference_power(sh, fine, m, rho), head + 2**m * norm_m),
        ("composite_stable", bochner_norm(comp, m, rho) ** m, norm_m + tau * f0_m),
        ("composite_error", comp_err, head + tau ** (alpha * m) * semi_m),
    ]
    denom = tau ** (alpha * m) * semi_m
    const = (comp_err - head) / denom if denom > 0 else 0.0
    rows.append(("composite_error_const", const, float("nan")))
    w_rhs = semi_m + tau * f0_m
    w_lhs = frac_sobolev_norm(coarse, alpha, m, rho) ** m
    rows.append(("composite_w_stable_const", w_lhs / w_rhs if w_rhs > 0 else 0.0, float("nan")))
    return [InequalityRow(path_id, kappa, m, alpha, key, float(l), float(r)) for key, l, r in rows]


def projection_inequality_suite(paths, kappas=range(1, 9), ms=(2.0, 3.0),
                                alphas=(0.1, 0.25), rho: float = 0.0) -> list[InequalityRow]:
    """Run every inequality over a corpus of paths and parameter combinations."""
    rows = []
    for pid, path in enumerate(paths):
        for m in ms:
            for alpha in alphas:
                if not alpha < 1.0 / m:
                    continue
                semi_m = frac_sobolev_norm(path, alpha, m, rho) ** m
                for kappa in kappas:
                    rows.extend(inequality_rows(path, kappa, m, alpha, rho, pid, semi_m))
    return rows


def random_path_corpus(rng: np.random.Generator, n_constant: int = 500, n_linear: int = 500,
                       shape=(1, 3), horizon: float = 1.0, max_level: int = 8,
                       max_linear_level: int = 5) -> list[PathSample]:
    """Mixed corpus of random piecewise-constant and piecewise-linear paths."""
    corpus = []
    for _ in range(n_constant):
        grid = TimeGrid(horizon, int(rng.integers(0, max_level + 1)))
        scale = rng.choice([0.1, 1.0, 10.0])
        values = scale * rng.standard_normal((grid.n_cells,) + tuple(shape))
        corpus.append(PathSample(grid, values))
    for _ in range(n_linear):
        grid = TimeGrid(horizon, int(rng.integers(0, max_linear_level + 1)))
        steps = rng.standard_normal((grid.n_cells + 1,) + tuple(shape))
        values = np.cumsum(steps, axis=0) * rng.choice([0.1, 1.0])
        corpus.append(PathSample(grid, values, nodal=True))
    return corpus
