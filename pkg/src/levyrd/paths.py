"""Discrete paths on dyadic time grids and their norms.

A :class:`PathSample` is either *cell-indexed* (piecewise constant, one value
per cell ``[t_k, t_{k+1})``) or *node-indexed* (continuous and piecewise
linear between the nodes ``t_k``). The time axis is the leading array axis;
the remaining axes hold the spatial value, typically a field of shape
``(n_components, modes)``. Spatial norms are weighted l2 sums with weights
``(1 + lambda_k)**rho`` on the last axis when eigenvalues are attached, plain
l2 otherwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial.distance import cdist

# Gauss-Legendre rule on [0, 1]; exact for |affine|^m with even m <= 14.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


@dataclass(frozen=True)
class TimeGrid:
    horizon: float = 1.0
    level: int = 0

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if int(self.level) != self.level or self.level < 0:
            raise ValueError(f"level must be a nonnegative integer, got {self.level}")

    @property
    def n_cells(self) -> int:
        return 2**self.level

    @property
    def tau(self) -> float:
        return self.horizon / self.n_cells

    @property
    def nodes(self) -> np.ndarray:
        return self.horizon * np.arange(self.n_cells + 1) / self.n_cells

    def cell_of(self, t) -> np.ndarray:
        """Index ``k`` of the half-open cell ``(t_k, t_{k+1}]`` containing ``t``."""
        k = np.ceil(np.asarray(t, dtype=float) / self.tau).astype(np.int64) - 1
        return np.clip(k, 0, self.n_cells - 1)

    def at_level(self, level: int) -> "TimeGrid":
        return TimeGrid(self.horizon, level)


@dataclass
class PathSample:
    grid: TimeGrid
    values: np.ndarray
    nodal: bool = False
    eigenvalues: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expected = self.grid.n_cells + (1 if self.nodal else 0)
        if self.values.shape[0] != expected:
            kind = "node" if self.nodal else "cell"
            raise ValueError(
                f"{kind}-indexed path on level {self.grid.level} needs "
                f"{expected} values, got {self.values.shape[0]}"
            )

    @property
    def level(self) -> int:
        return self.grid.level

    @property
    def initial(self) -> np.ndarray:
        return self.values[0]

    def with_values(self, values, nodal: bool | None = None, grid: TimeGrid | None = None):
        return replace(
            self,
            values=values,
            nodal=self.nodal if nodal is None else nodal,
            grid=grid or self.grid,
        )


def constant_path(grid: TimeGrid, value, eigenvalues=None) -> PathSample:
    value = np.asarray(value, dtype=float)
    values = np.broadcast_to(value, (grid.n_cells,) + value.shape).copy()
    return PathSample(grid, values, eigenvalues=eigenvalues)


def spatial_norm(values, rho: float = 0.0, eigenvalues=None) -> np.ndarray:
    """Norm over all non-time axes; returns one number per leading index."""
    values = np.asarray(values, dtype=float)
    sq = values**2
    if eigenvalues is not None and values.ndim > 1:
        sq = sq * (1.0 + np.asarray(eigenvalues)) ** rho
    if values.ndim == 1:
        return np.abs(values)
    return np.sqrt(sq.reshape(values.shape[0], -1).sum(axis=1))


def refine(path: PathSample, level: int) -> PathSample:
    """Exact representation of ``path`` on a finer dyadic level."""
    if level < path.level:
        raise ValueError(f"cannot refine level {path.level} down to {level}")
    if level == path.level:
        return path
    factor = 2 ** (level - path.level)
    grid = path.grid.at_level(level)
    if not path.nodal:
        return path.with_values(np.repeat(path.values, factor, axis=0), grid=grid)
    v = path.values
    frac = (np.arange(factor) / factor).reshape((1, factor) + (1,) * (v.ndim - 1))
    inner = v[:-1, None] + frac * (v[1:, None] - v[:-1, None])
    inner = inner.reshape((-1,) + v.shape[1:])
    return path.with_values(np.concatenate([inner, v[-1:]], axis=0), grid=grid)


def segments(path: PathSample) -> tuple[np.ndarray, np.ndarray]:
    """Left and right end values of the affine piece on each cell."""
    if path.nodal:
        return path.values[:-1], path.values[1:]
    return path.values, path.values


def segment_power_integral(left, right, tau: float, m: float, rho=0.0, eigenvalues=None) -> np.ndarray:
    """Per-cell ``int |f|^m`` for ``f`` affine from ``left`` to ``right``."""
    left = np.asarray(left, dtype=float)
    right = np.asarray(right, dtype=float)
    if left is right or np.array_equal(left, right):
        return tau * spatial_norm(left, rho, eigenvalues) ** m
    if left[0].size == 1:
        # scalar: int_0^1 |l + (r - l) s|^m ds in closed form, exact across a sign change
        w = 1.0
        if eigenvalues is not None and left.ndim > 1:
            w = float(np.ravel((1.0 + np.asarray(eigenvalues)) ** rho)[0])
        scale = np.sqrt(w)
        lv = scale * left.reshape(-1)
        rv = scale * right.reshape(-1)
        d = rv - lv
        flat = np.abs(d) <= 1e-12 * np.maximum(np.abs(lv), np.abs(rv))
        safe = np.where(flat, 1.0, d)
        val = (rv * np.abs(rv) ** m - lv * np.abs(lv) ** m) / ((m + 1) * safe)
        return tau * np.where(flat, np.abs(0.5 * (lv + rv)) ** m, val)
    shape = (1, -1) + (1,) * (left.ndim - 1)
    pts = left[:, None] + _GL_X.reshape(shape) * (right - left)[:, None]
    flat = pts.reshape((-1,) + left.shape[1:])
    norms = spatial_norm(flat, rho, eigenvalues).reshape(left.shape[0], -1)
    return tau * (norms**m) @ _GL_W


def bochner_norm(path: PathSample, m: float = 2.0, rho: float = 0.0) -> float:
    """Norm in ``L^m(0, T; H^rho)``.

    Cell-indexed paths are integrated exactly. Node-indexed paths are read as
    their piecewise-linear interpolant and integrated per cell with an
    8-point Gauss-Legendre rule (exact for even ``m``).
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    left, right = segments(path)
    # factor out the largest value so that |f|^m neither underflows nor overflows
    scale = float(np.max(np.abs(path.values))) if path.values.size else 0.0
    if scale == 0.0 or not math.isfinite(scale):
        return scale
    per_cell = segment_power_integral(left / scale, right / scale, path.grid.tau, m, rho, path.eigenvalues)
    return scale * math.fsum(per_cell) ** (1.0 / m)


def _check_alpha(alpha, m):
    if not 0 < alpha < 1.0 / m:
        raise ValueError(f"alpha must lie in (0, 1/m) = (0, {1.0 / m:.6g}), got {alpha}")


def _second_difference_kernel(j: np.ndarray, tau: float, beta: float) -> np.ndarray:
    """``int_0^tau int_{j tau}^{(j+1) tau} (s - t)^(-beta) ds dt`` for ``j >= 1``."""
    j = np.asarray(j, dtype=float)
    c = 1.0 / ((1.0 - beta) * (2.0 - beta))

    def big_f(x):
        return c * x ** (2.0 - beta)

    exact = big_f((j + 1) * tau) - 2 * big_f(j * tau) + big_f((j - 1) * tau)
    # Taylor form of the central difference avoids cancellation far from the diagonal.
    x = np.maximum(j, 1.0)
    b = beta
    series = tau ** (2.0 - b) * (
        x ** (-b)
        + b * (b + 1) / 12.0 * x ** (-b - 2)
        + b * (b + 1) * (b + 2) * (b + 3) / 360.0 * x ** (-b - 4)
        + b * (b + 1) * (b + 2) * (b + 3) * (b + 4) * (b + 5) / 20160.0 * x ** (-b - 6)
    )
    return np.where(j >= 16, series, exact)


def _weighted_rows(values, rho, eig):
    """Rows whose Euclidean distance equals the spatial norm of the difference."""
    n = values.shape[0]
    if values.ndim == 1:
        return values.reshape(n, 1)
    if eig is not None:
        values = values * np.sqrt((1.0 + np.asarray(eig)) ** rho)
    return values.reshape(n, -1)


def _frac_cells(values, tau, alpha, m, rho, eig):
    beta = 1.0 + alpha * m
    n = values.shape[0]
    if n < 2:
        return 0.0
    kernel = _second_difference_kernel(np.arange(1, n), tau, beta)
    rows = _weighted_rows(values, rho, eig)
    if n <= 2048:
        dist = cdist(rows, rows)
        lag = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
        weights = np.concatenate([[0.0], kernel])[lag]
        return float(np.sum(dist**m * weights))
    total = []
    for j in range(1, n):
        d = np.sqrt(np.sum((rows[j:] - rows[:-j]) ** 2, axis=1))
        total.append(math.fsum(d**m) * float(kernel[j - 1]))
    return 2.0 * math.fsum(total)


def _frac_nodes(values, tau, alpha, m, rho, eig):
    beta = 1.0 + alpha * m
    gamma = m - beta
    n = values.shape[0] - 1
    slopes = values[1:] - values[:-1]
    # diagonal blocks: f(r) - f(s) = slope * (r - s) / tau
    diag = spatial_norm(slopes, rho, eig) ** m * tau ** (-m)
    diag = diag * 2.0 * tau ** (gamma + 2) / ((gamma + 1) * (gamma + 2))
    parts = [math.fsum(diag)]
    ext = (1,) * (values.ndim - 1)
    x = _GL_X.reshape((1, -1) + ext)
    if n >= 2:
        # adjacent blocks share a corner; integrand is homogeneous of degree
        # gamma in (u, v) = (corner - r, s - corner)
        a = slopes[:-1]
        b = slopes[1:]
        # near triangle u + v <= tau, u = sigma * t, v = sigma * (1 - t)
        line = a[:, None] * x + b[:, None] * (1 - x)
        ln = spatial_norm(line.reshape((-1,) + a.shape[1:]), rho, eig).reshape(n - 1, -1)
        near = (ln / tau) ** m @ _GL_W * tau ** (gamma + 2) / (gamma + 2)
        # far triangle u + v >= tau, u = tau - sigma * t, v = tau - sigma * (1 - t)
        sig = tau * _GL_X
        t = _GL_X
        uu = tau - sig[:, None] * t[None, :]
        vv = tau - sig[:, None] * (1 - t)[None, :]
        wts = (tau * _GL_W)[:, None] * _GL_W[None, :] * sig[:, None]
        uu_r = uu.reshape((1, -1) + ext)
        vv_r = vv.reshape((1, -1) + ext)
        diff = (a[:, None] * uu_r + b[:, None] * vv_r) / tau
        dn = spatial_norm(diff.reshape((-1,) + a.shape[1:]), rho, eig).reshape(n - 1, -1)
        far = (dn**m / ((uu + vv).reshape(1, -1) ** beta)) @ wts.reshape(-1)
        parts.append(2.0 * math.fsum(near + far))
    if n >= 3:
        rr = _GL_X[:, None]
        ss = _GL_X[None, :]
        ww = (_GL_W[:, None] * _GL_W[None, :]).reshape(-1) * tau**2
        shape = (1, -1) + ext
        for j in range(2, n):
            f_r = values[:-j - 1][:n - j, None] + rr.reshape(shape) * slopes[: n - j, None]
            f_s = values[j:-1][:, None] + ss.reshape(shape) * slopes[j:, None]
            # broadcast over the (r, s) tensor grid
            fr = np.repeat(f_r, len(_GL_X), axis=1)
            fs = np.tile(f_s, (1, len(_GL_X)) + ext)
            dist = tau * (j + (_GL_X[None, :] - _GL_X[:, None])).reshape(-1)
            dn = spatial_norm((fr - fs).reshape((-1,) + values.shape[1:]), rho, eig)
            dn = dn.reshape(n - j, -1)
            parts.append(2.0 * math.fsum((dn**m / dist**beta) @ ww))
    return math.fsum(parts)


def frac_sobolev_norm(path: PathSample, alpha: float = 0.25, m: float = 2.0, rho: float = 0.0) -> float:
    """Seminorm of the fractional space ``W^{alpha}_m(0, T; H^rho)``.

    It is the ``m``-th root of the full double integral
    ``int_0^T int_0^T |u(t) - u(s)|^m / |t - s|^(1 + alpha m) ds dt``.
    Piecewise-constant paths are integrated exactly through closed-form
    cell-pair kernels. Piecewise-linear paths use closed forms on diagonal
    blocks, a homogeneity reduction at shared corners and tensor Gauss rules
    elsewhere.
    """
    _check_alpha(alpha, m)
    if path.nodal:
        val = _frac_nodes(path.values, path.grid.tau, alpha, m, rho, path.eigenvalues)
    else:
        val = _frac_cells(path.values, path.grid.tau, alpha, m, rho, path.eigenvalues)
    return max(val, 0.0) ** (1.0 / m)


def sup_norm(path: PathSample, rho: float = 0.0) -> float:
    return float(np.max(spatial_norm(path.values, rho, path.eigenvalues)))


@dataclass
class PathEnsemble:
    """``N`` paths sharing one grid; ``values`` has shape ``(N, K, ...)``."""

    grid: TimeGrid
    values: np.ndarray
    nodal: bool = False
    eigenvalues: np.ndarray | None = None
    path_ids: np.ndarray | None = None
    failed: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        n = self.values.shape[0]
        if self.path_ids is None:
            self.path_ids = np.arange(n)
        if self.failed is None:
            self.failed = np.zeros(n, dtype=bool)

    def __len__(self):
        return self.values.shape[0]

    def path(self, i: int) -> PathSample:
        return PathSample(self.grid, self.values[i], self.nodal, self.eigenvalues)

    def __iter__(self):
        return (self.path(i) for i in range(len(self)))

    def healthy(self) -> "PathEnsemble":
        keep = ~self.failed
        return PathEnsemble(
            self.grid, self.values[keep], self.nodal, self.eigenvalues,
            self.path_ids[keep], self.failed[keep],
        )

    @classmethod
    def from_paths(cls, paths, path_ids=None, failed=None):
        paths = list(paths)
        if not paths:
            raise ValueError("ensemble needs at least one path")
        first = paths[0]
        return cls(
            first.grid, np.stack([p.values for p in paths]), first.nodal,
            first.eigenvalues, None if path_ids is None else np.asarray(path_ids),
            None if failed is None else np.asarray(failed, dtype=bool),
        )


# Registry of path functionals usable as Phi / Psi in the admissible set.
def _power(x, m):
    # numpy power saturates to inf instead of raising OverflowError
    return float(np.power(np.float64(x), m))


def _phi_bochner(path, spec):
    return _power(bochner_norm(path, spec.m, spec.rho), spec.m)


def _phi_xprime(path, spec):
    return _power(xprime_norm(path, spec.m, spec.alpha, spec.rho_prime, spec.rho0), spec.m)


def _phi_sup(path, spec):
    return _power(sup_norm(path, spec.rho), spec.m)


FUNCTIONALS = {
    "bochner_power": _phi_bochner,
    "xprime_power": _phi_xprime,
    "sup_power": _phi_sup,
}


def xprime_norm(path: PathSample, m=2.0, alpha=0.25, rho_prime=0.5, rho0=-1.0) -> float:
    """Norm of ``L^m(0,T;H^rho') ∩ W^alpha_m(0,T;H^rho0)`` (sum of m-th powers)."""
    a = bochner_norm(path, m, rho_prime) ** m
    b = frac_sobolev_norm(path, alpha, m, rho0) ** m
    return (a + b) ** (1.0 / m)


@dataclass(frozen=True)
class AdmissibilitySpec:
    radius: float = 10.0
    m: float = 2.0
    phi: str = "bochner_power"
    psi: str = "xprime_power"
    rho: float = 0.0
    rho_prime: float = 0.5
    rho0: float = -1.0
    alpha: float = 0.25

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        for name in (self.phi, self.psi):
            if name not in FUNCTIONALS:
                raise ValueError(f"unknown path functional {name!r}")


@dataclass
class MembershipReport:
    phi_mean: float
    in_set: bool
    psi_finite_fraction: float
    phi_values: np.ndarray = field(repr=False, default=None)


def kR_membership(ensemble, spec: AdmissibilitySpec) -> MembershipReport:
    """Empirical check of ``E Phi <= R^m`` and ``P(Psi < inf) = 1``."""
    paths = list(ensemble)
    if not paths:
        raise ValueError("ensemble is empty")
    phi = FUNCTIONALS[spec.phi]
    psi = FUNCTIONALS[spec.psi]
    with np.errstate(over="ignore", invalid="ignore"):
        phis = np.array([phi(p, spec) for p in paths])
        psis = np.array([psi(p, spec) for p in paths])
    phi_mean = math.fsum(phis) / len(phis)
    finite = float(np.mean(np.isfinite(psis)))
    in_set = bool(np.isfinite(phi_mean) and phi_mean <= spec.radius**spec.m and finite == 1.0)
    return MembershipReport(phi_mean, in_set, finite, phis)
