"""Neumann cosine basis on an interval or a square.

Fields are stored as spectral coefficients: an array of shape
``(n_components, total_modes)`` whose entry ``(i, k)`` is the L2 inner
product of component ``i`` with the k-th normalized eigenfunction. Modes
are ordered by nondecreasing Laplacian eigenvalue.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import fft


class AliasingError(ValueError):
    """Raised when a quadrature grid is too coarse for the mode count."""


@dataclass(frozen=True)
class DomainSpec:
    dim: int = 1
    length: float = 1.0
    modes: int = 8

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if not self.length > 0:
            raise ValueError(f"length must be positive, got {self.length}")
        if int(self.modes) != self.modes or self.modes < 1:
            raise ValueError(f"modes must be a positive integer, got {self.modes}")

    @property
    def total_modes(self) -> int:
        return self.modes**self.dim

    @property
    def measure(self) -> float:
        return self.length**self.dim

    @cached_property
    def _sorted(self):
        k = np.arange(self.modes)
        lam1 = (k * np.pi / self.length) ** 2
        if self.dim == 1:
            return lam1, np.arange(self.modes)
        lam = (lam1[:, None] + lam1[None, :]).ravel()
        order = np.argsort(lam, kind="stable")
        return lam[order], order

    @property
    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues of the negative Neumann Laplacian in storage order."""
        return self._sorted[0]

    @property
    def flat_order(self) -> np.ndarray:
        """Storage position -> flat tensor index (``kx * modes + ky`` in 2-D)."""
        return self._sorted[1]

    def mode_index(self, position: int) -> tuple[int, ...]:
        flat = int(self.flat_order[position])
        if self.dim == 1:
            return (flat,)
        return divmod(flat, self.modes)

    def default_points(self) -> int:
        # 4x oversampling keeps quadratic/cubic products alias-free
        return 4 * self.modes


def neumann_eigenpairs(domain: DomainSpec) -> list[tuple[float, tuple[int, ...]]]:
    """Sorted ``(eigenvalue, mode index)`` pairs; the first eigenvalue is 0."""
    lam = domain.eigenvalues
    return [(float(lam[p]), domain.mode_index(p)) for p in range(domain.total_modes)]


def eigenfunction(domain: DomainSpec, position: int, x, y=None) -> np.ndarray:
    """Evaluate the L2-normalized eigenfunction stored at ``position``."""
    def one_d(k, s):
        s = np.asarray(s, dtype=float)
        if k == 0:
            return np.full_like(s, 1.0 / np.sqrt(domain.length))
        return np.sqrt(2.0 / domain.length) * np.cos(k * np.pi * s / domain.length)

    idx = domain.mode_index(position)
    if domain.dim == 1:
        return one_d(idx[0], x)
    return one_d(idx[0], x) * one_d(idx[1], y)


def quadrature_nodes(domain: DomainSpec, points: int | None = None) -> np.ndarray:
    """Cell-midpoint nodes along one axis used by the physical transforms."""
    points = points or domain.default_points()
    return (np.arange(points) + 0.5) * domain.length / points


def _check_field(field, domain: DomainSpec) -> np.ndarray:
    field = np.asarray(field, dtype=float)
    if field.ndim != 2 or field.shape[1] != domain.total_modes:
        raise ValueError(
            f"field must have shape (n, {domain.total_modes}), got {field.shape}"
        )
    return field


def apply_diffusion(field, diffusion, domain: DomainSpec) -> np.ndarray:
    """Apply ``A = diag(c_i) * Laplacian`` mode by mode."""
    field = _check_field(field, domain)
    diffusion = np.asarray(diffusion, dtype=float).reshape(-1)
    if diffusion.size != field.shape[0]:
        raise ValueError(
            f"{diffusion.size} diffusion constants for {field.shape[0]} components"
        )
    return -diffusion[:, None] * domain.eigenvalues[None, :] * field


def _to_grid(field, domain):
    n = field.shape[0]
    if domain.dim == 1:
        return field
    grid = np.zeros((n, domain.modes * domain.modes))
    grid[:, domain.flat_order] = field
    return grid.reshape(n, domain.modes, domain.modes)


def to_physical(field, domain: DomainSpec, points: int | None = None) -> np.ndarray:
    """Synthesize values at the midpoint grid, shape ``(n, P)`` or ``(n, P, P)``."""
    field = _check_field(field, domain)
    points = points or domain.default_points()
    if points < 2 * domain.modes:
        raise AliasingError(
            f"{points} quadrature points cannot resolve {domain.modes} modes "
            f"(need at least {2 * domain.modes})"
        )
    grid = _to_grid(field, domain)
    pad = [(0, 0)] + [(0, points - domain.modes)] * domain.dim
    grid = np.pad(grid, pad)
    axes = tuple(range(1, domain.dim + 1))
    scale = (points / domain.length) ** (domain.dim / 2)
    return scale * fft.idctn(grid, type=2, norm="ortho", axes=axes)


def from_physical(values, domain: DomainSpec) -> np.ndarray:
    """Project midpoint-grid samples back onto the first ``modes`` eigenfunctions."""
    values = np.asarray(values, dtype=float)
    if values.ndim != domain.dim + 1:
        raise ValueError(f"expected {domain.dim + 1}-d samples, got shape {values.shape}")
    points = values.shape[1]
    if points < 2 * domain.modes:
        raise AliasingError(
            f"{points} quadrature points cannot resolve {domain.modes} modes"
        )
    axes = tuple(range(1, domain.dim + 1))
    scale = (domain.length / points) ** (domain.dim / 2)
    coeffs = scale * fft.dctn(values, type=2, norm="ortho", axes=axes)
    n = values.shape[0]
    if domain.dim == 1:
        return coeffs[:, : domain.modes]
    block = coeffs[:, : domain.modes, : domain.modes].reshape(n, -1)
    return block[:, domain.flat_order]


def sobolev_weights(domain: DomainSpec, rho: float) -> np.ndarray:
    return (1.0 + domain.eigenvalues) ** rho


def sobolev_norm(field, rho: float, domain: DomainSpec, component: int | None = None) -> float:
    """Spectral H^rho norm; ``component=None`` takes all components jointly."""
    field = _check_field(field, domain)
    if component is not None:
        field = field[component : component + 1]
    w = sobolev_weights(domain, rho)
    return float(np.sqrt(np.sum(w[None, :] * field**2)))


def constant_field(values, domain: DomainSpec) -> np.ndarray:
    """Field whose i-th component is the constant ``values[i]``."""
    values = np.atleast_1d(np.asarray(values, dtype=float))
    field = np.zeros((values.size, domain.total_modes))
    field[:, 0] = values * np.sqrt(domain.measure)
    return field
