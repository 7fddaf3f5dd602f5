"""Controlled equation solver, its Haar-discretized version and fixed-point iteration.

Given a control path that is constant on each cell of level ``kappa``, the
drift ``A w + F_bar(xi_k, w)`` is affine in ``w`` and diagonal in the
eigenbasis: per mode ``dw/dt = mu w + a`` with ``mu = -D lambda - d`` and
``a = forcing(xi_k)``. It is integrated exactly with the exponential
functions ``phi1(x) = (e^x - 1)/x`` and ``phi2(x) = (e^x - 1 - x)/x^2``.
Noise enters once per cell at its right end with coefficients evaluated at
the left node, so the state at ``t_k`` only sees noise on cells ``< k``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .haar import shifted_projection
from .models import ModelSpec, forcing_eval, jump_coeff, sigma_eval
from .noise import Intensity, NoiseRealization, WienerSpec, sample_noise
from .paths import PathEnsemble, PathSample, TimeGrid
from .spectral import DomainSpec


@dataclass(frozen=True)
class SolveConfig:
    level: int = 5
    substeps: int = 1
    horizon: float = 1.0
    m: float = 2.0
    m0: float | None = None
    m1: float = 4.0
    alpha: float = 0.25
    radius: float = 10.0
    paths: int = 16
    max_sweeps: int = 8
    tolerance: float = 0.05
    truncation: int = 1

    def __post_init__(self):
        if int(self.level) != self.level or not 0 <= self.level <= 20:
            raise ValueError(f"level must be an integer in [0, 20], got {self.level}")
        s = int(self.substeps)
        if s != self.substeps or s < 1 or s & (s - 1):
            raise ValueError(f"substeps must be a power of two >= 1, got {self.substeps}")
        if not self.m >= 2:
            raise ValueError(f"m must be >= 2, got {self.m}")
        if not self.m1 > self.m:
            raise ValueError(f"m1 must exceed m, got m1={self.m1}, m={self.m}")
        if not 0 < self.alpha < 1.0 / self.m:
            raise ValueError(f"alpha must lie in (0, 1/m), got {self.alpha}")
        if self.paths < 1:
            raise ValueError("paths must be positive")
        if self.m0 is None:
            object.__setattr__(self, "m0", self.m)

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.horizon, self.level)


@dataclass
class Problem:
    """Everything except the control needed to run the controlled equation."""

    model: ModelSpec
    domain: DomainSpec
    initial: np.ndarray
    wiener: WienerSpec | None = None
    intensity: Intensity | None = None

    def __post_init__(self):
        self.initial = np.asarray(self.initial, dtype=float)
        shape = (self.model.n, self.domain.total_modes)
        if self.initial.shape != shape:
            raise ValueError(f"initial datum must have shape {shape}, got {self.initial.shape}")
        if self.wiener is None:
            self.wiener = WienerSpec.cylindrical(self.domain.total_modes)
        if self.wiener.modes != self.domain.total_modes:
            raise ValueError(
                f"Wiener spec has {self.wiener.modes} modes, domain has {self.domain.total_modes}"
            )

    def rates(self) -> np.ndarray:
        """Per-mode linear rates ``mu = -D_i lambda_k - d_i``."""
        d = np.asarray(self.model.diffusion)[:, None]
        return -d * self.domain.eigenvalues[None, :] - self.model.damping[:, None]

    def noise(self, grid: TimeGrid, seed: int, path_id: int, truncation: int = 1) -> NoiseRealization:
        intensity = self.intensity if self.model.jump != "none" else None
        return sample_noise(grid, self.wiener, intensity, truncation, self.model.n, seed, path_id)


def phi1(x):
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-5
    safe = np.where(small, 1.0, x)
    series = 1.0 + x / 2.0 + x * x / 6.0 + x**3 / 24.0
    return np.where(small, series, np.expm1(safe) / safe)


def phi2(x):
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-3
    safe = np.where(small, 1.0, x)
    series = 0.5 + x / 6.0 + x * x / 24.0 + x**3 / 120.0 + x**4 / 720.0
    return np.where(small, series, (np.expm1(safe) - safe) / (safe * safe))


@dataclass
class CellPropagator:
    """Precomputed exponential factors for one cell width and sub-cell count."""

    mu: np.ndarray
    tau: float
    substeps: int

    def __post_init__(self):
        x = self.mu * self.tau
        self.decay = np.exp(x)
        self.p1 = phi1(x)
        self.p2 = phi2(x)
        h = self.tau / self.substeps
        s = h * np.arange(self.substeps)
        xs = self.mu[None] * s.reshape(-1, 1, 1)
        self.sub_decay = np.exp(xs) * phi1(self.mu * h)[None]
        self.sub_forcing = s.reshape(-1, 1, 1) * phi1(xs) * phi1(self.mu * h)[None] + h * phi2(self.mu * h)[None]

    def flow(self, w, a):
        """State at the right node without noise."""
        return self.decay * w + self.tau * self.p1 * a

    def mean(self, w, a):
        return self.p1 * w + self.tau * self.p2 * a

    def sub_means(self, w, a):
        return self.sub_decay * w[None] + self.sub_forcing * a[None]


@dataclass
class ControlledPath:
    """Output of the controlled equation on one noise realization."""

    grid: TimeGrid
    nodes: np.ndarray       # (K + 1, n, M) states at t_k
    cell_means: np.ndarray  # (K, n, M) exact averages of the flow over each cell
    sub_means: np.ndarray | None = None  # (K * substeps, n, M)
    failed: bool = False

    def node_path(self, eigenvalues=None) -> PathSample:
        return PathSample(self.grid, self.nodes, nodal=True, eigenvalues=eigenvalues)

    def fine_path(self, eigenvalues=None) -> PathSample:
        """Piecewise-constant path of sub-cell averages."""
        means = self.cell_means if self.sub_means is None else self.sub_means
        level = self.grid.level + int(round(math.log2(means.shape[0] // self.grid.n_cells)))
        return PathSample(self.grid.at_level(level), means, eigenvalues=eigenvalues)


def _advance_cell(problem: Problem, prop: CellPropagator, w, control, dw, jump_sum, jump_drift):
    """One cell: returns (next node, cell mean, forcing at the control)."""
    a = forcing_eval(problem.model, control, problem.domain)
    nxt = prop.flow(w, a)
    mean = prop.mean(w, a)
    model = problem.model
    if model.sigma != "none":
        nxt = nxt + sigma_eval(model, w, dw, problem.domain)
    if model.jump != "none":
        nxt = nxt + jump_coeff(model, w, problem.domain) * (jump_sum - jump_drift)
    return nxt, mean, a


def _jump_drift(problem: Problem, noise: NoiseRealization) -> float:
    if problem.intensity is None or problem.model.jump == "none":
        return 0.0
    return noise.grid.tau * problem.intensity.mean_mark(noise.truncation)


def solve_controlled(problem: Problem, control: PathSample, noise: NoiseRealization,
                     substeps: int = 1) -> ControlledPath:
    """Solve the controlled equation with the control frozen on each cell.

    ``control`` must be cell-indexed on the noise grid. Non-finite states mark
    the path as failed; the remaining cells are filled with NaN.
    """
    grid = noise.grid
    if control.nodal or control.grid.level != grid.level:
        raise ValueError("control must be cell-indexed on the noise grid")
    prop = CellPropagator(problem.rates(), grid.tau, substeps)
    jumps = noise.cell_jump_sums()
    drift = _jump_drift(problem, noise)
    K = grid.n_cells
    shape = problem.initial.shape
    nodes = np.full((K + 1,) + shape, np.nan)
    means = np.full((K,) + shape, np.nan)
    subs = np.full((K, substeps) + shape, np.nan) if substeps > 1 else None
    w = problem.initial
    nodes[0] = w
    failed = False
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(K):
            nxt, mean, a = _advance_cell(problem, prop, w, control.values[k], noise.wiener[k], jumps[k], drift)
            if subs is not None:
                subs[k] = prop.sub_means(w, a)
            means[k] = mean
            if not (np.all(np.isfinite(nxt)) and np.all(np.isfinite(mean))):
                failed = True
                break
            nodes[k + 1] = nxt
            w = nxt
    sub = None if subs is None else subs.reshape((K * substeps,) + shape)
    return ControlledPath(grid, nodes, means, sub, failed)


def discretized_operator(problem: Problem, control: PathSample, noise: NoiseRealization,
                         initial=None) -> PathSample:
    """Shifted Haar projection of the controlled solution: cell 0 holds the
    initial datum, cell ``k`` the average of the solution over cell ``k - 1``."""
    sol = solve_controlled(problem, control, noise)
    init = problem.initial if initial is None else np.asarray(initial, dtype=float)
    values = np.concatenate([init[None], sol.cell_means[:-1]], axis=0)
    return PathSample(noise.grid, values, eigenvalues=problem.domain.eigenvalues)


def discretized_operator_via_projection(problem: Problem, control: PathSample,
                                        noise: NoiseRealization, substeps: int = 1,
                                        initial=None) -> PathSample:
    """Same operator built from the sub-cell path and :func:`shifted_projection`."""
    sol = solve_controlled(problem, control, noise, substeps)
    init = problem.initial if initial is None else initial
    return shifted_projection(sol.fine_path(problem.domain.eigenvalues), noise.grid.level, init)


@dataclass
class InductionResult:
    path: PathSample
    nodes: np.ndarray
    residual: float
    failed: bool


def forward_induction(problem: Problem, noise: NoiseRealization, initial=None,
                      literal: bool = False) -> InductionResult:
    """Fixed point of the discretized operator built cell by cell.

    Cell 0 is the initial datum; cell ``k + 1`` is the average over cell ``k``
    of the solution driven by the path frozen so far. ``literal=True`` reruns
    the full operator on the partial path at every step (quadratic cost) and
    must agree with the incremental recursion bit for bit.
    """
    grid = noise.grid
    K = grid.n_cells
    init = problem.initial if initial is None else np.asarray(initial, dtype=float)
    eig = problem.domain.eigenvalues
    values = np.empty((K,) + init.shape)
    values[0] = init
    failed = False
    if literal:
        for k in range(1, K):
            # cells >= k are not yet built; any filler works since cell k only reads cells < k
            partial = values.copy()
            partial[k:] = values[k - 1]
            out = discretized_operator(problem, PathSample(grid, partial, eigenvalues=eig), noise, init)
            values[k] = out.values[k]
        sol = solve_controlled(problem, PathSample(grid, values, eigenvalues=eig), noise)
        nodes, failed = sol.nodes, sol.failed
    else:
        prop = CellPropagator(problem.rates(), grid.tau, 1)
        jumps = noise.cell_jump_sums()
        drift = _jump_drift(problem, noise)
        nodes = np.full((K + 1,) + init.shape, np.nan)
        w = problem.initial
        nodes[0] = w
        with np.errstate(over="ignore", invalid="ignore"):
            for k in range(K):
                nxt, mean, _ = _advance_cell(problem, prop, w, values[k], noise.wiener[k], jumps[k], drift)
                if k + 1 < K:
                    values[k + 1] = mean
                if not (np.all(np.isfinite(nxt)) and np.all(np.isfinite(mean))):
                    failed = True
                    values[k + 1:] = np.nan
                    break
                nodes[k + 1] = nxt
                w = nxt
    path = PathSample(grid, values, eigenvalues=eig)
    if failed:
        return InductionResult(path, nodes, math.inf, True)
    image = discretized_operator(problem, path, noise, init)
    residual = float(np.max(np.abs(image.values - values)))
    return InductionResult(path, nodes, residual, False)


# ---------------------------------------------------------------- ensembles


def _map(fn, items, threads: int):
    items = list(items)
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def induction_ensemble(problem: Problem, config: SolveConfig, seed: int,
                       threads: int = 1, path_ids=None) -> tuple[PathEnsemble, np.ndarray]:
    """Forward-induction fixed points for ``config.paths`` independent noise draws.

    Returns the ensemble and the per-path self-consistency residuals.
    """
    grid = config.grid
    ids = np.arange(config.paths) if path_ids is None else np.asarray(path_ids)

    def one(pid):
        noise = problem.noise(grid, seed, int(pid), config.truncation)
        return forward_induction(problem, noise)

    results = _map(one, ids, threads)
    values = np.stack([r.path.values for r in results])
    failed = np.array([r.failed for r in results])
    ens = PathEnsemble(grid, values, eigenvalues=problem.domain.eigenvalues, path_ids=ids, failed=failed)
    return ens, np.array([r.residual for r in results])


@dataclass
class FixedPointReport:
    distances: list = field(default_factory=list)
    phi_means: list = field(default_factory=list)
    in_set: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    ensemble: PathEnsemble | None = None
    converged: bool = False
    halted: str = ""


def picard_sweep(problem: Problem, ensemble: PathEnsemble, config: SolveConfig, seed: int,
                 sweep: int, threads: int = 1) -> PathEnsemble:
    """Apply the discretized operator to every path with fresh noise."""
    grid = ensemble.grid
    sweep_seed = int(np.random.SeedSequence([int(seed) & (2**64 - 1), sweep]).generate_state(1, np.uint64)[0])

    def one(i):
        pid = int(ensemble.path_ids[i])
        noise = problem.noise(grid, sweep_seed, pid, config.truncation)
        out = discretized_operator(problem, ensemble.path(i), noise)
        return out.values

    outs = _map(one, range(len(ensemble)), threads)
    values = np.stack(outs)
    failed = ensemble.failed | ~np.all(np.isfinite(values.reshape(len(values), -1)), axis=1)
    return PathEnsemble(grid, values, eigenvalues=ensemble.eigenvalues,
                        path_ids=ensemble.path_ids, failed=failed)


def fixed_point_iterate(problem: Problem, init: PathEnsemble, config: SolveConfig, seed: int,
                        threads: int = 1, membership=None) -> FixedPointReport:
    """Picard iteration on laws: sweep until successive ensembles are close in energy distance."""
    from .diagnostics import empirical_law_distance
    from .paths import AdmissibilitySpec, kR_membership

    spec = membership or AdmissibilitySpec(radius=config.radius, m=config.m, alpha=config.alpha)
    report = FixedPointReport()
    current = init
    first = kR_membership(current.healthy(), spec)
    if not first.in_set:
        report.halted = "initial ensemble outside the admissible set"
        report.ensemble = current
        return report
    for sweep in range(config.max_sweeps):
        nxt = picard_sweep(problem, current, config, seed, sweep, threads)
        healthy = nxt.healthy()
        report.failures.append(int(nxt.failed.sum()))
        if len(healthy) == 0:
            report.halted = "every path failed"
            report.ensemble = nxt
            return report
        mem = kR_membership(healthy, spec)
        report.phi_means.append(mem.phi_mean)
        report.in_set.append(mem.in_set)
        report.distances.append(empirical_law_distance(current.healthy(), healthy))
        current = nxt
        if not mem.in_set:
            report.halted = f"sweep {sweep} left the admissible set"
            break
        if report.distances[-1] < config.tolerance:
            report.converged = True
            break
    report.ensemble = current
    return report


def constant_ensemble(problem: Problem, config: SolveConfig, value=None) -> PathEnsemble:
    """Ensemble of paths frozen at the initial datum (or ``value``)."""
    grid = config.grid
    v = problem.initial if value is None else np.asarray(value, dtype=float)
    values = np.broadcast_to(v, (config.paths, grid.n_cells) + v.shape).copy()
    return PathEnsemble(grid, values, eigenvalues=problem.domain.eigenvalues)


@dataclass
class RefinementRow:
    level: int
    phi_mean: float
    xprime_moment: float
    m1_moment: float
    failures: int


def kappa_refinement_study(problem: Problem, config: SolveConfig, levels, seed: int,
                           threads: int = 1, fine_level: int | None = None) -> list[RefinementRow]:
    """Moments of forward-induction fixed points for several projection levels.

    All levels share one noise draw per path, sampled on ``fine_level`` and
    coarsened, so differences across rows reflect the discretization only.
    """
    from .paths import bochner_norm, xprime_norm

    levels = list(levels)
    if levels != sorted(levels):
        raise ValueError("levels must be nondecreasing")
    fine = fine_level if fine_level is not None else max(levels)
    fine_grid = TimeGrid(config.horizon, fine)
    rows = []
    for level in levels:
        def one(pid):
            noise = problem.noise(fine_grid, seed, int(pid), config.truncation).coarsen(level)
            return forward_induction(problem, noise)

        results = _map(one, range(config.paths), threads)
        phis, xps, m1s = [], [], []
        failures = 0
        for r in results:
            if r.failed:
                failures += 1
                continue
            x = bochner_norm(r.path, config.m)
            phis.append(x**config.m)
            m1s.append(x**config.m1)
            xps.append(xprime_norm(r.path, config.m, config.alpha) ** config.m0)
        n = max(len(phis), 1)
        rows.append(RefinementRow(level, math.fsum(phis) / n, math.fsum(xps) / n,
                                  math.fsum(m1s) / n, failures))
    return rows
