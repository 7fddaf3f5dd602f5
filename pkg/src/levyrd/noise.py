"""Wiener increments, Poisson random measures and compensated jump integrals.

Every sampler draws from a counter-based stream keyed by ``(seed, path_id,
substream)``, so paths can be generated in any order or in parallel and still
reproduce bit for bit.

Jump marks are real numbers. An intensity ``nu`` may have infinite total
mass; it is truncated to ``S_n = {|z| >= 1/n}`` and the remaining small jumps
are dropped (their size is reported by :meth:`Intensity.small_jump_moment`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special, stats

from .paths import PathSample, TimeGrid

SUBSTREAMS = {"wiener": 0, "prm": 1, "initial": 2}


def stream(seed: int, path_id: int = 0, substream: str = "wiener") -> np.random.Generator:
    """Independent Philox generator for one (seed, path, substream) triple."""
    key = SUBSTREAMS[substream]
    seq = np.random.SeedSequence([int(seed) & (2**64 - 1), int(path_id), key])
    return np.random.Generator(np.random.Philox(seq))


@dataclass(frozen=True)
class WienerSpec:
    """Per-mode variance weights ``q_k`` of a (truncated) Q-Wiener process."""

    weights: tuple = (1.0,)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size < 1:
            raise ValueError("weights must be a nonempty 1-d sequence")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and nonnegative")

    @classmethod
    def cylindrical(cls, modes: int) -> "WienerSpec":
        return cls(tuple([1.0] * modes))

    @classmethod
    def from_eigenvalues(cls, eigenvalues, decay: float = 0.0, scale: float = 1.0) -> "WienerSpec":
        """``q_k = scale * (1 + lambda_k)**(-decay)``; ``decay=0`` is cylindrical."""
        lam = np.asarray(eigenvalues, dtype=float)
        return cls(tuple(scale * (1.0 + lam) ** (-decay)))

    @property
    def modes(self) -> int:
        return len(self.weights)

    @property
    def q(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)


def sample_wiener(grid: TimeGrid, spec: WienerSpec, rng: np.random.Generator,
                  components: int = 1) -> np.ndarray:
    """Increments of shape ``(cells, components, modes)``, variance ``q_k * tau``."""
    z = rng.standard_normal((grid.n_cells, components, spec.modes))
    return z * np.sqrt(spec.q * grid.tau)


# ---------------------------------------------------------------- intensities


class Intensity:
    """A Levy measure on the real line, possibly of infinite mass near 0."""

    name = "abstract"
    finite = False

    def density(self, z):
        raise NotImplementedError

    def _support(self, n):
        """Finite integration panels ``[(a, b), ...]`` covering S_n up to a negligible tail."""
        raise NotImplementedError

    def mass(self, n: int) -> float:
        """``nu(S_n)``."""
        return self._integrate(lambda z: np.ones_like(z), n)

    def mean_mark(self, n: int) -> float:
        """``int_{S_n} z nu(dz)``."""
        return self._integrate(lambda z: z, n)

    def moment(self, p: float, n: int) -> float:
        """``int_{S_n} |z|^p nu(dz)``."""
        return self._integrate(lambda z: np.abs(z) ** p, n)

    def small_jump_moment(self, p: float, n: int) -> float:
        """``int_{|z| < 1/n} |z|^p nu(dz)``, the discarded part."""
        raise NotImplementedError

    def growth_integral(self, p: float) -> float:
        """``int min(1, |z|^p) nu(dz)``; finite iff ``nu`` is admissible for ``p``."""
        raise NotImplementedError

    def _integrate(self, fn, n):
        nodes, weights = self.quadrature(n)
        return math.fsum(weights * fn(nodes))

    def quadrature(self, n: int, order: int = 24) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights with ``sum w f(z) ~ int_{S_n} f(z) nu(dz)``."""
        x, w = np.polynomial.legendre.leggauss(order)
        nodes, weights = [], []
        for a, b in self._support(n):
            half = 0.5 * (b - a)
            z = a + half * (x + 1.0)
            nodes.append(z)
            weights.append(half * w * self.density(z))
        if not nodes:
            return np.zeros(0), np.zeros(0)
        return np.concatenate(nodes), np.concatenate(weights)

    def sample_marks(self, rng: np.random.Generator, size: int, n: int) -> np.ndarray:
        raise NotImplementedError


def _check_level(n):
    if int(n) != n or n < 1:
        raise ValueError(f"truncation level must be a positive integer, got {n}")


@dataclass(frozen=True)
class CompoundPoisson(Intensity):
    """``nu = rate * law`` for a probability law on the real line."""

    rate: float = 1.0
    law: str = "rademacher"
    scale: float = 1.0
    name = "compound_poisson"
    finite = True

    def __post_init__(self):
        if not (self.rate >= 0 and math.isfinite(self.rate)):
            raise ValueError(f"rate must be finite and nonnegative, got {self.rate}")
        if self.law not in ("rademacher", "uniform", "normal"):
            raise ValueError(f"unknown jump law {self.law!r}")
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    def _tail_prob(self, eps):
        """``P(|Z| >= eps)`` for the unit law scaled by ``scale``."""
        s = self.scale
        if self.law == "rademacher":
            return 1.0 if eps <= s else 0.0
        if self.law == "uniform":
            return max(0.0, 1.0 - eps / s)
        return float(special.erfc(eps / (s * math.sqrt(2.0))))

    def mass(self, n: int) -> float:
        _check_level(n)
        return self.rate * self._tail_prob(1.0 / n)

    def mean_mark(self, n: int) -> float:
        return 0.0

    def moment(self, p: float, n: int) -> float:
        _check_level(n)
        eps, s = 1.0 / n, self.scale
        if self.law == "rademacher":
            return self.rate * s**p if eps <= s else 0.0
        if self.law == "uniform":
            return self.rate * max(0.0, s ** (p + 1) - eps ** (p + 1)) / ((p + 1) * s)
        # E |Z|^p 1{|Z| >= eps} for Z ~ N(0, s^2)
        x = eps**2 / (2 * s**2)
        upper = special.gammaincc((p + 1) / 2, x) * special.gamma((p + 1) / 2)
        return self.rate * s**p * 2 ** (p / 2) / math.sqrt(math.pi) * upper

    def small_jump_moment(self, p: float, n: int) -> float:
        _check_level(n)
        if self.law == "rademacher":
            return self.rate * self.scale**p if 1.0 / n > self.scale else 0.0
        return self.moment(p, 1 << 60) - self.moment(p, n)

    def growth_integral(self, p: float) -> float:
        # E min(1, |Z|^p) = E |Z|^p 1{|Z| < 1} + P(|Z| >= 1)
        below = self.small_jump_moment(p, 1)
        return below + self.mass(1)

    def quadrature(self, n: int, order: int = 24):
        _check_level(n)
        eps, s = 1.0 / n, self.scale
        if self.law == "rademacher":
            if eps > s:
                return np.zeros(0), np.zeros(0)
            return np.array([-s, s]), np.array([0.5, 0.5]) * self.rate
        return super().quadrature(n, order)

    def density(self, z):
        z = np.asarray(z, dtype=float)
        s = self.scale
        if self.law == "uniform":
            return np.where(np.abs(z) <= s, self.rate / (2 * s), 0.0)
        return self.rate * stats.norm.pdf(z, scale=s)

    def _support(self, n):
        eps, s = 1.0 / n, self.scale
        top = s if self.law == "uniform" else 12.0 * s
        if eps >= top:
            return []
        cuts = np.geomspace(eps, top, 9) if self.law == "normal" else np.array([eps, top])
        panels = list(zip(cuts[:-1], cuts[1:]))
        return [(-b, -a) for a, b in reversed(panels)] + panels

    def sample_marks(self, rng, size, n):
        _check_level(n)
        eps, s = 1.0 / n, self.scale
        if size == 0:
            return np.zeros(0)
        if self.law == "rademacher":
            return s * rng.choice([-1.0, 1.0], size=size)
        out = np.empty(0)
        while out.size < size:
            draw = rng.uniform(-s, s, size) if self.law == "uniform" else rng.normal(0.0, s, size)
            out = np.concatenate([out, draw[np.abs(draw) >= eps]])
        return out[:size]


@dataclass(frozen=True)
class TemperedStable(Intensity):
    """Symmetric density ``c |z|^(-1-a) exp(-lam |z|)`` with ``a`` in (0, 2)."""

    c: float = 1.0
    a: float = 0.5
    lam: float = 1.0
    name = "tempered_stable"

    def __post_init__(self):
        if not 0 < self.a < 2:
            raise ValueError(f"stability index must lie in (0, 2), got {self.a}")
        if not (self.c > 0 and self.lam > 0):
            raise ValueError("c and lam must be positive")

    def density(self, z):
        r = np.abs(np.asarray(z, dtype=float))
        with np.errstate(divide="ignore"):
            return self.c * r ** (-1.0 - self.a) * np.exp(-self.lam * r)

    def _support(self, n):
        eps = 1.0 / n
        top = max(eps * 2, 40.0 / self.lam)
        cuts = np.geomspace(eps, top, 24)
        panels = list(zip(cuts[:-1], cuts[1:]))
        return [(-b, -a) for a, b in reversed(panels)] + panels

    def _radial(self, fn, lo, hi):
        val, _ = integrate.quad(lambda r: fn(r) * self.density(r), lo, hi, limit=200,
                                epsabs=0.0, epsrel=1e-12)
        return 2.0 * val

    def mass(self, n):
        _check_level(n)
        # 2 c int_eps^inf r^(-1-a) e^(-lam r) dr = 2 c lam^a Gamma(-a, lam eps)
        return self._radial(lambda r: 1.0, 1.0 / n, np.inf)

    def mean_mark(self, n):
        return 0.0

    def moment(self, p, n):
        _check_level(n)
        return self._radial(lambda r: r**p, 1.0 / n, np.inf)

    def small_jump_moment(self, p, n):
        _check_level(n)
        if p <= self.a:
            return math.inf
        return self._radial(lambda r: r**p, 0.0, 1.0 / n)

    def growth_integral(self, p):
        if p <= self.a:
            return math.inf
        return self._radial(lambda r: r**p, 0.0, 1.0) + self._radial(lambda r: 1.0, 1.0, np.inf)

    def sample_marks(self, rng, size, n):
        _check_level(n)
        eps = 1.0 / n
        out = np.empty(0)
        while out.size < size:
            # Pareto proposal with tail r^(-1-a), thinned by exp(-lam (r - eps))
            r = eps * rng.uniform(size=size) ** (-1.0 / self.a)
            keep = rng.uniform(size=size) < np.exp(-self.lam * (r - eps))
            out = np.concatenate([out, r[keep]])
        out = out[:size]
        return out * rng.choice([-1.0, 1.0], size=size)


def _gaussian(rate=1.0, scale=1.0):
    return CompoundPoisson(rate, "normal", scale)


INTENSITIES = {
    "compound_poisson": CompoundPoisson,
    "tempered_stable": TemperedStable,
    "gaussian": _gaussian,
}


def make_intensity(name: str, **params) -> Intensity:
    if name not in INTENSITIES:
        raise ValueError(f"unknown intensity {name!r}; choose from {sorted(INTENSITIES)}")
    return INTENSITIES[name](**params)


# ---------------------------------------------------------------- realizations


@dataclass
class JumpList:
    times: np.ndarray
    marks: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float).reshape(-1)
        self.marks = np.asarray(self.marks, dtype=float).reshape(-1)
        if self.times.shape != self.marks.shape:
            raise ValueError("times and marks must have equal length")

    def __len__(self):
        return self.times.size


def sample_prm(intensity: Intensity, horizon: float, truncation: int,
               rng: np.random.Generator) -> JumpList:
    """Poisson random measure on ``(0, T] x S_n``: Poisson count, uniform times, iid marks."""
    mass = intensity.mass(truncation)
    if not math.isfinite(mass):
        raise ValueError(f"nu(S_{truncation}) is not finite")
    if horizon <= 0 or mass == 0:
        return JumpList(np.zeros(0), np.zeros(0))
    count = int(rng.poisson(horizon * mass))
    # T - U T lies in (0, T]
    times = np.sort(horizon - horizon * rng.uniform(size=count))
    marks = intensity.sample_marks(rng, count, truncation)
    return JumpList(times, marks)


@dataclass
class NoiseRealization:
    grid: TimeGrid
    wiener: np.ndarray
    jumps: JumpList
    truncation: int = 1
    seed: int = 0
    path_id: int = 0

    def cell_jump_sums(self) -> np.ndarray:
        """Sum of jump marks inside each cell ``(t_k, t_{k+1}]``."""
        if len(self.jumps) == 0:
            return np.zeros(self.grid.n_cells)
        cells = self.grid.cell_of(self.jumps.times)
        return np.bincount(cells, weights=self.jumps.marks, minlength=self.grid.n_cells)

    def coarsen(self, level: int) -> "NoiseRealization":
        """Same Brownian and jump path viewed on a coarser grid."""
        if level > self.grid.level:
            raise ValueError("can only coarsen to a lower level")
        factor = 2 ** (self.grid.level - level)
        w = self.wiener.reshape((-1, factor) + self.wiener.shape[1:]).sum(axis=1)
        return NoiseRealization(self.grid.at_level(level), w, self.jumps,
                                self.truncation, self.seed, self.path_id)


def sample_noise(grid: TimeGrid, wiener: WienerSpec, intensity: Intensity | None,
                 truncation: int = 1, components: int = 1, seed: int = 0,
                 path_id: int = 0) -> NoiseRealization:
    """Draw one joint (Wiener, PRM) realization from the keyed streams."""
    dw = sample_wiener(grid, wiener, stream(seed, path_id, "wiener"), components)
    if intensity is None:
        jumps = JumpList(np.zeros(0), np.zeros(0))
    else:
        jumps = sample_prm(intensity, grid.horizon, truncation, stream(seed, path_id, "prm"))
    return NoiseRealization(grid, dw, jumps, truncation, seed, path_id)


def compensated_integral(integrand, realization: NoiseRealization, intensity: Intensity,
                         window: tuple[float, float] | None = None) -> np.ndarray:
    """``int_a^b int_{S_n} h(s, z) (eta - nu x ds)`` for a cell-constant integrand.

    ``integrand(k, z)`` returns the field value of ``h`` on cell ``k`` at mark
    ``z`` (a scalar). The compensator is evaluated with the intensity's
    deterministic quadrature over ``S_n``.
    """
    grid = realization.grid
    a, b = (0.0, grid.horizon) if window is None else window
    if not 0 <= a <= b <= grid.horizon:
        raise ValueError(f"window ({a}, {b}] must lie inside (0, {grid.horizon}]")
    total = None

    def add(x):
        nonlocal total
        x = np.asarray(x, dtype=float)
        total = x.copy() if total is None else total + x

    jt, jm = realization.jumps.times, realization.jumps.marks
    inside = (jt > a) & (jt <= b)
    for t, z in zip(jt[inside], jm[inside]):
        add(integrand(int(grid.cell_of(t)), float(z)))
    nodes, weights = intensity.quadrature(realization.truncation)
    nd = grid.nodes
    for k in range(grid.n_cells):
        overlap = min(b, nd[k + 1]) - max(a, nd[k])
        if overlap <= 0:
            continue
        comp = sum(w * np.asarray(integrand(k, float(z)), dtype=float) for z, w in zip(nodes, weights))
        add(-overlap * np.asarray(comp, dtype=float))
    if total is None:
        probe = np.asarray(integrand(0, 1.0), dtype=float)
        return np.zeros_like(probe)
    return total


def levy_path(realization: NoiseRealization, intensity: Intensity,
              grid: TimeGrid | None = None) -> PathSample:
    """Compensated Levy process ``L(t) = sum_{t_i <= t} z_i - t int_{S_n} z nu(dz)`` at the nodes."""
    grid = grid or realization.grid
    nodes = grid.nodes
    jt, jm = realization.jumps.times, realization.jumps.marks
    order = np.argsort(jt, kind="stable")
    csum = np.concatenate([[0.0], np.cumsum(jm[order])])
    counts = np.searchsorted(jt[order], nodes, side="right")
    drift = intensity.mean_mark(realization.truncation) if intensity is not None else 0.0
    return PathSample(grid, csum[counts] - nodes * drift, nodal=True)


# ---------------------------------------------------------------- law checks


@dataclass
class LawCheck:
    name: str
    statistic: float
    threshold: float
    passed: bool
    detail: str = ""


def _chi_square_poisson(counts, mean):
    kmax = int(counts.max())
    probs = stats.poisson.pmf(np.arange(kmax + 1), mean)
    observed = np.bincount(counts, minlength=kmax + 1).astype(float)
    expected = probs * counts.size
    # pool the upper tail until every bin expects at least 5 draws
    cut = kmax
    while cut > 0 and counts.size * stats.poisson.sf(cut - 1, mean) < 5:
        cut -= 1
    obs = np.append(observed[:cut], observed[cut:].sum())
    exp = np.append(expected[:cut], counts.size * stats.poisson.sf(cut - 1, mean))
    keep = exp > 0
    stat = float(np.sum((obs[keep] - exp[keep]) ** 2 / exp[keep]))
    dof = int(keep.sum()) - 1
    return stat, dof


def noise_law_suite(seed: int = 0, samples: int = 100_000) -> list[LawCheck]:
    """Monte-Carlo checks of the samplers against their exact laws."""
    checks = []
    rng = stream(seed, 0, "prm")
    cp = CompoundPoisson(rate=2.0, law="rademacher")
    counts = np.array([len(sample_prm(cp, 1.0, 1, rng)) for _ in range(samples)])
    stat, dof = _chi_square_poisson(counts, 2.0)
    crit = float(stats.chi2.isf(1e-3, dof))
    checks.append(LawCheck("prm_count_chi2", stat, crit, stat <= crit, f"dof={dof}"))

    grid = TimeGrid(1.0, 2)
    w = sample_wiener(grid, WienerSpec((1.0,)), stream(seed, 0, "wiener"), components=samples)
    inc = w[0, :, 0]
    var = float(np.var(inc, ddof=1))
    se = grid.tau * math.sqrt(2.0 / inc.size)
    checks.append(LawCheck("wiener_variance", abs(var - grid.tau) / se, 3.0,
                           abs(var - grid.tau) <= 3 * se, f"var={var:.6g}"))

    # compensated integral of h(k, z) = c_k * phi(z) for three step integrands
    intensity = TemperedStable(c=1.0, a=0.5, lam=1.0)
    n = 2
    mass = intensity.mass(n)
    nodes, weights = intensity.quadrature(n)
    integrands = {
        "constant": (np.array([1.0, 1.0, 1.0, 1.0]), lambda z: z),
        "step": (np.array([0.0, 1.0, -2.0, 0.5]), lambda z: z),
        "even_mark": (np.array([1.0, -1.0, 1.0, 2.0]), lambda z: np.abs(z)),
    }
    for name, (coef, phi) in integrands.items():
        comp = math.fsum(weights * phi(nodes)) * grid.tau * coef.sum()
        second = math.fsum(weights * phi(nodes) ** 2) * grid.tau * float(np.sum(coef**2))
        vals = np.empty(samples // 10)
        for i in range(vals.size):
            r = stream(seed, i + 1, "prm")
            jumps = sample_prm(intensity, 1.0, n, r)
            cells = grid.cell_of(jumps.times)
            vals[i] = math.fsum(coef[cells] * phi(jumps.marks)) - comp
        se = math.sqrt(second / vals.size)
        mean = float(vals.mean())
        checks.append(LawCheck(f"compensated_mean_{name}", abs(mean) / se, 3.0,
                               abs(mean) <= 3 * se, f"mass={mass:.6g}"))
    return checks
