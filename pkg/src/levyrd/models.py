"""Reaction-diffusion systems: reaction terms, their linearization and noise coefficients.

Each reaction ``f`` is split as ``f(u) = forcing(u) - d * u`` where ``d`` is a
vector of linear damping rates. The linearized reaction freezes the forcing
at the control and keeps the damping on the state,
``F_bar(xi, w) = forcing(xi) - d * w``, so that ``F_bar(xi, xi) = F(xi)``.
Damping-free models freeze everything at the control.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .spectral import DomainSpec, constant_field, from_physical, to_physical


@dataclass(frozen=True)
class Reaction:
    name: str
    components: int
    params: tuple[str, ...]
    defaults: tuple[float, ...]

    def forcing(self, u, c, floor):
        raise NotImplementedError

    def damping(self, c) -> np.ndarray:
        return np.zeros(self.components)

    def pointwise(self, u, c, floor=0.0):
        """``f(u)`` on physical samples ``u`` of shape ``(n, ...)``."""
        d = self.damping(c).reshape((-1,) + (1,) * (u.ndim - 1))
        return self.forcing(u, c, floor) - d * u


class _Kpp(Reaction):
    def forcing(self, u, c, floor):
        return c[0] * u * (1.0 - u)


class _NewellWhitehead(Reaction):
    def forcing(self, u, c, floor):
        return c[0] * u * (1.0 - u * u)


class _Zeldovich(Reaction):
    def forcing(self, u, c, floor):
        return c[0] * u * (1.0 - u) * np.exp(-c[1] * (1.0 - u))


class _FitzHughNagumo(Reaction):
    # f1 = u1 (u1 - a)(1 - u1) - u2,  f2 = eps (u1 - gamma u2)
    def forcing(self, u, c, floor):
        a, eps, _ = c
        u1, u2 = u[0], u[1]
        return np.stack([u1 * (u1 - a) * (1.0 - u1) - u2, eps * u1])

    def damping(self, c):
        return np.array([0.0, c[1] * c[2]])


class _GiererMeinhardt(Reaction):
    # f1 = c12 u1^2 / u2 - c13 u1,  f2 = c22 u1^2 - c23 u2
    def forcing(self, u, c, floor):
        c12, _, c22, _ = c
        u1, u2 = u[0], u[1]
        return np.stack([c12 * u1 * u1 / np.maximum(u2, floor), c22 * u1 * u1])

    def damping(self, c):
        return np.array([c[1], c[3]])


REACTIONS = {
    r.name: r
    for r in (
        _Kpp("kpp", 1, ("c",), (1.0,)),
        _NewellWhitehead("newell_whitehead", 1, ("c",), (1.0,)),
        _Zeldovich("zeldovich", 1, ("c", "beta"), (1.0, 1.0)),
        _FitzHughNagumo("fitzhugh_nagumo", 2, ("a", "eps", "gamma"), (0.1, 0.01, 1.0)),
        _GiererMeinhardt("gierer_meinhardt", 2, ("c12", "c13", "c22", "c23"), (1.0, 1.0, 1.0, 2.0)),
    )
}

SIGMA_KINDS = ("none", "multiplicative", "pointwise", "additive")
JUMP_KINDS = ("none", "multiplicative", "additive")


@dataclass(frozen=True)
class ModelSpec:
    """Coefficients of ``du = (A u + F(u)) dt + Sigma(u) dW + int G(u) z eta~(dz, dt)``.

    ``sigma`` kinds: ``multiplicative`` scales each mode increment by the
    matching coefficient of ``u`` (diagonal in the eigenbasis), ``pointwise``
    multiplies ``u(x)`` and ``dW(x)`` in physical space, ``additive`` ignores
    ``u``. ``jump`` kinds use ``G(u) = c * u`` or ``G(u) = c * 1``.
    """

    reaction: str = "kpp"
    coeffs: tuple = ()
    diffusion: tuple = (1.0,)
    sigma: str = "none"
    sigma_coeffs: tuple = ()
    jump: str = "none"
    jump_coeffs: tuple = ()
    positivity_floor: float = 1e-6

    def __post_init__(self):
        if self.reaction not in REACTIONS:
            raise ValueError(f"unknown reaction {self.reaction!r}; choose from {sorted(REACTIONS)}")
        r = REACTIONS[self.reaction]
        if not self.coeffs:
            object.__setattr__(self, "coeffs", r.defaults)
        if len(self.coeffs) != len(r.params):
            raise ValueError(
                f"{self.reaction} takes {len(r.params)} coefficients {r.params}, got {len(self.coeffs)}"
            )
        n = r.components
        for name in ("diffusion", "sigma_coeffs", "jump_coeffs"):
            val = tuple(float(x) for x in getattr(self, name)) or (0.0,)
            if len(val) == 1:
                val = val * n
            if len(val) != n:
                raise ValueError(f"{name} needs {n} entries, got {len(val)}")
            if not all(math.isfinite(x) for x in val):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, val)
        if not all(math.isfinite(float(x)) for x in self.coeffs):
            raise ValueError("reaction coefficients must be finite")
        object.__setattr__(self, "coeffs", tuple(float(x) for x in self.coeffs))
        if any(d < 0 for d in self.diffusion):
            raise ValueError("diffusion constants must be nonnegative")
        if self.sigma not in SIGMA_KINDS:
            raise ValueError(f"unknown sigma kind {self.sigma!r}")
        if self.jump not in JUMP_KINDS:
            raise ValueError(f"unknown jump kind {self.jump!r}")
        if self.reaction == "gierer_meinhardt" and not self.positivity_floor > 0:
            raise ValueError("gierer_meinhardt needs a positive positivity_floor")

    @property
    def n(self) -> int:
        return REACTIONS[self.reaction].components

    @property
    def damping(self) -> np.ndarray:
        return REACTIONS[self.reaction].damping(self.coeffs)

    @property
    def has_noise(self) -> bool:
        return (self.sigma != "none" and any(self.sigma_coeffs)) or (
            self.jump != "none" and any(self.jump_coeffs)
        )


def reaction_pointwise(model: ModelSpec, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    return REACTIONS[model.reaction].pointwise(u, model.coeffs, model.positivity_floor)


def reaction_eval(model: ModelSpec, field, domain: DomainSpec) -> np.ndarray:
    """``F(u)``: evaluate ``f`` at the oversampled grid and project back."""
    phys = to_physical(field, domain)
    with np.errstate(over="ignore", invalid="ignore"):
        return from_physical(reaction_pointwise(model, phys), domain)


def forcing_eval(model: ModelSpec, control, domain: DomainSpec) -> np.ndarray:
    """The part of ``F`` frozen at the control."""
    r = REACTIONS[model.reaction]
    phys = to_physical(control, domain)
    with np.errstate(over="ignore", invalid="ignore"):
        return from_physical(r.forcing(phys, model.coeffs, model.positivity_floor), domain)


def linearized_reaction(model: ModelSpec, control, state, domain: DomainSpec) -> np.ndarray:
    """``F_bar(xi, w) = forcing(xi) - d * w``."""
    state = np.asarray(state, dtype=float)
    return forcing_eval(model, control, domain) - model.damping[:, None] * state


def sigma_eval(model: ModelSpec, u, dw, domain: DomainSpec) -> np.ndarray:
    """``Sigma(u) dW`` for one increment ``dw`` of shape ``(n, modes)``."""
    u = np.asarray(u, dtype=float)
    c = np.asarray(model.sigma_coeffs)[:, None]
    if model.sigma == "none":
        return np.zeros_like(u)
    if model.sigma == "additive":
        return c * dw
    if model.sigma == "multiplicative":
        return c * u * dw
    prod = to_physical(u, domain) * to_physical(dw, domain)
    return c * from_physical(prod, domain)


def jump_coeff(model: ModelSpec, u, domain: DomainSpec) -> np.ndarray:
    """``G(u)`` with ``g(u, z) = G(u) z``."""
    u = np.asarray(u, dtype=float)
    c = np.asarray(model.jump_coeffs)[:, None]
    if model.jump == "none":
        return np.zeros_like(u)
    if model.jump == "multiplicative":
        return c * u
    return c * constant_field(np.ones(u.shape[0]), domain)


def jump_coeff_eval(model: ModelSpec, u, z, domain: DomainSpec) -> np.ndarray:
    return jump_coeff(model, u, domain) * float(z)


def growth_report(model: ModelSpec, domain: DomainSpec, wiener_q, jump_second_moment: float,
                  bound: float = 2.0, samples: int = 200, seed: int = 0) -> dict:
    """Fit ``|Sigma(u)|_HS^2`` and ``int |g(u,z)|^2 nu(dz)`` against ``1 + |u|^2``.

    Random fields with physical values in ``[-bound, bound]`` are drawn and the
    largest ratio to ``1 + |u|_X^2`` is reported for each coefficient.
    """
    rng = np.random.default_rng(seed)
    q = np.asarray(wiener_q, dtype=float)
    sig, jmp = 0.0, 0.0
    for _ in range(samples):
        phys = rng.uniform(-bound, bound, (model.n,) + (domain.default_points(),) * domain.dim)
        u = from_physical(phys, domain)
        u_sq = float(np.sum(u**2))
        # Hilbert-Schmidt norm: sum over basis increments e_k with weight q_k
        hs = 0.0
        for k in range(domain.total_modes):
            if q[k % q.size] == 0:
                continue
            e = np.zeros_like(u)
            e[:, k] = 1.0
            hs += q[k % q.size] * float(np.sum(sigma_eval(model, u, e, domain) ** 2))
        g_sq = float(np.sum(jump_coeff(model, u, domain) ** 2)) * jump_second_moment
        sig = max(sig, hs / (1.0 + u_sq))
        jmp = max(jmp, g_sq / (1.0 + u_sq))
    return {"sigma_affine_constant": sig, "jump_affine_constant": jmp, "bound": bound}
