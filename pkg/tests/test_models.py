import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levyrd.models import (
    REACTIONS,
    ModelSpec,
    forcing_eval,
    growth_report,
    jump_coeff_eval,
    linearized_reaction,
    reaction_eval,
    reaction_pointwise,
    sigma_eval,
)
from levyrd.spectral import DomainSpec, constant_field, from_physical, to_physical


def test_gierer_meinhardt_pointwise():
    m = ModelSpec("gierer_meinhardt", coeffs=(1, 1, 1, 1))
    assert np.allclose(reaction_pointwise(m, np.array([2.0, 1.0])), [2.0, 3.0])


def test_gierer_meinhardt_linearized_split():
    m = ModelSpec("gierer_meinhardt", coeffs=(1, 1, 1, 1))
    dom = DomainSpec(1, 1.0, 4)
    xi = constant_field([2.0, 1.0], dom)
    w = constant_field([1.0, 1.0], dom)
    out = linearized_reaction(m, xi, w, dom)
    assert np.allclose(out, constant_field([3.0, 3.0], dom), atol=1e-13)


def test_gierer_meinhardt_floor():
    m = ModelSpec("gierer_meinhardt", coeffs=(1, 0, 0, 0), positivity_floor=1e-3)
    assert reaction_pointwise(m, np.array([1.0, 0.0]))[0] == pytest.approx(1e3)
    with pytest.raises(ValueError):
        ModelSpec("gierer_meinhardt", positivity_floor=0.0)


@pytest.mark.parametrize("name,roots", [
    ("kpp", [0.0, 1.0]),
    ("newell_whitehead", [-1.0, 0.0, 1.0]),
    ("zeldovich", [0.0, 1.0]),
])
def test_scalar_equilibria(name, roots):
    m = ModelSpec(name)
    dom = DomainSpec(1, 1.0, 6)
    for r in roots:
        assert np.max(np.abs(reaction_eval(m, constant_field([r], dom), dom))) < 1e-14


def test_fitzhugh_nagumo_pointwise():
    m = ModelSpec("fitzhugh_nagumo", coeffs=(0.1, 0.5, 2.0))
    u = np.array([0.5, 0.25])
    expected = [0.5 * 0.4 * 0.5 - 0.25, 0.5 * (0.5 - 2.0 * 0.25)]
    assert np.allclose(reaction_pointwise(m, u), expected, rtol=1e-15)


@pytest.mark.parametrize("name", sorted(REACTIONS))
def test_linearization_consistent(name):
    m = ModelSpec(name)
    dom = DomainSpec(1, 1.0, 8)
    rng = np.random.default_rng(0)
    for _ in range(100):
        phys = rng.uniform(0.2, 1.5, (m.n, dom.default_points()))
        xi = from_physical(phys, dom)
        full = reaction_eval(m, xi, dom)
        lin = linearized_reaction(m, xi, xi, dom)
        assert np.max(np.abs(full - lin)) <= 1e-12 * max(1.0, np.max(np.abs(full)))


@pytest.mark.parametrize("name", sorted(REACTIONS))
def test_reaction_eval_matches_fine_grid(name):
    # a band-limited input and a polynomial-like reaction: oversampling removes aliasing
    m = ModelSpec(name)
    dom = DomainSpec(1, 1.0, 6)
    rng = np.random.default_rng(1)
    field = constant_field([0.8] * m.n, dom)
    field[:, 1:] = 0.05 * rng.standard_normal((m.n, 5))
    fine = reaction_pointwise(m, to_physical(field, dom, 512))
    # project the fine-grid values onto the first 6 modes
    ref = from_physical(fine, dom)
    got = reaction_eval(m, field, dom)
    assert np.max(np.abs(got - ref)) < 1e-8


def test_coefficient_validation():
    with pytest.raises(ValueError):
        ModelSpec("kpp", coeffs=(1.0, 2.0))
    with pytest.raises(ValueError):
        ModelSpec("gierer_meinhardt", diffusion=(1.0, 2.0, 3.0))
    with pytest.raises(ValueError):
        ModelSpec("nope")
    with pytest.raises(ValueError):
        ModelSpec("kpp", sigma="cubic")
    assert ModelSpec("gierer_meinhardt", diffusion=(0.5,)).diffusion == (0.5, 0.5)


def test_noise_vanishes_at_zero():
    dom = DomainSpec(1, 1.0, 4)
    u = np.zeros((2, 4))
    dw = np.ones((2, 4))
    for sigma in ("multiplicative", "pointwise"):
        m = ModelSpec("gierer_meinhardt", sigma=sigma, sigma_coeffs=(0.3,), jump="multiplicative",
                      jump_coeffs=(0.2,))
        assert np.all(sigma_eval(m, u, dw, dom) == 0)
        assert np.all(jump_coeff_eval(m, u, 1.7, dom) == 0)


def test_zero_coefficient_turns_off_component():
    dom = DomainSpec(1, 1.0, 4)
    m = ModelSpec("gierer_meinhardt", sigma="multiplicative", sigma_coeffs=(0.3, 0.0))
    out = sigma_eval(m, np.ones((2, 4)), np.ones((2, 4)), dom)
    assert np.all(out[1] == 0) and np.all(out[0] == 0.3)
    assert not ModelSpec("kpp", sigma="additive", sigma_coeffs=(0.0,)).has_noise


def test_multiplicative_sigma_is_diagonal():
    dom = DomainSpec(1, 1.0, 3)
    m = ModelSpec("kpp", sigma="multiplicative", sigma_coeffs=(2.0,))
    u = np.array([[1.0, 2.0, 3.0]])
    dw = np.array([[0.5, -1.0, 0.0]])
    assert np.array_equal(sigma_eval(m, u, dw, dom), [[1.0, -4.0, 0.0]])


def test_pointwise_sigma_with_constant_state():
    # u = const c: physical product c * dW(x), i.e. c * dw in coefficients
    dom = DomainSpec(1, 1.0, 4)
    m = ModelSpec("kpp", sigma="pointwise", sigma_coeffs=(1.0,))
    u = constant_field([1.5], dom)
    dw = np.array([[0.1, 0.2, -0.3, 0.4]])
    assert np.allclose(sigma_eval(m, u, dw, dom), 1.5 * dw, atol=1e-14)


def test_additive_jump_is_constant_field():
    dom = DomainSpec(1, 2.0, 4)
    m = ModelSpec("kpp", jump="additive", jump_coeffs=(0.5,))
    g = jump_coeff_eval(m, np.zeros((1, 4)), 2.0, dom)
    assert np.allclose(to_physical(g, dom), 1.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(-10, 10).filter(lambda z: z == 0 or abs(z) > 1e-200), st.integers(0, 2**31 - 1))
def test_noise_coefficients_are_linear(z, seed):
    rng = np.random.default_rng(seed)
    dom = DomainSpec(1, 1.0, 5)
    m = ModelSpec("fitzhugh_nagumo", sigma="pointwise", sigma_coeffs=(0.3, 0.1),
                  jump="multiplicative", jump_coeffs=(0.2, 0.4))
    u = rng.standard_normal((2, 5))
    a, b = rng.standard_normal((2, 2, 5))
    assert np.array_equal(jump_coeff_eval(m, u, 2 * z, dom), 2 * jump_coeff_eval(m, u, z, dom))
    lhs = sigma_eval(m, u, a + 3 * b, dom)
    rhs = sigma_eval(m, u, a, dom) + 3 * sigma_eval(m, u, b, dom)
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_forcing_for_damped_models():
    dom = DomainSpec(1, 1.0, 2)
    m = ModelSpec("gierer_meinhardt", coeffs=(1, 0.5, 2, 3))
    assert np.allclose(m.damping, [0.5, 3.0])
    xi = constant_field([1.0, 2.0], dom)
    assert np.allclose(forcing_eval(m, xi, dom), constant_field([0.5, 2.0], dom), atol=1e-14)


def test_growth_report_affine_bounds():
    dom = DomainSpec(1, 1.0, 4)
    m = ModelSpec("kpp", sigma="additive", sigma_coeffs=(0.5,), jump="multiplicative", jump_coeffs=(2.0,))
    rep = growth_report(m, dom, np.ones(4), jump_second_moment=1.0, samples=20)
    # additive: |Sigma|_HS^2 = 0.25 * 4 over 1 + |u|^2 is at most 1
    assert 0 < rep["sigma_affine_constant"] <= 1.0 + 1e-12
    assert rep["jump_affine_constant"] <= 4.0
