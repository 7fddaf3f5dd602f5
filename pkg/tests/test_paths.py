import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from levyrd.paths import (
    AdmissibilitySpec,
    PathEnsemble,
    PathSample,
    TimeGrid,
    bochner_norm,
    constant_path,
    frac_sobolev_norm,
    kR_membership,
    refine,
)


def brute_frac(f, nodes, m, alpha):
    """Reference double integral, split on the grid cells."""
    beta = 1 + alpha * m
    total = 0.0
    for i in range(len(nodes) - 1):
        for j in range(len(nodes) - 1):
            val, _ = integrate.dblquad(
                lambda s, t: abs(f(t) - f(s)) ** m / abs(t - s) ** beta if t != s else 0.0,
                nodes[i], nodes[i + 1], nodes[j], nodes[j + 1], epsabs=1e-13, epsrel=1e-12,
            )
            total += val
    return total


def test_grid_nodes_and_cells():
    g = TimeGrid(2.0, 3)
    assert g.tau == 0.25 and g.n_cells == 8
    assert np.all(np.diff(g.nodes) > 0)
    # cells are (t_k, t_{k+1}]
    assert list(g.cell_of([0.25, 0.2500001, 2.0])) == [0, 1, 7]


def test_value_count_checked():
    with pytest.raises(ValueError):
        PathSample(TimeGrid(1, 2), np.zeros(5))
    with pytest.raises(ValueError):
        PathSample(TimeGrid(1, 2), np.zeros(4), nodal=True)


def test_bochner_zero_and_constant():
    g = TimeGrid(2.0, 3)
    assert bochner_norm(PathSample(g, np.zeros((8, 1, 3)))) == 0.0
    f = np.array([[1.0, 2.0, 2.0]])
    p = constant_path(g, f)
    assert bochner_norm(p, 3) == pytest.approx(2.0 ** (1 / 3) * 3.0, rel=1e-14)


def test_bochner_two_cells():
    p = PathSample(TimeGrid(1.0, 1), np.array([1.0, 3.0]))
    assert bochner_norm(p, 2) == pytest.approx(np.sqrt(5.0), rel=1e-15)


def test_bochner_nodal_closed_form():
    # f(t) = t on [0, 1]: int t^m = 1/(m+1)
    g = TimeGrid(1.0, 3)
    p = PathSample(g, g.nodes, nodal=True)
    for m in (2, 3, 2.5):
        assert bochner_norm(p, m) ** m == pytest.approx(1 / (m + 1), rel=1e-13)


def test_bochner_weighted_by_eigenvalues():
    lam = np.array([0.0, 3.0])
    p = PathSample(TimeGrid(1.0, 0), np.array([[[0.0, 1.0]]]), eigenvalues=lam)
    assert bochner_norm(p, 2, rho=1.0) == pytest.approx(2.0)


def test_frac_two_cell_closed_form():
    # 2 * int_0^.5 int_.5^1 (s - t)^(-1.5) ds dt = 2 (8 sqrt(.5) - 4)
    p = PathSample(TimeGrid(1.0, 1), np.array([0.0, 1.0]))
    exact = 2 * (8 * np.sqrt(0.5) - 4)
    assert frac_sobolev_norm(p, 0.25, 2) ** 2 == pytest.approx(exact, rel=1e-13)


@pytest.mark.parametrize("m,alpha", [(2, 0.25), (2, 0.1), (3, 0.2)])
def test_frac_piecewise_constant_matches_quadrature(m, alpha):
    g = TimeGrid(1.0, 2)
    v = np.array([0.3, -1.0, 0.5, 2.0])
    f = lambda t: v[min(int(t / g.tau), 3)]
    ref = brute_frac(f, g.nodes, m, alpha)
    assert frac_sobolev_norm(PathSample(g, v), alpha, m) ** m == pytest.approx(ref, rel=1e-8)


@pytest.mark.parametrize("level,m,alpha", [(1, 2, 0.25), (1, 2, 0.1), (2, 4, 0.2)])
def test_frac_piecewise_linear_matches_quadrature(level, m, alpha):
    g = TimeGrid(1.0, level)
    v = np.array([0.0, 1.0, -0.5, 0.25, 2.0])[: g.n_cells + 1]
    f = lambda t: np.interp(t, g.nodes, v)
    ref = brute_frac(f, g.nodes, m, alpha)
    got = frac_sobolev_norm(PathSample(g, v, nodal=True), alpha, m) ** m
    assert got == pytest.approx(ref, rel=1e-9)


def test_frac_far_cell_series_matches_exact_sum():
    # level 6 uses the series kernel beyond 16 cells; refining must not change the value
    rng = np.random.default_rng(3)
    p = PathSample(TimeGrid(2.0, 6), rng.standard_normal(64))
    assert frac_sobolev_norm(p) == pytest.approx(frac_sobolev_norm(refine(p, 8)), rel=1e-12)


def test_frac_alpha_range():
    p = PathSample(TimeGrid(1.0, 1), np.array([0.0, 1.0]))
    with pytest.raises(ValueError):
        frac_sobolev_norm(p, 0.5, 2)
    with pytest.raises(ValueError):
        frac_sobolev_norm(p, 0.0, 2)


def test_frac_monotone_in_alpha_on_unit_interval():
    rng = np.random.default_rng(4)
    p = PathSample(TimeGrid(1.0, 4), rng.standard_normal(16))
    vals = [frac_sobolev_norm(p, a, 2) for a in (0.05, 0.1, 0.2, 0.3, 0.45)]
    assert all(x <= y for x, y in zip(vals, vals[1:]))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 5), st.booleans(), st.integers(0, 2**31 - 1))
def test_frac_vanishes_on_constants_and_ignores_shifts(level, nodal, seed):
    rng = np.random.default_rng(seed)
    g = TimeGrid(1.0, level)
    count = g.n_cells + int(nodal)
    c = rng.standard_normal((1, 3))
    assert frac_sobolev_norm(PathSample(g, np.broadcast_to(c, (count, 1, 3)), nodal)) == 0.0
    v = rng.standard_normal((count, 1, 3))
    a = frac_sobolev_norm(PathSample(g, v, nodal))
    b = frac_sobolev_norm(PathSample(g, v + c, nodal))
    assert a == pytest.approx(b, rel=1e-12, abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 6), st.floats(-5, 5), st.integers(0, 2**31 - 1))
def test_bochner_homogeneous_and_refinement_invariant(level, c, seed):
    rng = np.random.default_rng(seed)
    p = PathSample(TimeGrid(1.5, level), rng.standard_normal((2**level, 2, 3)))
    q = p.with_values(c * p.values)
    assert bochner_norm(q, 3) == pytest.approx(abs(c) * bochner_norm(p, 3), rel=1e-12, abs=1e-300)
    assert bochner_norm(refine(p, level + 2), 2) == pytest.approx(bochner_norm(p, 2), rel=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 4), st.booleans(), st.integers(0, 2**31 - 1))
def test_triangle_inequality(level, nodal, seed):
    rng = np.random.default_rng(seed)
    g = TimeGrid(1.0, level)
    count = g.n_cells + int(nodal)
    a = PathSample(g, rng.standard_normal((count, 1, 2)), nodal)
    b = PathSample(g, rng.standard_normal((count, 1, 2)), nodal)
    s = a.with_values(a.values + b.values)
    for norm in (lambda p: bochner_norm(p, 2), lambda p: frac_sobolev_norm(p, 0.2, 2)):
        assert norm(s) <= (norm(a) + norm(b)) * (1 + 1e-10)


def test_refine_nodal_is_exact_interpolation():
    g = TimeGrid(1.0, 1)
    p = PathSample(g, np.array([0.0, 2.0, 1.0]), nodal=True)
    assert np.allclose(refine(p, 2).values, [0.0, 1.0, 2.0, 1.5, 1.0])


def _ensemble(values):
    values = np.asarray(values, dtype=float)
    return PathEnsemble(TimeGrid(1.0, 0), values.reshape(-1, 1, 1, 1))


def test_membership_zero_paths():
    rep = kR_membership(_ensemble(np.zeros(5)), AdmissibilitySpec(radius=0.1))
    assert rep.in_set and rep.phi_mean == 0.0 and rep.psi_finite_fraction == 1.0


def test_membership_threshold():
    # Phi = |v|^2 on a unit horizon
    rep = kR_membership(_ensemble([np.sqrt(2.0)]), AdmissibilitySpec(radius=1.0))
    assert rep.phi_mean == pytest.approx(2.0) and not rep.in_set


def test_membership_mean_of_known_values():
    phis = np.tile([0.25, 0.75], 50)
    rep = kR_membership(_ensemble(np.sqrt(phis)), AdmissibilitySpec(radius=1.0))
    assert rep.phi_mean == pytest.approx(0.5, rel=1e-14) and rep.in_set


def test_membership_flags_overflow():
    rep = kR_membership(_ensemble([1.0, 1e200]), AdmissibilitySpec(radius=1e300, psi="sup_power"))
    assert rep.psi_finite_fraction == 0.5 and not rep.in_set


def test_unknown_functional_rejected():
    with pytest.raises(ValueError):
        AdmissibilitySpec(phi="nope")


def test_frac_long_paths_agree_across_evaluation_strategies():
    # 1024 cells use the pairwise matrix, 4096 cells the lag loop
    rng = np.random.default_rng(5)
    p = PathSample(TimeGrid(1.0, 10), np.cumsum(rng.standard_normal(1024)) / 32)
    assert frac_sobolev_norm(p, 0.2, 2) == pytest.approx(frac_sobolev_norm(refine(p, 12), 0.2, 2), rel=1e-10)
