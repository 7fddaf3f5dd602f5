import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levyrd.diagnostics import (
    NormIndices,
    batch_means_se,
    battery_features,
    default_radii,
    empirical_law_distance,
    energy_distance,
    moment_table,
    permutation_test,
    tightness_proxy,
)
from levyrd.paths import PathEnsemble, TimeGrid


def brute_energy_sq(x, y):
    def mean_dist(a, b):
        return np.mean([np.linalg.norm(p - q) for p in a for q in b])

    return 2 * mean_dist(x, y) - mean_dist(x, x) - mean_dist(y, y)


def test_energy_distance_two_points():
    assert energy_distance([[0.0]], [[1.0]]) == pytest.approx(math.sqrt(2.0))


def test_energy_distance_matches_brute_force():
    rng = np.random.default_rng(0)
    x, y = rng.standard_normal((7, 3)), rng.standard_normal((5, 3)) + 0.5
    assert energy_distance(x, y) ** 2 == pytest.approx(brute_energy_sq(x, y), rel=1e-12)


def test_identical_samples_give_exact_zero():
    x = np.random.default_rng(1).standard_normal((50, 4))
    assert energy_distance(x, x.copy()) == 0.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_energy_distance_symmetric_and_nonnegative(seed):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal((6, 2)), rng.standard_normal((9, 2))
    assert energy_distance(x, y) >= 0
    assert energy_distance(x, y) == pytest.approx(energy_distance(y, x), rel=1e-12)


def test_permutation_statistics_match_brute_force():
    rng = np.random.default_rng(2)
    x, y = rng.standard_normal((6, 2)), rng.standard_normal((4, 2)) + 1.0
    res = permutation_test(x, y, permutations=50, level=0.05, rng=np.random.default_rng(3))
    pooled = np.vstack([x, y])
    r = np.random.default_rng(3)
    base = np.zeros(10)
    base[:6] = 1.0
    stats = []
    for _ in range(50):
        lab = r.permutation(base).astype(bool)
        stats.append(math.sqrt(max(brute_energy_sq(pooled[lab], pooled[~lab]), 0.0)))
    assert res.statistic == pytest.approx(math.sqrt(brute_energy_sq(x, y)), rel=1e-12)
    assert res.quantile == pytest.approx(float(np.quantile(stats, 1 - 0.05)), rel=1e-10)
    exceed = sum(s >= res.statistic * (1 - 1e-9) for s in stats)
    assert res.p_value == pytest.approx((1 + exceed) / 51)


def test_permutation_test_separates_shifted_laws():
    rng = np.random.default_rng(4)
    res = permutation_test(rng.standard_normal((200, 2)), rng.standard_normal((200, 2)) + 1.0)
    assert res.rejects and res.statistic > res.quantile


def test_permutation_count_must_resolve_level():
    with pytest.raises(ValueError):
        permutation_test([[0.0]], [[1.0]], permutations=499, level=1e-3)


def test_batch_means_se():
    v = np.repeat([1.0, 3.0], 8)  # batches of 8: means 1 and 3
    assert batch_means_se(v, batches=2) == pytest.approx(np.std([1, 3], ddof=1) / math.sqrt(2))
    assert math.isnan(batch_means_se([1.0], batches=4))


def ensemble(values):
    v = np.asarray(values, dtype=float)
    return PathEnsemble(TimeGrid(1.0, 0), v.reshape(-1, 1, 1, 1))


def test_battery_shape_and_norm_column():
    ens = PathEnsemble(TimeGrid(1.0, 3), np.random.default_rng(5).standard_normal((4, 8, 2, 6)))
    f = battery_features(ens)
    assert f.shape == (4, 5 * 2 * 4 + 1)
    assert np.array_equal(f[:, 0], ens.values[:, 0, 0, 0])
    with pytest.raises(ValueError):
        battery_features(PathEnsemble(TimeGrid(1.0, 0), np.full((2, 1, 1, 1), np.inf)))


def test_law_distance_zero_for_same_ensemble():
    ens = PathEnsemble(TimeGrid(1.0, 3), np.random.default_rng(6).standard_normal((10, 8, 1, 4)))
    assert empirical_law_distance(ens, ens) == 0.0


def test_moment_table_constant_paths():
    ens = ensemble([2.0, 2.0, 2.0, 2.0])
    rows = {r.name: r for r in moment_table(ens, NormIndices(m=2, m0=2, m1=4))}
    assert rows["x_m"].mean == pytest.approx(4.0)
    assert rows["x_m1"].mean == pytest.approx(16.0)
    # a constant path has zero fractional seminorm, so the X' norm is the rho0 norm: |2| / sqrt(1 + 0)
    assert rows["xprime_m0"].mean == pytest.approx(4.0)


def test_tightness_bound_dominates_tail():
    rng = np.random.default_rng(7)
    xp = np.abs(rng.standard_normal(500)) * 3
    rows = tightness_proxy(ensemble(xp), default_radii(xp), 2.0, xprime=xp)
    assert all(r.tail <= r.bound + 1e-15 for r in rows)
    assert [r.tail for r in rows] == sorted([r.tail for r in rows], reverse=True)
    assert rows[0].tail > 0.5 and rows[-1].tail == 0.0
