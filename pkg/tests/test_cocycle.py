from __future__ import annotations

import math

import numpy as np
import pytest

from src.cocycle import (RENORM_CAP, FunctionPotential, SiteVector, compose, product, product_table,
                         solution_from_vector, transfer, wronskians)
from src.errors import PotentialBoundError
from src.sl2core import svd2

from .conftest import dense_product


def test_transfer_matrix_entries() -> None:
    t = transfer(1.5, 0.25)
    assert (t.a11, t.a12, t.a21, t.a22) == (1.25, -1.0, 1.0, 0.0)


def test_forward_product_matches_dense(period_two) -> None:
    for k, n in [(0, 1), (1, 7), (-3, 12)]:
        got = product(period_two, 0.3, k, n).matrix.as_array()
        np.testing.assert_allclose(got, dense_product(period_two, 0.3, k, n), rtol=1e-10, atol=1e-10)


def test_backward_product_is_inverse_of_forward(period_two) -> None:
    k, n = 2, 9
    back = product(period_two, 0.3, k, -n).matrix.as_array()
    np.testing.assert_allclose(back, np.linalg.inv(dense_product(period_two, 0.3, k - n, n)),
                               rtol=1e-10, atol=1e-10)


def test_long_product_growth_rate(free) -> None:
    lam = (3.0 + math.sqrt(5.0)) / 2.0
    p = product(free, 3.0, 0, 200)
    assert abs(p.log_norm - 200 * math.log(lam)) < 1.0
    # the representative is clamped but keeps the total norm
    rep = p.matrix
    assert p.log_norm_scale + math.log(svd2(rep).norm) == pytest.approx(p.log_norm, rel=1e-12)
    assert np.linalg.svd(rep.as_array(), compute_uv=False)[0] == pytest.approx(RENORM_CAP, rel=1e-12)
    assert svd2(rep).expand_dir.distance(p.expand_dir) < 1e-12


def test_cocycle_law(period_two) -> None:
    E, k, n, m = 0.3, 1, 4, 6
    joined = compose(product(period_two, E, k + n, m), product(period_two, E, k, n))
    assert (joined.k, joined.n) == (k, n + m)
    np.testing.assert_allclose(joined.matrix.as_array(), product(period_two, E, k, n + m).matrix.as_array(),
                               rtol=1e-9, atol=1e-9)


def test_inverse_law(period_two) -> None:
    E, k, n = 0.3, -2, 11
    identity = compose(product(period_two, E, k + n, -n), product(period_two, E, k, n))
    assert identity.n == 0
    np.testing.assert_allclose(identity.matrix.as_array(), np.eye(2), atol=1e-9)


def test_cocycle_and_inverse_laws_on_random_lengths(period_two) -> None:
    rng = np.random.default_rng(11)
    E = -0.8  # inside a band, so long products stay moderate
    for _ in range(40):
        k = int(rng.integers(-50, 51))
        n, m = (int(x) for x in rng.integers(-200, 201, size=2))
        joined = compose(product(period_two, E, k + n, m), product(period_two, E, k, n))
        direct = product(period_two, E, k, n + m).matrix.as_array()
        np.testing.assert_allclose(joined.matrix.as_array(), direct, rtol=1e-8, atol=1e-8)
        identity = compose(product(period_two, E, k + n, -n), product(period_two, E, k, n))
        np.testing.assert_allclose(identity.matrix.as_array(), np.eye(2), atol=1e-7)


def test_cocycle_law_on_long_hyperbolic_products(period_two) -> None:
    rng = np.random.default_rng(12)
    E = 3.0
    for _ in range(40):
        k = int(rng.integers(-50, 51))
        sign = 1 if rng.uniform() < 0.5 else -1
        n, m = (sign * int(x) for x in rng.integers(1, 201, size=2))
        joined = compose(product(period_two, E, k + n, m), product(period_two, E, k, n))
        direct = product(period_two, E, k, n + m)
        assert joined.log_norm == pytest.approx(direct.log_norm, rel=1e-10)
        assert joined.expand_dir.distance(direct.expand_dir) < 1e-8
        assert joined.contract_dir.distance(direct.contract_dir) < 1e-8


def test_compose_rejects_mismatched_sites(free) -> None:
    with pytest.raises(ValueError):
        compose(product(free, 3.0, 5, 2), product(free, 3.0, 0, 2))


def test_row_log_norms_shape(free) -> None:
    table = product_table(free, 3.0, [0, 1, 2], 5)
    angles = np.linspace(0.0, 3.0, 4)
    out = table.row_log_norms([1, 5], np.cos(angles), np.sin(angles))
    assert out.shape == (2, 3, 4)
    assert np.all(table.log_norms()[0] == 0.0)


def test_solution_satisfies_recurrence(period_two) -> None:
    E = 1.7
    u = solution_from_vector(period_two, E, (0.6, 0.8), sites=(-30, 40))
    assert u.at(0) == 0.6 and u.at(-1) == 0.8
    v = period_two.block(-29, 39)
    interior = u.values[2:] + u.values[:-2] + v * u.values[1:-1]
    np.testing.assert_allclose(interior, E * u.values[1:-1], atol=1e-9)


def test_wronskian_is_conserved(free) -> None:
    f = solution_from_vector(free, 1.0, (1.0, 0.0), sites=(-50, 50))
    g = solution_from_vector(free, 1.0, (0.0, 1.0), sites=(-50, 50))
    np.testing.assert_allclose(wronskians(f, g), 1.0, atol=1e-9)


def test_solution_needs_unit_start(free) -> None:
    with pytest.raises(ValueError):
        solution_from_vector(free, 1.0, (1.0, 1.0), sites=(-5, 5))


def test_bound_violation_is_reported() -> None:
    src = FunctionPotential(lambda n: 2.0 * np.ones(n.shape), bound=1.0)
    with pytest.raises(PotentialBoundError, match="v\\(3\\)"):
        src.sample(3)


def test_site_vector_indexing() -> None:
    u = SiteVector(-2, [1.0, 2.0, 3.0])
    assert u.last_index == 0 and u.at(-1) == 2.0
    assert u.restrict(-1, 0).values.tolist() == [2.0, 3.0]
    with pytest.raises(IndexError):
        u.at(1)
