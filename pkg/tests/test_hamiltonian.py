from __future__ import annotations

import numpy as np
import pytest

from src.cocycle import SiteVector, solution_from_vector
from src.errors import DegenerateNormError, SupportNotFoundError
from src.hamiltonian import (FiniteSection, WeylWitness, approx_eigenvector_from_bounded_solution,
                             eigenvalues, min_support_length, sturm_counts, weyl_defect)
from src.models import ConstantPotential, shift


def _charpoly_roots(diagonal: np.ndarray) -> np.ndarray:
    """Roots of det(T - x) by bisection on the three-term determinant recurrence."""
    def count_below(x):
        p_prev, p = 1.0, diagonal[0] - x
        changes = int(p < 0)
        for a in diagonal[1:]:
            p_prev, p = p, (a - x) * p - p_prev
            changes += int((p < 0) != (p_prev < 0))
        return changes

    n = diagonal.size
    roots = []
    for i in range(n):
        lo, hi = diagonal.min() - 2.0, diagonal.max() + 2.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if count_below(mid) > i:
                hi = mid
            else:
                lo = mid
        roots.append(0.5 * (lo + hi))
    return np.array(roots)


@pytest.mark.parametrize("size", range(1, 13))
def test_eigenvalues_match_characteristic_polynomial(size) -> None:
    rng = np.random.default_rng(size)
    sec = FiniteSection(0, rng.uniform(-1.5, 1.5, size))
    np.testing.assert_allclose(eigenvalues(sec), _charpoly_roots(sec.diagonal), atol=1e-8)
    np.testing.assert_allclose(eigenvalues(sec), np.linalg.eigvalsh(sec.dense()), atol=1e-8)


def test_interlacing_and_bounds() -> None:
    rng = np.random.default_rng(11)
    for _ in range(100):
        n = int(rng.integers(2, 30))
        M = float(rng.uniform(0.1, 3.0))
        d = rng.uniform(-M, M, n + 1)
        small = eigenvalues(FiniteSection(0, d[:n]))
        big = eigenvalues(FiniteSection(0, d))
        assert np.all(big[:-1] <= small + 1e-9)
        assert np.all(small <= big[1:] + 1e-9)
        assert big.min() >= -M - 2.0 and big.max() <= M + 2.0


def test_sturm_counts() -> None:
    d = np.array([0.3, -1.0, 2.0, 0.5])
    eig = np.linalg.eigvalsh(FiniteSection(0, d).dense())
    shifts = np.array([-3.0, -0.5, 0.0, 1.0, 4.0])
    expected = [(eig < x).sum() for x in shifts]
    assert sturm_counts(d, shifts).tolist() == expected


def test_centered_section(period_two) -> None:
    sec = FiniteSection.centered(period_two, 7)
    assert (sec.first_index, sec.last_index, sec.size) == (-3, 3, 7)


def test_weyl_defect_matches_dense(period_two) -> None:
    rng = np.random.default_rng(2)
    u = SiteVector(-4, rng.standard_normal(9))
    E = 0.7
    expanded = FiniteSection.from_source(period_two, -5, 11).dense(E)
    padded = np.concatenate([[0.0], u.values, [0.0]])
    assert weyl_defect(period_two, E, u) == pytest.approx(np.linalg.norm(expanded @ padded))


def test_support_length_inside_band(free) -> None:
    found = min_support_length(free, 0.0, 0.5, 200)
    assert found.length <= 20
    assert found.witness.defect < 0.5
    assert np.linalg.norm(found.witness.vector) == pytest.approx(1.0)
    assert found.witness.spectral_distance_bound == found.witness.defect


def test_support_not_found_outside_band(free) -> None:
    with pytest.raises(SupportNotFoundError):
        min_support_length(free, 3.0, 0.5, 200)


def test_witness_is_shift_equivariant(period_two) -> None:
    found = min_support_length(period_two, 1.5, 0.6, 60)
    moved = found.witness.shifted(5)
    assert weyl_defect(shift(period_two, 5), 1.5, moved.as_site_vector()) == pytest.approx(found.witness.defect)


def test_eigenvector_from_bounded_solution(free) -> None:
    L = 500
    u = solution_from_vector(free, 1.0, (1.0, 0.0), sites=(-L - 1, L + 1))
    w = approx_eigenvector_from_bounded_solution(u, free, 1.0)
    assert w.support == (-L, L)
    assert w.defect <= 0.1


def test_eigenvector_needs_symmetric_range_and_mass(free) -> None:
    with pytest.raises(ValueError):
        approx_eigenvector_from_bounded_solution(SiteVector(-3, np.ones(5)), free, 0.0)
    with pytest.raises(DegenerateNormError):
        approx_eigenvector_from_bounded_solution(SiteVector(-3, np.zeros(7)), free, 0.0)


def test_witness_validation() -> None:
    with pytest.raises(ValueError):
        WeylWitness((0, 3), np.ones(2), 0.1, 0.0)
    w = WeylWitness((0, 1), np.array([0.6, 0.8]), 0.0, 0.0)
    assert w.resolvent_norm_lower_bound == float("inf")
    assert ConstantPotential(0.0).bound == 0.0
