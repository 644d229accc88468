from __future__ import annotations

import json
import math

import numpy as np
import pytest

from src.errors import BadPhaseError, ConfigError, PotentialIndexError
from src.models import (GOLDEN_MEAN, AlmostMathieuPotential, HullSpec, PeriodicPotential,
                        RandomPotential, SturmianPotential, hull_samples, make_source, shift)


def test_periodic_pattern_wraps_negative_sites() -> None:
    src = PeriodicPotential([1.0, 0.0, -0.5])
    assert src.block(-3, 3).tolist() == [1.0, 0.0, -0.5, 1.0, 0.0, -0.5, 1.0]
    assert src.bound == 1.0 and src.period == 3


def test_almost_mathieu_closed_form() -> None:
    src = AlmostMathieuPotential(coupling=0.7, alpha=GOLDEN_MEAN, theta=0.2)
    n = np.arange(-20, 21)
    np.testing.assert_allclose(src.samples(n), 1.4 * np.cos(2 * np.pi * (n * GOLDEN_MEAN + 0.2)), atol=1e-12)
    assert src.bound == pytest.approx(1.4)
    assert src.descriptor["alpha_rational"] is False


def test_rational_alpha_is_flagged() -> None:
    src = AlmostMathieuPotential(alpha=0.5)
    assert src.descriptor["alpha_rational"] is True
    assert src.descriptor["alpha_fraction"] == "1/2"


def test_sturmian_takes_two_values_with_frequency_alpha() -> None:
    src = SturmianPotential(coupling=2.0)
    v = src.block(0, 9999)
    assert set(np.unique(v).tolist()) == {0.0, 2.0}
    assert np.mean(v == 2.0) == pytest.approx(GOLDEN_MEAN, abs=1e-3)
    with pytest.raises(ConfigError):
        SturmianPotential(alpha=1.5)


def test_random_potential_is_reproducible_across_blocks() -> None:
    a = RandomPotential(bound=1.0, seed=5)
    b = RandomPotential(bound=1.0, seed=5)
    sites = np.arange(-5000, 5000, 37)
    np.testing.assert_array_equal(a.samples(sites), b.samples(sites))
    np.testing.assert_array_equal(a.block(4090, 4100), np.array([a.sample(n) for n in range(4090, 4101)]))
    assert np.all(np.abs(a.samples(sites)) <= 1.0)
    assert not np.array_equal(a.samples(sites), RandomPotential(bound=1.0, seed=6).samples(sites))


def test_file_potential(tmp_path) -> None:
    path = tmp_path / "v.txt"
    path.write_text("0.5\n-0.25\n1.0\n")
    (tmp_path / "v.json").write_text(json.dumps({"first_index": -1, "bound": 1.0}))
    src = make_source(HullSpec("file", {"path": str(path)}))
    assert src.block(-1, 1).tolist() == [0.5, -0.25, 1.0]
    with pytest.raises(PotentialIndexError):
        src.sample(2)


def test_missing_file_is_a_config_error(tmp_path) -> None:
    with pytest.raises(ConfigError):
        make_source(HullSpec("file", {"path": str(tmp_path / "nope.txt")}))


def test_shift_equivariance(period_two) -> None:
    shifted = shift(period_two, 3)
    np.testing.assert_array_equal(shifted.block(-4, 4), period_two.block(-1, 7))
    twice = shift(shifted, -3)
    np.testing.assert_array_equal(twice.block(-4, 4), period_two.block(-4, 4))
    assert shift(period_two, 0) is period_two


@pytest.mark.parametrize("family,phase", [("almost_mathieu", "x"), ("almost_mathieu", math.nan),
                                          ("sturmian", True), ("periodic", 0.5), ("random_iid", "1")])
def test_bad_phases(family, phase) -> None:
    params = {"pattern": [1.0]} if family == "periodic" else {}
    with pytest.raises(BadPhaseError):
        make_source(HullSpec(family, params), phase)


def test_unknown_family() -> None:
    with pytest.raises(ConfigError, match="model.family"):
        HullSpec("lattice")


def test_hull_samples_default_phases() -> None:
    spec = HullSpec("almost_mathieu", {"coupling": 1.0, "theta": 0.1})
    samples = hull_samples(spec, 4)
    assert [s.descriptor["phase"] for s in samples] == pytest.approx([0.1, 0.225, 0.35, 0.475])
    assert samples[0].descriptor["dense_orbit_point"] is True
    assert samples[2].descriptor["hull_index"] == 2
    values_at_zero = [s.sample(0) for s in samples]
    assert len(set(np.round(values_at_zero, 12))) == 4


def test_hull_samples_explicit_phases_first() -> None:
    spec = HullSpec("random_iid", {"seed": 1}, phases=[5])
    samples = hull_samples(spec, 3, shift_stride=10)
    assert [s.descriptor["phase"] for s in samples] == [5, 10, 20]
    base = make_source(HullSpec("random_iid", {"seed": 1}))
    assert samples[1].sample(0) == base.sample(10)
    with pytest.raises(ConfigError):
        hull_samples(spec, 0)
