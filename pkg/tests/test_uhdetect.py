from __future__ import annotations

import math

import numpy as np
import pytest

from src.cocycle import product_table
from src.errors import DirectionsUndefinedError
from src.models import AlmostMathieuPotential, ConstantPotential, PeriodicPotential
from src.sl2core import angular_distance
from src.uhdetect import (FailureReport, UHCertificate, blocked_growth, bounded_witness_search,
                          certify, cone_condition, estimate_sections, growth_test,
                          section_convergence)

from .conftest import dense_product, transfer_array

LAMBDA_3 = (3.0 + math.sqrt(5.0)) / 2.0


def _reverify(src, E: float, cert: UHCertificate) -> None:
    """Re-check a certificate against products built with plain numpy."""
    depth = cert.depth
    top = []
    for k in cert.sites:
        m, norms = np.eye(2), []
        for j in range(depth):
            m = transfer_array(E, src.sample(int(k) + j)) @ m
            norms.append(np.linalg.norm(m, 2))
        n = np.arange(1, depth + 1)
        assert np.all(np.log(norms) >= math.log(cert.c_const) + n * math.log(cert.lambda_) - 1e-8)
        top.append(norms[-1])
    for i, k in enumerate(cert.sites[:-1]):
        a = transfer_array(E, src.sample(int(k)))
        for angles in (cert.u_angles, cert.s_angles):
            x, y = a @ np.array([math.cos(angles[i]), math.sin(angles[i])])
            assert angular_distance(math.atan2(y, x), angles[i + 1]) <= 1e-6
    gaps = angular_distance(cert.u_angles, cert.s_angles)
    assert cert.gap_gamma == pytest.approx(float(np.min(gaps)))
    assert cert.gap_gamma > 0
    beta = min(top)
    assert cert.beta == pytest.approx(beta, rel=1e-8)
    assert math.tan(cert.gap_gamma / 2) > 2.0 / (beta - 1.0 / beta)


def test_sections_of_free_operator(free) -> None:
    sec = estimate_sections(free, 3.0, 0, 64)
    assert sec.u.angle == pytest.approx(math.atan(1.0 / LAMBDA_3), abs=1e-9)
    assert sec.s.angle == pytest.approx(math.atan(LAMBDA_3), abs=1e-9)
    assert sec.cauchy_residual < 1e-12


def test_sections_undefined_at_elliptic_energy(free) -> None:
    # E = 1 gives A^3 = -I
    with pytest.raises(DirectionsUndefinedError):
        estimate_sections(free, 1.0, 0, 3)
    with pytest.raises(ValueError):
        estimate_sections(free, 3.0, 0, 1)


def test_section_convergence_rate(free) -> None:
    conv = section_convergence(free, 3.0, 0, [6, 8, 10, 12])
    assert conv.rate == pytest.approx(LAMBDA_3 ** -2, rel=0.1)
    assert conv.residuals[0] > conv.residuals[-1]


@pytest.mark.parametrize("E,passed", [(3.0, True), (-2.5, True), (2.0, False), (1.0, False), (0.0, False)])
def test_growth_test_on_free_operator(free, E, passed) -> None:
    fit = growth_test(free, E, (-10, 10), 64)
    assert fit.passed is passed
    if passed:
        lam = (abs(E) + math.sqrt(E * E - 4.0)) / 2.0
        assert fit.lambda_ == pytest.approx(lam, rel=1e-6)


def test_parabolic_growth_is_unresolved(free) -> None:
    fit = growth_test(free, 2.0, (0, 0), 64)
    assert fit.lambda_ > 1.001
    assert not fit.resolved


@pytest.mark.parametrize("src,E", [
    (ConstantPotential(0.0), 3.0),
    (ConstantPotential(0.0), -2.5),
    (ConstantPotential(0.5), 3.0),
    (PeriodicPotential([1.0, 0.0]), 0.5),
    (PeriodicPotential([1.0, 0.0]), 3.0),
    (PeriodicPotential([1.0, 0.0]), -2.0),
])
def test_certificates_reverify(src, E) -> None:
    cert = certify(src, E, (-8, 8), 64)
    assert isinstance(cert, UHCertificate)
    assert cert.cone_ok and cert.max_invariance_error <= 1e-6
    _reverify(src, E, cert)


def test_certificate_constants_for_free_operator(free) -> None:
    cert = certify(free, 3.0, (-64, 64), 64)
    assert cert.lambda_ == pytest.approx(LAMBDA_3, rel=1e-6)
    assert cert.gap_gamma == pytest.approx(math.atan(LAMBDA_3) - math.atan(1.0 / LAMBDA_3), abs=1e-9)
    assert cert.blocked_lambda == pytest.approx(LAMBDA_3, rel=0.05)
    assert cert.contraction_const == pytest.approx(1.0, rel=1e-9)
    assert cert.backward_contraction_const == pytest.approx(1.0, rel=1e-9)
    u, s = cert.section_at(0)
    assert u.distance(s) == pytest.approx(cert.gap_gamma)
    with pytest.raises(IndexError):
        cert.section_at(65)
    data = cert.to_dict(include_sections=False)
    assert "sections" not in data and data["lambda"] == cert.lambda_


@pytest.mark.parametrize("E", [2.0, 1.0, -0.5])
def test_certify_fails_on_spectrum(free, E) -> None:
    out = certify(free, E, (-8, 8), 64)
    assert isinstance(out, FailureReport)
    assert out.reason == "growth"
    assert out.to_dict()["reason"] == "growth"


def test_failure_reason_is_validated() -> None:
    with pytest.raises(ValueError):
        FailureReport("tired", 0)


def test_blocked_growth_matches_growth_rate(free) -> None:
    blocked = blocked_growth(free, 3.0, 0, 4, 32)
    assert blocked.block_log_growth.shape == (4,)
    assert blocked.lambda0 == pytest.approx(LAMBDA_3, rel=0.05)


def test_cone_condition() -> None:
    assert cone_condition(math.pi / 2, math.log(3.0))
    assert not cone_condition(0.2, math.log(3.0))
    assert not cone_condition(1.0, 0.0)


def test_bounded_witness_contrast(free) -> None:
    inside = bounded_witness_search(free, 1.0, (0, 0), 100)
    assert inside.max_log_norm <= math.log(2.0)
    assert inside.orbit_log_norms.shape == (201,)
    assert inside.orbit_log_norms[100] == pytest.approx(0.0, abs=1e-12)
    outside = bounded_witness_search(free, 3.0, (0, 0), 100)
    assert outside.max_log_norm >= 40.0


def test_never_both_on_free_grid(free) -> None:
    threshold = math.log(4.0 * 64)
    for E in np.arange(-3.0, 3.01, 0.25):
        certified = isinstance(certify(free, E, (-8, 8), 64), UHCertificate)
        witness = bounded_witness_search(free, E, (-8, 8), 64).max_log_norm <= threshold
        assert not (certified and witness)
        if abs(abs(E) - 2.0) > 0.05:
            assert certified or witness


def _random_source(rng):
    family = int(rng.integers(3))
    if family == 0:
        return ConstantPotential(float(rng.uniform(-1.0, 1.0)))
    if family == 1:
        return PeriodicPotential(rng.uniform(-1.5, 1.5, size=int(rng.integers(2, 4))).tolist())
    return AlmostMathieuPotential(coupling=float(rng.uniform(0.3, 1.5)), theta=float(rng.uniform()))


def test_random_certificates_reverify() -> None:
    rng = np.random.default_rng(2024)
    certified = 0
    for _ in range(3000):
        src = _random_source(rng)
        E = float(rng.uniform(-src.bound - 3.0, src.bound + 3.0))
        cert = certify(src, E, (-6, 6), 32)
        if isinstance(cert, UHCertificate):
            _reverify(src, E, cert)
            certified += 1
            if certified == 200:
                break
    assert certified == 200


@pytest.mark.parametrize("depth", [32, 64])
def test_constant_cocycle_growth_rate_is_exact(free, depth) -> None:
    fit = growth_test(free, 2.5, (0, 0), depth)
    assert fit.lambda_ == pytest.approx(2.0, rel=1e-9)
    assert fit.passed


def test_escape_is_the_exact_minimum(period_two) -> None:
    E, depth = 3.0, 32
    cert = certify(period_two, E, (-4, 4), depth)
    assert isinstance(cert, UHCertificate)
    angles = np.linspace(0.0, math.pi, 20001)
    v = np.stack([np.cos(angles), np.sin(angles)])
    best = math.inf
    for k in cert.sites:
        forward = dense_product(period_two, E, int(k), depth)
        a, b, c, d = dense_product(period_two, E, int(k) - depth, depth).ravel()
        backward = np.array([[d, -b], [-c, a]])
        f = np.linalg.norm(forward @ v, axis=0)
        g = np.linalg.norm(backward @ v, axis=0)
        best = min(best, float(np.log(np.maximum(f, g)).min()))
    assert cert.escape_log_norm <= best + 1e-9
    assert cert.escape_log_norm == pytest.approx(best, abs=1e-3)


def test_shared_tables_give_the_same_results(period_two) -> None:
    sites = np.arange(-8, 9)
    tables = (product_table(period_two, 3.0, sites, 64), product_table(period_two, 3.0, sites, 64, backward=True))
    shared = certify(period_two, 3.0, (-8, 8), 64, tables=tables)
    alone = certify(period_two, 3.0, (-8, 8), 64)
    assert shared.to_dict() == alone.to_dict()
    one = bounded_witness_search(period_two, 0.5, (-8, 8), 64, tables=(
        product_table(period_two, 0.5, sites, 64), product_table(period_two, 0.5, sites, 64, backward=True)))
    other = bounded_witness_search(period_two, 0.5, (-8, 8), 64)
    assert one.max_log_norm == pytest.approx(other.max_log_norm, abs=1e-9)
    with pytest.raises(ValueError):
        certify(period_two, 3.0, (-8, 8), 32, tables=tables)
    with pytest.raises(ValueError):
        certify(period_two, 3.0, (-8, 8), 64, tables=(tables[1], tables[0]))


def test_infinite_contraction_constant_is_a_failure(free, monkeypatch) -> None:
    monkeypatch.setattr("src.uhdetect._contraction_consts", lambda *args: (math.inf, 1.0))
    out = certify(free, 3.0, (-8, 8), 64)
    assert isinstance(out, FailureReport)
    assert out.reason == "growth"
    assert out.details["check"] == "contraction"
