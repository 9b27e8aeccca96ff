import math

import numpy as np
import pytest

from affine_tc.levy import (CompoundPoisson, DeterministicSpec, DiscreteJump, DomainError, DriverPath,
                            ExponentialJump, GammaSubordinator, LevySpec, PointMass, SpecError,
                            StableSpectrallyPositive, check_hypothesis_H, extend_path, laplace_exponent,
                            sample_path)
from affine_tc.solver import AffineModel
from affine_tc.streams import TESTING, StreamKey, stream

from conftest import brownian, drift


def key(*k):
    return StreamKey(11, (TESTING,) + k)


# ---------------------------------------------------------------- sampling


def test_pure_drift_path_is_the_floored_line():
    mesh = 0.1
    p = sample_path(drift(1.0), 2.0, mesh, key(0))
    s = np.linspace(0, 2, 57)
    expected = np.floor(s / mesh + 1e-9) * mesh
    assert np.allclose(p(s)[:, 0], expected, atol=1e-12)
    assert p.left(2.0)[0] == pytest.approx(2.0 - mesh, abs=1e-12)


def test_zero_rate_compound_poisson_is_zero():
    spec = LevySpec(1, jumps=(CompoundPoisson(0.0, PointMass((1.0,))),))
    p = sample_path(spec, 5.0, 0.01, key(1))
    assert not p.values.any()
    assert not p.jumps.any()


def test_gamma_subordinator_mean():
    spec = LevySpec(1, jumps=(GammaSubordinator(1.0, 1.0, 0),))
    x = np.array([sample_path(spec, 1.0, 1e-3, key(2, i))(1.0)[0] for i in range(10_000)])
    se = x.std(ddof=1) / math.sqrt(x.size)
    assert abs(x.mean() - 1.0) < 3 * se


def test_gaussian_increments_have_the_covariance():
    cov = np.array([[1.0, 0.6], [0.6, 2.0]])
    spec = LevySpec(2, gaussian_cov=cov)
    x = np.array([sample_path(spec, 1.0, 0.01, key(3, i))(1.0) for i in range(4000)])
    emp = np.cov(x.T)
    # entrywise sampling error of a covariance estimate is about sqrt(2/n) * scale
    assert np.allclose(emp, cov, atol=5 * math.sqrt(2 / 4000) * 2)


def test_compound_poisson_jumps_on_the_ledger():
    spec = LevySpec(1, jumps=(CompoundPoisson(3.0, PointMass((0.5,))),))
    p = sample_path(spec, 10.0, 0.05, key(4))
    steps = np.diff(p.values[:, 0])
    on_ledger = p.jumps[1:]
    assert np.allclose(steps[on_ledger], 0.5)
    assert not steps[~on_ledger].any()
    # jump times are exact arrivals, not mesh points
    jt = p.breakpoints[p.jumps]
    assert np.all(np.abs(jt / 0.05 - np.round(jt / 0.05)) > 1e-9)


def test_subordinator_paths_are_nondecreasing():
    spec = LevySpec(2, drift=[0.5, 0.0], jumps=(GammaSubordinator(2.0, 3.0, 0),
                                               CompoundPoisson(2.0, ExponentialJump(0.3, 1, 2))))
    for i in range(20):
        p = sample_path(spec, 3.0, 0.01, key(5, i))
        assert np.all(np.diff(p.values, axis=0) >= 0)


def test_spectrally_positive_diagonal_has_no_negative_ledger_jumps():
    spec = LevySpec(1, drift=[-1.0], gaussian_cov=[[1.0]],
                    jumps=(CompoundPoisson(5.0, ExponentialJump(0.2, 0, 1)),))
    p = sample_path(spec, 5.0, 0.01, key(6))
    idx = np.flatnonzero(p.jumps)
    assert idx.size > 0
    assert np.all(p.values[idx, 0] - p.values[idx - 1, 0] > 0)
    # Gaussian cell steps do go down
    assert np.any(np.diff(p.values[:, 0]) < 0)


def test_empirical_exponent_matches_closed_form():
    spec = LevySpec(1, drift=[0.3], gaussian_cov=[[0.5]],
                    jumps=(CompoundPoisson(2.0, ExponentialJump(0.5, 0, 1)), GammaSubordinator(1.0, 2.0, 0)))
    u = -0.7
    x = np.array([sample_path(spec, 1.0, 1e-3, key(7, i))(1.0)[0] for i in range(10_000)])
    e = np.exp(u * x)
    est = math.log(e.mean())
    se = e.std(ddof=1) / (e.mean() * math.sqrt(e.size))
    assert abs(est - laplace_exponent(spec, [u]).real) < 3 * se


def test_stable_component_samples_and_is_spectrally_positive():
    spec = LevySpec(1, jumps=(StableSpectrallyPositive(1.5, 1.0, 0),))
    p = sample_path(spec, 1.0, 0.01, key(8))
    assert np.all(np.isfinite(p.values))
    rng = stream(1, TESTING)
    from affine_tc.levy import stable_standard
    x = stable_standard(rng, 1.5, 200_000)
    # E exp(-S) = exp(1) for the standard spectrally positive law with exponent (-u)^alpha at u = -1
    assert np.mean(np.exp(-x)) == pytest.approx(math.exp(1.0), rel=0.02)


# ---------------------------------------------------------------- extension


def test_extend_drift_path_continues_linearly():
    spec = drift(2.0)
    p = sample_path(spec, 1.0, 0.01, key(9))
    q = extend_path(p, spec, 30.0, key(9))
    s = np.array([10.0, 20.0, 29.5])
    assert np.allclose(q(s)[:, 0], 2.0 * s, atol=1e-9)


def test_extension_keeps_the_prefix_bitwise():
    spec = LevySpec(1, gaussian_cov=[[1.0]], jumps=(CompoundPoisson(1.0, PointMass((1.0,))),))
    p = sample_path(spec, 3.0, 1e-3, key(10))
    q = extend_path(p, spec, 12.0, key(10))
    s = np.linspace(0, 3.0, 1001)
    assert np.array_equal(p(s), q(s))
    assert np.array_equal(q.breakpoints[:p.breakpoints.size], p.breakpoints)


def test_extend_twice_equals_extend_once():
    spec = LevySpec(1, jumps=(CompoundPoisson(2.0, DiscreteJump(((1.0,), (2.0,)), (0.3, 0.7))),))
    p = sample_path(spec, 1.0, 1e-3, key(12))
    twice = extend_path(extend_path(p, spec, 4.0, key(12)), spec, 9.0, key(12))
    once = extend_path(p, spec, 9.0, key(12))
    fresh = sample_path(spec, 9.0, 1e-3, key(12))
    assert twice.to_csv() == once.to_csv() == fresh.to_csv()


def test_extension_needs_the_same_stream():
    spec = drift(1.0)
    p = sample_path(spec, 1.0, 0.1, key(13))
    with pytest.raises(ValueError):
        extend_path(p, spec, 2.0, key(14))


# ---------------------------------------------------------------- paths


def test_right_continuous_and_left_limit_queries():
    p = DriverPath.from_steps([0.0, 1.0, 2.5], [[0.0], [3.0], [-1.0]], horizon=4.0)
    assert p(1.0)[0] == 3.0 and p.left(1.0)[0] == 0.0
    assert p(2.49)[0] == 3.0 and p(2.5)[0] == -1.0 and p.left(2.5)[0] == 3.0
    assert p(4.0)[0] == -1.0
    with pytest.raises(ValueError):
        p(4.5)


def test_driver_path_csv_round_trip():
    p = sample_path(LevySpec(2, gaussian_cov=np.eye(2)), 0.5, 0.01, key(15))
    q = DriverPath.from_csv(p.to_csv(), p.horizon)
    assert np.array_equal(p.breakpoints, q.breakpoints) and np.array_equal(p.values, q.values)


def test_refine_preserves_the_function():
    p = sample_path(brownian(), 1.0, 0.01, key(16))
    q = p.refine(np.linspace(0, 1, 333))
    s = np.linspace(0, 1, 5000)
    assert np.array_equal(p(s), q(s))


# ---------------------------------------------------------------- exponents


def test_brownian_exponent():
    assert laplace_exponent(brownian(), [-1.0]) == pytest.approx(0.5)


def test_gamma_exponent():
    spec = LevySpec(1, jumps=(GammaSubordinator(1.0, 1.0, 0),))
    assert laplace_exponent(spec, [-1.0]).real == pytest.approx(-math.log(2), abs=1e-12)


def test_compound_poisson_exponent():
    spec = LevySpec(1, jumps=(CompoundPoisson(2.0, PointMass((1.0,))),))
    assert laplace_exponent(spec, [-1.0]).real == pytest.approx(2 * (math.exp(-1) - 1), abs=1e-12)


def test_exponential_and_stable_exponents():
    spec = LevySpec(1, jumps=(CompoundPoisson(1.5, ExponentialJump(0.5, 0, 1)),))
    # lambda (1 / (1 - mean u) - 1)
    assert laplace_exponent(spec, [-2.0]).real == pytest.approx(1.5 * (1 / 2.0 - 1))
    stable = LevySpec(1, jumps=(StableSpectrallyPositive(1.5, 2.0, 0),))
    assert laplace_exponent(stable, [-4.0]).real == pytest.approx(2.0 * 4.0 ** 1.5)


def test_exponent_vanishes_at_zero():
    specs = [brownian(2, 1.0, 1), drift(1.0, -2.0),
             LevySpec(2, jumps=(GammaSubordinator(1.0, 2.0, 1), CompoundPoisson(1.0, ExponentialJump(1.0, 0, 2)))),
             LevySpec(1, jumps=(StableSpectrallyPositive(1.3, 0.5, 0),))]
    for s in specs:
        assert laplace_exponent(s, np.zeros(s.dim)) == 0


def test_domain_error_names_the_component():
    spec = LevySpec(1, jumps=(GammaSubordinator(1.0, 1.0, 0),))
    with pytest.raises(DomainError) as e:
        laplace_exponent(spec, [1.0])
    assert e.value.component == "gamma_subordinator"
    with pytest.raises(DomainError):
        laplace_exponent(LevySpec(1, jumps=(StableSpectrallyPositive(1.5, 1.0, 0),)), [0.5])


# ---------------------------------------------------------------- validation


def test_non_psd_covariance_rejected():
    with pytest.raises(SpecError):
        LevySpec(2, gaussian_cov=[[1.0, 2.0], [2.0, 1.0]])


def test_component_invariants():
    with pytest.raises(SpecError):
        CompoundPoisson(-1.0, PointMass((1.0,)))
    with pytest.raises(SpecError):
        DiscreteJump(((1.0,), (2.0,)), (0.5, 0.6))
    with pytest.raises(SpecError):
        StableSpectrallyPositive(2.5, 1.0, 0)
    with pytest.raises(SpecError):
        DeterministicSpec(1, ((1.0, 1.0),))


def test_spec_dict_round_trip():
    spec = LevySpec(2, drift=[0.1, -0.2], gaussian_cov=[[1.0, 0.0], [0.0, 0.5]],
                    jumps=(GammaSubordinator(1.0, 2.0, 1), CompoundPoisson(1.0, ExponentialJump(0.5, 0, 2)),
                           CompoundPoisson(0.5, DiscreteJump(((1.0, 0.0), (0.0, 2.0)), (0.25, 0.75)))))
    assert LevySpec.from_dict(2, spec.to_dict()) == spec


# ---------------------------------------------------------------- hypothesis H


def test_hypothesis_H_brownian_feller_passes():
    assert check_hypothesis_H(AffineModel(1, 0, (brownian(),), LevySpec(1))) == []


def test_hypothesis_H_off_diagonal_brownian():
    x1 = brownian(2, 1.0, 1)
    bad = check_hypothesis_H(AffineModel(2, 0, (x1, LevySpec(2)), LevySpec(2)))
    assert bad == ["X^1,2 off-diagonal not a subordinator"]


def test_hypothesis_H_gaussian_cross_dependence():
    x1 = LevySpec(2, gaussian_cov=[[1.0, 0.5], [0.5, 1.0]])
    bad = check_hypothesis_H(AffineModel(1, 1, (x1,), LevySpec(2)))
    assert any("Gaussian cross-dependence coordinate 1 vs OU block" in b for b in bad)


def test_hypothesis_H_immigration_and_negative_jumps():
    y = brownian()
    x = LevySpec(1, jumps=(CompoundPoisson(1.0, PointMass((-0.5,))),))
    bad = check_hypothesis_H(AffineModel(1, 0, (x,), y))
    assert "immigration coordinate 1 is not a subordinator" in bad
    assert "X^1,1 has negative jumps" in bad
