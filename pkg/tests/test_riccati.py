import math

import numpy as np
import pytest

from affine_tc.levy import CompoundPoisson, DeterministicSpec, DomainError, ExponentialJump, GammaSubordinator, LevySpec
from affine_tc.riccati import (analytic_laplace, build_exponents, check_semiflow, laplace_oracle, solve_riccati)
from affine_tc.solver import AffineModel
from affine_tc.streams import TESTING, stream

from conftest import brownian, drift, feller


def ou(b=1.0):
    return AffineModel(0, 1, (), brownian(), beta=[[b]], z0=[0.5])


# ---------------------------------------------------------------- exponents


def test_brownian_branching_exponent():
    sys = build_exponents(feller())
    for u in (-1.0, -0.3 + 0.2j, 0.7j):
        assert sys.R([u])[0] == pytest.approx(u * u / 2)
        assert sys.F([u]) == 0


def test_drift_immigration_exponent():
    sys = build_exponents(AffineModel(1, 0, (LevySpec(1),), drift(1.0)))
    assert sys.F([-0.4 + 1j]) == pytest.approx(-0.4 + 1j)


def test_ou_rows_linear():
    beta = np.array([[0.5, -1.0], [2.0, 0.3]])
    model = AffineModel(1, 2, (brownian(3),), LevySpec(3), beta=beta)
    sys = build_exponents(model)
    rng = stream(2, TESTING)
    for _ in range(20):
        u = rng.normal(size=3) + 1j * rng.normal(size=3)
        v = rng.normal(size=3) + 1j * rng.normal(size=3)
        a = complex(rng.normal(), rng.normal())
        assert np.allclose(sys.R(u + v)[1:], sys.R(u)[1:] + sys.R(v)[1:])
        assert np.allclose(sys.R(a * u)[1:], a * sys.R(u)[1:])
        assert np.allclose(sys.R(u)[1:], beta @ u[1:])


def test_exponents_vanish_at_zero():
    x = LevySpec(2, drift=[-0.5, 0.5], jumps=(GammaSubordinator(1.0, 2.0, 0),))
    y = LevySpec(2, drift=[0.5, 0.0], jumps=(CompoundPoisson(1.0, ExponentialJump(0.5, 0, 2)),))
    sys = build_exponents(AffineModel(1, 1, (x,), y, beta=[[-1.0]]))
    assert sys.F(np.zeros(2)) == 0 and not sys.R(np.zeros(2)).any()


def test_deterministic_drivers_have_no_exponents():
    model = AffineModel(1, 0, (DeterministicSpec(1, ((0.0, 1.0),)),), LevySpec(1))
    with pytest.raises(ValueError):
        build_exponents(model)


def test_domain_error_propagates():
    model = AffineModel(1, 0, (LevySpec(1, jumps=(GammaSubordinator(1.0, 1.0, 0),)),), LevySpec(1))
    with pytest.raises(DomainError):
        solve_riccati(build_exponents(model), [2.0], 1.0)


# ---------------------------------------------------------------- ODE solutions


def test_feller_closed_form():
    sol = solve_riccati(build_exponents(feller()), [-1.0], 1.0)
    assert sol.psi[-1, 0] == pytest.approx(-2 / 3, abs=1e-10)
    assert sol.psi[0, 0] == -1 and sol.phi[0] == 0


def test_cir_phi_closed_form():
    sol = solve_riccati(build_exponents(feller(immigration=1.0)), [-1.0], 1.0)
    assert sol.phi[-1].real == pytest.approx(-2 * math.log(1.5), abs=1e-10)
    assert analytic_laplace(sol, [1.0])[-1].real == pytest.approx(math.exp(-2 / 3 - 2 * math.log(1.5)), abs=1e-10)


def test_ou_psi_closed_form():
    sol = solve_riccati(build_exponents(ou()), [-1.0], 1.0)
    assert sol.psi[-1, 0] == pytest.approx(-math.e, abs=1e-9)
    # Gaussian transform: psi = e^{bt} u, phi = u^2 (e^{2bt} - 1) / (4b)
    u, z = -0.25, 0.5
    sol = solve_riccati(build_exponents(ou()), [u], 1.0)
    want = math.exp(z * math.e * u + u * u * (math.e ** 2 - 1) / 4)
    assert analytic_laplace(sol, [z])[-1].real == pytest.approx(want, rel=1e-10)


def test_branching_block_stays_nonpositive():
    x = LevySpec(2, drift=[0.8, 0.3], gaussian_cov=[[1.0, 0.0], [0.0, 0.0]],
                 jumps=(CompoundPoisson(2.0, ExponentialJump(0.5, 0, 2)),))
    x2 = LevySpec(2, drift=[0.2, -1.0], gaussian_cov=[[0.0, 0.0], [0.0, 2.0]])
    sys = build_exponents(AffineModel(2, 0, (x, x2), LevySpec(2)))
    sol = solve_riccati(sys, [-0.5, -2.0], 3.0)
    assert not sol.escaped
    assert sol.invariance_violations(2) == []


def test_tolerance_self_consistency():
    sys = build_exponents(feller(immigration=1.0))
    tol = 1e-8
    a = solve_riccati(sys, [-1.0], 2.0, tol)
    b = solve_riccati(sys, [-1.0], 2.0, tol / 10)
    assert abs(a.psi[-1, 0] - b.psi[-1, 0]) < 5 * tol
    assert abs(a.phi[-1] - b.phi[-1]) < 5 * tol


def test_pure_drift_phi_is_linear_in_time():
    sys = build_exponents(AffineModel(1, 0, (LevySpec(1),), drift(1.5)))
    sol = solve_riccati(sys, [-0.4], 2.0)
    assert np.array_equal(sol.phi, sol.grid * (1.5 * -0.4)) or np.allclose(sol.phi, sol.grid * -0.6, rtol=0, atol=1e-15)


def test_escape_reported_as_data():
    # psi' = psi^2 / 2 from psi = 1 blows up at t = 2
    sol = solve_riccati(build_exponents(feller()), [1.0], 3.0)
    assert sol.escaped and 1.99 < sol.escape_time < 2.0
    assert laplace_oracle(build_exponents(feller()), [1.0], [1.0], 3.0) is None


def test_domain_escape_reported():
    # psi' = -log(1 - psi) grows to the gamma domain boundary psi = 1
    model = AffineModel(1, 0, (LevySpec(1, jumps=(GammaSubordinator(1.0, 1.0, 0),)),), LevySpec(1))
    sol = solve_riccati(build_exponents(model), [0.5], 5.0)
    assert sol.escaped and "domain" in sol.escape_reason


def test_analytic_laplace_special_cases():
    sys = build_exponents(feller(immigration=1.0))
    sol = solve_riccati(sys, [-1.0], 1.0)
    assert analytic_laplace(sol, [2.0])[0] == pytest.approx(math.exp(-2.0))
    assert np.allclose(analytic_laplace(sol, [0.0]), np.exp(sol.phi))
    assert analytic_laplace(solve_riccati(build_exponents(feller()), [-1.0], 1.0), [1.0])[-1].real == pytest.approx(
        0.513417, abs=1e-6)


def test_csv_header():
    sol = solve_riccati(build_exponents(feller()), [-1.0], 1.0)
    lines = sol.to_csv().splitlines()
    assert lines[0] == "t,Re psi_1,Im psi_1,Re phi,Im phi"
    assert lines[1] == "0,-1,0,0,0"


# ---------------------------------------------------------------- semiflow


def test_semiflow_identity_at_zero():
    rep = check_semiflow(build_exponents(feller(immigration=1.0)), [-1.0], 0.0, 0.7)
    assert rep.passed and rep.psi_residual < 1e-12


def test_semiflow_feller_halves():
    sys = build_exponents(feller())
    first = solve_riccati(sys, [-1.0], 0.5, 1e-11)
    second = solve_riccati(sys, first.psi[-1], 0.5, 1e-11)
    assert second.psi[-1, 0] == pytest.approx(-2 / 3, abs=1e-8)
    assert check_semiflow(sys, [-1.0], 0.5, 0.5).passed


def test_semiflow_ou():
    rep = check_semiflow(build_exponents(ou()), [-1.0 + 0.5j], 0.3, 0.6)
    assert rep.passed and rep.psi_residual < 1e-10


def test_oracle_withheld_below_the_floor():
    sys = build_exponents(AffineModel(1, 0, (LevySpec(1),), drift(1.0)))
    # E exp(u Z_1) = exp(u (z + 1)); u = -30 from z = 0 gives e^{-30} ~ 9e-14
    assert laplace_oracle(sys, [-30.0], [0.0], 1.0) is None
    assert laplace_oracle(sys, [-20.0], [0.0], 1.0) == pytest.approx(math.exp(-20.0), rel=1e-9)
