import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from logwave.analysis import random_fourier_corpus
from logwave.fem1d import assemble, build_mesh
from logwave.lognonlin import (
    GridFunction,
    LambdaStarMismatch,
    depth_lower_bound,
    depth_upper_estimate,
    f_log,
    lambda_star,
    lambda_star_bisect,
    log_integral,
    log_lambda_star,
    log_potential,
    nehari_I1,
    potential_J1,
    well_status,
)

from oracles import conforming_midpoint


def _sine(m, c=1.0):
    mesh = build_mesh((0.0, 1.0), m)
    return GridFunction(mesh, c * np.sin(np.pi * mesh.interior)), assemble(mesh)


def direct_bisect(u, K, gamma, rtol=1e-13):
    """Root of lambda -> I1(lambda u) by plain bisection on lambda (no log scaling)."""
    lo, hi = 1.0, 1.0
    while nehari_I1(u.scaled(lo), K, gamma) <= 0:
        lo /= 2
    while nehari_I1(u.scaled(hi), K, gamma) >= 0:
        hi *= 2
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if nehari_I1(u.scaled(mid), K, gamma) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_f_log_examples():
    assert f_log(0.0, 0.5) == 0.0
    assert f_log(1.0, 0.5) == 0.0
    assert f_log(-1.0, 0.5) == 0.0
    assert f_log(math.e, 0.3) == pytest.approx(0.3 * math.e)


@settings(max_examples=300)
@given(u=st.floats(-1e6, 1e6), gamma=st.floats(0.01, 0.99))
def test_f_log_is_odd(u, gamma):
    assert f_log(-u, gamma) == -f_log(u, gamma)


@settings(max_examples=200)
@given(
    u=st.floats(1e-3, 50.0) | st.floats(-50.0, -1e-3),
    gamma=st.floats(0.01, 0.99),
)
def test_log_potential_is_antiderivative(u, gamma):
    h = 1e-6 * abs(u)
    fd = (log_potential(u + h, gamma) - log_potential(u - h, gamma)) / (2 * h)
    exact = f_log(u, gamma)
    assert abs(fd - exact) <= 1e-6 * max(abs(exact), abs(gamma * u))


def test_log_integral_zero():
    u, _ = _sine(10, 0.0)
    assert log_integral(u, 0.5) == 0.0


def test_log_integral_plateau_converges_to_gamma_e_squared():
    gamma = 0.5
    errors = []
    for m in (50, 200, 800):
        mesh = build_mesh((0.0, 1.0), m)
        u = GridFunction(mesh, np.full(m, math.e))
        val = log_integral(u, gamma)
        full = mesh.full(u.coeffs)

        def integrand(x):
            w = np.interp(x, mesh.nodes, full)
            return gamma * np.where(w > 0, w**2 * np.log(np.where(w > 0, w, 1.0)), 0.0)

        oracle = conforming_midpoint(integrand, mesh.nodes, cells_per_piece=200)
        assert val == pytest.approx(oracle, rel=1e-6)
        errors.append(abs(val - gamma * math.e**2))
    assert errors[0] > errors[1] > errors[2]
    assert errors[2] < 0.02


def test_log_integral_sine_matches_adaptive_quadrature():
    u, _ = _sine(2000)
    oracle, _ = quad(lambda x: math.sin(math.pi * x) ** 2 * math.log(math.sin(math.pi * x)), 0, 1, limit=200)
    assert log_integral(u, 1.0) == pytest.approx(oracle, abs=1e-5)


def test_nehari_examples():
    u, sys = _sine(200, 0.0)
    assert nehari_I1(u, sys.stiffness, 0.5) == 0.0
    small, sys = _sine(200, 1e-3)
    assert nehari_I1(small, sys.stiffness, 0.5) > 0
    base, _ = _sine(200)
    lam = lambda_star(base, sys.stiffness, sys.mass, 0.5)
    assert nehari_I1(base.scaled(2.0 * lam), sys.stiffness, 0.5) < 0


def test_J1_identity(rng):
    mesh = build_mesh((0, 1), 60)
    sys = assemble(mesh)
    gamma = 0.37
    for _ in range(20):
        u = GridFunction(mesh, rng.normal(scale=rng.uniform(0.01, 10), size=mesh.m))
        lhs = potential_J1(u, sys.stiffness, sys.mass, gamma)
        rhs = 0.5 * nehari_I1(u, sys.stiffness, gamma) + 0.25 * gamma * u.coeffs @ sys.mass @ u.coeffs
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


def test_lambda_star_maximizes_fibering_map():
    u, sys = _sine(100, 1e-6)
    gamma = 0.5
    lam = lambda_star(u, sys.stiffness, sys.mass, gamma)
    peak = potential_J1(u.scaled(lam), sys.stiffness, sys.mass, gamma)
    for f in np.geomspace(0.01, 100, 41):
        assert potential_J1(u.scaled(lam * f), sys.stiffness, sys.mass, gamma) <= peak * (1 + 1e-12)


def test_lambda_star_is_one_on_nehari_set():
    v, sys = _sine(100)
    gamma = 0.5
    u = v.scaled(lambda_star(v, sys.stiffness, sys.mass, gamma))
    assert lambda_star(u, sys.stiffness, sys.mass, gamma) == pytest.approx(1.0, rel=1e-9)


def test_lambda_star_scaling_law():
    v, sys = _sine(100)
    gamma = 0.5
    lam = lambda_star(v, sys.stiffness, sys.mass, gamma)
    for c in (0.01, 3.0, 1e4):
        assert lambda_star(v.scaled(c), sys.stiffness, sys.mass, gamma) == pytest.approx(lam / c, rel=1e-9)


def test_lambda_star_matches_bisection_oracle():
    u, sys = _sine(200)
    gamma = 0.5
    lam = lambda_star(u, sys.stiffness, sys.mass, gamma)
    assert lam == pytest.approx(direct_bisect(u, sys.stiffness, gamma), rel=1e-9)
    # residual bound from the contract
    i1 = nehari_I1(u.scaled(lam), sys.stiffness, gamma)
    scale = lam**2 * (abs(nehari_I1(u, sys.stiffness, gamma)) + gamma * u.coeffs @ sys.mass @ u.coeffs)
    assert abs(i1) <= 1e-9 * scale


def test_lambda_star_needs_gradient():
    u, sys = _sine(20, 0.0)
    with pytest.raises(ValueError):
        lambda_star(u, sys.stiffness, sys.mass, 0.5)


def test_lambda_star_cross_check_trips(monkeypatch):
    u, sys = _sine(50)
    import logwave.lognonlin as ln

    monkeypatch.setattr(ln, "lambda_star_bisect", lambda *a, **k: log_lambda_star(u, sys.stiffness, sys.mass, 0.5) + 1e-3)
    with pytest.raises(LambdaStarMismatch):
        ln.lambda_star(u, sys.stiffness, sys.mass, 0.5)


def test_log_bisection_agrees_with_closed_form():
    u, sys = _sine(80, 0.3)
    s = log_lambda_star(u, sys.stiffness, sys.mass, 0.5)
    assert lambda_star_bisect(u, sys.stiffness, 0.5) == pytest.approx(s, rel=1e-12)


def test_sign_pattern_on_random_functions():
    mesh = build_mesh((0, 1), 100)
    sys = assemble(mesh)
    gamma = 0.5
    for u in random_fourier_corpus(mesh, 20, seed=7, max_modes=3):
        lam = lambda_star(u, sys.stiffness, sys.mass, gamma)
        for f in np.geomspace(1e-3, 1e3, 25):
            if abs(f - 1) < 1e-9:
                continue
            val = nehari_I1(u.scaled(lam * f), sys.stiffness, gamma)
            assert (val > 0) if f < 1 else (val < 0)


def test_depth_lower_bound():
    # (e/4) sqrt(2 pi / 0.5) = (e/4) sqrt(4 pi)
    assert depth_lower_bound(0.5) == pytest.approx(2.40901454734936, rel=1e-12)
    assert depth_lower_bound(0.5) == pytest.approx(2.4090, abs=5e-5)
    with pytest.raises(ValueError):
        depth_lower_bound(1.0)


def test_nehari_functions_sit_above_depth_bound():
    mesh = build_mesh((0, 1), 100)
    sys = assemble(mesh)
    gamma = 0.5
    for v in random_fourier_corpus(mesh, 10, seed=3, max_modes=3):
        u = v.scaled(lambda_star(v, sys.stiffness, sys.mass, gamma))
        j1 = potential_J1(u, sys.stiffness, sys.mass, gamma)
        assert j1 >= depth_lower_bound(gamma) - 1e-6 * j1


def test_depth_upper_estimate_is_above_lower_bound():
    mesh = build_mesh((0, 1), 100)
    sys = assemble(mesh)
    cands = random_fourier_corpus(mesh, 5, seed=11, max_modes=2)
    assert depth_upper_estimate(cands, sys.stiffness, sys.mass, 0.5) >= depth_lower_bound(0.5)


def test_well_status():
    u, sys = _sine(100, 0.1)
    ws = well_status(u, sys.stiffness, sys.mass, 0.5)
    assert ws.in_well and ws.I1 > 0 and ws.J1 < ws.d_bound
    zero, _ = _sine(100, 0.0)
    assert well_status(zero, sys.stiffness, sys.mass, 0.5).in_well
    big = u.scaled(1e9)
    assert not well_status(big, sys.stiffness, sys.mass, 0.5).in_well


def test_grid_function_exact_norms():
    mesh = build_mesh((0, 1), 9)
    sys = assemble(mesh)
    u = GridFunction(mesh, np.arange(1.0, 10.0))
    assert u.l2_sq() == pytest.approx(u.coeffs @ sys.mass @ u.coeffs, rel=1e-14)
    assert u.grad_sq() == pytest.approx(u.coeffs @ sys.stiffness @ u.coeffs, rel=1e-14)
    with pytest.raises(ValueError):
        GridFunction(mesh, np.ones(3))
