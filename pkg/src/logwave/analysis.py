"""Energy functionals along trajectories, functional inequalities, and decay rates."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize_scalar

from .fem1d import Mesh1D
from .geometry import MovingDomainFamily
from .lognonlin import (
    ElementQuadrature,
    GridFunction,
    depth_lower_bound,
    log_integral,
    u2_log_abs,
)

logger = logging.getLogger(__name__)

__all__ = [
    "EnergyReport",
    "DecayFit",
    "NakaoResult",
    "FitError",
    "FormulaMismatch",
    "energy_report",
    "log_sobolev_slack",
    "log_gronwall_bound",
    "gronwall_self_consistency",
    "nakao_constants",
    "contraction_factor",
    "optimal_delta",
    "optimal_delta_numeric",
    "nakao_difference_check",
    "unit_spaced",
    "fit_decay",
    "fit_series",
    "dissipation_violations",
    "TestFunction",
    "weak_residual",
    "random_fourier_corpus",
    "space_time_l2_difference",
]


class FitError(ValueError):
    """Decay fit requested on a window containing non-positive energy."""


class FormulaMismatch(RuntimeError):
    pass


@dataclass(frozen=True)
class EnergyReport:
    t: float
    kinetic: float
    dirichlet: float
    mass: float
    log_term: float
    gamma_term: float
    penalty: float
    E: float
    E_pen: float
    E_plus: float
    I1: float
    J1: float
    in_well: bool
    chi_l2sq: float = 0.0


def energy_report(
    g: np.ndarray,
    v: np.ndarray,
    t: float,
    sys,
    m_chi: np.ndarray,
    b: float,
    gamma: float,
    epsilon: float,
) -> EnergyReport:
    """All energy pieces of the state ``(g, v)`` at time t.

    ``sys`` is an :class:`~logwave.fem1d.AssembledSystem`; ``m_chi`` the
    penalty mass matrix at the same time.
    """
    M, K = sys.mass, sys.stiffness
    u_l2 = float(g @ M @ g)
    grad = float(g @ K @ g)
    chi = float(g @ m_chi @ g)
    logint = log_integral(GridFunction(sys.mesh, g), gamma)
    kinetic = 0.5 * float(v @ M @ v)
    dirichlet = 0.5 * grad
    mass = 0.5 * b * u_l2
    log_term = 0.5 * logint
    gamma_term = 0.25 * gamma * u_l2
    penalty = chi / (2.0 * epsilon)
    E = kinetic + dirichlet + mass - log_term + gamma_term
    E_pen = E + penalty
    I1 = grad - logint
    J1 = 0.5 * grad - 0.5 * logint + gamma_term
    zero = not np.any(g)
    in_well = bool(zero or (J1 < depth_lower_bound(gamma) and I1 > 0))
    return EnergyReport(
        t, kinetic, dirichlet, mass, log_term, gamma_term, penalty, E, E_pen, E_pen + log_term, I1, J1, in_well, chi
    )


# --------------------------------------------------------------------------
# inequalities from the toolbox


def log_sobolev_slack(u: GridFunction, a_param: float) -> float:
    """``RHS - LHS`` of the 1D logarithmic Sobolev inequality for u.

    ``2 int u^2 ln(|u|/||u||) + (1 + ln a) ||u||^2 <= (a^2/pi) ||u'||^2``.
    """
    if a_param <= 0:
        raise ValueError("a_param must be positive")
    if u.is_zero():
        raise ValueError("log-Sobolev slack is undefined for u = 0")
    norm_sq = u.l2_sq()
    norm = math.sqrt(norm_sq)
    vals = u.at_quadrature() / norm
    # u^2 ln(|u|/||u||) = ||u||^2 * (w^2 ln|w|) with w = u/||u||
    lhs = 2.0 * norm_sq * u.quadrature.integrate(u2_log_abs(vals)) + (1.0 + math.log(a_param)) * norm_sq
    rhs = a_param**2 / math.pi * u.grad_sq()
    return rhs - lhs


def log_gronwall_bound(w0: float, a: float, t: float) -> float:
    """``(a + w0)^(exp(a t))``."""
    if w0 < 0 or a < 1 or t < 0:
        raise ValueError("need w0 >= 0, a >= 1, t >= 0")
    return (a + w0) ** math.exp(a * t)


def gronwall_self_consistency(w0: float, a: float, T: float = 1.0, n: int = 101) -> tuple[bool, float]:
    """Integrate ``w' = a w ln(a + w)`` and compare against the Gronwall bound.

    The ODE solution saturates the integral hypothesis with equality. Returns
    ``(ok, min_ratio_slack)`` where the slack is ``bound - w`` relative to the bound.
    """
    ts = np.linspace(0.0, T, n)
    sol = solve_ivp(lambda t, w: a * w * np.log(a + w), (0.0, T), [w0], t_eval=ts, rtol=1e-10, atol=1e-12)
    if not sol.success:
        raise RuntimeError(sol.message)
    bounds = np.array([log_gronwall_bound(w0, a, t) for t in ts])
    slack = (bounds - sol.y[0]) / bounds
    return bool(np.all(slack >= -1e-9)), float(slack.min())


# --------------------------------------------------------------------------
# explicit decay constants


def nakao_constants(delta: float, gamma: float) -> tuple[float, float, float]:
    """``(d2, d3, beta)`` with ``d2 = 8 delta``, ``d3 = 2/delta + 3 + 2/(2-gamma)``.

    ``beta = ln((d3 + 1)/(d3 + d2))`` is the guaranteed exponential rate.
    """
    if not 0 < delta < 0.125:
        raise ValueError(f"delta must lie in (0, 1/8), got {delta}")
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    d2 = 8.0 * delta
    d3 = 2.0 / delta + 3.0 + 2.0 / (2.0 - gamma)
    return d2, d3, math.log((d3 + 1.0) / (d3 + d2))


def contraction_factor(delta: float, gamma: float) -> float:
    d2, d3, _ = nakao_constants(delta, gamma)
    return (d3 + d2) / (d3 + 1.0)


def optimal_delta_numeric(gamma: float, tol: float = 1e-12) -> float:
    """Golden-section minimizer of the contraction factor over (0, 1/8)."""
    lo, hi = 1e-6, 0.125 - 1e-9
    res = minimize_scalar(
        lambda d: contraction_factor(d, gamma), bracket=(lo, 0.05, hi), method="golden", tol=tol
    )
    return float(res.x)


def optimal_delta(gamma: float, tol: float = 1e-4) -> float:
    """Closed-form minimizer ``(16 - sqrt(256 + 4A)) / (-2A)``, ``A = 4(4 + 2/(2-gamma))``.

    The value is checked against :func:`optimal_delta_numeric`. If it falls
    outside (0, 1/8) the numeric minimizer is returned instead (with a
    logged error); a disagreement larger than ``tol`` raises
    :class:`FormulaMismatch`.
    """
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    A = 4.0 * (4.0 + 2.0 / (2.0 - gamma))
    delta = (16.0 - math.sqrt(16.0**2 + 4.0 * A)) / (-2.0 * A)
    numeric = optimal_delta_numeric(gamma)
    if not 0 < delta < 0.125:
        logger.error("optimal-delta formula gives %r outside (0, 1/8); using numeric minimizer", delta)
        return numeric
    if abs(delta - numeric) > tol:
        raise FormulaMismatch(f"optimal delta formula {delta!r} vs numeric minimizer {numeric!r}")
    return delta


@dataclass(frozen=True)
class NakaoResult:
    ok: bool
    factor: float
    violations: list[tuple[int, float]] = field(default_factory=list)
    envelope: np.ndarray | None = None

    def __bool__(self) -> bool:
        return self.ok


def nakao_difference_check(series: Sequence[float], d2: float, d3: float, rtol: float = 1e-12) -> NakaoResult:
    """Check ``phi(k+1) - d2 phi(k) <= d3 (phi(k) - phi(k+1))`` for consecutive samples.

    Violations are returned as ``(k, excess)`` pairs. The envelope
    ``phi(0) * factor**k`` is attached when the inequality holds throughout.
    ``rtol`` absorbs rounding relative to ``phi(k)``.
    """
    phi = np.asarray(series, dtype=float)
    if np.any(phi < 0):
        raise ValueError("series must be non-negative")
    factor = (d3 + d2) / (d3 + 1.0)
    violations = []
    for k in range(len(phi) - 1):
        lhs = phi[k + 1] - d2 * phi[k]
        rhs = d3 * (phi[k] - phi[k + 1])
        if lhs - rhs > rtol * phi[k]:
            violations.append((k, float(lhs - rhs)))
    ok = not violations
    env = phi[0] * factor ** np.arange(len(phi)) if ok and len(phi) else None
    return NakaoResult(ok, factor, violations, env)


def unit_spaced(times: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Samples at t = 0, 1, 2, ... (linear interpolation if off-grid)."""
    times = np.asarray(times, dtype=float)
    n = int(math.floor(times[-1] + 1e-9))
    return np.interp(np.arange(n + 1, dtype=float), times, np.asarray(values, dtype=float))


# --------------------------------------------------------------------------
# decay fit


@dataclass(frozen=True)
class DecayFit:
    window: tuple[float, float]
    beta_hat: float
    r2: float
    beta_paper: float
    delta_used: float
    envelope_ok: bool
    below_guarantee: bool


def fit_series(
    t: np.ndarray, E: np.ndarray, gamma: float, window_fraction: float = 0.5, fit_tol: float = 0.05
) -> DecayFit:
    """Least-squares fit of ``ln E`` on the trailing ``window_fraction`` of the series."""
    t = np.asarray(t, dtype=float)
    E = np.asarray(E, dtype=float)
    if not 0 < window_fraction <= 1:
        raise ValueError("window_fraction must lie in (0, 1]")
    t_start = t[-1] - window_fraction * (t[-1] - t[0])
    sel = t >= t_start - 1e-12
    tw, Ew = t[sel], E[sel]
    if tw.size < 2:
        raise FitError("fewer than two samples in the fit window")
    if np.any(Ew <= 0) or not np.all(np.isfinite(Ew)):
        raise FitError("energy must be positive and finite throughout the fit window")
    y = np.log(Ew)
    slope, intercept = np.polyfit(tw, y, 1)
    resid = y - (slope * tw + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    r2 = min(max(r2, 0.0), 1.0)
    beta_hat = -float(slope)
    delta = optimal_delta(gamma)
    beta_paper = nakao_constants(delta, gamma)[2]
    if E[0] <= 0:
        envelope_ok = False
    else:
        envelope_ok = bool(np.all(Ew <= E[0] * np.exp(-beta_hat * (tw - t[0])) * (1.0 + fit_tol)))
    return DecayFit((float(tw[0]), float(tw[-1])), beta_hat, r2, beta_paper, delta, envelope_ok, beta_hat < beta_paper)


def fit_decay(traj, window_fraction: float = 0.5, fit_tol: float = 0.05, series: str = "E") -> DecayFit:
    """Decay fit of a :class:`~logwave.integrator.Trajectory` energy series."""
    return fit_series(traj.times, traj.series(series), traj.config.gamma, window_fraction, fit_tol)


def dissipation_violations(traj, rtol: float = 1e-8) -> np.ndarray:
    """Per-step excess of ``E_pen(k+1) + a dt ||v_mid||^2 - E_pen(k)`` over ``rtol (1 + |E_pen(k)|)``.

    Non-positive entries mean the discrete dissipation inequality holds.
    """
    E = traj.series("E_pen")
    return E[1:] + traj.dissipation - E[:-1] - rtol * (1.0 + np.abs(E[:-1]))


# --------------------------------------------------------------------------
# weak-form residual


@dataclass(frozen=True)
class TestFunction:
    """Space-time test function with its partial derivatives (all vectorized in x)."""

    __test__ = False  # keep pytest from collecting this

    phi: Callable[[np.ndarray, float], np.ndarray]
    phi_t: Callable[[np.ndarray, float], np.ndarray]
    phi_x: Callable[[np.ndarray, float], np.ndarray]


def _check_support(tf: TestFunction, fam: MovingDomainFamily, times: np.ndarray, atol: float = 1e-12) -> None:
    lo, hi = fam.ambient
    xs = np.linspace(lo, hi, 2001)
    for t in (times[0], times[-1]):
        if np.max(np.abs(tf.phi(xs, t))) > atol:
            raise ValueError(f"test function does not vanish at t={t}")
    nonzero = False
    for t in times:
        left, right = fam.bounds(t)
        out = (xs <= left) | (xs >= right)
        vals = tf.phi(xs, t)
        if np.max(np.abs(vals[out]), initial=0.0) > atol:
            raise ValueError(f"test function is not supported inside Omega_t at t={t}")
        nonzero = nonzero or np.max(np.abs(vals)) > atol
    if not nonzero:
        raise ValueError("test function vanishes identically inside every Omega_t")


def weak_residual(traj, test_bundle: Sequence[TestFunction]) -> float:
    """Max over the bundle of the weak-form defect of a recorded trajectory.

    Space integrals use per-element Gauss-Legendre; time integrals the
    trapezoid rule over the stored snapshots.
    """
    cfg = traj.config
    fam = traj.family
    mesh = traj.mesh
    quad = ElementQuadrature(mesh)
    times = traj.times
    hs = np.diff(mesh.nodes)[:, None]
    for tf in test_bundle:
        _check_support(tf, fam, times)
    worst = 0.0
    for tf in test_bundle:
        per_t = np.empty(times.size)
        for k, t in enumerate(times):
            g, v = traj.g[k], traj.v[k]
            u = quad.values(g)
            ut = quad.values(v)
            full = mesh.full(g)
            ux = (np.diff(full)[:, None] / hs) * np.ones_like(u)
            x = quad.points.ravel()
            ph = tf.phi(x, t).reshape(u.shape)
            ph_t = tf.phi_t(x, t).reshape(u.shape)
            ph_x = tf.phi_x(x, t).reshape(u.shape)
            src = cfg.gamma * _u_log_abs(u) if cfg.nonlinear else 0.0
            integrand = -ut * ph_t + ux * ph_x + (cfg.a * ut + cfg.b * u) * ph - src * ph
            per_t[k] = quad.integrate(integrand)
        worst = max(worst, abs(float(np.trapezoid(per_t, times))))
    return worst


def _u_log_abs(u: np.ndarray) -> np.ndarray:
    au = np.abs(u)
    return np.where(au > 0, u * np.log(np.where(au > 0, au, 1.0)), 0.0)


# --------------------------------------------------------------------------
# corpora and comparisons


def random_fourier_corpus(
    mesh: Mesh1D, n: int, seed: int, max_modes: int = 8, amp_range: tuple[float, float] = (0.01, 10.0)
) -> list[GridFunction]:
    """Seeded random sine sums interpolated on the interior nodes.

    Each function has between 1 and ``max_modes`` modes ``sin(k pi (x - x_lo)/L)``
    with distinct k in 1..max_modes, random signs, and amplitudes drawn
    log-uniformly from ``amp_range``.
    """
    rng = np.random.default_rng(seed)
    lo, hi = mesh.ambient
    xi = (mesh.interior - lo) / (hi - lo)
    out = []
    for _ in range(n):
        nmodes = int(rng.integers(1, max_modes + 1))
        ks = rng.choice(np.arange(1, max_modes + 1), size=nmodes, replace=False)
        amps = np.exp(rng.uniform(math.log(amp_range[0]), math.log(amp_range[1]), size=nmodes))
        signs = rng.choice([-1.0, 1.0], size=nmodes)
        coeffs = sum(s * A * np.sin(k * math.pi * xi) for k, A, s in zip(ks, amps, signs))
        out.append(GridFunction(mesh, coeffs))
    return out


def space_time_l2_difference(traj_a, traj_b, n_x: int = 4001) -> float:
    """``||u_a - u_b||`` in ``L2(0,T; L2)`` for trajectories on a shared time grid."""
    if traj_a.times.shape != traj_b.times.shape or not np.allclose(traj_a.times, traj_b.times):
        raise ValueError("trajectories must share the time grid")
    lo, hi = traj_a.mesh.ambient
    xs = np.linspace(lo, hi, n_x)
    per_t = np.empty(traj_a.times.size)
    for k in range(per_t.size):
        ua = np.interp(xs, traj_a.mesh.nodes, traj_a.mesh.full(traj_a.g[k]))
        ub = np.interp(xs, traj_b.mesh.nodes, traj_b.mesh.full(traj_b.g[k]))
        per_t[k] = np.trapezoid((ua - ub) ** 2, xs)
    return math.sqrt(float(np.trapezoid(per_t, traj_a.times)))
