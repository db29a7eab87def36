"""Time stepping for the penalized Galerkin system.

The semi-discrete system is

    M g'' + a M g' + (K + b M + M_chi(t)/eps) g = N(g),

with ``N(g)_j = integral f_log(u) w_j dx``. Each step is implicit midpoint on
the linear part with the penalty matrix frozen at the midpoint time. The
logarithmic load is the average of ``f_log`` along the step at every
quadrature point (a discrete gradient of the log potential), which makes the
discrete energy balance exact up to the Picard tolerance. The nonlinear
system is solved by Picard iteration with one banded Cholesky factorization
per step.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .analysis import EnergyReport, energy_report
from .fem1d import AssembledSystem, BandedCholesky, Mesh1D, assemble, assemble_penalty, build_mesh, project_initial
from .geometry import MovingDomainFamily, family_from_descriptor, verify_monotone
from .lognonlin import ElementQuadrature, depth_lower_bound, f_log, log_potential

logger = logging.getLogger(__name__)

__all__ = [
    "SimConfig",
    "SimState",
    "Trajectory",
    "StepError",
    "DivergenceError",
    "make_profile",
    "default_dt",
    "step",
    "simulate",
]


class StepError(RuntimeError):
    """Picard iteration failed to converge within the allotted iterations."""

    def __init__(self, msg: str, residual: float, t: float | None = None, trajectory=None):
        super().__init__(msg)
        self.residual = residual
        self.t = t
        self.trajectory = trajectory


class DivergenceError(RuntimeError):
    """A non-finite coefficient appeared; ``trajectory`` holds the last finite snapshots."""

    def __init__(self, msg: str, t: float | None = None, trajectory=None):
        super().__init__(msg)
        self.t = t
        self.trajectory = trajectory


PROFILE_KINDS = ("zero", "sine", "constant", "gaussian")


def make_profile(desc: dict) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorized initial profile from a small descriptor dict.

    ``zero``; ``sine`` (amplitude, period, origin): ``A sin(2 pi (x - origin)/period)``;
    ``constant`` (amplitude); ``gaussian`` (amplitude, center, width).
    """
    kind = desc.get("kind", "zero")
    A = float(desc.get("amplitude", 0.0))
    if kind == "zero":
        return lambda x: np.zeros_like(np.asarray(x, dtype=float))
    if kind == "sine":
        period = float(desc["period"])
        origin = float(desc.get("origin", 0.0))
        return lambda x: A * np.sin(2.0 * math.pi * (np.asarray(x, dtype=float) - origin) / period)
    if kind == "constant":
        return lambda x: np.full_like(np.asarray(x, dtype=float), A)
    if kind == "gaussian":
        c = float(desc["center"])
        w = float(desc["width"])
        return lambda x: A * np.exp(-(((np.asarray(x, dtype=float) - c) / w) ** 2))
    raise ValueError(f"unknown initial profile kind {kind!r}; expected one of {PROFILE_KINDS}")


@dataclass(frozen=True)
class SimConfig:
    gamma: float
    domain: dict
    u0: dict
    u1: dict = field(default_factory=lambda: {"kind": "zero"})
    a: float = 1.0
    b: float = 1.0
    epsilon: float = 1e-3
    m: int = 100
    dt: float | None = None
    T: float = 20.0
    picard_iters: int = 8
    picard_tol: float = 1e-10
    projection: str = "interp"
    nonlinear: bool = True

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma must satisfy 0 < gamma < 1, got {self.gamma}")
        for name in ("a", "b", "epsilon", "T", "picard_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.m < 1:
            raise ValueError(f"m must be at least 1, got {self.m}")
        if self.picard_iters < 1:
            raise ValueError("picard_iters must be at least 1")
        if self.dt is not None and not 0 < self.dt <= self.T:
            raise ValueError(f"dt must satisfy 0 < dt <= T, got {self.dt}")
        if self.projection not in ("interp", "l2"):
            raise ValueError("projection must be 'interp' or 'l2'")

    @property
    def ambient(self) -> tuple[float, float]:
        return float(self.domain["x_lo"]), float(self.domain["x_hi"])

    def family(self) -> MovingDomainFamily:
        return family_from_descriptor(self.domain, self.T)

    def time_grid(self) -> tuple[float, int]:
        """``(dt, n_steps)`` with ``n_steps * dt == T``; dt never exceeds the requested value."""
        h = (self.ambient[1] - self.ambient[0]) / (self.m + 1)
        target = self.dt if self.dt is not None else default_dt(h, self.T)
        n = max(1, math.ceil(self.T / target - 1e-9))
        return self.T / n, n


def default_dt(h: float, T: float) -> float:
    return min(h / 2.0, T / 2000.0)


@dataclass(frozen=True)
class SimState:
    t: float
    g: np.ndarray
    v: np.ndarray


@dataclass(eq=False)
class Trajectory:
    config: SimConfig
    mesh: Mesh1D
    family: MovingDomainFamily
    times: np.ndarray
    g: np.ndarray
    v: np.ndarray
    reports: list[EnergyReport]
    # a * dt * ||v_mid||_M^2 for each step
    dissipation: np.ndarray

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.reports], dtype=float)

    @property
    def steps(self):
        for k, r in enumerate(self.reports):
            yield self.times[k], SimState(self.times[k], self.g[k], self.v[k]), r

    def apriori_series(self) -> np.ndarray:
        """``||u'||^2 + ||u_x||^2 + ||u||^2 + ||chi u||^2/eps + 2a int ||u'||^2`` at each step."""
        eps = self.config.epsilon
        # dissipation already carries the factor a
        cum = 2.0 * np.concatenate([[0.0], np.cumsum(self.dissipation)])
        kin = 2.0 * self.series("kinetic")
        grad = 2.0 * self.series("dirichlet")
        l2 = 4.0 * self.series("gamma_term") / self.config.gamma
        chi = self.series("chi_l2sq") / eps
        return kin + grad + l2 + chi + cum

    def max_penalty_l2sq(self) -> float:
        return float(np.max(self.series("chi_l2sq")))

    def initial_in_well(self) -> bool:
        r = self.reports[0]
        return 0 < r.E < depth_lower_bound(self.config.gamma) and r.I1 > 0


def _avg_load(quad: ElementQuadrature, g0: np.ndarray, g1: np.ndarray, gamma: float) -> np.ndarray:
    """Load of the step-averaged source ``(F(u1) - F(u0)) / (u1 - u0)`` at each quadrature point."""
    u0 = quad.values(g0)
    u1 = quad.values(g1)
    du = u1 - u0
    close = np.abs(du) <= 1e-7 * np.maximum(np.abs(u0), np.abs(u1))
    with np.errstate(divide="ignore", invalid="ignore"):
        quot = (log_potential(u1, gamma) - log_potential(u0, gamma)) / np.where(close, 1.0, du)
    avg = np.where(close, f_log(0.5 * (u0 + u1), gamma), quot)
    return quad.load(avg)


def step(
    state: SimState,
    sys: AssembledSystem,
    m_chi_mid: np.ndarray,
    cfg: SimConfig,
    dt: float | None = None,
    quad: ElementQuadrature | None = None,
) -> SimState:
    """Advance one implicit-midpoint step of length ``dt``.

    ``m_chi_mid`` is the penalty mass matrix at ``t + dt/2``.
    """
    if dt is None:
        dt = cfg.time_grid()[0]
    if quad is None:
        quad = ElementQuadrature(sys.mesh)
    M, K = sys.mass, sys.stiffness
    g0, v0 = state.g, state.v
    A = K + cfg.b * M + m_chi_mid / cfg.epsilon
    S = (2.0 / dt**2 + cfg.a / dt) * M + 0.5 * A
    chol = BandedCholesky(S)
    with np.errstate(over="ignore", invalid="ignore"):
        rhs_lin = (2.0 / dt) * (M @ v0) - A @ g0

    def solve(rhs):
        if not np.all(np.isfinite(rhs)):
            raise DivergenceError(f"non-finite load in step from t={state.t}", state.t)
        return chol.solve(rhs)

    if not cfg.nonlinear:
        delta = solve(rhs_lin)
    else:
        with np.errstate(over="ignore", invalid="ignore"):
            delta = solve(rhs_lin + _avg_load(quad, g0, g0, cfg.gamma))
        residual = math.inf
        for _ in range(cfg.picard_iters):
            with np.errstate(over="ignore", invalid="ignore"):
                new = solve(rhs_lin + _avg_load(quad, g0, g0 + delta, cfg.gamma))
            scale = np.max(np.abs(g0 + 0.5 * new), initial=0.0) + np.max(np.abs(new), initial=0.0)
            change = np.max(np.abs(new - delta), initial=0.0)
            delta = new
            residual = change / scale if scale > 0 else 0.0
            if residual <= cfg.picard_tol:
                break
        if residual > 10.0 * cfg.picard_tol:
            raise StepError(f"Picard iteration stalled at relative change {residual:.3e}", residual, state.t)

    g1 = g0 + delta
    v1 = 2.0 * delta / dt - v0
    if not (np.all(np.isfinite(g1)) and np.all(np.isfinite(v1))):
        raise DivergenceError(f"non-finite coefficients after step from t={state.t}", state.t)
    return SimState(state.t + dt, g1, v1)


def simulate(cfg: SimConfig) -> Trajectory:
    """Build the discretization, project the initial data, and step to ``T``.

    Raises :class:`StepError` / :class:`DivergenceError` with ``t`` and the
    partial ``trajectory`` attached.
    """
    fam = cfg.family()
    dt, n = cfg.time_grid()
    mono = verify_monotone(fam, np.linspace(0.0, cfg.T, 257))
    if not mono:
        raise ValueError(f"domain family is not expanding between times {mono.violation}")
    mesh = build_mesh(fam.ambient, cfg.m)
    sys = assemble(mesh)
    quad = ElementQuadrature(mesh)

    g0, v0 = project_initial(make_profile(cfg.u0), make_profile(cfg.u1), mesh, fam, cfg.projection)
    times = dt * np.arange(n + 1)
    times[-1] = cfg.T
    G = np.zeros((n + 1, cfg.m))
    V = np.zeros((n + 1, cfg.m))
    G[0], V[0] = g0, v0
    diss = np.zeros(n)
    m_chi = assemble_penalty(mesh, fam, 0.0)
    reports = [energy_report(g0, v0, 0.0, sys, m_chi, cfg.b, cfg.gamma, cfg.epsilon)]
    state = SimState(0.0, g0, v0)

    def partial(k):
        return Trajectory(cfg, mesh, fam, times[: k + 1], G[: k + 1], V[: k + 1], reports[: k + 1], diss[:k])

    for k in range(n):
        t0 = times[k]
        m_mid = assemble_penalty(mesh, fam, min(t0 + 0.5 * dt, cfg.T))
        try:
            new = step(SimState(t0, state.g, state.v), sys, m_mid, cfg, dt, quad)
        except (StepError, DivergenceError) as exc:
            exc.t = t0
            exc.trajectory = partial(k)
            logger.error("run aborted at t=%.6g: %s", t0, exc)
            raise
        t1 = times[k + 1]
        state = SimState(t1, new.g, new.v)
        v_mid = (new.g - G[k]) / dt
        diss[k] = cfg.a * dt * float(v_mid @ sys.mass @ v_mid)
        m_chi = assemble_penalty(mesh, fam, t1)
        G[k + 1], V[k + 1] = new.g, new.v
        reports.append(energy_report(new.g, new.v, t1, sys, m_chi, cfg.b, cfg.gamma, cfg.epsilon))
    return Trajectory(cfg, mesh, fam, times, G, V, reports, diss)


def with_overrides(cfg: SimConfig, **kw) -> SimConfig:
    return replace(cfg, **kw)
