"""Logarithmic source term and the stationary potential-well functionals.

All integrals of ``u^2 ln|u|`` use 5-point Gauss-Legendre quadrature per
element applied to the piecewise-linear interpolant; the integrand is taken
as 0 wherever ``u = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .fem1d import Mesh1D

__all__ = [
    "GridFunction",
    "ElementQuadrature",
    "WellStatus",
    "f_log",
    "log_potential",
    "u2_log_abs",
    "log_integral",
    "nehari_I1",
    "potential_J1",
    "lambda_star",
    "log_lambda_star",
    "lambda_star_bisect",
    "depth_lower_bound",
    "depth_upper_estimate",
    "well_status",
    "LambdaStarMismatch",
]

GAUSS_POINTS = 5


class LambdaStarMismatch(RuntimeError):
    pass


def f_log(u, gamma: float):
    """``u ln|u|^gamma`` with the continuous value 0 at u = 0."""
    u = np.asarray(u, dtype=float)
    au = np.abs(u)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(au > 0, gamma * u * np.log(np.where(au > 0, au, 1.0)), 0.0)
    return out if out.ndim else float(out)


def u2_log_abs(u):
    """``u^2 ln|u|`` with the continuous value 0 at u = 0."""
    u = np.asarray(u, dtype=float)
    au = np.abs(u)
    out = np.where(au > 0, u * u * np.log(np.where(au > 0, au, 1.0)), 0.0)
    return out if out.ndim else float(out)


def log_potential(u, gamma: float):
    """Antiderivative of :func:`f_log` vanishing at 0: ``(gamma/2) u^2 ln|u| - (gamma/4) u^2``."""
    u = np.asarray(u, dtype=float)
    return 0.5 * gamma * u2_log_abs(u) - 0.25 * gamma * u * u


class ElementQuadrature:
    """Per-element Gauss-Legendre rule on a mesh, plus the hat values at its points."""

    def __init__(self, mesh: Mesh1D, npts: int = GAUSS_POINTS):
        xg, wg = np.polynomial.legendre.leggauss(npts)
        x0, x1 = mesh.nodes[:-1], mesh.nodes[1:]
        h = (x1 - x0)[:, None]
        self.mesh = mesh
        self.points = 0.5 * (x0 + x1)[:, None] + 0.5 * h * xg[None, :]
        self.weights = 0.5 * h * wg[None, :]
        self.phi_l = np.broadcast_to(0.5 * (1 - xg), self.points.shape)
        self.phi_r = np.broadcast_to(0.5 * (1 + xg), self.points.shape)

    def values(self, coeffs: np.ndarray) -> np.ndarray:
        full = self.mesh.full(coeffs)
        return full[:-1, None] * self.phi_l + full[1:, None] * self.phi_r

    def integrate(self, vals: np.ndarray) -> float:
        return float(np.sum(self.weights * vals))

    def load(self, vals: np.ndarray) -> np.ndarray:
        """Vector of ``integral(vals * w_j)`` over the interior hats."""
        wv = self.weights * vals
        out = np.zeros(self.mesh.m + 2)
        out[:-1] += np.sum(wv * self.phi_l, axis=1)
        out[1:] += np.sum(wv * self.phi_r, axis=1)
        return out[1:-1]


@dataclass(frozen=True, eq=False)
class GridFunction:
    mesh: Mesh1D
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (self.mesh.m,):
            raise ValueError(f"expected {self.mesh.m} coefficients, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("grid function has non-finite coefficients")
        object.__setattr__(self, "coeffs", c)

    @cached_property
    def quadrature(self) -> ElementQuadrature:
        return ElementQuadrature(self.mesh)

    def at_quadrature(self) -> np.ndarray:
        return self.quadrature.values(self.coeffs)

    def l2_sq(self) -> float:
        """Exact ``||u||^2`` of the interpolant."""
        f = self.mesh.full(self.coeffs)
        h = np.diff(self.mesh.nodes)
        return float(np.sum(h * (f[:-1] ** 2 + f[:-1] * f[1:] + f[1:] ** 2) / 3.0))

    def grad_sq(self) -> float:
        """Exact ``||u'||^2`` of the interpolant."""
        f = self.mesh.full(self.coeffs)
        h = np.diff(self.mesh.nodes)
        return float(np.sum(np.diff(f) ** 2 / h))

    def scaled(self, c: float) -> GridFunction:
        return GridFunction(self.mesh, c * self.coeffs)

    def is_zero(self) -> bool:
        return not np.any(self.coeffs)


def log_integral(u: GridFunction, gamma: float) -> float:
    """``integral u^2 ln|u|^gamma dx``."""
    if u.is_zero():
        return 0.0
    return gamma * u.quadrature.integrate(u2_log_abs(u.at_quadrature()))


def _quad_form(a: np.ndarray, c: np.ndarray) -> float:
    return float(c @ (a @ c))


def nehari_I1(u: GridFunction, K: np.ndarray, gamma: float) -> float:
    return _quad_form(K, u.coeffs) - log_integral(u, gamma)


def potential_J1(u: GridFunction, K: np.ndarray, M: np.ndarray, gamma: float) -> float:
    return 0.5 * _quad_form(K, u.coeffs) - 0.5 * log_integral(u, gamma) + 0.25 * gamma * _quad_form(M, u.coeffs)


def log_lambda_star(u: GridFunction, K: np.ndarray, M: np.ndarray, gamma: float) -> float:
    """``ln lambda*``; I1(lambda u) = lambda^2 [I1(u) - gamma ln(lambda) ||u||^2] vanishes there."""
    grad = _quad_form(K, u.coeffs)
    if not grad > 0:
        raise ValueError("lambda* needs a function with nonzero gradient")
    return (grad - log_integral(u, gamma)) / (gamma * _quad_form(M, u.coeffs))


def _scaled_I1_sign(u: GridFunction, K: np.ndarray, gamma: float, s: float) -> float:
    """``I1(e^s u) / e^{2s}``, evaluated pointwise without forming ``e^s u``."""
    vals = u.at_quadrature()
    au = np.abs(vals)
    integrand = np.where(au > 0, vals**2 * (s + np.log(np.where(au > 0, au, 1.0))), 0.0)
    return _quad_form(K, u.coeffs) - gamma * u.quadrature.integrate(integrand)


def lambda_star_bisect(u: GridFunction, K: np.ndarray, gamma: float, rtol: float = 1e-14) -> float:
    """``ln lambda*`` located by bisection on the sign of the fibering derivative.

    Works on ``s = ln(lambda)`` so that huge roots do not overflow.
    """
    lo, hi = -1.0, 1.0
    while _scaled_I1_sign(u, K, gamma, lo) <= 0:
        lo *= 2.0
        if lo < -1e6:
            raise ValueError("no sign change found for I1(lambda u)")
    while _scaled_I1_sign(u, K, gamma, hi) >= 0:
        hi *= 2.0
        if hi > 1e6:
            raise ValueError("no sign change found for I1(lambda u)")
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if _scaled_I1_sign(u, K, gamma, mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rtol * max(1.0, abs(mid)):
            break
    return 0.5 * (lo + hi)


def lambda_star(u: GridFunction, K: np.ndarray, M: np.ndarray, gamma: float, check: bool = True) -> float:
    """Unique positive root of ``lambda -> I1(lambda u)``.

    The closed form is cross-checked against :func:`lambda_star_bisect`; a
    relative mismatch of 1e-6 or more in lambda* raises ``LambdaStarMismatch``.
    """
    s = log_lambda_star(u, K, M, gamma)
    if check:
        s_b = lambda_star_bisect(u, K, gamma)
        # relative error in lambda is |exp(s - s_b) - 1|
        if abs(math.expm1(s - s_b)) >= 1e-6:
            raise LambdaStarMismatch(f"closed-form ln(lambda*)={s!r} vs bisection {s_b!r}")
    return math.exp(s)


def depth_lower_bound(gamma: float) -> float:
    """Lower bound ``(e/4) sqrt(2 pi / gamma)`` on the potential-well depth."""
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    return 0.25 * math.e * math.sqrt(2.0 * math.pi / gamma)


def depth_upper_estimate(candidates, K: np.ndarray, M: np.ndarray, gamma: float) -> float:
    """Diagnostic upper estimate of the depth: ``min J1(lambda*(v) v)`` over candidates.

    On the Nehari set ``J1 = (gamma/4) ||u||^2``, which is evaluated in log
    form; returns ``inf`` if every candidate overflows.
    """
    best = math.inf
    for v in candidates:
        s = log_lambda_star(v, K, M, gamma)
        log_j = math.log(0.25 * gamma * _quad_form(M, v.coeffs)) + 2.0 * s
        best = min(best, math.exp(log_j) if log_j < 700 else math.inf)
    return best


@dataclass(frozen=True)
class WellStatus:
    I1: float
    J1: float
    d_bound: float
    in_well: bool


def well_status(u: GridFunction, K: np.ndarray, M: np.ndarray, gamma: float) -> WellStatus:
    """Membership in ``{J1 < d_bound, I1 > 0} | {0}`` using the conservative depth bound."""
    i1 = nehari_I1(u, K, gamma)
    j1 = potential_J1(u, K, M, gamma)
    d = depth_lower_bound(gamma)
    return WellStatus(i1, j1, d, bool(u.is_zero() or (j1 < d and i1 > 0)))
