"""Piecewise-linear Galerkin discretization on a uniform 1D mesh.

The basis is the set of interior hat functions, so every coefficient vector
describes a function vanishing at both ambient endpoints. Mass and stiffness
matrices are tridiagonal; solves go through LAPACK's banded Cholesky.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import cholesky_banded, cho_solve_banded

from .geometry import MovingDomainFamily, outside_pieces

__all__ = [
    "Mesh1D",
    "AssembledSystem",
    "build_mesh",
    "assemble",
    "assemble_penalty",
    "project_initial",
    "to_banded",
    "BandedCholesky",
]


@dataclass(frozen=True, eq=False)
class Mesh1D:
    nodes: np.ndarray
    m: int

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size != self.m + 2:
            raise ValueError("mesh needs m + 2 nodes including both endpoints")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("mesh nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def h(self) -> float:
        return float(self.nodes[1] - self.nodes[0])

    @property
    def interior(self) -> np.ndarray:
        return self.nodes[1:-1]

    @property
    def ambient(self) -> tuple[float, float]:
        return float(self.nodes[0]), float(self.nodes[-1])

    def full(self, coeffs: np.ndarray) -> np.ndarray:
        """Nodal values including the two zero boundary values."""
        out = np.zeros(self.m + 2)
        out[1:-1] = coeffs
        return out


@dataclass(frozen=True, eq=False)
class AssembledSystem:
    mesh: Mesh1D
    mass: np.ndarray
    stiffness: np.ndarray


def build_mesh(ambient: tuple[float, float], m: int) -> Mesh1D:
    if m < 1:
        raise ValueError(f"need at least one interior node, got m={m}")
    lo, hi = ambient
    return Mesh1D(np.linspace(lo, hi, m + 2), m)


def _tridiag(diag: np.ndarray, off: np.ndarray) -> np.ndarray:
    return np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)


def _element_to_interior(mesh: Mesh1D, e_ll: np.ndarray, e_lr: np.ndarray, e_rr: np.ndarray) -> np.ndarray:
    """Scatter per-element 2x2 symmetric blocks into the interior m x m matrix."""
    n = mesh.m + 2
    diag = np.zeros(n)
    diag[:-1] += e_ll
    diag[1:] += e_rr
    return _tridiag(diag[1:-1], e_lr[1:-1])


def assemble(mesh: Mesh1D) -> AssembledSystem:
    """Exact mass and stiffness matrices of the interior hat functions."""
    h = np.diff(mesh.nodes)
    mass = _element_to_interior(mesh, h / 3.0, h / 6.0, h / 3.0)
    stiff = _element_to_interior(mesh, 1.0 / h, -1.0 / h, 1.0 / h)
    for a in (mass, stiff):
        a.setflags(write=False)
    return AssembledSystem(mesh, mass, stiff)


def _hat_products(x0, x1, p, q):
    """Exact integrals over [p, q] of products of the two local hats of cell [x0, x1].

    Simpson's rule is exact for the quadratic integrands.
    """
    h = x1 - x0
    mid = 0.5 * (p + q)
    w = (q - p) / 6.0

    def phi_l(x):
        return (x1 - x) / h

    def phi_r(x):
        return (x - x0) / h

    ll = w * (phi_l(p) ** 2 + 4 * phi_l(mid) ** 2 + phi_l(q) ** 2)
    lr = w * (phi_l(p) * phi_r(p) + 4 * phi_l(mid) * phi_r(mid) + phi_l(q) * phi_r(q))
    rr = w * (phi_r(p) ** 2 + 4 * phi_r(mid) ** 2 + phi_r(q) ** 2)
    return ll, lr, rr


def assemble_penalty(mesh: Mesh1D, fam: MovingDomainFamily, t: float) -> np.ndarray:
    """Matrix of ``(chi(t) w_i, w_j)``, integrated exactly over the penalized cell pieces."""
    left, right = fam.bounds(t)
    x0, x1 = mesh.nodes[:-1], mesh.nodes[1:]
    a_lo, a_hi, b_lo, b_hi = outside_pieces(x0, x1, left, right)
    ll1, lr1, rr1 = _hat_products(x0, x1, a_lo, a_hi)
    ll2, lr2, rr2 = _hat_products(x0, x1, b_lo, b_hi)
    return _element_to_interior(mesh, ll1 + ll2, lr1 + lr2, rr1 + rr2)


def project_initial(
    u0: Callable[[np.ndarray], np.ndarray],
    u1: Callable[[np.ndarray], np.ndarray],
    mesh: Mesh1D,
    fam: MovingDomainFamily,
    projection: str = "interp",
) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients of the zero-extended initial data.

    ``interp`` (default) interpolates at the interior nodes, so nodes outside
    ``Omega_0`` get exactly 0. ``l2`` solves the mass-matrix projection instead.
    """
    left, right = fam.bounds(0.0)

    def extend(fn):
        def ext(x):
            x = np.asarray(x, dtype=float)
            inside = (x > left) & (x < right)
            out = np.zeros_like(x)
            if inside.any():
                out[inside] = np.asarray(fn(x[inside]), dtype=float) * np.ones(inside.sum())
            return out

        return ext

    e0, e1 = extend(u0), extend(u1)
    if projection == "interp":
        return e0(mesh.interior), e1(mesh.interior)
    if projection == "l2":
        mass = assemble(mesh).mass
        return _l2_project(e0, mesh, mass, left, right), _l2_project(e1, mesh, mass, left, right)
    raise ValueError(f"projection must be 'interp' or 'l2', got {projection!r}")


def _l2_project(fn, mesh: Mesh1D, mass: np.ndarray, left: float, right: float) -> np.ndarray:
    # integrate only over the part of each cell inside Omega_0 so the jump is not smeared
    xg, wg = np.polynomial.legendre.leggauss(8)
    x0, x1 = mesh.nodes[:-1], mesh.nodes[1:]
    p = np.clip(left, x0, x1)
    q = np.clip(right, x0, x1)
    q = np.maximum(p, q)
    xs = 0.5 * (p + q)[:, None] + 0.5 * (q - p)[:, None] * xg[None, :]
    ws = 0.5 * (q - p)[:, None] * wg[None, :]
    h = x1 - x0
    phi_l = (x1[:, None] - xs) / h[:, None]
    phi_r = (xs - x0[:, None]) / h[:, None]
    f = fn(xs.ravel()).reshape(xs.shape)
    rhs = np.zeros(mesh.m + 2)
    rhs[:-1] += np.sum(ws * f * phi_l, axis=1)
    rhs[1:] += np.sum(ws * f * phi_r, axis=1)
    return np.linalg.solve(mass, rhs[1:-1])


def to_banded(a: np.ndarray) -> np.ndarray:
    """Upper banded storage (bandwidth 1) of a symmetric tridiagonal matrix."""
    n = a.shape[0]
    ab = np.zeros((2, n))
    ab[1] = np.diag(a)
    ab[0, 1:] = np.diag(a, 1)
    return ab


class BandedCholesky:
    """Cholesky factor of a symmetric positive-definite tridiagonal matrix."""

    def __init__(self, a: np.ndarray):
        self._c = cholesky_banded(to_banded(a), lower=False)

    def solve(self, b: np.ndarray) -> np.ndarray:
        return cho_solve_banded((self._c, False), b)
