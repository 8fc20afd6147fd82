"""Locally scaled monomial bases, mass matrices, and L2 projections.

Element bases are monomials in ((x - x_T) / h_T); face bases are 1D
monomials in the scaled tangential coordinate centered at the face
midpoint.  Bases are not orthonormalized; per-element mass matrices are
Cholesky-factored instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .mesh import PolyMesh, SubTriangulation
from .quadrature import element_rule, face_rule


def scalar_dim(k: int) -> int:
    """dim P^k in 2D."""
    return (k + 1) * (k + 2) // 2


def monomial_exponents(k: int) -> np.ndarray:
    """Graded-lexicographic exponent pairs with |s| <= k."""
    out = [(i - j, j) for i in range(k + 1) for j in range(i + 1)]
    return np.array(out, dtype=int)


@dataclass(frozen=True)
class ElementBasis:
    degree: int
    center: np.ndarray
    scale: float
    exponents: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.exponents)

    def eval(self, pts: np.ndarray) -> np.ndarray:
        """(npts, dim) array of basis values."""
        z = (np.atleast_2d(pts) - self.center) / self.scale
        ex = self.exponents
        return (z[:, 0:1] ** ex[None, :, 0]) * (z[:, 1:2] ** ex[None, :, 1])

    def grad(self, pts: np.ndarray) -> np.ndarray:
        """(npts, dim, 2) array of basis gradients."""
        z = (np.atleast_2d(pts) - self.center) / self.scale
        ex = self.exponents
        n, d = len(z), len(ex)
        g = np.zeros((n, d, 2))
        for axis in (0, 1):
            e = ex[:, axis]
            other = ex[:, 1 - axis]
            mask = e > 0
            vals = np.zeros((n, d))
            if mask.any():
                vals[:, mask] = (
                    e[mask]
                    * z[:, axis:axis + 1] ** (e[mask] - 1)
                    * z[:, 1 - axis:2 - axis] ** other[mask]
                )
            g[:, :, axis] = vals / self.scale
        return g


@dataclass(frozen=True)
class FaceBasis:
    degree: int
    midpoint: np.ndarray
    tangent: np.ndarray
    scale: float

    @property
    def dim(self) -> int:
        return self.degree + 1

    def eval(self, pts: np.ndarray) -> np.ndarray:
        s = ((np.atleast_2d(pts) - self.midpoint) @ self.tangent) / self.scale
        return s[:, None] ** np.arange(self.degree + 1)[None, :]


def element_basis(mesh: PolyMesh, t: int, degree: int) -> ElementBasis:
    return ElementBasis(degree, mesh.barycenters[t], mesh.diameters[t],
                        monomial_exponents(degree))


def face_basis(mesh: PolyMesh, fid: int, degree: int) -> FaceBasis:
    f = mesh.faces[fid]
    return FaceBasis(degree, f.midpoint, f.tangent, f.length)


class QuadratureDeficiencyError(Exception):
    """Mass matrix not SPD: quadrature order too low for the basis."""


def element_mass_matrix(mesh: PolyMesh, sub: SubTriangulation, t: int,
                        degree: int, order: int | None = None) -> np.ndarray:
    basis = element_basis(mesh, t, degree)
    rule = element_rule(mesh, sub, t, order if order is not None
                        else 2 * degree + 2)
    phi = basis.eval(rule.points)
    M = (phi * rule.weights[:, None]).T @ phi
    M = 0.5 * (M + M.T)
    try:
        cho_factor(M)
    except LinAlgError as exc:
        raise QuadratureDeficiencyError(
            f"element {t}, degree {degree}: mass matrix not SPD"
        ) from exc
    return M


def face_mass_matrix(mesh: PolyMesh, fid: int, degree: int) -> np.ndarray:
    basis = face_basis(mesh, fid, degree)
    rule = face_rule(mesh, fid, 2 * degree + 1)
    phi = basis.eval(rule.points)
    M = (phi * rule.weights[:, None]).T @ phi
    return 0.5 * (M + M.T)


def l2_project_element(f, mesh: PolyMesh, sub: SubTriangulation, t: int,
                       degree: int, order: int | None = None) -> np.ndarray:
    """Coefficients of the element L2 projection of a scalar or vector field.

    ``f`` maps an (n, 2) point array to values of shape (n,) or (n, m);
    vector fields return one coefficient column per component.
    """
    basis = element_basis(mesh, t, degree)
    rule = element_rule(mesh, sub, t, order if order is not None
                        else 2 * degree + 2)
    phi = basis.eval(rule.points)
    M = (phi * rule.weights[:, None]).T @ phi
    vals = np.asarray(f(rule.points), dtype=float)
    b = phi.T @ (rule.weights[:, None] * vals.reshape(len(rule.weights), -1))
    c = cho_solve(cho_factor(0.5 * (M + M.T)), b)
    return c[:, 0] if vals.ndim == 1 else c


def l2_project_face(f, mesh: PolyMesh, fid: int, degree: int,
                    order: int | None = None) -> np.ndarray:
    basis = face_basis(mesh, fid, degree)
    rule = face_rule(mesh, fid, order if order is not None
                     else 2 * degree + 1)
    phi = basis.eval(rule.points)
    M = (phi * rule.weights[:, None]).T @ phi
    vals = np.asarray(f(rule.points), dtype=float)
    b = phi.T @ (rule.weights[:, None] * vals.reshape(len(rule.weights), -1))
    c = cho_solve(cho_factor(0.5 * (M + M.T)), b)
    return c[:, 0] if vals.ndim == 1 else c
