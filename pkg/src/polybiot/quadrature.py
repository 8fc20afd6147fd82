"""Gauss quadrature on segments and on polygons via their sub-triangulation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import PolyMesh, SubTriangulation


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray   # (n, 2) or (n, 1)
    weights: np.ndarray  # (n,)
    order: int           # exact for total degree <= order


def segment_rule(a, b, order: int) -> QuadratureRule:
    """Gauss-Legendre rule on the segment [a, b] in R^2."""
    n = max(1, (order + 2) // 2)
    x, w = np.polynomial.legendre.leggauss(n)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    t = 0.5 * (x + 1.0)
    pts = a[None, :] + t[:, None] * (b - a)[None, :]
    length = np.linalg.norm(b - a)
    return QuadratureRule(pts, 0.5 * length * w, 2 * n - 1)


def triangle_rule(tri: np.ndarray, order: int) -> QuadratureRule:
    """Quadrature on a triangle, exact for total degree <= order.

    Tensor Gauss rule on the unit square collapsed onto the triangle
    (Duffy map); the Jacobian raises the degree by one in the collapsed
    direction, which the point count accounts for.
    """
    n = max(1, (order + 3) // 2)
    x, w = np.polynomial.legendre.leggauss(n)
    u = 0.5 * (x + 1.0)
    wu = 0.5 * w
    U, V = np.meshgrid(u, u, indexing="ij")
    WU, WV = np.meshgrid(wu, wu, indexing="ij")
    # reference map: (u, v) -> (u, v (1 - u)), jacobian (1 - u)
    r = U.ravel()
    s = (V * (1.0 - U)).ravel()
    wref = (WU * WV * (1.0 - U)).ravel()
    v0, v1, v2 = tri[0], tri[1], tri[2]
    pts = v0[None, :] + np.outer(r, v1 - v0) + np.outer(s, v2 - v0)
    jac = abs((v1[0] - v0[0]) * (v2[1] - v0[1])
              - (v2[0] - v0[0]) * (v1[1] - v0[1]))
    return QuadratureRule(pts, wref * jac, 2 * n - 2)


def element_rule(mesh: PolyMesh, sub: SubTriangulation, t: int,
                 order: int) -> QuadratureRule:
    """Composite rule over the sub-triangles of element t."""
    pts, wts = [], []
    for tri in sub.triangles[t]:
        r = triangle_rule(np.asarray(tri), order)
        pts.append(r.points)
        wts.append(r.weights)
    return QuadratureRule(np.vstack(pts), np.concatenate(wts), order)


def face_rule(mesh: PolyMesh, fid: int, order: int) -> QuadratureRule:
    f = mesh.faces[fid]
    va = mesh.vertices[f.vertices[0]]
    vb = mesh.vertices[f.vertices[1]]
    return segment_rule(va, vb, order)
