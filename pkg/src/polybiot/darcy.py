"""Symmetric weighted interior penalty discretization of the Darcy operator.

Pressure is a broken polynomial of degree k; element t owns the global
coefficient slice [t * N_k, (t + 1) * N_k).  Interior faces carry
consistency and symmetry terms with diffusion-weighted averages and a
penalty scaled by the harmonic mean of the two permeabilities.  With the
default pure-Neumann setting no boundary face contributes; an optional
set of pressure Dirichlet faces adds the usual one-sided boundary terms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .basis import element_basis, scalar_dim
from .mesh import PolyMesh, SubTriangulation
from .quadrature import element_rule, face_rule


class SeminormError(Exception):
    pass


@dataclass(frozen=True)
class FaceWeights:
    """Diffusion-dependent weights of one interior face."""

    w1: float
    w2: float
    lam: float    # harmonic-mean diffusion used by the penalty


def face_weights(kappa1: float, kappa2: float) -> FaceWeights:
    s = kappa1 + kappa2
    return FaceWeights(kappa2 / s, kappa1 / s, 2.0 * kappa1 * kappa2 / s)


def default_penalty(mesh: PolyMesh, k: int) -> float:
    n_max = max(len(f) for f in mesh.element_faces)
    return (n_max + 0.1) * k * k


def assemble_ch(mesh: PolyMesh, sub: SubTriangulation, k: int,
                kappa: np.ndarray, penalty: float | None = None,
                dirichlet_faces=None) -> sp.csr_matrix:
    """Global SWIP matrix over broken P^k pressures.

    ``kappa`` holds one (isotropic) permeability per element.
    ``dirichlet_faces`` lists boundary face ids where p = 0 is enforced
    weakly; all other boundary faces are natural (no-flux).
    """
    nk = scalar_dim(k)
    n = mesh.n_elements * nk
    kappa = np.asarray(kappa, dtype=float)
    if penalty is None:
        penalty = default_penalty(mesh, k)
    dirichlet = frozenset(dirichlet_faces) if dirichlet_faces else frozenset()

    rows, cols, vals = [], [], []

    def add(t_row: int, t_col: int, blk: np.ndarray) -> None:
        r0, c0 = t_row * nk, t_col * nk
        rr, cc = np.meshgrid(np.arange(nk), np.arange(nk), indexing="ij")
        rows.append((r0 + rr).ravel())
        cols.append((c0 + cc).ravel())
        vals.append(blk.ravel())

    # volume terms
    for t in range(mesh.n_elements):
        eb = element_basis(mesh, t, k)
        r = element_rule(mesh, sub, t, max(2 * k, 1))
        g = eb.grad(r.points)
        blk = kappa[t] * np.einsum("qid,q,qjd->ij", g, r.weights, g)
        add(t, t, 0.5 * (blk + blk.T))

    # face terms
    for fid, f in enumerate(mesh.faces):
        interior = f.neighbor is not None
        if not interior and fid not in dirichlet:
            continue
        r = face_rule(mesh, fid, 2 * k + 2)
        h_f = f.length
        nrm = f.normal          # out of the owner
        if interior:
            t1, t2 = f.owner, f.neighbor
            fw = face_weights(kappa[t1], kappa[t2])
            sides = [(t1, 1.0, fw.w1 * kappa[t1]),
                     (t2, -1.0, fw.w2 * kappa[t2])]
            lam = fw.lam
        else:
            t1 = f.owner
            sides = [(t1, 1.0, kappa[t1])]
            lam = kappa[t1]
        pen = penalty * lam / h_f

        tr, gn = {}, {}
        for t, sign, wk in sides:
            eb = element_basis(mesh, t, k)
            tr[t] = eb.eval(r.points)
            gn[t] = wk * (eb.grad(r.points) @ nrm)

        for ti, si, _ in sides:
            for tj, sj, _ in sides:
                # -([q], {k grad p} n) - ({k grad q} n, [p]) + pen ([q],[p])
                blk = (-si * np.einsum("q,qi,qj->ij", r.weights,
                                       tr[ti], gn[tj])
                       - sj * np.einsum("q,qi,qj->ij", r.weights,
                                        gn[ti], tr[tj])
                       + si * sj * pen * np.einsum("q,qi,qj->ij", r.weights,
                                                   tr[ti], tr[tj]))
                add(ti, tj, blk)

    C = sp.coo_matrix((np.concatenate(vals),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n)).tocsr()
    return C


def ch_seminorm(C: sp.csr_matrix, p: np.ndarray) -> float:
    val = float(p @ (C @ p))
    if val < -1e-10 * max(1.0, float(np.abs(p).max()) ** 2):
        raise SeminormError("negative Darcy energy: matrix not PSD")
    return float(np.sqrt(max(val, 0.0)))


def assemble_mass(mesh: PolyMesh, sub: SubTriangulation,
                  k: int) -> sp.csr_matrix:
    """Block-diagonal broken mass matrix of the pressure space."""
    nk = scalar_dim(k)
    blocks = []
    for t in range(mesh.n_elements):
        eb = element_basis(mesh, t, k)
        r = element_rule(mesh, sub, t, 2 * k + 2)
        phi = eb.eval(r.points)
        M = (phi * r.weights[:, None]).T @ phi
        blocks.append(0.5 * (M + M.T))
    return sp.block_diag(blocks, format="csr")


def mean_vector(mesh: PolyMesh, sub: SubTriangulation, k: int) -> np.ndarray:
    """Integrals of every pressure basis function, used by the zero-mean
    constraint."""
    nk = scalar_dim(k)
    m = np.zeros(mesh.n_elements * nk)
    for t in range(mesh.n_elements):
        eb = element_basis(mesh, t, k)
        r = element_rule(mesh, sub, t, 2 * k)
        m[t * nk:(t + 1) * nk] = r.weights @ eb.eval(r.points)
    return m


def assemble_lifting(mesh: PolyMesh, sub: SubTriangulation, k: int,
                     kappa: np.ndarray) -> list[np.ndarray]:
    """Per-element jump lifting used by the flux postprocessing.

    Element t receives a matrix mapping global pressure coefficients to
    the component-major coefficients of a degree k - 1 vector polynomial
    R(T) with

        (R(T) q, xi)_T = sum over interior faces F of T of
                         ([q], w_T kappa_T xi . n_F)_F
    for all xi in P^{k-1}(T)^2.
    """
    nk = scalar_dim(k)
    nkm = scalar_dim(k - 1)
    n = mesh.n_elements * nk
    out = []
    for t in range(mesh.n_elements):
        ebm = element_basis(mesh, t, k - 1)
        r = element_rule(mesh, sub, t, 2 * k + 2)
        phi = ebm.eval(r.points)
        M = (phi * r.weights[:, None]).T @ phi
        Minv = np.linalg.inv(0.5 * (M + M.T))
        # only the element and its face neighbors contribute columns
        blocks: dict[int, np.ndarray] = {}
        for fid, _sign in mesh.element_faces[t]:
            f = mesh.faces[fid]
            if f.neighbor is None:
                continue
            t1, t2 = f.owner, f.neighbor
            fw = face_weights(kappa[t1], kappa[t2])
            w_t = (fw.w1 if t == t1 else fw.w2) * kappa[t]
            fr = face_rule(mesh, fid, 2 * k + 2)
            tr_t = ebm.eval(fr.points)
            tr1 = element_basis(mesh, t1, k).eval(fr.points)
            tr2 = element_basis(mesh, t2, k).eval(fr.points)
            nrm = f.normal
            for te in (t1, t2):
                if te not in blocks:
                    blocks[te] = np.zeros((2 * nkm, nk))
            for c in (0, 1):
                blk1 = w_t * nrm[c] * np.einsum("q,qi,qj->ij", fr.weights,
                                                tr_t, tr1)
                blk2 = w_t * nrm[c] * np.einsum("q,qi,qj->ij", fr.weights,
                                                tr_t, tr2)
                blocks[t1][c * nkm:(c + 1) * nkm] += blk1
                blocks[t2][c * nkm:(c + 1) * nkm] -= blk2
        rows, cols, vals = [], [], []
        for te, blk in blocks.items():
            for c in (0, 1):
                sl = slice(c * nkm, (c + 1) * nkm)
                blk[sl] = Minv @ blk[sl]
            r_idx, c_idx = np.nonzero(blk)
            rows.extend(r_idx)
            cols.extend(te * nk + c_idx)
            vals.extend(blk[r_idx, c_idx])
        out.append(sp.csr_matrix((vals, (rows, cols)),
                                 shape=(2 * nkm, n)))
    return out
