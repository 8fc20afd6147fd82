"""Displacement-pressure coupling: global assembly and an inf-sup probe."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .basis import scalar_dim
from .elasticity import ElasticityKernel


class ProbeError(Exception):
    pass


def local_to_global(dofmap, t: int) -> np.ndarray:
    """Global displacement indices of element t's local kernel layout."""
    return dofmap.element_dofs(t)


def assemble_bh(dofmap, kernels: list[ElasticityKernel]) -> sp.csr_matrix:
    """Global coupling matrix with b_h(v, q) = v' B q.

    Rows span all displacement DOFs (cells then faces), columns span the
    broken pressure space.
    """
    nkp = dofmap.nk
    rows, cols, vals = [], [], []
    for t, ker in enumerate(kernels):
        gi = dofmap.element_dofs(t)
        cj = np.arange(t * nkp, (t + 1) * nkp)
        rr, cc = np.meshgrid(gi, cj, indexing="ij")
        rows.append(rr.ravel())
        cols.append(cc.ravel())
        vals.append(ker.B.ravel())
    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dofmap.n_disp, dofmap.n_pressure)).tocsr()


def assemble_strain_gram(dofmap, kernels: list[ElasticityKernel]
                         ) -> sp.csr_matrix:
    """Global Gram matrix of the discrete strain seminorm."""
    rows, cols, vals = [], [], []
    for t, ker in enumerate(kernels):
        gi = dofmap.element_dofs(t)
        rr, cc = np.meshgrid(gi, gi, indexing="ij")
        rows.append(rr.ravel())
        cols.append(cc.ravel())
        vals.append(ker.E.ravel())
    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dofmap.n_disp, dofmap.n_disp)).tocsr()


def infsup_probe(system) -> float:
    """Discrete inf-sup constant of the coupling on clamped displacements.

    Computes the smallest generalized eigenvalue of B' E^{-1} B against
    the pressure mass matrix, both restricted to zero-mean pressures;
    returns its square root.  Dense linear algebra, so the mesh must be
    small.
    """
    import scipy.linalg as sla

    if system.mesh.n_elements > 200:
        raise ProbeError("inf-sup probe is dense; use at most 200 elements")
    free = system.free_disp
    E = assemble_strain_gram(system.dofmap, system.kernels)
    Ef = E[np.ix_(free, free)].toarray()
    Bf = system.B[free, :].toarray()
    Mp = system.M.toarray()
    # zero-mean complement of the pressure space
    m = system.mean
    q, _ = np.linalg.qr(np.column_stack([m / np.linalg.norm(m)]),
                        mode="complete")
    Z = q[:, 1:]
    S = Bf.T @ np.linalg.solve(Ef, Bf)
    lhs = Z.T @ S @ Z
    rhs = Z.T @ Mp @ Z
    ev = sla.eigvalsh(0.5 * (lhs + lhs.T), 0.5 * (rhs + rhs.T))
    lam = float(ev[0])
    if lam < -1e-10:
        raise ProbeError("negative inf-sup eigenvalue")
    return float(np.sqrt(max(lam, 0.0)))
