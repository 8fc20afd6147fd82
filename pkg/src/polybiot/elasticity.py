"""Local hybrid high-order operators for linear elasticity.

Per element this builds the displacement reconstruction (a degree k+1
vector polynomial obtained from a local pure-traction problem closed by
mean-value and mean-rotation conditions), the discrete divergence, the
face-based stabilization, and the local stiffness

    A(T) = 2 mu (G_T + S_T) + lambda D_T' M_k D_T.

Local DOF layout: cell block first (x-component coefficients, then
y-component), then one block per face in ``mesh.element_faces`` order,
each again component-major.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import (ElementBasis, FaceBasis, element_basis, face_basis,
                    scalar_dim)
from .mesh import PolyMesh, SubTriangulation
from .quadrature import element_rule, face_rule


class KernelError(Exception):
    pass


def local_dof_count(k: int, n_faces: int) -> int:
    return 2 * scalar_dim(k) + n_faces * 2 * (k + 1)


@dataclass
class ElasticityKernel:
    """Dense local operators of one element."""

    t: int
    k: int
    faces: list[tuple[int, int]]          # (face id, outward sign)
    cell_k: ElementBasis
    cell_kp1: ElementBasis
    face_bases: list[FaceBasis]
    M_k: np.ndarray                       # scalar degree-k mass
    face_masses: list[np.ndarray]         # scalar face masses
    R: np.ndarray                         # reconstruction map, (2*N_{k+1}, ndof)
    G: np.ndarray                         # R' K R, symmetric-gradient energy
    S: np.ndarray                         # stabilization
    D: np.ndarray                         # divergence map, (N_k, ndof)
    A: np.ndarray                         # local stiffness
    B: np.ndarray                         # local coupling, (ndof, N_k)
    E: np.ndarray                         # strain-seminorm Gram

    @property
    def ndof(self) -> int:
        return self.A.shape[0]

    @property
    def n_cell(self) -> int:
        return 2 * self.cell_k.dim

    def face_slice(self, i: int) -> slice:
        w = 2 * (self.k + 1)
        return slice(self.n_cell + i * w, self.n_cell + (i + 1) * w)


def _sym_grad_gram(grads: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Gram matrix of symmetric gradients for a component-major vector basis.

    grads: (nq, Ns, 2) scalar-basis gradients.
    """
    ns = grads.shape[1]
    K = np.zeros((2 * ns, 2 * ns))
    w = weights
    gg = np.einsum("qid,q,qjd->ij", grads, w, grads)  # grad . grad
    for c in (0, 1):
        for d in (0, 1):
            cross = np.einsum("qi,q,qj->ij", grads[:, :, d], w, grads[:, :, c])
            blk = 0.5 * cross
            if c == d:
                blk = blk + 0.5 * gg
            K[c * ns:(c + 1) * ns, d * ns:(d + 1) * ns] = blk
    return K


def build_kernel(mesh: PolyMesh, sub: SubTriangulation, t: int, k: int,
                 mu: float, lam: float) -> ElasticityKernel:
    if k < 1:
        raise KernelError("the method requires k >= 1")
    nk = scalar_dim(k)
    nk1 = scalar_dim(k + 1)
    nfb = k + 1
    faces = mesh.element_faces[t]
    nfaces = len(faces)
    ndof = local_dof_count(k, nfaces)

    cb_k = element_basis(mesh, t, k)
    cb_k1 = element_basis(mesh, t, k + 1)
    rule = element_rule(mesh, sub, t, 2 * k + 2)
    w = rule.weights
    phi_k = cb_k.eval(rule.points)
    g_k = cb_k.grad(rule.points)
    g_k1 = cb_k1.grad(rule.points)

    M_k = (phi_k * w[:, None]).T @ phi_k
    M_k = 0.5 * (M_k + M_k.T)
    K1 = _sym_grad_gram(g_k1, w)

    # face data
    fbs, fms, frules = [], [], []
    for fid, _sign in faces:
        fb = face_basis(mesh, fid, k)
        fr = face_rule(mesh, fid, 2 * k + 3)
        fm = (fb.eval(fr.points) * fr.weights[:, None]).T @ fb.eval(fr.points)
        fbs.append(fb)
        fms.append(0.5 * (fm + fm.T))
        frules.append(fr)

    cell = slice(0, 2 * nk)

    # ---- reconstruction: bordered local solve --------------------------
    Brhs = np.zeros((2 * nk1, ndof))
    # volume part: mixed symmetric-gradient gram, P^{k+1} rows vs P^k cols
    ggmix = np.einsum("qid,q,qjd->ij", g_k1, w, g_k)
    for c in (0, 1):       # test component (rows, P^{k+1})
        for d in (0, 1):   # trial component (cols, P^k)
            cross = np.einsum("qi,q,qj->ij", g_k1[:, :, d], w, g_k[:, :, c])
            blk = 0.5 * cross
            if c == d:
                blk = blk + 0.5 * ggmix
            Brhs[c * nk1:(c + 1) * nk1, d * nk:(d + 1) * nk] = blk

    # face part: (v_F - v_T, grad_s w' n_TF)_F
    for i, (fid, sign) in enumerate(faces):
        fr = frules[i]
        n = sign * mesh.faces[fid].normal
        gk1_f = cb_k1.grad(fr.points)           # (nq, nk1, 2)
        gdotn = gk1_f @ n                        # (nq, nk1)
        phi_kf = cb_k.eval(fr.points)            # (nq, nk)
        chi = fbs[i].eval(fr.points)             # (nq, nfb)
        fw = fr.weights
        base = 2 * nk + i * 2 * nfb
        for c in (0, 1):       # component of the trial trace
            for d in (0, 1):   # test component (rows)
                # (e_c s, grad_s w' n)_F with test basis (d, j):
                # (grad_s w' n)_c = 0.5 (n_d d_c psi_j + delta_cd grad psi_j . n)
                integ = 0.5 * (n[d] * gk1_f[:, :, c]
                               + (gdotn if c == d else 0.0))
                rows = slice(d * nk1, (d + 1) * nk1)
                Brhs[rows, base + c * nfb:base + (c + 1) * nfb] += \
                    np.einsum("q,qi,qj->ij", fw, integ, chi)
                Brhs[rows, c * nk:(c + 1) * nk] -= \
                    np.einsum("q,qi,qj->ij", fw, integ, phi_kf)

    # closure conditions
    C = np.zeros((3, 2 * nk1))
    crhs = np.zeros((3, ndof))
    ints_k1 = w @ cb_k1.eval(rule.points)        # integrals of P^{k+1} basis
    ints_k = w @ phi_k
    for c in (0, 1):
        C[c, c * nk1:(c + 1) * nk1] = ints_k1
        crhs[c, c * nk:(c + 1) * nk] = ints_k
    # mean rotation: int (d1 w_y - d2 w_x)
    C[2, nk1:] = w @ g_k1[:, :, 0]
    C[2, :nk1] = -(w @ g_k1[:, :, 1])
    for i, (fid, sign) in enumerate(faces):
        fr = frules[i]
        n = sign * mesh.faces[fid].normal
        chi_int = fr.weights @ fbs[i].eval(fr.points)
        base = 2 * nk + i * 2 * nfb
        crhs[2, base + nfb:base + 2 * nfb] += n[0] * chi_int
        crhs[2, base:base + nfb] += -n[1] * chi_int

    aug = np.zeros((2 * nk1 + 3, 2 * nk1 + 3))
    aug[:2 * nk1, :2 * nk1] = K1
    aug[:2 * nk1, 2 * nk1:] = C.T
    aug[2 * nk1:, :2 * nk1] = C
    rhs = np.vstack([Brhs, crhs])
    try:
        sol = np.linalg.solve(aug, rhs)
    except np.linalg.LinAlgError as exc:
        raise KernelError(f"degenerate element {t}: reconstruction "
                          f"system singular") from exc
    R = sol[:2 * nk1]
    G = R.T @ K1 @ R
    G = 0.5 * (G + G.T)

    # ---- divergence ----------------------------------------------------
    Bdiv = np.zeros((nk, ndof))
    for c in (0, 1):
        Bdiv[:, c * nk:(c + 1) * nk] = \
            np.einsum("q,qi,qj->ij", w, phi_k, g_k[:, :, c])
    for i, (fid, sign) in enumerate(faces):
        fr = frules[i]
        n = sign * mesh.faces[fid].normal
        phi_kf = cb_k.eval(fr.points)
        chi = fbs[i].eval(fr.points)
        base = 2 * nk + i * 2 * nfb
        for c in (0, 1):
            blk = np.einsum("q,qi,qj->ij", fr.weights, phi_kf, chi) * n[c]
            Bdiv[:, base + c * nfb:base + (c + 1) * nfb] += blk
            Bdiv[:, c * nk:(c + 1) * nk] -= \
                np.einsum("q,qi,qj->ij", fr.weights, phi_kf, phi_kf) * n[c]
    Minv = np.linalg.inv(M_k)
    D = Minv @ Bdiv

    # ---- stabilization -------------------------------------------------
    S = np.zeros((ndof, ndof))
    # projection of P^{k+1} onto P^k on the cell (component-wise)
    Mmix = np.einsum("q,qi,qj->ij", w, phi_k, cb_k1.eval(rule.points))
    PTk = Minv @ Mmix                           # (nk, nk1)
    for i, (fid, sign) in enumerate(faces):
        fr = frules[i]
        fw = fr.weights
        chi = fbs[i].eval(fr.points)
        Mf_inv = np.linalg.inv(fms[i])
        phi_k1f = cb_k1.eval(fr.points)
        phi_kf = cb_k.eval(fr.points)
        PF_k1 = Mf_inv @ np.einsum("q,qi,qj->ij", fw, chi, phi_k1f)
        TrF_k = Mf_inv @ np.einsum("q,qi,qj->ij", fw, chi, phi_kf)
        base = 2 * nk + i * 2 * nfb
        h_f = mesh.faces[fid].length
        for c in (0, 1):
            # face coefficients of Delta_TF for component c
            Delta = np.zeros((nfb, ndof))
            Delta += (PF_k1 - TrF_k @ PTk) @ R[c * nk1:(c + 1) * nk1]
            Delta[:, base + c * nfb:base + (c + 1) * nfb] -= np.eye(nfb)
            Delta[:, c * nk:(c + 1) * nk] += TrF_k
            S += (1.0 / h_f) * Delta.T @ fms[i] @ Delta
    S = 0.5 * (S + S.T)

    A = 2.0 * mu * (G + S) + lam * Bdiv.T @ Minv @ Bdiv
    A = 0.5 * (A + A.T)
    Bc = -Bdiv.T                                 # local coupling b_T

    # ---- strain-seminorm Gram ------------------------------------------
    E = np.zeros((ndof, ndof))
    Kk = _sym_grad_gram(g_k, w)
    E[:2 * nk, :2 * nk] = Kk
    for i, (fid, sign) in enumerate(faces):
        fr = frules[i]
        chi = fbs[i].eval(fr.points)
        phi_kf = cb_k.eval(fr.points)
        base = 2 * nk + i * 2 * nfb
        h_f = mesh.faces[fid].length
        for c in (0, 1):
            V = np.zeros((len(fr.weights), ndof))
            V[:, base + c * nfb:base + (c + 1) * nfb] = chi
            V[:, c * nk:(c + 1) * nk] = -phi_kf
            E += (1.0 / h_f) * (V * fr.weights[:, None]).T @ V
    E = 0.5 * (E + E.T)

    return ElasticityKernel(t, k, list(faces), cb_k, cb_k1, fbs, M_k, fms,
                            R, G, S, D, A, Bc, E)


def build_kernels(mesh: PolyMesh, sub: SubTriangulation, k: int,
                  mu: float, lam: float) -> list[ElasticityKernel]:
    return [build_kernel(mesh, sub, t, k, mu, lam)
            for t in range(mesh.n_elements)]


# ---------------------------------------------------------------------
# reduction (interpolation) of smooth fields onto the local DOF space
# ---------------------------------------------------------------------

def reduce_local(mesh: PolyMesh, sub: SubTriangulation, t: int, k: int,
                 u, order: int | None = None) -> np.ndarray:
    """Local DOFs of the reduction map: cell and face L2 projections.

    ``u`` maps (n, 2) points to (n, 2) displacement values.
    """
    from .basis import l2_project_element, l2_project_face

    if order is None:
        order = 2 * k + 6
    nk = scalar_dim(k)
    faces = mesh.element_faces[t]
    out = np.zeros(local_dof_count(k, len(faces)))
    c = l2_project_element(u, mesh, sub, t, k, order=order)
    out[:nk] = c[:, 0]
    out[nk:2 * nk] = c[:, 1]
    nfb = k + 1
    for i, (fid, _s) in enumerate(faces):
        cf = l2_project_face(u, mesh, fid, k, order=order)
        base = 2 * nk + i * 2 * nfb
        out[base:base + nfb] = cf[:, 0]
        out[base + nfb:base + 2 * nfb] = cf[:, 1]
    return out


def strain_seminorm(kernels: list[ElasticityKernel],
                    local_dofs: list[np.ndarray]) -> float:
    """Discrete strain seminorm of a displacement DOF collection."""
    acc = 0.0
    for ker, v in zip(kernels, local_dofs):
        acc += float(v @ ker.E @ v)
    return float(np.sqrt(max(acc, 0.0)))


def energy_norm(kernels: list[ElasticityKernel],
                local_dofs: list[np.ndarray]) -> float:
    """Norm induced by the elasticity bilinear form, sqrt(a_h(v, v))."""
    acc = 0.0
    for ker, v in zip(kernels, local_dofs):
        acc += float(v @ ker.A @ v)
    return float(np.sqrt(max(acc, 0.0)))
