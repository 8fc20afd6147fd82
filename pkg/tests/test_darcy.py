import math

import numpy as np
import pytest
import scipy.sparse as sp

from polybiot import basis as pb
from polybiot import darcy as pd
from polybiot import mesh as pm


def project_broken(mesh, sub, k, f):
    nk = pb.scalar_dim(k)
    p = np.zeros(mesh.n_elements * nk)
    for t in range(mesh.n_elements):
        p[t * nk:(t + 1) * nk] = pb.l2_project_element(
            f, mesh, sub, t, k, order=2 * k + 8)
    return p


def test_face_weights_arithmetic():
    fw = pd.face_weights(1.0, 3.0)
    assert math.isclose(fw.w1, 0.75)
    assert math.isclose(fw.w2, 0.25)
    assert math.isclose(fw.lam, 1.5)
    fw = pd.face_weights(2.0, 2.0)
    assert fw.w1 == fw.w2 == 0.5
    assert fw.lam == 2.0


@pytest.mark.parametrize("k", [1, 2])
def test_constants_in_kernel(k):
    mesh = pm.generate_hexagonal(4, 4)
    sub = pm.subtriangulate(mesh)
    C = pd.assemble_ch(mesh, sub, k, np.ones(mesh.n_elements))
    p = project_broken(mesh, sub, k, lambda x: np.ones(len(x)))
    assert np.abs(C @ p).max() < 1e-12
    # energy is machine zero; the seminorm is its square root
    assert pd.ch_seminorm(C, p) < 1e-6


def test_symmetry_and_psd():
    mesh = pm.generate_voronoi(4, seed=3)
    sub = pm.subtriangulate(mesh)
    rng = np.random.default_rng(0)
    kappa = rng.uniform(0.5, 2.0, size=mesh.n_elements)
    C = pd.assemble_ch(mesh, sub, 2, kappa)
    d = C - C.T
    assert abs(d).max() < 1e-11
    ev = np.linalg.eigvalsh(C.toarray())
    assert ev.min() > -1e-10 * ev.max()
    # only the global constant is in the kernel (pure Neumann)
    assert (ev < 1e-10 * ev.max()).sum() == 1


def test_dirichlet_faces_remove_kernel():
    mesh = pm.generate_cartesian(3)
    sub = pm.subtriangulate(mesh)
    C = pd.assemble_ch(mesh, sub, 1, np.ones(mesh.n_elements),
                       dirichlet_faces=list(mesh.boundary_faces))
    ev = np.linalg.eigvalsh(C.toarray())
    assert ev.min() > 1e-8


def test_consistency_smooth_solution():
    # -div(grad p) = f with p = cos(pi x) cos(pi y) (pure Neumann);
    # the SWIP solve converges at order k+1 in L2
    k = 1
    errs = []
    for n in (4, 8, 16):
        mesh = pm.generate_cartesian(n)
        sub = pm.subtriangulate(mesh)
        kappa = np.ones(mesh.n_elements)
        C = pd.assemble_ch(mesh, sub, k, kappa)
        M = pd.assemble_mass(mesh, sub, k)
        m = pd.mean_vector(mesh, sub, k)
        f = lambda x: 2 * np.pi ** 2 * np.cos(np.pi * x[:, 0]) \
            * np.cos(np.pi * x[:, 1])
        pex = lambda x: np.cos(np.pi * x[:, 0]) * np.cos(np.pi * x[:, 1])
        b = M @ project_broken(mesh, sub, k, f)
        A = sp.bmat([[C, m[:, None]], [m[None, :], None]], format="csc")
        sol = sp.linalg.spsolve(A, np.concatenate([b, [0.0]]))
        d = sol[:-1] - project_broken(mesh, sub, k, pex)
        errs.append(math.sqrt(d @ (M @ d)))
    rate = math.log(errs[1] / errs[2], 2)
    assert rate > k + 0.8, (errs, rate)


def test_heterogeneous_penalty_uses_harmonic_mean():
    # two-element mesh with contrasting permeability: the penalty factor
    # follows 2 k1 k2 / (k1 + k2), so the assembled matrix scales with
    # the small permeability, not the large one
    mesh = pm.generate_cartesian(2)
    sub = pm.subtriangulate(mesh)
    kap = np.ones(mesh.n_elements)
    kap[0] = 1e6
    C = pd.assemble_ch(mesh, sub, 1, kap)
    # rows of elements away from element 0 are O(1)
    nk = pb.scalar_dim(1)
    far = 3  # diagonal neighbor shares no face with element 0
    blk = C[far * nk:(far + 1) * nk, :].toarray()
    assert np.abs(blk).max() < 1e3


def test_seminorm_negative_energy_raises():
    C = sp.csr_matrix(np.array([[-1.0]]))
    with pytest.raises(pd.SeminormError):
        pd.ch_seminorm(C, np.array([1.0]))


def test_lifting_identity():
    # (R_h q, xi)_T summed over elements equals
    # sum over interior faces of ([q], {kappa xi}_w . n_F)_F
    # with xi a broken degree k-1 vector polynomial
    mesh = pm.generate_cartesian(2)
    sub = pm.subtriangulate(mesh)
    k = 2
    nk = pb.scalar_dim(k)
    nkm = pb.scalar_dim(k - 1)
    rng = np.random.default_rng(5)
    kappa = rng.uniform(0.5, 3.0, size=mesh.n_elements)
    lifts = pd.assemble_lifting(mesh, sub, k, kappa)
    q = rng.normal(size=mesh.n_elements * nk)
    xi = [rng.normal(size=2 * nkm) for _ in range(mesh.n_elements)]

    lhs = 0.0
    from polybiot.quadrature import element_rule, face_rule
    for t in range(mesh.n_elements):
        ebm = pb.element_basis(mesh, t, k - 1)
        r = element_rule(mesh, sub, t, 2 * k + 2)
        phi = ebm.eval(r.points)
        rq = lifts[t] @ q
        vals = np.stack([phi @ rq[:nkm], phi @ rq[nkm:]], axis=1)
        xv = np.stack([phi @ xi[t][:nkm], phi @ xi[t][nkm:]], axis=1)
        lhs += float(np.sum(r.weights * np.sum(vals * xv, axis=1)))

    rhs = 0.0
    for fid, f in enumerate(mesh.faces):
        if f.neighbor is None:
            continue
        t1, t2 = f.owner, f.neighbor
        fw = pd.face_weights(kappa[t1], kappa[t2])
        fr = face_rule(mesh, fid, 2 * k + 2)
        jump = (pb.element_basis(mesh, t1, k).eval(fr.points)
                @ q[t1 * nk:(t1 + 1) * nk]
                - pb.element_basis(mesh, t2, k).eval(fr.points)
                @ q[t2 * nk:(t2 + 1) * nk])
        avg = np.zeros((len(fr.weights), 2))
        for t, w in ((t1, fw.w1), (t2, fw.w2)):
            phi = pb.element_basis(mesh, t, k - 1).eval(fr.points)
            avg[:, 0] += w * kappa[t] * (phi @ xi[t][:nkm])
            avg[:, 1] += w * kappa[t] * (phi @ xi[t][nkm:])
        rhs += float(np.sum(fr.weights * jump * (avg @ f.normal)))

    assert math.isclose(lhs, rhs, rel_tol=1e-11, abs_tol=1e-12)
