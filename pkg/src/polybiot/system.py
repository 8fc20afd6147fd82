"""Global Biot system: DOF bookkeeping, boundary conditions, assembly,
static condensation, and the per-step linear solve.

Displacement DOFs are ordered cells first (component-major per element),
then faces (component-major per face).  Pressure DOFs are broken
element polynomials.  Cell displacement unknowns are eliminated per
element by a Schur complement; the condensed unknowns are the free face
displacements, the pressures, and, for the incompressible pure-Neumann
case, one zero-mean multiplier.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import coupling as pcpl
from . import darcy as pdarcy
from .basis import element_basis, face_basis, l2_project_face, scalar_dim
from .elasticity import build_kernels
from .mesh import PolyMesh, subtriangulate
from .quadrature import element_rule, face_rule


class AssemblyError(Exception):
    pass


class SolveError(Exception):
    pass


@dataclass(frozen=True)
class DofMap:
    k: int
    n_elements: int
    n_faces: int
    element_faces: tuple

    @property
    def nk(self) -> int:
        return scalar_dim(self.k)

    @property
    def nfb(self) -> int:
        return self.k + 1

    @property
    def n_cell_disp(self) -> int:
        return self.n_elements * 2 * self.nk

    @property
    def n_face_disp(self) -> int:
        return self.n_faces * 2 * self.nfb

    @property
    def n_disp(self) -> int:
        return self.n_cell_disp + self.n_face_disp

    @property
    def n_pressure(self) -> int:
        return self.n_elements * self.nk

    def cell_dofs(self, t: int) -> np.ndarray:
        w = 2 * self.nk
        return np.arange(t * w, (t + 1) * w)

    def face_dofs(self, fid: int) -> np.ndarray:
        w = 2 * self.nfb
        return self.n_cell_disp + np.arange(fid * w, (fid + 1) * w)

    def element_dofs(self, t: int) -> np.ndarray:
        parts = [self.cell_dofs(t)]
        parts += [self.face_dofs(fid) for fid, _s in self.element_faces[t]]
        return np.concatenate(parts)


def condensed_dof_count(mesh: PolyMesh, k: int) -> int:
    """Unknowns left after cell elimination with clamped boundary faces:
    two vectors of k+1 face coefficients per interior face plus one
    broken pressure polynomial per element."""
    n_int = len(mesh.interior_faces)
    return 2 * (k + 1) * n_int + mesh.n_elements * scalar_dim(k)


def _tangential_component(face) -> int:
    """Component clamped by a zero-tangential-displacement condition on
    an axis-aligned boundary face."""
    return int(np.argmax(np.abs(face.tangent)))


class BiotSystem:
    """Assembled spatial operators of one poroelastic configuration."""

    def __init__(self, mesh: PolyMesh, k: int, *, mu: float, lam: float,
                 kappa, c0: float, disp_bc: str = "clamp",
                 pressure_bc: str = "neumann",
                 penalty: float | None = None):
        if disp_bc not in ("clamp", "tangential"):
            raise AssemblyError(f"unknown displacement BC '{disp_bc}'")
        if pressure_bc not in ("neumann", "dirichlet"):
            raise AssemblyError(f"unknown pressure BC '{pressure_bc}'")
        self.mesh = mesh
        self.k = k
        self.mu = mu
        self.lam = lam
        self.c0 = float(c0)
        self.kappa = np.broadcast_to(np.asarray(kappa, dtype=float),
                                     (mesh.n_elements,)).copy()
        self.disp_bc = disp_bc
        self.pressure_bc = pressure_bc
        self.sub = subtriangulate(mesh)
        self.kernels = build_kernels(mesh, self.sub, k, mu, lam)
        self.dofmap = DofMap(k, mesh.n_elements, mesh.n_faces,
                             mesh.element_faces)

        dm = self.dofmap
        self.A = self._assemble_a()
        self.B = pcpl.assemble_bh(dm, self.kernels)
        dirichlet_faces = (list(mesh.boundary_faces)
                           if pressure_bc == "dirichlet" else None)
        self.C = pdarcy.assemble_ch(mesh, self.sub, k, self.kappa,
                                    penalty=penalty,
                                    dirichlet_faces=dirichlet_faces)
        self.M = pdarcy.assemble_mass(mesh, self.sub, k)
        self.mean = pdarcy.mean_vector(mesh, self.sub, k)
        self.use_multiplier = (self.c0 == 0.0 and pressure_bc == "neumann")

        self.constrained_faces = self._constrained_faces()
        self.constrained = self._constrained_dofs()
        mask = np.ones(dm.n_disp, dtype=bool)
        mask[self.constrained] = False
        self.free_disp = np.nonzero(mask)[0]
        self.free_faces = self.free_disp[self.free_disp >= dm.n_cell_disp]
        self._moment_ops()

    # ------------------------------------------------------------------
    def _assemble_a(self) -> sp.csr_matrix:
        dm = self.dofmap
        rows, cols, vals = [], [], []
        for t, ker in enumerate(self.kernels):
            gi = dm.element_dofs(t)
            rr, cc = np.meshgrid(gi, gi, indexing="ij")
            rows.append(rr.ravel())
            cols.append(cc.ravel())
            vals.append(ker.A.ravel())
        return sp.coo_matrix(
            (np.concatenate(vals),
             (np.concatenate(rows), np.concatenate(cols))),
            shape=(dm.n_disp, dm.n_disp)).tocsr()

    def _constrained_faces(self) -> list[tuple[int, int]]:
        """(face id, component) pairs fixed by the displacement BC."""
        out = []
        for fid in self.mesh.boundary_faces:
            if self.disp_bc == "clamp":
                out.extend([(fid, 0), (fid, 1)])
            else:
                out.append((fid, _tangential_component(self.mesh.faces[fid])))
        return out

    def _constrained_dofs(self) -> np.ndarray:
        dm = self.dofmap
        idx = []
        for fid, comp in self.constrained_faces:
            base = dm.face_dofs(fid)[0]
            idx.append(np.arange(base + comp * dm.nfb,
                                 base + (comp + 1) * dm.nfb))
        if not idx:
            return np.zeros(0, dtype=int)
        return np.sort(np.concatenate(idx))

    def _moment_ops(self) -> None:
        """Sparse operators turning quadrature-point samples of data
        fields into load moments, built once and reused every step."""
        dm = self.dofmap
        mesh, sub = self.mesh, self.sub
        nk = dm.nk
        pts, wts, rows, cols, vals = [], [], [], [], []
        off = 0
        for t in range(mesh.n_elements):
            r = element_rule(mesh, sub, t, 2 * self.k + 4)
            phi = element_basis(mesh, t, self.k).eval(r.points)
            nq = len(r.weights)
            pts.append(r.points)
            wts.append(r.weights)
            rr = np.repeat(np.arange(t * nk, (t + 1) * nk), nq)
            cc = np.tile(np.arange(off, off + nq), nk)
            rows.append(rr)
            cols.append(cc)
            vals.append((phi * r.weights[:, None]).T.ravel())
            off += nq
        self.quad_points = np.vstack(pts)
        self._Phi = sp.coo_matrix(
            (np.concatenate(vals),
             (np.concatenate(rows), np.concatenate(cols))),
            shape=(dm.n_pressure, off)).tocsr()

        # boundary-face moments for natural pressure data
        pts, nrms, rows, cols, vals = [], [], [], [], []
        off = 0
        for fid in self.mesh.boundary_faces:
            f = mesh.faces[fid]
            t = f.owner
            r = face_rule(mesh, fid, 2 * self.k + 4)
            phi = element_basis(mesh, t, self.k).eval(r.points)
            nq = len(r.weights)
            pts.append(r.points)
            nrms.append(np.tile(f.normal, (nq, 1)))
            rr = np.repeat(np.arange(t * nk, (t + 1) * nk), nq)
            cc = np.tile(np.arange(off, off + nq), nk)
            rows.append(rr)
            cols.append(cc)
            vals.append((phi * r.weights[:, None]).T.ravel())
            off += nq
        if pts:
            self.bnd_points = np.vstack(pts)
            self.bnd_normals = np.vstack(nrms)
            self._PhiB = sp.coo_matrix(
                (np.concatenate(vals),
                 (np.concatenate(rows), np.concatenate(cols))),
                shape=(dm.n_pressure, off)).tocsr()
        else:
            self.bnd_points = np.zeros((0, 2))
            self.bnd_normals = np.zeros((0, 2))
            self._PhiB = sp.csr_matrix((dm.n_pressure, 0))

    # ------------------------------------------------------------------
    # data vectors
    # ------------------------------------------------------------------
    def load_vector(self, f) -> np.ndarray:
        """Body-force moments against the cell displacement test space.

        ``f`` maps (n, 2) points to (n, 2) force values.
        """
        dm = self.dofmap
        F = np.zeros(dm.n_disp)
        vals = np.asarray(f(self.quad_points), dtype=float)
        momx = (self._Phi @ vals[:, 0]).reshape(dm.n_elements, dm.nk)
        momy = (self._Phi @ vals[:, 1]).reshape(dm.n_elements, dm.nk)
        F[:dm.n_cell_disp] = np.stack([momx, momy], axis=1).ravel()
        return F

    def source_vector(self, g) -> np.ndarray:
        """Fluid-source moments against the pressure test space."""
        return self._Phi @ np.asarray(g(self.quad_points), dtype=float)

    def pressure_flux_vector(self, w) -> np.ndarray:
        """Boundary moments of prescribed natural pressure-flux data.

        ``w`` maps ((n, 2) points, (n, 2) outward normals) to the scalar
        values of k grad p . n; the moments enter the flow right-hand
        side with a positive sign.
        """
        if self.bnd_points.shape[0] == 0:
            return np.zeros(self.dofmap.n_pressure)
        vals = np.asarray(w(self.bnd_points, self.bnd_normals), dtype=float)
        return self._PhiB @ vals

    def dirichlet_values(self, u) -> np.ndarray:
        """Face-projection values of boundary data on the constrained DOFs,
        ordered consistently with ``self.constrained``."""
        dm = self.dofmap
        vals = np.zeros(dm.n_disp)
        for fid, comp in self.constrained_faces:
            c = l2_project_face(u, self.mesh, fid, self.k,
                                order=2 * self.k + 6)
            base = dm.face_dofs(fid)[0]
            vals[base + comp * dm.nfb:base + (comp + 1) * dm.nfb] = c[:, comp]
        return vals[self.constrained]

    # ------------------------------------------------------------------
    # norms and projections
    # ------------------------------------------------------------------
    def project_pressure(self, p) -> np.ndarray:
        from .basis import l2_project_element
        dm = self.dofmap
        out = np.zeros(dm.n_pressure)
        for t in range(dm.n_elements):
            out[t * dm.nk:(t + 1) * dm.nk] = l2_project_element(
                p, self.mesh, self.sub, t, self.k, order=2 * self.k + 6)
        return out

    def reduce_displacement(self, u) -> np.ndarray:
        """Global DOF vector of the displacement reduction (all cells and
        faces, including constrained ones)."""
        from .elasticity import reduce_local
        dm = self.dofmap
        U = np.zeros(dm.n_disp)
        done = np.zeros(self.mesh.n_faces, dtype=bool)
        for t in range(dm.n_elements):
            loc = reduce_local(self.mesh, self.sub, t, self.k, u)
            U[dm.cell_dofs(t)] = loc[:2 * dm.nk]
            w = 2 * dm.nfb
            for i, (fid, _s) in enumerate(self.mesh.element_faces[t]):
                if not done[fid]:
                    U[dm.face_dofs(fid)] = loc[2 * dm.nk + i * w:
                                               2 * dm.nk + (i + 1) * w]
                    done[fid] = True
        return U

    def energy_norm(self, U: np.ndarray) -> float:
        return float(np.sqrt(max(float(U @ (self.A @ U)), 0.0)))

    def pressure_l2(self, P: np.ndarray) -> float:
        return float(np.sqrt(max(float(P @ (self.M @ P)), 0.0)))


class StepOperator:
    """Factorized linear operator advancing one implicit step.

    theta = 1 for backward Euler, theta = 3/2 for the two-step backward
    differentiation scheme; the matrix only depends on tau / theta so
    one operator per scheme is reused for all steps.
    """

    def __init__(self, system: BiotSystem, tau: float, theta: float,
                 condensed: bool = True):
        self.system = system
        self.tau = tau
        self.theta = theta
        self.condensed = condensed
        self.scale = tau / theta
        sysm = system
        dm = sysm.dofmap
        Cp = self.scale * sysm.C + sysm.c0 * sysm.M
        self.n_mult = 1 if sysm.use_multiplier else 0

        if condensed:
            self._build_condensed(Cp)
        else:
            self._build_full(Cp)

    # ------------------------------------------------------------------
    def _build_full(self, Cp) -> None:
        sysm = self.system
        free = sysm.free_disp
        A_ff = sysm.A[np.ix_(free, free)]
        B_f = sysm.B[free, :]
        blocks = [[A_ff, B_f], [-B_f.T, Cp]]
        if self.n_mult:
            m = sysm.mean
            blocks[0].append(sp.csr_matrix((len(free), 1)))
            blocks[1].append(sp.csr_matrix(m[:, None]))
            blocks.append([sp.csr_matrix((1, len(free))),
                           sp.csr_matrix(m[None, :]), None])
        self.matrix = sp.bmat(blocks, format="csc")
        self._matrix_norm = float(abs(self.matrix).sum(axis=1).max())
        self.lu = spla.splu(self.matrix)

    def _build_condensed(self, Cp) -> None:
        sysm = self.system
        dm = sysm.dofmap
        nc = dm.n_cell_disp
        cells = np.arange(nc)
        ff = sysm.free_faces
        # block-diagonal inverse of the cell-cell stiffness
        inv_blocks = []
        for t, ker in enumerate(sysm.kernels):
            blk = ker.A[:2 * dm.nk, :2 * dm.nk]
            try:
                inv_blocks.append(np.linalg.inv(blk))
            except np.linalg.LinAlgError as exc:
                raise AssemblyError(
                    f"singular cell block in element {t}") from exc
        Ainv = sp.block_diag(inv_blocks, format="csr")
        A_TF = sysm.A[np.ix_(cells, ff)].tocsr()
        A_FF = sysm.A[np.ix_(ff, ff)].tocsr()
        B_T = sysm.B[cells, :].tocsr()
        B_F = sysm.B[ff, :].tocsr()
        W = Ainv @ A_TF                   # cells x free faces
        V = Ainv @ B_T                    # cells x pressures
        S_FF = (A_FF - A_TF.T @ W).tocsr()
        S_FP = (B_F - A_TF.T @ V).tocsr()
        S_PP = (Cp + B_T.T @ V).tocsr()
        blocks = [[S_FF, S_FP], [-S_FP.T, S_PP]]
        if self.n_mult:
            m = sysm.mean
            blocks[0].append(sp.csr_matrix((len(ff), 1)))
            blocks[1].append(sp.csr_matrix(m[:, None]))
            blocks.append([sp.csr_matrix((1, len(ff))),
                           sp.csr_matrix(m[None, :]), None])
        self.matrix = sp.bmat(blocks, format="csc")
        self._Ainv = Ainv
        self._W = W
        self._V = V
        self._A_TF = A_TF
        self._B_T = B_T
        self._matrix_norm = float(abs(self.matrix).sum(axis=1).max())
        self.lu = spla.splu(self.matrix)

    # ------------------------------------------------------------------
    def solve(self, F: np.ndarray, Gt: np.ndarray,
              Uc: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
        """Advance one step.

        F: displacement load moments over all displacement DOFs.
        Gt: accumulated flow right-hand side (history included).
        Uc: boundary data values on the constrained DOFs at the new time.
        Returns the full displacement vector, the pressure vector, and
        the multiplier value (0 when absent).
        """
        sysm = self.system
        dm = sysm.dofmap
        con = sysm.constrained
        # fold Dirichlet data into the right-hand side
        Ucol = np.zeros(dm.n_disp)
        Ucol[con] = Uc
        F_eff = F - sysm.A @ Ucol
        G_eff = Gt + sysm.B[con, :].T @ Uc

        if not self.condensed:
            free = sysm.free_disp
            rhs = np.concatenate([F_eff[free], G_eff]
                                 + ([np.zeros(1)] if self.n_mult else []))
            x = self._check(rhs, self.lu.solve(rhs))
            U = np.zeros(dm.n_disp)
            U[free] = x[:len(free)]
            U[con] = Uc
            P = x[len(free):len(free) + dm.n_pressure]
            lam = float(x[-1]) if self.n_mult else 0.0
            return U, P, lam

        nc = dm.n_cell_disp
        ff = sysm.free_faces
        F_T = F_eff[:nc]
        rhs_F = F_eff[ff] - self._A_TF.T @ (self._Ainv @ F_T)
        rhs_P = G_eff + self._B_T.T @ (self._Ainv @ F_T)
        rhs = np.concatenate([rhs_F, rhs_P]
                             + ([np.zeros(1)] if self.n_mult else []))
        x = self._check(rhs, self.lu.solve(rhs))
        U_F = x[:len(ff)]
        P = x[len(ff):len(ff) + dm.n_pressure]
        lam = float(x[-1]) if self.n_mult else 0.0
        U = np.zeros(dm.n_disp)
        U[ff] = U_F
        U[con] = Uc
        U[:nc] = self._Ainv @ F_T - self._W @ U_F - self._V @ P
        return U, P, lam

    def _check(self, rhs: np.ndarray, x: np.ndarray) -> np.ndarray:
        # one sweep of iterative refinement, then a scaled residual guard
        r = rhs - self.matrix @ x
        x = x + self.lu.solve(r)
        r = rhs - self.matrix @ x
        denom = max(float(np.linalg.norm(rhs)),
                    self._matrix_norm * float(np.linalg.norm(x)), 1e-14)
        rel = float(np.linalg.norm(r)) / denom
        if rel > 1e-10:
            raise SolveError(f"linear solve residual {rel:.3e}")
        return x


def dump_matrix(op: StepOperator, path: str) -> None:
    """Write the assembled step matrix in Matrix Market format."""
    from scipy.io import mmwrite
    mmwrite(path, op.matrix.tocoo())
