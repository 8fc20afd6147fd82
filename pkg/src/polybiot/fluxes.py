"""Conservative flux postprocessing.

Recovers, from a converged time step, equilibrated normal tractions and
mass fluxes on every face:

    traction(T, F) = (S(T) u - p I) n_TF
                     + 2 mu Ls(h^-1 L (u_bd - u_T))|_F
    massflux(T, F) = (-du_F/dt + {kappa grad p}_w) . n_TF
                     - (penalty lam_F / h_F) [p] (n_TF . n_F)

with S(T) the discrete stress, L the boundary difference operator and
Ls its adjoint with respect to the boundary mass matrix.  Tractions and
mass fluxes of the two elements sharing an interior face sum to zero,
and they balance the body force and fluid source element by element;
``FluxEngine.report`` verifies both properties on a solved step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import element_basis, scalar_dim
from .darcy import assemble_lifting, default_penalty, face_weights
from .quadrature import face_rule
from .system import BiotSystem


@dataclass
class FluxReport:
    """Conservation indicators of one accepted step (relative values)."""

    time: float
    traction_mismatch: float
    mass_flux_mismatch: float
    equilibrium_residual: float
    mass_balance_residual: float

    def as_row(self) -> list:
        return [self.time, self.traction_mismatch, self.mass_flux_mismatch,
                self.equilibrium_residual, self.mass_balance_residual]


def _deriv_map(mesh, sub, t, deg_from: int, deg_to: int, rule) -> list:
    """Coefficient maps of both partial derivatives, P^deg_from ->
    P^deg_to (exact since deg_to >= deg_from - 1)."""
    src = element_basis(mesh, t, deg_from)
    dst = element_basis(mesh, t, deg_to)
    phi = dst.eval(rule.points)
    M = (phi * rule.weights[:, None]).T @ phi
    g = src.grad(rule.points)
    out = []
    for c in (0, 1):
        rhs = np.einsum("q,qi,qj->ij", rule.weights, phi, g[:, :, c])
        out.append(np.linalg.solve(0.5 * (M + M.T), rhs))
    return out


class FluxEngine:
    """Precomputed per-element and per-face flux operators."""

    def __init__(self, system: BiotSystem):
        self.system = system
        sysm = system
        mesh, sub, k = sysm.mesh, sysm.sub, sysm.k
        nk = scalar_dim(k)
        nkm = scalar_dim(k - 1)
        nfb = k + 1
        self.nk, self.nkm, self.nfb = nk, nkm, nfb
        self.penalty = default_penalty(mesh, k)
        self.lifts = assemble_lifting(mesh, sub, k, sysm.kappa)
        self.elems = []
        from .quadrature import element_rule

        for t, ker in enumerate(sysm.kernels):
            faces = mesh.element_faces[t]
            nfaces = len(faces)
            nbd = nfaces * 2 * nfb
            ndof = ker.ndof
            rule = element_rule(mesh, sub, t, 2 * k + 4)
            eb = element_basis(mesh, t, k)
            phi = eb.eval(rule.points)
            g = eb.grad(rule.points)
            Mk = ker.M_k
            d_k1 = _deriv_map(mesh, sub, t, k + 1, k, rule)
            d_km = _deriv_map(mesh, sub, t, k, k - 1, rule)

            # symmetric discrete stress components in P^k coefficients
            nk1 = ker.cell_kp1.dim
            Rc = [ker.R[:nk1], ker.R[nk1:]]
            S = {}
            for a in (0, 1):
                for b in (0, 1):
                    sab = (sysm.mu * (d_k1[b] @ Rc[a] + d_k1[a] @ Rc[b]))
                    if a == b:
                        sab = sab + sysm.lam * ker.D
                    S[(a, b)] = sab          # (nk, ndof)

            # volume pairing (w, grad q)_T for P^k and P^{k-1} vectors
            Wk = np.zeros((nk, 2 * nk))
            for c in (0, 1):
                Wk[:, c * nk:(c + 1) * nk] = np.einsum(
                    "q,qjc,qi->ji", rule.weights, g[:, :, c:c + 1], phi)
            phim = element_basis(mesh, t, k - 1).eval(rule.points)
            Wkm = np.zeros((nk, 2 * nkm))
            for c in (0, 1):
                Wkm[:, c * nkm:(c + 1) * nkm] = np.einsum(
                    "q,qjc,qi->ji", rule.weights, g[:, :, c:c + 1], phim)

            # boundary difference operators
            J = np.zeros((nbd, ndof))
            Lmap = np.eye(nbd)
            Mbd = np.zeros((nbd, nbd))
            Dh = np.zeros(nbd)
            TrFs, PFk1s, rules_f = [], [], []
            for i, (fid, sign) in enumerate(faces):
                fr = face_rule(mesh, fid, 2 * k + 3)
                rules_f.append(fr)
                fb = ker.face_bases[i]
                chi = fb.eval(fr.points)
                Mf = ker.face_masses[i]
                Mf_inv = np.linalg.inv(Mf)
                tr_k = Mf_inv @ np.einsum("q,qi,qj->ij", fr.weights, chi,
                                          eb.eval(fr.points))
                tr_k1 = Mf_inv @ np.einsum("q,qi,qj->ij", fr.weights, chi,
                                           ker.cell_kp1.eval(fr.points))
                TrFs.append(tr_k)
                PFk1s.append(tr_k1)
                base = i * 2 * nfb
                dofbase = 2 * nk + i * 2 * nfb
                for c in (0, 1):
                    bs = slice(base + c * nfb, base + (c + 1) * nfb)
                    J[bs, dofbase + c * nfb:dofbase + (c + 1) * nfb] = \
                        np.eye(nfb)
                    J[bs, c * nk:(c + 1) * nk] = -tr_k
                    Mbd[bs, bs] = Mf
                    Dh[base + c * nfb:base + (c + 1) * nfb] = \
                        1.0 / mesh.faces[fid].length
            # projection of P^k onto the element (for L)
            Mmix = np.einsum("q,qi,qj->ij", rule.weights, phi,
                             ker.cell_kp1.eval(rule.points))
            PTk = np.linalg.solve(Mk, Mmix)
            Rfaces = ker.R[:, 2 * nk:]          # boundary dofs -> P^{k+1}
            for i in range(nfaces):
                base = i * 2 * nfb
                for c in (0, 1):
                    bs = slice(base + c * nfb, base + (c + 1) * nfb)
                    reduce_blk = (PFk1s[i] - TrFs[i] @ PTk)
                    Lmap[bs, :] -= reduce_blk @ Rfaces[c * nk1:(c + 1) * nk1]
            Lstar = np.linalg.solve(Mbd, Lmap.T @ Mbd)
            stab_op = 2.0 * sysm.mu * Lstar @ (Dh[:, None] * (Lmap @ J))

            # per-face traction operators
            tr_ops = []
            for i, (fid, sign) in enumerate(faces):
                n = sign * mesh.faces[fid].normal
                base = i * 2 * nfb
                Tu = np.zeros((2 * nfb, ndof))
                Tp = np.zeros((2 * nfb, nk))
                for c in (0, 1):
                    rows = slice(c * nfb, (c + 1) * nfb)
                    acc = np.zeros((nfb, ndof))
                    for b in (0, 1):
                        acc += n[b] * (TrFs[i] @ S[(c, b)])
                    Tu[rows] = acc + stab_op[base + c * nfb:
                                             base + (c + 1) * nfb]
                    Tp[rows] = -n[c] * TrFs[i]
                tr_ops.append((Tu, Tp))

            # cell-test pairings
            Eu = np.zeros((2 * nk, ndof))
            Ep = np.zeros((2 * nk, nk))
            Vb = []
            for b in (0, 1):
                Vb.append(np.einsum("q,qib,qj->ij", rule.weights,
                                    g[:, :, b:b + 1], phi))
            for c in (0, 1):
                rows = slice(c * nk, (c + 1) * nk)
                for b in (0, 1):
                    Eu[rows] += Vb[b] @ S[(c, b)]
                Ep[rows] = -Vb[c]
            Qf = []
            for i, (fid, _sign) in enumerate(faces):
                fr = rules_f[i]
                chi = ker.face_bases[i].eval(fr.points)
                q = np.einsum("q,qi,qj->ij", fr.weights,
                              eb.eval(fr.points), chi)    # (nk, nfb)
                Qf.append(q)

            interior = all(mesh.faces[fid].neighbor is not None
                           for fid, _s in faces)
            ints = rule.weights @ phi
            self.elems.append(dict(
                faces=faces, S=S, Wk=Wk, Wkm=Wkm, tr_ops=tr_ops,
                Eu=Eu, Ep=Ep, Qf=Qf, Mk=Mk, d_km=d_km, ints=ints,
                interior=interior, J=J, L=Lmap, Lstar=Lstar, Mbd=Mbd,
                Dh=Dh,
                # entrywise absolute values for the round-off scales of
                # the balance residuals
                Eu_a=np.abs(Eu), Ep_a=np.abs(Ep),
                Qf_a=[np.abs(q) for q in Qf], Wk_a=np.abs(Wk),
                Wkm_a=np.abs(Wkm), Mk_a=np.abs(Mk)))

        # per interior face: single-valued mass-flux operators
        self.face_ops = {}
        for fid, f in enumerate(mesh.faces):
            if f.neighbor is None:
                continue
            t1, t2 = f.owner, f.neighbor
            fw = face_weights(sysm.kappa[t1], sysm.kappa[t2])
            fr = face_rule(mesh, fid, 2 * k + 3)
            from .basis import face_basis
            fb = face_basis(mesh, fid, k)
            chi = fb.eval(fr.points)
            Mf = (chi * fr.weights[:, None]).T @ chi
            Mf_inv = np.linalg.inv(0.5 * (Mf + Mf.T))
            nrm = f.normal
            ops = {}
            for t, w in ((t1, fw.w1), (t2, fw.w2)):
                ebt = element_basis(mesh, t, k)
                gt = ebt.grad(fr.points)
                ops[("avg", t)] = (w * sysm.kappa[t]) * (Mf_inv @ np.einsum(
                    "q,qi,qj->ij", fr.weights, chi, gt @ nrm))
                ops[("tr", t)] = Mf_inv @ np.einsum(
                    "q,qi,qj->ij", fr.weights, chi, ebt.eval(fr.points))
            pen = self.penalty * fw.lam / f.length
            self.face_ops[fid] = (t1, t2, nrm, pen, ops)

    # ------------------------------------------------------------------
    def _local_fields(self, U: np.ndarray, P: np.ndarray, t: int):
        dm = self.system.dofmap
        u_loc = U[dm.element_dofs(t)]
        p_loc = P[t * self.nk:(t + 1) * self.nk]
        return u_loc, p_loc

    def tractions(self, U: np.ndarray, P: np.ndarray) -> list:
        """Per-element lists of face traction coefficient vectors."""
        out = []
        for t, el in enumerate(self.elems):
            u_loc, p_loc = self._local_fields(U, P, t)
            out.append([Tu @ u_loc + Tp @ p_loc
                        for (Tu, Tp) in el["tr_ops"]])
        return out

    def mass_flux_single_valued(self, dUdt: np.ndarray,
                                P: np.ndarray) -> dict:
        """Face-basis coefficients of the single-valued interior flux;
        the flux seen from element T is this times (n_TF . n_F)."""
        dm = self.system.dofmap
        nfb = self.nfb
        out = {}
        for fid, (t1, t2, nrm, pen, ops) in self.face_ops.items():
            fd = dUdt[dm.face_dofs(fid)]
            vdotn = nrm[0] * fd[:nfb] + nrm[1] * fd[nfb:]
            p1 = P[t1 * self.nk:(t1 + 1) * self.nk]
            p2 = P[t2 * self.nk:(t2 + 1) * self.nk]
            avg = ops[("avg", t1)] @ p1 + ops[("avg", t2)] @ p2
            jump = ops[("tr", t1)] @ p1 - ops[("tr", t2)] @ p2
            out[fid] = -vdotn + avg - pen * jump
        return out

    # ------------------------------------------------------------------
    def report(self, U, dUdt, P, dPdt, *, f_moments=None, g_moments=None,
               mult: float = 0.0, mult_scale: float = 0.0,
               time: float = 0.0) -> FluxReport:
        """Conservation indicators for one converged step.

        ``dUdt`` and ``dPdt`` are the scheme's discrete time derivatives;
        ``f_moments`` and ``g_moments`` are the body-force and
        fluid-source moment vectors at the step time (zero when None).
        ``mult`` is the zero-mean multiplier of the step scaled by
        ``mult_scale`` = theta / tau.
        """
        sysm = self.system
        dm = sysm.dofmap
        nk, nkm = self.nk, self.nkm
        if f_moments is None:
            f_moments = np.zeros(dm.n_disp)
        if g_moments is None:
            g_moments = np.zeros(dm.n_pressure)

        tractions = self.tractions(U, P)
        sv_flux = self.mass_flux_single_valued(dUdt, P)

        # interior-face conservation
        tr_mis, tr_scale = 0.0, 1e-300
        fidx = {}
        for t, el in enumerate(self.elems):
            for i, (fid, _s) in enumerate(el["faces"]):
                fidx.setdefault(fid, []).append((t, i))
        for fid, sides in fidx.items():
            if self.system.mesh.faces[fid].neighbor is None:
                continue
            (ta, ia), (tb, ib) = sides
            pa = tractions[ta][ia]
            pb = tractions[tb][ib]
            tr_mis = max(tr_mis, float(np.abs(pa + pb).max()))
            tr_scale = max(tr_scale, float(np.abs(pa).max()),
                           float(np.abs(pb).max()))
        # mass flux is single valued by construction; evaluate both
        # orientations explicitly
        ms_mis, ms_scale = 0.0, 1e-300
        for fid, sv in sv_flux.items():
            f1 = sv * 1.0       # owner side, n_TF . n_F = +1
            f2 = sv * -1.0      # neighbor side
            ms_mis = max(ms_mis, float(np.abs(f1 + f2).max()))
            ms_scale = max(ms_scale, float(np.abs(sv).max()))

        # local balances.  Residuals are normalized by the entrywise
        # round-off scale of their own evaluation (sums of absolute
        # contributions), with the discrete time derivatives floored at
        # ``rate`` times the state they difference: a difference
        # quotient carries an absolute round-off of that size, so the
        # balance cannot be computed more accurately than that even
        # when the derivative itself momentarily vanishes.
        rate = max(mult_scale, 1.0)
        sv_floor = self.mass_flux_single_valued(rate * U, P)
        eq_res, eq_scale = 0.0, 1e-300
        mb_res, mb_scale = 0.0, 1e-300
        for t, el in enumerate(self.elems):
            u_loc, p_loc = self._local_fields(U, P, t)
            res = el["Eu"] @ u_loc + el["Ep"] @ p_loc
            floor = el["Eu_a"] @ np.abs(u_loc) + el["Ep_a"] @ np.abs(p_loc)
            for i, (fid, _s) in enumerate(el["faces"]):
                phi = tractions[t][i]
                contrib = np.concatenate([el["Qf"][i] @ phi[:self.nfb],
                                          el["Qf"][i] @ phi[self.nfb:]])
                res -= contrib
                aphi = np.abs(phi)
                floor += np.concatenate([el["Qf_a"][i] @ aphi[:self.nfb],
                                         el["Qf_a"][i] @ aphi[self.nfb:]])
            fm = f_moments[dm.cell_dofs(t)]
            eq_res = max(eq_res, float(np.abs(res - fm).max()))
            eq_scale = max(eq_scale, float(floor.max()),
                           float(np.abs(fm).max()), 1e-12)

            if not el["interior"]:
                continue
            du_loc, dp_loc = self._local_fields(dUdt, dPdt, t)
            kap = sysm.kappa[t]
            gradp = np.concatenate([el["d_km"][0] @ p_loc,
                                    el["d_km"][1] @ p_loc])
            wkm = kap * (gradp - self.lifts[t] @ P)
            terms = [sysm.c0 * (el["Mk"] @ dp_loc),
                     -el["Wk"] @ du_loc[:2 * nk],
                     el["Wkm"] @ wkm,
                     mult * mult_scale * el["ints"]]
            floors = [sysm.c0 * (el["Mk_a"] @ (np.abs(dp_loc)
                                               + rate * np.abs(p_loc))),
                      el["Wk_a"] @ (np.abs(du_loc[:2 * nk])
                                    + rate * np.abs(u_loc[:2 * nk])),
                      el["Wkm_a"] @ np.abs(wkm)]
            for i, (fid, s) in enumerate(el["faces"]):
                sv = sv_flux[fid]
                sgn = 1.0 if sysm.mesh.faces[fid].owner == t else -1.0
                terms.append(-sgn * (el["Qf"][i] @ sv))
                floors.append(el["Qf_a"][i] @ (np.abs(sv)
                                               + np.abs(sv_floor[fid])))
            mres = np.sum(terms, axis=0)
            gm = g_moments[t * nk:(t + 1) * nk]
            mb_res = max(mb_res, float(np.abs(mres - gm).max()))
            mb_scale = max(mb_scale, float(np.abs(gm).max()), 1e-12,
                           *(float(np.abs(v).max()) for v in floors))

        return FluxReport(time,
                          tr_mis / tr_scale,
                          ms_mis / max(ms_scale, 1e-300),
                          eq_res / eq_scale,
                          mb_res / mb_scale)


def discrete_derivatives(states, tau: float, scheme: str):
    """Backward difference of the last state transition, matching the
    integrator: first order for Euler and for the bootstrap step, the
    two-step backward formula otherwise."""
    if scheme == "bdf2" and len(states) >= 3:
        u = (3.0 * states[-1].U - 4.0 * states[-2].U
             + states[-3].U) / (2.0 * tau)
        p = (3.0 * states[-1].P - 4.0 * states[-2].P
             + states[-3].P) / (2.0 * tau)
        theta = 1.5
    else:
        u = (states[-1].U - states[-2].U) / tau
        p = (states[-1].P - states[-2].P) / tau
        theta = 1.0
    return u, p, theta


def write_flux_csv(path: str, reports: list) -> None:
    import csv
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "traction_mismatch", "mass_flux_mismatch",
                    "equilibrium_residual", "mass_balance_residual"])
        for r in reports:
            w.writerow(r.as_row())
