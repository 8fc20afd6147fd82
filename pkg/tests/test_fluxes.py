import math

import numpy as np
import pytest

from polybiot import cases
from polybiot import mesh as pm
from polybiot.elasticity import reduce_local
from polybiot.fluxes import FluxEngine, discrete_derivatives
from polybiot.system import BiotSystem
from polybiot.timestepping import TimeStepper, initial_state, run_transient


def make_engine(n=2, k=1, mesh=None, **kw):
    mesh = mesh if mesh is not None else pm.generate_cartesian(n)
    sysm = BiotSystem(mesh, k, mu=1.0, lam=1.0, kappa=1.0, c0=0.0, **kw)
    return sysm, FluxEngine(sysm)


@pytest.mark.parametrize("k", [1, 2])
def test_boundary_operator_adjoint_identity(k):
    sysm, eng = make_engine(2, k, mesh=pm.generate_hexagonal(4, 4))
    rng = np.random.default_rng(k)
    for el in eng.elems[::5]:
        n = el["L"].shape[0]
        phi = rng.normal(size=n)
        psi = rng.normal(size=n)
        lhs = float((el["L"] @ phi) @ (el["Mbd"] @ psi))
        rhs = float(phi @ (el["Mbd"] @ (el["Lstar"] @ psi)))
        assert abs(lhs - rhs) < 1e-12 * max(abs(lhs), 1.0)


@pytest.mark.parametrize("k", [1, 2])
def test_stabilization_rewrite_identity(k):
    # s_T(w, v) written through the boundary operator equals the kernel
    # stabilization matrix
    sysm, eng = make_engine(2, k, mesh=pm.generate_voronoi(3, seed=6))
    for t, el in enumerate(eng.elems):
        ker = sysm.kernels[t]
        J, L, Ls, Mbd, Dh = (el["J"], el["L"], el["Lstar"], el["Mbd"],
                             el["Dh"])
        S2 = J.T @ Mbd @ (Ls @ (Dh[:, None] * (L @ J)))
        scale = np.abs(ker.S).max()
        assert np.abs(ker.S - S2).max() < 1e-12 * max(scale, 1.0)


def test_rigid_displacement_gives_zero_traction():
    sysm, eng = make_engine(2, 1)
    u = lambda p: np.stack([0.4 - 0.3 * p[:, 1], 0.1 + 0.3 * p[:, 0]],
                           axis=1)
    U = sysm.reduce_displacement(u)
    P = np.zeros(sysm.dofmap.n_pressure)
    for tr in eng.tractions(U, P):
        for phi in tr:
            assert np.abs(phi).max() < 1e-11


def test_identity_displacement_traction_value():
    # u = x gives stress 2 mu I + 2 lam I, so traction (2 mu + 2 lam) n
    sysm, eng = make_engine(2, 1)
    U = sysm.reduce_displacement(lambda p: p.copy())
    P = np.zeros(sysm.dofmap.n_pressure)
    mesh = sysm.mesh
    for t, tr in enumerate(eng.tractions(U, P)):
        for i, (fid, sign) in enumerate(mesh.element_faces[t]):
            n = sign * mesh.faces[fid].normal
            phi = tr[i]
            nfb = eng.nfb
            # constant traction: first coefficient per component
            assert abs(phi[0] - 4.0 * n[0]) < 1e-11
            assert abs(phi[nfb] - 4.0 * n[1]) < 1e-11
            assert np.abs(phi[1:nfb]).max() < 1e-11
            assert np.abs(phi[nfb + 1:]).max() < 1e-11


@pytest.mark.parametrize("scheme", ["euler", "bdf2"])
def test_solved_step_is_conservative(scheme):
    case = cases.manufactured_case()
    mesh = pm.generate_voronoi(4, seed=8)
    sysm = BiotSystem(mesh, 1, mu=1.0, lam=1.0, kappa=1.0, c0=0.0)
    eng = FluxEngine(sysm)
    tau = 0.05
    reports = []
    states = [initial_state(sysm, case.data,
                            p0=lambda p: case.pressure(0.0, p))]
    stepper = TimeStepper(sysm, tau, scheme)
    for n in range(1, 4):
        states.append(stepper.step(states, case.data))
        if len(states) > 3:
            states.pop(0)
        dU, dP, theta = discrete_derivatives(states, tau, scheme)
        t = states[-1].time
        fmom = sysm.load_vector(lambda p: case.data.body_force(t, p))
        rep = eng.report(states[-1].U, dU, states[-1].P, dP,
                         f_moments=fmom, mult=states[-1].lam,
                         mult_scale=theta / tau, time=t)
        reports.append(rep)
    for rep in reports:
        assert rep.traction_mismatch < 1e-10
        assert rep.mass_flux_mismatch < 1e-12
        assert rep.equilibrium_residual < 1e-10
        assert rep.mass_balance_residual < 1e-9


def test_mass_balance_needs_multiplier_term():
    # a fluid source with nonzero mean is absorbed by the zero-mean
    # multiplier; dropping its contribution must break the local balance
    from polybiot.timestepping import TransientData
    mesh = pm.generate_cartesian(4)
    sysm = BiotSystem(mesh, 1, mu=1.0, lam=1.0, kappa=1.0, c0=0.0)
    eng = FluxEngine(sysm)
    tau = 0.05
    g = lambda t, p: np.ones(len(p))
    data = TransientData(fluid_source=g)
    states = [initial_state(sysm, data)]
    stepper = TimeStepper(sysm, tau, "euler")
    states.append(stepper.step(states, data))
    dU, dP, theta = discrete_derivatives(states, tau, "euler")
    t = states[-1].time
    assert abs(states[-1].lam) > 1e-6
    gmom = sysm.source_vector(lambda p: g(t, p))
    with_mult = eng.report(states[-1].U, dU, states[-1].P, dP,
                           g_moments=gmom, mult=states[-1].lam,
                           mult_scale=theta / tau, time=t)
    without = eng.report(states[-1].U, dU, states[-1].P, dP,
                         g_moments=gmom, mult=0.0,
                         mult_scale=theta / tau, time=t)
    assert with_mult.mass_balance_residual < 1e-10
    assert without.mass_balance_residual > 1e3 * \
        max(with_mult.mass_balance_residual, 1e-13)
