"""Implicit time integration of the coupled system.

Backward Euler and the two-step backward differentiation scheme share
the same step operator shape; only the scale tau / theta and the history
accumulation differ.  The two-step scheme bootstraps with a single Euler
step and refuses to run with fewer than two steps of history.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .system import BiotSystem, SolveError, StepOperator


class SchemeError(Exception):
    pass


@dataclass
class TransientData:
    """Time-dependent problem data; every entry may be None (zero).

    Field callables take (t, pts) with pts of shape (n, 2).
    ``point_source`` is a ((x, y), amplitude(t)) pair adding a Dirac
    fluid source through point evaluation of the pressure test space.
    """

    body_force: object = None
    fluid_source: object = None
    boundary_displacement: object = None
    boundary_flux: object = None
    point_source: object = None


@dataclass
class TransientState:
    time: float
    U: np.ndarray
    P: np.ndarray
    lam: float = 0.0


def _flow_moments(system: BiotSystem, data: TransientData,
                  t: float) -> np.ndarray:
    G = np.zeros(system.dofmap.n_pressure)
    if data.fluid_source is not None:
        G += system.source_vector(lambda p: data.fluid_source(t, p))
    if data.boundary_flux is not None:
        G += system.pressure_flux_vector(
            lambda p, n: data.boundary_flux(t, p, n))
    if data.point_source is not None:
        (x0, amp) = data.point_source
        tele = system.mesh.element_containing(np.asarray(x0, dtype=float))
        from .basis import element_basis
        nk = system.dofmap.nk
        phi = element_basis(system.mesh, tele, system.k).eval(
            np.asarray([x0], dtype=float))[0]
        G[tele * nk:(tele + 1) * nk] += amp(t) * phi
    return G


def _disp_data(system: BiotSystem, data: TransientData,
               t: float) -> tuple[np.ndarray, np.ndarray]:
    if data.body_force is not None:
        F = system.load_vector(lambda p: data.body_force(t, p))
    else:
        F = np.zeros(system.dofmap.n_disp)
    if data.boundary_displacement is not None:
        Uc = system.dirichlet_values(
            lambda p: data.boundary_displacement(t, p))
    else:
        Uc = np.zeros(len(system.constrained))
    return F, Uc


def initial_state(system: BiotSystem, data: TransientData,
                  p0=None, t0: float = 0.0) -> TransientState:
    """Project the initial pressure and solve the elasticity problem it
    loads for a compatible initial displacement."""
    P = (system.project_pressure(lambda p: p0(p)) if p0 is not None
         else np.zeros(system.dofmap.n_pressure))
    F, Uc = _disp_data(system, data, t0)
    free = system.free_disp
    Ucol = np.zeros(system.dofmap.n_disp)
    Ucol[system.constrained] = Uc
    rhs = (F - system.A @ Ucol - system.B @ P)[free]
    A_ff = system.A[np.ix_(free, free)].tocsc()
    U = np.zeros(system.dofmap.n_disp)
    U[free] = spla.spsolve(A_ff, rhs)
    U[system.constrained] = Uc
    return TransientState(t0, U, P)


def state_from_pressure(system: BiotSystem, P: np.ndarray,
                        t0: float = 0.0) -> TransientState:
    """Compatible state for a given pressure coefficient vector: the
    displacement solves the unloaded elasticity problem it induces."""
    free = system.free_disp
    rhs = (-system.B @ P)[free]
    A_ff = system.A[np.ix_(free, free)].tocsc()
    U = np.zeros(system.dofmap.n_disp)
    U[free] = spla.spsolve(A_ff, rhs)
    return TransientState(t0, U, np.asarray(P, dtype=float))


class TimeStepper:
    """Runs a fixed-step implicit integration of the coupled system."""

    def __init__(self, system: BiotSystem, tau: float,
                 scheme: str = "bdf2", condensed: bool = True):
        if scheme not in ("euler", "bdf2"):
            raise SchemeError(f"unknown scheme '{scheme}'")
        self.system = system
        self.tau = tau
        self.scheme = scheme
        self.condensed = condensed
        # the two-step scheme only needs the Euler operator for the
        # bootstrap step; both factorizations are built on demand and
        # the bootstrap one is released afterwards so at most one large
        # factorization is held at a time
        self.op_euler = (StepOperator(system, tau, 1.0,
                                      condensed=condensed)
                         if scheme == "euler" else None)
        self.op_bdf2 = None

    def step(self, states: list[TransientState],
             data: TransientData) -> TransientState:
        """Advance from the latest state in ``states`` by one step.

        The two-step scheme falls back to Euler when only one state of
        history is available (the bootstrap step).
        """
        if not states:
            raise SchemeError("no initial state")
        sysm = self.system
        B, M, c0 = sysm.B, sysm.M, sysm.c0
        prev = states[-1]
        t_new = prev.time + self.tau
        G = _flow_moments(sysm, data, t_new)
        F, Uc = _disp_data(sysm, data, t_new)

        use_bdf2 = self.scheme == "bdf2" and len(states) >= 2
        if use_bdf2:
            prev2 = states[-2]
            Gt = ((2.0 / 3.0) * self.tau * G
                  - (4.0 / 3.0) * (B.T @ prev.U)
                  + (1.0 / 3.0) * (B.T @ prev2.U)
                  + c0 * (M @ ((4.0 / 3.0) * prev.P
                               - (1.0 / 3.0) * prev2.P)))
            if self.op_bdf2 is None:
                self.op_bdf2 = StepOperator(sysm, self.tau, 1.5,
                                            condensed=self.condensed)
            op = self.op_bdf2
        else:
            Gt = (self.tau * G - B.T @ prev.U + c0 * (M @ prev.P))
            if self.op_euler is None:
                self.op_euler = StepOperator(sysm, self.tau, 1.0,
                                             condensed=self.condensed)
            op = self.op_euler
        U, P, lam = op.solve(F, Gt, Uc)
        if self.scheme == "bdf2":
            self.op_euler = None
        return TransientState(t_new, U, P, lam)


def run_transient(system: BiotSystem, data: TransientData, tau: float,
                  n_steps: int, scheme: str = "bdf2", p0=None,
                  condensed: bool = True, observer=None
                  ) -> list[TransientState]:
    """Integrate n_steps from the compatible initial state; returns the
    last up to three states (enough history for error evaluation).

    ``observer(step, state)`` is called after every accepted step.
    """
    stepper = TimeStepper(system, tau, scheme, condensed=condensed)
    states = [initial_state(system, data, p0=p0)]
    if observer is not None:
        observer(0, states[0])
    for n in range(1, n_steps + 1):
        new = stepper.step(states, data)
        states.append(new)
        if len(states) > 3:
            states.pop(0)
        if observer is not None:
            observer(n, new)
    return states
