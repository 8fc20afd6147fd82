"""Benchmark drivers: mesh ladders, convergence studies, the point-source
consolidation problem, and CSV reporting."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import cases
from . import mesh as pmesh
from .basis import element_basis, scalar_dim
from .fluxes import FluxEngine, discrete_derivatives
from .system import BiotSystem
from .timestepping import TimeStepper, initial_state


class HarnessError(Exception):
    pass


MESH_FAMILIES = ("cartesian", "triangular", "hexagonal", "voronoi",
                 "nonmatching")


def build_mesh(family: str, level: int) -> pmesh.PolyMesh:
    """Level-0 meshes have about 16 to 60 elements; each level halves h."""
    if family == "cartesian":
        return pmesh.generate_cartesian(4 * 2 ** level)
    if family == "triangular":
        return pmesh.generate_triangular(4 * 2 ** level)
    if family == "hexagonal":
        n = 8 * 2 ** level
        return pmesh.generate_hexagonal(n, n)
    if family == "voronoi":
        return pmesh.generate_voronoi(4 * 2 ** level, seed=17 + level)
    if family == "nonmatching":
        return pmesh.generate_nonmatching(4 * 2 ** level)
    raise HarnessError(f"unknown mesh family '{family}'; "
                       f"expected one of {MESH_FAMILIES}")


@dataclass
class ConvergenceRow:
    family: str
    level: int
    h: float
    n_elements: int
    tau: float
    n_steps: int
    err_p: float
    err_u: float
    eoc_p: float = float("nan")
    eoc_u: float = float("nan")
    max_traction_mismatch: float = 0.0
    max_mass_mismatch: float = 0.0
    max_equilibrium_residual: float = 0.0
    max_mass_balance_residual: float = 0.0

    HEADER = ["family", "level", "h", "n_elements", "tau", "n_steps",
              "err_p", "err_u", "eoc_p", "eoc_u",
              "max_traction_mismatch", "max_mass_mismatch",
              "max_equilibrium_residual", "max_mass_balance_residual"]

    def as_row(self) -> list:
        return [self.family, self.level, self.h, self.n_elements, self.tau,
                self.n_steps, self.err_p, self.err_u, self.eoc_p,
                self.eoc_u, self.max_traction_mismatch,
                self.max_mass_mismatch, self.max_equilibrium_residual,
                self.max_mass_balance_residual]


def run_convergence(k: int, family: str, levels: int,
                    scheme: str = "bdf2", check_fluxes: bool = True,
                    condensed: bool = True) -> list[ConvergenceRow]:
    """Smooth-solution convergence study over a mesh ladder.

    The time step shrinks with the level so the second-order temporal
    error stays below the spatial one; errors are the final-time L2
    pressure distance to the element projection and the energy-norm
    displacement distance to the reduction of the exact solution.
    """
    case = cases.manufactured_case()
    ladder = cases.time_step_ladder(k, levels, case.t_final)
    rows = []
    for level in range(levels):
        mesh = build_mesh(family, level)
        sysm = BiotSystem(mesh, k, mu=case.mu, lam=case.lam,
                          kappa=case.kappa, c0=case.c0)
        tau, n_steps = ladder[level]
        engine = FluxEngine(sysm) if check_fluxes else None
        stepper = TimeStepper(sysm, tau, scheme, condensed=condensed)
        states = [initial_state(sysm, case.data,
                                p0=lambda p: case.pressure(0.0, p))]
        maxes = [0.0, 0.0, 0.0, 0.0]
        for n in range(1, n_steps + 1):
            states.append(stepper.step(states, case.data))
            if len(states) > 3:
                states.pop(0)
            if engine is not None:
                dU, dP, theta = discrete_derivatives(states, tau, scheme)
                t = states[-1].time
                fmom = sysm.load_vector(
                    lambda p: case.data.body_force(t, p))
                rep = engine.report(states[-1].U, dU, states[-1].P, dP,
                                    f_moments=fmom, mult=states[-1].lam,
                                    mult_scale=theta / tau, time=t)
                vals = [rep.traction_mismatch, rep.mass_flux_mismatch,
                        rep.equilibrium_residual,
                        rep.mass_balance_residual]
                maxes = [max(a, b) for a, b in zip(maxes, vals)]
        st = states[-1]
        Pex = sysm.project_pressure(lambda p: case.pressure(st.time, p))
        Uex = sysm.reduce_displacement(
            lambda p: case.displacement(st.time, p))
        rows.append(ConvergenceRow(
            family, level, mesh.h, mesh.n_elements, tau, n_steps,
            sysm.pressure_l2(st.P - Pex), sysm.energy_norm(st.U - Uex),
            max_traction_mismatch=maxes[0], max_mass_mismatch=maxes[1],
            max_equilibrium_residual=maxes[2],
            max_mass_balance_residual=maxes[3]))
    attach_eoc(rows)
    return rows


def attach_eoc(rows: list[ConvergenceRow]) -> None:
    for prev, cur in zip(rows, rows[1:]):
        r = math.log(prev.h / cur.h)
        if prev.err_p > 0 and cur.err_p > 0:
            cur.eoc_p = math.log(prev.err_p / cur.err_p) / r
        if prev.err_u > 0 and cur.err_u > 0:
            cur.eoc_u = math.log(prev.err_u / cur.err_u) / r


def run_temporal_convergence(k: int = 2, taus=(0.1, 0.05, 0.025, 0.0125),
                             family: str = "hexagonal", level: int = 2,
                             scheme: str = "bdf2") -> list[dict]:
    """Time-step refinement on one fine mesh; the spatial error is small
    enough that the observed order is the scheme's."""
    case = cases.manufactured_case()
    mesh = build_mesh(family, level)
    sysm = BiotSystem(mesh, k, mu=case.mu, lam=case.lam,
                      kappa=case.kappa, c0=case.c0)
    out = []
    for tau in taus:
        n_steps = round(case.t_final / tau)
        stepper = TimeStepper(sysm, tau, scheme)
        states = [initial_state(sysm, case.data,
                                p0=lambda p: case.pressure(0.0, p))]
        for n in range(1, n_steps + 1):
            states.append(stepper.step(states, case.data))
            if len(states) > 3:
                states.pop(0)
        st = states[-1]
        Pex = sysm.project_pressure(lambda p: case.pressure(st.time, p))
        Uex = sysm.reduce_displacement(
            lambda p: case.displacement(st.time, p))
        err = math.hypot(sysm.pressure_l2(st.P - Pex),
                         sysm.energy_norm(st.U - Uex))
        row = dict(tau=tau, n_steps=n_steps, err=err, eoc=float("nan"))
        if out:
            row["eoc"] = math.log(out[-1]["err"] / err) \
                / math.log(out[-1]["tau"] / tau)
        out.append(row)
    return out


# ---------------------------------------------------------------------
# point-source consolidation
# ---------------------------------------------------------------------

def evaluate_pressure(sysm: BiotSystem, P: np.ndarray,
                      points: np.ndarray) -> np.ndarray:
    nk = sysm.dofmap.nk
    out = np.zeros(len(points))
    for i, x in enumerate(points):
        t = sysm.mesh.element_containing(x)
        phi = element_basis(sysm.mesh, t, sysm.k).eval(x[None, :])[0]
        out[i] = phi @ P[t * nk:(t + 1) * nk]
    return out


@dataclass
class BarryMercerResult:
    mesh_h: float
    n_elements: int
    times: list
    diagonal: np.ndarray            # sample abscissae s, points (s, s)
    profiles: dict                  # normalized time -> pressure samples
    spurious_extrema: int = -1
    system: BiotSystem = None       # for field export
    final_state: object = None


def diagonal_points(n: int = 101) -> np.ndarray:
    s = np.linspace(0.0, 1.0, n)
    return np.stack([s, s], axis=1)


def count_spurious_extrema(samples: np.ndarray, points: np.ndarray,
                           x0, exclusion: float,
                           rel_prominence: float = 1.0e-3) -> int:
    """Interior local extrema of a profile outside a radius around the
    source location.

    Only extrema whose prominence relative to both neighbors exceeds
    ``rel_prominence`` times the peak-to-peak range are counted.  This
    ignores round-off noise and the sub-plotting-scale interpolation
    ripple of the near-singular source field while still flagging
    oscillations of visible amplitude.
    """
    d = np.linalg.norm(points - np.asarray(x0), axis=1)
    tol = rel_prominence * max(np.ptp(samples), 1e-300)
    count = 0
    for i in range(1, len(samples) - 1):
        if d[i] <= exclusion:
            continue
        left = samples[i] - samples[i - 1]
        right = samples[i] - samples[i + 1]
        if left * right > 0 and min(abs(left), abs(right)) > tol:
            count += 1
    return count


def run_barry_mercer(k: int = 1, rows: int = 32, cols: int = 34,
                     kappa: float = 1.0e-2, n_steps: int = 100,
                     scheme: str = "bdf2") -> BarryMercerResult:
    """Point-source consolidation over one source period.

    Time is scaled by beta = (lam + 2 mu) kappa; the run covers
    normalized time 2 pi in ``n_steps`` steps and records the pressure
    on the domain diagonal at normalized times pi/2 and 3 pi/2.
    """
    case = cases.barry_mercer_case(kappa=kappa)
    mesh = pmesh.generate_hexagonal(rows, cols)
    sysm = BiotSystem(mesh, k, mu=case.mu, lam=case.lam, kappa=case.kappa,
                      c0=case.c0, disp_bc="tangential",
                      pressure_bc="dirichlet")
    tau = (2.0 * math.pi / case.beta) / n_steps
    stepper = TimeStepper(sysm, tau, scheme)
    states = [initial_state(sysm, case.data)]
    pts = diagonal_points()
    targets = {0.5 * math.pi: None, 1.5 * math.pi: None}
    for n in range(1, n_steps + 1):
        states.append(stepper.step(states, case.data))
        if len(states) > 3:
            states.pop(0)
        t_hat = case.beta * states[-1].time
        for key in targets:
            if targets[key] is None and t_hat >= key - 1e-9:
                targets[key] = evaluate_pressure(sysm, states[-1].P, pts)
    profiles = {k_: v for k_, v in targets.items()}
    return BarryMercerResult(mesh.h, mesh.n_elements,
                             [s * tau * case.beta for s in range(n_steps)],
                             pts, profiles, system=sysm,
                             final_state=states[-1])


def run_barry_mercer_robustness(k: int = 1, rows: int = 64, cols: int = 66,
                                kappa: float = 1.0e-6,
                                tau: float = 1.0e-4,
                                family: str = "hexagonal",
                                ) -> BarryMercerResult:
    """Low-permeability stress test: two steps on a fine mesh; counts
    local pressure extrema of visible amplitude on the diagonal away
    from the source, which flag spurious oscillations."""
    case = cases.barry_mercer_case(kappa=kappa)
    if family == "hexagonal":
        mesh = pmesh.generate_hexagonal(rows, cols)
    elif family == "cartesian":
        mesh = pmesh.generate_cartesian(rows)
    else:
        raise HarnessError(f"unsupported robustness mesh family {family!r}")
    sysm = BiotSystem(mesh, k, mu=case.mu, lam=case.lam, kappa=case.kappa,
                      c0=case.c0, disp_bc="tangential",
                      pressure_bc="dirichlet")
    stepper = TimeStepper(sysm, tau, "bdf2")
    states = [initial_state(sysm, case.data)]
    pts = diagonal_points(201)
    profiles = {}
    n_osc = 0
    for n in range(2):
        states.append(stepper.step(states, case.data))
        prof = evaluate_pressure(sysm, states[-1].P, pts)
        profiles[case.beta * states[-1].time] = prof
        n_osc = max(n_osc, count_spurious_extrema(
            prof, pts, case.source_point, 2.0 * mesh.h))
    res = BarryMercerResult(mesh.h, mesh.n_elements, [], pts, profiles)
    res.spurious_extrema = n_osc
    return res


def profile_diagnostics(result: BarryMercerResult) -> dict:
    """Peak and symmetry diagnostics for the two recorded profiles.

    Returns the location and value of the early-time pressure peak, the
    largest positive local maximum away from it, and the correlation
    between the early and late profiles (a sign-flipping source makes
    the late profile the near-negation of the early one).
    """
    keys = sorted(result.profiles)
    if len(keys) != 2:
        raise HarnessError("expected exactly two recorded profiles")
    early = result.profiles[keys[0]]
    late = result.profiles[keys[1]]
    s = result.diagonal[:, 0]
    i = int(np.argmax(early))
    peak_s, peak_p = float(s[i]), float(early[i])
    secondary = 0.0
    for j in range(1, len(s) - 1):
        if abs(s[j] - peak_s) <= 2.0 * result.mesh_h:
            continue
        if early[j] > early[j - 1] and early[j] > early[j + 1]:
            secondary = max(secondary, float(early[j]))
    corr = float(np.corrcoef(early, late)[0, 1])
    return {"peak_location": peak_s, "peak_value": peak_p,
            "secondary_peak": secondary, "correlation": corr}


def reference_profile_error(result: BarryMercerResult, path: str,
                            t_hat: float = 0.5 * math.pi) -> float:
    """Relative L2 distance between a computed diagonal profile and a
    user-supplied reference.

    The reference file is a CSV with two columns (diagonal abscissa s,
    pressure); a non-numeric header row is allowed.  The reference is
    linearly interpolated onto the computed sample points.
    """
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            try:
                rows.append((float(rec[0]), float(rec[1])))
            except (ValueError, IndexError):
                continue
    if len(rows) < 2:
        raise HarnessError(f"reference profile {path!r} has fewer than "
                           f"two numeric rows")
    ref = np.array(sorted(rows))
    key = min(result.profiles, key=lambda t: abs(t - t_hat))
    prof = result.profiles[key]
    s = result.diagonal[:, 0]
    ref_s = np.interp(s, ref[:, 0], ref[:, 1])
    denom = float(np.linalg.norm(ref_s))
    if denom == 0.0:
        raise HarnessError("reference profile is identically zero")
    return float(np.linalg.norm(prof - ref_s)) / denom


# ---------------------------------------------------------------------
# CSV and field output
# ---------------------------------------------------------------------

def write_convergence_csv(path: str, rows: list[ConvergenceRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ConvergenceRow.HEADER)
        for r in rows:
            w.writerow(r.as_row())


def write_profile_csv(path: str, result: BarryMercerResult) -> None:
    keys = sorted(result.profiles)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s"] + [f"p_that_{k_:.6f}" for k_ in keys])
        for i in range(len(result.diagonal)):
            w.writerow([result.diagonal[i, 0]]
                       + [result.profiles[k_][i] for k_ in keys])


def export_fields(path: str, sysm: BiotSystem, U: np.ndarray,
                  P: np.ndarray) -> None:
    """Cell-averaged field values at element barycenters, one CSV row
    per element."""
    dm = sysm.dofmap
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "ux", "uy", "p"])
        for t in range(sysm.mesh.n_elements):
            bc = sysm.mesh.barycenters[t]
            phi = element_basis(sysm.mesh, t, sysm.k).eval(bc[None, :])[0]
            uloc = U[dm.cell_dofs(t)]
            ux = phi @ uloc[:dm.nk]
            uy = phi @ uloc[dm.nk:]
            p = phi @ P[t * dm.nk:(t + 1) * dm.nk]
            w.writerow([bc[0], bc[1], ux, uy, p])
