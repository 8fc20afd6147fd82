"""Built-in benchmark configurations.

``manufactured_case`` is a smooth space-time solution on the unit square
with unit material parameters, used for convergence studies; the body
force is derived analytically from the chosen displacement and pressure.
``barry_mercer_case`` is the classical point-source consolidation
problem with tangentially clamped boundaries and drained (zero
pressure) boundary faces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .timestepping import TransientData


@dataclass(frozen=True)
class ManufacturedCase:
    mu: float
    lam: float
    kappa: float
    c0: float
    t_final: float
    data: TransientData

    def displacement(self, t, p):
        s = math.sin(math.pi * t)
        return np.stack([
            -s * np.cos(np.pi * p[:, 0]) * np.cos(np.pi * p[:, 1]),
            s * np.sin(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1])], axis=1)

    def pressure(self, t, p):
        return (-math.cos(math.pi * t) * np.sin(np.pi * p[:, 0])
                * np.cos(np.pi * p[:, 1]))


def manufactured_case() -> ManufacturedCase:
    """Smooth benchmark with mu = lam = kappa = 1 and c0 = 0.

    Exact fields:
        u = sin(pi t) (-cos(pi x) cos(pi y), sin(pi x) sin(pi y))
        p = -cos(pi t) sin(pi x) cos(pi y)
    The fluid source vanishes identically; the body force is
        f = (6 pi^2 sin(pi t) + pi cos(pi t))
            (-cos(pi x) cos(pi y), sin(pi x) sin(pi y)).
    Displacement is enforced on the whole boundary; the pressure
    satisfies a natural flux condition with data kappa grad p . n.
    """

    def body_force(t, p):
        amp = (6.0 * math.pi ** 2 * math.sin(math.pi * t)
               + math.pi * math.cos(math.pi * t))
        return amp * np.stack([
            -np.cos(np.pi * p[:, 0]) * np.cos(np.pi * p[:, 1]),
            np.sin(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1])], axis=1)

    def boundary_displacement(t, p):
        s = math.sin(math.pi * t)
        return np.stack([
            -s * np.cos(np.pi * p[:, 0]) * np.cos(np.pi * p[:, 1]),
            s * np.sin(np.pi * p[:, 0]) * np.sin(np.pi * p[:, 1])], axis=1)

    def boundary_flux(t, p, n):
        # kappa grad p . n with kappa = 1
        gx = (-math.cos(math.pi * t) * np.pi * np.cos(np.pi * p[:, 0])
              * np.cos(np.pi * p[:, 1]))
        gy = (math.cos(math.pi * t) * np.pi * np.sin(np.pi * p[:, 0])
              * np.sin(np.pi * p[:, 1]))
        return gx * n[:, 0] + gy * n[:, 1]

    data = TransientData(body_force=body_force,
                         boundary_displacement=boundary_displacement,
                         boundary_flux=boundary_flux)
    return ManufacturedCase(mu=1.0, lam=1.0, kappa=1.0, c0=0.0,
                            t_final=1.0, data=data)


def time_step_ladder(k: int, levels: int, t_final: float = 1.0
                     ) -> list[tuple[float, int]]:
    """(tau, n_steps) pairs whose tau shrinks with the mesh ladder so the
    second-order temporal error stays below the spatial one of order
    k + 1: tau_1 = 0.1 / 2^((k+1)/2), halved by the same factor per level."""
    out = []
    tau = 0.1 / 2.0 ** ((k + 1) / 2.0)
    for _ in range(levels):
        n = max(1, round(t_final / tau))
        out.append((t_final / n, n))
        tau /= 2.0 ** ((k + 1) / 2.0)
    return out


@dataclass(frozen=True)
class BarryMercerCase:
    mu: float
    lam: float
    kappa: float
    c0: float
    beta: float
    source_point: tuple
    data: TransientData


def lame_parameters(E: float, nu: float) -> tuple[float, float]:
    lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    mu = E / (2.0 * (1.0 + nu))
    return lam, mu


def barry_mercer_case(E: float = 1.0e5, nu: float = 0.1,
                      kappa: float = 1.0e-2) -> BarryMercerCase:
    """Point-source consolidation on the unit square.

    The fluid source is a Dirac at (1/4, 1/4) with amplitude
    sin(beta t), beta = (lam + 2 mu) kappa; boundaries are drained
    (p = 0) and tangentially clamped.
    """
    lam, mu = lame_parameters(E, nu)
    beta = (lam + 2.0 * mu) * kappa
    x0 = (0.25, 0.25)
    amp = lambda t: math.sin(beta * t)
    data = TransientData(point_source=(x0, amp))
    return BarryMercerCase(mu=mu, lam=lam, kappa=kappa, c0=0.0, beta=beta,
                           source_point=x0, data=data)
