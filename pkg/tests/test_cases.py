import math

import numpy as np
import pytest
import sympy as sm

from polybiot import cases


def test_manufactured_body_force_matches_symbolic():
    # recompute f = -div(2 mu e(u) + lam div(u) I) + grad p symbolically
    t, x, y = sm.symbols("t x y")
    mu = lam = 1
    u = sm.Matrix([-sm.sin(sm.pi * t) * sm.cos(sm.pi * x) * sm.cos(sm.pi * y),
                   sm.sin(sm.pi * t) * sm.sin(sm.pi * x) * sm.sin(sm.pi * y)])
    p = -sm.cos(sm.pi * t) * sm.sin(sm.pi * x) * sm.cos(sm.pi * y)
    grad = lambda f: sm.Matrix([sm.diff(f, x), sm.diff(f, y)])
    eps = sm.Matrix([[sm.diff(u[0], x),
                      (sm.diff(u[0], y) + sm.diff(u[1], x)) / 2],
                     [(sm.diff(u[0], y) + sm.diff(u[1], x)) / 2,
                      sm.diff(u[1], y)]])
    divu = sm.diff(u[0], x) + sm.diff(u[1], y)
    sig = 2 * mu * eps + lam * divu * sm.eye(2)
    f_sym = sm.Matrix([
        -(sm.diff(sig[0, 0], x) + sm.diff(sig[0, 1], y)),
        -(sm.diff(sig[1, 0], x) + sm.diff(sig[1, 1], y))]) + grad(p)
    f_num = sm.lambdify((t, x, y), f_sym, "numpy")

    case = cases.manufactured_case()
    rng = np.random.default_rng(0)
    pts = rng.uniform(size=(40, 2))
    for tv in (0.17, 0.5, 0.93):
        got = case.data.body_force(tv, pts)
        ref = np.array([f_num(tv, xx, yy).ravel() for xx, yy in pts])
        assert np.abs(got - ref).max() < 1e-12

    # the fluid source vanishes: div(du/dt) - kappa lap p == 0
    flow = (sm.diff(divu, t)
            - (sm.diff(p, x, 2) + sm.diff(p, y, 2)))
    assert sm.simplify(flow) == 0


def test_manufactured_boundary_flux_matches_symbolic():
    t, x, y = sm.symbols("t x y")
    p = -sm.cos(sm.pi * t) * sm.sin(sm.pi * x) * sm.cos(sm.pi * y)
    gx = sm.lambdify((t, x, y), sm.diff(p, x), "numpy")
    gy = sm.lambdify((t, x, y), sm.diff(p, y), "numpy")
    case = cases.manufactured_case()
    rng = np.random.default_rng(1)
    s = rng.uniform(size=8)
    for side, (pts, n) in {
        "left": (np.stack([np.zeros(8), s], axis=1), [-1.0, 0.0]),
        "right": (np.stack([np.ones(8), s], axis=1), [1.0, 0.0]),
        "bottom": (np.stack([s, np.zeros(8)], axis=1), [0.0, -1.0]),
        "top": (np.stack([s, np.ones(8)], axis=1), [0.0, 1.0]),
    }.items():
        nn = np.tile(n, (8, 1))
        got = case.data.boundary_flux(0.3, pts, nn)
        ref = (gx(0.3, pts[:, 0], pts[:, 1]) * nn[:, 0]
               + gy(0.3, pts[:, 0], pts[:, 1]) * nn[:, 1])
        assert np.abs(got - ref).max() < 1e-12, side


def test_exact_fields_consistency():
    case = cases.manufactured_case()
    pts = np.array([[0.25, 0.5], [0.7, 0.1]])
    u0 = case.displacement(0.0, pts)
    assert np.abs(u0).max() < 1e-15          # sin(0) = 0
    p0 = case.pressure(0.0, pts)
    assert np.abs(p0 + np.sin(np.pi * pts[:, 0])
                  * np.cos(np.pi * pts[:, 1])).max() < 1e-15


def test_lame_parameters():
    lam, mu = cases.lame_parameters(1.0e5, 0.1)
    assert math.isclose(lam, 1.0e5 * 0.1 / (1.1 * 0.8), rel_tol=1e-14)
    assert math.isclose(mu, 1.0e5 / 2.2, rel_tol=1e-14)
    bm = cases.barry_mercer_case()
    assert math.isclose(bm.beta, (lam + 2 * mu) * 1e-2, rel_tol=1e-14)
    assert math.isclose(bm.beta, 1022.7272727272727, rel_tol=1e-12)


def test_time_step_ladder():
    lad = cases.time_step_ladder(1, 3)
    assert [n for _, n in lad] == [20, 40, 80]
    assert all(math.isclose(tau * n, 1.0) for tau, n in lad)
    lad3 = cases.time_step_ladder(3, 2)
    assert lad3[0][1] == 40      # tau_1 = 0.1 / 4
    assert lad3[1][1] == 160
