"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line."""

import time

import numpy as np
import pytest

from conftest import random_triangles
from dualrt.geometry import second_moment_about, triangle_points, tri_geom
from dualrt.harness import convergence_study, estimate_infsup, mms_case
from dualrt.mesh import build_structured, edge_neighborhood
from dualrt.rt0 import flux_dof
from dualrt.solvers import conservation_check, conservation_tolerance, solve, tpfa_system
from dualrt.stencil import (
    assemble_constraints,
    complete_edges,
    constraint_residuals,
    eta1_from_K,
    eta1_from_L,
    eta2_pair,
    gradient_six_point,
    nullspace_dim,
    residual_bounds,
    solve_stencil,
)

SIN = mms_case("sinsin")
ZERO = mms_case("zero")
LEVELS = {"mixed": [8, 16, 32, 64], "tpfa": [8, 16, 32, 64], "petrov": [8, 16, 32]}


@pytest.fixture(scope="module")
def solved6():
    t0 = time.perf_counter()
    mesh = build_structured(6)
    out = []
    for a in complete_edges(mesh):
        sys = assemble_constraints(mesh, edge_neighborhood(mesh, a))
        out.append((sys, solve_stencil(sys)))
    return out, time.perf_counter() - t0


@pytest.fixture(scope="module")
def studies():
    out = {}
    for scheme, levels in LEVELS.items():
        t0 = time.perf_counter()
        rep = convergence_study(scheme, SIN, levels)
        out[scheme] = (rep, time.perf_counter() - t0)
    return out


def test_criterion_01_duality(criterion):
    t0 = time.perf_counter()
    m = build_structured(3)
    E = m.num_edges
    D = np.empty((E, E))
    for a in range(E):
        q = np.zeros(E)
        q[a] = 1.0
        D[:, a] = [flux_dof(m, b, q) for b in range(E)]
    err = np.abs(D - np.eye(E)).max()
    dt = time.perf_counter() - t0
    assert criterion(1, err <= 1e-12 and dt < 1.0, f"max |D - I| = {err:.2e}, {dt:.2f}s")


def test_criterion_02_second_moment_formula(criterion):
    t0 = time.perf_counter()
    worst = 0.0
    for tri in random_triangles(2024, 100):
        g = tri_geom(*tri)
        N = tri[1]
        pts, w = triangle_points(tri, 2)
        quad = float(w @ ((pts - N) ** 2).sum(1)) / g.area
        worst = max(worst, abs(second_moment_about(g, N) - quad) / quad)
    dt = time.perf_counter() - t0
    assert criterion(2, worst <= 1e-12 and dt < 1.0, f"max rel diff = {worst:.2e}, {dt:.2f}s")


def test_criterion_03_stencil_constraints(criterion, solved6):
    solved6, build = solved6
    t0 = time.perf_counter() - build
    ok, worst35, worst36, dims = True, 0.0, 0.0, set()
    for sys, c in solved6:
        r35, r36 = constraint_residuals(sys, c)
        b35, b36 = residual_bounds(sys)
        ok &= r35 <= b35 and r36 <= b36
        worst35, worst36 = max(worst35, r35 / sys.scale), max(worst36, r36 / (b36 * 1e10))
        dims.add(nullspace_dim(sys))
    ok &= dims == {2}
    dt = time.perf_counter() - t0
    detail = f"{len(solved6)} edges, rel residuals {worst35:.1e} / {worst36:.1e}, null dims {sorted(dims)}, {dt:.2f}s"
    assert criterion(3, ok and dt < 5.0, detail)


def test_criterion_04_affine_exactness(criterion, solved6):
    solved6, build = solved6
    t0 = time.perf_counter() - build
    rng = np.random.default_rng(4)
    fields = [(rng.normal(), rng.normal(size=2)) for _ in range(10)]
    worst = 0.0
    for sys, c in solved6:
        f = sys.frame
        for u0, g in fields:
            vals = [u0 + g @ getattr(f, name) for name in "KLMPQR"]
            exact = f.length * g @ f.n_SN
            worst = max(worst, abs(gradient_six_point(c, *vals) - exact) / abs(exact))
    dt = time.perf_counter() - t0
    assert criterion(4, worst <= 1e-10 and dt < 5.0, f"10 fields x {len(solved6)} edges, max rel err {worst:.1e}, {dt:.2f}s")


def test_criterion_05_momenta(criterion, solved6):
    # relative to the magnitude of the compared values, floored by the
    # natural scale of each moment (|SN| for the first, |SN|^3 for the second)
    solved6, build = solved6
    t0 = time.perf_counter() - build
    worst = 0.0
    for sys, c in solved6:
        s = sys.scale
        a, b = eta1_from_L(c, sys), eta1_from_K(c, sys)
        worst = max(worst, abs(a - b) / max(abs(a), abs(b), s))
        e2l, e2tl, e2k, e2tk = eta2_pair(c, sys)
        worst = max(worst, abs(e2l - e2k) / max(abs(e2l), abs(e2k), s**3))
        worst = max(worst, abs(e2tl - e2tk) / max(abs(e2tl), abs(e2tk), s**3))
    dt = time.perf_counter() - t0
    assert criterion(5, worst <= 1e-9 and dt < 5.0, f"max rel mismatch {worst:.1e}, {dt:.2f}s")


def decreasing_from(rep, n0, keys=("e_u", "e_p", "e_div", "e_V")):
    lv = [x for x in rep.levels if x.n >= n0]
    return all(getattr(a, k) > getattr(b, k) for k in keys for a, b in zip(lv, lv[1:]))


def test_criterion_06_mixed_rate(criterion, studies):
    rep, dt = studies["mixed"]
    rv, ru = rep.rates["e_V"], rep.rates["e_u"]
    ok = 0.9 <= rv <= 1.3 and 0.9 <= ru <= 1.3 and decreasing_from(rep, 16) and dt < 60
    assert criterion(6, ok, f"rate e_V = {rv:.3f}, e_u = {ru:.3f}, {dt:.1f}s")


def test_criterion_07_conservation(criterion):
    worst, count = 0.0, 0
    ok = True
    for scheme, levels in LEVELS.items():
        for n in levels:
            m = build_structured(n)
            for case in (SIN, ZERO):
                sol = solve(m, case.f, scheme)
                res = conservation_check(m, sol, case.f)
                ok &= res <= conservation_tolerance(sol, m, case.f)
                worst = max(worst, res)
                count += 1
    assert criterion(7, ok, f"{count} solves, max cell residual {worst:.1e}")


def test_criterion_08_tpfa(criterion, studies):
    rep, dt = studies["tpfa"]
    m_ok = True
    for n in LEVELS["tpfa"]:
        _, _, A = tpfa_system(build_structured(n))
        A = A.toarray()
        off = A - np.diag(np.diag(A))
        m_ok &= off.max() <= 0 and bool(np.all(np.diag(A) >= -off.sum(1) - 1e-12))
    rate = rep.rates["e_cell"]
    ok = rate >= 1.5 and m_ok and dt < 30
    detail = f"cell-value rate {rate:.3f} (L2 of u_T - u rate {rep.rates['e_u']:.3f}), M-matrix {m_ok}, {dt:.1f}s"
    assert criterion(8, ok, detail)


def test_criterion_09_petrov(criterion, studies):
    rep, dt = studies["petrov"]
    rate = rep.rates["e_u"]
    zero_ok = True
    cons_ok = True
    for n in LEVELS["petrov"]:
        m = build_structured(n)
        z = solve(m, ZERO.f, "petrov")
        zero_ok &= not np.any(z.u) and not np.any(z.p)
        sol = solve(m, SIN.f, "petrov")
        cons_ok &= conservation_check(m, sol, SIN.f) <= conservation_tolerance(sol, m, SIN.f)
    ok = rate >= 0.5 and zero_ok and cons_ok and dt < 30
    assert criterion(9, ok, f"e_u rate {rate:.3f} (e_V rate {rep.rates['e_V']:.3f}), {dt:.1f}s")


def test_criterion_10_infsup(criterion):
    t0 = time.perf_counter()
    vals = [estimate_infsup(build_structured(n)) for n in (2, 4, 8)]
    dt = time.perf_counter() - t0
    monotone_decay = vals[0] > vals[1] > vals[2]
    ok = all(v > 0 for v in vals) and not (monotone_decay and vals[2] < 0.8 * vals[0]) and dt < 30
    assert criterion(10, ok, "beta = " + ", ".join(f"{v:.4f}" for v in vals) + f", {dt:.1f}s")
