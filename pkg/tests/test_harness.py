import json

import numpy as np
import pytest

from conftest import perturbed_mesh
from dualrt.geometry import segment_rule, triangle_points
from dualrt.harness import (
    ConvergenceReport,
    LevelResult,
    cell_value_error,
    convergence_study,
    error_norms,
    estimate_infsup,
    fit_rate,
    mms_case,
)
from dualrt.mesh import build_structured, renumber
from dualrt.rt0 import interpolate_hdiv
from dualrt.solvers import DiscreteSolution, solve


@pytest.mark.parametrize("name", ["sinsin", "bubble", "SINSIN"])
def test_case_consistency(name):
    case = mms_case(name)
    rng = np.random.default_rng(0)
    x = rng.uniform(0.05, 0.95, size=(40, 2))
    h = 1e-4
    ex, ey = np.array([h, 0]), np.array([0, h])
    grad = np.column_stack(
        [(case.u_exact(x + e) - case.u_exact(x - e)) / (2 * h) for e in (ex, ey)]
    )
    np.testing.assert_allclose(case.p_exact(x), grad, atol=1e-7)
    lap = sum(
        (case.u_exact(x + e) - 2 * case.u_exact(x) + case.u_exact(x - e)) / h**2 for e in (ex, ey)
    )
    np.testing.assert_allclose(case.f(x), -lap, atol=1e-5)


@pytest.mark.parametrize("name", ["sinsin", "bubble"])
def test_vanishes_on_boundary(name):
    case = mms_case(name)
    t, _ = segment_rule(3)
    corners = np.array([(0, 0), (1, 0), (1, 1), (0, 1), (0, 0)], float)
    for p, q in zip(corners, corners[1:]):
        pts = p + t[:, None] * (q - p)
        assert np.abs(case.u_exact(pts)).max() <= 1e-14


def test_case_specifics():
    s = mms_case("sinsin")
    x = np.array([(0.3, 0.7), (0.21, 0.5)])
    np.testing.assert_allclose(s.f(x) / s.u_exact(x), 2 * np.pi**2)
    np.testing.assert_allclose(mms_case("bubble").p_exact(np.array([(0.5, 0.5)])), 0.0)
    with pytest.raises(ValueError, match="unknown case"):
        mms_case("cosh")


def test_zero_solution_error_is_half():
    m = build_structured(8)
    zero = DiscreteSolution(np.zeros(m.num_cells), np.zeros(m.num_edges), "mixed")
    e = error_norms(m, zero, mms_case("sinsin"))
    assert e.e_u == pytest.approx(0.5, rel=1e-6)


def test_exact_data_on_trivial_case():
    m = build_structured(4)
    zero = DiscreteSolution(np.zeros(m.num_cells), np.zeros(m.num_edges), "mixed")
    assert error_norms(m, zero, mms_case("zero")) == (0.0, 0.0, 0.0, 0.0)


def injected(m, case):
    pts, w = triangle_points(m.cell_coords, 5)
    means = (w * case.u_exact(pts.reshape(-1, 2)).reshape(w.shape)).sum(1) / m.areas
    return DiscreteSolution(means, interpolate_hdiv(m, case.p_exact), "mixed")


def test_exact_data_injection_is_first_order():
    case = mms_case("sinsin")
    errs = [error_norms(m, injected(m, case), case) for m in (build_structured(8), build_structured(16))]
    assert np.log2(errs[0].e_u / errs[1].e_u) == pytest.approx(1.0, abs=0.1)
    assert np.log2(errs[0].e_p / errs[1].e_p) == pytest.approx(1.0, abs=0.1)


def test_error_norms_invariant_under_renumbering():
    case = mms_case("bubble")
    m = perturbed_mesh(5, seed=1)
    rng = np.random.default_rng(3)
    r = renumber(m, rng.permutation(m.num_vertices), rng.permutation(m.num_cells))
    a = error_norms(m, solve(m, case.f, "mixed"), case)
    b = error_norms(r, solve(r, case.f, "mixed"), case)
    np.testing.assert_allclose(b, a, rtol=1e-12)


def test_fit_rate():
    h = np.array([0.1, 0.05, 0.025, 0.0125])
    assert fit_rate(h, 3 * h**1.5) == pytest.approx(1.5)
    # a coarsest level that does not decrease is ignored
    e = 3 * h**2
    e[0] = e[1] * 0.9
    assert fit_rate(h, e) == pytest.approx(2.0)


def test_convergence_study_and_json_round_trip(tmp_path):
    rep = convergence_study("mixed", mms_case("bubble"), [4, 8, 16])
    assert [lv.n for lv in rep.levels] == [4, 8, 16]
    assert all(a.h > b.h for a, b in zip(rep.levels, rep.levels[1:]))
    assert all(getattr(lv, k) >= 0 for lv in rep.levels for k in ("e_u", "e_p", "e_div", "e_V"))
    doc = json.loads(rep.to_json())
    assert set(doc) >= {"scheme", "case", "levels", "rates"}
    assert set(doc["levels"][0]) >= {"n", "h", "e_u", "e_p", "e_div", "e_V", "seconds"}
    assert set(doc["rates"]) >= {"e_u", "e_p", "e_div", "e_V"}
    path = tmp_path / "r.json"
    rep.write(path)
    back = ConvergenceReport.read(path)
    assert back == rep


def test_round_trip_preserves_awkward_floats():
    rep = ConvergenceReport(
        "tpfa", "sinsin", [LevelResult(3, 1 / 3, 0.1 + 0.2, 1e-300, 5e-324, np.pi, 1e16 + 1)], {"e_u": -0.0}
    )
    assert ConvergenceReport.from_json(rep.to_json()) == rep


def test_convergence_study_validates_levels():
    with pytest.raises(ValueError):
        convergence_study("mixed", mms_case("sinsin"), [8, 4, 16])
    with pytest.raises(ValueError):
        convergence_study("mixed", mms_case("sinsin"), [4, 8])


def test_convergence_study_annotates_failing_level():
    with pytest.raises(RuntimeError, match="n=2"):
        convergence_study("nonsense", mms_case("sinsin"), [2, 4, 8])


def test_cell_value_error_uses_circumcentres_for_tpfa():
    case = mms_case("bubble")
    m = build_structured(8)
    tp = solve(m, case.f, "tpfa")
    # the lumped scheme is second order at circumcentres
    assert cell_value_error(m, tp, case) < 0.2 * error_norms(m, tp, case).e_u


def test_infsup_positive_and_stable():
    vals = [estimate_infsup(build_structured(n)) for n in (2, 4)]
    assert all(v > 0 for v in vals)
    assert vals[1] > 0.8 * vals[0]


def test_infsup_invariant_under_renumbering():
    m = perturbed_mesh(3, seed=2)
    rng = np.random.default_rng(1)
    r = renumber(m, rng.permutation(m.num_vertices), rng.permutation(m.num_cells))
    assert estimate_infsup(r) == pytest.approx(estimate_infsup(m), rel=1e-10)


def test_infsup_size_limit():
    with pytest.raises(ValueError, match="too large"):
        estimate_infsup(build_structured(20))


def test_tpfa_cell_value_rate_is_second_order():
    # on sin x sin the rate is even higher: the function is an eigenvector of
    # the five-point operator and cell averaging of f cancels the eigenvalue gap
    rep = convergence_study("tpfa", mms_case("bubble"), [8, 16, 32])
    assert rep.rates["e_cell"] == pytest.approx(2.0, abs=0.15)
    assert rep.rates["e_u"] == pytest.approx(1.0, abs=0.1)
