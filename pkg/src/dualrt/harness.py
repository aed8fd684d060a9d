"""Manufactured solutions, error norms, convergence studies and an inf-sup diagnostic."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
import scipy.linalg

from .geometry import mesh_size, triangle_points
from .mesh import Mesh, build_structured
from .rt0 import cell_divergence, cell_field, divergence_matrix, mass_matrix
from .solvers import TPFA, DiscreteSolution, circumcenters, solve
from .stencil import MIN_NORM, Closure

INFSUP_MAX_SIZE = 2000


@dataclass(frozen=True)
class ManufacturedCase:
    """Exact solution of ``-lap u = f`` on the unit square with ``u = 0`` on the boundary.

    All fields take points of shape (n, 2); ``u_exact`` and ``f`` return (n,),
    ``p_exact`` (the gradient) returns (n, 2).
    """

    name: str
    u_exact: Callable[[np.ndarray], np.ndarray]
    p_exact: Callable[[np.ndarray], np.ndarray]
    f: Callable[[np.ndarray], np.ndarray]


def _sinsin() -> ManufacturedCase:
    pi = np.pi

    def u(x):
        return np.sin(pi * x[:, 0]) * np.sin(pi * x[:, 1])

    def p(x):
        sx, sy = np.sin(pi * x[:, 0]), np.sin(pi * x[:, 1])
        cx, cy = np.cos(pi * x[:, 0]), np.cos(pi * x[:, 1])
        return pi * np.column_stack([cx * sy, sx * cy])

    return ManufacturedCase("sinsin", u, p, lambda x: 2.0 * pi**2 * u(x))


def _bubble() -> ManufacturedCase:
    def u(x):
        return x[:, 0] * (1 - x[:, 0]) * x[:, 1] * (1 - x[:, 1])

    def p(x):
        X, Y = x[:, 0], x[:, 1]
        return np.column_stack([(1 - 2 * X) * Y * (1 - Y), (1 - 2 * Y) * X * (1 - X)])

    def f(x):
        X, Y = x[:, 0], x[:, 1]
        return 2.0 * (X * (1 - X) + Y * (1 - Y))

    return ManufacturedCase("bubble", u, p, f)


def _zero() -> ManufacturedCase:
    def z(x):
        return np.zeros(len(x))

    return ManufacturedCase("zero", z, lambda x: np.zeros((len(x), 2)), z)


_CASES = {"sinsin": _sinsin, "bubble": _bubble, "zero": _zero}
CASE_NAMES = ("sinsin", "bubble")


def mms_case(name: str) -> ManufacturedCase:
    """``sinsin``, ``bubble`` (or ``zero``, the trivial solution), case-insensitive."""
    try:
        return _CASES[name.lower()]()
    except KeyError:
        raise ValueError(f"unknown case {name!r}; expected one of {', '.join(CASE_NAMES)}") from None


class ErrorNorms(NamedTuple):
    e_u: float
    e_p: float
    e_div: float
    e_V: float


def error_norms(mesh: Mesh, sol: DiscreteSolution, case: ManufacturedCase) -> ErrorNorms:
    """L2 errors of ``u``, of the reconstructed flux field and of its divergence.

    Uses the degree-5 triangle rule; ``e_V`` combines the three in quadrature.
    """
    F = mesh.num_cells
    pts, w = triangle_points(mesh.cell_coords, 5)
    flat = pts.reshape(-1, 2)
    u_ex = np.asarray(case.u_exact(flat)).reshape(w.shape)
    p_ex = np.asarray(case.p_exact(flat)).reshape(pts.shape)
    f_ex = np.asarray(case.f(flat)).reshape(w.shape)

    e_u = np.sqrt((w * (u_ex - np.asarray(sol.u)[:, None]) ** 2).sum())
    dp = p_ex - cell_field(mesh, sol.p, np.arange(F), pts)
    e_p = np.sqrt((w * (dp**2).sum(-1)).sum())
    e_div = np.sqrt((w * (-f_ex - cell_divergence(mesh, sol.p)[:, None]) ** 2).sum())
    return ErrorNorms(float(e_u), float(e_p), float(e_div), float(np.sqrt(e_u**2 + e_p**2 + e_div**2)))


def consistency_points(mesh: Mesh, scheme: str) -> np.ndarray:
    """Points where cell values are compared pointwise: circumcentres for TPFA, centroids otherwise."""
    return circumcenters(mesh) if scheme == TPFA else mesh.centroids


def cell_value_error(mesh: Mesh, sol: DiscreteSolution, case: ManufacturedCase) -> float:
    """Discrete L2 error ``sqrt(sum |K| (u_K - u(x_K))^2)`` at the scheme's consistency points."""
    x = consistency_points(mesh, sol.scheme)
    return float(np.sqrt((mesh.areas * (np.asarray(sol.u) - case.u_exact(x)) ** 2).sum()))


# --- convergence ------------------------------------------------------------

ERROR_KEYS = ("e_u", "e_p", "e_div", "e_V")


@dataclass
class LevelResult:
    n: int
    h: float
    e_u: float
    e_p: float
    e_div: float
    e_V: float
    seconds: float
    # discrete error at the consistency points, see cell_value_error
    e_cell: Optional[float] = None

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["e_cell"] is None:
            del d["e_cell"]
        return d


@dataclass
class ConvergenceReport:
    scheme: str
    case: str
    levels: list[LevelResult]
    rates: dict
    notes: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        doc = {
            "scheme": self.scheme,
            "case": self.case,
            "levels": [lv.to_dict() for lv in self.levels],
            "rates": dict(self.rates),
        }
        if self.notes:
            doc["notes"] = list(self.notes)
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ConvergenceReport":
        doc = json.loads(text)
        return cls(
            doc["scheme"],
            doc["case"],
            [LevelResult(**lv) for lv in doc["levels"]],
            doc["rates"],
            doc.get("notes", []),
        )

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json() + "\n")

    @classmethod
    def read(cls, path) -> "ConvergenceReport":
        with open(path) as fh:
            return cls.from_json(fh.read())


def fit_rate(h: Sequence[float], err: Sequence[float]) -> float:
    """Least-squares slope of ``log err`` against ``log h``.

    The coarsest level is dropped when the error does not decrease from it
    (and at least two levels remain).
    """
    h = np.asarray(h, dtype=float)
    err = np.asarray(err, dtype=float)
    if len(err) >= 3 and not err[1] < err[0]:
        h, err = h[1:], err[1:]
    if np.any(err <= 0):
        return float("nan")
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


def convergence_study(
    scheme: str,
    case: ManufacturedCase,
    levels: Sequence[int],
    closure: Closure = MIN_NORM,
    split: str = "ne",
) -> ConvergenceReport:
    """Run ``scheme`` on ``build_structured(n)`` for each level and fit rates.

    Raises:
        ValueError: if ``levels`` is not ascending with at least three entries.
        RuntimeError: wrapping any solver error, with the failing level named.
    """
    levels = [int(n) for n in levels]
    if len(levels) < 3 or any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("levels must be strictly ascending with at least 3 entries")
    results = []
    for n in levels:
        mesh = build_structured(n, split)
        t0 = time.perf_counter()
        try:
            sol = solve(mesh, case.f, scheme, closure)
        except (ArithmeticError, ValueError) as exc:
            raise RuntimeError(f"level n={n}: {exc}") from exc
        seconds = time.perf_counter() - t0
        e = error_norms(mesh, sol, case)
        results.append(LevelResult(n, mesh_size(mesh), *e, seconds, cell_value_error(mesh, sol, case)))

    hs = [lv.h for lv in results]
    rates = {k: fit_rate(hs, [getattr(lv, k) for lv in results]) for k in ERROR_KEYS + ("e_cell",)}
    notes = []
    for k in ERROR_KEYS:
        e = [getattr(lv, k) for lv in results]
        bad = [i for i in range(1, len(e)) if not e[i] < e[i - 1]]
        if bad:
            where = "coarsest level" if bad == [1] else f"levels {[levels[i] for i in bad]}"
            notes.append(f"{k} not decreasing at {where}")
    return ConvergenceReport(scheme, case.name, results, rates, notes)


# --- inf-sup ----------------------------------------------------------------


def estimate_infsup(mesh: Mesh, max_size: int = INFSUP_MAX_SIZE) -> float:
    """Smallest generalized singular value of the mixed bilinear form.

    The form ``(p, q) + (u, div q) + (div p, v)`` on the Raviart-Thomas /
    piecewise-constant pair is measured against the norm
    ``|u|_0^2 + |p|_0^2 + |div p|_0^2`` on both sides; since the form is
    symmetric the value is the smallest ``|lambda|`` of the generalized
    eigenproblem ``G x = lambda N x``.

    Raises:
        ValueError: if ``E + F`` exceeds ``max_size``.
    """
    E, F = mesh.num_edges, mesh.num_cells
    if E + F > max_size:
        raise ValueError(f"mesh too large for the dense inf-sup estimate (E+F={E + F} > {max_size})")
    M = mass_matrix(mesh).toarray()
    B = divergence_matrix(mesh).toarray()
    G = np.block([[np.zeros((F, F)), B], [B.T, M]])
    Nu = np.diag(mesh.areas)
    Np = M + B.T @ (B / mesh.areas[:, None])
    N = scipy.linalg.block_diag(Nu, Np)
    lam = scipy.linalg.eigh(G, N, eigvals_only=True)
    return float(np.abs(lam).min())
