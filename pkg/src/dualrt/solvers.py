"""Discrete Poisson solvers with homogeneous Dirichlet data.

Three schemes share the cell balance ``sum_a sign(K, a) p_a + int_K f = 0``
and differ in how the edge fluxes ``p_a`` (approximations of
``int_a grad u . n_a``) are obtained:

``MIXED``
    the lowest-order Raviart-Thomas mixed method, solved as a saddle point
    system;
``TPFA``
    the lumped two-point flux ``|a| (u_L - u_K) / d_a`` with circumcentre
    distances ``d_a``;
``PETROV``
    the six-point flux of :mod:`dualrt.stencil` on interior edges with a
    complete neighbourhood, two-point fluxes elsewhere.

Cells whose circumcentres coincide (``d_a = 0``, e.g. the two halves of a
square) are handled as the limit of an infinite transmissibility: they share
one unknown and the flux across their common edge follows from the cell
balances.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .geometry import triangle_points
from .mesh import Mesh, edge_neighborhood
from .rt0 import divergence_matrix, mass_matrix
from .stencil import MIN_NORM, Closure, assemble_constraints, solve_stencil

MIXED, TPFA, PETROV = "mixed", "tpfa", "petrov"
SCHEMES = (MIXED, TPFA, PETROV)
DIRECT_TOL = 1e-10
COCIRCULAR_TOL = 1e-10

ScalarField = Callable[[np.ndarray], np.ndarray]


class SingularSystemError(ArithmeticError):
    pass


class AdmissibilityError(ValueError):
    def __init__(self, edge: int, distance: float):
        super().__init__(f"mesh is not admissible: edge {edge} has circumcentre distance {distance:.3e}")
        self.edge = edge


@dataclass
class DiscreteSolution:
    """Cell values ``u`` (F,), edge fluxes ``p`` (E,), scheme tag and solver statistics."""

    u: np.ndarray
    p: np.ndarray
    scheme: str
    solve_stats: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SaddleSystem:
    """Blocks of ``[[M, B^T], [B, 0]] [p; u] = [0; rhs_f]``."""

    M: sps.csr_array
    B: sps.csr_array
    rhs_f: np.ndarray

    def matrix(self) -> sps.csc_array:
        return sps.csc_array(sps.block_array([[self.M, self.B.T], [self.B, None]]))

    def rhs(self) -> np.ndarray:
        return np.concatenate([np.zeros(self.M.shape[0]), self.rhs_f])


def cell_integrals(mesh: Mesh, f: ScalarField, degree: int = 3) -> np.ndarray:
    """``int_K f dx`` for every cell."""
    pts, w = triangle_points(mesh.cell_coords, degree)
    vals = np.asarray(f(pts.reshape(-1, 2)), dtype=float).reshape(w.shape)
    return (vals * w).sum(axis=1)


def conservation_residuals(mesh: Mesh, p, f_int) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return (p[mesh.cell_edges] * mesh.cell_signs).sum(axis=1) + f_int


def conservation_check(mesh: Mesh, sol: DiscreteSolution, f: ScalarField) -> float:
    """Largest ``|sum_a sign p_a + int_K f|`` over cells."""
    return float(np.abs(conservation_residuals(mesh, sol.p, cell_integrals(mesh, f))).max())


def conservation_tolerance(sol: DiscreteSolution, mesh: Mesh, f: ScalarField) -> float:
    """``1e-10`` for direct solves, ``1e-8 max(1, |f|) |K|^(1/2)`` otherwise."""
    if sol.solve_stats.get("method") == "direct":
        return DIRECT_TOL
    fmax = np.abs(cell_integrals(mesh, f) / mesh.areas).max()
    return float(1e-8 * max(1.0, fmax) * np.sqrt(mesh.areas.max()))


# --- mixed ------------------------------------------------------------------


def assemble_mixed(mesh: Mesh, f: ScalarField) -> SaddleSystem:
    return SaddleSystem(mass_matrix(mesh), divergence_matrix(mesh), -cell_integrals(mesh, f))


def _solve_schur(sys: SaddleSystem, tol: float):
    lu = spla.splu(sps.csc_array(sys.M))
    B = sys.B
    F = B.shape[0]
    S = spla.LinearOperator((F, F), matvec=lambda u: B @ lu.solve(B.T @ u), dtype=float)
    it = [0]

    def count(_):
        it[0] += 1

    u, info = spla.cg(S, -sys.rhs_f, rtol=tol * 1e-2, atol=0.0, maxiter=10 * F, callback=count)
    if info != 0:
        raise SingularSystemError(f"Schur complement CG did not converge (info={info})")
    return -lu.solve(B.T @ u), u, it[0]


def solve_saddle(sys: SaddleSystem, method: str = "direct") -> DiscreteSolution:
    """Solve the mixed system.

    Args:
        method: ``"direct"`` (sparse LU, falling back to Schur complement CG if
            the factorization fails) or ``"schur"``.

    Raises:
        SingularSystemError: if neither strategy reaches ``1e-10 |rhs|``.
    """
    E = sys.M.shape[0]
    A, b = sys.matrix(), sys.rhs()
    iterations = 0
    if method == "direct":
        try:
            x = spla.splu(A).solve(b)
            p, u = x[:E], x[E:]
        except RuntimeError:
            method = "schur"
    if method == "schur":
        p, u, iterations = _solve_schur(sys, DIRECT_TOL)
    elif method != "direct":
        raise ValueError(f"unknown method {method!r}")

    res = float(np.linalg.norm(A @ np.concatenate([p, u]) - b))
    if not np.isfinite(res) or res > DIRECT_TOL * max(np.linalg.norm(b), 1.0):
        raise SingularSystemError(f"mixed system residual {res:.3e} too large")
    return DiscreteSolution(u, p, MIXED, {"method": method, "iterations": iterations, "residual": res})


def recover_momentum(sys: SaddleSystem, u) -> np.ndarray:
    """Fluxes ``p`` solving ``M p = -B^T u``."""
    return spla.spsolve(sps.csc_array(sys.M), -(sys.B.T @ np.asarray(u, dtype=float)))


# --- finite volume schemes ---------------------------------------------------


def circumcenters(mesh: Mesh) -> np.ndarray:
    v = mesh.cell_coords
    b, c = v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]
    d = 2.0 * (b[:, 0] * c[:, 1] - b[:, 1] * c[:, 0])
    bb, cc = (b * b).sum(1), (c * c).sum(1)
    rel = np.column_stack([c[:, 1] * bb - b[:, 1] * cc, b[:, 0] * cc - c[:, 0] * bb]) / d[:, None]
    return v[:, 0] + rel


def edge_distances(mesh: Mesh) -> np.ndarray:
    """Signed circumcentre distances along ``n_a``.

    Interior edges: ``(cc_L - cc_K) . n_a``; boundary edges: distance from
    ``cc_K`` to the edge line, positive when ``cc_K`` is inside.
    """
    cc = circumcenters(mesh)
    k, l = mesh.edge_cells.T
    d = np.empty(mesh.num_edges)
    inner = l >= 0
    d[inner] = ((cc[l[inner]] - cc[k[inner]]) * mesh.normals[inner]).sum(1)
    s = mesh.vertices[mesh.edge_vertices[~inner, 0]]
    d[~inner] = ((s - cc[k[~inner]]) * mesh.normals[~inner]).sum(1)
    return d


def _two_point(mesh: Mesh, edges, d) -> sps.coo_array:
    """Two-point flux rows ``|a| (u_L - u_K) / d_a`` (ghost ``u_L = 0`` on the boundary)."""
    edges = np.asarray(edges, dtype=np.int64)
    t = mesh.edge_lengths[edges] / d[edges]
    k, l = mesh.edge_cells[edges].T
    inner = l >= 0
    rows = np.concatenate([edges, edges[inner]])
    cols = np.concatenate([k, l[inner]])
    vals = np.concatenate([-t, t[inner]])
    return sps.coo_array((vals, (rows, cols)), shape=(mesh.num_edges, mesh.num_cells))


@dataclass(frozen=True)
class _Clusters:
    """Groups of cells tied by co-circular edges."""

    label: np.ndarray  # cell -> cluster
    pinned: np.ndarray  # cluster -> touches a co-circular boundary edge
    degenerate: np.ndarray  # co-circular edges

    @property
    def count(self) -> int:
        return len(self.pinned)

    def prolongation(self) -> sps.csr_array:
        """F x (free clusters) indicator matrix; pinned clusters map to zero."""
        free = np.flatnonzero(~self.pinned)
        col = np.full(self.count, -1)
        col[free] = np.arange(len(free))
        c = col[self.label]
        keep = c >= 0
        F = len(self.label)
        return sps.csr_array(
            (np.ones(keep.sum()), (np.flatnonzero(keep), c[keep])), shape=(F, len(free))
        )


def _clusters(mesh: Mesh, degenerate) -> _Clusters:
    F = mesh.num_cells
    parent = np.arange(F)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a in degenerate:
        k, l = mesh.edge_cells[a]
        if l >= 0:
            parent[find(k)] = find(l)
    roots = np.array([find(i) for i in range(F)])
    _, label = np.unique(roots, return_inverse=True)
    pinned = np.zeros(label.max() + 1, dtype=bool)
    for a in degenerate:
        k, l = mesh.edge_cells[a]
        if l < 0:
            pinned[label[k]] = True
    return _Clusters(label, pinned, np.asarray(degenerate, dtype=np.int64))


def _degenerate_edges(mesh: Mesh, edges, d) -> np.ndarray:
    edges = np.asarray(edges, dtype=np.int64)
    tol = COCIRCULAR_TOL * mesh.edge_lengths[edges]
    bad = edges[d[edges] < -tol]
    if len(bad):
        raise AdmissibilityError(int(bad[0]), float(d[bad[0]]))
    return edges[np.abs(d[edges]) <= tol]


def _reduced_system(mesh: Mesh, G: sps.csr_array, cl: _Clusters, f_int):
    """Cluster balance matrix ``A`` and right-hand side for ``A u_c = rhs``."""
    D = divergence_matrix(mesh)
    P = cl.prolongation()
    A = sps.csr_array(-(P.T @ (D @ G) @ P))
    return A, P.T @ f_int, P


def _recover_degenerate(mesh: Mesh, p, cl: _Clusters, f_int) -> np.ndarray:
    """Fill fluxes on co-circular edges from the cell balances of their clusters."""
    p = p.copy()
    if len(cl.degenerate) == 0:
        return p
    p[cl.degenerate] = 0.0
    res = conservation_residuals(mesh, p, f_int)
    edge_cluster = cl.label[mesh.edge_cells[cl.degenerate, 0]]
    for c in np.unique(edge_cluster):
        edges = cl.degenerate[edge_cluster == c]
        cells = np.flatnonzero(cl.label == c)
        A = np.zeros((len(cells), len(edges)))
        row = {int(k): i for i, k in enumerate(cells)}
        for j, a in enumerate(edges):
            for side, cell in enumerate(mesh.edge_cells[a]):
                if cell >= 0:
                    A[row[int(cell)], j] = 1.0 if side == 0 else -1.0
        p[edges] = np.linalg.lstsq(A, -res[cells], rcond=None)[0]
    return p


def _solve_fv(mesh, G, cl, f_int, scheme, extra_stats):
    A, rhs, P = _reduced_system(mesh, G, cl, f_int)
    if A.shape[0]:
        try:
            uc = spla.splu(sps.csc_array(A)).solve(rhs)
        except RuntimeError as exc:
            raise SingularSystemError(f"{scheme} system is singular: {exc}") from None
    else:
        uc = np.zeros(0)
    res = float(np.linalg.norm(A @ uc - rhs))
    if not np.isfinite(res) or res > DIRECT_TOL * max(np.linalg.norm(rhs), 1.0):
        raise SingularSystemError(f"{scheme} system residual {res:.3e} too large")
    u = P @ uc
    p = _recover_degenerate(mesh, G @ u, cl, f_int)
    stats = {"method": "direct", "iterations": 0, "residual": res, "unknowns": A.shape[0]}
    stats.update(extra_stats)
    return DiscreteSolution(u, p, scheme, stats)


def tpfa_system(mesh: Mesh):
    """Flux operator ``G`` (E x F), clusters and the reduced SPD matrix of the TPFA scheme.

    Raises:
        AdmissibilityError: if some ``d_a`` is negative.
    """
    d = edge_distances(mesh)
    deg = _degenerate_edges(mesh, np.arange(mesh.num_edges), d)
    keep = np.setdiff1d(np.arange(mesh.num_edges), deg)
    G = sps.csr_array(_two_point(mesh, keep, d))
    cl = _clusters(mesh, deg)
    A, _, _ = _reduced_system(mesh, G, cl, np.zeros(mesh.num_cells))
    return G, cl, A


def solve_tpfa(mesh: Mesh, f: ScalarField) -> DiscreteSolution:
    G, cl, _ = tpfa_system(mesh)
    return _solve_fv(mesh, G, cl, cell_integrals(mesh, f), TPFA, {"clusters": cl.count})


def petrov_flux_operator(mesh: Mesh, closure: Closure = MIN_NORM):
    """Flux operator of the six-point scheme and the co-circular fallback edges."""
    rows, cols, vals = [], [], []
    fallback = []
    for a in range(mesh.num_edges):
        if mesh.is_boundary(a):
            fallback.append(a)
            continue
        nb = edge_neighborhood(mesh, a)
        if not nb.complete:
            fallback.append(a)
            continue
        c = solve_stencil(assemble_constraints(mesh, nb), closure)
        # eta (uL - uK) + alpha (uM - uL) + beta (uP - uK) + gamma (uQ - uK) + delta (uR - uL)
        terms = (
            (nb.L, c.eta), (nb.K, -c.eta - c.beta - c.gamma), (nb.M, c.alpha),
            (nb.L, -c.alpha - c.delta), (nb.P, c.beta), (nb.Q, c.gamma), (nb.R, c.delta),
        )  # fmt: skip
        for cell, v in terms:
            rows.append(a)
            cols.append(cell)
            vals.append(v)
    d = edge_distances(mesh)
    fallback = np.array(fallback, dtype=np.int64)
    deg = _degenerate_edges(mesh, fallback, d)
    two = _two_point(mesh, np.setdiff1d(fallback, deg), d)
    six = sps.coo_array((vals, (rows, cols)), shape=(mesh.num_edges, mesh.num_cells))
    G = sps.csr_array(six + two)
    return G, deg, len(fallback)


def solve_petrov_galerkin(
    mesh: Mesh, f: ScalarField, closure: Closure = MIN_NORM
) -> DiscreteSolution:
    """Six-point finite volume scheme (nonsymmetric system, sparse LU)."""
    G, deg, nfall = petrov_flux_operator(mesh, closure)
    cl = _clusters(mesh, deg)
    return _solve_fv(
        mesh, G, cl, cell_integrals(mesh, f), PETROV, {"clusters": cl.count, "fallback_edges": nfall}
    )


def solve(mesh: Mesh, f: ScalarField, scheme: str, closure: Closure = MIN_NORM) -> DiscreteSolution:
    if scheme == MIXED:
        return solve_saddle(assemble_mixed(mesh, f))
    if scheme == TPFA:
        return solve_tpfa(mesh, f)
    if scheme == PETROV:
        return solve_petrov_galerkin(mesh, f, closure)
    raise ValueError(f"unknown scheme {scheme!r}")


def solution_to_csv(mesh: Mesh, sol: DiscreteSolution) -> str:
    """Cell rows ``cell,<id>,<cx>,<cy>,<u>`` then edge rows ``edge,<id>,<flux>``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["kind", "cell_id", "cx", "cy", "u"])
    for k, ((cx, cy), u) in enumerate(zip(mesh.centroids, sol.u)):
        w.writerow(["cell", k, f"{cx:.17g}", f"{cy:.17g}", f"{u:.17g}"])
    w.writerow(["kind", "edge_id", "flux"])
    for a, q in enumerate(sol.p):
        w.writerow(["edge", a, f"{q:.17g}"])
    return buf.getvalue()


def solution_from_csv(text: str) -> tuple[np.ndarray, np.ndarray]:
    u, p = [], []
    for row in csv.reader(io.StringIO(text)):
        if row and row[0] == "cell":
            u.append(float(row[4]))
        elif row and row[0] == "edge":
            p.append(float(row[2]))
    return np.array(u), np.array(p)
