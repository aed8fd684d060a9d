"""Lowest-order Raviart-Thomas fields on a :class:`~dualrt.mesh.Mesh`.

The basis function of edge ``a = (S, N)`` with co-boundary ``(K, L)`` is
``(x - W) / (2|K|)`` on ``K``, ``-(x - E) / (2|L|)`` on ``L`` and zero
elsewhere. Flux vectors are plain float arrays of length ``num_edges``.
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np
import scipy.sparse as sps

from .geometry import segment_rule, triangle_points
from .mesh import Mesh

POINT_TOL = 1e-12


def barycentric(mesh: Mesh, c: int, x) -> np.ndarray:
    v = mesh.cell_coords[c]
    T = np.column_stack([v[1] - v[0], v[2] - v[0]])
    l12 = np.linalg.solve(T, np.asarray(x, dtype=float) - v[0])
    return np.array([1.0 - l12.sum(), l12[0], l12[1]])


def contains(mesh: Mesh, c: int, x, tol: float = POINT_TOL) -> bool:
    return bool(barycentric(mesh, c, x).min() >= -tol)


def locate(mesh: Mesh, x, tol: float = POINT_TOL) -> Optional[int]:
    """Cell containing ``x``; on a shared edge the edge's ``K`` wins.

    Returns ``None`` outside the mesh.
    """
    x = np.asarray(x, dtype=float)
    v = mesh.cell_coords
    e1, e2 = v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    d = x - v[:, 0]
    l1 = (d[:, 0] * e2[:, 1] - d[:, 1] * e2[:, 0]) / det
    l2 = (e1[:, 0] * d[:, 1] - e1[:, 1] * d[:, 0]) / det
    bary_min = np.minimum(np.minimum(l1, l2), 1.0 - l1 - l2)
    found = np.flatnonzero(bary_min >= -tol)
    if len(found) == 0:
        return None
    if len(found) == 2:
        shared = np.intersect1d(mesh.cell_edges[found[0]], mesh.cell_edges[found[1]])
        if len(shared) == 1:
            return int(mesh.edge_cells[shared[0], 0])
    return int(found[0])


def local_basis(mesh: Mesh, c: int, i: int, x) -> np.ndarray:
    """Basis function of local edge ``i`` of cell ``c`` evaluated at ``x`` (..., 2)."""
    s = mesh.cell_signs[c, i]
    w = mesh.vertices[mesh.cell_vertices[c, i]]
    return s * (np.asarray(x, dtype=float) - w) / (2.0 * mesh.areas[c])


def eval_basis(mesh: Mesh, a: int, x) -> np.ndarray:
    """Value of the basis function of edge ``a`` at the point ``x``."""
    for c in mesh.edge_cells[a]:
        if c >= 0 and contains(mesh, c, x):
            i = int(np.flatnonzero(mesh.cell_edges[c] == a)[0])
            return local_basis(mesh, c, i, x)
    return np.zeros(2)


def div_basis(mesh: Mesh, a: int, c: int) -> float:
    k, l = mesh.edge_cells[a]
    if c == k:
        return 1.0 / mesh.areas[c]
    if c == l:
        return -1.0 / mesh.areas[c]
    return 0.0


def cell_field(mesh: Mesh, q, cells, x) -> np.ndarray:
    """Evaluate ``sum_a q_a phi_a`` restricted to given cells.

    Args:
        q: flux vector (E,).
        cells: (n,) cell indices.
        x: (n, ..., 2) points, each set evaluated with the formula of its cell.
    """
    q = np.asarray(q, dtype=float)
    cells = np.asarray(cells)
    x = np.asarray(x, dtype=float)
    coef = q[mesh.cell_edges[cells]] * mesh.cell_signs[cells] / (2.0 * mesh.areas[cells, None])
    w = mesh.cell_coords[cells]
    extra = x.ndim - 2
    coef = coef.reshape(coef.shape[:1] + (1,) * extra + (3, 1))
    w = w.reshape(w.shape[:1] + (1,) * extra + (3, 2))
    return (coef * (x[..., None, :] - w)).sum(axis=-2)


def eval_field(mesh: Mesh, q, x) -> np.ndarray:
    """Value of ``sum_a q_a phi_a`` at ``x`` (zero outside the mesh)."""
    c = locate(mesh, x)
    if c is None:
        return np.zeros(2)
    return cell_field(mesh, q, [c], np.asarray(x, dtype=float)[None, :])[0]


def cell_divergence(mesh: Mesh, q) -> np.ndarray:
    """Cellwise constant divergence of ``sum_a q_a phi_a``."""
    q = np.asarray(q, dtype=float)
    return (q[mesh.cell_edges] * mesh.cell_signs).sum(axis=1) / mesh.areas


def flux_dof(mesh: Mesh, b: int, q, degree: int = 2) -> float:
    """Normal flux of ``sum_a q_a phi_a`` through edge ``b``, by quadrature."""
    t, w = segment_rule(degree)
    s, n = mesh.vertices[mesh.edge_vertices[b]]
    pts = s + t[:, None] * (n - s)
    k = mesh.edge_cells[b, 0]
    vals = cell_field(mesh, q, [k], pts[None])[0]
    return float(mesh.edge_lengths[b] * (w @ (vals @ mesh.normals[b])))


def local_mass(mesh: Mesh) -> np.ndarray:
    """(F, 3, 3) local mass matrices with orientation signs applied."""
    pts, wq = triangle_points(mesh.cell_coords, 2)
    diff = pts[:, :, None, :] - mesh.cell_coords[:, None, :, :]  # (F, q, 3, 2)
    gram = np.einsum("fq,fqid,fqjd->fij", wq, diff, diff)
    s = mesh.cell_signs / (2.0 * mesh.areas[:, None])
    return gram * s[:, :, None] * s[:, None, :]


def mass_matrix(mesh: Mesh) -> sps.csr_array:
    """E x E Gram matrix of the basis functions, assembled cell by cell."""
    loc = local_mass(mesh)
    rows = np.repeat(mesh.cell_edges, 3, axis=1).ravel()
    cols = np.tile(mesh.cell_edges, (1, 3)).ravel()
    E = mesh.num_edges
    return sps.csr_array(sps.coo_array((loc.ravel(), (rows, cols)), shape=(E, E)))


def divergence_matrix(mesh: Mesh) -> sps.csr_array:
    """F x E matrix of ``int_K div phi_b dx`` (entries +-1)."""
    F, E = mesh.num_cells, mesh.num_edges
    rows = np.repeat(np.arange(F), 3)
    return sps.csr_array(
        sps.coo_array(
            (mesh.cell_signs.ravel().astype(float), (rows, mesh.cell_edges.ravel())), shape=(F, E)
        )
    )


def interpolate_hdiv(mesh: Mesh, w: Callable, degree: int = 3) -> np.ndarray:
    """Edge fluxes ``int_a w . n_a`` of a vector field ``w`` (points (n, 2) -> (n, 2))."""
    t, wt = segment_rule(degree)
    ends = mesh.vertices[mesh.edge_vertices]
    pts = ends[:, None, 0] + t[None, :, None] * (ends[:, None, 1] - ends[:, None, 0])
    vals = np.asarray(w(pts.reshape(-1, 2)), dtype=float).reshape(pts.shape)
    normal_part = np.einsum("eqd,ed->eq", vals, mesh.normals)
    return mesh.edge_lengths * (normal_part @ wt)
