"""Triangle and segment geometry, quadrature rules and mesh regularity."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

DEGENERACY_TOL = 1e-14


class DegenerateTriangleError(ValueError):
    pass


def cross2(u, v):
    """z-component of the cross product of 2D vectors (broadcasts)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def rot_cw(v):
    """Rotate 2D vectors by -90 degrees: (x, y) -> (y, -x)."""
    v = np.asarray(v, dtype=float)
    return np.stack([v[..., 1], -v[..., 0]], axis=-1)


def signed_area(p0, p1, p2) -> float:
    return 0.5 * float(cross2(np.subtract(p1, p0), np.subtract(p2, p0)))


@dataclass(frozen=True)
class TriGeom:
    """Exact geometric data of one triangle.

    ``inradius_diameter`` is twice the inradius (the diameter of the inscribed
    ball), while ``gyration_radius`` is the radius of gyration about the
    centroid, ``sqrt((a^2 + b^2 + c^2) / 36)``.
    """

    vertices: np.ndarray
    area: float
    centroid: np.ndarray
    inradius_diameter: float
    diameter: float
    circumcenter: np.ndarray
    gyration_radius: float

    @property
    def quality(self) -> float:
        return self.diameter / self.inradius_diameter


def tri_geom(p0, p1, p2) -> TriGeom:
    """Compute the geometric quantities of the triangle ``(p0, p1, p2)``.

    Raises:
        DegenerateTriangleError: if the signed area is below
            ``1e-14 * diameter**2`` in magnitude.
    """
    v = np.array([p0, p1, p2], dtype=float)
    sides = np.array(
        [np.linalg.norm(v[2] - v[1]), np.linalg.norm(v[0] - v[2]), np.linalg.norm(v[1] - v[0])]
    )
    diameter = float(sides.max())
    sarea = signed_area(*v)
    if abs(sarea) < DEGENERACY_TOL * diameter**2 or diameter == 0.0:
        raise DegenerateTriangleError(f"degenerate triangle {v.tolist()}")
    area = abs(sarea)

    # circumcenter relative to p0
    b = v[1] - v[0]
    c = v[2] - v[0]
    d = 2.0 * cross2(b, c)
    bb, cc = b @ b, c @ c
    cc_rel = np.array([c[1] * bb - b[1] * cc, b[0] * cc - c[0] * bb]) / d

    return TriGeom(
        vertices=v,
        area=area,
        centroid=v.mean(axis=0),
        inradius_diameter=4.0 * area / sides.sum(),
        diameter=diameter,
        circumcenter=v[0] + cc_rel,
        gyration_radius=float(np.sqrt((sides**2).sum() / 36.0)),
    )


def second_moment_about(tri: TriGeom, p) -> float:
    """Mean of ``|x - p|^2`` over the triangle: ``gyration^2 + |centroid - p|^2``."""
    d = tri.centroid - np.asarray(p, dtype=float)
    return tri.gyration_radius**2 + float(d @ d)


# Barycentric rules on the reference simplex; weights sum to one.
_S5a = (6.0 - np.sqrt(15.0)) / 21.0
_S5b = (6.0 + np.sqrt(15.0)) / 21.0
_W5a = (155.0 - np.sqrt(15.0)) / 1200.0
_W5b = (155.0 + np.sqrt(15.0)) / 1200.0


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Barycentric points (n, 3) and weights (n,) of a symmetric triangle rule.

    Degree 1 uses the vertices, degree 2 the edge midpoints, degree 3 the
    four-point rule with a negative centroid weight and degree 5 the seven-point
    Radon rule.
    """
    if degree == 1:
        bary = np.eye(3)
        w = np.full(3, 1.0 / 3.0)
    elif degree == 2:
        bary = np.array([[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]])
        w = np.full(3, 1.0 / 3.0)
    elif degree == 3:
        bary = np.array(
            [[1 / 3, 1 / 3, 1 / 3], [0.6, 0.2, 0.2], [0.2, 0.6, 0.2], [0.2, 0.2, 0.6]]
        )
        w = np.array([-27.0 / 48.0, 25.0 / 48.0, 25.0 / 48.0, 25.0 / 48.0])
    elif degree == 5:
        a, b = _S5a, _S5b
        bary = np.array(
            [
                [1 / 3, 1 / 3, 1 / 3],
                [1 - 2 * a, a, a],
                [a, 1 - 2 * a, a],
                [a, a, 1 - 2 * a],
                [1 - 2 * b, b, b],
                [b, 1 - 2 * b, b],
                [b, b, 1 - 2 * b],
            ]
        )
        w = np.array([9.0 / 40.0, _W5a, _W5a, _W5a, _W5b, _W5b, _W5b])
    else:
        raise ValueError(f"unsupported triangle quadrature degree {degree}")
    bary.setflags(write=False)
    w.setflags(write=False)
    return bary, w


def triangle_points(vertices, degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Physical quadrature points and weights (already scaled by the area).

    ``vertices`` may be a single triangle (3, 2) or a batch (F, 3, 2); the
    result then has shape (F, n, 2) and (F, n).
    """
    vertices = np.asarray(vertices, dtype=float)
    bary, w = triangle_rule(degree)
    pts = np.einsum("qi,...id->...qd", bary, vertices)
    e1 = vertices[..., 1, :] - vertices[..., 0, :]
    e2 = vertices[..., 2, :] - vertices[..., 0, :]
    area = 0.5 * np.abs(cross2(e1, e2))
    return pts, area[..., None] * w


def quadrature_triangle(f: Callable, tri: TriGeom, degree: int):
    """Integrate ``f`` over a triangle.

    ``f`` receives an array of points of shape (n, 2) and returns either (n,)
    for a scalar field or (n, 2) for a vector field.
    """
    pts, w = triangle_points(tri.vertices, degree)
    vals = np.asarray(f(pts), dtype=float)
    return np.tensordot(w, vals, axes=(0, 0))


@lru_cache(maxsize=None)
def segment_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points on [0, 1] and weights summing to one."""
    if degree not in (1, 2, 3):
        raise ValueError(f"unsupported edge quadrature degree {degree}")
    x, w = np.polynomial.legendre.leggauss((degree + 2) // 2)
    t = 0.5 * (x + 1.0)
    w = 0.5 * w
    t.setflags(write=False)
    w.setflags(write=False)
    return t, w


def quadrature_edge(f: Callable, p, q, degree: int):
    """Integrate ``f`` along the segment from ``p`` to ``q`` (arclength measure).

    ``f`` receives points (n, 2) and the arclength parameters (n,) measured
    from ``p``.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    t, w = segment_rule(degree)
    length = float(np.linalg.norm(q - p))
    pts = p + t[:, None] * (q - p)
    vals = np.asarray(f(pts, t * length), dtype=float)
    return length * np.tensordot(w, vals, axes=(0, 0))


def cell_geometry(mesh) -> list[TriGeom]:
    return [tri_geom(*mesh.vertices[c]) for c in mesh.cell_vertices]


def quality_theta(mesh) -> float:
    """Regularity parameter: max over cells of diameter / inscribed-ball diameter."""
    return max(g.quality for g in cell_geometry(mesh))


def mesh_size(mesh) -> float:
    """Largest cell diameter."""
    v = mesh.vertices[mesh.edge_vertices]
    return float(np.linalg.norm(v[:, 1] - v[:, 0], axis=1).max())
