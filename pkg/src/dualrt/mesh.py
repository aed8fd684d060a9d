"""Conforming triangulations stored as an oriented cellular complex.

Every edge ``a`` is stored as a vertex pair ``(S, N)`` together with its
co-boundary ``(K, L)``. The orientation is chosen so that ``K = (S, N, W)`` is
counterclockwise; the unit normal ``n_a = rot(-90 deg)(N - S) / |N - S|`` then
points from ``K`` towards ``L`` (outwards on the boundary, where ``L`` is
absent and stored as ``-1``).

Inside a cell, local edge ``i`` is the edge opposite local vertex ``i``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

from .geometry import DEGENERACY_TOL, cross2, rot_cw


class MeshError(ValueError):
    pass


class TopologyError(MeshError):
    pass


class MeshFormatError(MeshError):
    def __init__(self, message: str, lineno: Optional[int] = None, source: str = ""):
        where = f"{source}:{lineno}: " if lineno is not None else ""
        super().__init__(where + message)
        self.lineno = lineno


def _readonly(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable triangulation with precomputed incidence maps.

    Attributes:
        vertices: (V, 2) coordinates.
        edge_vertices: (E, 2) vertex indices ``(S, N)``.
        edge_cells: (E, 2) co-boundary ``(K, L)``; ``L = -1`` on the boundary.
        cell_vertices: (F, 3) counterclockwise vertex indices.
        cell_edges: (F, 3) edge opposite each local vertex.
        cell_signs: (F, 3) +1 when the cell is the ``K`` of that edge, else -1.
    """

    vertices: np.ndarray
    edge_vertices: np.ndarray
    edge_cells: np.ndarray
    cell_vertices: np.ndarray
    cell_edges: np.ndarray
    cell_signs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vertices", _readonly(self.vertices, float).reshape(-1, 2))
        for name in ("edge_vertices", "edge_cells"):
            object.__setattr__(self, name, _readonly(getattr(self, name), np.int64).reshape(-1, 2))
        for name in ("cell_vertices", "cell_edges", "cell_signs"):
            object.__setattr__(self, name, _readonly(getattr(self, name), np.int64).reshape(-1, 3))

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_edges(self) -> int:
        return len(self.edge_vertices)

    @property
    def num_cells(self) -> int:
        return len(self.cell_vertices)

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_cells[:, 1] < 0)

    @cached_property
    def interior_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_cells[:, 1] >= 0)

    def is_boundary(self, a: int) -> bool:
        return bool(self.edge_cells[a, 1] < 0)

    @cached_property
    def cell_coords(self) -> np.ndarray:
        return self.vertices[self.cell_vertices]

    @cached_property
    def areas(self) -> np.ndarray:
        v = self.cell_coords
        return 0.5 * cross2(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.cell_coords.mean(axis=1)

    @cached_property
    def edge_vectors(self) -> np.ndarray:
        v = self.vertices[self.edge_vertices]
        return v[:, 1] - v[:, 0]

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        return np.linalg.norm(self.edge_vectors, axis=1)

    @cached_property
    def edge_midpoints(self) -> np.ndarray:
        return self.vertices[self.edge_vertices].mean(axis=1)

    @cached_property
    def normals(self) -> np.ndarray:
        """Unit normals derived from the stored ``(S, N)`` order."""
        return rot_cw(self.edge_vectors) / self.edge_lengths[:, None]

    @cached_property
    def edge_index(self) -> dict[tuple[int, int], int]:
        """Map from a sorted vertex pair to its edge."""
        return {
            (int(min(s, n)), int(max(s, n))): a for a, (s, n) in enumerate(self.edge_vertices)
        }

    def find_edge(self, p: int, q: int) -> int:
        return self.edge_index[(min(p, q), max(p, q))]

    def opposite_vertex(self, a: int, c: int) -> int:
        """Vertex of cell ``c`` not on edge ``a``."""
        i = int(np.flatnonzero(self.cell_edges[c] == a)[0])
        return int(self.cell_vertices[c, i])

    @classmethod
    def from_cells(cls, vertices, cells) -> "Mesh":
        """Build the complex from vertex coordinates and triangle connectivity.

        Clockwise cells are reordered counterclockwise; edges are created in
        order of first appearance.

        Raises:
            TopologyError: on degenerate cells, edges shared by more than two
                cells, or inconsistently oriented neighbours.
        """
        vertices = np.asarray(vertices, dtype=float).reshape(-1, 2)
        cells = np.array(cells, dtype=np.int64).reshape(-1, 3)
        nv = len(vertices)
        if cells.size and (cells.min() < 0 or cells.max() >= nv):
            raise TopologyError("cell references a vertex index out of range")

        for c, tri in enumerate(cells):
            if len(set(tri.tolist())) < 3:
                raise TopologyError(f"cell {c} is degenerate (repeated vertex)")
            p = vertices[tri]
            e1, e2 = p[1] - p[0], p[2] - p[0]
            sarea = 0.5 * cross2(e1, e2)
            diam2 = max(e1 @ e1, e2 @ e2, (p[2] - p[1]) @ (p[2] - p[1]))
            if abs(sarea) < DEGENERACY_TOL * diam2:
                raise TopologyError(f"cell {c} is degenerate (zero area)")
            if sarea < 0:
                cells[c, [1, 2]] = cells[c, [2, 1]]

        lookup: dict[tuple[int, int], int] = {}
        edge_vertices: list[tuple[int, int]] = []
        edge_cells: list[list[int]] = []
        cell_edges = np.empty_like(cells)
        cell_signs = np.empty_like(cells)
        for c, tri in enumerate(cells):
            for i in range(3):
                s, n = int(tri[(i + 1) % 3]), int(tri[(i + 2) % 3])
                key = (min(s, n), max(s, n))
                a = lookup.get(key)
                if a is None:
                    a = len(edge_vertices)
                    lookup[key] = a
                    edge_vertices.append((s, n))
                    edge_cells.append([c, -1])
                    sign = 1
                else:
                    if edge_cells[a][1] >= 0:
                        raise TopologyError(f"edge {key} has more than two incident cells")
                    if edge_vertices[a] != (n, s):
                        raise TopologyError(f"edge {key} is traversed in the same direction by two cells")
                    edge_cells[a][1] = c
                    sign = -1
                cell_edges[c, i] = a
                cell_signs[c, i] = sign

        return cls(vertices, edge_vertices, edge_cells, cells, cell_edges, cell_signs)


def build_structured(n: int, split: str = "ne") -> Mesh:
    """Uniform triangulation of the unit square with ``n x n`` squares.

    Args:
        n: number of squares per side (>= 1).
        split: ``"ne"`` cuts each square along the (0,0)-(1,1) diagonal,
            ``"nw"`` along the (1,0)-(0,1) diagonal.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if split not in ("ne", "nw"):
        raise ValueError(f"unknown split {split!r}")
    x = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(x, x)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    cells = []
    for j in range(n):
        for i in range(n):
            v00 = j * (n + 1) + i
            v10, v01, v11 = v00 + 1, v00 + n + 1, v00 + n + 2
            if split == "ne":
                cells += [(v00, v10, v11), (v00, v11, v01)]
            else:
                cells += [(v00, v10, v01), (v10, v11, v01)]
    return Mesh.from_cells(vertices, cells)


def renumber(mesh: Mesh, vertex_perm=None, cell_perm=None) -> Mesh:
    """Rebuild ``mesh`` with permuted vertex and cell numbering.

    ``vertex_perm[i]`` is the old index of new vertex ``i``; same for cells.
    """
    nv, nc = mesh.num_vertices, mesh.num_cells
    vp = np.arange(nv) if vertex_perm is None else np.asarray(vertex_perm)
    cp = np.arange(nc) if cell_perm is None else np.asarray(cell_perm)
    new_of_old = np.empty(nv, dtype=np.int64)
    new_of_old[vp] = np.arange(nv)
    return Mesh.from_cells(mesh.vertices[vp], new_of_old[mesh.cell_vertices[cp]])


# --- Triangle-style .node / .ele text format -------------------------------

_COMMENT = re.compile(r"#.*")


def _data_lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _COMMENT.sub("", raw).strip()
        if line:
            yield lineno, line.split()


def _parse_table(text: str, source: str, ncols: int, conv):
    lines = _data_lines(text)
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise MeshFormatError("empty file", None, source) from None
    try:
        count = int(header[0])
        if source == "node" and int(header[1]) != 2:
            raise MeshFormatError("only dimension 2 is supported", lineno, source)
        if source == "ele" and int(header[1]) != 3:
            raise MeshFormatError("only 3-node triangles are supported", lineno, source)
    except (IndexError, ValueError):
        raise MeshFormatError(f"bad header {' '.join(header)!r}", lineno, source) from None

    ids, rows = [], []
    for lineno, tok in lines:
        if len(rows) == count:
            raise MeshFormatError("more entries than declared in the header", lineno, source)
        if len(tok) < ncols + 1:
            raise MeshFormatError(f"expected at least {ncols + 1} fields", lineno, source)
        try:
            ids.append(int(tok[0]))
            rows.append([conv(t) for t in tok[1 : ncols + 1]])
        except ValueError:
            raise MeshFormatError(f"cannot parse {' '.join(tok)!r}", lineno, source) from None
        if ids[-1] != ids[0] + len(ids) - 1:
            raise MeshFormatError("entry indices must be consecutive", lineno, source)
    if len(rows) != count:
        raise MeshFormatError(f"header declares {count} entries, found {len(rows)}", None, source)
    return ids, rows


def load_mesh(node_text: str, ele_text: str) -> Mesh:
    """Parse ``.node`` / ``.ele`` text (1-based indices) into a :class:`Mesh`.

    Raises:
        MeshFormatError: malformed text, with the offending line number.
        TopologyError: out-of-range or repeated vertex indices, zero-area
            cells, non-manifold edges.
    """
    ids, coords = _parse_table(node_text, "node", 2, float)
    if ids and ids[0] not in (0, 1):
        raise MeshFormatError("node numbering must start at 0 or 1", None, "node")
    base = ids[0] if ids else 1
    _, cells = _parse_table(ele_text, "ele", 3, int)
    cells = np.array(cells, dtype=np.int64).reshape(-1, 3) - base
    if cells.size and (cells.min() < 0 or cells.max() >= len(coords)):
        bad = int(np.flatnonzero((cells < 0).any(1) | (cells >= len(coords)).any(1))[0])
        raise TopologyError(f"element {bad + base} references a node outside 1..{len(coords)}")
    return Mesh.from_cells(np.array(coords, dtype=float).reshape(-1, 2), cells)


def save_mesh(mesh: Mesh) -> tuple[str, str]:
    """Serialize to ``(node_text, ele_text)`` with 17 significant digits."""
    node = [f"{mesh.num_vertices} 2 0 0"]
    node += [f"{i + 1} {x:.17g} {y:.17g}" for i, (x, y) in enumerate(mesh.vertices)]
    ele = [f"{mesh.num_cells} 3 0"]
    ele += [f"{c + 1} {a + 1} {b + 1} {d + 1}" for c, (a, b, d) in enumerate(mesh.cell_vertices)]
    return "\n".join(node) + "\n", "\n".join(ele) + "\n"


def read_mesh_files(node_path, ele_path) -> Mesh:
    with open(node_path) as fn, open(ele_path) as fe:
        return load_mesh(fn.read(), fe.read())


# --- Six-triangle edge neighbourhood ---------------------------------------


@dataclass(frozen=True)
class EdgeNeighborhood:
    """Vertices and triangles around an interior edge ``a = (S, N)``.

    ``K = (S, N, W)``, ``L = (N, S, E)``, and the outer triangles ``M, P, Q, R``
    lie across the edges ``EN, NW, WS, SE`` with third vertices ``A, B, C, D``.
    Outer entries are ``None`` when the corresponding edge is on the boundary.
    """

    edge: int
    S: int
    N: int
    W: int
    E: int
    K: int
    L: int
    A: Optional[int] = None
    B: Optional[int] = None
    C: Optional[int] = None
    D: Optional[int] = None
    M: Optional[int] = None
    P: Optional[int] = None
    Q: Optional[int] = None
    R: Optional[int] = None

    @property
    def complete(self) -> bool:
        return None not in (self.M, self.P, self.Q, self.R)

    @property
    def triangles(self) -> tuple:
        return (self.K, self.L, self.M, self.P, self.Q, self.R)

    @property
    def outer_vertices(self) -> tuple:
        return (self.A, self.B, self.C, self.D)


def _across(mesh: Mesh, p: int, q: int, inner: int) -> tuple[Optional[int], Optional[int]]:
    """Cell across edge ``pq`` from ``inner`` and its vertex off that edge."""
    a = mesh.find_edge(p, q)
    k, l = (int(c) for c in mesh.edge_cells[a])
    other = l if k == inner else k
    if other < 0:
        return None, None
    return other, mesh.opposite_vertex(a, other)


def edge_neighborhood(mesh: Mesh, a: int) -> EdgeNeighborhood:
    """Six-triangle neighbourhood of the interior edge ``a``.

    Raises:
        MeshError: if ``a`` is a boundary edge.
    """
    K, L = (int(c) for c in mesh.edge_cells[a])
    if L < 0:
        raise MeshError(f"edge {a} is on the boundary and has no neighbourhood")
    S, N = (int(v) for v in mesh.edge_vertices[a])
    W = mesh.opposite_vertex(a, K)
    E = mesh.opposite_vertex(a, L)
    M, A = _across(mesh, E, N, L)
    P, B = _across(mesh, N, W, K)
    Q, C = _across(mesh, W, S, K)
    R, D = _across(mesh, S, E, L)
    return EdgeNeighborhood(a, S, N, W, E, K, L, A, B, C, D, M, P, Q, R)


# --- Validation ------------------------------------------------------------


def validate(mesh: Mesh) -> list[str]:
    """Return a list of violated invariants (empty when the mesh is valid).

    Each message starts with the invariant name: ``index-range``,
    ``orientation``, ``coboundary``, ``direct-pair``, ``boundary-normal``,
    ``incidence``, ``euler``.
    """
    report: list[str] = []
    nv, ne, nc = mesh.num_vertices, mesh.num_edges, mesh.num_cells
    ev, ec, cv, ce = mesh.edge_vertices, mesh.edge_cells, mesh.cell_vertices, mesh.cell_edges

    if (
        (ev.size and (ev.min() < 0 or ev.max() >= nv))
        or (cv.size and (cv.min() < 0 or cv.max() >= nv))
        or (ce.size and (ce.min() < 0 or ce.max() >= ne))
        or (ec.size and (ec[:, 0].min() < 0 or ec.max() >= nc or ec[:, 1].min() < -1))
    ):
        report.append("index-range: an index is out of range")
        return report

    for c in np.flatnonzero(mesh.areas <= 0):
        report.append(f"orientation: cell {c} is not counterclockwise")

    for a in range(ne):
        k, l = ec[a]
        if k == l:
            report.append(f"coboundary: edge {a} has identical cells K=L={k}")
            continue
        s, n = ev[a]
        if s == n:
            report.append(f"coboundary: edge {a} has identical endpoints")
            continue
        if n not in cv[k] or s not in cv[k] or (l >= 0 and (n not in cv[l] or s not in cv[l])):
            report.append(f"incidence: endpoints of edge {a} are not vertices of its co-boundary")
            continue
        # normal oriented away from the third vertex of K, i.e. from K towards L
        w = (set(cv[k].tolist()) - {s, n}).pop()
        sn = mesh.vertices[n] - mesh.vertices[s]
        nrm = rot_cw(sn)
        if nrm @ (mesh.vertices[w] - mesh.vertices[s]) > 0:
            nrm = -nrm
        if l >= 0:
            nrm_kl = mesh.centroids[l] - mesh.centroids[k]
            if nrm_kl @ nrm <= 0:
                report.append(f"direct-pair: normal of edge {a} does not point from K towards L")
            elif cross2(nrm, sn) <= 0:
                report.append(f"direct-pair: (n_a, SN) is not direct for edge {a}")
        else:
            if cross2(nrm, sn) <= 0:
                report.append(f"boundary-normal: boundary edge {a} normal is not outward for (S, N)")

    count = np.zeros(nc, dtype=int)
    for a in range(ne):
        for c in ec[a]:
            if c >= 0:
                count[c] += 1
    for c in range(nc):
        for i in range(3):
            a = ce[c, i]
            if c not in ec[a]:
                report.append(f"incidence: cell {c} is not in the co-boundary of its edge {a}")
            elif set(ev[a].tolist()) != set(cv[c].tolist()) - {cv[c, i]}:
                report.append(f"incidence: local edge {i} of cell {c} is not opposite vertex {i}")
            expected = 1 if ec[a, 0] == c else -1
            if mesh.cell_signs[c, i] != expected:
                report.append(f"incidence: sign of edge {a} in cell {c} is inconsistent")
        if count[c] != 3:
            report.append(f"incidence: cell {c} appears in {count[c]} co-boundaries, expected 3")

    if nv - ne + nc != 1:
        report.append(f"euler: V - E + F = {nv - ne + nc}, expected 1")
    return report
