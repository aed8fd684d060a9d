"""Six-point flux stencils built from the dual Raviart-Thomas flux constraints.

For an interior edge ``SN`` with neighbourhood ``K, L, M, P, Q, R`` (see
:class:`~dualrt.mesh.EdgeNeighborhood`) the fluxes of the dual basis function
across ``SN, EN, NW, WS, SE`` are ``(eta, alpha, beta, gamma, delta)``. They
must satisfy three linear constraints::

    eta KL + alpha LM + beta KP + gamma KQ + delta LR = |SN| n_SN
    alpha LM.WA + beta KP.EB + gamma KQ.EC + delta LR.WD = -3 |SN| n_SN.(OL + OK)

where capital pairs are vectors between triangle centroids / vertices and
``O`` is the midpoint of ``SN``. The system is 3 x 5, leaving a
two-parameter family; a :class:`Closure` picks one member.

The momentum helpers (``eta1_from_L`` and friends) evaluate the first and
second order edge moments implied by a set of coefficients. They are
diagnostics: on coefficients satisfying the constraints the two expressions
of each moment must agree.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .geometry import rot_cw, tri_geom
from .mesh import EdgeNeighborhood, Mesh, MeshError, edge_neighborhood

RANK_TOL = 1e-10
COLUMNS = ("eta", "alpha", "beta", "gamma", "delta")


class IncompleteNeighborhoodError(MeshError):
    pass


class RankDeficientStencilError(ArithmeticError):
    def __init__(self, edge: int, ratio: float):
        super().__init__(
            f"stencil constraints of edge {edge} are rank deficient (sigma_min/sigma_max = {ratio:.3e})"
        )
        self.edge = edge


@dataclass(frozen=True)
class StencilCoefficients:
    eta: float
    alpha: float
    beta: float
    gamma: float
    delta: float

    def as_array(self) -> np.ndarray:
        return np.array([self.eta, self.alpha, self.beta, self.gamma, self.delta])

    @classmethod
    def from_array(cls, x) -> "StencilCoefficients":
        return cls(*(float(v) for v in x))


@dataclass(frozen=True)
class Closure:
    """Rule selecting one member of the two-parameter family of stencils.

    ``minnorm`` takes the minimum Euclidean norm solution; ``fixed`` adds
    ``t1 * z1 + t2 * z2`` to it, where ``(z1, z2)`` is the orthonormal null
    space basis returned by :func:`nullspace`.
    """

    kind: str = "minnorm"
    t1: float = 0.0
    t2: float = 0.0

    @classmethod
    def parse(cls, text: str) -> "Closure":
        text = text.strip().lower()
        if text in ("minnorm", "min_norm"):
            return MIN_NORM
        if text.startswith("fixed:"):
            try:
                t1, t2 = (float(t) for t in text[6:].split(","))
            except ValueError:
                raise ValueError(f"bad closure {text!r}, expected fixed:t1,t2") from None
            return cls("fixed", t1, t2)
        raise ValueError(f"unknown closure {text!r}")

    def __str__(self) -> str:
        return "minnorm" if self.kind == "minnorm" else f"fixed:{self.t1!r},{self.t2!r}"


MIN_NORM = Closure()


def fixed(t1: float, t2: float) -> Closure:
    return Closure("fixed", float(t1), float(t2))


@dataclass(frozen=True)
class StencilFrame:
    """Coordinates of the neighbourhood points and gyration radii of its cells."""

    S: np.ndarray
    N: np.ndarray
    W: np.ndarray
    E: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    O: np.ndarray
    # centroids
    K: np.ndarray
    L: np.ndarray
    M: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    rho: dict

    @property
    def n_SN(self) -> np.ndarray:
        return unit_normal(self.S, self.N)

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.N - self.S))


def unit_normal(p, q) -> np.ndarray:
    """Unit normal of the directed segment ``pq``, with ``(n, pq)`` direct."""
    d = np.asarray(q, dtype=float) - np.asarray(p, dtype=float)
    return rot_cw(d) / np.linalg.norm(d)


def stencil_frame(mesh: Mesh, nb: EdgeNeighborhood) -> StencilFrame:
    if not nb.complete:
        raise IncompleteNeighborhoodError(f"edge {nb.edge} has an incomplete neighbourhood")
    X = mesh.vertices
    geoms = {name: tri_geom(*X[mesh.cell_vertices[getattr(nb, name)]]) for name in "KLMPQR"}
    pts = {name: X[getattr(nb, name)] for name in "SNWEABCD"}
    return StencilFrame(
        O=0.5 * (pts["S"] + pts["N"]),
        rho={name: g.gyration_radius for name, g in geoms.items()},
        **pts,
        **{name: g.centroid for name, g in geoms.items()},
    )


@dataclass(frozen=True)
class ConstraintSystem:
    """3 x 5 system in the unknowns ``(eta, alpha, beta, gamma, delta)``.

    Rows 0-1 hold the vector constraint, row 2 the scalar one.
    """

    matrix: np.ndarray
    rhs: np.ndarray
    neighborhood: EdgeNeighborhood
    scale: float
    frame: StencilFrame

    def dimensionless(self) -> tuple[np.ndarray, np.ndarray]:
        """Lengths scaled by ``1/scale``, then every row scaled to unit norm."""
        A = self.matrix.copy()
        b = self.rhs.copy()
        A[:2] /= self.scale
        b[:2] /= self.scale
        A[2] /= self.scale**2
        b[2] /= self.scale**2
        norms = np.linalg.norm(A, axis=1)
        return A / norms[:, None], b / norms


def constraints_from_frame(f: StencilFrame, nb: EdgeNeighborhood) -> ConstraintSystem:
    KL, LM, KP, KQ, LR = f.L - f.K, f.M - f.L, f.P - f.K, f.Q - f.K, f.R - f.L
    n = f.n_SN
    length = f.length
    A = np.zeros((3, 5))
    A[:2] = np.column_stack([KL, LM, KP, KQ, LR])
    A[2, 1] = LM @ (f.A - f.W)
    A[2, 2] = KP @ (f.B - f.E)
    A[2, 3] = KQ @ (f.C - f.E)
    A[2, 4] = LR @ (f.D - f.W)
    b = np.empty(3)
    b[:2] = length * n
    b[2] = -3.0 * length * (n @ ((f.L - f.O) + (f.K - f.O)))
    return ConstraintSystem(A, b, nb, length, f)


def assemble_constraints(mesh: Mesh, nb: EdgeNeighborhood) -> ConstraintSystem:
    """Constraint system of a complete neighbourhood.

    Raises:
        IncompleteNeighborhoodError: if one of ``M, P, Q, R`` is missing.
    """
    return constraints_from_frame(stencil_frame(mesh, nb), nb)


def _svd(sys: ConstraintSystem):
    A, b = sys.dimensionless()
    U, s, Vt = np.linalg.svd(A)
    ratio = s[-1] / s[0]
    if not ratio > RANK_TOL:
        raise RankDeficientStencilError(sys.neighborhood.edge, ratio)
    return A, b, U, s, Vt


def nullspace(sys: ConstraintSystem) -> np.ndarray:
    """Orthonormal (5, 2) null space basis of the dimensionless system.

    Each column is signed so that its largest-magnitude entry is positive.
    """
    *_, Vt = _svd(sys)
    Z = Vt[3:].T.copy()
    for j in range(Z.shape[1]):
        if Z[np.argmax(np.abs(Z[:, j])), j] < 0:
            Z[:, j] *= -1
    return Z


def nullspace_dim(sys: ConstraintSystem, tol: float = RANK_TOL) -> int:
    A, _ = sys.dimensionless()
    s = np.linalg.svd(A, compute_uv=False)
    return A.shape[1] - int((s > tol * s[0]).sum())


def solve_stencil(sys: ConstraintSystem, closure: Closure = MIN_NORM) -> StencilCoefficients:
    """Pick one solution of the constraint system.

    Raises:
        RankDeficientStencilError: if ``sigma_min / sigma_max <= 1e-10`` for the
            dimensionless, row-equilibrated matrix.
    """
    A, b, U, s, Vt = _svd(sys)
    x = Vt[:3].T @ ((U.T @ b) / s)
    if closure.kind == "fixed":
        x = x + nullspace(sys) @ np.array([closure.t1, closure.t2])
    elif closure.kind != "minnorm":
        raise ValueError(f"unknown closure {closure.kind!r}")
    return StencilCoefficients.from_array(x)


def constraint_residuals(sys: ConstraintSystem, c: StencilCoefficients) -> tuple[float, float]:
    """Residual norms of the vector and scalar constraints, in physical units."""
    r = sys.matrix @ c.as_array() - sys.rhs
    return float(np.linalg.norm(r[:2])), float(abs(r[2]))


def residual_bounds(sys: ConstraintSystem, rel: float = 1e-10) -> tuple[float, float]:
    f = sys.frame
    scale36 = 3.0 * f.length * (np.linalg.norm(f.L - f.O) + np.linalg.norm(f.K - f.O))
    return rel * f.length, rel * scale36


def gradient_six_point(c: StencilCoefficients, u_K, u_L, u_M, u_P, u_Q, u_R):
    """Approximation of the normal flux ``int_SN grad u . n`` from six cell values."""
    return (
        c.eta * (u_L - u_K)
        + c.alpha * (u_M - u_L)
        + c.beta * (u_P - u_K)
        + c.gamma * (u_Q - u_K)
        + c.delta * (u_R - u_L)
    )


def reversed_neighborhood(mesh: Mesh, nb: EdgeNeighborhood) -> EdgeNeighborhood:
    """The same neighbourhood seen from the edge ``(N, S)``."""
    return EdgeNeighborhood(
        nb.edge, S=nb.N, N=nb.S, W=nb.E, E=nb.W, K=nb.L, L=nb.K,
        A=nb.C, B=nb.D, C=nb.A, D=nb.B, M=nb.Q, P=nb.R, Q=nb.M, R=nb.P,
    )  # fmt: skip


# --- momenta ----------------------------------------------------------------


def _as_frame(x) -> StencilFrame:
    return x.frame if isinstance(x, ConstraintSystem) else x


def eta1_from_L(c: StencilCoefficients, f) -> float:
    f = _as_frame(f)
    t = (f.N - f.S) / f.length
    return float(((f.L - f.S) * c.eta + (f.M - f.L) * c.alpha + (f.R - f.L) * c.delta) @ t)


def eta1_from_K(c: StencilCoefficients, f) -> float:
    f = _as_frame(f)
    t = (f.N - f.S) / f.length
    return float(((f.K - f.S) * c.eta - (f.P - f.K) * c.beta - (f.Q - f.K) * c.gamma) @ t)


def eta2_pair(c: StencilCoefficients, f) -> tuple[float, float, float, float]:
    """Second order momenta ``(eta2_L, eta2tilde_L, eta2_K, eta2tilde_K)``.

    The ``_L`` values come from the triangles ``L, M, R``, the ``_K`` values
    from ``K, P, Q``.
    """
    f = _as_frame(f)
    S, N, W, E, A, B, C, D = f.S, f.N, f.W, f.E, f.A, f.B, f.C, f.D
    rho = f.rho

    def sq(v):
        return float(v @ v)

    SA, ND, SB, NC = A - S, D - N, B - S, C - N
    eta2_L = (
        (rho["L"] ** 2 + sq(f.L - S)) * c.eta
        + SA @ ((E - S) + SA + (N - S)) / 6.0 * c.alpha
        + ND @ ((D - S) + (E - S) + (N - S)) / 6.0 * c.delta
    )
    eta2t_L = (
        (rho["L"] ** 2 + sq(f.L - N)) * c.eta
        + SA @ ((S - N) + (E - N) + (A - N)) / 6.0 * c.alpha
        + ND @ ((S - N) + ND + (E - N)) / 6.0 * c.delta
    )
    eta2t_K = (
        (rho["K"] ** 2 + sq(f.K - N)) * c.eta
        - SB @ ((B - N) + (W - N) + (S - N)) / 6.0 * c.beta
        - NC @ ((W - N) + NC + (S - N)) / 6.0 * c.gamma
    )
    eta2_K = (
        (rho["K"] ** 2 + sq(f.K - S)) * c.eta
        - SB @ ((N - S) + SB + (W - S)) / 6.0 * c.beta
        - NC @ ((N - S) + (W - S) + (C - S)) / 6.0 * c.gamma
    )
    return float(eta2_L), float(eta2t_L), float(eta2_K), float(eta2t_K)


# side -> (coefficient name, edge start, edge end)
SIDES = {
    "M": ("alpha", "E", "N"),
    "P": ("beta", "N", "W"),
    "Q": ("gamma", "W", "S"),
    "R": ("delta", "S", "E"),
}


@dataclass(frozen=True)
class SideMomenta:
    first: float
    first_tilde: float
    second: float
    second_tilde: float


def side_momenta(c: StencilCoefficients, f) -> dict[str, SideMomenta]:
    """Moments of the dual flux across the four outer edges, keyed by coefficient name.

    For the outer edge ``XY`` of triangle ``G`` (``EN`` of ``M``, ``NW`` of ``P``,
    ``WS`` of ``Q``, ``SE`` of ``R``) with flux ``x``:
    ``x1 = XG.t x``, ``x1~ = -YG.t x``, ``x2 = (rho_G^2 + XG^2) x`` and
    ``x2~ = (rho_G^2 + YG^2) x`` where ``t`` is the unit vector along ``XY``.
    """
    f = _as_frame(f)
    out = {}
    for side, (name, xs, ys) in SIDES.items():
        X, Y, G = getattr(f, xs), getattr(f, ys), getattr(f, side)
        x = getattr(c, name)
        t = (Y - X) / np.linalg.norm(Y - X)
        XG, YG = G - X, G - Y
        r2 = f.rho[side] ** 2
        out[name] = SideMomenta(
            first=float(XG @ t * x),
            first_tilde=float(-(YG @ t) * x),
            second=float((r2 + XG @ XG) * x),
            second_tilde=float((r2 + YG @ YG) * x),
        )
    return out


def dual_cell_average(c: StencilCoefficients, f, side: str) -> np.ndarray:
    """Integral of the dual basis function over an outer triangle.

    For side ``M`` this is ``(EM . n_EN) alpha n_EN``; ``P, Q, R`` follow by
    rotating the labels. Only the normal flux and the piecewise-constant
    divergence enter, so the value is fixed by the coefficients alone.
    """
    f = _as_frame(f)
    name, xs, ys = SIDES[side]
    X, Y, G = getattr(f, xs), getattr(f, ys), getattr(f, side)
    n = unit_normal(X, Y)
    return float((G - X) @ n) * getattr(c, name) * n


# --- whole-mesh helpers -----------------------------------------------------


@dataclass(frozen=True)
class EdgeStencil:
    edge: int
    neighborhood: EdgeNeighborhood
    coefficients: StencilCoefficients
    residual_35: float
    residual_36: float
    nullspace_dim: int


def edge_stencil(mesh: Mesh, a: int, closure: Closure = MIN_NORM) -> EdgeStencil:
    nb = edge_neighborhood(mesh, a)
    sys = assemble_constraints(mesh, nb)
    c = solve_stencil(sys, closure)
    r35, r36 = constraint_residuals(sys, c)
    return EdgeStencil(a, nb, c, r35, r36, nullspace_dim(sys))


def complete_edges(mesh: Mesh) -> list[int]:
    return [int(a) for a in mesh.interior_edges if edge_neighborhood(mesh, a).complete]


def mesh_stencils(mesh: Mesh, closure: Closure = MIN_NORM, edges: Optional[Iterable[int]] = None):
    """Stencils of every complete interior edge (or of ``edges``)."""
    if edges is None:
        edges = complete_edges(mesh)
    return [edge_stencil(mesh, a, closure) for a in edges]


def stencils_to_csv(stencils) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["edge_id", *COLUMNS, "residual_35", "residual_36", "nullspace_dim"])
    for st in stencils:
        w.writerow(
            [st.edge]
            + [f"{v:.17g}" for v in st.coefficients.as_array()]
            + [f"{st.residual_35:.17g}", f"{st.residual_36:.17g}", st.nullspace_dim]
        )
    return buf.getvalue()
