import numpy as np
import pytest

_ACCEPTANCE: dict[int, str] = {}

from dualrt.mesh import Mesh, build_structured


def random_triangles(seed, count, min_quality=0.05):
    """Counterclockwise triangles with area / diameter^2 above ``min_quality``."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        p = rng.uniform(-3, 3, size=(3, 2))
        e1, e2 = p[1] - p[0], p[2] - p[0]
        area = 0.5 * (e1[0] * e2[1] - e1[1] * e2[0])
        diam2 = max(e1 @ e1, e2 @ e2, (p[2] - p[1]) @ (p[2] - p[1]))
        if abs(area) < min_quality * diam2:
            continue
        out.append(p if area > 0 else p[[0, 2, 1]])
    return out


def perturbed_mesh(n, amplitude=0.2, seed=0, margin=1):
    """Structured mesh with vertices jittered by ``amplitude * h``.

    Only vertices at least ``margin`` layers away from the boundary move.
    """
    base = build_structured(n)
    rng = np.random.default_rng(seed)
    v = base.vertices.copy()
    lo, hi = (margin - 0.5) / n, 1 - (margin - 0.5) / n
    inner = np.all((v > lo) & (v < hi), axis=1)
    v[inner] += amplitude / n * rng.uniform(-1, 1, size=(inner.sum(), 2))
    return Mesh.from_cells(v, base.cell_vertices)


def lattice_mesh(n, amplitude=0.0, seed=0):
    """Equilateral triangles on an n x n lattice (acute, strictly Delaunay)."""
    h = 1.0 / n
    rng = np.random.default_rng(seed)

    def idx(i, j):
        return j * (n + 1) + i

    v = np.array([((i + 0.5 * (j % 2)) * h, j * h * np.sqrt(3) / 2) for j in range(n + 1) for i in range(n + 1)])
    v += amplitude * h * rng.uniform(-1, 1, v.shape)
    cells = []
    for j in range(n):
        for i in range(n):
            a, b, c, d = idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1)
            # even rows lean right, odd rows lean left
            cells += [(a, b, c), (b, d, c)] if j % 2 == 0 else [(a, b, d), (a, d, c)]
    return Mesh.from_cells(v, cells)


# S, N, W, E, A, B, C, D of an edge neighbourhood symmetric about both axes
SYMMETRIC_PATCH = np.array(
    [(0, -1), (0, 1), (-1, 0), (1, 0), (1.2, 1.1), (-1.2, 1.1), (-1.2, -1.1), (1.2, -1.1)], float
)


def patch_mesh(points):
    S, N, W, E, A, B, C, D = range(8)
    return Mesh.from_cells(points, [(S, N, W), (N, S, E), (N, E, A), (W, N, B), (S, W, C), (E, S, D)])


@pytest.fixture
def symmetric_patch():
    return patch_mesh(SYMMETRIC_PATCH)


@pytest.fixture(scope="session")
def mesh6():
    return build_structured(6)


@pytest.fixture
def criterion():
    """``criterion(n, ok, detail)`` records a PASS/FAIL line for acceptance criterion ``n``."""

    def record(number, ok, detail):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[number])
