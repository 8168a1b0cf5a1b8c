"""Triangulations of the benchmark domains.

Every mesh is stored interior-first: nodes ``0 .. n_interior-1`` are interior
and the remaining ones lie on the boundary.  Dirichlet data, Hessian boundary
repair and the splitting solver all rely on that layout.
"""
from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np

__all__ = [
    "MeshError",
    "MeshParseError",
    "Triangulation",
    "NodeGeometry",
    "generate_regular_square",
    "generate_half_unit_disk",
    "generate_eye_domain",
    "load_mesh",
    "write_mesh",
    "compute_node_geometry",
    "triangle_areas",
    "boundary_edges",
    "edge_lengths",
]

DOMAIN_TAGS = ("unit-square", "half-unit-disk", "eye-shaped", "external")
DISK_CENTER = np.array([0.5, 0.5])
DISK_RADIUS = 0.5


class MeshError(ValueError):
    """Invalid mesh input or failed validation."""


class MeshParseError(MeshError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclasses.dataclass(frozen=True, eq=False)
class Triangulation:
    """Conforming P1 triangulation with interior-first node ordering.

    Attributes
    ----------
    nodes : (N, 2) float array
    triangles : (T, 3) int array, counterclockwise
    n_interior : int
        Number of interior nodes; they occupy indices ``0 .. n_interior-1``.
    h : float
        Mesh parameter (grid spacing for generated meshes, longest edge for
        loaded ones).
    domain_tag : str
    permutation : (N,) int array
        ``permutation[k]`` is the original (file) index of node ``k``.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    n_interior: int
    h: float
    domain_tag: str = "external"
    permutation: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "nodes", _frozen(self.nodes, float))
        object.__setattr__(self, "triangles", _frozen(self.triangles, np.intp))
        if self.permutation is None:
            perm = np.arange(len(self.nodes))
        else:
            perm = self.permutation
        object.__setattr__(self, "permutation", _frozen(perm, np.intp))
        if self.domain_tag not in DOMAIN_TAGS:
            raise MeshError(f"unknown domain tag {self.domain_tag!r}")

    @property
    def n_total(self):
        return len(self.nodes)

    @property
    def n_boundary(self):
        return self.n_total - self.n_interior

    @property
    def interior(self):
        return slice(0, self.n_interior)

    @property
    def boundary(self):
        return slice(self.n_interior, self.n_total)

    def external_index(self, k):
        """Original node id of internal node ``k``."""
        return int(self.permutation[k])

    def internal_index(self, original):
        """Internal node index for an original (file) node id."""
        hits = np.flatnonzero(self.permutation == original)
        if hits.size == 0:
            raise KeyError(original)
        return int(hits[0])

    def area(self):
        return float(triangle_areas(self.nodes, self.triangles).sum())


@dataclasses.dataclass(frozen=True, eq=False)
class NodeGeometry:
    """Per-node support areas and outward normals at boundary nodes.

    ``boundary_normal`` has one row per boundary node, in mesh order
    (row ``i`` belongs to node ``n_interior + i``).
    """

    support_area: np.ndarray
    boundary_normal: np.ndarray

    @property
    def lumped_mass(self):
        return self.support_area / 3.0


def triangle_areas(nodes, triangles):
    """Signed areas, positive for counterclockwise triangles."""
    p = nodes[triangles]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def _edges(triangles):
    return np.concatenate(
        [triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]]
    )


def boundary_edges(triangles):
    """Directed boundary edges, oriented so the domain lies on the left."""
    directed = _edges(np.asarray(triangles))
    key = np.sort(directed, axis=1)
    _, inverse, counts = np.unique(
        key, axis=0, return_inverse=True, return_counts=True
    )
    inverse = inverse.ravel()
    if counts.max() > 2:
        raise MeshError("non-manifold mesh: an edge is shared by more than two triangles")
    return directed[counts[inverse] == 1]


def edge_lengths(nodes, triangles):
    key = np.unique(np.sort(_edges(np.asarray(triangles)), axis=1), axis=0)
    d = nodes[key[:, 1]] - nodes[key[:, 0]]
    return np.hypot(d[:, 0], d[:, 1])


def _reorder(nodes, triangles, is_boundary):
    """Permute nodes so interior ones come first (stable within each class)."""
    is_boundary = np.asarray(is_boundary, bool)
    perm = np.concatenate([np.flatnonzero(~is_boundary), np.flatnonzero(is_boundary)])
    inverse = np.empty_like(perm)
    inverse[perm] = np.arange(len(perm))
    return nodes[perm], inverse[triangles], int((~is_boundary).sum()), perm


def _orient_ccw(nodes, triangles):
    triangles = np.array(triangles, dtype=np.intp)
    flip = triangle_areas(nodes, triangles) < 0
    triangles[flip] = triangles[flip][:, [0, 2, 1]]
    return triangles


def _build(nodes, triangles, h, tag, is_boundary=None):
    nodes = np.asarray(nodes, float)
    triangles = _orient_ccw(nodes, triangles)
    if is_boundary is None:
        is_boundary = np.zeros(len(nodes), bool)
        is_boundary[boundary_edges(triangles).ravel()] = True
    nodes, triangles, n_int, perm = _reorder(nodes, triangles, is_boundary)
    return Triangulation(nodes, triangles, n_int, h, tag, perm)


def generate_regular_square(n_subdivisions):
    """Uniform grid of the unit square, every cell cut along the same diagonal.

    Each cell ``[i h, (i+1) h] x [j h, (j+1) h]`` is split by the diagonal
    from its lower-left to its upper-right corner, so ``h = 1/n``.
    """
    n = int(n_subdivisions)
    if n < 2 or n != n_subdivisions:
        raise MeshError(f"n_subdivisions must be an integer >= 2, got {n_subdivisions!r}")
    ii, jj = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="xy")
    nodes = np.column_stack([ii.ravel() / n, jj.ravel() / n])

    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    a = idx[:-1, :-1].ravel()  # lower-left
    b = idx[:-1, 1:].ravel()  # lower-right
    c = idx[1:, 1:].ravel()  # upper-right
    d = idx[1:, :-1].ravel()  # upper-left
    triangles = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    on_edge = (ii == 0) | (ii == n) | (jj == 0) | (jj == n)
    return _build(nodes, triangles, 1.0 / n, "unit-square", on_edge.ravel())


def _stitch(lower, upper, s_lower, s_upper, periodic=False):
    """Triangulate the band between two node chains ordered by parameter s.

    Classic advancing-front merge: at each step the chain whose next node has
    the smaller parameter advances.  ``periodic`` closes the band (rings).
    """
    lower = list(lower)
    upper = list(upper)
    s_lower = list(s_lower)
    s_upper = list(s_upper)
    if periodic:
        lower.append(lower[0])
        upper.append(upper[0])
        s_lower.append(s_lower[0] + 2 * np.pi)
        s_upper.append(s_upper[0] + 2 * np.pi)
    tris = []
    p = q = 0
    while p < len(lower) - 1 or q < len(upper) - 1:
        if p == len(lower) - 1:
            advance_upper = True
        elif q == len(upper) - 1:
            advance_upper = False
        else:
            advance_upper = s_upper[q + 1] <= s_lower[p + 1]
        if advance_upper:
            tris.append((lower[p], upper[q], upper[q + 1]))
            q += 1
        else:
            tris.append((lower[p], upper[q], lower[p + 1]))
            p += 1
    return tris


def generate_half_unit_disk(n_radial):
    """Polar-fan triangulation of the disk of radius 1/2 centred at (1/2, 1/2).

    Ring ``i`` (radius ``i/(2 n)``) carries ``6 i`` equally spaced nodes, so
    edges stay close to ``h = 0.5 / n_radial`` everywhere.
    """
    n = int(n_radial)
    if n < 2 or n != n_radial:
        raise MeshError(f"n_radial must be an integer >= 2, got {n_radial!r}")
    nodes = [DISK_CENTER.copy()]
    rings = [[0]]
    angles = [[0.0]]
    for i in range(1, n + 1):
        r = DISK_RADIUS * i / n
        theta = 2 * np.pi * np.arange(6 * i) / (6 * i)
        start = len(nodes)
        pts = DISK_CENTER + r * np.column_stack([np.cos(theta), np.sin(theta)])
        if i == n:
            # project onto the circle exactly
            d = pts - DISK_CENTER
            pts = DISK_CENTER + DISK_RADIUS * d / np.hypot(d[:, 0], d[:, 1])[:, None]
        nodes.extend(pts)
        rings.append(list(range(start, start + 6 * i)))
        angles.append(list(theta))
    tris = []
    centre = 0
    first = rings[1]
    for k in range(6):
        tris.append((centre, first[k], first[(k + 1) % 6]))
    for i in range(2, n + 1):
        tris.extend(_stitch(rings[i - 1], rings[i], angles[i - 1], angles[i], periodic=True))
    is_boundary = np.zeros(len(nodes), bool)
    is_boundary[rings[n]] = True
    return _build(np.array(nodes), tris, DISK_RADIUS / n, "half-unit-disk", is_boundary)


def _eye_halfwidth(x1):
    return x1 * (1.0 - x1)


def generate_eye_domain(n_subdivisions):
    """Column-structured mesh of the eye ``|x2| < x1 (1 - x1)``, ``0 < x1 < 1``.

    Columns sit at ``x1 = i/n``; each column is a vertically scaled copy of
    ``s in [-1, 1]`` with roughly ``height / h`` intervals, so element sizes
    stay uniform as the domain pinches towards the two corners (0,0), (1,0).
    """
    n = int(n_subdivisions)
    if n < 4 or n != n_subdivisions:
        raise MeshError(f"n_subdivisions must be an integer >= 4, got {n_subdivisions!r}")
    h = 1.0 / n
    nodes = []
    columns = []
    params = []
    is_boundary = []
    for i in range(n + 1):
        x1 = i / n
        half = _eye_halfwidth(x1)
        m = 0 if i in (0, n) else max(2, int(round(2 * half / h)))
        s = np.array([0.0]) if m == 0 else np.linspace(-1.0, 1.0, m + 1)
        start = len(nodes)
        for k, sk in enumerate(s):
            nodes.append((x1, sk * half))
            is_boundary.append(m == 0 or k in (0, m))
        columns.append(list(range(start, start + len(s))))
        params.append(list(s))
    tris = []
    for i in range(n):
        left, right = columns[i], columns[i + 1]
        if len(left) == 1:
            tris.extend((left[0], right[k], right[k + 1]) for k in range(len(right) - 1))
        elif len(right) == 1:
            tris.extend((left[k], right[0], left[k + 1]) for k in range(len(left) - 1))
        else:
            tris.extend(_stitch(left, right, params[i], params[i + 1]))
    return _build(np.array(nodes), tris, h, "eye-shaped", np.array(is_boundary))


def _parse_numbers(line, count, kind, lineno):
    fields = line.split()
    if len(fields) != count:
        raise MeshParseError(f"expected {count} fields, found {len(fields)}", lineno)
    try:
        return [kind(v) for v in fields]
    except ValueError as exc:
        raise MeshParseError(str(exc), lineno) from None


def load_mesh(path, domain_tag="external"):
    """Read a mesh in the native text format.

    Format (whitespace separated, ``#`` starts a comment line)::

        N_nodes N_triangles
        x y flag          # N_nodes lines, flag 0 = interior, 1 = boundary
        i j k             # N_triangles lines, 0-based node indices

    Clockwise triangles are flipped.  Degenerate triangles, unused nodes and
    topological boundary nodes flagged as interior are rejected.
    """
    path = Path(path)
    lines = [
        (no, text.strip())
        for no, text in enumerate(path.read_text().splitlines(), start=1)
        if text.strip() and not text.lstrip().startswith("#")
    ]
    if not lines:
        raise MeshParseError("empty mesh file")
    no, head = lines[0]
    n_nodes, n_tri = _parse_numbers(head, 2, int, no)
    if n_nodes < 3 or n_tri < 1:
        raise MeshParseError("need at least 3 nodes and 1 triangle", no)
    if len(lines) < 1 + n_nodes + n_tri:
        raise MeshParseError(
            f"expected {n_nodes} node and {n_tri} triangle lines, file ends early",
            lines[-1][0],
        )
    if len(lines) > 1 + n_nodes + n_tri:
        raise MeshParseError("unexpected trailing data", lines[1 + n_nodes + n_tri][0])
    nodes = np.empty((n_nodes, 2))
    flags = np.empty(n_nodes, bool)
    for k, (no, text) in enumerate(lines[1 : 1 + n_nodes]):
        x, y, flag = _parse_numbers(text, 3, float, no)
        if flag not in (0.0, 1.0):
            raise MeshParseError(f"boundary flag must be 0 or 1, got {flag:g}", no)
        nodes[k] = (x, y)
        flags[k] = flag == 1.0
    triangles = np.empty((n_tri, 3), np.intp)
    for k, (no, text) in enumerate(lines[1 + n_nodes :]):
        tri = _parse_numbers(text, 3, int, no)
        if min(tri) < 0 or max(tri) >= n_nodes:
            raise MeshParseError(f"node index out of range in triangle {k}", no)
        if len(set(tri)) < 3:
            raise MeshError(f"triangle {k} repeats a vertex")
        triangles[k] = tri

    area = triangle_areas(nodes, triangles)
    scale = max(np.ptp(nodes[:, 0]), np.ptp(nodes[:, 1])) ** 2
    bad = np.flatnonzero(np.abs(area) <= 1e-14 * scale)
    if bad.size:
        raise MeshError(f"triangle {bad[0]} is degenerate (zero area)")
    used = np.zeros(n_nodes, bool)
    used[triangles.ravel()] = True
    if not used.all():
        raise MeshError(f"node {np.flatnonzero(~used)[0]} is not used by any triangle")
    triangles = _orient_ccw(nodes, triangles)
    on_boundary = np.zeros(n_nodes, bool)
    on_boundary[boundary_edges(triangles).ravel()] = True
    wrong = np.flatnonzero(on_boundary & ~flags)
    if wrong.size:
        raise MeshError(f"node {wrong[0]} lies on a boundary edge but is flagged interior")
    h = float(edge_lengths(nodes, triangles).max())
    return _build(nodes, triangles, h, domain_tag, flags)


def write_mesh(mesh, path):
    """Write ``mesh`` in the native format (internal node order)."""
    flags = np.zeros(mesh.n_total, int)
    flags[mesh.boundary] = 1
    with open(path, "w") as fh:
        fh.write(f"# {mesh.domain_tag} mesh, h = {float(mesh.h)!r}\n")
        fh.write(f"{mesh.n_total} {len(mesh.triangles)}\n")
        for (x, y), f in zip(mesh.nodes, flags):
            fh.write(f"{float(x)!r} {float(y)!r} {f}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"{i} {j} {k}\n")


def _unit(v):
    return v / np.hypot(v[:, 0], v[:, 1])[:, None]


def _analytic_normals(mesh):
    x = mesh.nodes[mesh.boundary]
    if mesh.domain_tag == "half-unit-disk":
        return _unit(x - DISK_CENTER)
    if mesh.domain_tag == "eye-shaped":
        slope = 1.0 - 2.0 * x[:, 0]
        upper = _unit(np.column_stack([-slope, np.ones_like(slope)]))
        lower = _unit(np.column_stack([-slope, -np.ones_like(slope)]))
        normal = np.where((x[:, 1] >= 0)[:, None], upper, lower)
        cusp = np.abs(_eye_halfwidth(x[:, 0])) < 1e-14
        normal[cusp] = np.column_stack([np.sign(x[cusp, 0] - 0.5), 0 * x[cusp, 0]])
        return normal
    return None


def compute_node_geometry(mesh):
    """Support areas ``|theta_j|`` and unit outward normals at boundary nodes.

    Curved domains use their analytic normals.  On polygonal boundaries the
    normal at a node is the bisector of the unit normals of its two boundary
    edges (equal weights), renormalised.
    """
    areas = triangle_areas(mesh.nodes, mesh.triangles)
    support = np.bincount(
        mesh.triangles.ravel(), weights=np.repeat(areas, 3), minlength=mesh.n_total
    )
    normals = _analytic_normals(mesh)
    if normals is None:
        edges = boundary_edges(mesh.triangles)
        d = mesh.nodes[edges[:, 1]] - mesh.nodes[edges[:, 0]]
        edge_normal = _unit(np.column_stack([d[:, 1], -d[:, 0]]))
        acc = np.zeros((mesh.n_total, 2))
        np.add.at(acc, edges[:, 0], edge_normal)
        np.add.at(acc, edges[:, 1], edge_normal)
        normals = _unit(acc[mesh.boundary])
    return NodeGeometry(_frozen(support, float), _frozen(normals, float))
