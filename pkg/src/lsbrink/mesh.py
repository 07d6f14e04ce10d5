"""Conforming triangle meshes with newest-vertex bisection refinement.

Meshes are immutable: refinement returns a new mesh. All heavy per-element
data (edge connectivity, areas, Jacobians) is cached lazily so that large
meshes stay cheap to construct when only parts of the geometry are used.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


class MeshError(ValueError):
    """Invalid or non-conforming mesh data."""


# Children of a bisection are stored as (newest vertex, a, b), so their
# refinement edge (a, b) is always the one opposite local vertex 0.
_ROLL = np.array([[0, 1, 2], [1, 2, 0], [2, 0, 1]])


class TriangleMesh:
    """Immutable conforming triangulation of a 2D polygonal domain.

    Attributes:
        vertices: (n_vertices, 2) float array of coordinates.
        triangles: (n_triangles, 3) int array of vertex indices, ordered
            counter-clockwise (positive signed area).
        refinement_edge: (n_triangles,) int in {0, 1, 2}. Local edge ``i``
            is the edge opposite local vertex ``i``; the refinement edge is
            the edge bisected first by newest-vertex bisection.

    If ``refinement_edge`` is not given, each triangle gets its longest
    edge (ties broken by smallest global edge index).
    """

    def __init__(self, vertices, triangles, refinement_edge=None, check=True):
        self.vertices = np.asarray(vertices, dtype=float)
        self.triangles = np.asarray(triangles, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise MeshError("vertices must have shape (n, 2)")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise MeshError("triangles must have shape (n, 3)")
        if refinement_edge is None:
            self.refinement_edge = self._longest_edge_labels()
        else:
            self.refinement_edge = np.asarray(refinement_edge, dtype=np.int64)
            if self.refinement_edge.shape != (len(self.triangles),):
                raise MeshError("refinement_edge must have one entry per triangle")
        if check:
            self.validate()

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_edges(self):
        return len(self.edges)

    # -- connectivity -----------------------------------------------------

    @cached_property
    def _edge_data(self):
        # Local edge i of a triangle is opposite local vertex i.
        t = self.triangles
        pairs = np.stack(
            [t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]], axis=1
        ).reshape(-1, 2)
        pairs = np.sort(pairs, axis=1)  # global orientation: low -> high
        edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
        tri_edges = inverse.reshape(-1, 3)
        return edges, tri_edges

    @property
    def edges(self):
        """(n_edges, 2) vertex pairs, low index first, lexicographically sorted."""
        return self._edge_data[0]

    @property
    def tri_edges(self):
        """(n_triangles, 3) global edge index of each local edge."""
        return self._edge_data[1]

    @cached_property
    def edge_triangle_count(self):
        return np.bincount(self.tri_edges.ravel(), minlength=self.n_edges)

    @cached_property
    def boundary_edges(self):
        """Boolean mask over edges: True where exactly one triangle is incident."""
        return self.edge_triangle_count == 1

    @cached_property
    def boundary_vertices(self):
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.edges[self.boundary_edges].ravel()] = True
        return mask

    # -- geometry ---------------------------------------------------------

    @cached_property
    def corners(self):
        """(n_triangles, 3, 2) vertex coordinates of each triangle."""
        return self.vertices[self.triangles]

    @cached_property
    def jacobians(self):
        """(n_triangles, 2, 2) columns (p1 - p0, p2 - p0) of the reference map."""
        p = self.corners
        return np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)

    @cached_property
    def det_jacobians(self):
        b = self.jacobians
        return b[:, 0, 0] * b[:, 1, 1] - b[:, 0, 1] * b[:, 1, 0]

    @cached_property
    def inv_jacobians_t(self):
        """(n_triangles, 2, 2) inverse transpose of the Jacobians."""
        b = self.jacobians
        det = self.det_jacobians
        inv_t = np.empty_like(b)
        inv_t[:, 0, 0] = b[:, 1, 1]
        inv_t[:, 0, 1] = -b[:, 1, 0]
        inv_t[:, 1, 0] = -b[:, 0, 1]
        inv_t[:, 1, 1] = b[:, 0, 0]
        return inv_t / det[:, None, None]

    @cached_property
    def areas(self):
        return 0.5 * self.det_jacobians

    @cached_property
    def domain_area(self):
        return float(self.areas.sum())

    @cached_property
    def edge_lengths(self):
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    @cached_property
    def tri_edge_lengths(self):
        """(n_triangles, 3) length of each local edge."""
        return self.edge_lengths[self.tri_edges]

    @cached_property
    def edge_normals(self):
        """(n_edges, 2) unit normals, the low->high tangent rotated by -90 deg.

        This global orientation fixes the sign of all Raviart-Thomas
        degrees of freedom.
        """
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.column_stack([d[:, 1], -d[:, 0]]) / self.edge_lengths[:, None]

    @cached_property
    def diameters(self):
        return self.tri_edge_lengths.max(axis=1)

    @cached_property
    def centroids(self):
        return self.corners.mean(axis=1)

    @cached_property
    def edge_signs(self):
        """(n_triangles, 3) +1 where the CCW traversal of a local edge runs
        from the low-index vertex to the high-index one, else -1."""
        t = self.triangles
        first = np.stack([t[:, 1], t[:, 2], t[:, 0]], axis=1)
        lo = self.edges[self.tri_edges, 0]
        return np.where(first == lo, 1.0, -1.0)

    @cached_property
    def min_angles(self):
        """(n_triangles,) smallest interior angle, in radians."""
        p = self.corners
        angles = np.empty((self.n_triangles, 3))
        for i in range(3):
            a = p[:, (i + 1) % 3] - p[:, i]
            b = p[:, (i + 2) % 3] - p[:, i]
            cosv = (a * b).sum(axis=1) / (
                np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
            )
            angles[:, i] = np.arccos(np.clip(cosv, -1.0, 1.0))
        return angles.min(axis=1)

    @property
    def shape_regularity(self):
        """max over elements of diam(T)^2 / |T| (tracked, not enforced)."""
        return float((self.diameters**2 / self.areas).max())

    # -- validation -------------------------------------------------------

    def validate(self):
        """Check the mesh invariants; raise MeshError on violation."""
        if getattr(self, "_validated", False):
            return
        if not np.isfinite(self.vertices).all():
            raise MeshError("vertex coordinates must be finite")
        t = self.triangles
        if t.size and (t.min() < 0 or t.max() >= self.n_vertices):
            raise MeshError("triangle vertex index out of range")
        if ((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])).any():
            raise MeshError("triangle with repeated vertex")
        if (self.det_jacobians <= 0).any():
            raise MeshError("triangle with non-positive area (orientation must be CCW)")
        if self.refinement_edge.size and (
            self.refinement_edge.min() < 0 or self.refinement_edge.max() > 2
        ):
            raise MeshError("refinement_edge entries must lie in {0,1,2}")
        counts = self.edge_triangle_count
        if (counts > 2).any():
            raise MeshError("edge shared by more than two triangles")
        # Hanging-node guard: bisection only creates vertices at edge
        # midpoints, so a vertex sitting exactly on an edge midpoint means
        # the neighbour was refined without closure.
        mids = 0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]])
        if _rows_in(mids, self.vertices).any():
            raise MeshError("hanging node: mesh is not conforming")
        self._validated = True

    # -- construction helpers ----------------------------------------------

    def _longest_edge_labels(self):
        lengths = self.tri_edge_lengths
        is_max = lengths == lengths.max(axis=1, keepdims=True)
        gid = np.where(is_max, self.tri_edges, np.iinfo(np.int64).max)
        return gid.argmin(axis=1).astype(np.int64)


def _rows_in(query, table):
    """Row-wise membership test for float (n, 2) arrays, exact equality."""
    if len(table) == 0 or len(query) == 0:
        return np.zeros(len(query), dtype=bool)
    dt = np.dtype([("x", np.float64), ("y", np.float64)])
    q = np.ascontiguousarray(query).view(dt).ravel()
    t = np.ascontiguousarray(table).view(dt).ravel()
    return np.isin(q, t)


@dataclass(frozen=True)
class ElementGeometry:
    """Affine data of one element used by assembly and error integration.

    The reference map is x = origin + jacobian @ xhat with the reference
    triangle (0,0), (1,0), (0,1); area equals det(jacobian) / 2.
    """

    area: float
    diameter: float
    edge_lengths: np.ndarray  # (3,), local edge i opposite vertex i
    normals: np.ndarray  # (3, 2) unit outward normal of each local edge
    origin: np.ndarray  # (2,)
    jacobian: np.ndarray  # (2, 2)
    inv_jacobian: np.ndarray  # (2, 2)


def geometry(mesh, t_idx):
    """Exact affine geometry of element ``t_idx``."""
    det = mesh.det_jacobians[t_idx]
    if det <= 0:
        raise MeshError(f"degenerate triangle {t_idx}")
    p = mesh.corners[t_idx]
    normals = np.empty((3, 2))
    lengths = mesh.tri_edge_lengths[t_idx]
    for i in range(3):
        tang = p[(i + 2) % 3] - p[(i + 1) % 3]  # CCW traversal of edge i
        normals[i] = np.array([tang[1], -tang[0]]) / lengths[i]
    b = mesh.jacobians[t_idx]
    return ElementGeometry(
        area=float(mesh.areas[t_idx]),
        diameter=float(mesh.diameters[t_idx]),
        edge_lengths=lengths.copy(),
        normals=normals,
        origin=p[0].copy(),
        jacobian=b.copy(),
        inv_jacobian=np.linalg.inv(b),
    )


def make_unit_square_mesh(n_per_side):
    """Structured mesh of (0,1)^2 with 2*n^2 triangles.

    Each grid cell is split along its lower-left to upper-right diagonal;
    refinement edges are the longest edges (the diagonals).
    """
    n = int(n_per_side)
    if n < 1:
        raise ValueError("n_per_side must be >= 1")
    xs = np.linspace(0.0, 1.0, n + 1)
    gx, gy = np.meshgrid(xs, xs, indexing="xy")
    vertices = np.column_stack([gx.ravel(), gy.ravel()])

    def vid(ix, iy):
        return iy * (n + 1) + ix

    tris = []
    for iy in range(n):
        for ix in range(n):
            ll, lr = vid(ix, iy), vid(ix + 1, iy)
            ul, ur = vid(ix, iy + 1), vid(ix + 1, iy + 1)
            tris.append((ll, lr, ur))
            tris.append((ll, ur, ul))
    return TriangleMesh(vertices, np.array(tris))


def make_lshape_mesh():
    """Coarse 6-triangle mesh of the L-shape (-1,1)^2 minus [-1,0]^2.

    Each of the three unit squares is split along the diagonal that meets
    the reentrant corner at the origin.
    """
    vertices = np.array(
        [
            [-1.0, 0.0],  # 0
            [-1.0, 1.0],  # 1
            [0.0, -1.0],  # 2
            [0.0, 0.0],  # 3  reentrant corner
            [0.0, 1.0],  # 4
            [1.0, -1.0],  # 5
            [1.0, 0.0],  # 6
            [1.0, 1.0],  # 7
        ]
    )
    triangles = np.array(
        [
            [3, 6, 7],  # [0,1]^2 below the diagonal (0,0)-(1,1)
            [3, 7, 4],  # [0,1]^2 above
            [0, 3, 1],  # [-1,0]x[0,1] left of the diagonal (0,0)-(-1,1)
            [3, 4, 1],  # [-1,0]x[0,1] right
            [2, 5, 3],  # [0,1]x[-1,0] below the diagonal (0,0)-(1,-1)
            [5, 6, 3],  # [0,1]x[-1,0] above
        ]
    )
    return TriangleMesh(vertices, triangles)


def _refine(mesh, marked):
    """One newest-vertex bisection sweep.

    Returns (new_mesh, parents, fractions) where ``parents`` maps each
    child to its originating triangle and ``fractions`` is the exact area
    ratio child/parent (1, 1/2 or 1/4).
    """
    n_tri = mesh.n_triangles
    if isinstance(marked, (set, frozenset)):
        marked = list(marked)
    marked = np.unique(np.asarray(marked, dtype=np.int64))
    if marked.size and (marked.min() < 0 or marked.max() >= n_tri):
        raise IndexError("marked triangle index out of range")
    mesh.validate()
    if marked.size == 0:
        return mesh, np.arange(n_tri), np.ones(n_tri)

    tri_edges = mesh.tri_edges
    ref_global = tri_edges[np.arange(n_tri), mesh.refinement_edge]
    edge_marked = np.zeros(mesh.n_edges, dtype=bool)
    edge_marked[ref_global[marked]] = True

    # Closure: a triangle with any marked edge must bisect its refinement
    # edge first; iterate to the fixpoint (terminates, the set only grows).
    while True:
        need = edge_marked[tri_edges].any(axis=1) & ~edge_marked[ref_global]
        if not need.any():
            break
        edge_marked[ref_global[need]] = True

    split_edges = np.nonzero(edge_marked)[0]
    edge_mid = np.full(mesh.n_edges, -1, dtype=np.int64)
    edge_mid[split_edges] = mesh.n_vertices + np.arange(len(split_edges))
    new_vertices = np.vstack(
        [
            mesh.vertices,
            0.5
            * (
                mesh.vertices[mesh.edges[split_edges, 0]]
                + mesh.vertices[mesh.edges[split_edges, 1]]
            ),
        ]
    )

    # Rotate each triangle so its refinement edge is opposite local vertex 0.
    r = mesh.refinement_edge
    w = mesh.triangles[np.arange(n_tri)[:, None], _ROLL[r]]
    ge0 = tri_edges[np.arange(n_tri), r]
    ge1 = tri_edges[np.arange(n_tri), (r + 1) % 3]
    ge2 = tri_edges[np.arange(n_tri), (r + 2) % 3]
    m0, m1, m2 = edge_marked[ge0], edge_marked[ge1], edge_marked[ge2]
    mid0, mid1, mid2 = edge_mid[ge0], edge_mid[ge1], edge_mid[ge2]

    n_children = np.where(m0, 2 + m1.astype(int) + m2.astype(int), 1)
    offsets = np.concatenate([[0], np.cumsum(n_children)])
    total = offsets[-1]
    children = np.empty((total, 3), dtype=np.int64)
    child_ref = np.zeros(total, dtype=np.int64)
    parents = np.repeat(np.arange(n_tri), n_children)
    fractions = np.empty(total)

    def put(mask, slot, tri_cols, frac):
        idx = offsets[:-1][mask] + slot
        children[idx] = np.column_stack([c[mask] for c in tri_cols])
        fractions[idx] = frac
        return idx

    keep = ~m0
    if keep.any():
        t = mesh.triangles
        idx = put(keep, 0, (t[:, 0], t[:, 1], t[:, 2]), 1.0)
        child_ref[idx] = r[keep]  # untouched triangles kept verbatim

    only = m0 & ~m1 & ~m2
    if only.any():
        put(only, 0, (mid0, w[:, 0], w[:, 1]), 0.5)
        put(only, 1, (mid0, w[:, 2], w[:, 0]), 0.5)

    with_e2 = m0 & ~m1 & m2  # edge (w0, w1) also split
    if with_e2.any():
        put(with_e2, 0, (mid2, mid0, w[:, 0]), 0.25)
        put(with_e2, 1, (mid2, w[:, 1], mid0), 0.25)
        put(with_e2, 2, (mid0, w[:, 2], w[:, 0]), 0.5)

    with_e1 = m0 & m1 & ~m2  # edge (w2, w0) also split
    if with_e1.any():
        put(with_e1, 0, (mid0, w[:, 0], w[:, 1]), 0.5)
        put(with_e1, 1, (mid1, mid0, w[:, 2]), 0.25)
        put(with_e1, 2, (mid1, w[:, 0], mid0), 0.25)

    full = m0 & m1 & m2
    if full.any():
        put(full, 0, (mid2, mid0, w[:, 0]), 0.25)
        put(full, 1, (mid2, w[:, 1], mid0), 0.25)
        put(full, 2, (mid1, mid0, w[:, 2]), 0.25)
        put(full, 3, (mid1, w[:, 0], mid0), 0.25)

    refined = TriangleMesh(new_vertices, children, child_ref)
    return refined, parents, fractions


def refine_nvb(mesh, marked):
    """Bisect the marked triangles, adding closure bisections until the
    mesh is conforming again. Returns a new mesh."""
    refined, _, _ = _refine(mesh, marked)
    return refined


def uniform_refine(mesh):
    """Refine with all elements marked, repeatedly, until every original
    element has been fully bisected twice (area at most a quarter)."""
    current = mesh
    ratio = np.ones(mesh.n_triangles)
    while ratio.max() > 0.25:
        current, parents, fractions = _refine(current, range(current.n_triangles))
        ratio = ratio[parents] * fractions
    return current


def write_mesh(mesh, nodes_path, elements_path):
    """Plain-text export: one ``x y`` line per vertex and one
    ``i j k refedge`` line per triangle."""
    with open(nodes_path, "w") as fh:
        for x, y in mesh.vertices:
            fh.write(f"{x:.17g} {y:.17g}\n")
    with open(elements_path, "w") as fh:
        for (i, j, k), r in zip(mesh.triangles, mesh.refinement_edge):
            fh.write(f"{i} {j} {k} {r}\n")


def read_mesh(nodes_path, elements_path):
    """Inverse of write_mesh."""
    vertices = np.loadtxt(nodes_path, ndmin=2)
    elems = np.loadtxt(elements_path, dtype=np.int64, ndmin=2)
    return TriangleMesh(vertices, elems[:, :3], elems[:, 3])
