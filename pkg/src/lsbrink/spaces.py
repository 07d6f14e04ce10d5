"""Finite element spaces and degree-of-freedom management.

The product space couples a continuous piecewise linear velocity (two
components, Dirichlet vertices eliminated) with a row-wise lowest-order
Raviart-Thomas pseudostress. The "augmented" variant enriches the
pseudostress block with deviatoric-free fields eta*I, where eta is a
continuous piecewise linear function with zero mean; the discrete basis
is {(hat_i - m_i)*I : i != 0} with m_i the mean of hat_i over the domain
and vertex 0 dropped to remove the constant redundancy with the identity
tensor, which the Raviart-Thomas block already contains.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .mesh import TriangleMesh

KINDS = ("standard", "augmented")

# Reference hat function gradients, one row per local vertex.
_HAT_GRADS = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


def hat_values(points):
    """Reference barycentric hat values at (nq, 2) reference points."""
    pts = np.atleast_2d(points)
    return np.column_stack([1.0 - pts[:, 0] - pts[:, 1], pts[:, 0], pts[:, 1]])


@dataclass(frozen=True)
class DofLayout:
    """Contiguous index blocks [velocity | stress RT | augmented]."""

    n_velocity: int
    n_stress: int
    n_aug: int

    @property
    def velocity_offset(self):
        return 0

    @property
    def stress_offset(self):
        return self.n_velocity

    @property
    def aug_offset(self):
        return self.n_velocity + self.n_stress

    @property
    def total(self):
        return self.n_velocity + self.n_stress + self.n_aug


@dataclass
class VelocitySpace:
    """Nodal P1 velocity with Dirichlet vertices eliminated."""

    mesh: TriangleMesh
    vertex_dofs: np.ndarray  # (n_vertices, 2), -1 at boundary vertices
    n_dofs: int

    @property
    def boundary_vertices(self):
        return self.mesh.boundary_vertices


@dataclass
class PseudostressSpace:
    """Row-wise RT0 tensors, optionally augmented by zero-mean P1 * I fields.

    edge_dofs[e, j] is the global dof of (edge e, tensor row j); the dof
    value is the mean normal trace of row j across the edge, taken against
    the mesh's global low->high edge normal.
    """

    mesh: TriangleMesh
    kind: str
    edge_dofs: np.ndarray  # (n_edges, 2)
    aug_dofs: np.ndarray  # (n_vertices,), -1 where absent
    aug_means: np.ndarray  # (n_vertices,), |Omega|^-1 * integral of hat_i
    n_dofs: int


@dataclass
class Space:
    """Bundle of the velocity and pseudostress spaces over one mesh."""

    mesh: TriangleMesh
    kind: str
    velocity: VelocitySpace
    pseudostress: PseudostressSpace
    layout: DofLayout

    @property
    def n_local(self):
        """Local functions per element: 6 velocity + 6 RT + (3 augmented)."""
        return 15 if self.kind == "augmented" else 12

    @cached_property
    def local_dofs(self):
        """(n_triangles, n_local) global dof of each local slot, -1 where
        the slot is eliminated (Dirichlet vertex, anchored augmented vertex).

        Slot order: (vertex a, comp k) -> 2a+k, then (edge e, row j) ->
        6 + 2e+j, then augmented vertex a -> 12 + a.
        """
        mesh = self.mesh
        tris = mesh.triangles
        vel = self.velocity.vertex_dofs[tris].reshape(mesh.n_triangles, 6)
        stress = self.pseudostress.edge_dofs[mesh.tri_edges].reshape(
            mesh.n_triangles, 6
        )
        blocks = [vel, stress]
        if self.kind == "augmented":
            blocks.append(self.pseudostress.aug_dofs[tris])
        return np.concatenate(blocks, axis=1)

    def aug_coefficients(self, values):
        """Per-vertex augmented coefficients (zero where absent) and the
        global mean correction of the represented scalar field."""
        c = np.zeros(self.mesh.n_vertices)
        if self.kind == "augmented":
            dofs = self.pseudostress.aug_dofs
            present = dofs >= 0
            c[present] = values[dofs[present]]
        mean = float(c @ self.pseudostress.aug_means)
        return c, mean


@dataclass
class Coefficients:
    """Flat coefficient vector over a DofLayout.

    ``lift`` optionally carries nodal velocity values (nonzero only at
    boundary vertices) so that the represented velocity is the solved
    homogeneous part plus the Dirichlet lift.
    """

    values: np.ndarray
    kind: str = "standard"
    lift: np.ndarray | None = None


def build_space(mesh, kind="standard", degree=0):
    """Build the product space over ``mesh``.

    ``degree`` is a forward-compatibility slot; only the lowest order
    (P1 velocity, RT0 pseudostress) is implemented.
    """
    if degree != 0:
        raise NotImplementedError("only degree=0 spaces are implemented")
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")

    interior = ~mesh.boundary_vertices
    vertex_dofs = np.full((mesh.n_vertices, 2), -1, dtype=np.int64)
    idx = np.nonzero(interior)[0]
    vertex_dofs[idx, 0] = 2 * np.arange(len(idx))
    vertex_dofs[idx, 1] = vertex_dofs[idx, 0] + 1
    n_velocity = 2 * len(idx)
    velocity = VelocitySpace(mesh, vertex_dofs, n_velocity)

    n_stress = 2 * mesh.n_edges
    edge_dofs = n_velocity + np.arange(n_stress, dtype=np.int64).reshape(-1, 2)

    aug_dofs = np.full(mesh.n_vertices, -1, dtype=np.int64)
    aug_means = np.zeros(mesh.n_vertices)
    n_aug = 0
    if kind == "augmented":
        n_aug = mesh.n_vertices - 1
        aug_dofs[1:] = n_velocity + n_stress + np.arange(n_aug)
        third = np.repeat(mesh.areas / 3.0, 3)
        aug_means = np.bincount(
            mesh.triangles.ravel(), weights=third, minlength=mesh.n_vertices
        ) / mesh.domain_area
    pseudostress = PseudostressSpace(
        mesh, kind, edge_dofs, aug_dofs, aug_means, n_stress + n_aug
    )

    layout = DofLayout(n_velocity, n_stress, n_aug)
    return Space(mesh, kind, velocity, pseudostress, layout)


def eval_velocity_basis(space, t_idx, points):
    """Evaluate the 6 local velocity basis functions of one element.

    Returns (values, grads, divs) with shapes (6, nq, 2), (6, 2, 2) and
    (6,); gradients and divergences are constant per element. Local slot
    2a+k is hat function a times unit vector k, and the gradient follows
    the row convention (grad u)_ij = du_i/dx_j.
    """
    mesh = space.mesh if isinstance(space, Space) else space
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    lam = hat_values(pts)
    g = mesh.inv_jacobians_t[t_idx] @ _HAT_GRADS.T  # (2, 3): columns grad hat_a
    values = np.zeros((6, len(pts), 2))
    grads = np.zeros((6, 2, 2))
    divs = np.zeros(6)
    for a in range(3):
        for k in range(2):
            slot = 2 * a + k
            values[slot, :, k] = lam[:, a]
            grads[slot, k, :] = g[:, a]
            divs[slot] = g[k, a]
    return values, grads, divs


def eval_pseudostress_basis(space, t_idx, points):
    """Evaluate the local pseudostress basis functions of one element.

    Returns (tensors, divs, devs, traces) with shapes (L, nq, 2, 2),
    (L, 2), (L, nq, 2, 2) and (L, nq), L = 6 for the standard space and 9
    when augmented. RT slot 2e+j has row j equal to
    sigma * |E| / (2|T|) * (x - a_e) with a_e the vertex opposite local
    edge e; augmented slot 6+a is (hat_a - mean(hat_a)) * I.
    """
    mesh = space.mesh
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    nq = len(pts)
    x = mesh.corners[t_idx, 0] + pts @ mesh.jacobians[t_idx].T  # (nq, 2)
    area = mesh.areas[t_idx]
    lengths = mesh.tri_edge_lengths[t_idx]
    signs = mesh.edge_signs[t_idx]

    n_local = 9 if space.kind == "augmented" else 6
    tensors = np.zeros((n_local, nq, 2, 2))
    divs = np.zeros((n_local, 2))
    for e in range(3):
        opp = mesh.corners[t_idx, e]
        psi = signs[e] * lengths[e] / (2.0 * area) * (x - opp)  # (nq, 2)
        for j in range(2):
            tensors[2 * e + j, :, j, :] = psi
            divs[2 * e + j, j] = signs[e] * lengths[e] / area
    if n_local == 9:
        lam = hat_values(pts)
        g = mesh.inv_jacobians_t[t_idx] @ _HAT_GRADS.T
        means = space.pseudostress.aug_means[mesh.triangles[t_idx]]
        for a in range(3):
            eta = lam[:, a] - means[a]
            tensors[6 + a, :, 0, 0] = eta
            tensors[6 + a, :, 1, 1] = eta
            divs[6 + a] = g[:, a]
    traces = tensors[:, :, 0, 0] + tensors[:, :, 1, 1]
    devs = tensors.copy()
    devs[:, :, 0, 0] -= 0.5 * traces
    devs[:, :, 1, 1] -= 0.5 * traces
    return tensors, divs, devs, traces


def embed_identity(space):
    """Coefficients representing the pair (0, I) exactly.

    The identity tensor lies in the RT0 block: the dof of (edge e, row j)
    is the j-th component of the global edge normal.
    """
    values = np.zeros(space.layout.total)
    normals = space.mesh.edge_normals
    values[space.pseudostress.edge_dofs[:, 0]] = normals[:, 0]
    values[space.pseudostress.edge_dofs[:, 1]] = normals[:, 1]
    return Coefficients(values=values, kind=space.kind)
