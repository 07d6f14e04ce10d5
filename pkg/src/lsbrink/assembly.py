"""Quadrature and assembly of the least-squares system.

The discrete problem minimizes, over the product space, the functional

    ||-t Div M + u - f||^2 + ||Dev M - t grad u||^2 + ||div u||^2
        (+ t^2 ||P0 tr M||^2 in the penalized variant),

where P0 is the L2 projection onto constants. The Euler-Lagrange system
splits into a sparse symmetric matrix A (the local residual products) and
a global rank-1 vector g with g_i = t |Omega|^{-1/2} integral(tr Phi_i),
so the full operator is A + g g^T and the penalty never densifies the
matrix. All products of discrete fields are piecewise quadratic, hence a
degree-4 rule assembles A and g exactly; terms containing the load f use
a higher-degree rule (default 6, configurable).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.special import roots_jacobi, roots_legendre

from .spaces import _HAT_GRADS, Coefficients, Space, hat_values

_ASSEMBLY_DEGREE = 4  # exact for all products of discrete fields


@dataclass(frozen=True)
class QuadratureRule:
    """Points and weights on the reference triangle (0,0), (1,0), (0,1).

    Weights sum to the reference area 1/2 and integrate polynomials up to
    ``degree`` exactly.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int


def _orbit_s3():
    return [(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)]


def _orbit_s21(a):
    b = 1.0 - 2.0 * a
    return [(b, a, a), (a, b, a), (a, a, b)]


def _orbit_s111(a, b):
    c = 1.0 - a - b
    return [(c, a, b), (c, b, a), (a, c, b), (a, b, c), (b, c, a), (b, a, c)]


# Symmetric positive rules, degree -> [(orbit points, weight per point)].
# Weights are normalized to sum to 1 and are halved for the reference area.
_SYMMETRIC_RULES = {
    1: [(_orbit_s3(), 1.0)],
    2: [(_orbit_s21(1.0 / 6.0), 1.0 / 3.0)],
    3: [(_orbit_s111(0.231933368553031, 0.109039009072877), 1.0 / 6.0)],
    4: [
        (_orbit_s21(0.445948490915965), 0.223381589678011),
        (_orbit_s21(0.091576213509771), 0.109951743655322),
    ],
    5: [
        (_orbit_s3(), 0.225),
        (_orbit_s21(0.470142064105115), 0.132394152788506),
        (_orbit_s21(0.101286507323456), 0.125939180544827),
    ],
    6: [
        (_orbit_s21(0.249286745170910), 0.116786275726379),
        (_orbit_s21(0.063089014491502), 0.050844906370207),
        (_orbit_s111(0.310352451033785, 0.053145049844816), 0.082851075618374),
    ],
}


def _collapsed_rule(degree):
    # Duffy-type product rule: x = xi, y = eta (1 - xi). Gauss-Jacobi with
    # weight (1 - xi) absorbs the Jacobian, so all weights stay positive.
    n = (degree + 2) // 2
    xj, wj = roots_jacobi(n, 1.0, 0.0)
    xl, wl = roots_legendre(n)
    xi = 0.5 * (xj + 1.0)
    eta = 0.5 * (xl + 1.0)
    pts = []
    wts = []
    for i in range(n):
        for j in range(n):
            pts.append((xi[i], eta[j] * (1.0 - xi[i])))
            wts.append(0.25 * wj[i] * 0.5 * wl[j])
    return np.array(pts), np.array(wts)


@lru_cache(maxsize=None)
def quadrature_rule(degree):
    """Positive-weight rule on the reference triangle, exact to ``degree``."""
    degree = int(degree)
    if not 1 <= degree <= 10:
        raise ValueError(f"quadrature degree must be in 1..10, got {degree}")
    if degree in _SYMMETRIC_RULES:
        pts = []
        wts = []
        for orbit, w in _SYMMETRIC_RULES[degree]:
            for lam in orbit:
                pts.append((lam[1], lam[2]))
                wts.append(0.5 * w)
        return QuadratureRule(np.array(pts), np.array(wts), degree)
    pts, wts = _collapsed_rule(degree)
    return QuadratureRule(pts, wts, degree)


@dataclass
class ExactFields:
    """Closed-form solution fields, each vectorized over (..., 2) points."""

    u: callable  # -> (..., 2)
    grad_u: callable  # -> (..., 2, 2)
    stress: callable  # -> (..., 2, 2)
    div_stress: callable  # -> (..., 2)
    pressure: callable | None = None  # -> (...)


@dataclass
class LsqProblem:
    """Perturbation parameter, load and boundary data of one model problem."""

    t: float
    f: callable  # -> (..., 2)
    dirichlet: callable | None = None  # None means homogeneous data
    exact: ExactFields | None = None
    name: str = ""

    def __post_init__(self):
        if not 0.0 < self.t <= 1.0:
            raise ValueError(f"perturbation parameter must be in (0, 1], got {self.t}")


@dataclass
class SparseSystem:
    """Assembled system: symmetric sparse A, rank-1 vector g, load b.

    The solved operator is A + g g^T; ``lift`` holds the nodal Dirichlet
    data already subtracted from b.
    """

    matrix: sp.csr_matrix
    rank1: np.ndarray
    rhs: np.ndarray
    layout: object
    lift: np.ndarray | None = None


def dirichlet_lift(space, problem):
    """Nodal interpolant of the boundary data, zero at interior vertices.

    Returns an (n_vertices, 2) array; the solve is for the homogeneous
    remainder, so assembly subtracts A times this lift from the load.
    """
    mesh = space.mesh
    lift = np.zeros((mesh.n_vertices, 2))
    if problem.dirichlet is not None:
        bnd = mesh.boundary_vertices
        lift[bnd] = np.asarray(problem.dirichlet(mesh.vertices[bnd]))
    return lift


class _Basis:
    """Vectorized local basis data for all elements at given reference points."""

    def __init__(self, mesh, points):
        self.points = points
        self.lam = hat_values(points)  # (nq, 3)
        self.hat_grads = np.einsum(
            "tij,aj->tai", mesh.inv_jacobians_t, _HAT_GRADS
        )  # (nT, 3, 2)
        self.x = (
            mesh.corners[:, None, 0, :]
            + np.einsum("tij,qj->tqi", mesh.jacobians, points)
        )  # (nT, nq, 2)
        scale = mesh.edge_signs * mesh.tri_edge_lengths / (2.0 * mesh.areas[:, None])
        self.psi = scale[:, :, None, None] * (
            self.x[:, None, :, :] - mesh.corners[:, :, None, :]
        )  # (nT, 3, nq, 2)
        self.div_psi = 2.0 * scale  # (nT, 3)


def _residual_components(space, basis, t):
    """Residual triple (R1, R2, R3) of every local basis function.

    R1 = -t Div N + v, R2 = Dev N - t grad v, R3 = div v, evaluated at the
    basis points; shapes (nT, L, nq, 2), (nT, L, nq, 2, 2), (nT, L).
    """
    mesh = space.mesh
    n_tri = mesh.n_triangles
    nq = len(basis.points)
    n_loc = space.n_local
    r1 = np.zeros((n_tri, n_loc, nq, 2))
    r2 = np.zeros((n_tri, n_loc, nq, 2, 2))
    r3 = np.zeros((n_tri, n_loc))
    for a in range(3):
        for k in range(2):
            slot = 2 * a + k
            r1[:, slot, :, k] = basis.lam[None, :, a]
            r2[:, slot, :, k, :] = -t * basis.hat_grads[:, None, a, :]
            r3[:, slot] = basis.hat_grads[:, a, k]
    for e in range(3):
        for j in range(2):
            slot = 6 + 2 * e + j
            r1[:, slot, :, j] = -t * basis.div_psi[:, e, None]
            # Dev of the tensor whose row j is psi_e.
            psi = basis.psi[:, e]  # (nT, nq, 2)
            r2[:, slot, :, j, :] += psi
            r2[:, slot, :, 0, 0] -= 0.5 * psi[:, :, j]
            r2[:, slot, :, 1, 1] -= 0.5 * psi[:, :, j]
    if space.kind == "augmented":
        for a in range(3):
            slot = 12 + a
            r1[:, slot, :, :] = -t * basis.hat_grads[:, None, a, :]
            # Dev(eta I) = 0 and div of the velocity slot is absent.
    return r1, r2, r3


def assemble(space, problem, quad_degree=6):
    """Assemble the Euler-Lagrange system of the penalized functional.

    ``quad_degree`` applies to the load terms only; the bilinear form is
    integrated exactly with a fixed degree-4 rule.
    """
    if problem.t <= 0:
        raise ValueError("perturbation parameter must be positive")
    mesh = space.mesh
    t = problem.t
    rule = quadrature_rule(_ASSEMBLY_DEGREE)
    basis = _Basis(mesh, rule.points)
    r1, r2, r3 = _residual_components(space, basis, t)
    det = mesh.det_jacobians

    a_loc = np.einsum("tlqi,tmqi,q->tlm", r1, r1, rule.weights, optimize=True)
    a_loc += np.einsum("tlqij,tmqij,q->tlm", r2, r2, rule.weights, optimize=True)
    a_loc += 0.5 * np.einsum("tl,tm->tlm", r3, r3)  # constants, sum w = 1/2
    a_loc *= det[:, None, None]

    # Rank-1 vector: t |Omega|^{-1/2} integral of tr Phi_i. Velocity slots
    # have no tensor part; augmented basis functions have exactly zero mean
    # trace by construction, so only RT slots contribute.
    g = np.zeros(space.layout.total)
    tr_rt = np.einsum("teqj,q->tej", basis.psi, rule.weights) * det[:, None, None]
    scale = t / np.sqrt(mesh.domain_area)
    local_dofs = space.local_dofs
    for e in range(3):
        for j in range(2):
            np.add.at(g, local_dofs[:, 6 + 2 * e + j], scale * tr_rt[:, e, j])

    # Load vector at elevated degree: b_i = <f, -t Div N_i + v_i>.
    load_rule = quadrature_rule(quad_degree)
    load_basis = _Basis(mesh, load_rule.points)
    lr1, _, _ = _residual_components(space, load_basis, t)
    fvals = np.asarray(problem.f(load_basis.x))
    b_loc = np.einsum(
        "tqi,tlqi,q->tl", fvals, lr1, load_rule.weights, optimize=True
    ) * det[:, None]

    # Non-homogeneous Dirichlet data: subtract A times the nodal lift.
    lift = dirichlet_lift(space, problem)
    if np.any(lift):
        lift_loc = np.zeros((mesh.n_triangles, space.n_local))
        lift_loc[:, :6] = lift[mesh.triangles].reshape(mesh.n_triangles, 6)
        b_loc -= np.einsum("tlm,tm->tl", a_loc, lift_loc)

    valid = local_dofs >= 0
    n = space.layout.total
    b = np.zeros(n)
    np.add.at(b, local_dofs[valid], b_loc[valid])

    pair = valid[:, :, None] & valid[:, None, :]
    rows = np.broadcast_to(local_dofs[:, :, None], a_loc.shape)[pair]
    cols = np.broadcast_to(local_dofs[:, None, :], a_loc.shape)[pair]
    matrix = sp.coo_matrix((a_loc[pair], (rows, cols)), shape=(n, n)).tocsr()

    return SparseSystem(
        matrix=matrix,
        rank1=g,
        rhs=b,
        layout=space.layout,
        lift=lift if np.any(lift) else None,
    )


@dataclass
class FieldValues:
    """Discrete solution fields at reference points of every element."""

    x: np.ndarray  # (nT, nq, 2) physical points
    u: np.ndarray  # (nT, nq, 2)
    grad_u: np.ndarray  # (nT, 2, 2), constant per element
    div_u: np.ndarray  # (nT,)
    stress: np.ndarray  # (nT, nq, 2, 2)
    div_stress: np.ndarray  # (nT, 2), constant per element
    dev_stress: np.ndarray  # (nT, nq, 2, 2)
    tr_stress: np.ndarray  # (nT, nq)
    weights: np.ndarray  # (nq,) reference weights
    det: np.ndarray  # (nT,)

    def integrate(self, values):
        """Sum over the mesh of elementwise integrals of pointwise data."""
        return float(np.einsum("tq,q,t->", values, self.weights, self.det))

    def integrate_elements(self, values):
        """(nT,) elementwise integrals of pointwise data."""
        return np.einsum("tq,q->t", values, self.weights) * self.det


def element_fields(space, coeffs, quad_degree=6, points=None):
    """Evaluate the discrete pair (u, M) represented by ``coeffs`` at the
    quadrature points of every element (or at explicit reference
    ``points``), including the Dirichlet lift and the global mean
    correction of the augmented block."""
    mesh = space.mesh
    if points is None:
        rule = quadrature_rule(quad_degree)
        points, weights = rule.points, rule.weights
    else:
        points, weights = np.atleast_2d(points), None
    basis = _Basis(mesh, points)
    values = coeffs.values

    nodal = np.zeros((mesh.n_vertices, 2))
    dofs = space.velocity.vertex_dofs
    interior = dofs[:, 0] >= 0
    nodal[interior, 0] = values[dofs[interior, 0]]
    nodal[interior, 1] = values[dofs[interior, 1]]
    if coeffs.lift is not None:
        nodal += coeffs.lift
    v_loc = nodal[mesh.triangles]  # (nT, 3, 2)
    u = np.einsum("qa,tak->tqk", basis.lam, v_loc)
    grad_u = np.einsum("tak,tai->tki", v_loc, basis.hat_grads)
    div_u = grad_u[:, 0, 0] + grad_u[:, 1, 1]

    c_edge = values[space.pseudostress.edge_dofs][mesh.tri_edges]  # (nT, 3, 2)
    stress = np.einsum("tej,teqi->tqji", c_edge, basis.psi)
    div_stress = np.einsum("tej,te->tj", c_edge, basis.div_psi)

    if space.kind == "augmented":
        c_aug, mean = space.aug_coefficients(values)
        ca_loc = c_aug[mesh.triangles]  # (nT, 3)
        eta = np.einsum("qa,ta->tq", basis.lam, ca_loc) - mean
        stress[:, :, 0, 0] += eta
        stress[:, :, 1, 1] += eta
        div_stress += np.einsum("ta,tai->ti", ca_loc, basis.hat_grads)

    tr_stress = stress[:, :, 0, 0] + stress[:, :, 1, 1]
    dev_stress = stress.copy()
    dev_stress[:, :, 0, 0] -= 0.5 * tr_stress
    dev_stress[:, :, 1, 1] -= 0.5 * tr_stress

    return FieldValues(
        x=basis.x,
        u=u,
        grad_u=grad_u,
        div_u=div_u,
        stress=stress,
        div_stress=div_stress,
        dev_stress=dev_stress,
        tr_stress=tr_stress,
        weights=weights,
        det=mesh.det_jacobians,
    )


def residual_norms_squared(space, problem, fields):
    """(nT,) elementwise squared residuals of the least-squares functional."""
    t = problem.t
    fvals = np.asarray(problem.f(fields.x))
    r1 = -t * fields.div_stress[:, None, :] + fields.u - fvals
    r2 = fields.dev_stress - t * fields.grad_u[:, None, :, :]
    pointwise = (r1**2).sum(axis=-1) + (r2**2).sum(axis=(-2, -1))
    local = fields.integrate_elements(pointwise)
    local += space.mesh.areas * fields.div_u**2
    return local


def mean_stress_trace(space, fields):
    """P0 tr M: the domain mean of the stress trace."""
    return fields.integrate(fields.tr_stress) / space.mesh.domain_area


def eval_functional(space, problem, coeffs, variant="penalized", quad_degree=6):
    """Evaluate the least-squares functional at the given coefficients.

    ``variant`` selects "residual" (the three residual norms) or
    "penalized" (plus the squared-mean trace penalty t^2 ||P0 tr M||^2).
    """
    if variant not in ("residual", "penalized"):
        raise ValueError(f"unknown functional variant {variant!r}")
    fields = element_fields(space, coeffs, quad_degree)
    value = float(residual_norms_squared(space, problem, fields).sum())
    if variant == "penalized":
        mean = mean_stress_trace(space, fields)
        value += problem.t**2 * space.mesh.domain_area * mean**2
    return value
