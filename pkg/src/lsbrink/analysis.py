"""Interpolation operators and post-processing.

Contains the elementwise L2 projection onto constants, the row-wise
Raviart-Thomas interpolant, pressure recovery from the stress trace, and
best-approximation probes that quantify how well the two discrete stress
spaces can follow a stress field proportional to the identity tensor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import _Basis, element_fields, quadrature_rule
from .spaces import hat_values

# 2-point Gauss on [0, 1]; exact for cubic edge fluxes.
_EDGE_S = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
_EDGE_W = np.array([0.5, 0.5])


@dataclass
class FieldSample:
    """Evaluable field with optional derivative evaluators.

    All evaluators are vectorized over point arrays of shape (..., 2);
    where both a value and a derivative are supplied they must be
    consistent (tests check against finite differences).
    """

    value: callable
    grad: callable | None = None
    div: callable | None = None

    def __call__(self, points):
        return self.value(points)


def _physical_points(mesh, ref_points):
    return mesh.corners[:, None, 0, :] + np.einsum(
        "tij,qj->tqi", mesh.jacobians, np.atleast_2d(ref_points)
    )


def project_l2_piecewise_constant(field, mesh, quad_degree=4):
    """Elementwise means of a scalar field: the L2 projection onto
    piecewise constants."""
    rule = quadrature_rule(quad_degree)
    x = _physical_points(mesh, rule.points)
    vals = np.asarray(field(x))
    return np.einsum("tq,q->t", vals, rule.weights) * mesh.det_jacobians / mesh.areas


def interpolate_rt(field, mesh):
    """Row-wise RT0 interpolant of a tensor field with edge-continuous
    normal fluxes.

    Returns (n_edges, 2) coefficients; entry (e, j) is the mean normal
    trace of row j across edge e against the global low->high normal,
    computed with 2-point Gauss (exact for polynomial fluxes to degree 3).
    """
    a = mesh.vertices[mesh.edges[:, 0]]
    b = mesh.vertices[mesh.edges[:, 1]]
    pts = a[:, None, :] + _EDGE_S[None, :, None] * (b - a)[:, None, :]  # (nE, 2, 2)
    vals = np.asarray(field(pts))  # (nE, 2, 2, 2) tensors at edge points
    flux = np.einsum("nqji,ni->nqj", vals, mesh.edge_normals)
    return np.einsum("nqj,q->nj", flux, _EDGE_W)


def recover_pressure(space, coeffs, t):
    """Piecewise linear pressure -t/2 tr M_h, as (n_triangles, 3) values
    at each element's vertices (discontinuous across elements)."""
    corners_ref = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    fields = element_fields(space, coeffs, points=corners_ref)
    return -0.5 * t * fields.tr_stress


def stress_trace_mean(space, coeffs):
    """Domain mean of tr M_h (vanishes at the penalized minimizer)."""
    fields = element_fields(space, coeffs, quad_degree=2)
    return fields.integrate(fields.tr_stress) / space.mesh.domain_area


@dataclass
class BestApproxDistance:
    """Energy-norm distance of an explicit candidate pair (0, N_h).

    Components carry their parameter weights: the total squares to
    velocity^2 + dev^2 + div^2 + trace^2 with div and trace already
    scaled by t.
    """

    total: float
    velocity: float
    dev: float
    div: float
    trace: float


def _candidate_distance(problem, mesh, stress_at, div_stress_at, quad_degree=6):
    t = problem.t
    ex = problem.exact
    rule = quadrature_rule(quad_degree)
    x = _physical_points(mesh, rule.points)
    det = mesh.det_jacobians

    def integrate(vals):
        return float(np.einsum("tq,q,t->", vals, rule.weights, det))

    dm = np.asarray(ex.stress(x)) - stress_at(x)
    ddiv = np.asarray(ex.div_stress(x)) - div_stress_at(x)
    tr = dm[:, :, 0, 0] + dm[:, :, 1, 1]
    dev = dm.copy()
    dev[:, :, 0, 0] -= 0.5 * tr
    dev[:, :, 1, 1] -= 0.5 * tr

    u = np.asarray(ex.u(x))
    gu = np.asarray(ex.grad_u(x))
    div_u = gu[:, :, 0, 0] + gu[:, :, 1, 1]
    vel_sq = (
        integrate((u**2).sum(axis=-1))
        + t**2 * integrate((gu**2).sum(axis=(-2, -1)))
        + integrate(div_u**2)
    )

    dev_sq = integrate((dev**2).sum(axis=(-2, -1)))
    div_sq = t**2 * integrate((ddiv**2).sum(axis=-1))
    tr_sq = t**2 * integrate(tr**2)
    return BestApproxDistance(
        total=float(np.sqrt(vel_sq + dev_sq + div_sq + tr_sq)),
        velocity=float(np.sqrt(vel_sq)),
        dev=float(np.sqrt(dev_sq)),
        div=float(np.sqrt(div_sq)),
        trace=float(np.sqrt(tr_sq)),
    )


def best_approximation_probe(problem, mesh, kind, quad_degree=6):
    """Energy-norm distance of the canonical candidate in either space.

    For the standard space the candidate stress is the RT0 interpolant of
    the exact stress; for the augmented space it is the nodal interpolant
    of -p/t times the identity (deviatoric-free, so the deviatoric
    mismatch vanishes identically). The velocity candidate is zero.
    """
    if problem.exact is None:
        raise ValueError("problem carries no exact solution fields")
    if kind == "standard":
        coeffs = interpolate_rt(problem.exact.stress, mesh)  # (nE, 2)
        c_loc = coeffs[mesh.tri_edges]  # (nT, 3, 2)

        def stress_at(x):
            basis = _Basis(mesh, quadrature_rule(quad_degree).points)
            return np.einsum("tej,teqi->tqji", c_loc, basis.psi)

        def div_stress_at(x):
            basis = _Basis(mesh, quadrature_rule(quad_degree).points)
            div = np.einsum("tej,te->tj", c_loc, basis.div_psi)
            return div[:, None, :]

    elif kind == "augmented":
        t = problem.t
        nodal = -np.asarray(problem.exact.pressure(mesh.vertices)) / t
        q_loc = nodal[mesh.triangles]  # (nT, 3)
        rule = quadrature_rule(quad_degree)
        lam = hat_values(rule.points)

        def stress_at(x):
            eta = np.einsum("qa,ta->tq", lam, q_loc)
            out = np.zeros(eta.shape + (2, 2))
            out[:, :, 0, 0] = eta
            out[:, :, 1, 1] = eta
            return out

        def div_stress_at(x):
            basis = _Basis(mesh, rule.points)
            grad = np.einsum("ta,tai->ti", q_loc, basis.hat_grads)
            return grad[:, None, :]

    else:
        raise ValueError(f"unknown space kind {kind!r}")
    return _candidate_distance(problem, mesh, stress_at, div_stress_at, quad_degree)
