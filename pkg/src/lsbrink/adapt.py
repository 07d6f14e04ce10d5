"""Solve -> Estimate -> Mark -> Refine loop with Dörfler marking.

The elementwise indicator is the local part of the least-squares
functional,

    eta(T)^2 = ||-t Div M + u - f||_T^2 + ||Dev M - t grad u||_T^2
               + ||div u||_T^2.

The global trace penalty t^2 ||P0 tr M||^2 is not localizable, so marking
uses the local indicators only; reported estimator values come in both
conventions (with and without the penalty). At the discrete minimizer the
penalty vanishes up to solver tolerance, so the two differ negligibly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .assembly import (
    assemble,
    element_fields,
    mean_stress_trace,
    residual_norms_squared,
)
from .mesh import refine_nvb
from .solver import pcg
from .spaces import Coefficients, build_space


@dataclass
class Indicators:
    """Per-element squared error indicators."""

    element_values: np.ndarray  # (n_triangles,) eta(T)^2 >= 0

    @property
    def total(self):
        """Sum of the local squared indicators."""
        return float(self.element_values.sum())


@dataclass
class AdaptRecord:
    """One row of a refinement history, mirroring the CSV columns."""

    step: int
    dofs: int
    est: float  # sqrt of the summed local indicators
    est_penalized: float  # including the trace penalty term
    err_u: float | None
    err_m: float | None
    norm_div_u: float
    iterations: int
    trace_mean: float  # P0 tr M of the computed solution


def estimate(space, problem, coeffs, quad_degree=6):
    """Elementwise error indicators of a solved coefficient vector."""
    fields = element_fields(space, coeffs, quad_degree)
    return Indicators(residual_norms_squared(space, problem, fields))


def dorfler_mark(indicators, theta):
    """Minimal element set carrying a theta fraction of the squared total.

    Elements are taken in order of decreasing indicator; ties are broken
    by ascending element index, which makes the set deterministic.
    """
    if not 0.0 < theta < 1.0:
        raise ValueError(f"theta must be in (0, 1), got {theta}")
    vals = indicators.element_values
    total = vals.sum()
    if total <= 0.0:
        warnings.warn("all error indicators vanish; nothing to mark")
        return np.empty(0, dtype=np.int64)
    order = np.lexsort((np.arange(len(vals)), -vals))
    csum = np.cumsum(vals[order])
    count = int(np.searchsorted(csum, theta * total, side="left")) + 1
    count = min(count, len(vals))
    return np.sort(order[:count])


def compute_errors(space, problem, coeffs, quad_degree=10):
    """Energy-type errors (err_u, err_M, ||div u_h||) against exact fields.

    err_u^2 = ||u - u_h||^2 + t^2 ||grad(u - u_h)||^2 + ||div u_h||^2 and
    err_M^2 = ||Dev(M - M_h)||^2 + t^2 ||tr(M - M_h)||^2
              + t^2 ||Div(M - M_h)||^2, by elementwise quadrature at an
    elevated degree (exact divergence of the velocity vanishes).
    """
    if problem.exact is None:
        raise ValueError("problem carries no exact solution fields")
    t = problem.t
    fields = element_fields(space, coeffs, quad_degree)
    ex = problem.exact

    du = np.asarray(ex.u(fields.x)) - fields.u
    dgrad = np.asarray(ex.grad_u(fields.x)) - fields.grad_u[:, None, :, :]
    div_sq = float((space.mesh.areas * fields.div_u**2).sum())
    err_u_sq = (
        fields.integrate((du**2).sum(axis=-1))
        + t**2 * fields.integrate((dgrad**2).sum(axis=(-2, -1)))
        + div_sq
    )

    dm = np.asarray(ex.stress(fields.x)) - fields.stress
    tr = dm[:, :, 0, 0] + dm[:, :, 1, 1]
    dev = dm.copy()
    dev[:, :, 0, 0] -= 0.5 * tr
    dev[:, :, 1, 1] -= 0.5 * tr
    ddiv = np.asarray(ex.div_stress(fields.x)) - fields.div_stress[:, None, :]
    err_m_sq = (
        fields.integrate((dev**2).sum(axis=(-2, -1)))
        + t**2 * fields.integrate(tr**2)
        + t**2 * fields.integrate((ddiv**2).sum(axis=-1))
    )
    return np.sqrt(err_u_sq), np.sqrt(err_m_sq), np.sqrt(div_sq)


@dataclass
class AdaptStep:
    """Full state of one loop step, for drivers that inspect meshes."""

    record: AdaptRecord
    mesh: object
    space: object
    coefficients: Coefficients
    indicators: Indicators
    marked: np.ndarray | None


def adaptive_steps(
    problem,
    mesh,
    kind="augmented",
    theta=0.25,
    max_dofs=10000,
    mode="adaptive",
    quad_degree=6,
    cg_tol=1e-10,
    max_steps=None,
    mark_fn=None,
):
    """Generator over loop steps; see ``adaptive_loop`` for the contract.

    ``mode`` is "adaptive" (Dörfler marking) or "uniform" (all elements
    marked each step); ``mark_fn`` overrides marking entirely when given.
    """
    if mode not in ("adaptive", "uniform"):
        raise ValueError(f"mode must be 'adaptive' or 'uniform', got {mode!r}")
    step = 0
    while True:
        space = build_space(mesh, kind)
        system = assemble(space, problem, quad_degree)
        x, report = pcg(system.matrix, system.rank1, system.rhs, tol=cg_tol)
        coeffs = Coefficients(values=x, kind=kind, lift=system.lift)

        fields = element_fields(space, coeffs, quad_degree)
        indicators = Indicators(residual_norms_squared(space, problem, fields))
        trace_mean = mean_stress_trace(space, fields)
        est_sq = indicators.total
        penalty = problem.t**2 * mesh.domain_area * trace_mean**2
        err_u = err_m = None
        if problem.exact is not None:
            err_u, err_m, norm_div_u = compute_errors(space, problem, coeffs)
        else:
            norm_div_u = float(np.sqrt((mesh.areas * fields.div_u**2).sum()))

        record = AdaptRecord(
            step=step,
            dofs=space.layout.total,
            est=float(np.sqrt(est_sq)),
            est_penalized=float(np.sqrt(est_sq + penalty)),
            err_u=err_u,
            err_m=err_m,
            norm_div_u=norm_div_u,
            iterations=report.iterations,
            trace_mean=trace_mean,
        )

        done = space.layout.total >= max_dofs or (
            max_steps is not None and step + 1 >= max_steps
        )
        marked = None
        if not done:
            if mark_fn is not None:
                marked = np.asarray(mark_fn(indicators), dtype=np.int64)
            elif mode == "uniform":
                marked = np.arange(mesh.n_triangles)
            else:
                marked = dorfler_mark(indicators, theta)
        yield AdaptStep(record, mesh, space, coeffs, indicators, marked)
        if done:
            return
        if marked.size == 0:
            return  # nothing to refine; cannot make progress
        mesh = refine_nvb(mesh, marked)
        step += 1


def adaptive_loop(problem, mesh, kind="augmented", theta=0.25, max_dofs=10000, **kwargs):
    """Run the refinement loop and return one AdaptRecord per step.

    Terminates once the dof count reaches ``max_dofs`` (the final step is
    still recorded). Dof counts are strictly increasing along the run.
    """
    return [
        step.record
        for step in adaptive_steps(
            problem, mesh, kind=kind, theta=theta, max_dofs=max_dofs, **kwargs
        )
    ]
