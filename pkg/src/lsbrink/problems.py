"""The three bundled experiments as LsqProblem instances.

Exact fields, where known, come with analytic gradients and stress
divergences so that error computations never rely on finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assembly import ExactFields, LsqProblem
from .mesh import make_lshape_mesh, make_unit_square_mesh


def _vec(first, second, shape):
    out = np.zeros(shape + (2,))
    out[..., 0] = first
    out[..., 1] = second
    return out


def problem_polynomial_pressure(t):
    """Zero velocity with polynomial pressure p = x^2 - 1/3 on the unit
    square; the stress is -p/t times the identity and f = (2x, 0).

    The stress grows like 1/t while the data stay t-independent, which
    makes this the canonical locking study.
    """

    def pressure(p):
        p = np.asarray(p)
        return p[..., 0] ** 2 - 1.0 / 3.0

    def f(p):
        p = np.asarray(p)
        return _vec(2.0 * p[..., 0], 0.0, p.shape[:-1])

    def u(p):
        p = np.asarray(p)
        return np.zeros(p.shape)

    def grad_u(p):
        p = np.asarray(p)
        return np.zeros(p.shape[:-1] + (2, 2))

    def stress(p):
        p = np.asarray(p)
        out = np.zeros(p.shape[:-1] + (2, 2))
        val = -pressure(p) / t
        out[..., 0, 0] = val
        out[..., 1, 1] = val
        return out

    def div_stress(p):
        p = np.asarray(p)
        return _vec(-2.0 * p[..., 0] / t, 0.0, p.shape[:-1])

    exact = ExactFields(u, grad_u, stress, div_stress, pressure)
    return LsqProblem(t=t, f=f, dirichlet=None, exact=exact, name="locking")


def _layer_terms(y, t):
    # All exponents are <= 0 for y in [0, 1]; the textbook form of the
    # profile overflows double precision for t below about 1/700.
    a = np.exp(-y / t)
    b = np.exp((y - 1.0) / t)
    den = 1.0 + np.exp(-1.0 / t)
    return a, b, den


def problem_poiseuille_layer(t):
    """Poiseuille flow in x with boundary layers of width ~t at y = 0, 1.

    p = 0, u = (u1(y), 0) with u1 = (1 + e^{1/t} - e^{y/t} - e^{(1-y)/t})
    / (1 + e^{1/t}), evaluated in a normalized form that keeps every
    exponent non-positive. f = (1, 0); the data at x = 0 and x = 1 are
    non-homogeneous, so the problem ships Dirichlet data.
    """

    def u1(y):
        a, b, den = _layer_terms(y, t)
        return (den - a - b) / den

    def du1(y):
        a, b, den = _layer_terms(y, t)
        return (a - b) / (t * den)

    def ddu1(y):
        a, b, den = _layer_terms(y, t)
        return -(a + b) / (t * t * den)

    def f(p):
        p = np.asarray(p)
        return _vec(1.0, 0.0, p.shape[:-1])

    def u(p):
        p = np.asarray(p)
        return _vec(u1(p[..., 1]), 0.0, p.shape[:-1])

    def grad_u(p):
        p = np.asarray(p)
        out = np.zeros(p.shape[:-1] + (2, 2))
        out[..., 0, 1] = du1(p[..., 1])
        return out

    def stress(p):
        p = np.asarray(p)
        out = np.zeros(p.shape[:-1] + (2, 2))
        out[..., 0, 1] = t * du1(p[..., 1])
        return out

    def div_stress(p):
        p = np.asarray(p)
        return _vec(t * ddu1(p[..., 1]), 0.0, p.shape[:-1])

    def pressure(p):
        p = np.asarray(p)
        return np.zeros(p.shape[:-1])

    exact = ExactFields(u, grad_u, stress, div_stress, pressure)
    return LsqProblem(t=t, f=f, dirichlet=u, exact=exact, name="poiseuille")


def problem_lshape(t):
    """f = (xy, e^x) on the L-shaped domain; no closed-form solution, so
    records carry the estimator and ||div u_h|| only."""

    def f(p):
        p = np.asarray(p)
        return _vec(p[..., 0] * p[..., 1], np.exp(p[..., 0]), p.shape[:-1])

    return LsqProblem(t=t, f=f, dirichlet=None, exact=None, name="lshape")


@dataclass(frozen=True)
class ExperimentSpec:
    """Vocabulary and defaults of one bundled experiment."""

    name: str
    domain: str  # "unit-square" | "l-shape"
    t_values: tuple
    modes: tuple  # refinement modes the experiment ships with
    kinds: tuple  # discrete space kinds the experiment compares
    max_dofs: int
    make_problem: callable = field(repr=False)
    make_mesh: callable = field(repr=False)

    @property
    def default_mode(self):
        return self.modes[0]

    def __post_init__(self):
        if not all(0.0 < t <= 1.0 for t in self.t_values):
            raise ValueError("experiment t values must lie in (0, 1]")


EXPERIMENTS = {
    "locking": ExperimentSpec(
        name="locking",
        domain="unit-square",
        t_values=(1.0, 1e-1, 1e-2, 1e-3),
        modes=("uniform",),
        kinds=("standard", "augmented"),
        max_dofs=30000,
        make_problem=problem_polynomial_pressure,
        make_mesh=lambda: make_unit_square_mesh(2),
    ),
    "poiseuille": ExperimentSpec(
        name="poiseuille",
        domain="unit-square",
        t_values=(5e-2, 5e-3),
        modes=("adaptive", "uniform"),
        kinds=("augmented",),
        max_dofs=15000,
        make_problem=problem_poiseuille_layer,
        make_mesh=lambda: make_unit_square_mesh(2),
    ),
    "lshape": ExperimentSpec(
        name="lshape",
        domain="l-shape",
        t_values=(1.0, 1e-1, 1e-2, 1e-3),
        modes=("adaptive", "uniform"),
        kinds=("augmented",),
        max_dofs=15000,
        make_problem=problem_lshape,
        make_mesh=make_lshape_mesh,
    ),
}
