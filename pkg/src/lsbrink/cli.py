"""Command-line driver: run experiments, write plot-ready text outputs.

Each run writes one CSV per perturbation parameter, named
``<experiment>_<mode>_<t>.csv`` with header
``dof,est,estJ,errU,errM,normDivU,iters``. ``est`` is the square root of
the summed local indicators; ``estJ`` additionally includes the global
trace penalty. Error columns stay empty when the experiment has no
closed-form solution. Outputs are deterministic: identical configurations
produce byte-identical files.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .adapt import adaptive_steps
from .analysis import recover_pressure
from .mesh import read_mesh, write_mesh
from .problems import EXPERIMENTS
from .spaces import Coefficients, build_space

_HEADER = "dof,est,estJ,errU,errM,normDivU,iters"


@dataclass
class RunConfig:
    """Validated configuration of one experiment run."""

    experiment: str
    t_values: list | None = None  # None: the experiment's shipped grid
    space: str = "augmented"
    mode: str | None = None  # None: the experiment's default mode
    theta: float = 0.25
    max_dofs: int | None = None
    quad_degree: int = 6
    cg_tol: float = 1e-10
    out_dir: str = "out"
    dump_final: bool = False

    def resolve(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        spec = EXPERIMENTS[self.experiment]
        t_values = list(self.t_values) if self.t_values else list(spec.t_values)
        for t in t_values:
            if not 0.0 < t <= 1.0:
                raise ValueError(f"t must lie in (0, 1], got {t}")
        mode = self.mode or spec.default_mode
        if mode not in ("uniform", "adaptive"):
            raise ValueError(f"unknown mode {mode!r}")
        if self.space not in spec.kinds and self.space not in ("standard", "augmented"):
            raise ValueError(f"unknown space kind {self.space!r}")
        max_dofs = self.max_dofs or spec.max_dofs
        return spec, t_values, mode, max_dofs


def format_t(t):
    """File-name tag of a perturbation parameter, e.g. 5e-02."""
    return f"{t:.0e}"


def _fmt(value):
    return "" if value is None else f"{value:.17g}"


def write_records(records, path):
    lines = [_HEADER]
    for r in records:
        lines.append(
            ",".join(
                [
                    str(r.dofs),
                    f"{r.est:.17g}",
                    f"{r.est_penalized:.17g}",
                    _fmt(r.err_u),
                    _fmt(r.err_m),
                    f"{r.norm_div_u:.17g}",
                    str(r.iterations),
                ]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def read_records(path):
    """Columns of a run CSV as float arrays (NaN for empty fields)."""
    rows = Path(path).read_text().strip().splitlines()
    names = rows[0].split(",")
    data = np.array(
        [[float(v) if v else np.nan for v in row.split(",")] for row in rows[1:]]
    )
    return {name: data[:, i] for i, name in enumerate(names)}


def run(config):
    """Execute one configuration; returns a process exit status."""
    try:
        spec, t_values, mode, max_dofs = config.resolve()
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    status = 0
    for t in t_values:
        problem = spec.make_problem(t)
        mesh = spec.make_mesh()
        tag = f"{spec.name}_{mode}_{format_t(t)}"
        try:
            records = []
            last = None
            for step in adaptive_steps(
                problem,
                mesh,
                kind=config.space,
                theta=config.theta,
                max_dofs=max_dofs,
                mode=mode,
                quad_degree=config.quad_degree,
                cg_tol=config.cg_tol,
            ):
                records.append(step.record)
                last = step
            write_records(records, out_dir / f"{tag}.csv")
            if config.dump_final and last is not None:
                dump_solution(
                    last.space, last.coefficients, problem.t, out_dir, prefix=tag
                )
        except Exception as exc:  # keep going with the remaining t values
            print(f"error: run {tag} failed: {exc}", file=sys.stderr)
            status = 1
    return status


def dump_solution(space, coeffs, t, out_dir, prefix="solution"):
    """Write mesh, nodal velocity, elementwise pressure and raw stress
    coefficients as whitespace-delimited text (17 significant digits)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    mesh = space.mesh
    write_mesh(
        mesh, out_dir / f"{prefix}_nodes.txt", out_dir / f"{prefix}_elements.txt"
    )

    nodal = np.zeros((mesh.n_vertices, 2))
    dofs = space.velocity.vertex_dofs
    interior = dofs[:, 0] >= 0
    nodal[interior, 0] = coeffs.values[dofs[interior, 0]]
    nodal[interior, 1] = coeffs.values[dofs[interior, 1]]
    if coeffs.lift is not None:
        nodal += coeffs.lift
    with open(out_dir / f"{prefix}_velocity.txt", "w") as fh:
        for ux, uy in nodal:
            fh.write(f"{ux:.17g} {uy:.17g}\n")

    pressure = recover_pressure(space, coeffs, t)
    with open(out_dir / f"{prefix}_pressure.txt", "w") as fh:
        for row in pressure:
            fh.write(f"{row[0]:.17g} {row[1]:.17g} {row[2]:.17g}\n")

    stress = coeffs.values[space.layout.stress_offset :]
    with open(out_dir / f"{prefix}_stress.txt", "w") as fh:
        for v in stress:
            fh.write(f"{v:.17g}\n")


def load_solution(out_dir, prefix="solution"):
    """Rebuild (mesh, space, coefficients) from a dump_solution output."""
    out_dir = Path(out_dir)
    mesh = read_mesh(
        out_dir / f"{prefix}_nodes.txt", out_dir / f"{prefix}_elements.txt"
    )
    nodal = np.loadtxt(out_dir / f"{prefix}_velocity.txt", ndmin=2)
    stress = np.loadtxt(out_dir / f"{prefix}_stress.txt", ndmin=1)
    kind = "augmented" if len(stress) > 2 * mesh.n_edges else "standard"
    space = build_space(mesh, kind)
    values = np.zeros(space.layout.total)
    values[space.layout.stress_offset :] = stress
    dofs = space.velocity.vertex_dofs
    interior = dofs[:, 0] >= 0
    values[dofs[interior, 0]] = nodal[interior, 0]
    values[dofs[interior, 1]] = nodal[interior, 1]
    lift = np.where(mesh.boundary_vertices[:, None], nodal, 0.0)
    if not np.any(lift):
        lift = None
    return mesh, space, Coefficients(values=values, kind=kind, lift=lift)


def fit_rate(dofs, values, window=4):
    """Least-squares slope of log(values) against log(dofs) over the last
    ``window`` records."""
    dofs = np.asarray(dofs, dtype=float)[-window:]
    values = np.asarray(values, dtype=float)[-window:]
    return float(np.polyfit(np.log(dofs), np.log(values), 1)[0])


def make_parser():
    parser = argparse.ArgumentParser(
        prog="lsbrink",
        description="Least-squares FEM runs for perturbed Darcy flow: "
        "convergence tables and solution dumps in plot-ready text formats.",
    )
    parser.add_argument(
        "--experiment", required=True, choices=sorted(EXPERIMENTS), help="experiment name"
    )
    parser.add_argument(
        "--t", type=float, nargs="+", default=None,
        help="perturbation parameters (default: the experiment's grid)",
    )
    parser.add_argument(
        "--space", choices=("standard", "augmented"), default="augmented"
    )
    parser.add_argument("--mode", choices=("uniform", "adaptive"), default=None)
    parser.add_argument("--theta", type=float, default=0.25, help="marking fraction")
    parser.add_argument(
        "--max-dofs", type=lambda s: int(float(s)), default=None,
        help="stop refining once the dof count reaches this",
    )
    parser.add_argument("--quad-degree", type=int, default=6)
    parser.add_argument("--cg-tol", type=float, default=1e-10)
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument(
        "--dump-final", action="store_true",
        help="also dump mesh/velocity/pressure of the final step",
    )
    return parser


def main(argv=None):
    args = make_parser().parse_args(argv)
    config = RunConfig(
        experiment=args.experiment,
        t_values=args.t,
        space=args.space,
        mode=args.mode,
        theta=args.theta,
        max_dofs=args.max_dofs,
        quad_degree=args.quad_degree,
        cg_tol=args.cg_tol,
        out_dir=args.out,
        dump_final=args.dump_final,
    )
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
