from typing import Callable, Optional, Sequence, TextIO
from dataclasses import dataclass, field
from pathlib import Path
import csv
import io
import logging
import math
import time

import numpy as np

from cutfeec.config import ExperimentConfig
from cutfeec.geometry import build_background, classify, dump_mesh, macro_facets
from cutfeec.ghost import ghost_gram
from cutfeec.hodge import HodgeProblem, compute_errors, condition_estimate, problem_from_config
from cutfeec.model.enums import Command
from cutfeec.problems import get_problem
from cutfeec.spaces import build_space, evaluate_field
from cutfeec.util import ConfigError, SolverError

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
INFEASIBLE = "infeasible"

Cell = int | float | str


def format_cell(val: Cell) -> str:
    match val:
        case bool():
            return str(int(val))
        case int():
            return str(val)
        case float():
            return f"{val:.15e}"
        case _:
            return str(val)


@dataclass
class Report:
    """CSV table with the resolved config as a commented header and a commented footer."""

    command: Command
    cfg: ExperimentConfig
    columns: Sequence[str]
    rows: list[list[Cell]] = field(default_factory=list)
    footer: list[str] = field(default_factory=list)

    def add(self, *values: Cell):
        if len(values) != len(self.columns):
            raise ValueError(f"row of {len(values)} values for {len(self.columns)} columns")
        self.rows.append(list(values))

    def column(self, name: str) -> list[Cell]:
        i = list(self.columns).index(name)
        return [r[i] for r in self.rows]

    def write(self, fp: TextIO):
        fp.write(f"# cutfeec {self.command} schema v{SCHEMA_VERSION}\n")
        for line in self.cfg.render().splitlines():
            fp.write(f"# config: {line}\n")
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([format_cell(v) for v in row])
        for line in self.footer:
            fp.write(f"# {line}\n")

    def dumps(self) -> str:
        buf = io.StringIO()
        self.write(buf)
        return buf.getvalue()

    def save(self, path: Path | str):
        with open(path, "w", newline="") as fp:
            self.write(fp)


def observed_orders(h: Sequence[float], errors: Sequence[float]) -> list[float]:
    """log(e_i / e_{i+1}) / log(h_i / h_{i+1}) for consecutive resolutions."""
    res = []
    for (h1, e1), (h2, e2) in zip(zip(h, errors), zip(h[1:], errors[1:])):
        if e1 > 0 and e2 > 0 and not (math.isnan(e1) or math.isnan(e2)):
            res.append(math.log(e1 / e2) / math.log(h1 / h2))
        else:
            res.append(math.nan)
    return res


ERROR_COLUMNS = ("err_eta", "err_d_eta", "err_sigma", "err_d_sigma", "err_lambda")


def run_converge(cfg: ExperimentConfig) -> Report:
    epsilon = cfg.epsilon_list[0]
    if not get_problem(cfg.problem, cfg.level_set(epsilon), cfg.k).has_exact:
        raise ConfigError(f"problem {cfg.problem} has no exact solution to converge to")

    report = Report(
        Command.CONVERGE,
        cfg,
        ["m", "h", "dofs_sigma", "dofs_eta", "dofs_lambda", *ERROR_COLUMNS,
         "norm_s_eta", "norm_s_sigma", "kappa1", "wall_time"],
    )
    for m in cfg.m_list:
        start = time.perf_counter()
        hp = problem_from_config(cfg, m, epsilon)
        problem = get_problem(cfg.problem, hp.mesh.phi, cfg.k)
        sol = hp.solve(problem.source)
        assert problem.exact is not None
        errors = compute_errors(hp, sol, problem.exact, cfg.quad_degree_volume + 2)
        kappa = condition_estimate(sol.system.A, lu=sol.lu)
        system = sol.system
        report.add(
            m,
            hp.mesh.parent.h,
            system.n_sigma,
            system.n_eta,
            system.n_lambda,
            *errors.as_tuple(),
            hp.s_norm(cfg.k, sol.eta),
            hp.s_norm(cfg.k - 1, sol.sigma) if cfg.k > 0 else math.nan,
            kappa,
            time.perf_counter() - start,
        )
        log.info(f"m={m}: errors {', '.join(f'{e:.3e}' for e in errors.as_tuple())}, kappa1={kappa:.3e}")

    h = [float(v) for v in report.column("h")]
    for name in ERROR_COLUMNS:
        orders = observed_orders(h, [float(v) for v in report.column(name)])
        report.footer.append(f"order {name}: " + ", ".join(format_cell(o) for o in orders))
    return report


def _kappa_or_infeasible(hp: HodgeProblem, f: Callable[[np.ndarray], np.ndarray]) -> Cell:
    try:
        sol = hp.solve(f)
        return condition_estimate(sol.system.A, lu=sol.lu)
    except SolverError as e:
        log.info(f"{'stabilized' if hp.stabilized else 'unstabilized'} solve infeasible: {e}")
        return INFEASIBLE


def run_sweep_cut(cfg: ExperimentConfig) -> Report:
    m = cfg.m_list[0]
    report = Report(
        Command.SWEEP_CUT,
        cfg,
        ["epsilon", "m", "kappa1_stab", "kappa1_unstab",
         "lmin_s", "lmax_s", "lmin_phys", "lmax_phys"],
    )
    for epsilon in cfg.epsilon_list:
        hp = problem_from_config(cfg, m, epsilon, stabilized=True)
        f = get_problem(cfg.problem, hp.mesh.phi, cfg.k).source
        gram = hp.grams[cfg.k]
        lmin_s, lmax_s = gram.extremes(stabilized=True)
        lmin_p, lmax_p = gram.extremes(stabilized=False)
        report.add(
            epsilon,
            m,
            _kappa_or_infeasible(hp, f),
            _kappa_or_infeasible(hp.unstabilized(), f),
            lmin_s,
            lmax_s,
            lmin_p,
            lmax_p,
        )
    return report


def run_norm_equiv(cfg: ExperimentConfig) -> Report:
    report = Report(
        Command.NORM_EQUIV,
        cfg,
        ["k", "m", "epsilon", "facet_set", "lmin_s", "lmax_s", "lmin_phys", "lmax_phys"],
    )
    for m in cfg.m_list:
        bg = build_background(cfg.box(), m)
        for epsilon in cfg.epsilon_list:
            mesh = classify(bg, cfg.level_set(epsilon), cfg.n_max)
            sp = build_space(mesh, cfg.k)
            gram = ghost_gram(
                sp,
                cfg.eta,
                cfg.facet_set,
                cfg.delta,
                cfg.n_max,
                cfg.quad_degree_volume,
                cfg.quad_degree_facet,
            )
            lmin_s, lmax_s = gram.extremes(stabilized=True)
            lmin_p, lmax_p = gram.extremes(stabilized=False)
            report.add(cfg.k, m, epsilon, str(cfg.facet_set), lmin_s, lmax_s, lmin_p, lmax_p)
            log.debug(f"m={m} eps={epsilon:g}: [{lmin_s:.3e}, {lmax_s:.3e}] vs unstabilized [{lmin_p:.3e}, {lmax_p:.3e}]")

    lmins = [float(v) for v in report.column("lmin_s")]
    lmaxs = [float(v) for v in report.column("lmax_s")]
    lphys = [float(v) for v in report.column("lmin_phys")]
    report.footer += [
        f"lmin_s range: {format_cell(min(lmins))}, {format_cell(max(lmins))}",
        f"lmax_s range: {format_cell(min(lmaxs))}, {format_cell(max(lmaxs))}",
        f"lmin_phys min: {format_cell(min(lphys))}",
    ]
    return report


def sample_grid(cfg: ExperimentConfig) -> np.ndarray:
    box = cfg.box()
    xs = np.linspace(box.xmin, box.xmax, cfg.grid_points)
    ys = np.linspace(box.ymin, box.ymax, cfg.grid_points)
    X, Y = np.meshgrid(xs, ys)
    return np.column_stack([X.ravel(), Y.ravel()])


def _sample(hp: HodgeProblem, degree: int, coeffs: np.ndarray, points: np.ndarray, tris: np.ndarray) -> np.ndarray:
    sp = hp.spaces[degree]
    res = np.full((len(points), sp.n_components), np.nan)
    for t in np.unique(tris):
        if t < 0 or not hp.mesh.is_active(int(t)):
            continue
        sel = tris == t
        res[sel] = evaluate_field(sp, coeffs, int(t), points[sel])
    return res


def run_solve(cfg: ExperimentConfig, dofs_path: Optional[Path] = None) -> Report:
    m = cfg.m_list[0]
    epsilon = cfg.epsilon_list[0]
    hp = problem_from_config(cfg, m, epsilon)
    problem = get_problem(cfg.problem, hp.mesh.phi, cfg.k)
    sol = hp.solve(problem.source)
    kappa = condition_estimate(sol.system.A, lu=sol.lu)

    if cfg.mesh_dump is not None:
        dump_mesh(hp.mesh, cfg.mesh_dump, macro_facets(hp.mesh, cfg.delta, cfg.n_max))

    points = sample_grid(cfg)
    tris = hp.mesh.parent.locate(points)
    inside = hp.mesh.phi.evaluate(points) < 0
    eta_vals = _sample(hp, cfg.k, sol.eta, points, tris)
    columns = ["x", "y", "inside"] + [f"eta_{i}" for i in range(eta_vals.shape[1])]
    blocks = [eta_vals]
    if cfg.k > 0:
        sigma_vals = _sample(hp, cfg.k - 1, sol.sigma, points, tris)
        columns += [f"sigma_{i}" for i in range(sigma_vals.shape[1])]
        blocks.append(sigma_vals)

    report = Report(Command.SOLVE, cfg, columns)
    values = np.hstack(blocks)
    for p, flag, row in zip(points, inside, values):
        report.add(float(p[0]), float(p[1]), int(flag), *(float(v) for v in row))

    report.footer += [
        f"harmonic_dim: {hp.harmonic.dim}",
        "lambda: " + ", ".join(format_cell(float(c)) for c in sol.lambda_coeffs),
        f"norm_s_eta: {format_cell(hp.s_norm(cfg.k, sol.eta))}",
        f"norm_s_sigma: {format_cell(hp.s_norm(cfg.k - 1, sol.sigma) if cfg.k > 0 else math.nan)}",
        f"kappa1: {format_cell(kappa)}",
        f"residual: {format_cell(sol.residual)}",
    ]

    if dofs_path is not None:
        write_dofs(hp, sol.sigma, sol.eta, dofs_path)
    return report


def write_dofs(hp: HodgeProblem, sigma: np.ndarray, eta: np.ndarray, path: Path | str):
    """Per-entity DOF values: block, degree, entity id, vertex ids, value."""
    bg = hp.mesh.parent
    with open(path, "w", newline="") as fp:
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(["block", "degree", "entity", "vertices", "value"])
        blocks = [("eta", hp.k, eta)]
        if hp.k > 0:
            blocks.insert(0, ("sigma", hp.k - 1, sigma))
        for name, degree, coeffs in blocks:
            sp = hp.spaces[degree]
            for ent, val in zip(sp.entities, coeffs):
                match degree:
                    case 0:
                        verts = [int(ent)]
                    case 1:
                        verts = [int(v) for v in bg.edges[ent]]
                    case _:
                        verts = [int(v) for v in bg.triangles[ent]]
                writer.writerow([name, degree, int(ent), " ".join(map(str, verts)), format_cell(float(val))])


RUNNERS: dict[Command, Callable[[ExperimentConfig], Report]] = {
    Command.CONVERGE: run_converge,
    Command.SWEEP_CUT: run_sweep_cut,
    Command.NORM_EQUIV: run_norm_equiv,
    Command.SOLVE: run_solve,
}


def run(command: Command, cfg: ExperimentConfig, out: Optional[Path] = None) -> Report:
    start = time.perf_counter()
    if command == Command.SOLVE and out is not None:
        report = run_solve(cfg, dofs_path=out.with_suffix(".dofs.csv"))
    else:
        report = RUNNERS[command](cfg)
    log.info(f"{command} finished in {time.perf_counter() - start:.2f}s")
    if out is not None:
        report.save(out)
    return report

