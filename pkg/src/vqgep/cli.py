"""Batch experiment runner: flat-file configs, seeded multi-trial
orchestration, CSV persistence.

Config files are ``key = value`` lines (``#`` comments allowed); every
knob has a default, and command-line ``--set key=value`` flags override
file values.  Per-trial randomness derives from the master seed and the
trial index only, so reruns of the same config are reproducible; wall
times are written to a separate file to keep ``summary.csv`` byte-stable.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import analysis, fem
from .errors import ConfigError, NumericalError, ValidationError
from .gep import GEProblem, SleProblem, classical_reference_solve, recover_sle_solution, sle_to_gep
from .operators import HermitianOperator, Rank1Projector, ShotPlan, load_operator, save_operator
from .seqopt import OptimizerKind, init_params, sequential_optimize
from .statevector import StateVector, layout_by_name


@dataclass
class ExperimentConfig:
    experiment: str = ""
    ansatz: str = "alternating"
    layers: int = 2
    optimizer: str = "fqs"
    nft_axis: str = "y"
    init: str = "complex-space"
    sense: str = ""          # empty = experiment default
    shots: str = "exact"     # "exact" or a shot count per circuit
    trials: int = 30
    seed: int = 0
    eps_tol: float = 1e-6
    max_iters: int = 200
    outdir: str = "runs"
    workers: int = 1
    sweep_order: str = "ascending"
    # poisson
    poisson_nodes: int = 32
    element_h: float = 1.0
    # beam
    beam_nx: int = 18
    beam_ny: int = 4
    beam_width: float = 1.0
    beam_height: float = 3.0 / 17.0
    youngs: float = 200e9
    poisson_ratio: float = 0.3
    density: float = 7850.0
    elastic_model: str = "plane-stress"
    # custom pencils
    a_path: str = ""
    b_path: str = ""
    # bias study
    shot_grid: str = "100,1000,10000"
    bias_repeats: int = 200
    bias_gate: int = 0


_EXPERIMENTS = ("poisson", "beam", "custom-gep", "bias-study")
_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(key: str, raw: str, where: str):
    kind = _FIELD_TYPES[key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"{where}: key {key!r} expects {kind}, got {raw!r}") from exc


def parse_config(path) -> ExperimentConfig:
    cfg = ExperimentConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        setattr(cfg, key, _coerce(key, raw, f"{path}:{lineno}"))
    return cfg


def apply_overrides(cfg: ExperimentConfig, pairs) -> ExperimentConfig:
    for item in pairs or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = (part.strip() for part in item.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"--set: unknown key {key!r}")
        cfg = replace(cfg, **{key: _coerce(key, raw, "--set")})
    return cfg


def validate_config(cfg: ExperimentConfig) -> ExperimentConfig:
    if cfg.experiment not in _EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {_EXPERIMENTS}, got {cfg.experiment!r}")
    if cfg.trials < 1:
        raise ConfigError("trials must be >= 1")
    if cfg.eps_tol <= 0:
        raise ConfigError("eps_tol must be positive")
    if cfg.max_iters < 1:
        raise ConfigError("max_iters must be >= 1")
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    if cfg.shots != "exact":
        try:
            shots = int(cfg.shots)
        except ValueError as exc:
            raise ConfigError(f"shots must be 'exact' or an integer, got {cfg.shots!r}") from exc
        if shots < 1:
            raise ConfigError("shots must be >= 1")
    if cfg.sense not in ("", "min", "max"):
        raise ConfigError(f"sense must be min or max, got {cfg.sense!r}")
    if cfg.experiment == "custom-gep":
        for label, p in (("a_path", cfg.a_path), ("b_path", cfg.b_path)):
            if not p:
                raise ConfigError(f"custom-gep requires {label}")
            if not Path(p).exists():
                raise ConfigError(f"{label}: file {p!r} does not exist")
    return cfg


def _shot_plan_or_none(cfg: ExperimentConfig, seed) -> ShotPlan | None:
    if cfg.shots == "exact":
        return None
    return ShotPlan(int(cfg.shots), seed=seed)


def _optimizer_kind(cfg: ExperimentConfig) -> OptimizerKind:
    if cfg.optimizer == "nft":
        return OptimizerKind.nft(cfg.nft_axis)
    if cfg.optimizer == "fqs":
        return OptimizerKind.fqs()
    if cfg.optimizer == "fraxis":
        return OptimizerKind.fraxis()
    if cfg.optimizer == "rotoselect":
        return OptimizerKind.rotoselect()
    raise ConfigError(f"unknown optimizer {cfg.optimizer!r}")


# --- problem construction -------------------------------------------------------

@dataclass
class ProblemBundle:
    problem: GEProblem
    layout: object
    objective_star: float
    reference_vector: np.ndarray
    classical_rows: list          # (name, value) pairs for classical.csv
    sle: SleProblem | None = None


def build_poisson(cfg: ExperimentConfig) -> ProblemBundle:
    mesh = fem.Mesh1D(cfg.poisson_nodes, cfg.element_h)
    system = fem.assemble_poisson_1d(mesh)
    load = fem.assemble_poisson_load(mesh, fem.step_load_samples(mesh))
    system = replace(system, load=load)
    emb = fem.dof_to_basis_map(system)
    f_state = StateVector(emb.load)
    sle = SleProblem(emb.stiffness, f_state)
    problem = sle_to_gep(sle)
    if cfg.sense:
        problem = GEProblem(problem.a, problem.b, cfg.sense)
    w, v = classical_reference_solve(problem.a, problem.b)
    idx = -1 if problem.sense == "max" else 0
    star = float(w[idx])
    k_dense = np.asarray(emb.stiffness.to_dense())
    u_star = np.linalg.solve(k_dense, emb.load)
    residual_star = float(np.linalg.norm(k_dense @ u_star - emb.load))
    rows = [
        ("objective_star", star),
        ("classical_lambda_max", float(w[-1])),
        ("classical_solution_residual", residual_star),
        ("dimension", emb.dim),
        ("qubits", emb.n_qubits),
    ]
    return ProblemBundle(problem=problem, layout=layout_by_name(cfg.ansatz, emb.n_qubits, cfg.layers),
                         objective_star=star, reference_vector=v[:, idx],
                         classical_rows=rows, sle=sle)


def beam_fixed_nodes(mesh: fem.Mesh2DGrid):
    """Both vertical edges of the grid."""
    left = [mesh.node(0, iy) for iy in range(mesh.ny)]
    right = [mesh.node(mesh.nx - 1, iy) for iy in range(mesh.ny)]
    return left + right


def build_beam(cfg: ExperimentConfig) -> ProblemBundle:
    mesh = fem.Mesh2DGrid(cfg.beam_nx, cfg.beam_ny, cfg.beam_width, cfg.beam_height)
    material = fem.Material(cfg.youngs, cfg.poisson_ratio, cfg.density)
    system = fem.assemble_elasticity_2d(mesh, material, model=cfg.elastic_model)
    reduced = fem.apply_dirichlet(system, beam_fixed_nodes(mesh))
    emb = fem.dof_to_basis_map(reduced)
    problem = GEProblem(emb.stiffness, emb.mass, cfg.sense or "min")
    w, v = classical_reference_solve(problem.a, problem.b)
    idx = 0 if problem.sense == "min" else -1
    star = float(w[idx])
    rows = [
        ("objective_star", star),
        ("classical_lambda_min", float(w[0])),
        ("classical_frequency_hz", float(np.sqrt(max(w[0], 0.0)) / (2.0 * np.pi))),
        ("dimension", emb.dim),
        ("qubits", emb.n_qubits),
    ]
    return ProblemBundle(problem=problem, layout=layout_by_name(cfg.ansatz, emb.n_qubits, cfg.layers),
                         objective_star=star, reference_vector=v[:, idx],
                         classical_rows=rows)


def load_pencil(a_path, b_path, sense: str = "min") -> GEProblem:
    """Pencil from two banded-text operator files; validates Hermiticity
    (at load) and positive definiteness of B (at construction)."""
    return GEProblem(load_operator(a_path), load_operator(b_path), sense)


def build_custom(cfg: ExperimentConfig) -> ProblemBundle:
    problem = load_pencil(cfg.a_path, cfg.b_path, cfg.sense or "min")
    w, v = classical_reference_solve(problem.a, problem.b)
    idx = 0 if problem.sense == "min" else -1
    star = float(w[idx])
    rows = [
        ("objective_star", star),
        ("classical_lambda_min", float(w[0])),
        ("classical_lambda_max", float(w[-1])),
        ("dimension", problem.dim),
        ("qubits", problem.n_qubits),
    ]
    return ProblemBundle(problem=problem, layout=layout_by_name(cfg.ansatz, problem.n_qubits, cfg.layers),
                         objective_star=star, reference_vector=v[:, idx],
                         classical_rows=rows)


def default_bias_instance(n_qubits: int = 2, seed: int = 7):
    """A fixed small pencil, ansatz and parameter point for shot-noise
    studies: B is comfortably positive definite so the sampled
    denominator matrices rarely need shifting, and A is indefinite."""
    rng = np.random.default_rng(seed)
    dim = 1 << n_qubits
    qa, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    a = HermitianOperator.from_dense(qa @ np.diag(np.linspace(-2.0, 2.0, dim)) @ qa.T)
    qb, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    b = HermitianOperator.from_dense(qb @ np.diag(np.linspace(0.5, 2.5, dim)) @ qb.T)
    problem = GEProblem(a, b, "min")
    layout = layout_by_name("alternating", n_qubits, 1)
    params = init_params("complex-space", layout, rng)
    return problem, layout, params


def build_bundle(cfg: ExperimentConfig) -> ProblemBundle:
    if cfg.experiment == "poisson":
        return build_poisson(cfg)
    if cfg.experiment == "beam":
        return build_beam(cfg)
    if cfg.experiment == "custom-gep":
        return build_custom(cfg)
    raise ConfigError(f"experiment {cfg.experiment!r} does not define an optimization problem")


# --- persistence helpers ----------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_config_echo(cfg: ExperimentConfig, outdir: Path) -> None:
    lines = [f"{f.name} = {getattr(cfg, f.name)}" for f in fields(ExperimentConfig)]
    (outdir / "config.echo").write_text("\n".join(lines) + "\n")


def write_rows_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


# --- trial execution ----------------------------------------------------------------

@dataclass
class TrialResult:
    trial: int
    status: str
    converged: bool | None = None
    iterations: int | None = None
    evaluations: int | None = None
    lam: float | None = None
    objective: float | None = None
    rel_error: float | None = None
    fidelity: float | None = None
    distance_first: float | None = None
    distance_final: float | None = None
    residual: float | None = None
    error: str = ""
    seconds: float = 0.0


_SUMMARY_HEADER = [
    "trial", "status", "converged", "iterations", "evaluations", "lambda",
    "objective", "rel_error", "fidelity", "distance_first", "distance_final",
    "residual", "error",
]


def _trial_seeds(master_seed: int, trial: int):
    base = np.random.SeedSequence(master_seed, spawn_key=(trial,))
    return base.spawn(2)  # (parameter init, sampling)


def run_trial(cfg: ExperimentConfig, bundle: ProblemBundle, trial: int, outdir: Path) -> TrialResult:
    init_seed, shot_seed = _trial_seeds(cfg.seed, trial)
    rng = np.random.default_rng(init_seed)
    params0 = init_params(cfg.init, bundle.layout, rng)
    plan = _shot_plan_or_none(cfg, shot_seed)
    started = time.perf_counter()
    try:
        trace = sequential_optimize(
            bundle.problem, bundle.layout, params0,
            kind=_optimizer_kind(cfg),
            eps_tol=cfg.eps_tol,
            max_iters=cfg.max_iters,
            shots=plan,
            sweep_order=cfg.sweep_order,
            rng=np.random.default_rng(init_seed),
            record_objective=True,
            record_distance=True,
        )
    except NumericalError as exc:
        partial = getattr(exc, "trace", None)
        if partial is not None and partial.records:
            partial.write_csv(outdir / f"trial_{trial}.csv")
        return TrialResult(trial=trial, status="failed", error=str(exc),
                           seconds=time.perf_counter() - started)
    seconds = time.perf_counter() - started
    trace.write_csv(outdir / f"trial_{trial}.csv")
    state = trace.final_state
    objective = bundle.problem.objective(state)
    star = bundle.objective_star
    rel_error = abs(objective - star) / abs(star) if star != 0.0 else abs(objective - star)
    fidelity = analysis.solution_fidelity(state, bundle.reference_vector)
    distances = [r.distance for r in trace.records if r.distance is not None]
    residual = None
    if bundle.sle is not None:
        u = recover_sle_solution(bundle.sle, objective, state)
        k_dense = np.asarray(bundle.sle.k.to_dense())
        residual = float(np.linalg.norm(k_dense @ u - bundle.sle.f.amps))
        write_rows_csv(outdir / f"solution_trial_{trial}.csv",
                       ["index", "re", "im"],
                       [(i, u[i].real, u[i].imag) for i in range(u.size)])
    return TrialResult(
        trial=trial, status="ok", converged=trace.converged,
        iterations=trace.iterations, evaluations=trace.evaluations,
        lam=trace.final_lambda, objective=objective, rel_error=rel_error,
        fidelity=fidelity,
        distance_first=distances[0] if distances else None,
        distance_final=distances[-1] if distances else None,
        residual=residual, seconds=seconds,
    )


_WORKER_BUNDLE = {}


def _trial_worker(args):
    cfg, trial, outdir = args
    key = (cfg.experiment, cfg.ansatz, cfg.layers)
    bundle = _WORKER_BUNDLE.get(key)
    if bundle is None:
        bundle = build_bundle(cfg)
        _WORKER_BUNDLE[key] = bundle
    return run_trial(cfg, bundle, trial, Path(outdir))


def run_bias_study(cfg: ExperimentConfig, outdir: Path) -> int:
    if cfg.a_path and cfg.b_path:
        problem = load_pencil(cfg.a_path, cfg.b_path, cfg.sense or "min")
        layout = layout_by_name(cfg.ansatz, problem.n_qubits, cfg.layers)
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(0,)))
        params = init_params(cfg.init, layout, rng)
    else:
        problem, layout, params = default_bias_instance()
    try:
        grid = [int(tok) for tok in cfg.shot_grid.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"shot_grid must be comma-separated integers, got {cfg.shot_grid!r}") from exc
    rows = analysis.bias_study(problem, layout, params, grid, cfg.bias_repeats,
                               gate=cfg.bias_gate, seed=cfg.seed)
    write_rows_csv(outdir / "bias.csv",
                   ["shots", "mean_lambda", "std_lambda", "exact_lambda", "bias"],
                   [(r.shots, r.mean_lambda, r.std_lambda, r.exact_lambda, r.bias) for r in rows])
    return 0


def run_experiment(cfg: ExperimentConfig) -> int:
    """Execute a validated config; returns a process exit code."""
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    write_config_echo(cfg, outdir)
    if cfg.experiment == "bias-study":
        return run_bias_study(cfg, outdir)
    bundle = build_bundle(cfg)
    write_rows_csv(outdir / "classical.csv", ["name", "value"], bundle.classical_rows)
    jobs = list(range(cfg.trials))
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_trial_worker, [(cfg, t, str(outdir)) for t in jobs]))
    else:
        results = [run_trial(cfg, bundle, t, outdir) for t in jobs]
    results.sort(key=lambda r: r.trial)
    write_rows_csv(outdir / "summary.csv", _SUMMARY_HEADER, [
        (r.trial, r.status, r.converged, r.iterations, r.evaluations, r.lam,
         r.objective, r.rel_error, r.fidelity, r.distance_first,
         r.distance_final, r.residual, r.error)
        for r in results
    ])
    write_rows_csv(outdir / "timings.csv", ["trial", "seconds"],
                   [(r.trial, r.seconds) for r in results])
    ok = sum(1 for r in results if r.status == "ok")
    print(f"{cfg.experiment}: {ok}/{len(results)} trials succeeded -> {outdir}")
    return 0 if ok else 3


def run_export(cfg: ExperimentConfig) -> int:
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    if cfg.experiment == "poisson":
        mesh = fem.Mesh1D(cfg.poisson_nodes, cfg.element_h)
        system = fem.assemble_poisson_1d(mesh)
        load = fem.assemble_poisson_load(mesh, fem.step_load_samples(mesh))
        save_operator(system.stiffness, outdir / "stiffness.txt")
        write_rows_csv(outdir / "load.csv", ["index", "re", "im"],
                       [(i, load[i].real, load[i].imag) for i in range(load.size)])
    elif cfg.experiment == "beam":
        mesh = fem.Mesh2DGrid(cfg.beam_nx, cfg.beam_ny, cfg.beam_width, cfg.beam_height)
        material = fem.Material(cfg.youngs, cfg.poisson_ratio, cfg.density)
        system = fem.assemble_elasticity_2d(mesh, material, model=cfg.elastic_model)
        reduced = fem.apply_dirichlet(system, beam_fixed_nodes(mesh))
        save_operator(reduced.stiffness, outdir / "stiffness.txt")
        save_operator(reduced.mass, outdir / "mass.txt")
    elif cfg.experiment == "custom-gep":
        problem = load_pencil(cfg.a_path, cfg.b_path, cfg.sense or "min")
        save_operator(problem.a, outdir / "a.txt")
        save_operator(problem.b, outdir / "b.txt")
    else:
        raise ConfigError(f"nothing to export for experiment {cfg.experiment!r}")
    print(f"exported matrices -> {outdir}")
    return 0


def run_solve_classical(cfg: ExperimentConfig) -> int:
    bundle = build_bundle(cfg)
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    write_rows_csv(outdir / "classical.csv", ["name", "value"], bundle.classical_rows)
    for name, value in bundle.classical_rows:
        print(f"{name} = {_fmt(value)}")
    return 0


def _load_config(args) -> ExperimentConfig:
    cfg = parse_config(args.config)
    cfg = apply_overrides(cfg, args.set)
    if args.outdir:
        cfg = replace(cfg, outdir=args.outdir)
    return validate_config(cfg)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="vqgep",
        description="Variational quantum solver experiments for generalized eigenvalue problems",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "run a configured experiment"),
        ("export-pencil", "write the assembled matrices in the banded text format"),
        ("solve-classical", "solve the configured problem with the dense classical oracle"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("config", help="path to a key = value config file")
        cmd.add_argument("--set", action="append", metavar="KEY=VALUE",
                         help="override a config key (repeatable)")
        cmd.add_argument("--outdir", help="override the output directory")
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args)
        if args.command == "run":
            return run_experiment(cfg)
        if args.command == "export-pencil":
            return run_export(cfg)
        return run_solve_classical(cfg)
    except (ConfigError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
