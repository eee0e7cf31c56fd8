"""Diagnostics: distance from the real subspace, solution quality, and an
empirical study of finite-shot bias in the per-gate eigenvalue."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .operators import ShotPlan
from .seqopt import (
    ParameterConfiguration,
    build_s_pair,
    gate_evaluator,
    sampled_backend,
    solve_gate_gep,
)
from .statevector import StateVector


def real_space_distance(state: StateVector) -> float:
    """How far the state is from a real vector, in [0, 1/2].

    Treating each amplitude as the point (Re, Im) in the plane, a state
    that is real up to a global phase has all points on a line through
    the origin; the metric is mu2/(mu1 + mu2) for the eigenvalues
    mu1 >= mu2 of the 2x2 second-moment matrix of the point set, i.e. the
    relative weight of the off-line principal component.
    """
    x = np.stack([state.amps.real, state.amps.imag], axis=1)
    mu = np.linalg.eigvalsh(x.T @ x)
    total = float(mu[0] + mu[1])
    if total <= 0.0:
        return 0.0
    return float(mu[0] / total)


def solution_fidelity(state: StateVector, reference) -> float:
    """|<ref/||ref|| , psi>|**2 against an arbitrary nonzero vector."""
    ref = np.asarray(reference, dtype=complex)
    if ref.shape != (state.dim,):
        raise ValidationError("reference vector dimension mismatch")
    norm = float(np.linalg.norm(ref))
    if norm == 0.0:
        raise ValidationError("reference vector is zero")
    return float(abs(np.vdot(ref, state.amps)) ** 2 / norm**2)


@dataclass(frozen=True)
class BiasRow:
    shots: int
    mean_lambda: float
    std_lambda: float
    exact_lambda: float

    @property
    def bias(self) -> float:
        return self.mean_lambda - self.exact_lambda


def bias_study(problem, layout, params, shot_grid, repeats: int, *,
               gate: int = 0, seed=None,
               config: ParameterConfiguration | None = None,
               reg_eps: float | None = None,
               initial: StateVector | None = None) -> list[BiasRow]:
    """Empirical bias and spread of the per-gate extremal eigenvalue
    under finite-shot estimation.

    Holds the circuit parameters fixed, rebuilds the sampled 4x4 pencil
    of gate ``gate`` ``repeats`` times per shot count, and solves it each
    time; the exact pencil provides the reference eigenvalue.  Each
    repeat draws from an independent seeded stream, so the table is
    reproducible.
    """
    if repeats < 2:
        raise ValidationError("need at least 2 repeats for a spread estimate")
    shot_grid = [int(s) for s in shot_grid]
    if any(s < 1 for s in shot_grid):
        raise ValidationError("shot counts must be >= 1")
    exact_pair = build_s_pair(
        gate_evaluator(problem, layout, params, gate, initial=initial), config
    )
    lam_exact = solve_gate_gep(exact_pair, problem.sense, reg_eps).lam
    root = np.random.SeedSequence(seed)
    children = iter(root.spawn(len(shot_grid) * repeats))
    rows = []
    for shots in shot_grid:
        lams = np.empty(repeats)
        for r in range(repeats):
            plan = ShotPlan(shots, seed=next(children))
            evaluator = gate_evaluator(problem, layout, params, gate,
                                       initial=initial, expect=sampled_backend(plan))
            pair = build_s_pair(evaluator, config)
            lams[r] = solve_gate_gep(pair, problem.sense, reg_eps).lam
        rows.append(BiasRow(shots=shots,
                            mean_lambda=float(lams.mean()),
                            std_lambda=float(lams.std(ddof=1)),
                            exact_lambda=float(lam_exact)))
    return rows


def equalize_lengths(trajectories) -> np.ndarray:
    """Pad a list of 1D series to a common length by repeating each
    series' final value; rows are the padded series."""
    seqs = [np.asarray(t, dtype=float) for t in trajectories]
    if not seqs or any(s.size == 0 for s in seqs):
        raise ValidationError("trajectories must be nonempty")
    length = max(s.size for s in seqs)
    out = np.empty((len(seqs), length))
    for i, s in enumerate(seqs):
        out[i, : s.size] = s
        out[i, s.size:] = s[-1]
    return out
