"""Sequential per-gate optimization of the fractional objective <A>/<B>.

For a fixed circuit and gate slot, both expectations are exact quadratic
forms in that gate's unit quaternion:

    <A>(q) = q^T S_A q,     <B>(q) = q^T S_B q,

so the 4x4 symmetric pair (S_A, S_B) captures everything the optimizer
needs about one gate.  Each matrix is reconstructed from expectation
values at ten fixed gate settings (the *parameter configuration*), and
the per-gate optimum of the ratio is the extremal eigenpair of the small
generalized eigenproblem ``S_A p = lambda S_B p``.

Restricting the quaternion recovers the classic single-gate update
families: a fixed rotation axis gives a 2x2 problem (angle-only updates),
a fixed pi angle gives the 3x3 lower-right block (axis-only updates), and
trying the angle-only update over the axes x, y, z and keeping the best
gives the discrete-axis variant.  The unrestricted 4x4 solve optimizes
over all of SU(2) at once.

The driver sweeps the gates in order, rebuilding the local pair from the
chosen evaluation backend (exact statevector or finite-shot sampling) and
replacing each gate by its local optimum, until the relative change of
the objective falls below a tolerance.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg

from .errors import NumericalError, ValidationError
from .operators import Rank1Projector, ShotPlan, expectation_sampled_amps, fidelity_sampled_amps
from .statevector import (
    CircuitLayout,
    StateVector,
    _apply_ops_raw,
    _apply_quaternion_raw,
    _check_params,
)

_OFF_PAIRS = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))

_AXES = {"x": (1.0, 0.0, 0.0), "y": (0.0, 1.0, 0.0), "z": (0.0, 0.0, 1.0)}


def _quad_row(q: np.ndarray) -> np.ndarray:
    row = np.empty(10)
    row[:4] = q * q
    for k, (i, j) in enumerate(_OFF_PAIRS):
        row[4 + k] = 2.0 * q[i] * q[j]
    return row


class ParameterConfiguration:
    """Ten gate settings plus the induced linear map recovering a 4x4
    symmetric matrix from the quadratic-form values at those settings."""

    __slots__ = ("points", "_recover", "condition_number")

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.shape != (10, 4):
            raise ValidationError(f"a parameter configuration needs 10 quaternions, got {pts.shape}")
        norms = np.linalg.norm(pts, axis=1)
        if np.abs(norms - 1.0).max() > 1e-9:
            raise ValidationError("configuration points must be unit quaternions")
        design = np.stack([_quad_row(p) for p in pts])
        cond = float(np.linalg.cond(design))
        if not np.isfinite(cond) or cond >= 1e3:
            raise ValidationError(
                f"configuration is ill-conditioned (cond = {cond:.3g}); "
                "the ten points must determine all matrix entries"
            )
        pts = pts.copy()
        pts.flags.writeable = False
        self.points = pts
        self._recover = np.linalg.inv(design)
        self.condition_number = cond

    def reconstruct(self, values) -> np.ndarray:
        """Symmetric 4x4 matrix S with ``values[k] == p_k^T S p_k``."""
        vals = np.asarray(values, dtype=float)
        if vals.shape != (10,):
            raise ValidationError("expected 10 expectation values")
        packed = self._recover @ vals
        s = np.diag(packed[:4])
        for k, (i, j) in enumerate(_OFF_PAIRS):
            s[i, j] = s[j, i] = packed[4 + k]
        return s


@lru_cache(maxsize=1)
def default_configuration() -> ParameterConfiguration:
    """The symmetric ten-point set: the four basis quaternions e_i plus
    the six normalized pairwise sums (e_i + e_j)/sqrt(2).

    Basis points pin the diagonal directly; each pairwise point adds one
    off-diagonal entry via S_ij = value - (S_ii + S_jj)/2.
    """
    points = [np.eye(4)[i] for i in range(4)]
    for i, j in _OFF_PAIRS:
        p = (np.eye(4)[i] + np.eye(4)[j]) / np.sqrt(2.0)
        points.append(p)
    return ParameterConfiguration(np.array(points))


@dataclass(frozen=True)
class SMatrixPair:
    """The 4x4 quadratic-form matrices of <A> and <B> at one gate slot."""

    s_a: np.ndarray
    s_b: np.ndarray


def build_s_pair(evaluator, config: ParameterConfiguration | None = None) -> SMatrixPair:
    """Reconstruct (S_A, S_B) from ``evaluator(q) -> (<A>, <B>)`` sampled
    at the configuration points."""
    config = config or default_configuration()
    va = np.empty(10)
    vb = np.empty(10)
    for k, point in enumerate(config.points):
        va[k], vb[k] = evaluator(point)
    return SMatrixPair(config.reconstruct(va), config.reconstruct(vb))


# --- small generalized eigensolves --------------------------------------------

def default_reg_eps(s_b: np.ndarray) -> float:
    return 1e-8 * max(1.0, float(np.abs(s_b).sum(axis=1).max()))


def regularize_sb(s_b: np.ndarray, eps: float) -> np.ndarray:
    """Shift S_B to ``S_B + (eps - beta_min) I`` when its minimum
    eigenvalue beta_min is negative (finite-shot noise can make the
    denominator matrix indefinite); otherwise return it unchanged."""
    if eps <= 0.0:
        raise ValidationError("regularization eps must be positive")
    mat = np.asarray(s_b, dtype=float)
    beta_min = float(np.linalg.eigvalsh(0.5 * (mat + mat.T))[0])
    if beta_min >= 0.0:
        return mat
    return mat + (eps - beta_min) * np.eye(mat.shape[0])


def _fix_sign(vec: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(vec)))
    return -vec if vec[k] < 0.0 else vec


def _extremal_pair(s_a: np.ndarray, s_b_pd: np.ndarray, sense: str, current=None):
    """Extremal eigenpair of a small symmetric pencil with PD right side.

    Degenerate extremal eigenvalues are disambiguated by projecting the
    caller's current vector onto the extremal eigenspace (minimizes the
    parameter jump); the eigenvector is returned with unit Euclidean norm
    and its largest-magnitude component positive.
    """
    sa = 0.5 * (s_a + s_a.T)
    sb = 0.5 * (s_b_pd + s_b_pd.T)
    try:
        w, v = scipy.linalg.eigh(sa, sb)
    except (scipy.linalg.LinAlgError, np.linalg.LinAlgError) as exc:
        raise NumericalError(
            "generalized eigensolve failed; denominator matrix not positive "
            "definite (regularization eps too small?)"
        ) from exc
    idx = 0 if sense == "min" else len(w) - 1
    lam = float(w[idx])
    vec = v[:, idx]
    tol = 1e-9 * max(1.0, float(np.abs(w).max()))
    cluster = np.flatnonzero(np.abs(w - lam) <= tol)
    if cluster.size > 1 and current is not None:
        basis, _ = np.linalg.qr(v[:, cluster])
        proj = basis @ (basis.T @ np.asarray(current, dtype=float))
        nrm = float(np.linalg.norm(proj))
        if nrm > 1e-12:
            vec = proj / nrm
    vec = vec / float(np.linalg.norm(vec))
    return lam, _fix_sign(vec)


def _check_sense(sense: str) -> str:
    if sense not in ("min", "max"):
        raise ValidationError(f"sense must be 'min' or 'max', got {sense!r}")
    return sense


@dataclass(frozen=True)
class GateUpdate:
    """Locally optimal objective value and the quaternion achieving it."""

    lam: float
    q: np.ndarray


def solve_gate_gep(pair: SMatrixPair, sense: str, eps: float | None = None,
                   current=None) -> GateUpdate:
    """Unrestricted per-gate optimum: extremal eigenpair of the 4x4
    pencil (S_A, regularized S_B)."""
    _check_sense(sense)
    sb = regularize_sb(pair.s_b, eps if eps is not None else default_reg_eps(pair.s_b))
    lam, vec = _extremal_pair(pair.s_a, sb, sense, current)
    return GateUpdate(lam=lam, q=vec)


@dataclass(frozen=True)
class OptimizerKind:
    """Which single-gate update family to use.

    ``method`` is one of "fqs" (full quaternion), "fraxis" (axis-only,
    angle fixed at pi), "nft" (angle-only about a fixed axis) or
    "rotoselect" (angle-only, best axis out of x/y/z).
    """

    method: str
    axis: tuple | None = None

    def __post_init__(self):
        if self.method not in ("fqs", "fraxis", "nft", "rotoselect"):
            raise ValidationError(f"unknown optimizer {self.method!r}")
        if self.method == "nft":
            if self.axis is None:
                raise ValidationError("nft optimizer requires an axis")
            ax = np.asarray(self.axis, dtype=float)
            nrm = float(np.linalg.norm(ax))
            if ax.shape != (3,) or nrm < 1e-12:
                raise ValidationError("nft axis must be a nonzero 3-vector")
            object.__setattr__(self, "axis", tuple(ax / nrm))
        elif self.axis is not None:
            raise ValidationError(f"{self.method!r} optimizer takes no axis")

    @classmethod
    def fqs(cls) -> "OptimizerKind":
        return cls("fqs")

    @classmethod
    def fraxis(cls) -> "OptimizerKind":
        return cls("fraxis")

    @classmethod
    def rotoselect(cls) -> "OptimizerKind":
        return cls("rotoselect")

    @classmethod
    def nft(cls, axis="y") -> "OptimizerKind":
        if isinstance(axis, str):
            if axis not in _AXES:
                raise ValidationError(f"unknown axis name {axis!r}")
            axis = _AXES[axis]
        return cls("nft", tuple(axis))


def _bordered(s: np.ndarray, axis: np.ndarray) -> np.ndarray:
    sv = s[0, 1:] @ axis
    return np.array([[s[0, 0], sv], [sv, axis @ s[1:, 1:] @ axis]])


def _nft_update(s_a, s_b_reg, axis: np.ndarray, current, sense: str) -> GateUpdate:
    cur2 = None
    if current is not None:
        cur2 = np.array([current[0], current[1:] @ axis])
        if np.linalg.norm(cur2) < 1e-12:
            cur2 = None
    lam, c = _extremal_pair(_bordered(s_a, axis), _bordered(s_b_reg, axis), sense, cur2)
    q = np.concatenate(([c[0]], c[1] * axis))
    return GateUpdate(lam=lam, q=_fix_sign(q))


def restrict_update(pair: SMatrixPair, kind: OptimizerKind, current, sense: str,
                    eps: float | None = None) -> GateUpdate:
    """Per-gate optimum within the variational family of ``kind``.

    The 4x4 S_B is regularized once; its restrictions (congruences and
    principal blocks) inherit positive definiteness.
    """
    _check_sense(sense)
    cur = None if current is None else np.asarray(current, dtype=float)
    sb = regularize_sb(pair.s_b, eps if eps is not None else default_reg_eps(pair.s_b))
    if kind.method == "fqs":
        lam, vec = _extremal_pair(pair.s_a, sb, sense, cur)
        return GateUpdate(lam=lam, q=vec)
    if kind.method == "nft":
        return _nft_update(pair.s_a, sb, np.asarray(kind.axis), cur, sense)
    if kind.method == "rotoselect":
        best = None
        for name in ("x", "y", "z"):
            upd = _nft_update(pair.s_a, sb, np.asarray(_AXES[name]), cur, sense)
            better = best is None or (upd.lam < best.lam if sense == "min" else upd.lam > best.lam)
            if better:
                best = upd
        return best
    # fraxis: quaternion restricted to (0, n) with unit axis n
    cur3 = None
    if cur is not None and np.linalg.norm(cur[1:]) > 1e-12:
        cur3 = cur[1:]
    lam, axis = _extremal_pair(pair.s_a[1:, 1:], sb[1:, 1:], sense, cur3)
    return GateUpdate(lam=lam, q=np.concatenate(([0.0], axis)))


# --- parameter initialization ----------------------------------------------------

def init_params(strategy: str, layout: CircuitLayout, rng=None) -> np.ndarray:
    """Initial gate quaternions, shape (D, 4).

    "real-space" and "nft-random": rotations about the y axis with angles
    uniform in [0, 2*pi), so the circuit maps real states to real states.
    "complex-space": quaternions uniform on the 3-sphere.
    "fraxis-random": pi rotations about axes uniform on the 2-sphere.
    """
    rng = np.random.default_rng(rng)
    d = layout.num_gates
    if strategy in ("real-space", "nft-random"):
        theta = rng.uniform(0.0, 2.0 * np.pi, size=d)
        q = np.zeros((d, 4))
        q[:, 0] = np.cos(0.5 * theta)
        q[:, 2] = np.sin(0.5 * theta)
        return q
    if strategy == "complex-space":
        q = rng.standard_normal((d, 4))
        norms = np.linalg.norm(q, axis=1)
        while np.any(norms < 1e-12):  # pragma: no cover - probability zero
            bad = norms < 1e-12
            q[bad] = rng.standard_normal((int(bad.sum()), 4))
            norms = np.linalg.norm(q, axis=1)
        return q / norms[:, None]
    if strategy == "fraxis-random":
        axes = rng.standard_normal((d, 3))
        norms = np.linalg.norm(axes, axis=1)
        while np.any(norms < 1e-12):  # pragma: no cover - probability zero
            bad = norms < 1e-12
            axes[bad] = rng.standard_normal((int(bad.sum()), 3))
            norms = np.linalg.norm(axes, axis=1)
        q = np.zeros((d, 4))
        q[:, 1:] = axes / norms[:, None]
        return q
    raise ValidationError(f"unknown initialization strategy {strategy!r}")


# --- evaluation backends -----------------------------------------------------------

def exact_backend():
    """Backend computing expectations directly from the statevector."""
    def expect(op, amps):
        return op.expect_amps(amps)
    return expect


def sampled_backend(plan: ShotPlan):
    """Backend estimating expectations from ``plan.shots`` measurement
    samples per circuit: grouped rotated-basis sampling for matrices,
    the inversion test for rank-1 projectors."""
    def expect(op, amps):
        if isinstance(op, Rank1Projector):
            return fidelity_sampled_amps(op.f.amps, amps, plan)
        return expectation_sampled_amps(op, amps, plan)
    return expect


def gate_evaluator(problem, layout: CircuitLayout, params, gate: int, *,
                   initial: StateVector | None = None, expect=None):
    """Callable ``q -> (<A>, <B>)`` with gate ``gate`` replaced by ``q``.

    ``problem`` provides Hermitian observables ``a`` and ``b``; ``expect``
    is an evaluation backend (default exact).
    """
    arr = _check_params(layout, params)
    if not 0 <= gate < layout.num_gates:
        raise IndexError(f"gate index {gate} out of range")
    expect = expect or exact_backend()
    pos = layout.gate_positions[gate]
    target = layout.ops[pos][2]
    n = layout.n
    if initial is None:
        prefix = np.zeros(1 << n, dtype=complex)
        prefix[0] = 1.0
    else:
        if initial.n != n:
            raise ValidationError("initial state does not match layout")
        prefix = initial.amps.copy()
    _apply_ops_raw(prefix, layout.ops[:pos], arr, n)
    suffix = layout.ops[pos + 1:]

    def evaluate(q):
        amps = prefix.copy()
        _apply_quaternion_raw(amps, np.asarray(q, dtype=float), target, n)
        _apply_ops_raw(amps, suffix, arr, n)
        return expect(problem.a, amps), expect(problem.b, amps)

    return evaluate


# --- the sweep driver ----------------------------------------------------------------

@dataclass(frozen=True)
class UpdateRecord:
    iteration: int
    gate: int
    lam: float
    objective: float | None
    distance: float | None
    evaluations: int


@dataclass
class OptimizeTrace:
    """Per-update history of one optimization run."""

    records: list
    params: np.ndarray
    converged: bool
    iterations: int
    evaluations: int
    final_state: StateVector | None

    @property
    def final_lambda(self) -> float:
        return self.records[-1].lam

    def lambdas(self) -> np.ndarray:
        return np.array([r.lam for r in self.records])

    def objectives(self) -> np.ndarray:
        return np.array([np.nan if r.objective is None else r.objective for r in self.records])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "gate", "lambda", "objective", "distance"])
            for r in self.records:
                writer.writerow([
                    r.iteration,
                    r.gate,
                    repr(r.lam),
                    "" if r.objective is None else repr(r.objective),
                    "" if r.distance is None else repr(r.distance),
                ])


def _distance_from_amps(amps: np.ndarray) -> float:
    x = np.stack([amps.real, amps.imag], axis=1)
    mu = np.linalg.eigvalsh(x.T @ x)
    total = float(mu[0] + mu[1])
    return float(mu[0] / total) if total > 0.0 else 0.0


def sequential_optimize(problem, layout: CircuitLayout, params0, *,
                        kind: OptimizerKind | None = None,
                        sense: str | None = None,
                        eps_tol: float = 1e-6,
                        max_iters: int = 200,
                        reg_eps: float | None = None,
                        config: ParameterConfiguration | None = None,
                        shots: ShotPlan | None = None,
                        initial: StateVector | None = None,
                        sweep_order: str = "ascending",
                        rng=None,
                        record_objective: bool = True,
                        record_distance: bool = False) -> OptimizeTrace:
    """Coordinate-descent sweeps over all gates of ``layout``.

    Each iteration visits every gate once (ascending order by default,
    "random" reshuffles each iteration), reconstructs that gate's
    (S_A, S_B) pair through the evaluation backend, regularizes S_B, and
    replaces the gate by the extremal solution of the local pencil.  The
    run stops once the relative change of the objective estimate between
    consecutive updates drops below ``eps_tol`` at the end of a sweep, or
    after ``max_iters`` iterations.  The convergence test is skipped
    until one full sweep has completed (the pre-sweep objective estimate
    is not defined).

    In exact mode ``record_objective`` re-evaluates the true objective
    after each update; with a sampling backend this is the statevector
    re-evaluation of the noisy run.  ``record_distance`` additionally
    logs how far the state is from a real vector (0 = real up to phase).
    """
    _check_sense(sense := sense or problem.sense)
    if eps_tol <= 0.0:
        raise ValidationError("eps_tol must be positive")
    if max_iters < 1:
        raise ValidationError("max_iters must be >= 1")
    if sweep_order not in ("ascending", "random"):
        raise ValidationError(f"unknown sweep order {sweep_order!r}")
    kind = kind or OptimizerKind.fqs()
    config = config or default_configuration()
    params = _check_params(layout, params0).copy()
    expect = sampled_backend(shots) if shots is not None else exact_backend()
    n = layout.n
    num_gates = layout.num_gates
    ops = layout.ops
    gate_positions = layout.gate_positions
    if initial is None:
        amps0 = np.zeros(1 << n, dtype=complex)
        amps0[0] = 1.0
    else:
        if initial.n != n:
            raise ValidationError("initial state does not match layout")
        amps0 = initial.amps.copy()
    order_rng = np.random.default_rng(rng)
    points = config.points

    records: list[UpdateRecord] = []
    evaluations = 0
    f_prev = 0.0
    f_curr = 0.0
    converged = False
    iteration = 0

    def partial_trace() -> OptimizeTrace:
        return OptimizeTrace(records=records, params=params.copy(), converged=False,
                             iterations=iteration, evaluations=evaluations, final_state=None)

    while iteration < max_iters and not converged:
        iteration += 1
        if sweep_order == "ascending":
            order = range(num_gates)
        else:
            order = order_rng.permutation(num_gates)
        prefix = amps0.copy()
        consumed = 0  # ops already folded into prefix (ascending order only)
        for d in order:
            pos = gate_positions[d]
            if sweep_order == "ascending":
                _apply_ops_raw(prefix, ops[consumed:pos], params, n)
                consumed = pos
            else:
                prefix = amps0.copy()
                _apply_ops_raw(prefix, ops[:pos], params, n)
            target = ops[pos][2]
            suffix = ops[pos + 1:]

            va = np.empty(10)
            vb = np.empty(10)
            for k in range(10):
                amps = prefix.copy()
                _apply_quaternion_raw(amps, points[k], target, n)
                _apply_ops_raw(amps, suffix, params, n)
                va[k] = expect(problem.a, amps)
                vb[k] = expect(problem.b, amps)
            evaluations += 10
            pair = SMatrixPair(config.reconstruct(va), config.reconstruct(vb))
            try:
                upd = restrict_update(pair, kind, params[d], sense, reg_eps)
            except NumericalError as exc:
                exc.trace = partial_trace()
                raise
            if not np.isfinite(upd.lam):
                err = NumericalError(f"non-finite gate objective at iteration {iteration}, gate {d}")
                err.trace = partial_trace()
                raise err
            params[d] = upd.q

            objective = None
            distance = None
            if record_objective or record_distance:
                amps = prefix.copy()
                _apply_quaternion_raw(amps, upd.q, target, n)
                _apply_ops_raw(amps, suffix, params, n)
                evaluations += 1
                if record_objective:
                    objective = problem.a.expect_amps(amps) / problem.b.expect_amps(amps)
                if record_distance:
                    distance = _distance_from_amps(amps)
            records.append(UpdateRecord(iteration, int(d), upd.lam, objective,
                                        distance, evaluations))
            f_prev, f_curr = f_curr, upd.lam
        if iteration >= 1:
            delta = abs(f_curr - f_prev)
            denom = abs(f_prev)
            rel = delta / denom if denom > 0.0 else (0.0 if delta == 0.0 else np.inf)
            if rel < eps_tol:
                converged = True

    final_amps = amps0.copy()
    _apply_ops_raw(final_amps, ops, params, n)
    return OptimizeTrace(records=records, params=params, converged=converged,
                         iterations=iteration, evaluations=evaluations,
                         final_state=StateVector._wrap(final_amps))
