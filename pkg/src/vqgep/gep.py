"""Generalized eigenvalue problems: construction, reduction and a dense
classical oracle.

A problem is a Hermitian pencil (A, B) with positive-definite B together
with the optimization sense; its extremal eigenvalues coincide with the
extrema of the generalized Rayleigh quotient (w^H A w)/(w^H B w).  A
positive-definite linear system K u = f reduces to the pencil
(f f^H, K): that pencil has exactly one nonzero eigenvalue, and its
eigenpair reproduces the solution as u = lam * v / (f^H v).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DegenerateOverlapError, NumericalError, ValidationError
from .operators import HermitianOperator, Rank1Projector
from .statevector import StateVector

_PD_CHECK_LIMIT = 1 << 10


def _as_dense(op) -> np.ndarray:
    if isinstance(op, np.ndarray):
        return op
    return np.asarray(op.to_dense())


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _min_eigenvalue(mat: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(mat)[0])


class GEProblem:
    """Hermitian pencil (A, B), B positive definite, with a target sense."""

    __slots__ = ("a", "b", "sense")

    def __init__(self, a, b, sense: str):
        if sense not in ("min", "max"):
            raise ValidationError(f"sense must be 'min' or 'max', got {sense!r}")
        if a.dim != b.dim:
            raise ValidationError(f"pencil dimensions differ: {a.dim} vs {b.dim}")
        if not _is_power_of_two(a.dim):
            raise ValidationError(
                f"pencil dimension {a.dim} is not a power of two; enlarge it first"
            )
        if b.dim <= _PD_CHECK_LIMIT:
            bmin = _min_eigenvalue(_as_dense(b))
            if bmin <= 0.0:
                raise ValidationError(
                    f"B must be positive definite (min eigenvalue {bmin:.3g})"
                )
        self.a = a
        self.b = b
        self.sense = sense

    @property
    def dim(self) -> int:
        return self.a.dim

    @property
    def n_qubits(self) -> int:
        return int(self.dim).bit_length() - 1

    def objective(self, state: StateVector) -> float:
        """<A>/<B> on a normalized state."""
        return self.a.expect(state) / self.b.expect(state)

    def __repr__(self):  # pragma: no cover
        return f"GEProblem(dim={self.dim}, sense={self.sense!r})"


@dataclass(frozen=True)
class SleProblem:
    """Positive-definite linear system K u = f with a normalized
    right-hand side."""

    k: HermitianOperator
    f: StateVector

    def __post_init__(self):
        if self.k.dim != self.f.dim:
            raise ValidationError("system matrix and right-hand side dimensions differ")
        if abs(self.f.norm() - 1.0) > 1e-9:
            raise ValidationError("right-hand side must be normalized")
        if self.k.dim <= _PD_CHECK_LIMIT:
            kmin = _min_eigenvalue(_as_dense(self.k))
            if kmin <= 0.0:
                raise ValidationError(
                    f"system matrix must be positive definite (min eigenvalue {kmin:.3g})"
                )


def rayleigh_quotient(a, b, w) -> float:
    """(w^H A w) / (w^H B w) for a nonzero vector w."""
    vec = np.asarray(w, dtype=complex)
    if vec.ndim != 1 or not np.any(vec):
        raise ValidationError("rayleigh quotient requires a nonzero vector")
    da, db = _as_dense(a), _as_dense(b)
    if da.shape[0] != vec.size or db.shape[0] != vec.size:
        raise ValidationError("dimension mismatch")
    num = np.vdot(vec, da @ vec)
    den = np.vdot(vec, db @ vec)
    return float(num.real / den.real)


def _gershgorin_min(mat: np.ndarray) -> float:
    centers = np.diagonal(mat).real
    radii = np.abs(mat).sum(axis=1) - np.abs(np.diagonal(mat))
    return float((centers - radii).min())


def _default_pad_eps(a, b) -> float:
    """Magnitude such that 1/eps strictly dominates the pencil spectrum.

    Uses |lambda| <= inf-norm(A) / lambda_min(B); the B bound is the
    Gershgorin lower bound when positive, else the exact minimum.
    """
    da, db = _as_dense(a), _as_dense(b)
    a_norm = float(np.abs(da).sum(axis=1).max())
    b_low = _gershgorin_min(db)
    if b_low <= 0.0:
        b_low = _min_eigenvalue(db)
    if b_low <= 0.0:
        raise ValidationError("B must be positive definite to pick a padding eps")
    lam_upper = max(a_norm / b_low, np.finfo(float).tiny)
    return 0.5 / lam_upper


_PAD_TARGETS = ("min<0", "max>0", "min>0", "max<0")


def pad_to_power_of_two(a, b, target: str, pad_eps: float | None = None):
    """Enlarge the pencil to the next power-of-two dimension without
    moving the targeted extremal eigenvalue.

    For a targeted ``min<0`` or ``max>0`` eigenvalue, A gets a zero block
    and B an identity block, adding only eigenvalue 0.  For ``min>0``
    (``max<0``), A gets an identity block and B an ``eps I`` block with
    ``eps > 0`` (``eps < 0``) small enough that the artifact eigenvalue
    ``1/eps`` lies beyond the spectrum.
    """
    if target not in _PAD_TARGETS:
        raise ValidationError(f"target must be one of {_PAD_TARGETS}, got {target!r}")
    dim = a.dim if hasattr(a, "dim") else np.asarray(a).shape[0]
    if dim != (b.dim if hasattr(b, "dim") else np.asarray(b).shape[0]):
        raise ValidationError("pencil dimensions differ")
    if _is_power_of_two(dim):
        return a, b
    full = 1 << int(np.ceil(np.log2(dim)))
    extra = full - dim
    zero_pad = target in ("min<0", "max>0")

    da = _as_dense(a)
    a_full = np.zeros((full, full), dtype=complex)
    a_full[:dim, :dim] = da
    if not zero_pad:
        a_full[dim:, dim:] = np.eye(extra)
    a_padded = HermitianOperator.from_dense(a_full)

    db = _as_dense(b)
    b_full = np.zeros((full, full), dtype=complex)
    b_full[:dim, :dim] = db
    if zero_pad:
        b_full[dim:, dim:] = np.eye(extra)
    else:
        if pad_eps is None:
            eps = _default_pad_eps(a, b)
            if target == "max<0":
                eps = -eps
        else:
            eps = float(pad_eps)
            if target == "min>0" and eps <= 0.0:
                raise ValidationError("target 'min>0' requires pad_eps > 0")
            if target == "max<0" and eps >= 0.0:
                raise ValidationError("target 'max<0' requires pad_eps < 0")
        b_full[dim:, dim:] = eps * np.eye(extra)
    b_padded = HermitianOperator.from_dense(b_full)
    return a_padded, b_padded


def sle_to_gep(sle: SleProblem) -> GEProblem:
    """Reduce K u = f to the pencil (f f^H, K), maximized: the only
    nonzero eigenvalue carries the solution."""
    return GEProblem(Rank1Projector(sle.f), sle.k, "max")


def recover_sle_solution(sle: SleProblem, lambda_hat: float, v_hat) -> np.ndarray:
    """Solution u = lambda * v / (f^H v) from the nonzero eigenpair.

    The overlap f^H v is nonzero exactly when (lambda, v) is the nonzero
    eigenpair; a vanishing overlap means some other eigenvector was
    passed in.
    """
    if lambda_hat == 0.0:
        raise ValidationError("the nonzero eigenvalue is required to recover a solution")
    vec = v_hat.amps if isinstance(v_hat, StateVector) else np.asarray(v_hat, dtype=complex)
    if vec.size != sle.k.dim:
        raise ValidationError("eigenvector dimension does not match the system")
    overlap = complex(np.vdot(sle.f.amps, vec))
    if abs(overlap) <= 1e-12:
        raise DegenerateOverlapError(
            f"overlap with the right-hand side is {abs(overlap):.3g}; "
            "the vector is not the nonzero-eigenvalue eigenvector"
        )
    return lambda_hat * vec / overlap


def classical_reference_solve(a, b):
    """All eigenpairs of the pencil, eigenvalues ascending, eigenvectors
    B-orthonormal (columns).  Dense; intended as a verification oracle."""
    da, db = _as_dense(a), _as_dense(b)
    if da.shape != db.shape:
        raise ValidationError("pencil dimensions differ")
    if da.shape[0] > _PD_CHECK_LIMIT:
        raise ValidationError(f"dense oracle limited to dimension {_PD_CHECK_LIMIT}")
    try:
        w, v = scipy.linalg.eigh(da, db)
    except scipy.linalg.LinAlgError as exc:
        raise ValidationError("B must be positive definite") from exc
    if not np.all(np.isfinite(w)):
        raise NumericalError("classical eigensolve produced non-finite eigenvalues")
    return w, v
