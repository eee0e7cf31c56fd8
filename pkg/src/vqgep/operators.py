"""Hermitian observables with exact and finite-shot expectation estimation.

Operators are stored as a dictionary of matrix diagonals keyed by offset
(``o >= 0`` holds entries ``A[t, t+o]``, ``o < 0`` holds ``A[t+|o|, t]``),
which keeps band structure explicit for measurement grouping and text
export; a dense copy is cached for fast expectation values.

Finite-shot estimation groups the off-diagonal entries by the XOR offset
``l = i ^ j`` of their index pair.  For each offset the register is
rotated so that the pairwise interference terms become computational
basis probabilities, the rotated distribution is sampled, and the
frequencies are recombined with entry-derived coefficients:

* for the pair ``(i, j = i ^ l)`` with ``i < j`` the "real part" rotation
  maps ``(|i>, |j>)`` to ``((|i>+|j>)/sqrt2, (|i>-|j>)/sqrt2)``, so the
  outcome probabilities differ by ``2*Re(conj(psi_i)*psi_j)``;
* the "imaginary part" rotation uses ``(|i>+i|j>)/sqrt2`` instead and
  isolates ``2*Im(conj(psi_i)*psi_j)``.

On hardware each rotation costs at most one Hadamard, one phase gate and
``n-1`` CNOTs; here it is applied as a direct matrix action on a copy of
the state, which has identical outcome statistics.  Groups whose
coefficients are identically zero (e.g. imaginary parts of real
symmetric matrices) are omitted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ValidationError
from .statevector import StateVector

HERMITIAN_TOL = 1e-12


def _real_part(value: complex, scale: float) -> float:
    v = complex(value)
    if abs(v.imag) > 1e-10 * max(1.0, scale):
        raise NumericalError(f"expectation has non-negligible imaginary part {v.imag!r}")
    return v.real


class HermitianOperator:
    """Hermitian matrix on a 2**n dimensional register."""

    __slots__ = ("dim", "_diagonals", "_dense", "_xbm")

    def __init__(self, dim: int, diagonals: dict):
        self.dim = int(dim)
        self._diagonals = diagonals
        self._dense = None
        self._xbm = None

    # -- construction ---------------------------------------------------

    @classmethod
    def from_dense(cls, mat) -> "HermitianOperator":
        arr = np.asarray(mat, dtype=complex)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValidationError(f"operator must be a square matrix, got {arr.shape}")
        scale = max(1.0, float(np.abs(arr).max(initial=0.0)))
        if np.abs(arr - arr.conj().T).max(initial=0.0) > HERMITIAN_TOL * scale:
            raise ValidationError("matrix is not Hermitian")
        dim = arr.shape[0]
        diagonals = {}
        for o in range(-(dim - 1), dim):
            diag = np.diagonal(arr, o).astype(complex)
            if np.any(diag):
                diagonals[o] = diag.copy()
        op = cls(dim, diagonals)
        dense = arr.copy()
        dense.flags.writeable = False
        op._dense = dense
        return op

    @classmethod
    def from_diagonals(cls, dim: int, diagonals: dict) -> "HermitianOperator":
        """Build from ``{offset: entries}``; missing mirror offsets are
        filled by conjugation, present ones are checked for consistency."""
        if dim < 1:
            raise ValidationError("dimension must be >= 1")
        store: dict[int, np.ndarray] = {}
        for o, values in diagonals.items():
            o = int(o)
            vec = np.asarray(values, dtype=complex)
            if abs(o) >= dim:
                raise ValidationError(f"offset {o} out of range for dim {dim}")
            if vec.shape != (dim - abs(o),):
                raise ValidationError(
                    f"offset {o} expects {dim - abs(o)} entries, got {vec.shape}"
                )
            store[o] = vec.copy()
        for o in list(store):
            mirror = store.get(-o)
            if mirror is None:
                store[-o] = store[o].conj()
            else:
                scale = max(1.0, float(np.abs(store[o]).max(initial=0.0)))
                if np.abs(mirror - store[o].conj()).max(initial=0.0) > HERMITIAN_TOL * scale:
                    raise ValidationError(f"offsets {o} and {-o} are not conjugate mirrors")
        if 0 in store:
            diag0 = store[0]
            if np.abs(diag0.imag).max(initial=0.0) > HERMITIAN_TOL * max(
                1.0, float(np.abs(diag0).max(initial=0.0))
            ):
                raise ValidationError("main diagonal must be real")
            store[0] = diag0.real.astype(complex)
        store = {o: v for o, v in store.items() if np.any(v)}
        return cls(dim, store)

    @classmethod
    def identity(cls, dim: int) -> "HermitianOperator":
        return cls.from_diagonals(dim, {0: np.ones(dim)})

    # -- inspection -------------------------------------------------------

    @property
    def offsets(self) -> tuple:
        """Sorted diagonal offsets carrying nonzero entries."""
        return tuple(sorted(self._diagonals))

    @property
    def bandwidth(self) -> int:
        return max((abs(o) for o in self._diagonals), default=0)

    def entry(self, i: int, j: int) -> complex:
        if not (0 <= i < self.dim and 0 <= j < self.dim):
            raise IndexError("entry index out of range")
        o = j - i
        diag = self._diagonals.get(o)
        if diag is None:
            return 0.0
        return complex(diag[min(i, j)])

    def to_dense(self) -> np.ndarray:
        if self._dense is None:
            mat = np.zeros((self.dim, self.dim), dtype=complex)
            for o, vec in self._diagonals.items():
                idx = np.arange(self.dim - abs(o))
                if o >= 0:
                    mat[idx, idx + o] = vec
                else:
                    mat[idx - o, idx] = vec
            mat.flags.writeable = False
            self._dense = mat
        return self._dense

    # -- expectations -----------------------------------------------------

    def expect_amps(self, amps: np.ndarray) -> float:
        """<psi|A|psi> for a raw amplitude buffer (no copies)."""
        if amps.size != self.dim:
            raise ValidationError("state dimension does not match operator")
        val = np.vdot(amps, self.to_dense() @ amps)
        return _real_part(val, float(np.abs(val)))

    def expect(self, state: StateVector) -> float:
        return self.expect_amps(state.amps)

    def xbm(self) -> "XbmGrouping":
        if self._xbm is None:
            self._xbm = xbm_groups(self)
        return self._xbm

    def __repr__(self):  # pragma: no cover
        return f"HermitianOperator(dim={self.dim}, bandwidth={self.bandwidth})"


class Rank1Projector:
    """Projector |f><f| onto a normalized reference state.

    Its expectation is the fidelity |<f|psi>|**2, so no matrix is ever
    materialized for expectation estimation; finite-shot estimates use
    the inversion test (see :func:`fidelity_sampled`).
    """

    __slots__ = ("f",)

    def __init__(self, f: StateVector):
        if not isinstance(f, StateVector):
            f = StateVector(f)
        self.f = f

    @property
    def dim(self) -> int:
        return self.f.dim

    def expect_amps(self, amps: np.ndarray) -> float:
        if amps.size != self.dim:
            raise ValidationError("state dimension does not match projector")
        return float(abs(np.vdot(self.f.amps, amps)) ** 2)

    def expect(self, state: StateVector) -> float:
        return self.expect_amps(state.amps)

    def to_dense(self) -> np.ndarray:
        return np.outer(self.f.amps, self.f.amps.conj())

    def __repr__(self):  # pragma: no cover
        return f"Rank1Projector(dim={self.dim})"


def expectation_exact(op, state: StateVector) -> float:
    """<psi|op|psi>; tiny imaginary residue is discarded."""
    return op.expect(state)


def fidelity_exact(proj: Rank1Projector, state: StateVector) -> float:
    """|<f|psi>|**2."""
    return proj.expect(state)


# --- measurement grouping ----------------------------------------------------

@dataclass(frozen=True)
class XbmGroup:
    """One rotated-basis measurement: XOR offset, Re/Im part, and the
    per-outcome recombination coefficients."""

    offset: int
    part: str  # "re" | "im"
    coeffs: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class XbmGrouping:
    """Measurement plan whose recombined probabilities reproduce <A>."""

    dim: int
    diag_coeffs: np.ndarray = field(repr=False)
    groups: tuple = ()

    @property
    def num_circuits(self) -> int:
        return 1 + len(self.groups)

    @property
    def offsets(self) -> tuple:
        return tuple(sorted({g.offset for g in self.groups}))

    def rotated_amps(self, amps: np.ndarray, group: XbmGroup) -> np.ndarray:
        return _rotate_for_group(amps, group.offset, group.part)

    def exact_value(self, amps: np.ndarray) -> float:
        """Recombine exact outcome probabilities (infinite-shot limit)."""
        total = float(self.diag_coeffs @ np.abs(amps) ** 2)
        for g in self.groups:
            chi = _rotate_for_group(amps, g.offset, g.part)
            total += float(g.coeffs @ np.abs(chi) ** 2)
        return total


def _rotate_for_group(amps: np.ndarray, offset: int, part: str) -> np.ndarray:
    hb = 1 << (offset.bit_length() - 1)
    idx = np.arange(amps.size)
    i0 = idx[(idx & hb) == 0]
    i1 = i0 ^ offset
    chi = np.empty_like(amps)
    lo, hi = amps[i0], amps[i1]
    inv_sqrt2 = 1.0 / np.sqrt(2.0)
    if part == "re":
        chi[i0] = (lo + hi) * inv_sqrt2
        chi[i1] = (lo - hi) * inv_sqrt2
    else:
        chi[i0] = (lo - 1j * hi) * inv_sqrt2
        chi[i1] = (lo + 1j * hi) * inv_sqrt2
    return chi


def xbm_groups(op: HermitianOperator) -> XbmGrouping:
    """Group the entries of ``op`` into simultaneously measurable circuits.

    The offsets are exactly ``{i ^ j : op[i, j] != 0} \\ {0}``; for a
    band matrix of bandwidth k the group count is O(n k).
    """
    dim = op.dim
    diag = np.zeros(dim)
    d0 = op._diagonals.get(0)
    if d0 is not None:
        diag[: dim] = d0.real
    re_tabs: dict[int, np.ndarray] = {}
    im_tabs: dict[int, np.ndarray] = {}
    for o, vec in op._diagonals.items():
        if o <= 0:
            continue  # mirror offsets carry the conjugate entries
        rows = np.flatnonzero(vec)
        for t in rows:
            i, j = int(t), int(t) + o
            l = i ^ j
            e = complex(vec[t])
            if e.real != 0.0:
                tab = re_tabs.setdefault(l, np.zeros(dim))
                tab[i] = e.real
                tab[j] = -e.real
            if e.imag != 0.0:
                tab = im_tabs.setdefault(l, np.zeros(dim))
                tab[i] = -e.imag
                tab[j] = e.imag
    groups = []
    for l in sorted(set(re_tabs) | set(im_tabs)):
        if l in re_tabs:
            groups.append(XbmGroup(l, "re", re_tabs[l]))
        if l in im_tabs:
            groups.append(XbmGroup(l, "im", im_tabs[l]))
    return XbmGrouping(dim=dim, diag_coeffs=diag, groups=tuple(groups))


# --- finite-shot estimation ----------------------------------------------------

class ShotPlan:
    """Number of shots per individual circuit plus the sampling RNG."""

    __slots__ = ("shots", "seed", "rng")

    def __init__(self, shots: int, seed=None):
        shots = int(shots)
        if shots < 1:
            raise ValidationError("shots per circuit must be >= 1")
        self.shots = shots
        self.seed = seed
        self.rng = np.random.default_rng(seed)

    def __repr__(self):  # pragma: no cover
        return f"ShotPlan(shots={self.shots}, seed={self.seed!r})"


def _sample_probs(probs: np.ndarray, plan: ShotPlan) -> np.ndarray:
    p = np.clip(probs, 0.0, None)
    total = p.sum()
    if total <= 0.0:
        raise NumericalError("outcome distribution has zero mass")
    counts = plan.rng.multinomial(plan.shots, p / total)
    return counts / plan.shots


def expectation_sampled_amps(op: HermitianOperator, amps: np.ndarray, plan: ShotPlan) -> float:
    grouping = op.xbm()
    freqs = _sample_probs(np.abs(amps) ** 2, plan)
    total = float(grouping.diag_coeffs @ freqs)
    for g in grouping.groups:
        chi = _rotate_for_group(amps, g.offset, g.part)
        freqs = _sample_probs(np.abs(chi) ** 2, plan)
        total += float(g.coeffs @ freqs)
    return total


def expectation_sampled(op: HermitianOperator, state: StateVector, plan: ShotPlan) -> float:
    """Unbiased finite-shot estimate of <psi|op|psi>: every measurement
    group is sampled ``plan.shots`` times and recombined."""
    if state.dim != op.dim:
        raise ValidationError("state dimension does not match operator")
    return expectation_sampled_amps(op, state.amps, plan)


def fidelity_sampled_amps(f_amps: np.ndarray, amps: np.ndarray, plan: ShotPlan) -> float:
    p = float(abs(np.vdot(f_amps, amps)) ** 2)
    p = min(max(p, 0.0), 1.0)
    return plan.rng.binomial(plan.shots, p) / plan.shots


def fidelity_sampled(f: StateVector, state: StateVector, plan: ShotPlan) -> float:
    """Inversion-test estimate of |<f|psi>|**2.

    Undoing the preparation of |f> and measuring in the computational
    basis yields the all-zeros outcome with probability exactly
    |<f|psi>|**2, so the estimator is the observed all-zeros frequency
    out of ``plan.shots`` samples.
    """
    if f.dim != state.dim:
        raise ValidationError("reference dimension does not match state")
    return fidelity_sampled_amps(f.amps, state.amps, plan)


# --- plain-text banded export ---------------------------------------------------

def save_operator(op: HermitianOperator, path) -> None:
    """Write the operator in the banded text format.

    Header: ``dim o1 o2 ...``; then one line per offset with ``dim``
    entries ``re,im`` (positions running off the matrix are zero).
    """
    offsets = op.offsets
    lines = [" ".join([str(op.dim)] + [str(o) for o in offsets])]
    for o in offsets:
        vec = op._diagonals[o]
        full = np.zeros(op.dim, dtype=complex)
        full[: vec.size] = vec
        lines.append(" ".join(f"{v.real!r},{v.imag!r}" for v in full))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_operator(path) -> HermitianOperator:
    """Read an operator written by :func:`save_operator`; validates shape
    and Hermiticity."""
    with open(path) as fh:
        raw = [line.strip() for line in fh]
    lines = [line for line in raw if line]
    if not lines:
        raise ValidationError(f"{path}: empty operator file")
    head = lines[0].split()
    try:
        dim = int(head[0])
        offsets = [int(tok) for tok in head[1:]]
    except ValueError as exc:
        raise ValidationError(f"{path}: malformed header line: {lines[0]!r}") from exc
    if dim < 1:
        raise ValidationError(f"{path}: dimension must be >= 1")
    if len(lines) - 1 != len(offsets):
        raise ValidationError(
            f"{path}: header lists {len(offsets)} offsets but file has {len(lines) - 1} data lines"
        )
    diagonals = {}
    for o, line in zip(offsets, lines[1:], strict=True):
        toks = line.split()
        if len(toks) != dim:
            raise ValidationError(f"{path}: offset {o} line has {len(toks)} entries, expected {dim}")
        try:
            vals = np.array(
                [complex(float(t.split(",")[0]), float(t.split(",")[1])) for t in toks]
            )
        except (ValueError, IndexError) as exc:
            raise ValidationError(f"{path}: offset {o} line has malformed entries") from exc
        tail = vals[dim - abs(o):]
        if tail.size and np.any(tail):
            raise ValidationError(f"{path}: offset {o} has nonzero padding entries")
        diagonals[o] = vals[: dim - abs(o)]
    try:
        return HermitianOperator.from_diagonals(dim, diagonals)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from exc
