"""Dense statevector simulation of quaternion-parameterized circuits.

Conventions
-----------
Basis ordering: qubit 0 is the *most significant bit* of the basis index,
so for an ``n``-qubit register the amplitude at index ``j`` assigns qubit
``t`` the bit ``n - 1 - t`` of ``j``.  A gate on qubit 0 acts on the top
wire of a circuit diagram.  The FEM front end relies on this convention
when mapping degrees of freedom onto basis indices.

Single-qubit gates are parameterized by unit quaternions
``q = (w, x, y, z)`` acting as the SU(2) element

    U(q) = w*I - i*(x*X + y*Y + z*Z),

i.e. a rotation by angle ``theta`` about the unit axis ``n`` with
``w = cos(theta/2)`` and ``(x, y, z) = sin(theta/2) * n``.  Entanglers are
fixed CZ gates; H and X are available for reference-state preparation.

All public operations return fresh :class:`StateVector` instances; the
amplitude buffers of returned states are marked read-only.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from .errors import ValidationError

UNIT_TOL = 1e-9

_HADAMARD = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex) / np.sqrt(2.0)
_PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)


def as_quaternion(q) -> np.ndarray:
    """Validate and return ``q`` as a unit length-4 float vector."""
    arr = np.asarray(q, dtype=float)
    if arr.shape != (4,):
        raise ValidationError(f"gate quaternion must have 4 components, got shape {arr.shape}")
    norm = float(np.sqrt(arr @ arr))
    if abs(norm - 1.0) > UNIT_TOL:
        raise ValidationError(f"gate quaternion must be unit length, |q| = {norm!r}")
    return arr


def quaternion_unitary(q) -> np.ndarray:
    """2x2 unitary ``w*I - i*(x*X + y*Y + z*Z)`` for a unit quaternion."""
    w, x, y, z = as_quaternion(q)
    return np.array(
        [[w - 1j * z, -1j * x - y], [-1j * x + y, w + 1j * z]], dtype=complex
    )


def axis_angle_quaternion(axis, angle: float) -> np.ndarray:
    """Quaternion for a rotation by ``angle`` about a (normalized) axis."""
    ax = np.asarray(axis, dtype=float)
    if ax.shape != (3,):
        raise ValidationError("axis must be a 3-vector")
    norm = float(np.linalg.norm(ax))
    if norm == 0.0:
        raise ValidationError("axis must be nonzero")
    ax = ax / norm
    half = 0.5 * float(angle)
    return np.concatenate(([np.cos(half)], np.sin(half) * ax))


def quaternion_axis_angle(q) -> tuple[float, np.ndarray]:
    """Decode a unit quaternion to ``(angle, axis)``.

    Only defined when the vector part is nonzero; the identity quaternion
    has no unique axis.
    """
    arr = as_quaternion(q)
    s = float(np.linalg.norm(arr[1:]))
    if s < 1e-15:
        raise ValidationError("identity-like quaternion has no rotation axis")
    angle = 2.0 * np.arctan2(s, arr[0])
    return angle, arr[1:] / s


def random_unit_quaternion(rng) -> np.ndarray:
    """Quaternion sampled uniformly from the 3-sphere."""
    while True:
        v = rng.standard_normal(4)
        norm = np.linalg.norm(v)
        if norm > 1e-12:
            return v / norm


class StateVector:
    """Complex amplitude vector of an ``n``-qubit register.

    Instances are immutable from the caller's perspective: the amplitude
    buffer is read-only and every operation returns a fresh state.
    """

    __slots__ = ("n", "amps")

    def __init__(self, amps, *, _trusted: bool = False):
        arr = np.asarray(amps, dtype=complex)
        if not _trusted:
            if arr.ndim != 1 or arr.size == 0 or arr.size & (arr.size - 1):
                raise ValidationError(
                    f"amplitude vector length must be a power of two, got {arr.shape}"
                )
            norm = float(np.linalg.norm(arr))
            if abs(norm - 1.0) > UNIT_TOL:
                raise ValidationError(f"state must be normalized, |amps| = {norm!r}")
            arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "amps", arr)
        object.__setattr__(self, "n", int(arr.size).bit_length() - 1)

    def __setattr__(self, name, value):  # pragma: no cover - guard
        raise AttributeError("StateVector is immutable")

    @classmethod
    def zero(cls, n: int) -> "StateVector":
        """|0...0> on ``n`` qubits."""
        if n < 1:
            raise ValidationError("qubit count must be >= 1")
        amps = np.zeros(1 << n, dtype=complex)
        amps[0] = 1.0
        return cls(amps, _trusted=True)

    @classmethod
    def basis(cls, n: int, index: int) -> "StateVector":
        """Computational basis state |index> on ``n`` qubits."""
        if n < 1:
            raise ValidationError("qubit count must be >= 1")
        if not 0 <= index < (1 << n):
            raise IndexError(f"basis index {index} out of range for {n} qubits")
        amps = np.zeros(1 << n, dtype=complex)
        amps[index] = 1.0
        return cls(amps, _trusted=True)

    @classmethod
    def _wrap(cls, amps: np.ndarray) -> "StateVector":
        # Internal: takes ownership of a freshly computed buffer.
        return cls(amps, _trusted=True)

    @property
    def dim(self) -> int:
        return self.amps.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def overlap(self, other: "StateVector") -> complex:
        """Inner product <self|other>."""
        if self.dim != other.dim:
            raise ValidationError("dimension mismatch in overlap")
        return complex(np.vdot(self.amps, other.amps))

    def __repr__(self):  # pragma: no cover
        return f"StateVector(n={self.n})"


# --- raw helpers shared with the optimizer hot path -------------------------

def _bit_position(n: int, qubit: int) -> int:
    return n - 1 - qubit


@lru_cache(maxsize=256)
def _cz_mask(n: int, a: int, b: int) -> np.ndarray:
    idx = np.arange(1 << n)
    pa, pb = _bit_position(n, a), _bit_position(n, b)
    mask = ((idx >> pa) & 1) & ((idx >> pb) & 1)
    return mask.astype(bool)


def _apply_matrix_raw(amps: np.ndarray, mat: np.ndarray, target: int, n: int) -> None:
    # In place; amps must be a writable scratch buffer.
    view = amps.reshape(1 << target, 2, -1)
    x0 = view[:, 0, :].copy()
    x1 = view[:, 1, :]
    view[:, 0, :] = mat[0, 0] * x0 + mat[0, 1] * x1
    view[:, 1, :] = mat[1, 0] * x0 + mat[1, 1] * x1


def _apply_quaternion_raw(amps: np.ndarray, q: np.ndarray, target: int, n: int) -> None:
    w, x, y, z = q
    nrm = w * w + x * x + y * y + z * z
    if abs(nrm - 1.0) > 2.0 * UNIT_TOL:
        raise ValidationError(f"gate quaternion must be unit length, |q|^2 = {nrm!r}")
    mat = np.array([[w - 1j * z, -1j * x - y], [-1j * x + y, w + 1j * z]])
    _apply_matrix_raw(amps, mat, target, n)


def _apply_cz_raw(amps: np.ndarray, a: int, b: int, n: int) -> None:
    amps[_cz_mask(n, a, b)] *= -1.0


def _apply_ops_raw(amps: np.ndarray, ops, params: np.ndarray, n: int) -> None:
    for op in ops:
        if op[0] == "g":
            _apply_quaternion_raw(amps, params[op[1]], op[2], n)
        else:
            _apply_cz_raw(amps, op[1], op[2], n)


def _check_target(n: int, target: int) -> None:
    if not 0 <= target < n:
        raise IndexError(f"target qubit {target} out of range for {n} qubits")


# --- public gate operations --------------------------------------------------

def apply_single_qubit(state: StateVector, q, target: int) -> StateVector:
    """Apply the quaternion gate ``U(q)`` to ``target``; returns a new state."""
    _check_target(state.n, target)
    quat = as_quaternion(q)
    amps = state.amps.copy()
    _apply_quaternion_raw(amps, quat, target, state.n)
    return StateVector._wrap(amps)


def apply_cz(state: StateVector, control: int, target: int) -> StateVector:
    """Controlled-Z between two distinct qubits (symmetric in its arguments)."""
    _check_target(state.n, control)
    _check_target(state.n, target)
    if control == target:
        raise IndexError("CZ requires two distinct qubits")
    amps = state.amps.copy()
    _apply_cz_raw(amps, control, target, state.n)
    return StateVector._wrap(amps)


def apply_x(state: StateVector, target: int) -> StateVector:
    _check_target(state.n, target)
    amps = state.amps.copy()
    _apply_matrix_raw(amps, _PAULI_X, target, state.n)
    return StateVector._wrap(amps)


def apply_hadamard(state: StateVector, target: int) -> StateVector:
    _check_target(state.n, target)
    amps = state.amps.copy()
    _apply_matrix_raw(amps, _HADAMARD, target, state.n)
    return StateVector._wrap(amps)


def prepare_step_state(n: int) -> StateVector:
    """Uniform-magnitude state with amplitudes ``(-1)**msb(j) / 2**(n/2)``.

    Equals X on qubit 0 of |0...0> followed by H on every qubit, i.e. the
    sign flips exactly when the most significant bit of the basis index
    is set.
    """
    if n < 1:
        raise ValidationError("qubit count must be >= 1")
    j = np.arange(1 << n)
    signs = 1.0 - 2.0 * ((j >> (n - 1)) & 1)
    amps = signs.astype(complex) / np.sqrt(float(1 << n))
    return StateVector._wrap(amps)


# --- circuit layouts ----------------------------------------------------------

@dataclass(frozen=True)
class CircuitLayout:
    """Ordered gate/entangler skeleton of an ansatz.

    ``ops`` holds tuples ``("g", d, target)`` for the d-th parameterized
    gate (0-based, in order of appearance) and ``("cz", a, b)`` for
    entanglers.  Construction of a given (kind, n, layers) is
    deterministic.
    """

    n: int
    kind: str
    layers: int
    ops: tuple

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError("layout needs at least one qubit")
        d_expect = 0
        for op in self.ops:
            if op[0] == "g":
                _, d, t = op
                if d != d_expect:
                    raise ValidationError("gate indices must be consecutive in op order")
                d_expect += 1
                _check_target(self.n, t)
            elif op[0] == "cz":
                _, a, b = op
                _check_target(self.n, a)
                _check_target(self.n, b)
                if a == b:
                    raise ValidationError("entangler requires two distinct qubits")
            else:
                raise ValidationError(f"unknown op tag {op[0]!r}")
        if d_expect == 0:
            raise ValidationError("layout must contain at least one gate")

    @cached_property
    def num_gates(self) -> int:
        return sum(1 for op in self.ops if op[0] == "g")

    @cached_property
    def gate_positions(self) -> tuple:
        """Position in ``ops`` of each gate index."""
        return tuple(i for i, op in enumerate(self.ops) if op[0] == "g")

    @cached_property
    def slots(self) -> tuple:
        """(gate index, target qubit) in circuit order."""
        return tuple((op[1], op[2]) for op in self.ops if op[0] == "g")

    @cached_property
    def entanglers(self) -> tuple:
        """(position in ops, control, target) of each CZ."""
        return tuple((i, op[1], op[2]) for i, op in enumerate(self.ops) if op[0] == "cz")


def alternating_layered(n: int, layers: int) -> CircuitLayout:
    """Alternating layered ansatz: an initial column of gates, then per
    layer two brickwork half-steps of CZs, each followed by gates on the
    qubits the CZs touched."""
    if layers < 1:
        raise ValidationError("layers must be >= 1")
    ops = []
    d = 0
    for t in range(n):
        ops.append(("g", d, t))
        d += 1
    for _ in range(layers):
        for parity in (0, 1):
            pairs = [(t, t + 1) for t in range(parity, n - 1, 2)]
            if not pairs:
                continue
            for a, b in pairs:
                ops.append(("cz", a, b))
            for t in sorted({q for p in pairs for q in p}):
                ops.append(("g", d, t))
                d += 1
    return CircuitLayout(n=n, kind="alternating", layers=layers, ops=tuple(ops))


def cascading_block(n: int, layers: int) -> CircuitLayout:
    """Cascading-block ansatz: an initial column, then per layer a chain of
    CZ+gate steps cascading down the register and wrapping back to qubit 0,
    closed by a final column of gates on qubits 1..n-1."""
    if n < 2:
        raise ValidationError("cascading-block layout needs >= 2 qubits")
    if layers < 1:
        raise ValidationError("layers must be >= 1")
    ops = []
    d = 0
    for t in range(n):
        ops.append(("g", d, t))
        d += 1
    for _ in range(layers):
        for t in range(n - 1):
            ops.append(("cz", t, t + 1))
            ops.append(("g", d, t + 1))
            d += 1
        ops.append(("cz", n - 1, 0))
        ops.append(("g", d, 0))
        d += 1
    for t in range(1, n):
        ops.append(("g", d, t))
        d += 1
    return CircuitLayout(n=n, kind="cascading", layers=layers, ops=tuple(ops))


def custom_layout(n: int, ops, kind: str = "custom", layers: int = 1) -> CircuitLayout:
    """Layout from ("g", target) / ("cz", a, b) tuples; gate indices are
    assigned in order of appearance."""
    full = []
    d = 0
    for op in ops:
        if op[0] == "g":
            full.append(("g", d, op[1]))
            d += 1
        else:
            full.append(op)
    return CircuitLayout(n=n, kind=kind, layers=layers, ops=tuple(full))


def single_gate_layout(n: int = 1, target: int = 0) -> CircuitLayout:
    return custom_layout(n, [("g", target)], kind="single")


def layout_by_name(kind: str, n: int, layers: int) -> CircuitLayout:
    if kind in ("alternating", "alternating-layered"):
        return alternating_layered(n, layers)
    if kind in ("cascading", "cascading-block"):
        return cascading_block(n, layers)
    raise ValidationError(f"unknown ansatz kind {kind!r}")


# --- circuit execution --------------------------------------------------------

def _check_params(layout: CircuitLayout, params) -> np.ndarray:
    arr = np.asarray(params, dtype=float)
    if arr.shape != (layout.num_gates, 4):
        raise ValidationError(
            f"expected {layout.num_gates} gate quaternions, got array of shape {arr.shape}"
        )
    return arr


def run_circuit(layout: CircuitLayout, params, initial: StateVector | None = None) -> StateVector:
    """Apply the layout's gates and entanglers in order to ``initial``
    (default |0...0>)."""
    arr = _check_params(layout, params)
    if initial is None:
        amps = np.zeros(1 << layout.n, dtype=complex)
        amps[0] = 1.0
    else:
        if initial.n != layout.n:
            raise ValidationError("initial state qubit count does not match layout")
        amps = initial.amps.copy()
    _apply_ops_raw(amps, layout.ops, arr, layout.n)
    return StateVector._wrap(amps)


def expectation_with_gate(layout: CircuitLayout, params, d: int, q, op,
                          initial: StateVector | None = None) -> float:
    """<psi|op|psi> with gate ``d`` of the circuit replaced by ``q``.

    ``op`` is any observable exposing ``expect(state) -> float``.
    """
    arr = _check_params(layout, params)
    if not 0 <= d < layout.num_gates:
        raise IndexError(f"gate index {d} out of range for {layout.num_gates} gates")
    arr = arr.copy()
    arr[d] = as_quaternion(q)
    return op.expect(run_circuit(layout, arr, initial))
