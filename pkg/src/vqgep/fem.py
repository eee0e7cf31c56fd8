"""Finite element assembly on uniform meshes.

Covers the 1D second-difference stiffness matrix with pointwise load
sampling, and 2D isotropic elasticity (stiffness + consistent mass) on a
regular quadrilateral grid with bilinear elements and Gauss quadrature.
Units are SI throughout; pencil eigenvalues of (K, M) are squared
angular frequencies (1/s^2).

Grid node numbering runs bottom-left to top-right with the y index
fastest: node(ix, iy) = Ny*ix + iy.  Degree-of-freedom numbering
interleaves components, dof = 2*node + axis.  After Dirichlet
elimination the retained DOFs, in this order, map one-to-one onto
computational basis indices (see :func:`dof_to_basis_map`), matching the
most-significant-bit-first convention of the statevector module.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import gep
from .errors import ValidationError
from .operators import HermitianOperator


@dataclass(frozen=True)
class Mesh1D:
    """`nodes` interior nodes of a uniform 1D mesh with element length `h`
    (the domain boundary nodes carry homogeneous Dirichlet data and are
    excluded)."""

    nodes: int
    h: float = 1.0

    def __post_init__(self):
        if self.nodes < 1:
            raise ValidationError("mesh needs at least one node")
        if self.h <= 0.0:
            raise ValidationError("element length must be positive")


@dataclass(frozen=True)
class Mesh2DGrid:
    """Regular grid of nx-by-ny nodes on a width-by-height rectangle."""

    nx: int
    ny: int
    width: float
    height: float

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValidationError("grid needs at least 2 nodes per axis")
        if self.width <= 0.0 or self.height <= 0.0:
            raise ValidationError("domain extents must be positive")

    @property
    def hx(self) -> float:
        return self.width / (self.nx - 1)

    @property
    def hy(self) -> float:
        return self.height / (self.ny - 1)

    @property
    def n_nodes(self) -> int:
        return self.nx * self.ny

    def node(self, ix: int, iy: int) -> int:
        if not (0 <= ix < self.nx and 0 <= iy < self.ny):
            raise IndexError(f"node ({ix}, {iy}) outside the grid")
        return self.ny * ix + iy


@dataclass(frozen=True)
class Material:
    """Isotropic linear-elastic material (Pa, dimensionless, kg/m^3)."""

    youngs: float
    poisson: float
    density: float

    def __post_init__(self):
        if self.youngs <= 0.0:
            raise ValidationError("Young's modulus must be positive")
        if not -1.0 < self.poisson < 0.5:
            raise ValidationError("Poisson ratio must lie in (-1, 0.5)")
        if self.density <= 0.0:
            raise ValidationError("density must be positive")


@dataclass(frozen=True)
class FemSystem:
    """Assembled matrices plus the bookkeeping to reach qubit space.

    ``dof_map`` lists the original assembly DOF index of each retained row
    (identity before elimination).  ``dofs_per_node`` is 1 for scalar
    problems, 2 for plane elasticity.
    """

    stiffness: HermitianOperator
    mass: HermitianOperator | None
    load: np.ndarray | None
    dof_map: np.ndarray
    dofs_per_node: int
    n_nodes: int

    @property
    def dim(self) -> int:
        return self.stiffness.dim


def assemble_poisson_1d(mesh: Mesh1D) -> FemSystem:
    """Second-difference stiffness: 2/h on the diagonal, -1/h off it."""
    n = mesh.nodes
    diagonals = {0: np.full(n, 2.0 / mesh.h)}
    if n > 1:
        diagonals[1] = np.full(n - 1, -1.0 / mesh.h)
    k = HermitianOperator.from_diagonals(n, diagonals)
    return FemSystem(stiffness=k, mass=None, load=None,
                     dof_map=np.arange(n), dofs_per_node=1, n_nodes=n)


def assemble_poisson_load(mesh: Mesh1D, f_samples) -> np.ndarray:
    """Pointwise load samples f(x_j), normalized to unit length."""
    vec = np.asarray(f_samples, dtype=complex)
    if vec.shape != (mesh.nodes,):
        raise ValidationError(f"expected {mesh.nodes} load samples, got {vec.shape}")
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise ValidationError("load samples are identically zero")
    return vec / norm


def step_load_samples(mesh: Mesh1D) -> np.ndarray:
    """+1 on the first half of the nodes, -1 on the second half."""
    vec = np.ones(mesh.nodes)
    vec[mesh.nodes // 2:] = -1.0
    return vec


def lame_parameters(material: Material, model: str) -> tuple[float, float]:
    """(lambda, mu) for the chosen 2D reduction.

    "plane-strain" uses the 3D isotropic constants unchanged;
    "plane-stress" substitutes the reduced first parameter
    E*nu/(1 - nu^2) appropriate for thin plates.
    """
    e, nu = material.youngs, material.poisson
    mu = e / (2.0 * (1.0 + nu))
    if model == "plane-strain":
        lam = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    elif model == "plane-stress":
        lam = e * nu / (1.0 - nu * nu)
    else:
        raise ValidationError(f"unknown elasticity model {model!r}")
    return lam, mu


def _element_matrices(mesh: Mesh2DGrid, material: Material, model: str,
                      gauss: int) -> tuple[np.ndarray, np.ndarray]:
    """8x8 element stiffness and mass for one rectangular bilinear element.

    Local nodes in (xi, eta) unit coordinates: (0,0), (1,0), (0,1), (1,1);
    local DOF = 2*node + axis.
    """
    lam, mu = lame_parameters(material, model)
    hx, hy = mesh.hx, mesh.hy
    pts, wts = np.polynomial.legendre.leggauss(gauss)
    pts = 0.5 * (pts + 1.0)  # map [-1, 1] -> [0, 1]
    wts = 0.5 * wts
    ke = np.zeros((8, 8))
    me = np.zeros((8, 8))
    for xi, wx in zip(pts, wts):
        for eta, wy in zip(pts, wts):
            shapes = np.array([
                (1 - xi) * (1 - eta), xi * (1 - eta), (1 - xi) * eta, xi * eta,
            ])
            grads = np.array([
                [-(1 - eta) / hx, -(1 - xi) / hy],
                [(1 - eta) / hx, -xi / hy],
                [-eta / hx, (1 - xi) / hy],
                [eta / hx, xi / hy],
            ])
            w = wx * wy * hx * hy
            gdot = grads @ grads.T
            for a in range(4):
                for b in range(4):
                    for k in range(2):
                        for l in range(2):
                            val = lam * grads[a, k] * grads[b, l] + mu * grads[a, l] * grads[b, k]
                            if k == l:
                                val += mu * gdot[a, b]
                            ke[2 * a + k, 2 * b + l] += w * val
                    m = w * material.density * shapes[a] * shapes[b]
                    me[2 * a, 2 * b] += m
                    me[2 * a + 1, 2 * b + 1] += m
    return ke, me


def assemble_elasticity_2d(mesh: Mesh2DGrid, material: Material,
                           model: str = "plane-stress",
                           gauss: int = 2) -> FemSystem:
    """Global stiffness and consistent mass, before boundary conditions.

    The unconstrained stiffness is singular (rigid-body translations and
    rotation); apply :func:`apply_dirichlet` to restore definiteness.
    """
    if gauss < 2:
        raise ValidationError("bilinear elements need at least 2x2 quadrature")
    ke, me = _element_matrices(mesh, material, model, gauss)
    ndof = 2 * mesh.n_nodes
    k = np.zeros((ndof, ndof))
    m = np.zeros((ndof, ndof))
    for ex in range(mesh.nx - 1):
        for ey in range(mesh.ny - 1):
            nodes = [mesh.node(ex, ey), mesh.node(ex + 1, ey),
                     mesh.node(ex, ey + 1), mesh.node(ex + 1, ey + 1)]
            dofs = np.array([2 * node + axis for node in nodes for axis in (0, 1)])
            k[np.ix_(dofs, dofs)] += ke
            m[np.ix_(dofs, dofs)] += me
    return FemSystem(stiffness=HermitianOperator.from_dense(k),
                     mass=HermitianOperator.from_dense(m),
                     load=None,
                     dof_map=np.arange(ndof),
                     dofs_per_node=2,
                     n_nodes=mesh.n_nodes)


def apply_dirichlet(system: FemSystem, fixed_nodes) -> FemSystem:
    """Drop every DOF of the fixed nodes from the matrices and load,
    renumbering the survivors in their original order."""
    fixed = sorted(set(int(n) for n in fixed_nodes))
    if not fixed:
        return system
    for node in fixed:
        if not 0 <= node < system.n_nodes:
            raise ValidationError(f"fixed node {node} outside the mesh")
    if len(fixed) == system.n_nodes:
        raise ValidationError("cannot fix every node")
    m = system.dofs_per_node
    if system.dim != m * system.n_nodes:
        raise ValidationError("system was already reduced; apply Dirichlet once, on the full assembly")
    drop = {m * node + axis for node in fixed for axis in range(m)}
    keep = np.array([i for i in range(m * system.n_nodes) if i not in drop])
    sel = np.ix_(keep, keep)
    stiffness = HermitianOperator.from_dense(np.asarray(system.stiffness.to_dense())[sel])
    mass = None
    if system.mass is not None:
        mass = HermitianOperator.from_dense(np.asarray(system.mass.to_dense())[sel])
    load = None if system.load is None else system.load[keep]
    return replace(system, stiffness=stiffness, mass=mass, load=load,
                   dof_map=system.dof_map[keep])


@dataclass(frozen=True)
class EmbeddedSystem:
    """A reduced system carried onto a full qubit register.

    ``basis_of_dof[r]`` is the computational basis index of retained DOF
    ``r`` (always the identity: DOFs are packed in node order).  When the
    reduced dimension is below 2**n the matrices are enlarged so the
    targeted extremal eigenvalue is unchanged.
    """

    n_qubits: int
    basis_of_dof: np.ndarray
    stiffness: HermitianOperator
    mass: HermitianOperator | None
    load: np.ndarray | None

    @property
    def dim(self) -> int:
        return 1 << self.n_qubits


def dof_to_basis_map(system: FemSystem, pad_eps: float | None = None) -> EmbeddedSystem:
    """Map retained DOFs onto basis indices, padding to a power of two.

    Eigenfrequency systems (mass present) enlarge the (K, M) pencil for a
    smallest-positive-eigenvalue target; linear systems (load present)
    zero-pad the load and identity-pad K, which leaves the pencil
    (f f^H, K) with its single positive eigenvalue intact.
    """
    dim = system.dim
    n_qubits = max(1, int(np.ceil(np.log2(dim))))
    full = 1 << n_qubits
    basis = np.arange(dim)
    if system.mass is not None:
        k_pad, m_pad = gep.pad_to_power_of_two(system.stiffness, system.mass,
                                               "min>0", pad_eps)
        return EmbeddedSystem(n_qubits, basis, k_pad, m_pad, None)
    if system.load is not None:
        load = system.load / np.linalg.norm(system.load)
        if dim == full:
            return EmbeddedSystem(n_qubits, basis, system.stiffness, None,
                                  load.astype(complex))
        # zero-padding the load keeps its norm and the pencil numerator
        # rank-1; K takes the identity block of the max>0 padding rule.
        numerator = HermitianOperator.from_dense(np.outer(load, load.conj()))
        _, k_pad = gep.pad_to_power_of_two(numerator, system.stiffness, "max>0")
        f_full = np.zeros(full, dtype=complex)
        f_full[:dim] = load
        return EmbeddedSystem(n_qubits, basis, k_pad, None, f_full)
    if dim != full:
        raise ValidationError(
            "cannot infer the padding regime for a bare stiffness system; "
            "attach a mass matrix or a load vector first"
        )
    return EmbeddedSystem(n_qubits, basis, system.stiffness, None, None)
