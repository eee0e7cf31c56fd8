"""Variational solver for extremal eigenvalues of Hermitian pencils.

Candidate eigenvectors live in the state space of a simulated qubit
register; a coordinate-descent optimizer replaces one single-qubit gate
at a time by the exact optimum of the fractional objective <A>/<B>,
found from a small generalized eigenproblem.  Positive-definite linear
systems reduce to rank-1 pencils, and finite element front ends cover
1D diffusion systems and 2D elastic eigenfrequency problems.
"""

from .analysis import BiasRow, bias_study, equalize_lengths, real_space_distance, solution_fidelity
from .errors import ConfigError, DegenerateOverlapError, NumericalError, ValidationError
from .fem import (
    EmbeddedSystem,
    FemSystem,
    Material,
    Mesh1D,
    Mesh2DGrid,
    apply_dirichlet,
    assemble_elasticity_2d,
    assemble_poisson_1d,
    assemble_poisson_load,
    dof_to_basis_map,
    step_load_samples,
)
from .gep import (
    GEProblem,
    SleProblem,
    classical_reference_solve,
    pad_to_power_of_two,
    rayleigh_quotient,
    recover_sle_solution,
    sle_to_gep,
)
from .operators import (
    HermitianOperator,
    Rank1Projector,
    ShotPlan,
    XbmGroup,
    XbmGrouping,
    expectation_exact,
    expectation_sampled,
    fidelity_exact,
    fidelity_sampled,
    load_operator,
    save_operator,
    xbm_groups,
)
from .seqopt import (
    GateUpdate,
    OptimizeTrace,
    OptimizerKind,
    ParameterConfiguration,
    SMatrixPair,
    build_s_pair,
    default_configuration,
    gate_evaluator,
    init_params,
    regularize_sb,
    restrict_update,
    sequential_optimize,
    solve_gate_gep,
)
from .statevector import (
    CircuitLayout,
    StateVector,
    alternating_layered,
    apply_cz,
    apply_hadamard,
    apply_single_qubit,
    apply_x,
    axis_angle_quaternion,
    cascading_block,
    custom_layout,
    expectation_with_gate,
    layout_by_name,
    prepare_step_state,
    quaternion_axis_angle,
    quaternion_unitary,
    random_unit_quaternion,
    run_circuit,
    single_gate_layout,
)

__version__ = "0.1.0"
