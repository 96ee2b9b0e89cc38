"""Exact symbolic tools for the inverse problem of Lagrangian mechanics
with dissipative and gyroscopic force terms."""

from .exprcore import (
    Expr,
    ExprContext,
    VarId,
    convert,
    diff,
    eval_num,
    integrate_poly,
    is_zero,
    parse,
    subst,
    to_text,
)
from .geometry import (
    Sode,
    TensorField,
    connection,
    curvature,
    dh_jacobi,
    gamma_apply,
    horizontal_apply,
    identity_matrix,
    jacobi,
    matrix_det,
    matrix_solve,
    nabla_tensor02,
    nabla_tensor12,
    theta_tensor,
)
from .conditions import (
    Cell,
    ConditionReport,
    ImplicitSystem,
    NonsingularityRecord,
    check_classical,
    check_dissipative,
    check_gyroscopic,
    check_implicit,
    check_multiplier_dissipative,
    check_multiplier_gyroscopic,
    check_prop2a,
    check_rayleigh,
    implicit_context,
    total_derivative,
)
from .reconstruct import (
    Certificate,
    GaugeRecord,
    forward_sode,
    hessian,
    reconstruct_dissipative,
    reconstruct_gyroscopic,
    verify_dissipative,
    verify_gyroscopic,
    vertical_homotopy2,
)
from .solver import (
    AnsatzProblem,
    LinearSystem,
    NonlinearCouplingError,
    SolutionSpace,
    SolverError,
    assemble,
    constant_ansatz,
    diagonal_ansatz,
    find_nonsingular,
    instantiate,
    polynomial_ansatz,
    q_monomials,
    solve,
)

__all__ = [
    "Expr",
    "ExprContext",
    "VarId",
    "convert",
    "diff",
    "eval_num",
    "integrate_poly",
    "is_zero",
    "parse",
    "subst",
    "to_text",
    "Sode",
    "TensorField",
    "connection",
    "curvature",
    "dh_jacobi",
    "gamma_apply",
    "horizontal_apply",
    "identity_matrix",
    "jacobi",
    "matrix_det",
    "matrix_solve",
    "nabla_tensor02",
    "nabla_tensor12",
    "theta_tensor",
    "Cell",
    "ConditionReport",
    "ImplicitSystem",
    "NonsingularityRecord",
    "check_classical",
    "check_dissipative",
    "check_gyroscopic",
    "check_implicit",
    "check_multiplier_dissipative",
    "check_multiplier_gyroscopic",
    "check_prop2a",
    "check_rayleigh",
    "implicit_context",
    "total_derivative",
    "Certificate",
    "GaugeRecord",
    "forward_sode",
    "hessian",
    "reconstruct_dissipative",
    "reconstruct_gyroscopic",
    "verify_dissipative",
    "verify_gyroscopic",
    "vertical_homotopy2",
    "AnsatzProblem",
    "LinearSystem",
    "NonlinearCouplingError",
    "SolutionSpace",
    "SolverError",
    "assemble",
    "constant_ansatz",
    "diagonal_ansatz",
    "find_nonsingular",
    "instantiate",
    "polynomial_ansatz",
    "q_monomials",
    "solve",
]

__version__ = "0.1.0"
