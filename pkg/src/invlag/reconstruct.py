"""Reconstruction of variational data from a valid multiplier, and the
forward problem.

Given a system and a multiplier passing the dissipative multiplier
test, this module produces a Lagrangian and a dissipation function; for
a multiplier passing the gyroscopic test it produces a Lagrangian and a
basic two-form. Both go through explicit homotopy integrals: one in the
velocity fibre (recovering a function from its velocity Hessian) and
one on the base (recovering a potential for a closed form). All
homotopies are centred at the origin and require polynomial data, so
the output is deterministic and stays inside the exact rational class.
The returned certificates are verified symbolically before they are
handed back.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from typing import Optional, Tuple

from .exprcore import (Expr, ExprContext, NotPolynomialError,
                       ZeroDenominatorError)
from .geometry import (DimensionMismatchError, GeometryError,
                       InternalInconsistencyError, Sode, TensorField,
                       gamma_apply, matrix_det, matrix_solve, nabla_tensor02)
from .conditions import (ConditionReport, Cell, check_multiplier_dissipative,
                         check_multiplier_gyroscopic, nonsingularity_record,
                         _curvature_cycle, _require_two_form)


class ReconstructError(Exception):
    """Reconstruction could not proceed on the given input."""


class MultiplierCheckError(ReconstructError):
    """The input multiplier fails its existence conditions; the failing
    report is attached."""

    def __init__(self, message: str, report: ConditionReport):
        super().__init__(message)
        self.report = report


class NotAffineResidualError(ReconstructError):
    """A residual expected to be affine in the velocities was not."""


class SingularHessianError(ReconstructError):
    """The velocity Hessian of the Lagrangian is identically singular."""


class BasePointError(ReconstructError):
    """A homotopy input has a pole at the origin, the fixed base point."""


class NotBasicError(ReconstructError):
    """A form expected to live on the base depends on the velocities."""


class NotClosedError(ReconstructError):
    """A form that must be closed for the homotopy to apply is not."""


@dataclass(frozen=True)
class GaugeRecord:
    """What the reconstruction added on top of the fibre homotopies:
    a velocity-linear term and a velocity-free term in the Lagrangian,
    and a velocity-linear term in the dissipation function."""

    lagrangian_linear: Tuple[Expr, ...]
    lagrangian_scalar: Expr
    dissipation_linear: Tuple[Expr, ...]
    base_point: str = "origin"


@dataclass(frozen=True)
class Certificate:
    """A verified variational representation of a system."""

    kind: str  # "dissipative" | "gyroscopic" | "classical"
    L: Expr
    D: Optional[Expr] = None
    omega: Optional[TensorField] = None
    gauge: Optional[GaugeRecord] = None


# --------------------------------------------------------------------------
# Hessian and homotopies


def hessian(L: Expr) -> TensorField:
    """Velocity Hessian of a function, as a symmetric (0,2) tensor."""
    ctx = L.ctx
    entries = {}
    for i in range(1, ctx.n + 1):
        row = L.diff(ctx.v(i))
        for j in range(1, ctx.n + 1):
            entries[(i, j)] = row.diff(ctx.v(j))
    return TensorField(ctx, (0, 2), entries, sym=((1, 2),))


def vertical_homotopy2(M: TensorField) -> Expr:
    """A function whose velocity Hessian is ``M``, vanishing to second
    order at zero velocity.

    Realized degree by degree: a part of ``M`` homogeneous of degree
    ``k`` in the velocities contributes ``M_ij v^i v^j / ((k+1)(k+2))``.
    Requires ``M`` symmetric with totally symmetric vertical derivative,
    and polynomial in the velocities.
    """
    ctx = M.ctx
    n = M.n
    if M.shape != (0, 2):
        raise DimensionMismatchError("expected a (0,2) tensor")
    v_vars = [ctx.v(k) for k in range(1, n + 1)]
    for i in range(1, n + 1):
        for j in range(i, n + 1):
            if M.entry(i, j) != M.entry(j, i):
                raise GeometryError(f"tensor is not symmetric at {(i, j)}")
    for i in range(1, n + 1):
        for j, k in combinations(range(1, n + 1), 2):
            if M.entry(i, j).diff(ctx.v(k)) != M.entry(i, k).diff(ctx.v(j)):
                raise GeometryError(
                    f"vertical derivative is not totally symmetric at {(i, j, k)}")
    total = ctx.zero
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            entry = M.entry(i, j)
            if entry.is_zero():
                continue
            for degree, part in entry.homogeneous_parts(v_vars).items():
                weight = Fraction(1, (degree + 1) * (degree + 2))
                total = total + (part * ctx.var(ctx.v(i)) * ctx.var(ctx.v(j))
                                 * ctx.const(weight))
    return total


def _base_parts(ctx: ExprContext, e: Expr):
    """Homogeneous parts in the position variables, with typed errors
    for data the base homotopy cannot handle."""
    q_vars = [ctx.q(k) for k in range(1, ctx.n + 1)]
    origin = {var: ctx.zero for var in q_vars}
    try:
        e.subst(origin)
    except ZeroDenominatorError as exc:
        raise BasePointError(
            "input has a pole at the origin, the homotopy base point") from exc
    try:
        return e.homogeneous_parts(q_vars)
    except NotPolynomialError as exc:
        raise NotPolynomialError(
            "base homotopy needs polynomial dependence on the positions",
            getattr(exc, "var", None)) from exc


def base_homotopy(ctx: ExprContext, form: dict, degree: int) -> dict:
    """Poincaré homotopy on the base for a closed ``degree``-form given
    as a map from index tuples to expressions (all components, fully
    antisymmetric). Returns the potential ``degree-1``-form as the same
    kind of map over ascending index tuples."""
    n = ctx.n
    result = {}
    for tail in combinations(range(1, n + 1), degree - 1):
        total = ctx.zero
        for i in range(1, n + 1):
            component = form.get((i, *tail), ctx.zero)
            if component.is_zero():
                continue
            for m, part in _base_parts(ctx, component).items():
                total = total + (ctx.var(ctx.q(i)) * part
                                 * ctx.const(Fraction(1, m + degree)))
        result[tail] = total
    return result


def _antisym_lookup(form: dict, idx: Tuple[int, ...], ctx: ExprContext) -> Expr:
    """Value of a fully antisymmetric form stored on ascending tuples."""
    order = tuple(sorted(idx))
    if len(set(idx)) != len(idx):
        return ctx.zero
    value = form.get(order, ctx.zero)
    # parity of the permutation taking sorted order to idx
    perm = [order.index(i) for i in idx]
    sign = 1
    for a in range(len(perm)):
        for b in range(a + 1, len(perm)):
            if perm[a] > perm[b]:
                sign = -sign
    return value if sign > 0 else -value


# --------------------------------------------------------------------------
# Euler-Lagrange residuals and verification


def lagrange_residuals(s: Sode, L: Expr, D: Optional[Expr] = None,
                       omega: Optional[TensorField] = None):
    """The residuals of the governing equations for ``L`` with either a
    dissipation function or a gyroscopic two-form (or neither)."""
    ctx = s.ctx
    residuals = []
    for i in range(1, s.n + 1):
        r = gamma_apply(s, L.diff(ctx.v(i))) - L.diff(ctx.q(i))
        if D is not None:
            r = r - D.diff(ctx.v(i))
        if omega is not None:
            for k in range(1, s.n + 1):
                r = r - omega.entry(i, k) * ctx.var(ctx.v(k))
        residuals.append(r)
    return residuals


def verify_dissipative(s: Sode, L: Expr, D: Expr) -> ConditionReport:
    """Does the flow of the system satisfy the Lagrange equations of
    ``L`` with velocity-gradient forcing from ``D``? One residual cell
    per equation; the velocity Hessian's determinant is reported."""
    if L.ctx != s.ctx or D.ctx != s.ctx:
        raise DimensionMismatchError("data from another context")
    cells = tuple(Cell(f"EL[{i}]", r) for i, r in
                  enumerate(lagrange_residuals(s, L, D=D), start=1))
    return ConditionReport("lagrange-dissipative", cells,
                           nonsingularity=nonsingularity_record(hessian(L)))


def verify_gyroscopic(s: Sode, L: Expr, omega: TensorField) -> ConditionReport:
    """Does the flow satisfy the Lagrange equations of ``L`` with the
    gyroscopic force of a basic two-form?"""
    if L.ctx != s.ctx:
        raise DimensionMismatchError("data from another context")
    _require_two_form(s, omega)
    cells = tuple(Cell(f"EL[{i}]", r) for i, r in
                  enumerate(lagrange_residuals(s, L, omega=omega), start=1))
    return ConditionReport("lagrange-gyroscopic", cells,
                           nonsingularity=nonsingularity_record(hessian(L)))


# --------------------------------------------------------------------------
# reconstruction


def _affine_split(ctx: ExprContext, residual: Expr):
    """Split an expression affine in the velocities into (constant,
    linear-coefficient list); typed error if not affine."""
    v_vars = [ctx.v(k) for k in range(1, ctx.n + 1)]
    try:
        parts = residual.homogeneous_parts(v_vars)
    except NotPolynomialError as exc:
        raise NotAffineResidualError(
            f"residual is not polynomial in the velocities: {residual}") from exc
    if any(degree > 1 for degree in parts):
        raise NotAffineResidualError(
            f"residual is not affine in the velocities: {residual}")
    constant = parts.get(0, ctx.zero)
    linear = parts.get(1, ctx.zero)
    return constant, [linear.diff(v) for v in v_vars]


def _check_two_form_closed(ctx: ExprContext, c: dict) -> bool:
    n = ctx.n
    for i, j, k in combinations(range(1, n + 1), 3):
        total = (_antisym_lookup(c, (j, k), ctx).diff(ctx.q(i))
                 + _antisym_lookup(c, (k, i), ctx).diff(ctx.q(j))
                 + _antisym_lookup(c, (i, j), ctx).diff(ctx.q(k)))
        if not total.is_zero():
            return False
    return True


def reconstruct_dissipative(s: Sode, g: TensorField) -> Certificate:
    """From a multiplier passing the dissipative existence test, build
    a Lagrangian and a dissipation function and verify them.

    The fibre homotopy of ``g`` gives the kinetic part; the fibre
    homotopy of the flow derivative of ``g`` gives the leading part of
    the dissipation function. What is left of the Lagrange residual is
    affine in velocity; its linear part is a closed two-form on the
    base absorbed into the Lagrangian through a base homotopy, and its
    constant part moves into the dissipation function.
    """
    report = check_multiplier_dissipative(s, g)
    if not report.passes:
        raise MultiplierCheckError(
            "multiplier fails the dissipative existence conditions", report)
    ctx = s.ctx
    n = s.n
    L0 = vertical_homotopy2(g)
    D0 = vertical_homotopy2(nabla_tensor02(s, g))
    residuals = lagrange_residuals(s, L0, D=D0)
    base_terms = []
    coefficient_rows = []
    for r in residuals:
        constant, linear = _affine_split(ctx, r)
        base_terms.append(constant)
        coefficient_rows.append(linear)
    c = {}
    for i, j in combinations(range(1, n + 1), 2):
        if coefficient_rows[i - 1][j - 1] != -coefficient_rows[j - 1][i - 1]:
            raise InternalInconsistencyError(
                "velocity-linear residual part is not antisymmetric")
        c[(i, j)] = coefficient_rows[i - 1][j - 1]
    for i in range(1, n + 1):
        if not coefficient_rows[i - 1][i - 1].is_zero():
            raise InternalInconsistencyError(
                "velocity-linear residual part has a diagonal term")
    if not _check_two_form_closed(ctx, c):
        raise InternalInconsistencyError(
            "velocity-linear residual part is not closed")
    alpha_map = base_homotopy(ctx, _full_two_form(ctx, c), 2)
    alpha = [alpha_map[(j,)] for j in range(1, n + 1)]
    for i, j in combinations(range(1, n + 1), 2):
        built = alpha[j - 1].diff(ctx.q(i)) - alpha[i - 1].diff(ctx.q(j))
        if built != c[(i, j)]:
            raise InternalInconsistencyError("base homotopy failed to invert")
    L = L0
    D = D0
    for j in range(1, n + 1):
        L = L + alpha[j - 1] * ctx.var(ctx.v(j))
        D = D + base_terms[j - 1] * ctx.var(ctx.v(j))
    outcome = verify_dissipative(s, L, D)
    if not outcome.passes:
        raise InternalInconsistencyError(
            "reconstructed pair fails verification")
    if hessian(L) != g:
        raise InternalInconsistencyError(
            "reconstructed Lagrangian has the wrong velocity Hessian")
    gauge = GaugeRecord(tuple(alpha), ctx.zero, tuple(base_terms))
    kind = "classical" if D.is_zero() else "dissipative"
    return Certificate(kind, L, D=D, gauge=gauge)


def _full_two_form(ctx: ExprContext, upper: dict) -> dict:
    """Extend a two-form given on ascending pairs to all ordered pairs."""
    form = dict(upper)
    for (i, j), value in upper.items():
        form[(j, i)] = -value
    return form


def reconstruct_gyroscopic(s: Sode, g: TensorField) -> Certificate:
    """From a multiplier passing the gyroscopic existence test, build a
    Lagrangian and a basic two-form and verify them.

    The Lagrange residual of the fibre-homotopy Lagrangian is affine in
    velocity. Its linear coefficient is the two-form: it is basic by
    construction and must be antisymmetric, and its exterior derivative
    must reproduce the lowered curvature cycle (which itself has to be
    basic and closed) — both verified symbolically. The velocity-free
    remainder must be exact and becomes a gauge potential.
    """
    report = check_multiplier_gyroscopic(s, g)
    if not report.passes:
        raise MultiplierCheckError(
            "multiplier fails the gyroscopic existence conditions", report)
    ctx = s.ctx
    n = s.n
    rho = {}
    for i, j, k in combinations(range(1, n + 1), 3):
        rho[(i, j, k)] = -_curvature_cycle(s, g, i, j, k)
    for idx, value in rho.items():
        for k in range(1, n + 1):
            if value.depends_on(ctx.v(k)):
                raise NotBasicError(
                    f"curvature form depends on velocity at {idx}")
    if not _check_three_form_closed(ctx, rho):
        raise NotClosedError("curvature form is not closed")

    L0 = vertical_homotopy2(g)
    residuals = lagrange_residuals(s, L0)
    base_terms = []
    coefficient_rows = []
    for r in residuals:
        constant, linear = _affine_split(ctx, r)
        base_terms.append(constant)
        coefficient_rows.append(linear)
    omega_entries = {}
    for i, j in combinations(range(1, n + 1), 2):
        if coefficient_rows[i - 1][j - 1] != -coefficient_rows[j - 1][i - 1]:
            raise InternalInconsistencyError(
                "velocity-linear residual part is not antisymmetric")
        omega_entries[(i, j)] = coefficient_rows[i - 1][j - 1]
        omega_entries[(j, i)] = coefficient_rows[j - 1][i - 1]
    for i in range(1, n + 1):
        if not coefficient_rows[i - 1][i - 1].is_zero():
            raise InternalInconsistencyError(
                "velocity-linear residual part has a diagonal term")
    omega = TensorField(ctx, (0, 2), omega_entries, antisym=((1, 2),))
    for k in range(1, n + 1):
        for i, j in combinations(range(1, n + 1), 2):
            if omega.entry(i, j).depends_on(ctx.v(k)):
                raise NotBasicError(
                    f"recovered two-form depends on velocity at {(i, j)}")
    for i, j, k in combinations(range(1, n + 1), 3):
        built = (omega.entry(j, k).diff(ctx.q(i))
                 + omega.entry(k, i).diff(ctx.q(j))
                 + omega.entry(i, j).diff(ctx.q(k)))
        if built != rho[(i, j, k)]:
            raise InternalInconsistencyError(
                "two-form derivative does not match the curvature form")

    for i in range(1, n + 1):
        for j in range(i + 1, n + 1):
            if (base_terms[i - 1].diff(ctx.q(j))
                    != base_terms[j - 1].diff(ctx.q(i))):
                raise InternalInconsistencyError(
                    "velocity-free residual part is not closed")
    phi_map = base_homotopy(ctx, {(i,): base_terms[i - 1]
                                  for i in range(1, n + 1)}, 1)
    phi = phi_map[()]
    for i in range(1, n + 1):
        if phi.diff(ctx.q(i)) != base_terms[i - 1]:
            raise InternalInconsistencyError("base homotopy failed to invert")
    L = L0 + phi
    outcome = verify_gyroscopic(s, L, omega)
    if not outcome.passes:
        raise InternalInconsistencyError(
            "reconstructed pair fails verification")
    if hessian(L) != g:
        raise InternalInconsistencyError(
            "reconstructed Lagrangian has the wrong velocity Hessian")
    gauge = GaugeRecord(tuple(ctx.zero for _ in range(n)), phi, ())
    kind = "classical" if omega.is_zero() else "gyroscopic"
    return Certificate(kind, L, omega=omega, gauge=gauge)


def _check_three_form_closed(ctx: ExprContext, rho: dict) -> bool:
    n = ctx.n
    for i, j, k, l in combinations(range(1, n + 1), 4):
        total = (_antisym_lookup(rho, (j, k, l), ctx).diff(ctx.q(i))
                 - _antisym_lookup(rho, (i, k, l), ctx).diff(ctx.q(j))
                 + _antisym_lookup(rho, (i, j, l), ctx).diff(ctx.q(k))
                 - _antisym_lookup(rho, (i, j, k), ctx).diff(ctx.q(l)))
        if not total.is_zero():
            return False
    return True


# --------------------------------------------------------------------------
# forward problem


def forward_sode(L: Expr, D: Expr, n: int) -> Sode:
    """The explicit system governed by ``L`` with forcing from ``D``:
    solve the Lagrange equations for the accelerations. The velocity
    Hessian must be nonsingular as a matrix of expressions."""
    ctx = L.ctx
    if D.ctx != ctx:
        raise DimensionMismatchError("dissipation from another context")
    if n != ctx.n:
        raise DimensionMismatchError(
            f"context has dimension {ctx.n}, not {n}")
    g = hessian(L)
    if matrix_det(g).is_zero():
        raise SingularHessianError(
            "velocity Hessian of the Lagrangian is singular")
    rhs = []
    for j in range(1, n + 1):
        entry = L.diff(ctx.q(j)) + D.diff(ctx.v(j))
        for k in range(1, n + 1):
            entry = entry - ctx.var(ctx.v(k)) * L.diff(ctx.q(k)).diff(ctx.v(j))
        rhs.append(entry)
    s = Sode(ctx, matrix_solve(g, rhs))
    if not verify_dissipative(s, L, D).passes:
        raise InternalInconsistencyError(
            "forward construction failed its own verification")
    return s
