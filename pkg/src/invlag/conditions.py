"""Condition suites for the inverse problem, reported cell by cell.

Every suite turns its inputs into a list of named residual expressions
("cells"); the suite passes exactly when every residual is the zero
expression. Residuals are kept symbolically so a failing report shows
the actual obstruction, not just a flag. Suites covering explicit
systems take a :class:`~invlag.geometry.Sode` plus candidate data (a
multiplier ``g``, a dissipation function ``D``, a two-form ``omega``);
implicit systems get their own wrapper type and checker.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Optional, Sequence, Tuple

from .exprcore import Expr, ExprContext
from .geometry import (DimensionMismatchError, GeometryError, Sode,
                       TensorField, connection, curvature, horizontal_apply,
                       gamma_apply, jacobi, matrix_det, nabla_tensor02,
                       theta_tensor)


class TwoFormError(Exception):
    """The gyroscopic two-form is not antisymmetric or not basic."""


class ImplicitOrderError(Exception):
    """An implicit right-hand side uses jets deeper than acceleration."""


# --------------------------------------------------------------------------
# report containers


@dataclass(frozen=True)
class Cell:
    """One named residual; the cell passes when the residual vanishes."""

    label: str
    residual: Expr

    @property
    def passes(self) -> bool:
        return self.residual.is_zero()


@dataclass(frozen=True)
class NonsingularityRecord:
    """Symbolic determinant of the candidate multiplier, with a verdict.

    ``nonsingular`` means the determinant is not identically zero; a
    non-constant determinant still vanishes somewhere, which is flagged
    in ``note`` rather than analysed further.
    """

    determinant: Expr
    nonsingular: bool
    note: str = ""


@dataclass(frozen=True)
class ConditionReport:
    suite: str
    cells: Tuple[Cell, ...]
    nonsingularity: Optional[NonsingularityRecord] = None
    notes: Tuple[str, ...] = ()

    @property
    def passes(self) -> bool:
        return all(cell.passes for cell in self.cells)

    def failing(self) -> Tuple[Cell, ...]:
        return tuple(cell for cell in self.cells if not cell.passes)

    def cell(self, label: str) -> Cell:
        for cell in self.cells:
            if cell.label == label:
                return cell
        raise KeyError(label)

    def __repr__(self):
        verdict = "pass" if self.passes else "FAIL"
        return (f"ConditionReport({self.suite}: {verdict}, "
                f"{len(self.cells)} cells, {len(self.failing())} failing)")


def _label(family: str, *indices) -> str:
    return f"{family}[{','.join(str(i) for i in indices)}]"


def nonsingularity_record(g: TensorField) -> NonsingularityRecord:
    det = matrix_det(g)
    if det.is_zero():
        return NonsingularityRecord(det, False, "determinant is identically zero")
    note = ""
    if det.free_varids():
        note = ("determinant is non-constant, so it vanishes on a proper "
                "subset of the domain")
    return NonsingularityRecord(det, True, note)


# --------------------------------------------------------------------------
# input validation


def _require_multiplier(s: Sode, g: TensorField):
    if g.ctx != s.ctx:
        raise DimensionMismatchError("multiplier lives in a different context")
    if g.shape != (0, 2):
        raise DimensionMismatchError("multiplier must be a (0,2) tensor")
    for i in range(1, s.n + 1):
        for j in range(i + 1, s.n + 1):
            if g.entry(i, j) != g.entry(j, i):
                raise GeometryError(f"multiplier is not symmetric at {(i, j)}")


def _require_two_form(s: Sode, omega: TensorField):
    if omega.ctx != s.ctx:
        raise DimensionMismatchError("two-form lives in a different context")
    if omega.shape != (0, 2):
        raise DimensionMismatchError("two-form must be a (0,2) tensor")
    ctx = s.ctx
    for i in range(1, s.n + 1):
        for j in range(1, s.n + 1):
            entry = omega.entry(i, j)
            if entry != -omega.entry(j, i):
                raise TwoFormError(f"two-form is not antisymmetric at {(i, j)}")
            for k in range(1, s.n + 1):
                if entry.depends_on(ctx.v(k)):
                    raise TwoFormError(
                        f"two-form entry {(i, j)} depends on velocities")


def _require_function(s: Sode, D: Expr):
    if D.ctx != s.ctx:
        raise DimensionMismatchError("dissipation function from another context")


# --------------------------------------------------------------------------
# shared cell families


def _hd1_cells(s: Sode, g: TensorField):
    """Velocity symmetry of the candidate: V_k(g_ij) - V_j(g_ik)."""
    ctx = s.ctx
    cells = []
    for i in range(1, s.n + 1):
        for j, k in combinations(range(1, s.n + 1), 2):
            residual = g.entry(i, j).diff(ctx.v(k)) - g.entry(i, k).diff(ctx.v(j))
            cells.append(Cell(_label("HD1", i, j, k), residual))
    return cells


def _nabla_cells(s: Sode, g: TensorField, family: str = "NablaG"):
    grad = nabla_tensor02(s, g)
    return [Cell(_label(family, i, j), grad.entry(i, j))
            for i in range(1, s.n + 1) for j in range(i, s.n + 1)]


def _phi_skew(s: Sode, g: TensorField, i: int, j: int) -> Expr:
    jac = jacobi(s)
    total = s.ctx.zero
    for k in range(1, s.n + 1):
        total = total + g.entry(i, k) * jac.entry(k, j)
        total = total - g.entry(j, k) * jac.entry(k, i)
    return total


def _phi_cells(s: Sode, g: TensorField, family: str = "PhiSym"):
    return [Cell(_label(family, i, j), _phi_skew(s, g, i, j))
            for i, j in combinations(range(1, s.n + 1), 2)]


def _curvature_cycle(s: Sode, g: TensorField, i: int, k: int, l: int) -> Expr:
    R = curvature(s)
    total = s.ctx.zero
    for j in range(1, s.n + 1):
        total = total + g.entry(i, j) * R.entry(j, k, l)
        total = total + g.entry(l, j) * R.entry(j, i, k)
        total = total + g.entry(k, j) * R.entry(j, l, i)
    return total


# --------------------------------------------------------------------------
# explicit suites


def check_classical(s: Sode, g: TensorField) -> ConditionReport:
    """Multiplier conditions for a plain variational representation:
    velocity symmetry, covariant constancy along the flow, and symmetry
    of the force endomorphism lowered with the candidate."""
    _require_multiplier(s, g)
    cells = _hd1_cells(s, g) + _nabla_cells(s, g) + _phi_cells(s, g)
    return ConditionReport("classical", tuple(cells),
                           nonsingularity=nonsingularity_record(g))


def check_dissipative(s: Sode, g: TensorField, D: Expr) -> ConditionReport:
    """Conditions for a representation with a dissipation function:
    velocity symmetry, the flow derivative of the candidate matching
    the velocity Hessian of ``D``, and the lowered force endomorphism
    being symmetric up to horizontal derivatives of ``D``."""
    _require_multiplier(s, g)
    _require_function(s, D)
    ctx = s.ctx
    cells = _hd1_cells(s, g)
    grad = nabla_tensor02(s, g)
    for i in range(1, s.n + 1):
        for j in range(i, s.n + 1):
            residual = grad.entry(i, j) - D.diff(ctx.v(i)).diff(ctx.v(j))
            cells.append(Cell(_label("HD2", i, j), residual))
    for i, j in combinations(range(1, s.n + 1), 2):
        correction = (horizontal_apply(s, i, D.diff(ctx.v(j)))
                      - horizontal_apply(s, j, D.diff(ctx.v(i))))
        cells.append(Cell(_label("HD3", i, j), _phi_skew(s, g, i, j) - correction))
    return ConditionReport("dissipative", tuple(cells),
                           nonsingularity=nonsingularity_record(g))


def check_gyroscopic(s: Sode, g: TensorField, omega: TensorField) -> ConditionReport:
    """Conditions for a representation with gyroscopic forces from a
    basic two-form: velocity symmetry, covariant constancy, and the
    lowered force endomorphism being symmetric up to the contraction of
    the exterior derivative of the two-form with the velocity."""
    _require_multiplier(s, g)
    _require_two_form(s, omega)
    ctx = s.ctx
    cells = _hd1_cells(s, g) + _nabla_cells(s, g, family="Hg2")
    for i, j in combinations(range(1, s.n + 1), 2):
        contraction = ctx.zero
        for k in range(1, s.n + 1):
            d_omega = (omega.entry(i, j).diff(ctx.q(k))
                       + omega.entry(j, k).diff(ctx.q(i))
                       + omega.entry(k, i).diff(ctx.q(j)))
            contraction = contraction + d_omega * ctx.var(ctx.v(k))
        cells.append(Cell(_label("Hg3", i, j), _phi_skew(s, g, i, j) - contraction))
    return ConditionReport("gyroscopic", tuple(cells),
                           nonsingularity=nonsingularity_record(g))


def check_multiplier_dissipative(s: Sode, g: TensorField) -> ConditionReport:
    """Existence conditions for some dissipation function, in terms of
    the candidate alone: velocity symmetry, symmetry of the horizontal
    covariant differential, and vanishing of the curvature cycle."""
    _require_multiplier(s, g)
    ctx = s.ctx
    theta = theta_tensor(s)
    cells = _hd1_cells(s, g)
    for k in range(1, s.n + 1):
        for i, j in combinations(range(1, s.n + 1), 2):
            residual = (horizontal_apply(s, i, g.entry(j, k))
                        - horizontal_apply(s, j, g.entry(i, k)))
            for l in range(1, s.n + 1):
                residual = residual + g.entry(i, l) * theta.entry(l, j, k)
                residual = residual - g.entry(j, l) * theta.entry(l, i, k)
            cells.append(Cell(_label("DHSym", i, j, k), residual))
    for i, k, l in combinations(range(1, s.n + 1), 3):
        cells.append(Cell(_label("RCycle", i, k, l),
                          _curvature_cycle(s, g, i, k, l)))
    return ConditionReport("thm3", tuple(cells),
                           nonsingularity=nonsingularity_record(g))


def check_multiplier_gyroscopic(s: Sode, g: TensorField) -> ConditionReport:
    """Existence conditions for some gyroscopic two-form, in terms of
    the candidate alone: velocity symmetry, covariant constancy, and
    the lowered force endomorphism matching the velocity contraction of
    the curvature cycle. Additionally flags entries of the candidate or
    of the lowered force endomorphism whose denominator vanishes
    identically at zero velocity (those would not restrict smoothly)."""
    _require_multiplier(s, g)
    ctx = s.ctx
    cells = _hd1_cells(s, g) + _nabla_cells(s, g)
    for k, l in combinations(range(1, s.n + 1), 2):
        contraction = ctx.zero
        for i in range(1, s.n + 1):
            contraction = contraction + _curvature_cycle(s, g, i, k, l) * ctx.var(ctx.v(i))
        cells.append(Cell(_label("PhiR", k, l),
                          -_phi_skew(s, g, k, l) - contraction))
    cells.extend(_smooth_at_rest_cells(s, g))
    return ConditionReport("thm4", tuple(cells),
                           nonsingularity=nonsingularity_record(g))


def _smooth_at_rest_cells(s: Sode, g: TensorField):
    """Indicator cells (one when bad, zero when fine) for denominators
    vanishing identically at zero velocity."""
    ctx = s.ctx
    jac = jacobi(s)
    rest = {ctx.v(k): ctx.zero for k in range(1, s.n + 1)}
    cells = []
    for name, entry_of in (("g", g.entry),
                           ("PhiG", lambda i, j: sum(
                               (g.entry(i, k) * jac.entry(k, j)
                                for k in range(1, s.n + 1)), ctx.zero))):
        for i in range(1, s.n + 1):
            for j in range(i, s.n + 1):
                den = entry_of(i, j).denominator_expr()
                bad = den.subst(rest).is_zero()
                cells.append(Cell(_label(f"SmoothV0.{name}", i, j),
                                  ctx.one if bad else ctx.zero))
    return cells


def check_prop2a(s: Sode, g: TensorField) -> ConditionReport:
    """The reduced pair of multiplier conditions: velocity symmetry and
    covariant constancy along the flow, with the force-endomorphism
    condition deliberately left out."""
    _require_multiplier(s, g)
    cells = _hd1_cells(s, g) + _nabla_cells(s, g)
    return ConditionReport("prop2a", tuple(cells),
                           nonsingularity=nonsingularity_record(g))


def check_rayleigh(s: Sode, g: TensorField) -> ConditionReport:
    """Restriction to dissipation functions quadratic in velocity: the
    flow derivative of the candidate must be velocity-independent. The
    multiplier conditions themselves are reported in the notes, not
    enforced."""
    _require_multiplier(s, g)
    ctx = s.ctx
    grad = nabla_tensor02(s, g)
    cells = []
    for i in range(1, s.n + 1):
        for j in range(i, s.n + 1):
            for k in range(1, s.n + 1):
                cells.append(Cell(_label("VNablaG", i, j, k),
                                  grad.entry(i, j).diff(ctx.v(k))))
    base = check_multiplier_dissipative(s, g)
    verdict = "pass" if base.passes else "fail"
    notes = (f"multiplier conditions for a dissipative representation: {verdict}",)
    return ConditionReport("rayleigh", tuple(cells),
                           nonsingularity=nonsingularity_record(g), notes=notes)


# --------------------------------------------------------------------------
# implicit systems


@dataclass(frozen=True)
class ImplicitSystem:
    """A time-dependent implicit second-order system ``f_i = 0`` whose
    left-hand sides may involve positions, velocities and accelerations.
    The context must carry time and jets up to order four, because the
    closure coefficients involve two total time derivatives."""

    ctx: ExprContext
    f: Tuple[Expr, ...]

    def __post_init__(self):
        ctx = self.ctx
        if not ctx.uses_time or ctx.max_jet_order < 4:
            raise GeometryError(
                "implicit systems need a context with time and jets up to order 4")
        object.__setattr__(self, "f", tuple(self.f))
        if len(self.f) != ctx.n:
            raise DimensionMismatchError(
                f"expected {ctx.n} expressions, got {len(self.f)}")
        for position, entry in enumerate(self.f, start=1):
            if entry.ctx != ctx:
                raise DimensionMismatchError("expression from another context")
            for var in entry.free_varids():
                if var.kind == "jet" and var.order > 2:
                    raise ImplicitOrderError(
                        f"f_{position} depends on a jet of order {var.order}")

    @property
    def n(self) -> int:
        return self.ctx.n


def implicit_context(n: int, parameters: Sequence[str] = ()) -> ExprContext:
    """The standard context for implicit problems."""
    return ExprContext(n, parameters=tuple(parameters), max_jet_order=4,
                       uses_time=True)


def total_derivative(ctx: ExprContext, e: Expr) -> Expr:
    """Total time derivative along the jet prolongation, shifting each
    jet variable to the next order."""
    if e.ctx != ctx:
        raise DimensionMismatchError("expression from another context")
    for var in e.free_varids():
        if var.kind == "jet" and var.order >= ctx.max_jet_order:
            raise ImplicitOrderError(
                f"total derivative would need a jet of order {var.order + 1}")
    total = e.diff(ctx.time_var()) if ctx.uses_time else ctx.zero
    for i in range(1, ctx.n + 1):
        total = total + ctx.var(ctx.jet(i, 1)) * e.diff(ctx.q(i))
        for order in range(1, ctx.max_jet_order):
            total = total + (ctx.var(ctx.jet(i, order + 1))
                             * e.diff(ctx.jet(i, order)))
    return total


def _first_order_residual(ctx: ExprContext, e: Expr) -> Expr:
    """What remains of ``e`` beyond functions of (t, q, velocity)."""
    high = {ctx.jet(i, order): ctx.zero
            for i in range(1, ctx.n + 1)
            for order in range(2, ctx.max_jet_order + 1)}
    return e - e.subst(high)


def check_implicit(sys: ImplicitSystem) -> ConditionReport:
    """Generalized variational-with-dissipation test for an implicit
    system: the acceleration block must be symmetric, the two families
    of closure coefficients must be first order, the closure relations
    among their derivatives must hold, and — computed independently as
    a cross-check — the reduced formulation for systems affine in the
    acceleration must agree."""
    ctx = sys.ctx
    n = sys.n
    f = sys.f
    half = ctx.const(Fraction(1, 2))
    two = ctx.const(2)

    d2 = [ctx.jet(i, 2) for i in range(1, n + 1)]
    dq = [ctx.q(i) for i in range(1, n + 1)]
    dv = [ctx.jet(i, 1) for i in range(1, n + 1)]

    t_coeff = [[f[i].diff(d2[j]) - f[j].diff(d2[i]) for j in range(n)]
               for i in range(n)]
    s_coeff = [[f[i].diff(dv[j]) + f[j].diff(dv[i])
                - two * total_derivative(ctx, f[j].diff(d2[i]))
                for j in range(n)] for i in range(n)]
    r_coeff = [[f[i].diff(dq[j]) - f[j].diff(dq[i])
                - half * total_derivative(ctx, f[i].diff(dv[j]) - f[j].diff(dv[i]))
                + half * total_derivative(
                    ctx, total_derivative(ctx, f[i].diff(d2[j]) - f[j].diff(d2[i])))
                for j in range(n)] for i in range(n)]

    cells = []
    for i, j in combinations(range(1, n + 1), 2):
        cells.append(Cell(_label("T", i, j), t_coeff[i - 1][j - 1]))
    for i, j in combinations(range(1, n + 1), 2):
        cells.append(Cell(_label("OrderR", i, j),
                          _first_order_residual(ctx, r_coeff[i - 1][j - 1])))
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            cells.append(Cell(_label("OrderS", i, j),
                              _first_order_residual(ctx, s_coeff[i - 1][j - 1])))
    for i, j, k in combinations(range(1, n + 1), 3):
        residual = (r_coeff[i - 1][j - 1].diff(ctx.q(k))
                    + r_coeff[j - 1][k - 1].diff(ctx.q(i))
                    + r_coeff[k - 1][i - 1].diff(ctx.q(j)))
        cells.append(Cell(_label("C1", i, j, k), residual))
    for i, j in combinations(range(1, n + 1), 2):
        for k in range(1, n + 1):
            residual = (r_coeff[i - 1][j - 1].diff(ctx.jet(k, 1))
                        - half * (s_coeff[i - 1][k - 1].diff(ctx.q(j))
                                  - s_coeff[j - 1][k - 1].diff(ctx.q(i))))
            cells.append(Cell(_label("C2", i, j, k), residual))
    for i in range(1, n + 1):
        for j, k in combinations(range(1, n + 1), 2):
            residual = (s_coeff[i - 1][j - 1].diff(ctx.jet(k, 1))
                        - s_coeff[i - 1][k - 1].diff(ctx.jet(j, 1)))
            cells.append(Cell(_label("C3", i, j, k), residual))

    cells.extend(_reduced_route_cells(sys))

    block = TensorField(ctx, (0, 2),
                        {(i, j): f[i - 1].diff(d2[j - 1])
                         for i in range(1, n + 1) for j in range(1, n + 1)},
                        validate=False)
    return ConditionReport("implicit", tuple(cells),
                           nonsingularity=nonsingularity_record(block))


def _reduced_route_cells(sys: ImplicitSystem):
    """The reduced test for systems affine in the acceleration, used as
    an independent cross-check of the closure route."""
    ctx = sys.ctx
    n = sys.n
    half = ctx.const(Fraction(1, 2))
    rest = {ctx.jet(i, 2): ctx.zero for i in range(1, n + 1)}
    block = [[sys.f[i].diff(ctx.jet(j + 1, 2)) for j in range(n)]
             for i in range(n)]
    tail = [sys.f[i].subst(rest) for i in range(n)]

    cells = []
    for i, j in combinations(range(1, n + 1), 2):
        cells.append(Cell(_label("XGSym", i, j),
                          block[i - 1][j - 1] - block[j - 1][i - 1]))
    for i in range(1, n + 1):
        residual = sys.f[i - 1] - tail[i - 1]
        for j in range(1, n + 1):
            residual = residual - block[i - 1][j - 1] * ctx.var(ctx.jet(j, 2))
        cells.append(Cell(_label("XAffine", i), residual))
    for i in range(1, n + 1):
        for j, k in combinations(range(1, n + 1), 2):
            cells.append(Cell(_label("XA", i, j, k),
                              block[i - 1][j - 1].diff(ctx.jet(k, 1))
                              - block[i - 1][k - 1].diff(ctx.jet(j, 1))))
    for i, j in combinations(range(1, n + 1), 2):
        for k in range(1, n + 1):
            residual = (block[i - 1][k - 1].diff(ctx.q(j))
                        - half * tail[i - 1].diff(ctx.jet(j, 1)).diff(ctx.jet(k, 1))
                        - block[j - 1][k - 1].diff(ctx.q(i))
                        + half * tail[j - 1].diff(ctx.jet(i, 1)).diff(ctx.jet(k, 1)))
            cells.append(Cell(_label("XB", i, j, k), residual))
    for i, j, k in combinations(range(1, n + 1), 3):
        residual = ctx.zero
        for a, b, c in ((i, j, k), (j, k, i), (k, i, j)):
            residual = residual + (tail[a - 1].diff(ctx.q(b)).diff(ctx.jet(c, 1))
                                   - tail[a - 1].diff(ctx.q(c)).diff(ctx.jet(b, 1)))
        cells.append(Cell(_label("XC", i, j, k), residual))
    return cells
