"""Multiplier search inside finite ansatz families.

Each supported condition suite is linear in the multiplier entries (and
in an optional two-form), so declaring every entry as an unknown
rational combination of user-chosen basis functions turns "does a
multiplier of this shape exist?" into an exact linear-algebra question.
Assembly expands every condition cell into canonical polynomial form
and emits one equation per monomial; solving is fraction-exact Gaussian
elimination; the nonsingular-representative search is a bounded integer
enumeration over the solution space with a structural shortcut for
spaces that force an identically-zero row.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from math import gcd
from typing import Dict, List, Optional, Sequence, Tuple

from .exprcore import Expr, ExprContext, convert
from .geometry import (InternalInconsistencyError, Sode, TensorField,
                       matrix_det)
from .conditions import (check_classical, check_dissipative,
                         check_gyroscopic, check_multiplier_dissipative,
                         check_multiplier_gyroscopic, check_prop2a)

SUITES = ("classical", "dissipative", "gyroscopic", "thm3", "thm4", "prop2a")


class SolverError(Exception):
    """A search problem is malformed or cannot be assembled."""


class NonlinearCouplingError(SolverError):
    """A condition residual is not linear in the unknowns (defensive:
    the supported suites never trigger this)."""


@dataclass(frozen=True)
class AnsatzProblem:
    """A finite-dimensional search family: every multiplier entry (and
    optionally every two-form entry) is an unknown rational combination
    of fixed basis expressions. Symmetry is built in by declaring only
    entries with i <= j (respectively i < j)."""

    suite: str
    g_basis: Tuple[Tuple[Tuple[int, int], Tuple[Expr, ...]], ...]
    omega_basis: Tuple[Tuple[Tuple[int, int], Tuple[Expr, ...]], ...] = ()
    D: Optional[Expr] = None
    omega: Optional[TensorField] = None

    def __post_init__(self):
        if self.suite not in SUITES:
            raise SolverError(f"unknown suite {self.suite!r}")
        for (i, j), _basis in self.g_basis:
            if i > j:
                raise SolverError(
                    "multiplier entries must be declared with i <= j")
        for (i, j), _basis in self.omega_basis:
            if i >= j:
                raise SolverError(
                    "two-form entries must be declared with i < j")
        if self.omega_basis and self.suite != "gyroscopic":
            raise SolverError(
                "two-form unknowns only make sense for the gyroscopic suite")

    def layout(self) -> Tuple[Tuple[str, int, int, int], ...]:
        """Unknown index -> (part, i, j, basis position), in declaration
        order; this fixes the meaning of every coefficient vector."""
        slots = []
        for (i, j), basis in self.g_basis:
            for k in range(len(basis)):
                slots.append(("g", i, j, k))
        for (i, j), basis in self.omega_basis:
            for k in range(len(basis)):
                slots.append(("omega", i, j, k))
        return tuple(slots)


@dataclass(frozen=True)
class LinearSystem:
    """An exact linear system ``rows · c = rhs`` with one labelled row
    per (condition cell, monomial) pair."""

    unknowns: Tuple[str, ...]
    rows: Tuple[Tuple[Fraction, ...], ...]
    rhs: Tuple[Fraction, ...]
    labels: Tuple[str, ...]
    residuals: Tuple[Tuple[str, Expr], ...]
    context: ExprContext
    problem: AnsatzProblem


@dataclass
class SolutionSpace:
    """Affine solution set of an assembled system, plus the outcome of
    the nonsingular-representative search."""

    unknowns: Tuple[str, ...]
    layout: Tuple[Tuple[str, int, int, int], ...]
    nullspace: Tuple[Tuple[Fraction, ...], ...]
    particular: Optional[Tuple[Fraction, ...]]
    certificate_row: Optional[str]
    problem: AnsatzProblem
    representative: Optional[TensorField] = None
    representative_omega: Optional[TensorField] = None
    representative_det: Optional[Expr] = None
    representative_vector: Optional[Tuple[Fraction, ...]] = None
    exhausted: bool = False
    definitive_negative: bool = False

    @property
    def consistent(self) -> bool:
        return self.particular is not None

    @property
    def dimension(self) -> int:
        return len(self.nullspace)


# --------------------------------------------------------------------------
# ansatz constructors


def q_monomials(ctx: ExprContext, degree: int,
                variables: Optional[Sequence[int]] = None) -> Tuple[Expr, ...]:
    """All monomials in the chosen position variables of total degree at
    most ``degree``, constants first, in graded lexicographic order."""
    indices = tuple(variables) if variables is not None \
        else tuple(range(1, ctx.n + 1))
    monomials = [ctx.one]
    frontier = [ctx.one]
    for _ in range(degree):
        next_frontier = []
        seen = set()
        for base in frontier:
            for i in indices:
                candidate = base * ctx.var(ctx.q(i))
                key = str(candidate)
                if key not in seen:
                    seen.add(key)
                    next_frontier.append(candidate)
        monomials.extend(next_frontier)
        frontier = next_frontier
    return tuple(monomials)


def constant_ansatz(ctx: ExprContext, suite: str, **extra) -> AnsatzProblem:
    """Full symmetric multiplier with constant entries."""
    entries = tuple((pair, (ctx.one,)) for pair in
                    _symmetric_pairs(ctx.n))
    return AnsatzProblem(suite, entries, **extra)


def polynomial_ansatz(ctx: ExprContext, suite: str, degree: int,
                      variables: Optional[Sequence[int]] = None,
                      **extra) -> AnsatzProblem:
    """Full symmetric multiplier, entries polynomial in the chosen
    position variables up to the given total degree."""
    basis = q_monomials(ctx, degree, variables)
    entries = tuple((pair, basis) for pair in _symmetric_pairs(ctx.n))
    return AnsatzProblem(suite, entries, **extra)


def diagonal_ansatz(ctx: ExprContext, suite: str, degree: int,
                    variables: Optional[Sequence[int]] = None,
                    **extra) -> AnsatzProblem:
    """Diagonal multiplier, entries polynomial in the chosen position
    variables up to the given total degree."""
    basis = q_monomials(ctx, degree, variables)
    entries = tuple(((i, i), basis) for i in range(1, ctx.n + 1))
    return AnsatzProblem(suite, entries, **extra)


def _symmetric_pairs(n: int):
    return [(i, j) for i in range(1, n + 1) for j in range(i, n + 1)]


# --------------------------------------------------------------------------
# assembly


def _unknown_names(ctx: ExprContext, count: int) -> Tuple[str, ...]:
    prefix = "c"
    while any(name.startswith(prefix) and name[len(prefix):].isdigit()
              for name in ctx.parameters):
        prefix += "c"
    return tuple(f"{prefix}{k}" for k in range(count))


def assemble(s: Sode, p: AnsatzProblem) -> LinearSystem:
    """Expand the suite's condition cells over the ansatz into an exact
    linear system, one equation per monomial in everything that is not
    an unknown."""
    ctx = s.ctx
    layout = p.layout()
    names = _unknown_names(ctx, len(layout))
    ectx = ctx.with_parameters(names)
    s_e = Sode(ectx, [convert(f, ectx) for f in s.f])
    unknown_vars = [ectx.param(name) for name in names]

    cursor = 0
    g_entries: Dict[Tuple[int, int], Expr] = {}
    for (i, j), basis in p.g_basis:
        entry = ectx.zero
        for b in basis:
            entry = entry + ectx.var(unknown_vars[cursor]) * convert(b, ectx)
            cursor += 1
        g_entries[(i, j)] = entry
        if i != j:
            g_entries[(j, i)] = entry
    for i in range(1, s.n + 1):
        for j in range(1, s.n + 1):
            g_entries.setdefault((i, j), ectx.zero)
    g = TensorField(ectx, (0, 2), g_entries, sym=((1, 2),))

    omega = None
    if p.omega_basis:
        w_entries: Dict[Tuple[int, int], Expr] = {}
        for (i, j), basis in p.omega_basis:
            entry = ectx.zero
            for b in basis:
                entry = entry + ectx.var(unknown_vars[cursor]) * convert(b, ectx)
                cursor += 1
            w_entries[(i, j)] = entry
            w_entries[(j, i)] = -entry
        omega = TensorField(ectx, (0, 2), w_entries, antisym=((1, 2),))
    elif p.omega is not None:
        w_entries = {idx: convert(p.omega.entry(*idx), ectx)
                     for idx in p.omega.all_indices()}
        omega = TensorField(ectx, (0, 2), w_entries, antisym=((1, 2),))

    if p.suite == "classical":
        report = check_classical(s_e, g)
    elif p.suite == "dissipative":
        D = convert(p.D, ectx) if p.D is not None else ectx.zero
        report = check_dissipative(s_e, g, D)
    elif p.suite == "gyroscopic":
        report = check_gyroscopic(s_e, g, omega if omega is not None
                                  else _zero_two_form(ectx))
    elif p.suite == "thm3":
        report = check_multiplier_dissipative(s_e, g)
    elif p.suite == "thm4":
        report = check_multiplier_gyroscopic(s_e, g)
    else:
        report = check_prop2a(s_e, g)

    unknown_positions = {ectx.gen_index(var): k
                         for k, var in enumerate(unknown_vars)}
    rows: List[Tuple[Fraction, ...]] = []
    rhs: List[Fraction] = []
    labels: List[str] = []
    residuals: List[Tuple[str, Expr]] = []
    ring = ectx._ring
    for cell in report.cells:
        if cell.label.startswith("SmoothV0"):
            continue
        residual = cell.residual
        if residual.is_zero():
            continue
        residuals.append((cell.label, residual))
        for gen_position in unknown_positions:
            if residual.den.degree(ring.gens[gen_position]) > 0:
                raise NonlinearCouplingError(
                    f"unknowns in a denominator at cell {cell.label}")
        groups: Dict[tuple, Tuple[List[Fraction], Fraction]] = {}
        for monom, coeff in residual.num.terms():
            unknown_part = [(position, monom[position])
                            for position in unknown_positions
                            if monom[position]]
            total_degree = sum(e for _p, e in unknown_part)
            if total_degree > 1:
                raise NonlinearCouplingError(
                    f"nonlinear unknown coupling at cell {cell.label}")
            key = tuple(0 if position in unknown_positions else exponent
                        for position, exponent in enumerate(monom))
            row, constant = groups.setdefault(
                key, ([Fraction(0)] * len(names), Fraction(0)))
            value = Fraction(int(coeff.numerator), int(coeff.denominator))
            if total_degree == 0:
                groups[key] = (row, constant + value)
            else:
                row[unknown_positions[unknown_part[0][0]]] += value
        for key in sorted(groups):
            row, constant = groups[key]
            if all(a == 0 for a in row) and constant == 0:
                continue
            rows.append(tuple(row))
            rhs.append(-constant)
            labels.append(f"{cell.label} @ {_monomial_text(ectx, key)}")
    return LinearSystem(tuple(names), tuple(rows), tuple(rhs), tuple(labels),
                        tuple(residuals), ectx, p)


def _zero_two_form(ctx: ExprContext) -> TensorField:
    return TensorField(ctx, (0, 2), {}, antisym=((1, 2),))


def _monomial_text(ctx: ExprContext, key: tuple) -> str:
    if not any(key):
        return "1"
    ring = ctx._ring
    return str(Expr(ctx, ring.from_dict({key: ring.domain.one}), ring.one))


# --------------------------------------------------------------------------
# exact elimination


def solve(system: LinearSystem) -> SolutionSpace:
    """Reduced row echelon form over exact rationals; nullspace vectors
    are primitive-integer normalized, one per free unknown in
    declaration order. Every solution is re-verified symbolically
    against the assembled residuals."""
    count = len(system.unknowns)
    matrix = [list(row) + [value]
              for row, value in zip(system.rows, system.rhs)]
    pivot_of_column: Dict[int, int] = {}
    rank = 0
    for col in range(count):
        pivot_row = None
        for r in range(rank, len(matrix)):
            if matrix[r][col] != 0:
                pivot_row = r
                break
        if pivot_row is None:
            continue
        matrix[rank], matrix[pivot_row] = matrix[pivot_row], matrix[rank]
        pivot = matrix[rank][col]
        matrix[rank] = [value / pivot for value in matrix[rank]]
        for r in range(len(matrix)):
            if r != rank and matrix[r][col] != 0:
                factor = matrix[r][col]
                matrix[r] = [a - factor * b
                             for a, b in zip(matrix[r], matrix[rank])]
        pivot_of_column[col] = rank
        rank += 1

    certificate = None
    for r in range(rank, len(matrix)):
        if matrix[r][count] != 0:
            certificate = "0 = 1 after elimination: no solution in this ansatz"
            break

    if certificate is not None:
        return SolutionSpace(system.unknowns, system.problem.layout(), (),
                             None, certificate, system.problem)

    particular = [Fraction(0)] * count
    for col, r in pivot_of_column.items():
        particular[col] = matrix[r][count]

    free_columns = [c for c in range(count) if c not in pivot_of_column]
    basis = []
    for free in free_columns:
        vector = [Fraction(0)] * count
        vector[free] = Fraction(1)
        for col, r in pivot_of_column.items():
            vector[col] = -matrix[r][free]
        basis.append(_primitive(vector))

    space = SolutionSpace(system.unknowns, system.problem.layout(),
                          tuple(tuple(v) for v in basis), tuple(particular),
                          None, system.problem)
    _reverify(system, space)
    return space


def _primitive(vector: List[Fraction]) -> List[Fraction]:
    """Scale to coprime integers, keeping the first nonzero entry
    positive."""
    denominators = [value.denominator for value in vector if value != 0]
    if not denominators:
        return vector
    scale = 1
    for d in denominators:
        scale = scale * d // gcd(scale, d)
    integers = [value * scale for value in vector]
    common = 0
    for value in integers:
        common = gcd(common, int(value))
    integers = [value / common for value in integers]
    for value in integers:
        if value != 0:
            if value < 0:
                integers = [-v for v in integers]
            break
    return integers


def _reverify(system: LinearSystem, space: SolutionSpace):
    """Substitute the particular solution, and the particular solution
    shifted by every basis vector, into the assembled residuals and
    insist they vanish identically."""
    ectx = system.context
    unknown_vars = [ectx.param(name) for name in system.unknowns]
    points = [space.particular]
    for direction in space.nullspace:
        points.append(tuple(p + d for p, d in
                            zip(space.particular, direction)))
    for point in points:
        bindings = {var: ectx.const(value)
                    for var, value in zip(unknown_vars, point)}
        for label, residual in system.residuals:
            if not residual.subst(bindings).is_zero():
                raise InternalInconsistencyError(
                    f"solution fails re-verification at {label}")


# --------------------------------------------------------------------------
# representative search


def instantiate(problem: AnsatzProblem, ctx: ExprContext,
                vector: Sequence[Fraction]):
    """Substitute a coefficient vector into the ansatz, producing the
    multiplier (and the two-form when one was declared)."""
    layout = problem.layout()
    if len(vector) != len(layout):
        raise SolverError("coefficient vector does not match the ansatz")
    g_entries: Dict[Tuple[int, int], Expr] = {}
    w_entries: Dict[Tuple[int, int], Expr] = {}
    cursor = 0
    for (i, j), basis in problem.g_basis:
        entry = ctx.zero
        for b in basis:
            entry = entry + ctx.const(Fraction(vector[cursor])) * b
            cursor += 1
        g_entries[(i, j)] = entry
        if i != j:
            g_entries[(j, i)] = entry
    for i in range(1, ctx.n + 1):
        for j in range(1, ctx.n + 1):
            g_entries.setdefault((i, j), ctx.zero)
    g = TensorField(ctx, (0, 2), g_entries, sym=((1, 2),))
    omega = None
    if problem.omega_basis:
        for (i, j), basis in problem.omega_basis:
            entry = ctx.zero
            for b in basis:
                entry = entry + ctx.const(Fraction(vector[cursor])) * b
                cursor += 1
            w_entries[(i, j)] = entry
            w_entries[(j, i)] = -entry
        omega = TensorField(ctx, (0, 2), w_entries, antisym=((1, 2),))
    return g, omega


def _forced_zero_rows(space: SolutionSpace, n: int) -> List[int]:
    """Rows of the multiplier that vanish for every point of the
    solution space — a structural proof that no member is nonsingular."""
    movable = [False] * len(space.layout)
    for vector in space.nullspace:
        for k, value in enumerate(vector):
            if value != 0:
                movable[k] = True
    if space.particular is not None:
        for k, value in enumerate(space.particular):
            if value != 0:
                movable[k] = True
    alive = {}
    for k, (part, i, j, _position) in enumerate(space.layout):
        if part != "g":
            continue
        alive.setdefault((i, j), False)
        if movable[k]:
            alive[(i, j)] = True
    rows = []
    for i in range(1, n + 1):
        entries = [alive.get((min(i, j), max(i, j)), False)
                   for j in range(1, n + 1)]
        if not any(entries):
            rows.append(i)
    return rows


def coefficient_sequence(bound: int):
    """0, 1, -1, 2, -2, ... up to the bound."""
    yield 0
    for k in range(1, bound + 1):
        yield k
        yield -k


def find_nonsingular(space: SolutionSpace, s: Sode,
                     bound: int) -> Optional[TensorField]:
    """Search integer combinations over the solution space for a member
    with non-vanishing determinant; the first hit in enumeration order
    is re-checked through the full suite and recorded on the space."""
    if not space.consistent:
        space.exhausted = True
        return None
    if _forced_zero_rows(space, s.n):
        space.definitive_negative = True
        space.exhausted = True
        return None
    problem = space.problem
    sequence = tuple(coefficient_sequence(bound))
    dimension = space.dimension
    for combo in product(sequence, repeat=dimension):
        vector = list(space.particular)
        for weight, direction in zip(combo, space.nullspace):
            if weight:
                for k, value in enumerate(direction):
                    vector[k] += weight * value
        if all(value == 0 for value in vector):
            continue
        g, omega = instantiate(problem, s.ctx, vector)
        determinant = matrix_det(g)
        if determinant.is_zero():
            continue
        if not _suite_passes(problem, s, g, omega):
            continue
        space.representative = g
        space.representative_omega = omega
        space.representative_det = determinant
        space.representative_vector = tuple(vector)
        return g
    space.exhausted = True
    return None


def _suite_passes(problem: AnsatzProblem, s: Sode, g: TensorField,
                  omega: Optional[TensorField]) -> bool:
    """Full symbolic re-check of a candidate in the original context
    (the soundness invariant for returned representatives)."""
    suite = problem.suite
    if suite == "classical":
        return check_classical(s, g).passes
    if suite == "dissipative":
        D = problem.D if problem.D is not None else s.ctx.zero
        return check_dissipative(s, g, D).passes
    if suite == "gyroscopic":
        w = omega if omega is not None else \
            (problem.omega if problem.omega is not None
             else _zero_two_form(s.ctx))
        return check_gyroscopic(s, g, w).passes
    if suite == "thm3":
        return check_multiplier_dissipative(s, g).passes
    if suite == "thm4":
        return check_multiplier_gyroscopic(s, g).passes
    return check_prop2a(s, g).passes
