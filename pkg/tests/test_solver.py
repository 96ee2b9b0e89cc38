"""Tests for the ansatz-family multiplier search."""

from fractions import Fraction

import pytest

from invlag.exprcore import ExprContext
from invlag.geometry import Sode, TensorField, matrix_det
from invlag.solver import (AnsatzProblem, NonlinearCouplingError, SolverError,
                           assemble, constant_ansatz, diagonal_ansatz,
                           find_nonsingular, instantiate, polynomial_ansatz,
                           q_monomials, solve)
from invlag.conditions import check_multiplier_dissipative


def planar_drag():
    ctx = ExprContext(2, parameters=("a", "b", "omega"))
    f = [ctx.parse("-a*q1 - b*q2 - omega*v1"),
         ctx.parse("b*q1 - a*q2 + omega*v2")]
    return ctx, Sode(ctx, f)


def coupled_three():
    ctx = ExprContext(3)
    f = [ctx.parse("q2*v1*v3"), ctx.parse("v3^2"),
         ctx.parse("v1^2 - (1/q2)*v2*v3")]
    return ctx, Sode(ctx, f)


def chain_four(b="b"):
    if b == "b":
        ctx = ExprContext(4, parameters=("b",))
    else:
        ctx = ExprContext(4)
    f = [ctx.parse(f"{b}*v1*v4"), ctx.parse("v2*v4"),
         ctx.parse(f"(1-({b}))*v1*v2 + ({b})*q2*v1*v4"
                   f" - ({b})*q1*v2*v4 + (({b})+1)*v3*v4"),
         ctx.parse("0")]
    return ctx, Sode(ctx, f)


def test_monomial_basis_enumeration():
    ctx = ExprContext(2)
    basis = q_monomials(ctx, 2)
    assert basis[0] == ctx.one
    assert set(str(b) for b in basis) == {
        "1", "q1", "q2", "q1^2", "q1*q2", "q2^2"}
    restricted = q_monomials(ctx, 1, variables=(2,))
    assert [str(b) for b in restricted] == ["1", "q2"]


def test_constant_family_is_unconstrained_for_drag_system():
    """Every constant symmetric matrix satisfies the dissipative
    existence conditions here, so assembly produces no equations at
    all and the whole coefficient space survives."""
    ctx, s = planar_drag()
    system = assemble(s, constant_ansatz(ctx, "thm3"))
    assert len(system.rows) == 0
    space = solve(system)
    assert space.consistent
    assert space.dimension == 3
    rep = find_nonsingular(space, s, 1)
    assert rep is not None
    assert not matrix_det(rep).is_zero()
    assert check_multiplier_dissipative(s, rep).passes


def test_parameter_splitting_matches_instantiation():
    """The nullspace computed with symbolic parameters is identical to
    the one computed after substituting rational values."""
    ctx, s = planar_drag()
    symbolic = solve(assemble(s, constant_ansatz(ctx, "thm3")))
    ctx2 = ExprContext(2)
    f = [ctx2.parse("-1/2*q1 - 2*q2 - 3*v1"),
         ctx2.parse("2*q1 - 1/2*q2 + 3*v2")]
    s2 = Sode(ctx2, f)
    instantiated = solve(assemble(s2, constant_ansatz(ctx2, "thm3")))
    assert instantiated.nullspace == symbolic.nullspace
    assert instantiated.dimension == 3


def test_diagonal_polynomial_family_pins_unique_multiplier():
    """The diagonal quadratic family on the coupled system collapses to
    a single line, and the representative search lands on it."""
    ctx, s = coupled_three()
    problem = diagonal_ansatz(ctx, "thm3", 2)
    system = assemble(s, problem)
    assert len(system.unknowns) == 30
    space = solve(system)
    assert space.dimension == 1
    g, _ = instantiate(problem, ctx, space.nullspace[0])
    assert g.entry(1, 1) == ctx.parse("4")
    assert g.entry(2, 2) == ctx.one
    assert g.entry(3, 3) == ctx.parse("2*q2")
    rep = find_nonsingular(space, s, 1)
    assert rep is not None
    assert space.representative_det == ctx.parse("8*q2")
    assert check_multiplier_dissipative(s, rep).passes


def test_translation_invariant_family_is_structurally_singular():
    """On the four-dimensional chain system the invariant family forces
    an entire multiplier row to zero: a definitive negative, not just
    an exhausted search."""
    ctx, s = chain_four()
    problem = polynomial_ansatz(ctx, "thm3", 1, variables=(1, 2))
    space = solve(assemble(s, problem))
    assert space.consistent
    forced = {(1, 3), (2, 3), (3, 3), (3, 4)}
    for k, (part, i, j, _pos) in enumerate(space.layout):
        if (i, j) in forced:
            assert all(vec[k] == 0 for vec in space.nullspace)
    assert find_nonsingular(space, s, 2) is None
    assert space.definitive_negative


def test_position_family_under_gyroscopic_conditions_fails_too():
    ctx, s = chain_four()
    space = solve(assemble(s, polynomial_ansatz(ctx, "thm4", 1)))
    assert find_nonsingular(space, s, 2) is None
    assert space.exhausted


@pytest.mark.parametrize("value", ["1/2", "-1/3", "3/4"])
def test_chain_gyroscopic_negative_survives_instantiation(value):
    ctx, s = chain_four(b=value)
    space = solve(assemble(s, polynomial_ansatz(ctx, "thm4", 1)))
    assert find_nonsingular(space, s, 2) is None


def test_empty_family_is_definitively_singular():
    ctx = ExprContext(2)
    s = Sode(ctx, [ctx.zero, ctx.zero])
    space = solve(assemble(s, AnsatzProblem("thm3", ())))
    assert find_nonsingular(space, s, 3) is None
    assert space.definitive_negative


def test_free_particle_identity_family():
    ctx = ExprContext(2)
    s = Sode(ctx, [ctx.zero, ctx.zero])
    problem = AnsatzProblem("classical", (((1, 1), (ctx.one,)),
                                          ((2, 2), (ctx.one,))))
    space = solve(assemble(s, problem))
    assert space.consistent and space.dimension == 2
    rep = find_nonsingular(space, s, 1)
    assert rep is not None
    assert matrix_det(rep) == ctx.one


def test_inconsistent_fixed_dissipation_yields_empty_space():
    """A cubic dissipation function cannot pair with any constant
    multiplier on a trivial system: the inhomogeneous system has no
    solution and says so."""
    ctx = ExprContext(1)
    s = Sode(ctx, [ctx.zero])
    problem = AnsatzProblem("dissipative", (((1, 1), (ctx.one,)),),
                            D=ctx.parse("v1^3"))
    space = solve(assemble(s, problem))
    assert not space.consistent
    assert space.certificate_row is not None
    assert space.dimension == 0
    assert find_nonsingular(space, s, 1) is None
    assert space.exhausted


def test_joint_two_form_search():
    """Unknown two-form entries ride along with the multiplier in the
    gyroscopic suite; the first hit is a valid pair."""
    ctx, s = planar_drag()
    pairs = tuple((pair, (ctx.one,)) for pair in ((1, 1), (1, 2), (2, 2)))
    problem = AnsatzProblem("gyroscopic", pairs,
                            omega_basis=(((1, 2), (ctx.one,)),))
    space = solve(assemble(s, problem))
    assert space.consistent
    rep = find_nonsingular(space, s, 1)
    assert rep is not None
    assert space.representative_omega is not None


def test_problem_validation():
    ctx = ExprContext(2)
    with pytest.raises(SolverError):
        AnsatzProblem("nonsense", ())
    with pytest.raises(SolverError):
        AnsatzProblem("thm3", (((2, 1), (ctx.one,)),))
    with pytest.raises(SolverError):
        AnsatzProblem("thm3", (), omega_basis=(((1, 2), (ctx.one,)),))
    with pytest.raises(SolverError):
        instantiate(AnsatzProblem("thm3", (((1, 1), (ctx.one,)),)), ctx,
                    (Fraction(1), Fraction(2)))


def test_unknown_names_avoid_declared_parameters():
    ctx = ExprContext(1, parameters=("c0",))
    s = Sode(ctx, [ctx.parse("-q1")])
    problem = AnsatzProblem("classical", (((1, 1), (ctx.one,)),))
    system = assemble(s, problem)
    assert all(name not in ctx.parameters for name in system.unknowns)
    space = solve(system)
    assert space.dimension == 1


def test_solution_ordering_is_deterministic():
    ctx, s = planar_drag()
    problem = constant_ansatz(ctx, "thm3")
    first = solve(assemble(s, problem))
    second = solve(assemble(s, problem))
    assert first.nullspace == second.nullspace
    rep_a = find_nonsingular(first, s, 1)
    rep_b = find_nonsingular(second, s, 1)
    assert rep_a == rep_b
    assert first.representative_vector == second.representative_vector
