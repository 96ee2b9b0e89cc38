"""Seeded exact-rational spot checks.

Symbolic verdicts in this package are decisions about canonical forms;
these helpers re-confirm them the pedestrian way, by evaluating at
random rational points and by comparing derivatives against central
finite differences. Everything stays in ``fractions.Fraction``, so a
check that passes once passes always: there is no floating-point noise,
only the seeded choice of sample points.

The seed comes from the ``INVLAG_SEED`` environment variable when set,
otherwise a fixed default, keeping CLI reports reproducible.
"""

from __future__ import annotations

import os
import random
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence, Tuple

from .exprcore import Expr, ExprContext, PoleError, VarId

DEFAULT_SEED = 1729
DEFAULT_POINTS = 5

#: |central difference - symbolic derivative| <= REL_TOL * (1 + |value|)
REL_TOL = Fraction(1, 10**6)
#: finite-difference step, kept exact
STEP = Fraction(1, 10**4)


def seeded_rng(seed: Optional[int] = None) -> random.Random:
    """A deterministic RNG honouring the INVLAG_SEED environment variable."""
    if seed is None:
        seed = int(os.environ.get("INVLAG_SEED", DEFAULT_SEED))
    return random.Random(seed)


def sample_value(rng: random.Random) -> Fraction:
    return Fraction(rng.randint(-9, 9), rng.randint(1, 4))


def sample_point(ctx: ExprContext, rng: random.Random,
                 avoid: Iterable[Expr] = (), max_tries: int = 500) -> dict:
    """A random rational point assigning every variable of the context,
    avoiding the poles of the given expressions."""
    avoid = tuple(avoid)
    variables = ctx.all_varids()
    for _ in range(max_tries):
        point = {var: sample_value(rng) for var in variables}
        try:
            for expr in avoid:
                expr.eval_num(point)
        except PoleError:
            continue
        return point
    raise RuntimeError("no pole-free sample point found")


def zero_at_random_points(exprs: Sequence[Expr], rng: random.Random,
                          points: int = DEFAULT_POINTS) -> bool:
    """True when every expression evaluates to exactly 0 at ``points``
    random pole-free points."""
    if not exprs:
        return True
    ctx = exprs[0].ctx
    for _ in range(points):
        point = sample_point(ctx, rng, avoid=exprs)
        for expr in exprs:
            if expr.eval_num(point) != 0:
                return False
    return True


def nonzero_somewhere(expr: Expr, rng: random.Random, tries: int = 25) -> bool:
    """True when some random pole-free point gives a nonzero value."""
    for _ in range(tries):
        point = sample_point(expr.ctx, rng, avoid=(expr,))
        if expr.eval_num(point) != 0:
            return True
    return False


def _shifted(point: Mapping[VarId, Fraction], var: VarId, delta: Fraction) -> dict:
    moved = dict(point)
    moved[var] = moved[var] + delta
    return moved


def central_difference(expr: Expr, var: VarId, point: Mapping[VarId, Fraction],
                       step: Fraction = STEP) -> Fraction:
    plus = expr.eval_num(_shifted(point, var, step))
    minus = expr.eval_num(_shifted(point, var, -step))
    return (plus - minus) / (2 * step)


def diff_spot_check(expr: Expr, var: VarId, rng: random.Random,
                    step: Fraction = STEP, rel_tol: Fraction = REL_TOL,
                    max_tries: int = 50) -> Tuple[Fraction, Fraction]:
    """Compare the symbolic derivative against an exact central difference.

    Returns ``(difference, bound)`` with ``difference <= bound``;
    raises AssertionError when the tolerance is violated.
    """
    derivative = expr.diff(var)
    for _ in range(max_tries):
        point = sample_point(expr.ctx, rng, avoid=(expr, derivative))
        try:
            approx = central_difference(expr, var, point, step)
        except PoleError:
            continue
        exact = derivative.eval_num(point)
        gap = abs(approx - exact)
        bound = rel_tol * (1 + abs(exact))
        if gap > bound:
            raise AssertionError(
                f"central difference {float(approx)} vs symbolic {float(exact)}"
                f" exceeds tolerance at {point}")
        return gap, bound
    raise RuntimeError("no usable sample point for the finite-difference check")


def crosscheck_cells(cells: Sequence[Tuple[str, Expr]], rng: random.Random,
                     points: int = DEFAULT_POINTS) -> dict:
    """Numerically re-confirm symbolic pass/fail verdicts for report cells.

    For a residual deemed identically zero, every sampled evaluation must
    be exactly 0; for a nonzero residual some sample must be nonzero.
    Returns a summary suitable for embedding in a report.
    """
    failures = []
    for label, residual in cells:
        if residual.is_zero():
            if not zero_at_random_points([residual], rng, points):
                failures.append(label)
        else:
            if not nonzero_somewhere(residual, rng):
                failures.append(label)
    return {
        "points": points,
        "cells_checked": len(cells),
        "consistent": not failures,
        "disagreements": failures,
    }
