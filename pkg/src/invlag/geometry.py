"""Geometric objects attached to an explicit second-order system.

A system ``d2q^i = f^i(q, v)`` determines a nonlinear connection with
coefficients ``-1/2 * d f^i / d v^j``, horizontal derivatives, the
Jacobi endomorphism, a curvature tensor, the vertical derivative of the
connection (``theta``), and a covariant derivative along the flow
acting on tensor fields. Those objects are what every condition suite
in :mod:`invlag.conditions` is written in terms of, so they are built
here once, exactly, and cached per system.

Index convention: all public indices are 1-based, matching the
``q1..qn`` naming of the expression layer.
"""

from __future__ import annotations

from fractions import Fraction
from itertools import permutations, product
from typing import Iterable, List, Sequence, Tuple

from .exprcore import Expr, ExprContext


class GeometryError(Exception):
    """Invalid input to a geometric operation."""


class DimensionMismatchError(GeometryError):
    """Objects over different dimensions or contexts were mixed."""


class InternalInconsistencyError(Exception):
    """Two independent defining formulas disagreed; indicates a kernel bug."""


# --------------------------------------------------------------------------
# tensor fields


class TensorField:
    """A dense tensor of expressions with declared index symmetries.

    ``shape`` is the (contravariant, covariant) signature, e.g. (1, 1)
    for the Jacobi endomorphism or (0, 2) for a metric candidate.
    Entries are addressed by full 1-based index tuples; missing entries
    read as zero. Declared symmetries (``sym``/``antisym`` are pairs of
    1-based slot positions) are verified entry-wise on construction.
    """

    __slots__ = ("ctx", "n", "shape", "entries", "sym", "antisym")

    def __init__(self, ctx: ExprContext, shape: Tuple[int, int], entries: dict,
                 sym: Iterable[Tuple[int, int]] = (),
                 antisym: Iterable[Tuple[int, int]] = (),
                 validate: bool = True):
        self.ctx = ctx
        self.n = ctx.n
        self.shape = (int(shape[0]), int(shape[1]))
        rank = self.rank
        clean = {}
        for idx, value in entries.items():
            idx = tuple(idx)
            if len(idx) != rank or not all(1 <= i <= self.n for i in idx):
                raise GeometryError(f"bad index {idx} for rank-{rank} tensor")
            if value.ctx != ctx:
                raise DimensionMismatchError("entry from a different context")
            if not value.is_zero():
                clean[idx] = value
        self.entries = clean
        self.sym = tuple(tuple(p) for p in sym)
        self.antisym = tuple(tuple(p) for p in antisym)
        if validate:
            self._validate_symmetries()

    @property
    def rank(self) -> int:
        return self.shape[0] + self.shape[1]

    def entry(self, *idx: int) -> Expr:
        return self.entries.get(tuple(idx), self.ctx.zero)

    def _validate_symmetries(self):
        for slots, wanted_sign in ((self.sym, 1), (self.antisym, -1)):
            for s1, s2 in slots:
                for idx in self.entries:
                    swapped = list(idx)
                    swapped[s1 - 1], swapped[s2 - 1] = swapped[s2 - 1], swapped[s1 - 1]
                    other = self.entry(*swapped)
                    expected = other if wanted_sign == 1 else -other
                    if self.entry(*idx) != expected:
                        kind = "symmetric" if wanted_sign == 1 else "antisymmetric"
                        raise GeometryError(
                            f"declared {kind} slots {(s1, s2)} violated at {idx}")

    def __eq__(self, other):
        if not isinstance(other, TensorField):
            return NotImplemented
        if self.ctx != other.ctx or self.shape != other.shape:
            return False
        keys = set(self.entries) | set(other.entries)
        return all(self.entry(*k) == other.entry(*k) for k in keys)

    def __repr__(self):
        body = ", ".join(f"{idx}: {value}" for idx, value in sorted(self.entries.items()))
        return f"TensorField(shape={self.shape}, {{{body}}})"

    def all_indices(self):
        return product(range(1, self.n + 1), repeat=self.rank)

    def is_zero(self) -> bool:
        return not self.entries

    @staticmethod
    def from_matrix(ctx: ExprContext, rows: Sequence[Sequence[Expr]],
                    shape: Tuple[int, int] = (0, 2),
                    sym: Iterable[Tuple[int, int]] = (),
                    antisym: Iterable[Tuple[int, int]] = ()) -> "TensorField":
        n = ctx.n
        if len(rows) != n or any(len(r) != n for r in rows):
            raise DimensionMismatchError("matrix does not match the dimension")
        entries = {(i + 1, j + 1): rows[i][j] for i in range(n) for j in range(n)}
        return TensorField(ctx, shape, entries, sym=sym, antisym=antisym)

    def matrix(self) -> List[List[Expr]]:
        if self.rank != 2:
            raise GeometryError("only rank-2 tensors have a matrix form")
        return [[self.entry(i, j) for j in range(1, self.n + 1)]
                for i in range(1, self.n + 1)]


def identity_matrix(ctx: ExprContext) -> TensorField:
    entries = {(i, i): ctx.one for i in range(1, ctx.n + 1)}
    return TensorField(ctx, (0, 2), entries, sym=((1, 2),))


def matrix_det(tensor: TensorField) -> Expr:
    """Determinant of a rank-2 tensor, by the Leibniz sum (n <= 4 here)."""
    if tensor.rank != 2:
        raise GeometryError("determinant needs a rank-2 tensor")
    n = tensor.n
    total = tensor.ctx.zero
    for perm in permutations(range(1, n + 1)):
        sign = _perm_sign(perm)
        term = tensor.ctx.one
        for i in range(1, n + 1):
            term = term * tensor.entry(i, perm[i - 1])
            if term.is_zero():
                break
        total = total + term if sign > 0 else total - term
    return total


def _perm_sign(perm) -> int:
    sign = 1
    seen = [False] * len(perm)
    for start in range(len(perm)):
        if seen[start]:
            continue
        length = 0
        j = start
        while not seen[j]:
            seen[j] = True
            j = perm[j] - 1
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def matrix_solve(tensor: TensorField, rhs: Sequence[Expr]) -> List[Expr]:
    """Solve ``tensor * x = rhs`` by Cramer's rule; the determinant must
    not be the zero expression."""
    det = matrix_det(tensor)
    if det.is_zero():
        raise GeometryError("matrix is singular as an expression")
    n = tensor.n
    solution = []
    for column in range(1, n + 1):
        modified = {}
        for i in range(1, n + 1):
            for j in range(1, n + 1):
                modified[(i, j)] = rhs[i - 1] if j == column else tensor.entry(i, j)
        solution.append(matrix_det(TensorField(tensor.ctx, (0, 2), modified,
                                               validate=False)) / det)
    return solution


# --------------------------------------------------------------------------
# second-order systems


class Sode:
    """An explicit autonomous second-order system ``d2q^i = f^i(q, v)``.

    The context must be first-order (jets up to order 1) and time-free,
    which also guarantees the right-hand sides depend on positions,
    velocities and parameters only. Derived geometric objects are
    memoised on the instance.
    """

    def __init__(self, ctx: ExprContext, f: Sequence[Expr]):
        if ctx.max_jet_order != 1:
            raise GeometryError("explicit systems live in a first-order context")
        if ctx.uses_time:
            raise GeometryError("explicit systems here are autonomous; drop t")
        f = tuple(f)
        if len(f) != ctx.n:
            raise DimensionMismatchError(
                f"expected {ctx.n} right-hand sides, got {len(f)}")
        for entry in f:
            if entry.ctx != ctx:
                raise DimensionMismatchError("right-hand side from another context")
        self.ctx = ctx
        self.n = ctx.n
        self.f = f
        self._memo = {}

    def __repr__(self):
        return f"Sode(n={self.n}, f={[str(e) for e in self.f]})"


def connection(s: Sode) -> TensorField:
    """Connection coefficients: ``-1/2 * d f^i / d v^j`` (slot order (i, j))."""
    cached = s._memo.get("connection")
    if cached is None:
        ctx = s.ctx
        entries = {}
        half = ctx.const(Fraction(-1, 2))
        for i in range(1, s.n + 1):
            for j in range(1, s.n + 1):
                entries[(i, j)] = s.f[i - 1].diff(ctx.v(j)) * half
        cached = TensorField(ctx, (1, 1), entries)
        s._memo["connection"] = cached
    return cached


def gamma_apply(s: Sode, F: Expr) -> Expr:
    """Derivative of ``F`` along the flow: ``v^k dF/dq^k + f^k dF/dv^k``."""
    ctx = s.ctx
    if F.ctx != ctx:
        raise DimensionMismatchError("function from another context")
    total = ctx.zero
    for k in range(1, s.n + 1):
        total = total + ctx.var(ctx.v(k)) * F.diff(ctx.q(k))
        total = total + s.f[k - 1] * F.diff(ctx.v(k))
    return total


def horizontal_apply(s: Sode, i: int, F: Expr) -> Expr:
    """Horizontal derivative: ``dF/dq^i - Gamma^j_i dF/dv^j``."""
    ctx = s.ctx
    if F.ctx != ctx:
        raise DimensionMismatchError("function from another context")
    conn = connection(s)
    total = F.diff(ctx.q(i))
    for j in range(1, s.n + 1):
        total = total - conn.entry(j, i) * F.diff(ctx.v(j))
    return total


def jacobi(s: Sode) -> TensorField:
    """The Jacobi endomorphism of the system (a (1,1) tensor)."""
    cached = s._memo.get("jacobi")
    if cached is None:
        ctx = s.ctx
        conn = connection(s)
        entries = {}
        for i in range(1, s.n + 1):
            for j in range(1, s.n + 1):
                value = -s.f[i - 1].diff(ctx.q(j)) - gamma_apply(s, conn.entry(i, j))
                for k in range(1, s.n + 1):
                    value = value - conn.entry(k, j) * conn.entry(i, k)
                entries[(i, j)] = value
        cached = TensorField(ctx, (1, 1), entries)
        s._memo["jacobi"] = cached
    return cached


def curvature(s: Sode) -> TensorField:
    """Curvature of the connection, slot order (k, i, j), antisymmetric
    in (i, j).

    Computed from the horizontal derivatives of the connection and
    cross-checked against one third of the vertical antisymmetrised
    derivative of the Jacobi endomorphism; a mismatch would mean the
    expression kernel itself is broken, and raises.
    """
    cached = s._memo.get("curvature")
    if cached is None:
        ctx = s.ctx
        conn = connection(s)
        jac = jacobi(s)
        third = ctx.const(Fraction(1, 3))
        entries = {}
        for k in range(1, s.n + 1):
            for i in range(1, s.n + 1):
                for j in range(1, s.n + 1):
                    from_connection = (horizontal_apply(s, j, conn.entry(k, i))
                                       - horizontal_apply(s, i, conn.entry(k, j)))
                    from_jacobi = (jac.entry(k, j).diff(ctx.v(i))
                                   - jac.entry(k, i).diff(ctx.v(j))) * third
                    if from_connection != from_jacobi:
                        raise InternalInconsistencyError(
                            f"curvature formulas disagree at {(k, i, j)}: "
                            f"{from_connection} vs {from_jacobi}")
                    entries[(k, i, j)] = from_connection
        cached = TensorField(ctx, (1, 2), entries, antisym=((2, 3),))
        s._memo["curvature"] = cached
    return cached


def theta_tensor(s: Sode) -> TensorField:
    """Vertical derivative of the connection, slot order (l, j, k):
    ``d Gamma^l_j / d v^k``; symmetric in the two lower slots because
    the connection has no torsion (asserted)."""
    cached = s._memo.get("theta")
    if cached is None:
        ctx = s.ctx
        conn = connection(s)
        entries = {}
        for l in range(1, s.n + 1):
            for j in range(1, s.n + 1):
                for k in range(1, s.n + 1):
                    entries[(l, j, k)] = conn.entry(l, j).diff(ctx.v(k))
        try:
            cached = TensorField(ctx, (1, 2), entries, sym=((2, 3),))
        except GeometryError as exc:
            raise InternalInconsistencyError(
                f"connection acquired torsion: {exc}") from exc
        s._memo["theta"] = cached
    return cached


def nabla_tensor02(s: Sode, g: TensorField) -> TensorField:
    """Covariant derivative along the flow of a (0,2) tensor:
    ``Gamma(g_ij) - g_ik Gamma^k_j - g_jk Gamma^k_i``."""
    _expect_02(s, g)
    conn = connection(s)
    entries = {}
    for i in range(1, s.n + 1):
        for j in range(1, s.n + 1):
            value = gamma_apply(s, g.entry(i, j))
            for k in range(1, s.n + 1):
                value = value - g.entry(i, k) * conn.entry(k, j)
                value = value - g.entry(j, k) * conn.entry(k, i)
            entries[(i, j)] = value
    return TensorField(s.ctx, (0, 2), entries)


def nabla_tensor12(s: Sode, T: TensorField) -> TensorField:
    """Covariant derivative along the flow of a (1,2) tensor (slot order
    (k, i, j)), by the Leibniz extension of the (1,0)/(0,1) rules."""
    if T.ctx != s.ctx or T.shape != (1, 2):
        raise DimensionMismatchError("expected a (1,2) tensor over the system")
    conn = connection(s)
    entries = {}
    for k in range(1, s.n + 1):
        for i in range(1, s.n + 1):
            for j in range(1, s.n + 1):
                value = gamma_apply(s, T.entry(k, i, j))
                for l in range(1, s.n + 1):
                    value = value + conn.entry(k, l) * T.entry(l, i, j)
                    value = value - conn.entry(l, i) * T.entry(k, l, j)
                    value = value - conn.entry(l, j) * T.entry(k, i, l)
                entries[(k, i, j)] = value
    return TensorField(s.ctx, (1, 2), entries)


def dh_jacobi(s: Sode) -> TensorField:
    """Antisymmetrised horizontal derivative of the Jacobi endomorphism,
    slot order (k, i, j); equals the covariant derivative of the
    curvature along the flow (tested property)."""
    jac = jacobi(s)
    theta = theta_tensor(s)
    entries = {}
    for k in range(1, s.n + 1):
        for i in range(1, s.n + 1):
            for j in range(1, s.n + 1):
                value = (horizontal_apply(s, i, jac.entry(k, j))
                         - horizontal_apply(s, j, jac.entry(k, i)))
                for l in range(1, s.n + 1):
                    value = value + jac.entry(l, j) * theta.entry(k, l, i)
                    value = value - jac.entry(l, i) * theta.entry(k, l, j)
                entries[(k, i, j)] = value
    return TensorField(s.ctx, (1, 2), entries)


def _expect_02(s: Sode, g: TensorField):
    if g.ctx != s.ctx:
        raise DimensionMismatchError("tensor belongs to another context")
    if g.shape != (0, 2):
        raise DimensionMismatchError("expected a (0,2) tensor")
