"""Canonical multivariate rational expressions with a decidable zero test.

Everything downstream (geometric objects, condition residuals, linear
ansatz solving) eventually reduces to asking whether some expression is
identically zero. To make that decidable, every value here is a reduced
fraction of expanded multivariate polynomials over exact rationals:
two expressions are equal iff their canonical forms are structurally
identical, and ``is_zero`` is just a comparison with the zero polynomial.

Variables are identified by :class:`VarId` — the time variable, the
positions ``q<i>``, velocity/acceleration jets up to fourth order
(``v<i>`` is the order-1 jet of ``q<i>``), and named constant
parameters. An :class:`ExprContext` pins down the dimension ``n``, the
highest jet order, the parameter names and whether time occurs; all
expressions carry their context and refuse to mix with another one.

The polynomial arithmetic itself is delegated to ``sympy.polys.rings``
(dense-exponent sparse polynomials over QQ); the grammar, printing,
substitution, integration and evaluation layers are implemented here.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Union

from sympy.polys.domains import QQ
from sympy.polys.rings import ring as _make_ring


# --------------------------------------------------------------------------
# errors


class ExprError(Exception):
    """Base class for every error raised by this module."""


class ExprSyntaxError(ExprError):
    """Malformed input text; ``position`` is a 0-based character offset."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class UnknownIdentifierError(ExprSyntaxError):
    """An identifier that is neither a known variable nor a parameter."""


class JetOrderError(ExprSyntaxError):
    """A jet variable beyond the context's maximum derivative order."""


class ContextMismatchError(ExprError):
    """Operands built under different contexts were combined."""


class PoleError(ExprError):
    """Numeric evaluation hit a zero denominator."""


class ZeroDenominatorError(ExprError):
    """An operation produced an identically-zero denominator."""


class NotPolynomialError(ExprError):
    """The expression is not polynomial in the requested variable."""

    def __init__(self, message: str, var: Optional["VarId"] = None):
        super().__init__(message)
        self.var = var


# --------------------------------------------------------------------------
# variable identities


_KINDS = frozenset({"time", "position", "jet", "parameter"})


@dataclass(frozen=True)
class VarId:
    """Identity of a single scalar variable.

    kind is one of ``time``, ``position``, ``jet``, ``parameter``;
    positions are exactly the order-0 jets (the invariant
    ``kind == "position" <=> order == 0`` is enforced), the order-1 jet
    of ``q<i>`` is the velocity ``v<i>``, and parameter indices are
    1-based positions in the owning context's parameter list.
    """

    kind: str
    index: int = 0
    order: int = 0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown VarId kind {self.kind!r}")
        if self.kind == "time":
            if self.index != 0 or self.order != 0:
                raise ValueError("time carries no index or order")
        elif self.kind == "position":
            if self.index < 1:
                raise ValueError("position index must be >= 1")
            if self.order != 0:
                raise ValueError("positions have order 0")
        elif self.kind == "jet":
            if self.index < 1:
                raise ValueError("jet index must be >= 1")
            if not 1 <= self.order <= 4:
                raise ValueError("jet order must lie in 1..4")
        else:  # parameter
            if self.index < 1:
                raise ValueError("parameter index must be >= 1")
            if self.order != 0:
                raise ValueError("parameters have order 0")

    @staticmethod
    def time() -> "VarId":
        return VarId("time")

    @staticmethod
    def position(index: int) -> "VarId":
        return VarId("position", index)

    @staticmethod
    def jet(index: int, order: int) -> "VarId":
        if order == 0:
            return VarId("position", index)
        return VarId("jet", index, order)

    @staticmethod
    def parameter(index: int) -> "VarId":
        return VarId("parameter", index)


# --------------------------------------------------------------------------
# contexts


_RESERVED_NAME = re.compile(r"^(?:t|(?:q|v|d[0-9]+q)[0-9]+)$")
_IDENT = re.compile(r"^[A-Za-z][A-Za-z0-9_]*$")

# Rings are interned so that equal-by-value contexts share one ring object
# (sympy polynomial elements only cooperate within the same ring).
_RING_CACHE: dict = {}


def _ring_for(key):
    cached = _RING_CACHE.get(key)
    if cached is not None:
        return cached
    uses_time, n, max_jet, parameters = key
    names = []
    if uses_time:
        names.append("t")
    names.extend(f"q{i}" for i in range(1, n + 1))
    names.extend(f"v{i}" for i in range(1, n + 1))
    for order in range(2, max_jet + 1):
        names.extend(f"d{order}q{i}" for i in range(1, n + 1))
    names.extend(parameters)
    result = _make_ring(names, QQ)
    _RING_CACHE[key] = result
    return result


class ExprContext:
    """Declares which variables exist: dimension, jets, parameters, time.

    Contexts compare (and hash) by value, and equal contexts share the
    same underlying polynomial ring, so expressions built under two
    equal contexts interoperate.
    """

    __slots__ = ("n", "max_jet_order", "parameters", "uses_time",
                 "_ring", "_gens", "_name_pos", "_zero", "_one")

    def __init__(self, n: int, parameters: Iterable[str] = (),
                 max_jet_order: int = 1, uses_time: bool = False):
        if n < 1:
            raise ValueError("dimension must be >= 1")
        if not 1 <= max_jet_order <= 4:
            raise ValueError("max_jet_order must lie in 1..4")
        parameters = tuple(parameters)
        seen = set()
        for name in parameters:
            if not _IDENT.match(name):
                raise ValueError(f"invalid parameter name {name!r}")
            if _RESERVED_NAME.match(name):
                raise ValueError(f"parameter name {name!r} collides with a variable")
            if name in seen:
                raise ValueError(f"duplicate parameter name {name!r}")
            seen.add(name)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "max_jet_order", max_jet_order)
        object.__setattr__(self, "parameters", parameters)
        object.__setattr__(self, "uses_time", bool(uses_time))
        key = (self.uses_time, n, max_jet_order, parameters)
        ring_and_gens = _ring_for(key)
        object.__setattr__(self, "_ring", ring_and_gens[0])
        object.__setattr__(self, "_gens", ring_and_gens[0].gens)
        object.__setattr__(self, "_name_pos",
                           {str(s): i for i, s in enumerate(ring_and_gens[0].symbols)})
        object.__setattr__(self, "_zero", None)
        object.__setattr__(self, "_one", None)

    def __setattr__(self, name, value):  # immutable
        raise AttributeError("ExprContext is immutable")

    def __eq__(self, other):
        if not isinstance(other, ExprContext):
            return NotImplemented
        return (self.n, self.max_jet_order, self.parameters, self.uses_time) == \
               (other.n, other.max_jet_order, other.parameters, other.uses_time)

    def __hash__(self):
        return hash((self.n, self.max_jet_order, self.parameters, self.uses_time))

    def __repr__(self):
        bits = [f"n={self.n}", f"max_jet_order={self.max_jet_order}"]
        if self.parameters:
            bits.append(f"parameters={list(self.parameters)}")
        if self.uses_time:
            bits.append("uses_time=True")
        return f"ExprContext({', '.join(bits)})"

    # -- VarId constructors -------------------------------------------------

    def q(self, index: int) -> VarId:
        self._check_index(index)
        return VarId.position(index)

    def v(self, index: int) -> VarId:
        self._check_index(index)
        return VarId.jet(index, 1)

    def jet(self, index: int, order: int) -> VarId:
        self._check_index(index)
        if order > self.max_jet_order:
            raise ExprError(
                f"jet order {order} exceeds context maximum {self.max_jet_order}")
        return VarId.jet(index, order)

    def time_var(self) -> VarId:
        if not self.uses_time:
            raise ExprError("context has no time variable")
        return VarId.time()

    def param(self, name: str) -> VarId:
        try:
            return VarId.parameter(self.parameters.index(name) + 1)
        except ValueError:
            raise ExprError(f"unknown parameter {name!r}") from None

    def _check_index(self, index: int):
        if not 1 <= index <= self.n:
            raise ExprError(f"coordinate index {index} outside 1..{self.n}")

    # -- VarId <-> ring bookkeeping -----------------------------------------

    def display_name(self, var: VarId) -> str:
        if var.kind == "time":
            return "t"
        if var.kind == "position":
            return f"q{var.index}"
        if var.kind == "jet":
            return f"v{var.index}" if var.order == 1 else f"d{var.order}q{var.index}"
        return self.parameters[var.index - 1]

    def _validate(self, var: VarId):
        if var.kind == "time":
            if not self.uses_time:
                raise ExprError("context has no time variable")
        elif var.kind in ("position", "jet"):
            self._check_index(var.index)
            if var.order > self.max_jet_order:
                raise ExprError(
                    f"jet order {var.order} exceeds context maximum {self.max_jet_order}")
        else:
            if not 1 <= var.index <= len(self.parameters):
                raise ExprError(f"parameter index {var.index} out of range")

    def gen_index(self, var: VarId) -> int:
        self._validate(var)
        return self._name_pos[self.display_name(var)]

    def varid_of_gen(self, position: int) -> VarId:
        name = str(self._ring.symbols[position])
        var = self._resolve_name(name)
        if var is None:
            raise ExprError(f"cannot resolve generator {name!r}")
        return var

    def _resolve_name(self, name: str) -> Optional[VarId]:
        """Map an identifier to a VarId, or None if unknown here."""
        if name == "t":
            return VarId.time() if self.uses_time else None
        m = re.match(r"^q([1-9][0-9]*)$", name)
        if m:
            k = int(m.group(1))
            return VarId.position(k) if k <= self.n else None
        m = re.match(r"^v([1-9][0-9]*)$", name)
        if m:
            k = int(m.group(1))
            return VarId.jet(k, 1) if k <= self.n else None
        m = re.match(r"^d([0-9]+)q([1-9][0-9]*)$", name)
        if m:
            order, k = int(m.group(1)), int(m.group(2))
            if 1 <= order <= self.max_jet_order and k <= self.n:
                return VarId.jet(k, order)
            return None
        if name in self.parameters:
            return VarId.parameter(self.parameters.index(name) + 1)
        return None

    def all_varids(self):
        """Every variable legal in this context, in generator order."""
        return tuple(self.varid_of_gen(i) for i in range(len(self._gens)))

    # -- expression constructors --------------------------------------------

    @property
    def zero(self) -> "Expr":
        cached = self._zero
        if cached is None:
            cached = Expr(self, self._ring.zero, self._ring.one)
            object.__setattr__(self, "_zero", cached)
        return cached

    @property
    def one(self) -> "Expr":
        cached = self._one
        if cached is None:
            cached = Expr(self, self._ring.one, self._ring.one)
            object.__setattr__(self, "_one", cached)
        return cached

    def const(self, value: Union[int, Fraction]) -> "Expr":
        value = Fraction(value)
        num = self._ring.ground_new(QQ(value.numerator, value.denominator))
        return Expr(self, num, self._ring.one)

    def var(self, var: VarId) -> "Expr":
        return Expr(self, self._gens[self.gen_index(var)], self._ring.one)

    def parse(self, text: str) -> "Expr":
        return parse(text, self)

    def with_parameters(self, extra: Iterable[str]) -> "ExprContext":
        """A copy of this context with parameters appended at the end."""
        return ExprContext(self.n, self.parameters + tuple(extra),
                           self.max_jet_order, self.uses_time)


# --------------------------------------------------------------------------
# canonical expressions


def _canonical(ring, num, den):
    """Reduce num/den to coprime form with a monic denominator."""
    if not den:
        raise ZeroDenominatorError("denominator is identically zero")
    if not num:
        return ring.zero, ring.one
    num, den = num.cancel(den)
    lc = den.LC
    if lc != QQ(1):
        num = num.quo_ground(lc)
        den = den.quo_ground(lc)
    return num, den


class Expr:
    """An immutable rational expression in canonical form.

    ``num``/``den`` are coprime expanded polynomials and ``den`` is
    monic in the ring's term order, so structural equality of the pair
    is semantic equality of the value.
    """

    __slots__ = ("ctx", "num", "den")

    def __init__(self, ctx: ExprContext, num, den, _normalize: bool = False):
        if _normalize:
            num, den = _canonical(ctx._ring, num, den)
        object.__setattr__(self, "ctx", ctx)
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

    def __setattr__(self, name, value):
        raise AttributeError("Expr is immutable")

    # -- basics --------------------------------------------------------------

    def is_zero(self) -> bool:
        return not self.num

    def is_constant(self) -> bool:
        return self.num.is_ground and self.den.is_ground

    def numerator_expr(self) -> "Expr":
        """The numerator polynomial as an expression of its own."""
        return Expr(self.ctx, self.num, self.ctx._ring.one)

    def denominator_expr(self) -> "Expr":
        """The (monic) denominator polynomial as an expression of its own."""
        return Expr(self.ctx, self.den, self.ctx._ring.one)

    def as_fraction(self) -> Fraction:
        if not self.is_constant():
            raise ExprError("expression is not constant")
        if self.is_zero():
            return Fraction(0)
        c = self.num.LC / self.den.LC
        return Fraction(int(c.numerator), int(c.denominator))

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = self.ctx.const(other)
        if not isinstance(other, Expr):
            return NotImplemented
        return self.ctx == other.ctx and self.num == other.num and self.den == other.den

    def __hash__(self):
        return hash((self.ctx,
                     tuple(self.num.terms()) if self.num else (),
                     tuple(self.den.terms())))

    def __bool__(self):
        return not self.is_zero()

    def __str__(self):
        return to_text(self)

    def __repr__(self):
        return f"Expr({to_text(self)})"

    # -- arithmetic ----------------------------------------------------------

    def _coerce(self, other):
        if isinstance(other, Expr):
            if other.ctx != self.ctx:
                raise ContextMismatchError(
                    "cannot combine expressions from different contexts")
            return other
        if isinstance(other, (int, Fraction)):
            return self.ctx.const(other)
        return None

    def __add__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        if self.den == other.den:
            return Expr(self.ctx, self.num + other.num, self.den, _normalize=True)
        return Expr(self.ctx,
                    self.num * other.den + other.num * self.den,
                    self.den * other.den, _normalize=True)

    __radd__ = __add__

    def __neg__(self):
        return Expr(self.ctx, -self.num, self.den)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        return self.__add__(-other)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        return other.__add__(-self)

    def __mul__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        return Expr(self.ctx, self.num * other.num, self.den * other.den,
                    _normalize=True)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        if other.is_zero():
            raise ZeroDenominatorError("division by the zero expression")
        return Expr(self.ctx, self.num * other.den, self.den * other.num,
                    _normalize=True)

    def __rtruediv__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        return other.__truediv__(self)

    def __pow__(self, exponent: int):
        if not isinstance(exponent, int):
            return NotImplemented
        if exponent == 0:
            return self.ctx.one
        if exponent < 0:
            if self.is_zero():
                raise ZeroDenominatorError("zero raised to a negative power")
            base = Expr(self.ctx, self.den, self.num, _normalize=True)
            exponent = -exponent
        else:
            base = self
        return Expr(self.ctx, base.num ** exponent, base.den ** exponent,
                    _normalize=True)

    # -- calculus ------------------------------------------------------------

    def diff(self, var: VarId) -> "Expr":
        gen = self.ctx._gens[self.ctx.gen_index(var)]
        dnum = self.num.diff(gen)
        if self.den.is_ground:
            if not dnum:
                return self.ctx.zero
            return Expr(self.ctx, dnum, self.den, _normalize=True)
        dden = self.den.diff(gen)
        return Expr(self.ctx,
                    dnum * self.den - self.num * dden,
                    self.den * self.den, _normalize=True)

    def integrate_poly(self, var: VarId) -> "Expr":
        gi = self.ctx.gen_index(var)
        ring = self.ctx._ring
        if self.den.degree(ring.gens[gi]) > 0:
            raise NotPolynomialError(
                f"expression is not polynomial in {self.ctx.display_name(var)}",
                var)
        if self.is_zero():
            return self.ctx.zero
        accum = {}
        for monom, coeff in self.num.terms():
            lifted = list(monom)
            lifted[gi] += 1
            accum[tuple(lifted)] = coeff / QQ(lifted[gi])
        return Expr(self.ctx, ring.from_dict(accum), self.den, _normalize=True)

    # -- substitution and evaluation ------------------------------------------

    def subst(self, bindings: Mapping[VarId, Union["Expr", int, Fraction]]) -> "Expr":
        if not bindings:
            return self
        ctx = self.ctx
        sigma = {}
        for var, replacement in bindings.items():
            if isinstance(replacement, (int, Fraction)):
                replacement = ctx.const(replacement)
            elif not isinstance(replacement, Expr):
                raise ExprError(f"cannot substitute object {replacement!r}")
            elif replacement.ctx != ctx:
                raise ContextMismatchError(
                    "substituted expression belongs to another context")
            sigma[ctx.gen_index(var)] = (replacement.num, replacement.den)
        num_n, num_d = _subst_poly(ctx._ring, self.num, sigma)
        den_n, den_d = _subst_poly(ctx._ring, self.den, sigma)
        # (num_n/num_d) / (den_n/den_d)
        if not den_n:
            raise ZeroDenominatorError(
                "substitution produced an identically-zero denominator")
        return Expr(ctx, num_n * den_d, num_d * den_n, _normalize=True)

    def eval_num(self, point: Mapping[VarId, Union[int, Fraction]]) -> Fraction:
        ctx = self.ctx
        values = [None] * len(ctx._gens)
        for var, value in point.items():
            values[ctx.gen_index(var)] = Fraction(value)
        den_value = _eval_poly(ctx, self.den, values)
        if den_value == 0:
            raise PoleError("denominator vanishes at the evaluation point")
        if self.is_zero():
            return Fraction(0)
        return _eval_poly(ctx, self.num, values) / den_value

    # -- structure inspection --------------------------------------------------

    def depends_on(self, var: VarId) -> bool:
        gen = self.ctx._gens[self.ctx.gen_index(var)]
        if self.num and self.num.degree(gen) > 0:
            return True
        return self.den.degree(gen) > 0

    def free_varids(self):
        """The set of variables this expression actually depends on."""
        used = set()
        for poly in (self.num, self.den):
            if not poly:
                continue
            for monom, _coeff in poly.terms():
                for position, exponent in enumerate(monom):
                    if exponent:
                        used.add(position)
        return {self.ctx.varid_of_gen(p) for p in used}

    def is_polynomial_in(self, variables) -> bool:
        """True when the denominator is free of every listed variable
        (a single VarId is accepted as well)."""
        if isinstance(variables, VarId):
            variables = (variables,)
        ring = self.ctx._ring
        for var in variables:
            if self.den.degree(ring.gens[self.ctx.gen_index(var)]) > 0:
                return False
        return True

    def homogeneous_parts(self, variables: Iterable[VarId]) -> dict:
        """Split into parts of homogeneous total degree in ``variables``.

        Requires the denominator to be free of those variables; returns
        a map ``degree -> Expr`` omitting zero parts.
        """
        variables = list(variables)
        if not self.is_polynomial_in(variables):
            raise NotPolynomialError(
                "expression is rational in the splitting variables",
                variables[0])
        if self.is_zero():
            return {}
        ctx = self.ctx
        positions = [ctx.gen_index(v) for v in variables]
        buckets: dict = {}
        for monom, coeff in self.num.terms():
            degree = sum(monom[p] for p in positions)
            buckets.setdefault(degree, {})[monom] = coeff
        ring = ctx._ring
        return {degree: Expr(ctx, ring.from_dict(monoms), self.den, _normalize=True)
                for degree, monoms in sorted(buckets.items())}


def _subst_poly(ring, poly, sigma):
    """Simultaneous substitution in a polynomial.

    ``sigma`` maps generator positions to (num, den) polynomial pairs.
    Returns an unreduced (numerator, denominator) pair: the denominator
    is the product of the substituted denominators raised to the
    maximal exponent with which each generator occurs.
    """
    if not sigma or not poly:
        return poly, ring.one
    terms = poly.terms()
    max_exp = {}
    for position in sigma:
        max_exp[position] = max(t[0][position] for t in terms)
    if all(e == 0 for e in max_exp.values()):
        return poly, ring.one
    power_cache = {}

    def power(base_key, base_poly, exponent):
        if exponent == 0:
            return ring.one
        key = (base_key, exponent)
        cached = power_cache.get(key)
        if cached is None:
            cached = base_poly ** exponent
            power_cache[key] = cached
        return cached

    total = ring.zero
    for monom, coeff in terms:
        piece = ring.ground_new(coeff)
        residue = list(monom)
        for position, (rep_num, rep_den) in sigma.items():
            exponent = residue[position]
            residue[position] = 0
            piece = piece * power(("n", position), rep_num, exponent)
            piece = piece * power(("d", position), rep_den,
                                  max_exp[position] - exponent)
        piece = piece * ring.from_dict({tuple(residue): QQ(1)})
        total = total + piece
    denominator = ring.one
    for position, (rep_num, rep_den) in sigma.items():
        denominator = denominator * power(("d", position), rep_den,
                                          max_exp[position])
    return total, denominator


def _eval_poly(ctx, poly, values) -> Fraction:
    if not poly:
        return Fraction(0)
    total = Fraction(0)
    for monom, coeff in poly.terms():
        term = Fraction(int(coeff.numerator), int(coeff.denominator))
        for position, exponent in enumerate(monom):
            if exponent:
                value = values[position]
                if value is None:
                    name = str(ctx._ring.symbols[position])
                    raise ExprError(f"evaluation point does not assign {name}")
                term *= value ** exponent
        total += term
    return total


# --------------------------------------------------------------------------
# parsing


_TOKEN = re.compile(r"(?P<int>[0-9]+)|(?P<name>[A-Za-z][A-Za-z0-9_]*)|(?P<op>[+\-*/^()])")
_WS = re.compile(r"\s*")


class _Parser:
    """Recursive-descent parser for the expression grammar.

    Precedence (loosest to tightest): additive, multiplicative, unary
    minus, exponentiation. Exponents are integer literals only and may
    not chain; ``/`` is ordinary division, so both rational literals
    ``p/q`` and rational functions share one rule.
    """

    def __init__(self, text: str, ctx: ExprContext):
        self.text = text
        self.ctx = ctx
        self.tokens = []
        position = 0
        while True:
            position = _WS.match(text, position).end()
            if position >= len(text):
                break
            m = _TOKEN.match(text, position)
            if not m:
                raise ExprSyntaxError(f"unexpected character {text[position]!r}",
                                      position)
            self.tokens.append((m.lastgroup, m.group(), position))
            position = m.end()
        self.pos = 0

    def peek(self):
        if self.pos < len(self.tokens):
            return self.tokens[self.pos]
        return (None, None, len(self.text))

    def advance(self):
        token = self.peek()
        self.pos += 1
        return token

    def expect_op(self, op: str):
        kind, value, position = self.peek()
        if kind != "op" or value != op:
            raise ExprSyntaxError(f"expected {op!r}", position)
        self.advance()

    def parse(self) -> Expr:
        result = self.expression()
        kind, value, position = self.peek()
        if kind is not None:
            raise ExprSyntaxError(f"unexpected trailing input {value!r}", position)
        return result

    def expression(self) -> Expr:
        value = self.term()
        while True:
            kind, op, _ = self.peek()
            if kind == "op" and op in "+-":
                self.advance()
                rhs = self.term()
                value = value + rhs if op == "+" else value - rhs
            else:
                return value

    def term(self) -> Expr:
        value = self.unary()
        while True:
            kind, op, position = self.peek()
            if kind == "op" and op in "*/":
                self.advance()
                rhs = self.unary()
                if op == "*":
                    value = value * rhs
                else:
                    if rhs.is_zero():
                        raise ZeroDenominatorError(
                            f"division by zero (at position {position})")
                    value = value / rhs
            else:
                return value

    def unary(self) -> Expr:
        kind, op, _ = self.peek()
        if kind == "op" and op == "-":
            self.advance()
            return -self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        kind, op, position = self.peek()
        if kind == "op" and op == "^":
            self.advance()
            exponent = self.exponent_literal()
            if exponent < 0 and base.is_zero():
                raise ExprSyntaxError("zero raised to a negative power", position)
            base = base ** exponent
            kind, op, position = self.peek()
            if kind == "op" and op == "^":
                raise ExprSyntaxError("chained '^' needs parentheses", position)
        return base

    def exponent_literal(self) -> int:
        kind, value, position = self.peek()
        if kind == "int":
            self.advance()
            return int(value)
        if kind == "op" and value == "-":
            self.advance()
            kind, value, position = self.peek()
            if kind != "int":
                raise ExprSyntaxError("exponent must be an integer literal", position)
            self.advance()
            return -int(value)
        if kind == "op" and value == "(":
            self.advance()
            inner = self.exponent_literal()
            self.expect_op(")")
            return inner
        raise ExprSyntaxError("exponent must be an integer literal", position)

    def atom(self) -> Expr:
        kind, value, position = self.advance()
        if kind == "int":
            return self.ctx.const(int(value))
        if kind == "name":
            return self.resolve(value, position)
        if kind == "op" and value == "(":
            inner = self.expression()
            self.expect_op(")")
            return inner
        raise ExprSyntaxError("expected a number, a variable or '('", position)

    def resolve(self, name: str, position: int) -> Expr:
        ctx = self.ctx
        var = ctx._resolve_name(name)
        if var is not None:
            return ctx.var(var)
        # produce the most specific error we can
        m = re.match(r"^d([0-9]+)q([1-9][0-9]*)$", name)
        if m and int(m.group(2)) <= ctx.n:
            raise JetOrderError(
                f"jet order {int(m.group(1))} exceeds context maximum "
                f"{ctx.max_jet_order}", position)
        m = re.match(r"^(?:q|v)([1-9][0-9]*)$", name)
        if m:
            raise UnknownIdentifierError(
                f"coordinate index {int(m.group(1))} outside 1..{ctx.n}", position)
        if name == "t":
            raise UnknownIdentifierError("context has no time variable", position)
        raise UnknownIdentifierError(f"unknown identifier {name!r}", position)


# --------------------------------------------------------------------------
# printing


def _rational_text(value) -> str:
    numerator = int(value.numerator)
    denominator = int(value.denominator)
    return f"{numerator}/{denominator}" if denominator != 1 else str(numerator)


def _poly_text(ctx: ExprContext, poly) -> str:
    if not poly:
        return "0"
    names = [str(s) for s in ctx._ring.symbols]
    chunks = []
    for monom, coeff in poly.terms():
        factors = []
        for position, exponent in enumerate(monom):
            if exponent == 1:
                factors.append(names[position])
            elif exponent:
                factors.append(f"{names[position]}^{exponent}")
        sign = "-" if coeff < 0 else "+"
        magnitude = -coeff if coeff < 0 else coeff
        if not factors:
            body = _rational_text(magnitude)
        elif magnitude == QQ(1):
            body = "*".join(factors)
        else:
            body = _rational_text(magnitude) + "*" + "*".join(factors)
        chunks.append((sign, body))
    first_sign, first_body = chunks[0]
    text = first_body if first_sign == "+" else "-" + first_body
    for sign, body in chunks[1:]:
        text += f" {sign} {body}"
    return text


def to_text(expr: Expr) -> str:
    """Canonical text form; feeding it back to ``parse`` reproduces ``expr``."""
    if expr.den.is_ground:  # monic ground denominator is exactly 1
        return _poly_text(expr.ctx, expr.num)
    return f"({_poly_text(expr.ctx, expr.num)})/({_poly_text(expr.ctx, expr.den)})"


# --------------------------------------------------------------------------
# conversion between contexts


def convert(expr: Expr, target: ExprContext) -> Expr:
    """Re-express ``expr`` in a context that declares at least its variables."""
    if expr.ctx == target:
        return expr
    source = expr.ctx
    mapping = {}

    def move(poly):
        if not poly:
            return target._ring.zero
        out = {}
        for monom, coeff in poly.terms():
            shifted = [0] * len(target._gens)
            for position, exponent in enumerate(monom):
                if not exponent:
                    continue
                to = mapping.get(position)
                if to is None:
                    name = str(source._ring.symbols[position])
                    var = target._resolve_name(name)
                    if var is None:
                        raise ContextMismatchError(
                            f"target context does not declare {name!r}")
                    to = target.gen_index(var)
                    mapping[position] = to
                shifted[to] = exponent
            out[tuple(shifted)] = coeff
        return target._ring.from_dict(out)

    return Expr(target, move(expr.num), move(expr.den), _normalize=True)


# --------------------------------------------------------------------------
# the operation surface


def parse(text: str, ctx: ExprContext) -> Expr:
    """Parse ``text`` under ``ctx`` into a canonical expression."""
    return _Parser(text, ctx).parse()


def diff(expr: Expr, var: VarId) -> Expr:
    """Exact partial derivative."""
    return expr.diff(var)


def subst(expr: Expr, bindings: Mapping[VarId, Union[Expr, int, Fraction]]) -> Expr:
    """Exact simultaneous substitution."""
    return expr.subst(bindings)


def is_zero(expr: Expr) -> bool:
    """Decide identical vanishing via the canonical form."""
    return expr.is_zero()


def eval_num(expr: Expr, point: Mapping[VarId, Union[int, Fraction]]) -> Fraction:
    """Exact rational evaluation at a point."""
    return expr.eval_num(point)


def integrate_poly(expr: Expr, var: VarId) -> Expr:
    """Antiderivative in ``var`` with zero constant term."""
    return expr.integrate_poly(var)
