"""File-driven command line for the inverse-problem toolkit.

A problem lives in a single JSON document declaring the dimension, the
parameters, the system (explicit accelerations or an implicit
second-order system), and optional candidate data: a multiplier matrix
``g``, a dissipation function ``D``, a Lagrangian ``L``, a two-form
``omega``, and an ansatz section for the linear search. Five
subcommands dispatch the library on such a file:

``analyze``
    print the connection, the Jacobi endomorphism, the curvature and
    the vertical connection derivative;
``check``
    run one named condition suite and report every cell;
``solve``
    search the declared ansatz family for a nonsingular multiplier;
``reconstruct``
    integrate a valid multiplier into a certified ``(L, D)`` or
    ``(L, omega)`` pair;
``verify``
    confirm a certificate against the system, optionally rebuilding
    the accelerations from it.

Every report exists in two forms that agree cell for cell: a
human-readable text rendering (residuals truncated) and a JSON document
(residuals in full, validating against the shipped schema). All
symbolic output uses the same grammar the parser accepts. Exit codes:
0 success/pass, 1 a check or verification failed, 2 usage or input
error, 3 a search proved no nonsingular member exists, 4 a search was
exhausted inconclusively. The environment variable ``INVLAG_SEED``
seeds the random points used by the numeric cross-checks.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
from fractions import Fraction
from importlib import resources
from typing import Dict, List, Optional, Sequence, Tuple

from .conditions import (ConditionReport, ImplicitOrderError, ImplicitSystem,
                         TwoFormError, check_classical, check_dissipative,
                         check_gyroscopic, check_implicit,
                         check_multiplier_dissipative,
                         check_multiplier_gyroscopic, check_prop2a,
                         check_rayleigh, implicit_context)
from .exprcore import Expr, ExprContext, ExprError
from .geometry import (DimensionMismatchError, GeometryError, Sode,
                       TensorField, connection, curvature, jacobi, matrix_det,
                       matrix_solve, theta_tensor)
from .numeric import DEFAULT_SEED, crosscheck_cells, seeded_rng
from .reconstruct import (MultiplierCheckError, ReconstructError,
                          SingularHessianError, hessian,
                          reconstruct_dissipative, reconstruct_gyroscopic,
                          verify_dissipative, verify_gyroscopic)
from .solver import (AnsatzProblem, SolverError, assemble, find_nonsingular,
                     instantiate, q_monomials)
from .solver import solve as solve_space

PROBLEM_FIELDS = ("n", "parameters", "mode", "f", "g", "D", "L", "omega",
                  "ansatz", "options")
CHECK_SUITES = ("classical", "dissipative", "gyroscopic", "thm3", "thm4",
                "prop2a", "rayleigh", "implicit")
RECONSTRUCT_ROUTES = {"dissipative": "dissipative", "thm3": "dissipative",
                      "gyroscopic": "gyroscopic", "thm4": "gyroscopic"}
RESIDUAL_PREVIEW = 64


class CliError(Exception):
    """Unusable input: reported on stderr, exit code 2."""


# --------------------------------------------------------------------------
# problem files


class Problem:
    """A parsed problem file, with every expression already living in
    the declared context and any parameter instantiation applied."""

    def __init__(self, path: str, data: dict,
                 overrides: Dict[str, Fraction]):
        self.path = path
        self.n = _expect_dimension(data, path)
        self.parameters = _expect_parameters(data, path)
        self.mode = _expect_mode(data, path)
        try:
            if self.mode == "implicit":
                self.ctx = implicit_context(self.n, self.parameters)
            else:
                self.ctx = ExprContext(self.n, parameters=self.parameters)
        except ExprError as exc:
            raise CliError(f"{path}: {exc}") from exc
        self.options = _expect_options(data, path)
        self.substitution = self._bindings(overrides)
        self.f = self._field_vector(data, "f")
        self.g = self._field_matrix(data, "g", symmetric=True)
        self.D = self._field_scalar(data, "D")
        self.L = self._field_scalar(data, "L")
        self.omega = self._field_matrix(data, "omega", symmetric=False)
        self.ansatz = data.get("ansatz")
        if self.ansatz is not None and not isinstance(self.ansatz, dict):
            raise CliError(f"{path}: 'ansatz' must be an object")
        self._data = data

    # -- construction helpers ------------------------------------------------

    def _bindings(self, overrides: Dict[str, Fraction]) -> dict:
        values: Dict[str, Fraction] = {}
        declared = self.options.get("instantiate", {})
        if not isinstance(declared, dict):
            raise CliError(f"{self.path}: options.instantiate must map "
                           "parameter names to rationals")
        for name, raw in declared.items():
            values[name] = _as_fraction(raw, f"options.instantiate.{name}",
                                        self.path)
        values.update(overrides)
        bindings = {}
        for name, value in values.items():
            if name not in self.parameters:
                raise CliError(f"{self.path}: cannot instantiate {name!r}: "
                               "not a declared parameter")
            bindings[self.ctx.param(name)] = value
        return bindings

    def parse(self, text, where: str) -> Expr:
        if isinstance(text, (int, float)) and not isinstance(text, bool):
            if isinstance(text, float) and not text.is_integer():
                raise CliError(f"{self.path}: {where}: write non-integer "
                               "rationals as strings like \"1/2\"")
            text = str(int(text))
        if not isinstance(text, str):
            raise CliError(f"{self.path}: {where}: expected an expression "
                           "string")
        try:
            parsed = self.ctx.parse(text)
            if self.substitution:
                parsed = parsed.subst(self.substitution)
        except ExprError as exc:
            raise CliError(f"{self.path}: {where}: {exc}") from exc
        return parsed

    def _field_vector(self, data: dict, name: str) -> Optional[List[Expr]]:
        raw = data.get(name)
        if raw is None:
            return None
        if not isinstance(raw, list) or len(raw) != self.n:
            raise CliError(f"{self.path}: {name!r} must be a list of "
                           f"{self.n} expression strings")
        return [self.parse(entry, f"{name}[{k}]")
                for k, entry in enumerate(raw, start=1)]

    def _field_scalar(self, data: dict, name: str) -> Optional[Expr]:
        raw = data.get(name)
        if raw is None:
            return None
        return self.parse(raw, name)

    def _field_matrix(self, data: dict, name: str,
                      symmetric: bool) -> Optional[TensorField]:
        raw = data.get(name)
        if raw is None:
            return None
        n = self.n
        if (not isinstance(raw, list) or len(raw) != n
                or any(not isinstance(row, list) or len(row) != n
                       for row in raw)):
            raise CliError(f"{self.path}: {name!r} must be an "
                           f"{n}x{n} matrix of expression strings")
        entries = {}
        for i in range(1, n + 1):
            for j in range(1, n + 1):
                entries[(i, j)] = self.parse(raw[i - 1][j - 1],
                                             f"{name}[{i}][{j}]")
        kind = "sym" if symmetric else "antisym"
        try:
            return TensorField(self.ctx, (0, 2), entries,
                               **{kind: ((1, 2),)})
        except GeometryError as exc:
            raise CliError(f"{self.path}: {name!r}: {exc}") from exc

    # -- requirements ----------------------------------------------------

    def require_mode(self, mode: str, why: str):
        if self.mode != mode:
            raise CliError(f"{self.path}: {why} needs a problem in "
                           f"{mode} mode, not {self.mode}")

    def require(self, name: str):
        value = getattr(self, "f" if name == "f" else name)
        if value is None:
            raise CliError(f"{self.path}: section {name!r} is required "
                           "for this command")
        return value

    def sode(self) -> Sode:
        self.require_mode("explicit", "this command")
        return Sode(self.ctx, self.require("f"))

    def implicit_system(self) -> ImplicitSystem:
        self.require_mode("implicit", "the implicit suite")
        try:
            return ImplicitSystem(self.ctx, self.require("f"))
        except (ImplicitOrderError, GeometryError,
                DimensionMismatchError) as exc:
            raise CliError(f"{self.path}: {exc}") from exc

    def zero_two_form(self) -> TensorField:
        n = self.n
        entries = {(i, j): self.ctx.zero
                   for i in range(1, n + 1) for j in range(1, n + 1)}
        return TensorField(self.ctx, (0, 2), entries, antisym=((1, 2),))


def _expect_dimension(data: dict, path: str) -> int:
    n = data.get("n")
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise CliError(f"{path}: 'n' must be a positive integer")
    return n


def _expect_parameters(data: dict, path: str) -> Tuple[str, ...]:
    raw = data.get("parameters", [])
    if (not isinstance(raw, list)
            or any(not isinstance(name, str) for name in raw)):
        raise CliError(f"{path}: 'parameters' must be a list of names")
    return tuple(raw)


def _expect_mode(data: dict, path: str) -> str:
    mode = data.get("mode", "explicit")
    if mode not in ("explicit", "implicit"):
        raise CliError(f"{path}: 'mode' must be \"explicit\" or "
                       "\"implicit\"")
    return mode


def _expect_options(data: dict, path: str) -> dict:
    options = data.get("options", {})
    if not isinstance(options, dict):
        raise CliError(f"{path}: 'options' must be an object")
    unknown = set(options) - {"instantiate", "format"}
    if unknown:
        raise CliError(f"{path}: unknown options: "
                       + ", ".join(sorted(unknown)))
    if options.get("format") not in (None, "text", "json"):
        raise CliError(f"{path}: options.format must be \"text\" or "
                       "\"json\"")
    return options


def _as_fraction(raw, where: str, path: str) -> Fraction:
    try:
        if isinstance(raw, bool):
            raise ValueError("booleans are not rationals")
        if isinstance(raw, int):
            return Fraction(raw)
        if isinstance(raw, str):
            return Fraction(raw)
    except (ValueError, ZeroDivisionError) as exc:
        raise CliError(f"{path}: {where}: {exc}") from exc
    raise CliError(f"{path}: {where}: expected a rational like \"2/3\"")


def resolve_input(path: str) -> str:
    """An existing file path, or the bundled fixture of that name."""
    if os.path.exists(path):
        return path
    name = path if path.endswith(".json") else path + ".json"
    if os.sep not in name:
        candidate = resources.files("invlag") / "fixtures" / name
        if candidate.is_file():
            return str(candidate)
    raise CliError(f"{path}: no such file or bundled fixture")


def load_problem(path: str, overrides: Dict[str, Fraction]) -> Problem:
    resolved = resolve_input(path)
    try:
        with open(resolved, encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise CliError(f"{resolved}: {exc.strerror or exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(f"{resolved}: line {exc.lineno} column {exc.colno}: "
                       f"{exc.msg}") from exc
    if not isinstance(data, dict):
        raise CliError(f"{resolved}: the top level must be a JSON object")
    unknown = set(data) - set(PROBLEM_FIELDS)
    if unknown:
        raise CliError(f"{resolved}: unknown fields: "
                       + ", ".join(sorted(unknown)))
    return Problem(resolved, data, overrides)


# --------------------------------------------------------------------------
# ansatz section


_ENTRY_KEY = re.compile(r"^\s*([1-9][0-9]*)\s*,\s*([1-9][0-9]*)\s*$")


def _basis_entries(problem: Problem, section: dict, name: str,
                   strict_upper: bool):
    entries = section.get("entries")
    if not isinstance(entries, dict):
        raise CliError(f"{problem.path}: ansatz.{name}.entries must map "
                       "\"i,j\" keys to lists of basis expressions")
    parsed = []
    for key in entries:
        match = _ENTRY_KEY.match(key)
        if not match:
            raise CliError(f"{problem.path}: ansatz.{name}: bad entry key "
                           f"{key!r} (write \"i,j\")")
        i, j = int(match.group(1)), int(match.group(2))
        if max(i, j) > problem.n:
            raise CliError(f"{problem.path}: ansatz.{name}: entry {key!r} "
                           f"is outside dimension {problem.n}")
        if (strict_upper and i >= j) or (not strict_upper and i > j):
            raise CliError(f"{problem.path}: ansatz.{name}: declare entry "
                           f"{key!r} with i {'<' if strict_upper else '<='} j")
        basis = entries[key]
        if not isinstance(basis, list):
            raise CliError(f"{problem.path}: ansatz.{name}: entry {key!r} "
                           "must list basis expressions")
        exprs = tuple(problem.parse(b, f"ansatz.{name}[{key}][{k}]")
                      for k, b in enumerate(basis, start=1))
        parsed.append(((i, j), exprs))
    parsed.sort(key=lambda item: item[0])
    return tuple(parsed)


def _preset_entries(problem: Problem, section: dict, name: str):
    preset = section["preset"]
    ctx = problem.ctx
    if preset == "constant":
        basis = (ctx.one,)
    elif preset in ("polynomial", "diagonal"):
        degree = section.get("degree")
        if not isinstance(degree, int) or isinstance(degree, bool) \
                or degree < 0:
            raise CliError(f"{problem.path}: ansatz.{name}: preset "
                           f"{preset!r} needs a nonnegative 'degree'")
        variables = section.get("variables")
        if variables is not None:
            if (not isinstance(variables, list)
                    or any(not isinstance(v, int) or isinstance(v, bool)
                           or not 1 <= v <= problem.n for v in variables)):
                raise CliError(f"{problem.path}: ansatz.{name}: 'variables' "
                               f"must list position indices in 1..{problem.n}")
        basis = q_monomials(ctx, degree, variables)
    else:
        raise CliError(f"{problem.path}: ansatz.{name}: unknown preset "
                       f"{preset!r} (constant, polynomial, diagonal)")
    allowed = {"preset", "degree", "variables"}
    unknown = set(section) - allowed
    if unknown:
        raise CliError(f"{problem.path}: ansatz.{name}: unknown keys: "
                       + ", ".join(sorted(unknown)))
    if preset == "diagonal":
        pairs = [(i, i) for i in range(1, problem.n + 1)]
    else:
        pairs = [(i, j) for i in range(1, problem.n + 1)
                 for j in range(i, problem.n + 1)]
    return tuple((pair, basis) for pair in pairs)


def ansatz_problem(problem: Problem) -> Tuple[AnsatzProblem, int]:
    """Build the search family declared in the file's ansatz section."""
    section = problem.ansatz
    if section is None:
        raise CliError(f"{problem.path}: an 'ansatz' section is required "
                       "for solve")
    unknown = set(section) - {"suite", "g", "omega", "bound"}
    if unknown:
        raise CliError(f"{problem.path}: ansatz: unknown keys: "
                       + ", ".join(sorted(unknown)))
    suite = section.get("suite")
    gspec = section.get("g")
    if not isinstance(gspec, dict):
        raise CliError(f"{problem.path}: ansatz.g must describe the "
                       "multiplier family (preset or entries)")
    if "preset" in gspec:
        g_basis = _preset_entries(problem, gspec, "g")
    else:
        g_basis = _basis_entries(problem, gspec, "g", strict_upper=False)
    omega_basis = ()
    wspec = section.get("omega")
    if wspec is not None:
        if not isinstance(wspec, dict) or "entries" not in wspec:
            raise CliError(f"{problem.path}: ansatz.omega must carry an "
                           "'entries' map")
        omega_basis = _basis_entries(problem, wspec, "omega",
                                     strict_upper=True)
    bound = section.get("bound", 2)
    if not isinstance(bound, int) or isinstance(bound, bool) or bound < 0:
        raise CliError(f"{problem.path}: ansatz.bound must be a nonnegative "
                       "integer")
    fixed_D = problem.D if suite == "dissipative" else None
    fixed_omega = None
    if suite == "gyroscopic" and not omega_basis:
        fixed_omega = problem.omega
    try:
        family = AnsatzProblem(suite, g_basis, omega_basis,
                               D=fixed_D, omega=fixed_omega)
    except SolverError as exc:
        raise CliError(f"{problem.path}: ansatz: {exc}") from exc
    return family, bound


# --------------------------------------------------------------------------
# payload serialization


def _matrix_strings(t: TensorField) -> List[List[str]]:
    n = t.ctx.n
    return [[str(t.entry(i, j)) for j in range(1, n + 1)]
            for i in range(1, n + 1)]


def _cube_strings(t: TensorField) -> List[List[List[str]]]:
    n = t.ctx.n
    return [[[str(t.entry(a, b, c)) for c in range(1, n + 1)]
             for b in range(1, n + 1)]
            for a in range(1, n + 1)]


def _entry_map(t: Optional[TensorField], upper_only: bool) -> dict:
    if t is None:
        return {}
    n = t.ctx.n
    out = {}
    for i in range(1, n + 1):
        start = i if upper_only else 1
        for j in range(start, n + 1):
            value = t.entry(i, j)
            if not value.is_zero():
                out[f"{i},{j}"] = str(value)
    return out


def report_payload(report: ConditionReport) -> dict:
    payload = {
        "suite": report.suite,
        "passed": report.passes,
        "cells": [{"label": cell.label, "residual": str(cell.residual),
                   "passes": cell.passes} for cell in report.cells],
        "notes": list(report.notes),
    }
    record = report.nonsingularity
    payload["nonsingularity"] = None if record is None else {
        "determinant": str(record.determinant),
        "nonsingular": record.nonsingular,
        "note": record.note or None,
    }
    return payload


def _seed() -> int:
    raw = os.environ.get("INVLAG_SEED")
    if raw is None:
        return DEFAULT_SEED
    try:
        return int(raw)
    except ValueError as exc:
        raise CliError(f"INVLAG_SEED must be an integer, not {raw!r}") \
            from exc


def numeric_payload(reports: Sequence[ConditionReport],
                    extra_cells=()) -> dict:
    cells = [(cell.label, cell.residual)
             for report in reports for cell in report.cells]
    cells.extend(extra_cells)
    return crosscheck_cells(cells, seeded_rng(_seed()))


def _base_payload(command: str, problem: Problem) -> dict:
    return {
        "command": command,
        "file": problem.path,
        "n": problem.n,
        "parameters": list(problem.parameters),
        "mode": problem.mode,
        "seed": _seed(),
    }


# --------------------------------------------------------------------------
# commands


def cmd_analyze(problem: Problem, args) -> Tuple[dict, int]:
    problem.require_mode("explicit", "analyze")
    s = problem.sode()
    payload = _base_payload("analyze", problem)
    payload["objects"] = {
        "Gamma": _matrix_strings(connection(s)),
        "Phi": _matrix_strings(jacobi(s)),
        "R": _cube_strings(curvature(s)),
        "theta": _cube_strings(theta_tensor(s)),
    }
    return payload, 0


def _suite_report(suite: str, problem: Problem, s: Sode, g: TensorField,
                  omega: Optional[TensorField],
                  D: Optional[Expr]) -> ConditionReport:
    ctx = problem.ctx
    if suite == "classical":
        return check_classical(s, g)
    if suite == "dissipative":
        return check_dissipative(s, g, D if D is not None else ctx.zero)
    if suite == "gyroscopic":
        w = omega if omega is not None else problem.zero_two_form()
        return check_gyroscopic(s, g, w)
    if suite == "thm3":
        return check_multiplier_dissipative(s, g)
    if suite == "thm4":
        return check_multiplier_gyroscopic(s, g)
    if suite == "prop2a":
        return check_prop2a(s, g)
    return check_rayleigh(s, g)


def cmd_check(problem: Problem, args) -> Tuple[dict, int]:
    suite = args.suite
    payload = _base_payload("check", problem)
    payload["suite"] = suite
    if suite == "implicit":
        report = check_implicit(problem.implicit_system())
    else:
        problem.require_mode("explicit", f"suite {suite!r}")
        s = problem.sode()
        g = problem.require("g")
        try:
            report = _suite_report(suite, problem, s, g,
                                   problem.omega, problem.D)
        except (TwoFormError, GeometryError) as exc:
            raise CliError(f"{problem.path}: {exc}") from exc
    payload["report"] = report_payload(report)
    payload["numeric_crosscheck"] = numeric_payload([report])
    return payload, 0 if report.passes else 1


def _forced_zero(space) -> List[str]:
    movable = [False] * len(space.layout)
    for vector in space.nullspace:
        for k, value in enumerate(vector):
            if value != 0:
                movable[k] = True
    if space.particular is not None:
        for k, value in enumerate(space.particular):
            if value != 0:
                movable[k] = True
    dead: Dict[Tuple[str, int, int], bool] = {}
    for k, (part, i, j, _position) in enumerate(space.layout):
        key = (part, i, j)
        dead.setdefault(key, True)
        if movable[k]:
            dead[key] = False
    return [f"{part}[{i},{j}]"
            for (part, i, j), gone in sorted(dead.items()) if gone]


def cmd_solve(problem: Problem, args) -> Tuple[dict, int]:
    problem.require_mode("explicit", "solve")
    s = problem.sode()
    family, bound = ansatz_problem(problem)
    if args.bound is not None:
        bound = args.bound
    try:
        system = assemble(s, family)
    except SolverError as exc:
        raise CliError(f"{problem.path}: {exc}") from exc
    space = solve_space(system)
    representative = find_nonsingular(space, s, bound)

    payload = _base_payload("solve", problem)
    payload["suite"] = family.suite
    vectors = []
    for vector in space.nullspace:
        g, omega = instantiate(family, problem.ctx, vector)
        entry = {"vector": [str(value) for value in vector],
                 "g": _entry_map(g, upper_only=True)}
        entry["omega"] = (_entry_map(omega, upper_only=True)
                          if omega is not None else None)
        vectors.append(entry)
    solution = {
        "unknowns": len(system.unknowns),
        "equations": len(system.rows),
        "consistent": space.consistent,
        "certificate_row": space.certificate_row,
        "dimension": space.dimension,
        "nullspace": vectors,
        "particular": ([str(value) for value in space.particular]
                       if space.particular is not None else None),
        "forced_zero": _forced_zero(space) if space.consistent else [],
        "bound": bound,
        "exhausted": space.exhausted,
        "definitive_negative": space.definitive_negative,
        "representative": None,
    }
    payload["solution"] = solution
    if representative is not None:
        solution["representative"] = {
            "g": _matrix_strings(representative),
            "omega": (_matrix_strings(space.representative_omega)
                      if space.representative_omega is not None else None),
            "det": str(space.representative_det),
            "vector": [str(value) for value in space.representative_vector],
        }
        report = _suite_report(family.suite, problem, s, representative,
                               space.representative_omega or family.omega,
                               family.D)
        payload["representative_report"] = report_payload(report)
        payload["numeric_crosscheck"] = numeric_payload([report])
        return payload, 0
    if space.definitive_negative or not space.consistent:
        return payload, 3
    return payload, 4


def _certificate_payload(cert) -> dict:
    gauge = None
    if cert.gauge is not None:
        gauge = {
            "lagrangian_linear": [str(e) for e in
                                  cert.gauge.lagrangian_linear],
            "lagrangian_scalar": str(cert.gauge.lagrangian_scalar),
            "dissipation_linear": [str(e) for e in
                                   cert.gauge.dissipation_linear],
            "base_point": cert.gauge.base_point,
        }
    return {
        "kind": cert.kind,
        "L": str(cert.L),
        "D": str(cert.D) if cert.D is not None else None,
        "omega": (_matrix_strings(cert.omega)
                  if cert.omega is not None else None),
        "gauge": gauge,
    }


def cmd_reconstruct(problem: Problem, args) -> Tuple[dict, int]:
    problem.require_mode("explicit", "reconstruct")
    s = problem.sode()
    g = problem.require("g")
    route = RECONSTRUCT_ROUTES[args.suite]
    payload = _base_payload("reconstruct", problem)
    payload["route"] = route
    builder = (reconstruct_dissipative if route == "dissipative"
               else reconstruct_gyroscopic)
    try:
        cert = builder(s, g)
    except MultiplierCheckError as exc:
        payload["multiplier_report"] = report_payload(exc.report)
        payload["numeric_crosscheck"] = numeric_payload([exc.report])
        return payload, 1
    except (ReconstructError, GeometryError) as exc:
        raise CliError(f"{problem.path}: {type(exc).__name__}: {exc}") \
            from exc
    if cert.omega is not None:
        verify = verify_gyroscopic(s, cert.L, cert.omega)
    else:
        verify = verify_dissipative(s, cert.L, cert.D)
    payload["certificate"] = _certificate_payload(cert)
    payload["verify"] = report_payload(verify)
    payload["numeric_crosscheck"] = numeric_payload([verify])
    if args.out:
        document = {"file": problem.path, "route": route,
                    "verified": verify.passes}
        document.update(payload["certificate"])
        try:
            with open(args.out, "w", encoding="utf-8") as handle:
                json.dump(document, handle, indent=2)
                handle.write("\n")
        except OSError as exc:
            raise CliError(f"{args.out}: {exc.strerror or exc}") from exc
        payload["out"] = args.out
    return payload, 0 if verify.passes else 1


def _forward_accelerations(ctx: ExprContext, L: Expr, D: Optional[Expr],
                           omega: Optional[TensorField]) -> List[Expr]:
    g = hessian(L)
    if matrix_det(g).is_zero():
        raise SingularHessianError(
            "velocity Hessian of the Lagrangian is singular; cannot "
            "rebuild the accelerations")
    rhs = []
    for j in range(1, ctx.n + 1):
        entry = L.diff(ctx.q(j))
        if D is not None:
            entry = entry + D.diff(ctx.v(j))
        if omega is not None:
            for k in range(1, ctx.n + 1):
                entry = entry + omega.entry(j, k) * ctx.var(ctx.v(k))
        for k in range(1, ctx.n + 1):
            entry = entry - ctx.var(ctx.v(k)) * L.diff(ctx.q(k)).diff(ctx.v(j))
        rhs.append(entry)
    return matrix_solve(g, rhs)


def cmd_verify(problem: Problem, args) -> Tuple[dict, int]:
    problem.require_mode("explicit", "verify")
    s = problem.sode()
    L = problem.require("L")
    route = args.suite
    if route is None:
        if problem.omega is not None and problem.D is not None:
            raise CliError(f"{problem.path}: both 'D' and 'omega' present; "
                           "pick one with --suite")
        route = "gyroscopic" if problem.omega is not None else "dissipative"
    payload = _base_payload("verify", problem)
    payload["suite"] = route
    D = None
    omega = None
    if route == "gyroscopic":
        omega = problem.require("omega")
        try:
            report = verify_gyroscopic(s, L, omega)
        except TwoFormError as exc:
            raise CliError(f"{problem.path}: {exc}") from exc
    else:
        D = problem.D if problem.D is not None else problem.ctx.zero
        report = verify_dissipative(s, L, D)
    payload["report"] = report_payload(report)
    code = 0 if report.passes else 1
    extra_cells = []
    if args.forward:
        try:
            rebuilt = _forward_accelerations(problem.ctx, L, D, omega)
        except SingularHessianError as exc:
            raise CliError(f"{problem.path}: {exc}") from exc
        cells = []
        for i, (ours, theirs) in enumerate(zip(rebuilt, s.f), start=1):
            difference = ours - theirs
            cells.append({"label": f"f[{i}]", "residual": str(difference),
                          "passes": difference.is_zero()})
            extra_cells.append((f"f[{i}]", difference))
        payload["forward"] = {"rebuilt_f": [str(e) for e in rebuilt],
                              "cells": cells}
        if any(not cell["passes"] for cell in cells):
            code = 1
    payload["numeric_crosscheck"] = numeric_payload([report], extra_cells)
    return payload, code


# --------------------------------------------------------------------------
# text rendering


def _short(text: str) -> str:
    if len(text) <= RESIDUAL_PREVIEW:
        return text
    return text[:RESIDUAL_PREVIEW] + f"... ({len(text)} chars)"


def _render_header(payload: dict) -> List[str]:
    parameters = ", ".join(payload["parameters"]) or "none"
    return [f"{payload['command']}: {payload['file']}",
            f"n = {payload['n']}; mode = {payload['mode']}; "
            f"parameters: {parameters}"]


def _render_report(title: str, report: dict) -> List[str]:
    cells = report["cells"]
    failing = sum(1 for cell in cells if not cell["passes"])
    lines = [f"{title}: suite {report['suite']}; "
             f"{len(cells)} cells, {failing} failing"]
    for cell in cells:
        flag = "pass" if cell["passes"] else "FAIL"
        lines.append(f"  {flag}  {cell['label']} = "
                     f"{_short(cell['residual'])}")
    record = report.get("nonsingularity")
    if record is not None:
        verdict = "nonsingular" if record["nonsingular"] else "singular"
        lines.append(f"  multiplier determinant: "
                     f"{_short(record['determinant'])} ({verdict})")
        if record.get("note"):
            lines.append(f"    note: {record['note']}")
    for note in report.get("notes", ()):
        lines.append(f"  note: {note}")
    return lines


def _render_numeric(payload: dict) -> List[str]:
    numeric = payload.get("numeric_crosscheck")
    if numeric is None:
        return []
    status = ("agrees with the symbolic verdicts" if numeric["consistent"]
              else "DISAGREES at " + ", ".join(numeric["disagreements"]))
    return [f"numeric cross-check (seed {payload['seed']}, "
            f"{numeric['points']} points, {numeric['cells_checked']} "
            f"cells): {status}"]


def _tensor_block(title: str, label: str, entries: List[Tuple[str, str]])\
        -> List[str]:
    lines = [title + ":"]
    if not entries:
        lines.append(f"  (all {label} entries are zero)")
    for idx, value in entries:
        lines.append(f"  {label}[{idx}] = {value}")
    return lines


def _nonzero_matrix(matrix: List[List[str]]) -> List[Tuple[str, str]]:
    out = []
    for i, row in enumerate(matrix, start=1):
        for j, value in enumerate(row, start=1):
            if value != "0":
                out.append((f"{i},{j}", value))
    return out


def _nonzero_cube(cube, upper: bool) -> List[Tuple[str, str]]:
    out = []
    for a, matrix in enumerate(cube, start=1):
        for b, row in enumerate(matrix, start=1):
            for c, value in enumerate(row, start=1):
                if upper and b >= c:
                    continue
                if value != "0":
                    out.append((f"{a},{b},{c}", value))
    return out


def _render_analyze(payload: dict) -> List[str]:
    objects = payload["objects"]
    lines = _render_header(payload)
    lines += _tensor_block("connection coefficients", "Gamma",
                           _nonzero_matrix(objects["Gamma"]))
    lines += _tensor_block("Jacobi endomorphism", "Phi",
                           _nonzero_matrix(objects["Phi"]))
    lines += _tensor_block("curvature (entries with i < j)", "R",
                           _nonzero_cube(objects["R"], upper=True))
    lines += _tensor_block("vertical connection derivative", "theta",
                           _nonzero_cube(objects["theta"], upper=False))
    return lines


def _render_check(payload: dict) -> List[str]:
    lines = _render_header(payload)
    lines += _render_report("report", payload["report"])
    lines += _render_numeric(payload)
    verdict = "pass" if payload["report"]["passed"] else "FAIL"
    lines.append(f"verdict: {verdict}")
    return lines


def _render_entry_map(prefix: str, mapping: dict) -> List[str]:
    if not mapping:
        return [f"    {prefix}: zero"]
    return [f"    {prefix}[{key}] = {value}"
            for key, value in mapping.items()]


def _render_solve(payload: dict) -> List[str]:
    solution = payload["solution"]
    lines = _render_header(payload)
    lines.append(f"suite: {payload['suite']}; "
                 f"unknowns: {solution['unknowns']}; "
                 f"equations: {solution['equations']}")
    if not solution["consistent"]:
        lines.append("inconsistent system: " + solution["certificate_row"])
        lines.append("verdict: no multiplier in this family")
        return lines
    lines.append(f"solution space dimension: {solution['dimension']}")
    for k, vector in enumerate(solution["nullspace"], start=1):
        lines.append(f"  basis vector {k}:")
        lines += _render_entry_map("g", vector["g"])
        if vector.get("omega"):
            lines += _render_entry_map("omega", vector["omega"])
    if solution["particular"] is not None \
            and any(value != "0" for value in solution["particular"]):
        lines.append("  inhomogeneous part: "
                     + ", ".join(solution["particular"]))
    if solution["forced_zero"]:
        lines.append("entries forced to zero across the whole space: "
                     + ", ".join(solution["forced_zero"]))
    rep = solution["representative"]
    if rep is not None:
        lines.append(f"nonsingular representative "
                     f"(coefficient bound {solution['bound']}):")
        for idx, value in _nonzero_matrix(rep["g"]):
            lines.append(f"  g[{idx}] = {value}")
        if rep.get("omega"):
            for idx, value in _nonzero_matrix(rep["omega"]):
                lines.append(f"  omega[{idx}] = {value}")
        lines.append(f"  det = {rep['det']}")
        lines += _render_report("representative re-check",
                                payload["representative_report"])
        lines += _render_numeric(payload)
        lines.append("verdict: found")
    elif solution["definitive_negative"]:
        lines.append("verdict: structurally singular family; no "
                     "nonsingular multiplier exists in it")
    else:
        lines.append(f"verdict: search exhausted up to coefficient bound "
                     f"{solution['bound']} without a nonsingular member")
    return lines


def _render_certificate(cert: dict) -> List[str]:
    lines = [f"certificate kind: {cert['kind']}", f"  L = {cert['L']}"]
    if cert["D"] is not None:
        lines.append(f"  D = {cert['D']}")
    if cert["omega"] is not None:
        entries = _nonzero_matrix(cert["omega"])
        if entries:
            for idx, value in entries:
                lines.append(f"  omega[{idx}] = {value}")
        else:
            lines.append("  omega = 0")
    gauge = cert.get("gauge")
    if gauge is not None:
        pieces = []
        if any(e != "0" for e in gauge["lagrangian_linear"]):
            pieces.append("velocity-linear Lagrangian term ("
                          + ", ".join(gauge["lagrangian_linear"]) + ")")
        if gauge["lagrangian_scalar"] != "0":
            pieces.append(f"scalar Lagrangian term "
                          f"{gauge['lagrangian_scalar']}")
        if any(e != "0" for e in gauge["dissipation_linear"]):
            pieces.append("velocity-linear dissipation term ("
                          + ", ".join(gauge["dissipation_linear"]) + ")")
        if pieces:
            lines.append(f"  gauge (base point {gauge['base_point']}): "
                         + "; ".join(pieces))
    return lines


def _render_reconstruct(payload: dict) -> List[str]:
    lines = _render_header(payload)
    lines.append(f"route: {payload['route']}")
    if "multiplier_report" in payload:
        lines += _render_report("multiplier check",
                                payload["multiplier_report"])
        lines += _render_numeric(payload)
        lines.append("verdict: multiplier fails its conditions; nothing "
                     "to reconstruct")
        return lines
    lines += _render_certificate(payload["certificate"])
    lines += _render_report("verification", payload["verify"])
    lines += _render_numeric(payload)
    if "out" in payload:
        lines.append(f"certificate written to {payload['out']}")
    verdict = "pass" if payload["verify"]["passed"] else "FAIL"
    lines.append(f"verdict: {verdict}")
    return lines


def _render_verify(payload: dict) -> List[str]:
    lines = _render_header(payload)
    lines += _render_report("report", payload["report"])
    forward = payload.get("forward")
    clean = payload["report"]["passed"]
    if forward is not None:
        lines.append("rebuilt accelerations:")
        for i, expr in enumerate(forward["rebuilt_f"], start=1):
            lines.append(f"  f[{i}] = {_short(expr)}")
        lines += _render_report("forward diff",
                                {"suite": payload["suite"],
                                 "cells": forward["cells"],
                                 "notes": ()})
        clean = clean and all(c["passes"] for c in forward["cells"])
    lines += _render_numeric(payload)
    lines.append(f"verdict: {'pass' if clean else 'FAIL'}")
    return lines


_RENDERERS = {
    "analyze": _render_analyze,
    "check": _render_check,
    "solve": _render_solve,
    "reconstruct": _render_reconstruct,
    "verify": _render_verify,
}


def render_text(payload: dict) -> str:
    return "\n".join(_RENDERERS[payload["command"]](payload))


# --------------------------------------------------------------------------
# entry point


def _parse_overrides(pairs: Optional[Sequence[str]]) -> Dict[str, Fraction]:
    overrides: Dict[str, Fraction] = {}
    for pair in pairs or ():
        name, equals, value = pair.partition("=")
        if not equals or not name:
            raise CliError(f"--instantiate expects NAME=P/Q, got {pair!r}")
        try:
            overrides[name] = Fraction(value)
        except (ValueError, ZeroDivisionError) as exc:
            raise CliError(f"--instantiate {pair!r}: {exc}") from exc
    return overrides


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="invlag",
        description="Exact inverse-problem toolkit for second-order "
                    "systems with dissipative or gyroscopic forcing.")
    commands = parser.add_subparsers(dest="command", required=True)

    def common(sub):
        sub.add_argument("file", help="problem file (JSON), or the name "
                                      "of a bundled fixture")
        sub.add_argument("--format", choices=("text", "json"), default=None,
                         help="report format (default: file option or text)")
        sub.add_argument("--instantiate", action="append", metavar="NAME=P/Q",
                         help="substitute a rational value for a declared "
                              "parameter (repeatable)")

    common(commands.add_parser(
        "analyze", help="print connection, Jacobi endomorphism, curvature "
                        "and vertical connection derivative"))

    check = commands.add_parser(
        "check", help="run one condition suite and report every cell")
    common(check)
    check.add_argument("--suite", required=True, choices=CHECK_SUITES)

    solve = commands.add_parser(
        "solve", help="search the declared ansatz family for a "
                      "nonsingular multiplier")
    common(solve)
    solve.add_argument("--bound", type=int, default=None,
                       help="coefficient bound for the representative "
                            "search (default: ansatz section, else 2)")

    reconstruct = commands.add_parser(
        "reconstruct", help="integrate a valid multiplier into a "
                            "certified Lagrangian representation")
    common(reconstruct)
    reconstruct.add_argument("--suite", default="dissipative",
                             choices=sorted(RECONSTRUCT_ROUTES),
                             help="which representation to build "
                                  "(default: dissipative)")
    reconstruct.add_argument("--out", default=None, metavar="FILE",
                             help="also write the certificate as JSON")

    verify = commands.add_parser(
        "verify", help="check a Lagrangian certificate against the system")
    common(verify)
    verify.add_argument("--suite", default=None,
                        choices=("dissipative", "gyroscopic"),
                        help="certificate type (default: gyroscopic when "
                             "the file has omega, else dissipative)")
    verify.add_argument("--forward", action="store_true",
                        help="also rebuild the accelerations from the "
                             "certificate and diff against the file")
    return parser


_COMMANDS = {
    "analyze": cmd_analyze,
    "check": cmd_check,
    "solve": cmd_solve,
    "reconstruct": cmd_reconstruct,
    "verify": cmd_verify,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        problem = load_problem(args.file,
                               _parse_overrides(args.instantiate))
        payload, code = _COMMANDS[args.command](problem, args)
    except CliError as exc:
        print(f"invlag: error: {exc}", file=sys.stderr)
        return 2
    payload["exit_code"] = code
    fmt = args.format or problem.options.get("format") or "text"
    if fmt == "json":
        print(json.dumps(payload, indent=2))
    else:
        print(render_text(payload))
    return code


if __name__ == "__main__":
    sys.exit(main())
