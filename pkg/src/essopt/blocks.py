"""Constraint carriers shared by the storage models, network blocks and the assembler.

Rows reference variables by name. A block owns its variables; rows may also
reference variables owned by another block (for example a storage loss row
referencing a bus voltage), which the assembler checks when it merges blocks.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

SENSES = ("==", "<=", ">=")


@dataclass(frozen=True)
class Var:
    name: str
    lb: float = float("-inf")
    ub: float = float("inf")
    binary: bool = False


@dataclass(frozen=True)
class LinearRow:
    """``sum(coef * var) <sense> rhs``."""

    coeffs: Mapping[str, float]
    sense: str
    rhs: float
    tag: str
    key: str | None = None

    def value(self, x: Mapping[str, float]) -> float:
        return sum(c * x[v] for v, c in self.coeffs.items())

    def violation(self, x: Mapping[str, float]) -> float:
        return _sense_violation(self.value(x), self.sense, self.rhs)

    def variables(self) -> Iterable[str]:
        return self.coeffs.keys()


@dataclass(frozen=True)
class QuadRow:
    """``sum(c * u * v) + sum(a * w) <sense> rhs``.

    Rows with ``nonconvex=True`` are equality rows that no convex solver can
    take directly; ``meta`` carries whatever a relaxation needs to replace them.
    """

    quad: tuple[tuple[str, str, float], ...]
    lin: Mapping[str, float]
    sense: str
    rhs: float
    tag: str
    nonconvex: bool = False
    meta: Mapping | None = None

    def value(self, x: Mapping[str, float]) -> float:
        return (sum(c * x[u] * x[v] for u, v, c in self.quad)
                + sum(a * x[w] for w, a in self.lin.items()))

    def violation(self, x: Mapping[str, float]) -> float:
        return _sense_violation(self.value(x), self.sense, self.rhs)

    def variables(self) -> Iterable[str]:
        seen = dict.fromkeys(v for u, w, _ in self.quad for v in (u, w))
        seen.update(dict.fromkeys(self.lin))
        return seen.keys()


@dataclass(frozen=True)
class Affine:
    terms: Mapping[str, float] = field(default_factory=dict)
    const: float = 0.0

    def value(self, x: Mapping[str, float]) -> float:
        return self.const + sum(c * x[v] for v, c in self.terms.items())


@dataclass(frozen=True)
class ConeRow:
    """Second-order cone membership of affine expressions.

    ``soc``:  ``||args[1:]||_2 <= args[0]``
    ``rsoc``: ``args[0] * args[1] >= ||args[2:]||_2^2`` with ``args[0], args[1] >= 0``
    """

    kind: str
    args: tuple[Affine, ...]
    tag: str

    def violation(self, x: Mapping[str, float]) -> float:
        vals = [a.value(x) for a in self.args]
        if self.kind == "soc":
            return max(0.0, sum(v * v for v in vals[1:]) ** 0.5 - vals[0])
        u, w = vals[0], vals[1]
        rest = sum(v * v for v in vals[2:])
        return max(0.0, rest - u * w, -u, -w)

    def variables(self) -> Iterable[str]:
        return dict.fromkeys(v for a in self.args for v in a.terms).keys()


def _sense_violation(value: float, sense: str, rhs: float) -> float:
    if sense == "==":
        return abs(value - rhs)
    if sense == "<=":
        return max(0.0, value - rhs)
    return max(0.0, rhs - value)


@dataclass
class ConstraintBlock:
    """Variables and rows emitted by one model.

    ``injections`` maps ``(bus, t)`` to ``{"p": coeffs, "q": coeffs}`` giving
    the block's power injection into the grid at that bus, per-unit.
    ``voltage`` maps bus id to the per-period squared-voltage variable names a
    network block exposes.
    """

    name: str
    variables: dict[str, Var] = field(default_factory=dict)
    linear_rows: list[LinearRow] = field(default_factory=list)
    quad_rows: list[QuadRow] = field(default_factory=list)
    cone_rows: list[ConeRow] = field(default_factory=list)
    bilinear_pairs: list[tuple[str, str, str]] = field(default_factory=list)
    binary_vars: list[str] = field(default_factory=list)
    injections: dict[tuple[int, int], dict[str, dict[str, float]]] = field(default_factory=dict)
    voltage: dict[int, list[str]] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    # -- construction helpers --------------------------------------------
    def var(self, name: str, lb: float = float("-inf"), ub: float = float("inf"),
            binary: bool = False) -> str:
        if name in self.variables:
            raise KeyError(f"variable {name} declared twice in block {self.name}")
        if binary:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
            self.binary_vars.append(name)
        self.variables[name] = Var(name, float(lb), float(ub), binary)
        return name

    def linear(self, coeffs: Mapping[str, float], sense: str, rhs: float, tag: str,
               key: str | None = None) -> LinearRow:
        if sense not in SENSES:
            raise ValueError(sense)
        row = LinearRow(dict(coeffs), sense, float(rhs), tag, key)
        self.linear_rows.append(row)
        return row

    def quadratic(self, quad, lin, sense, rhs, tag, nonconvex=False, meta=None) -> QuadRow:
        row = QuadRow(tuple(quad), dict(lin), sense, float(rhs), tag, nonconvex, meta)
        self.quad_rows.append(row)
        return row

    def cone(self, kind: str, args, tag: str) -> ConeRow:
        if kind not in ("soc", "rsoc"):
            raise ValueError(kind)
        row = ConeRow(kind, tuple(args), tag)
        self.cone_rows.append(row)
        return row

    def add_injection(self, bus: int, t: int, kind: str, coeffs: Mapping[str, float]):
        slot = self.injections.setdefault((bus, t), {"p": {}, "q": {}})[kind]
        for v, c in coeffs.items():
            slot[v] = slot.get(v, 0.0) + c

    # -- inspection --------------------------------------------------------
    def all_rows(self):
        yield from self.linear_rows
        yield from self.quad_rows
        yield from self.cone_rows

    def referenced(self) -> set[str]:
        names: set[str] = set()
        for row in self.all_rows():
            names.update(row.variables())
        for a, b, _ in self.bilinear_pairs:
            names.update((a, b))
        return names

    def external_refs(self) -> set[str]:
        return self.referenced() - set(self.variables)

    def dump(self) -> str:
        return dump_rows(self.name, self.variables.values(), self.linear_rows,
                         self.quad_rows, self.cone_rows, self.bilinear_pairs)


def _fmt_terms(coeffs: Mapping[str, float]) -> str:
    if not coeffs:
        return "0"
    return " ".join(f"{c:+.12g}*{v}" for v, c in coeffs.items())


def _fmt_affine(a: Affine) -> str:
    s = _fmt_terms(a.terms) if a.terms else ""
    if a.const or not s:
        s = f"{s} {a.const:+.12g}".strip()
    return s


def dump_rows(title, variables, linear_rows, quad_rows, cone_rows, bilinear_pairs,
              provenance_prefix=None) -> str:
    """Human-readable, deterministic, one item per line."""
    out = [f"# {title}"]
    for v in variables:
        kind = "bin" if v.binary else "var"
        out.append(f"{kind} {v.name} [{v.lb:.12g}, {v.ub:.12g}]")
    for r in linear_rows:
        out.append(f"lin {r.tag} : {_fmt_terms(r.coeffs)} {r.sense} {r.rhs:.12g}")
    for r in quad_rows:
        q = " ".join(f"{c:+.12g}*{u}*{v}" for u, v, c in r.quad)
        flag = "nonconvex" if r.nonconvex else "quad"
        out.append(f"{flag} {r.tag} : {q} {_fmt_terms(r.lin) if r.lin else ''} {r.sense} {r.rhs:.12g}"
                   .replace("  ", " "))
    for r in cone_rows:
        out.append(f"{r.kind} {r.tag} : " + " | ".join(_fmt_affine(a) for a in r.args))
    for a, b, tag in bilinear_pairs:
        out.append(f"bilinear {tag} : {a} * {b} == 0")
    return "\n".join(out) + "\n"
