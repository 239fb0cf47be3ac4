"""Exact symbolic term algebra for fields in cylindrical coordinates.

Values are sums of terms ``coeff * r^k * prod(derivative atoms)`` where the
coefficient is an exact rational, ``k`` is an integer (negative powers are
legal), and each atom is a mixed partial derivative ``dr^a dz^b dtheta^c`` of
a named scalar field.  Fields declared axisymmetric are annihilated by the
theta derivative.  Every constructor normalizes, so two expressions are equal
iff their difference normalizes to the empty term list; ``is_zero`` is a sound
and complete decision procedure for this algebra.

All values are immutable and hashable; operations are pure functions.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence, Union

R = "r"
Z = "z"
THETA = "theta"
DIRECTIONS = (R, Z, THETA)

Scalar = Union[int, Fraction]


@dataclass(frozen=True)
class FieldSymbol:
    """A named scalar field; ``depends_theta=False`` declares axisymmetry."""

    name: str
    depends_theta: bool = False

    def __post_init__(self):
        if not self.name or not self.name.replace("_", "").isalnum():
            raise ValueError(f"bad field name {self.name!r}")


def field(name: str, depends_theta: bool = False) -> FieldSymbol:
    return FieldSymbol(name, depends_theta)


@dataclass(frozen=True)
class DerivAtom:
    """``dr^n_r dz^n_z dtheta^n_theta`` applied to a field symbol.

    Flat partials commute, so only the counts matter.
    """

    symbol: FieldSymbol
    n_r: int = 0
    n_z: int = 0
    n_theta: int = 0

    def __post_init__(self):
        if min(self.n_r, self.n_z, self.n_theta) < 0:
            raise ValueError("negative derivative count")

    @property
    def key(self) -> tuple:
        return (self.symbol.name, self.n_r, self.n_z, self.n_theta)

    def bumped(self, direction: str) -> "DerivAtom | None":
        """Atom with one more derivative; None when it vanishes."""
        if direction == R:
            return DerivAtom(self.symbol, self.n_r + 1, self.n_z, self.n_theta)
        if direction == Z:
            return DerivAtom(self.symbol, self.n_r, self.n_z + 1, self.n_theta)
        if direction == THETA:
            if not self.symbol.depends_theta:
                return None
            return DerivAtom(self.symbol, self.n_r, self.n_z, self.n_theta + 1)
        raise ValueError(f"unknown direction {direction!r}")

    def render(self) -> str:
        ops = []
        for label, n in (("dr", self.n_r), ("dz", self.n_z), ("dt", self.n_theta)):
            if n == 1:
                ops.append(label)
            elif n > 1:
                ops.append(f"{label}{n}")
        if not ops:
            return self.symbol.name
        return f"{''.join(ops)}({self.symbol.name})"


@dataclass(frozen=True)
class Term:
    coeff: Fraction
    r_power: int
    atoms: tuple  # sorted tuple of DerivAtom

    @property
    def key(self) -> tuple:
        return (self.r_power, tuple(a.key for a in self.atoms))


class Expression:
    """Canonically normalized sum of terms; immutable and hashable."""

    __slots__ = ("terms", "_hash")

    def __init__(self, terms: Iterable[Term] = ()):
        merged: dict = {}
        for t in terms:
            if t.coeff == 0:
                continue
            if any(a.n_theta > 0 and not a.symbol.depends_theta for a in t.atoms):
                continue  # theta derivative of an axisymmetric field
            atoms = _sorted_atoms(t.atoms)
            k = (t.r_power, tuple(a.key for a in atoms))
            slot = merged.get(k)
            if slot is None:
                merged[k] = [t.coeff, t.r_power, atoms]
            else:
                slot[0] += t.coeff
        out = []
        for k in sorted(merged):
            c, r_power, atoms = merged[k]
            if c != 0:
                out.append(Term(c, r_power, atoms))
        object.__setattr__(self, "terms", tuple(out))
        object.__setattr__(self, "_hash", hash(tuple(t.key + (t.coeff,) for t in out)))

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def zero() -> "Expression":
        return _ZERO

    @staticmethod
    def one() -> "Expression":
        return number(1)

    # -- algebra ---------------------------------------------------------------

    def __add__(self, other: "Expression") -> "Expression":
        return _from_merged(itertools.chain(self.terms, other.terms))

    def __sub__(self, other: "Expression") -> "Expression":
        return self + (-other)

    def __neg__(self) -> "Expression":
        return _from_merged(
            Term(-t.coeff, t.r_power, t.atoms) for t in self.terms
        )

    def __mul__(self, other: "Expression | Scalar") -> "Expression":
        if isinstance(other, (int, Fraction)):
            q = Fraction(other)
            return _from_merged(
                Term(t.coeff * q, t.r_power, t.atoms) for t in self.terms
            )
        return _from_merged(
            Term(a.coeff * b.coeff, a.r_power + b.r_power,
                 _sorted_atoms(a.atoms + b.atoms))
            for a in self.terms
            for b in other.terms
        )

    __rmul__ = __mul__

    def diff(self, direction: str) -> "Expression":
        """Partial derivative; Leibniz over the r-power and every atom."""
        if direction not in DIRECTIONS:
            raise ValueError(f"unknown direction {direction!r}")
        out = []
        for t in self.terms:
            if direction == R and t.r_power != 0:
                out.append(Term(t.coeff * t.r_power, t.r_power - 1, t.atoms))
            for i, a in enumerate(t.atoms):
                b = a.bumped(direction)
                if b is None:
                    continue
                atoms = _sorted_atoms(t.atoms[:i] + (b,) + t.atoms[i + 1:])
                out.append(Term(t.coeff, t.r_power, atoms))
        return _from_merged(out)

    # -- predicates / misc -------------------------------------------------------

    @property
    def is_zero_expr(self) -> bool:
        return not self.terms

    def __eq__(self, other) -> bool:
        if not isinstance(other, Expression):
            return NotImplemented
        return self.terms == other.terms

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return f"Expression({render(self)!r})"


def _sorted_atoms(atoms: Sequence[DerivAtom]) -> tuple:
    return tuple(sorted(atoms, key=lambda a: a.key))


def _from_merged(terms: Iterable[Term]) -> Expression:
    return Expression(list(terms))


def sym(f: FieldSymbol) -> Expression:
    """The bare field as an expression."""
    return Expression([Term(Fraction(1), 0, (DerivAtom(f),))])


def atom(f: FieldSymbol, n_r: int = 0, n_z: int = 0, n_theta: int = 0) -> Expression:
    if n_theta > 0 and not f.depends_theta:
        return _ZERO
    return Expression([Term(Fraction(1), 0, (DerivAtom(f, n_r, n_z, n_theta),))])


def rpow(k: int) -> Expression:
    """The monomial r^k (k may be negative)."""
    return Expression([Term(Fraction(1), k, ())])


def number(value: Scalar) -> Expression:
    return Expression([Term(Fraction(value), 0, ())])


_ZERO = Expression([])


# -- module-level operation surface ------------------------------------------


def add(a: Expression, b: Expression) -> Expression:
    return a + b


def mul(a: Expression, b: Expression) -> Expression:
    return a * b


def diff(e: Expression, direction: str) -> Expression:
    return e.diff(direction)


def is_zero(e: Expression) -> bool:
    """True iff the canonical term list is empty."""
    return e.is_zero_expr


def render(e: Expression) -> str:
    """Stable plain-text rendering, e.g. ``3*r^2*dr(f)*dz(g)``."""
    if not e.terms:
        return "0"
    parts = []
    for t in e.terms:
        factors = []
        if t.r_power == 1:
            factors.append("r")
        elif t.r_power != 0:
            factors.append(f"r^{t.r_power}")
        factors.extend(a.render() for a in t.atoms)
        c = t.coeff
        mag = abs(c)
        body = "*".join(factors)
        if not factors:
            piece = str(mag)
        elif mag == 1:
            piece = body
        else:
            piece = f"{mag}*{body}"
        if not parts:
            parts.append(piece if c > 0 else f"-{piece}")
        else:
            parts.append(f" + {piece}" if c > 0 else f" - {piece}")
    return "".join(parts)


# -- divergence-free substitution ---------------------------------------------


@dataclass(frozen=True)
class DivFreeTriple:
    """A velocity triple registered as divergence-free.

    Registration happens through :func:`divergence_free`; the constructor is
    not part of the public surface.
    """

    u_r: FieldSymbol
    u_theta: FieldSymbol
    u_z: FieldSymbol


_REGISTRY: set = set()


def divergence_free(u_r: FieldSymbol, u_theta: FieldSymbol, u_z: FieldSymbol) -> DivFreeTriple:
    """Declare ``div u = dr(u_r) + u_r/r + dt(u_theta)/r + dz(u_z) = 0``."""
    t = DivFreeTriple(u_r, u_theta, u_z)
    _REGISTRY.add(t)
    return t


def substitute_divergence(e: Expression, u: DivFreeTriple) -> Expression:
    """Eliminate r-derivatives of ``u_r`` using the divergence constraint.

    Every atom ``dr^a dz^b dt^c u_r`` with ``a >= 1`` is rewritten through
    ``dr(u_r) = -u_r/r - dt(u_theta)/r - dz(u_z)``, differentiated as needed.
    Each pass strictly lowers the maximal r-count on ``u_r`` atoms, so the
    rewrite terminates and is confluent.
    """
    if not isinstance(u, DivFreeTriple) or u not in _REGISTRY:
        raise ValueError("triple is not registered as divergence-free")
    rule = (
        -(rpow(-1) * sym(u.u_r))
        - rpow(-1) * sym(u.u_theta).diff(THETA)
        - sym(u.u_z).diff(Z)
    )
    expr = e
    while True:
        target = None
        for t in expr.terms:
            for i, a in enumerate(t.atoms):
                if a.symbol == u.u_r and a.n_r >= 1:
                    target = (t, i, a)
                    break
            if target:
                break
        if target is None:
            return expr
        t, i, a = target
        rest = Expression([Term(t.coeff, t.r_power, t.atoms[:i] + t.atoms[i + 1:])])
        repl = rule
        for _ in range(a.n_r - 1):
            repl = repl.diff(R)
        for _ in range(a.n_z):
            repl = repl.diff(Z)
        for _ in range(a.n_theta):
            repl = repl.diff(THETA)
        expr = (expr - Expression([t])) + rest * repl
