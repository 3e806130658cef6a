"""Sparse multivariate polynomials with exact coefficient arithmetic.

A monomial is an exponent tuple over a fixed ambient variable list and a
polynomial is a {exponents: coefficient} map together with its arity.
Monomial enumeration, certificate files and the canonical text format all
use graded lexicographic order (total degree first, then lexicographic on
the exponent tuple), which is the ordering contract shared by the SoS
compiler, the CLI and the verifier.  Coefficient arithmetic is plain float
arithmetic; only coefficients that are exactly zero are pruned, nothing is
rounded.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

Exponents = tuple[int, ...]


@lru_cache(maxsize=None)
def monomial_basis(arity: int, max_degree: int) -> tuple[Exponents, ...]:
    """All exponent tuples of total degree <= max_degree in graded lex order.

    The count is binom(arity + max_degree, max_degree).  For arity 2 and
    max_degree 2 the order is (0,0), (0,1), (1,0), (0,2), (1,1), (2,0).
    """
    if arity < 0 or max_degree < 0:
        raise ValueError("arity and max_degree must be nonnegative")
    if arity == 0:
        return ((),) if max_degree >= 0 else ()

    def fixed_total(m: int, total: int) -> Iterable[Exponents]:
        if m == 1:
            yield (total,)
            return
        for head in range(total + 1):
            for tail in fixed_total(m - 1, total - head):
                yield (head,) + tail

    out: list[Exponents] = []
    for total in range(max_degree + 1):
        out.extend(fixed_total(arity, total))
    return tuple(out)


def basis_size(arity: int, max_degree: int) -> int:
    return math.comb(arity + max_degree, max_degree)


class Polynomial:
    """Immutable sparse polynomial over float coefficients.

    `terms` maps exponent tuples of length `arity` to nonzero coefficients.
    All arithmetic returns new objects; inputs are never mutated.
    """

    __slots__ = ("arity", "terms")

    def __init__(self, arity: int, terms: Mapping[Exponents, float] | None = None):
        if arity < 0:
            raise ValueError("arity must be nonnegative")
        clean: dict[Exponents, float] = {}
        if terms:
            for exps, coeff in terms.items():
                exps = tuple(int(e) for e in exps)
                if len(exps) != arity:
                    raise ValueError(
                        f"exponent tuple {exps} has length {len(exps)}, expected {arity}"
                    )
                if any(e < 0 for e in exps):
                    raise ValueError(f"negative exponent in {exps}")
                coeff = float(coeff)
                if coeff != 0.0:
                    clean[exps] = clean.get(exps, 0.0) + coeff
                    if clean[exps] == 0.0:
                        del clean[exps]
        object.__setattr__(self, "arity", arity)
        object.__setattr__(self, "terms", clean)

    def __setattr__(self, name, value):
        raise AttributeError("Polynomial is immutable")

    # ------------------------------------------------------------------
    # constructors

    @classmethod
    def zero(cls, arity: int) -> "Polynomial":
        return cls(arity, {})

    @classmethod
    def constant(cls, arity: int, value: float) -> "Polynomial":
        return cls(arity, {(0,) * arity: float(value)})

    @classmethod
    def variable(cls, arity: int, index: int) -> "Polynomial":
        if not 0 <= index < arity:
            raise ValueError(f"variable index {index} out of range for arity {arity}")
        exps = [0] * arity
        exps[index] = 1
        return cls(arity, {tuple(exps): 1.0})

    @classmethod
    def monomial(cls, exps: Exponents, coeff: float = 1.0) -> "Polynomial":
        return cls(len(exps), {tuple(exps): coeff})

    # ------------------------------------------------------------------
    # structure

    @property
    def degree(self) -> int:
        """Total degree; the zero polynomial has degree 0."""
        if not self.terms:
            return 0
        return max(sum(e) for e in self.terms)

    def is_zero(self) -> bool:
        return not self.terms

    def coefficient(self, exps: Exponents) -> float:
        return self.terms.get(tuple(exps), 0.0)

    def sorted_terms(self) -> list[tuple[Exponents, float]]:
        """Terms in graded lex order (ascending)."""
        return sorted(self.terms.items(), key=lambda kv: (sum(kv[0]), kv[0]))

    def coefficient_vector(self, basis: Sequence[Exponents]) -> np.ndarray:
        return np.array([self.terms.get(tuple(b), 0.0) for b in basis], dtype=float)

    def coeff_l1(self) -> float:
        return float(sum(abs(c) for c in self.terms.values()))

    def max_abs_coeff(self) -> float:
        if not self.terms:
            return 0.0
        return float(max(abs(c) for c in self.terms.values()))

    # ------------------------------------------------------------------
    # arithmetic

    def __add__(self, other) -> "Polynomial":
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.arity, other)
        if not isinstance(other, Polynomial):
            return NotImplemented
        if other.arity != self.arity:
            raise ValueError("arity mismatch in addition")
        terms = dict(self.terms)
        for exps, coeff in other.terms.items():
            acc = terms.get(exps, 0.0) + coeff
            if acc == 0.0:
                terms.pop(exps, None)
            else:
                terms[exps] = acc
        return Polynomial(self.arity, terms)

    __radd__ = __add__

    def __neg__(self) -> "Polynomial":
        return Polynomial(self.arity, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other) -> "Polynomial":
        if isinstance(other, (int, float)):
            return self + (-float(other))
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other) -> "Polynomial":
        return (-self) + other

    def __mul__(self, other) -> "Polynomial":
        if isinstance(other, (int, float)):
            return Polynomial(
                self.arity, {e: c * float(other) for e, c in self.terms.items()}
            )
        if not isinstance(other, Polynomial):
            return NotImplemented
        if other.arity != self.arity:
            raise ValueError("arity mismatch in multiplication")
        terms: dict[Exponents, float] = {}
        for ea, ca in self.terms.items():
            for eb, cb in other.terms.items():
                key = tuple(x + y for x, y in zip(ea, eb))
                acc = terms.get(key, 0.0) + ca * cb
                if acc == 0.0:
                    terms.pop(key, None)
                else:
                    terms[key] = acc
        return Polynomial(self.arity, terms)

    __rmul__ = __mul__

    def __pow__(self, exponent: int) -> "Polynomial":
        if not isinstance(exponent, int) or exponent < 0:
            raise ValueError("only nonnegative integer powers")
        out = Polynomial.constant(self.arity, 1.0)
        for _ in range(exponent):
            out = out * self
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.arity == other.arity and self.terms == other.terms

    def __hash__(self):
        return hash((self.arity, frozenset(self.terms.items())))

    def almost_equal(self, other: "Polynomial", tol: float = 1e-9) -> bool:
        if self.arity != other.arity:
            return False
        keys = set(self.terms) | set(other.terms)
        return all(
            abs(self.terms.get(k, 0.0) - other.terms.get(k, 0.0)) <= tol for k in keys
        )

    # ------------------------------------------------------------------
    # calculus and evaluation

    def differentiate(self, index: int) -> "Polynomial":
        """Partial derivative with respect to variable `index`."""
        if not 0 <= index < self.arity:
            raise ValueError(f"variable index {index} out of range")
        terms: dict[Exponents, float] = {}
        for exps, coeff in self.terms.items():
            e = exps[index]
            if e == 0:
                continue
            new = list(exps)
            new[index] = e - 1
            key = tuple(new)
            terms[key] = terms.get(key, 0.0) + coeff * e
        return Polynomial(self.arity, terms)

    def evaluate(self, point: Sequence[float]) -> float:
        point = tuple(float(p) for p in point)
        if len(point) != self.arity:
            raise ValueError("point dimension mismatch")
        total = 0.0
        for exps, coeff in self.terms.items():
            val = coeff
            for x, e in zip(point, exps):
                if e:
                    val *= x**e
            total += val
        return total

    def evaluate_many(self, points: np.ndarray) -> np.ndarray:
        """Evaluate on an array of points with shape (num_points, arity)."""
        points = np.asarray(points, dtype=float)
        if self.arity == 0:
            flat = np.atleast_1d(points @ np.zeros((points.shape[-1], 1)))[..., 0] if points.ndim > 1 else 0.0
            return np.full(points.shape[0] if points.ndim > 1 else 1,
                           self.terms.get((), 0.0))
        if points.ndim == 1:
            points = points[None, :]
        if points.shape[1] != self.arity:
            raise ValueError("point dimension mismatch")
        if not self.terms:
            return np.zeros(points.shape[0])
        # per-variable power tables keep the inner loop to indexed products
        max_exp = [0] * self.arity
        for exps in self.terms:
            for i, e in enumerate(exps):
                if e > max_exp[i]:
                    max_exp[i] = e
        pow_tables = [
            points[:, i][:, None] ** np.arange(max_exp[i] + 1)[None, :]
            for i in range(self.arity)
        ]
        out = np.zeros(points.shape[0])
        for exps, coeff in self.terms.items():
            val = np.full(points.shape[0], coeff)
            for i, e in enumerate(exps):
                if e:
                    val = val * pow_tables[i][:, e]
            out += val
        return out

    def eval_partial(self, assignments: Mapping[int, float]) -> "Polynomial":
        """Substitute numeric values for a subset of variables.

        The substituted variables are removed; the remaining ones keep
        their relative order in the reduced arity.
        """
        for idx in assignments:
            if not 0 <= idx < self.arity:
                raise ValueError(f"variable index {idx} out of range")
        keep = [i for i in range(self.arity) if i not in assignments]
        terms: dict[Exponents, float] = {}
        for exps, coeff in self.terms.items():
            val = coeff
            for idx, x in assignments.items():
                e = exps[idx]
                if e:
                    val *= float(x) ** e
            if val == 0.0:
                continue
            key = tuple(exps[i] for i in keep)
            acc = terms.get(key, 0.0) + val
            if acc == 0.0:
                terms.pop(key, None)
            else:
                terms[key] = acc
        return Polynomial(len(keep), terms)

    def embed(self, new_arity: int, var_map: Sequence[int]) -> "Polynomial":
        """Re-index variables into a larger ambient space.

        `var_map[i]` is the new index of old variable i; unmapped new
        variables never appear in the result.
        """
        if len(var_map) != self.arity:
            raise ValueError("var_map length must equal arity")
        if len(set(var_map)) != len(var_map):
            raise ValueError("var_map must be injective")
        for j in var_map:
            if not 0 <= j < new_arity:
                raise ValueError("var_map target out of range")
        terms: dict[Exponents, float] = {}
        for exps, coeff in self.terms.items():
            new = [0] * new_arity
            for i, e in enumerate(exps):
                new[var_map[i]] = e
            terms[tuple(new)] = coeff
        return Polynomial(new_arity, terms)

    # ------------------------------------------------------------------
    # printing

    def to_string(self, names: Sequence[str] | None = None) -> str:
        """Canonical text form: graded lex term order, explicit * and ^.

        Round-trips exactly through parse_polynomial with the same names.
        """
        if names is None:
            names = [f"x{i + 1}" for i in range(self.arity)]
        if len(names) != self.arity:
            raise ValueError("need one name per variable")
        if not self.terms:
            return "0"
        pieces: list[str] = []
        for exps, coeff in self.sorted_terms():
            factors = [
                names[i] if e == 1 else f"{names[i]}^{e}"
                for i, e in enumerate(exps)
                if e
            ]
            mono = "*".join(factors)
            mag = repr(abs(coeff))
            body = f"{mag}*{mono}" if mono else mag
            if not pieces:
                pieces.append(body if coeff >= 0 else f"-{body}")
            else:
                pieces.append(f" + {body}" if coeff >= 0 else f" - {body}")
        return "".join(pieces)

    def __str__(self) -> str:
        return self.to_string()

    def __repr__(self) -> str:
        return f"Polynomial(arity={self.arity}, terms={dict(self.sorted_terms())!r})"


# ----------------------------------------------------------------------
# time/state/velocity embedding helpers

def lie_derivative(v: Polynomial, n: int) -> Polynomial:
    """Derivative of v(t, x) along trajectories with free velocity variables.

    v has arity 1 + n with variable order (t, x_1..x_n).  The result lives
    in arity 1 + 2n with order (t, x_1..x_n, y_1..y_n) and equals
    dv/dt + sum_i y_i * dv/dx_i.  Total degree does not increase.
    """
    if v.arity != 1 + n:
        raise ValueError(f"v must have arity 1 + n = {1 + n}, got {v.arity}")
    big = 1 + 2 * n
    ident = list(range(1 + n))
    out = v.differentiate(0).embed(big, ident)
    for i in range(n):
        dvi = v.differentiate(1 + i).embed(big, ident)
        out = out + dvi * Polynomial.variable(big, 1 + n + i)
    return out


# ----------------------------------------------------------------------
# boxes and moments

@dataclass(frozen=True)
class Box:
    """Axis-aligned box given by per-coordinate closed bounds."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if len(lo) != len(hi):
            raise ValueError("lo and hi must have equal length")
        if not lo:
            raise ValueError("box must have at least one coordinate")
        for a, b in zip(lo, hi):
            if not (math.isfinite(a) and math.isfinite(b)):
                raise ValueError("box bounds must be finite")
            if a >= b:
                raise ValueError(f"degenerate bounds [{a}, {b}]")

    @property
    def arity(self) -> int:
        return len(self.lo)

    def contains(self, point: Sequence[float], tol: float = 0.0) -> bool:
        return all(
            a - tol <= float(x) <= b + tol
            for a, b, x in zip(self.lo, self.hi, point)
        )

    def contains_many(self, points: np.ndarray, tol: float = 0.0) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        lo = np.asarray(self.lo) - tol
        hi = np.asarray(self.hi) + tol
        return np.all((points >= lo) & (points <= hi), axis=-1)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return rng.uniform(lo, hi, size=(size, self.arity))

    def volume(self) -> float:
        return float(np.prod(np.asarray(self.hi) - np.asarray(self.lo)))


def box_moments(box: Box, monomials: Sequence[Exponents]) -> np.ndarray:
    """Lebesgue moments of the box for each exponent tuple.

    The moment of x^a over a product of intervals factors into
    prod_i (hi_i^(a_i+1) - lo_i^(a_i+1)) / (a_i + 1).
    """
    out = np.empty(len(monomials))
    for k, exps in enumerate(monomials):
        if len(exps) != box.arity:
            raise ValueError("monomial arity does not match box")
        val = 1.0
        for a, lo, hi in zip(exps, box.lo, box.hi):
            val *= (hi ** (a + 1) - lo ** (a + 1)) / (a + 1)
        out[k] = val
    return out


# ----------------------------------------------------------------------
# parsing

class PolynomialParseError(ValueError):
    """Parse failure with a character position for diagnostics."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*^()]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            bad_at = len(text) - len(stripped)
            raise PolynomialParseError(f"unexpected character {text[bad_at]!r}", bad_at)
        if match.lastgroup is None:
            break
        tokens.append((match.lastgroup, match.group(match.lastgroup), match.start(match.lastgroup)))
        pos = match.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    """Recursive descent over: expr -> term (+|- term)*, term -> factor (* factor)*,
    factor -> base (^ int)?, base -> number | name | ( expr )."""

    def __init__(self, text: str, names: Sequence[str]):
        self.text = text
        self.tokens = _tokenize(text)
        self.k = 0
        self.index_of = {name: i for i, name in enumerate(names)}
        self.arity = len(names)

    def peek(self):
        return self.tokens[self.k]

    def advance(self):
        tok = self.tokens[self.k]
        self.k += 1
        return tok

    def expect_op(self, op: str):
        kind, value, pos = self.peek()
        if kind != "op" or value != op:
            raise PolynomialParseError(f"expected {op!r}", pos)
        return self.advance()

    def parse(self) -> Polynomial:
        poly = self.expr()
        kind, value, pos = self.peek()
        if kind != "end":
            raise PolynomialParseError(f"unexpected trailing input {value!r}", pos)
        return poly

    def expr(self) -> Polynomial:
        sign = 1.0
        kind, value, _ = self.peek()
        if kind == "op" and value in "+-":
            self.advance()
            sign = -1.0 if value == "-" else 1.0
        poly = self.term() * sign
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "+-":
                self.advance()
                nxt = self.term()
                poly = poly + nxt if value == "+" else poly - nxt
            else:
                return poly

    def term(self) -> Polynomial:
        poly = self.factor()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value == "*":
                self.advance()
                poly = poly * self.factor()
            else:
                return poly

    def factor(self) -> Polynomial:
        poly = self.base()
        kind, value, _ = self.peek()
        if kind == "op" and value == "^":
            self.advance()
            nkind, nvalue, npos = self.peek()
            if nkind != "number":
                raise PolynomialParseError("exponent must be a nonnegative integer", npos)
            self.advance()
            try:
                as_float = float(nvalue)
            except ValueError:
                raise PolynomialParseError("bad exponent", npos) from None
            exponent = int(as_float)
            if exponent != as_float or "." in nvalue or "e" in nvalue.lower():
                raise PolynomialParseError("exponent must be a nonnegative integer", npos)
            poly = poly**exponent
        return poly

    def base(self) -> Polynomial:
        kind, value, pos = self.advance()
        if kind == "number":
            return Polynomial.constant(self.arity, float(value))
        if kind == "name":
            if value not in self.index_of:
                raise PolynomialParseError(f"unknown variable {value!r}", pos)
            return Polynomial.variable(self.arity, self.index_of[value])
        if kind == "op" and value == "(":
            poly = self.expr()
            self.expect_op(")")
            return poly
        raise PolynomialParseError(
            f"expected number, variable or '(' but found {value!r}" if value else "unexpected end of input",
            pos,
        )


def parse_polynomial(text: str, variable_names: Sequence[str]) -> Polynomial:
    """Parse `+ - * ^ ( )` expressions over the given variable names.

    Coefficients are unsigned decimals (scientific notation allowed); signs
    come from the grammar.  Exponents must be nonnegative integers.  Raises
    PolynomialParseError with a character position on malformed input or
    unknown variables.
    """
    if len(set(variable_names)) != len(variable_names):
        raise ValueError("duplicate variable names")
    return _Parser(text, variable_names).parse()
