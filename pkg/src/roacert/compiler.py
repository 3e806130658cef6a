"""Compile polynomial cone-membership constraints into a conic program.

A membership constraint asserts that an affine-in-decision-variables
polynomial expression lies in the degree-truncated quadratic module of a
semialgebraic generator list:

    expr = sigma_0 + sum_j s_j * g_j + sum_l p_l * h_l

with sigma_0 and every s_j a sum of squares (Gram-matrix PSD variables),
p_l free polynomial multipliers for equality generators, and everything
truncated so the right-hand side has total degree at most 2k.  Matching
coefficients monomial by monomial turns each membership into exactly
binom(m + 2k, 2k) linear equations over [free variables + svec(Gram
blocks)], which a conic solver handles as Zero/PSD-triangle cones.

svec convention: column-major upper triangle with off-diagonal entries
scaled by sqrt(2), so inner products and PSD-ness transfer verbatim to
the vectorized form.  Index (i, j) with i <= j sits at j(j+1)/2 + i.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .poly import Exponents, Polynomial, basis_size, monomial_basis

SQRT2 = math.sqrt(2.0)


# ----------------------------------------------------------------------
# svec helpers

def svec_dim(d: int) -> int:
    return d * (d + 1) // 2


def svec_index(i: int, j: int) -> int:
    """Position of entry (i, j), i <= j, in the svec layout."""
    if i > j:
        i, j = j, i
    return j * (j + 1) // 2 + i


def mat_from_svec(vec: np.ndarray, dim: int) -> np.ndarray:
    """Inverse of svec: rebuild the symmetric matrix."""
    out = np.zeros((dim, dim))
    k = 0
    for j in range(dim):
        for i in range(j + 1):
            if i == j:
                out[i, j] = vec[k]
            else:
                out[i, j] = out[j, i] = vec[k] / SQRT2
            k += 1
    return out


def svec_from_mat(mat: np.ndarray) -> np.ndarray:
    dim = mat.shape[0]
    out = np.empty(svec_dim(dim))
    k = 0
    for j in range(dim):
        for i in range(j + 1):
            out[k] = mat[i, j] if i == j else mat[i, j] * SQRT2
            k += 1
    return out


# ----------------------------------------------------------------------
# decision polynomials and affine expressions

@dataclass(frozen=True)
class DecisionPoly:
    """A polynomial whose coefficients are free scalar decision variables.

    var_ids aligns one free variable with each monomial of
    monomial_basis(arity, degree), in graded lex order.
    """

    name: str
    arity: int
    degree: int
    var_ids: tuple[int, ...]

    @property
    def basis(self) -> tuple[Exponents, ...]:
        return monomial_basis(self.arity, self.degree)

    def as_expr(self) -> "PolyExpr":
        lin = {
            vid: Polynomial.monomial(exps)
            for vid, exps in zip(self.var_ids, self.basis)
        }
        return PolyExpr(self.arity, Polynomial.zero(self.arity), lin)

    def value(self, free_values: np.ndarray) -> Polynomial:
        """Instantiate the polynomial from a solved free-variable vector."""
        terms = {
            exps: float(free_values[vid])
            for vid, exps in zip(self.var_ids, self.basis)
        }
        return Polynomial(self.arity, terms)


@dataclass(frozen=True)
class PolyExpr:
    """Polynomial with coefficients affine in scalar decision variables.

    expr = const + sum_id shape[id] * u_id.  Linear operations on
    polynomials (sums, derivatives, substitutions, embeddings) act
    shape-wise, which keeps the affinity explicit.
    """

    arity: int
    const: Polynomial
    lin: Mapping[int, Polynomial] = field(default_factory=dict)

    def __post_init__(self):
        if self.const.arity != self.arity:
            raise ValueError("const arity mismatch")
        clean = {}
        for vid, shape in self.lin.items():
            if shape.arity != self.arity:
                raise ValueError("shape arity mismatch")
            if not shape.is_zero():
                clean[int(vid)] = shape
        object.__setattr__(self, "lin", clean)

    @classmethod
    def from_constant(cls, poly: Polynomial) -> "PolyExpr":
        return cls(poly.arity, poly, {})

    @property
    def degree(self) -> int:
        deg = self.const.degree if not self.const.is_zero() else 0
        for shape in self.lin.values():
            deg = max(deg, shape.degree)
        return deg

    def map_polys(self, fn, new_arity: int) -> "PolyExpr":
        """Apply a linear polynomial map to the constant and every shape."""
        return PolyExpr(
            new_arity,
            fn(self.const),
            {vid: fn(shape) for vid, shape in self.lin.items()},
        )

    def __add__(self, other) -> "PolyExpr":
        if isinstance(other, (int, float)):
            other = PolyExpr.from_constant(Polynomial.constant(self.arity, other))
        elif isinstance(other, Polynomial):
            other = PolyExpr.from_constant(other)
        if not isinstance(other, PolyExpr):
            return NotImplemented
        if other.arity != self.arity:
            raise ValueError("arity mismatch")
        lin = dict(self.lin)
        for vid, shape in other.lin.items():
            lin[vid] = lin.get(vid, Polynomial.zero(self.arity)) + shape
        return PolyExpr(self.arity, self.const + other.const, lin)

    __radd__ = __add__

    def __neg__(self) -> "PolyExpr":
        return PolyExpr(self.arity, -self.const, {v: -s for v, s in self.lin.items()})

    def __sub__(self, other) -> "PolyExpr":
        if isinstance(other, (int, float, Polynomial)):
            return self + (-other if not isinstance(other, Polynomial) else (-1.0) * other)
        if isinstance(other, PolyExpr):
            return self + (-other)
        return NotImplemented

    def __rsub__(self, other) -> "PolyExpr":
        return (-self) + other

    def scale(self, factor: float) -> "PolyExpr":
        return PolyExpr(
            self.arity,
            self.const * factor,
            {v: s * factor for v, s in self.lin.items()},
        )

    def value(self, free_values: np.ndarray) -> Polynomial:
        out = self.const
        for vid, shape in self.lin.items():
            out = out + shape * float(free_values[vid])
        return out


# ----------------------------------------------------------------------
# quadratic module description

@dataclass(frozen=True)
class QuadraticModuleSpec:
    """Generators plus the truncation degree 2k of the module."""

    arity: int
    inequality_generators: tuple[Polynomial, ...] = ()
    equality_generators: tuple[Polynomial, ...] = ()
    truncation_degree: int = 2

    def __post_init__(self):
        object.__setattr__(
            self, "inequality_generators", tuple(self.inequality_generators)
        )
        object.__setattr__(
            self, "equality_generators", tuple(self.equality_generators)
        )
        if self.truncation_degree < 0 or self.truncation_degree % 2 != 0:
            raise ValueError("truncation degree must be even and nonnegative")
        for g in self.inequality_generators + self.equality_generators:
            if g.arity != self.arity:
                raise ValueError("generator arity mismatch")
            if g.degree > self.truncation_degree:
                raise ValueError(
                    f"generator degree {g.degree} exceeds truncation "
                    f"{self.truncation_degree}"
                )


def constraint_count(spec: QuadraticModuleSpec) -> int:
    """Equality rows one membership constraint contributes:
    one per monomial of degree <= 2k, i.e. binom(m + 2k, 2k)."""
    return basis_size(spec.arity, spec.truncation_degree)


def multiplier_degree(truncation_degree: int, generator_degree: int) -> int:
    """Gram-side basis degree for an inequality generator:
    k_j = floor((2k - deg g) / 2)."""
    return (truncation_degree - generator_degree) // 2


# ----------------------------------------------------------------------
# program assembly

@dataclass(frozen=True)
class GramBlock:
    label: str
    dim: int
    basis: tuple[Exponents, ...]
    generator: Polynomial  # constant one for the plain sigma_0 block


@dataclass(frozen=True)
class MembershipConstraint:
    label: str
    spec: QuadraticModuleSpec
    expr: PolyExpr
    row_offset: int
    num_rows: int
    row_basis: tuple[Exponents, ...]
    sigma_block: int
    ineq_blocks: tuple[int, ...]
    eq_multiplier_ids: tuple[tuple[int, ...], ...]
    eq_multiplier_bases: tuple[tuple[Exponents, ...], ...]


class _MonomialTable:
    """Integer encoding of exponent tuples so products become sums.

    With per-variable exponents bounded by 2k, base 2k + 1 is collision
    free; lookups go through a sorted code array.
    """

    def __init__(self, arity: int, max_degree: int):
        self.basis = monomial_basis(arity, max_degree)
        base = max_degree + 1
        self.weights = (base ** np.arange(max(arity, 1), dtype=np.int64))[:arity]
        codes = self.encode(self.basis)
        self.order = np.argsort(codes)
        self.sorted_codes = codes[self.order]

    def encode(self, monomials: Sequence[Exponents]) -> np.ndarray:
        arr = np.asarray(monomials, dtype=np.int64).reshape(len(monomials), -1)
        if arr.shape[1] == 0:
            return np.zeros(len(monomials), dtype=np.int64)
        return arr @ self.weights

    def rows_for(self, codes: np.ndarray) -> np.ndarray:
        pos = np.searchsorted(self.sorted_codes, codes)
        if np.any(pos >= len(self.sorted_codes)) or np.any(
            self.sorted_codes[np.minimum(pos, len(self.sorted_codes) - 1)] != codes
        ):
            raise AssertionError("monomial outside the truncation basis")
        return self.order[pos]


class SosProgram:
    """Builder that accumulates decision polynomials and memberships.

    finalize() lays out columns as [all free variables | svec of Gram
    blocks in creation order] and returns the standard-form ConicProblem.
    """

    def __init__(self):
        self._free_names: list[str] = []
        self._blocks: list[GramBlock] = []
        self._constraints: list[MembershipConstraint] = []
        self._num_rows = 0
        # COO pieces; svec columns are relative to the PSD region start
        self._free_r: list[np.ndarray] = []
        self._free_c: list[np.ndarray] = []
        self._free_v: list[np.ndarray] = []
        self._svec_r: list[np.ndarray] = []
        self._svec_c: list[np.ndarray] = []
        self._svec_v: list[np.ndarray] = []
        self._rhs: list[np.ndarray] = []
        self._svec_cols_used = 0

    # -- variables ------------------------------------------------------

    def _new_free(self, name: str) -> int:
        self._free_names.append(name)
        return len(self._free_names) - 1

    @property
    def num_free_vars(self) -> int:
        return len(self._free_names)

    @property
    def blocks(self) -> list[GramBlock]:
        return list(self._blocks)

    @property
    def constraints(self) -> list[MembershipConstraint]:
        return list(self._constraints)

    def new_decision_poly(self, name: str, arity: int, degree: int) -> DecisionPoly:
        basis = monomial_basis(arity, degree)
        ids = tuple(self._new_free(f"{name}[{exps}]") for exps in basis)
        return DecisionPoly(name=name, arity=arity, degree=degree, var_ids=ids)

    # -- constraint assembly -------------------------------------------

    def _add_gram_block(self, label: str, table: _MonomialTable,
                        generator: Polynomial, basis_degree: int,
                        arity: int) -> int:
        basis = monomial_basis(arity, basis_degree)
        dim = len(basis)
        block_index = len(self._blocks)
        self._blocks.append(GramBlock(label, dim, basis, generator))
        col_start = self._svec_cols_used
        self._svec_cols_used += svec_dim(dim)

        codes = table.encode(basis)
        iu, ju = np.triu_indices(dim)
        local_cols = ju * (ju + 1) // 2 + iu
        pair_codes = codes[iu] + codes[ju]
        scale = np.where(iu == ju, 1.0, SQRT2)
        gen_codes = table.encode(list(generator.terms.keys()))
        gen_coeffs = np.array(list(generator.terms.values()))
        for gcode, gc in zip(gen_codes, gen_coeffs):
            rows = table.rows_for(pair_codes + gcode) + self._num_rows
            self._svec_r.append(rows)
            self._svec_c.append(col_start + local_cols)
            self._svec_v.append(-gc * scale)
        return block_index

    def add_membership_constraint(self, expr: PolyExpr,
                                  spec: QuadraticModuleSpec,
                                  label: str = "") -> MembershipConstraint:
        """Append the coefficient-matching rows for expr in Q_{2k}(spec).

        Creates one PSD block for sigma_0, one per inequality generator
        (basis degree floor((2k - deg g)/2)), and a free polynomial
        multiplier of degree 2k - deg h per equality generator.  Emits
        exactly constraint_count(spec) equality rows.
        """
        if expr.arity != spec.arity:
            raise ValueError("expression arity does not match generator arity")
        two_k = spec.truncation_degree
        if expr.degree > two_k:
            raise ValueError(
                f"expression degree {expr.degree} exceeds truncation {two_k}"
            )
        m = spec.arity
        table = _MonomialTable(m, two_k)
        row_offset = self._num_rows
        label = label or f"membership{len(self._constraints)}"

        # rhs from the constant part, one row per basis monomial
        rhs = np.zeros(len(table.basis))
        for exps, coeff in expr.const.terms.items():
            rhs[_index_in(table, exps)] = -coeff

        # decision-variable columns
        var_rows, var_cols, var_vals = [], [], []
        for vid, shape in expr.lin.items():
            for exps, coeff in shape.terms.items():
                var_rows.append(row_offset + _index_in(table, exps))
                var_cols.append(vid)
                var_vals.append(coeff)
        if var_rows:
            self._free_r.append(np.array(var_rows, dtype=np.int64))
            self._free_c.append(np.array(var_cols, dtype=np.int64))
            self._free_v.append(np.array(var_vals))

        sigma = self._add_gram_block(
            f"{label}:sigma0", table, Polynomial.constant(m, 1.0),
            two_k // 2, m
        )
        ineq_blocks = []
        for j, g in enumerate(spec.inequality_generators):
            ineq_blocks.append(
                self._add_gram_block(
                    f"{label}:g{j}", table, g,
                    multiplier_degree(two_k, g.degree), m
                )
            )

        eq_ids: list[tuple[int, ...]] = []
        eq_bases: list[tuple[Exponents, ...]] = []
        for l, h in enumerate(spec.equality_generators):
            cap = two_k - h.degree
            basis = monomial_basis(m, cap)
            ids = tuple(
                self._new_free(f"{label}:p{l}[{exps}]") for exps in basis
            )
            eq_ids.append(ids)
            eq_bases.append(basis)
            mult_codes = table.encode(basis)
            for exps, hc in h.terms.items():
                hcode = int(table.encode([exps])[0])
                rows = table.rows_for(mult_codes + hcode) + row_offset
                self._free_r.append(rows)
                self._free_c.append(np.array(ids, dtype=np.int64))
                self._free_v.append(np.full(len(ids), -hc))

        self._rhs.append(rhs)
        self._num_rows += len(table.basis)
        record = MembershipConstraint(
            label=label, spec=spec, expr=expr,
            row_offset=row_offset, num_rows=len(table.basis),
            row_basis=table.basis,
            sigma_block=sigma, ineq_blocks=tuple(ineq_blocks),
            eq_multiplier_ids=tuple(eq_ids),
            eq_multiplier_bases=tuple(eq_bases),
        )
        self._constraints.append(record)
        return record

    # -- finalization ---------------------------------------------------

    def finalize(self, objective: Mapping[int, float] | None = None) -> "ConicProblem":
        """Freeze the column layout and emit the standard-form problem."""
        num_free = self.num_free_vars
        dims = [blk.dim for blk in self._blocks]
        total_cols = num_free + sum(svec_dim(d) for d in dims)
        rows = np.concatenate(
            self._free_r + self._svec_r
        ) if (self._free_r or self._svec_r) else np.zeros(0, dtype=np.int64)
        cols = np.concatenate(
            self._free_c + [c + num_free for c in self._svec_c]
        ) if (self._free_c or self._svec_c) else np.zeros(0, dtype=np.int64)
        vals = np.concatenate(
            self._free_v + self._svec_v
        ) if (self._free_v or self._svec_v) else np.zeros(0)
        a_eq = sp.coo_matrix(
            (vals, (rows, cols)), shape=(self._num_rows, total_cols)
        ).tocsc()
        rhs = np.concatenate(self._rhs) if self._rhs else np.zeros(0)
        cost = np.zeros(num_free)
        for vid, cv in (objective or {}).items():
            cost[vid] = float(cv)
        return ConicProblem(
            num_free_vars=num_free,
            psd_block_dims=dims,
            a_eq=a_eq,
            rhs=rhs,
            objective_free=cost,
            free_names=list(self._free_names),
            blocks=self.blocks,
            constraints=self.constraints,
        )


def _index_in(table: _MonomialTable, exps: Exponents) -> int:
    return int(table.rows_for(table.encode([exps]))[0])


def moment_objective(w: DecisionPoly, moments: np.ndarray) -> dict[int, float]:
    """Cost aligning each coefficient of w with its basis monomial moment."""
    if len(moments) != len(w.var_ids):
        raise ValueError("moment vector length must match w's basis")
    return {vid: float(mv) for vid, mv in zip(w.var_ids, moments)}


# ----------------------------------------------------------------------
# finalized standard form

@dataclass
class ConicProblem:
    """min c.z subject to A z = b, z = [free | svec blocks], blocks PSD.

    Structure metadata (free_names, blocks, constraints) rides along when
    the problem was built in process and is None after a JSON round trip;
    the solver only needs the numeric part.
    """

    num_free_vars: int
    psd_block_dims: list[int]
    a_eq: sp.csc_matrix
    rhs: np.ndarray
    objective_free: np.ndarray
    free_names: list[str] | None = None
    blocks: list[GramBlock] | None = None
    constraints: list[MembershipConstraint] | None = None

    @property
    def num_rows(self) -> int:
        return self.a_eq.shape[0]

    @property
    def total_cols(self) -> int:
        return self.a_eq.shape[1]

    def block_col_start(self, block_index: int) -> int:
        start = self.num_free_vars
        for d in self.psd_block_dims[:block_index]:
            start += svec_dim(d)
        return start

    def full_objective(self) -> np.ndarray:
        out = np.zeros(self.total_cols)
        out[: self.num_free_vars] = self.objective_free
        return out

    def to_json(self) -> str:
        coo = self.a_eq.tocoo()
        payload = {
            "format": "roacert-conic-v1",
            "num_free_vars": self.num_free_vars,
            "psd_block_dims": list(self.psd_block_dims),
            "num_rows": int(self.num_rows),
            "a_eq": {
                "row": coo.row.tolist(),
                "col": coo.col.tolist(),
                "val": coo.data.tolist(),
            },
            "rhs": self.rhs.tolist(),
            "objective_free": self.objective_free.tolist(),
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ConicProblem":
        payload = json.loads(text)
        if payload.get("format") != "roacert-conic-v1":
            raise ValueError("unrecognized conic problem format")
        dims = [int(d) for d in payload["psd_block_dims"]]
        num_free = int(payload["num_free_vars"])
        total = num_free + sum(svec_dim(d) for d in dims)
        a = payload["a_eq"]
        a_eq = sp.coo_matrix(
            (a["val"], (a["row"], a["col"])),
            shape=(int(payload["num_rows"]), total),
        ).tocsc()
        return cls(
            num_free_vars=num_free,
            psd_block_dims=dims,
            a_eq=a_eq,
            rhs=np.array(payload["rhs"], dtype=float),
            objective_free=np.array(payload["objective_free"], dtype=float),
        )


# ----------------------------------------------------------------------
# certificate-side reconstruction

def gram_polynomial(basis: Sequence[Exponents], q: np.ndarray) -> Polynomial:
    """b(x)^T Q b(x) as an explicit polynomial."""
    arity = len(basis[0]) if basis else 0
    terms: dict[Exponents, float] = {}
    dim = len(basis)
    for i in range(dim):
        for j in range(dim):
            key = tuple(a + b for a, b in zip(basis[i], basis[j]))
            terms[key] = terms.get(key, 0.0) + float(q[i, j])
    return Polynomial(arity, terms)


def membership_residual(constraint: MembershipConstraint,
                        blocks: Sequence[GramBlock],
                        free_values: np.ndarray,
                        block_values: Sequence[np.ndarray]) -> Polynomial:
    """expr - (sigma_0 + sum s_j g_j + sum p_l h_l) at a candidate solution.

    Exact coefficient arithmetic; a solved problem should make every
    coefficient small relative to the expression scale.
    """
    lhs = constraint.expr.value(free_values)
    q0 = block_values[constraint.sigma_block]
    acc = gram_polynomial(blocks[constraint.sigma_block].basis, q0)
    for bidx in constraint.ineq_blocks:
        s = gram_polynomial(blocks[bidx].basis, block_values[bidx])
        acc = acc + s * blocks[bidx].generator
    for ids, basis, h in zip(constraint.eq_multiplier_ids,
                             constraint.eq_multiplier_bases,
                             constraint.spec.equality_generators):
        p = Polynomial(constraint.spec.arity, {
            exps: float(free_values[vid]) for vid, exps in zip(ids, basis)
        })
        acc = acc + p * h
    return lhs - acc
