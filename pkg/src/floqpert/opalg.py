"""Exact rational algebra of projector/resolvent operator strings.

Degenerate perturbation theory expresses the effective Hamiltonian and the
subspace transformation as linear combinations of operator strings

    R^{m_n} V R^{m_{n-1}} ... V R^{m_1} V R^{m_0},

where ``V`` is the perturbation, ``R`` the resolvent and ``R^0 = P`` the
projector onto the degenerate subspace.  A string is represented here by its
exponent tuple ``(m_n, ..., m_1, m_0)`` (leading slot first), and a sum of
strings by a mapping from exponent tuples to exact rational coefficients.

Solving the wave-operator recurrences in this algebra yields, for each order,
the multiplicity-coefficient tables consumed by the numerical evaluation of
the effective Hamiltonian and of the transformation into the degenerate
subspace.  All arithmetic in this module is exact; no floats appear.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from pathlib import Path

Term = tuple[int, ...]
TermMap = dict[Term, Fraction]

CACHE_ENV_VAR = "FLOQPERT_CACHE_DIR"
_CACHE_FORMAT_VERSION = 1


@dataclass(frozen=True)
class StringSum:
    """A formal sum of operator strings with a fixed number of V factors.

    ``terms`` maps each exponent tuple to its rational coefficient; tuples of
    a sum sharing ``order`` V factors all have length ``order + 1``.  Terms
    with coefficient zero are never stored.
    """

    order: int
    terms: TermMap

    def __post_init__(self):
        for tup, coeff in self.terms.items():
            if len(tup) != self.order + 1:
                raise ValueError(f"tuple {tup} incompatible with order {self.order}")
            if coeff == 0:
                raise ValueError("zero coefficients must not be stored")
            if any(m < 0 for m in tup):
                raise ValueError(f"negative exponent in {tup}")

    def __bool__(self):
        return bool(self.terms)


def _clean(order: int, terms: TermMap) -> StringSum:
    return StringSum(order, {t: c for t, c in terms.items() if c != 0})


def projector() -> StringSum:
    """The bare projector P, the identity of the composition product."""
    return StringSum(0, {(0,): Fraction(1)})


def empty(order: int) -> StringSum:
    return StringSum(order, {})


def add(*sums: StringSum) -> StringSum:
    order = sums[0].order
    if any(s.order != order for s in sums):
        raise ValueError("cannot add string sums of different order")
    out: TermMap = {}
    for s in sums:
        for tup, coeff in s.terms.items():
            out[tup] = out.get(tup, Fraction(0)) + coeff
    return _clean(order, out)


def scale(s: StringSum, factor: Fraction | int) -> StringSum:
    factor = Fraction(factor)
    if factor == 0:
        return empty(s.order)
    return StringSum(s.order, {t: c * factor for t, c in s.terms.items()})


def compose(a: StringSum, b: StringSum) -> StringSum:
    """Operator product of two string sums (no V factor in between).

    The trailing slot of ``a`` meets the leading slot of ``b``: P.P = P,
    R^i.R^j = R^(i+j), and the mixed products P.R and R.P vanish because the
    resolvent is supported on the complement of the projector.
    """
    out: TermMap = {}
    for ta, ca in a.terms.items():
        for tb, cb in b.terms.items():
            right, left = ta[-1], tb[0]
            if (right == 0) != (left == 0):
                continue
            tup = ta[:-1] + (right + left,) + tb[1:]
            out[tup] = out.get(tup, Fraction(0)) + ca * cb
    return _clean(a.order + b.order, out)


def vjoin(a: StringSum, b: StringSum) -> StringSum:
    """Operator product with one V factor inserted: ``a V b``."""
    out: TermMap = {}
    for ta, ca in a.terms.items():
        for tb, cb in b.terms.items():
            tup = ta + tb
            out[tup] = out.get(tup, Fraction(0)) + ca * cb
    return _clean(a.order + b.order + 1, out)


def adjoint(s: StringSum) -> StringSum:
    """Hermitian adjoint: reverses each string.

    The coefficient map is untouched: coefficients are rational, hence real,
    so conjugation is the identity (guaranteed by the Fraction type).
    """
    return StringSum(s.order, {t[::-1]: c for t, c in s.terms.items()})


@lru_cache(maxsize=None)
def build_L(r: int) -> StringSum:
    """Order-r wave operator as a string sum.

    L_0 = P, L_1 = R V P, and for r >= 2

        L_r = R V L_{r-1} - sum_{k=1}^{r-1} R L_k V L_{r-k-1}.

    Every term of L_{r>=1} begins with R^{m>=1} and ends with P.
    """
    if r < 0:
        raise ValueError("order must be non-negative")
    if r == 0:
        return projector()
    if r == 1:
        return StringSum(1, {(1, 0): Fraction(1)})
    resolvent = StringSum(0, {(1,): Fraction(1)})
    first = vjoin(resolvent, build_L(r - 1))
    rest = [
        vjoin(_prepend_resolvent(build_L(k)), build_L(r - k - 1))
        for k in range(1, r)
    ]
    return add(first, *(scale(s, -1) for s in rest))


def _prepend_resolvent(s: StringSum) -> StringSum:
    """Left-multiply by R.  Terms starting with P are annihilated."""
    out: TermMap = {}
    for tup, coeff in s.terms.items():
        if tup[0] == 0:
            continue
        out[(tup[0] + 1,) + tup[1:]] = coeff
    return _clean(s.order, out)


def _prepend_vp(s: StringSum) -> StringSum:
    # P V s, used when assembling the effective-Hamiltonian sum
    return vjoin(projector(), s)


@lru_cache(maxsize=None)
def build_N_powers(r: int) -> tuple[StringSum, StringSum, StringSum]:
    """Order-r normalization operator and its half powers.

    N_r = sum_k adjoint(L_k) L_{r-k}; the square roots follow from the
    recurrences implied by N^{1/2} N^{1/2} = N and N^{-1/2} N^{1/2} = P,
    with N_0 = N_0^{+-1/2} = P and N_1^{1/2} = 0.
    """
    if r < 0:
        raise ValueError("order must be non-negative")
    if r == 0:
        p = projector()
        return p, p, p
    n_r = add(*(compose(adjoint(build_L(k)), build_L(r - k)) for k in range(r + 1)))
    half = add(
        scale(n_r, Fraction(1, 2)),
        *(
            scale(compose(build_N_powers(k)[1], build_N_powers(r - k)[1]), Fraction(-1, 2))
            for k in range(1, r)
        ),
    )
    # k = 0 of the N^{-1/2} recurrence needs N_r^{1/2} of the current order
    neg_half = add(
        scale(half, -1),
        *(
            scale(compose(build_N_powers(k)[2], build_N_powers(r - k)[1]), -1)
            for k in range(1, r)
        ),
    )
    return n_r, half, neg_half


@lru_cache(maxsize=None)
def _heff_sum(r: int) -> StringSum:
    if r < 1:
        raise ValueError("effective-Hamiltonian order starts at 1")
    parts = []
    for k in range(r):
        half_k = build_N_powers(k)[1]
        if not half_k:
            continue
        for l in range(r - k):
            neg_half = build_N_powers(r - k - l - 1)[2]
            if not neg_half:
                continue
            parts.append(compose(vjoin(half_k, build_L(l)), neg_half))
    return add(*parts)


@lru_cache(maxsize=None)
def _w_sum(r: int) -> StringSum:
    if r < 0:
        raise ValueError("order must be non-negative")
    return add(*(compose(build_L(k), build_N_powers(r - k)[2]) for k in range(r + 1)))


@dataclass(frozen=True)
class CoefficientTable:
    """Multiplicity coefficients of one perturbative order.

    For the effective Hamiltonian at order r the keys are the interior
    exponents ``(m_{r-1}, ..., m_1)`` (both boundary slots are P); they have
    length r-1 and sum to r-1.  For the transformation W the keys keep the
    leading slot, ``(m_r, ..., m_1)``, with length r and sum r.
    """

    kind: str  # "heff" | "w"
    order: int
    entries: dict[Term, Fraction]

    def __post_init__(self):
        if self.kind not in ("heff", "w"):
            raise ValueError(f"unknown table kind {self.kind!r}")
        tuple_len = self.order - 1 if self.kind == "heff" else self.order
        tuple_sum = self.order - 1 if self.kind == "heff" else self.order
        for tup, coeff in self.entries.items():
            if len(tup) != tuple_len or sum(tup) != tuple_sum:
                raise ValueError(f"malformed {self.kind} tuple {tup} at order {self.order}")
            if coeff == 0:
                raise ValueError("zero coefficients must not be stored")

    def __getitem__(self, tup: Term) -> Fraction:
        return self.entries[tup]

    def get(self, tup: Term, default=None):
        return self.entries.get(tup, default)


@lru_cache(maxsize=None)
def heff_table(r: int) -> CoefficientTable:
    """Table of effective-Hamiltonian multiplicity coefficients at order r."""
    if r < 1:
        raise ValueError("effective-Hamiltonian order starts at 1")
    cached = _load_cached("heff", r)
    if cached is not None:
        return cached
    entries: dict[Term, Fraction] = {}
    for tup, coeff in _heff_sum(r).terms.items():
        if tup[0] != 0 or tup[-1] != 0:
            raise AssertionError(f"effective-Hamiltonian string {tup} not P-bounded")
        entries[tup[1:-1]] = coeff
    table = CoefficientTable("heff", r, entries)
    _store_cached(table)
    return table


@lru_cache(maxsize=None)
def w_table(r: int) -> CoefficientTable:
    """Table of transformation multiplicity coefficients at order r."""
    if r < 1:
        raise ValueError("transformation table order starts at 1")
    cached = _load_cached("w", r)
    if cached is not None:
        return cached
    entries: dict[Term, Fraction] = {}
    for tup, coeff in _w_sum(r).terms.items():
        if tup[-1] != 0:
            raise AssertionError(f"transformation string {tup} does not end with P")
        entries[tup[:-1]] = coeff
    table = CoefficientTable("w", r, entries)
    _store_cached(table)
    return table


# -- disk memoization ---------------------------------------------------------
#
# Tables are pure functions of (kind, order); they are stored once in a
# versioned text format so that high orders are only ever computed once per
# machine.  Reads may race with writes from other processes, hence the
# write-to-temp-then-rename dance.


def cache_directory() -> Path:
    env = os.environ.get(CACHE_ENV_VAR)
    if env:
        return Path(env)
    xdg = os.environ.get("XDG_CACHE_HOME", os.path.expanduser("~/.cache"))
    return Path(xdg) / "floqpert"


def _cache_path(kind: str, order: int) -> Path:
    return cache_directory() / f"coeffs_v{_CACHE_FORMAT_VERSION}_{kind}_{order:02d}.txt"


def _load_cached(kind: str, order: int) -> CoefficientTable | None:
    path = _cache_path(kind, order)
    try:
        lines = path.read_text().splitlines()
    except OSError:
        return None
    try:
        header = lines[0].split()
        if header[:4] != ["floqpert-coeffs", f"v{_CACHE_FORMAT_VERSION}", kind, str(order)]:
            return None
        count = int(header[4])
        entries: dict[Term, Fraction] = {}
        for line in lines[1 : count + 1]:
            *slots, num, den = line.split()
            entries[tuple(int(m) for m in slots)] = Fraction(int(num), int(den))
        if len(entries) != count:
            return None
        return CoefficientTable(kind, order, entries)
    except (ValueError, IndexError):
        return None


def _store_cached(table: CoefficientTable) -> None:
    path = _cache_path(table.kind, table.order)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        rows = sorted(table.entries.items())
        body = [f"floqpert-coeffs v{_CACHE_FORMAT_VERSION} {table.kind} {table.order} {len(rows)}"]
        for tup, coeff in rows:
            body.append(" ".join(map(str, tup)) + f" {coeff.numerator} {coeff.denominator}")
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name)
        with os.fdopen(fd, "w") as fh:
            fh.write("\n".join(body) + "\n")
        os.replace(tmp, path)
    except OSError:
        pass  # caching is best effort
