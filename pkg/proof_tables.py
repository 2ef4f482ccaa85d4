"""Built-in proof tables, looked up by name through builtin_tables()."""
from __future__ import annotations

import re
from fractions import Fraction
from typing import Iterable, Optional

from sympy import isprime

from partition_core import EMPTY_SPEC, ConstraintSpec, InvalidArgument, parse_rational
from meta_prover import ProofRow, ProofTable, TableCollection, UnknownName

F = Fraction

# published base thresholds for the S_p tables
SP_THRESHOLDS = {3: 814, 5: 6482}

M469_SETS = {
    F(1): (
        (2, 11, 13, 21, 22, 26, 33, 273),
        (2, 7, 11, 21, 22, 154),
        (2, 7, 13, 14, 39, 91, 182),
        (2, 7, 14, 21, 23, 46, 161),
        (2, 3),
    ),
    F(5, 6): (
        (3, 7, 13, 14, 26, 273),
        (2, 14, 22, 33, 77, 154),
        (2, 11, 22, 33),
        (3, 7, 13, 14, 39, 91, 182),
        (2, 11, 26, 33, 143),
    ),
}

ODD15_SETS = (
    (3, 5, 7, 9, 21, 27, 35, 81, 147, 189, 245, 441, 567, 3969),
    (3, 5, 7, 9, 15, 25, 63, 81, 189, 441, 567, 1225, 1323, 3969),
    (3, 5, 7, 9, 15, 25, 49, 125, 147, 441, 1225, 1715, 3087, 6125),
    (3, 5, 7, 9, 21, 27, 35, 63, 147, 189, 245, 1323),
    (3, 5, 7, 9, 21, 25, 27, 125, 189, 245, 441, 1225, 1323, 6125),
    (3, 5, 7, 9, 21, 25, 35, 63, 147, 245, 441, 1225),
    (3, 5, 7, 9, 15, 27, 49, 81, 189, 441, 567, 3969),
    (3, 5, 7, 9, 21, 25, 35, 63, 175, 245, 441, 1029, 1225, 8575),
    (3, 5, 7, 9, 15, 25, 35, 147, 441, 1225, 1715, 3087),
    (3, 5, 7, 9, 15, 27, 49, 63, 189, 1323),
    (3, 5, 7, 9, 15, 27, 49, 63, 343, 441, 1323, 9261),
    (3, 5, 7, 9, 15, 25, 49, 63, 441, 1225),
    (3, 5, 7, 9, 15, 21, 35, 441, 1715, 3087),
    (3, 5, 7, 9, 21, 27, 35, 49, 189, 245, 441, 1323),
    (3, 5, 7, 9, 25, 27, 35, 63, 81, 189, 245, 567, 1225, 3969),
)


def _rows(m, betas: Iterable, sets: Iterable) -> tuple[ProofRow, ...]:
    betas, sets = list(betas), list(sets)
    ms = list(m) if isinstance(m, (tuple, list)) else [m] * len(sets)
    return tuple(ProofRow(i, mi, F(b), tuple(A)) for i, (mi, b, A) in enumerate(zip(ms, betas, sets), 1))


def _collection(name: str, rows_by_alpha: dict, Q: ConstraintSpec, X: Optional[int],
                M_prime: Optional[int] = None, focus: Optional[Fraction] = None) -> TableCollection:
    S = frozenset(rows_by_alpha)
    tables = (ProofTable(alpha, rows, S, Q, M_prime, X) for alpha, rows in rows_by_alpha.items())
    return TableCollection(name, tables, focus)


def graham_q() -> TableCollection:
    """S = {1}, Q: no part equal to 1 or 39."""
    rows = {F(1): _rows(2, (1, 1), ((3, 7, 78, 91), (2,)))}
    return _collection("graham-q", rows, ConstraintSpec(forbidden={1, 39}), X=78)


def graham_s() -> TableCollection:
    rows = {
        F(1): _rows(2, (F(4, 3), 2), ((3,), ())),
        F(4, 3): _rows(2, (2, F(4, 3)), ((3,), (3, 5, 9, 45))),
        F(2): _rows(1, (1,), ((1,),)),
    }
    return _collection("graham-s", rows, EMPTY_SPEC, X=79)


def sp_rows(p: int, s: int) -> tuple[ProofRow, ...]:
    """Rows for alpha = s/p^2, split by where s falls."""
    q = p * p
    if s <= q - p:
        return _rows(2, (F(2 * s - 2, q), F(2 * s, q)), ((q,), ()))
    if s <= q:
        return _rows(2, (F(2 * s - 2 * p, q), F(2 * s - 2 * p - 2, q)), ((p,), (p, q)))
    if s == q + 1:
        return _rows(2, (2, F(2 * q - 2 * p, q)), ((q,), (p, q)))
    return _rows(2, (F(2 * s - 2 * q, q), F(2 * s - 2 * q - 2, q)), ((1,), (1, q)))


def sp_members(p: int) -> list[Fraction]:
    q = p * p
    return [F(s, q) for s in range(4, 2 * q - 2 * p + 1, 2)] + [F(1), F(2)]


def sp_tables(p: int, X: Optional[int] = None, M_prime: Optional[int] = None,
              Q: Optional[ConstraintSpec] = None) -> TableCollection:
    """S_p = {4/p^2, 6/p^2, ..., (2p^2 - 2p)/p^2, 1, 2} with Q = {2, p}-full by default."""
    if p < 3 or not isprime(p):
        raise InvalidArgument(f"p must be an odd prime, got {p}")
    q = p * p
    rows = {}
    for alpha in sp_members(p):
        if alpha == 2:
            rows[alpha] = _rows(1, (1,), ((1,),))
        else:
            rows[alpha] = sp_rows(p, alpha.numerator * (q // alpha.denominator))
    Q = ConstraintSpec(allowed_primes={2, p}) if Q is None else Q
    X = SP_THRESHOLDS.get(p) if X is None else X
    return _collection(f"sp({p})", rows, Q, X, M_prime)


def m469(M: int = 4) -> TableCollection:
    """S = {5/6, 1}, m = 5, beta = 5/6 everywhere; Q = M-free for M divisible by 4, 6 or 9."""
    if not any(M % d == 0 for d in (4, 6, 9)):
        raise InvalidArgument(f"M must be divisible by 4, 6 or 9, got {M}")
    rows = {alpha: _rows(5, [F(5, 6)] * 5, sets) for alpha, sets in M469_SETS.items()}
    return _collection(f"m469({M})", rows, ConstraintSpec(m_free=(M,)), X=211)


def odd15() -> TableCollection:
    """S = {1}, m = 15; Q = {3,5,7}-full without 1, for n = 1 (mod 8)."""
    rows = {F(1): _rows(15, [1] * 15, ODD15_SETS)}
    Q = ConstraintSpec(allowed_primes={3, 5, 7}, forbidden={1})
    return _collection("odd15", rows, Q, X=3609, M_prime=8)


def arbsmall_bound(k: int) -> int:
    if k < 2:
        raise InvalidArgument(f"k must be >= 2, got {k}")
    return 106 * 4 ** k - 98 * 3 ** k


def arbsmall_recurrence(k: int) -> list[int]:
    """N(2), ..., N(k) from N(2) = 814 and N(j) <= 4 N(j-1) + 98 * 3^(j-1)."""
    if k < 2:
        raise InvalidArgument(f"k must be >= 2, got {k}")
    bounds = [SP_THRESHOLDS[3]]
    for j in range(3, k + 1):
        bounds.append(4 * bounds[-1] + 98 * 3 ** (j - 1))
    return bounds


def arbsmall_level(j: int) -> dict:
    """The two tables that lift 2/3^(j-1) and 4/3^j from level j - 1."""
    t = 3 ** (j - 1)
    up = F(4, t)
    return {
        F(2, t): _rows((4, 2, 4), (up, up, up), ((t,), (), (2 * t, 3 * t, 6 * t))),
        F(4, 3 * t): _rows(4, (up, F(2, t), up, up), (
            (3 * t,),
            (2 * t, 6 * t, 9 * t, 27 * t, 54 * t),
            (6 * t, 9 * t, 18 * t),
            (6 * t, 9 * t, 27 * t, 54 * t),
        )),
    }


def arbsmall(k: int, which: Optional[Fraction] = None) -> TableCollection:
    """The S_3 tables plus levels 3..k, for 5-free 2/3^(k-1)- and 4/3^k-partitions."""
    if k < 2:
        raise InvalidArgument(f"k must be >= 2, got {k}")
    if which is not None and which not in (F(2, 3 ** (k - 1)), F(4, 3 ** k)):
        raise InvalidArgument(f"arbsmall({k}) covers 2/3^{k - 1} and 4/3^{k}, not {which}")
    rows = {alpha: table.rows for alpha, table in sp_tables(3).tables.items()}
    for j in range(3, k + 1):
        rows.update(arbsmall_level(j))
    return _collection(f"arbsmall({k})", rows, ConstraintSpec(m_free=(5,)), X=arbsmall_bound(k), focus=which)


BUILTIN_NAMES = ("graham-q", "graham-s", "sp(p)", "m469(M)", "odd15", "arbsmall(k[,alpha])")

_CALL = re.compile(r"^([a-z0-9-]+?)(?:\((.*)\))?$")


def builtin_tables(name: str) -> TableCollection:
    match = _CALL.match(name.strip().lower())
    if match is None:
        raise UnknownName(f"unknown table collection {name!r}; known: {', '.join(BUILTIN_NAMES)}")
    base, args = match.group(1), match.group(2)
    values = [a.strip() for a in args.split(",")] if args else []
    try:
        if base == "graham-q" and not values:
            return graham_q()
        if base == "graham-s" and not values:
            return graham_s()
        if base == "odd15" and not values:
            return odd15()
        if base == "sp" and len(values) == 1:
            p = int(values[0])
            return sp_tables(p, M_prime=3 if p == 5 else None)
        if base == "m469" and len(values) <= 1:
            return m469(int(values[0]) if values else 4)
        if base == "arbsmall" and 1 <= len(values) <= 2:
            which = parse_rational(values[1]) if len(values) == 2 else None
            return arbsmall(int(values[0]), which)
    except ValueError as e:
        if isinstance(e, InvalidArgument):
            raise
        raise UnknownName(f"bad arguments in {name!r}") from e
    raise UnknownName(f"unknown table collection {name!r}; known: {', '.join(BUILTIN_NAMES)}")
