"""Proof tables for the induction n = sum(A_i) + m_i * n'.

A table for alpha lists rows (m_i, beta_i, A_i). When the five properties
hold for every alpha in S and every n in the base window [X, window_bound]
has a witness, an alpha-partition with property Q exists for every n >= X,
and construct() builds it by unrolling the induction.
"""
from __future__ import annotations

import logging
from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from math import gcd, lcm
from typing import Iterable, Iterator, Optional, Protocol

from partition_core import (
    EMPTY_SPEC,
    ConstraintSpec,
    InvalidArgument,
    PartitionSet,
    RecipartError,
    admits,
    format_partition,
    format_rational,
    is_smooth,
    make_partition,
    parse_alpha,
    parse_rational,
    reciprocal_sum,
    residue_of,
    satisfies,
    scale_set,
)
from search_engine import (
    BudgetExhausted,
    RangeReport,
    SearchBudget,
    UNLIMITED,
    find_one,
    passes_residue,
    verify_range,
)

logger = logging.getLogger(__name__)


class MissingTable(RecipartError):
    pass


class GcdViolation(RecipartError):
    def __init__(self, message: str, element: int):
        super().__init__(message)
        self.element = element


class BelowThreshold(RecipartError):
    pass


class CongruenceViolation(RecipartError):
    pass


class MissingBaseCertificate(RecipartError):
    pass


class UnknownName(RecipartError):
    pass


class NoCandidateFound(RecipartError):
    pass


class NotASubset(RecipartError):
    pass


class ConstructionFailure(RecipartError):
    """An unwound construction broke one of its own checks; the table is wrong."""


# --- Tables ---

@dataclass(frozen=True)
class ProofRow:
    index: int
    m: int
    beta: Fraction
    A: tuple[int, ...] = ()

    def __post_init__(self):
        if self.index < 1 or self.m < 1:
            raise InvalidArgument(f"row index and m must be positive, got i={self.index}, m={self.m}")
        object.__setattr__(self, "beta", parse_alpha(self.beta))
        parts = make_partition(self.A, allow_empty=True).parts
        if self.m == 1 and not parts:
            raise InvalidArgument(f"row {self.index}: A must be non-empty when m = 1")
        object.__setattr__(self, "A", parts)

    @property
    def total(self) -> int:
        return sum(self.A)

    @property
    def reciprocal(self) -> Fraction:
        return reciprocal_sum(self.A)


@dataclass(frozen=True)
class ProofTable:
    alpha: Fraction
    rows: tuple[ProofRow, ...]
    S: frozenset[Fraction]
    Q: ConstraintSpec = EMPTY_SPEC
    M_prime: Optional[int] = None
    X: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "alpha", parse_alpha(self.alpha))
        object.__setattr__(self, "rows", tuple(self.rows))
        object.__setattr__(self, "S", frozenset(parse_rational(s) for s in self.S))
        if self.alpha not in self.S:
            raise InvalidArgument(f"alpha {format_rational(self.alpha)} is not in S")
        if not self.rows:
            raise InvalidArgument(f"table for {format_rational(self.alpha)} has no rows")

    @property
    def modulus(self) -> int:
        return lcm(*(row.m for row in self.rows))

    def matching_row(self, n: int) -> Optional[ProofRow]:
        """The row with the smallest index whose sum is congruent to n mod m."""
        for row in self.rows:
            if (n - row.total) % row.m == 0:
                return row
        return None


class TableCollection(Mapping):
    """One ProofTable per alpha in S, sharing S, Q, M' and X."""

    def __init__(self, name: str, tables: Iterable[ProofTable], focus: Optional[Fraction] = None):
        self.name = name
        self.tables = {t.alpha: t for t in tables}
        if not self.tables:
            raise InvalidArgument(f"collection {name} is empty")
        first = next(iter(self.tables.values()))
        self.S = first.S
        self.Q = first.Q
        self.M_prime = first.M_prime
        self.X = first.X
        self.focus = focus

    def __getitem__(self, alpha) -> ProofTable:
        return self.tables[parse_rational(alpha)]

    def __iter__(self) -> Iterator[Fraction]:
        return iter(sorted(self.tables))

    def __len__(self) -> int:
        return len(self.tables)

    def with_X(self, X: int) -> "TableCollection":
        return TableCollection(self.name, (replace(t, X=X) for t in self.tables.values()), self.focus)

    def describe(self) -> str:
        S = ", ".join(format_rational(a) for a in sorted(self.S))
        text = f"{self.name}: S = {{{S}}}, Q = {self.Q.describe()}"
        if self.M_prime is not None:
            text += f", M' = {self.M_prime}"
        if self.X is not None:
            text += f", X = {self.X}"
        if self.focus is not None:
            text += f", level {format_rational(self.focus)}"
        return text


# --- Property checks ---

class PropertyStatus(str, Enum):
    VERIFIED = "verified"
    REFUTED = "refuted"
    INCONCLUSIVE = "inconclusive"


@dataclass
class PropertyResult:
    number: Optional[int]  # None for the congruence variant
    status: PropertyStatus
    detail: str = ""
    counterexample: Optional[str] = None

    @property
    def name(self) -> str:
        return "congruence" if self.number is None else f"P{self.number}"


@dataclass
class PropertyReport:
    alpha: Fraction
    results: list[PropertyResult] = field(default_factory=list)
    congruence: Optional[PropertyResult] = None

    def all_results(self) -> list[PropertyResult]:
        return self.results + ([self.congruence] if self.congruence is not None else [])

    @property
    def verified(self) -> bool:
        return all(r.status == PropertyStatus.VERIFIED for r in self.all_results())

    @property
    def refuted(self) -> bool:
        return any(r.status == PropertyStatus.REFUTED for r in self.all_results())

    def status(self, number: int) -> PropertyStatus:
        return self.results[number - 1].status


def _combine(number: int, findings: list[tuple[PropertyStatus, str, Optional[str]]], ok: str) -> PropertyResult:
    for wanted in (PropertyStatus.REFUTED, PropertyStatus.INCONCLUSIVE):
        for status, detail, example in findings:
            if status == wanted:
                return PropertyResult(number, status, detail, example)
    return PropertyResult(number, PropertyStatus.VERIFIED, ok)


def _check_membership(table: ProofTable, collection: Mapping) -> PropertyResult:
    for row in table.rows:
        if row.beta not in table.S:
            return PropertyResult(1, PropertyStatus.REFUTED, f"row {row.index}: beta not in S",
                                  format_rational(row.beta))
        if row.beta not in collection:
            raise MissingTable(f"no table for beta = {format_rational(row.beta)} (row {row.index} of "
                               f"alpha = {format_rational(table.alpha)})")
    return PropertyResult(1, PropertyStatus.VERIFIED, "every beta lies in S")


def _check_coverage(table: ProofTable) -> PropertyResult:
    L = table.modulus
    for r in range(L):
        if table.matching_row(r) is None:
            return PropertyResult(2, PropertyStatus.REFUTED, f"residue {r} mod {L} is not covered", str(r))
    return PropertyResult(2, PropertyStatus.VERIFIED, f"all {L} residues mod {L} covered")


def _check_identity(table: ProofTable) -> PropertyResult:
    for row in table.rows:
        got = row.reciprocal + row.beta / row.m
        if got != table.alpha:
            return PropertyResult(3, PropertyStatus.REFUTED, f"row {row.index} sums to {format_rational(got)}",
                                  f"row {row.index}")
    return PropertyResult(3, PropertyStatus.VERIFIED, "alpha = sum(A^-1) + beta/m on every row")


def _check_disjoint(table: ProofTable, Q: ConstraintSpec) -> PropertyResult:
    findings = []
    for row in table.rows:
        for a in row.A:
            if a % row.m:
                continue
            b = a // row.m
            if not admits(b, Q):
                continue
            # b would have to be a part of a beta-partition with property Q
            if Fraction(1, b) > row.beta:
                continue
            if Fraction(1, b) == row.beta and table.X is not None and b < table.X:
                continue
            findings.append((PropertyStatus.INCONCLUSIVE,
                             f"row {row.index}: {a} = {row.m}*{b} and {b} is admitted by Q", str(a)))
    return _combine(4, findings, "no A_i can meet m_i*B")


def _check_closure(table: ProofTable, Q: ConstraintSpec) -> PropertyResult:
    findings = []
    for row in table.rows:
        m = row.m
        for M in Q.m_free:
            bad = [a for a in row.A if a % M == 0]
            if bad:
                findings.append((PropertyStatus.REFUTED, f"row {row.index}: {bad[0]} is divisible by {M}",
                                 str(bad[0])))
            elif gcd(m, M) != 1:
                findings.append((PropertyStatus.INCONCLUSIVE,
                                 f"row {row.index}: gcd(m, {M}) = {gcd(m, M)}, m*B may hit a multiple of {M}", None))
        if Q.allowed_primes is not None:
            for x in (m,) + row.A:
                if not is_smooth(x, Q.allowed_primes):
                    findings.append((PropertyStatus.REFUTED,
                                     f"row {row.index}: {x} has a prime outside the allowed set", str(x)))
                    break
        for f in sorted(Q.forbidden):
            if f in row.A:
                findings.append((PropertyStatus.REFUTED, f"row {row.index}: A contains forbidden {f}", str(f)))
            elif f % m == 0 and admits(f // m, Q):
                findings.append((PropertyStatus.INCONCLUSIVE,
                                 f"row {row.index}: m*B may contain forbidden {f}", None))
        small = [a for a in row.A if a < Q.min_part]
        if small:
            findings.append((PropertyStatus.REFUTED, f"row {row.index}: {small[0]} is below min_part",
                             str(small[0])))
        if Q.max_part is not None:
            findings.append((PropertyStatus.INCONCLUSIVE,
                             f"row {row.index}: max_part is not closed under scaling", None))
    return _combine(5, findings, "A_i and m_i*B keep property Q")


def check_congruence_variant(table: ProofTable) -> PropertyResult:
    """Checks gcd(m_i, M') = gcd(a, M') = 1 and n' = beta_i (mod M') on every row."""
    Mp = table.M_prime
    if Mp not in (3, 8):
        raise InvalidArgument(f"congruence variant needs M' in {{3, 8}}, got {Mp}")
    for row in table.rows:
        for x in (row.m,) + row.A:
            if gcd(x, Mp) != 1:
                raise GcdViolation(f"row {row.index} of alpha = {format_rational(table.alpha)}: "
                                   f"gcd({x}, {Mp}) != 1", x)
    target = residue_of(table.alpha, Mp)
    for row in table.rows:
        descended = pow(row.m, -1, Mp) * (target - row.total) % Mp
        expected = residue_of(row.beta, Mp)
        identity = residue_of(row.m * (table.alpha - row.reciprocal), Mp)
        if descended != expected or identity != expected:
            return PropertyResult(None, PropertyStatus.REFUTED,
                                  f"row {row.index}: n' = {descended} but beta = {expected} (mod {Mp})",
                                  f"row {row.index}")
    return PropertyResult(None, PropertyStatus.VERIFIED, f"n' = beta_i (mod {Mp}) on every row")


def check_table(table: ProofTable, collection: Mapping, Q: Optional[ConstraintSpec] = None) -> PropertyReport:
    Q = table.Q if Q is None else Q
    report = PropertyReport(alpha=table.alpha, results=[
        _check_membership(table, collection),
        _check_coverage(table),
        _check_identity(table),
        _check_disjoint(table, Q),
        _check_closure(table, Q),
    ])
    if table.M_prime is not None:
        try:
            report.congruence = check_congruence_variant(table)
        except GcdViolation as e:
            report.congruence = PropertyResult(None, PropertyStatus.REFUTED, str(e), str(e.element))
    return report


def check_properties(collection: Mapping, Q: Optional[ConstraintSpec] = None) -> dict[Fraction, PropertyReport]:
    """Runs the five property checks (and the congruence variant when M' is set) on every table."""
    reports = {alpha: check_table(collection[alpha], collection, Q) for alpha in sorted(collection)}
    failing = [format_rational(a) for a, r in reports.items() if not r.verified]
    if failing:
        logger.info("Property check: %d of %d tables not verified (%s)", len(failing), len(reports),
                    ", ".join(failing))
    else:
        logger.info("Property check: all %d tables verified", len(reports))
    return reports


# --- Base window ---

def window_bound(tables: Mapping, X: int) -> int:
    """max over every row of every table of sum(A_i) + m_i * (X - 1)."""
    if X < 1:
        raise InvalidArgument(f"X must be >= 1, got {X}")
    return max(row.total + row.m * (X - 1) for table in tables.values() for row in table.rows)


def _residue_filter(alpha: Fraction, M_prime: Optional[int]) -> Optional[tuple[int, int]]:
    return None if M_prime is None else (M_prime, residue_of(alpha, M_prime))


class WitnessProvider(Protocol):
    source: str

    def witness(self, alpha: Fraction, n: int, spec: ConstraintSpec) -> Optional[PartitionSet]:
        ...


class SearchProvider:
    source = "search"

    def __init__(self, budget: SearchBudget = UNLIMITED):
        self.budget = budget

    def witness(self, alpha: Fraction, n: int, spec: ConstraintSpec) -> Optional[PartitionSet]:
        return find_one(n, alpha, spec, self.budget)


class ReportProvider:
    """Serves witnesses out of the reports check_base_window returned."""

    source = "report"

    def __init__(self, reports: Mapping[Fraction, RangeReport]):
        self.reports = reports

    def witness(self, alpha: Fraction, n: int, spec: ConstraintSpec) -> Optional[PartitionSet]:
        report = self.reports.get(alpha)
        if report is None or report.spec != spec:
            return None
        return report.witnesses.get(n)


def check_base_window(tables: TableCollection, X: Optional[int] = None, provider: Optional[WitnessProvider] = None,
                      jobs: int = 1, exclude: Iterable = (), budget: SearchBudget = UNLIMITED,
                      progress: bool = False) -> dict[Fraction, RangeReport]:
    """Looks for a witness with property Q for every alpha in S and every admissible n in [X, window_bound].

    Without a provider each n is searched live. A provider that has no
    witness for some n leaves it unknown: nothing was proven absent.
    """
    X = tables.X if X is None else X
    if X is None:
        raise InvalidArgument(f"collection {tables.name} has no X; pass one")
    hi = window_bound(tables, X)
    skipped = {parse_rational(a) for a in exclude}
    reports = {}
    for alpha in tables:
        if alpha in skipped:
            continue
        residue = _residue_filter(alpha, tables.M_prime)
        if provider is None:
            report = verify_range(alpha, tables.Q, X, hi, residue, budget=budget, jobs=jobs, progress=progress)
        else:
            report = RangeReport(alpha=alpha, spec=tables.Q, lo=X, hi=hi, residue_filter=residue)
            for n in report.admissible():
                A = provider.witness(alpha, n, tables.Q)
                if A is None:
                    report.unknown.append(n)
                else:
                    report.witnesses[n] = A
        reports[alpha] = report
        logger.info("Base window for alpha=%s on [%d, %d]: %s", format_rational(alpha), X, hi,
                    "verified" if report.holds else
                    f"{len(report.failures)} failures, {len(report.unknown)} unknown")
    return reports


def least_window_X(tables: TableCollection, lo: int, hi: int, jobs: int = 1, exclude: Iterable = (),
                   budget: SearchBudget = UNLIMITED) -> Optional[int]:
    """The least X in [lo, hi] whose whole base window has witnesses, or None."""
    if lo > hi:
        raise InvalidArgument(f"empty range [{lo}, {hi}]")
    top = window_bound(tables, hi)
    skipped = {parse_rational(a) for a in exclude}
    reports = [
        verify_range(alpha, tables.Q, lo, top, _residue_filter(alpha, tables.M_prime), budget=budget, jobs=jobs)
        for alpha in tables if alpha not in skipped
    ]
    bad = sorted(n for r in reports for n in r.failures + r.unknown)
    for X in range(lo, hi + 1):
        bound = window_bound(tables, X)
        if not any(X <= n <= bound for n in bad):
            logger.info("Least X for %s is %d (window up to %d)", tables.name, X, bound)
            return X
    return None


# --- Construction ---

@dataclass(frozen=True)
class ConstructionStep:
    alpha: Fraction
    n: int
    row_index: Optional[int]  # None at the base case
    source: Optional[str] = None


def construct_with_trace(alpha, n: int, tables: TableCollection, base_store: Optional[WitnessProvider] = None,
                         live_search: bool = True,
                         budget: SearchBudget = UNLIMITED) -> tuple[PartitionSet, list[ConstructionStep]]:
    """Builds an alpha-partition of n with property Q by descending through the tables
    to the base window and unwinding A_i + m_i*B back up."""
    alpha = parse_alpha(alpha)
    if alpha not in tables:
        raise MissingTable(f"no table for alpha = {format_rational(alpha)} in {tables.name}")
    X = tables.X
    if X is None:
        raise InvalidArgument(f"collection {tables.name} has no X")
    if n < X:
        raise BelowThreshold(f"n = {n} is below the threshold X = {X}")
    residue = _residue_filter(alpha, tables.M_prime)
    if not passes_residue(n, residue):
        raise CongruenceViolation(f"n = {n} is not congruent to {format_rational(alpha)} mod {tables.M_prime}")
    bound = window_bound(tables, X)

    steps: list[ConstructionStep] = []
    rows: list[ProofRow] = []
    current_alpha, current_n = alpha, n
    while current_n > bound:
        row = tables[current_alpha].matching_row(current_n)
        if row is None:
            raise ConstructionFailure(f"no row of {format_rational(current_alpha)} matches n = {current_n}")
        steps.append(ConstructionStep(current_alpha, current_n, row.index))
        rows.append(row)
        current_alpha, current_n = row.beta, (current_n - row.total) // row.m

    B = None
    source = None
    if base_store is not None:
        B = base_store.witness(current_alpha, current_n, tables.Q)
        source = base_store.source
    if B is None and live_search:
        provider = SearchProvider(budget)
        B = provider.witness(current_alpha, current_n, tables.Q)
        source = provider.source
    if B is None:
        raise MissingBaseCertificate(f"no witness for alpha = {format_rational(current_alpha)}, n = {current_n}")
    steps.append(ConstructionStep(current_alpha, current_n, None, source))

    for row, step in zip(reversed(rows), reversed(steps[:-1])):
        lifted = scale_set(row.m, B)
        clash = set(row.A) & set(lifted.parts)
        if clash:
            raise ConstructionFailure(f"row {row.index} of {format_rational(step.alpha)} meets m*B at {sorted(clash)}")
        B = make_partition(row.A + lifted.parts)
        if B.n != step.n or B.alpha != step.alpha:
            raise ConstructionFailure(f"row {row.index} of {format_rational(step.alpha)} built "
                                      f"n = {B.n}, alpha = {format_rational(B.alpha)}")
    if not satisfies(B, tables.Q):
        raise ConstructionFailure(f"result {B} breaks Q ({tables.Q.describe()})")
    logger.debug("Constructed %s-partition of %d in %d steps", format_rational(alpha), n, len(steps))
    return B, steps


def construct(alpha, n: int, tables: TableCollection, base_store: Optional[WitnessProvider] = None,
              live_search: bool = True, budget: SearchBudget = UNLIMITED) -> PartitionSet:
    return construct_with_trace(alpha, n, tables, base_store, live_search, budget)[0]


# --- Helpers ---

def strip_elements(A: PartitionSet, E: Iterable[int]) -> PartitionSet:
    """A without the parts in E; sum and reciprocal sum drop accordingly."""
    E = set(E)
    missing = E - set(A.parts)
    if missing:
        raise NotASubset(f"{sorted(missing)} not in {{{format_partition(A)}}}")
    return make_partition((a for a in A.parts if a not in E), allow_empty=True)


@dataclass(frozen=True)
class SuggestParams:
    m_values: tuple[int, ...] = (2,)
    pool_max: int = 100
    max_sum: int = 400
    budget: SearchBudget = SearchBudget(max_nodes=200_000)
    # base threshold of the collection the rows are for; None means not chosen yet, above 1
    X: Optional[int] = None


@dataclass
class Suggestion:
    rows: list[ProofRow]
    modulus: int
    covered: list[int]

    @property
    def complete(self) -> bool:
        return len(self.covered) == self.modulus


def _m_keeps_closure(m: int, Q: ConstraintSpec) -> bool:
    if any(gcd(m, M) != 1 for M in Q.m_free):
        return False
    if Q.allowed_primes is not None and not is_smooth(m, Q.allowed_primes):
        return False
    if any(f % m == 0 and admits(f // m, Q) for f in Q.forbidden):
        return False
    return Q.max_part is None


def _unit_row_fits(alpha: Fraction, S: list[Fraction], Q: ConstraintSpec, X: Optional[int]) -> bool:
    """m = 1, beta = alpha - 1, A = {1}: B cannot hold 1 when alpha < 2, nor at alpha = 2 once X > 1."""
    if alpha - 1 not in S or not admits(1, Q):
        return False
    return alpha < 2 or (alpha == 2 and (X is None or X > 1))


def suggest_rows(alpha, S: Iterable, Q: ConstraintSpec, params: SuggestParams = SuggestParams()) -> Suggestion:
    """Searches for rows satisfying properties 1, 3, 4 and 5, smallest sum(A_i) first per residue class."""
    alpha = parse_alpha(alpha)
    S = sorted({parse_rational(s) for s in S})
    if _unit_row_fits(alpha, S, Q, params.X):
        return Suggestion(rows=[ProofRow(1, 1, alpha - 1, (1,))], modulus=1, covered=[0])

    best: Optional[Suggestion] = None
    for m in params.m_values:
        if m < 2 or not _m_keeps_closure(m, Q):
            continue
        if params.pool_max < Q.min_part:
            continue
        # A may hold a multiple of m only when its quotient is ruled out by Q
        spec = Q.merged(
            forbidden=(m * b for b in range(1, params.pool_max // m + 1) if admits(b, Q)),
            max_part=params.pool_max,
        )
        chosen: dict[int, ProofRow] = {}
        for beta in S:
            if alpha - beta / m == 0 and 0 not in chosen:
                chosen[0] = ProofRow(len(chosen) + 1, m, beta, ())
        for s in range(1, params.max_sum + 1):
            if len(chosen) == m:
                break
            if s % m in chosen:
                continue
            for beta in S:
                gamma = alpha - beta / m
                if gamma <= 0:
                    continue
                try:
                    A = find_one(s, gamma, spec, params.budget)
                except BudgetExhausted:
                    continue
                if A is not None:
                    chosen[s % m] = ProofRow(len(chosen) + 1, m, beta, A.parts)
                    break
        if not chosen:
            continue
        rows = [replace(row, index=i) for i, row in enumerate(sorted(chosen.values(), key=lambda r: r.total), 1)]
        suggestion = Suggestion(rows=rows, modulus=m, covered=sorted(chosen))
        logger.info("m=%d: covered %d of %d residues for alpha=%s", m, len(chosen), m, format_rational(alpha))
        if suggestion.complete:
            return suggestion
        if best is None or len(suggestion.covered) * best.modulus > len(best.covered) * m:
            best = suggestion
    if best is None:
        raise NoCandidateFound(f"no rows for alpha = {format_rational(alpha)} within pool <= {params.pool_max}, "
                               f"sum <= {params.max_sum}")
    return best
