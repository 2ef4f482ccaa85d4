"""Complete pruned depth-first search for alpha-partitions.

The search never misses a solution: every prune below is a proof that the
branch holds no alpha-partition. A search that runs into its budget raises
BudgetExhausted instead of reporting absence.
"""
from __future__ import annotations

import logging
from bisect import bisect_left, bisect_right
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import accumulate, repeat
from math import lcm
from typing import Callable, Optional

import numpy as np
from tqdm import tqdm

from partition_core import (
    EMPTY_SPEC,
    ConstraintSpec,
    InvalidArgument,
    PartitionSet,
    RecipartError,
    distinct_partitions,
    make_partition,
    parse_alpha,
    reciprocal_sum,
    satisfies,
)

logger = logging.getLogger(__name__)


class BudgetExhausted(RecipartError):
    """A cap fired before the search space was exhausted; nothing was proven."""

    def __init__(self, message: str, nodes: int, partial: tuple = ()):
        super().__init__(message)
        self.nodes = nodes
        self.partial = list(partial)


@dataclass(frozen=True)
class SearchBudget:
    max_nodes: Optional[int] = None
    max_solutions: Optional[int] = None

    def __post_init__(self):
        for name in ("max_nodes", "max_solutions"):
            cap = getattr(self, name)
            if cap is not None and cap < 1:
                raise InvalidArgument(f"{name} must be >= 1, got {cap}")


UNLIMITED = SearchBudget()


@dataclass
class RangeReport:
    """Outcome of checking every n in [lo, hi] that passes the residue filter.

    failures are proven absences; unknown holds n whose search hit the budget.
    A report with unknown entries cannot certify anything.
    """

    alpha: Fraction
    spec: ConstraintSpec
    lo: int
    hi: int
    residue_filter: Optional[tuple[int, int]] = None
    failures: list[int] = field(default_factory=list)
    witnesses: dict[int, PartitionSet] = field(default_factory=dict)
    unknown: list[int] = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return not self.failures and not self.unknown

    @property
    def certified(self) -> bool:
        return not self.unknown

    def admissible(self) -> list[int]:
        return [n for n in range(self.lo, self.hi + 1) if passes_residue(n, self.residue_filter)]


def passes_residue(n: int, residue_filter: Optional[tuple[int, int]]) -> bool:
    """residue_filter is (modulus, residue)."""
    if residue_filter is None:
        return True
    modulus, residue = residue_filter
    return n % modulus == residue % modulus


def candidate_pool(n: int, spec: ConstraintSpec = EMPTY_SPEC) -> list[int]:
    """Every integer in [min_part, min(n, max_part)] that spec admits, ascending."""
    if n < 1:
        raise InvalidArgument(f"n must be >= 1, got {n}")
    hi = n if spec.max_part is None else min(n, spec.max_part)
    if hi < spec.min_part:
        return []
    mask = np.ones(hi + 1, dtype=bool)
    mask[: spec.min_part] = False
    for M in spec.m_free:
        mask[::M] = False
    for f in spec.forbidden:
        if f <= hi:
            mask[f] = False
    if spec.allowed_primes is not None:
        # divide every index by the allowed primes; smooth numbers end at 1
        rest = np.arange(hi + 1, dtype=np.int64)
        for p in sorted(spec.allowed_primes):
            while True:
                hits = (rest % p == 0) & (rest > 0)
                if not hits.any():
                    break
                rest[hits] //= p
        mask &= rest == 1
    return [int(x) for x in np.flatnonzero(mask)]


class PartitionSearch:
    """A prepared search for alpha-partitions of n under spec.

    Candidates are tried largest first. Reciprocal sums are kept as integers
    over the common denominator L = lcm(pool), so every comparison in the
    loop is exact integer arithmetic.
    """

    def __init__(self, n: int, alpha, spec: ConstraintSpec = EMPTY_SPEC, budget: SearchBudget = UNLIMITED):
        if n < 1:
            raise InvalidArgument(f"n must be >= 1, got {n}")
        self.n = n
        self.alpha = parse_alpha(alpha)
        self.spec = spec
        self.budget = budget
        self.nodes = 0
        self.found: list[PartitionSet] = []

        ascending = candidate_pool(n, spec)
        self.cands = ascending[::-1]
        self.scale = lcm(*ascending) if ascending else 1
        self.weights = [self.scale // c for c in self.cands]
        self._negated = [-c for c in self.cands]

        self.desc_sums = list(accumulate(self.cands, initial=0))
        self.desc_weights = list(accumulate(self.weights, initial=0))
        self.asc_sums = list(accumulate(ascending, initial=0))
        self.asc_weights = list(accumulate(reversed(self.weights), initial=0))

        # every remaining reciprocal mass from cands[j:] is a multiple of moduli[j]
        size = len(self.cands)
        self.moduli = [self.scale] * (size + 1)
        tail = 1
        for j in range(size - 1, -1, -1):
            tail = lcm(tail, self.cands[j])
            self.moduli[j] = self.scale // tail

        target = self.alpha * self.scale
        self.target = target.numerator if target.denominator == 1 else None

    def _feasible(self, j: int, r: int, q: int) -> bool:
        """Can some subset of cands[j:] sum to r with reciprocal mass q?"""
        size = len(self.cands)
        if self.desc_sums[size] - self.desc_sums[j] < r:
            return False
        if q % self.moduli[j]:
            return False
        # most reciprocal mass within sum r: the smallest candidates
        k = min(bisect_right(self.asc_sums, r) - 1, size - j)
        if self.asc_weights[k] < q:
            return False
        # least reciprocal mass that can still reach sum r: the largest candidates
        idx = bisect_left(self.desc_sums, self.desc_sums[j] + r)
        if self.desc_weights[idx] - self.desc_weights[j] > q:
            return False
        return True

    def _descend(self, start: int, r: int, q: int, chosen: list[int], emit: Callable[[list[int]], bool]) -> bool:
        self.nodes += 1
        if self.budget.max_nodes is not None and self.nodes > self.budget.max_nodes:
            raise BudgetExhausted(
                f"node budget {self.budget.max_nodes} exhausted searching n={self.n}", self.nodes
            )
        if r == 0:
            return emit(chosen) if q == 0 else False
        if q <= 0:
            return False
        size = len(self.cands)
        j = max(start, bisect_left(self._negated, -r))
        while j < size:
            # all four bounds only get worse as j grows
            if not self._feasible(j, r, q):
                return False
            w = self.weights[j]
            if w > q:
                return False
            chosen.append(self.cands[j])
            stop = self._descend(j + 1, r - self.cands[j], q - w, chosen, emit)
            chosen.pop()
            if stop:
                return True
            j += 1
        return False

    def run(self, limit: Optional[int] = None) -> list[PartitionSet]:
        """Collects solutions into self.found; stops early once limit of them are found."""
        self.found = []
        if self.target is None:
            return self.found

        def emit(chosen: list[int]) -> bool:
            self.found.append(make_partition(chosen))
            return limit is not None and len(self.found) >= limit

        self._descend(0, self.n, self.target, [], emit)
        logger.debug("Searched n=%d alpha=%s: %d nodes, %d found", self.n, self.alpha, self.nodes, len(self.found))
        return self.found


def find_one(n: int, alpha, spec: ConstraintSpec = EMPTY_SPEC,
             budget: SearchBudget = UNLIMITED) -> Optional[PartitionSet]:
    """Some alpha-partition of n satisfying spec, or None when provably none exists."""
    found = PartitionSearch(n, alpha, spec, budget).run(limit=1)
    return found[0] if found else None


def enumerate_partitions(n: int, alpha, spec: ConstraintSpec = EMPTY_SPEC,
                         budget: SearchBudget = UNLIMITED) -> list[PartitionSet]:
    """All alpha-partitions of n satisfying spec, ordered by ascending part list."""
    search = PartitionSearch(n, alpha, spec, budget)
    cap = budget.max_solutions
    try:
        found = search.run(limit=None if cap is None else cap + 1)
    except BudgetExhausted as e:
        raise BudgetExhausted(str(e), e.nodes, sorted(search.found, key=lambda A: A.parts)) from e
    found.sort(key=lambda A: A.parts)
    if cap is not None and len(found) > cap:
        raise BudgetExhausted(
            f"more than {cap} solutions for n={n}", search.nodes, found[:cap]
        )
    return found


def count(n: int, alpha, spec: ConstraintSpec = EMPTY_SPEC, budget: SearchBudget = UNLIMITED) -> int:
    return len(enumerate_partitions(n, alpha, spec, budget))


def naive_enumerate(n: int, alpha, spec: ConstraintSpec = EMPTY_SPEC) -> list[PartitionSet]:
    """Reference enumeration over every distinct-part partition of n; small n only."""
    alpha = parse_alpha(alpha)
    found = []
    for parts in distinct_partitions(n):
        if reciprocal_sum(parts) == alpha and satisfies(parts, spec):
            found.append(make_partition(parts))
    found.sort(key=lambda A: A.parts)
    return found


def _verify_one(n: int, alpha: Fraction, spec: ConstraintSpec, budget: SearchBudget):
    try:
        A = find_one(n, alpha, spec, budget)
    except BudgetExhausted:
        return n, "unknown", None
    if A is None:
        return n, "absent", None
    return n, "found", A


def verify_range(alpha, spec: ConstraintSpec, lo: int, hi: int,
                 residue_filter: Optional[tuple[int, int]] = None,
                 budget: SearchBudget = UNLIMITED, jobs: int = 1,
                 progress: bool = False) -> RangeReport:
    """Looks for a witness at every filtered n in [lo, hi]."""
    alpha = parse_alpha(alpha)
    if lo > hi:
        raise InvalidArgument(f"empty range [{lo}, {hi}]")
    if lo < 1:
        raise InvalidArgument(f"range must start at 1 or above, got {lo}")
    report = RangeReport(alpha=alpha, spec=spec, lo=lo, hi=hi, residue_filter=residue_filter)
    ns = report.admissible()
    logger.info("Verifying %d values of n in [%d, %d] for alpha=%s (%s)", len(ns), lo, hi, alpha, spec.describe())

    args = (ns, repeat(alpha), repeat(spec), repeat(budget))
    if jobs > 1 and len(ns) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            chunk = max(1, len(ns) // (jobs * 8))
            results = list(tqdm(executor.map(_verify_one, *args, chunksize=chunk),
                                total=len(ns), disable=not progress, desc="verify-range"))
    else:
        results = [_verify_one(*task) for task in tqdm(zip(*args), total=len(ns), disable=not progress,
                                                       desc="verify-range")]

    for n, status, A in sorted(results, key=lambda item: item[0]):
        if status == "found":
            report.witnesses[n] = A
        elif status == "absent":
            report.failures.append(n)
        else:
            report.unknown.append(n)
    if report.failures:
        logger.info("No witness for %d values, first %d", len(report.failures), report.failures[0])
    return report


def least_threshold(report: RangeReport) -> Optional[int]:
    """The least admissible t such that every admissible n in [t, hi] has a witness."""
    admissible = report.admissible()
    bad = set(report.failures) | set(report.unknown)
    threshold = None
    for n in reversed(admissible):
        if n in bad:
            break
        threshold = n
    return threshold
