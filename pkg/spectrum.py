"""Reciprocal-sum spectra B(n), their windows B(n, N), and N_M lookups.

B(n) is the set of every alpha for which some alpha-partition of n exists.
B(n, N) is the intersection of B(i) over n <= i <= N; it only grows as n
rises and is an upper bound for the set of alpha whose threshold is <= n.
"""
from __future__ import annotations

import logging
from concurrent.futures import Executor, ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from math import lcm
from typing import Iterable, Iterator, Optional

import pandas as pd
from sympy import primefactors
from tqdm import tqdm

from partition_core import (
    ConstraintSpec,
    InvalidArgument,
    congruence_obstruction,
    format_rational,
)
from search_engine import RangeReport, SearchBudget, UNLIMITED, find_one, verify_range

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RationalSet:
    """A set of exact rationals tagged with the window (n, N) it came from."""

    members: frozenset[Fraction]
    window: tuple[int, int]

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, value: object) -> bool:
        return value in self.members

    def __iter__(self) -> Iterator[Fraction]:
        return iter(self.sorted())

    def sorted(self) -> list[Fraction]:
        return sorted(self.members)

    @property
    def label(self) -> str:
        n, N = self.window
        if n == N:
            return f"B({n})"
        return f"B({n},{N}), upper bound for A({n})"

    def render(self) -> str:
        return "{" + ", ".join(format_rational(a) for a in self.sorted()) + "}"


# --- Distinct-part partition walks over integer reciprocal numerators ---

class _Complete(Exception):
    pass


def _walk(remaining: int, largest: int, acc: int, weights: list[int], sink) -> None:
    # parts strictly decrease; 1 + 2 + ... + c must still reach remaining
    c = min(largest, remaining)
    while c * (c + 1) // 2 >= remaining:
        if c == remaining:
            sink(acc + weights[c])
        else:
            _walk(remaining - c, c - 1, acc + weights[c], weights, sink)
        c -= 1


def _numerators_with_top(n: int, top: int, scale: int, keep: Optional[frozenset]) -> set[int]:
    """Numerators (over scale) of the partitions of n whose largest part is top."""
    weights = [0] + [scale // c for c in range(1, n + 1)]
    found: set[int] = set()
    if keep is None:
        sink = found.add
    else:
        def sink(x: int) -> None:
            if x in keep:
                found.add(x)
                if len(found) == len(keep):
                    raise _Complete
    try:
        if top == n:
            sink(weights[n])
        else:
            _walk(n - top, top - 1, weights[top], weights, sink)
    except _Complete:
        pass
    return found


def _smallest_top(n: int) -> int:
    top = 1
    while top * (top + 1) // 2 < n:
        top += 1
    return top


def reciprocal_numerators(n: int, scale: int, keep: Optional[Iterable[int]] = None,
                          executor: Optional[Executor] = None) -> set[int]:
    """{alpha * scale : alpha in B(n)}, optionally restricted to keep.

    scale must be a multiple of lcm(1..n). With an executor the walk is split
    by largest part, one shared-nothing task per value.
    """
    if n < 1:
        raise InvalidArgument(f"n must be >= 1, got {n}")
    keep = None if keep is None else frozenset(keep)
    if keep is not None and not keep:
        return set()
    tops = range(n, _smallest_top(n) - 1, -1)
    found: set[int] = set()
    if executor is None:
        weights = [0] + [scale // c for c in range(1, n + 1)]
        if keep is None:
            sink = found.add
        else:
            def sink(x: int) -> None:
                if x in keep:
                    found.add(x)
                    if len(found) == len(keep):
                        raise _Complete
        try:
            for top in tops:
                if top == n:
                    sink(weights[n])
                else:
                    _walk(n - top, top - 1, weights[top], weights, sink)
        except _Complete:
            pass
        return found
    futures = [executor.submit(_numerators_with_top, n, top, scale, keep) for top in tops]
    for future in futures:
        found |= future.result()
    return found


def _to_set(numerators: Iterable[int], scale: int, window: tuple[int, int]) -> RationalSet:
    return RationalSet(frozenset(Fraction(x, scale) for x in numerators), window)


def _executor(jobs: int) -> Optional[Executor]:
    return ProcessPoolExecutor(max_workers=jobs) if jobs > 1 else None


def build_B(n: int, jobs: int = 1) -> RationalSet:
    """Every reciprocal sum over the partitions of n into distinct parts."""
    scale = lcm(*range(1, n + 1))
    executor = _executor(jobs)
    try:
        numerators = reciprocal_numerators(n, scale, executor=executor)
    finally:
        if executor is not None:
            executor.shutdown()
    logger.info("Built B(%d): %d rationals", n, len(numerators))
    return _to_set(numerators, scale, (n, n))


def build_B_window(n: int, N: int, jobs: int = 1, progress: bool = False) -> RationalSet:
    """The intersection of B(i) for n <= i <= N, filtering each B(i) against the running set."""
    if n < 1 or n > N:
        raise InvalidArgument(f"need 1 <= n <= N, got n={n}, N={N}")
    scale = lcm(*range(1, N + 1))
    executor = _executor(jobs)
    try:
        running = reciprocal_numerators(n, scale, executor=executor)
        for i in tqdm(range(n + 1, N + 1), disable=not progress, desc=f"B({n},{N})"):
            if not running:
                break
            running = reciprocal_numerators(i, scale, keep=running, executor=executor)
            logger.debug("B(%d,%d): %d rationals", n, i, len(running))
    finally:
        if executor is not None:
            executor.shutdown()
    logger.info("Built B(%d,%d): %d rationals", n, N, len(running))
    return _to_set(running, scale, (n, N))


class WindowChain:
    """B(k, N) for every k from N down to lo, from one descending pass.

    B(k, N) = B(k) filtered against B(k+1, N). Only the sizes are kept, plus
    the full sets for the k listed in keep_sets.
    """

    def __init__(self, lo: int, N: int, keep_sets: Iterable[int] = (), jobs: int = 1, progress: bool = False):
        if lo < 1 or lo > N:
            raise InvalidArgument(f"need 1 <= lo <= N, got lo={lo}, N={N}")
        self.lo = lo
        self.N = N
        self.scale = lcm(*range(1, N + 1))
        self.sizes: dict[int, int] = {}
        self.sets: dict[int, RationalSet] = {}
        wanted = set(keep_sets)

        executor = _executor(jobs)
        try:
            running: Optional[set[int]] = None
            for k in tqdm(range(N, lo - 1, -1), disable=not progress, desc=f"windows to {N}"):
                if running is not None and not running:
                    self.sizes[k] = 0
                else:
                    running = reciprocal_numerators(k, self.scale, keep=running, executor=executor)
                    self.sizes[k] = len(running)
                if k in wanted:
                    self.sets[k] = _to_set(running, self.scale, (k, N))
                logger.debug("|B(%d,%d)| = %d", k, N, self.sizes[k])
        finally:
            if executor is not None:
                executor.shutdown()

    def size(self, k: int) -> int:
        return self.sizes[k]

    def window(self, k: int) -> RationalSet:
        if k not in self.sets:
            raise InvalidArgument(f"B({k},{self.N}) was not retained; pass it in keep_sets")
        return self.sets[k]

    def growth(self, lo: int, hi: int) -> list[tuple[int, int]]:
        """(n, |B(n,N) minus B(n-1,N)|) for lo <= n <= hi."""
        if lo - 1 < self.lo and lo > 1:
            raise InvalidArgument(f"growth from {lo} needs windows down to {lo - 1}")
        rows = []
        for n in range(lo, hi + 1):
            below = self.sizes.get(n - 1, 0)
            rows.append((n, self.sizes[n] - below))
        return rows


def growth_table(lo: int, hi: int, N: int, jobs: int = 1, progress: bool = False) -> list[tuple[int, int]]:
    """Counts of alpha whose window membership starts exactly at n, for lo <= n <= hi.

    Windows are nested, so each count is |B(n,N)| - |B(n-1,N)|.
    """
    if not 1 <= lo <= hi <= N:
        raise InvalidArgument(f"need 1 <= lo <= hi <= N, got {lo}, {hi}, {N}")
    chain = WindowChain(max(1, lo - 1), N, jobs=jobs, progress=progress)
    return chain.growth(lo, hi)


def growth_frame(rows: list[tuple[int, int]]) -> pd.DataFrame:
    return pd.DataFrame(rows, columns=["n", "count"])


def write_growth_csv(rows: list[tuple[int, int]], path: str) -> str:
    growth_frame(rows).to_csv(path, index=False)
    return path


# Reference data: the alpha with threshold <= 70, and the growth counts for 65..100.
# 19/15 belongs here; 19/12 only enters B(n, 136) at n = 71.
NALPHA_70 = tuple(
    Fraction(x) for x in ("7/12", "4/5", "11/12", "13/12", "19/15", "97/60", "9/5", "23/12", "25/12")
)
PUBLISHED_GROWTH = {
    65: 0, 66: 2, 67: 2, 68: 2, 69: 1, 70: 2, 71: 4, 72: 5, 73: 5, 74: 7, 75: 7, 76: 5,
    77: 12, 78: 18, 79: 22, 80: 32, 81: 38, 82: 41, 83: 48, 84: 57, 85: 76, 86: 82, 87: 74, 88: 97,
    89: 117, 90: 155, 91: 170, 92: 194, 93: 228, 94: 277, 95: 306, 96: 332, 97: 430, 98: 473, 99: 483,
    100: 510,
}


# --- N_M: the least n0 with an M-free 1-partition of every n >= n0 ---

NM_TABLE = {
    2: 737, 3: 154, 4: 155, 5: 126, 6: 183, 7: 97, 8: 101, 9: 91, 10: 108, 11: 92, 12: 98,
    14: 81, 15: 108, 16: 78, 18: 91, 20: 106, 21: 81, 22: 92, 24: 80, 28: 81, 30: 108, 33: 92,
}
DEFAULT_NM = 78
UPPER_BOUND_ONLY = frozenset({2})

# largest prime factor -> divisors one of which every unlisted M must have
COVERING_DIVISORS = {
    7: (35, 42, 49, 56, 63),
    5: (25, 40, 45, 60),
    3: (16, 27, 36),
    2: (16, 27, 36),
}


class NmFamily(str, Enum):
    TABLE_ENTRY = "table-entry"
    PRIME_GE_11 = "prime-ge-11"
    PRIME_7 = "prime-7-family"
    PRIME_5 = "prime-5-family"
    POW23 = "pow23-family"


@dataclass(frozen=True)
class NmCase:
    M: int
    classification: NmFamily
    divisor_witness: Optional[int]
    value: int
    exact: bool
    congruence_caveat: Optional[int]

    def describe(self) -> str:
        bound = "=" if self.exact else "<="
        text = f"N_{self.M} {bound} {self.value} ({self.classification.value}"
        if self.divisor_witness is not None:
            text += f", divisible by {self.divisor_witness}"
        text += ")"
        if self.congruence_caveat is not None:
            text += f"; only n = 1 mod {self.congruence_caveat}"
        return text


def covering_divisor(M: int) -> Optional[int]:
    largest = max(primefactors(M))
    for d in COVERING_DIVISORS.get(largest, ()):
        if M % d == 0:
            return d
    return None


def nm_classify(M: int) -> NmCase:
    if M < 2:
        raise InvalidArgument(f"M must be >= 2, got {M}")
    largest = max(primefactors(M))
    witness = covering_divisor(M)
    if M in NM_TABLE:
        family = NmFamily.TABLE_ENTRY
        value = NM_TABLE[M]
    else:
        value = DEFAULT_NM
        if largest >= 11:
            family = NmFamily.PRIME_GE_11
        elif largest == 7:
            family = NmFamily.PRIME_7
        elif largest == 5:
            family = NmFamily.PRIME_5
        else:
            family = NmFamily.POW23
    return NmCase(
        M=M,
        classification=family,
        divisor_witness=witness,
        value=value,
        exact=M not in UPPER_BOUND_ONLY,
        congruence_caveat=congruence_obstruction(M),
    )


def nm_value(M: int) -> tuple[int, bool, Optional[int]]:
    """(value, exact, M') for N_M; exact is False where only an upper bound is known."""
    case = nm_classify(M)
    return case.value, case.exact, case.congruence_caveat


@dataclass
class NmVerification:
    case: NmCase
    below: Optional[int]
    below_refuted: Optional[bool]
    report: Optional[RangeReport]

    @property
    def holds(self) -> bool:
        if self.below_refuted is False:
            return False
        return self.report is None or self.report.holds


def nm_verify(M: int, horizon: int = 136, jobs: int = 1, budget: SearchBudget = UNLIMITED) -> NmVerification:
    """Desk check of N_M: no M-free 1-partition at the last admissible n below the
    threshold, and one at every admissible n in [threshold, horizon]."""
    case = nm_classify(M)
    spec = ConstraintSpec(m_free=(M,))
    residue = None if case.congruence_caveat is None else (case.congruence_caveat, 1)

    below = None
    below_refuted = None
    if case.exact:
        below = case.value - 1
        while residue is not None and below % residue[0] != residue[1]:
            below -= 1
        below_refuted = find_one(below, 1, spec, budget) is None
        logger.info("N_%d: n=%d %s", M, below, "has no witness" if below_refuted else "has a witness")

    report = None
    if horizon >= case.value:
        report = verify_range(1, spec, case.value, horizon, residue, budget=budget, jobs=jobs)
    return NmVerification(case=case, below=below, below_refuted=below_refuted, report=report)
