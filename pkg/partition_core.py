"""Exact values for reciprocal-sum partitions.

A set of distinct positive integers A = {a_1, ..., a_r} is an alpha-partition
of n when its parts sum to n and their reciprocals sum to alpha. This module
holds the value types every other module passes around (exact rationals,
partition sets, constraint specs) plus the mod-8 / mod-3 congruence
obstruction for partitions that avoid even parts or multiples of three.
"""
from __future__ import annotations

import hashlib
import json
import logging
import operator
from collections import Counter
from dataclasses import dataclass, field, replace
from fractions import Fraction
from math import gcd
from typing import Iterable, Iterator, Optional, Union

from sympy import isprime

logger = logging.getLogger(__name__)

# Every alpha, beta and reciprocal sum is a reduced fraction; Fraction keeps
# gcd(numerator, denominator) == 1 and hashes by value.
Rational = Fraction
RationalLike = Union[Fraction, int, str]

# M -> M' for the moduli where a congruence obstruction exists
OBSTRUCTION_MODULI = {2: 8, 3: 3}


class RecipartError(Exception):
    """Base class for every error raised by this toolkit."""


class InvalidArgument(RecipartError, ValueError):
    pass


class InvalidConstraint(InvalidArgument):
    pass


class DuplicatePart(RecipartError, ValueError):
    def __init__(self, duplicates):
        self.duplicates = sorted(duplicates)
        super().__init__(f"parts must be distinct, repeated: {self.duplicates}")


class NonPositive(RecipartError, ValueError):
    def __init__(self, values):
        self.values = sorted(values)
        super().__init__(f"parts must be positive integers, got: {self.values}")


class NonInvertibleDenominator(RecipartError, ValueError):
    pass


# --- Rationals ---

def parse_rational(value: RationalLike) -> Fraction:
    """Reads "p/q", "p" or an int into a reduced Fraction."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise InvalidArgument(f"not a rational: {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    try:
        return Fraction(str(value).strip())
    except (ValueError, ZeroDivisionError) as e:
        raise InvalidArgument(f"not a rational: {value!r}") from e


def parse_alpha(value: RationalLike) -> Fraction:
    alpha = parse_rational(value)
    if alpha <= 0:
        raise InvalidArgument(f"alpha must be positive, got {format_rational(alpha)}")
    return alpha


def format_rational(value: Fraction) -> str:
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def reciprocal_sum(parts: Iterable[int]) -> Fraction:
    return sum((Fraction(1, a) for a in parts), Fraction(0))


# --- Partition sets ---

@dataclass(frozen=True)
class PartitionSet:
    """An immutable set of distinct positive parts with its sum and reciprocal sum."""

    parts: tuple[int, ...]
    n: int
    alpha: Fraction

    def __iter__(self) -> Iterator[int]:
        return iter(self.parts)

    def __len__(self) -> int:
        return len(self.parts)

    def __contains__(self, part: object) -> bool:
        return part in self.parts

    def __str__(self) -> str:
        return "{" + format_partition(self) + "}"

    def recheck(self) -> bool:
        """Recomputes the cached sum and reciprocal sum from the parts."""
        return (
            list(self.parts) == sorted(set(self.parts))
            and all(a >= 1 for a in self.parts)
            and self.n == sum(self.parts)
            and self.alpha == reciprocal_sum(self.parts)
        )


def make_partition(parts: Iterable[int], allow_empty: bool = False) -> PartitionSet:
    values = [operator.index(a) for a in parts]
    if not values and not allow_empty:
        raise NonPositive([])
    negatives = [a for a in values if a < 1]
    if negatives:
        raise NonPositive(negatives)
    repeated = [a for a, k in Counter(values).items() if k > 1]
    if repeated:
        raise DuplicatePart(repeated)
    ordered = tuple(sorted(values))
    return PartitionSet(parts=ordered, n=sum(ordered), alpha=reciprocal_sum(ordered))


def scale_set(m: int, A: PartitionSet) -> PartitionSet:
    """Returns mA; the sum scales by m and the reciprocal sum by 1/m."""
    if m < 1:
        raise NonPositive([m])
    if m == 1:
        return A
    return PartitionSet(parts=tuple(m * a for a in A.parts), n=m * A.n, alpha=A.alpha / m)


def format_partition(A: Union[PartitionSet, Iterable[int]]) -> str:
    return ",".join(str(a) for a in A)


def parse_partition(text: str) -> PartitionSet:
    body = text.strip().strip("{}").strip()
    if not body:
        raise NonPositive([])
    try:
        return make_partition(int(piece) for piece in body.split(","))
    except ValueError as e:
        if isinstance(e, RecipartError):
            raise
        raise InvalidArgument(f"not a partition: {text!r}") from e


def distinct_partitions(n: int, largest: Optional[int] = None) -> Iterator[tuple[int, ...]]:
    """Yields every partition of n into distinct parts, parts in decreasing order."""
    if n == 0:
        yield ()
        return
    top = min(n, n if largest is None else largest)
    c = top
    # 1 + 2 + ... + c must still reach n
    while c * (c + 1) // 2 >= n:
        for rest in distinct_partitions(n - c, c - 1):
            yield (c,) + rest
        c -= 1


# --- Constraints ---

@dataclass(frozen=True)
class ConstraintSpec:
    """The property Q a partition must have.

    m_free: no part divisible by any listed M.
    allowed_primes: every prime factor of every part lies in the set (None = any).
    forbidden: parts that may not appear.
    """

    m_free: tuple[int, ...] = ()
    allowed_primes: Optional[frozenset[int]] = None
    forbidden: frozenset[int] = field(default_factory=frozenset)
    min_part: int = 1
    max_part: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "m_free", tuple(sorted(set(int(M) for M in self.m_free))))
        object.__setattr__(self, "forbidden", frozenset(int(f) for f in self.forbidden))
        if self.allowed_primes is not None:
            object.__setattr__(self, "allowed_primes", frozenset(int(p) for p in self.allowed_primes))
        if any(M < 2 for M in self.m_free):
            raise InvalidConstraint(f"m_free moduli must be >= 2, got {list(self.m_free)}")
        if self.allowed_primes is not None and not all(isprime(p) for p in self.allowed_primes):
            raise InvalidConstraint(f"allowed_primes must all be prime, got {sorted(self.allowed_primes)}")
        if self.min_part < 1:
            raise InvalidConstraint(f"min_part must be >= 1, got {self.min_part}")
        if self.max_part is not None and self.max_part < self.min_part:
            raise InvalidConstraint(f"max_part {self.max_part} is below min_part {self.min_part}")

    @property
    def is_empty(self) -> bool:
        return self == EMPTY_SPEC

    def merged(self, m_free: Iterable[int] = (), forbidden: Iterable[int] = (),
               max_part: Optional[int] = None) -> "ConstraintSpec":
        """A stricter spec: extra moduli and forbidden parts, and a tighter max_part."""
        top = self.max_part
        if max_part is not None:
            top = max_part if top is None else min(top, max_part)
        return replace(
            self,
            m_free=self.m_free + tuple(m_free),
            forbidden=self.forbidden | frozenset(forbidden),
            max_part=top,
        )

    def describe(self) -> str:
        pieces = []
        if self.m_free:
            pieces.append("free of multiples of " + ",".join(map(str, self.m_free)))
        if self.allowed_primes is not None:
            pieces.append("primes {" + ",".join(map(str, sorted(self.allowed_primes))) + "}")
        if self.forbidden:
            pieces.append("avoiding {" + ",".join(map(str, sorted(self.forbidden))) + "}")
        if self.min_part > 1:
            pieces.append(f"parts >= {self.min_part}")
        if self.max_part is not None:
            pieces.append(f"parts <= {self.max_part}")
        return "; ".join(pieces) or "unconstrained"

    def to_payload(self) -> dict:
        return {
            "m_free": list(self.m_free),
            "allowed_primes": None if self.allowed_primes is None else sorted(self.allowed_primes),
            "forbidden": sorted(self.forbidden),
            "min_part": self.min_part,
            "max_part": self.max_part,
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "ConstraintSpec":
        primes = payload.get("allowed_primes")
        return cls(
            m_free=tuple(payload.get("m_free") or ()),
            allowed_primes=None if primes is None else frozenset(primes),
            forbidden=frozenset(payload.get("forbidden") or ()),
            min_part=payload.get("min_part", 1),
            max_part=payload.get("max_part"),
        )


EMPTY_SPEC = ConstraintSpec()


def is_smooth(x: int, primes: Iterable[int]) -> bool:
    """True iff every prime factor of x lies in primes (1 is smooth)."""
    for p in primes:
        while x % p == 0:
            x //= p
    return x == 1


def admits(x: int, spec: ConstraintSpec) -> bool:
    """Whether the single integer x may appear as a part under spec."""
    if x < spec.min_part or (spec.max_part is not None and x > spec.max_part):
        return False
    if x in spec.forbidden:
        return False
    if any(x % M == 0 for M in spec.m_free):
        return False
    if spec.allowed_primes is not None and not is_smooth(x, spec.allowed_primes):
        return False
    return True


def satisfies(A: Union[PartitionSet, Iterable[int]], spec: ConstraintSpec) -> bool:
    return all(admits(a, spec) for a in A)


def constraint_digest(spec: ConstraintSpec) -> str:
    """A stable sha256 of the canonical JSON form of spec."""
    text = json.dumps(spec.to_payload(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


# --- Congruence obstruction ---

def congruence_obstruction(M: int) -> Optional[int]:
    """M' such that an M-free alpha-partition of n forces n = alpha (mod M').

    Every integer coprime to 8 (resp. 3) is its own inverse modulo 8 (resp. 3),
    so a set of odd parts (resp. parts prime to 3) has sum congruent to its
    reciprocal sum. Only M = 2 and M = 3 carry an obstruction.
    """
    if M < 2:
        raise InvalidArgument(f"M must be >= 2, got {M}")
    return OBSTRUCTION_MODULI.get(M)


def residue_of(alpha: RationalLike, modulus: int) -> int:
    """alpha mod modulus, as numerator times the inverse of the denominator."""
    value = parse_rational(alpha)
    if modulus < 1:
        raise InvalidArgument(f"modulus must be positive, got {modulus}")
    if gcd(value.denominator, modulus) != 1:
        raise NonInvertibleDenominator(
            f"denominator {value.denominator} of {format_rational(value)} is not invertible mod {modulus}"
        )
    return value.numerator * pow(value.denominator, -1, modulus) % modulus
