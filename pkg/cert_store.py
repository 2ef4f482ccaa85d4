"""Certificates: canonical JSON files that can be re-checked without the code that wrote them.

Three kinds are written: a single partition witness, a proof-table collection,
and a range manifest whose witnesses live in shard files beside it. Every
loaded certificate is re-derived from its raw parts; cached fields are claims,
never inputs.
"""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Annotated, Any, Iterable, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, ValidationError, field_validator

import file_handler
from meta_prover import (
    MissingTable,
    ProofRow,
    ProofTable,
    TableCollection,
    check_properties,
)
from partition_core import (
    ConstraintSpec,
    PartitionSet,
    RecipartError,
    constraint_digest,
    format_rational,
    make_partition,
    parse_rational,
    satisfies,
)
from search_engine import RangeReport, passes_residue

logger = logging.getLogger(__name__)

TOOL_VERSION = "1.0.0"
SHARD_SIZE = 10_000
# integers beyond this are written as decimal strings
SAFE_INTEGER = 2 ** 53


class ValidationFailure(RecipartError):
    pass


class CorruptFile(RecipartError):
    pass


class VerificationFailed(RecipartError):
    def __init__(self, claim: str):
        super().__init__(claim)
        self.claim = claim


class SpecMismatch(RecipartError):
    pass


# --- Schema ---

def _canonical_rational(value: str) -> str:
    text = str(value)
    canonical = format_rational(parse_rational(text))
    if canonical != text:
        raise ValueError(f"rational {text!r} is not in canonical form {canonical!r}")
    return canonical


class SpecModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    m_free: list[int] = []
    allowed_primes: Optional[list[int]] = None
    forbidden: list[int] = []
    min_part: int = 1
    max_part: Optional[int] = None

    @classmethod
    def from_spec(cls, spec: ConstraintSpec) -> "SpecModel":
        return cls(**spec.to_payload())

    def to_spec(self) -> ConstraintSpec:
        return ConstraintSpec.from_payload(self.model_dump())


class PartitionCertificate(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["partition"] = "partition"
    n: int
    alpha: str
    parts: list[int]
    spec: SpecModel = SpecModel()
    constraint_digest: str
    tool_version: str = TOOL_VERSION

    @field_validator("alpha")
    @classmethod
    def canonical_alpha(cls, value: str) -> str:
        return _canonical_rational(value)

    @field_validator("parts")
    @classmethod
    def distinct_positive_parts(cls, parts: list[int]) -> list[int]:
        make_partition(parts)
        return parts


class RowModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    i: int
    m: int
    beta: str
    A: list[int]

    @field_validator("beta")
    @classmethod
    def canonical_beta(cls, value: str) -> str:
        return _canonical_rational(value)


class TableModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    alpha: str
    rows: list[RowModel]

    @field_validator("alpha")
    @classmethod
    def canonical_alpha(cls, value: str) -> str:
        return _canonical_rational(value)


class ProofTableCertificate(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["proof-table"] = "proof-table"
    name: str
    S: list[str]
    Q: SpecModel
    M_prime: Optional[int] = None
    X: Optional[int] = None
    tables: list[TableModel]
    constraint_digest: str
    tool_version: str = TOOL_VERSION


class ShardEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n: int
    parts: list[int]


class RangeShard(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["range-shard"] = "range-shard"
    alpha: str
    constraint_digest: str
    entries: list[ShardEntry]
    tool_version: str = TOOL_VERSION


class ShardRef(BaseModel):
    model_config = ConfigDict(extra="forbid")

    file: str
    sha256: str
    lo: int
    hi: int
    count: int


class Manifest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["range"] = "range"
    alpha: str
    spec: SpecModel
    constraint_digest: str
    residue: Optional[tuple[int, int]] = None  # (modulus, residue)
    ranges: list[tuple[int, int]]
    shards: list[ShardRef]
    tool_version: str = TOOL_VERSION

    @field_validator("alpha")
    @classmethod
    def canonical_alpha(cls, value: str) -> str:
        return _canonical_rational(value)

    @field_validator("ranges")
    @classmethod
    def sorted_disjoint(cls, ranges: list[tuple[int, int]]) -> list[tuple[int, int]]:
        for lo, hi in ranges:
            if lo > hi:
                raise ValueError(f"range [{lo}, {hi}] is empty")
        for (_, hi), (lo, _) in zip(ranges, ranges[1:]):
            if lo <= hi:
                raise ValueError("ranges must be sorted and disjoint")
        return ranges


Certificate = Annotated[
    Union[PartitionCertificate, ProofTableCertificate, RangeShard, Manifest],
    Field(discriminator="kind"),
]
CERTIFICATE = TypeAdapter(Certificate)


# --- Canonical serialization ---

def _portable(value: Any) -> Any:
    if isinstance(value, bool) or value is None:
        return value
    if isinstance(value, int):
        return str(value) if abs(value) > SAFE_INTEGER else value
    if isinstance(value, dict):
        return {k: _portable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_portable(v) for v in value]
    return value


def canonical_json(cert: BaseModel) -> str:
    payload = _portable(cert.model_dump(mode="python"))
    return json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=True) + "\n"


def parse_certificate(text: str) -> BaseModel:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise CorruptFile(f"not JSON: {e}") from e
    try:
        return CERTIFICATE.validate_python(data)
    except ValidationError as e:
        raise CorruptFile(f"does not match any certificate schema: {e.error_count()} errors") from e


def load_certificate(path: str) -> BaseModel:
    try:
        text = file_handler.read_text(path)
    except (OSError, UnicodeDecodeError) as e:
        raise CorruptFile(f"cannot read {path}: {e}") from e
    return parse_certificate(text)


# --- Builders ---

def partition_certificate(A: PartitionSet, spec: ConstraintSpec = ConstraintSpec()) -> PartitionCertificate:
    return PartitionCertificate(
        n=A.n,
        alpha=format_rational(A.alpha),
        parts=list(A.parts),
        spec=SpecModel.from_spec(spec),
        constraint_digest=constraint_digest(spec),
    )


def table_certificate(collection: TableCollection) -> ProofTableCertificate:
    tables = [
        TableModel(
            alpha=format_rational(alpha),
            rows=[RowModel(i=r.index, m=r.m, beta=format_rational(r.beta), A=list(r.A))
                  for r in collection[alpha].rows],
        )
        for alpha in collection
    ]
    return ProofTableCertificate(
        name=collection.name,
        S=[format_rational(s) for s in sorted(collection.S)],
        Q=SpecModel.from_spec(collection.Q),
        M_prime=collection.M_prime,
        X=collection.X,
        tables=tables,
        constraint_digest=constraint_digest(collection.Q),
    )


def collection_from_certificate(cert: ProofTableCertificate) -> TableCollection:
    Q = cert.Q.to_spec()
    S = frozenset(parse_rational(s) for s in cert.S)
    tables = [
        ProofTable(
            alpha=parse_rational(t.alpha),
            rows=tuple(ProofRow(r.i, r.m, parse_rational(r.beta), tuple(r.A)) for r in t.rows),
            S=S, Q=Q, M_prime=cert.M_prime, X=cert.X,
        )
        for t in cert.tables
    ]
    return TableCollection(cert.name, tables)


# --- Verification ---

@dataclass
class VerificationReport:
    kind: str
    path: str
    claims: list[str] = field(default_factory=list)

    def __str__(self) -> str:
        return f"{self.path}: {self.kind} certificate verified ({len(self.claims)} claims)"


def _check_witness(n: int, parts: list[int], alpha: Fraction, spec: ConstraintSpec, where: str) -> None:
    try:
        A = make_partition(parts)
    except (RecipartError, ValueError, TypeError) as e:
        raise VerificationFailed(f"{where}: {e}") from e
    if A.alpha != alpha:
        raise VerificationFailed(f"{where}: reciprocal sum is {format_rational(A.alpha)}, "
                                 f"claimed {format_rational(alpha)}")
    if A.n != n:
        raise VerificationFailed(f"{where}: parts sum to {A.n}, claimed {n}")
    if not satisfies(A, spec):
        raise VerificationFailed(f"{where}: parts break the constraint ({spec.describe()})")


def _check_digest(claimed: str, spec: ConstraintSpec, where: str) -> None:
    if claimed != constraint_digest(spec):
        raise VerificationFailed(f"{where}: constraint digest does not match the constraint spec")


def _verify_partition(cert: PartitionCertificate, report: VerificationReport) -> None:
    spec = cert.spec.to_spec()
    _check_digest(cert.constraint_digest, spec, "partition")
    _check_witness(cert.n, cert.parts, parse_rational(cert.alpha), spec, "partition")
    report.claims += ["constraint digest", "distinct positive parts", "reciprocal sum", "sum", "constraint"]


def _verify_table(cert: ProofTableCertificate, report: VerificationReport) -> None:
    Q = cert.Q.to_spec()
    _check_digest(cert.constraint_digest, Q, "proof-table")
    try:
        collection = collection_from_certificate(cert)
        reports = check_properties(collection)
    except MissingTable as e:
        raise VerificationFailed(f"proof-table: {e}") from e
    except (RecipartError, ValueError) as e:
        raise VerificationFailed(f"proof-table: malformed table: {e}") from e
    if set(collection.tables) != collection.S:
        raise VerificationFailed("proof-table: tables do not cover S exactly")
    for alpha, props in reports.items():
        for result in props.all_results():
            if result.status.value != "verified":
                raise VerificationFailed(f"proof-table alpha={format_rational(alpha)}: {result.name} "
                                         f"{result.status.value}: {result.detail}")
            report.claims.append(f"alpha={format_rational(alpha)} {result.name}")


def _verify_shard(shard: RangeShard, spec: Optional[ConstraintSpec], report: VerificationReport,
                  where: str) -> dict[int, list[int]]:
    alpha = parse_rational(shard.alpha)
    entries = {}
    for entry in shard.entries:
        if entry.n in entries:
            raise VerificationFailed(f"{where}: n={entry.n} appears twice")
        if spec is not None:
            _check_witness(entry.n, entry.parts, alpha, spec, f"{where} n={entry.n}")
        entries[entry.n] = entry.parts
    report.claims.append(f"{where}: {len(entries)} witnesses")
    return entries


def _verify_manifest(cert: Manifest, directory: str, report: VerificationReport) -> None:
    spec = cert.spec.to_spec()
    _check_digest(cert.constraint_digest, spec, "manifest")
    witnessed: dict[int, list[int]] = {}
    for ref in cert.shards:
        shard_path = os.path.join(directory, ref.file)
        if not os.path.exists(shard_path):
            raise VerificationFailed(f"shard {ref.file} is missing")
        if file_handler.sha256_file(shard_path) != ref.sha256:
            raise VerificationFailed(f"shard {ref.file} does not match its sha256")
        shard = load_certificate(shard_path)
        if not isinstance(shard, RangeShard) or shard.alpha != cert.alpha \
                or shard.constraint_digest != cert.constraint_digest:
            raise VerificationFailed(f"shard {ref.file} belongs to another range")
        entries = _verify_shard(shard, spec, report, ref.file)
        if len(entries) != ref.count or (entries and (min(entries) < ref.lo or max(entries) > ref.hi)):
            raise VerificationFailed(f"shard {ref.file} does not match its manifest entry")
        overlap = witnessed.keys() & entries.keys()
        if overlap:
            raise VerificationFailed(f"n={min(overlap)} is witnessed by two shards")
        witnessed.update(entries)
    residue = tuple(cert.residue) if cert.residue is not None else None
    for lo, hi in cert.ranges:
        for n in range(lo, hi + 1):
            if passes_residue(n, residue) and n not in witnessed:
                raise VerificationFailed(f"n={n} is covered by [{lo}, {hi}] but has no witness")
    report.claims.append(f"coverage of {len(cert.ranges)} ranges")


def _verify_model(cert: BaseModel, path: str) -> VerificationReport:
    report = VerificationReport(kind=cert.kind, path=path)
    if isinstance(cert, PartitionCertificate):
        _verify_partition(cert, report)
    elif isinstance(cert, ProofTableCertificate):
        _verify_table(cert, report)
    elif isinstance(cert, Manifest):
        _verify_manifest(cert, os.path.dirname(os.path.abspath(path)), report)
    else:
        # a lone shard carries only the digest, so the constraint itself is checked by its manifest
        _verify_shard(cert, ConstraintSpec(), report, os.path.basename(path))
    return report


def verify_certificate(path: str) -> VerificationReport:
    """Re-derives every claim in the file at path; raises VerificationFailed at the first one that fails."""
    report = _verify_model(load_certificate(path), path)
    logger.info("Verified %s", report)
    return report


# --- Writing ---

def write_certificate(cert: Union[BaseModel, dict], path: str) -> str:
    """Validates the payload and writes it canonically, replacing path atomically."""
    data = cert.model_dump(mode="python") if isinstance(cert, BaseModel) else cert
    try:
        model = CERTIFICATE.validate_python(data)
    except ValidationError as e:
        raise ValidationFailure(f"payload does not validate: {e}") from e
    except RecipartError as e:
        raise ValidationFailure(str(e)) from e
    try:
        _verify_model(model, path)
    except VerificationFailed as e:
        raise ValidationFailure(e.claim) from e
    file_handler.save_text(path, canonical_json(model))
    logger.debug("Wrote %s certificate to %s", model.kind, path)
    return path


def normalize_ranges(ranges: Iterable[tuple[int, int]]) -> list[tuple[int, int]]:
    """Sorts intervals and fuses any that overlap or touch."""
    merged: list[tuple[int, int]] = []
    for lo, hi in sorted((int(lo), int(hi)) for lo, hi in ranges):
        if merged and lo <= merged[-1][1] + 1:
            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
        else:
            merged.append((lo, hi))
    return merged


def merge_manifests(a: Manifest, b: Manifest) -> Manifest:
    """The union of two manifests over the same alpha, spec and residue filter.

    Shard references are resolved against one directory, so both manifests
    must sit beside their shards in the same place.
    """
    if (a.alpha, a.constraint_digest, a.residue) != (b.alpha, b.constraint_digest, b.residue):
        raise SpecMismatch(f"cannot merge alpha={a.alpha} ({a.spec.to_spec().describe()}) "
                           f"with alpha={b.alpha} ({b.spec.to_spec().describe()})")
    shards = {ref.file: ref for ref in a.shards + b.shards}
    return Manifest(
        alpha=a.alpha,
        spec=a.spec,
        constraint_digest=a.constraint_digest,
        residue=a.residue,
        ranges=normalize_ranges(a.ranges + b.ranges),
        shards=sorted(shards.values(), key=lambda ref: (ref.lo, ref.file)),
    )


def covered_runs(report: RangeReport) -> list[tuple[int, int]]:
    """Maximal runs of admissible n in the report that all have witnesses."""
    runs: list[tuple[int, int]] = []
    start = last = None
    for n in report.admissible():
        if n in report.witnesses:
            if start is None:
                start = n
            last = n
        elif start is not None:
            runs.append((start, last))
            start = None
    if start is not None:
        runs.append((start, last))
    return runs


def range_stem(alpha: Fraction, spec: ConstraintSpec, lo: int, hi: int) -> str:
    return f"range-{format_rational(alpha).replace('/', '_')}-{constraint_digest(spec)[:8]}-{lo}-{hi}"


def write_range_report(report: RangeReport, directory: str, stem: Optional[str] = None,
                       shard_size: int = SHARD_SIZE) -> str:
    """Writes the witnesses of report as shards plus a manifest; returns the manifest path."""
    stem = stem or range_stem(report.alpha, report.spec, report.lo, report.hi)
    alpha = format_rational(report.alpha)
    digest = constraint_digest(report.spec)
    ns = sorted(report.witnesses)
    refs = []
    for k, offset in enumerate(range(0, len(ns), shard_size)):
        chunk = ns[offset: offset + shard_size]
        shard = RangeShard(
            alpha=alpha,
            constraint_digest=digest,
            entries=[ShardEntry(n=n, parts=list(report.witnesses[n].parts)) for n in chunk],
        )
        name = f"{stem}-shard-{k:04d}.json"
        shard_path = write_certificate(shard, os.path.join(directory, name))
        refs.append(ShardRef(file=name, sha256=file_handler.sha256_file(shard_path),
                             lo=chunk[0], hi=chunk[-1], count=len(chunk)))
    manifest = Manifest(
        alpha=alpha,
        spec=SpecModel.from_spec(report.spec),
        constraint_digest=digest,
        residue=report.residue_filter,
        ranges=covered_runs(report),
        shards=refs,
    )
    path = write_certificate(manifest, os.path.join(directory, f"{stem}.json"))
    logger.info("Wrote %d witnesses in %d shards to %s", len(ns), len(refs), path)
    return path


class CertificateStore:
    """Witness lookup over every partition certificate and range manifest under root."""

    source = "certificate"

    def __init__(self, root: Optional[str] = None):
        self.root = root or file_handler.cert_dir()
        self._index: Optional[dict[tuple[Fraction, str, int], list[int]]] = None

    def _load(self) -> dict:
        index: dict[tuple[Fraction, str, int], list[int]] = {}
        if not os.path.isdir(self.root):
            return index
        for name in sorted(os.listdir(self.root)):
            if not name.endswith(".json"):
                continue
            path = os.path.join(self.root, name)
            try:
                cert = load_certificate(path)
            except CorruptFile as e:
                logger.warning("Skipping %s: %s", path, e)
                continue
            if isinstance(cert, PartitionCertificate):
                index[(parse_rational(cert.alpha), cert.constraint_digest, cert.n)] = cert.parts
            elif isinstance(cert, RangeShard):
                for entry in cert.entries:
                    index[(parse_rational(cert.alpha), cert.constraint_digest, entry.n)] = entry.parts
        logger.info("Indexed %d witnesses under %s", len(index), self.root)
        return index

    def witness(self, alpha: Fraction, n: int, spec: ConstraintSpec) -> Optional[PartitionSet]:
        if self._index is None:
            self._index = self._load()
        parts = self._index.get((alpha, constraint_digest(spec), n))
        if parts is None:
            return None
        A = make_partition(parts)
        # stored witnesses are re-checked before use
        if A.n != n or A.alpha != alpha or not satisfies(A, spec):
            logger.warning("Ignoring stored witness for alpha=%s n=%d: it does not check out",
                           format_rational(alpha), n)
            return None
        return A

    def save_partition(self, A: PartitionSet, spec: ConstraintSpec) -> str:
        name = f"partition-{format_rational(A.alpha).replace('/', '_')}-{constraint_digest(spec)[:8]}-{A.n}.json"
        path = write_certificate(partition_certificate(A, spec), os.path.join(self.root, name))
        self._index = None
        return path

    def save_report(self, report: RangeReport) -> str:
        path = write_range_report(report, self.root)
        self._index = None
        return path
