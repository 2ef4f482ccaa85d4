import json
import os

import pytest

from cert_store import (
    SAFE_INTEGER,
    CertificateStore,
    CorruptFile,
    Manifest,
    RangeShard,
    ShardEntry,
    SpecMismatch,
    SpecModel,
    ValidationFailure,
    VerificationFailed,
    canonical_json,
    load_certificate,
    merge_manifests,
    normalize_ranges,
    partition_certificate,
    table_certificate,
    verify_certificate,
    write_certificate,
    write_range_report,
)
from meta_prover import construct_with_trace
from partition_core import EMPTY_SPEC, ConstraintSpec, constraint_digest, make_partition
from proof_tables import graham_s, odd15
from search_engine import find_one, verify_range

SEVEN_FREE = ConstraintSpec(m_free=(7,))


@pytest.fixture(scope="module")
def seven_free_report():
    return verify_range(1, SEVEN_FREE, 97, 112)


def write_raw(path, data):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f)


# --- Partition certificates ---

def test_partition_round_trip(tmp_path):
    path = str(tmp_path / "graham.json")
    write_certificate(partition_certificate(make_partition([2, 3, 6])), path)
    with open(path, encoding="utf-8") as f:
        text = f.read()
    data = json.loads(text)
    assert data["n"] == 11 and data["alpha"] == "1" and data["parts"] == [2, 3, 6]
    assert canonical_json(load_certificate(path)) == text
    assert verify_certificate(path).kind == "partition"


def test_canonical_bytes_do_not_depend_on_input_order(tmp_path):
    a = partition_certificate(make_partition([6, 2, 3]), SEVEN_FREE)
    b = partition_certificate(make_partition([2, 3, 6]), ConstraintSpec(m_free=(7, 7)))
    assert canonical_json(a) == canonical_json(b)


@pytest.mark.parametrize("field, value, claim", [
    ("parts", [2, 3, 7], "reciprocal sum"),
    ("n", 12, "sum to 11"),
    ("alpha", "5/6", "reciprocal sum"),
])
def test_tampered_partition_fails(tmp_path, field, value, claim):
    path = str(tmp_path / "graham.json")
    write_certificate(partition_certificate(make_partition([2, 3, 6])), path)
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    data[field] = value
    write_raw(path, data)
    with pytest.raises(VerificationFailed) as info:
        verify_certificate(path)
    assert claim in info.value.claim


def test_tampered_spec_breaks_digest(tmp_path):
    path = str(tmp_path / "graham.json")
    write_certificate(partition_certificate(make_partition([2, 3, 6])), path)
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    data["spec"]["m_free"] = [7]
    write_raw(path, data)
    with pytest.raises(VerificationFailed, match="digest"):
        verify_certificate(path)


def test_duplicate_parts_rejected_on_write(tmp_path):
    payload = {
        "kind": "partition", "n": 7, "alpha": "5/6", "parts": [2, 2, 3],
        "spec": EMPTY_SPEC.to_payload(), "constraint_digest": constraint_digest(EMPTY_SPEC),
    }
    with pytest.raises(ValidationFailure):
        write_certificate(payload, str(tmp_path / "bad.json"))
    assert not os.listdir(tmp_path)


def test_false_claim_rejected_on_write(tmp_path):
    payload = partition_certificate(make_partition([2, 3, 6])).model_dump()
    payload["alpha"] = "2"
    with pytest.raises(ValidationFailure):
        write_certificate(payload, str(tmp_path / "bad.json"))


def test_malformed_table_rejected_on_write(tmp_path):
    payload = table_certificate(odd15()).model_dump()
    payload["tables"][0]["rows"][0]["A"] = [2, 2]
    with pytest.raises(ValidationFailure, match="repeated"):
        write_certificate(payload, str(tmp_path / "bad.json"))
    assert not os.listdir(tmp_path)


def test_unverified_table_rejected_on_write(tmp_path):
    payload = table_certificate(graham_s()).model_dump()
    payload["tables"][0]["rows"][0]["beta"] = "5/3"
    with pytest.raises(ValidationFailure):
        write_certificate(payload, str(tmp_path / "bad.json"))
    assert not os.listdir(tmp_path)


def test_bad_shard_rejected_on_write(tmp_path):
    shard = RangeShard(alpha="1", constraint_digest="0" * 64, entries=[ShardEntry(n=11, parts=[2, 3, 7])])
    with pytest.raises(ValidationFailure, match="reciprocal sum"):
        write_certificate(shard, str(tmp_path / "shard.json"))
    assert not os.listdir(tmp_path)


def test_corrupt_files(tmp_path):
    garbage = tmp_path / "garbage.json"
    garbage.write_text("{not json", encoding="utf-8")
    with pytest.raises(CorruptFile):
        verify_certificate(str(garbage))

    unknown = tmp_path / "unknown.json"
    unknown.write_text(json.dumps({"kind": "mystery"}), encoding="utf-8")
    with pytest.raises(CorruptFile):
        load_certificate(str(unknown))

    with pytest.raises(CorruptFile):
        load_certificate(str(tmp_path / "missing.json"))


def test_large_integers_are_strings(tmp_path):
    big = SAFE_INTEGER + 5
    shard = RangeShard(alpha=f"1/{big}", constraint_digest="0" * 64, entries=[ShardEntry(n=big, parts=[big])])
    path = str(tmp_path / "shard.json")
    write_certificate(shard, path)
    with open(path, encoding="utf-8") as f:
        text = f.read()
    assert f'"{big}"' in text
    loaded = load_certificate(path)
    assert loaded.entries[0].n == big
    assert canonical_json(loaded) == text


# --- Range certificates ---

def test_range_report_round_trip(tmp_path, seven_free_report):
    path = write_range_report(seven_free_report, str(tmp_path))
    manifest = load_certificate(path)
    assert isinstance(manifest, Manifest)
    assert manifest.ranges == [(97, 112)]
    assert sum(ref.count for ref in manifest.shards) == 16
    report = verify_certificate(path)
    assert report.kind == "range"


def test_range_report_sharding(tmp_path, seven_free_report):
    path = write_range_report(seven_free_report, str(tmp_path), stem="m7", shard_size=5)
    manifest = load_certificate(path)
    assert [ref.count for ref in manifest.shards] == [5, 5, 5, 1]
    verify_certificate(path)

    # a tampered shard no longer matches its hash
    shard_path = tmp_path / manifest.shards[1].file
    shard_path.write_text(shard_path.read_text(encoding="utf-8").replace('"n": 102', '"n": 103'),
                          encoding="utf-8")
    with pytest.raises(VerificationFailed, match="sha256"):
        verify_certificate(path)


def test_missing_shard(tmp_path, seven_free_report):
    path = write_range_report(seven_free_report, str(tmp_path), stem="m7", shard_size=8)
    os.remove(tmp_path / "m7-shard-0001.json")
    with pytest.raises(VerificationFailed, match="missing"):
        verify_certificate(path)


def test_manifest_with_a_gap_fails(tmp_path, seven_free_report):
    path = write_range_report(seven_free_report, str(tmp_path), stem="m7")
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    data["ranges"] = [[96, 112]]
    write_raw(path, data)
    with pytest.raises(VerificationFailed, match="n=96"):
        verify_certificate(path)


def manifest(ranges, spec=SEVEN_FREE, alpha="1"):
    return Manifest(alpha=alpha, spec=SpecModel.from_spec(spec), constraint_digest=constraint_digest(spec),
                    ranges=ranges, shards=[])


def test_merge_manifests():
    merged = merge_manifests(manifest([(97, 100)]), manifest([(101, 112)]))
    assert merged.ranges == [(97, 112)]
    merged = merge_manifests(manifest([(97, 100)]), manifest([(105, 112)]))
    assert merged.ranges == [(97, 100), (105, 112)]


def test_merge_needs_matching_specs():
    with pytest.raises(SpecMismatch):
        merge_manifests(manifest([(97, 100)]), manifest([(101, 112)], spec=EMPTY_SPEC))
    with pytest.raises(SpecMismatch):
        merge_manifests(manifest([(97, 100)]), manifest([(101, 112)], alpha="2"))


def test_overlapping_ranges_rejected():
    with pytest.raises(ValueError):
        manifest([(97, 105), (100, 112)])


def test_normalize_ranges():
    assert normalize_ranges([(5, 9), (1, 3), (4, 4), (20, 30), (25, 26)]) == [(1, 9), (20, 30)]


# --- Proof-table certificates ---

def test_table_certificate(tmp_path):
    path = str(tmp_path / "odd15.json")
    write_certificate(table_certificate(odd15()), path)
    report = verify_certificate(path)
    assert report.kind == "proof-table"
    assert "alpha=1 congruence" in report.claims


def test_tampered_table_fails(tmp_path):
    path = str(tmp_path / "graham-s.json")
    write_certificate(table_certificate(graham_s()), path)
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    data["tables"][0]["rows"][0]["beta"] = "5/3"
    write_raw(path, data)
    with pytest.raises(VerificationFailed):
        verify_certificate(path)


# --- Store ---

def test_store_lookup(tmp_path):
    store = CertificateStore(str(tmp_path))
    A = make_partition([2, 3, 6])
    store.save_partition(A, EMPTY_SPEC)
    assert store.witness(A.alpha, 11, EMPTY_SPEC) == A
    assert store.witness(A.alpha, 12, EMPTY_SPEC) is None
    assert store.witness(A.alpha, 11, SEVEN_FREE) is None


def test_store_reads_range_shards(tmp_path, seven_free_report):
    store = CertificateStore(str(tmp_path))
    store.save_report(seven_free_report)
    assert store.witness(seven_free_report.alpha, 100, SEVEN_FREE) == seven_free_report.witnesses[100]


def test_store_root_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("RECIPART_CERT_DIR", str(tmp_path))
    assert CertificateStore().root == str(tmp_path)


def test_construct_from_stored_base_case(tmp_path):
    tables = graham_s()
    A, steps = construct_with_trace(1, 1001, tables)
    base = steps[-1]
    store = CertificateStore(str(tmp_path))
    store.save_partition(find_one(base.n, base.alpha), tables.Q)
    B, steps = construct_with_trace(1, 1001, tables, base_store=store, live_search=False)
    assert steps[-1].source == "certificate"
    assert B == A
