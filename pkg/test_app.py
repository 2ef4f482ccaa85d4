import json
import os

import pytest

from app import ABSENT, FOUND, UNKNOWN, USAGE, main
from partition_core import parse_partition

slow = pytest.mark.skipif(os.environ.get("RECIPART_SLOW") != "1", reason="set RECIPART_SLOW=1 to run")


@pytest.fixture(autouse=True)
def cert_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("RECIPART_CERT_DIR", str(tmp_path))
    return tmp_path


# --- find / enum / count ---

def test_find(capsys):
    assert main(["find", "--n", "11", "--alpha", "1"]) == FOUND
    assert capsys.readouterr().out.strip() == "{2,3,6}"


def test_find_json(capsys):
    assert main(["find", "--n", "11", "--alpha", "1", "--json"]) == FOUND
    data = json.loads(capsys.readouterr().out)
    assert data["parts"] == [2, 3, 6]
    assert data["kind"] == "partition"


def test_find_absent(capsys):
    assert main(["find", "--n", "10", "--alpha", "1"]) == ABSENT
    assert "No 1-partition of 10" in capsys.readouterr().out


def test_find_budget(capsys):
    assert main(["find", "--n", "96", "--alpha", "1", "--max-nodes", "1"]) == UNKNOWN
    assert "unknown" in capsys.readouterr().err


def test_find_save(cert_dir):
    assert main(["find", "--n", "11", "--alpha", "1", "--save"]) == FOUND
    assert [p.name for p in cert_dir.iterdir() if p.suffix == ".json"]


@pytest.mark.parametrize("argv", [
    ["find", "--n", "11"],
    ["find", "--n", "11", "--alpha", "0"],
    ["find", "--n", "11", "--alpha", "x"],
    ["find", "--n", "11", "--alpha", "1", "--m-free", "1"],
    ["find", "--n", "0", "--alpha", "1"],
    ["--bogus"],
    ["nosuchcommand"],
])
def test_usage_errors(argv):
    assert main(argv) == USAGE


def test_help(capsys):
    assert main(["--help"]) == FOUND
    assert "verify-range" in capsys.readouterr().out


def test_enum(capsys):
    assert main(["enum", "--n", "80", "--alpha", "1"]) == FOUND
    assert capsys.readouterr().out.splitlines() == ["{2,4,10,15,21,28}"]


def test_enum_with_constraint(capsys):
    assert main(["enum", "--n", "96", "--alpha", "1", "--m-free", "7"]) == ABSENT


def test_count(capsys):
    assert main(["count", "--n", "91", "--alpha", "1"]) == FOUND
    assert capsys.readouterr().out.strip() == "1"


def test_count_json(capsys):
    assert main(["count", "--n", "96", "--alpha", "1", "--json"]) == FOUND
    assert json.loads(capsys.readouterr().out)["count"] == 4


@pytest.mark.parametrize("flags, code", [
    (["--primes", "2,3"], FOUND),
    (["--primes", "2"], ABSENT),
    (["--forbid", "6"], ABSENT),
    (["--min-part", "2"], FOUND),
    (["--min-part", "3"], ABSENT),
    (["--max-part", "6"], FOUND),
    (["--max-part", "5"], ABSENT),
])
def test_constraint_flags(flags, code):
    assert main(["find", "--n", "11", "--alpha", "1"] + flags) == code


def test_max_solutions(capsys):
    assert main(["enum", "--n", "96", "--alpha", "1", "--max-solutions", "2"]) == UNKNOWN
    assert "unknown" in capsys.readouterr().err
    assert main(["count", "--n", "96", "--alpha", "1", "--max-solutions", "4"]) == FOUND
    assert capsys.readouterr().out.strip() == "4"


@pytest.mark.parametrize("command", [
    ["find", "--n", "11", "--alpha", "1"],
    ["verify-range", "--alpha", "1", "--lo", "11", "--hi", "11"],
])
def test_max_solutions_only_where_it_applies(command):
    assert main(command + ["--max-solutions", "1"]) == USAGE


# --- verify-range ---

def test_verify_range_with_failures(capsys):
    assert main(["verify-range", "--alpha", "1", "--lo", "1", "--hi", "11", "--jobs", "1", "--json"]) == ABSENT
    data = json.loads(capsys.readouterr().out)
    assert data["failures"] == list(range(2, 11))
    assert data["witnesses"]["11"] == [2, 3, 6]


def test_verify_range_residue(capsys):
    argv = ["verify-range", "--alpha", "1", "--lo", "11", "--hi", "24", "--residue", "0:11", "--jobs", "1", "--json"]
    assert main(argv) == ABSENT
    data = json.loads(capsys.readouterr().out)
    assert data["residue"] == [11, 0]
    assert data["failures"] == [22]


def test_verify_range_save(cert_dir):
    argv = ["verify-range", "--alpha", "1", "--lo", "11", "--hi", "11", "--jobs", "1", "--save"]
    assert main(argv) == FOUND
    manifests = [p for p in cert_dir.iterdir() if p.suffix == ".json" and "shard" not in p.name]
    assert len(manifests) == 1
    assert main(["verify-cert", str(manifests[0])]) == FOUND


# --- spectra ---

def test_bset(capsys):
    assert main(["bset", "--n", "3", "--json"]) == FOUND
    assert json.loads(capsys.readouterr().out)["members"] == ["1/3", "3/2"]


def test_bwindow_empty(capsys):
    assert main(["bwindow", "--lo", "5", "--hi", "6"]) == FOUND
    assert "0 rationals" in capsys.readouterr().out


def test_growth_csv(tmp_path):
    path = tmp_path / "growth.csv"
    assert main(["growth", "--lo", "5", "--hi", "8", "--N", "8", "--csv", str(path)]) == FOUND
    assert path.read_text().splitlines()[0] == "n,count"


def test_nm(capsys):
    assert main(["nm", "--M", "7"]) == FOUND
    assert "N_7 = 97" in capsys.readouterr().out
    assert main(["nm", "--M", "2", "--json"]) == FOUND
    data = json.loads(capsys.readouterr().out)
    assert data["exact"] is False and data["congruence_caveat"] == 8


def test_nm_verify_with_horizon(capsys):
    assert main(["nm", "--M", "7", "--verify", "--horizon", "100", "--jobs", "1", "--json"]) == FOUND
    data = json.loads(capsys.readouterr().out)
    assert data["below"] == 96 and data["below_refuted"] is True
    assert (data["range"]["lo"], data["range"]["hi"]) == (97, 100)
    assert data["range"]["failures"] == []


def test_nm_rejects_one():
    assert main(["nm", "--M", "1"]) == USAGE


@slow
@pytest.mark.parametrize("argv, out", [
    (["count", "--n", "151", "--alpha", "1"], "34"),
    (["bwindow", "--lo", "65", "--hi", "78", "--json"], '"size": 0'),
])
def test_slow_commands(argv, out, capsys):
    assert main(argv) == FOUND
    assert out in capsys.readouterr().out


# --- proof tables ---

def test_prove(capsys):
    assert main(["prove", "--tables", "graham-q"]) == FOUND
    assert "P4 verified" in capsys.readouterr().out


def test_prove_json_and_save(capsys, cert_dir):
    assert main(["prove", "--tables", "odd15", "--json", "--save"]) == FOUND
    data = json.loads(capsys.readouterr().out)
    assert data["properties"]["1"]["congruence"]["status"] == "verified"
    saved = cert_dir / "tables-odd15.json"
    assert main(["verify-cert", str(saved)]) == FOUND


def test_prove_with_X(capsys):
    assert main(["prove", "--tables", "graham-s", "--X", "100", "--json"]) == FOUND
    assert json.loads(capsys.readouterr().out)["X"] == 100


def test_prove_base_with_exclude(capsys):
    argv = ["prove", "--tables", "graham-s", "--base", "--exclude", "4/3,2", "--jobs", "1", "--json"]
    assert main(argv) == FOUND
    window = json.loads(capsys.readouterr().out)["base_window"]
    assert window["hi"] == 218
    assert list(window["reports"]) == ["1"]
    assert window["reports"]["1"] == {"failures": [], "unknown": []}


def test_prove_reports_the_level(capsys):
    assert main(["prove", "--tables", "arbsmall(3,2/9)", "--json"]) == FOUND
    assert json.loads(capsys.readouterr().out)["focus"] == "2/9"


def test_prove_unknown_tables():
    assert main(["prove", "--tables", "nope"]) == USAGE


def test_construct(capsys):
    assert main(["construct", "--tables", "graham-s", "--alpha", "1", "--n", "1001"]) == FOUND
    A = parse_partition(capsys.readouterr().out.strip())
    assert A.n == 1001 and A.alpha == 1


def test_construct_store_and_live(capsys):
    argv = ["construct", "--tables", "graham-s", "--alpha", "1", "--n", "1001", "--json"]
    assert main(argv) == FOUND
    base = json.loads(capsys.readouterr().out)["trace"][-1]
    assert base["source"] == "search"

    assert main(["find", "--n", str(base["n"]), "--alpha", base["alpha"], "--save"]) == FOUND
    capsys.readouterr()
    assert main(argv + ["--no-live"]) == FOUND
    assert json.loads(capsys.readouterr().out)["trace"][-1]["source"] == "certificate"
    assert main(argv + ["--no-store", "--no-live"]) == UNKNOWN


def test_construct_without_base(capsys):
    argv = ["construct", "--tables", "graham-s", "--alpha", "1", "--n", "1001", "--no-live"]
    assert main(argv) == UNKNOWN


def test_construct_below_threshold():
    assert main(["construct", "--tables", "graham-s", "--alpha", "1", "--n", "50"]) == USAGE


def test_synth(capsys):
    assert main(["synth", "--alpha", "2", "--S", "1,2"]) == FOUND
    assert "m=1" in capsys.readouterr().out


@pytest.mark.parametrize("flags", [["--max-sum", "2"], ["--pool-max", "2"]])
def test_synth_bounds_leave_a_residue_open(flags, capsys):
    assert main(["synth", "--alpha", "1", "--S", "1,4/3,2", "--json"] + flags) == UNKNOWN
    data = json.loads(capsys.readouterr().out)
    assert data["modulus"] == 2 and data["covered"] == [0]


def test_synth_m_values(capsys):
    assert main(["synth", "--alpha", "1", "--S", "1,4/3,2", "--m", "2", "--json"]) == FOUND
    assert json.loads(capsys.readouterr().out)["complete"] is True
    assert main(["synth", "--alpha", "1", "--S", "1,4/3,2", "--m", "1"]) == ABSENT


def test_synth_unit_row_needs_X_above_one(capsys):
    argv = ["synth", "--alpha", "2", "--S", "1,2", "--pool-max", "9", "--max-sum", "20", "--json"]
    assert main(argv + ["--X", "1"]) == UNKNOWN
    assert json.loads(capsys.readouterr().out)["modulus"] == 2


def test_synth_nothing(capsys):
    argv = ["synth", "--alpha", "1", "--S", "1", "--pool-max", "3", "--max-sum", "3"]
    assert main(argv) == ABSENT


# --- certificates ---

def test_verify_cert(tmp_path, capsys):
    main(["find", "--n", "11", "--alpha", "1", "--json"])
    path = tmp_path / "graham.json"
    path.write_text(capsys.readouterr().out, encoding="utf-8")
    assert main(["verify-cert", str(path)]) == FOUND

    data = json.loads(path.read_text(encoding="utf-8"))
    data["parts"] = [2, 3, 7]
    path.write_text(json.dumps(data), encoding="utf-8")
    assert main(["verify-cert", str(path)]) == ABSENT
    assert "FAILED" in capsys.readouterr().out

    path.write_text("garbage", encoding="utf-8")
    assert main(["verify-cert", str(path)]) == USAGE


# --- recipes ---

@pytest.mark.parametrize("recipe", ["unique91", "m7"])
def test_repro(recipe, capsys):
    assert main(["repro", recipe, "--jobs", "1"]) == FOUND
    assert "FAIL" not in capsys.readouterr().out


@slow
@pytest.mark.parametrize("recipe", ["nm-table", "b100"])
def test_slow_repro(recipe, capsys):
    assert main(["repro", recipe]) == FOUND
    assert "FAIL" not in capsys.readouterr().out
