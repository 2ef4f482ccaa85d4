import os
from fractions import Fraction

import pandas as pd
import pytest

from partition_core import InvalidArgument, distinct_partitions, reciprocal_sum
from search_engine import find_one
from spectrum import (
    NALPHA_70,
    NM_TABLE,
    PUBLISHED_GROWTH,
    NmFamily,
    WindowChain,
    build_B,
    build_B_window,
    covering_divisor,
    growth_table,
    nm_classify,
    nm_value,
    nm_verify,
    write_growth_csv,
)

F = Fraction

slow = pytest.mark.skipif(os.environ.get("RECIPART_SLOW") != "1", reason="set RECIPART_SLOW=1 to run")


# --- B(n) ---

def test_small_spectra():
    assert build_B(1).members == {Fraction(1)}
    assert build_B(3).members == {Fraction(3, 2), Fraction(1, 3)}
    assert build_B(3).render() == "{1/3, 3/2}"
    assert Fraction(1) in build_B(11)


def test_B_matches_brute_force():
    for n in range(1, 41):
        expected = {reciprocal_sum(parts) for parts in distinct_partitions(n)}
        assert build_B(n).members == expected, n


def test_every_member_has_a_witness():
    for alpha in build_B(12):
        A = find_one(12, alpha)
        assert A is not None and A.alpha == alpha


def test_parallel_B_matches_serial():
    assert build_B(20, jobs=2).members == build_B(20).members


# --- B(n, N) ---

def test_window_65_78_is_empty():
    window = build_B_window(65, 78)
    assert len(window) == 0
    assert window.window == (65, 78)


def test_window_is_an_intersection():
    expected = build_B(8).members & build_B(9).members & build_B(10).members
    assert build_B_window(8, 10).members == expected


def test_window_shrinks_as_N_grows():
    assert build_B_window(8, 14).members <= build_B_window(8, 12).members


def test_window_rejects_bad_bounds():
    with pytest.raises(InvalidArgument):
        build_B_window(10, 9)


def test_chain_matches_direct_windows():
    chain = WindowChain(8, 14, keep_sets=range(8, 15))
    for k in range(8, 15):
        assert chain.window(k).members == build_B_window(k, 14).members
        assert chain.size(k) == len(chain.window(k))
    for k in range(8, 14):
        assert chain.window(k).members <= chain.window(k + 1).members


def test_growth_telescopes():
    chain = WindowChain(8, 14)
    rows = growth_table(9, 14, 14)
    assert [n for n, _ in rows] == list(range(9, 15))
    assert all(count >= 0 for _, count in rows)
    assert sum(count for _, count in rows) == chain.size(14) - chain.size(8)


def test_growth_csv(tmp_path):
    path = write_growth_csv([(66, 2), (67, 2)], str(tmp_path / "growth.csv"))
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["n", "count"]
    assert frame["count"].tolist() == [2, 2]


@slow
def test_window_100_136():
    window = build_B_window(100, 136, jobs=os.cpu_count() or 1)
    assert len(window) == 4314
    assert set(NALPHA_70) <= window.members


@slow
def test_window_70_136_is_the_nine_reference_rationals():
    window = build_B_window(70, 136, jobs=os.cpu_count() or 1)
    assert window.members == set(NALPHA_70)
    assert F(19, 15) in window.members and F(19, 12) not in window.members
    assert F(19, 12) in build_B_window(71, 136, jobs=os.cpu_count() or 1).members


@slow
def test_window_66_136_holds_the_first_entrants():
    window = build_B_window(66, 136, jobs=os.cpu_count() or 1)
    assert {F(4, 5), F(11, 12)} <= window.members


@slow
def test_published_growth():
    rows = growth_table(65, 100, 136, jobs=os.cpu_count() or 1)
    assert dict(rows) == PUBLISHED_GROWTH
    assert sum(PUBLISHED_GROWTH.values()) == 4314


# --- N_M ---

def test_classify_examples():
    case = nm_classify(98)
    assert case.classification == NmFamily.PRIME_7
    assert case.divisor_witness == 49
    assert case.value == 78

    case = nm_classify(50)
    assert case.classification == NmFamily.PRIME_5
    assert case.divisor_witness == 25

    case = nm_classify(20)
    assert case.classification == NmFamily.TABLE_ENTRY
    assert case.value == 106
    assert case.divisor_witness is None

    assert nm_classify(13).classification == NmFamily.PRIME_GE_11
    assert nm_classify(32).divisor_witness == 16


def test_nm_values():
    assert nm_value(7) == (97, True, None)
    assert nm_value(2) == (737, False, 8)
    assert nm_value(3) == (154, True, 3)
    assert nm_value(33) == (92, True, None)
    assert nm_value(13) == (78, True, None)


def test_covered_M_default_to_78():
    for M in range(2, 500):
        case = nm_classify(M)
        if case.divisor_witness is not None:
            assert case.value == 78, M
        if M not in NM_TABLE:
            assert case.value == 78


def test_no_covering_divisor_for_large_primes():
    assert covering_divisor(13 * 49) is None


def test_nm_rejects_small_M():
    with pytest.raises(InvalidArgument):
        nm_classify(1)


def test_describe():
    assert nm_classify(7).describe() == "N_7 = 97 (table-entry)"
    assert nm_classify(2).describe() == "N_2 <= 737 (table-entry); only n = 1 mod 8"


def test_nm_verify_seven():
    result = nm_verify(7, horizon=112)
    assert result.below == 96
    assert result.below_refuted is True
    assert result.report.holds
    assert result.holds


def test_nm_verify_upper_bound_only():
    result = nm_verify(2)
    assert result.below is None
    assert result.report is None
    assert result.holds


@slow
def test_nm_verify_three():
    result = nm_verify(3, horizon=200, jobs=os.cpu_count() or 1)
    assert result.below == 151
    assert result.holds
