from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mtsp_ldp.allocation import (BudgetLedger, DissimilarityWindow, LedgerEntry, PublicationErrorTable, as_fraction,
                                 audit_entries, cumulative_error, oba_allocate, oba_allocate_fast, publication_error)
from mtsp_ldp.dissimilarity import DissimilarityRecord
from mtsp_ldp.errors import BudgetViolation
from mtsp_ldp.oue import oue_unit_variance
from oracles import cumulative_error_oracle, oba_oracle, oue_unit_var, window_sums


def test_as_fraction_uses_shortest_repr():
    assert as_fraction(0.1) == Fraction(1, 10)
    assert as_fraction(1.0) / 40 == Fraction(1, 40)
    assert as_fraction("1/3") == Fraction(1, 3)


def test_ledger_window_cap_is_exact():
    ledger = BudgetLedger(1.0, 3)
    third = Fraction(1, 3)
    for t in range(1, 10):
        ledger.record(t, 0, third)
    assert ledger.window_spend(9) == 1
    assert ledger.audit() == []


def test_ledger_rejects_overspend_and_rolls_back():
    ledger = BudgetLedger(1.0, 2)
    ledger.record(1, 0.25, 0.5)
    with pytest.raises(BudgetViolation):
        ledger.record(2, 0.25, 0.01)
    assert 2 not in ledger.entries
    ledger.record(2, 0.25, 0)
    with pytest.raises(ValueError):
        ledger.record(2, 0, 0)


def test_publication_cap_and_remaining():
    ledger = BudgetLedger(1.0, 4, publication_cap=Fraction(1, 2))
    ledger.record(1, Fraction(1, 8), Fraction(1, 4))
    ledger.record(2, Fraction(1, 8), Fraction(1, 8))
    assert ledger.remaining_publication(3) == Fraction(1, 8)
    with pytest.raises(BudgetViolation):
        ledger.record(3, Fraction(1, 8), Fraction(1, 4))
    # t=5 sees only t=2..4
    ledger.record(3, Fraction(1, 8), 0)
    ledger.record(4, Fraction(1, 8), 0)
    assert ledger.remaining_publication(5) == Fraction(3, 8)


def test_dump_and_audit_round_trip(tmp_path):
    ledger = BudgetLedger(1.0, 5)
    for t in range(1, 12):
        ledger.record(t, Fraction(1, 10), Fraction(1, 10), k_star=t % 3, decision="publish")
    ledger.dump_jsonl(tmp_path / "l.jsonl")
    import json
    entries = [LedgerEntry.from_json(json.loads(line)) for line in (tmp_path / "l.jsonl").read_text().splitlines()]
    assert entries == [ledger[t] for t in range(1, 12)]
    assert audit_entries(entries, 1.0, 5) == []
    assert audit_entries(entries, Fraction(99, 100), 5) != []


@given(st.lists(st.fractions(0, 1, max_denominator=50), min_size=1, max_size=40), st.integers(1, 8),
       st.fractions(1, 3, max_denominator=7))
def test_audit_matches_window_sum_oracle(spends, w, eps):
    entries = [LedgerEntry(t, Fraction(0), s) for t, s in enumerate(spends, start=1)]
    expected = [(t, s) for t, s in window_sums({e.t: e.eps2 for e in entries}, w).items() if s > eps]
    assert audit_entries(entries, eps, w) == expected


@given(st.lists(st.floats(-0.01, 0.05, allow_nan=False), min_size=1, max_size=80), st.integers(1, 30))
def test_sorted_view_matches_full_resort(dis, w):
    window = DissimilarityWindow(w)
    for t, x in enumerate(dis, start=1):
        window.push(DissimilarityRecord(t, x, 0.01))
        recent = list(enumerate(dis, start=1))[max(0, t - w):t]
        expected = sorted(((max(v, 0.0), s) for s, v in recent), key=lambda p: (-p[0], p[1]))
        assert window.sorted_view == expected
        assert window.total == sum((Fraction(d) for d, _ in expected), Fraction(0))


def test_window_rejects_time_travel():
    window = DissimilarityWindow(3)
    window.push(DissimilarityRecord(5, 0.1, 0.1))
    with pytest.raises(ValueError):
        window.push(DissimilarityRecord(5, 0.1, 0.1))


def test_cumulative_error_trivial_cases():
    assert cumulative_error([0, 0, 0], 0, 1.0, 100) == 0
    e3 = cumulative_error([0.9, 0.5, 0.1], 3, 1.0, 100)
    assert float(e3) == pytest.approx(3 * oue_unit_variance(1 / 6) / 100)
    with pytest.raises(ValueError):
        cumulative_error([0.1], 2, 1.0, 10)


@given(st.lists(st.floats(0, 1, allow_nan=False), min_size=1, max_size=50), st.floats(0.1, 5), st.integers(1, 10**5))
def test_cumulative_error_matches_oracle(dis, eps, n):
    dis = sorted(dis, reverse=True)
    for k in range(len(dis) + 1):
        assert float(cumulative_error(dis, k, eps, n)) == pytest.approx(cumulative_error_oracle(dis, k, eps, n), rel=1e-12, abs=1e-15)


@pytest.mark.parametrize("eps", [0.5, 1, 2, 5])
@pytest.mark.parametrize("w", [5, 50, 1000])
def test_publication_error_is_convex(eps, w):
    p = PublicationErrorTable(eps, w).unit
    second = [p[k + 1] - 2 * p[k] + p[k - 1] for k in range(1, w)]
    assert min(second) > 0
    assert p[3] == publication_error(3, eps, 1)


def _make(w, eps=1.0, pub=True):
    return DissimilarityWindow(w), BudgetLedger(eps, w, publication_cap=as_fraction(eps) / 2 if pub else None)


def test_all_zero_dissimilarity_never_publishes():
    window, ledger = _make(5)
    for t in range(1, 20):
        window.push(DissimilarityRecord(t, 0.0, 0.1))
        alloc = oba_allocate_fast(window, ledger, t, 1000)
        assert alloc.k_star == 0 and alloc.eps2 == 0 and alloc.evaluated == 2


def test_single_spike_publishes_with_half_budget():
    window, ledger = _make(5)
    for t in range(1, 5):
        window.push(DissimilarityRecord(t, 0.0, 0.1))
        oba_allocate(window, ledger, t, 1000)
    window.push(DissimilarityRecord(5, 1.0, 0.1))
    alloc = oba_allocate(window, ledger, 5, 1000)
    assert alloc.k_star == 1 and alloc.eps2 == Fraction(1, 2)
    assert ledger[5].eps2 == Fraction(1, 2) and ledger[5].decision == "publish"


def test_window_must_end_at_t():
    window, ledger = _make(5)
    window.push(DissimilarityRecord(1, 0.0, 0.1))
    with pytest.raises(ValueError):
        oba_allocate_fast(window, ledger, 2, 10)


def _random_run(seed, w, steps, n_group=1000.0, eps=1.0):
    rng = np.random.default_rng(seed)
    wa, la = _make(w, eps)
    wb, lb = _make(w, eps)
    out = []
    for t in range(1, steps + 1):
        kind = rng.integers(4)
        x = 0.0 if kind == 0 else float(rng.choice([0.01, 0.02])) if kind == 1 else float(rng.uniform(-0.01, 0.06))
        rec = DissimilarityRecord(t, x, float(eps) / (2 * w))
        wa.push(rec)
        wb.push(rec)
        records = [(r.t, r.dis_hat_clamped) for r in wb.window]
        expect = oba_oracle(records, t, Fraction(eps), lb.remaining_publication(t), n_group)
        fast = oba_allocate_fast(wa, la, t, n_group)
        brute = oba_allocate(wb, lb, t, n_group)
        out.append((fast, brute, expect))
    return out, la, lb


@pytest.mark.parametrize("w", [5, 20, 50])
def test_fast_equals_brute_equals_oracle(w):
    runs, la, lb = _random_run(w, w, 400 if w < 50 else 200)
    for fast, brute, (k, eps2) in runs:
        assert (fast.k_star, fast.eps2) == (brute.k_star, brute.eps2) == (k, eps2)
        assert fast.evaluated <= brute.evaluated
    assert la.entries == lb.entries
    assert la.audit() == []


def test_early_stop_soundness_exhaustive():
    rng = np.random.default_rng(5)
    for _ in range(300):
        w = int(rng.integers(1, 40))
        dis = sorted(rng.exponential(0.02, w) * (rng.random(w) < 0.7), reverse=True)
        errs = [cumulative_error(dis, k, 1.0, 500) for k in range(w + 1)]
        first_up = next((k for k in range(w) if errs[k + 1] > errs[k]), w)
        assert min(errs[first_up:]) >= errs[first_up]
