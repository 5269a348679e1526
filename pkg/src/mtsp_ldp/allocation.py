"""Sliding-window budget ledger and optimal budget allocation (OBA).

Budgets are tracked as :class:`fractions.Fraction` so the w-event audit is an
exact comparison. OBA sorts the window's dissimilarities in descending order,
picks the ``k`` that minimizes the cumulative error

    E(0) = sum(dis),    E(k) = k * var(eps / 2k) + sum(dis[k:])

and publishes at ``t`` with ``min(remaining, eps / 2k)`` if ``t`` is among the
top ``k``. The brute-force path re-sorts and re-sums for every ``k``; the fast
path keeps the sorted view incrementally, caches the publication-error table
and stops at the first ascent of ``E``.
"""

from __future__ import annotations

import bisect
import json
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable

from .dissimilarity import DissimilarityRecord
from .errors import BudgetViolation
from .oue import oue_unit_variance


def as_fraction(x) -> Fraction:
    """Exact rational for a budget; floats go through their shortest repr (0.1 -> 1/10)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    return Fraction(repr(float(x)))


@dataclass(frozen=True)
class LedgerEntry:
    t: int
    eps1: Fraction
    eps2: Fraction
    k_star: int | None = None
    decision: str = ""

    def to_json(self) -> dict:
        return {"t": self.t, "eps1": float(self.eps1), "eps2": float(self.eps2),
                "eps1_exact": str(self.eps1), "eps2_exact": str(self.eps2),
                "k_star": self.k_star, "decision": self.decision}

    @classmethod
    def from_json(cls, doc: dict) -> "LedgerEntry":
        return cls(int(doc["t"]), Fraction(doc.get("eps1_exact", doc["eps1"])),
                   Fraction(doc.get("eps2_exact", doc["eps2"])), doc.get("k_star"), doc.get("decision", ""))


class BudgetLedger:
    """Per-timestamp record of spent budgets with a hard sliding-window cap.

    Every :meth:`record` checks that the window ending at ``t`` spends at most
    ``epsilon`` in total and, when ``publication_cap`` is set, at most that much
    on publication (``eps2``). Earlier windows were checked when they closed, so
    passing every record means every window passed.

    Window sums are kept incrementally while timestamps arrive in order, so a
    record costs O(1) rational additions instead of O(w).
    """

    def __init__(self, epsilon, w: int, publication_cap: Fraction | None = None):
        if w < 1:
            raise ValueError("w must be >= 1")
        self.epsilon = as_fraction(epsilon)
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        self.w = int(w)
        self.publication_cap = publication_cap
        self.entries: dict[int, LedgerEntry] = {}
        # sums over the window ending at _tail_t (None: recompute)
        self._tail_t: int | None = None
        self._tail_total = Fraction(0)
        self._tail_pub = Fraction(0)

    def copy(self) -> "BudgetLedger":
        other = BudgetLedger(self.epsilon, self.w, self.publication_cap)
        other.entries = dict(self.entries)
        other._tail_t, other._tail_total, other._tail_pub = self._tail_t, self._tail_total, self._tail_pub
        return other

    def _before(self, t: int) -> tuple[Fraction, Fraction]:
        """(total, publication) spent in the w-1 timestamps before ``t``."""
        if self._tail_t is not None and self._tail_t == t - 1:
            old = self.entries.get(t - self.w)
            if old is None:
                return self._tail_total, self._tail_pub
            return self._tail_total - old.eps1 - old.eps2, self._tail_pub - old.eps2
        window = list(self._window(t, include_t=False))
        return (sum((e.eps1 + e.eps2 for e in window), Fraction(0)),
                sum((e.eps2 for e in window), Fraction(0)))

    def _window(self, t: int, include_t: bool = True) -> Iterable[LedgerEntry]:
        stop = t + 1 if include_t else t
        return (self.entries[s] for s in range(max(1, t - self.w + 1), stop) if s in self.entries)

    def window_spend(self, t: int) -> Fraction:
        return sum((e.eps1 + e.eps2 for e in self._window(t)), Fraction(0))

    def publication_spent_before(self, t: int) -> Fraction:
        return self._before(t)[1]

    def remaining_publication(self, t: int) -> Fraction:
        """Publication budget still available at ``t`` (cap minus the previous w-1 spends)."""
        cap = self.publication_cap if self.publication_cap is not None else self.epsilon
        return max(cap - self.publication_spent_before(t), Fraction(0))

    def record(self, t: int, eps1, eps2, k_star: int | None = None, decision: str = "") -> LedgerEntry:
        if t in self.entries:
            raise ValueError(f"timestamp {t} already recorded")
        entry = LedgerEntry(t, as_fraction(eps1), as_fraction(eps2), k_star, decision)
        if entry.eps1 < 0 or entry.eps2 < 0:
            raise ValueError("budgets must be non-negative")
        total, pub = self._before(t)
        total += entry.eps1 + entry.eps2
        pub += entry.eps2
        if total > self.epsilon or (self.publication_cap is not None and pub > self.publication_cap):
            raise BudgetViolation(f"window ending at t={t} spends {total} (publication {pub}) > {self.epsilon}")
        self.entries[t] = entry
        if self._tail_t is None or t > self._tail_t:
            self._tail_t, self._tail_total, self._tail_pub = t, total, pub
        else:
            self._tail_t = None
        return entry

    def __getitem__(self, t: int) -> LedgerEntry:
        return self.entries[t]

    def __len__(self) -> int:
        return len(self.entries)

    def audit(self) -> list[tuple[int, Fraction]]:
        return audit_entries(self.entries.values(), self.epsilon, self.w)

    def dump_jsonl(self, path: str | Path) -> None:
        with Path(path).open("w") as fh:
            for t in sorted(self.entries):
                fh.write(json.dumps(self.entries[t].to_json()) + "\n")


def audit_entries(entries: Iterable[LedgerEntry], epsilon, w: int) -> list[tuple[int, Fraction]]:
    """Every length-``w`` window whose total spend exceeds ``epsilon``.

    Returns ``(window_end, spend)`` pairs; an empty list means the run is clean.
    Windows are checked for every end timestamp from the first entry on, with
    timestamps missing from the ledger counting as zero spend.
    """
    epsilon = as_fraction(epsilon)
    by_t = {e.t: e.eps1 + e.eps2 for e in entries}
    if not by_t:
        return []
    first, last = min(by_t), max(by_t)
    violations = []
    running = Fraction(0)
    for t in range(first, last + 1):
        running += by_t.get(t, 0)
        if t - w >= first:
            running -= by_t.get(t - w, 0)
        if running > epsilon:
            violations.append((t, running))
    return violations


def count_windows(entries: Iterable[LedgerEntry]) -> int:
    ts = [e.t for e in entries]
    return max(ts) - min(ts) + 1 if ts else 0


# ---------------------------------------------------------------------------
# Dissimilarity window


class DissimilarityWindow:
    """The last ``w`` dissimilarity records plus an incrementally sorted view.

    The sorted view orders by clamped dissimilarity descending, ties broken by
    the earlier timestamp.
    """

    def __init__(self, w: int):
        self.w = w
        self.window: deque[DissimilarityRecord] = deque()
        self._keys: list[tuple[float, int]] = []
        self.total = Fraction(0)

    @staticmethod
    def _key(rec: DissimilarityRecord) -> tuple[float, int]:
        return (-rec.dis_hat_clamped, rec.t)

    def push(self, rec: DissimilarityRecord) -> None:
        if self.window and rec.t <= self.window[-1].t:
            raise ValueError("records must arrive in increasing time order")
        self.window.append(rec)
        bisect.insort(self._keys, self._key(rec))
        self.total += Fraction(rec.dis_hat_clamped)
        while self.window and self.window[0].t <= rec.t - self.w:
            old = self.window.popleft()
            i = bisect.bisect_left(self._keys, self._key(old))
            del self._keys[i]
            self.total -= Fraction(old.dis_hat_clamped)

    @property
    def sorted_view(self) -> list[tuple[float, int]]:
        """``(dis_hat_clamped, t)`` pairs in descending dissimilarity order."""
        return [(-d, t) for d, t in self._keys]

    def __len__(self) -> int:
        return len(self.window)

    @property
    def last(self) -> DissimilarityRecord:
        return self.window[-1]


# ---------------------------------------------------------------------------
# Cumulative error and allocation


def publication_error(k: int, epsilon: float, n_group: int, unit_variance: Callable[[float], float] = oue_unit_variance) -> float:
    """``k * var(eps / 2k)`` with ``n_group`` users per invocation."""
    return (k * unit_variance(epsilon / (2 * k))) / n_group


def cumulative_error(sorted_dis, k: int, epsilon: float, n_group: int,
                     unit_variance: Callable[[float], float] = oue_unit_variance) -> Fraction:
    """``E(k)`` evaluated exactly over the float inputs.

    Summing in rationals makes the result independent of summation order, so
    any two implementations that agree on the inputs agree on every ``E(k)``.
    """
    sorted_dis = list(sorted_dis)
    if not 0 <= k <= len(sorted_dis):
        raise ValueError(f"k={k} outside 0..{len(sorted_dis)}")
    tail = sum((Fraction(x) for x in sorted_dis[k:]), Fraction(0))
    if k == 0:
        return tail
    return Fraction(publication_error(k, epsilon, n_group, unit_variance)) + tail


@dataclass(frozen=True)
class Allocation:
    eps2: Fraction
    k_star: int
    evaluated: int
    selected: tuple[int, ...]

    @property
    def publish(self) -> bool:
        return self.eps2 > 0


def _commit(ledger: BudgetLedger, window: DissimilarityWindow, t: int, k_star: int,
            selected: tuple[int, ...], evaluated: int, eps1=None) -> Allocation:
    if t in selected:
        eps2 = min(ledger.remaining_publication(t), ledger.epsilon / (2 * k_star))
    else:
        eps2 = Fraction(0)
    eps1 = as_fraction(window.last.budget if eps1 is None else eps1)
    ledger.record(t, eps1, eps2, k_star, "publish" if eps2 > 0 else "approximate")
    return Allocation(eps2, k_star, evaluated, selected)


def _check_window(window: DissimilarityWindow, t: int) -> None:
    if not len(window) or window.last.t != t:
        raise ValueError(f"dissimilarity window must end at t={t}")


def oba_allocate(window: DissimilarityWindow, ledger: BudgetLedger, t: int, n_group: int,
                 unit_variance: Callable[[float], float] = oue_unit_variance, eps1=None) -> Allocation:
    """Reference OBA: full re-sort and full enumeration of every ``k``.

    The chosen ``eps2`` is recorded in ``ledger`` together with ``eps1`` (default:
    the budget stored on the newest dissimilarity record; pass the exact
    rational when the float is not exactly representable).
    """
    _check_window(window, t)
    eps = float(ledger.epsilon)
    ranked = sorted(window.window, key=lambda r: (-r.dis_hat_clamped, r.t))
    dis = [r.dis_hat_clamped for r in ranked]
    # suffix sums give every tail in one pass; each E(k) is then exactly cumulative_error(dis, k, ...)
    tails = [Fraction(0)] * (len(dis) + 1)
    for k in range(len(dis) - 1, -1, -1):
        tails[k] = tails[k + 1] + Fraction(dis[k])
    errors = [tails[0]] + [Fraction(publication_error(k, eps, n_group, unit_variance)) + tails[k]
                           for k in range(1, len(dis) + 1)]
    k_star = min(range(len(errors)), key=lambda k: (errors[k], k))
    selected = tuple(r.t for r in ranked[:k_star])
    return _commit(ledger, window, t, k_star, selected, len(errors), eps1)


class PublicationErrorTable:
    """Cached ``k * unit_var(eps / 2k)``; divide by the group size at lookup."""

    def __init__(self, epsilon: float, w: int, unit_variance: Callable[[float], float] = oue_unit_variance):
        self.epsilon = epsilon
        self.unit = [0.0] + [k * unit_variance(epsilon / (2 * k)) for k in range(1, w + 1)]

    def __call__(self, k: int, n_group: int) -> float:
        return self.unit[k] / n_group if k else 0.0


def oba_allocate_fast(window: DissimilarityWindow, ledger: BudgetLedger, t: int, n_group: int,
                      table: PublicationErrorTable | None = None,
                      unit_variance: Callable[[float], float] = oue_unit_variance, eps1=None) -> Allocation:
    """OBA with the incremental sorted view, cached error table and early stop."""
    _check_window(window, t)
    if table is None or table.epsilon != float(ledger.epsilon) or len(table.unit) <= len(window):
        table = PublicationErrorTable(float(ledger.epsilon), max(len(window), ledger.w), unit_variance)
    keys = window._keys
    # E is convex in k (P grows like k^3, the tail sheds ever smaller terms),
    # so the first strict ascent ends the search
    tail = window.total
    best = prev = tail
    k_star, evaluated = 0, 1
    for k in range(1, len(keys) + 1):
        tail -= Fraction(-keys[k - 1][0])
        e = Fraction(table(k, n_group)) + tail
        evaluated += 1
        if e > prev:
            break
        if e < best:
            best, k_star = e, k
        prev = e
    selected = tuple(tk for _, tk in keys[:k_star])
    return _commit(ledger, window, t, k_star, selected, evaluated, eps1)
