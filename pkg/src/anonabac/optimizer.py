"""Decision-history pool and entropy-driven attribute weighting.

The pool keeps a bounded FIFO window of recent decisions together with
incremental (attribute, value, outcome) counts, so information gain is
O(values) at weight-recomputation time instead of O(window).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Optional

from . import anonymity
from .errors import HistoryError, RegistryError
from .model import AttributeSpace, Registry

DEFAULT_POOL_CAPACITY = 10_000

#: distinguished partition for records that do not carry an attribute at all
ABSENT = "\x00absent"


@dataclass(frozen=True)
class DecisionRecord:
    pairs: tuple  # AVPairs present in the request, any class
    granted: bool
    seq: int


class AAHPool:
    """Bounded FIFO of recent authorization decisions."""

    def __init__(self, capacity: int = DEFAULT_POOL_CAPACITY):
        if capacity < 1:
            raise ValueError("pool capacity must be positive")
        self.capacity = capacity
        self.records: deque = deque()
        self.last_seq = 0
        self.grants = 0
        self.denies = 0
        # (attr, value) -> [grant_count, deny_count] over the current window
        self._counts: dict = {}

    def __len__(self) -> int:
        return len(self.records)

    def record(self, rec: DecisionRecord) -> None:
        if rec.seq <= self.last_seq:
            raise HistoryError(f"non-monotone pool seq {rec.seq}")
        self.last_seq = rec.seq
        self.records.append(rec)
        self._bump(rec, +1)
        if len(self.records) > self.capacity:
            self._bump(self.records.popleft(), -1)

    def _bump(self, rec: DecisionRecord, sign: int) -> None:
        col = 0 if rec.granted else 1
        if rec.granted:
            self.grants += sign
        else:
            self.denies += sign
        counts = self._counts
        for pair in rec.pairs:
            cell = counts.get(pair)
            if cell is None:
                cell = counts[pair] = [0, 0]
            cell[col] += sign

    def value_buckets(self, attr: str) -> list:
        """(grant, deny) counts per observed value of ``attr``, plus the
        absent bucket when some records lack the attribute."""
        buckets = []
        pg = pd = 0
        for pair, (g, d) in self._counts.items():
            if pair.attr == attr and (g or d):
                buckets.append((g, d))
                pg += g
                pd += d
        ag, ad = self.grants - pg, self.denies - pd
        if ag or ad:
            buckets.append((ag, ad))
        return buckets


def _binary_entropy(g: int, d: int) -> float:
    n = g + d
    if n == 0 or g == 0 or d == 0:
        return 0.0
    pg = g / n
    pd = d / n
    return -(pg * math.log2(pg) + pd * math.log2(pd))


def decision_entropy(pool: AAHPool) -> float:
    """Entropy (bits) of the grant/deny distribution; 0 for an empty pool."""
    return _binary_entropy(pool.grants, pool.denies)


def information_gain(pool: AAHPool, attr: str) -> float:
    """Reduction in decision entropy from conditioning on the attribute's value."""
    n = len(pool)
    if n == 0:
        return 0.0
    h_d = decision_entropy(pool)
    if h_d == 0.0:
        return 0.0
    h_cond = 0.0
    for g, d in pool.value_buckets(attr):
        h_cond += (g + d) / n * _binary_entropy(g, d)
    return max(0.0, h_d - h_cond)


def min_value_cohorts(registry: Registry) -> dict:
    """Smallest subject cohort sharing a value, per attribute observed in M."""
    mins: dict = {}
    for pair, sids in registry.postings.items():
        cur = mins.get(pair.attr)
        if cur is None or len(sids) < cur:
            mins[pair.attr] = len(sids)
    return mins


def attribute_anonymity(registry: Registry, attr: str) -> float:
    """Per-attribute anonymity in [0, 1].

    Uses the smallest cohort of subjects sharing one of the attribute's
    observed values, normalized as log2(r_a)/log2(N); attributes assigned
    to no subject count as fully anonymous (r_a = N).
    """
    if attr not in registry.space:
        raise RegistryError(f"unknown attribute {attr!r}")
    n = len(registry.subjects)
    if n < 1:
        raise RegistryError("attribute anonymity needs at least one subject")
    r_a = min_value_cohorts(registry).get(attr, n)
    if n < 2:
        return 0.0
    return math.log2(r_a) / math.log2(n)


@dataclass(frozen=True)
class WeightEntry:
    attr: str
    info_gain: float
    anonymity: float

    @property
    def weight(self) -> float:
        return self.info_gain + self.anonymity


@dataclass(frozen=True)
class WeightList:
    """Attribute weights sorted descending, ties broken by ascending name."""

    entries: tuple  # tuple[WeightEntry, ...]
    version: int = 0

    def __post_init__(self) -> None:
        ordered = tuple(
            sorted(self.entries, key=lambda e: (-e.weight, e.attr))
        )
        object.__setattr__(self, "entries", ordered)

    @classmethod
    def from_pairs(cls, pairs: Iterable, version: int = 0) -> "WeightList":
        entries = tuple(WeightEntry(a, 0.0, float(w)) for a, w in pairs)
        return cls(entries=entries, version=version)

    def names(self) -> list:
        return [e.attr for e in self.entries]

    def ranks(self) -> dict:
        return {e.attr: i for i, e in enumerate(self.entries)}

    def csv_rows(self) -> list:
        rows = []
        for rank, e in enumerate(self.entries):
            rows.append((e.attr, e.info_gain, e.anonymity, e.weight, rank))
        return rows


def compute_weights(
    space: AttributeSpace,
    pool: AAHPool,
    registry: Registry,
    mode: str = "normalized",
    history=None,
    version: int = 0,
) -> WeightList:
    """Combine information gain with the anonymity term for every attribute.

    ``mode="normalized"`` (default) uses the per-attribute [0, 1] term;
    ``mode="raw"`` adds the global minimum subject-space size at threshold 1
    instead, which is constant across attributes.
    """
    if mode not in ("normalized", "raw"):
        raise ValueError(f"unknown weight mode {mode!r}")
    raw_r = 0.0
    if mode == "raw" and registry.subjects:
        raw_r = float(anonymity.rt_anonymity(registry, 1, history).r)
    entries = []
    for name in space.names():
        gain = information_gain(pool, name)
        if mode == "raw":
            anon = raw_r
        else:
            anon = attribute_anonymity(registry, name) if registry.subjects else 0.0
        entries.append(WeightEntry(attr=name, info_gain=gain, anonymity=anon))
    return WeightList(entries=tuple(entries), version=version)
