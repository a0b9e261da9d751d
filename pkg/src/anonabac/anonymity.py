"""Anonymity quantification: credential subject spaces and entropy scores.

All functions are pure reads over an immutable (registry, history) snapshot
and are safe to evaluate in parallel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

from .credential_crypto import SignedCredential, verify_credential
from .errors import EmptyCohortError, ForgedCredentialError, InvalidSubjectSpaceError
from .model import History, Registry


@dataclass
class SubjectSpace:
    """Subjects plausibly behind a credential, with per-subject usage weights.

    A generator contributes weight 1; every recorded use of the credential
    adds 1 to the recorded initiator. With no history the distribution is
    uniform over the generators.
    """

    credential: frozenset
    generators: frozenset
    historical_users: frozenset
    weights: dict  # subject id -> weight (>= 1)

    @property
    def members(self) -> frozenset:
        return frozenset(self.weights)

    def __len__(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class RTResult:
    t: int
    cohort: tuple  # subject ids holding >= t attributes
    r: int  # minimum subject-space size over the cohort


@dataclass(frozen=True)
class AnonymityScore:
    value: float  # bits, >= 0


def subject_space(
    credential: frozenset, registry: Registry, history: Optional[History] = None
) -> SubjectSpace:
    """Build the subject space for a credential (trusted path, no signature check)."""
    generators = frozenset(registry.generators(credential))
    usage = history.usage_counts(credential) if history is not None else {}
    weights = {sid: 1 for sid in generators}
    for sid, count in usage.items():
        weights[sid] = weights.get(sid, 0) + count
    if not weights:
        raise InvalidSubjectSpaceError("credential matches no subject and no history")
    return SubjectSpace(
        credential=credential,
        generators=generators,
        historical_users=frozenset(usage),
        weights=weights,
    )


def build_subject_space(
    sc: SignedCredential, registry: Registry, history: Optional[History] = None
) -> SubjectSpace:
    """Verify the credential signature, then construct its subject space."""
    if not verify_credential(sc.signer_pk, sc):
        raise ForgedCredentialError("credential signature does not verify")
    return subject_space(sc.credential, registry, history)


def request_entropy(space: SubjectSpace) -> float:
    """Shannon entropy (bits) of the usage-weighted guess over the space.

    Exactly 0.0 for a singleton space: the credential is an implicit
    identifier.
    """
    weights = space.weights
    if len(weights) == 1:
        return 0.0
    total = 0
    for w in weights.values():
        total += w
    h = 0.0
    log2 = math.log2
    for w in weights.values():
        p = w / total
        h -= p * log2(p)
    return h


def rt_anonymity(
    registry: Registry, t: int, history: Optional[History] = None
) -> RTResult:
    """Worst-case anonymity over subjects holding at least t attributes.

    Each cohort member's subject space uses its full pair set as the
    credential; r is the smallest such space.
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    cohort = [sid for sid, rec in registry.subjects.items() if len(rec.pairs) >= t]
    if not cohort:
        raise EmptyCohortError(f"no subject holds {t} or more attributes")
    r = min(
        len(subject_space(registry.subjects[sid].pair_set, registry, history))
        for sid in cohort
    )
    return RTResult(t=t, cohort=tuple(sorted(cohort)), r=r)


def subject_anonymity(
    subject_id: str, registry: Registry, history: Optional[History] = None
) -> AnonymityScore:
    """Aggregate a subject's anonymity across credential-size thresholds.

    For each t up to the subject's attribute count, cohort members' request
    entropies are averaged weighted by their share of the cohort's total
    subject-space mass, and the per-t contributions are summed.
    """
    rec = registry.subject(subject_id)
    spaces: dict = {}

    def space_of(sid: str) -> SubjectSpace:
        sp = spaces.get(sid)
        if sp is None:
            sp = subject_space(registry.subjects[sid].pair_set, registry, history)
            spaces[sid] = sp
        return sp

    score = 0.0
    for t in range(1, len(rec.pairs) + 1):
        cohort = [sid for sid, r2 in registry.subjects.items() if len(r2.pairs) >= t]
        total = sum(len(space_of(sid)) for sid in cohort)
        for sid in cohort:
            sp = space_of(sid)
            score += request_entropy(sp) * len(sp) / total
    return AnonymityScore(value=score)


class PopulationAnonymity:
    """Shared per-population cache for report-scale anonymity sweeps.

    Produces the same numbers as the per-call functions above, but computes
    each subject's full-credential space once and reuses per-threshold
    cohort aggregates across all subjects.
    """

    def __init__(self, registry: Registry, history: Optional[History] = None):
        self.registry = registry
        self.history = history
        self.sizes: dict = {}
        self.entropies: dict = {}
        for sid, rec in registry.subjects.items():
            sp = subject_space(rec.pair_set, registry, history)
            self.sizes[sid] = len(sp)
            self.entropies[sid] = request_entropy(sp)
        self.max_attrs = max(
            (len(r.pairs) for r in registry.subjects.values()), default=0
        )
        # per-threshold cohort aggregates, index t-1
        self._cohorts: list = []
        self._totals: list = []
        self._mass: list = []  # sum of entropy * size over the cohort
        self._mins: list = []
        for t in range(1, self.max_attrs + 1):
            cohort = [
                sid
                for sid, rec in registry.subjects.items()
                if len(rec.pairs) >= t
            ]
            self._cohorts.append(cohort)
            self._totals.append(sum(self.sizes[sid] for sid in cohort))
            self._mass.append(
                sum(self.entropies[sid] * self.sizes[sid] for sid in cohort)
            )
            self._mins.append(min(self.sizes[sid] for sid in cohort) if cohort else 0)

    def feasible_thresholds(self) -> range:
        return range(1, self.max_attrs + 1)

    def rt(self, t: int) -> RTResult:
        if t < 1 or t > self.max_attrs or not self._cohorts[t - 1]:
            raise EmptyCohortError(f"no subject holds {t} or more attributes")
        return RTResult(
            t=t, cohort=tuple(sorted(self._cohorts[t - 1])), r=self._mins[t - 1]
        )

    def subject_score(self, subject_id: str) -> float:
        rec = self.registry.subject(subject_id)
        score = 0.0
        for t in range(1, len(rec.pairs) + 1):
            total = self._totals[t - 1]
            if total:
                score += self._mass[t - 1] / total
        return score

    def all_scores(self) -> dict:
        return {sid: self.subject_score(sid) for sid in self.registry.subjects}
