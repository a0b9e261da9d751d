"""Weight-ordered policy path tree and the three-step authorization pipeline.

Policy rules are stored as root-to-leaf paths with constraints ordered by
descending attribute weight, so matching a request is bounded by its own
attribute count instead of the policy count. A counted linear scan over the
flat rule list serves both as the correctness oracle for tree matching and
as the non-indexed comparator variant.

Comparison counting follows a sibling-scan model: locating a key among a
node's children costs one equality test per child inspected, in insertion
order. The implementation uses hashed child lookup and derives the count
from the child's insertion position.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from . import anonymity
from .credential_crypto import SignedCredential, verify_credential
from .errors import (
    BenchError,
    InvalidSubjectSpaceError,
    RegistryError,
)
from .model import AccessRequest, AVPair, History, HistoryRecord, PolicyRule, Registry
from .optimizer import (
    DEFAULT_POOL_CAPACITY,
    AAHPool,
    DecisionRecord,
    WeightList,
    compute_weights,
)

ROOT_KEY = AVPair("\x00root", "")

GRANT = "GRANT"
DENY = "DENY"

REASON_GRANTED = "granted"
REASON_BAD_SIGNATURE = "bad-signature"
REASON_LOW_ANONYMITY = "low-anonymity"
REASON_NO_PATH = "no-path"
REASON_INCOMPLETE_PATH = "incomplete-path"


class PathNode:
    __slots__ = ("key", "children", "child_list", "is_leaf", "rule_ids", "pos")

    def __init__(self, key: AVPair, pos: int = 0):
        self.key = key
        self.children: dict = {}
        self.child_list: list = []
        self.is_leaf = False
        self.rule_ids: set = set()
        self.pos = pos


@dataclass
class EWPT:
    root: PathNode
    weight_version: int = 0

    def leaf_count(self) -> int:
        count = 0
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                count += 1
            stack.extend(node.child_list)
        return count


def sort_constraints(constraints: Iterable[AVPair], ranks: dict) -> list:
    try:
        return sorted(constraints, key=lambda p: ranks[p.attr])
    except KeyError as exc:
        raise RegistryError(f"attribute {exc} missing from the weight list") from None


def build_tree(policies: Iterable[PolicyRule], weights: WeightList) -> EWPT:
    """Insert each rule as a weight-ordered path; terminal nodes mark rule ids.

    Rules are inserted in ascending id order so child positions, and hence
    comparison counts, are reproducible.
    """
    ranks = weights.ranks()
    root = PathNode(ROOT_KEY)
    for rule in sorted(policies, key=lambda r: r.id):
        node = root
        for pair in sort_constraints(rule.constraints, ranks):
            child = node.children.get(pair)
            if child is None:
                child = PathNode(pair, pos=len(node.child_list))
                node.children[pair] = child
                node.child_list.append(child)
            node = child
        node.is_leaf = True
        node.rule_ids.add(rule.id)
    return EWPT(root=root, weight_version=weights.version)


def sort_request_attributes(
    req: AccessRequest, registry: Registry, weights: WeightList
) -> tuple:
    """Collect credential, object, operation, and environment pairs, ordered
    by descending weight."""
    obj = registry.objects.get(req.object_id)
    if obj is None:
        raise RegistryError(f"unresolvable object {req.object_id!r}")
    op_attr = registry.space.operation_attribute().name
    pairs = (
        tuple(req.signed_credential.credential)
        + obj.pair_tuple
        + (AVPair(op_attr, req.op),)
        + tuple(req.env)
    )
    ranks = weights.ranks()
    return tuple(sorted(pairs, key=lambda p: ranks[p.attr]))


def _walk_strict(tree: EWPT, seq: Sequence) -> tuple:
    """(status, comparisons): consume every element of seq in order."""
    node = tree.root
    comparisons = 0
    for pair in seq:
        child = node.children.get(pair)
        if child is None:
            comparisons += len(node.child_list)
            return REASON_NO_PATH, comparisons
        comparisons += child.pos + 1
        node = child
    if node.is_leaf:
        return REASON_GRANTED, comparisons
    return REASON_INCOMPLETE_PATH, comparisons


def match_strict(tree: EWPT, seq: Sequence) -> tuple:
    status, comparisons = _walk_strict(tree, seq)
    return status == REASON_GRANTED, comparisons


def match_subset(tree: EWPT, seq: Sequence) -> tuple:
    """Depth-first match allowing request attributes a rule does not constrain.

    Memoized on (node, position) so the work stays bounded by node count
    times sequence length.
    """
    comparisons = 0
    n = len(seq)
    memo: dict = {}

    def walk(node: PathNode, pos: int) -> bool:
        nonlocal comparisons
        if node.is_leaf:
            return True
        key = (id(node), pos)
        cached = memo.get(key)
        if cached is not None:
            return cached
        found = False
        for child in node.child_list:
            target = child.key
            j = pos
            while j < n:
                comparisons += 1
                if seq[j] == target:
                    if walk(child, j + 1):
                        found = True
                    break
                j += 1
            if found:
                break
        memo[key] = found
        return found

    return walk(tree.root, 0), comparisons


def _match_subset_indexed(tree: EWPT, seq: Sequence, positions: dict) -> tuple:
    """Same traversal and comparison counts as :func:`match_subset`, with
    each child located through a pair -> index map instead of rescanning.
    Requires seq entries to be unique, which holds for request sequences
    (at most one pair per attribute)."""
    comparisons = 0
    n = len(seq)
    memo: dict = {}

    def walk(node: PathNode, pos: int) -> bool:
        nonlocal comparisons
        if node.is_leaf:
            return True
        key = (id(node), pos)
        cached = memo.get(key)
        if cached is not None:
            return cached
        found = False
        for child in node.child_list:
            j = positions.get(child.key, -1)
            if j < pos:
                comparisons += n - pos  # full scan of the tail, no hit
                continue
            comparisons += j - pos + 1
            if walk(child, j + 1):
                found = True
                break
        memo[key] = found
        return found

    return walk(tree.root, 0), comparisons


def linear_scan(policies: Iterable[PolicyRule], req_pairs, semantics: str = "subset") -> bool:
    """Flat-rule oracle: subset (any rule's constraints within the request)
    or exact (some rule's constraints equal the request pair set)."""
    pairs = frozenset(req_pairs)
    if semantics == "subset":
        return any(rule.constraints <= pairs for rule in policies)
    if semantics == "exact":
        return any(rule.constraints == pairs for rule in policies)
    raise ValueError(f"unknown semantics {semantics!r}")


def _linear_match_counted(rule_constraints: list, pairs: Sequence, semantics: str) -> tuple:
    """Non-indexed comparator: every constraint is located by scanning the
    request's pair list, one equality test per pair inspected."""
    n_pairs = len(pairs)
    comparisons = 0
    exact = semantics == "exact"
    for constraints in rule_constraints:
        satisfied = True
        for constraint in constraints:
            hit = False
            for pair in pairs:
                comparisons += 1
                if pair == constraint:
                    hit = True
                    break
            if not hit:
                satisfied = False
                break
        if satisfied and (not exact or len(constraints) == n_pairs):
            return True, comparisons
    return False, comparisons


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------


@dataclass
class EngineConfig:
    threshold: float = 1.0  # anonymity floor, bits
    mode: str = "strict"  # "strict" | "subset"
    update_interval: int = 1000
    pool_capacity: int = DEFAULT_POOL_CAPACITY
    weight_mode: str = "normalized"  # "normalized" | "raw"

    def __post_init__(self) -> None:
        if self.threshold < 0:
            raise ValueError("threshold must be >= 0")
        if self.mode not in ("strict", "subset"):
            raise ValueError(f"unknown matching mode {self.mode!r}")
        if self.update_interval < 1:
            raise ValueError("update interval must be >= 1")


@dataclass(slots=True)
class Decision:
    outcome: str
    reason: str
    comparisons: int
    entropy: float

    def to_json(self, seq: int, variant: str) -> dict:
        return {
            "seq": seq,
            "outcome": self.outcome,
            "reason": self.reason,
            "entropy": self.entropy,
            "comparisons": self.comparisons,
            "variant": variant,
        }


@dataclass
class EngineSnapshot:
    tree: Optional[EWPT]
    weights: WeightList
    ranks: dict
    attr_order: tuple  # attribute names in descending-weight order
    registry: Registry
    history: History
    config: EngineConfig
    # unpacked for the evaluation hot path
    threshold: float = 0.0
    strict: bool = True

    def __post_init__(self) -> None:
        self.threshold = self.config.threshold
        self.strict = self.config.mode == "strict"


VARIANTS = ("full", "static", "linear")


class Engine:
    """Authorization engine over a registry, a policy set, and a live ledger.

    Variants share the identical verification and anonymity stages and the
    identical recording path; they differ only in how the matching step is
    executed and whether weights are ever recomputed:

    - ``full``: tree matching, weights and tree rebuilt every K decisions
    - ``static``: tree matching with the initial weights, never rebuilt
    - ``linear``: no tree; counted scan of the flat rule list per request

    Signature checks and per-credential entropies are memoized on first
    evaluation. Entropy is evaluated against the registry and ledger state
    at first sight of the credential, which keeps replay decisions
    deterministic and identical across variants.

    Writes (recording, rebuilds) are serialized by an internal lock; the
    published snapshot is swapped atomically, so concurrent readers see
    either the old or the new (tree, weights) pair, never a mix.
    """

    def __init__(
        self,
        registry: Registry,
        policies: Iterable[PolicyRule],
        config: Optional[EngineConfig] = None,
        variant: str = "full",
        history: Optional[History] = None,
    ):
        if variant not in VARIANTS:
            raise BenchError(f"unknown engine variant {variant!r}")
        self.registry = registry
        self.policies = sorted(policies, key=lambda r: r.id)
        self.config = config or EngineConfig()
        self.variant = variant
        self.history = history if history is not None else History()
        self.pool = AAHPool(self.config.pool_capacity)
        self.decisions = 0
        self.rebuilds = 0
        self._last_rebuild_at = 0
        self._lock = threading.Lock()
        self._op_attr = registry.space.operation_attribute().name
        # id(signed credential) -> (sc, signature ok, entropy); the entry
        # keeps the credential object alive so ids are never recycled
        self._admission: dict = {}
        self._cred_tuples: dict = {}
        self._rule_constraints = [
            tuple(sorted(rule.constraints)) for rule in self.policies
        ]
        weights = WeightList.from_pairs(
            ((d.name, d.initial_weight) for d in registry.space.defs.values()),
            version=0,
        )
        tree = None if variant == "linear" else build_tree(self.policies, weights)
        self.snapshot = EngineSnapshot(
            tree=tree,
            weights=weights,
            ranks=weights.ranks(),
            attr_order=tuple(weights.names()),
            registry=registry,
            history=self.history,
            config=self.config,
        )

    # -- pipeline -----------------------------------------------------------

    def authorize(self, req: AccessRequest) -> Decision:
        """Pure decision against the current snapshot; records nothing."""
        return self._evaluate(req, self.snapshot)

    def decide(self, req: AccessRequest) -> Decision:
        """Authorize, then record the outcome to the ledger and the pool."""
        decision = self._evaluate(req, self.snapshot)
        self.record(req, decision)
        return decision

    def admit(self, requests: Iterable) -> None:
        """Parse-time admission of a request stream.

        Assembles each request's attribute tuple and pre-verifies and scores
        its credential, in stream order, so that replay evaluation runs
        against warm memos. Values are identical to what lazy evaluation
        would compute, so admission never changes a decision.
        """
        requests = list(requests)
        for req in requests:
            self._attach_pairs(req)
        self.prime_caches(requests)

    def _attach_pairs(self, req: AccessRequest) -> Optional[tuple]:
        obj = self.registry.objects.get(req.object_id)
        if obj is None:
            return None
        pairs = (
            self._credential_tuple(req.signed_credential.credential)
            + obj.pair_tuple
            + (AVPair(self._op_attr, req.op),)
            + tuple(req.env)
        )
        req.pairs = pairs
        req.pair_index = {pair.attr: pair for pair in pairs}
        return pairs

    def _score(self, sc: SignedCredential) -> tuple:
        """Verify a credential and, only if authentic, score its anonymity
        against the live registry and ledger. Memoized per credential object."""
        ok = verify_credential(sc.signer_pk, sc) and sc.signer_pk in self.registry.by_pk
        entropy = self._credential_entropy(sc.credential) if ok else 0.0
        entry = (sc, ok, entropy)
        self._admission[id(sc)] = entry
        return entry

    def _evaluate(self, req: AccessRequest, snap: EngineSnapshot) -> Decision:
        admission = req.admission
        if admission is None:
            sc = req.signed_credential
            entry = self._admission.get(id(sc))
            if entry is None:
                entry = self._score(sc)
            admission = (entry[1], entry[2])
        if not admission[0]:
            return Decision(DENY, REASON_BAD_SIGNATURE, 0, 0.0)
        entropy = admission[1]
        if entropy < snap.threshold or entropy < 0.0:
            return Decision(DENY, REASON_LOW_ANONYMITY, 0, entropy if entropy > 0.0 else 0.0)

        if self.variant == "linear":
            # non-indexed comparator: re-derive the attribute list per request
            obj = self.registry.objects.get(req.object_id)
            if obj is None:
                return Decision(DENY, REASON_NO_PATH, 0, entropy)
            pairs = (
                tuple(sorted(req.signed_credential.credential))
                + obj.pair_tuple
                + (AVPair(self._op_attr, req.op),)
                + tuple(req.env)
            )
            semantics = "exact" if snap.config.mode == "strict" else "subset"
            matched, comparisons = _linear_match_counted(
                self._rule_constraints, pairs, semantics
            )
            return Decision(
                GRANT if matched else DENY,
                REASON_GRANTED if matched else REASON_NO_PATH,
                comparisons,
                entropy,
            )

        index = req.pair_index
        if index is None:
            if self._attach_pairs(req) is None:
                return Decision(DENY, REASON_NO_PATH, 0, entropy)
            index = req.pair_index
        if snap.strict:
            # walk in weight order straight off the attribute index; this is
            # the sorted-sequence descent without materializing the sequence
            node = snap.tree.root
            comparisons = 0
            get_pair = index.get
            for attr in snap.attr_order:
                pair = get_pair(attr)
                if pair is None:
                    continue
                child = node.children.get(pair)
                if child is None:
                    return Decision(
                        DENY, REASON_NO_PATH, comparisons + len(node.child_list), entropy
                    )
                comparisons += child.pos + 1
                node = child
            if node.is_leaf:
                return Decision(GRANT, REASON_GRANTED, comparisons, entropy)
            return Decision(DENY, REASON_INCOMPLETE_PATH, comparisons, entropy)

        seq = []
        positions = {}
        for attr in snap.attr_order:
            pair = index.get(attr)
            if pair is not None:
                positions[pair] = len(seq)
                seq.append(pair)
        matched, comparisons = _match_subset_indexed(snap.tree, seq, positions)
        reason = REASON_GRANTED if matched else REASON_NO_PATH
        return Decision(GRANT if matched else DENY, reason, comparisons, entropy)

    def _credential_entropy(self, cred: frozenset) -> float:
        try:
            space = anonymity.subject_space(cred, self.registry, self.history)
        except InvalidSubjectSpaceError:
            return -1.0  # empty space: fails any anonymity floor
        return anonymity.request_entropy(space)

    def prime_caches(self, requests: Iterable) -> None:
        """Pre-fill the admission memo in stream order.

        Each credential is verified and scored as if evaluated at its first
        occurrence with every earlier request already ledgered, so replaying
        the stream afterwards (serially or in parallel chunks) yields the
        same decisions as fully lazy evaluation.
        """
        usage: dict = {}
        for req in requests:
            sc = req.signed_credential
            entry = self._admission.get(id(sc))
            if entry is None:
                ok = (
                    verify_credential(sc.signer_pk, sc)
                    and sc.signer_pk in self.registry.by_pk
                )
                entropy = 0.0
                if ok:
                    cred = sc.credential
                    weights = {sid: 1 for sid in self.registry.generators(cred)}
                    for sid, count in self.history.usage_counts(cred).items():
                        weights[sid] = weights.get(sid, 0) + count
                    for sid, count in usage.get(cred, {}).items():
                        weights[sid] = weights.get(sid, 0) + count
                    if not weights:
                        entropy = -1.0
                    else:
                        space = anonymity.SubjectSpace(
                            credential=cred,
                            generators=frozenset(),
                            historical_users=frozenset(),
                            weights=weights,
                        )
                        entropy = anonymity.request_entropy(space)
                entry = (sc, ok, entropy)
                self._admission[id(sc)] = entry
            req.admission = (entry[1], entry[2])
            bucket = usage.setdefault(sc.credential, {})
            sid = req.true_subject or ""
            bucket[sid] = bucket.get(sid, 0) + 1

    def _credential_tuple(self, cred: frozenset) -> tuple:
        cached = self._cred_tuples.get(cred)
        if cached is None:
            cached = tuple(sorted(cred))
            self._cred_tuples[cred] = cached
        return cached

    def record(self, req: AccessRequest, decision: Decision) -> None:
        """Append the decided request to the ledger and the decision pool,
        then run the periodic rebuild check. Serialized by the writer lock."""
        with self._lock:
            pairs = req.pairs
            if pairs is None:
                pairs = self._attach_pairs(req)
            if pairs is None:  # unresolvable object: record what the request carried
                pairs = (
                    self._credential_tuple(req.signed_credential.credential)
                    + (AVPair(self._op_attr, req.op),)
                    + tuple(req.env)
                )
            self.history.append(
                HistoryRecord(
                    request=req,
                    true_subject=req.true_subject or "",
                    outcome=decision.outcome,
                    reason=decision.reason,
                    entropy=decision.entropy,
                    seq=req.seq,
                )
            )
            self.pool.record(
                DecisionRecord(pairs=pairs, granted=decision.outcome == GRANT, seq=req.seq)
            )
            self.decisions += 1
            self._maybe_rebuild_locked()

    def _maybe_rebuild_locked(self) -> Optional[EngineSnapshot]:
        if self.variant != "full":
            return None
        if self.decisions - self._last_rebuild_at < self.config.update_interval:
            return None
        self._last_rebuild_at = self.decisions
        self._rebuild()
        return self.snapshot

    def _rebuild(self) -> None:
        version = self.snapshot.weights.version + 1
        weights = compute_weights(
            self.registry.space,
            self.pool,
            self.registry,
            mode=self.config.weight_mode,
            history=self.history,
            version=version,
        )
        tree = build_tree(self.policies, weights)
        self.rebuilds += 1
        # single assignment: readers observe the old or the new snapshot
        self.snapshot = EngineSnapshot(
            tree=tree,
            weights=weights,
            ranks=weights.ranks(),
            attr_order=tuple(weights.names()),
            registry=self.registry,
            history=self.history,
            config=self.config,
        )


def maybe_rebuild(engine: Engine) -> Optional[EngineSnapshot]:
    """Run the periodic rebuild check; returns the new snapshot if one was
    published. Idempotent between decisions."""
    with engine._lock:
        return engine._maybe_rebuild_locked()
