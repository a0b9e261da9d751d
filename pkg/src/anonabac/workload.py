"""Seeded synthetic workloads: populations, policies, and request streams.

Fifteen named test cases sweep subject count, object count, request volume,
policy count, value range, and per-entity attribute counts; a scale factor
shrinks any case to desk size while lower guards keep the pieces non-trivial.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import random
from dataclasses import dataclass, field
from typing import Optional

from .credential_crypto import keygen, sign_credential
from .errors import WorkloadError
from .model import (
    AccessRequest,
    AttributeDef,
    AttributeSpace,
    AVPair,
    PolicyRule,
    Registry,
    request_from_json,
    request_to_json,
)

OPERATIONS = ("read", "write")

MIN_SUBJECTS = 10
MIN_OBJECTS = 10
MIN_POLICIES = 5
MIN_REQUESTS = 100

MANIFEST_VERSION = 1


@dataclass(frozen=True)
class CaseSpec:
    name: str
    n_subjects: int
    n_objects: int
    n_requests: int
    n_policies: int
    value_range: int
    n_subject_attrs: int
    n_object_attrs: int

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "n_subjects": self.n_subjects,
            "n_objects": self.n_objects,
            "n_requests": self.n_requests,
            "n_policies": self.n_policies,
            "value_range": self.value_range,
            "n_subject_attrs": self.n_subject_attrs,
            "n_object_attrs": self.n_object_attrs,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "CaseSpec":
        return cls(**doc)


def _case(name, subjects, objects, requests, policies, value_range, sub_attrs, obj_attrs):
    return CaseSpec(name, subjects, objects, requests, policies, value_range, sub_attrs, obj_attrs)


CASE_TABLE = {
    spec.name: spec
    for spec in (
        _case("C1", 5_000, 10_000, 1_000_000, 100, 4, 4, 2),
        _case("C2", 10_000, 10_000, 1_000_000, 100, 4, 4, 2),
        _case("C3", 15_000, 10_000, 1_000_000, 100, 4, 4, 2),
        _case("C4", 10_000, 5_000, 1_000_000, 100, 4, 4, 2),
        _case("C5", 10_000, 15_000, 1_000_000, 100, 4, 4, 2),
        _case("C6", 10_000, 10_000, 500_000, 100, 4, 4, 2),
        _case("C7", 10_000, 10_000, 1_500_000, 100, 4, 4, 2),
        _case("C8", 10_000, 10_000, 1_000_000, 50, 4, 4, 2),
        _case("C9", 10_000, 10_000, 1_000_000, 150, 4, 4, 2),
        _case("C10", 10_000, 10_000, 1_000_000, 100, 2, 4, 2),
        _case("C11", 10_000, 10_000, 1_000_000, 100, 6, 4, 2),
        _case("C12", 15_000, 10_000, 1_000_000, 100, 4, 5, 2),
        _case("C13", 15_000, 10_000, 1_000_000, 100, 4, 3, 2),
        _case("C14", 10_000, 10_000, 1_000_000, 100, 2, 4, 4),
        _case("C15", 10_000, 10_000, 1_000_000, 100, 2, 4, 3),
    )
}

#: the seven sweep groups; a case can appear in more than one sweep
FACTOR_GROUPS = {
    "subject_quantity": ("C1", "C2", "C3"),
    "object_quantity": ("C2", "C4", "C5"),
    "request_quantity": ("C2", "C6", "C7"),
    "policy_quantity": ("C2", "C8", "C9"),
    "value_range": ("C2", "C10", "C11"),
    "subject_attr_quantity": ("C3", "C12", "C13"),
    "object_attr_quantity": ("C10", "C14", "C15"),
}


def case_spec(name: str) -> CaseSpec:
    try:
        return CASE_TABLE[name]
    except KeyError:
        raise WorkloadError(f"unknown test case {name!r}") from None


def scaled_counts(spec: CaseSpec, scale: float) -> dict:
    if not 0 < scale <= 1:
        raise WorkloadError(f"scale must be in (0, 1], got {scale}")
    return {
        "subjects": max(MIN_SUBJECTS, round(spec.n_subjects * scale)),
        "objects": max(MIN_OBJECTS, round(spec.n_objects * scale)),
        "requests": max(MIN_REQUESTS, round(spec.n_requests * scale)),
        "policies": max(MIN_POLICIES, round(spec.n_policies * scale)),
    }


@dataclass
class Workload:
    spec: CaseSpec
    seed: int
    scale: float
    target_match_rate: float
    space: AttributeSpace
    subjects: list  # (id, pairs dict, pk bytes)
    objects: list  # (id, pairs dict)
    policies: list  # PolicyRule
    requests: list  # AccessRequest, seq 1..n, true_subject set
    counts: dict = field(default_factory=dict)

    def build_registry(self) -> Registry:
        registry = Registry(self.space)
        for sid, pairs, pk in self.subjects:
            registry.register_subject(pairs, pk, sid)
        for oid, pairs in self.objects:
            registry.register_object(pairs, oid)
        return registry


def _build_space(spec: CaseSpec) -> AttributeSpace:
    """Identity-first initial weights: subject attributes ahead of object
    attributes ahead of the operation, the way handwritten rule sets are
    usually organized. The dynamic variant reorders from observed traffic."""
    defs = []
    for i in range(spec.n_subject_attrs):
        defs.append(
            AttributeDef(
                name=f"sa_{i}",
                cls="subject",
                initial_weight=2.0,
                domain=tuple(f"v{j}" for j in range(spec.value_range)),
            )
        )
    for i in range(spec.n_object_attrs):
        defs.append(
            AttributeDef(
                name=f"oa_{i}",
                cls="object",
                initial_weight=1.5,
                domain=tuple(f"v{j}" for j in range(spec.value_range)),
            )
        )
    defs.append(
        AttributeDef(name="op", cls="operation", initial_weight=1.0, domain=OPERATIONS)
    )
    return AttributeSpace(defs)


def _subject_seed(seed: int, index: int) -> bytes:
    return hashlib.sha256(f"{seed}:subject:{index}".encode()).digest()


def generate(
    spec: CaseSpec,
    seed: int,
    scale: float = 1.0,
    target_match_rate: float = 0.5,
    credential_sizes: str | int = "uniform",
) -> Workload:
    """Generate a deterministic workload for a case at the given scale.

    Each request draws a uniform subject, a credential of uniform size over
    the subject's attributes (or a fixed size when ``credential_sizes`` is an
    int), a uniform object and operation, and no environment pairs. Half the
    policies (rounded up) are seeded from realized request credentials
    extended with object/op constraints so the rule set is satisfiable; rule
    selection steers the stream's subset-match rate toward the target. The
    other half are uniform draws over the value space.
    """
    counts = scaled_counts(spec, scale)
    space = _build_space(spec)
    rng = random.Random(seed)

    subject_attrs = [d.name for d in space.by_class("subject")]
    object_attrs = [d.name for d in space.by_class("object")]
    domains = {d.name: d.domain for d in space.defs.values()}

    subjects = []
    for i in range(counts["subjects"]):
        pairs = {a: rng.choice(domains[a]) for a in subject_attrs}
        pk = keygen(_subject_seed(seed, i)).pk
        subjects.append((f"s{i:06d}", pairs, pk))

    objects = []
    for i in range(counts["objects"]):
        pairs = {a: rng.choice(domains[a]) for a in object_attrs}
        objects.append((f"o{i:06d}", pairs))
    object_pair_tuples = [
        tuple(AVPair(a, v) for a, v in pairs.items()) for _, pairs in objects
    ]

    sk_cache = {
        f"s{i:06d}": _subject_seed(seed, i) for i in range(counts["subjects"])
    }
    sig_cache: dict = {}
    requests = []
    # (credential frozenset, object index, op) per request, reused for policy seeding
    shapes = []
    for j in range(counts["requests"]):
        si = rng.randrange(len(subjects))
        sid, pairs, _pk = subjects[si]
        names = list(pairs)
        if credential_sizes == "uniform":
            size = rng.randint(1, len(names))
        else:
            size = max(1, min(int(credential_sizes), len(names)))
        chosen = rng.sample(names, size)
        cred = frozenset(AVPair(a, pairs[a]) for a in chosen)
        key = (sid, cred)
        sc = sig_cache.get(key)
        if sc is None:
            sc = sign_credential(sk_cache[sid], cred)
            sig_cache[key] = sc
        oi = rng.randrange(len(objects))
        op = rng.choice(OPERATIONS)
        requests.append(
            AccessRequest(
                signed_credential=sc,
                object_id=objects[oi][0],
                op=op,
                env=(),
                seq=j + 1,
                true_subject=sid,
            )
        )
        shapes.append((cred, oi, op))

    policies = _generate_policies(
        rng,
        counts["policies"],
        shapes,
        object_pair_tuples,
        domains,
        subject_attrs,
        object_attrs,
        target_match_rate,
    )

    return Workload(
        spec=spec,
        seed=seed,
        scale=scale,
        target_match_rate=target_match_rate,
        space=space,
        subjects=subjects,
        objects=objects,
        policies=policies,
        requests=requests,
        counts=counts,
    )


def _generate_policies(
    rng: random.Random,
    n_policies: int,
    shapes: list,
    object_pair_tuples: list,
    domains: dict,
    subject_attrs: list,
    object_attrs: list,
    target: float,
) -> list:
    n_seeded = math.ceil(n_policies / 2)

    # sample of realized request pair sets for steering the match rate
    stride = max(1, len(shapes) // 800)
    sample = []
    for cred, oi, op in shapes[::stride][:800]:
        sample.append(frozenset(cred) | set(object_pair_tuples[oi]) | {AVPair("op", op)})

    def candidate() -> frozenset:
        cred, oi, op = shapes[rng.randrange(len(shapes))]
        constraints = set(cred)
        if rng.random() < 0.5:
            constraints.add(AVPair("op", op))
        for pair in object_pair_tuples[oi]:
            if rng.random() < 0.25:
                constraints.add(pair)
        return frozenset(constraints)

    covered = [False] * len(sample)
    seeded: list = []
    for slot in range(n_seeded):
        desired = target * (slot + 1) / n_seeded
        best = None
        best_score = None
        best_hits = None
        for _ in range(24):
            cand = candidate()
            hits = [cov or cand <= pairs for cov, pairs in zip(covered, sample)]
            score = abs(sum(hits) / max(1, len(sample)) - desired)
            if best_score is None or score < best_score:
                best, best_score, best_hits = cand, score, hits
        seeded.append(best)
        covered = best_hits

    uniform: list = []
    all_attrs = subject_attrs + object_attrs + ["op"]
    for _ in range(n_policies - n_seeded):
        size = rng.randint(1, len(all_attrs))
        attrs = rng.sample(all_attrs, size)
        uniform.append(frozenset(AVPair(a, rng.choice(domains[a])) for a in attrs))

    constraint_sets = seeded + uniform
    rng.shuffle(constraint_sets)
    width = len(str(max(0, n_policies - 1)))
    return [
        PolicyRule(id=f"p{idx:0{width}d}", constraints=cs)
        for idx, cs in enumerate(constraint_sets)
    ]


# ---------------------------------------------------------------------------
# Workload directory layout
# ---------------------------------------------------------------------------


def save_workload(workload: Workload, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "space.json"), "w", encoding="utf-8") as fh:
        json.dump(workload.space.to_document(), fh, indent=1)
    with open(os.path.join(out_dir, "population.jsonl"), "w", encoding="utf-8") as fh:
        import base64

        for sid, pairs, pk in workload.subjects:
            doc = {
                "kind": "subject",
                "id": sid,
                "pairs": pairs,
                "pk": base64.b64encode(pk).decode("ascii"),
            }
            fh.write(json.dumps(doc) + "\n")
        for oid, pairs in workload.objects:
            fh.write(json.dumps({"kind": "object", "id": oid, "pairs": pairs}) + "\n")
    with open(os.path.join(out_dir, "policies.json"), "w", encoding="utf-8") as fh:
        json.dump(
            [
                {"id": r.id, "attrs": {p.attr: p.value for p in r.constraints}}
                for r in workload.policies
            ],
            fh,
            indent=1,
        )
    with open(os.path.join(out_dir, "requests.jsonl"), "w", encoding="utf-8") as fh:
        for req in workload.requests:
            fh.write(json.dumps(request_to_json(req)) + "\n")
    manifest = {
        "version": MANIFEST_VERSION,
        "case": workload.spec.to_json(),
        "seed": workload.seed,
        "scale": workload.scale,
        "target_match_rate": workload.target_match_rate,
        "realized": dict(workload.counts),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)


def load_workload(in_dir: str) -> Workload:
    import base64

    with open(os.path.join(in_dir, "manifest.json"), "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("version") != MANIFEST_VERSION:
        raise WorkloadError(f"unsupported workload manifest version {manifest.get('version')!r}")
    with open(os.path.join(in_dir, "space.json"), "r", encoding="utf-8") as fh:
        space = AttributeSpace.from_document(json.load(fh))
    subjects, objects = [], []
    with open(os.path.join(in_dir, "population.jsonl"), "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            doc = json.loads(line)
            if doc["kind"] == "subject":
                subjects.append((doc["id"], doc["pairs"], base64.b64decode(doc["pk"])))
            else:
                objects.append((doc["id"], doc["pairs"]))
    with open(os.path.join(in_dir, "policies.json"), "r", encoding="utf-8") as fh:
        policies = [
            PolicyRule(
                id=doc["id"],
                constraints=frozenset(AVPair(a, v) for a, v in doc["attrs"].items()),
            )
            for doc in json.load(fh)
        ]
    requests = []
    with open(os.path.join(in_dir, "requests.jsonl"), "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                requests.append(request_from_json(json.loads(line)))
    return Workload(
        spec=CaseSpec.from_json(manifest["case"]),
        seed=manifest["seed"],
        scale=manifest["scale"],
        target_match_rate=manifest["target_match_rate"],
        space=space,
        subjects=subjects,
        objects=objects,
        policies=policies,
        requests=requests,
        counts=dict(manifest["realized"]),
    )
