"""Domain model: attribute space, subject/object registries, and the decision ledger.

The ledger is a simulated append-only store: records are kept in memory,
indexed by credential, and can be persisted to line-delimited JSON.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, NamedTuple, Optional, Sequence

from .errors import HistoryError, RegistryError, SpaceError, StateError

ATTRIBUTE_CLASSES = ("subject", "object", "environment", "operation")

STATE_FORMAT = "anonabac-state"
STATE_VERSION = 1


class AVPair(NamedTuple):
    """A single attribute-value assignment."""

    attr: str
    value: str


Credential = frozenset  # frozenset[AVPair]


@dataclass(frozen=True)
class AttributeDef:
    name: str
    cls: str
    initial_weight: float
    domain: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.cls not in ATTRIBUTE_CLASSES:
            raise SpaceError(f"unknown attribute class {self.cls!r} for {self.name!r}")
        if not self.domain:
            raise SpaceError(f"attribute {self.name!r} has an empty domain")
        if self.initial_weight < 0:
            raise SpaceError(f"attribute {self.name!r} has a negative initial weight")


class AttributeSpace:
    """The full set of attribute definitions, keyed by unique name."""

    def __init__(self, defs: Iterable[AttributeDef]):
        self.defs: dict[str, AttributeDef] = {}
        for d in defs:
            if d.name in self.defs:
                raise SpaceError(f"duplicate attribute name {d.name!r}")
            self.defs[d.name] = d

    def __len__(self) -> int:
        return len(self.defs)

    def __contains__(self, name: str) -> bool:
        return name in self.defs

    def __getitem__(self, name: str) -> AttributeDef:
        try:
            return self.defs[name]
        except KeyError:
            raise RegistryError(f"unknown attribute {name!r}") from None

    def names(self) -> list[str]:
        return list(self.defs)

    def by_class(self, cls: str) -> list[AttributeDef]:
        return [d for d in self.defs.values() if d.cls == cls]

    def operation_attribute(self) -> AttributeDef:
        ops = self.by_class("operation")
        if len(ops) != 1:
            raise SpaceError(f"expected exactly one operation attribute, found {len(ops)}")
        return ops[0]

    def check_pair(self, attr: str, value: str, cls: Optional[str] = None) -> None:
        d = self[attr]
        if cls is not None and d.cls != cls:
            raise RegistryError(f"attribute {attr!r} is {d.cls}-class, expected {cls}")
        if value not in d.domain:
            raise RegistryError(f"value {value!r} not in domain of attribute {attr!r}")

    def to_document(self) -> dict:
        return {
            "attributes": [
                {
                    "name": d.name,
                    "class": d.cls,
                    "initial_weight": d.initial_weight,
                    "domain": list(d.domain),
                }
                for d in self.defs.values()
            ]
        }

    @classmethod
    def from_document(cls, doc: Mapping) -> "AttributeSpace":
        try:
            entries = doc["attributes"]
        except (KeyError, TypeError):
            raise SpaceError("attribute-space document must contain an 'attributes' list") from None
        defs = []
        for e in entries:
            try:
                defs.append(
                    AttributeDef(
                        name=e["name"],
                        cls=e["class"],
                        initial_weight=float(e["initial_weight"]),
                        domain=tuple(e["domain"]),
                    )
                )
            except KeyError as exc:
                raise SpaceError(f"attribute entry missing field {exc}") from None
        return cls(defs)


def load_attribute_space(path: str) -> AttributeSpace:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SpaceError(f"unparseable attribute-space document: {exc}") from None
    return AttributeSpace.from_document(doc)


# ---------------------------------------------------------------------------
# Entities
# ---------------------------------------------------------------------------


@dataclass
class SubjectRecord:
    id: str
    pairs: dict[str, str]
    pk: bytes

    @property
    def pair_set(self) -> frozenset:
        return frozenset(AVPair(a, v) for a, v in self.pairs.items())


@dataclass
class ObjectRecord:
    id: str
    pairs: dict[str, str]
    pair_tuple: tuple = ()

    def __post_init__(self) -> None:
        self.pair_tuple = tuple(AVPair(a, v) for a, v in self.pairs.items())


@dataclass(frozen=True)
class PolicyRule:
    id: str
    constraints: frozenset  # frozenset[AVPair]

    def __post_init__(self) -> None:
        if not self.constraints:
            raise RegistryError(f"rule {self.id!r} has no constraints")
        attrs = [p.attr for p in self.constraints]
        if len(attrs) != len(set(attrs)):
            raise RegistryError(f"rule {self.id!r} constrains an attribute twice")


@dataclass
class AccessRequest:
    """One authorization request.

    ``true_subject`` is simulation ground truth recorded to the ledger; the
    decision pipeline itself never reads it. ``pairs`` is the request's full
    attribute tuple, filled in once at admission (parse time) and reused by
    every evaluation of the request.
    """

    signed_credential: "SignedCredential"  # noqa: F821 (credential_crypto)
    object_id: str
    op: str
    env: tuple = ()
    seq: int = 0
    true_subject: Optional[str] = None
    pairs: Optional[tuple] = None
    pair_index: Optional[dict] = None  # attr -> AVPair, admission-filled
    admission: Optional[tuple] = None  # (signature ok, entropy), admission-filled


@dataclass
class HistoryRecord:
    request: AccessRequest
    true_subject: str
    outcome: str  # "GRANT" | "DENY"
    reason: str
    entropy: float
    seq: int


# ---------------------------------------------------------------------------
# Registries
# ---------------------------------------------------------------------------


class Registry:
    """Subject and object registries plus the subject attribute matrix view.

    Single writer: registrations are not safe to interleave concurrently.
    Readers may scan freely; records are never mutated after insertion.
    """

    def __init__(self, space: AttributeSpace):
        self.space = space
        self.subjects: dict[str, SubjectRecord] = {}
        self.objects: dict[str, ObjectRecord] = {}
        self.by_pk: dict[bytes, str] = {}
        # posting lists: pair -> ids of subjects carrying it
        self.postings: dict[AVPair, set] = {}
        self._next_subject = 0
        self._next_object = 0

    # -- subjects ----------------------------------------------------------

    def register_subject(self, pairs, pk: bytes, subject_id: Optional[str] = None) -> str:
        normalized = self._normalize_pairs(pairs, "subject")
        if subject_id is None:
            subject_id = f"s{self._next_subject:06d}"
        if subject_id in self.subjects:
            raise RegistryError(f"duplicate subject id {subject_id!r}")
        self._next_subject += 1
        rec = SubjectRecord(subject_id, normalized, pk)
        self.subjects[subject_id] = rec
        self.by_pk[pk] = subject_id
        for a, v in normalized.items():
            self.postings.setdefault(AVPair(a, v), set()).add(subject_id)
        return subject_id

    def register_object(self, pairs, object_id: Optional[str] = None) -> str:
        normalized = self._normalize_pairs(pairs, "object")
        if object_id is None:
            object_id = f"o{self._next_object:06d}"
        if object_id in self.objects:
            raise RegistryError(f"duplicate object id {object_id!r}")
        self._next_object += 1
        self.objects[object_id] = ObjectRecord(object_id, normalized)
        return object_id

    def _normalize_pairs(self, pairs, cls: str) -> dict:
        """Validate a pair mapping or iterable; reject duplicate attributes."""
        items = pairs.items() if isinstance(pairs, Mapping) else list(pairs)
        out: dict[str, str] = {}
        for a, v in items:
            if a in out:
                raise RegistryError(f"duplicate attribute {a!r} in pair set")
            self.space.check_pair(a, v, cls)
            out[a] = v
        return out

    def subject(self, subject_id: str) -> SubjectRecord:
        try:
            return self.subjects[subject_id]
        except KeyError:
            raise RegistryError(f"unknown subject {subject_id!r}") from None

    def derive_credential(self, subject_id: str, attr_names: Iterable[str]) -> frozenset:
        """Select the subject's pairs for ``attr_names`` as a credential."""
        names = list(attr_names)
        if not names:
            raise RegistryError("credential must name at least one attribute")
        rec = self.subject(subject_id)
        out = set()
        for name in names:
            if name not in rec.pairs:
                raise RegistryError(f"attribute {name!r} not assigned on subject {subject_id!r}")
            out.add(AVPair(name, rec.pairs[name]))
        return frozenset(out)

    def matrix(self) -> Iterator[tuple]:
        """Iterate the subject attribute matrix as (subject_id, attr, value)."""
        for pair, sids in self.postings.items():
            for sid in sids:
                yield (sid, pair.attr, pair.value)

    def generators(self, credential: frozenset) -> set:
        """Subjects whose assignments contain every pair of the credential."""
        it = iter(credential)
        try:
            first = next(it)
        except StopIteration:
            return set(self.subjects)
        acc = set(self.postings.get(first, ()))
        for pair in it:
            if not acc:
                break
            acc &= self.postings.get(pair, set())
        return acc


# ---------------------------------------------------------------------------
# Decision ledger
# ---------------------------------------------------------------------------


class History:
    """Append-only ledger of requests and decisions, indexed by credential.

    Appends must come from a single writer and use strictly increasing seq
    values; readers over ``records`` only ever observe fully built entries.
    """

    def __init__(self) -> None:
        self.records: list[HistoryRecord] = []
        self.last_seq = 0
        self._users: dict[frozenset, dict] = {}  # credential -> {subject: count}

    def __len__(self) -> int:
        return len(self.records)

    def append(self, record: HistoryRecord) -> None:
        if record.seq <= self.last_seq:
            raise HistoryError(
                f"non-monotone seq {record.seq} (last stored {self.last_seq})"
            )
        cred = record.request.signed_credential.credential
        counts = self._users.setdefault(cred, {})
        counts[record.true_subject] = counts.get(record.true_subject, 0) + 1
        self.last_seq = record.seq
        self.records.append(record)

    def query_by_credential(self, credential: frozenset) -> list[tuple]:
        """All (true_subject, seq) whose request carried exactly this credential."""
        out = []
        for rec in self.records:
            if rec.request.signed_credential.credential == credential:
                out.append((rec.true_subject, rec.seq))
        return out

    def usage_counts(self, credential: frozenset) -> Mapping[str, int]:
        """Per-subject use counts of a credential (index-backed, O(1))."""
        return self._users.get(credential, {})


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def _unb64(text: str) -> bytes:
    return base64.b64decode(text.encode("ascii"))


def request_to_json(req: AccessRequest) -> dict:
    sc = req.signed_credential
    return {
        "seq": req.seq,
        "subject": req.true_subject,
        "credential": {p.attr: p.value for p in sc.credential},
        "object": req.object_id,
        "op": req.op,
        "env": {p.attr: p.value for p in req.env},
        "signer_pk": _b64(sc.signer_pk),
        "signature": _b64(sc.signature),
    }


def request_from_json(doc: Mapping) -> AccessRequest:
    from .credential_crypto import SignedCredential

    cred = frozenset(AVPair(a, v) for a, v in doc["credential"].items())
    sc = SignedCredential(
        credential=cred,
        signature=_unb64(doc["signature"]),
        signer_pk=_unb64(doc["signer_pk"]),
    )
    env = tuple(AVPair(a, v) for a, v in doc.get("env", {}).items())
    return AccessRequest(
        signed_credential=sc,
        object_id=doc["object"],
        op=doc["op"],
        env=env,
        seq=int(doc["seq"]),
        true_subject=doc.get("subject"),
    )


def history_record_to_json(rec: HistoryRecord) -> dict:
    return {
        "kind": "history",
        "seq": rec.seq,
        "subject": rec.true_subject,
        "outcome": rec.outcome,
        "reason": rec.reason,
        "entropy": rec.entropy,
        "request": request_to_json(rec.request),
    }


def history_record_from_json(doc: Mapping) -> HistoryRecord:
    req = request_from_json(doc["request"])
    return HistoryRecord(
        request=req,
        true_subject=doc["subject"],
        outcome=doc["outcome"],
        reason=doc["reason"],
        entropy=float(doc["entropy"]),
        seq=int(doc["seq"]),
    )


def population_record_to_json(rec) -> dict:
    if isinstance(rec, SubjectRecord):
        return {"kind": "subject", "id": rec.id, "pairs": dict(rec.pairs), "pk": _b64(rec.pk)}
    return {"kind": "object", "id": rec.id, "pairs": dict(rec.pairs)}


def save_population(registry: Registry, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in registry.subjects.values():
            fh.write(json.dumps(population_record_to_json(rec)) + "\n")
        for rec in registry.objects.values():
            fh.write(json.dumps(population_record_to_json(rec)) + "\n")


def load_population(registry: Registry, path: str) -> None:
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            doc = json.loads(line)
            if doc["kind"] == "subject":
                registry.register_subject(doc["pairs"], _unb64(doc["pk"]), doc["id"])
            elif doc["kind"] == "object":
                registry.register_object(doc["pairs"], doc["id"])
            else:
                raise StateError(f"unknown population record kind {doc['kind']!r}")


def save_ledger(history: History, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in history.records:
            fh.write(json.dumps(history_record_to_json(rec)) + "\n")


def load_ledger(history: History, path: str) -> None:
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            history.append(history_record_from_json(json.loads(line)))


def snapshot(path: str, registry: Registry, history: History) -> None:
    """Persist space, registries, and ledger as a header line plus JSON lines."""
    header = {
        "format": STATE_FORMAT,
        "version": STATE_VERSION,
        "space": registry.space.to_document(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        for rec in registry.subjects.values():
            fh.write(json.dumps(population_record_to_json(rec)) + "\n")
        for rec in registry.objects.values():
            fh.write(json.dumps(population_record_to_json(rec)) + "\n")
        for rec in history.records:
            fh.write(json.dumps(history_record_to_json(rec)) + "\n")


def load(path: str) -> tuple:
    """Restore (registry, history) written by :func:`snapshot`."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = fh.readline()
        if not raw.strip():
            raise StateError("state file has no header")
        try:
            header = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise StateError(f"corrupt state header: {exc}") from None
        if header.get("format") != STATE_FORMAT:
            raise StateError(f"not a {STATE_FORMAT} file")
        if header.get("version") != STATE_VERSION:
            raise StateError(f"unsupported state version {header.get('version')!r}")
        registry = Registry(AttributeSpace.from_document(header["space"]))
        history = History()
        try:
            for line in fh:
                if not line.strip():
                    continue
                doc = json.loads(line)
                kind = doc.get("kind")
                if kind == "subject":
                    registry.register_subject(doc["pairs"], _unb64(doc["pk"]), doc["id"])
                elif kind == "object":
                    registry.register_object(doc["pairs"], doc["id"])
                elif kind == "history":
                    history.append(history_record_from_json(doc))
                else:
                    raise StateError(f"unknown record kind {kind!r}")
        except (json.JSONDecodeError, KeyError, ValueError, HistoryError) as exc:
            raise StateError(f"corrupt state file: {exc}") from None
    return registry, history
