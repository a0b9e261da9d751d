import json

import pytest

from anonabac import model
from anonabac.credential_crypto import keygen, sign_credential
from anonabac.errors import HistoryError, RegistryError, SpaceError, StateError
from anonabac.model import (
    AccessRequest,
    AttributeDef,
    AttributeSpace,
    AVPair,
    History,
    HistoryRecord,
    Registry,
)

from conftest import micro_registry, micro_space


def space_doc(attrs):
    return {"attributes": attrs}


def test_load_attribute_space_document(tmp_path):
    doc = space_doc(
        [
            {"name": n, "class": "subject", "initial_weight": 1.0, "domain": ["x", "y", "z"]}
            for n in ("a", "b", "c", "d")
        ]
    )
    path = tmp_path / "space.json"
    path.write_text(json.dumps(doc))
    space = model.load_attribute_space(str(path))
    assert len(space) == 4
    assert space["a"].domain == ("x", "y", "z")


def test_duplicate_attribute_name_rejected():
    defs = [
        AttributeDef("role", "subject", 1.0, ("a",)),
        AttributeDef("role", "subject", 1.0, ("b",)),
    ]
    with pytest.raises(SpaceError, match="duplicate"):
        AttributeSpace(defs)


def test_empty_domain_rejected():
    with pytest.raises(SpaceError, match="empty domain"):
        AttributeDef("role", "subject", 1.0, ())


def test_unknown_class_rejected():
    with pytest.raises(SpaceError, match="unknown attribute class"):
        AttributeDef("role", "wizard", 1.0, ("a",))


def test_register_subject_appends():
    registry = micro_registry()
    before = len(registry.subjects)
    sid = registry.register_subject({"dept": "eng", "role": "dev"}, keygen(b"\x09" * 32).pk)
    assert len(registry.subjects) == before + 1
    assert registry.subject(sid).pairs == {"dept": "eng", "role": "dev"}


def test_register_subject_out_of_domain():
    registry = micro_registry()
    with pytest.raises(RegistryError, match="not in domain"):
        registry.register_subject({"dept": "legal"}, b"\x00" * 32)


def test_register_subject_duplicate_attribute():
    registry = micro_registry()
    with pytest.raises(RegistryError, match="duplicate attribute"):
        registry.register_subject([("dept", "eng"), ("dept", "hr")], b"\x00" * 32)


def test_register_subject_wrong_class():
    registry = micro_registry()
    with pytest.raises(RegistryError, match="class"):
        registry.register_subject({"tier": "gold"}, b"\x00" * 32)


def test_derive_credential_subset():
    registry = micro_registry()
    cred = registry.derive_credential("s1", ["dept"])
    assert cred == frozenset({AVPair("dept", "eng")})


def test_derive_credential_full_set_boundary():
    registry = micro_registry()
    cred = registry.derive_credential("s1", ["dept", "role"])
    assert cred == registry.subject("s1").pair_set


def test_derive_credential_unassigned_name():
    registry = micro_registry()
    with pytest.raises(RegistryError, match="not assigned"):
        registry.derive_credential("s4", ["role"])
    with pytest.raises(RegistryError, match="at least one"):
        registry.derive_credential("s1", [])
    with pytest.raises(RegistryError, match="unknown subject"):
        registry.derive_credential("nobody", ["dept"])


def _request(registry, sid, names, seq):
    rec = registry.subject(sid)
    seed = bytes([int(sid[1:])]) * 32
    sk = keygen(seed).sk
    cred = registry.derive_credential(sid, names)
    sc = sign_credential(sk, cred)
    return AccessRequest(
        signed_credential=sc, object_id="obj1", op="read", seq=seq, true_subject=sid
    )


def _record(registry, sid, names, seq):
    req = _request(registry, sid, names, seq)
    return HistoryRecord(
        request=req, true_subject=sid, outcome="DENY", reason="no-path", entropy=0.0, seq=seq
    )


def test_history_append_and_monotonicity():
    registry = micro_registry()
    history = History()
    history.append(_record(registry, "s1", ["dept"], 1))
    assert len(history) == 1
    with pytest.raises(HistoryError):
        history.append(_record(registry, "s1", ["dept"], 1))


def test_history_query_by_credential_set_semantics():
    registry = micro_registry()
    history = History()
    assert history.query_by_credential(frozenset()) == []
    history.append(_record(registry, "s1", ["dept", "role"], 1))
    history.append(_record(registry, "s1", ["role", "dept"], 2))  # permuted order
    history.append(_record(registry, "s2", ["dept"], 3))
    cred = registry.derive_credential("s1", ["dept", "role"])
    assert history.query_by_credential(cred) == [("s1", 1), ("s1", 2)]
    assert history.usage_counts(cred) == {"s1": 2}


def test_matrix_view_agrees_with_registry():
    registry = micro_registry()
    via_matrix = set(registry.matrix())
    via_records = {
        (sid, a, v)
        for sid, rec in registry.subjects.items()
        for a, v in rec.pairs.items()
    }
    assert via_matrix == via_records
    for sid, a, v in via_matrix:
        assert v in registry.space[a].domain


def test_snapshot_round_trip(tmp_path):
    registry = micro_registry()
    history = History()
    history.append(_record(registry, "s1", ["dept"], 1))
    history.append(_record(registry, "s3", ["dept", "role"], 2))
    path = tmp_path / "state.jsonl"
    model.snapshot(str(path), registry, history)
    registry2, history2 = model.load(str(path))
    cred = registry.derive_credential("s1", ["dept"])
    assert history2.query_by_credential(cred) == history.query_by_credential(cred)
    assert {s.id for s in registry2.subjects.values()} == set(registry.subjects)
    assert registry2.subject("s1").pairs == registry.subject("s1").pairs
    assert registry2.subject("s1").pk == registry.subject("s1").pk


def test_snapshot_empty_state(tmp_path):
    registry = Registry(micro_space())
    path = tmp_path / "empty.jsonl"
    model.snapshot(str(path), registry, History())
    registry2, history2 = model.load(str(path))
    assert not registry2.subjects and not registry2.objects and len(history2) == 0


def test_load_truncated_file(tmp_path):
    registry = micro_registry()
    history = History()
    history.append(_record(registry, "s1", ["dept"], 1))
    path = tmp_path / "state.jsonl"
    model.snapshot(str(path), registry, history)
    data = path.read_bytes()
    (tmp_path / "cut.jsonl").write_bytes(data[: len(data) - 30])
    with pytest.raises(StateError, match="corrupt"):
        model.load(str(tmp_path / "cut.jsonl"))


def test_load_version_mismatch(tmp_path):
    path = tmp_path / "state.jsonl"
    header = {"format": model.STATE_FORMAT, "version": 99, "space": micro_space().to_document()}
    path.write_text(json.dumps(header) + "\n")
    with pytest.raises(StateError, match="version"):
        model.load(str(path))


def test_population_round_trip(tmp_path):
    registry = micro_registry()
    path = tmp_path / "population.jsonl"
    model.save_population(registry, str(path))
    registry2 = Registry(micro_space())
    model.load_population(registry2, str(path))
    assert set(registry2.subjects) == set(registry.subjects)
    assert set(registry2.objects) == set(registry.objects)
    assert registry2.subject("s4").pairs == {"dept": "hr"}


def test_ledger_file_round_trip(tmp_path):
    registry = micro_registry()
    history = History()
    history.append(_record(registry, "s1", ["dept"], 1))
    path = tmp_path / "ledger.jsonl"
    model.save_ledger(history, str(path))
    history2 = History()
    model.load_ledger(history2, str(path))
    assert len(history2) == 1
    rec = history2.records[0]
    assert rec.true_subject == "s1" and rec.seq == 1
    assert rec.request.signed_credential.credential == registry.derive_credential("s1", ["dept"])
