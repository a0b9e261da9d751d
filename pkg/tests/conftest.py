import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from anonabac.credential_crypto import keygen, sign_credential
from anonabac.model import AttributeDef, AttributeSpace, AVPair, Registry


def micro_space() -> AttributeSpace:
    return AttributeSpace(
        [
            AttributeDef("dept", "subject", 1.0, ("eng", "hr")),
            AttributeDef("role", "subject", 1.0, ("dev", "qa")),
            AttributeDef("tier", "object", 1.0, ("gold", "silver")),
            AttributeDef("op", "operation", 1.0, ("read", "write")),
        ]
    )


def micro_registry() -> Registry:
    """Four subjects: two identical, one off by role, one with a lone attribute."""
    registry = Registry(micro_space())
    seeds = [bytes([i]) * 32 for i in range(1, 5)]
    registry.register_subject({"dept": "eng", "role": "dev"}, keygen(seeds[0]).pk, "s1")
    registry.register_subject({"dept": "eng", "role": "dev"}, keygen(seeds[1]).pk, "s2")
    registry.register_subject({"dept": "eng", "role": "qa"}, keygen(seeds[2]).pk, "s3")
    registry.register_subject({"dept": "hr"}, keygen(seeds[3]).pk, "s4")
    registry.register_object({"tier": "gold"}, "obj1")
    return registry


def subject_pairs(registry: Registry) -> dict:
    return {sid: dict(rec.pairs) for sid, rec in registry.subjects.items()}


def signed(sk: bytes, pairs: dict):
    return sign_credential(sk, frozenset(AVPair(a, v) for a, v in pairs.items()))


def micro_request(registry, sid, names, seq=1, object_id="obj1", op="read"):
    """Request by one of the micro subjects, signed with its seeded key."""
    from anonabac.model import AccessRequest

    sk = keygen(bytes([int(sid[1:])]) * 32).sk
    cred = registry.derive_credential(sid, names)
    sc = sign_credential(sk, cred)
    return AccessRequest(
        signed_credential=sc,
        object_id=object_id,
        op=op,
        seq=seq,
        true_subject=sid,
    )


@pytest.fixture
def registry():
    return micro_registry()


@pytest.fixture(scope="session")
def desk_workload():
    """C2 at scale 0.01: the desk-scale benchmark workload, built once."""
    from anonabac.workload import case_spec, generate

    return generate(case_spec("C2"), seed=1729, scale=0.01)
