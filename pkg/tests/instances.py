"""Randomized small instances for oracle-equivalence sweeps."""

import dataclasses
import hashlib
import random

from anonabac.credential_crypto import keygen, sign_credential
from anonabac.model import (
    AccessRequest,
    AttributeDef,
    AttributeSpace,
    AVPair,
    PolicyRule,
    Registry,
)

OPS = ("read", "write")


def random_instance(rng: random.Random, max_subjects=8, max_attrs=6, max_rules=20, max_requests=200):
    """A small world: registry, policies, and a signed request stream.

    Attribute budget stays within max_attrs including the operation
    attribute. A few requests carry deliberately corrupted signatures.
    """
    n_sub_attrs = rng.randint(1, min(3, max_attrs - 2))
    n_obj_attrs = rng.randint(1, min(2, max_attrs - n_sub_attrs - 1))
    n_values = rng.randint(2, 3)
    values = tuple(f"v{i}" for i in range(n_values))
    defs = [AttributeDef(f"sa{i}", "subject", 1.0, values) for i in range(n_sub_attrs)]
    defs += [AttributeDef(f"oa{i}", "object", 1.0, values) for i in range(n_obj_attrs)]
    defs.append(AttributeDef("op", "operation", 1.0, OPS))
    space = AttributeSpace(defs)
    registry = Registry(space)

    sub_attrs = [d.name for d in space.by_class("subject")]
    obj_attrs = [d.name for d in space.by_class("object")]

    sks = {}
    for i in range(rng.randint(1, max_subjects)):
        chosen = rng.sample(sub_attrs, rng.randint(1, len(sub_attrs)))
        pairs = {a: rng.choice(values) for a in chosen}
        seed = hashlib.sha256(f"inst:{i}".encode()).digest()
        kp = keygen(seed)
        sid = registry.register_subject(pairs, kp.pk, f"s{i}")
        sks[sid] = kp.sk

    for i in range(rng.randint(1, 3)):
        registry.register_object({a: rng.choice(values) for a in obj_attrs}, f"o{i}")

    sids = list(registry.subjects)
    oids = list(registry.objects)

    policies = []
    for i in range(rng.randint(1, max_rules)):
        constraints = set()
        if rng.random() < 0.5:
            donor = registry.subjects[rng.choice(sids)]
            names = rng.sample(list(donor.pairs), rng.randint(1, len(donor.pairs)))
            constraints = {AVPair(a, donor.pairs[a]) for a in names}
            if rng.random() < 0.5:
                constraints.add(AVPair("op", rng.choice(OPS)))
            if rng.random() < 0.5:
                obj = registry.objects[rng.choice(oids)]
                for pair in obj.pair_tuple:
                    if rng.random() < 0.5:
                        constraints.add(pair)
        else:
            pool = sub_attrs + obj_attrs + ["op"]
            names = rng.sample(pool, rng.randint(1, len(pool)))
            for a in names:
                domain = OPS if a == "op" else values
                constraints.add(AVPair(a, rng.choice(domain)))
        policies.append(PolicyRule(id=f"p{i:03d}", constraints=frozenset(constraints)))

    requests = []
    for seq in range(1, rng.randint(5, max_requests) + 1):
        sid = rng.choice(sids)
        rec = registry.subjects[sid]
        names = rng.sample(list(rec.pairs), rng.randint(1, len(rec.pairs)))
        cred = frozenset(AVPair(a, rec.pairs[a]) for a in names)
        sc = sign_credential(sks[sid], cred)
        if rng.random() < 0.05:
            sig = bytearray(sc.signature)
            sig[rng.randrange(64)] ^= 0xFF
            sc = dataclasses.replace(sc, signature=bytes(sig))
        requests.append(
            AccessRequest(
                signed_credential=sc,
                object_id=rng.choice(oids),
                op=rng.choice(OPS),
                seq=seq,
                true_subject=sid,
            )
        )
    return registry, policies, requests
