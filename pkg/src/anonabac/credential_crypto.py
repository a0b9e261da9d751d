"""Deterministic signing of canonically encoded credentials (Ed25519, RFC 8032).

Ed25519 signatures are deterministic: signing the same encoded credential
with the same key always yields the same 64 bytes, so signatures carry no
per-call randomness an observer could use to tell signers apart.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric import ed25519

from .errors import EncodingError

SEED_LEN = 32
# bytes with structural meaning inside the canonical encoding
_SEP = "\x1f"
_EQ = "="


@dataclass(frozen=True)
class KeyPair:
    pk: bytes  # 32-byte verification key
    sk: bytes  # 32-byte private seed

    scheme = "ed25519"


@dataclass(frozen=True)
class SignedCredential:
    credential: frozenset  # frozenset[AVPair]
    signature: bytes
    signer_pk: bytes


def keygen(seed: Optional[bytes] = None) -> KeyPair:
    """Generate a keypair; a 32-byte seed makes generation deterministic."""
    if seed is not None:
        if len(seed) != SEED_LEN:
            raise ValueError(f"seed must be {SEED_LEN} bytes, got {len(seed)}")
        priv = ed25519.Ed25519PrivateKey.from_private_bytes(seed)
    else:
        priv = ed25519.Ed25519PrivateKey.generate()
    sk = priv.private_bytes(
        serialization.Encoding.Raw,
        serialization.PrivateFormat.Raw,
        serialization.NoEncryption(),
    )
    pk = priv.public_key().public_bytes(
        serialization.Encoding.Raw, serialization.PublicFormat.Raw
    )
    return KeyPair(pk=pk, sk=sk)


@lru_cache(maxsize=None)
def canonical_encode(credential: frozenset) -> bytes:
    """Deterministic byte encoding of a credential.

    Layout: 4-byte big-endian pair count, then pairs sorted by (name, value)
    in UTF-8 byte order, each as ``name 0x3D value``, joined by 0x1F.
    Names and values must not contain either structural byte.
    """
    segments = []
    for attr, value in sorted(credential):
        if _SEP in attr or _EQ in attr:
            raise EncodingError(f"attribute name {attr!r} contains a reserved byte")
        if _SEP in value or _EQ in value:
            raise EncodingError(f"value {value!r} contains a reserved byte")
        segments.append(attr.encode("utf-8") + b"=" + value.encode("utf-8"))
    return struct.pack(">I", len(segments)) + b"\x1f".join(segments)


def sign_credential(sk: bytes, credential: frozenset) -> SignedCredential:
    priv = ed25519.Ed25519PrivateKey.from_private_bytes(sk)
    message = canonical_encode(credential)
    signature = priv.sign(message)
    pk = priv.public_key().public_bytes(
        serialization.Encoding.Raw, serialization.PublicFormat.Raw
    )
    return SignedCredential(credential=credential, signature=signature, signer_pk=pk)


def verify_credential(pk: bytes, sc: SignedCredential) -> bool:
    """True iff the signature is valid for the credential's canonical bytes."""
    try:
        message = canonical_encode(sc.credential)
        ed25519.Ed25519PublicKey.from_public_bytes(pk).verify(sc.signature, message)
        return True
    except (InvalidSignature, ValueError, EncodingError):
        return False
