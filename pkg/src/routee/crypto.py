"""Hashing, addresses, deterministic randomness, and pluggable signatures.

Two signature roles exist: message authentication of hub requests ("auth")
and on-chain output unlocking ("onchain"). Each role can be served by any
scheme; the `full` suite uses RSA-3072 for auth and secp256k1 ECDSA on-chain,
while the `fast-test` suite substitutes a deterministic HMAC scheme for both
so that whole simulations replay bit-identically from a seed.
"""

from __future__ import annotations

import hashlib
import hmac

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec, padding, rsa

from .errors import AuthFailure

ADDRESS_SIZE = 20
HASH_SIZE = 32


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def sha256d(data: bytes) -> bytes:
    return hashlib.sha256(hashlib.sha256(data).digest()).digest()


def address_of(public_key: bytes) -> bytes:
    """20-byte address: truncated SHA-256 of the serialized public key."""
    return sha256(public_key)[:ADDRESS_SIZE]


class DeterministicRng:
    """Counter-mode HMAC-SHA256 byte generator. State is (seed, counter) so it
    serializes into snapshots and replays exactly."""

    def __init__(self, seed: bytes | int, counter: int = 0):
        if isinstance(seed, int):
            seed = seed.to_bytes(32, "big")
        if len(seed) != 32:
            seed = sha256(seed)
        self.seed = seed
        self.counter = counter

    def randbytes(self, n: int) -> bytes:
        out = bytearray()
        while len(out) < n:
            out += hmac.new(self.seed, self.counter.to_bytes(8, "big"), hashlib.sha256).digest()
            self.counter += 1
        return bytes(out[:n])

    def getstate(self) -> tuple[bytes, int]:
        return (self.seed, self.counter)

    @classmethod
    def fromstate(cls, state: tuple[bytes, int]) -> "DeterministicRng":
        return cls(state[0], state[1])


class FastScheme:
    """Deterministic MAC-based stand-in scheme for tests and simulations.

    The "public" key reveals the secret (pk == sk), so verification is just a
    MAC recomputation. Not a real signature scheme; never use outside tests.
    """

    name = "fast"

    def generate(self, rng=None) -> tuple[bytes, bytes]:
        import os
        sk = rng.randbytes(32) if rng is not None else os.urandom(32)
        return sk, sk

    def sign(self, secret_key: bytes, message: bytes) -> bytes:
        return hmac.new(secret_key, message, hashlib.sha256).digest()

    def verify(self, public_key: bytes, message: bytes, signature: bytes) -> bool:
        expected = hmac.new(public_key, message, hashlib.sha256).digest()
        return hmac.compare_digest(expected, signature)


class RsaScheme:
    """RSA-3072 with PKCS#1 v1.5 / SHA-256; DER-encoded keys."""

    name = "rsa3072"
    _KEY_BITS = 3072

    def generate(self, rng=None) -> tuple[bytes, bytes]:
        key = rsa.generate_private_key(public_exponent=65537, key_size=self._KEY_BITS)
        sk = key.private_bytes(
            serialization.Encoding.DER,
            serialization.PrivateFormat.PKCS8,
            serialization.NoEncryption(),
        )
        pk = key.public_key().public_bytes(
            serialization.Encoding.DER,
            serialization.PublicFormat.SubjectPublicKeyInfo,
        )
        return sk, pk

    def sign(self, secret_key: bytes, message: bytes) -> bytes:
        key = serialization.load_der_private_key(secret_key, password=None)
        return key.sign(message, padding.PKCS1v15(), hashes.SHA256())

    def verify(self, public_key: bytes, message: bytes, signature: bytes) -> bool:
        try:
            key = serialization.load_der_public_key(public_key)
            key.verify(signature, message, padding.PKCS1v15(), hashes.SHA256())
            return True
        except (InvalidSignature, ValueError, TypeError):
            return False


class EcdsaScheme:
    """secp256k1 ECDSA / SHA-256; compressed-point public keys, DER signatures."""

    name = "ecdsa"

    def generate(self, rng=None) -> tuple[bytes, bytes]:
        key = ec.generate_private_key(ec.SECP256K1())
        sk = key.private_bytes(
            serialization.Encoding.DER,
            serialization.PrivateFormat.PKCS8,
            serialization.NoEncryption(),
        )
        pk = key.public_key().public_bytes(
            serialization.Encoding.X962,
            serialization.PublicFormat.CompressedPoint,
        )
        return sk, pk

    def sign(self, secret_key: bytes, message: bytes) -> bytes:
        key = serialization.load_der_private_key(secret_key, password=None)
        return key.sign(message, ec.ECDSA(hashes.SHA256()))

    def verify(self, public_key: bytes, message: bytes, signature: bytes) -> bool:
        try:
            key = ec.EllipticCurvePublicKey.from_encoded_point(ec.SECP256K1(), public_key)
            key.verify(signature, message, ec.ECDSA(hashes.SHA256()))
            return True
        except (InvalidSignature, ValueError, TypeError):
            return False


SCHEMES = {s.name: s for s in (FastScheme(), RsaScheme(), EcdsaScheme())}


def get_scheme(name: str):
    try:
        return SCHEMES[name]
    except KeyError:
        raise AuthFailure(f"unknown signature scheme {name!r}")


class CryptoSuite:
    """Pairs the message-auth scheme with the on-chain unlock scheme."""

    def __init__(self, auth, onchain, mode: str):
        self.auth = auth
        self.onchain = onchain
        self.mode = mode

    @classmethod
    def fast_test(cls) -> "CryptoSuite":
        fast = SCHEMES["fast"]
        return cls(fast, fast, "fast-test")

    @classmethod
    def full(cls) -> "CryptoSuite":
        return cls(SCHEMES["rsa3072"], SCHEMES["ecdsa"], "full")

    @classmethod
    def from_mode(cls, mode: str) -> "CryptoSuite":
        if mode == "fast-test":
            return cls.fast_test()
        if mode == "full":
            return cls.full()
        raise ValueError(f"unknown crypto mode {mode!r}")
