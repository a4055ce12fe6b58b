"""Encrypted, replay-safe sessions over an untrusted relay.

Handshake: the client sends an ephemeral X25519 key; the hub answers with its
own ephemeral, a session id, its attestation blob, and a key-confirmation MAC.
Both sides derive a 128-bit AES-GCM key from the two shared secrets. Only the
holder of the hub's static key can derive the key, so a valid confirmation MAC
doubles as proof of possession (the stand-in for a remote-attestation check).

Envelopes: AES-128-GCM with nonce = 4-byte direction tag + 8-byte sequence
number, with session_id || seq as associated data. Each direction's sequence
increases by exactly one per message; a gap or repeat aborts the session.
"""

from __future__ import annotations

import hashlib
import hmac

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .codec import Reader, Writer
from .crypto import sha256
from .errors import HandshakeFailure, SessionAborted

SESSION_ID_SIZE = 8
DIR_CLIENT_TO_HUB = b"\x00\x00\x00\x01"
DIR_HUB_TO_CLIENT = b"\x00\x00\x00\x02"

# fixed measurement published for the attestation stub; a real deployment
# would replace blob+MAC with a hardware quote over the same transcript
STUB_MEASUREMENT = sha256(b"routee-enclave-measurement-v1")


def _derive(shared1: bytes, shared2: bytes, transcript: bytes) -> tuple[bytes, bytes]:
    from cryptography.hazmat.primitives.kdf.hkdf import HKDF
    from cryptography.hazmat.primitives import hashes

    okm = HKDF(
        algorithm=hashes.SHA256(),
        length=48,
        salt=transcript,
        info=b"routee-session-v1",
    ).derive(shared1 + shared2)
    return okm[:16], okm[16:]


def _confirm_mac(confirm_key: bytes, transcript: bytes) -> bytes:
    return hmac.new(confirm_key, b"confirm" + transcript, hashlib.sha256).digest()


class Session:
    """One side of an established session. seal/open enforce strict sequence
    ordering in both directions."""

    def __init__(self, session_id: bytes, key: bytes, is_hub: bool):
        self.session_id = session_id
        self.key = key
        self.is_hub = is_hub
        self._aead = AESGCM(key)
        self.send_seq = 0
        self.recv_seq = 0
        self.aborted = False

    def _nonce(self, direction: bytes, seq: int) -> bytes:
        return direction + seq.to_bytes(8, "big")

    def seal(self, plaintext: bytes) -> bytes:
        if self.aborted:
            raise SessionAborted("aborted", "session previously aborted")
        direction = DIR_HUB_TO_CLIENT if self.is_hub else DIR_CLIENT_TO_HUB
        seq = self.send_seq
        ad = self.session_id + seq.to_bytes(8, "big")
        ct = self._aead.encrypt(self._nonce(direction, seq), plaintext, ad)
        self.send_seq += 1
        return Writer().fixed(self.session_id, SESSION_ID_SIZE).u64(seq).lp_bytes32(ct).getvalue()

    def open(self, envelope: bytes) -> bytes:
        if self.aborted:
            raise SessionAborted("aborted", "session previously aborted")
        r = Reader(envelope)
        session_id = r.fixed(SESSION_ID_SIZE)
        seq = r.u64()
        ct = r.lp_bytes32()
        r.expect_end()
        if session_id != self.session_id:
            raise SessionAborted("wrong-session", session_id.hex())
        if seq < self.recv_seq:
            self.aborted = True
            raise SessionAborted("seq-repeat", f"seq {seq}, expected {self.recv_seq}")
        if seq > self.recv_seq:
            self.aborted = True
            raise SessionAborted("seq-gap", f"seq {seq}, expected {self.recv_seq}")
        direction = DIR_CLIENT_TO_HUB if self.is_hub else DIR_HUB_TO_CLIENT
        ad = session_id + seq.to_bytes(8, "big")
        try:
            plaintext = self._aead.decrypt(self._nonce(direction, seq), ct, ad)
        except InvalidTag:
            self.aborted = True
            raise SessionAborted("auth-tag", f"seq {seq}")
        self.recv_seq += 1
        return plaintext


def peek_session_id(envelope: bytes) -> bytes:
    if len(envelope) < SESSION_ID_SIZE:
        raise SessionAborted("wrong-session", "short envelope")
    return envelope[:SESSION_ID_SIZE]


class HubSessionEndpoint:
    """Hub-side handshake handling and session table."""

    def __init__(self, static_secret: bytes | None = None, rng=None, measurement: bytes = STUB_MEASUREMENT):
        if static_secret is None:
            static_secret = X25519PrivateKey.generate().private_bytes_raw()
        self._static = X25519PrivateKey.from_private_bytes(static_secret)
        self.static_public = self._static.public_key().public_bytes_raw()
        self.measurement = measurement
        self._rng = rng
        self.sessions: dict[bytes, Session] = {}

    def _randbytes(self, n: int) -> bytes:
        if self._rng is not None:
            return self._rng.randbytes(n)
        import os
        return os.urandom(n)

    def handle_init(self, init_payload: bytes) -> tuple[bytes, Session]:
        r = Reader(init_payload)
        client_eph = r.fixed(32)
        r.expect_end()
        eph_secret = X25519PrivateKey.from_private_bytes(self._randbytes(32))
        hub_eph = eph_secret.public_key().public_bytes_raw()
        session_id = self._randbytes(SESSION_ID_SIZE)
        while session_id in self.sessions:
            session_id = self._randbytes(SESSION_ID_SIZE)
        peer = X25519PublicKey.from_public_bytes(client_eph)
        shared_static = self._static.exchange(peer)
        shared_eph = eph_secret.exchange(peer)
        transcript = sha256(
            client_eph + session_id + hub_eph + self.measurement + self.static_public
        )
        key, confirm_key = _derive(shared_static, shared_eph, transcript)
        session = Session(session_id, key, is_hub=True)
        self.sessions[session_id] = session
        ack = (
            Writer()
            .fixed(session_id, SESSION_ID_SIZE)
            .fixed(hub_eph, 32)
            .lp_bytes(self.measurement)
            .fixed(_confirm_mac(confirm_key, transcript), 32)
            .getvalue()
        )
        return ack, session

    def session_for(self, envelope: bytes) -> Session:
        session = self.sessions.get(peek_session_id(envelope))
        if session is None:
            raise SessionAborted("wrong-session", "unknown session id")
        return session


class ClientHandshake:
    """Client side: build the init payload, then complete() with the ack."""

    def __init__(self, hub_static_public: bytes, expected_measurement: bytes = STUB_MEASUREMENT, rng=None):
        self.hub_static_public = hub_static_public
        self.expected_measurement = expected_measurement
        if rng is not None:
            self._eph = X25519PrivateKey.from_private_bytes(rng.randbytes(32))
        else:
            self._eph = X25519PrivateKey.generate()
        self.client_eph = self._eph.public_key().public_bytes_raw()

    def init_payload(self) -> bytes:
        return self.client_eph

    def complete(self, ack_payload: bytes) -> Session:
        r = Reader(ack_payload)
        session_id = r.fixed(SESSION_ID_SIZE)
        hub_eph = r.fixed(32)
        measurement = r.lp_bytes()
        confirm = r.fixed(32)
        r.expect_end()
        if measurement != self.expected_measurement:
            raise HandshakeFailure("attestation measurement mismatch")
        shared_static = self._eph.exchange(X25519PublicKey.from_public_bytes(self.hub_static_public))
        shared_eph = self._eph.exchange(X25519PublicKey.from_public_bytes(hub_eph))
        transcript = sha256(
            self.client_eph + session_id + hub_eph + measurement + self.hub_static_public
        )
        key, confirm_key = _derive(shared_static, shared_eph, transcript)
        if not hmac.compare_digest(confirm, _confirm_mac(confirm_key, transcript)):
            raise HandshakeFailure("key confirmation mismatch")
        return Session(session_id, key, is_hub=False)
