"""Canonical message encoding for every hub operation, plus the outer frame.

Framing: 4-byte big-endian length, 1-byte frame type, payload. Handshake and
envelope frames carry the encrypted session traffic; header/block/control
frames serve public chain data unencrypted.

Requests are encoded as one type byte plus fixed-width big-endian fields.
Authenticated requests embed the user nonce, and payments embed the routing
fee, inside the signed byte range, so a relay can alter neither.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from .codec import Reader, Writer
from .crypto import ADDRESS_SIZE, sha256
from .errors import MalformedFrame, RouteeError, UnknownType

_PAYMENT_ITEM = struct.Struct(">20sQQ")

# outer frame types
FRAME_HANDSHAKE_INIT = 1
FRAME_HANDSHAKE_ACK = 2
FRAME_ENVELOPE = 3
FRAME_HEADERS_REQ = 4
FRAME_HEADERS_RESP = 5
FRAME_BLOCK_REQ = 6
FRAME_BLOCK_RESP = 7
FRAME_TX_SUBMIT = 8
FRAME_TX_RESULT = 9
FRAME_MINE_REQ = 10
FRAME_MINE_RESP = 11
FRAME_TIP_REQ = 12
FRAME_TIP_RESP = 13
FRAME_PAY_REQ = 14
FRAME_PAY_RESP = 15
FRAME_HUB_INFO_REQ = 16
FRAME_HUB_INFO_RESP = 17

MAX_FRAME_SIZE = 64 * 1024 * 1024


def pack_frame(frame_type: int, payload: bytes) -> bytes:
    if len(payload) + 1 > MAX_FRAME_SIZE:
        raise MalformedFrame("frame too large")
    return (len(payload) + 1).to_bytes(4, "big") + bytes([frame_type]) + payload


def unpack_frame(data: bytes) -> tuple[int, bytes]:
    if len(data) < 5:
        raise MalformedFrame("short frame")
    length = int.from_bytes(data[:4], "big")
    if length != len(data) - 4 or length < 1:
        raise MalformedFrame("frame length mismatch")
    return data[4], data[5:]


# request kinds
REQ_ADD_USER = 1
REQ_ADD_DEPOSIT = 2
REQ_UPDATE_BOUNDARY = 3
REQ_PAYMENT = 4
REQ_SETTLE = 5
REQ_QUERY_LATEST_BLOCK = 6
REQ_QUERY_USER = 7
REQ_QUERY_LEDGER = 8
REQ_INSERT_BLOCK = 9
REQ_GET_SETTLEMENT = 10
REQ_TERMINATE = 11
REQ_SNAPSHOT = 12
REQ_INIT_STATUS = 13
REQ_INIT_RUN = 14

_SIGNING_CONTEXT = b"routee/v1/"


@dataclass
class AddUser:
    kind = REQ_ADD_USER
    public_key: bytes
    settle_address: bytes


@dataclass
class AddDeposit:
    kind = REQ_ADD_DEPOSIT
    user_address: bytes
    nonce: int
    signature: bytes = b""

    def signing_digest(self) -> bytes:
        body = Writer().fixed(self.user_address, ADDRESS_SIZE).u64(self.nonce).getvalue()
        return sha256(_SIGNING_CONTEXT + b"add-deposit" + body)


@dataclass
class UpdateBoundary:
    kind = REQ_UPDATE_BOUNDARY
    user_address: bytes
    nonce: int
    block_number: int
    block_hash: bytes
    signature: bytes = b""

    def signing_digest(self) -> bytes:
        body = (
            Writer()
            .fixed(self.user_address, ADDRESS_SIZE)
            .u64(self.nonce)
            .u64(self.block_number)
            .fixed(self.block_hash, 32)
            .getvalue()
        )
        return sha256(_SIGNING_CONTEXT + b"update-boundary" + body)


@dataclass
class PaymentItem:
    receiver: bytes
    amount: int
    routing_fee: int


@dataclass
class Payment:
    kind = REQ_PAYMENT
    sender_address: bytes
    nonce: int
    batch: list[PaymentItem] = field(default_factory=list)
    signature: bytes = b""

    def signing_digest(self) -> bytes:
        w = Writer().fixed(self.sender_address, ADDRESS_SIZE).u64(self.nonce).u16(len(self.batch))
        for item in self.batch:
            w.fixed(item.receiver, ADDRESS_SIZE).u64(item.amount).u64(item.routing_fee)
        return sha256(_SIGNING_CONTEXT + b"payment" + w.getvalue())


@dataclass
class Settle:
    kind = REQ_SETTLE
    user_address: bytes
    nonce: int
    amount: int
    fee: int
    signature: bytes = b""

    def signing_digest(self) -> bytes:
        body = (
            Writer()
            .fixed(self.user_address, ADDRESS_SIZE)
            .u64(self.nonce)
            .u64(self.amount)
            .u64(self.fee)
            .getvalue()
        )
        return sha256(_SIGNING_CONTEXT + b"settle" + body)


@dataclass
class QueryLatestBlock:
    kind = REQ_QUERY_LATEST_BLOCK


@dataclass
class QueryUser:
    kind = REQ_QUERY_USER
    user_address: bytes
    # signature over (session id, address) binds the query to this session
    signature: bytes = b""

    def signing_digest(self, session_id: bytes) -> bytes:
        body = Writer().fixed(session_id, 8).fixed(self.user_address, ADDRESS_SIZE).getvalue()
        return sha256(_SIGNING_CONTEXT + b"query-user" + body)


@dataclass
class QueryLedger:
    kind = REQ_QUERY_LEDGER


@dataclass
class InsertBlock:
    kind = REQ_INSERT_BLOCK
    block_bytes: bytes
    host_signature: bytes = b""

    @staticmethod
    def signing_digest_for(header_hash: bytes) -> bytes:
        return sha256(_SIGNING_CONTEXT + b"insert-block" + header_hash)


@dataclass
class GetSettlement:
    kind = REQ_GET_SETTLEMENT


@dataclass
class Terminate:
    kind = REQ_TERMINATE
    tip_hash: bytes
    host_signature: bytes = b""

    def signing_digest(self) -> bytes:
        return sha256(_SIGNING_CONTEXT + b"terminate" + self.tip_hash)


@dataclass
class Snapshot:
    kind = REQ_SNAPSHOT


@dataclass
class InitStatus:
    kind = REQ_INIT_STATUS


@dataclass
class InitRun:
    kind = REQ_INIT_RUN


Request = (
    AddUser | AddDeposit | UpdateBoundary | Payment | Settle | QueryLatestBlock
    | QueryUser | QueryLedger | InsertBlock | GetSettlement | Terminate | Snapshot
    | InitStatus | InitRun
)


def encode_request(req: Request) -> bytes:
    w = Writer().u8(req.kind)
    if isinstance(req, AddUser):
        w.lp_bytes(req.public_key).fixed(req.settle_address, ADDRESS_SIZE)
    elif isinstance(req, AddDeposit):
        w.fixed(req.user_address, ADDRESS_SIZE).u64(req.nonce).lp_bytes(req.signature)
    elif isinstance(req, UpdateBoundary):
        w.fixed(req.user_address, ADDRESS_SIZE).u64(req.nonce)
        w.u64(req.block_number).fixed(req.block_hash, 32).lp_bytes(req.signature)
    elif isinstance(req, Payment):
        w.fixed(req.sender_address, ADDRESS_SIZE).u64(req.nonce).u16(len(req.batch))
        for item in req.batch:
            w.fixed(item.receiver, ADDRESS_SIZE).u64(item.amount).u64(item.routing_fee)
        w.lp_bytes(req.signature)
    elif isinstance(req, Settle):
        w.fixed(req.user_address, ADDRESS_SIZE).u64(req.nonce).u64(req.amount).u64(req.fee)
        w.lp_bytes(req.signature)
    elif isinstance(req, QueryLatestBlock):
        pass
    elif isinstance(req, QueryUser):
        w.fixed(req.user_address, ADDRESS_SIZE).lp_bytes(req.signature)
    elif isinstance(req, QueryLedger):
        pass
    elif isinstance(req, InsertBlock):
        w.lp_bytes32(req.block_bytes).lp_bytes(req.host_signature)
    elif isinstance(req, GetSettlement):
        pass
    elif isinstance(req, Terminate):
        w.fixed(req.tip_hash, 32).lp_bytes(req.host_signature)
    elif isinstance(req, (Snapshot, InitStatus, InitRun)):
        pass
    else:
        raise UnknownType(type(req).__name__)
    return w.getvalue()


def decode_request(data: bytes) -> Request:
    r = Reader(data)
    kind = r.u8()
    if kind == REQ_ADD_USER:
        req: Request = AddUser(r.lp_bytes(), r.fixed(ADDRESS_SIZE))
    elif kind == REQ_ADD_DEPOSIT:
        req = AddDeposit(r.fixed(ADDRESS_SIZE), r.u64(), r.lp_bytes())
    elif kind == REQ_UPDATE_BOUNDARY:
        req = UpdateBoundary(r.fixed(ADDRESS_SIZE), r.u64(), r.u64(), r.fixed(32), r.lp_bytes())
    elif kind == REQ_PAYMENT:
        addr, nonce, count = r.fixed(ADDRESS_SIZE), r.u64(), r.u16()
        batch = [PaymentItem(*fields) for fields in
                 _PAYMENT_ITEM.iter_unpack(r.fixed(count * _PAYMENT_ITEM.size))]
        req = Payment(addr, nonce, batch, r.lp_bytes())
    elif kind == REQ_SETTLE:
        req = Settle(r.fixed(ADDRESS_SIZE), r.u64(), r.u64(), r.u64(), r.lp_bytes())
    elif kind == REQ_QUERY_LATEST_BLOCK:
        req = QueryLatestBlock()
    elif kind == REQ_QUERY_USER:
        req = QueryUser(r.fixed(ADDRESS_SIZE), r.lp_bytes())
    elif kind == REQ_QUERY_LEDGER:
        req = QueryLedger()
    elif kind == REQ_INSERT_BLOCK:
        req = InsertBlock(r.lp_bytes32(), r.lp_bytes())
    elif kind == REQ_GET_SETTLEMENT:
        req = GetSettlement()
    elif kind == REQ_TERMINATE:
        req = Terminate(r.fixed(32), r.lp_bytes())
    elif kind == REQ_SNAPSHOT:
        req = Snapshot()
    elif kind == REQ_INIT_STATUS:
        req = InitStatus()
    elif kind == REQ_INIT_RUN:
        req = InitRun()
    else:
        raise UnknownType(f"request kind {kind}")
    r.expect_end()
    return req


# --- responses ---

STATUS_OK = 0
STATUS_ERR = 1


def encode_ok(fields: dict) -> bytes:
    """Responses travel as a flat tag-value body; values are ints, byte
    strings, or None."""
    w = Writer().u8(STATUS_OK).u16(len(fields))
    for key, value in fields.items():
        w.lp_bytes(key.encode())
        if value is None:
            w.u8(0)
        elif isinstance(value, bool):
            w.u8(1).u64(int(value))
        elif isinstance(value, int):
            w.u8(1).u64(value)
        elif isinstance(value, bytes):
            w.u8(2).lp_bytes32(value)
        else:
            raise TypeError(f"unsupported response value {type(value).__name__}")
    return w.getvalue()


def encode_err(exc: RouteeError) -> bytes:
    return (
        Writer()
        .u8(STATUS_ERR)
        .lp_bytes(exc.code.encode())
        .lp_bytes(exc.detail.encode())
        .getvalue()
    )


class RemoteError(RouteeError):
    """Error raised client-side from a decoded error response."""

    def __init__(self, code: str, detail: str = ""):
        self.code = code
        super().__init__(detail)


def decode_response(data: bytes) -> dict:
    r = Reader(data)
    status = r.u8()
    if status == STATUS_ERR:
        code = r.lp_bytes().decode()
        detail = r.lp_bytes().decode()
        raise RemoteError(code, detail)
    if status != STATUS_OK:
        raise MalformedFrame(f"bad response status {status}")
    out: dict = {}
    for _ in range(r.u16()):
        key = r.lp_bytes().decode()
        tag = r.u8()
        if tag == 0:
            out[key] = None
        elif tag == 1:
            out[key] = r.u64()
        elif tag == 2:
            out[key] = r.lp_bytes32()
        else:
            raise MalformedFrame(f"bad value tag {tag}")
    r.expect_end()
    return out
