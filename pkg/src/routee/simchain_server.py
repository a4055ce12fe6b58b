"""Network front end for a simchain node.

Serves the public header-fetch and get-block protocols used by light clients
and the hub daemon, accepts transaction broadcasts, and exposes the mining
and faucet controls that scenario scripts drive. All node access is
serialized; the node itself stays single-threaded."""

from __future__ import annotations

import threading

from .blocks import Block
from .codec import Reader, Writer
from .errors import TxRejected
from .netio import FrameConn, FrameServer
from .simchain import SimNode
from .transactions import Transaction
from . import wire


class SimchainServer:
    def __init__(self, node: SimNode, address: tuple[str, int] = ("127.0.0.1", 0)):
        self.node = node
        self._lock = threading.Lock()
        self.server = FrameServer(address, self._handle)

    @property
    def port(self) -> int:
        return self.server.port

    def start(self) -> None:
        self.server.start_background()

    def stop(self) -> None:
        self.server.shutdown()
        self.server.server_close()

    def _handle(self, frame_type: int, payload: bytes, ctx: dict):
        with self._lock:
            if frame_type == wire.FRAME_HEADERS_REQ:
                r = Reader(payload)
                from_height, count = r.u64(), r.u16()
                r.expect_end()
                headers = self.node.headers_from(from_height, count)
                w = Writer().u16(len(headers))
                for header in headers:
                    w.raw(header.serialize())
                return wire.FRAME_HEADERS_RESP, w.getvalue()

            if frame_type == wire.FRAME_BLOCK_REQ:
                r = Reader(payload)
                height = r.u64()
                r.expect_end()
                if height > self.node.tip_height:
                    return wire.FRAME_BLOCK_RESP, Writer().u8(0).getvalue()
                block = self.node.get_block(height)
                return wire.FRAME_BLOCK_RESP, Writer().u8(1).lp_bytes32(block.serialize()).getvalue()

            if frame_type == wire.FRAME_TX_SUBMIT:
                r = Reader(payload)
                tx = Transaction.deserialize(r.lp_bytes32())
                r.expect_end()
                try:
                    self.node.submit_tx(tx)
                except TxRejected as exc:
                    return wire.FRAME_TX_RESULT, (
                        Writer().u8(0).lp_bytes(exc.code.encode()).lp_bytes(exc.detail.encode()).getvalue()
                    )
                return wire.FRAME_TX_RESULT, Writer().u8(1).lp_bytes(b"").lp_bytes(b"").getvalue()

            if frame_type == wire.FRAME_MINE_REQ:
                r = Reader(payload)
                count = r.u16()
                r.expect_end()
                for _ in range(count):
                    self.node.mine_block()
                return wire.FRAME_MINE_RESP, Writer().u64(self.node.tip_height).getvalue()

            if frame_type == wire.FRAME_TIP_REQ:
                return wire.FRAME_TIP_RESP, (
                    Writer().u64(self.node.tip_height).fixed(self.node.chain.tip_hash, 32).getvalue()
                )

            if frame_type == wire.FRAME_PAY_REQ:
                r = Reader(payload)
                address, amount, fee = r.fixed(20), r.u64(), r.u64()
                r.expect_end()
                try:
                    tx = self.node.pay(address, amount, fee)
                except TxRejected as exc:
                    return wire.FRAME_PAY_RESP, Writer().u8(0).fixed(b"\x00" * 32, 32).lp_bytes(exc.code.encode()).getvalue()
                return wire.FRAME_PAY_RESP, Writer().u8(1).fixed(tx.txid(), 32).lp_bytes(b"").getvalue()

            return None


class SimchainClient:
    """Typed client for a running simchain server."""

    def __init__(self, host: str, port: int):
        self.host = host
        self.port = port

    def _request(self, frame_type: int, payload: bytes) -> tuple[int, bytes]:
        with FrameConn(self.host, self.port) as conn:
            return conn.request(frame_type, payload)

    def fetch_headers(self, from_height: int, count: int) -> list[bytes]:
        _, payload = self._request(
            wire.FRAME_HEADERS_REQ, Writer().u64(from_height).u16(count).getvalue()
        )
        r = Reader(payload)
        headers = [r.fixed(80) for _ in range(r.u16())]
        r.expect_end()
        return headers

    def get_block(self, height: int) -> Block | None:
        _, payload = self._request(wire.FRAME_BLOCK_REQ, Writer().u64(height).getvalue())
        r = Reader(payload)
        if not r.u8():
            return None
        return Block.deserialize(r.lp_bytes32())

    def submit_tx(self, tx: Transaction) -> None:
        _, payload = self._request(
            wire.FRAME_TX_SUBMIT, Writer().lp_bytes32(tx.serialize()).getvalue()
        )
        r = Reader(payload)
        ok = r.u8()
        code = r.lp_bytes().decode()
        detail = r.lp_bytes().decode()
        if not ok:
            raise TxRejected(code, detail)

    def mine(self, count: int = 1) -> int:
        _, payload = self._request(wire.FRAME_MINE_REQ, Writer().u16(count).getvalue())
        return Reader(payload).u64()

    def tip(self) -> tuple[int, bytes]:
        _, payload = self._request(wire.FRAME_TIP_REQ, b"")
        r = Reader(payload)
        return r.u64(), r.fixed(32)

    def pay(self, address: bytes, amount: int, fee: int = 0) -> bytes:
        _, payload = self._request(
            wire.FRAME_PAY_REQ, Writer().fixed(address, 20).u64(amount).u64(fee).getvalue()
        )
        r = Reader(payload)
        ok = r.u8()
        txid = r.fixed(32)
        code = r.lp_bytes().decode()
        if not ok:
            raise TxRejected(code or "pay-failed")
        return txid
