"""The hub daemon: binds the session layer to the hub state machine.

Sessions are handled concurrently, one connection per thread; every mutating
request is applied serially by the hub's single-writer lock, with per-session
message order preserved by the per-connection read loop. Snapshots are
written on demand and on shutdown.
"""

from __future__ import annotations

import os
import threading

from . import snapshot as snapshot_mod
from . import wire
from .crypto import CryptoSuite
from .errors import InitFailure, RouteeError
from .headers import ChainParams
from .hub import Hub, HubConfig
from .netio import FrameServer
from .session import HubSessionEndpoint, SessionAborted
from .simchain_server import SimchainClient


class DaemonConfig:
    """Flat configuration: defaults < config file < ROUTEE_* env < overrides.

    Recognized keys: listen_host, listen_port, simchain_host, simchain_port,
    snapshot_path, min_routing_fee, host_pubkey_hex, host_key_path,
    hub_key_path, start_height, fee_window, crypto_mode, retarget_interval,
    target_spacing, pow_limit_bits, deposit_expiry, auto_init,
    host_settle_address_hex.
    """

    DEFAULTS = {
        "listen_host": "127.0.0.1",
        "listen_port": "0",
        "simchain_host": "127.0.0.1",
        "simchain_port": "0",
        "snapshot_path": "",
        "min_routing_fee": "1",
        "host_pubkey_hex": "",
        "host_key_path": "",  # alternative to host_pubkey_hex: a key file
        "host_settle_address_hex": "00" * 20,
        "hub_key_path": "",
        "start_height": "0",
        "fee_window": "2016",
        "crypto_mode": "fast-test",
        "retarget_interval": "100000",
        "target_spacing": "600",
        "pow_limit_bits": str(0x207FFFFF),
        "deposit_expiry": "100",
        "auto_init": "1",
    }

    def __init__(self, path: str | None = None, overrides: dict | None = None):
        values = dict(self.DEFAULTS)
        if path:
            with open(path) as fh:
                for line in fh:
                    line = line.strip()
                    if not line or line.startswith("#") or "=" not in line:
                        continue
                    key, _, value = line.partition("=")
                    values[key.strip()] = value.strip()
        for key in list(values):
            env = os.environ.get(f"ROUTEE_{key.upper()}")
            if env is not None:
                values[key] = env
        for key, value in (overrides or {}).items():
            if value is not None:
                values[key] = str(value)
        self.values = values

    def __getitem__(self, key: str) -> str:
        return self.values[key]

    def get_int(self, key: str) -> int:
        return int(self.values[key], 0)

    def chain_params(self) -> ChainParams:
        return ChainParams(
            self.get_int("retarget_interval"),
            self.get_int("target_spacing"),
            self.get_int("pow_limit_bits"),
        )

    def hub_config(self) -> HubConfig:
        host_pk = bytes.fromhex(self["host_pubkey_hex"])
        if not host_pk and self["host_key_path"]:
            from .client import Keys

            host_pk = Keys.load(self["host_key_path"]).public
        return HubConfig(
            host_public_key=host_pk,
            host_settle_address=bytes.fromhex(self["host_settle_address_hex"]),
            min_routing_fee=self.get_int("min_routing_fee"),
            chain_params=self.chain_params(),
            suite=CryptoSuite.from_mode(self["crypto_mode"]),
            deposit_expiry_blocks=self.get_int("deposit_expiry"),
        )


class HubDaemon:
    def __init__(self, config: DaemonConfig):
        self.config = config
        self.hub = Hub(config.hub_config())
        snapshot_path = config["snapshot_path"]
        if snapshot_path and os.path.exists(snapshot_path):
            with open(snapshot_path, "rb") as fh:
                self.hub = snapshot_mod.load_hub(fh.read())
        hub_key = None
        key_path = config["hub_key_path"]
        if key_path and os.path.exists(key_path):
            hub_key = bytes.fromhex(open(key_path).read().strip())
        self.endpoint = HubSessionEndpoint(hub_key)
        self.simchain = SimchainClient(config["simchain_host"], config.get_int("simchain_port"))
        self.server = FrameServer(
            (config["listen_host"], config.get_int("listen_port")), self._handle
        )
        self._snapshot_lock = threading.Lock()

    @property
    def port(self) -> int:
        return self.server.port

    # --- lifecycle ---

    def run_init(self) -> None:
        """Pull the start header, the newer headers, and the fee-window blocks
        from the block source, then initialize the hub."""
        tip_height, _ = self.simchain.tip()
        start_height = self.config.get_int("start_height")
        interval = self.config.get_int("retarget_interval")
        if start_height % interval:
            raise InitFailure(f"start height {start_height} not aligned to interval {interval}")
        raw = self.simchain.fetch_headers(start_height, tip_height - start_height + 1)
        if not raw:
            raise InitFailure("block source returned no headers")
        from .headers import BlockHeader

        headers = [BlockHeader.deserialize(h) for h in raw]
        window = self.config.get_int("fee_window")
        first_fee_height = max(start_height, tip_height - window + 1)
        fee_blocks = []
        for height in range(first_fee_height, tip_height + 1):
            block = self.simchain.get_block(height)
            if block is not None:
                fee_blocks.append(block)
        self.hub.initialize(headers[0], start_height, headers[1:], fee_blocks)

    def start(self) -> None:
        if self.config["auto_init"] not in ("0", "false") and self.hub.chain is None:
            self.run_init()
        self.server.start_background()

    def stop(self) -> None:
        self.write_snapshot()
        self.server.shutdown()
        self.server.server_close()

    def write_snapshot(self) -> int:
        path = self.config["snapshot_path"]
        if not path:
            return 0
        with self._snapshot_lock:
            data = snapshot_mod.dump_hub(self.hub)
            tmp = path + ".tmp"
            with open(tmp, "wb") as fh:
                fh.write(data)
            os.replace(tmp, path)
        return len(data)

    # --- frame handling ---

    def _handle(self, frame_type: int, payload: bytes, ctx: dict):
        if frame_type == wire.FRAME_HUB_INFO_REQ:
            body = wire.encode_ok(
                {
                    "static_public": self.endpoint.static_public,
                    "measurement": self.endpoint.measurement,
                }
            )
            return wire.FRAME_HUB_INFO_RESP, body
        if frame_type == wire.FRAME_HANDSHAKE_INIT:
            ack, session = self.endpoint.handle_init(payload)
            ctx["session"] = session
            return wire.FRAME_HANDSHAKE_ACK, ack
        if frame_type == wire.FRAME_ENVELOPE:
            try:
                session = ctx.get("session")
                if session is None:
                    session = self.endpoint.session_for(payload)
                plaintext = session.open(payload)
            except SessionAborted:
                # replay/gap/tamper: no reply at all, the envelope is dead
                return None
            reply = self._dispatch(plaintext, session.session_id)
            return wire.FRAME_ENVELOPE, session.seal(reply)
        return None

    def _dispatch(self, plaintext: bytes, session_id: bytes) -> bytes:
        try:
            req = wire.decode_request(plaintext)
            if isinstance(req, wire.Snapshot):
                return wire.encode_ok({"bytes_written": self.write_snapshot()})
            if isinstance(req, wire.InitRun):
                if self.hub.chain is None:
                    self.run_init()
                    return wire.encode_ok({"initialized": 1})
                return wire.encode_ok({"initialized": 1, "already": 1})
            return wire.encode_ok(self.hub.apply_request(req, session_id))
        except RouteeError as exc:
            return wire.encode_err(exc)
        except Exception as exc:  # defensive: never kill the session thread
            return wire.encode_err(RouteeError(str(exc)))
