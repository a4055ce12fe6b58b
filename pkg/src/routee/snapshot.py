"""Versioned binary dump of the full hub state.

Layout: magic "RTEE", 2-byte version, then canonical encodings of every
table. Loading reconstructs an identical hub, including the deterministic
RNG position, so manager-key generation continues where it left off.

Known limitation: snapshots carry no rollback protection. An operator
restoring an old file resurrects old state; guarding against that would need
a monotonic counter outside the snapshot itself.
"""

from __future__ import annotations

from .codec import Reader, Writer
from .crypto import ADDRESS_SIZE, CryptoSuite, DeterministicRng
from .errors import SnapshotError
from .headers import BlockHeader, ChainParams, HeaderChain
from .hub import Hub, HubConfig, OwnedDeposit, PendingDeposit, SettleRequest, SettlementPlan, UserState
from .transactions import Transaction

MAGIC = b"RTEE"
VERSION = 1


def dump_hub(hub: Hub) -> bytes:
    with hub._lock:
        w = Writer()
        w.raw(MAGIC).u16(VERSION)

        cfg = hub.config
        w.lp_bytes(hub.suite.mode.encode())
        w.lp_bytes(cfg.host_public_key)
        w.fixed(cfg.host_settle_address, ADDRESS_SIZE)
        w.u64(cfg.min_routing_fee)
        params = cfg.chain_params
        w.u64(params.retarget_interval).u64(params.target_spacing)
        w.u32(params.pow_limit_bits).u64(params.block_subsidy)
        w.u64(cfg.deposit_expiry_blocks).u64(cfg.fee_window_capacity)

        seed, counter = hub.rng.getstate()
        w.fixed(seed, 32).u64(counter)

        if hub.chain is None:
            w.u8(0)
        else:
            w.u8(1).u64(hub.chain.start_height).u32(len(hub.chain.headers))
            for header in hub.chain.headers:
                w.raw(header.serialize())

        w.u32(len(hub.estimator.window))
        for sample in hub.estimator.window:
            w.u64(sample)

        w.u32(len(hub.users))
        for user in hub.users.values():
            w.fixed(user.user_address, ADDRESS_SIZE)
            w.lp_bytes(user.public_key)
            w.fixed(user.settle_address, ADDRESS_SIZE)
            w.u64(user.nonce).u64(user.balance)
            w.opt_u64(user.max_source_block).opt_u64(user.boundary_block)

        w.u32(len(hub.pending_deposits))
        for pending in hub.pending_deposits.values():
            w.fixed(pending.manager_address, ADDRESS_SIZE)
            w.lp_bytes(pending.manager_secret).lp_bytes(pending.manager_public)
            w.fixed(pending.beneficiary, ADDRESS_SIZE)
            w.u64(pending.registered_height).u64(pending.expiry_height)

        w.u32(len(hub.owned))
        for deposit in hub.owned.values():
            w.fixed(deposit.outpoint[0], 32).u32(deposit.outpoint[1])
            w.u64(deposit.value).u64(deposit.fare_precollected).u64(deposit.source_height)
            w.fixed(deposit.lock_address, ADDRESS_SIZE)

        w.u32(len(hub.manager_keys))
        for address, (sk, pk) in hub.manager_keys.items():
            w.fixed(address, ADDRESS_SIZE).lp_bytes(sk).lp_bytes(pk)

        w.u32(len(hub.queue))
        for request in hub.queue:
            _write_request(w, request)
        w.u64(hub._next_enqueue_seq)

        if hub.plan is None:
            w.u8(0)
        else:
            plan = hub.plan
            w.u8(1)
            w.lp_bytes32(plan.transaction.serialize())
            w.u32(len(plan.selected))
            for request in plan.selected:
                _write_request(w, request)
            w.u64(plan.s_amount).u64(plan.b_total)
            w.u64(plan.tx_inputs).u64(plan.tx_outputs).u64(plan.tx_size).u64(plan.tx_fee)
            w.u64(plan.rf_confirmed_on_confirm).u64(plan.collected).u64(plan.host_subsidy)
            w.fixed(plan.leftover_outpoint[0], 32).u32(plan.leftover_outpoint[1])
            w.u64(plan.leftover_value)
            w.fixed(plan.leftover_address, ADDRESS_SIZE)

        w.u64(hub.rf_pending).u64(hub.rf_confirmed).u64(hub.host_balance)
        w.u64(hub.fee_reserve).u64(hub.rf_collected_total).u64(hub.settled_amount_total)
        w.u64(hub.plans_confirmed)
        w.u8(int(hub.terminating))
        return w.getvalue()


def _write_request(w: Writer, request: SettleRequest) -> None:
    w.fixed(request.user_address, ADDRESS_SIZE)
    w.fixed(request.settle_address, ADDRESS_SIZE)
    w.u64(request.amount).u64(request.fee).u64(request.enqueue_seq)
    w.u8(int(request.is_host))


def _read_request(r: Reader) -> SettleRequest:
    return SettleRequest(
        r.fixed(ADDRESS_SIZE),
        r.fixed(ADDRESS_SIZE),
        r.u64(),
        r.u64(),
        r.u64(),
        bool(r.u8()),
    )


def load_hub(data: bytes) -> Hub:
    r = Reader(data)
    if r.fixed(4) != MAGIC:
        raise SnapshotError("bad magic")
    version = r.u16()
    if version != VERSION:
        raise SnapshotError(f"unsupported snapshot version {version}")

    mode = r.lp_bytes().decode()
    host_public_key = r.lp_bytes()
    host_settle_address = r.fixed(ADDRESS_SIZE)
    min_routing_fee = r.u64()
    params = ChainParams(r.u64(), r.u64(), r.u32(), r.u64())
    deposit_expiry = r.u64()
    window_capacity = r.u64()

    config = HubConfig(
        host_public_key,
        host_settle_address,
        min_routing_fee,
        params,
        CryptoSuite.from_mode(mode),
        deposit_expiry,
        window_capacity,
    )
    hub = Hub(config)
    hub.rng = DeterministicRng.fromstate((r.fixed(32), r.u64()))

    if r.u8():
        start_height = r.u64()
        count = r.u32()
        headers = [BlockHeader.deserialize(r.fixed(80)) for _ in range(count)]
        chain = HeaderChain(params, headers[0], start_height)
        for header in headers[1:]:
            chain.append(header)
        hub.chain = chain

    for _ in range(r.u32()):
        hub.estimator.window.append(r.u64())

    for _ in range(r.u32()):
        user = UserState(
            r.fixed(ADDRESS_SIZE),
            r.lp_bytes(),
            r.fixed(ADDRESS_SIZE),
            r.u64(),
            r.u64(),
            r.opt_u64(),
            r.opt_u64(),
        )
        hub.users[user.user_address] = user
        hub._known_keys.add(user.public_key)

    for _ in range(r.u32()):
        pending = PendingDeposit(
            r.fixed(ADDRESS_SIZE), r.lp_bytes(), r.lp_bytes(),
            r.fixed(ADDRESS_SIZE), r.u64(), r.u64(),
        )
        hub.pending_deposits[pending.manager_address] = pending

    for _ in range(r.u32()):
        deposit = OwnedDeposit(
            (r.fixed(32), r.u32()), r.u64(), r.u64(), r.u64(), r.fixed(ADDRESS_SIZE)
        )
        hub.owned[deposit.outpoint] = deposit

    for _ in range(r.u32()):
        address = r.fixed(ADDRESS_SIZE)
        hub.manager_keys[address] = (r.lp_bytes(), r.lp_bytes())

    hub.queue = [_read_request(r) for _ in range(r.u32())]
    hub._next_enqueue_seq = r.u64()

    if r.u8():
        tx = Transaction.deserialize(r.lp_bytes32())
        selected = [_read_request(r) for _ in range(r.u32())]
        hub.plan = SettlementPlan(
            transaction=tx,
            selected=selected,
            s_amount=r.u64(),
            b_total=r.u64(),
            tx_inputs=r.u64(),
            tx_outputs=r.u64(),
            tx_size=r.u64(),
            tx_fee=r.u64(),
            rf_confirmed_on_confirm=r.u64(),
            collected=r.u64(),
            host_subsidy=r.u64(),
            leftover_outpoint=(r.fixed(32), r.u32()),
            leftover_value=r.u64(),
            leftover_address=r.fixed(ADDRESS_SIZE),
            input_outpoints=[txin.outpoint for txin in tx.inputs],
        )

    hub.rf_pending = r.u64()
    hub.rf_confirmed = r.u64()
    hub.host_balance = r.u64()
    hub.fee_reserve = r.u64()
    hub.rf_collected_total = r.u64()
    hub.settled_amount_total = r.u64()
    hub.plans_confirmed = r.u64()
    hub.terminating = bool(r.u8())
    r.expect_end()
    return hub
