"""End-to-end check of the full crypto suite: RSA-3072 message auth plus
secp256k1 ECDSA on-chain unlocks. Slower than fast-test mode because of RSA
key generation, so deliberately small."""

from routee import wire
from routee.client import (
    Keys,
    build_add_deposit,
    build_insert_block,
    build_payment,
    build_settle,
    build_update_boundary,
)
from routee.crypto import CryptoSuite
from routee.errors import AuthFailure
from routee.headers import ChainParams
from routee.hub import Hub, HubConfig
from routee.simchain import SimNode

import pytest

FULL = CryptoSuite.full()


def test_full_mode_deposit_payment_settlement():
    node = SimNode(ChainParams.regtest(), scheme=FULL.onchain, seed=31)
    node.mine_blocks(3)
    host = Keys.generate(FULL.auth)
    hub = Hub(HubConfig(host.public, b"\x68" * 20, 2, node.params, FULL))
    headers = [b.header for b in node.blocks]
    hub.initialize(headers[0], 0, headers[1:], node.blocks)

    def insert(block):
        msg = build_insert_block(FULL.auth, host, block.serialize(), block.header.hash())
        return hub.insert_block(msg)

    alice = Keys.generate(FULL.auth)
    bob = Keys.generate(FULL.auth)
    a_addr = hub.add_user(alice.public, b"\x0a" * 20)
    b_addr = hub.add_user(bob.public, b"\x0b" * 20)

    manager = hub.add_deposit(build_add_deposit(FULL.auth, alice, 0))
    node.pay(manager, 100_000)
    insert(node.mine_block())
    assert hub.users[a_addr].balance == 100_000 - 148

    tip = hub.chain.tip_height
    hub.update_boundary_block(
        build_update_boundary(FULL.auth, bob, 0, tip, hub.chain.hash_at(tip))
    )
    hub.multi_hop_payment(
        build_payment(FULL.auth, alice, 1, [wire.PaymentItem(b_addr, 500, 5)])
    )
    assert hub.users[b_addr].balance == 500

    # a signature from the wrong RSA key is rejected
    mallory = Keys.generate(FULL.auth)
    forged = build_payment(FULL.auth, mallory, 2, [wire.PaymentItem(b_addr, 1, 5)])
    forged.sender_address = a_addr
    with pytest.raises(AuthFailure):
        hub.multi_hop_payment(forged)

    # the ECDSA-signed settlement validates on the chain
    hub.request_settlement(build_settle(FULL.auth, alice, 2, 10_000, 800))
    plan = hub.plan
    assert plan is not None
    node.submit_tx(plan.transaction)
    insert(node.mine_block())
    assert hub.plans_confirmed == 1
    assert hub.conservation()["ok"]
