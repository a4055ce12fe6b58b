import pytest

from routee.client import (
    Keys,
    build_add_deposit,
    build_insert_block,
    build_payment,
    build_settle,
    build_terminate,
    build_update_boundary,
)
from routee.crypto import CryptoSuite
from routee.headers import ChainParams
from routee.hub import Hub, HubConfig
from routee.simchain import SimNode
from routee import wire

FAST = CryptoSuite.fast_test()


@pytest.fixture
def suite():
    return FAST


@pytest.fixture
def node():
    return SimNode(ChainParams.regtest(), seed=11)


class HubHarness:
    """A hub wired to a simchain node with signing helpers, mirroring what the
    daemon plus CLI do, but in process."""

    def __init__(self, seed=11, min_routing_fee=2, premine=8, params=None, fee_blocks=None):
        from routee.crypto import DeterministicRng

        self.suite = FAST
        self.params = params or ChainParams.regtest()
        self.node = SimNode(self.params, seed=seed)
        self.node.mine_blocks(premine)
        self.key_rng = DeterministicRng(seed ^ 0x517)
        self.host = Keys.generate(self.suite.auth, self.key_rng)
        self.host_settle = b"\x68" * 20
        config = HubConfig(
            self.host.public,
            self.host_settle,
            min_routing_fee,
            self.params,
            self.suite,
            rng_seed=seed,
        )
        self.hub = Hub(config)
        headers = [b.header for b in self.node.blocks]
        window = fee_blocks if fee_blocks is not None else self.node.blocks
        self.hub.initialize(headers[0], 0, headers[1:], window)

    def new_user(self, settle=None):
        keys = Keys.generate(self.suite.auth, self.key_rng)
        settle = settle or keys.address  # settle to an address derived from the key
        self.hub.add_user(keys.public, settle)
        return keys

    def nonce(self, keys):
        return self.hub.users[keys.address].nonce

    def insert(self, block):
        msg = build_insert_block(self.suite.auth, self.host, block.serialize(), block.header.hash())
        return self.hub.insert_block(msg)

    def catch_up(self):
        start = self.hub.chain.tip_height + 1
        for height in range(start, self.node.tip_height + 1):
            self.insert(self.node.get_block(height))

    def deposit(self, keys, amount, fee=None):
        """On-chain deposit; the default fee makes the deposit block's fee
        sample equal to the current average, keeping fee_avg stable."""
        if fee is None:
            fee = 226 * self.hub.estimator.fee_avg  # 1-in/2-out formula size
        manager = self.hub.add_deposit(build_add_deposit(self.suite.auth, keys, self.nonce(keys)))
        self.node.pay(manager, amount, fee=fee)
        self.insert(self.node.mine_block())
        return manager

    def set_boundary(self, keys, height=None):
        height = self.hub.chain.tip_height if height is None else height
        msg = build_update_boundary(
            self.suite.auth, keys, self.nonce(keys), height, self.hub.chain.hash_at(height)
        )
        return self.hub.update_boundary_block(msg)

    def pay(self, sender, receiver_addr, amount, fee):
        msg = build_payment(
            self.suite.auth, sender, self.nonce(sender), [wire.PaymentItem(receiver_addr, amount, fee)]
        )
        return self.hub.multi_hop_payment(msg)

    def pay_batch(self, sender, items):
        batch = [wire.PaymentItem(addr, amount, fee) for addr, amount, fee in items]
        msg = build_payment(self.suite.auth, sender, self.nonce(sender), batch)
        return self.hub.multi_hop_payment(msg)

    def settle(self, keys, amount, fee):
        return self.hub.request_settlement(
            build_settle(self.suite.auth, keys, self.nonce(keys), amount, fee)
        )

    def terminate(self):
        return self.hub.terminate(
            build_terminate(self.suite.auth, self.host, self.hub.chain.tip_hash)
        )

    def confirm_outstanding(self):
        assert self.hub.plan is not None
        self.node.submit_tx(self.hub.plan.transaction)
        return self.insert(self.node.mine_block())

    def balance(self, keys):
        return self.hub.users[keys.address].balance


@pytest.fixture
def harness():
    return HubHarness()


def run_conservation_mix(seed, n_ops, n_users, assert_each_step=True):
    """Randomized operation soup; the ledger identity must hold after every
    accepted or rejected operation. Returns the harness for final checks."""
    import random

    from routee.errors import RouteeError

    rng = random.Random(seed)
    harness = HubHarness(seed=seed, min_routing_fee=2)
    users = [harness.new_user() for _ in range(n_users)]
    fee_avg = harness.hub.estimator.fee_avg

    def check():
        if assert_each_step:
            parts = harness.hub.conservation()
            assert parts["ok"], parts

    for step in range(n_ops):
        roll = rng.random()
        try:
            if roll < 0.18:
                keys = rng.choice(users)
                harness.deposit(keys, rng.randrange(5_000, 80_000))
            elif roll < 0.38:
                keys = rng.choice(users)
                height = rng.randrange(1, harness.hub.chain.tip_height + 1)
                harness.set_boundary(keys, height)
            elif roll < 0.75:
                sender = rng.choice(users)
                batch = [
                    (rng.choice(users).address, rng.randrange(1, 2_000), rng.randrange(2, 40))
                    for _ in range(rng.randrange(1, 4))
                ]
                harness.pay_batch(sender, batch)
            elif roll < 0.92:
                keys = rng.choice(users)
                fee = 34 * fee_avg + rng.randrange(0, 900)
                harness.settle(keys, rng.randrange(1, 3_000), fee)
            elif roll < 0.97:
                harness.insert(harness.node.mine_block())
            else:
                if harness.hub.plan is not None:
                    harness.node.submit_tx(harness.hub.plan.transaction)
                harness.insert(harness.node.mine_block())
        except RouteeError:
            pass
        check()

    harness.terminate()
    check()
    rounds = 0
    while not harness.hub.termination_complete and rounds < 64:
        if harness.hub.plan is not None:
            harness.node.submit_tx(harness.hub.plan.transaction)
        harness.insert(harness.node.mine_block())
        check()
        rounds += 1
    return harness
