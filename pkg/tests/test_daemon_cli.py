import json

import pytest

from routee import cli, wire
from routee.client import Keys, RemoteHub
from routee.daemon import DaemonConfig, HubDaemon
from routee.headers import ChainParams
from routee.simchain import SimNode
from routee.simchain_server import SimchainClient, SimchainServer


@pytest.fixture
def stack(tmp_path):
    """simchain server + hub daemon over real sockets, plus host key files."""
    node = SimNode(ChainParams.regtest(), seed=5)
    node.mine_blocks(4)
    sim_server = SimchainServer(node)
    sim_server.start()

    host_key = Keys.generate(cli.get_scheme("fast"))
    host_key_path = tmp_path / "host.key"
    host_key.save(str(host_key_path))

    config = DaemonConfig(overrides={
        "simchain_port": sim_server.port,
        "min_routing_fee": 2,
        "snapshot_path": str(tmp_path / "hub.snap"),
        "host_pubkey_hex": host_key.public.hex(),
    })
    daemon = HubDaemon(config)
    daemon.start()
    try:
        yield {
            "node": node,
            "sim": SimchainClient("127.0.0.1", sim_server.port),
            "sim_port": sim_server.port,
            "daemon": daemon,
            "host_key_path": str(host_key_path),
            "tmp": tmp_path,
        }
    finally:
        daemon.stop()
        sim_server.stop()


def run_cli(capsys, argv):
    code = cli.main(["--json"] + argv)
    out = capsys.readouterr()
    lines = [json.loads(line) for line in out.out.splitlines() if line.strip()]
    return code, (lines[-1] if lines else {}), out.err


def test_daemon_auto_initializes_to_simchain_tip(stack):
    with RemoteHub("127.0.0.1", stack["daemon"].port) as hub:
        state = hub.request(wire.QueryLatestBlock())
        assert state["height"] == stack["node"].tip_height
        status = hub.request(wire.InitStatus())
        assert status["initialized"] == 1


def test_cli_user_flow_over_daemon(stack, capsys, tmp_path):
    port = str(stack["daemon"].port)
    sim = f"127.0.0.1:{stack['sim_port']}"
    alice_path = str(tmp_path / "alice.key")

    code, out, _ = run_cli(capsys, ["keygen", "--out", alice_path])
    assert code == 0
    alice_addr = out["address"]

    code, out, _ = run_cli(capsys, ["add-user", "--port", port, "--key", alice_path,
                                    "--settle-address", "aa" * 20])
    assert code == 0
    assert out["user_address"] == alice_addr

    code, out, _ = run_cli(capsys, ["add-deposit", "--port", port, "--key", alice_path])
    assert code == 0
    manager = out["manager_address"]

    stack["sim"].pay(bytes.fromhex(manager), 100_000)
    stack["sim"].mine(1)
    code, out, _ = run_cli(capsys, ["insert-block", "--port", port,
                                    "--host-key", stack["host_key_path"], "--simchain", sim])
    assert code == 0
    assert out["inserted"] == 1

    code, out, _ = run_cli(capsys, ["balance", "--port", port, "--key", alice_path])
    assert code == 0
    assert out["balance"] == 100_000 - 148  # fee_avg 1 on an empty window

    code, out, _ = run_cli(capsys, ["ledger", "--port", port])
    assert code == 0
    assert out["conservation_ok"] == 1


def test_cli_settle_fee_too_low_is_structured_error(stack, capsys, tmp_path):
    port = str(stack["daemon"].port)
    alice_path = str(tmp_path / "alice2.key")
    run_cli(capsys, ["keygen", "--out", alice_path])
    run_cli(capsys, ["add-user", "--port", port, "--key", alice_path,
                     "--settle-address", "bb" * 20])
    code = cli.main(["--json", "settle", "--port", port, "--key", alice_path,
                     "--amount", "10", "--fee", "33"])  # below 34 * fee_avg
    captured = capsys.readouterr()
    assert code == 2
    err = json.loads(captured.err.strip())
    assert err["error"] == "fee-too-low"


def test_cli_set_boundary_syncs_headers(stack, capsys, tmp_path):
    port = str(stack["daemon"].port)
    sim = f"127.0.0.1:{stack['sim_port']}"
    bob_path = str(tmp_path / "bob.key")
    run_cli(capsys, ["keygen", "--out", bob_path])
    run_cli(capsys, ["add-user", "--port", port, "--key", bob_path,
                     "--settle-address", "cc" * 20])

    code, out, _ = run_cli(capsys, ["sync-headers", "--peer", sim])
    assert code == 0
    assert out["tip_height"] == stack["node"].tip_height
    assert out["storage_bytes"] == 80 * (stack["node"].tip_height + 1)

    code, out, _ = run_cli(capsys, ["set-boundary", "--port", port, "--key", bob_path,
                                    "--peer", sim, "--k", "1"])
    assert code == 0
    assert out["boundary_block"] == stack["node"].tip_height - 1


def test_daemon_snapshot_restart_restores_ledger(stack, capsys, tmp_path):
    port = str(stack["daemon"].port)
    alice_path = str(tmp_path / "alice3.key")
    run_cli(capsys, ["keygen", "--out", alice_path])
    run_cli(capsys, ["add-user", "--port", port, "--key", alice_path,
                     "--settle-address", "dd" * 20])
    code, out, _ = run_cli(capsys, ["snapshot", "--port", port])
    assert code == 0
    assert out["bytes_written"] > 0

    before = stack["daemon"].hub.query_ledger()
    stack["daemon"].stop()  # also writes the shutdown snapshot

    daemon2 = HubDaemon(DaemonConfig(overrides={
        "simchain_port": stack["sim_port"],
        "min_routing_fee": 2,
        "snapshot_path": str(stack["tmp"] / "hub.snap"),
        "host_pubkey_hex": Keys.load(stack["host_key_path"]).public.hex(),
    }))
    daemon2.start()
    try:
        assert daemon2.hub.query_ledger() == before
        assert daemon2.hub.users == stack["daemon"].hub.users
    finally:
        daemon2.stop()


def test_config_precedence_env_then_flags(tmp_path, monkeypatch):
    cfg = tmp_path / "hub.conf"
    cfg.write_text("min_routing_fee=7\nfee_window=99\n")
    config = DaemonConfig(str(cfg))
    assert config.get_int("min_routing_fee") == 7
    monkeypatch.setenv("ROUTEE_MIN_ROUTING_FEE", "9")
    config = DaemonConfig(str(cfg))
    assert config.get_int("min_routing_fee") == 9
    config = DaemonConfig(str(cfg), overrides={"min_routing_fee": 11})
    assert config.get_int("min_routing_fee") == 11
    assert config.get_int("fee_window") == 99


def test_daemon_unreachable_block_source_fails_startup(capsys):
    # nothing listens on port 1; auto-init must abort with a diagnostic
    code = cli.hubd_main(["--json", "--oneshot", "--set", "simchain_port=1",
                          "--set", "host_pubkey_hex=" + "00" * 32])
    captured = capsys.readouterr()
    assert code == 2
    assert "error" in json.loads(captured.err.strip())


def test_simchain_cli_verbs(stack, capsys):
    addr = f"127.0.0.1:{stack['sim_port']}"
    code = cli.simchain_main(["--json", "tip", "--addr", addr])
    out = json.loads(capsys.readouterr().out.strip())
    assert code == 0
    assert out["height"] == stack["node"].tip_height

    code = cli.simchain_main(["--json", "mine", "--addr", addr, "--count", "2"])
    out = json.loads(capsys.readouterr().out.strip())
    assert code == 0
    assert out["tip"] == stack["node"].tip_height

    code = cli.simchain_main(["--json", "pay", "--addr", addr, "--to", "ee" * 20,
                              "--amount", "500"])
    out = json.loads(capsys.readouterr().out.strip())
    assert code == 0
    assert len(out["txid"]) == 64
