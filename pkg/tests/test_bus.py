from __future__ import annotations

import json
import time
import urllib.request

import pytest

from artts.bus import BusServer
from artts.engine import load
from tests.netutil import LineClient, WsClient


@pytest.fixture()
def server(reference_station):
    engine = load(reference_station)
    srv = BusServer(engine, ("127.0.0.1", 0), ("127.0.0.1", 0), mode="stepped")
    srv.start()
    yield srv
    srv.stop()


@pytest.fixture()
def client(server):
    c = LineClient(server.tcp_port)
    yield c
    c.close()


def test_read_after_reset(client):
    assert client.command("READ SHUTTER_PERMIT") == "OK 0"


def test_search_button_lights_led(client):
    assert client.command("WRITE SEARCH_BTN_1 1") == "OK"
    assert client.command("STEP 1") == "OK 10"
    assert client.command("READ SEARCH_LED_A") == "OK 1"


def test_write_output_rejected(client):
    response = client.command("WRITE SHUTTER_PERMIT 1")
    assert response.startswith("ERR not-input ")
    assert "SHUTTER_PERMIT" in response


def test_every_error_code(client):
    assert client.command("BOGUS").startswith("ERR unknown-cmd ")
    assert client.command("READ NO_SUCH_POINT").startswith("ERR unknown-point ")
    assert client.command("WRITE SHUTTER_PERMIT 1").startswith("ERR not-input ")
    assert client.command("WRITE SEARCH_BTN_1 7").startswith("ERR bad-value ")
    assert client.command("MODE realtime") == "OK"
    assert client.command("STEP 1") == 'ERR mode "stepped commands rejected in realtime"'
    assert client.command("MODE stepped") == "OK"
    client.send_raw(b"READ " + b"X" * 2000 + b"\n")
    assert client.recv_line() == 'ERR cap "line too long"'
    # the connection survives every error
    assert client.command("READ SHUTTER_PERMIT") == "OK 0"


def test_snapshot_lists_every_point(client, reference_station):
    client.send("SNAPSHOT")
    assert client.recv_line() == "OK"
    seen = []
    while True:
        line = client.recv_line()
        if line == ".":
            break
        name, value = line.split(" ")
        assert value in ("0", "1")
        seen.append(name)
    assert seen == [p.name for p in reference_station.points]


def test_echo_write_then_read(client):
    assert client.command("WRITE DOOR_CLOSED_1 1") == "OK"
    assert client.command("STEP 1") == "OK 10"
    assert client.command("READ DOOR_CLOSED_1") == "OK 1"


def test_run_command(client):
    assert client.command("RUN 100") == "OK 100"
    assert client.command("RUN 15").startswith("ERR bad-value ")


def test_fault_commands(client):
    assert client.command("FAULT A WATCHDOG") == "OK"
    assert client.command("STEP 1") == "OK 10"
    assert client.command("READ FAULT_LED_A") == "OK 1"
    assert client.command("FAULT A NoFault").startswith("ERR bad-value ")
    assert client.command("FAULT C WATCHDOG").startswith("ERR bad-value ")
    assert client.command("RESETF") == "OK"
    assert client.command("STEP 1") == "OK 20"
    assert client.command("READ FAULT_LED_A") == "OK 0"


def test_subscription_events(client):
    assert client.command("SUB SEARCH_LED_A,SEARCH_LED_B") == "OK"
    assert client.command("WRITE SEARCH_BTN_1 1") == "OK"
    client.send("STEP 2")
    lines = [client.recv_line() for _ in range(3)]
    # events for both LEDs (A on scan 1, B on scan 2), then the OK
    assert lines[0] == "EVT 10 SEARCH_LED_A 1"
    assert lines[1] == "EVT 20 SEARCH_LED_B 1"
    assert lines[2] == "OK 20"


def test_subscription_unknown_point(client):
    assert client.command("SUB NOPE").startswith("ERR unknown-point ")


def test_at_most_once_per_point_per_scan(client):
    assert client.command("SUB WARNING_BEACON_A") == "OK"
    assert client.command("WRITE SEARCH_BTN_1 1") == "OK"
    client.send("STEP 5")
    lines = []
    while True:
        line = client.recv_line()
        lines.append(line)
        if line.startswith("OK"):
            break
    events = [l for l in lines if l.startswith("EVT")]
    assert events == ["EVT 10 WARNING_BEACON_A 1"]  # one transition, one event


def test_reset_resynchronizes_subscribers(client):
    assert client.command("SUB SEARCH_LED_A") == "OK"
    assert client.command("WRITE SEARCH_BTN_1 1") == "OK"
    client.send("STEP 1")
    assert client.recv_line() == "EVT 10 SEARCH_LED_A 1"
    assert client.recv_line() == "OK 10"
    client.send("RESET")
    assert client.recv_line() == "EVT 0 SEARCH_LED_A 0"
    assert client.recv_line() == "OK"


def test_two_clients_serialized(server):
    one = LineClient(server.tcp_port)
    two = LineClient(server.tcp_port)
    try:
        assert one.command("WRITE DOOR_CLOSED_1 1") == "OK"
        assert two.command("WRITE DOOR_CLOSED_2 1") == "OK"
        assert one.command("STEP 1") == "OK 10"
        assert two.command("READ DOOR_CLOSED_1") == "OK 1"
        assert one.command("READ DOOR_CLOSED_2") == "OK 1"
    finally:
        one.close()
        two.close()


def test_realtime_liveness(server):
    client = LineClient(server.tcp_port)
    try:
        assert client.command("MODE realtime") == "OK"
        assert client.command("WRITE SEARCH_BTN_1 1") == "OK"
        deadline = time.time() + 5
        while time.time() < deadline:
            if client.command("READ SEARCH_LED_A") == "OK 1":
                break
            time.sleep(0.02)
        else:
            pytest.fail("scans did not advance in realtime mode")
    finally:
        client.command("MODE stepped")
        client.close()


# -- bridge ---------------------------------------------------------------------


def test_bridge_speaks_identical_protocol(server):
    ws = WsClient(server.bridge_port)
    try:
        assert ws.command("READ SHUTTER_PERMIT") == "OK 0"
        assert ws.command("WRITE SEARCH_BTN_1 1") == "OK"
        assert ws.command("STEP 1") == "OK 10"
        assert ws.command("READ SEARCH_LED_A") == "OK 1"
        assert ws.command("BOGUS").startswith("ERR unknown-cmd ")
    finally:
        ws.close()


def test_bridge_sessions_have_independent_subscriptions(server):
    ws1 = WsClient(server.bridge_port)
    ws2 = WsClient(server.bridge_port)
    tcp = LineClient(server.tcp_port)
    try:
        assert ws1.command("SUB SEARCH_LED_A") == "OK"
        assert tcp.command("WRITE SEARCH_BTN_1 1") == "OK"
        assert tcp.command("STEP 1") == "OK 10"
        assert ws1.recv_line() == "EVT 10 SEARCH_LED_A 1"
        # ws2 never subscribed: a READ answers immediately with no EVT first
        assert ws2.command("READ SEARCH_LED_A") == "OK 1"
    finally:
        ws1.close()
        ws2.close()
        tcp.close()


def test_bridge_disconnect_leaves_engine_running(server):
    ws = WsClient(server.bridge_port)
    assert ws.command("SUB SHUTTER_PERMIT") == "OK"
    ws.close()
    time.sleep(0.05)
    tcp = LineClient(server.tcp_port)
    try:
        assert tcp.command("STEP 1") == "OK 10"
        assert tcp.command("READ SHUTTER_PERMIT") == "OK 0"
    finally:
        tcp.close()


def test_station_json_over_http(server, reference_station):
    url = f"http://127.0.0.1:{server.bridge_port}/station.json"
    with urllib.request.urlopen(url, timeout=5) as response:
        doc = json.loads(response.read())
    assert doc["name"] == reference_station.name
    assert len(doc["panels"]) == 3
    assert [p["name"] for p in doc["points"]] == [p.name for p in reference_station.points]


def test_echo_property_all_inputs(client, reference_station):
    """WRITE p v then READ p after one STEP returns v, for every input."""
    for value in (1, 0):
        for point in reference_station.inputs():
            assert client.command(f"WRITE {point.name} {value}") == "OK"
        client.send("STEP 1")
        while not client.recv_line().startswith("OK"):
            pass
        for point in reference_station.inputs():
            assert client.command(f"READ {point.name}") == f"OK {value}"


def test_subscription_completeness_against_trace(server, reference_station):
    """A subscriber sees exactly the transitions a local replay of the same
    stimulus shows in its ScanRecords."""
    import random

    from artts.engine import load as load_engine

    rng = random.Random(31)
    inputs = [p.name for p in reference_station.inputs()]
    watched = ["SEARCH_LED_A", "SEARCH_LED_B", "SECURED_LED", "WARNING_BEACON_B"]
    script = []
    for _ in range(40):
        writes = [
            (name, rng.randrange(2)) for name in inputs if rng.random() < 0.25
        ]
        script.append(writes)

    client = LineClient(server.tcp_port)
    try:
        assert client.command("RESET") == "OK"
        assert client.command(f"SUB {','.join(watched)}") == "OK"
        events = []
        for writes in script:
            for name, value in writes:
                assert client.command(f"WRITE {name} {value}") == "OK"
            client.send("STEP 1")
            while True:
                line = client.recv_line()
                if line.startswith("EVT"):
                    _, t, point, value = line.split(" ")
                    events.append((int(t), point, int(value)))
                else:
                    assert line.startswith("OK")
                    break
    finally:
        client.close()

    # independent replay: transitions extracted from the scan records
    engine = load_engine(reference_station)
    expected = []
    last = {name: engine.read_point(name) for name in watched}
    for writes in script:
        for name, value in writes:
            engine.write_point(name, value)
        record = engine.step()
        merged = {**record.inputs, **record.outputs}
        for name in watched:
            if merged[name] != last[name]:
                last[name] = merged[name]
                expected.append((record.time_ms, name, merged[name]))
    assert events == expected


def test_concurrent_fuzz_clients_serialize(server, reference_station):
    """Hammer the server from several threads; every client sees exactly one
    grammatical response per command and the engine ends in a sane state."""
    import random
    import threading

    inputs = [p.name for p in reference_station.inputs()]
    errors: list[str] = []

    def worker(seed: int) -> None:
        rng = random.Random(seed)
        client = LineClient(server.tcp_port)
        try:
            for _ in range(120):
                roll = rng.random()
                if roll < 0.5:
                    response = client.command(f"WRITE {rng.choice(inputs)} {rng.randrange(2)}")
                    ok = response == "OK"
                elif roll < 0.8:
                    response = client.command(f"READ {rng.choice(inputs)}")
                    ok = response in ("OK 0", "OK 1")
                elif roll < 0.9:
                    response = client.command("STEP 1")
                    ok = response.startswith("OK ")
                else:
                    response = client.command("BOGUS")
                    ok = response.startswith("ERR unknown-cmd")
                if not ok:
                    errors.append(response)
        except OSError as err:
            errors.append(str(err))
        finally:
            client.close()

    threads = [threading.Thread(target=worker, args=(n,)) for n in range(6)]
    for t in threads:
        t.start()
    for t in threads:
        t.join(timeout=30)
    assert errors == []
    check = LineClient(server.tcp_port)
    try:
        for point in reference_station.points:
            assert check.command(f"READ {point.name}") in ("OK 0", "OK 1")
    finally:
        check.close()
