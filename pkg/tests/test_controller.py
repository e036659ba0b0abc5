"""Tests for the controller: registry, sending, reply handling, ticket
lifecycle, events, and the HTTP API."""

import json
import time
import urllib.error
import urllib.request

import pytest

from unitor import controller as ctl
from unitor import edon80, wireproto
from unitor.mailsim import InProcessTransport, MailStore

KEY_HEX = "123456789abcdef01234"
KEY = edon80.Key80.from_hex(KEY_HEX)
CTRL_ADDR = "ctrl@unitor.local"
NODE_ADDR = "node-a@unitor.local"


def build_config(**kw):
    nodes = (
        ctl.NodeEntry.from_dict(
            {
                "node_id": "fan-node",
                "mailbox": NODE_ADDR,
                "shared_key": KEY_HEX,
                "things": [
                    {"name": "fan1"},
                    {"name": "heater", "actions": ["on"]},
                ],
            }
        ),
    )
    args = dict(
        mailbox=CTRL_ADDR,
        password="pw-c",
        nodes=nodes,
        http_port=0,
        poll_interval_ms=50,
        ticket_timeout_s=5.0,
    )
    args.update(kw)
    return ctl.ControllerConfig(**args)


@pytest.fixture()
def world():
    store = MailStore(((NODE_ADDR, "pw-a"), (CTRL_ADDR, "pw-c")))
    clock = [1000.0]
    c = ctl.Controller(
        build_config(), InProcessTransport(store), clock=lambda: clock[0]
    )
    return store, c, clock


def node_sts(thing="fan1", state="on", seq=1, sender=NODE_ADDR, subject="UNITOR1 fan-node"):
    frame = wireproto.CommandFrame(wireproto.FrameKind.STS, thing, state, seq)
    body = wireproto.seal_body(frame, KEY, edon80.fresh_iv())
    return wireproto.Envelope(sender, CTRL_ADDR, subject, body)


class TestRegistryConfig:
    def test_duplicate_node_ids_rejected(self):
        node = {
            "node_id": "fan-node",
            "mailbox": NODE_ADDR,
            "shared_key": KEY_HEX,
            "things": [{"name": "fan1"}],
        }
        nodes = (ctl.NodeEntry.from_dict(node), ctl.NodeEntry.from_dict(node))
        with pytest.raises(ValueError):
            ctl.ControllerConfig(
                mailbox=CTRL_ADDR, password="x", nodes=nodes
            )

    def test_thing_needs_action(self):
        with pytest.raises(ValueError):
            ctl.ThingSpec("fan1", ())
        with pytest.raises(ValueError):
            ctl.ThingSpec("fan1", ("dim",))

    def test_node_needs_thing(self):
        with pytest.raises(ValueError):
            ctl.NodeEntry.from_dict(
                {"node_id": "x", "mailbox": NODE_ADDR, "shared_key": KEY_HEX, "things": []}
            )

    def test_from_file(self, tmp_path):
        doc = {
            "mailbox": CTRL_ADDR,
            "password": "pw-c",
            "nodes": [
                {
                    "node_id": "fan-node",
                    "mailbox": NODE_ADDR,
                    "shared_key": KEY_HEX,
                    "things": [{"name": "fan1"}],
                }
            ],
        }
        path = tmp_path / "controller.json"
        path.write_text(json.dumps(doc))
        config = ctl.ControllerConfig.from_file(path)
        assert config.nodes[0].subject == "UNITOR1 fan-node"

    def test_unknown_keys_rejected(self):
        with pytest.raises(ValueError, match="mystery"):
            ctl.ControllerConfig.from_dict(
                {"mailbox": CTRL_ADDR, "password": "x", "nodes": [], "mystery": 1}
            )


class TestSendCommand:
    def test_send_delivers_sealed_command(self, world):
        store, c, _ = world
        ticket = c.send_command("fan-node", "fan1", "on")
        assert ticket.state == "sent" and ticket.seq == 1
        inbox = store.fetch(NODE_ADDR, "pw-a")
        assert len(inbox) == 1
        env = inbox[0][1]
        assert env.sender == CTRL_ADDR and env.subject == "UNITOR1 fan-node"
        frame = wireproto.open_body(env.body, KEY)
        assert frame == wireproto.CommandFrame(wireproto.FrameKind.CMD, "fan1", "on", 1)
        assert c.events[-1]["kind"] == "sent"

    def test_seq_strictly_increasing(self, world):
        _, c, _ = world
        seqs = [c.send_command("fan-node", "fan1", "on").seq for _ in range(3)]
        assert seqs == [1, 2, 3]

    def test_unknown_entities(self, world):
        _, c, _ = world
        with pytest.raises(ctl.UnknownNode):
            c.send_command("ghost", "fan1", "on")
        with pytest.raises(ctl.UnknownThing):
            c.send_command("fan-node", "fan9", "on")
        with pytest.raises(ctl.UnsupportedAction):
            c.send_command("fan-node", "heater", "off")

    def test_transport_failure_means_no_ticket(self, world):
        store, c, _ = world

        def boom(env):
            raise OSError("down")

        c.transport.send = boom
        with pytest.raises(OSError):
            c.send_command("fan-node", "fan1", "on")
        assert c.tickets == {}
        assert all(e["kind"] != "sent" for e in c.events)

    def test_repeated_posts_distinct_tickets(self, world):
        _, c, _ = world
        a = c.send_command("fan-node", "fan1", "on")
        b = c.send_command("fan-node", "fan1", "on")
        assert a.id != b.id


class TestPollReplies:
    def test_empty_mailbox(self, world):
        _, c, _ = world
        assert c.poll_replies() == 0

    def test_sts_acks_ticket(self, world):
        store, c, _ = world
        ticket = c.send_command("fan-node", "fan1", "on")
        store.deliver(node_sts(seq=ticket.seq))
        assert c.poll_replies() == 1
        assert c.tickets[ticket.id].state == "acked"
        thing = c.nodes["fan-node"].things["fan1"]
        assert thing.last_known_state == "on"
        assert thing.last_update == 1000.0
        event = c.events[-1]
        assert event["kind"] == "status"
        assert event["payload"]["ticket"] == ticket.id
        assert store.fetch(CTRL_ADDR, "pw-c") == []

    def test_spoofed_sts_ignored(self, world):
        store, c, _ = world
        ticket = c.send_command("fan-node", "fan1", "on")
        store.deliver(node_sts(seq=ticket.seq, sender="evil@attacker.net"))
        assert c.poll_replies() == 0
        assert c.tickets[ticket.id].state == "sent"
        event = c.events[-1]
        assert event["kind"] == "drop_observed"
        assert event["payload"]["reason"] == "UnauthorizedSender"

    def test_wrong_key_sts_dropped(self, world):
        store, c, _ = world
        frame = wireproto.CommandFrame(wireproto.FrameKind.STS, "fan1", "on", 1)
        body = wireproto.seal_body(frame, edon80.Key80(b"\xaa" * 10), edon80.fresh_iv())
        store.deliver(wireproto.Envelope(NODE_ADDR, CTRL_ADDR, "UNITOR1 fan-node", body))
        assert c.poll_replies() == 0
        assert c.events[-1]["payload"]["reason"] == "BadGrammar"

    def test_replayed_sts_dropped(self, world):
        store, c, _ = world
        c.send_command("fan-node", "fan1", "on")
        env = node_sts(seq=1)
        store.deliver(env)
        store.deliver(env)
        assert c.poll_replies() == 1
        assert c.events[-1]["payload"]["reason"] == "StaleSequence"

    def test_unmatched_sts_still_updates_state(self, world):
        store, c, _ = world
        store.deliver(node_sts(thing="fan1", state="off", seq=40))
        assert c.poll_replies() == 1
        assert c.nodes["fan-node"].things["fan1"].last_known_state == "off"
        assert c.events[-1]["payload"]["ticket"] is None

    def test_latest_sts_wins(self, world):
        store, c, clock = world
        store.deliver(node_sts(state="on", seq=1))
        c.poll_replies()
        clock[0] = 1001.0
        store.deliver(node_sts(state="off", seq=2))
        c.poll_replies()
        thing = c.nodes["fan-node"].things["fan1"]
        assert thing.last_known_state == "off" and thing.last_update == 1001.0

    def test_cmd_to_controller_ignored(self, world):
        store, c, _ = world
        frame = wireproto.CommandFrame(wireproto.FrameKind.CMD, "fan1", "on", 1)
        body = wireproto.seal_body(frame, KEY, edon80.fresh_iv())
        store.deliver(wireproto.Envelope(NODE_ADDR, CTRL_ADDR, "UNITOR1 fan-node", body))
        assert c.poll_replies() == 0
        assert c.events[-1]["payload"]["reason"] == "UnexpectedKind"


class TestTicketLifecycle:
    def test_timeout(self, world):
        _, c, clock = world
        ticket = c.send_command("fan-node", "fan1", "on")
        clock[0] += 4.9
        assert c.expire_tickets() == 0
        clock[0] += 0.2
        assert c.expire_tickets() == 1
        assert c.tickets[ticket.id].state == "timed_out"
        assert c.events[-1]["kind"] == "timeout"

    def test_acked_never_times_out(self, world):
        store, c, clock = world
        ticket = c.send_command("fan-node", "fan1", "on")
        store.deliver(node_sts(seq=ticket.seq))
        c.poll_replies()
        clock[0] += 100
        assert c.expire_tickets() == 0
        assert c.tickets[ticket.id].state == "acked"

    def test_late_sts_does_not_revive(self, world):
        store, c, clock = world
        ticket = c.send_command("fan-node", "fan1", "on")
        clock[0] += 10
        c.expire_tickets()
        store.deliver(node_sts(seq=ticket.seq))
        c.poll_replies()
        assert c.tickets[ticket.id].state == "timed_out"
        assert c.nodes["fan-node"].things["fan1"].last_known_state == "on"


class TestEvents:
    def test_events_since(self, world):
        _, c, _ = world
        c.send_command("fan-node", "fan1", "on")
        c.send_command("fan-node", "fan1", "off")
        all_events = c.events_since(0)
        assert [e["event_seq"] for e in all_events] == [1, 2]
        assert c.events_since(1)[0]["event_seq"] == 2
        assert c.events_since(2) == []


def http_get(port, path):
    try:
        with urllib.request.urlopen(f"http://127.0.0.1:{port}{path}", timeout=5) as r:
            return r.status, json.loads(r.read())
    except urllib.error.HTTPError as e:
        return e.code, json.loads(e.read())


def http_post(port, path, doc):
    req = urllib.request.Request(
        f"http://127.0.0.1:{port}{path}",
        data=json.dumps(doc).encode(),
        headers={"Content-Type": "application/json"},
        method="POST",
    )
    try:
        with urllib.request.urlopen(req, timeout=5) as r:
            return r.status, json.loads(r.read())
    except urllib.error.HTTPError as e:
        return e.code, json.loads(e.read())


@pytest.fixture()
def service():
    store = MailStore(((NODE_ADDR, "pw-a"), (CTRL_ADDR, "pw-c")))
    svc = ctl.serve_api(build_config(), transport=InProcessTransport(store))
    try:
        yield store, svc
    finally:
        svc.shutdown()


class TestHttpApi:
    def test_nodes_listing(self, service):
        _, svc = service
        status, doc = http_get(svc.port, "/api/nodes")
        assert status == 200
        assert doc["nodes"][0]["node_id"] == "fan-node"
        names = {t["name"] for t in doc["nodes"][0]["things"]}
        assert names == {"fan1", "heater"}

    def test_single_node_and_404(self, service):
        _, svc = service
        status, doc = http_get(svc.port, "/api/nodes/fan-node")
        assert status == 200 and doc["node_id"] == "fan-node"
        status, _ = http_get(svc.port, "/api/nodes/ghost")
        assert status == 404

    def test_command_flow_to_ack(self, service):
        store, svc = service
        status, doc = http_post(
            svc.port, "/api/nodes/fan-node/things/fan1/command", {"action": "on"}
        )
        assert status == 202
        ticket_id = doc["ticket"]
        status, doc = http_get(svc.port, f"/api/commands/{ticket_id}")
        assert status == 200 and doc["state"] == "sent"
        # play the node's part: answer with a matching STS
        sent = store.fetch(NODE_ADDR, "pw-a")
        frame = wireproto.open_body(sent[0][1].body, KEY)
        store.deliver(node_sts(seq=frame.seq))
        deadline = time.monotonic() + 2
        state = None
        while time.monotonic() < deadline:
            _, doc = http_get(svc.port, f"/api/commands/{ticket_id}")
            state = doc["state"]
            if state == "acked":
                break
            time.sleep(0.02)
        assert state == "acked"

    def test_post_errors(self, service):
        _, svc = service
        status, _ = http_post(
            svc.port, "/api/nodes/ghost/things/fan1/command", {"action": "on"}
        )
        assert status == 404
        status, _ = http_post(
            svc.port, "/api/nodes/fan-node/things/fan9/command", {"action": "on"}
        )
        assert status == 404
        status, _ = http_post(
            svc.port, "/api/nodes/fan-node/things/fan1/command", {"action": "dim"}
        )
        assert status == 422
        status, _ = http_post(
            svc.port, "/api/nodes/fan-node/things/heater/command", {"action": "off"}
        )
        assert status == 422

    def test_events_endpoint(self, service):
        _, svc = service
        http_post(
            svc.port, "/api/nodes/fan-node/things/fan1/command", {"action": "on"}
        )
        status, doc = http_get(svc.port, "/api/events?since=0")
        assert status == 200
        assert doc["events"][0]["kind"] == "sent"
        last = doc["events"][-1]["event_seq"]
        status, doc = http_get(svc.port, f"/api/events?since={last}")
        assert doc["events"] == []
        status, _ = http_get(svc.port, "/api/events?since=abc")
        assert status == 422

    def test_unknown_ticket_404(self, service):
        _, svc = service
        status, _ = http_get(svc.port, f"/api/commands/{'0' * 32}")
        assert status == 404


class TestStaticPanel:
    def test_serves_panel_files(self, tmp_path):
        (tmp_path / "index.html").write_text("<h1>panel</h1>")
        (tmp_path / "app.js").write_text("console.log(1)")
        store = MailStore(((NODE_ADDR, "pw-a"), (CTRL_ADDR, "pw-c")))
        config = build_config(panel_dir=str(tmp_path))
        with ctl.serve_api(config, transport=InProcessTransport(store)) as svc:
            req = urllib.request.urlopen(f"http://127.0.0.1:{svc.port}/", timeout=5)
            assert b"panel" in req.read()
            assert "text/html" in req.headers["Content-Type"]
            req = urllib.request.urlopen(
                f"http://127.0.0.1:{svc.port}/app.js", timeout=5
            )
            assert "javascript" in req.headers["Content-Type"]
            status, _ = http_get(svc.port, "/../secret")
            assert status == 404

    def test_no_panel_dir_404(self, service):
        _, svc = service
        status, _ = http_get(svc.port, "/")
        assert status == 404
