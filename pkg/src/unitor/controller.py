"""User-side service: holds the registry of nodes and things, sends sealed
commands with per-node strictly increasing sequence numbers, polls its own
mailbox for STS replies, and serves the HTTP JSON API the CLI and the
browser panel consume.

A reply acks a ticket when its thing and echoed seq match; replies are
themselves run through the same layered filter the nodes use, so a spoofed
STS dies at the sender layer and is only ever visible as a drop_observed
event.
"""

from __future__ import annotations

import json
import re
import threading
import time
import uuid
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlsplit

from . import edon80, qg4, wireproto
from .mailsim.transport import TcpTransport


class UnknownNode(Exception):
    pass


class UnknownThing(Exception):
    pass


class UnsupportedAction(Exception):
    pass


@dataclass
class ThingSpec:
    name: str
    actions: tuple = ("on", "off")
    last_known_state: str | None = None
    last_update: float | None = None

    def __post_init__(self):
        if not wireproto.THING_RE.match(self.name):
            raise ValueError(f"bad thing name: {self.name!r}")
        self.actions = tuple(self.actions)
        if not self.actions or not set(self.actions) <= {"on", "off"}:
            raise ValueError(f"thing {self.name}: actions must be within on/off")

    def as_json(self) -> dict:
        return {
            "name": self.name,
            "actions": list(self.actions),
            "last_known_state": self.last_known_state,
            "last_update": self.last_update,
        }


@dataclass
class NodeEntry:
    node_id: str
    mailbox: str
    shared_key: str
    things: dict  # name -> ThingSpec
    subject: str = ""
    quad: str = "fixed"

    def __post_init__(self):
        if not wireproto.THING_RE.match(self.node_id):
            raise ValueError(f"bad node_id: {self.node_id!r}")
        edon80.Key80.from_hex(self.shared_key)
        if self.quad not in ("fixed", "date"):
            raise ValueError("quad must be 'fixed' or 'date'")
        if not self.things:
            raise ValueError(f"node {self.node_id}: needs at least one thing")
        if not self.subject:
            self.subject = wireproto.subject_for(self.node_id)

    @classmethod
    def from_dict(cls, raw: dict) -> "NodeEntry":
        things = {}
        for t in raw.get("things", ()):
            spec = ThingSpec(t["name"], tuple(t.get("actions", ("on", "off"))))
            if spec.name in things:
                raise ValueError(f"duplicate thing: {spec.name}")
            things[spec.name] = spec
        return cls(
            node_id=raw["node_id"],
            mailbox=raw["mailbox"],
            shared_key=raw["shared_key"],
            things=things,
            subject=raw.get("subject", ""),
            quad=raw.get("quad", "fixed"),
        )

    def key(self) -> edon80.Key80:
        return edon80.Key80.from_hex(self.shared_key)

    def quad_source(self):
        return qg4.todays_quad if self.quad == "date" else qg4.EDON80_QUAD

    def as_json(self) -> dict:
        return {
            "node_id": self.node_id,
            "mailbox": self.mailbox,
            "subject": self.subject,
            "things": [t.as_json() for t in self.things.values()],
        }


@dataclass(frozen=True)
class ControllerConfig:
    mailbox: str
    password: str
    nodes: tuple
    smtp_host: str = "127.0.0.1"
    smtp_port: int = 2525
    pop3_host: str = "127.0.0.1"
    pop3_port: int = 2110
    http_host: str = "127.0.0.1"
    http_port: int = 8080
    poll_interval_ms: int = 200
    ticket_timeout_s: float = 10.0
    panel_dir: str | None = None

    def __post_init__(self):
        ids = [n.node_id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ValueError("node_ids must be unique")
        if self.poll_interval_ms <= 0 or self.ticket_timeout_s <= 0:
            raise ValueError("intervals must be positive")

    @classmethod
    def from_dict(cls, raw: dict) -> "ControllerConfig":
        raw = dict(raw)
        nodes = tuple(NodeEntry.from_dict(n) for n in raw.pop("nodes", ()))
        known = {f for f in cls.__dataclass_fields__}
        extra = set(raw) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(nodes=nodes, **raw)

    @classmethod
    def from_file(cls, path) -> "ControllerConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class CommandTicket:
    id: str
    node_id: str
    thing: str
    action: str
    seq: int
    state: str  # sent | acked | timed_out
    created: float
    updated: float

    def as_json(self) -> dict:
        return {
            "id": self.id,
            "node_id": self.node_id,
            "thing": self.thing,
            "action": self.action,
            "seq": self.seq,
            "state": self.state,
            "created": self.created,
            "updated": self.updated,
        }


class Controller:
    """Registry + ticket + event state machine; transport-agnostic."""

    def __init__(self, config: ControllerConfig, transport, clock=time.time):
        self.config = config
        self.transport = transport
        self.clock = clock
        self.nodes = {n.node_id: n for n in config.nodes}
        self._by_mailbox = {n.mailbox: n for n in config.nodes}
        self.tickets: dict[str, CommandTicket] = {}
        self.events: list[dict] = []
        self._next_seq = {n.node_id: 1 for n in config.nodes}
        self._policies = {
            n.node_id: wireproto.FilterPolicy(
                allowed_senders={n.mailbox},
                expected_subject=n.subject,
                shared_key=n.key(),
                quad_source=n.quad_source(),
            )
            for n in config.nodes
        }
        self._iv_log = wireproto.IvLog()
        self._lock = threading.RLock()

    # -- events ----------------------------------------------------------

    def _event(self, kind: str, payload: dict):
        self.events.append(
            {
                "event_seq": len(self.events) + 1,
                "kind": kind,
                "ts": self.clock(),
                "payload": payload,
            }
        )

    def events_since(self, n: int) -> list:
        with self._lock:
            return [e for e in self.events if e["event_seq"] > n]

    # -- sending ---------------------------------------------------------

    def send_command(self, node_id: str, thing: str, action: str) -> CommandTicket:
        with self._lock:
            entry = self.nodes.get(node_id)
            if entry is None:
                raise UnknownNode(node_id)
            spec = entry.things.get(thing)
            if spec is None:
                raise UnknownThing(thing)
            if action not in spec.actions:
                raise UnsupportedAction(action)
            seq = self._next_seq[node_id]
            self._next_seq[node_id] = seq + 1
            frame = wireproto.CommandFrame(wireproto.FrameKind.CMD, thing, action, seq)
            src = entry.quad_source()
            body = wireproto.seal_body(
                frame,
                entry.key(),
                edon80.fresh_iv(),
                src() if callable(src) else src,
                iv_log=self._iv_log,
            )
            env = wireproto.Envelope(
                self.config.mailbox, entry.mailbox, entry.subject, body
            )
            # transport failure propagates before any ticket exists
            self.transport.send(env)
            now = self.clock()
            ticket = CommandTicket(
                id=uuid.uuid4().hex,
                node_id=node_id,
                thing=thing,
                action=action,
                seq=seq,
                state="sent",
                created=now,
                updated=now,
            )
            self.tickets[ticket.id] = ticket
            self._event(
                "sent",
                {
                    "ticket": ticket.id,
                    "node_id": node_id,
                    "thing": thing,
                    "action": action,
                    "seq": seq,
                },
            )
            return ticket

    # -- replies ---------------------------------------------------------

    def _drop(self, sender: str, reason: str):
        self._event("drop_observed", {"sender": sender, "reason": reason})

    def _accept_sts(self, entry: NodeEntry, frame: wireproto.CommandFrame):
        now = self.clock()
        spec = entry.things[frame.thing]
        spec.last_known_state = frame.action
        spec.last_update = now
        ticket_id = None
        for ticket in self.tickets.values():
            if (
                ticket.state == "sent"
                and ticket.node_id == entry.node_id
                and ticket.thing == frame.thing
                and ticket.seq == frame.seq
            ):
                ticket.state = "acked"
                ticket.updated = now
                ticket_id = ticket.id
                break
        self._event(
            "status",
            {
                "node_id": entry.node_id,
                "thing": frame.thing,
                "state": frame.action,
                "seq": frame.seq,
                "ticket": ticket_id,
            },
        )

    def poll_replies(self) -> int:
        """Fetch the controller mailbox, process STS replies, delete
        everything fetched. Returns how many STS frames were accepted."""
        messages = self.transport.poll(self.config.mailbox, self.config.password)
        processed = 0
        with self._lock:
            for msg_id, env in messages:
                entry = self._by_mailbox.get(env.sender)
                if entry is None:
                    self._drop(env.sender, wireproto.DropReason.UNAUTHORIZED_SENDER.code)
                else:
                    result = wireproto.filter_envelope(
                        env, self._policies[entry.node_id]
                    )
                    if isinstance(result, wireproto.Drop):
                        self._drop(env.sender, result.reason.code)
                    elif result.frame.kind is not wireproto.FrameKind.STS:
                        self._drop(env.sender, "UnexpectedKind")
                    elif result.frame.thing not in entry.things:
                        self._drop(env.sender, "UnknownThing")
                    else:
                        self._accept_sts(entry, result.frame)
                        processed += 1
                self.transport.delete(
                    self.config.mailbox, self.config.password, msg_id
                )
        return processed

    def expire_tickets(self) -> int:
        """sent -> timed_out for tickets past the configured timeout."""
        now = self.clock()
        expired = 0
        with self._lock:
            for ticket in self.tickets.values():
                if (
                    ticket.state == "sent"
                    and now - ticket.created >= self.config.ticket_timeout_s
                ):
                    ticket.state = "timed_out"
                    ticket.updated = now
                    expired += 1
                    self._event(
                        "timeout",
                        {
                            "ticket": ticket.id,
                            "node_id": ticket.node_id,
                            "thing": ticket.thing,
                            "seq": ticket.seq,
                        },
                    )
        return expired

    # -- read side -------------------------------------------------------

    def nodes_json(self) -> list:
        with self._lock:
            return [n.as_json() for n in self.nodes.values()]

    def node_json(self, node_id: str) -> dict | None:
        with self._lock:
            entry = self.nodes.get(node_id)
            return entry.as_json() if entry else None

    def ticket_json(self, ticket_id: str) -> dict | None:
        with self._lock:
            ticket = self.tickets.get(ticket_id)
            return ticket.as_json() if ticket else None


_COMMAND_PATH = re.compile(r"/api/nodes/([a-z0-9_-]{1,32})/things/([a-z0-9_-]{1,32})/command\Z")

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json",
    ".map": "application/json",
    ".svg": "image/svg+xml",
    ".png": "image/png",
    ".ico": "image/x-icon",
}


class _ApiHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "unitor-controller"

    def log_message(self, *args):
        pass  # keep test output clean

    @property
    def ctl(self) -> Controller:
        return self.server.controller

    def _json(self, status: int, payload):
        raw = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(raw)))
        self.end_headers()
        self.wfile.write(raw)

    def _error(self, status: int, message: str):
        self._json(status, {"error": message})

    def do_GET(self):
        url = urlsplit(self.path)
        path = url.path
        if path == "/api/nodes":
            self._json(200, {"nodes": self.ctl.nodes_json()})
        elif m := re.match(r"/api/nodes/([a-z0-9_-]{1,32})\Z", path):
            doc = self.ctl.node_json(m.group(1))
            self._json(200, doc) if doc else self._error(404, "unknown node")
        elif m := re.match(r"/api/commands/([0-9a-f]{32})\Z", path):
            doc = self.ctl.ticket_json(m.group(1))
            self._json(200, doc) if doc else self._error(404, "unknown ticket")
        elif path == "/api/events":
            since = parse_qs(url.query).get("since", ["0"])[0]
            try:
                n = int(since)
            except ValueError:
                self._error(422, "since must be an integer")
                return
            self._json(200, {"events": self.ctl.events_since(n)})
        else:
            self._static(path)

    def do_POST(self):
        m = _COMMAND_PATH.match(urlsplit(self.path).path)
        if not m:
            self._error(404, "not found")
            return
        node_id, thing = m.group(1), m.group(2)
        try:
            length = int(self.headers.get("Content-Length", "0"))
            doc = json.loads(self.rfile.read(length) or b"{}")
            action = doc.get("action")
        except (ValueError, json.JSONDecodeError):
            self._error(422, "body must be JSON")
            return
        if action not in ("on", "off"):
            self._error(422, "unsupported action")
            return
        try:
            ticket = self.ctl.send_command(node_id, thing, action)
        except UnknownNode:
            self._error(404, "unknown node")
        except UnknownThing:
            self._error(404, "unknown thing")
        except UnsupportedAction:
            self._error(422, "unsupported action")
        else:
            self._json(202, {"ticket": ticket.id})

    def _static(self, path: str):
        root = self.server.panel_dir
        if root is None:
            self._error(404, "not found")
            return
        name = "index.html" if path in ("/", "") else path.lstrip("/")
        target = (root / name).resolve()
        if not str(target).startswith(str(root.resolve())) or not target.is_file():
            self._error(404, "not found")
            return
        raw = target.read_bytes()
        self.send_response(200)
        ctype = _CONTENT_TYPES.get(target.suffix, "application/octet-stream")
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(raw)))
        self.end_headers()
        self.wfile.write(raw)


class ControllerService:
    """HTTP server plus the background reply poller."""

    def __init__(self, config: ControllerConfig, transport=None, clock=time.time):
        transport = transport or TcpTransport(
            config.pop3_host, config.smtp_port, config.pop3_port
        )
        self.controller = Controller(config, transport, clock=clock)
        self._httpd = ThreadingHTTPServer(
            (config.http_host, config.http_port), _ApiHandler
        )
        self._httpd.daemon_threads = True
        self._httpd.controller = self.controller
        self._httpd.panel_dir = Path(config.panel_dir) if config.panel_dir else None
        self._stop = threading.Event()
        self._threads = []
        self.poll_errors = []

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def host(self) -> str:
        return self.controller.config.http_host

    def _poll_loop(self):
        interval = self.controller.config.poll_interval_ms / 1000.0
        while not self._stop.is_set():
            started = time.monotonic()
            try:
                self.controller.poll_replies()
            except Exception as exc:
                self.poll_errors.append(repr(exc))
            self.controller.expire_tickets()
            elapsed = time.monotonic() - started
            self._stop.wait(max(0.0, interval - elapsed))

    def start(self) -> "ControllerService":
        edon80.warmup()
        self._threads = [
            threading.Thread(
                target=self._httpd.serve_forever,
                kwargs={"poll_interval": 0.05},
                daemon=True,
            ),
            threading.Thread(target=self._poll_loop, daemon=True),
        ]
        for t in self._threads:
            t.start()
        return self

    def shutdown(self):
        if not self._threads:
            return
        self._stop.set()
        self._httpd.shutdown()
        self._httpd.server_close()
        for t in self._threads:
            t.join(timeout=10)
        self._threads = []

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.shutdown()


def serve_api(config: ControllerConfig, transport=None) -> ControllerService:
    """Bind the HTTP port and start serving plus polling."""
    return ControllerService(config, transport=transport).start()
