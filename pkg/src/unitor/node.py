"""The device-side daemon: poll the mailbox, filter every message through
the layered acceptance check, actuate virtual GPIO pins, reply with sealed
status frames, delete what was processed.

One daemon per mailbox. Messages that fail any filter layer are deleted
and audit-logged, never answered. A reply echoes the triggering frame's
sequence number, which is how the controller matches its ticket.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field

from . import edon80, qg4, wireproto
from .mailsim.transport import TcpTransport

PIN_COUNT = 26

_consumer_lock = threading.Lock()
_active_consumers: set[tuple] = set()


class UnknownThing(Exception):
    pass


@dataclass(frozen=True)
class NodeConfig:
    node_id: str
    mailbox: str
    password: str
    allowed_senders: tuple
    shared_key: str  # 20 hex chars
    things: dict  # name -> pin index
    subject: str = ""
    quad: str = "fixed"  # fixed | date
    smtp_host: str = "127.0.0.1"
    smtp_port: int = 2525
    pop3_host: str = "127.0.0.1"
    pop3_port: int = 2110
    poll_interval_ms: int = 200
    audit_log: str | None = None
    pin_snapshot: str | None = None

    def __post_init__(self):
        if not wireproto.THING_RE.match(self.node_id):
            raise ValueError(f"bad node_id: {self.node_id!r}")
        if not self.allowed_senders:
            raise ValueError("allowed_senders must be non-empty")
        try:
            edon80.Key80.from_hex(self.shared_key)
        except ValueError as exc:
            raise ValueError(f"bad shared_key: {exc}") from None
        if self.quad not in ("fixed", "date"):
            raise ValueError("quad must be 'fixed' or 'date'")
        if len(self.things) > PIN_COUNT:
            raise ValueError(
                f"{len(self.things)} things configured; only {PIN_COUNT} pins exist"
            )
        pins = list(self.things.values())
        for name, pin in self.things.items():
            if not wireproto.THING_RE.match(name):
                raise ValueError(f"bad thing name: {name!r}")
            if not (isinstance(pin, int) and 0 <= pin < PIN_COUNT):
                raise ValueError(f"pin for {name!r} must be in 0..{PIN_COUNT - 1}")
        if len(set(pins)) != len(pins):
            raise ValueError("pin indices must be unique")
        if self.poll_interval_ms <= 0:
            raise ValueError("poll_interval_ms must be positive")
        if not self.subject:
            object.__setattr__(self, "subject", wireproto.subject_for(self.node_id))

    @classmethod
    def from_dict(cls, raw: dict) -> "NodeConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(raw) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        raw = dict(raw)
        if "allowed_senders" in raw:
            raw["allowed_senders"] = tuple(raw["allowed_senders"])
        return cls(**raw)

    @classmethod
    def from_file(cls, path) -> "NodeConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def key(self) -> edon80.Key80:
        return edon80.Key80.from_hex(self.shared_key)

    def quad_source(self):
        return qg4.todays_quad if self.quad == "date" else qg4.EDON80_QUAD


class PinBank:
    """26 virtual binary pins with last-change timestamps and a transition
    log. Written only through set_level; safe to read from other threads."""

    def __init__(self, count: int = PIN_COUNT, clock=time.time):
        self._levels = ["low"] * count
        self._since = [clock()] * count
        self._clock = clock
        self.changes = []  # (timestamp, pin, old, new)

    def set_level(self, pin: int, level: str) -> str:
        if level not in ("high", "low"):
            raise ValueError("level must be high|low")
        old = self._levels[pin]
        if old != level:
            now = self._clock()
            self._levels[pin] = level
            self._since[pin] = now
            self.changes.append((now, pin, old, level))
        return level

    def level(self, pin: int) -> str:
        return self._levels[pin]

    def states(self) -> dict:
        return {
            pin: {"level": self._levels[pin], "since": self._since[pin]}
            for pin in range(len(self._levels))
        }


def actuate(bank: PinBank, things: dict, thing: str, action: str) -> str:
    """Drive the thing's pin: on = high, off = low. Idempotent."""
    if thing not in things:
        raise UnknownThing(thing)
    if action not in ("on", "off"):
        raise ValueError("action must be on|off")
    bank.set_level(things[thing], "high" if action == "on" else "low")
    return action


@dataclass
class CycleReport:
    fetched: int = 0
    accepted: int = 0
    dropped_by_reason: dict = field(default_factory=dict)
    replies_sent: int = 0

    def drop(self, code: str):
        self.dropped_by_reason[code] = self.dropped_by_reason.get(code, 0) + 1


class UnitorNode:
    """One polling cycle's worth of behavior, plus audit plumbing. The
    daemon wrapper drives run_cycle on a timer."""

    def __init__(self, config: NodeConfig, transport, clock=time.time):
        self.config = config
        self.transport = transport
        self.clock = clock
        self.bank = PinBank(clock=clock)
        self.policy = wireproto.FilterPolicy(
            allowed_senders=config.allowed_senders,
            expected_subject=config.subject,
            shared_key=config.key(),
            quad_source=config.quad_source(),
        )
        self.iv_log = wireproto.IvLog()
        self.audit_records = []

    # -- audit ----------------------------------------------------------

    def _audit(self, direction: str, summary: dict, outcome: str):
        record = {
            "ts": self.clock(),
            "direction": direction,
            "summary": summary,
            "outcome": outcome,
        }
        self.audit_records.append(record)
        if self.config.audit_log:
            with open(self.config.audit_log, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record) + "\n")

    # -- processing -----------------------------------------------------

    def _reply(self, to: str, thing: str, state: str, seq: int):
        frame = wireproto.CommandFrame(wireproto.FrameKind.STS, thing, state, seq)
        body = wireproto.seal_body(
            frame,
            self.config.key(),
            edon80.fresh_iv(),
            self.policy.current_quad(),
            iv_log=self.iv_log,
        )
        env = wireproto.Envelope(self.config.mailbox, to, self.config.subject, body)
        self.transport.send(env)
        self._audit(
            "out",
            {"to": to, "frame": wireproto.encode_frame(frame)},
            "Sent",
        )

    def _thing_state(self, thing: str) -> str:
        return "on" if self.bank.level(self.config.things[thing]) == "high" else "off"

    def _process(self, env: wireproto.Envelope, report: CycleReport) -> None:
        summary = {"from": env.sender, "subject": env.subject}
        result = wireproto.filter_envelope(env, self.policy)
        if isinstance(result, wireproto.Drop):
            report.drop(result.reason.code)
            self._audit("in", summary, result.reason.code)
            return
        frame = result.frame
        summary["frame"] = wireproto.encode_frame(frame)
        if frame.kind is wireproto.FrameKind.STS or frame.thing not in self.config.things:
            # grammatical but not actionable here: ignore silently
            code = (
                "UnexpectedKind"
                if frame.kind is wireproto.FrameKind.STS
                else "UnknownThing"
            )
            report.drop(code)
            self._audit("in", summary, code)
            return
        if frame.kind is wireproto.FrameKind.CMD:
            state = actuate(self.bank, self.config.things, frame.thing, frame.action)
        else:  # STQ
            state = self._thing_state(frame.thing)
        report.accepted += 1
        self._audit("in", summary, "Accept")
        self._reply(env.sender, frame.thing, state, frame.seq)
        report.replies_sent += 1

    def run_cycle(self) -> CycleReport:
        """Fetch, filter, actuate, reply, delete. A transport failure while
        replying leaves the message undeleted; the seq layer makes the
        retry harmless."""
        report = CycleReport()
        messages = self.transport.poll(self.config.mailbox, self.config.password)
        report.fetched = len(messages)
        for msg_id, env in messages:
            self._process(env, report)
            self.transport.delete(self.config.mailbox, self.config.password, msg_id)
        if self.config.pin_snapshot:
            self.write_snapshot()
        return report

    def write_snapshot(self):
        states = {str(pin): s for pin, s in self.bank.states().items()}
        doc = {"node_id": self.config.node_id, "pins": states}
        with open(self.config.pin_snapshot, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")


class NodeDaemon:
    """Runs cycles every poll_interval until shutdown. Registers the
    mailbox as consumed: a second daemon on the same mailbox is a config
    error (single-consumer rule)."""

    def __init__(self, config: NodeConfig, transport=None, clock=time.time):
        self.config = config
        transport = transport or TcpTransport(
            config.pop3_host, config.smtp_port, config.pop3_port
        )
        self.node = UnitorNode(config, transport, clock=clock)
        self._stop = threading.Event()
        self._thread = None
        self._consumer_key = (config.pop3_host, config.pop3_port, config.mailbox)
        self.cycle_errors = []

    def start(self) -> "NodeDaemon":
        with _consumer_lock:
            if self._consumer_key in _active_consumers:
                raise ValueError(
                    f"mailbox {self.config.mailbox} already has a consumer"
                )
            _active_consumers.add(self._consumer_key)
        edon80.warmup()  # pay the JIT cost before the first cycle
        self._thread = threading.Thread(target=self._loop, daemon=True)
        self._thread.start()
        return self

    def _loop(self):
        interval = self.config.poll_interval_ms / 1000.0
        while not self._stop.is_set():
            started = time.monotonic()
            try:
                self.node.run_cycle()
            except Exception as exc:
                # transport hiccup: note it, retry next tick
                self.cycle_errors.append(repr(exc))
            elapsed = time.monotonic() - started
            self._stop.wait(max(0.0, interval - elapsed))

    def shutdown(self):
        if self._thread is None:
            return
        self._stop.set()
        self._thread.join(timeout=10)
        self._thread = None
        with _consumer_lock:
            _active_consumers.discard(self._consumer_key)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.shutdown()


def run_daemon(config: NodeConfig, transport=None) -> NodeDaemon:
    return NodeDaemon(config, transport=transport).start()
