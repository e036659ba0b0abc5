"""Command/status wire protocol: plaintext frame grammar, the sealed body
format the frames travel in, and the layered acceptance filter a node runs
against every incoming envelope.

Filter layers, in short-circuit order: sender whitelist, exact subject
match, decrypt-and-validate, strictly increasing sequence number. Every
failure is a silent drop with exactly one reason; drops are audit-logged
by the caller, never answered.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass

from .edon80 import IV64, Key80, xor_seal
from .qg4 import EDON80_QUAD, Quad

PROTO_HEADER = "UNITOR/1"
SUBJECT_PREFIX = "UNITOR1"

THING_RE = re.compile(r"[a-z0-9_-]{1,32}$")
SEQ_MAX = 2**64 - 1

_FRAME_RE = re.compile(
    r"(CMD|STS) ([a-z0-9_-]{1,32}) (on|off) SEQ (0|[1-9][0-9]*)\Z"
    r"|STQ ([a-z0-9_-]{1,32}) SEQ (0|[1-9][0-9]*)\Z"
)
_IV_RE = re.compile(r"IV: ([0-9a-f]{16})\Z")
_CT_RE = re.compile(r"CT: ((?:[0-9a-f]{2})+)\Z")
_ADDR_RE = re.compile(r"[^@\s]+@[^@\s]+\Z")


class GrammarError(ValueError):
    """The line is not in the protocol language. Carries no detail."""


class IVReuse(ValueError):
    """An IV was presented twice for the same key by this sender."""


class FrameKind(enum.Enum):
    CMD = "CMD"
    STQ = "STQ"
    STS = "STS"


class DropReason(enum.Enum):
    UNAUTHORIZED_SENDER = "UnauthorizedSender"
    BAD_SUBJECT = "BadSubject"
    MALFORMED_BODY = "MalformedBody"
    BAD_GRAMMAR = "BadGrammar"
    STALE_SEQUENCE = "StaleSequence"

    @property
    def code(self) -> str:
        return self.value


@dataclass(frozen=True)
class CommandFrame:
    """One protocol line: CMD/STS carry an action, STQ never does."""

    kind: FrameKind
    thing: str
    action: str | None
    seq: int

    def __post_init__(self):
        if not isinstance(self.kind, FrameKind):
            raise ValueError("kind must be a FrameKind")
        if not THING_RE.match(self.thing):
            raise ValueError("bad thing token: %r" % (self.thing,))
        if self.kind is FrameKind.STQ:
            if self.action is not None:
                raise ValueError("STQ carries no action")
        elif self.action not in ("on", "off"):
            raise ValueError("action must be on|off")
        if not 0 <= self.seq <= SEQ_MAX:
            raise ValueError("seq out of range")


@dataclass(frozen=True)
class Envelope:
    """One piece of mail as the filter sees it."""

    sender: str
    to: str
    subject: str
    body: str

    def __post_init__(self):
        for addr in (self.sender, self.to):
            if not _ADDR_RE.match(addr):
                raise ValueError("bad address: %r" % (addr,))


def encode_frame(frame: CommandFrame) -> str:
    if frame.kind is FrameKind.STQ:
        return f"STQ {frame.thing} SEQ {frame.seq}"
    return f"{frame.kind.value} {frame.thing} {frame.action} SEQ {frame.seq}"


def parse_frame(line: str) -> CommandFrame:
    """Inverse of encode_frame; anything outside that exact language raises
    GrammarError."""
    m = _FRAME_RE.match(line) if isinstance(line, str) else None
    if not m:
        raise GrammarError()
    if m.group(1):
        kind, thing, action, seq = m.group(1), m.group(2), m.group(3), m.group(4)
    else:
        kind, thing, action, seq = "STQ", m.group(5), None, m.group(6)
    n = int(seq)
    if n > SEQ_MAX:
        raise GrammarError()
    return CommandFrame(FrameKind(kind), thing, action, n)


class IvLog:
    """Sender-side record of (key, iv) pairs already spent."""

    def __init__(self):
        self._seen = set()

    def __len__(self):
        return len(self._seen)

    def seen(self, key: Key80, iv: IV64) -> bool:
        return (key.data, iv.data) in self._seen

    def check_and_record(self, key: Key80, iv: IV64) -> None:
        pair = (key.data, iv.data)
        if pair in self._seen:
            raise IVReuse("iv %s already used with this key" % iv.hex())
        self._seen.add(pair)


def seal_body(
    frame: CommandFrame,
    key: Key80,
    iv: IV64,
    quad: Quad = EDON80_QUAD,
    iv_log: IvLog | None = None,
) -> str:
    """Encrypt a frame into the three-line body format.

    When an IvLog is supplied the (key, iv) pair is checked and recorded,
    raising IVReuse on a repeat; without one the caller owns IV freshness.
    """
    if iv_log is not None:
        iv_log.check_and_record(key, iv)
    ct = xor_seal(key, iv, encode_frame(frame).encode("utf-8"), quad)
    return f"{PROTO_HEADER}\nIV: {iv.hex()}\nCT: {ct.hex()}\n"


def open_body(body: str, key: Key80, quad: Quad = EDON80_QUAD):
    """Decrypt and parse a body; returns a CommandFrame, or a DropReason
    (MalformedBody for structure, BadGrammar for a non-protocol plaintext).
    Never raises on arbitrary input."""
    if not isinstance(body, str):
        return DropReason.MALFORMED_BODY
    lines = body.split("\n")
    if len(lines) != 4 or lines[3] != "" or lines[0] != PROTO_HEADER:
        return DropReason.MALFORMED_BODY
    m_iv = _IV_RE.match(lines[1])
    m_ct = _CT_RE.match(lines[2])
    if not m_iv or not m_ct:
        return DropReason.MALFORMED_BODY
    iv = IV64.from_hex(m_iv.group(1))
    ct = bytes.fromhex(m_ct.group(1))
    plain = xor_seal(key, iv, ct, quad)
    try:
        return parse_frame(plain.decode("utf-8"))
    except (GrammarError, UnicodeDecodeError):
        return DropReason.BAD_GRAMMAR


def subject_for(node_id: str) -> str:
    """The exact subject a node registers and checks."""
    if not THING_RE.match(node_id):
        raise ValueError("bad node id: %r" % (node_id,))
    return f"{SUBJECT_PREFIX} {node_id}"


class FilterPolicy:
    """Everything one node needs to judge an envelope.

    quad_source is either a fixed Quad or a zero-argument callable
    returning one (date rotation). last_seq_per_sender holds the highest
    accepted seq per sender address; the filter mutates it on accept.
    """

    def __init__(self, allowed_senders, expected_subject, shared_key, quad_source=None):
        senders = frozenset(allowed_senders)
        if not senders:
            raise ValueError("allowed_senders must be non-empty")
        if not expected_subject:
            raise ValueError("expected_subject must be non-empty")
        self.allowed_senders = senders
        self.expected_subject = expected_subject
        self.shared_key = shared_key
        self.quad_source = EDON80_QUAD if quad_source is None else quad_source
        self.last_seq_per_sender: dict[str, int] = {}

    def current_quad(self) -> Quad:
        src = self.quad_source
        return src() if callable(src) else src


@dataclass(frozen=True)
class Accept:
    frame: CommandFrame


@dataclass(frozen=True)
class Drop:
    reason: DropReason


def filter_envelope(env: Envelope, policy: FilterPolicy):
    """Layered acceptance check; earliest failing layer names the reason."""
    if env.sender not in policy.allowed_senders:
        return Drop(DropReason.UNAUTHORIZED_SENDER)
    if env.subject != policy.expected_subject:
        return Drop(DropReason.BAD_SUBJECT)
    got = open_body(env.body, policy.shared_key, policy.current_quad())
    if isinstance(got, DropReason):
        return Drop(got)
    if got.seq <= policy.last_seq_per_sender.get(env.sender, -1):
        return Drop(DropReason.STALE_SEQUENCE)
    policy.last_seq_per_sender[env.sender] = got.seq
    return Accept(got)
