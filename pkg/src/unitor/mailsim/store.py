"""In-memory mailbox store and the message text format carried in DATA."""

from __future__ import annotations

import json
import threading

from ..wireproto import Envelope


class NoSuchMailbox(Exception):
    pass


class AuthFailure(Exception):
    pass


class NoSuchMessage(Exception):
    pass


class MessageTooLarge(Exception):
    pass


def render_message(env: Envelope) -> str:
    """Header block then blank line then body, LF endings."""
    return f"From: {env.sender}\nTo: {env.to}\nSubject: {env.subject}\n\n{env.body}"


def parse_message(text: str) -> Envelope:
    """Inverse of render_message; unknown headers are ignored.

    Raises ValueError when a required header is missing or an address is
    malformed (Envelope validation).
    """
    head, sep, body = text.partition("\n\n")
    if not sep:
        head, body = text, ""
    fields = {}
    for line in head.split("\n"):
        name, colon, value = line.partition(":")
        if colon:
            fields.setdefault(name.strip().lower(), value.strip())
    try:
        return Envelope(fields["from"], fields["to"], fields.get("subject", ""), body)
    except KeyError as exc:
        raise ValueError(f"missing header: {exc.args[0]}") from None


class _Box:
    __slots__ = ("password", "queue", "next_id")

    def __init__(self, password):
        self.password = password
        self.queue = {}  # id -> Envelope, insertion-ordered
        self.next_id = 1


class MailStore:
    """Per-address FIFO queues with strictly increasing message ids.

    All mutations go through one lock; a delivery is visible to fetch
    either completely or not at all.
    """

    def __init__(self, accounts, max_message_bytes: int = 65536, journal_path=None):
        self._boxes = {}
        for address, password in accounts:
            if address in self._boxes:
                raise ValueError(f"duplicate account: {address}")
            self._boxes[address] = _Box(password)
        self.max_message_bytes = max_message_bytes
        self._journal_path = journal_path
        self._lock = threading.Lock()

    def addresses(self):
        return tuple(self._boxes)

    def deliver(self, env: Envelope, mailbox: str | None = None) -> int:
        """Append env to a queue and return its message id.

        The sender is taken at face value: spoofing is possible by design.
        mailbox defaults to the envelope's To address.
        """
        target = env.to if mailbox is None else mailbox
        if len(render_message(env).encode("utf-8")) > self.max_message_bytes:
            raise MessageTooLarge()
        with self._lock:
            box = self._boxes.get(target)
            if box is None:
                raise NoSuchMailbox(target)
            msg_id = box.next_id
            box.next_id += 1
            box.queue[msg_id] = env
        if self._journal_path:
            record = {
                "from": env.sender,
                "to": env.to,
                "subject": env.subject,
                "body": env.body,
                "id": msg_id,
            }
            with open(self._journal_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record) + "\n")
        return msg_id

    def _auth(self, address, password) -> _Box:
        box = self._boxes.get(address)
        if box is None or box.password != password:
            raise AuthFailure(address)
        return box

    def check_auth(self, address, password) -> bool:
        try:
            self._auth(address, password)
            return True
        except AuthFailure:
            return False

    def fetch(self, address, password):
        """All undeleted messages as (id, Envelope), FIFO, non-destructive."""
        with self._lock:
            box = self._auth(address, password)
            return list(box.queue.items())

    def delete(self, address, password, msg_id: int) -> None:
        with self._lock:
            box = self._auth(address, password)
            if msg_id not in box.queue:
                raise NoSuchMessage(msg_id)
            del box.queue[msg_id]
