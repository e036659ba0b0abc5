"""SMTP-subset submission server. No TLS, no AUTH: sender spoofing is
possible by design, exactly as on the open internet. Routing follows
RCPT TO; the stored envelope carries the DATA headers."""

from __future__ import annotations

import re
import socketserver

from .store import MessageTooLarge, NoSuchMailbox, parse_message

_MAIL_RE = re.compile(r"MAIL FROM:<([^<>\s]+@[^<>\s]+)>\Z")
_RCPT_RE = re.compile(r"RCPT TO:<([^<>\s]+@[^<>\s]+)>\Z")

GREETING = "220 unitor-mailsim"
OK = "250 ok"
DELIVERED = "250 delivered"
NO_MAILBOX = "550 no mailbox"
START_DATA = "354 end with ."
BYE = "221 bye"
UNRECOGNIZED = "500 unrecognized"
TOO_LARGE = "552 message too large"
BAD_MESSAGE = "554 bad message"


class SmtpHandler(socketserver.StreamRequestHandler):
    def _send(self, line: str):
        self.wfile.write((line + "\r\n").encode("utf-8"))

    def _readline(self):
        raw = self.rfile.readline(8192)
        if not raw:
            return None
        return raw.decode("utf-8", "replace").rstrip("\r\n")

    def handle(self):
        self.connection.settimeout(30)
        store = self.server.store
        self._send(GREETING)
        sender = None
        rcpts = []
        while True:
            line = self._readline()
            if line is None:
                return
            if line.startswith("HELO ") and line[5:].strip():
                self._send(OK)
            elif _MAIL_RE.match(line):
                sender = _MAIL_RE.match(line).group(1)
                rcpts = []
                self._send(OK)
            elif _RCPT_RE.match(line):
                if sender is None:
                    self._send(UNRECOGNIZED)
                    continue
                addr = _RCPT_RE.match(line).group(1)
                if addr in store.addresses():
                    rcpts.append(addr)
                    self._send(OK)
                else:
                    self._send(NO_MAILBOX)
            elif line == "DATA":
                if sender is None or not rcpts:
                    self._send(UNRECOGNIZED)
                    continue
                self._send(START_DATA)
                payload = self._read_payload(store.max_message_bytes)
                if payload is None:
                    return
                self._send(self._deliver(store, payload, rcpts))
                sender = None
                rcpts = []
            elif line == "QUIT":
                self._send(BYE)
                return
            else:
                self._send(UNRECOGNIZED)

    def _read_payload(self, limit: int):
        lines = []
        total = 0
        while True:
            line = self._readline()
            if line is None:
                return None
            if line == ".":
                break
            if line.startswith(".."):
                line = line[1:]
            total += len(line) + 1
            if total <= limit + 4096:  # hard cap, exact check at deliver
                lines.append(line)
            else:
                lines = None
        if lines is None:
            return MessageTooLarge()
        return "\n".join(lines)

    def _deliver(self, store, payload, rcpts) -> str:
        if isinstance(payload, MessageTooLarge):
            return TOO_LARGE
        try:
            env = parse_message(payload)
        except ValueError:
            return BAD_MESSAGE
        try:
            for rcpt in rcpts:
                store.deliver(env, mailbox=rcpt)
        except MessageTooLarge:
            return TOO_LARGE
        except NoSuchMailbox:
            return NO_MAILBOX
        return DELIVERED


class SmtpServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, addr, store):
        self.store = store
        super().__init__(addr, SmtpHandler)
