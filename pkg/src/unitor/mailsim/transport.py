"""Two interchangeable mail transports.

InProcessTransport talks straight to a MailStore; TcpTransport speaks the
SMTP/POP3 subsets over sockets, one short session per operation. Both
expose send/poll/delete with identical semantics, and the protocol tests
assert the equivalence.
"""

from __future__ import annotations

import socket

from ..wireproto import Envelope
from .store import AuthFailure, NoSuchMailbox, NoSuchMessage, parse_message, render_message


class InProcessTransport:
    def __init__(self, store):
        self.store = store

    def send(self, env: Envelope) -> None:
        self.store.deliver(env)

    def poll(self, address, password):
        return self.store.fetch(address, password)

    def delete(self, address, password, msg_id) -> None:
        self.store.delete(address, password, msg_id)


class TransportError(Exception):
    """Unexpected response from the broker."""


class _Session:
    def __init__(self, host, port, timeout=10.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.rfile = self.sock.makefile("rb")

    def line(self) -> str:
        raw = self.rfile.readline(8192)
        if not raw:
            raise TransportError("connection closed")
        return raw.decode("utf-8", "replace").rstrip("\r\n")

    def send(self, text: str):
        self.sock.sendall((text + "\r\n").encode("utf-8"))

    def expect(self, prefix: str) -> str:
        got = self.line()
        if not got.startswith(prefix):
            raise TransportError(f"expected {prefix!r}, got {got!r}")
        return got

    def close(self):
        try:
            self.rfile.close()
        finally:
            self.sock.close()


class TcpTransport:
    def __init__(self, host, smtp_port, pop3_port):
        self.host = host
        self.smtp_port = smtp_port
        self.pop3_port = pop3_port

    def send(self, env: Envelope) -> None:
        s = _Session(self.host, self.smtp_port)
        try:
            s.expect("220")
            s.send("HELO unitor")
            s.expect("250")
            s.send(f"MAIL FROM:<{env.sender}>")
            s.expect("250")
            s.send(f"RCPT TO:<{env.to}>")
            got = s.line()
            if got.startswith("550"):
                raise NoSuchMailbox(env.to)
            if not got.startswith("250"):
                raise TransportError(got)
            s.send("DATA")
            s.expect("354")
            for line in render_message(env).split("\n"):
                if line.startswith("."):
                    line = "." + line
                s.send(line)
            s.send(".")
            s.expect("250")
            s.send("QUIT")
        finally:
            s.close()

    def _login(self, address, password) -> _Session:
        s = _Session(self.host, self.pop3_port)
        try:
            s.expect("+OK")
            s.send(f"USER {address}")
            s.expect("+OK")
            s.send(f"PASS {password}")
            if not s.line().startswith("+OK"):
                raise AuthFailure(address)
            return s
        except BaseException:
            s.close()
            raise

    def poll(self, address, password):
        s = self._login(address, password)
        try:
            s.send("LIST")
            s.expect("+OK")
            ids = []
            while (line := s.line()) != ".":
                ids.append(int(line.split()[0]))
            out = []
            for msg_id in ids:
                s.send(f"RETR {msg_id}")
                s.expect("+OK")
                lines = []
                while (line := s.line()) != ".":
                    if line.startswith(".."):
                        line = line[1:]
                    lines.append(line)
                out.append((msg_id, parse_message("\n".join(lines))))
            s.send("QUIT")
            return out
        finally:
            s.close()

    def delete(self, address, password, msg_id) -> None:
        s = self._login(address, password)
        try:
            s.send(f"DELE {msg_id}")
            got = s.line()
            if got.startswith("-ERR no such"):
                raise NoSuchMessage(msg_id)
            if not got.startswith("+OK"):
                raise TransportError(got)
            s.send("QUIT")
        finally:
            s.close()
