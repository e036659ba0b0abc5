"""POP3-subset retrieval server: USER/PASS, LIST, RETR, DELE, QUIT.

DELE removes the message immediately (no update-at-QUIT phase); ids are
never reused, so a poll-fetch-delete client sees each message once.
"""

from __future__ import annotations

import socketserver

from .store import AuthFailure, NoSuchMessage, render_message

GREETING = "+OK unitor-pop3"
OK = "+OK"
BYE = "+OK bye"
ERR_AUTH = "-ERR auth"
ERR_NO_MESSAGE = "-ERR no such message"
ERR_UNRECOGNIZED = "-ERR unrecognized"


def wire_size(env) -> int:
    return len(render_message(env).replace("\n", "\r\n").encode("utf-8"))


class Pop3Handler(socketserver.StreamRequestHandler):
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
        user = None
        creds = None
        while True:
            line = self._readline()
            if line is None:
                return
            verb, _, arg = line.partition(" ")
            if verb == "USER" and arg:
                user = arg
                self._send(OK)
            elif verb == "PASS":
                if user is not None and store.check_auth(user, arg):
                    creds = (user, arg)
                    self._send(OK)
                else:
                    self._send(ERR_AUTH)
            elif verb == "QUIT":
                self._send(BYE)
                return
            elif verb not in ("LIST", "RETR", "DELE"):
                self._send(ERR_UNRECOGNIZED)
            elif creds is None:
                self._send(ERR_AUTH)
            elif verb == "LIST" and not arg:
                messages = store.fetch(*creds)
                self._send(f"{OK} {len(messages)} messages")
                for msg_id, env in messages:
                    self._send(f"{msg_id} {wire_size(env)}")
                self._send(".")
            elif verb == "RETR" and arg.isdigit():
                self._retr(store, creds, int(arg))
            elif verb == "DELE" and arg.isdigit():
                try:
                    store.delete(creds[0], creds[1], int(arg))
                    self._send(OK)
                except NoSuchMessage:
                    self._send(ERR_NO_MESSAGE)
                except AuthFailure:
                    self._send(ERR_AUTH)
            else:
                self._send(ERR_UNRECOGNIZED)

    def _retr(self, store, creds, msg_id: int):
        try:
            messages = dict(store.fetch(*creds))
        except AuthFailure:
            self._send(ERR_AUTH)
            return
        env = messages.get(msg_id)
        if env is None:
            self._send(ERR_NO_MESSAGE)
            return
        self._send(f"{OK} {wire_size(env)} octets")
        for line in render_message(env).split("\n"):
            if line.startswith("."):
                line = "." + line  # dot-stuffing
            self._send(line)
        self._send(".")


class Pop3Server(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, addr, store):
        self.store = store
        super().__init__(addr, Pop3Handler)
