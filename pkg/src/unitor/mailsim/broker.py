"""Broker lifecycle: config, the two TCP servers, start/shutdown."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

from .pop3 import Pop3Server
from .smtp import SmtpServer
from .store import MailStore


@dataclass(frozen=True)
class BrokerConfig:
    accounts: tuple = field(default_factory=tuple)  # (address, password) pairs
    smtp_port: int = 2525
    pop3_port: int = 2110
    host: str = "127.0.0.1"
    max_message_bytes: int = 65536
    journal_path: str | None = None

    def __post_init__(self):
        # port 0 means "pick one", so equal zeros are fine
        if self.smtp_port == self.pop3_port and self.smtp_port != 0:
            raise ValueError("smtp and pop3 ports must differ")
        addresses = [a for a, _ in self.accounts]
        if len(set(addresses)) != len(addresses):
            raise ValueError("account addresses must be unique")


class Broker:
    """A running (once start()ed) pair of SMTP and POP3 servers over one
    shared store. Shutdown is idempotent; handles may be shared across
    threads."""

    def __init__(self, config: BrokerConfig):
        self.config = config
        self.store = MailStore(
            config.accounts,
            max_message_bytes=config.max_message_bytes,
            journal_path=config.journal_path,
        )
        self._smtp = SmtpServer((config.host, config.smtp_port), self.store)
        self._pop3 = Pop3Server((config.host, config.pop3_port), self.store)
        self._threads = []
        self._down = False

    @property
    def smtp_port(self) -> int:
        return self._smtp.server_address[1]

    @property
    def pop3_port(self) -> int:
        return self._pop3.server_address[1]

    @property
    def host(self) -> str:
        return self.config.host

    def inject(self, env, mailbox=None) -> int:
        """Adversary hook: drop an arbitrary envelope straight into a
        mailbox, no SMTP session, no questions asked."""
        return self.store.deliver(env, mailbox=mailbox)

    def start(self) -> "Broker":
        for server in (self._smtp, self._pop3):
            t = threading.Thread(
                target=server.serve_forever, kwargs={"poll_interval": 0.05}, daemon=True
            )
            t.start()
            self._threads.append(t)
        return self

    def shutdown(self):
        if self._down:
            return
        self._down = True
        for server in (self._smtp, self._pop3):
            server.shutdown()
            server.server_close()
        for t in self._threads:
            t.join(timeout=5)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.shutdown()


def serve(config: BrokerConfig) -> Broker:
    """Bind both ports and start serving; raises OSError if a port is taken."""
    return Broker(config).start()
