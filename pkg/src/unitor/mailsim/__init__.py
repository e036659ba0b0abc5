"""Miniature store-and-forward mail broker: SMTP-subset submission and
POP3-subset retrieval over TCP, per-mailbox FIFO stores, an in-process
transport for fast tests, and an adversary hook for injecting spoofed mail.
"""

from .broker import Broker, BrokerConfig, serve
from .store import (
    AuthFailure,
    MailStore,
    MessageTooLarge,
    NoSuchMailbox,
    NoSuchMessage,
    parse_message,
    render_message,
)
from .transport import InProcessTransport, TcpTransport

__all__ = [
    "AuthFailure",
    "Broker",
    "BrokerConfig",
    "InProcessTransport",
    "MailStore",
    "MessageTooLarge",
    "NoSuchMailbox",
    "NoSuchMessage",
    "TcpTransport",
    "parse_message",
    "render_message",
    "serve",
]
