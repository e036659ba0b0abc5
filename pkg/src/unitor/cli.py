"""Command-line entry points. The controller send/status subcommands are
thin HTTP clients against a running service, so they start fast and can be
scripted; serve subcommands block until interrupted."""

from __future__ import annotations

import argparse
import json
import signal
import sys
import threading
import time
import urllib.error
import urllib.request

DEFAULT_URL = "http://127.0.0.1:8080"


def _block_until_interrupt():
    stop = threading.Event()

    def handler(sig, frame):
        stop.set()

    signal.signal(signal.SIGINT, handler)
    signal.signal(signal.SIGTERM, handler)
    while not stop.is_set():
        stop.wait(0.2)


# -- unitor-node ----------------------------------------------------------


def node_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="unitor-node", description="mailbox-polling device daemon"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="poll and actuate until interrupted")
    run_p.add_argument("--config", required=True)
    pins_p = sub.add_parser("pins", help="print current virtual pin states")
    pins_p.add_argument("--config", required=True)
    args = parser.parse_args(argv)

    from .node import NodeConfig

    try:
        config = NodeConfig.from_file(args.config)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    if args.command == "pins":
        return _print_pins(config)

    from .node import run_daemon

    daemon = run_daemon(config)
    print(
        f"node {config.node_id}: polling {config.mailbox} "
        f"every {config.poll_interval_ms} ms",
        flush=True,
    )
    try:
        _block_until_interrupt()
    finally:
        daemon.shutdown()
    return 0


def _print_pins(config) -> int:
    states = None
    if config.pin_snapshot:
        try:
            with open(config.pin_snapshot, encoding="utf-8") as fh:
                states = json.load(fh)["pins"]
        except (OSError, ValueError, KeyError):
            states = None
    by_pin = {pin: name for name, pin in config.things.items()}
    for pin in range(26):
        state = states.get(str(pin), {"level": "low"}) if states else {"level": "low"}
        label = f" ({by_pin[pin]})" if pin in by_pin else ""
        print(f"pin {pin:2d}: {state['level']}{label}")
    if states is None and config.pin_snapshot:
        print("(no snapshot yet; showing defaults)", file=sys.stderr)
    return 0


# -- unitor-mailsim -------------------------------------------------------


def mailsim_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="unitor-mailsim", description="SMTP/POP3 mail broker simulator"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    serve_p = sub.add_parser("serve", help="run the broker until interrupted")
    serve_p.add_argument("--smtp-port", type=int, default=2525)
    serve_p.add_argument("--pop3-port", type=int, default=2110)
    serve_p.add_argument("--host", default="127.0.0.1")
    serve_p.add_argument(
        "--account",
        action="append",
        default=[],
        metavar="ADDR:PASSWORD",
        help="mailbox to create (repeatable)",
    )
    serve_p.add_argument("--max-bytes", type=int, default=65536)
    serve_p.add_argument("--journal", default=None)
    args = parser.parse_args(argv)

    accounts = []
    for spec in args.account:
        addr, sep, password = spec.partition(":")
        if not sep or not addr or not password:
            print(f"bad --account (want ADDR:PASSWORD): {spec!r}", file=sys.stderr)
            return 2
        accounts.append((addr, password))

    from .mailsim import BrokerConfig, serve

    try:
        broker = serve(
            BrokerConfig(
                accounts=tuple(accounts),
                smtp_port=args.smtp_port,
                pop3_port=args.pop3_port,
                host=args.host,
                max_message_bytes=args.max_bytes,
                journal_path=args.journal,
            )
        )
    except (OSError, ValueError) as exc:
        print(f"startup failed: {exc}", file=sys.stderr)
        return 2
    print(
        f"mailsim: smtp on {broker.host}:{broker.smtp_port}, "
        f"pop3 on {broker.host}:{broker.pop3_port}, "
        f"{len(accounts)} mailboxes",
        flush=True,
    )
    try:
        _block_until_interrupt()
    finally:
        broker.shutdown()
    return 0


# -- controller -----------------------------------------------------------


def _api(url_base: str, path: str, payload=None):
    url = url_base.rstrip("/") + path
    data = None
    headers = {}
    if payload is not None:
        data = json.dumps(payload).encode("utf-8")
        headers["Content-Type"] = "application/json"
    req = urllib.request.Request(url, data=data, headers=headers)
    try:
        with urllib.request.urlopen(req, timeout=10) as resp:
            return resp.status, json.loads(resp.read())
    except urllib.error.HTTPError as exc:
        return exc.code, json.loads(exc.read())


def _pick_node(url: str, node: str | None) -> str | None:
    if node:
        return node
    status, doc = _api(url, "/api/nodes")
    if status != 200:
        return None
    nodes = doc.get("nodes", [])
    if len(nodes) == 1:
        return nodes[0]["node_id"]
    print(
        "ambiguous --node; registered: "
        + ", ".join(n["node_id"] for n in nodes),
        file=sys.stderr,
    )
    return None


def controller_main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="controller", description="command service and client"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    serve_p = sub.add_parser("serve", help="run the HTTP service until interrupted")
    serve_p.add_argument("--config", required=True)

    send_p = sub.add_parser("send", help="send one command via a running service")
    send_p.add_argument("--url", default=DEFAULT_URL)
    send_p.add_argument("--node", default=None)
    send_p.add_argument("--thing", required=True)
    send_p.add_argument("--action", required=True, choices=("on", "off"))
    send_p.add_argument(
        "--wait",
        type=float,
        default=None,
        metavar="SECONDS",
        help="poll the ticket until acked/timed_out",
    )

    status_p = sub.add_parser("status", help="show a node's things")
    status_p.add_argument("--url", default=DEFAULT_URL)
    status_p.add_argument("--node", default=None)

    args = parser.parse_args(argv)
    if args.command == "serve":
        return _controller_serve(args)
    if args.command == "send":
        return _controller_send(args)
    return _controller_status(args)


def _controller_serve(args) -> int:
    from .controller import ControllerConfig, serve_api

    try:
        config = ControllerConfig.from_file(args.config)
        service = serve_api(config)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"startup failed: {exc}", file=sys.stderr)
        return 2
    print(
        f"controller: http on {service.host}:{service.port}, "
        f"{len(config.nodes)} nodes registered",
        flush=True,
    )
    try:
        _block_until_interrupt()
    finally:
        service.shutdown()
    return 0


def _controller_send(args) -> int:
    node = _pick_node(args.url, args.node)
    if node is None:
        return 2
    status, doc = _api(
        args.url,
        f"/api/nodes/{node}/things/{args.thing}/command",
        {"action": args.action},
    )
    if status != 202:
        print(f"send failed ({status}): {doc.get('error')}", file=sys.stderr)
        return 1
    ticket = doc["ticket"]
    print(f"command sent: ticket {ticket}")
    if args.wait is None:
        return 0
    deadline = time.monotonic() + args.wait
    state = "sent"
    while time.monotonic() < deadline:
        status, doc = _api(args.url, f"/api/commands/{ticket}")
        state = doc.get("state", "?")
        if state in ("acked", "timed_out"):
            break
        time.sleep(0.05)
    print(f"ticket {ticket}: {state}")
    return 0 if state == "acked" else 1


def _controller_status(args) -> int:
    node = _pick_node(args.url, args.node)
    if node is None:
        return 2
    status, doc = _api(args.url, f"/api/nodes/{node}")
    if status != 200:
        print(f"status failed ({status}): {doc.get('error')}", file=sys.stderr)
        return 1
    print(f"node {doc['node_id']} ({doc['mailbox']})")
    for thing in doc["things"]:
        state = thing["last_known_state"] or "unknown"
        print(f"  {thing['name']}: {state}")
    return 0
