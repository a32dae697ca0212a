"""Newline-delimited JSON clients for external worker processes.

Workers speak one JSON object per line over stdin/stdout and announce
themselves with a handshake line such as ``{"protocol": "woz-translate/1"}``.
The same request/response bodies may instead be POSTed to an HTTP endpoint.
"""
from __future__ import annotations

import json
import logging
import shlex
import subprocess
import sys
import threading
from typing import Any, Sequence

import httpx

log = logging.getLogger(__name__)

TRANSLATE_PROTOCOL = "woz-translate/1"
PARSE_PROTOCOL = "woz-parse/1"


class TransportError(Exception):
    """The worker is gone or unreachable."""


class ProtocolError(Exception):
    """The worker answered, but not in the agreed format."""


def dumps_line(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":")) + "\n"


def send_handshake(protocol: str, stream=None) -> None:
    stream = stream or sys.stdout
    stream.write(dumps_line({"protocol": protocol}))
    stream.flush()


class JsonLineProcess:
    """A worker subprocess; one request in flight at a time."""

    def __init__(self, command: str | Sequence[str], protocol: str, stderr=None):
        self.args = shlex.split(command) if isinstance(command, str) else list(command)
        self.protocol = protocol
        self._lock = threading.Lock()
        try:
            self.proc = subprocess.Popen(
                self.args,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=stderr,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as e:
            raise TransportError(f"cannot start worker {self.args!r}: {e}") from e
        hello = self._read()
        if hello.get("protocol") != protocol:
            self.close()
            raise ProtocolError(f"expected handshake {protocol!r}, got {hello!r}")

    def _read(self) -> dict:
        line = self.proc.stdout.readline()  # type: ignore[union-attr]
        if not line:
            raise TransportError(f"worker {self.args[0]!r} closed its output (exit={self.proc.poll()})")
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise ProtocolError(f"worker sent a non-JSON line: {line[:80]!r}") from e
        if not isinstance(obj, dict):
            raise ProtocolError("worker sent a non-object JSON line")
        return obj

    def request(self, payload: dict) -> dict:
        with self._lock:
            try:
                self.proc.stdin.write(dumps_line(payload))  # type: ignore[union-attr]
                self.proc.stdin.flush()  # type: ignore[union-attr]
            except (BrokenPipeError, OSError, ValueError) as e:
                raise TransportError(f"cannot write to worker: {e}") from e
            reply = self._read()
        if reply.get("id") != payload.get("id"):
            raise ProtocolError(f"response id {reply.get('id')!r} does not echo {payload.get('id')!r}")
        return reply

    def close(self) -> None:
        try:
            if self.proc.stdin:
                self.proc.stdin.close()
            self.proc.wait(timeout=5)
        except Exception:
            self.proc.kill()
            self.proc.wait()
        finally:
            if self.proc.stdout:
                self.proc.stdout.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class HttpJsonClient:
    """Same bodies as the stdio protocol, one POST per request."""

    def __init__(self, url: str, protocol: str, transport: httpx.BaseTransport | None = None, timeout: float = 60.0):
        self.url = url
        self.protocol = protocol
        self._client = httpx.Client(transport=transport, timeout=timeout)

    def request(self, payload: dict) -> dict:
        try:
            resp = self._client.post(self.url, json=payload)
            resp.raise_for_status()
        except httpx.HTTPError as e:
            raise TransportError(f"HTTP request to {self.url} failed: {e}") from e
        try:
            reply = resp.json()
        except ValueError as e:
            raise ProtocolError("endpoint returned non-JSON body") from e
        if not isinstance(reply, dict) or reply.get("id") != payload.get("id"):
            raise ProtocolError("response id does not echo the request id")
        return reply

    def close(self) -> None:
        self._client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def connect(protocol: str, command: str | None = None, url: str | None = None) -> Any:
    if (command is None) == (url is None):
        raise ValueError("exactly one of a worker command or a URL is required")
    if command is not None:
        return JsonLineProcess(command, protocol)
    return HttpJsonClient(url, protocol)  # type: ignore[arg-type]


def serve(protocol: str, handle, stdin=None, stdout=None) -> None:
    """Worker side: handshake, then answer each request line with ``handle(obj)``."""
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    send_handshake(protocol, stdout)
    for line in stdin:
        if not line.strip():
            continue
        msg = None
        try:
            msg = json.loads(line)
            reply = handle(msg)
        except Exception as e:  # keep the worker alive; the caller sees a bad reply
            log.exception("worker failed on request")
            reply = {"id": msg.get("id") if isinstance(msg, dict) else None, "error": str(e)}
        stdout.write(dumps_line(reply))
        stdout.flush()


# offsets travel as UTF-8 byte spans

def char_to_byte_offsets(text: str, spans: Sequence[tuple[int, int]]) -> list[tuple[int, int]]:
    prefix = [0]
    for ch in text:
        prefix.append(prefix[-1] + len(ch.encode("utf-8")))
    return [(prefix[a], prefix[b]) for a, b in spans]


def byte_to_char_offsets(text: str, spans: Sequence[Sequence[int]]) -> list[tuple[int, int]]:
    index = {}
    pos = 0
    for i, ch in enumerate(text):
        index[pos] = i
        pos += len(ch.encode("utf-8"))
    index[pos] = len(text)
    try:
        return [(index[a], index[b]) for a, b in spans]
    except KeyError as e:
        raise ProtocolError(f"byte offset {e.args[0]} is not on a character boundary") from None


def map_with_connections(items, connect, fn, on_error, jobs: int = 1) -> list:
    """Apply ``fn(conn, item) -> (result, broken)`` to every item, keeping order.

    Each worker thread owns one connection. A connection reported broken is
    closed and reopened for the next item; if opening fails the item's result
    is ``on_error(item, exc)``.
    """
    local = threading.local()
    opened: list = []
    lock = threading.Lock()

    def run(item):
        conn = getattr(local, "conn", None)
        if conn is None:
            try:
                conn = connect()
            except (TransportError, ProtocolError) as e:
                return on_error(item, e)
            local.conn = conn
            with lock:
                opened.append(conn)
        result, broken = fn(conn, item)
        if broken:
            local.conn = None
            with lock:
                opened.remove(conn)
            try:
                conn.close()
            except Exception:
                log.debug("closing a broken connection failed", exc_info=True)
        return result

    try:
        if jobs <= 1:
            return [run(item) for item in items]
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(run, items))
    finally:
        for conn in opened:
            conn.close()
