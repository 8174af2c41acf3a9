"""Logit-provider wire protocol: newline-delimited JSON over a byte stream.

Server sends one handshake line declaring ``{"vocab_size": int, "tokenizer":
str}`` (plus optional metadata), then answers each request
``{"id": int, "context": [int, ...]}`` with ``{"id": int, "logits": [...]}``
or ``{"id": int, "error": str}``.  Transports: a spawned subprocess on
stdio ("stdio:CMD ARGS...") or a TCP socket ("tcp:HOST:PORT").

Errors are surfaced in three distinct flavours: transport (stream died),
protocol (peer violated the contract), model (peer answered with an error
frame).
"""

import json
import shlex
import socket
import subprocess
import threading

import numpy as np

from .errors import (
    ProviderModelError,
    ProviderProtocolError,
    ProviderTransportError,
    TokenLookupError,
)


def _encode_frame(obj: dict) -> bytes:
    return (json.dumps(obj, separators=(",", ":")) + "\n").encode("utf-8")


class _LineStream:
    """Minimal reader/writer pair over file-like binary streams."""

    def __init__(self, reader, writer):
        self._reader = reader
        self._writer = writer

    def write_frame(self, obj: dict) -> None:
        try:
            self._writer.write(_encode_frame(obj))
            self._writer.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ProviderTransportError(f"write failed: {exc}") from exc

    def read_frame(self) -> dict:
        try:
            line = self._reader.readline()
        except OSError as exc:
            raise ProviderTransportError(f"read failed: {exc}") from exc
        if not line:
            raise ProviderTransportError("stream closed by peer")
        try:
            obj = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ProviderProtocolError(f"malformed frame: {line[:120]!r}") from exc
        if not isinstance(obj, dict):
            raise ProviderProtocolError(f"frame is not an object: {obj!r}")
        return obj


class ProviderClient:
    """Client for one provider connection; one in-flight request at a time."""

    def __init__(self, stream: _LineStream, close=None):
        self._stream = stream
        self._close = close
        self._next_id = 0
        self._lock = threading.Lock()
        handshake = stream.read_frame()
        if not isinstance(handshake.get("vocab_size"), int) or handshake["vocab_size"] < 1:
            raise ProviderProtocolError(f"bad handshake: {handshake!r}")
        if not isinstance(handshake.get("tokenizer"), str):
            raise ProviderProtocolError(f"handshake missing tokenizer: {handshake!r}")
        self.vocab_size: int = handshake["vocab_size"]
        self.tokenizer: str = handshake["tokenizer"]
        self.metadata = {k: v for k, v in handshake.items()
                         if k not in ("vocab_size", "tokenizer")}

    def next_logits(self, context) -> np.ndarray:
        with self._lock:
            req_id = self._next_id
            self._next_id += 1
            self._stream.write_frame({"id": req_id, "context": [int(t) for t in context]})
            resp = self._stream.read_frame()
        if resp.get("id") != req_id:
            raise ProviderProtocolError(
                f"response id {resp.get('id')!r} does not match request {req_id}"
            )
        if "error" in resp:
            raise ProviderModelError(str(resp["error"]))
        logits = resp.get("logits")
        if not isinstance(logits, list):
            raise ProviderProtocolError(f"response carries no logits: {resp!r}")
        if len(logits) != self.vocab_size:
            raise ProviderProtocolError(
                f"logits length {len(logits)} != declared vocab_size {self.vocab_size}"
            )
        arr = np.asarray(logits, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ProviderProtocolError("non-finite logits from provider")
        return arr

    def argmax_next(self, context) -> int:
        return int(np.argmax(self.next_logits(context)))

    @property
    def raw_stream(self) -> _LineStream:
        return self._stream

    def close(self) -> None:
        if self._close is not None:
            self._close()


def connect(address: str, timeout: float = 30.0) -> ProviderClient:
    """Open a provider connection from an address string.

    "stdio:CMD ARGS..." spawns the command and talks over its stdio;
    "tcp:HOST:PORT" connects a socket.
    """
    if address.startswith("stdio:"):
        cmd = shlex.split(address[len("stdio:"):])
        if not cmd:
            raise ProviderTransportError("empty provider command")
        try:
            proc = subprocess.Popen(cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE)
        except OSError as exc:
            raise ProviderTransportError(f"cannot spawn provider: {exc}") from exc
        stream = _LineStream(proc.stdout, proc.stdin)

        def close():
            try:
                proc.stdin.close()
            except OSError:
                pass
            proc.wait(timeout=10)

        return ProviderClient(stream, close=close)
    if address.startswith("tcp:"):
        host, _, port = address[len("tcp:"):].rpartition(":")
        try:
            sock = socket.create_connection((host or "127.0.0.1", int(port)), timeout=timeout)
        except (OSError, ValueError) as exc:
            raise ProviderTransportError(f"cannot connect to {address}: {exc}") from exc
        rfile = sock.makefile("rb")
        wfile = sock.makefile("wb")
        return ProviderClient(_LineStream(rfile, wfile), close=sock.close)
    raise ProviderTransportError(f"unknown provider address scheme: {address!r}")


class EchoModel:
    """Deterministic context-dependent logits, for loopback tests."""

    def __init__(self, vocab_size: int = 8):
        self.vocab_size = vocab_size

    def next_logits(self, context) -> np.ndarray:
        base = np.sin(np.arange(self.vocab_size, dtype=np.float64) + 0.1 * len(context))
        if len(context):
            base = base + 0.01 * float(context[-1] % self.vocab_size)
        return base


def _model_vocab_size(model) -> int:
    return model.vocab_size if isinstance(model.vocab_size, int) else int(model.vocab_size)


def serve_model(model, reader, writer, tokenizer: str = "char",
                metadata: dict | None = None) -> None:
    """Reference server loop: handshake, then answer frames until EOF.

    Any parse failure or model error becomes an error frame; the loop never
    dies on a bad request, only on a closed stream.
    """
    stream = _LineStream(reader, writer)
    handshake = {"vocab_size": _model_vocab_size(model), "tokenizer": tokenizer}
    if metadata:
        handshake.update(metadata)
    stream.write_frame(handshake)
    while True:
        try:
            line = reader.readline()
        except OSError:
            return
        if not line:
            return
        req_id = None
        try:
            obj = json.loads(line.decode("utf-8"))
            if not isinstance(obj, dict):
                raise ValueError("frame is not an object")
            req_id = obj.get("id") if isinstance(obj.get("id"), int) else None
            context = obj["context"]
            if not isinstance(context, list) or not all(isinstance(t, int) for t in context):
                raise ValueError("context must be a list of ints")
            logits = model.next_logits(context)
            stream.write_frame({"id": req_id, "logits": [float(v) for v in logits]})
        except (ValueError, KeyError, UnicodeDecodeError, TokenLookupError) as exc:
            try:
                stream.write_frame({"id": req_id, "error": f"{type(exc).__name__}: {exc}"})
            except ProviderTransportError:
                return


def serve_tcp(model, port: int, host: str = "127.0.0.1", tokenizer: str = "char",
              metadata: dict | None = None, ready_event: threading.Event | None = None) -> None:
    """Serve connections sequentially on a TCP port (one client at a time)."""
    srv = socket.create_server((host, port))
    if ready_event is not None:
        ready_event.set()
    try:
        while True:
            conn, _ = srv.accept()
            with conn:
                serve_model(model, conn.makefile("rb"), conn.makefile("wb"),
                            tokenizer=tokenizer, metadata=metadata)
    finally:
        srv.close()


def run_conformance(address: str) -> list[tuple[str, bool, str]]:
    """Protocol conformance frames against a live provider.

    Returns (check name, passed, detail) rows; all-passed means the provider
    honours the wire contract.
    """
    results: list[tuple[str, bool, str]] = []

    def check(name: str, ok: bool, detail: str = "") -> None:
        results.append((name, bool(ok), detail))

    try:
        client = connect(address)
    except (ProviderTransportError, ProviderProtocolError) as exc:
        check("handshake", False, str(exc))
        return results
    check("handshake", True,
          f"vocab_size={client.vocab_size} tokenizer={client.tokenizer!r}")
    stream = client.raw_stream

    try:
        logits = client.next_logits([0])
        check("simple request answered", True, f"len={len(logits)}")
    except Exception as exc:  # report, do not abort the remaining frames
        check("simple request answered", False, f"{type(exc).__name__}: {exc}")

    try:
        ids = [101, 102, 103]
        for i in ids:
            stream.write_frame({"id": i, "context": [0]})
        got = []
        for _ in ids:
            resp = stream.read_frame()
            got.append(resp.get("id"))
            ok_shape = "error" in resp or (
                isinstance(resp.get("logits"), list)
                and len(resp["logits"]) == client.vocab_size
            )
            if not ok_shape:
                raise ProviderProtocolError(f"bad frame for id {resp.get('id')}")
        check("pipelined ids answered once each", sorted(got) == ids, f"ids={got}")
    except Exception as exc:
        check("pipelined ids answered once each", False, f"{type(exc).__name__}: {exc}")

    try:
        stream._writer.write(b"this is not json\n")
        stream._writer.flush()
        resp = stream.read_frame()
        check("malformed line yields error frame", "error" in resp, json.dumps(resp)[:100])
    except Exception as exc:
        check("malformed line yields error frame", False, f"{type(exc).__name__}: {exc}")

    try:
        stream.write_frame({"id": 777, "nonsense": True})
        resp = stream.read_frame()
        check("invalid request echoes original id",
              resp.get("id") == 777 and "error" in resp, json.dumps(resp)[:100])
    except Exception as exc:
        check("invalid request echoes original id", False, f"{type(exc).__name__}: {exc}")

    try:
        stream.write_frame({"id": 778, "context": [client.vocab_size + 10**6]})
        resp = stream.read_frame()
        ok = resp.get("id") == 778 and (
            "error" in resp
            or (isinstance(resp.get("logits"), list)
                and len(resp["logits"]) == client.vocab_size)
        )
        check("out-of-range token handled", ok, json.dumps(resp)[:100])
    except Exception as exc:
        check("out-of-range token handled", False, f"{type(exc).__name__}: {exc}")

    client.close()
    return results
