"""Newline-delimited JSON request handling over TCP or stdio.

One JSON object per line.  Every response carries the request's id.
Recoverable problems come back as ``{"id": ..., "error": "..."}``;
malformed JSON closes the connection.
"""

from __future__ import annotations

import json
import logging
import socketserver
import threading

from paraserver.model import ParaphraseModel

log = logging.getLogger(__name__)

CAPABILITIES = ["score", "generate"]


def _tokens(obj: dict, key: str) -> list[str]:
    value = obj.get(key)
    if not isinstance(value, list) or not all(
            isinstance(t, str) for t in value):
        raise ValueError(f"{key} must be an array of strings")
    return value


def handle_request(model: ParaphraseModel, obj: dict,
                   lock: threading.Lock) -> dict:
    rid = obj.get("id")
    try:
        op = obj.get("op")
        if op == "hello":
            return {"id": rid, "capabilities": CAPABILITIES}
        if op == "score_next":
            with lock:
                logprobs = model.score_next(_tokens(obj, "source"),
                                            _tokens(obj, "prefix"),
                                            _tokens(obj, "candidates"))
            return {"id": rid, "logprobs": logprobs}
        if op == "score_seq":
            with lock:
                logprob = model.score_sequence(_tokens(obj, "source"),
                                               _tokens(obj, "target"))
            return {"id": rid, "logprob": logprob}
        if op == "generate":
            n = obj.get("n")
            if not isinstance(n, int) or n < 0:
                raise ValueError("n must be a non-negative integer")
            with lock:
                outputs = model.generate_paraphrases(
                    _tokens(obj, "source"), n)
            return {"id": rid, "outputs": outputs}
        raise ValueError(f"unknown op: {op!r}")
    except ValueError as exc:
        return {"id": rid, "error": str(exc)}


def serve_stream(model: ParaphraseModel, rfile, wfile,
                 lock: threading.Lock | None = None) -> None:
    """Serve one NDJSON stream until EOF or the first malformed line."""
    lock = lock or threading.Lock()
    for line in rfile:
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            log.warning("malformed JSON; closing connection")
            return
        resp = handle_request(model, obj, lock)
        wfile.write(json.dumps(resp) + "\n")
        wfile.flush()


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        rfile = (line.decode("utf-8") for line in self.rfile)
        serve_stream(self.server.model, rfile, _ByteWriter(self.wfile),
                     self.server.model_lock)


class _ByteWriter:
    def __init__(self, wfile):
        self._wfile = wfile

    def write(self, text: str) -> None:
        self._wfile.write(text.encode("utf-8"))

    def flush(self) -> None:
        self._wfile.flush()


def serve_tcp(model: ParaphraseModel, host: str,
              port: int) -> socketserver.ThreadingTCPServer:
    """Bind a threaded server; the caller drives ``serve_forever``."""
    server = socketserver.ThreadingTCPServer((host, port), _Handler)
    server.daemon_threads = True
    server.model = model
    server.model_lock = threading.Lock()
    return server
