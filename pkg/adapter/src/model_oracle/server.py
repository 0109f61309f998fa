"""Serve a model over the oracle wire protocol (stdio lines or HTTP)."""

from __future__ import annotations

import sys
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .protocol import format_error, format_response, parse_request


def handle_frame(frame: bytes, model) -> bytes:
    """One request in, one response out; malformed input never raises."""
    rid, image, error = parse_request(frame)
    if error is not None:
        return format_error(rid, error)
    try:
        scores = np.asarray(model.scores(image), dtype=np.float64)
        scores = np.clip(scores, 0.0, None)
        scores = scores / scores.sum()  # renormalize to sum exactly to 1
        label = int(np.argmax(scores))
        return format_response(rid, scores, label)
    except Exception as exc:  # model failure must not kill the server
        return format_error(rid, f"inference failed: {exc}")


def serve_stdio(model) -> None:
    """Answer one JSON line per request until stdin closes."""
    stdin = sys.stdin.buffer
    stdout = sys.stdout.buffer
    for line in iter(stdin.readline, b""):
        line = line.strip()
        if not line:
            continue
        stdout.write(handle_frame(line, model) + b"\n")
        stdout.flush()


def make_http_server(model, port: int) -> ThreadingHTTPServer:
    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            if self.path.rstrip("/") not in ("", "/predict".rstrip("/"), "/predict"):
                self.send_error(404)
                return
            length = int(self.headers.get("Content-Length", 0))
            body = self.rfile.read(length)
            payload = handle_frame(body, model)
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

        def log_message(self, *args):
            pass

    return ThreadingHTTPServer(("127.0.0.1", port), Handler)


def serve_http(model, port: int) -> None:
    server = make_http_server(model, port)
    print(f"serving POST /predict on 127.0.0.1:{server.server_port}", file=sys.stderr)
    server.serve_forever()
