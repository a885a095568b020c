"""Loopback reference server for the editor/inpainter wire protocol.

Implements identity and recolor edits ("recolor r g b lambda") plus a
mean-fill inpainter, so clients can be exercised without any real model.
"""
from __future__ import annotations

import argparse
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional

import numpy as np

from .bridge import decode_png, encode_png
from .core import MaskImage


def _decode_mask(b64: str) -> np.ndarray:
    img = decode_png(b64)  # grayscale masks decode to equal rgb channels
    return img[..., 0] > 0.5


def identity_edit(current: np.ndarray, original: np.ndarray) -> np.ndarray:
    return current


def recolor_edit(current: np.ndarray, r: float, g: float, b: float,
                 lam: float) -> np.ndarray:
    target = np.array([r, g, b])
    return np.clip((1.0 - lam) * current + lam * target, 0.0, 1.0)


def mean_fill_inpaint(image: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Masked pixels get the per-channel mean of the unmasked pixels."""
    out = image.copy()
    keep = ~mask
    fill = image[keep].mean(axis=0) if keep.any() else np.zeros(3)
    out[mask] = fill
    return out


class _Handler(BaseHTTPRequestHandler):
    server_version = "RadiantLoopback/1.0"

    def log_message(self, fmt, *args):  # keep tests quiet
        pass

    def _reply(self, status: int, payload: dict):
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _fail(self, status: int, message: str):
        self._reply(status, {"error": message})

    def do_POST(self):
        token = self.server.required_token
        if token is not None:
            if self.headers.get("Authorization") != f"Bearer {token}":
                return self._fail(401, "missing or invalid bearer token")
        try:
            length = int(self.headers.get("Content-Length", "0"))
            request = json.loads(self.rfile.read(length))
        except (ValueError, json.JSONDecodeError):
            return self._fail(400, "request body is not valid JSON")
        if self.path == "/v1/edit":
            return self._handle_edit(request)
        if self.path == "/v1/inpaint":
            return self._handle_inpaint(request)
        return self._fail(404, f"unknown route {self.path}")

    def _handle_edit(self, request: dict):
        try:
            current = decode_png(request["current_png"])
            original = decode_png(request["original_png"])
            instruction = str(request["instruction"])
        except KeyError as exc:
            return self._fail(400, f"missing field {exc.args[0]!r}")
        except Exception as exc:
            return self._fail(400, f"bad image payload: {exc}")
        if current.shape != original.shape:
            return self._fail(400, "current and original image dimensions differ")
        words = instruction.split()
        if instruction == "identity" or not words:
            edited = identity_edit(current, original)
        elif words[0] == "recolor" and len(words) == 5:
            try:
                r, g, b, lam = (float(w) for w in words[1:])
            except ValueError:
                return self._fail(400, "recolor expects: recolor r g b lambda")
            edited = recolor_edit(current, r, g, b, lam)
        else:
            return self._fail(400, f"unknown instruction {instruction!r}")
        self._reply(200, {"edited_png": encode_png(edited)})

    def _handle_inpaint(self, request: dict):
        try:
            image = decode_png(request["image_png"])
            mask = _decode_mask(request["mask_png"])
        except KeyError as exc:
            return self._fail(400, f"missing field {exc.args[0]!r}")
        except Exception as exc:
            return self._fail(400, f"bad image payload: {exc}")
        if mask.shape != image.shape[:2]:
            return self._fail(400, "image and mask dimensions differ")
        self._reply(200, {"inpainted_png": encode_png(mean_fill_inpaint(image, mask))})


class LoopbackServer:
    """Threaded reference server bound to 127.0.0.1; port 0 picks a free one."""

    def __init__(self, port: int = 0, required_token: Optional[str] = None):
        self._httpd = ThreadingHTTPServer(("127.0.0.1", port), _Handler)
        self._httpd.required_token = required_token
        self._thread: Optional[threading.Thread] = None

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def url(self) -> str:
        return f"http://127.0.0.1:{self.port}"

    def start(self) -> "LoopbackServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self):
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None

    def __enter__(self) -> "LoopbackServer":
        return self.start()

    def __exit__(self, *exc):
        self.stop()


def main(argv=None):
    parser = argparse.ArgumentParser(description="loopback edit/inpaint server")
    parser.add_argument("--port", type=int, default=8091)
    parser.add_argument("--token", default=None)
    args = parser.parse_args(argv)
    server = LoopbackServer(port=args.port, required_token=args.token)
    print(f"serving on {server.url}")
    try:
        server._httpd.serve_forever()
    except KeyboardInterrupt:
        server.stop()


if __name__ == "__main__":
    main()
