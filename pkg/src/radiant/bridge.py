"""HTTP client that lets external processes act as the 2D editor or the
2D inpainter. Images travel as base64 PNG inside JSON, which round-trips
8-bit data exactly.
"""
from __future__ import annotations

import base64
import io
import json
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
import requests
from PIL import Image

from .core import MaskImage

BACKOFF_BASE = 0.5
BACKOFF_FACTOR = 2.0

# test seam: monkeypatch to avoid real sleeping
_sleep = time.sleep


class RemoteError(RuntimeError):
    """Base class for editor/inpainter bridge failures."""


class RemoteRejected(RemoteError):
    """The server answered with a non-200 status."""

    def __init__(self, status: int, body: str):
        super().__init__(f"remote rejected request: HTTP {status}: {body[:200]}")
        self.status = status
        self.body = body


class RemoteUnavailable(RemoteError):
    """The endpoint could not be reached within the retry budget."""


class ProtocolViolation(RemoteError):
    """The server's response violates the wire contract."""


@dataclass(frozen=True)
class RemoteEndpoint:
    base_url: str
    timeout: float = 30.0
    max_retries: int = 2
    auth_token: Optional[str] = None

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


def encode_png(rgb: np.ndarray) -> str:
    arr = np.clip(np.rint(np.asarray(rgb) * 255.0), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="RGB").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def encode_mask_png(mask: MaskImage) -> str:
    buf = io.BytesIO()
    Image.fromarray(mask.data.astype(np.uint8) * 255, mode="L").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_png(b64: str) -> np.ndarray:
    try:
        raw = base64.b64decode(b64)
        with Image.open(io.BytesIO(raw)) as im:
            arr = np.asarray(im.convert("RGB"))
    except Exception as exc:
        raise ProtocolViolation(f"response image could not be decoded: {exc}") from exc
    return arr.astype(np.float64) / 255.0


def _headers(endpoint: RemoteEndpoint) -> dict:
    headers = {"Content-Type": "application/json"}
    if endpoint.auth_token:
        headers["Authorization"] = f"Bearer {endpoint.auth_token}"
    return headers


def _post(endpoint: RemoteEndpoint, route: str, payload: dict) -> dict:
    """POST with retries on connection-level failures only.

    The request body is serialized once so every attempt sends identical
    bytes. Non-200 answers raise immediately (the server did respond).
    """
    body = json.dumps(payload).encode("utf-8")
    url = endpoint.base_url.rstrip("/") + route
    attempts = endpoint.max_retries + 1
    last_error = None
    for attempt in range(attempts):
        if attempt > 0:
            _sleep(BACKOFF_BASE * BACKOFF_FACTOR ** (attempt - 1))
        try:
            response = requests.post(url, data=body, headers=_headers(endpoint),
                                     timeout=endpoint.timeout)
        except (requests.ConnectionError, requests.Timeout) as exc:
            last_error = exc
            continue
        if response.status_code != 200:
            raise RemoteRejected(response.status_code, response.text)
        try:
            return response.json()
        except ValueError as exc:
            raise ProtocolViolation(f"response is not valid JSON: {exc}") from exc
    raise RemoteUnavailable(
        f"{url} unreachable after {attempts} attempts: {last_error}")


def _expect_image(reply: dict, key: str, width: int, height: int) -> np.ndarray:
    if key not in reply:
        raise ProtocolViolation(f"response missing field {key!r}")
    img = decode_png(reply[key])
    got_h, got_w = img.shape[:2]
    if (got_w, got_h) != (width, height):
        raise ProtocolViolation(
            f"response image is {got_w}x{got_h}, expected {width}x{height}")
    return img


def remote_edit(endpoint: RemoteEndpoint, current_rgb: np.ndarray,
                original_rgb: np.ndarray, instruction: str) -> np.ndarray:
    """POST /v1/edit: edit current_rgb conditioned on original_rgb and text."""
    current_rgb = np.asarray(current_rgb, dtype=np.float64)
    original_rgb = np.asarray(original_rgb, dtype=np.float64)
    if current_rgb.shape != original_rgb.shape:
        raise ValueError("current and original images must share dimensions")
    payload = {
        "instruction": str(instruction),
        "current_png": encode_png(current_rgb),
        "original_png": encode_png(original_rgb),
    }
    reply = _post(endpoint, "/v1/edit", payload)
    h, w = current_rgb.shape[:2]
    return _expect_image(reply, "edited_png", w, h)


def remote_inpaint(endpoint: RemoteEndpoint, rgb: np.ndarray,
                   mask: MaskImage) -> np.ndarray:
    """POST /v1/inpaint: fill pixels where mask=1, keep mask=0 pixels intact.

    The client verifies that unmasked pixels came back unchanged (within
    1/255) to guard against servers that regenerate the whole image.
    """
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.shape[:2] != mask.data.shape:
        raise ValueError("image and mask dimensions must match")
    payload = {
        "image_png": encode_png(rgb),
        "mask_png": encode_mask_png(mask),
    }
    reply = _post(endpoint, "/v1/inpaint", payload)
    h, w = rgb.shape[:2]
    out = _expect_image(reply, "inpainted_png", w, h)
    keep = ~mask.data
    if keep.any():
        sent = np.clip(np.rint(rgb * 255.0), 0, 255) / 255.0
        deviation = np.abs(out - sent)[keep].max()
        if deviation > 1.0 / 255.0 + 1e-12:
            raise ProtocolViolation(
                f"server modified unmasked pixels (max deviation {deviation:.4f})")
    return out


class RemoteEditor:
    """Editor adapter for idu_run over the wire protocol."""

    def __init__(self, endpoint: RemoteEndpoint):
        self.endpoint = endpoint

    def edit(self, current_rgb, original_rgb, instruction):
        return remote_edit(self.endpoint, current_rgb, original_rgb, instruction.text)


class RemoteInpainter:
    def __init__(self, endpoint: RemoteEndpoint):
        self.endpoint = endpoint

    def inpaint(self, rgb, mask):
        return remote_inpaint(self.endpoint, rgb, mask)
