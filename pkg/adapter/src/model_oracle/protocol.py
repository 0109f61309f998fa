"""Wire protocol framing: parse requests, serialize responses.

Request:  {"id": <uint64>, "width": W, "height": H, "pixels": "<base64>"}
          pixels decode to W*H*3 little-endian float32, row-major RGB,
          each value in [0, 1].
Response: {"id": <same>, "scores": [...], "label": <int>} or
          {"id": <same or null>, "error": "<message>"}.
"""

from __future__ import annotations

import base64
import binascii
import json

import numpy as np


def parse_request(frame: bytes):
    """Returns (request_id, image, error_message); image is (H, W, 3) float32.

    On any malformed input the image is None and the error message is set;
    the request id is preserved whenever it could be read.
    """
    rid = None
    try:
        obj = json.loads(frame.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        return None, None, f"invalid JSON frame: {exc}"
    if not isinstance(obj, dict):
        return None, None, "request must be a JSON object"
    if isinstance(obj.get("id"), int):
        rid = obj["id"]
    for key in ("id", "width", "height", "pixels"):
        if key not in obj:
            return rid, None, f"missing field {key!r}"
    if rid is None:
        return None, None, "field 'id' must be an integer"
    width, height = obj["width"], obj["height"]
    if not (isinstance(width, int) and isinstance(height, int) and width >= 1 and height >= 1):
        return rid, None, "width and height must be positive integers"
    if not isinstance(obj["pixels"], str):
        return rid, None, "field 'pixels' must be a base64 string"
    try:
        raw = base64.b64decode(obj["pixels"], validate=True)
    except (binascii.Error, ValueError) as exc:
        return rid, None, f"invalid base64 pixels: {exc}"
    expected = width * height * 3 * 4
    if len(raw) != expected:
        return rid, None, f"pixel payload is {len(raw)} bytes, expected {expected}"
    image = np.frombuffer(raw, dtype="<f4").reshape(height, width, 3)
    if not np.isfinite(image).all() or image.min() < 0.0 or image.max() > 1.0:
        return rid, None, "pixel values must be finite and in [0, 1]"
    return rid, image, None


def format_response(rid: int, scores: np.ndarray, label: int) -> bytes:
    obj = {"id": int(rid), "scores": [float(s) for s in scores], "label": int(label)}
    return json.dumps(obj, separators=(",", ":")).encode("utf-8")


def format_error(rid, message: str) -> bytes:
    obj = {"id": rid if isinstance(rid, int) else None, "error": str(message)}
    return json.dumps(obj, separators=(",", ":")).encode("utf-8")
