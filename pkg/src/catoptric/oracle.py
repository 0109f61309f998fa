"""Black-box classifier oracles.

The attack engine only ever sees a score vector and a top-1 label, never
gradients. Three oracle flavors live here: a synthetic nearest-centroid
classifier for dependency-free experiments, and two clients (subprocess
stdio, HTTP) speaking the JSON wire protocol to external model adapters.

Wire protocol (one JSON object per stdio line / HTTP exchange, UTF-8):
    request:  {"id": <uint64>, "width": W, "height": H, "pixels": "<base64>"}
              pixels = W*H*3 float32 values, little-endian, row-major,
              channel-interleaved RGB, each in [0, 1]
    response: {"id": <same>, "scores": [...], "label": <int>}
Scores must be non-negative and sum to 1 within 1e-6; the label must be
the argmax with ties resolved to the lowest index. Both are enforced at
this trust boundary regardless of what the adapter claims.
"""

from __future__ import annotations

import abc
import base64
import json
import os
import queue
import shlex
import subprocess
import threading
from dataclasses import dataclass

import numpy as np
import requests

from .imaging import validate_image

SCORE_SUM_TOL = 1e-6
DEFAULT_TIMEOUT_MS = 30_000
TIMEOUT_ENV_VAR = "CATOPTRIC_ORACLE_TIMEOUT_MS"


class OracleError(Exception):
    """Base class for everything that can go wrong talking to an oracle."""


class OracleTimeoutError(OracleError):
    """The oracle did not answer within the configured timeout."""


class OracleConnectionError(OracleError):
    """The transport dropped: process died, socket refused, pipe broke."""


class OracleProtocolError(OracleError):
    """The oracle answered, but not with a well-formed matching response."""


class ScoreValidationError(OracleError):
    """The response parsed but its scores/label violate the contract."""


@dataclass(frozen=True)
class Prediction:
    """A validated oracle answer: full score vector plus top-1 label."""

    scores: np.ndarray
    label: int

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        if scores.ndim != 1 or scores.size < 1:
            raise ScoreValidationError(f"scores must be a non-empty vector, got shape {scores.shape}")
        if not np.isfinite(scores).all() or scores.min() < 0.0:
            raise ScoreValidationError("scores must be finite and non-negative")
        if abs(float(scores.sum()) - 1.0) > SCORE_SUM_TOL:
            raise ScoreValidationError(f"scores sum to {float(scores.sum()):.8f}, expected 1 +/- {SCORE_SUM_TOL}")
        expected = int(np.argmax(scores))  # argmax takes the lowest index on ties
        if int(self.label) != expected:
            raise ScoreValidationError(f"label {self.label} inconsistent with argmax {expected}")
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "label", int(self.label))

    @classmethod
    def from_scores(cls, scores) -> "Prediction":
        scores = np.asarray(scores, dtype=np.float64)
        return cls(scores=scores, label=int(np.argmax(scores)))


class ClassifierOracle(abc.ABC):
    """Query interface to a classifier plus an atomic query counter."""

    concurrency_safe: bool = False

    def __init__(self):
        self._query_count = 0
        self._count_lock = threading.Lock()

    @property
    def query_count(self) -> int:
        return self._query_count

    @property
    @abc.abstractmethod
    def num_classes(self) -> int | None:
        """Number of classes, or None if not yet known for a remote oracle."""

    def predict(self, image: np.ndarray) -> Prediction:
        with self._count_lock:
            self._query_count += 1
        return self._predict(image)

    @abc.abstractmethod
    def _predict(self, image: np.ndarray) -> Prediction:
        ...


class CentroidOracle(ClassifierOracle):
    """Synthetic classifier: nearest color centroid with softmax scores.

    The class-k score is softmax(-temperature * ||mean(image) - centroid_k||^2)
    over the image's mean RGB color. Deterministic, closed-form, and
    genuinely sensitive to colored-light perturbations, which makes it a
    meaningful desk-scale stand-in for a real model.
    """

    concurrency_safe = True

    def __init__(self, centroids, temperature: float = 10.0):
        super().__init__()
        c = np.asarray(centroids, dtype=np.float64)
        if c.ndim != 2 or c.shape[1] != 3 or c.shape[0] < 2:
            raise ValueError(f"centroids must be (K>=2, 3), got shape {c.shape}")
        if c.min() < 0.0 or c.max() > 1.0:
            raise ValueError("centroids must lie in [0, 1]^3")
        if len({tuple(row) for row in c.tolist()}) != c.shape[0]:
            raise ValueError("centroids must be distinct")
        if not temperature > 0:
            raise ValueError("temperature must be positive")
        c.setflags(write=False)
        self.centroids = c
        self.temperature = float(temperature)

    @property
    def num_classes(self) -> int:
        return self.centroids.shape[0]

    def scores_for_mean(self, mean_color: np.ndarray) -> np.ndarray:
        """Score vector for a given mean RGB color (the model's closed form)."""
        d2 = ((np.asarray(mean_color, dtype=np.float64) - self.centroids) ** 2).sum(axis=1)
        z = -self.temperature * d2
        z = z - z.max()
        e = np.exp(z)
        return e / e.sum()

    def _predict(self, image: np.ndarray) -> Prediction:
        img = np.asarray(image)
        if img.ndim != 3 or img.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) image, got shape {img.shape}")
        mean = img.reshape(-1, 3).mean(axis=0, dtype=np.float64)
        return Prediction.from_scores(self.scores_for_mean(mean))

    def to_json(self) -> dict:
        return {"centroids": self.centroids.tolist(), "temperature": self.temperature}

    @classmethod
    def from_json(cls, obj: dict) -> "CentroidOracle":
        return cls(obj["centroids"], float(obj.get("temperature", 10.0)))

    @classmethod
    def load(cls, path) -> "CentroidOracle":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2)


def _default_timeout_ms() -> int:
    return int(os.environ.get(TIMEOUT_ENV_VAR, DEFAULT_TIMEOUT_MS))


def encode_request(request_id: int, image: np.ndarray) -> bytes:
    """Serialize one prediction request to its canonical JSON bytes."""
    img = validate_image(image)
    h, w = img.shape[:2]
    raw = np.ascontiguousarray(img, dtype="<f4").tobytes()
    obj = {
        "id": int(request_id),
        "width": int(w),
        "height": int(h),
        "pixels": base64.b64encode(raw).decode("ascii"),
    }
    return json.dumps(obj, separators=(",", ":")).encode("utf-8")


def decode_response(data: bytes, expected_id: int) -> Prediction:
    """Parse and validate a response frame; raises typed oracle errors."""
    try:
        obj = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise OracleProtocolError(f"malformed response frame: {exc}") from exc
    if not isinstance(obj, dict):
        raise OracleProtocolError(f"response must be a JSON object, got {type(obj).__name__}")
    if obj.get("id") != expected_id:
        raise OracleProtocolError(f"response id {obj.get('id')!r} does not match request id {expected_id}")
    if "error" in obj:
        raise OracleProtocolError(f"oracle reported an error: {obj['error']}")
    if "scores" not in obj or "label" not in obj:
        raise OracleProtocolError("response is missing 'scores' or 'label'")
    try:
        scores = np.asarray(obj["scores"], dtype=np.float64)
        label = int(obj["label"])
    except (TypeError, ValueError) as exc:
        raise OracleProtocolError(f"response fields have wrong types: {exc}") from exc
    return Prediction(scores=scores, label=label)


class StdioOracleClient(ClassifierOracle):
    """Client for an adapter subprocess speaking JSON lines over stdio.

    One in-flight request per process; requests and responses are matched
    by id. The subprocess inherits stderr so adapter logs stay visible.
    """

    concurrency_safe = False

    def __init__(self, command, timeout_ms: int | None = None):
        super().__init__()
        if isinstance(command, str):
            command = shlex.split(command)
        self._timeout_s = (timeout_ms if timeout_ms is not None else _default_timeout_ms()) / 1000.0
        self._next_id = 1
        self._num_classes = None
        try:
            self._proc = subprocess.Popen(
                command, stdin=subprocess.PIPE, stdout=subprocess.PIPE, bufsize=0
            )
        except OSError as exc:
            raise OracleConnectionError(f"could not start oracle process {command!r}: {exc}") from exc
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def _read_loop(self):
        for line in iter(self._proc.stdout.readline, b""):
            self._lines.put(line)
        self._lines.put(None)  # EOF sentinel

    @property
    def num_classes(self) -> int | None:
        return self._num_classes

    def _predict(self, image: np.ndarray) -> Prediction:
        rid = self._next_id
        self._next_id += 1
        frame = encode_request(rid, image) + b"\n"
        try:
            self._proc.stdin.write(frame)
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise OracleConnectionError(f"oracle process pipe broke: {exc}") from exc
        try:
            line = self._lines.get(timeout=self._timeout_s)
        except queue.Empty:
            raise OracleTimeoutError(f"no response within {self._timeout_s * 1000:.0f} ms") from None
        if line is None:
            raise OracleConnectionError("oracle process closed its stdout")
        pred = decode_response(line.rstrip(b"\n"), rid)
        self._num_classes = pred.scores.size
        return pred

    def close(self):
        if self._proc.poll() is None:
            self._proc.terminate()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


class HttpOracleClient(ClassifierOracle):
    """Client for an adapter serving POST /predict over HTTP."""

    concurrency_safe = True

    def __init__(self, url: str, timeout_ms: int | None = None):
        super().__init__()
        self._url = url.rstrip("/") + "/predict" if not url.endswith("/predict") else url
        self._timeout_s = (timeout_ms if timeout_ms is not None else _default_timeout_ms()) / 1000.0
        self._id_lock = threading.Lock()
        self._next_id = 1
        self._num_classes = None

    @property
    def num_classes(self) -> int | None:
        return self._num_classes

    def _predict(self, image: np.ndarray) -> Prediction:
        with self._id_lock:
            rid = self._next_id
            self._next_id += 1
        body = encode_request(rid, image)
        try:
            resp = requests.post(
                self._url, data=body,
                headers={"Content-Type": "application/json"},
                timeout=self._timeout_s,
            )
        except requests.Timeout as exc:
            raise OracleTimeoutError(f"no response within {self._timeout_s * 1000:.0f} ms") from exc
        except requests.ConnectionError as exc:
            raise OracleConnectionError(f"could not reach oracle at {self._url}: {exc}") from exc
        if resp.status_code != 200:
            raise OracleProtocolError(f"oracle returned HTTP {resp.status_code}")
        pred = decode_response(resp.content, rid)
        self._num_classes = pred.scores.size
        return pred
