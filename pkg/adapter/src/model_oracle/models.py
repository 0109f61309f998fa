"""Model backends behind the adapter.

`builtin-tiny` is a fully deterministic linear classifier over sampled
pixel features whose weights derive from SHA-256, so fixtures regenerate
byte-for-byte with no external weight files. Torchvision models carry the
real classifiers; the adapter owns resize/crop/normalization so the
attack engine stays model-agnostic.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass(frozen=True)
class AdapterConfig:
    """Everything that determines the adapter's input-output behavior."""

    model: str = "builtin-tiny"
    transport: str = "stdio"  # "stdio" or "http:<port>"
    resize: int = 256
    crop: int = 224
    normalize_mean: tuple[float, float, float] = IMAGENET_MEAN
    normalize_std: tuple[float, float, float] = IMAGENET_STD
    weights: str | None = None  # torchvision weights name or checkpoint path
    device: str = "cpu"

    def to_json(self) -> dict:
        return {
            "model": self.model, "transport": self.transport,
            "resize": self.resize, "crop": self.crop,
            "normalize_mean": list(self.normalize_mean),
            "normalize_std": list(self.normalize_std),
            "weights": self.weights, "device": self.device,
        }


def _sha_floats(key: str, n: int) -> np.ndarray:
    """n doubles in [-1, 1), derived from SHA-256; stable across platforms."""
    out = np.empty(n, dtype=np.float64)
    i = 0
    counter = 0
    while i < n:
        digest = hashlib.sha256(f"{key}:{counter}".encode("ascii")).digest()
        words = np.frombuffer(digest, dtype="<u8")
        take = min(len(words), n - i)
        out[i:i + take] = (words[:take] / np.float64(2 ** 64)) * 2.0 - 1.0
        i += take
        counter += 1
    return out


class TinyDeterministicModel:
    """Linear softmax classifier over a sampled pixel grid plus mean color.

    Accepts any image size: features are the RGB values at a fixed 4x4
    grid of sample points plus the global mean color (51 dims). Weights
    come from SHA-256, so two builds of this adapter produce bit-identical
    score vectors for identical requests.
    """

    GRID = 4
    NUM_CLASSES = 16

    def __init__(self, key: str = "builtin-tiny-v1"):
        n_features = self.GRID * self.GRID * 3 + 3
        self.weights = _sha_floats(f"{key}:w", self.NUM_CLASSES * n_features).reshape(
            self.NUM_CLASSES, n_features) / np.sqrt(n_features)
        self.bias = _sha_floats(f"{key}:b", self.NUM_CLASSES) * 0.1

    @property
    def num_classes(self) -> int:
        return self.NUM_CLASSES

    def _features(self, image: np.ndarray) -> np.ndarray:
        h, w, _ = image.shape
        ys = np.minimum(((np.arange(self.GRID) + 0.5) * h / self.GRID).astype(int), h - 1)
        xs = np.minimum(((np.arange(self.GRID) + 0.5) * w / self.GRID).astype(int), w - 1)
        sampled = image[np.ix_(ys, xs)].astype(np.float64).reshape(-1)
        mean = image.reshape(-1, 3).mean(axis=0, dtype=np.float64)
        return np.concatenate([sampled, mean])

    def scores(self, image: np.ndarray) -> np.ndarray:
        logits = self.weights @ self._features(image) + self.bias
        z = logits - logits.max()
        e = np.exp(z)
        return e / e.sum()


class TorchvisionModel:
    """Wraps a torchvision classification model in inference mode."""

    def __init__(self, config: AdapterConfig):
        import torch
        from torchvision import models as tv_models
        from torchvision import transforms

        self._torch = torch
        weights = config.weights if config.weights else "DEFAULT"
        if weights and weights.endswith((".pt", ".pth")):
            model = tv_models.get_model(config.model, weights=None)
            state = torch.load(weights, map_location=config.device)
            model.load_state_dict(state)
        else:
            model = tv_models.get_model(config.model, weights=weights)
        self.model = model.eval().to(config.device)
        self.device = config.device
        self.transform = transforms.Compose([
            transforms.Resize(config.resize, antialias=True),
            transforms.CenterCrop(config.crop),
            transforms.Normalize(mean=config.normalize_mean, std=config.normalize_std),
        ])
        with torch.inference_mode():
            probe = torch.zeros(1, 3, config.crop, config.crop, device=self.device)
            self._num_classes = int(self.model(probe).shape[1])

    @property
    def num_classes(self) -> int:
        return self._num_classes

    def scores(self, image: np.ndarray) -> np.ndarray:
        torch = self._torch
        with torch.inference_mode():
            x = torch.from_numpy(np.ascontiguousarray(image)).permute(2, 0, 1).unsqueeze(0)
            x = self.transform(x.to(self.device))
            probs = torch.softmax(self.model(x), dim=1)[0]
        return probs.cpu().numpy().astype(np.float64)


def build_model(config: AdapterConfig):
    if config.model == "builtin-tiny":
        return TinyDeterministicModel()
    return TorchvisionModel(config)
