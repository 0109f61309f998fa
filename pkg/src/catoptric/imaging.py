"""Polygonal light perturbation model.

Images are float32 numpy arrays of shape (H, W, 3) with channel values in
[0, 1]. A light perturbation is a polygon (normalized [0,1]^2 vertex
coordinates), an 8-bit RGB color and a blend intensity. Compositing is an
alpha blend inside the rasterized polygon region, restricted by a boolean
mask; an additive blend mode exists for sensitivity studies.

Rasterization uses the even-odd fill rule with a half-open crossing
convention: a pixel center is inside when an odd number of polygon edges
cross the horizontal ray toward +x, where an edge spanning [ymin, ymax)
counts iff its intersection lies strictly right of the center.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

try:  # optional JIT acceleration; the numpy paths below are the reference
    from numba import njit as _njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False


class InvalidPolygonError(ValueError):
    """Raised for polygons with fewer than 3 or more than 9 vertices."""


MIN_VERTICES = 3
MAX_VERTICES = 9


def validate_image(image) -> np.ndarray:
    """Check an (H, W, 3) unit-interval image and return it as float32."""
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError("image must have at least one pixel")
    if not np.isfinite(arr).all():
        raise ValueError("image contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("image channels must lie in [0, 1]")
    return np.ascontiguousarray(arr, dtype=np.float32)


@dataclass(frozen=True, eq=False)
class Polygon:
    """Ordered vertices in normalized [0,1]^2 coordinates."""

    vertices: np.ndarray

    def __eq__(self, other):
        return isinstance(other, Polygon) and np.array_equal(self.vertices, other.vertices)

    def __hash__(self):
        return hash(self.vertices.tobytes())

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 2:
            raise InvalidPolygonError(f"vertices must be (k, 2), got {v.shape}")
        k = v.shape[0]
        if not (MIN_VERTICES <= k <= MAX_VERTICES):
            raise InvalidPolygonError(f"polygon needs {MIN_VERTICES}..{MAX_VERTICES} vertices, got {k}")
        if not np.isfinite(v).all():
            raise InvalidPolygonError("vertex coordinates must be finite")
        if v.min() < 0.0 or v.max() > 1.0:
            raise InvalidPolygonError("vertex coordinates must lie in [0, 1]")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]


@dataclass(frozen=True)
class LightColor:
    """8-bit RGB color of the light."""

    r: int
    g: int
    b: int

    def __post_init__(self):
        for name in ("r", "g", "b"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or not (0 <= v <= 255):
                raise ValueError(f"channel {name}={v!r} must be an integer in [0, 255]")
            object.__setattr__(self, name, int(v))

    def as_unit(self) -> np.ndarray:
        """Color as a float32 triple in [0, 1]."""
        return np.array([self.r, self.g, self.b], dtype=np.float32) / np.float32(255.0)

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.r, self.g, self.b)


@dataclass(frozen=True)
class LightParams:
    """Full light parameter vector: polygon placement, color, intensity."""

    polygon: Polygon
    color: LightColor
    intensity: float

    def __post_init__(self):
        i = float(self.intensity)
        if not np.isfinite(i) or not (0.0 <= i <= 1.0):
            raise ValueError(f"intensity {self.intensity!r} must lie in [0, 1]")
        object.__setattr__(self, "intensity", i)


@dataclass(frozen=True)
class EotConfig:
    """Random transformation ranges for the digital-to-physical check.

    Each transformed copy jitters the light placement by a uniform offset,
    scales color channels by per-channel factors around 1, applies the
    blend, then shifts global brightness.
    """

    brightness_delta_range: float = 0.1
    offset_range: float = 0.02
    color_jitter_range: float = 0.1
    samples: int = 10

    def __post_init__(self):
        for name in ("brightness_delta_range", "offset_range", "color_jitter_range"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.samples < 1:
            raise ValueError("samples must be >= 1")


def full_mask(width: int, height: int) -> np.ndarray:
    """All-true region mask covering the whole image."""
    return np.ones((height, width), dtype=bool)


_CENTER_CACHE: dict[tuple[str, int], np.ndarray] = {}


def _pixel_centers(axis: str, n: int) -> np.ndarray:
    key = (axis, n)
    centers = _CENTER_CACHE.get(key)
    if centers is None:
        centers = (np.arange(n, dtype=np.float64) + 0.5) / n
        centers.setflags(write=False)
        _CENTER_CACHE[key] = centers
    return centers


def _rasterize_vertices_numpy(vertices: np.ndarray, width: int, height: int) -> np.ndarray:
    v = np.asarray(vertices, dtype=np.float64)
    x1, y1 = v[:, 0], v[:, 1]
    x2, y2 = np.roll(x1, -1), np.roll(y1, -1)

    ys = _pixel_centers("y", height)
    xs = _pixel_centers("x", width)

    # Edge crossed by scanline y iff min(y1,y2) <= y < max(y1,y2); the
    # intersection expression must stay `x1 + (y - y1) * (x2 - x1) / (y2 - y1)`
    # so scalar re-derivations of the rule agree bit-exactly.
    lo = np.minimum(y1, y2)[None, :]
    hi = np.maximum(y1, y2)[None, :]
    crossed = (lo <= ys[:, None]) & (ys[:, None] < hi)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = x1[None, :] + (ys[:, None] - y1[None, :]) * (x2 - x1)[None, :] / (y2 - y1)[None, :]
    xint = np.where(crossed, xint, -np.inf)  # -inf is never right of a center

    counts = (xint[:, None, :] > xs[None, :, None]).sum(axis=2)
    return (counts & 1).astype(bool)


if _HAVE_NUMBA:

    @_njit(cache=True)
    def _rasterize_core(vx, vy, width, height):  # pragma: no cover - jitted
        k = vx.shape[0]
        out = np.zeros((height, width), dtype=np.bool_)
        cross = np.empty(k, dtype=np.float64)
        for i in range(height):
            y = (i + 0.5) / height
            n = 0
            for e in range(k):
                y1 = vy[e]
                y2 = vy[(e + 1) % k]
                if (y1 <= y and y < y2) or (y2 <= y and y < y1):
                    x1 = vx[e]
                    x2 = vx[(e + 1) % k]
                    cross[n] = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
                    n += 1
            if n == 0:
                continue
            for j in range(width):
                xc = (j + 0.5) / width
                cnt = 0
                for t in range(n):
                    if cross[t] > xc:
                        cnt += 1
                out[i, j] = (cnt & 1) == 1
        return out


def _rasterize_vertices(vertices: np.ndarray, width: int, height: int) -> np.ndarray:
    """Even-odd fill over pixel centers for a raw (k, 2) vertex array.

    No range check on the vertices: translated polygons may legitimately
    leave [0,1]^2 during the transformation jitter.
    """
    if _HAVE_NUMBA:
        v = np.ascontiguousarray(vertices, dtype=np.float64)
        return _rasterize_core(v[:, 0].copy(), v[:, 1].copy(), width, height)
    return _rasterize_vertices_numpy(vertices, width, height)


def rasterize_polygon(polygon: Polygon, width: int, height: int) -> np.ndarray:
    """Rasterize a polygon onto a width x height grid of pixel centers.

    Returns a boolean (H, W) mask; zero-area polygons rasterize to all
    false. Self-intersecting polygons follow the even-odd rule.
    """
    if not isinstance(polygon, Polygon):
        polygon = Polygon(np.asarray(polygon, dtype=np.float64))
    if width < 1 or height < 1:
        raise ValueError("width and height must be >= 1")
    return _rasterize_vertices(polygon.vertices, width, height)


def _blend_region_numpy(image: np.ndarray, region: np.ndarray, color_unit: np.ndarray,
                        intensity: float, mode: str) -> np.ndarray:
    out = image.copy()
    i = np.float32(intensity)
    c = color_unit.astype(np.float32)
    if mode == "alpha":
        out[region] = np.clip((np.float32(1.0) - i) * image[region] + i * c, 0.0, 1.0)
    elif mode == "additive":
        out[region] = np.clip(image[region] + i * c, 0.0, 1.0)
    else:
        raise ValueError(f"unknown blend mode {mode!r}")
    return out


if _HAVE_NUMBA:

    @_njit(cache=True)
    def _blend_core(image, region, color, intensity, additive):  # pragma: no cover - jitted
        out = image.copy()
        one = np.float32(1.0)
        zero = np.float32(0.0)
        keep = one - intensity
        for i in range(image.shape[0]):
            for j in range(image.shape[1]):
                if region[i, j]:
                    for ch in range(3):
                        if additive:
                            v = image[i, j, ch] + intensity * color[ch]
                        else:
                            v = keep * image[i, j, ch] + intensity * color[ch]
                        if v < zero:
                            v = zero
                        elif v > one:
                            v = one
                        out[i, j, ch] = v
        return out


def _blend_region(image: np.ndarray, region: np.ndarray, color_unit: np.ndarray,
                  intensity: float, mode: str) -> np.ndarray:
    if mode not in ("alpha", "additive"):
        raise ValueError(f"unknown blend mode {mode!r}")
    if _HAVE_NUMBA:
        return _blend_core(
            np.ascontiguousarray(image, dtype=np.float32),
            np.ascontiguousarray(region),
            color_unit.astype(np.float32),
            np.float32(intensity),
            mode == "additive",
        )
    return _blend_region_numpy(image, region, color_unit, intensity, mode)


def compose_light(image: np.ndarray, params: LightParams, mask: np.ndarray | None = None,
                  mode: str = "alpha") -> np.ndarray:
    """Blend the light into the image inside mask AND rasterized polygon.

    Alpha mode: out = clip((1 - I) * in + I * C/255), so I=0 is the identity
    and I=1 paints the pure light color. Pixels outside the region are
    bit-identical to the input; the input array is never modified.
    """
    img = validate_image(image)
    h, w = img.shape[:2]
    if mask is None:
        mask = full_mask(w, h)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (h, w):
        raise ValueError(f"mask shape {mask.shape} does not match image {(h, w)}")
    region = mask & rasterize_polygon(params.polygon, w, h)
    return _blend_region(img, region, params.color.as_unit(), params.intensity, mode)


def apply_eot(image: np.ndarray, params: LightParams, mask: np.ndarray | None,
              config: EotConfig, rng: np.random.Generator, mode: str = "alpha") -> np.ndarray:
    """Compose the light under one randomly drawn transformation.

    Draw order is fixed (placement offset dx/dy, three color factors,
    brightness delta) so outputs are a pure function of the rng state.
    With all ranges zero the result equals compose_light exactly.
    """
    img = validate_image(image)
    h, w = img.shape[:2]
    if mask is None:
        mask = full_mask(w, h)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (h, w):
        raise ValueError(f"mask shape {mask.shape} does not match image {(h, w)}")

    dx = rng.uniform(-config.offset_range, config.offset_range)
    dy = rng.uniform(-config.offset_range, config.offset_range)
    factors = rng.uniform(1.0 - config.color_jitter_range, 1.0 + config.color_jitter_range, size=3)
    delta = rng.uniform(-config.brightness_delta_range, config.brightness_delta_range)

    verts = params.polygon.vertices + np.array([dx, dy])
    region = mask & _rasterize_vertices(verts, w, h)
    color_unit = np.clip(params.color.as_unit() * factors, 0.0, 1.0)
    out = _blend_region(img, region, color_unit, params.intensity, mode)
    return np.clip(out + np.float32(delta), 0.0, 1.0)


def load_png(path) -> np.ndarray:
    """Read an image file into a unit-interval float32 array (8-bit v/255)."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32)
    return arr / np.float32(255.0)


def save_png(image: np.ndarray, path) -> None:
    """Write a unit-interval image as 8-bit PNG (round(v*255) per channel)."""
    img = validate_image(image)
    data = np.rint(img * 255.0).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(path, format="PNG")
