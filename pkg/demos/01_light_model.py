"""Walk through the light perturbation model.

Rasterizes a few polygons, composes colored light at increasing
intensities, and applies random transformation jitter. Writes a figure to
demos/output/light_model.png.
"""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from catoptric import (
    EotConfig,
    LightColor,
    LightParams,
    Polygon,
    apply_eot,
    compose_light,
    rasterize_polygon,
)

OUT = os.path.join(os.path.dirname(__file__), "output")
os.makedirs(OUT, exist_ok=True)

rng = np.random.default_rng(7)

# a soft gradient test image
yy, xx = np.mgrid[0:128, 0:128] / 127.0
image = np.stack([0.35 + 0.3 * xx, 0.45 + 0.2 * yy, 0.5 - 0.2 * xx], axis=2).astype(np.float32)

triangle = Polygon([(0.15, 0.2), (0.85, 0.35), (0.45, 0.9)])
bowtie = Polygon([(0.1, 0.1), (0.9, 0.9), (0.9, 0.1), (0.1, 0.9)])  # self-intersecting
hexagon = Polygon(rng.random((6, 2)))

fig, axes = plt.subplots(3, 5, figsize=(15, 9))

for row, poly in enumerate((triangle, bowtie, hexagon)):
    mask = rasterize_polygon(poly, 128, 128)
    axes[row, 0].imshow(mask, cmap="gray")
    axes[row, 0].set_title(f"{poly.num_vertices}-gon mask (even-odd)")
    for col, intensity in enumerate((0.2, 0.5, 0.8)):
        params = LightParams(poly, LightColor(255, 0, 255), intensity)
        axes[row, col + 1].imshow(compose_light(image, params))
        axes[row, col + 1].set_title(f"I = {intensity}")
    jittered = apply_eot(image, LightParams(poly, LightColor(255, 0, 255), 0.5),
                         None, EotConfig(), rng)
    axes[row, 4].imshow(jittered)
    axes[row, 4].set_title("one EOT draw")

for ax in axes.ravel():
    ax.set_xticks([])
    ax.set_yticks([])

fig.tight_layout()
path = os.path.join(OUT, "light_model.png")
fig.savefig(path, dpi=110)
print(f"wrote {path}")

# identity and saturation sanity checks
p0 = LightParams(triangle, LightColor(255, 0, 255), 0.0)
assert np.array_equal(compose_light(image, p0), image)
p1 = LightParams(Polygon([(0, 0), (1, 0), (1, 1), (0, 1)]), LightColor(255, 0, 255), 1.0)
assert np.allclose(compose_light(image, p1)[0, 0], [1, 0, 1])
print("identity at I=0 and saturation at I=1 verified")
