"""Color ablation and perturbed-corpus generation.

Fixes the light color per run over a subset of the 27-color lattice and
compares success rates, then materializes a small image x color corpus
with its manifest under demos/output/corpus/.
"""

import json
import os

import numpy as np

from catoptric import (
    COLOR_LATTICE_27,
    CentroidOracle,
    EotConfig,
    GaConfig,
    LabeledImage,
    color_ablation,
    generate_dataset,
)

OUT = os.path.join(os.path.dirname(__file__), "output")
os.makedirs(OUT, exist_ok=True)

centroids = np.array([
    [0.30, 0.55, 0.35],
    [0.65, 0.30, 0.60],
    [0.40, 0.70, 0.75],
])
oracle = CentroidOracle(centroids, temperature=10.0)

rng = np.random.default_rng(21)
dataset = []
while len(dataset) < 12:
    y = int(rng.integers(0, 3))
    rival = int((y + 1 + rng.integers(0, 2)) % 3)
    base = centroids[y] + 0.40 * (centroids[rival] - centroids[y])
    img = np.clip(base + rng.normal(0, 0.04, (16, 16, 3)), 0, 1).astype(np.float32)
    if oracle.predict(img).label == y:
        dataset.append(LabeledImage(image=img, label=y, id=f"img{len(dataset):03d}"))

# six lattice colors: the grayscale diagonal plus saturated magenta/yellow
colors = [c for c in COLOR_LATTICE_27 if c.r == c.g == c.b] + [
    c for c in COLOR_LATTICE_27 if c.as_tuple() in ((255, 0, 255), (255, 255, 0), (0, 255, 255))
]
ga = GaConfig(population_size=20, max_steps=15, rng_seed=4, eot_accept_fraction=0.75)
eot = EotConfig(brightness_delta_range=0.03, offset_range=0.01,
                color_jitter_range=0.03, samples=4)

table = color_ablation(dataset, oracle, colors=colors, intensity=0.6, ga=ga, eot=eot,
                       csv_path=os.path.join(OUT, "ablation.csv"))
print(f"{'color':>13} {'ASR':>7} {'mean queries':>13}")
for color, report in sorted(table.items(), key=lambda kv: -kv[1].asr):
    print(f"{str(color.as_tuple()):>13} {report.asr:>7.3f} {report.mean_queries:>13.1f}")

# corpus: every clean image x every lattice color at I=0.5
corpus_dir = os.path.join(OUT, "corpus")
manifest = generate_dataset(dataset[:3], corpus_dir, intensity=0.5,
                            rng=np.random.default_rng(99))
print(f"\ncorpus: {manifest['count']} samples "
      f"({len(dataset[:3])} images x {len(COLOR_LATTICE_27)} colors)")
entry = manifest["entries"][0]
print("first manifest entry:")
print(json.dumps(entry, indent=2)[:400])
