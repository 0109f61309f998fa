"""Drive the command-line interface end to end with the bundled
synthetic oracle: writes an oracle spec and a labeled dataset, runs
`catoptric attack` and `catoptric grid`, and replays the produced
parameters."""

import csv
import json
import os
import subprocess
import sys

import numpy as np

from catoptric import (
    CentroidOracle,
    LightColor,
    LightParams,
    Polygon,
    compose_light,
    load_png,
    save_png,
)

OUT = os.path.join(os.path.dirname(__file__), "output", "cli")
os.makedirs(OUT, exist_ok=True)

centroids = [[0.30, 0.55, 0.35], [0.65, 0.30, 0.60], [0.40, 0.70, 0.75]]
oracle = CentroidOracle(centroids, temperature=10.0)
oracle.save(os.path.join(OUT, "oracle.json"))

rng = np.random.default_rng(31)
rows = []
c = np.asarray(centroids)
for i in range(5):
    y = i % 3
    base = c[y] + 0.42 * (c[(y + 1) % 3] - c[y])
    img = np.clip(base + rng.normal(0, 0.02, (16, 16, 3)), 0, 1).astype(np.float32)
    assert oracle.predict(img).label == y
    save_png(img, os.path.join(OUT, f"img{i}.png"))
    rows.append((f"img{i}", f"img{i}.png", y))
with open(os.path.join(OUT, "dataset.csv"), "w", newline="") as fh:
    writer = csv.writer(fh)
    writer.writerow(["id", "path", "label"])
    writer.writerows(rows)


def cli(*args):
    cmd = [sys.executable, "-m", "catoptric", *[str(a) for a in args]]
    print("$", " ".join(cmd[2:]))
    proc = subprocess.run(cmd, capture_output=True, text=True)
    print(proc.stdout.strip())
    if proc.stderr.strip():
        print(proc.stderr.strip())
    return proc.returncode


code = cli("attack",
           "--image", os.path.join(OUT, "img0.png"), "--label", 0,
           "--oracle", f"builtin:{OUT}/oracle.json",
           "--seed", 7, "--out", os.path.join(OUT, "attack"),
           "--seed-count", 25, "--steps", 15, "--eot-samples", 3, "--eot-accept", 0.7)
print(f"exit code {code} (0 = attack succeeded)\n")

theta = json.load(open(os.path.join(OUT, "attack", "theta.json")))
params = LightParams(Polygon(theta["vertices"]), LightColor(*theta["color"]),
                     theta["intensity"])
adv = compose_light(load_png(os.path.join(OUT, "img0.png")), params)
print(f"replayed theta flips the label: {oracle.predict(adv).label != 0}\n")

code = cli("grid",
           "--dataset", os.path.join(OUT, "dataset.csv"),
           "--oracle", f"builtin:{OUT}/oracle.json",
           "--seed", 7, "--out", os.path.join(OUT, "grid"),
           "--edge-counts", "3", "--intensities", "0.4,0.8", "--methods", "random,ga",
           "--seed-count", 15, "--steps", 10, "--eot-samples", 3, "--eot-accept", 0.7)
print(f"exit code {code}")
print(open(os.path.join(OUT, "grid", "grid.csv")).read())
