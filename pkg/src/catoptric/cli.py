"""Command-line driver.

Subcommands wire PNG images, an oracle locator and the search
configuration into the attack engine and harness:

    catoptric attack       single-image attack, writes adversarial PNG + JSON
    catoptric grid         (method x edges x intensity) ASR grid, writes CSV
    catoptric ablate-color per-color ASR at fixed intensity, writes CSV
    catoptric gen-dataset  perturbed corpus: every clean image x color
    catoptric transfer     replay a corpus against other oracles

Oracle locators: builtin:<spec.json> (synthetic centroid model),
exec:<command> (adapter subprocess over stdio JSON lines), or an
http(s)://... URL (adapter serving POST /predict). Exit codes: 0 success,
1 operational error, 2 attack-level failure.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import os
import sys

import numpy as np

from .genetic import GaConfig, PreconditionError, SearchSpace, attack
from .harness import (
    COLOR_LATTICE_27,
    GridSpec,
    LabeledImage,
    color_ablation,
    generate_dataset,
    run_grid,
    transfer_eval,
    write_report_csv,
)
from .imaging import EotConfig, LightColor, compose_light, load_png, save_png
from .oracle import CentroidOracle, HttpOracleClient, OracleError, StdioOracleClient

DEFAULTS = {
    "seed_count": 50,
    "steps": 40,
    "pc": 0.7,
    "pm": 0.1,
    "cull": 0.1,
    "eot_accept": 0.8,
    "eot_samples": 10,
    "eot_brightness": 0.1,
    "eot_offset": 0.02,
    "eot_color_jitter": 0.1,
    "coord_bits": 9,
    "edges": 3,
    "intensity": None,
    "intensity_levels": "0.2,0.4,0.6,0.8",
    "color": None,
    "blend": "alpha",
    "jobs": 1,
    "budget": None,
    "out": "catoptric-out",
    "timeout_ms": None,
}

EXIT_OK = 0
EXIT_OPERATIONAL = 1
EXIT_ATTACK_FAILED = 2


class _Parser(argparse.ArgumentParser):
    """argparse, but usage errors exit 1 (code 2 is an attack failure)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_OPERATIONAL)


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in str(text).split(",") if tok != "")

def _parse_ints(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in str(text).split(",") if tok != "")

def _parse_color(text: str) -> LightColor:
    r, g, b = _parse_ints(text)
    return LightColor(r, g, b)


def build_parser() -> _Parser:
    parser = _Parser(prog="catoptric", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, needs_seed=True):
        p.add_argument("--oracle", help="builtin:<spec.json> | exec:<command> | http(s)://url")
        p.add_argument("--config", help="JSON config file; CLI flags override its values")
        p.add_argument("--seed", type=int, help="run seed" + (" (required)" if needs_seed else ""))
        p.add_argument("--out", help=f"output directory (default {DEFAULTS['out']})")
        p.add_argument("--jobs", type=int, help="worker pool width (default 1)")
        p.add_argument("--timeout-ms", type=int, dest="timeout_ms",
                       help="oracle transport timeout (or env CATOPTRIC_ORACLE_TIMEOUT_MS)")
        p.add_argument("--blend", choices=["alpha", "additive"], help="compositing rule")

    def add_search(p):
        p.add_argument("--edges", type=int, help="polygon vertex count k (3..9)")
        p.add_argument("--intensity", type=float, help="fix the light intensity I")
        p.add_argument("--color", help="fix the light color, e.g. 255,0,255")
        p.add_argument("--coord-bits", type=int, dest="coord_bits")
        p.add_argument("--intensity-levels", dest="intensity_levels",
                       help="comma list of levels for the free-intensity gene")

    def add_ga(p):
        p.add_argument("--seed-count", type=int, dest="seed_count", help="population size")
        p.add_argument("--steps", type=int, help="max generations")
        p.add_argument("--pc", type=float, help="crossover rate")
        p.add_argument("--pm", type=float, help="mutation rate")
        p.add_argument("--cull", type=float, help="fraction culled per generation")
        p.add_argument("--eot-accept", type=float, dest="eot_accept",
                       help="fraction of transformed copies that must stay adversarial")
        p.add_argument("--eot-samples", type=int, dest="eot_samples")
        p.add_argument("--eot-brightness", type=float, dest="eot_brightness")
        p.add_argument("--eot-offset", type=float, dest="eot_offset")
        p.add_argument("--eot-color-jitter", type=float, dest="eot_color_jitter")

    p = sub.add_parser("attack", help="attack a single image")
    p.add_argument("--image", required=True, help="input PNG")
    p.add_argument("--label", required=True, type=int, help="ground-truth class index")
    p.add_argument("--mask", help="optional PNG mask; pixels > 50%% gray are attackable")
    add_common(p); add_search(p); add_ga(p)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("grid", help="ASR over (method x edges x intensity) cells")
    p.add_argument("--dataset", required=True, help="CSV with header id,path,label")
    p.add_argument("--edge-counts", dest="edge_counts", help="comma list, e.g. 3,6")
    p.add_argument("--intensities", help="comma list, e.g. 0.2,0.8")
    p.add_argument("--methods", help="comma subset of random,ga")
    p.add_argument("--budget", type=int, help="per-image query budget (default Seed*Step)")
    add_common(p); add_search(p); add_ga(p)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("ablate-color", help="ASR per fixed color over the 27-color lattice")
    p.add_argument("--dataset", required=True, help="CSV with header id,path,label")
    p.add_argument("--colors", help="semicolon list of r,g,b triples (default 27-lattice)")
    add_common(p); add_search(p); add_ga(p)
    p.set_defaults(func=cmd_ablate_color)

    p = sub.add_parser("gen-dataset", help="write a perturbed corpus (image x color)")
    p.add_argument("--dataset", required=True, help="CSV with header id,path,label")
    p.add_argument("--colors", help="semicolon list of r,g,b triples (default 27-lattice)")
    add_common(p); add_search(p)
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("transfer", help="replay an adversarial corpus against oracles")
    p.add_argument("--corpus", required=True,
                   help="JSON manifest with entries [{path, label}, ...]")
    p.add_argument("--oracles", required=True, action="append",
                   help="oracle locator; repeat for several")
    p.add_argument("--names", help="comma list of report names, aligned with --oracles")
    add_common(p, needs_seed=False)
    p.set_defaults(func=cmd_transfer)

    return parser


def merge_config(args: argparse.Namespace) -> dict:
    """defaults < config file < explicit CLI flags."""
    merged = dict(DEFAULTS)
    config_path = getattr(args, "config", None)
    if config_path:
        with open(config_path, "r", encoding="utf-8") as fh:
            loaded = json.load(fh)
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        merged.update(loaded)
    for key, value in vars(args).items():
        if key in ("func", "command", "config"):
            continue
        if value is not None:
            merged[key] = value
    return merged


def make_oracle(locator: str, timeout_ms=None, stack: contextlib.ExitStack | None = None):
    if not locator:
        raise ValueError("an --oracle locator is required")
    if locator.startswith("builtin:"):
        return CentroidOracle.load(locator[len("builtin:"):])
    if locator.startswith("exec:"):
        client = StdioOracleClient(locator[len("exec:"):], timeout_ms=timeout_ms)
        if stack is not None:
            stack.enter_context(client)
        return client
    if locator.startswith(("http://", "https://")):
        return HttpOracleClient(locator, timeout_ms=timeout_ms)
    raise ValueError(f"unrecognized oracle locator {locator!r}")


def load_dataset(csv_path: str) -> list[LabeledImage]:
    base = os.path.dirname(os.path.abspath(csv_path))
    items = []
    with open(csv_path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"id", "path", "label"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise ValueError(f"dataset CSV must have header id,path,label, got {reader.fieldnames}")
        for row in reader:
            path = row["path"]
            if not os.path.isabs(path):
                path = os.path.join(base, path)
            items.append(LabeledImage(image=load_png(path), label=int(row["label"]), id=row["id"]))
    return items


def _require_seed(cfg: dict):
    if cfg.get("seed") is None:
        raise ValueError("--seed is required for reproducible runs")


def _build_space(cfg: dict, edges=None, fixed_intensity="from-config", fixed_color="from-config"):
    if fixed_intensity == "from-config":
        fixed_intensity = cfg["intensity"]
    if fixed_color == "from-config":
        fixed_color = _parse_color(cfg["color"]) if cfg["color"] else None
    return SearchSpace(
        num_vertices=edges if edges is not None else cfg["edges"],
        coord_bits=cfg["coord_bits"],
        intensity_levels=_parse_floats(cfg["intensity_levels"]),
        fixed_intensity=fixed_intensity,
        fixed_color=fixed_color,
    )


def _build_ga(cfg: dict) -> GaConfig:
    return GaConfig(
        population_size=cfg["seed_count"],
        max_steps=cfg["steps"],
        crossover_rate=cfg["pc"],
        mutation_rate=cfg["pm"],
        cull_fraction=cfg["cull"],
        eot_accept_fraction=cfg["eot_accept"],
        rng_seed=cfg["seed"] if cfg.get("seed") is not None else 0,
    )


def _build_eot(cfg: dict) -> EotConfig:
    return EotConfig(
        brightness_delta_range=cfg["eot_brightness"],
        offset_range=cfg["eot_offset"],
        color_jitter_range=cfg["eot_color_jitter"],
        samples=cfg["eot_samples"],
    )


def _load_mask(path: str | None, shape):
    if path is None:
        return None
    gray = load_png(path).mean(axis=2)
    if gray.shape != shape:
        raise ValueError(f"mask shape {gray.shape} does not match image {shape}")
    return gray > 0.5


def cmd_attack(args) -> int:
    cfg = merge_config(args)
    _require_seed(cfg)
    os.makedirs(cfg["out"], exist_ok=True)
    image = load_png(args.image)
    mask = _load_mask(getattr(args, "mask", None), image.shape[:2])
    with contextlib.ExitStack() as stack:
        oracle = make_oracle(cfg["oracle"], cfg["timeout_ms"], stack)
        result = attack(image, args.label, mask, oracle, _build_space(cfg),
                        _build_ga(cfg), _build_eot(cfg), mode=cfg["blend"])

    adv = compose_light(image, result.best_params, mask, mode=cfg["blend"]) \
        if result.best_params is not None else image.copy()
    save_png(adv, os.path.join(cfg["out"], "adversarial.png"))
    with open(os.path.join(cfg["out"], "theta.json"), "w", encoding="utf-8") as fh:
        json.dump(result.to_json()["best_params"], fh, indent=1)
    with open(os.path.join(cfg["out"], "result.json"), "w", encoding="utf-8") as fh:
        json.dump(result.to_json(), fh, indent=1)

    status = "success" if result.success else "failure"
    print(f"attack {status}: label {args.label} -> {result.adversarial_label}, "
          f"confidence {result.best_confidence:.4f}, {result.queries} queries, "
          f"{result.generations} generations")
    return EXIT_OK if result.success else EXIT_ATTACK_FAILED


def cmd_grid(args) -> int:
    cfg = merge_config(args)
    _require_seed(cfg)
    os.makedirs(cfg["out"], exist_ok=True)
    dataset = load_dataset(args.dataset)
    if not dataset:
        raise ValueError("dataset is empty")
    grid = GridSpec(
        edge_counts=_parse_ints(args.edge_counts) if args.edge_counts else (cfg["edges"],),
        intensities=_parse_floats(args.intensities) if args.intensities else
        ((cfg["intensity"],) if cfg["intensity"] is not None else GridSpec.intensities),
        methods=tuple(args.methods.split(",")) if args.methods else ("random", "ga"),
        query_budget_per_image=cfg["budget"],
    )
    with contextlib.ExitStack() as stack:
        oracle = make_oracle(cfg["oracle"], cfg["timeout_ms"], stack)
        table = run_grid(dataset, oracle, grid, _build_ga(cfg), _build_eot(cfg),
                         coord_bits=cfg["coord_bits"], jobs=cfg["jobs"], mode=cfg["blend"],
                         csv_path=os.path.join(cfg["out"], "grid.csv"),
                         manifest_path=os.path.join(cfg["out"], "manifest.json"))
    done = sum(1 for v in table.values() if v is not None)
    print(f"grid finished: {done}/{len(table)} cells, report at {cfg['out']}/grid.csv")
    return EXIT_OK


def cmd_ablate_color(args) -> int:
    cfg = merge_config(args)
    _require_seed(cfg)
    os.makedirs(cfg["out"], exist_ok=True)
    dataset = load_dataset(args.dataset)
    if not dataset:
        raise ValueError("dataset is empty")
    colors = tuple(_parse_color(tok) for tok in args.colors.split(";")) \
        if args.colors else COLOR_LATTICE_27
    intensity = cfg["intensity"] if cfg["intensity"] is not None else 0.5
    with contextlib.ExitStack() as stack:
        oracle = make_oracle(cfg["oracle"], cfg["timeout_ms"], stack)
        table = color_ablation(dataset, oracle, colors=colors, intensity=intensity,
                               ga=_build_ga(cfg), eot=_build_eot(cfg), edges=cfg["edges"],
                               coord_bits=cfg["coord_bits"], jobs=cfg["jobs"], mode=cfg["blend"],
                               csv_path=os.path.join(cfg["out"], "ablation.csv"),
                               manifest_path=os.path.join(cfg["out"], "manifest.json"))
    done = sum(1 for v in table.values() if v is not None)
    print(f"ablation finished: {done}/{len(table)} colors, report at {cfg['out']}/ablation.csv")
    return EXIT_OK


def cmd_gen_dataset(args) -> int:
    cfg = merge_config(args)
    _require_seed(cfg)
    dataset = load_dataset(args.dataset)
    if not dataset:
        raise ValueError("dataset is empty")
    colors = tuple(_parse_color(tok) for tok in args.colors.split(";")) \
        if args.colors else COLOR_LATTICE_27
    intensity = cfg["intensity"] if cfg["intensity"] is not None else 0.5
    manifest = generate_dataset(dataset, cfg["out"], colors=colors, intensity=intensity,
                                rng=np.random.default_rng(cfg["seed"]), mode=cfg["blend"])
    print(f"wrote {manifest['count']} samples under {cfg['out']}")
    return EXIT_OK


def cmd_transfer(args) -> int:
    cfg = merge_config(args)
    os.makedirs(cfg["out"], exist_ok=True)
    with open(args.corpus, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    entries = manifest["entries"] if isinstance(manifest, dict) else manifest
    base = os.path.dirname(os.path.abspath(args.corpus))
    corpus = []
    for entry in entries:
        path = entry["path"]
        if not os.path.isabs(path):
            path = os.path.join(base, path)
        corpus.append((load_png(path), int(entry["label"])))
    if not corpus:
        raise ValueError("corpus is empty")

    names = args.names.split(",") if args.names else None
    with contextlib.ExitStack() as stack:
        oracles = [make_oracle(loc, cfg["timeout_ms"], stack) for loc in args.oracles]
        table = transfer_eval(corpus, oracles, names=names)

    rows = []
    for name, report in sorted(table.items()):
        if report is None:
            continue
        rows.append({"method": f"transfer[{name}]", "edges": "", "intensity": "", "color": "",
                     "n_images": report.n, "successes": report.successes,
                     "asr": report.asr, "mean_queries": report.mean_queries})
    write_report_csv(rows, os.path.join(cfg["out"], "transfer.csv"))
    for name, report in sorted(table.items()):
        status = f"asr {report.asr:.4f} over {report.n}" if report else "FAILED"
        print(f"{name}: {status}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PreconditionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OPERATIONAL
    except OracleError as exc:
        print(f"oracle error: {exc}", file=sys.stderr)
        return EXIT_OPERATIONAL
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OPERATIONAL


if __name__ == "__main__":
    sys.exit(main())
