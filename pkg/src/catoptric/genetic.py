"""Genetic search for adversarial light parameters.

Candidates are bit-string genotypes over a quantized parameter grid:
polygon vertex coordinates (coord_bits levels per axis), 8-bit color
channels and an indexed intensity level. Fitness is the oracle's
ground-truth-class confidence on the composed image; lower is more
adversarial. Selection culls the least adversarial tenth and refills with
fresh random genotypes, crossover swaps bit suffixes pairwise, mutation
resets whole genes. A candidate that flips the predicted label terminates
the search only after surviving the transformation-robustness filter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .imaging import (
    EotConfig,
    LightColor,
    LightParams,
    Polygon,
    _blend_region,
    _rasterize_vertices,
    apply_eot,
    full_mask,
    validate_image,
)
from .oracle import ClassifierOracle, OracleError


class PreconditionError(ValueError):
    """The oracle does not classify the clean image as the given label."""


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class SearchSpace:
    """Quantization grid and gene layout for the attack's search space.

    A fixed parameter (color, intensity or polygon) contributes no genes;
    the free space cardinality is the product of the free genes' level
    counts. Intensity levels must number a power of two so every bit
    pattern is a canonical encoding.
    """

    num_vertices: int = 3
    coord_bits: int = 9
    color_bits: int = 8
    intensity_levels: tuple[float, ...] = (0.2, 0.4, 0.6, 0.8)
    fixed_color: LightColor | None = None
    fixed_intensity: float | None = None
    fixed_polygon: Polygon | None = None

    def __post_init__(self):
        if not (3 <= self.num_vertices <= 9):
            raise ValueError(f"num_vertices must be in [3, 9], got {self.num_vertices}")
        if not (1 <= self.coord_bits <= 16):
            raise ValueError(f"coord_bits must be in [1, 16], got {self.coord_bits}")
        if not (1 <= self.color_bits <= 8):
            raise ValueError(f"color_bits must be in [1, 8], got {self.color_bits}")
        levels = tuple(float(v) for v in self.intensity_levels)
        if self.fixed_intensity is None:
            if not levels or not _is_power_of_two(len(levels)):
                raise ValueError("intensity_levels length must be a power of two")
            if any(not (0.0 <= v <= 1.0) for v in levels):
                raise ValueError("intensity levels must lie in [0, 1]")
            if any(b <= a for a, b in zip(levels, levels[1:])):
                raise ValueError("intensity levels must be strictly increasing")
        if self.fixed_intensity is not None and not (0.0 <= self.fixed_intensity <= 1.0):
            raise ValueError("fixed_intensity must lie in [0, 1]")
        if self.fixed_polygon is not None and self.fixed_polygon.num_vertices != self.num_vertices:
            raise ValueError("fixed_polygon vertex count must equal num_vertices")
        object.__setattr__(self, "intensity_levels", levels)

    @property
    def gene_layout(self) -> tuple[tuple[str, int, int], ...]:
        """Genes as (name, bit offset, bit width), in packing order."""
        genes = []
        offset = 0
        if self.fixed_polygon is None:
            for j in range(self.num_vertices):
                for axis in ("m", "n"):
                    genes.append((f"{axis}{j}", offset, self.coord_bits))
                    offset += self.coord_bits
        if self.fixed_color is None:
            for ch in ("r", "g", "b"):
                genes.append((ch, offset, self.color_bits))
                offset += self.color_bits
        if self.fixed_intensity is None:
            bits = int(math.log2(len(self.intensity_levels)))
            if bits > 0:
                genes.append(("intensity", offset, bits))
                offset += bits
        return tuple(genes)

    @property
    def genome_length(self) -> int:
        return sum(width for _, _, width in self.gene_layout)

    def cardinality(self) -> int:
        """Number of distinct candidates in the free search space."""
        n = 1
        for _, _, width in self.gene_layout:
            n *= 2 ** width
        return n


@dataclass(eq=False)
class Genotype:
    """Fixed-width bit vector over the search space's gene layout."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8)
        if bits.ndim != 1:
            raise ValueError(f"bits must be a 1-D vector, got shape {bits.shape}")
        if bits.size and bits.max() > 1:
            raise ValueError("bits must contain only 0/1 values")
        self.bits = bits

    def __eq__(self, other):
        return isinstance(other, Genotype) and np.array_equal(self.bits, other.bits)

    def copy(self) -> "Genotype":
        return Genotype(self.bits.copy())


def _int_to_bits(value: int, width: int) -> np.ndarray:
    return np.array([(value >> (width - 1 - i)) & 1 for i in range(width)], dtype=np.uint8)


def _bits_to_int(bits: np.ndarray) -> int:
    out = 0
    for b in bits:
        out = (out << 1) | int(b)
    return out


def _space_tables(space: SearchSpace) -> dict:
    """Per-space decode tables (bit-weight vectors), cached on the instance."""
    tables = space.__dict__.get("_tables")
    if tables is None:
        tables = {}
        offset = 0
        if space.fixed_polygon is None:
            cb = space.coord_bits
            tables["coord_n"] = 2 * space.num_vertices
            tables["coord_bits"] = cb
            tables["coord_pows"] = 1 << np.arange(cb - 1, -1, -1, dtype=np.int64)
            tables["coord_max"] = 2 ** cb - 1
            offset += tables["coord_n"] * cb
        else:
            tables["coord_n"] = 0
        tables["color_offset"] = offset
        if space.fixed_color is None:
            bb = space.color_bits
            tables["color_bits"] = bb
            tables["color_pows"] = 1 << np.arange(bb - 1, -1, -1, dtype=np.int64)
            tables["color_max"] = 2 ** bb - 1
            offset += 3 * bb
        else:
            tables["color_bits"] = 0
        tables["intensity_offset"] = offset
        if space.fixed_intensity is None and len(space.intensity_levels) > 1:
            ib = int(math.log2(len(space.intensity_levels)))
            tables["intensity_bits"] = ib
            tables["intensity_pows"] = 1 << np.arange(ib - 1, -1, -1, dtype=np.int64)
        else:
            tables["intensity_bits"] = 0
        tables["levels"] = np.asarray(space.intensity_levels, dtype=np.float64)
        object.__setattr__(space, "_tables", tables)
    return tables


def _decode_values(genotype: Genotype, space: SearchSpace):
    """Vectorized gene unpacking: (vertices, color channels, intensity)."""
    if genotype.bits.size != space.genome_length:
        raise ValueError(
            f"genotype length {genotype.bits.size} does not match genome length {space.genome_length}"
        )
    bits = genotype.bits
    t = _space_tables(space)

    if t["coord_n"]:
        levels = bits[: t["coord_n"] * t["coord_bits"]].reshape(t["coord_n"], t["coord_bits"]) @ t["coord_pows"]
        verts = (levels / t["coord_max"]).reshape(-1, 2)
    else:
        verts = space.fixed_polygon.vertices

    if t["color_bits"]:
        off = t["color_offset"]
        raw = bits[off: off + 3 * t["color_bits"]].reshape(3, t["color_bits"]) @ t["color_pows"]
        if t["color_bits"] == 8:
            channels = raw
        else:
            channels = np.rint(raw * 255 / t["color_max"]).astype(np.int64)
    else:
        channels = np.array(space.fixed_color.as_tuple(), dtype=np.int64)

    if t["intensity_bits"]:
        off = t["intensity_offset"]
        idx = int(bits[off: off + t["intensity_bits"]] @ t["intensity_pows"])
        intensity = float(t["levels"][idx])
    elif space.fixed_intensity is not None:
        intensity = float(space.fixed_intensity)
    else:
        intensity = float(space.intensity_levels[0])

    return verts, channels, intensity


def _decode_unit(genotype: Genotype, space: SearchSpace):
    """Decode straight to compositing inputs (unit color, no containers)."""
    verts, channels, intensity = _decode_values(genotype, space)
    color_unit = channels.astype(np.float32) / np.float32(255.0)
    return verts, color_unit, intensity


def random_genotype(space: SearchSpace, rng: np.random.Generator) -> Genotype:
    """Uniform random genotype (uniform over the whole grid)."""
    return Genotype(rng.integers(0, 2, size=space.genome_length, dtype=np.uint8))


def encode(params: LightParams, space: SearchSpace) -> Genotype:
    """Quantize free parameters onto the grid and pack them into bits."""
    bits = np.zeros(space.genome_length, dtype=np.uint8)
    coord_max = 2 ** space.coord_bits - 1
    color_max = 2 ** space.color_bits - 1
    for name, offset, width in space.gene_layout:
        if name == "intensity":
            dist = [abs(params.intensity - lvl) for lvl in space.intensity_levels]
            value = int(np.argmin(dist))
        elif name in ("r", "g", "b"):
            value = int(round(getattr(params.color, name) * color_max / 255))
        else:
            axis, j = name[0], int(name[1:])
            coord = params.polygon.vertices[j, 0 if axis == "m" else 1]
            value = int(round(coord * coord_max))
        bits[offset:offset + width] = _int_to_bits(value, width)
    return Genotype(bits)


def decode(genotype: Genotype, space: SearchSpace) -> LightParams:
    """Unpack a genotype into light parameters, injecting fixed ones."""
    verts, channels, intensity = _decode_values(genotype, space)
    if space.fixed_color is not None:
        color = space.fixed_color
    else:
        color = LightColor(int(channels[0]), int(channels[1]), int(channels[2]))
    polygon = space.fixed_polygon if space.fixed_polygon is not None else Polygon(verts)
    return LightParams(polygon=polygon, color=color, intensity=intensity)


@dataclass(frozen=True)
class GaConfig:
    """Genetic search hyperparameters."""

    population_size: int = 50
    max_steps: int = 40
    crossover_rate: float = 0.7
    mutation_rate: float = 0.1
    cull_fraction: float = 0.1
    eot_accept_fraction: float = 0.8
    rng_seed: int = 0

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        for name in ("crossover_rate", "mutation_rate", "cull_fraction", "eot_accept_fraction"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


@dataclass
class AttackResult:
    """Outcome of one attack run, with full query accounting."""

    success: bool
    best_params: LightParams | None
    best_confidence: float
    adversarial_label: int | None
    queries: int
    generations: int
    perturbation_l2: float = 0.0
    perturbation_linf: float = 0.0
    confidence_history: list[float] = field(default_factory=list)

    def to_json(self) -> dict:
        theta = None
        if self.best_params is not None:
            theta = {
                "vertices": self.best_params.polygon.vertices.tolist(),
                "color": list(self.best_params.color.as_tuple()),
                "intensity": self.best_params.intensity,
            }
        return {
            "success": self.success,
            "best_params": theta,
            "best_confidence": self.best_confidence,
            "adversarial_label": self.adversarial_label,
            "queries": self.queries,
            "generations": self.generations,
            "perturbation_l2": self.perturbation_l2,
            "perturbation_linf": self.perturbation_linf,
            "confidence_history": self.confidence_history,
        }


def _compose(image: np.ndarray, params: LightParams, mask: np.ndarray, mode: str) -> np.ndarray:
    # attack-loop fast path: image and mask were validated once up front
    region = mask & _rasterize_vertices(params.polygon.vertices, image.shape[1], image.shape[0])
    return _blend_region(image, region, params.color.as_unit(), params.intensity, mode)


def _compose_raw(image, verts, color_unit, intensity, mask, mode) -> np.ndarray:
    region = mask & _rasterize_vertices(verts, image.shape[1], image.shape[0])
    return _blend_region(image, region, color_unit, intensity, mode)


def evaluate_population(population, image, mask, label, oracle: ClassifierOracle,
                        space: SearchSpace, mode: str = "alpha"):
    """Query the oracle once per genotype.

    Returns one (ground-truth confidence, predicted label) pair per
    individual, in population order.
    """
    if not population:
        raise ValueError("population must be non-empty")
    img = validate_image(image)
    h, w = img.shape[:2]
    if mask is None:
        mask = full_mask(w, h)
    results = []
    for idx, genotype in enumerate(population):
        verts, color_unit, intensity = _decode_unit(genotype, space)
        adv = _compose_raw(img, verts, color_unit, intensity, mask, mode)
        try:
            pred = oracle.predict(adv)
        except OracleError as exc:
            # preserve the partial accounting: attempts made in this call
            exc.queries_spent = getattr(exc, "queries_spent", 0) + idx + 1
            raise
        results.append((float(pred.scores[label]), pred.label))
    return results


def select(population, fitnesses, config: GaConfig, rng: np.random.Generator,
           space: SearchSpace):
    """Cull the least adversarial individuals, refill with random ones.

    The ceil(cull_fraction * N) individuals with the highest ground-truth
    confidence are replaced (ties broken toward the lower index);
    survivors pass through unchanged.
    """
    n = len(population)
    n_replace = math.ceil(config.cull_fraction * n)
    order = sorted(range(n), key=lambda i: (-fitnesses[i], i))
    doomed = set(order[:n_replace])
    return [random_genotype(space, rng) if i in doomed else population[i] for i in range(n)]


def crossover(population, pc: float, rng: np.random.Generator):
    """Pairwise single-point crossover on the concatenated bit string.

    The population is shuffled into pairs; each pair exchanges bit
    suffixes at a uniform random cut with probability pc. Individuals keep
    their slots, so fitness bookkeeping stays aligned.
    """
    out = [g.copy() for g in population]
    n = len(out)
    if n < 2:
        return out
    genome_length = out[0].bits.size
    perm = rng.permutation(n)
    for t in range(0, n - 1, 2):
        i, j = int(perm[t]), int(perm[t + 1])
        if rng.random() < pc and genome_length >= 2:
            cut = int(rng.integers(1, genome_length))
            tail_i = out[i].bits[cut:].copy()
            out[i].bits[cut:] = out[j].bits[cut:]
            out[j].bits[cut:] = tail_i
    return out


def mutate(population, pm: float, rng: np.random.Generator, space: SearchSpace):
    """Per-gene random reset: each gene independently redrawn with prob pm."""
    out = [g.copy() for g in population]
    layout = space.gene_layout
    for g in out:
        for _, offset, width in layout:
            if rng.random() < pm:
                value = int(rng.integers(0, 2 ** width))
                g.bits[offset:offset + width] = _int_to_bits(value, width)
    return out


def _eot_accepted(image, params, mask, label, oracle, eot: EotConfig,
                  accept_fraction: float, rng, mode: str):
    """Robustness filter: candidate must stay misclassified on enough
    transformed copies. Returns (accepted, queries_spent)."""
    hits = 0
    for t in range(eot.samples):
        transformed = apply_eot(image, params, mask, eot, rng, mode=mode)
        try:
            pred = oracle.predict(transformed)
        except OracleError as exc:
            exc.queries_spent = getattr(exc, "queries_spent", 0) + t + 1
            raise
        if pred.label != label:
            hits += 1
    return hits >= accept_fraction * eot.samples, eot.samples


def attack(image, label: int, mask, oracle: ClassifierOracle, space: SearchSpace,
           ga: GaConfig, eot: EotConfig, mode: str = "alpha") -> AttackResult:
    """Search for light parameters that flip the oracle's prediction.

    Runs generations of evaluate / robustness-check / select / crossover /
    mutate until a candidate both flips the label and survives the
    transformation filter, or max_steps generations exhaust. Deterministic
    given ga.rng_seed and a deterministic oracle.
    """
    img = validate_image(image)
    h, w = img.shape[:2]
    if mask is None:
        mask = full_mask(w, h)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (h, w):
        raise ValueError(f"mask shape {mask.shape} does not match image {(h, w)}")

    rng = np.random.default_rng(ga.rng_seed)
    queries = 0

    try:
        queries += 1
        clean = oracle.predict(img)
        if clean.label != label:
            raise PreconditionError(
                f"oracle labels the clean image {clean.label}, not the given label {label}"
            )

        population = [random_genotype(space, rng) for _ in range(ga.population_size)]
        best_conf = float("inf")
        best_genotype = None
        history: list[float] = []
        success = False
        winner_params = None
        winner_conf = None
        winner_label = None
        generations = 0

        for _ in range(ga.max_steps):
            evals = evaluate_population(population, img, mask, label, oracle, space, mode)
            queries += len(population)
            generations += 1

            for i, (conf, _) in enumerate(evals):
                if conf < best_conf:
                    best_conf = conf
                    best_genotype = population[i].copy()
            history.append(best_conf)

            flipped = sorted(
                (i for i, (_, pred) in enumerate(evals) if pred != label),
                key=lambda i: (evals[i][0], i),
            )
            for i in flipped:
                params_i = decode(population[i], space)
                accepted, spent = _eot_accepted(
                    img, params_i, mask, label, oracle, eot, ga.eot_accept_fraction, rng, mode
                )
                queries += spent
                if accepted:
                    success = True
                    winner_params = params_i
                    winner_conf = evals[i][0]
                    winner_label = evals[i][1]
                    break
            if success:
                break

            fitnesses = [conf for conf, _ in evals]
            population = select(population, fitnesses, ga, rng, space)
            population = crossover(population, ga.crossover_rate, rng)
            population = mutate(population, ga.mutation_rate, rng, space)
    except OracleError as exc:
        exc.queries_spent = queries + getattr(exc, "queries_spent", 0)
        raise

    if success:
        best_params = winner_params
        best_confidence = float(winner_conf)
        adversarial_label = int(winner_label)
    else:
        best_params = decode(best_genotype, space) if best_genotype is not None else None
        best_confidence = float(best_conf)
        adversarial_label = None

    l2 = linf = 0.0
    if best_params is not None:
        adv = _compose(img, best_params, mask, mode)
        diff = adv.astype(np.float64) - img.astype(np.float64)
        l2 = float(np.linalg.norm(diff.ravel()))
        linf = float(np.abs(diff).max())

    return AttackResult(
        success=success,
        best_params=best_params,
        best_confidence=best_confidence,
        adversarial_label=adversarial_label,
        queries=queries,
        generations=generations,
        perturbation_l2=l2,
        perturbation_linf=linf,
        confidence_history=history,
    )
