"""Acceptance suite: one test per criterion, one PASS/FAIL line each.

Run with `pytest -s tests/test_acceptance.py` to see the per-criterion
lines; the synthetic study (GA vs random, monotonicity) takes a few
minutes single-threaded.
"""

import json
import time
from pathlib import Path

import numpy as np
import pytest

from catoptric.genetic import (
    GaConfig,
    SearchSpace,
    attack,
    decode,
    encode,
    random_genotype,
)
from catoptric.harness import (
    COLOR_LATTICE_27,
    GridSpec,
    LabeledImage,
    REFERENCE_CORPUS_SIZE,
    compute_asr,
    derive_seed,
    generate_dataset,
    random_attack,
    run_grid,
)
from catoptric.imaging import (
    LightColor,
    LightParams,
    Polygon,
    compose_light,
    load_png,
    rasterize_polygon,
)
from catoptric.oracle import (
    OracleProtocolError,
    ScoreValidationError,
    decode_response,
    encode_request,
)
from tests.study import (
    STUDY_ACCEPT_FRACTION,
    STUDY_EOT,
    make_study_dataset,
    make_study_oracle,
)
from tests.test_imaging import brute_force_mask
from tests.test_harness import fake_result

FIXTURES = Path(__file__).parent / "fixtures"


def _report(name, ok, detail=""):
    line = f"[{'PASS' if ok else 'FAIL'}] {name}"
    if detail:
        line += f" -- {detail}"
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def study():
    oracle = make_study_oracle()
    dataset = make_study_dataset(oracle, n=200)
    return oracle, dataset


def test_compositing_identities():
    rng = np.random.default_rng(1001)
    t0 = time.monotonic()
    for _ in range(1000):
        img = rng.random((16, 16, 3)).astype(np.float32)
        k = int(rng.integers(3, 10))
        poly = Polygon(rng.random((k, 2)))
        color = LightColor(*(int(v) for v in rng.integers(0, 256, 3)))
        intensity = float(rng.random())
        mask = rng.random((16, 16)) > 0.4

        identity = compose_light(img, LightParams(poly, color, 0.0), mask)
        assert np.array_equal(identity, img)

        out = compose_light(img, LightParams(poly, color, intensity), mask)
        region = mask & rasterize_polygon(poly, 16, 16)
        assert np.array_equal(out[~region], img[~region])
        assert out.min() >= 0.0 and out.max() <= 1.0
    elapsed = time.monotonic() - t0
    _report("compositing identities (1000 triples, exhaustive 16x16)",
            elapsed < 10.0, f"{elapsed:.2f}s")


def test_rasterizer_matches_brute_force_oracle():
    rng = np.random.default_rng(1002)
    t0 = time.monotonic()
    agree = 0
    total = 0
    for _ in range(100):
        k = int(rng.integers(3, 10))
        poly = Polygon(rng.random((k, 2)))
        got = rasterize_polygon(poly, 64, 64)
        want = brute_force_mask(poly.vertices, 64, 64)
        agree += int(np.array_equal(got, want))
        total += 1
    elapsed = time.monotonic() - t0
    _report("rasterizer vs brute-force even-odd oracle (100 polygons, 64x64)",
            agree == total and elapsed < 10.0,
            f"{agree}/{total} agree, {elapsed:.2f}s")


def test_codec_round_trip():
    rng = np.random.default_rng(1003)
    space = SearchSpace(num_vertices=4)
    coord_max = 2 ** space.coord_bits - 1
    for _ in range(1000):
        verts = rng.integers(0, coord_max + 1, size=(4, 2)) / coord_max
        params = LightParams(Polygon(verts),
                             LightColor(*(int(v) for v in rng.integers(0, 256, 3))),
                             float(rng.choice(space.intensity_levels)))
        back = decode(encode(params, space), space)
        assert np.array_equal(back.polygon.vertices, params.polygon.vertices)
        assert back.color == params.color and back.intensity == params.intensity

    for _ in range(1000):
        g = random_genotype(space, rng)
        assert encode(decode(g, space), space) == g

    bound = 2.0 ** -space.coord_bits
    worst = 0.0
    for _ in range(1000):
        verts = rng.random((4, 2))
        params = LightParams(Polygon(verts), LightColor(0, 0, 0), 0.2)
        back = decode(encode(params, space), space)
        worst = max(worst, float(np.abs(back.polygon.vertices - verts).max()))
    _report("codec round trip + quantization bound",
            worst <= bound, f"worst coord error {worst:.2e} <= {bound:.2e}")


def test_ga_sanity(study):
    oracle, dataset = study
    space = SearchSpace(num_vertices=3)
    ok_monotone = ok_bound = ok_replay = True
    for s in range(50):
        item = dataset[s % len(dataset)]
        ga = GaConfig(population_size=8, max_steps=6, rng_seed=3000 + s,
                      eot_accept_fraction=STUDY_ACCEPT_FRACTION)
        res = attack(item.image, item.label, None, oracle, space, ga, STUDY_EOT)
        hist = res.confidence_history
        ok_monotone &= all(a >= b for a, b in zip(hist, hist[1:]))
        bound = ga.population_size * (ga.max_steps + 1) * (1 + STUDY_EOT.samples)
        ok_bound &= res.queries <= bound
        replay = attack(item.image, item.label, None, oracle, space, ga, STUDY_EOT)
        ok_replay &= (replay.success == res.success
                      and replay.queries == res.queries
                      and replay.confidence_history == res.confidence_history
                      and replay.best_confidence == res.best_confidence)
    _report("GA sanity over 50 seeded runs (monotone, query bound, replay)",
            ok_monotone and ok_bound and ok_replay,
            f"monotone={ok_monotone} bound={ok_bound} replay={ok_replay}")


def test_ga_beats_random(study):
    oracle, dataset = study
    space = SearchSpace(num_vertices=3, fixed_intensity=0.2)
    t0 = time.monotonic()
    ga_asrs, rnd_asrs = [], []
    for s in range(5):
        master = 201 + s
        ga_results, rnd_results = [], []
        for item in dataset:
            seed = derive_seed(master, item.id)
            cfg = GaConfig(population_size=50, max_steps=40,
                           eot_accept_fraction=STUDY_ACCEPT_FRACTION, rng_seed=seed)
            ga_results.append(attack(item.image, item.label, None, oracle, space,
                                     cfg, STUDY_EOT))
            rnd_results.append(random_attack(item.image, item.label, None, oracle,
                                             space, budget=50 * 40,
                                             rng=np.random.default_rng(seed),
                                             eot=STUDY_EOT,
                                             accept_fraction=STUDY_ACCEPT_FRACTION))
        ga_asrs.append(compute_asr(ga_results))
        rnd_asrs.append(compute_asr(rnd_results))
    elapsed = time.monotonic() - t0
    gap_pp = 100.0 * (float(np.mean(ga_asrs)) - float(np.mean(rnd_asrs)))
    _report("GA beats random at equal budget (200 images, Seed=50 x Step=40, 5 seeds)",
            gap_pp >= 5.0 and elapsed < 300.0,
            f"GA {np.mean(ga_asrs):.3f} vs random {np.mean(rnd_asrs):.3f}, "
            f"gap {gap_pp:+.1f}pp, {elapsed:.0f}s")


def test_intensity_and_edge_monotonicity(study):
    oracle, dataset = study
    grid = GridSpec(edge_counts=(3, 6), intensities=(0.2, 0.8),
                    methods=("random", "ga"))
    ga = GaConfig(population_size=50, max_steps=40,
                  eot_accept_fraction=STUDY_ACCEPT_FRACTION, rng_seed=77)
    table = run_grid(dataset, oracle, grid, ga, STUDY_EOT)
    asr = {key: report.asr for key, report in table.items()}

    intensity_ok = all(
        asr[(m, k, 0.8)] >= asr[(m, k, 0.2)]
        for m in ("random", "ga") for k in (3, 6)
    )
    edges_ok = all(
        asr[(m, 6, i)] >= asr[(m, 3, i)] - 0.02
        for m in ("random", "ga") for i in (0.2, 0.8)
    )
    cells = {f"{m[:3]},k{k},I{i}": round(asr[(m, k, i)], 3)
             for (m, k, i) in sorted(asr)}
    _report("intensity and edge-count monotonicity",
            intensity_ok and edges_ok, f"{cells}")


def test_asr_arithmetic():
    results = [fake_result(True)] * 86 + [fake_result(False)] * 17
    asr = compute_asr(results)
    ok = (round(asr, 3) == 0.835
          and compute_asr([fake_result(True)] * 9) == 1.0
          and compute_asr([fake_result(False)] * 9) == 0.0)
    _report("ASR arithmetic incl. 86/103 -> 0.835", ok, f"86/103 = {asr:.6f}")


def test_dataset_generation(tmp_path):
    rng = np.random.default_rng(1008)
    items = [
        LabeledImage(image=rng.random((12, 12, 3)).astype(np.float32), label=0, id="one"),
        LabeledImage(image=rng.random((12, 12, 3)).astype(np.float32), label=1, id="two"),
    ]
    out = tmp_path / "corpus"
    manifest = generate_dataset(items, out, intensity=0.5, rng=np.random.default_rng(9))

    files = sorted(p.relative_to(out).as_posix() for p in out.rglob("*.png"))
    listed = sorted(e["path"] for e in manifest["entries"])
    bijection = manifest["count"] == 54 and len(files) == 54 and listed == files

    confined = True
    sources = {it.id: np.rint(it.image * 255) / 255 for it in items}
    for entry in manifest["entries"]:
        emitted = load_png(out / entry["path"])
        region = rasterize_polygon(np.array(entry["vertices"]), 12, 12)
        confined &= bool(np.array_equal(emitted[~region], sources[entry["id"]][~region]))

    arithmetic = REFERENCE_CORPUS_SIZE == 50_000 * len(COLOR_LATTICE_27) == 1_350_000
    _report("dataset generation (54 files, manifest bijection, confined diffs, 1.35M)",
            bijection and confined and arithmetic,
            f"bijection={bijection} confined={confined} arithmetic={arithmetic}")


def test_protocol_robustness():
    img = np.full((2, 2, 3), 0.5, dtype=np.float32)
    golden_req = (FIXTURES / "golden_request_2x2_gray.json").read_bytes()
    req_ok = encode_request(1, img) == golden_req

    golden_resp = (FIXTURES / "golden_response_2x2_gray.json").read_bytes()
    resp_obj = json.loads(golden_resp)
    pred = decode_response(golden_resp, resp_obj["id"])
    resp_ok = (pred.label == resp_obj["label"]
               and abs(float(pred.scores.sum()) - 1.0) <= 1e-6)

    typed_ok = True
    try:
        decode_response(b"\x00not json", 1)
        typed_ok = False
    except OracleProtocolError:
        pass
    try:
        decode_response(json.dumps({"id": 5, "scores": [1.0], "label": 0}).encode(), 1)
        typed_ok = False
    except OracleProtocolError:
        pass
    try:
        decode_response(json.dumps({"id": 1, "scores": [0.3, 0.2], "label": 0}).encode(), 1)
        typed_ok = False
    except ScoreValidationError:
        pass

    _report("protocol robustness (golden fixtures + typed errors)",
            req_ok and resp_ok and typed_ok,
            f"request={req_ok} response={resp_ok} typed_errors={typed_ok}")
