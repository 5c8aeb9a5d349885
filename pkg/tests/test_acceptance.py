"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines as they complete.
"""

import json
import math
import time
from decimal import Decimal, getcontext

import mpmath
import numpy as np
import pytest

from geodispatch.cli import main as cli_main
from geodispatch.data import (
    RoutingRecord,
    SynthConfig,
    build_targets,
    synthesize,
    with_targets,
)
from geodispatch.evaluation import (
    Policy,
    evaluate,
    split_indices,
    train_and_evaluate,
)
from geodispatch.geo import (
    DEFAULT_THRESHOLDS_KM,
    EARTH_RADIUS_KM,
    GeoCoordinate,
    geodesic_distance,
)
from geodispatch.model import EmbeddingEncoder, ParadigmChoice, RouterModel, decide
from geodispatch.objective import grad_wrt_params, loss_from_labels
from geodispatch.train import TrainConfig

from conftest import KM_PER_DEG, near_tie_dataset, record_with_errors

getcontext().prec = 60
mpmath.mp.dps = 40


def report(number, message):
    print(f"PASS criterion {number}: {message}")


def record_for_distances(d_ret, d_gen):
    """Meridian offsets north from near the pole realize any distance pair
    up to 2e4 km on valid latitudes."""
    gt = GeoCoordinate(-89.95, 0.0)
    return RoutingRecord(
        id="acc",
        pred_retrieval=GeoCoordinate(gt.lat + d_ret / KM_PER_DEG, gt.lon),
        pred_generation=GeoCoordinate(gt.lat + d_gen / KM_PER_DEG, gt.lon),
        ground_truth=gt)


def test_criterion_1_label_math_matches_arbitrary_precision():
    start = time.monotonic()
    rng = np.random.default_rng(101)
    for _ in range(1000):
        d_ret, d_gen = np.exp(rng.uniform(np.log(1e-3), np.log(2e4), 2))
        t = build_targets(record_for_distances(float(d_ret), float(d_gen)),
                          epsilon=1e-6, alpha=1.6)
        dr = Decimal(t.d_retrieval) + Decimal(1e-6)
        dg = Decimal(t.d_generation) + Decimal(1e-6)
        want_delta = dr.ln() - dg.ln()
        want_p = Decimal(1) / (Decimal(1) + (-(Decimal(1.6) * want_delta)).exp())
        # relative on p; relative with a 1e-12 absolute floor on delta, which
        # can legitimately sit near zero
        assert abs(t.delta - float(want_delta)) <= \
            max(1e-10 * abs(float(want_delta)), 1e-12)
        assert abs(t.soft_label - float(want_p)) <= 1e-10 * float(want_p)
    tie = build_targets(record_for_distances(123.0, 123.0))
    assert tie.soft_label == 0.5 and tie.delta == 0.0
    elapsed = time.monotonic() - start
    assert elapsed < 5.0
    report(1, f"1000 label pairs match the arbitrary-precision oracle "
              f"(rel < 1e-10), tie gives p = 0.5 exactly ({elapsed:.2f}s)")


def fd_param_grads(model, U, q, h=1e-6):
    grads = []
    for arr in model.param_arrays():
        g = np.zeros_like(arr)
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            up = loss_from_labels(model.forward(U), q)
            flat[j] = orig - h
            down = loss_from_labels(model.forward(U), q)
            flat[j] = orig
            gflat[j] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def test_criterion_2_gradients_match_finite_differences():
    start = time.monotonic()
    rng = np.random.default_rng(102)
    worst = 0.0
    for case in range(100):
        m = int(rng.integers(1, 9))
        n = int(rng.integers(1, 17))
        enc = EmbeddingEncoder(m)
        if case % 2 == 0:
            model = RouterModel.linear(enc)
            model.params[:] = rng.normal(0, 1, m)
        else:
            model = RouterModel.mlp(enc, hidden=int(rng.integers(1, 5)),
                                    seed=int(rng.integers(0, 10_000)))
        U = rng.normal(0, 1, (n, m))
        q = rng.uniform(0, 1, n)
        for a, f in zip(grad_wrt_params(U, q, model), fd_param_grads(model, U, q)):
            err = np.abs(a - f) / np.maximum(1e-4, np.maximum(np.abs(a), np.abs(f)))
            worst = max(worst, float(np.max(err)))
    assert worst < 1e-5
    elapsed = time.monotonic() - start
    assert elapsed < 30.0
    report(2, f"100 linear/MLP configs match central differences "
              f"(worst element err {worst:.2e}, {elapsed:.2f}s)")


def mp_haversine(a, b):
    lat1, lon1 = mpmath.radians(a.lat), mpmath.radians(a.lon)
    lat2, lon2 = mpmath.radians(b.lat), mpmath.radians(b.lon)
    h = mpmath.sin((lat2 - lat1) / 2) ** 2 \
        + mpmath.cos(lat1) * mpmath.cos(lat2) * mpmath.sin((lon2 - lon1) / 2) ** 2
    return float(2 * mpmath.mpf(EARTH_RADIUS_KM) * mpmath.asin(mpmath.sqrt(h)))


def test_criterion_3_geodesic_closed_forms_and_oracle():
    origin = GeoCoordinate(0, 0)
    assert geodesic_distance(origin, GeoCoordinate(0, 0)) == 0.0
    assert abs(geodesic_distance(origin, GeoCoordinate(0, 90)) - 10007.5434) < 1e-3
    assert abs(geodesic_distance(origin, GeoCoordinate(0, 180)) - 20015.0868) < 1e-3
    rng = np.random.default_rng(103)
    for _ in range(1000):
        a = GeoCoordinate(rng.uniform(-90, 90), rng.uniform(-180, 180))
        b = GeoCoordinate(rng.uniform(-90, 90), rng.uniform(-180, 180))
        got = geodesic_distance(a, b)
        want = mp_haversine(a, b)
        assert abs(got - want) <= 1e-9 * want
    report(3, "closed forms within 1e-3 km; 1000 random pairs within 1e-9 "
              "relative of the high-precision oracle")


def test_criterion_4_oracle_dominance_and_complementarity():
    records = synthesize(SynthConfig(n=10_000, seed=104))
    model = RouterModel.linear(EmbeddingEncoder(8))
    model.params[0] = 1.0
    rep = evaluate(records, [Policy("pure_retrieval"), Policy("pure_generation"),
                             Policy("router", model), Policy("oracle")])
    oracle = rep.policy_result("oracle")
    for p in rep.policies:
        assert all(o >= g for o, g in zip(oracle.geo_accuracy, p.geo_accuracy))
    ret = rep.policy_result("pure_retrieval")
    gen = rep.policy_result("pure_generation")
    assert all(n > 0 for n in rep.disagreement_sizes)
    for r_acc, g_acc in zip(ret.routing_accuracy, gen.routing_accuracy):
        assert abs(r_acc + g_acc - 100.0) <= 1e-9
    report(4, "10000 records: oracle dominates every policy at every "
              "threshold; pure-policy routing accuracies sum to 100")


def test_criterion_5_planted_signal_recovery():
    start = time.monotonic()
    records = synthesize(SynthConfig(n=10_000, seed=7, dim=8, signal_strength=0.9))
    row, _ = train_and_evaluate(records, 1.6, TrainConfig(seed=7),
                                RouterModel.linear(EmbeddingEncoder(8)),
                                epsilon=1e-6, split_fraction=0.8)
    router = row.report.policy_result("router")
    oracle = row.report.policy_result("oracle")
    pures = [row.report.policy_result("pure_retrieval"),
             row.report.policy_result("pure_generation")]
    assert router.routing_average >= 85.0
    assert all(router.geo_average > p.geo_average for p in pures)
    assert oracle.geo_average - router.geo_average < 3.0
    elapsed = time.monotonic() - start
    assert elapsed < 120.0
    report(5, f"held-out routing accuracy {router.routing_average:.2f}% >= 85; "
              f"routed mean {router.geo_average:.2f} beats pures "
              f"({pures[0].geo_average:.2f}/{pures[1].geo_average:.2f}) and sits "
              f"{oracle.geo_average - router.geo_average:.2f} pts from oracle "
              f"({elapsed:.1f}s)")


def test_criterion_6_soft_labels_never_lose_on_near_ties():
    start = time.monotonic()
    diffs = []
    for seed in range(5):
        records = near_tie_dataset(5000, seed)
        targets = with_targets(records)
        ties = sum(1 for t in targets if abs(t.delta) < 0.2)
        assert ties == 1500  # 30% by construction
        cfg = TrainConfig(seed=seed, learning_rate=1e-3, epochs=10)
        enc = EmbeddingEncoder(4)
        soft, _ = train_and_evaluate(records, 1.6, cfg, RouterModel.linear(enc))
        hard, _ = train_and_evaluate(records, 1.6, cfg, RouterModel.linear(enc),
                                     hard_label_mode=True)
        s = soft.report.policy_result("router").geo_average
        h = hard.report.policy_result("router").geo_average
        diffs.append(s - h)
        assert s >= h - 0.2
    elapsed = time.monotonic() - start
    assert elapsed < 600.0
    report(6, "soft-label training never trails hard labels by more than 0.2 "
              f"pts over 5 seeds (diffs {['%+.2f' % d for d in diffs]}, {elapsed:.1f}s)")


def test_criterion_7_extreme_alpha_collapses_to_hard_labels():
    records = synthesize(SynthConfig(n=6000, seed=11, dim=8, signal_strength=1.0))
    train_idx, _ = split_indices(len(records), 0.8, 11)
    train_records = [records[i] for i in train_idx]
    for t in with_targets(train_records, 1e-6, 100.0):
        if abs(t.delta) >= 0.1:
            assert abs(t.soft_label - (1.0 if t.delta > 0 else 0.0)) < 1e-3
    cfg = TrainConfig(seed=11)
    enc = EmbeddingEncoder(8)
    soft_row, _ = train_and_evaluate(records, 100.0, cfg, RouterModel.linear(enc))
    hard_row, _ = train_and_evaluate(records, 100.0, cfg, RouterModel.linear(enc),
                                     hard_label_mode=True)
    s = soft_row.report.policy_result("router").geo_average
    h = hard_row.report.policy_result("router").geo_average
    assert abs(s - h) <= 0.5
    report(7, f"alpha=100 soft labels are within 1e-3 of the indicator for "
              f"|delta| >= 0.1, and alpha=100 vs hard-label accuracy differ by "
              f"{abs(s - h):.3f} pts")


def test_criterion_8_pipeline_is_byte_deterministic(tmp_path, capsys):
    outputs = []
    for name in ("one", "two"):
        d = tmp_path / name
        d.mkdir()
        steps = [
            ["synth", "--out", str(d / "s.jsonl"), "--n", "300", "--seed", "17"],
            ["build", "--in", str(d / "s.jsonl"), "--out", str(d / "d.jsonl")],
            ["train", "--data", str(d / "d.jsonl"), "--out", str(d / "m.json"),
             "--seed", "17"],
            ["route", "--data", str(d / "d.jsonl"), "--model", str(d / "m.json"),
             "--out", str(d / "r.jsonl")],
            ["eval", "--data", str(d / "d.jsonl"), "--model", str(d / "m.json"),
             "--format", "json", "--out", str(d / "e.json"), "--seed", "17"],
        ]
        for step in steps:
            assert cli_main(step) == 0
        outputs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
    capsys.readouterr()
    assert outputs[0] == outputs[1]
    report(8, "synth->build->train->route->eval run twice produced "
              "byte-identical outputs for all five files")


def test_criterion_9_case_study_decisions():
    assert decide(3.39) is ParadigmChoice.GENERATION
    assert decide(-3.96) is ParadigmChoice.RETRIEVAL
    report(9, "score +3.39 routes to generation, -3.96 to retrieval")
