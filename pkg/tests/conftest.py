"""Shared test fixtures and record factories."""

import math

import numpy as np
import pytest

from geodispatch.data import Candidate, RoutingRecord
from geodispatch.geo import EARTH_RADIUS_KM, GeoCoordinate

# Kilometers per degree of arc along a meridian; meridian offsets realize a
# requested distance exactly under the haversine (up to float rounding).
KM_PER_DEG = math.pi * EARTH_RADIUS_KM / 180.0


def record_with_errors(rec_id, gt, d_ret, d_gen, embedding=None, candidates=()):
    """A record whose realized prediction errors equal d_ret/d_gen km.

    Predictions sit on the ground truth's meridian: retrieval to the north,
    generation to the south. Caller keeps gt.lat +- offset inside [-90, 90].
    """
    pred_ret = GeoCoordinate(gt.lat + d_ret / KM_PER_DEG, gt.lon)
    pred_gen = GeoCoordinate(gt.lat - d_gen / KM_PER_DEG, gt.lon)
    return RoutingRecord(
        id=rec_id,
        pred_retrieval=pred_ret,
        pred_generation=pred_gen,
        ground_truth=gt,
        candidates=tuple(candidates),
        embedding=None if embedding is None else tuple(float(v) for v in embedding),
    )


def near_tie_dataset(n, seed, dim=4, tie_frac=0.3, noise=0.8):
    """Planted-signal records where tie_frac of instances are near-ties.

    Near-ties keep |log error ratio| < 0.2 with hard labels that are a fair
    coin, while their embeddings still carry a confident (useless) sign;
    the clean majority keeps the ratio >= e^0.25 so the near-tie fraction
    is exact by construction.
    """
    rng = np.random.default_rng(seed)
    recs = []
    n_tie = int(tie_frac * n)
    for i in range(n):
        gt = GeoCoordinate(rng.uniform(-30, 30), rng.uniform(-150, 150))
        emb = rng.standard_normal(dim)
        if i < n_tie:
            base = min(60.0 * math.exp(0.5 * rng.standard_normal()), 2000.0)
            u = rng.uniform(-0.19, 0.19)
            d_ret = base * math.exp(u / 2.0)
            d_gen = base * math.exp(-u / 2.0)
            emb[0] = rng.choice([-1.0, 1.0]) + noise * rng.standard_normal()
        else:
            z = rng.choice([-1.0, 1.0])
            lo = min(20.0 * math.exp(rng.standard_normal()), 3000.0)
            hi = min(200.0 * math.exp(rng.standard_normal()), 5000.0)
            lo, hi = min(lo, hi), max(lo, hi)
            hi = max(hi, lo * math.exp(0.25))
            d_gen, d_ret = (lo, hi) if z > 0 else (hi, lo)
            emb[0] = z + noise * rng.standard_normal()
        recs.append(record_with_errors(f"tie-{seed}-{i:05d}", gt, d_ret, d_gen, emb))
    order = rng.permutation(n)
    return [recs[j] for j in order]


@pytest.fixture
def simple_record():
    gt = GeoCoordinate(10.0, 20.0)
    return record_with_errors(
        "rec-1", gt, 50.0, 5.0,
        embedding=(0.5, -1.0, 2.0),
        candidates=(
            Candidate(GeoCoordinate(10.0 + 50.0 / KM_PER_DEG, 20.0), 0.9),
            Candidate(GeoCoordinate(10.2, 20.1), 0.5),
            Candidate(GeoCoordinate(9.9, 19.8), 0.3),
        ),
    )
