"""Routing records: schema, supervision targets, synthesis, and JSONL files.

A record is one query's full context: ground truth, the retrieval and
generation predictions, the retrieved candidate list, and an optional
precomputed embedding standing in for the query image. Supervision is
derived from the two prediction errors: their log-ratio, a sigmoid soft
label, and the binary winner.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

import numpy as np

from .errors import DataError, ValidationError
from .geo import GeoCoordinate, geodesic_distance

SCHEMA = "routing-records/v1"

# Candidates emitted per synthetic record (top-1 mirror plus scatter).
SYNTH_CANDIDATES = 5

# Log-space spread of the synthetic error draws.
SYNTH_LOG_SIGMA = 1.0


@dataclass(frozen=True)
class Candidate:
    """One retrieved database entry: its coordinate plus an optional score."""

    coordinate: GeoCoordinate
    similarity: float | None = None

    def __post_init__(self):
        if self.similarity is not None:
            s = float(self.similarity)
            if not math.isfinite(s):
                raise ValidationError(f"similarity must be finite, got {self.similarity!r}")
            object.__setattr__(self, "similarity", s)


@dataclass(frozen=True)
class RoutingRecord:
    """One query's context; immutable once constructed.

    `candidates[0]` is the retrieval top-1 whenever the record came out of
    `build_dataset`. `extra` carries unknown JSONL fields through a
    read/write round trip untouched.
    """

    id: str
    pred_retrieval: GeoCoordinate
    pred_generation: GeoCoordinate
    ground_truth: GeoCoordinate | None = None
    candidates: tuple = ()
    embedding: tuple | None = None
    extra: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise ValidationError(f"id must be a non-empty string, got {self.id!r}")
        object.__setattr__(self, "candidates", tuple(self.candidates))
        if self.embedding is not None:
            emb = tuple(float(v) for v in self.embedding)
            if not emb or not all(math.isfinite(v) for v in emb):
                raise ValidationError(f"embedding of record {self.id!r} must be non-empty and finite")
            object.__setattr__(self, "embedding", emb)
        object.__setattr__(self, "extra", dict(self.extra))


@dataclass(frozen=True)
class PreferenceTarget:
    """Per-record supervision: both errors, their log-ratio, and the labels.

    hard_label is 1 iff the generation error is strictly smaller; ties give
    0 (retrieval preferred) with a neutral 0.5 soft label. soft_label lives
    in [0, 1]: mathematically the sigmoid never reaches the endpoints, but
    in double precision it rounds to them for log-ratios beyond ~37/alpha.
    """

    d_retrieval: float
    d_generation: float
    delta: float
    soft_label: float
    hard_label: int

    def __post_init__(self):
        if not math.isfinite(self.delta):
            raise ValidationError(f"delta must be finite, got {self.delta!r}")
        if not 0.0 <= self.soft_label <= 1.0:
            raise ValidationError(f"soft_label must be in [0, 1], got {self.soft_label!r}")
        if self.hard_label not in (0, 1):
            raise ValidationError(f"hard_label must be 0 or 1, got {self.hard_label!r}")


def _stable_sigmoid(x: float) -> float:
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def build_targets(record: RoutingRecord, epsilon: float = 1e-6, alpha: float = 1.6) -> PreferenceTarget:
    """Derive the supervision tuple for one labeled record.

    delta = ln(d_ret + eps) - ln(d_gen + eps); soft label sigmoid(alpha *
    delta); hard label 1 iff d_gen < d_ret strictly. A tie yields delta
    exactly 0 and soft label exactly 0.5.
    """
    if not (math.isfinite(epsilon) and epsilon > 0.0):
        raise ValidationError(f"epsilon must be > 0, got {epsilon!r}")
    if not (math.isfinite(alpha) and alpha > 0.0):
        raise ValidationError(f"alpha must be > 0, got {alpha!r}")
    if record.ground_truth is None:
        raise ValidationError(f"unlabeled record {record.id!r}: ground truth required")
    d_ret = geodesic_distance(record.pred_retrieval, record.ground_truth)
    d_gen = geodesic_distance(record.pred_generation, record.ground_truth)
    delta = math.log(d_ret + epsilon) - math.log(d_gen + epsilon)
    p = _stable_sigmoid(alpha * delta)
    y = 1 if d_gen < d_ret else 0
    return PreferenceTarget(d_ret, d_gen, delta, p, y)


@dataclass
class BuildSummary:
    """What build_dataset accepted, skipped, and how the labels balance."""

    total: int
    kept: int
    skipped: int
    label_balance: float
    diagnostics: list


def build_dataset(entries: Iterable[Mapping[str, Any]], epsilon: float = 1e-6,
                  alpha: float = 1.6):
    """Turn raw prediction entries into labeled (record, target) pairs.

    Entries must carry id, ground truth, and both predictions; invalid
    entries are skipped with a per-entry diagnostic. Duplicate ids and an
    all-invalid input are hard errors. Order is preserved.

    Returns (records, targets, summary).
    """
    records: list[RoutingRecord] = []
    targets: list[PreferenceTarget] = []
    diagnostics: list[str] = []
    seen: set[str] = set()
    total = 0
    for i, entry in enumerate(entries):
        total += 1
        try:
            record = record_from_dict(entry)
        except (ValidationError, DataError, KeyError, TypeError) as exc:
            diagnostics.append(f"entry {i}: {exc}")
            continue
        if record.id in seen:
            raise DataError(f"duplicate record id {record.id!r}")
        seen.add(record.id)
        if record.ground_truth is None:
            diagnostics.append(f"entry {i} ({record.id!r}): missing ground truth")
            continue
        if record.candidates and record.candidates[0].coordinate != record.pred_retrieval:
            diagnostics.append(
                f"entry {i} ({record.id!r}): candidates[0] does not match pred_retrieval")
            continue
        records.append(record)
        targets.append(build_targets(record, epsilon, alpha))
    if not records:
        raise DataError("no valid entries")
    balance = sum(t.hard_label for t in targets) / len(targets)
    summary = BuildSummary(total, len(records), total - len(records), balance, diagnostics)
    return records, targets, summary


_PROMPT_TEMPLATE = (
    "Task: Decide whether to use generation or retrieval for this image's "
    "geolocalization.\n"
    "Query: {query}\n"
    "Generation-based Prediction: {gen}\n"
    "Retrieval-based Prediction: {ret} {top1_image}\n"
    "Other Retrieved Candidate Coordinates:\n"
    "{others}"
)


def _fmt_coord(c: GeoCoordinate) -> str:
    # 6 decimal places (~0.1 m), far below any threshold of interest
    return f"{c.lat:.6f}, {c.lon:.6f}"


def render_prompt(record: RoutingRecord) -> str:
    """Serialize a record into the routing decision prompt.

    Field order: task sentence, query placeholder, generation prediction,
    retrieval top-1 prediction and image placeholder, then the remaining
    candidate coordinates (top-1 excluded). Pixels are out of band, so the
    image slots hold opaque placeholders keyed by the record id.
    """
    others = "\n".join(_fmt_coord(c.coordinate) for c in record.candidates[1:])
    return _PROMPT_TEMPLATE.format(
        query=f"<image:{record.id}>",
        gen=_fmt_coord(record.pred_generation),
        ret=_fmt_coord(record.pred_retrieval),
        top1_image=f"<image:{record.id}/top1>",
        others=others,
    )


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for the synthetic record generator."""

    n: int = 1000
    seed: int = 0
    dim: int = 8
    signal_strength: float = 0.9
    retrieval_error_scale: float = 20.0
    generation_error_scale: float = 200.0

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError(f"n must be >= 1, got {self.n}")
        if self.dim < 1:
            raise ValidationError(f"dim must be >= 1, got {self.dim}")
        if not 0.0 <= self.signal_strength <= 1.0:
            raise ValidationError(f"signal_strength must be in [0, 1], got {self.signal_strength}")
        if self.retrieval_error_scale <= 0.0 or self.generation_error_scale <= 0.0:
            raise ValidationError("error scales must be > 0")


def _destination(origin: GeoCoordinate, bearing_rad: float, distance_km: float) -> GeoCoordinate:
    """Point at the given great-circle distance and initial bearing."""
    from .geo import EARTH_RADIUS_KM

    delta = distance_km / EARTH_RADIUS_KM
    phi1 = math.radians(origin.lat)
    lmb1 = math.radians(origin.lon)
    sin_phi2 = math.sin(phi1) * math.cos(delta) + math.cos(phi1) * math.sin(delta) * math.cos(bearing_rad)
    sin_phi2 = min(1.0, max(-1.0, sin_phi2))
    phi2 = math.asin(sin_phi2)
    lmb2 = lmb1 + math.atan2(
        math.sin(bearing_rad) * math.sin(delta) * math.cos(phi1),
        math.cos(delta) - math.sin(phi1) * sin_phi2,
    )
    # wrap into [-180, 180]; the +-180 seam maps to a single representative
    lon = math.degrees(lmb2)
    lon = (lon + 180.0) % 360.0 - 180.0
    return GeoCoordinate(math.degrees(phi2), lon)


def synthesize(config: SynthConfig) -> list[RoutingRecord]:
    """Generate labeled records with a planted routing signal.

    Ground truths are area-uniform over the sphere. Each record draws one
    log-normal error per paradigm from the two configured scales; a hidden
    coin z in {-1, +1} decides which paradigm realizes the smaller error,
    and that decision follows z with probability (1 + signal_strength) / 2.
    Embedding dim 0 carries z plus Gaussian noise of variance
    (1 - signal_strength); the remaining dims are standard noise, so at
    signal_strength 1 the sign of dim 0 determines the better paradigm
    exactly, and at 0 the embedding is useless.
    """
    rng = np.random.default_rng(config.seed)
    n = config.n
    s = config.signal_strength

    lat_gt = np.degrees(np.arcsin(rng.uniform(-1.0, 1.0, n)))
    lon_gt = rng.uniform(-180.0, 180.0, n)

    z = rng.integers(0, 2, n) * 2 - 1  # +1: generation favored
    follow = rng.random(n) < (1.0 + s) / 2.0
    gen_better = np.where(follow, z > 0, z < 0)

    small = min(config.retrieval_error_scale, config.generation_error_scale)
    large = max(config.retrieval_error_scale, config.generation_error_scale)
    e_small = small * np.exp(SYNTH_LOG_SIGMA * rng.standard_normal(n))
    e_large = large * np.exp(SYNTH_LOG_SIGMA * rng.standard_normal(n))
    lo = np.minimum(e_small, e_large)  # winner always realizes the smaller draw
    hi = np.maximum(e_small, e_large)
    d_gen = np.where(gen_better, lo, hi)
    d_ret = np.where(gen_better, hi, lo)

    emb = rng.standard_normal((n, config.dim))
    emb[:, 0] = z + math.sqrt(1.0 - s) * emb[:, 0]

    bearings = rng.uniform(0.0, 2.0 * math.pi, (n, 2 + SYNTH_CANDIDATES - 1))
    cand_dists = 5.0 * np.exp(SYNTH_LOG_SIGMA * rng.standard_normal((n, SYNTH_CANDIDATES - 1)))
    sims = np.sort(rng.uniform(0.0, 1.0, (n, SYNTH_CANDIDATES)))[:, ::-1]

    records = []
    for i in range(n):
        gt = GeoCoordinate(float(lat_gt[i]), float(lon_gt[i]))
        pred_ret = _destination(gt, float(bearings[i, 0]), float(d_ret[i]))
        pred_gen = _destination(gt, float(bearings[i, 1]), float(d_gen[i]))
        cands = [Candidate(pred_ret, float(sims[i, 0]))]
        for k in range(SYNTH_CANDIDATES - 1):
            c = _destination(pred_ret, float(bearings[i, 2 + k]), float(cand_dists[i, k]))
            cands.append(Candidate(c, float(sims[i, k + 1])))
        records.append(RoutingRecord(
            id=f"synth-{config.seed}-{i:06d}",
            pred_retrieval=pred_ret,
            pred_generation=pred_gen,
            ground_truth=gt,
            candidates=tuple(cands),
            embedding=tuple(float(v) for v in emb[i]),
        ))
    return records


# --- JSONL wire format ------------------------------------------------------
#
# First line is a header object distinguished by its "schema" field and
# declaring the embedding dimension (null when no record carries one). Each
# following line is one record:
#   {"id": ..., "gt": [lat, lon], "pred_ret": [lat, lon],
#    "pred_gen": [lat, lon], "candidates": [{"gps": [lat, lon],
#    "similarity": ...}, ...], "embedding": [...]}
# gt, candidates, similarity and embedding are optional. Unknown fields are
# preserved on read and ignored.

_KNOWN_FIELDS = {"id", "gt", "pred_ret", "pred_gen", "candidates", "embedding"}


def _coord_to_json(c: GeoCoordinate):
    return [c.lat, c.lon]


def _coord_from_json(v, what: str) -> GeoCoordinate:
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        raise DataError(f"{what} must be a [lat, lon] pair, got {v!r}")
    return GeoCoordinate(float(v[0]), float(v[1]))


def record_to_dict(record: RoutingRecord) -> dict:
    out: dict[str, Any] = {"id": record.id}
    if record.ground_truth is not None:
        out["gt"] = _coord_to_json(record.ground_truth)
    out["pred_ret"] = _coord_to_json(record.pred_retrieval)
    out["pred_gen"] = _coord_to_json(record.pred_generation)
    if record.candidates:
        cands = []
        for c in record.candidates:
            entry: dict[str, Any] = {"gps": _coord_to_json(c.coordinate)}
            if c.similarity is not None:
                entry["similarity"] = c.similarity
            cands.append(entry)
        out["candidates"] = cands
    if record.embedding is not None:
        out["embedding"] = list(record.embedding)
    out.update(record.extra)
    return out


def record_from_dict(obj: Mapping[str, Any]) -> RoutingRecord:
    if "id" not in obj:
        raise DataError("record is missing the id field")
    if "pred_ret" not in obj or "pred_gen" not in obj:
        raise DataError(f"record {obj.get('id')!r} must carry pred_ret and pred_gen")
    cands = []
    for c in obj.get("candidates") or ():
        if isinstance(c, Mapping):
            cands.append(Candidate(_coord_from_json(c.get("gps"), "candidate gps"),
                                   c.get("similarity")))
        else:
            cands.append(Candidate(_coord_from_json(c, "candidate gps")))
    gt = obj.get("gt")
    emb = obj.get("embedding")
    extra = {k: v for k, v in obj.items() if k not in _KNOWN_FIELDS}
    return RoutingRecord(
        id=obj["id"],
        pred_retrieval=_coord_from_json(obj["pred_ret"], "pred_ret"),
        pred_generation=_coord_from_json(obj["pred_gen"], "pred_gen"),
        ground_truth=None if gt is None else _coord_from_json(gt, "gt"),
        candidates=tuple(cands),
        embedding=None if emb is None else tuple(float(v) for v in emb),
        extra=extra,
    )


def embedding_dim(records) -> int | None:
    """The common embedding dimension, or None when no record has one."""
    dim = None
    for r in records:
        if r.embedding is None:
            continue
        if dim is None:
            dim = len(r.embedding)
        elif len(r.embedding) != dim:
            raise DataError(
                f"dimension mismatch among embeddings: {dim} vs {len(r.embedding)} "
                f"(record {r.id!r})")
    return dim


def write_jsonl(path, records: Iterable[RoutingRecord]) -> None:
    """Write a header line plus one record per line; deterministic bytes."""
    records = list(records)
    header = {"schema": SCHEMA, "embedding_dim": embedding_dim(records),
              "count": len(records)}
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n")
        for r in records:
            fh.write(json.dumps(record_to_dict(r), sort_keys=True,
                                separators=(",", ":")) + "\n")


def read_jsonl(path) -> list[RoutingRecord]:
    """Read records written by write_jsonl; errors cite 1-based line numbers."""
    records = []
    declared_dim = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: malformed JSON on line {lineno}: {exc}") from exc
            if lineno == 1:
                if not isinstance(obj, Mapping) or "schema" not in obj:
                    raise DataError(f"{path}: line 1 must be a header with a schema field")
                if obj["schema"] != SCHEMA:
                    raise DataError(f"{path}: unsupported schema {obj['schema']!r}")
                declared_dim = obj.get("embedding_dim")
                continue
            try:
                record = record_from_dict(obj)
            except (DataError, ValidationError) as exc:
                raise DataError(f"{path}: invalid record on line {lineno}: {exc}") from exc
            if record.embedding is not None and declared_dim is not None \
                    and len(record.embedding) != declared_dim:
                raise DataError(
                    f"{path}: line {lineno}: embedding dimension {len(record.embedding)} "
                    f"does not match declared {declared_dim}")
            records.append(record)
    return records


def with_targets(records, epsilon: float = 1e-6, alpha: float = 1.6):
    """Targets for already-validated records; all must carry ground truth."""
    return [build_targets(r, epsilon, alpha) for r in records]
