"""Feature encoders, the routing model, and the sign-based decision rule.

The encoder contract replaces the upstream vision backbone: anything that
maps a record to a fixed-length finite vector can feed the router. Three
implementations ship: pass-through of a precomputed embedding, geometric
context features derived from the record itself, and their concatenation.
"""

from __future__ import annotations

import base64
import copy
import json
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .data import RoutingRecord
from .errors import DataError, ValidationError
from .geo import geodesic_distance, haversine_km

MODEL_FORMAT = "geodispatch-router/v1"

CONTEXT_DIM = 14
# Candidate-agreement radius for the context features, in km.
AGREEMENT_RADIUS_KM = 25.0


class ParadigmChoice(str, Enum):
    GENERATION = "generation"
    RETRIEVAL = "retrieval"


class FeatureEncoder:
    """Maps a record to a fixed-length float vector, deterministically."""

    dim: int

    def encode(self, record: RoutingRecord) -> np.ndarray:
        raise NotImplementedError

    def encode_many(self, records) -> np.ndarray:
        out = np.empty((len(records), self.dim), dtype=np.float64)
        for i, r in enumerate(records):
            out[i] = self.encode(r)
        return out

    def spec(self) -> dict:
        raise NotImplementedError


class EmbeddingEncoder(FeatureEncoder):
    """Passes through the record's precomputed embedding."""

    def __init__(self, dim: int):
        if dim < 1:
            raise ValidationError(f"embedding dim must be >= 1, got {dim}")
        self.dim = int(dim)

    def encode(self, record: RoutingRecord) -> np.ndarray:
        if record.embedding is None:
            raise ValidationError(f"record {record.id!r} has no embedding")
        if len(record.embedding) != self.dim:
            raise ValidationError(
                f"record {record.id!r}: embedding dimension {len(record.embedding)} "
                f"does not match encoder dimension {self.dim}")
        return np.asarray(record.embedding, dtype=np.float64)

    def spec(self) -> dict:
        return {"type": "embedding", "dim": self.dim}


class ContextEncoder(FeatureEncoder):
    """Geometric features from the record's predictions and candidates.

    Fixed feature order:
      0  ln(1 + distance between the two predictions)
      1  ln(1 + mean candidate distance to the retrieval prediction)
      2  ln(1 + std of candidate distances to the retrieval prediction)
      3  fraction of candidates within 25 km of the retrieval prediction
      4  candidate count / 10
      5..12  sin/cos of each prediction's lat and lon (radians)
      13 constant 1 bias feature
    Candidate features are 0 when the record has no candidates.
    """

    dim = CONTEXT_DIM

    def encode(self, record: RoutingRecord) -> np.ndarray:
        out = np.zeros(self.dim, dtype=np.float64)
        out[0] = math.log1p(geodesic_distance(record.pred_retrieval, record.pred_generation))
        k = len(record.candidates)
        if k > 0:
            ret = record.pred_retrieval
            d = haversine_km(
                [c.coordinate.lat for c in record.candidates],
                [c.coordinate.lon for c in record.candidates],
                np.full(k, ret.lat), np.full(k, ret.lon))
            out[1] = math.log1p(float(np.mean(d)))
            out[2] = math.log1p(float(np.std(d)))
            out[3] = float(np.count_nonzero(d <= AGREEMENT_RADIUS_KM)) / k
        out[4] = k / 10.0
        j = 5
        for pred in (record.pred_retrieval, record.pred_generation):
            lat, lon = math.radians(pred.lat), math.radians(pred.lon)
            out[j:j + 4] = (math.sin(lat), math.cos(lat), math.sin(lon), math.cos(lon))
            j += 4
        out[13] = 1.0
        return out

    def spec(self) -> dict:
        return {"type": "context"}


class ConcatEncoder(FeatureEncoder):
    """Embedding features followed by context features."""

    def __init__(self, embedding_dim: int):
        self._emb = EmbeddingEncoder(embedding_dim)
        self._ctx = ContextEncoder()
        self.dim = self._emb.dim + self._ctx.dim

    def encode(self, record: RoutingRecord) -> np.ndarray:
        return np.concatenate([self._emb.encode(record), self._ctx.encode(record)])

    def spec(self) -> dict:
        return {"type": "concat", "dim": self._emb.dim}


def encoder_from_spec(spec: dict) -> FeatureEncoder:
    kind = spec.get("type")
    if kind == "embedding":
        return EmbeddingEncoder(int(spec["dim"]))
    if kind == "context":
        return ContextEncoder()
    if kind == "concat":
        return ConcatEncoder(int(spec["dim"]))
    raise DataError(f"unknown encoder spec {spec!r}")


@dataclass
class MlpParams:
    """One hidden tanh layer projecting to a scalar."""

    w1: np.ndarray  # (hidden, dim)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden,)
    b2: np.ndarray  # (1,)


class RouterModel:
    """Routing function parameters plus the encoder that feeds them."""

    def __init__(self, kind: str, encoder: FeatureEncoder, params):
        if kind not in ("linear", "mlp"):
            raise ValidationError(f"kind must be 'linear' or 'mlp', got {kind!r}")
        self.kind = kind
        self.encoder = encoder
        self.params = params
        self._check_shapes()

    def _check_shapes(self):
        m = self.encoder.dim
        if self.kind == "linear":
            if self.params.shape != (m,):
                raise ValidationError(
                    f"theta shape {self.params.shape} does not match encoder dim {m}")
            if not np.all(np.isfinite(self.params)):
                raise ValidationError("theta must be finite")
        else:
            p = self.params
            h = p.w1.shape[0]
            if p.w1.shape != (h, m) or p.b1.shape != (h,) or p.w2.shape != (h,) \
                    or p.b2.shape != (1,):
                raise ValidationError("mlp parameter shapes are inconsistent")
            for arr in (p.w1, p.b1, p.w2, p.b2):
                if not np.all(np.isfinite(arr)):
                    raise ValidationError("mlp parameters must be finite")

    @classmethod
    def linear(cls, encoder: FeatureEncoder) -> "RouterModel":
        # zero init: the untrained router scores 0 and routes everything to
        # retrieval, a clean pure-policy baseline
        return cls("linear", encoder, np.zeros(encoder.dim, dtype=np.float64))

    @classmethod
    def mlp(cls, encoder: FeatureEncoder, hidden: int = 16, seed: int = 0) -> "RouterModel":
        if hidden < 1:
            raise ValidationError(f"hidden width must be >= 1, got {hidden}")
        m = encoder.dim
        rng = np.random.default_rng(seed)
        lim1 = 1.0 / math.sqrt(m)
        lim2 = 1.0 / math.sqrt(hidden)
        params = MlpParams(
            w1=rng.uniform(-lim1, lim1, (hidden, m)),
            b1=np.zeros(hidden, dtype=np.float64),
            w2=rng.uniform(-lim2, lim2, hidden),
            b2=np.zeros(1, dtype=np.float64),
        )
        return cls("mlp", encoder, params)

    @property
    def dim(self) -> int:
        return self.encoder.dim

    def param_arrays(self) -> list:
        """Parameter tensors in a fixed order, shared by gradients."""
        if self.kind == "linear":
            return [self.params]
        p = self.params
        return [p.w1, p.b1, p.w2, p.b2]

    def forward(self, features: np.ndarray) -> np.ndarray:
        """Routing scores for a (n, dim) feature matrix."""
        U = np.asarray(features, dtype=np.float64)
        if U.ndim != 2 or U.shape[1] != self.dim:
            raise ValidationError(
                f"feature matrix shape {U.shape} does not match encoder dim {self.dim}")
        if self.kind == "linear":
            return U @ self.params
        p = self.params
        h = np.tanh(U @ p.w1.T + p.b1)
        return h @ p.w2 + p.b2[0]

    def backward(self, features: np.ndarray, dscore: np.ndarray) -> list:
        """Parameter gradients given d(loss)/d(score) per instance.

        Returns arrays matching param_arrays() element for element.
        """
        U = np.asarray(features, dtype=np.float64)
        dscore = np.asarray(dscore, dtype=np.float64)
        if self.kind == "linear":
            return [U.T @ dscore]
        p = self.params
        h = np.tanh(U @ p.w1.T + p.b1)
        gb2 = np.array([dscore.sum()])
        gw2 = h.T @ dscore
        dh = np.outer(dscore, p.w2) * (1.0 - h * h)
        gw1 = dh.T @ U
        gb1 = dh.sum(axis=0)
        return [gw1, gb1, gw2, gb2]

    def copy(self) -> "RouterModel":
        if self.kind == "linear":
            return RouterModel("linear", self.encoder, self.params.copy())
        p = self.params
        return RouterModel("mlp", self.encoder,
                           MlpParams(p.w1.copy(), p.b1.copy(), p.w2.copy(), p.b2.copy()))

    def __eq__(self, other):
        if not isinstance(other, RouterModel) or self.kind != other.kind \
                or self.encoder.spec() != other.encoder.spec():
            return NotImplemented if not isinstance(other, RouterModel) else False
        if self.kind == "linear":
            return np.array_equal(self.params, other.params)
        return all(np.array_equal(a, b)
                   for a, b in zip(self.param_arrays(), other.param_arrays()))


def score(record: RoutingRecord, model: RouterModel) -> float:
    """Scalar routing score for one record; deterministic."""
    u = model.encoder.encode(record)
    return float(model.forward(u[None, :])[0])


def decide(r: float) -> ParadigmChoice:
    """Generation iff the score is strictly positive, retrieval otherwise."""
    if not math.isfinite(r):
        raise ValidationError(f"routing score must be finite, got {r!r}")
    return ParadigmChoice.GENERATION if r > 0.0 else ParadigmChoice.RETRIEVAL


def _encode_array(arr: np.ndarray) -> str:
    # little-endian float64, row-major
    return base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode("ascii")


def _decode_array(text: str, shape: tuple) -> np.ndarray:
    raw = base64.b64decode(text.encode("ascii"), validate=True)
    expected = int(np.prod(shape)) * 8
    if len(raw) != expected:
        raise DataError(f"parameter block holds {len(raw)} bytes, expected {expected}")
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)


def save_model(path, model: RouterModel) -> None:
    """Write the model as a versioned JSON container.

    Parameters are base64 blocks of little-endian 64-bit reals, row-major.
    """
    doc = {
        "format": MODEL_FORMAT,
        "kind": model.kind,
        "dim": model.dim,
        "encoder": model.encoder.spec(),
    }
    if model.kind == "linear":
        doc["params"] = {"theta": _encode_array(model.params)}
    else:
        p = model.params
        doc["hidden"] = int(p.w1.shape[0])
        doc["params"] = {"w1": _encode_array(p.w1), "b1": _encode_array(p.b1),
                         "w2": _encode_array(p.w2), "b2": _encode_array(p.b2)}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_model(path) -> RouterModel:
    """Read a model written by save_model; bit-exact round trip."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: corrupt model file: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise DataError(f"{path}: unsupported model format {doc.get('format')!r}"
                        if isinstance(doc, dict) else f"{path}: corrupt model file")
    try:
        encoder = encoder_from_spec(doc["encoder"])
        m = int(doc["dim"])
        if m != encoder.dim:
            raise DataError(f"{path}: declared dim {m} does not match encoder dim {encoder.dim}")
        blocks = doc["params"]
        if doc["kind"] == "linear":
            params = _decode_array(blocks["theta"], (m,))
        elif doc["kind"] == "mlp":
            h = int(doc["hidden"])
            params = MlpParams(
                w1=_decode_array(blocks["w1"], (h, m)),
                b1=_decode_array(blocks["b1"], (h,)),
                w2=_decode_array(blocks["w2"], (h,)),
                b2=_decode_array(blocks["b2"], (1,)),
            )
        else:
            raise DataError(f"{path}: unknown model kind {doc.get('kind')!r}")
    except KeyError as exc:
        raise DataError(f"{path}: model file is missing field {exc}") from exc
    try:
        return RouterModel(doc["kind"], encoder, params)
    except ValidationError as exc:
        raise DataError(f"{path}: {exc}") from exc
