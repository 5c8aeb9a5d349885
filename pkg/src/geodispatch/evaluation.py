"""Policy evaluation: geolocalization accuracy, routing accuracy, oracle bound.

Routing accuracy is measured on the per-threshold disagreement set, the
records where exactly one paradigm's prediction lies within the threshold;
on that set the within-threshold paradigm is the uniquely correct choice,
and the two pure policies' accuracies are complementary by construction.
An empty disagreement set yields an explicit None, never 0 or 100.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .data import RoutingRecord, with_targets
from .errors import ValidationError
from .geo import ThresholdSet, haversine_km
from .model import ParadigmChoice, RouterModel, decide, score
from .train import TrainConfig, train
from . import objective

POLICY_KINDS = ("pure_retrieval", "pure_generation", "router", "oracle")

DEFAULT_ALPHA_GRID = (0.1, 0.4, 0.7, 1.0, 1.3, 1.6, 1.9, 2.2, 2.5, 3.0)


@dataclass(frozen=True)
class Policy:
    kind: str
    model: RouterModel | None = None

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValidationError(f"unknown policy kind {self.kind!r}")
        if self.kind == "router" and self.model is None:
            raise ValidationError("router policy requires a model")


def apply_policy(record: RoutingRecord, policy: Policy):
    """The (prediction, paradigm) this policy picks for one record.

    The oracle picks the paradigm with strictly smaller error and needs
    ground truth; ties go to retrieval, consistent with the hard label.
    """
    if policy.kind == "pure_retrieval":
        return record.pred_retrieval, ParadigmChoice.RETRIEVAL
    if policy.kind == "pure_generation":
        return record.pred_generation, ParadigmChoice.GENERATION
    if policy.kind == "router":
        choice = decide(score(record, policy.model))
    else:  # oracle
        if record.ground_truth is None:
            raise ValidationError(f"oracle requires ground truth (record {record.id!r})")
        t = with_targets([record])[0]
        choice = ParadigmChoice.GENERATION if t.d_generation < t.d_retrieval \
            else ParadigmChoice.RETRIEVAL
    pred = record.pred_generation if choice is ParadigmChoice.GENERATION \
        else record.pred_retrieval
    return pred, choice


def _distances(records) -> tuple:
    gt_lat = [r.ground_truth.lat for r in records]
    gt_lon = [r.ground_truth.lon for r in records]
    d_ret = haversine_km([r.pred_retrieval.lat for r in records],
                         [r.pred_retrieval.lon for r in records], gt_lat, gt_lon)
    d_gen = haversine_km([r.pred_generation.lat for r in records],
                         [r.pred_generation.lon for r in records], gt_lat, gt_lon)
    return d_ret, d_gen


def _choices_mask(records, policy: Policy, d_ret, d_gen) -> np.ndarray:
    """Boolean per record: True where the policy picks generation."""
    n = len(records)
    if policy.kind == "pure_retrieval":
        return np.zeros(n, dtype=bool)
    if policy.kind == "pure_generation":
        return np.ones(n, dtype=bool)
    if policy.kind == "oracle":
        return d_gen < d_ret
    scores = policy.model.forward(policy.model.encoder.encode_many(records))
    if not np.all(np.isfinite(scores)):
        raise ValidationError("router produced a non-finite score")
    return scores > 0.0


def routing_accuracy(records, choices, t: float):
    """(accuracy or None, disagreement count) at threshold t km.

    `choices` holds one ParadigmChoice per record. Restricted to records
    where exactly one paradigm is within t; accuracy is the percentage of
    that set routed to the within-threshold paradigm.
    """
    if len(records) == 0:
        raise ValidationError("no records")
    if len(choices) != len(records):
        raise ValidationError(f"{len(records)} records vs {len(choices)} choices")
    for r in records:
        if r.ground_truth is None:
            raise ValidationError(f"record {r.id!r} has no ground truth")
    d_ret, d_gen = _distances(records)
    chose_gen = np.array([c is ParadigmChoice.GENERATION for c in choices])
    return _routing_accuracy_masked(chose_gen, d_ret, d_gen, t)


def _routing_accuracy_masked(chose_gen, d_ret, d_gen, t: float):
    ret_in = d_ret <= t
    gen_in = d_gen <= t
    disagree = ret_in ^ gen_in
    count = int(np.count_nonzero(disagree))
    if count == 0:
        return None, 0
    correct = chose_gen[disagree] == gen_in[disagree]
    return 100.0 * int(np.count_nonzero(correct)) / count, count


@dataclass(frozen=True)
class PolicyResult:
    policy: str
    geo_accuracy: tuple
    geo_average: float
    routing_accuracy: tuple  # entries may be None on empty disagreement sets
    routing_average: float | None


@dataclass(frozen=True)
class EvalReport:
    thresholds: tuple
    n_records: int
    disagreement_sizes: tuple
    policies: tuple

    def policy_result(self, name: str) -> PolicyResult:
        for p in self.policies:
            if p.policy == name:
                return p
        raise KeyError(name)

    def to_json(self) -> dict:
        return {
            "thresholds_km": list(self.thresholds),
            "n_records": self.n_records,
            "disagreement_sizes": list(self.disagreement_sizes),
            "policies": [
                {
                    "policy": p.policy,
                    "geo_accuracy": list(p.geo_accuracy),
                    "geo_average": p.geo_average,
                    "routing_accuracy": list(p.routing_accuracy),
                    "routing_average": p.routing_average,
                }
                for p in self.policies
            ],
        }


def evaluate(records, policies, thresholds: ThresholdSet | None = None) -> EvalReport:
    """Score every policy on a labeled dataset; deterministic.

    Emits per-threshold geolocalization accuracy plus its unweighted mean,
    and disagreement-set routing accuracy for every policy.
    """
    ts = thresholds if thresholds is not None else ThresholdSet()
    if len(records) == 0:
        raise ValidationError("empty dataset")
    for r in records:
        if r.ground_truth is None:
            raise ValidationError(f"record {r.id!r} has no ground truth")
    d_ret, d_gen = _distances(records)
    n = len(records)

    sizes = []
    for t in ts:
        disagree = (d_ret <= t) ^ (d_gen <= t)
        sizes.append(int(np.count_nonzero(disagree)))

    results = []
    for policy in policies:
        chose_gen = _choices_mask(records, policy, d_ret, d_gen)
        chosen = np.where(chose_gen, d_gen, d_ret)
        geo = tuple(100.0 * int(np.count_nonzero(chosen <= t)) / n for t in ts)
        routing = []
        for t in ts:
            acc, _ = _routing_accuracy_masked(chose_gen, d_ret, d_gen, t)
            routing.append(acc)
        defined = [a for a in routing if a is not None]
        results.append(PolicyResult(
            policy=policy.kind,
            geo_accuracy=geo,
            geo_average=sum(geo) / len(geo),
            routing_accuracy=tuple(routing),
            routing_average=sum(defined) / len(defined) if defined else None,
        ))

    report = EvalReport(tuple(ts), n, tuple(sizes), tuple(results))
    oracle_rows = [p for p in report.policies if p.policy == "oracle"]
    if oracle_rows:
        top = oracle_rows[0].geo_accuracy
        for p in report.policies:
            assert all(o >= g - 1e-12 for o, g in zip(top, p.geo_accuracy)), \
                f"oracle dominated by {p.policy}"
    return report


def format_table(report: EvalReport) -> str:
    """Aligned human-readable table, one policy per row."""
    headers = (["Policy"]
               + [f"{t:g}km" for t in report.thresholds] + ["Avg"]
               + [f"R@{t:g}" for t in report.thresholds] + ["RAvg"])
    rows = [headers]
    for p in report.policies:
        cells = [p.policy]
        cells += [f"{v:.2f}" for v in p.geo_accuracy] + [f"{p.geo_average:.2f}"]
        cells += [("n/a" if v is None else f"{v:.2f}") for v in p.routing_accuracy]
        cells += ["n/a" if p.routing_average is None else f"{p.routing_average:.2f}"]
        rows.append(cells)
    widths = [max(len(r[i]) for r in rows) for i in range(len(headers))]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(c.rjust(w) if j else c.ljust(w)
                               for j, (c, w) in enumerate(zip(row, widths))))
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    meta = (f"records: {report.n_records}  disagreement sizes: "
            f"{list(report.disagreement_sizes)}")
    return "\n".join(lines + [meta])


def split_indices(n: int, fraction: float, seed: int):
    """Seeded shuffle split into (train, held_out) index arrays."""
    if not 0.0 < fraction < 1.0:
        raise ValidationError(f"split fraction must be in (0, 1), got {fraction!r}")
    perm = np.random.default_rng(seed).permutation(n)
    cut = int(fraction * n)
    if cut == 0 or cut == n:
        raise ValidationError(f"split of {n} records at fraction {fraction} leaves a side empty")
    return perm[:cut], perm[cut:]


@dataclass(frozen=True)
class SweepRow:
    alpha: float
    report: EvalReport
    epoch_losses: tuple


def train_and_evaluate(records, alpha: float, cfg: TrainConfig, init: RouterModel,
                       thresholds: ThresholdSet | None = None, epsilon: float = 1e-6,
                       hard_label_mode: bool = False, split_fraction: float = 0.8):
    """One sweep row: rebuild labels at `alpha`, retrain from init, evaluate held-out."""
    ts = thresholds if thresholds is not None else ThresholdSet()
    train_idx, held_idx = split_indices(len(records), split_fraction, cfg.seed)
    train_records = [records[i] for i in train_idx]
    held_records = [records[i] for i in held_idx]
    obj_cfg = objective.ObjectiveConfig(alpha=alpha, epsilon=epsilon,
                                        hard_label_mode=hard_label_mode)
    targets = with_targets(train_records, epsilon, alpha)
    result = train(train_records, targets, cfg, obj_cfg, init)
    policies = [Policy("pure_retrieval"), Policy("pure_generation"),
                Policy("router", result.model), Policy("oracle")]
    report = evaluate(held_records, policies, ts)
    return SweepRow(alpha, report, tuple(result.epoch_losses)), result.model


def sweep_alpha(records, alphas, cfg: TrainConfig, init: RouterModel,
                thresholds: ThresholdSet | None = None, epsilon: float = 1e-6,
                hard_label_mode: bool = False, split_fraction: float = 0.8):
    """Retrain and evaluate once per alpha on a fixed seeded 80/20 split."""
    alphas = list(alphas)
    if not alphas:
        raise ValidationError("empty alpha list")
    rows = []
    for alpha in alphas:
        row, _ = train_and_evaluate(records, alpha, cfg, init, thresholds, epsilon,
                                    hard_label_mode, split_fraction)
        rows.append(row)
    return rows


def sweep_to_csv(rows) -> str:
    """CSV with one line per (alpha, threshold) for the router policy."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["alpha", "threshold_km", "accuracy"])
    for row in rows:
        router = row.report.policy_result("router")
        for t, acc in zip(row.report.thresholds, router.geo_accuracy):
            writer.writerow([f"{row.alpha:g}", f"{t:g}", f"{acc:.6f}"])
        writer.writerow([f"{row.alpha:g}", "average", f"{router.geo_average:.6f}"])
    return buf.getvalue()
