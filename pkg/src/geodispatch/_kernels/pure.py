"""Pure numpy kernels; the fallback when the compiled extension is absent.

Arithmetic mirrors the compiled kernels operation for operation so both
backends agree to within a few ulps. Reductions use numpy's fixed pairwise
scheme, which is deterministic for a given array length.
"""

import numpy as np

DEG2RAD = np.pi / 180.0


def haversine_km(lat1, lon1, lat2, lon2, radius):
    """Element-wise great-circle distance between coordinate arrays, in km.

    Inputs are degrees; all four arrays share one shape. Uses the haversine
    formula with the atan2 arrangement, which stays well conditioned for
    both near-identical and near-antipodal pairs.
    """
    phi1 = np.asarray(lat1, dtype=np.float64) * DEG2RAD
    phi2 = np.asarray(lat2, dtype=np.float64) * DEG2RAD
    dphi = (np.asarray(lat2, dtype=np.float64) - np.asarray(lat1, dtype=np.float64)) * DEG2RAD
    dlmb = (np.asarray(lon2, dtype=np.float64) - np.asarray(lon1, dtype=np.float64)) * DEG2RAD
    sp = np.sin(dphi * 0.5)
    sl = np.sin(dlmb * 0.5)
    a = sp * sp + np.cos(phi1) * np.cos(phi2) * (sl * sl)
    a = np.clip(a, 0.0, 1.0)
    return radius * (2.0 * np.arctan2(np.sqrt(a), np.sqrt(1.0 - a)))


def sigmoid(x):
    """Numerically stable logistic function, element-wise."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def bce_loss(scores, q):
    """Mean soft-label binary cross-entropy of logits `scores` against `q`.

    Evaluated as q*softplus(-r) + (1-q)*softplus(r); finite for |r| up to
    1e4 and beyond.
    """
    r = np.asarray(scores, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    terms = q * np.logaddexp(0.0, -r) + (1.0 - q) * np.logaddexp(0.0, r)
    return float(np.mean(terms))


def bce_grad(scores, q):
    """Per-instance derivative of the cross-entropy wrt each logit: sigmoid(r) - q."""
    return sigmoid(scores) - np.asarray(q, dtype=np.float64)
