"""No-signaling boxes and the d = k = 2 quantum/local tests."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .protocol import rac_target

NS_TOL = 1e-10
ARCSIN_TOL = 1e-9
TSIRELSON_P = (2 + math.sqrt(2)) / 4


class NsBox:
    """Pr(A, B | x, y) stored as an array of shape (D, k, d, d), D = d^(k-1)."""

    def __init__(self, d, k, joint, validate=True):
        joint = np.array(joint, dtype=float)
        D = d ** (k - 1)
        if joint.shape != (D, k, d, d):
            raise InvalidArgumentError(f"joint table must have shape {(D, k, d, d)}")
        if validate:
            if np.any(joint < 0):
                raise InvalidArgumentError("probabilities must be non-negative")
            if np.any(np.abs(joint.sum(axis=(2, 3)) - 1) > 1e-12):
                raise InvalidArgumentError("each (x, y) table must sum to 1")
        self.d, self.k = d, k
        self.joint = joint
        self.joint.setflags(write=False)

    @property
    def n_alice(self):
        return self.d ** (self.k - 1)

    def difference_probs(self):
        """Pr(B - A = delta | x, y) with shape (D, k, d)."""
        d = self.d
        out = np.zeros(self.joint.shape[:2] + (d,))
        for A in range(d):
            for B in range(d):
                out[:, :, (B - A) % d] += self.joint[:, :, A, B]
        return out

    def success_probs(self):
        """Pr(B - A = x.y | x, y) with shape (D, k)."""
        diff = self.difference_probs()
        out = np.empty(diff.shape[:2])
        for x in range(self.n_alice):
            for y in range(self.k):
                out[x, y] = diff[x, y, rac_target(x, y, self.d, self.k)]
        return out

    def to_json(self):
        return {
            "d": self.d,
            "k": self.k,
            "joint": [{"x": x, "y": y, "table": self.joint[x, y].tolist()}
                      for x in range(self.n_alice) for y in range(self.k)],
        }

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj, str):
            obj = json.loads(obj)
        d, k = int(obj["d"]), int(obj["k"])
        joint = np.full((d ** (k - 1), k, d, d), np.nan)
        for entry in obj["joint"]:
            joint[entry["x"], entry["y"]] = entry["table"]
        if np.isnan(joint).any():
            raise InvalidArgumentError("box JSON is missing setting pairs")
        return cls(d, k, joint)


def check_no_signaling(box: NsBox, tol=NS_TOL):
    """Largest spread of each party's marginal across the other's settings."""
    pa = box.joint.sum(axis=3)   # (D, k, d): Alice marginal, varies with y?
    pb = box.joint.sum(axis=2)   # (D, k, d): Bob marginal, varies with x?
    alice = float(np.max(pa.max(axis=1) - pa.min(axis=1)))
    bob = float(np.max(pb.max(axis=0) - pb.min(axis=0)))
    return {"alice": alice, "bob": bob, "max": max(alice, bob), "ok": max(alice, bob) <= tol}


def from_difference_probs(d, k, q):
    """Box with uniform marginals and Pr(B - A = delta | x, y) = q[x, y, delta]."""
    q = np.asarray(q, dtype=float)
    D = d ** (k - 1)
    if q.shape != (D, k, d):
        raise InvalidArgumentError(f"difference table must have shape {(D, k, d)}")
    if np.any(q < 0) or np.any(np.abs(q.sum(axis=-1) - 1) > 1e-12):
        raise InvalidArgumentError("difference distributions must be probability vectors")
    A = np.arange(d)[:, None]
    B = np.arange(d)[None, :]
    return NsBox(d, k, q[:, :, (B - A) % d] / d)


def from_success_probs(d, k, p):
    """Unbiased box with Pr(B - A = x.y | x, y) = p[x, y].

    Success mass is spread evenly over the d pairs meeting the target and
    failure mass evenly over the other d(d-1) pairs.  ``p`` may be a scalar,
    a (D, k) array or a mapping (x, y) -> p.
    """
    D = d ** (k - 1)
    if isinstance(p, dict):
        arr = np.full((D, k), np.nan)
        for (x, y), v in p.items():
            arr[x, y] = v
        if np.isnan(arr).any():
            raise InvalidArgumentError("success probabilities missing for some settings")
    else:
        arr = np.broadcast_to(np.asarray(p, dtype=float), (D, k)).copy()
    if np.any(arr < 0) or np.any(arr > 1):
        raise InvalidArgumentError("success probabilities must lie in [0, 1]")
    q = np.empty((D, k, d))
    for x in range(D):
        for y in range(k):
            q[x, y] = (1 - arr[x, y]) / (d - 1)
            q[x, y, rac_target(x, y, d, k)] = arr[x, y]
    return from_difference_probs(d, k, q)


def shift_difference_mass(box: NsBox, x, y, h):
    """Move h from B - A = d-1 to B - A = 0 at (x, y), h/d per Alice outcome.

    Both single-party marginals are unchanged.
    """
    d = box.d
    joint = box.joint.copy()
    for A in range(d):
        joint[x, y, A, A] += h / d
        joint[x, y, A, (A - 1) % d] -= h / d
    if joint[x, y].min() < 0:
        raise InvalidArgumentError("shift leaves the probability simplex")
    return NsBox(d, box.k, joint, validate=False)


def pr_box(d=2, k=2):
    return from_success_probs(d, k, 1.0)


def random_box(d=2, k=2):
    return from_success_probs(d, k, 1.0 / d)


def tsirelson_box():
    return from_success_probs(2, 2, TSIRELSON_P)


def product_box(pa, pb):
    """Pr(A|x) Pr(B|y) with pa of shape (D, d) and pb of shape (k, d)."""
    pa, pb = np.asarray(pa, dtype=float), np.asarray(pb, dtype=float)
    d = pa.shape[1]
    k = pb.shape[0]
    return NsBox(d, k, pa[:, None, :, None] * pb[None, :, None, :])


@dataclass(frozen=True)
class CorrelationQuad:
    c00: float
    c01: float
    c10: float
    c11: float

    def __post_init__(self):
        for v in self.as_array():
            if abs(v) > 1 + 1e-12:
                raise InvalidArgumentError("correlations must lie in [-1, 1]")

    def as_array(self):
        return np.array([self.c00, self.c01, self.c10, self.c11])

    @classmethod
    def from_success(cls, p00, p01, p10, p11):
        """C_xy = (-1)^(xy) (2 p_xy - 1)."""
        return cls(2 * p00 - 1, 2 * p01 - 1, 2 * p10 - 1, 1 - 2 * p11)


def _require_2x2(box):
    if (box.d, box.k) != (2, 2):
        raise InvalidArgumentError("this test is defined for d = k = 2 only")


def correlations_2x2(box: NsBox) -> CorrelationQuad:
    _require_2x2(box)
    p = box.success_probs()
    return CorrelationQuad.from_success(p[0, 0], p[0, 1], p[1, 0], p[1, 1])


# sign patterns with an odd number of minus signs; the first is CHSH itself
_ODD_SIGNS = np.array([[1, 1, 1, -1], [1, 1, -1, 1], [1, -1, 1, 1], [-1, 1, 1, 1]])


def chsh_values(q) -> np.ndarray:
    c = q.as_array() if isinstance(q, CorrelationQuad) else np.asarray(q, dtype=float)
    return np.abs(_ODD_SIGNS @ c)


def is_quantum_2x2(q, tol=ARCSIN_TOL) -> bool:
    """Arcsin criterion for unbiased binary correlations."""
    c = q.as_array() if isinstance(q, CorrelationQuad) else np.asarray(q, dtype=float)
    s = np.arcsin(np.clip(c, -1.0, 1.0))
    return bool(np.all(np.abs(_ODD_SIGNS @ s) <= math.pi + tol))


def is_local_2x2(q) -> bool:
    return bool(np.all(chsh_values(q) <= 2 + 1e-12))


def gram_matrix_2x2(q, theta1, theta2):
    """Gram matrix of unit vectors u_0, u_1 (Alice) and v_0, v_1 (Bob)."""
    c = q.as_array() if isinstance(q, CorrelationQuad) else np.asarray(q, dtype=float)
    return np.array([
        [1.0, theta1, c[0], c[1]],
        [theta1, 1.0, c[2], c[3]],
        [c[0], c[2], 1.0, theta2],
        [c[1], c[3], theta2, 1.0],
    ])


def gram_check_2x2(q, theta1, theta2, tol=1e-9) -> bool:
    return bool(np.linalg.eigvalsh(gram_matrix_2x2(q, theta1, theta2))[0] >= -tol)


def gram_completable_2x2(q, step=0.01, tol=1e-9) -> bool:
    """Whether any (theta1, theta2) on a grid over [-1, 1]^2 completes G."""
    grid = np.linspace(-1, 1, int(round(2 / step)) + 1)
    c = q.as_array() if isinstance(q, CorrelationQuad) else np.asarray(q, dtype=float)
    t1, t2 = np.meshgrid(grid, grid, indexing="ij")
    G = np.zeros(t1.shape + (4, 4))
    G[..., [0, 1, 2, 3], [0, 1, 2, 3]] = 1.0
    G[..., 0, 1] = G[..., 1, 0] = t1
    G[..., 2, 3] = G[..., 3, 2] = t2
    for (i, j), v in zip([(0, 2), (0, 3), (1, 2), (1, 3)], c):
        G[..., i, j] = G[..., j, i] = v
    return bool(np.any(np.linalg.eigvalsh(G)[..., 0] >= -tol))


def deterministic_local_quads():
    """All 16 local deterministic assignments of +-1 outcomes."""
    out = []
    for a0, a1, b0, b1 in itertools.product((1, -1), repeat=4):
        out.append(CorrelationQuad(a0 * b0, a0 * b1, a1 * b0, a1 * b1))
    return out
