"""Shannon quantities, the RAC information gain and its analytic properties.

Logs are base 2 except in ``gain_derivative_unbiased``, which works in
natural-log units to match its closed form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .channel import ChannelMatrix
from .errors import InvalidArgumentError, SingularInputError
from .protocol import RacScheme, guess_channel

__all__ = [
    "ChannelMatrix", "GainReport", "shannon_entropy", "mutual_information",
    "information_gain", "noise_parameter", "gain_unbiased", "signal_decay_bound",
    "signal_decay_ratio_sup", "chi2_contraction", "hessian_d2I", "hessian_d2I_2x2",
    "hessian_uniform", "finite_difference_d2I", "gain_derivative_unbiased",
]

EPS = 1e-15


def _xlogx(p):
    p = np.asarray(p, dtype=float)
    out = np.zeros_like(p)
    m = p > EPS
    out[m] = p[m] * np.log2(p[m])
    return out


def shannon_entropy(p) -> float:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or np.any(p < -1e-15) or abs(p.sum() - 1) > 1e-12:
        raise InvalidArgumentError("entropy needs a normalised probability vector")
    return float(-_xlogx(p).sum())


def mutual_information(px, channel) -> float:
    """I(X;Z) = H(Z) - H(Z|X) for input law ``px`` through ``channel``."""
    px = np.asarray(px, dtype=float)
    W = channel.matrix if isinstance(channel, ChannelMatrix) else np.asarray(channel, dtype=float)
    if W.ndim != 2 or px.shape != (W.shape[0],):
        raise InvalidArgumentError("input law and channel rows disagree")
    if abs(px.sum() - 1) > 1e-12 or np.any(px < 0):
        raise InvalidArgumentError("input law must be a probability vector")
    pz = px @ W
    h_cond = -(px * _xlogx(W).sum(axis=1)).sum()
    return float(max(-_xlogx(pz).sum() - h_cond, 0.0))


@dataclass
class GainReport:
    per_setting: list
    total: float
    bound: float
    satisfied: bool
    channels: list = field(default_factory=list, repr=False)

    def to_json(self):
        return {"per_setting": self.per_setting, "total": self.total,
                "bound": self.bound, "satisfied": self.satisfied}


def information_gain(box, scheme: RacScheme) -> GainReport:
    """Sum over i of I(a_i; beta | b = i)."""
    if (box.d, box.k) != (scheme.d, scheme.k):
        raise InvalidArgumentError("box and scheme describe different scenarios")
    m = scheme.marginal_array
    chans = [guess_channel(box, scheme, i) for i in range(scheme.k)]
    terms = [mutual_information(m[i], chans[i]) for i in range(scheme.k)]
    total = float(sum(terms))
    bound = math.log2(scheme.d)
    return GainReport(terms, total, bound, total <= bound + 1e-9, chans)


def noise_parameter(box, scheme: RacScheme, y: int) -> float:
    """xi_y = (d sum_x Pr(x) Pr(B_y - A_x = x.y | x, y) - 1) / (d - 1)."""
    if (box.d, box.k) != (scheme.d, scheme.k):
        raise InvalidArgumentError("box and scheme describe different scenarios")
    if not 0 <= y < scheme.k:
        raise InvalidArgumentError(f"setting {y} outside [0, {scheme.k})")
    d = scheme.d
    px = scheme.setting_distribution()
    p = box.success_probs()[:, y]
    return float((d * (px @ p) - 1) / (d - 1))


def gain_unbiased(d, k, xi) -> float:
    """Total gain of k independent d-ary symmetric channels with parameter xi."""
    if not -1e-12 <= xi <= 1 + 1e-12:
        raise InvalidArgumentError("xi must lie in [0, 1]")
    xi = min(max(float(xi), 0.0), 1.0)
    pc = ((d - 1) * xi + 1) / d
    wrong = (1 - xi) / d
    per = math.log2(d) + (pc * math.log2(pc) if pc > 0 else 0.0)
    if wrong > 0:
        per += (1 - pc) * math.log2(wrong)
    return k * per


def gain_derivative_unbiased(d, xi) -> float:
    """Per-dit d I / d xi in nats: (d-1)/d ln(((d-1) xi + 1)/(1 - xi))."""
    if xi >= 1:
        raise SingularInputError("derivative diverges at xi = 1")
    if xi < 0:
        raise InvalidArgumentError("xi must lie in [0, 1)")
    return (d - 1) / d * math.log(((d - 1) * xi + 1) / (1 - xi))


def signal_decay_bound(d, xi) -> float:
    """Upper bound xi^2 on I(X;Z)/I(X;Y) for a symmetric Y -> Z channel."""
    return float(xi) ** 2


def _symmetric_T(d, xi):
    return ChannelMatrix.symmetric(d, xi).matrix


def _ratio(p, delta, T, eps):
    """I(X;Z)/I(X;Y) for a fair binary X with rows p +- eps delta."""
    W = np.array([p + eps * delta, p - eps * delta])
    px = np.array([0.5, 0.5])
    iy = mutual_information(px, W)
    iz = mutual_information(px, W @ T)
    return iz / iy


def _extrapolated_ratio(p, delta, T, eps):
    r = [_ratio(p, delta, T, e) for e in eps]
    # the ratio is even in eps, so fit r = r0 + c eps^2 on the two smallest
    e1, e2 = eps[-2], eps[-1]
    r1, r2 = r[-2], r[-1]
    return r2 + (r2 - r1) * e2 ** 2 / (e1 ** 2 - e2 ** 2)


def _directions(d, grid):
    """Unit directions in the sum-zero hyperplane."""
    basis = np.linalg.svd(np.eye(d) - 1.0 / d)[0][:, : d - 1]
    if d == 2:
        return [basis[:, 0]]
    if d == 3:
        ang = np.linspace(0, np.pi, grid, endpoint=False)
        return [np.cos(a) * basis[:, 0] + np.sin(a) * basis[:, 1] for a in ang]
    dirs = []
    for i in range(d):
        for j in range(i + 1, d):
            v = np.zeros(d)
            v[i], v[j] = 1, -1
            dirs.append(v / math.sqrt(2))
    return dirs


def _simplex_interior(d, grid):
    pts = []
    for c in np.ndindex(*(grid,) * (d - 1)):
        v = (np.array(list(c) + [0]) + 1.0) / (grid + 1)
        v[-1] = 1 - v[:-1].sum()
        if v[-1] > 0.5 / (grid + 1):
            pts.append(v)
    return pts


def signal_decay_ratio_sup(d, xi, grid=101, full_simplex=False, eps=(1e-2, 1e-3, 1e-4)):
    """Numerical supremum of I(X;Z)/I(X;Y) over small input perturbations.

    Y -> Z is the d-ary symmetric channel with parameter ``xi``; X is a fair
    bit whose two rows straddle an average law p of Y by +- eps * delta.
    For d = 2 p runs over an interior grid.  For d >= 3 p is uniform unless
    ``full_simplex`` is set, in which case p runs over an interior simplex
    grid as well.  Returns ``(sup, argmax_p)``.
    """
    if grid < 2 or len(eps) < 2:
        raise InvalidArgumentError("need at least two grid points and two eps values")
    if not 0 <= xi <= 1:
        raise InvalidArgumentError("xi must lie in [0, 1]")
    T = _symmetric_T(d, xi)
    if d == 2:
        ps = [np.array([t, 1 - t]) for t in np.linspace(0, 1, grid + 2)[1:-1]]
    elif full_simplex:
        ps = _simplex_interior(d, grid)
    else:
        ps = [np.full(d, 1.0 / d)]
    dirs = _directions(d, grid)
    best, arg = -np.inf, None
    for p in ps:
        scale = float(p.min())
        for delta in dirs:
            r = _extrapolated_ratio(p, delta * scale, T, eps)
            if r > best:
                best, arg = r, p
    return float(best), arg


def chi2_contraction(p, T):
    """Exact eps -> 0 limit: the largest chi-square contraction of T at p."""
    p = np.asarray(p, dtype=float)
    T = np.asarray(T, dtype=float)
    d = p.size
    q = p @ T
    basis = np.linalg.svd(np.eye(d) - 1.0 / d)[0][:, : d - 1]
    num = basis.T @ T @ np.diag(1 / q) @ T.T @ basis
    den = basis.T @ np.diag(1 / p) @ basis
    return float(sla.eigh(num, den, eigvals_only=True)[-1])


def _b0_joint(box, scheme):
    """Pr(a_0 = j, beta = n | b = 0) and its derivative with respect to V.

    V = Pr(B - A = 0 | x = 0, y = 0); raising V lowers Pr(B - A = d - 1 | 0, 0)
    by the same amount.  Setting x = 0 means every dit equals a_0.
    """
    d, k = scheme.d, scheme.k
    m = scheme.marginal_array
    P = guess_channel(box, scheme, 0).matrix * m[0][:, None]
    w = np.prod(m, axis=0)            # w_j = prod_k Pr(a_k = j)
    dP = np.zeros((d, d))
    for j in range(d):
        dP[j, j] += w[j]
        dP[j, (j - 1) % d] -= w[j]
    return P, dP


def hessian_d2I(box, scheme: RacScheme) -> float:
    """d^2 I / dV^2 in bits, any (d, k) and any marginals.

    Only the b = 0 term of I depends on V, and P(a_0, beta | b = 0) is linear
    in V, so the second derivative is (sum P'^2/P - sum Q'^2/Q)/ln 2 with Q
    the beta marginal.
    """
    P, dP = _b0_joint(box, scheme)
    Q, dQ = P.sum(axis=0), dP.sum(axis=0)
    if np.any((P <= 0) & (dP != 0)) or np.any((Q <= 0) & (dQ != 0)):
        raise SingularInputError("a probability in the second derivative vanishes")
    m1 = dP != 0
    m2 = dQ != 0
    return float(((dP[m1] ** 2 / P[m1]).sum() - (dQ[m2] ** 2 / Q[m2]).sum()) / math.log(2))


def hessian_d2I_2x2(box, scheme: RacScheme) -> float:
    """The same derivative written out term by term for d = k = 2."""
    if (scheme.d, scheme.k) != (2, 2):
        raise InvalidArgumentError("explicit form is for d = k = 2")
    m = scheme.marginal_array
    P, _ = _b0_joint(box, scheme)
    Q = P.sum(axis=0)
    if np.any(P <= 0) or np.any(Q <= 0):
        raise SingularInputError("a probability in the second derivative vanishes")
    w0 = m[0, 0] * m[1, 0]
    w1 = m[0, 1] * m[1, 1]
    val = (-(1 / Q[0] + 1 / Q[1]) * (w0 - w1) ** 2
           + w0 ** 2 * (1 / P[0, 0] + 1 / P[0, 1])
           + w1 ** 2 * (1 / P[1, 0] + 1 / P[1, 1]))
    return float(val / math.log(2))


def finite_difference_d2I(box, scheme: RacScheme, h=1e-4) -> float:
    """Central second difference of I along V, using marginal-preserving shifts."""
    from .nsbox import shift_difference_mass

    def f(t):
        return information_gain(shift_difference_mass(box, 0, 0, t), scheme).total

    return (f(h) - 2 * f(0.0) + f(-h)) / h ** 2


def hessian_uniform(box, d, k) -> float:
    """Closed form at uniform marginals: d^-2k/ln2 sum_n (1/P_nn + 1/P_n,n-1)."""
    scheme = RacScheme.uniform(d, k)
    P, _ = _b0_joint(box, scheme)
    idx = np.arange(d)
    a, b = P[idx, idx], P[idx, (idx - 1) % d]
    if np.any(a <= 0) or np.any(b <= 0):
        raise SingularInputError("a probability in the second derivative vanishes")
    return float((1 / a + 1 / b).sum() / d ** (2 * k) / math.log(2))


def success_prob_from_xi(d, xi):
    return ((d - 1) * xi + 1) / d


def xi_from_success_prob(d, p):
    return (d * p - 1) / (d - 1)

