"""Random-access-code encoding, decoding and the induced guess channel.

Alice holds dits a_0..a_{k-1}; she feeds x_i = a_i - a_0 into her half of the
box and sends alpha = A - a_0.  Bob, wanting a_b, feeds y = e_b (zero for
b = 0) and guesses beta = B - alpha.  Whenever B - A = x.y the guess is right.

Alice's setting vector (x_1..x_{k-1}) is flattened to an integer with x_1 as
the least significant digit; Bob's setting index is just b.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .channel import ChannelMatrix
from .errors import InvalidArgumentError


@dataclass(frozen=True)
class Dit:
    value: int
    modulus: int

    def __post_init__(self):
        if self.modulus < 2:
            raise InvalidArgumentError("modulus must be at least 2")
        object.__setattr__(self, "value", int(self.value) % self.modulus)

    def _other(self, other):
        if isinstance(other, Dit):
            if other.modulus != self.modulus:
                raise InvalidArgumentError("modulus mismatch")
            return other.value
        return int(other)

    def __add__(self, other):
        return Dit(self.value + self._other(other), self.modulus)

    def __sub__(self, other):
        return Dit(self.value - self._other(other), self.modulus)

    def __neg__(self):
        return Dit(-self.value, self.modulus)

    def __int__(self):
        return self.value

    def __eq__(self, other):
        if isinstance(other, Dit):
            return self.value == other.value and self.modulus == other.modulus
        if isinstance(other, (int, np.integer)):
            return self.value == int(other)
        return NotImplemented

    def __hash__(self):
        return hash((self.value, self.modulus))


def _check_dk(d, k):
    if d < 2 or k < 2:
        raise InvalidArgumentError("need d >= 2 and k >= 2")


@dataclass(frozen=True)
class RacScheme:
    """Protocol parameters plus independent per-position input marginals."""

    d: int
    k: int
    marginals: tuple

    def __post_init__(self):
        _check_dk(self.d, self.k)
        m = np.asarray(self.marginals, dtype=float)
        if m.shape != (self.k, self.d):
            raise InvalidArgumentError(f"marginals must have shape ({self.k}, {self.d})")
        if np.any(m < 0) or np.any(np.abs(m.sum(axis=1) - 1) > 1e-12):
            raise InvalidArgumentError("each marginal must be a probability vector")
        object.__setattr__(self, "marginals", tuple(tuple(float(v) for v in row) for row in m))

    @classmethod
    def uniform(cls, d, k):
        return cls(d, k, np.full((k, d), 1.0 / d))

    @classmethod
    def binary(cls, p0, p1):
        """d = k = 2 scheme from Pr(a_0 = 0) and Pr(a_1 = 0)."""
        return cls(2, 2, [[p0, 1 - p0], [p1, 1 - p1]])

    @property
    def marginal_array(self):
        return np.array(self.marginals)

    @property
    def n_alice_settings(self):
        return self.d ** (self.k - 1)

    def setting_distribution(self):
        """Pr(x) over Alice's flattened settings induced by the marginals."""
        d, k = self.d, self.k
        m = self.marginal_array
        px = np.zeros(d ** (k - 1))
        for a in itertools.product(range(d), repeat=k):
            w = np.prod([m[i, a[i]] for i in range(k)])
            px[alice_setting(encode_alice(a, d, k), d)] += w
        return px


def _values(seq, d):
    out = []
    for v in seq:
        if isinstance(v, Dit):
            if v.modulus != d:
                raise InvalidArgumentError("modulus mismatch")
            v = v.value
        v = int(v)
        if not 0 <= v < d:
            raise InvalidArgumentError(f"dit value {v} outside [0, {d})")
        out.append(v)
    return out


def encode_alice(a, d, k):
    """x_i = a_i - a_0 mod d for i = 1..k-1."""
    a = _values(a, d)
    if len(a) != k:
        raise InvalidArgumentError(f"expected {k} dits, got {len(a)}")
    return tuple((a[i] - a[0]) % d for i in range(1, k))


def encode_bob(b, k):
    """Indicator vector of length k-1 for b >= 1, all zeros for b = 0."""
    if not 0 <= int(b) < k:
        raise InvalidArgumentError(f"b={b} outside [0, {k})")
    return tuple(1 if i == b else 0 for i in range(1, k))


def decode_guess(B_y, alpha, d=None):
    """beta = B_y - alpha mod d."""
    moduli = {v.modulus for v in (B_y, alpha) if isinstance(v, Dit)}
    if d is not None:
        moduli.add(d)
    if len(moduli) != 1:
        raise InvalidArgumentError("operands need one common modulus")
    d = moduli.pop()
    b, a = _values([B_y, alpha], d)
    return Dit(b - a, d)


def alice_message(a, A, d):
    """alpha = A - a_0 mod d."""
    return (int(A) - _values(a[:1], d)[0]) % d


def alice_setting(xvec, d):
    """Flatten (x_1..x_{k-1}) into an integer setting index."""
    return int(sum(int(v) * d ** i for i, v in enumerate(xvec)))


def alice_digits(x, d, k):
    """Inverse of ``alice_setting``."""
    return tuple((int(x) // d ** i) % d for i in range(k - 1))


def dot(xvec, yvec, d):
    return int(sum(int(a) * int(b) for a, b in zip(xvec, yvec))) % d


def rac_target(x, y, d, k):
    """x.y for flattened Alice setting x and Bob setting y."""
    return alice_digits(x, d, k)[y - 1] if y > 0 else 0


def guess_channel(box, scheme: RacScheme, i: int) -> ChannelMatrix:
    """Pr(beta = n | a_i = j, b = i) by exact enumeration of the other dits."""
    d, k = scheme.d, scheme.k
    if (box.d, box.k) != (d, k):
        raise InvalidArgumentError("box and scheme describe different scenarios")
    if not 0 <= i < k:
        raise InvalidArgumentError(f"setting {i} outside [0, {k})")
    m = scheme.marginal_array
    diff = box.difference_probs()            # (D, k, d): Pr(B - A = delta | x, y)
    joint = np.zeros((d, d))
    for a in itertools.product(range(d), repeat=k):
        w = np.prod([m[l, a[l]] for l in range(k) if l != i])
        if w == 0.0:
            continue
        x = alice_setting(encode_alice(a, d, k), d)
        # beta = n  <=>  B - A = n - a_0
        joint[a[i]] += w * np.roll(diff[x, i], a[0])
    return ChannelMatrix(joint)
