"""Moment-matrix relaxations of the quantum set for the RAC Bell functional.

Rows and columns of the certificate Gamma are indexed by projector words.
Entry (i, j) is the moment <O_i^T O_j>.  Alice's and Bob's projectors
commute, so every entry reduces to a pair (alice word, bob word); words are
shortened with E^2 = E and E E' = 0 for distinct outcomes of one setting.
Cells sharing a reduced pair (up to joint reversal, which is what the real
part of the moment matrix sees) carry one variable.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps

from . import sdp
from .errors import BudgetExceededError, InvalidArgumentError
from .infotheory import gain_unbiased
from .protocol import alice_digits

log = logging.getLogger(__name__)

ZERO = -1
ONE = -2
DEFAULT_BUDGET = 300
AB = "1+AB"


@dataclass(frozen=True)
class OperatorLabel:
    """A projector word: Alice letters ``(x, A)`` followed by Bob letters ``(y, B)``."""

    alice: tuple = ()
    bob: tuple = ()

    @property
    def kind(self):
        if not self.alice and not self.bob:
            return "identity"
        if not self.bob:
            return "alice"
        if not self.alice:
            return "bob"
        return "product"

    def __str__(self):
        parts = [f"A{x}{a}" for x, a in self.alice] + [f"B{y}{b}" for y, b in self.bob]
        return "".join(parts) or "1"


def parse_level(level):
    if isinstance(level, str):
        s = level.strip().upper()
        if s == "1+AB":
            return AB
        if s.isdigit():
            level = int(s)
        else:
            raise InvalidArgumentError(f"unsupported level {level!r}")
    if isinstance(level, (int, np.integer)) and not isinstance(level, bool) and level >= 1:
        return int(level)
    raise InvalidArgumentError(f"unsupported level {level!r}")


def _check_dk(d, k):
    if int(d) != d or int(k) != k or d < 2 or k < 2:
        raise InvalidArgumentError("need integers d >= 2 and k >= 2")


def _letters(n_settings, d):
    return [(s, o) for s in range(n_settings) for o in range(d - 1)]


def _reduced_words(letters, length):
    """Words with no two adjacent letters from the same setting."""
    if length == 0:
        return [()]
    out = []
    for w in itertools.product(letters, repeat=length):
        if all(w[i][0] != w[i + 1][0] for i in range(length - 1)):
            out.append(w)
    return out


def build_operator_set(d, k, level=1):
    """Ordered operator labels: identity, Alice, Bob, then products."""
    _check_dk(d, k)
    level = parse_level(level)
    A = _letters(d ** (k - 1), d)
    B = _letters(k, d)
    ops = [OperatorLabel()]
    ops += [OperatorLabel((a,), ()) for a in A]
    ops += [OperatorLabel((), (b,)) for b in B]
    if level == AB:
        ops += [OperatorLabel((a,), (b,)) for a in A for b in B]
    elif level >= 2:
        for total in range(2, level + 1):
            for la in range(total, -1, -1):
                for wa in _reduced_words(A, la):
                    for wb in _reduced_words(B, total - la):
                        ops.append(OperatorLabel(wa, wb))
    return ops


def operator_count(d, k, level=1):
    """Matrix dimension without materializing the labels (1 and 1+AB only)."""
    level = parse_level(level)
    D = d ** (k - 1)
    n1 = 1 + (d - 1) * (D + k)
    if level == 1:
        return n1
    if level == AB:
        return n1 + (d - 1) ** 2 * D * k
    return len(build_operator_set(d, k, level))


def _reduce(word):
    out = []
    for s in word:
        if out and out[-1][0] == s[0]:
            if out[-1] == s:
                continue
            return None
        out.append(s)
    return tuple(out)


def moment_key(left: OperatorLabel, right: OperatorLabel):
    """Canonical reduced pair for <left^T right>, or None when it vanishes."""
    a = _reduce(left.alice[::-1] + right.alice)
    if a is None:
        return None
    b = _reduce(left.bob[::-1] + right.bob)
    if b is None:
        return None
    return min((a, b), (a[::-1], b[::-1]))


@dataclass(eq=False)
class MomentProblem:
    d: int
    k: int
    level: object
    labels: list
    var_index: np.ndarray          # dim x dim, symmetric; ZERO / ONE / variable id
    classes: list                  # variable id -> list of upper-triangle cells
    keys: list                     # variable id -> canonical moment key
    objective: np.ndarray | None = None
    _pos: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self):
        return len(self.labels)

    @property
    def n_vars(self):
        return len(self.classes)

    def index(self, label):
        return self._pos[label]

    def alice_index(self, x, a):
        return self._pos[OperatorLabel(((x, a),), ())]

    def bob_index(self, y, b):
        return self._pos[OperatorLabel((), ((y, b),))]

    def constant_cells(self):
        iu, ju = np.triu_indices(self.dim)
        v = self.var_index[iu, ju]
        sel = v < 0
        return [((int(i), int(j)), 0.0 if c == ZERO else 1.0) for i, j, c in zip(iu[sel], ju[sel], v[sel])]

    @property
    def equalities(self):
        """Linear forms over upper-triangle cells, each as ``({cell: coeff}, rhs)``."""
        rows = [({cell: 1.0}, val) for cell, val in self.constant_cells()]
        for members in self.classes:
            rep = members[0]
            rows += [({cell: 1.0, rep: -1.0}, 0.0) for cell in members[1:]]
        return rows

    def joint_form(self, x, y, A, B):
        """Pr(A, B | x, y) as a linear form over cells.

        The dropped outcome d-1 is restored by completeness; constants sit on
        cell (0, 0), which always equals 1.
        """
        d = self.d
        top = d - 1
        As = [A] if A < top else list(range(top))
        Bs = [B] if B < top else list(range(top))
        sa = 1.0 if A < top else -1.0
        sb = 1.0 if B < top else -1.0
        form = {}

        def add(cell, c):
            form[cell] = form.get(cell, 0.0) + c

        # e.g. Pr(top, B) = Pr(B) - sum_a Pr(a, B)
        if A == top and B == top:
            add((0, 0), 1.0)
        if A == top:
            for b in Bs:
                add((0, self.bob_index(y, b)), sb)
        if B == top:
            for a in As:
                add((0, self.alice_index(x, a)), sa)
        for a in As:
            for b in Bs:
                add((self.alice_index(x, a), self.bob_index(y, b)), sa * sb)
        return form

    @property
    def inequalities(self):
        """Non-negativity of all d^2 joint probabilities per setting pair."""
        rows = []
        for x in range(self.d ** (self.k - 1)):
            for y in range(self.k):
                for A in range(self.d):
                    for B in range(self.d):
                        rows.append(self.joint_form(x, y, A, B))
        return rows

    def form_to_matrix(self, form):
        """Symmetric F with <F, Gamma> equal to the linear form."""
        F = np.zeros((self.dim, self.dim))
        for (i, j), c in form.items():
            if i == j:
                F[i, i] += c
            else:
                F[i, j] += 0.5 * c
                F[j, i] += 0.5 * c
        return F

    def gamma_from_values(self, values):
        """Assemble Gamma from one value per variable."""
        values = np.asarray(values, dtype=float)
        G = np.zeros((self.dim, self.dim))
        mask = self.var_index >= 0
        G[mask] = values[self.var_index[mask]]
        G[self.var_index == ONE] = 1.0
        return G

    def values_from_gamma(self, gamma):
        return np.array([gamma[members[0]] for members in self.classes])

    def evaluate(self, form, gamma):
        return float(sum(c * gamma[cell] for cell, c in form.items()))

    def joint_table(self, gamma):
        """Reconstructed Pr(A, B | x, y) with shape (D, k, d, d)."""
        d, k = self.d, self.k
        out = np.zeros((d ** (k - 1), k, d, d))
        for x, y, A, B in itertools.product(range(d ** (k - 1)), range(k), range(d), range(d)):
            out[x, y, A, B] = self.evaluate(self.joint_form(x, y, A, B), gamma)
        return out

    def constraint_violation(self, gamma):
        """Largest violation of the identifications and constants by ``gamma``."""
        worst = 0.0
        for cell, val in self.constant_cells():
            worst = max(worst, abs(gamma[cell] - val))
        for members in self.classes:
            vals = np.array([gamma[c] for c in members])
            worst = max(worst, float(vals.max() - vals.min()))
        return worst


def build_constraints(d, k, level=1):
    """Moment problem with identifications, zeros and the unit corner (no objective)."""
    labels = build_operator_set(d, k, level)
    n = len(labels)
    var_index = np.empty((n, n), dtype=np.int64)
    classes, keys, ids = [], [], {}
    unit = ((), ())
    for i in range(n):
        for j in range(i, n):
            key = moment_key(labels[i], labels[j])
            if key is None:
                v = ZERO
            elif key == unit:
                v = ONE
            else:
                v = ids.get(key)
                if v is None:
                    v = ids[key] = len(classes)
                    classes.append([])
                    keys.append(key)
                classes[v].append((i, j))
            var_index[i, j] = var_index[j, i] = v
    return MomentProblem(d, k, parse_level(level), labels, var_index, classes, keys,
                         _pos={lab: i for i, lab in enumerate(labels)})


def build_objective(d, k, level=1, problem=None, target_offset=0):
    """Matrix C with Tr(C^T Gamma) = sum over settings of Pr(B - A = x.y).

    ``target_offset`` shifts the rewarded difference to x.y + offset, which
    is the same functional after relabelling Bob's outcomes.
    """
    mp = problem if problem is not None else build_constraints(d, k, level)
    C = np.zeros((mp.dim, mp.dim))
    for x in range(d ** (k - 1)):
        xs = alice_digits(x, d, k)
        for y in range(k):
            target = ((xs[y - 1] if y > 0 else 0) + target_offset) % d
            for A in range(d):
                C += mp.form_to_matrix(mp.joint_form(x, y, A, (A + target) % d))
    return C


def closed_form_level1(d, k):
    """Level-1 optimum from sum_y xi_y = sqrt(k) and uniform inputs."""
    return d ** (k - 1) * (k + (d - 1) * math.sqrt(k)) / d


def xi_from_objective(d, k, value):
    """Average noise parameter implied by a summed success probability."""
    D = d ** (k - 1)
    return (d * value / D - k) / (k * (d - 1))


@dataclass
class BoundResult:
    d: int
    k: int
    level: object
    objective: float
    xi: list
    gain: float
    status: str
    gap: float
    dim: int = 0
    n_vars: int = 0
    orientation: str = ""
    isotropic: bool = False
    certificate: dict = field(default_factory=dict)
    iterations: int = 0
    gamma: np.ndarray | None = field(default=None, repr=False)
    problem: MomentProblem | None = field(default=None, repr=False)

    @property
    def ic_bound(self):
        return math.log2(self.d)

    @property
    def ic_margin(self):
        return self.ic_bound - self.gain

    def to_json(self):
        return {
            "d": self.d,
            "k": self.k,
            "level": str(self.level),
            "objective": self.objective,
            "xi": list(self.xi),
            "gain": self.gain,
            "status": self.status,
            "gap": self.gap,
            "dim": self.dim,
            "n_vars": self.n_vars,
            "orientation": self.orientation,
            "isotropic": self.isotropic,
            "iterations": self.iterations,
            "certificate": self.certificate,
        }


def _form_rows(forms, n):
    """Sparse rows of vec(F) for a list of cell forms."""
    r, c, v = [], [], []
    for q, form in enumerate(forms):
        for (i, j), coef in form.items():
            if i == j:
                r.append(q); c.append(i * n + i); v.append(coef)
            else:
                r += [q, q]; c += [i * n + j, j * n + i]; v += [0.5 * coef, 0.5 * coef]
    return sps.csr_matrix((v, (r, c)), shape=(len(forms), n * n))


def primal_sdp(mp: MomentProblem, C):
    """Gamma as the primal matrix; inequalities get one slack each."""
    n = mp.dim
    eq = mp.equalities
    ineq = mp.inequalities
    A = sps.vstack([_form_rows([f for f, _ in eq], n), _form_rows(ineq, n)], format="csr")
    b = np.concatenate([[r for _, r in eq], np.zeros(len(ineq))])
    G = sps.vstack([sps.csr_matrix((len(eq), len(ineq))), -sps.identity(len(ineq))], format="csr")
    return sdp.SdpProblem(C, A, b, sense="max", G=G, c_lin=np.zeros(len(ineq)), n_ineq=len(ineq))


def dual_sdp(mp: MomentProblem, C):
    """Gamma = F0 + sum_t v_t F_t as the dual slack; free variables become y.

    Returns the problem and the constant part of the objective.
    """
    n = mp.dim
    F0 = (mp.var_index == ONE).astype(float)
    r, c, vals = [], [], []
    b = np.zeros(mp.n_vars)
    for t, members in enumerate(mp.classes):
        for (i, j) in members:
            if i == j:
                r.append(t); c.append(i * n + i); vals.append(-1.0)
                b[t] += C[i, i]
            else:
                r += [t, t]; c += [i * n + j, j * n + i]; vals += [-1.0, -1.0]
                b[t] += C[i, j] + C[j, i]
    A = sps.csr_matrix((vals, (r, c)), shape=(mp.n_vars, n * n))
    c0 = float(np.sum(C * F0))
    ineq = mp.inequalities
    h = np.zeros(len(ineq))
    gr, gc, gv = [], [], []
    for w, form in enumerate(ineq):
        for cell, coef in form.items():
            v = mp.var_index[cell]
            if v == ONE:
                h[w] += coef
            elif v >= 0:
                gr.append(int(v)); gc.append(w); gv.append(-coef)
    G = sps.csr_matrix((gv, (gr, gc)), shape=(mp.n_vars, len(ineq)))
    return sdp.SdpProblem(F0, A, b, sense="min", G=G, c_lin=h), c0


def _orientation_sizes(mp):
    n_ineq = mp.d ** (mp.k - 1) * mp.k * mp.d ** 2
    n_cells = mp.dim * (mp.dim + 1) // 2
    return n_cells - mp.n_vars + n_ineq, mp.n_vars


def solve_level(d, k, level=1, tol=1e-7, budget=DEFAULT_BUDGET, allow_oversize=False,
                orientation="auto", max_iter=200, predictor_corrector=False) -> BoundResult:
    """Maximize the summed success probability over the level's certificate."""
    _check_dk(d, k)
    level = parse_level(level)
    dim = operator_count(d, k, level)
    if dim > budget and not allow_oversize:
        raise BudgetExceededError(dim, budget)
    mp = build_constraints(d, k, level)
    C = build_objective(d, k, level, problem=mp)
    mp.objective = C
    if orientation == "auto":
        m_primal, m_dual = _orientation_sizes(mp)
        orientation = "primal" if m_primal <= m_dual else "dual"
    log.info("d=%d k=%d level=%s dim=%d vars=%d orientation=%s", d, k, level, dim, mp.n_vars, orientation)

    if orientation == "primal":
        prob = primal_sdp(mp, C)
        sol = sdp.solve(prob, tol=tol, max_iter=max_iter, predictor_corrector=predictor_corrector)
        gamma = sol.X
        value = float(np.sum(C * gamma))
    elif orientation == "dual":
        prob, c0 = dual_sdp(mp, C)
        sol = sdp.solve(prob, tol=tol, max_iter=max_iter, predictor_corrector=predictor_corrector)
        gamma = mp.gamma_from_values(sol.y)
        value = c0 + float(prob.b @ sol.y)
    else:
        raise InvalidArgumentError(f"unknown orientation {orientation!r}")

    cert = sdp.check_certificate(prob, sol)
    D = d ** (k - 1)
    table = mp.joint_table(gamma)
    succ = np.zeros((D, k))
    for x in range(D):
        xs = alice_digits(x, d, k)
        for y in range(k):
            t = xs[y - 1] if y > 0 else 0
            succ[x, y] = sum(table[x, y, A, (A + t) % d] for A in range(d))
    xi = [float((d * succ[:, y].mean() - 1) / (d - 1)) for y in range(k)]
    cert["min_joint_probability"] = float(table.min())
    cert["gamma_min_eig"] = float(np.linalg.eigvalsh(gamma)[0])
    xi_bar = min(max(xi_from_objective(d, k, value), 0.0), 1.0)
    return BoundResult(
        d=d, k=k, level=level, objective=value, xi=xi,
        gain=gain_unbiased(d, k, xi_bar),
        status=sol.status, gap=float(sol.gap), dim=dim, n_vars=mp.n_vars,
        orientation=orientation, isotropic=bool(max(xi) - min(xi) <= 1e-4),
        certificate=cert, iterations=sol.iterations, gamma=gamma, problem=mp,
    )


def _numerical_rank(M, rank_tol):
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rank_tol * s[0]))


def stopping_criterion(gamma, d, k, level=AB, rank_tol=1e-6):
    """Rank-loop test of a 1+AB certificate against its per-setting sub-blocks."""
    if gamma is None:
        raise InvalidArgumentError("no solved certificate supplied")
    if parse_level(level) != AB:
        raise InvalidArgumentError("the rank loop is defined here for the 1+AB level")
    labels = build_operator_set(d, k, AB)
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (len(labels), len(labels)):
        raise InvalidArgumentError("certificate does not match the 1+AB operator set")
    full = _numerical_rank(gamma, rank_tol)
    base = [i for i, lab in enumerate(labels) if lab.kind != "product"]
    sub = {}
    for X in range(d ** (k - 1)):
        for Y in range(k):
            idx = base + [i for i, lab in enumerate(labels)
                          if lab.kind == "product" and lab.alice[0][0] == X and lab.bob[0][0] == Y]
            sub[(X, Y)] = _numerical_rank(gamma[np.ix_(idx, idx)], rank_tol)
    return {"rank": full, "sub_ranks": sub, "loop": all(r == full for r in sub.values()),
            "rank_tol": rank_tol}


def family_partition(d, k, level=AB):
    """Cell partition from the listed identification families, via union-find.

    This enumerates the rules one by one (unit corner, orthogonality zeros,
    idempotence, and the seven product families) rather than reducing words,
    so it serves as an independent check of ``build_constraints``.
    Returns ``(var_index, n_vars)`` with the same ZERO / ONE conventions.
    """
    level = parse_level(level)
    if level not in (1, AB):
        raise InvalidArgumentError("families are listed for levels 1 and 1+AB only")
    labels = build_operator_set(d, k, level)
    pos = {lab: i for i, lab in enumerate(labels)}
    n = len(labels)
    parent = list(range(n * n + 2))
    Z, O = n * n, n * n + 1

    def cell(i, j):
        return min(i, j) * n + max(i, j)

    def find(u):
        while parent[u] != u:
            parent[u] = parent[parent[u]]
            u = parent[u]
        return u

    def union(u, v):
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[max(ru, rv)] = min(ru, rv)

    A = _letters(d ** (k - 1), d)
    B = _letters(k, d)
    I = 0
    ia = {a: pos[OperatorLabel((a,), ())] for a in A}
    ib = {b: pos[OperatorLabel((), (b,))] for b in B}
    union(cell(I, I), O)
    for letters, idx in ((A, ia), (B, ib)):
        for p in letters:
            union(cell(idx[p], idx[p]), cell(I, idx[p]))
            for q in letters:
                if p != q and p[0] == q[0]:
                    union(cell(idx[p], idx[q]), Z)
    if level == AB:
        iab = {(a, b): pos[OperatorLabel((a,), (b,))] for a in A for b in B}
        for a in A:
            for b in B:
                ab = iab[(a, b)]
                union(cell(ab, ab), cell(I, ab))
                # 1,ab = a,ab = a,b = b,ab
                union(cell(I, ab), cell(ia[a], ab))
                union(cell(ia[a], ab), cell(ia[a], ib[b]))
                union(cell(ib[b], ab), cell(ia[a], ib[b]))
                for a2 in A:
                    if a2 == a:
                        continue
                    a2b = iab[(a2, b)]
                    if a2[0] == a[0]:
                        union(cell(ia[a], a2b), Z)
                        for b2 in B:
                            union(cell(ab, iab[(a2, b2)]), Z)
                        continue
                    # ab,a'b = a,a'b = a',ab
                    union(cell(ab, a2b), cell(ia[a], a2b))
                    union(cell(ia[a], a2b), cell(ia[a2], ab))
                for b2 in B:
                    if b2 == b:
                        continue
                    ab2 = iab[(a, b2)]
                    if b2[0] == b[0]:
                        union(cell(ib[b], ab2), Z)
                        for a2 in A:
                            union(cell(ab, iab[(a2, b2)]), Z)
                        continue
                    # ab,ab' = b,ab' = b',ab
                    union(cell(ab, ab2), cell(ib[b], ab2))
                    union(cell(ib[b], ab2), cell(ib[b2], ab))
    var_index = np.empty((n, n), dtype=np.int64)
    ids = {}
    for i in range(n):
        for j in range(i, n):
            r = find(cell(i, j))
            if r == find(Z):
                v = ZERO
            elif r == find(O):
                v = ONE
            else:
                v = ids.setdefault(r, len(ids))
            var_index[i, j] = var_index[j, i] = v
    return var_index, len(ids)


def same_partition(v1, v2):
    """Whether two var_index arrays describe the same cell partition."""
    if v1.shape != v2.shape:
        return False
    iu, ju = np.triu_indices(v1.shape[0])
    a, b = v1[iu, ju], v2[iu, ju]
    if not np.array_equal(a < 0, b < 0) or not np.array_equal(a[a < 0], b[a < 0]):
        return False
    fwd, back = {}, {}
    for x, y in zip(a[a >= 0], b[a >= 0]):
        if fwd.setdefault(x, y) != y or back.setdefault(y, x) != x:
            return False
    return True
