"""Dense primal-dual interior-point solver for semidefinite programs.

The solver works on the standard pair

    primal:  min  <C, X> + c_lin . x
             s.t. <D_q, X> + G_q . x = b_q,   X psd,  x >= 0
    dual:    max  b . y
             s.t. Z = C - sum_q y_q D_q psd,  z = c_lin - G^T y >= 0

where ``x`` is an optional block of nonnegative scalars.  Linear inequality
rows ``<H_w, X> >= 0`` are lifted into that block with one slack per row.

Search directions are HKM (X dZ Z^-1 symmetrised).  Every constraint only
touches a handful of cells of X, so row t of the Schur complement,
A(X D_t Z^-1), is built from a few outer products and a sparse gather.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .errors import InvalidArgumentError

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITER = "max_iter"
NUMERICAL_FAILURE = "numerical_failure"


@dataclass(eq=False)
class SdpProblem:
    """An SDP in primal standard form.

    ``A`` holds one row per constraint: row q is vec(D_q) in row-major order.
    ``G`` (m x p) couples the constraints to ``p`` nonnegative scalars whose
    objective weights are ``c_lin``.  ``n_ineq`` counts the trailing rows that
    came from lifted inequalities ``<H_w, X> >= 0``.
    """

    C: np.ndarray
    A: sps.csr_matrix
    b: np.ndarray
    sense: str = "min"
    G: sps.csr_matrix | None = None
    c_lin: np.ndarray | None = None
    n_ineq: int = 0

    def __post_init__(self):
        self.C = np.asarray(self.C, dtype=float)
        if self.C.ndim != 2 or self.C.shape[0] != self.C.shape[1] or self.C.shape[0] < 1:
            raise InvalidArgumentError("C must be a non-empty square matrix")
        if not np.allclose(self.C, self.C.T, atol=1e-12, rtol=0):
            raise InvalidArgumentError("C must be symmetric")
        if self.sense not in ("min", "max"):
            raise InvalidArgumentError(f"unknown sense {self.sense!r}")
        n = self.C.shape[0]
        self.A = sps.csr_matrix(self.A, dtype=float)
        self.b = np.asarray(self.b, dtype=float).ravel()
        if self.A.shape[1] != n * n or self.A.shape[0] != self.b.size:
            raise InvalidArgumentError("A must be (m, n*n) with m == len(b)")
        if self.G is None:
            self.G = sps.csr_matrix((self.b.size, 0))
            self.c_lin = np.zeros(0)
        else:
            self.G = sps.csr_matrix(self.G, dtype=float)
            self.c_lin = np.asarray(self.c_lin, dtype=float).ravel()
            if self.G.shape != (self.b.size, self.c_lin.size):
                raise InvalidArgumentError("G must be (m, p) with p == len(c_lin)")

    @classmethod
    def from_matrices(cls, C, equalities=(), inequalities=(), sense="min"):
        """Build a problem from dense (or scipy sparse) constraint matrices.

        ``equalities`` is an iterable of ``(D_q, b_q)``; ``inequalities`` an
        iterable of ``H_w`` meaning ``<H_w, X> >= 0``.
        """
        C = np.asarray(C, dtype=float)
        n = C.shape[0]
        rows, rhs = [], []
        for D, bq in equalities:
            rows.append(_vec_row(D, n))
            rhs.append(float(bq))
        m_eq = len(rows)
        for H in inequalities:
            rows.append(_vec_row(H, n))
            rhs.append(0.0)
        p = len(rows) - m_eq
        A = sps.vstack(rows, format="csr") if rows else sps.csr_matrix((0, n * n))
        G = None
        c_lin = None
        if p:
            G = sps.vstack([sps.csr_matrix((m_eq, p)), -sps.identity(p, format="csr")], format="csr")
            c_lin = np.zeros(p)
        return cls(C, A, np.array(rhs), sense=sense, G=G, c_lin=c_lin, n_ineq=p)

    @property
    def n(self):
        return self.C.shape[0]

    @property
    def m(self):
        return self.b.size

    @property
    def p(self):
        return self.c_lin.size

    @property
    def equalities(self):
        """Pairs ``(D_q, b_q)`` for the rows that are not lifted inequalities."""
        n = self.n
        out = []
        for q in range(self.m - self.n_ineq):
            out.append((self.A[q].toarray().reshape(n, n), float(self.b[q])))
        return out

    @property
    def inequalities(self):
        n = self.n
        return [self.A[q].toarray().reshape(n, n) for q in range(self.m - self.n_ineq, self.m)]

    def to_json(self):
        """Self-describing dump: C dense row-major, constraint rows as triplets."""
        A = self.A.tocoo()
        G = self.G.tocoo()
        return {
            "format": "racbounds-sdp-problem/1",
            "n": self.n,
            "m": self.m,
            "p": self.p,
            "sense": self.sense,
            "n_ineq": self.n_ineq,
            "C": self.C.tolist(),
            "b": self.b.tolist(),
            "A": {"row": A.row.tolist(), "col": A.col.tolist(), "data": A.data.tolist()},
            "G": {"row": G.row.tolist(), "col": G.col.tolist(), "data": G.data.tolist()},
            "c_lin": self.c_lin.tolist(),
        }

    @classmethod
    def from_json(cls, obj):
        n, m, p = obj["n"], obj["m"], obj["p"]
        A = sps.csr_matrix((obj["A"]["data"], (obj["A"]["row"], obj["A"]["col"])), shape=(m, n * n))
        G = sps.csr_matrix((obj["G"]["data"], (obj["G"]["row"], obj["G"]["col"])), shape=(m, p))
        return cls(np.array(obj["C"]), A, np.array(obj["b"]), sense=obj["sense"],
                   G=G if p else None, c_lin=np.array(obj["c_lin"]) if p else None,
                   n_ineq=obj.get("n_ineq", 0))


@dataclass(eq=False)
class SdpSolution:
    X: np.ndarray
    x: np.ndarray
    y: np.ndarray
    Z: np.ndarray
    z: np.ndarray
    primal_objective: float
    dual_objective: float
    gap: float
    residuals: dict = field(default_factory=dict)
    status: str = OPTIMAL
    iterations: int = 0

    @property
    def objective(self):
        return self.primal_objective

    def to_json(self):
        return {
            "format": "racbounds-sdp-solution/1",
            "status": self.status,
            "iterations": self.iterations,
            "primal_objective": self.primal_objective,
            "dual_objective": self.dual_objective,
            "gap": self.gap,
            "residuals": self.residuals,
            "X": self.X.tolist(),
            "x": self.x.tolist(),
            "y": self.y.tolist(),
            "Z": self.Z.tolist(),
            "z": self.z.tolist(),
        }


def _vec_row(D, n):
    if sps.issparse(D):
        D = sps.coo_matrix(D)
        if D.shape != (n, n):
            raise InvalidArgumentError("constraint matrix has the wrong shape")
        return sps.csr_matrix((D.data, (np.zeros_like(D.row), D.row * n + D.col)), shape=(1, n * n))
    D = np.asarray(D, dtype=float)
    if D.shape != (n, n):
        raise InvalidArgumentError("constraint matrix has the wrong shape")
    if not np.allclose(D, D.T, atol=1e-12, rtol=0):
        raise InvalidArgumentError("constraint matrices must be symmetric")
    return sps.csr_matrix(D.reshape(1, n * n))


class _CellOperator:
    """The constraint map restricted to the upper-triangle cells it touches."""

    def __init__(self, A, n):
        A = sps.csc_matrix(A)
        iu, ju = np.triu_indices(n)
        lower = A[:, ju * n + iu]
        upper = A[:, iu * n + ju]
        diag = iu == ju
        cells = (upper + lower).tocsc()
        # diagonal cells were added twice above
        scale = np.where(diag, 0.5, 1.0)
        cells = cells @ sps.diags(scale)
        used = np.flatnonzero(np.diff(cells.tocsc().indptr))
        self.P = sps.csr_matrix(cells[:, used])
        self.r = iu[used]
        self.c = ju[used]
        self.weight = np.where(self.r == self.c, 1.0, 2.0)
        self.n = n

    def apply(self, W):
        """<A_q, W> for every q (W need not be symmetric)."""
        return self.P @ (0.5 * (W[self.r, self.c] + W[self.c, self.r]))

    def adjoint(self, y):
        v = (self.P.T @ y) / self.weight
        S = np.zeros((self.n, self.n))
        S[self.r, self.c] = v
        S[self.c, self.r] = v
        return S

    def schur(self, X, Zi, block=256):
        """M[t, s] = <A_s, X A_t Zi>, one constraint row at a time.

        X A_t Zi is a sum of a few rank-one terms, so each row costs a thin
        matrix product plus a gather over the touched cells.
        """
        n = self.n
        P = self.P
        PT = P.T.tocsr()
        flat_rc = self.r * n + self.c
        flat_cr = self.c * n + self.r
        m = P.shape[0]
        M = np.empty((m, m))
        indptr, cols, vals = P.indptr, P.indices, P.data
        g = np.empty((min(block, m), flat_rc.size))
        for start in range(0, m, block):
            stop = min(start + block, m)
            for t in range(start, stop):
                u = cols[indptr[t]:indptr[t + 1]]
                p = 0.5 * vals[indptr[t]:indptr[t + 1]]
                R = np.concatenate([self.r[u], self.c[u]])
                Cc = np.concatenate([self.c[u], self.r[u]])
                W = (X[:, R] * np.concatenate([p, p])) @ Zi[Cc, :]
                W = W.ravel()
                g[t - start] = 0.5 * (W[flat_rc] + W[flat_cr])
            M[start:stop] = np.asarray(g[: stop - start] @ PT)
        return 0.5 * (M + M.T)


def _max_step(L, dX):
    """Largest alpha with L L^T + alpha dX psd (inf when dX is psd)."""
    T = sla.solve_triangular(L, dX, lower=True, check_finite=False)
    T = sla.solve_triangular(L, T.T, lower=True, check_finite=False)
    lam = np.linalg.eigvalsh(0.5 * (T + T.T))[0]
    return np.inf if lam >= 0 else -1.0 / lam


def _max_step_lin(v, dv):
    neg = dv < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-v[neg] / dv[neg]))


def _chol(S):
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        return None


def _schur_solver(M, rescue=True):
    """Factor the Schur matrix; near optimality it can lose definiteness to
    rounding, so retry with a tiny diagonal shift and finally fall back to LU."""
    scale = float(np.max(np.abs(np.diag(M)))) or 1.0
    for shift in (0.0, 1e-14, 1e-12) if rescue else (0.0,):
        try:
            cf = sla.cho_factor(M + shift * scale * np.eye(M.shape[0]), lower=True, check_finite=False)
            return lambda r: sla.cho_solve(cf, r, check_finite=False)
        except sla.LinAlgError:
            pass
    if not rescue:
        return None
    lu = sla.lu_factor(M, check_finite=False)
    if not np.all(np.isfinite(lu[0])) or np.min(np.abs(np.diag(lu[0]))) <= 1e-14 * scale:
        return None
    return lambda r: sla.lu_solve(lu, r, check_finite=False)


def _consistent(problem, tol):
    """Whether A vec(X) + G x = b has any solution at all (PSD ignored)."""
    AG = sps.hstack([problem.A, problem.G]).tocsr()
    sol = spla.lsqr(AG, problem.b, atol=1e-14, btol=1e-14, iter_lim=20 * AG.shape[0] + 100)
    res = np.linalg.norm(AG @ sol[0] - problem.b)
    return res <= tol * (1.0 + np.linalg.norm(problem.b))


def solve(problem: SdpProblem, tol=1e-7, max_iter=200, predictor_corrector=False,
          step_fraction=0.98, dump_path=None) -> SdpSolution:
    """Solve ``problem`` by an infeasible primal-dual path-following method.

    Stops when the relative duality gap and both relative feasibility
    residuals are at most ``tol``.  The status is reported as found; values
    from a run that did not converge are returned untouched.
    """
    n, m, p = problem.n, problem.m, problem.p
    sign = -1.0 if problem.sense == "max" else 1.0
    # iterate on objective data of unit norm; positive rescalings of C then
    # follow identical paths and only the dual side is scaled back at the end
    cscale = float(np.sqrt(np.sum(problem.C ** 2) + np.sum(problem.c_lin ** 2))) or 1.0
    C = sign * problem.C / cscale
    c_lin = sign * problem.c_lin / cscale
    b = problem.b
    G = problem.G.tocsr()
    GT = G.T.tocsr()
    op = _CellOperator(problem.A, n)

    if m == 0:
        raise InvalidArgumentError("problem has no constraints")

    row_norms = np.sqrt(np.asarray(op.P.multiply(op.P).sum(axis=1)).ravel()
                        + np.asarray(G.multiply(G).sum(axis=1)).ravel())
    normC = np.linalg.norm(C) + np.linalg.norm(c_lin)
    normb = np.linalg.norm(b)
    zeta = max(10.0, np.sqrt(n), float(np.max((1.0 + np.abs(b)) / (1.0 + row_norms))))
    eta = max(10.0, np.sqrt(n), float(np.max(row_norms)), normC)
    X = zeta * np.eye(n)
    Z = eta * np.eye(n)
    x = zeta * np.ones(p)
    z = eta * np.ones(p)
    y = np.zeros(m)
    nu = n + p

    status = MAX_ITER
    it = 0
    alpha_p = alpha_d = 0.0
    info = {}
    for it in range(1, max_iter + 1):
        Rp = b - op.apply(X) - G @ x
        Rd = C - op.adjoint(y) - Z
        rd = c_lin - GT @ y - z
        pobj = float(np.sum(C * X) + c_lin @ x)
        dobj = float(b @ y)
        mu = (float(np.sum(X * Z)) + float(x @ z)) / nu
        pinf = np.linalg.norm(Rp) / (1.0 + normb)
        dinf = np.sqrt(np.sum(Rd * Rd) + rd @ rd) / (1.0 + normC)
        relgap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        info = {"primal_infeasibility": pinf, "dual_infeasibility": dinf, "relative_gap": relgap, "mu": mu}
        log.debug("iter %d pobj %.9g dobj %.9g gap %.2e pinf %.2e dinf %.2e", it, pobj, dobj, relgap, pinf, dinf)
        if relgap <= tol and pinf <= tol and dinf <= tol:
            status = OPTIMAL
            break
        if dinf <= tol and dobj > 1e10 * (1.0 + abs(pobj)) and pinf > tol:
            status = INFEASIBLE
            break

        LZ = _chol(Z)
        LX = _chol(X)
        if LZ is None or LX is None:
            log.warning("iterate left the cone at iteration %d", it)
            status = NUMERICAL_FAILURE
            break
        Zi = sla.cho_solve((LZ, True), np.eye(n), check_finite=False)
        Zi = 0.5 * (Zi + Zi.T)
        xz = x / z if p else x
        M = op.schur(X, Zi)
        if p:
            M += (G @ sps.diags(xz) @ GT).toarray()
        # at the starting point a singular M means dependent or inconsistent rows
        solve_M = _schur_solver(M, rescue=it > 1)
        if solve_M is None:
            if it == 1 and not _consistent(problem, 1e-8):
                status = INFEASIBLE
            else:
                status = NUMERICAL_FAILURE
            break

        XRdZi = X @ Rd @ Zi
        base = Rp + op.apply(XRdZi) + op.apply(X)
        if p:
            base = base + G @ (xz * rd) + G @ x

        def direction(target_psd, target_lin):
            # target_psd replaces sigma*mu*I in the complementarity equation
            TZi = target_psd @ Zi
            rhs = base - op.apply(TZi)
            if p:
                rhs = rhs - G @ (target_lin / z)
            dy = solve_M(rhs)
            dZ = Rd - op.adjoint(dy)
            dX = TZi - X - X @ dZ @ Zi
            dX = 0.5 * (dX + dX.T)
            if p:
                dz = rd - GT @ dy
                dx = target_lin / z - x - xz * dz
            else:
                dz = dx = np.zeros(0)
            return dX, dx, dy, dZ, dz

        def steps(dX, dx, dZ, dz):
            ap = min(_max_step(LX, dX), _max_step_lin(x, dx) if p else np.inf)
            ad = min(_max_step(LZ, dZ), _max_step_lin(z, dz) if p else np.inf)
            return min(1.0, step_fraction * ap), min(1.0, step_fraction * ad)

        eye = np.eye(n)
        if predictor_corrector:
            dX, dx, dy, dZ, dz = direction(np.zeros((n, n)), np.zeros(p))
            ap, ad = steps(dX, dx, dZ, dz)
            mu_aff = (np.sum((X + ap * dX) * (Z + ad * dZ)) + (x + ap * dx) @ (z + ad * dz)) / nu
            sigma = min(1.0, (mu_aff / mu) ** 3)
            corr = dX @ dZ
            dX, dx, dy, dZ, dz = direction(sigma * mu * eye - corr, sigma * mu - dx * dz)
        else:
            sigma = max(0.1, (1.0 - min(alpha_p, alpha_d)) ** 2) if it > 1 else 0.5
            dX, dx, dy, dZ, dz = direction(sigma * mu * eye, sigma * mu * np.ones(p))
        alpha_p, alpha_d = steps(dX, dx, dZ, dz)

        X = X + alpha_p * dX
        X = 0.5 * (X + X.T)
        x = x + alpha_p * dx
        y = y + alpha_d * dy
        Z = Z + alpha_d * dZ
        Z = 0.5 * (Z + Z.T)
        z = z + alpha_d * dz

    pobj = cscale * float(np.sum(C * X) + c_lin @ x)
    dobj = cscale * float(b @ y)
    sol = SdpSolution(
        X=X, x=x, y=sign * cscale * y, Z=cscale * Z, z=cscale * z,
        primal_objective=sign * pobj,
        dual_objective=sign * dobj,
        gap=sign * (pobj - dobj),
        residuals=info,
        status=status,
        iterations=it,
    )
    if status == NUMERICAL_FAILURE and dump_path is not None:
        with open(dump_path, "w") as fh:
            json.dump({"problem": problem.to_json(), "iterate": sol.to_json()}, fh)
    return sol


def check_certificate(problem: SdpProblem, solution: SdpSolution):
    """Recompute feasibility and gap from the raw problem data.

    Uses only ``problem.A``/``G`` in vec form and dense eigendecompositions,
    so it shares no code with the solver's cell-based Newton machinery.
    """
    n = problem.n
    X, x, y = solution.X, solution.x, solution.y
    sign = -1.0 if problem.sense == "max" else 1.0
    eq_res = problem.A @ X.reshape(-1) + problem.G @ x - problem.b
    # for a max problem the dual slack is A^T y - C
    S = sign * (problem.C - (problem.A.T @ y).reshape(n, n))
    S = 0.5 * (S + S.T)
    s_lin = sign * (problem.c_lin - problem.G.T @ y)
    pobj = float(np.sum(problem.C * X) + problem.c_lin @ x)
    dobj = float(problem.b @ y)
    scale = 1.0 + abs(pobj) + abs(dobj)
    return {
        "equality_residual": float(np.max(np.abs(eq_res))) if eq_res.size else 0.0,
        "primal_min_eig": float(np.linalg.eigvalsh(0.5 * (X + X.T))[0]),
        "primal_min_lin": float(np.min(x)) if x.size else 0.0,
        "dual_min_eig": float(np.linalg.eigvalsh(S)[0]),
        "dual_min_lin": float(np.min(s_lin)) if s_lin.size else 0.0,
        "dual_slack_residual": float(np.max(np.abs(S - solution.Z))),
        "gap": pobj - dobj,
        "relative_gap": abs(pobj - dobj) / scale,
    }
