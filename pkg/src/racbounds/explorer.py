"""Brute-force grid scans of the d = k = 2 RAC with quantum filtering.

A point is four success probabilities p_xy = Pr(B - A = xy | x, y) plus the
input marginals q0 = Pr(a_0 = 0), q1 = Pr(a_1 = 0).  Boxes are taken
unbiased, so the arcsin criterion decides quantum membership exactly.

The grid is cut into fixed flat-index chunks.  Each chunk reduces to a
partial aggregate and partials are merged in chunk order, which makes the
result independent of the worker count.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidArgumentError

log = logging.getLogger(__name__)

AXES = ("p00", "p01", "p10", "p11", "pa0", "pa1")
P_TSIRELSON = (2 + math.sqrt(2)) / 4
CASES = {
    "i": (1.0, 0.5, 1.0, 0.5),
    "ii": (P_TSIRELSON,) * 4,
    "iii": (P_TSIRELSON, P_TSIRELSON, 0.5, 0.5),
}
CSV_COLUMNS = ["p00", "p01", "p10", "p11", "pa0", "pa1", "chsh", "chsh_p1", "chsh_p2", "chsh_p3",
               "quantum", "local", "I0", "I1", "I"]
_SIGNS = np.array([[1, 1, 1, -1], [1, 1, -1, 1], [1, -1, 1, 1], [-1, 1, 1, 1]], dtype=float)
CHUNK = 1_000_000
HIST_CHSH = np.linspace(0.0, 4.0, 81)
HIST_I = np.linspace(0.0, 2.0, 101)


def default_workers():
    try:
        return max(1, int(os.environ.get("RACBOUNDS_WORKERS", "1")))
    except ValueError:
        return 1


@dataclass
class ScanConfig:
    resolution: int = 100
    fixed: dict = field(default_factory=dict)        # axis -> value
    window: dict = field(default_factory=dict)       # axis -> (lo, hi)
    isotropic: bool = False
    workers: int = field(default_factory=default_workers)
    checkpoint: str | None = None
    points_csv: str | None = None
    tie_tol: float = 1e-9
    max_argmax: int = 100_000
    chunk: int = CHUNK

    def __post_init__(self):
        if self.resolution < 2:
            raise InvalidArgumentError("resolution must be at least 2")
        for ax, lim in self.window.items():
            if ax not in AXES:
                raise InvalidArgumentError(f"unknown axis {ax!r}")
            lo, hi = lim
            if not 0 <= lo < hi <= 1:
                raise InvalidArgumentError(f"window for {ax} must satisfy 0 <= lo < hi <= 1")
        for ax, v in self.fixed.items():
            if ax not in AXES:
                raise InvalidArgumentError(f"unknown axis {ax!r}")
            if not 0 <= v <= 1:
                raise InvalidArgumentError(f"fixed value for {ax} outside [0, 1]")

    def axis_values(self, ax):
        if ax in self.fixed:
            return np.array([float(self.fixed[ax])])
        lo, hi = self.window.get(ax, (0.0, 1.0))
        return np.linspace(lo, hi, self.resolution)

    def grids(self):
        return [self.axis_values(ax) for ax in AXES]

    def refined(self, factor=4):
        """Same window with ``factor`` times as many intervals per axis.

        The coarse grid is a subset of the refined one.
        """
        return ScanConfig(**{**asdict(self), "resolution": factor * (self.resolution - 1) + 1})

    def fingerprint(self):
        keys = ("resolution", "fixed", "window", "isotropic", "tie_tol", "chunk")
        blob = json.dumps({k: getattr(self, k) for k in keys}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class ScanPoint:
    p00: float
    p01: float
    p10: float
    p11: float
    pa0: float
    pa1: float
    chsh: float
    chsh_p1: float
    chsh_p2: float
    chsh_p3: float
    quantum: bool
    local: bool
    I0: float
    I1: float
    I: float

    def row(self):
        return [getattr(self, c) for c in CSV_COLUMNS]


def _h(p):
    """Binary entropy in bits with 0 log 0 = 0, elementwise."""
    p = np.asarray(p, dtype=float)
    out = np.zeros_like(p)
    m = (p > 1e-15) & (p < 1 - 1e-15)
    q = p[m]
    out[m] = -(q * np.log2(q) + (1 - q) * np.log2(1 - q))
    return out


def _binary_mi(q, c0, c1):
    """I for input law (q, 1-q) through rows [c0, 1-c0] and [1-c1, c1]."""
    out0 = q * c0 + (1 - q) * (1 - c1)
    val = _h(out0) - q * _h(c0) - (1 - q) * _h(c1)
    return np.maximum(val, 0.0)


def gains(p00, p01, p10, p11, q0, q1):
    """(I0, I1) for the d = k = 2 RAC; works elementwise on arrays.

    Guessing a_0 uses setting y = 0 with x = a_1 - a_0, guessing a_1 uses
    y = 1; averaging over the other dit gives a binary channel per i.
    """
    c00 = q1 * p00 + (1 - q1) * p10
    c01 = (1 - q1) * p00 + q1 * p10
    c10 = q0 * p01 + (1 - q0) * p11
    c11 = q0 * p11 + (1 - q0) * p01
    return _binary_mi(q0, c00, c01), _binary_mi(q1, c10, c11)


def correlations(p00, p01, p10, p11):
    return np.stack([2 * np.asarray(p00) - 1, 2 * np.asarray(p01) - 1,
                     2 * np.asarray(p10) - 1, 1 - 2 * np.asarray(p11)], axis=-1)


def classify(C, tol=1e-9):
    """CHSH and partner values, arcsin-quantum flag and local flag."""
    chsh = np.abs(C @ _SIGNS.T)
    s = np.arcsin(np.clip(C, -1.0, 1.0))
    quantum = np.all(np.abs(s @ _SIGNS.T) <= math.pi + tol, axis=-1)
    local = np.all(chsh <= 2 + 1e-12, axis=-1)
    return chsh, quantum, local


def evaluate_point(p00, p01, p10, p11, pa0=0.5, pa1=0.5) -> ScanPoint:
    C = correlations(p00, p01, p10, p11)
    chsh, q, loc = classify(C[None])
    i0, i1 = gains(p00, p01, p10, p11, pa0, pa1)
    return ScanPoint(p00, p01, p10, p11, pa0, pa1, *map(float, chsh[0]), bool(q[0]), bool(loc[0]),
                     float(i0), float(i1), float(i0 + i1))


def tsirelson_gain():
    return evaluate_point(*CASES["ii"]).I


@dataclass
class Partial:
    chunk: int
    n_points: int = 0
    n_quantum: int = 0
    n_local: int = 0
    n_violations: int = 0
    max_I: float = -math.inf
    argmax: list = field(default_factory=list)   # rows of CSV_COLUMNS
    histogram: list = field(default_factory=list)   # sparse [i, j, count]
    pairs: list = field(default_factory=list)


def _chunk_points(grids, start, stop):
    shape = [g.size for g in grids]
    idx = np.unravel_index(np.arange(start, stop), shape)
    return [g[i] for g, i in zip(grids, idx)]


def _process_chunk(args):
    config, chunk_id, start, stop = args
    grids = config.grids()
    p00, p01, p10, p11, q0, q1 = _chunk_points(grids, start, stop)
    part = Partial(chunk_id, n_points=stop - start)
    keep = np.ones(p00.size, dtype=bool)
    if config.isotropic:
        keep &= np.abs((p00 + p10) - (p01 + p11)) <= 1e-9
    C = correlations(p00, p01, p10, p11)
    chsh, quantum, local = classify(C)
    keep &= quantum
    if not keep.any():
        return part, None
    sel = np.flatnonzero(keep)
    i0, i1 = gains(p00[sel], p01[sel], p10[sel], p11[sel], q0[sel], q1[sel])
    I = i0 + i1
    part.n_quantum = int(sel.size)
    part.n_local = int(local[sel].sum())
    part.n_violations = int((I > 1 + 1e-9).sum())
    part.max_I = float(I.max())
    top = np.flatnonzero(I >= part.max_I - config.tie_tol)[: config.max_argmax]
    cols = [p00[sel], p01[sel], p10[sel], p11[sel], q0[sel], q1[sel],
            chsh[sel, 0], chsh[sel, 1], chsh[sel, 2], chsh[sel, 3],
            np.ones(sel.size, dtype=bool), local[sel], i0, i1, I]
    part.argmax = [[_py(c[t]) for c in cols] for t in top]
    H, _, _ = np.histogram2d(chsh[sel, 0], I, bins=[HIST_CHSH, HIST_I])
    nz = np.argwhere(H > 0)
    part.histogram = [[int(i), int(j), int(H[i, j])] for i, j in nz]
    if config.isotropic:
        pr = np.unique(np.round(np.stack([chsh[sel, 0], I], axis=1), 12), axis=0)
        part.pairs = pr.tolist()
    rows = None
    if config.points_csv:
        rows = np.column_stack([np.asarray(c, dtype=float) for c in cols])
    return part, rows


def _py(v):
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    return float(v)


@dataclass
class ScanResult:
    config: dict
    n_points: int
    n_quantum: int
    n_local: int
    n_violations: int
    max_I: float
    argmax: list
    histogram: dict
    pairs: list = field(default_factory=list)

    @property
    def saturated(self):
        return self.max_I >= 1 - 1e-9

    def argmax_points(self):
        return [ScanPoint(*r) for r in self.argmax]

    def to_json(self):
        return {
            "max_I": self.max_I,
            "saturated": self.saturated,
            "argmax": [dict(zip(CSV_COLUMNS, r)) for r in self.argmax],
            "histogram": self.histogram,
            "n_points": self.n_points,
            "n_quantum": self.n_quantum,
            "n_local": self.n_local,
            "n_violations": self.n_violations,
            "config": self.config,
        }


def _merge(parts, config):
    parts = sorted(parts, key=lambda p: p.chunk)
    best = max((p.max_I for p in parts), default=-math.inf)
    argmax = [r for p in parts if p.max_I >= best - config.tie_tol
              for r in p.argmax if r[-1] >= best - config.tie_tol][: config.max_argmax]
    hist = np.zeros((HIST_CHSH.size - 1, HIST_I.size - 1), dtype=np.int64)
    pairs = set()
    for p in parts:
        for i, j, c in p.histogram:
            hist[i, j] += c
        pairs.update(map(tuple, p.pairs))
    return ScanResult(
        config={k: v for k, v in asdict(config).items() if k not in ("checkpoint", "points_csv", "workers")},
        n_points=sum(p.n_points for p in parts),
        n_quantum=sum(p.n_quantum for p in parts),
        n_local=sum(p.n_local for p in parts),
        n_violations=sum(p.n_violations for p in parts),
        max_I=best,
        argmax=argmax,
        histogram={"chsh_edges": HIST_CHSH.tolist(), "I_edges": HIST_I.tolist(), "counts": hist.tolist()},
        pairs=sorted(pairs),
    )


def _load_checkpoint(config):
    if not config.checkpoint or not os.path.exists(config.checkpoint):
        return {}
    with open(config.checkpoint) as fh:
        data = json.load(fh)
    if data.get("fingerprint") != config.fingerprint():
        log.warning("checkpoint %s belongs to a different scan; ignoring it", config.checkpoint)
        return {}
    return {p["chunk"]: Partial(**p) for p in data["parts"]}


def _save_checkpoint(config, done):
    tmp = config.checkpoint + ".tmp"
    with open(tmp, "w") as fh:
        json.dump({"fingerprint": config.fingerprint(),
                   "parts": [asdict(done[c]) for c in sorted(done)]}, fh)
    os.replace(tmp, config.checkpoint)


def scan(config: ScanConfig) -> ScanResult:
    """Run the grid described by ``config`` and reduce it."""
    total = int(np.prod([g.size for g in config.grids()]))
    bounds = [(i, s, min(s + config.chunk, total)) for i, s in enumerate(range(0, total, config.chunk))]
    done = _load_checkpoint(config)
    todo = [(config, i, s, e) for i, s, e in bounds if i not in done]
    writer = fh = None
    if config.points_csv:
        # points are only complete for a fresh run
        done = {}
        todo = [(config, i, s, e) for i, s, e in bounds]
        fh = open(config.points_csv, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
    try:
        if config.workers > 1 and len(todo) > 1:
            with ProcessPoolExecutor(max_workers=config.workers) as pool:
                results = pool.map(_process_chunk, todo)
                _collect(results, done, config, writer)
        else:
            _collect(map(_process_chunk, todo), done, config, writer)
    finally:
        if fh is not None:
            fh.close()
    return _merge(done.values(), config)


def _collect(results, done, config, writer):
    # pool.map yields in submission order, so CSV rows follow chunk order
    for part, rows in results:
        done[part.chunk] = part
        if writer is not None and rows is not None:
            for r in rows:
                writer.writerow([repr(float(v)) if i < 10 or i > 11 else bool(v) for i, v in enumerate(r)])
        if config.checkpoint:
            _save_checkpoint(config, done)


def iter_points(config: ScanConfig):
    """Stream every retained (quantum, and isotropic if asked) point."""
    total = int(np.prod([g.size for g in config.grids()]))
    grids = config.grids()
    for start in range(0, total, config.chunk):
        stop = min(start + config.chunk, total)
        p00, p01, p10, p11, q0, q1 = _chunk_points(grids, start, stop)
        C = correlations(p00, p01, p10, p11)
        chsh, quantum, local = classify(C)
        keep = quantum.copy()
        if config.isotropic:
            keep &= np.abs((p00 + p10) - (p01 + p11)) <= 1e-9
        i0, i1 = gains(p00, p01, p10, p11, q0, q1)
        for t in np.flatnonzero(keep):
            yield ScanPoint(float(p00[t]), float(p01[t]), float(p10[t]), float(p11[t]),
                            float(q0[t]), float(q1[t]), *map(float, chsh[t]), True, bool(local[t]),
                            float(i0[t]), float(i1[t]), float(i0[t] + i1[t]))


def _with(config, **kw):
    return ScanConfig(**{**asdict(config), **kw})


def scan_symmetric_uniform(config: ScanConfig | None = None) -> ScanResult:
    """Four success probabilities scanned, marginals fixed uniform."""
    config = config or ScanConfig()
    return scan(_with(config, fixed={**config.fixed, "pa0": 0.5, "pa1": 0.5}))


def scan_isotropic(config: ScanConfig | None = None) -> ScanResult:
    """As the symmetric scan, keeping only points with xi_0 = xi_1."""
    config = config or ScanConfig()
    return scan(_with(config, fixed={**config.fixed, "pa0": 0.5, "pa1": 0.5}, isotropic=True))


def scan_general(config: ScanConfig | None = None) -> ScanResult:
    """All six axes scanned."""
    return scan(config or ScanConfig())


@dataclass
class CaseLandscape:
    case: str
    pa0: np.ndarray
    pa1: np.ndarray
    I0: np.ndarray
    I1: np.ndarray
    I: np.ndarray

    @property
    def max_I(self):
        return float(self.I.max())

    @property
    def argmax(self):
        i, j = np.unravel_index(int(np.argmax(self.I)), self.I.shape)
        return float(self.pa0[i]), float(self.pa1[j])

    def argmax_set(self, tol=1e-9):
        ii, jj = np.nonzero(self.I >= self.max_I - tol)
        return [(float(self.pa0[i]), float(self.pa1[j])) for i, j in zip(ii, jj)]

    def to_json(self):
        return {"case": self.case, "max_I": self.max_I, "argmax": [list(a) for a in self.argmax_set()],
                "resolution": int(self.pa0.size)}


def scan_marginals_fixed_box(case: str, config: ScanConfig | None = None) -> CaseLandscape:
    """I0, I1 and I over the (Pr(a_0=0), Pr(a_1=0)) grid for a fixed box."""
    key = str(case).lower().removeprefix("case-").removeprefix("case_").strip("()")
    if key not in CASES:
        raise InvalidArgumentError(f"unknown case {case!r}; expected one of i, ii, iii")
    config = config or ScanConfig()
    q0 = config.axis_values("pa0")
    q1 = config.axis_values("pa1")
    Q0, Q1 = np.meshgrid(q0, q1, indexing="ij")
    i0, i1 = gains(*CASES[key], Q0, Q1)
    return CaseLandscape(key, q0, q1, i0, i1, i0 + i1)
