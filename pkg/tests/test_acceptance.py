"""Acceptance suite.

Each test covers one acceptance criterion, prints a PASS/FAIL line (also
collected into the terminal summary by ``conftest.report``) and then asserts.
All checks of a criterion are evaluated before the assertion so a red line
lists every failing item, not just the first.

Runtime is dominated by the (d=5, k=2, 1+AB) relaxation, roughly eight
minutes on one core; the whole file takes about twelve minutes.
"""
import math

import numpy as np
import pytest

from racbounds import explorer as ex
from racbounds import infotheory as it
from racbounds import npa
from racbounds.channel import ChannelMatrix
from racbounds.nsbox import from_difference_probs
from racbounds.protocol import RacScheme

TOL = 1e-7

LEVEL1 = {
    (2, 2): 3.4142, (2, 3): 9.4641, (2, 4): 24.0000, (2, 5): 57.8885,
    (3, 2): 4.8284, (3, 3): 19.3923, (3, 4): 72.0000, (3, 5): 255.7477,
    (4, 2): 6.2426, (4, 3): 32.7846, (4, 4): 160.0000,
    (5, 2): 7.6569, (5, 3): 49.6410,
}
LEVEL_AB = {
    (2, 2): 3.4142, (2, 3): 9.4641, (2, 4): 24.0000, (2, 5): 57.8885,
    (3, 2): 4.6667, (4, 2): 5.9530, (5, 2): 7.1789, (3, 3): 18.6633,
}
GAIN1 = {
    (2, 2): 0.7982, (3, 2): 1.3547, (4, 2): 1.7845, (5, 2): 2.1357,
    (2, 3): 0.7680, (3, 3): 1.3360, (4, 3): 1.7895, (5, 3): 2.1680,
    (2, 4): 0.7549, (3, 4): 1.3333, (4, 4): 1.8048,
    (2, 5): 0.7476, (3, 5): 1.3345,
}
GAIN_AB = {
    (2, 2): 0.7982, (3, 2): 1.1972, (4, 2): 1.5478, (5, 2): 1.7788,
    (2, 3): 0.7680, (3, 3): 1.1531, (2, 4): 0.7549, (2, 5): 0.7476,
}
IC_ROW = {2: 1.0000, 3: 1.5850, 4: 2.0000, 5: 2.3220}

_cache = {}


def solved(d, k, level):
    key = (d, k, str(level))
    if key not in _cache:
        _cache[key] = npa.solve_level(d, k, level, tol=TOL)
    return _cache[key]


def _cells(level):
    table = LEVEL1 if level == 1 else LEVEL_AB
    out = []
    for (d, k), printed in table.items():
        if npa.operator_count(d, k, level) > npa.DEFAULT_BUDGET:
            out.append((d, k, printed, None))
        else:
            out.append((d, k, printed, solved(d, k, level)))
    return out


def _summarize(misses, n):
    return f"{n - len(misses)}/{n} ok" + (f"; off: {', '.join(misses)}" if misses else "")


def test_level1_table(report):
    misses = []
    cells = _cells(1)
    for d, k, printed, res in cells:
        closed = npa.closed_form_level1(d, k)
        if res is None or res.status != "optimal" or abs(res.objective - printed) > 1e-3 \
                or abs(closed - printed) > 1e-3 or abs(res.objective - closed) > 1e-3:
            got = "skipped" if res is None else f"{res.objective:.6g}/{res.status}"
            misses.append(f"({d},{k}) {got} vs {printed}")
    ok = report("level-1 relaxation table within 1e-3 and equal to the closed form", not misses,
                _summarize(misses, len(cells)))
    assert ok, misses


def test_level_ab_table(report):
    misses = []
    cells = _cells(npa.AB)
    for d, k, printed, res in cells:
        if res is None:
            # skipping is allowed only for (3,3)
            if (d, k) != (3, 3):
                misses.append(f"({d},{k}) skipped")
            continue
        if res.status != "optimal" or abs(res.objective - printed) > 1e-2:
            misses.append(f"({d},{k}) {res.objective:.6g}/{res.status} vs {printed}")
    for k in (2, 3, 4, 5):
        if abs(solved(2, k, npa.AB).objective - solved(2, k, 1).objective) > 1e-4:
            misses.append(f"(2,{k}) levels differ")
    ok = report("level-(1+AB) relaxation table within 1e-2", not misses, _summarize(misses, len(cells)))
    assert ok, misses


def test_gain_tables(report):
    misses = []
    n = 0
    for level, table in ((1, GAIN1), (npa.AB, GAIN_AB)):
        for (d, k), printed in table.items():
            res = solved(d, k, level)
            n += 1
            if abs(res.gain - printed) > 1e-3:
                misses.append(f"{level} ({d},{k}) {res.gain:.6g} vs {printed}")
            if not res.ic_margin > 0:
                misses.append(f"{level} ({d},{k}) margin {res.ic_margin:.3g}")
            if not res.isotropic:
                misses.append(f"{level} ({d},{k}) anisotropic xi {res.xi}")
    for d, printed in IC_ROW.items():
        n += 1
        if abs(math.log2(d) - printed) > 1e-3:
            misses.append(f"IC d={d}")
    ok = report("information-gain tables within 1e-3, every IC margin positive", not misses,
                _summarize(misses, n))
    assert ok, misses


def test_explorer_symmetric_uniform(report):
    res = ex.scan_symmetric_uniform(ex.ScanConfig(resolution=100))
    width = 4 / 99      # CHSH moves by at most four grid steps between nodes
    chsh = [p.chsh for p in res.argmax_points()]
    t_gain = ex.evaluate_point(*(ex.P_TSIRELSON,) * 4).I
    checks = {
        "max": abs(res.max_I - 1) <= 1e-6,
        "chsh": bool(chsh) and all(abs(c - 2) <= width for c in chsh),
        "tsirelson": abs(t_gain - 0.7982) <= 5e-5,
        "violations": res.n_violations == 0,
    }
    detail = (f"max_I {res.max_I:.9f}, CHSH at max {sorted(set(round(c, 6) for c in chsh))[:3]}, "
              f"Tsirelson I {t_gain:.7f}, violations {res.n_violations} of {res.n_quantum}")
    ok = report("explorer symmetric-uniform scan", all(checks.values()), detail)
    assert ok, checks


def test_case_scans(report):
    cfg = ex.ScanConfig(resolution=201)
    land = {c: ex.scan_marginals_fixed_box(c, cfg) for c in ("i", "ii", "iii")}
    i, ii, iii = land["i"], land["ii"], land["iii"]
    checks = {
        "i max": abs(i.max_I - 1) <= 1e-12 and {a for a, _ in i.argmax_set()} == {0.5},
        "i I1": bool(np.all(i.I1 == 0)),
        "ii max": abs(ii.max_I - 0.7983) <= 5e-5,
        "ii argmax": ii.argmax_set() == [(0.5, 0.5)],
        "iii argmax": iii.argmax_set() == [(0.5, 0.5)],
        "iii below ii": iii.max_I < ii.max_I,
    }
    bad = [k for k, v in checks.items() if not v]
    detail = (f"(i) {i.max_I:.7f}; (ii) {ii.max_I:.7f} vs 0.7983; (iii) {iii.max_I:.7f}"
              + (f"; off: {', '.join(bad)}" if bad else ""))
    ok = report("marginal case scans", not bad, detail)
    assert ok, bad


def _interior(rng, d, k):
    q = rng.uniform(0.05, 1.0, size=(d ** (k - 1), k, d))
    m = rng.uniform(0.05, 1.0, size=(k, d))
    return (from_difference_probs(d, k, q / q.sum(axis=-1, keepdims=True)),
            RacScheme(d, k, m / m.sum(axis=1, keepdims=True)))


def _prop_signal_decay():
    worst = -math.inf
    for d in (2, 3):
        for xi in (0.2, 0.5, 0.8):
            sup, _ = it.signal_decay_ratio_sup(d, xi)
            worst = max(worst, sup - xi ** 2)
    return worst <= 2e-3, f"max(sup - xi^2) = {worst:.2e}"


def _prop_hessian():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        box, scheme = _interior(rng, 2, 2)
        ana = it.hessian_d2I(box, scheme)
        num = it.finite_difference_d2I(box, scheme, 1e-4)
        worst = max(worst, abs(ana - num) / abs(ana))
    uniform = [it.hessian_uniform(_interior(rng, d, k)[0], d, k) for d, k in ((2, 2), (3, 2), (3, 3)) for _ in range(10)]
    return worst <= 1e-5 and min(uniform) > 0, f"max rel err {worst:.2e}, min uniform {min(uniform):.3g}"


def _prop_dpi():
    rng = np.random.default_rng(99)
    worst = -math.inf
    for _ in range(1000):
        d = int(rng.integers(2, 6))
        px = rng.dirichlet(np.ones(d))
        A = ChannelMatrix(rng.dirichlet(np.ones(d), size=d))
        B = ChannelMatrix(rng.dirichlet(np.ones(d), size=d))
        worst = max(worst, it.mutual_information(px, A @ B) - it.mutual_information(px, A))
    return worst <= 1e-12, f"max I(X;Z) - I(X;Y) = {worst:.2e}"


def _prop_monotone():
    worst = -math.inf
    for (d, k) in LEVEL_AB:
        if (d, k) in LEVEL1:
            worst = max(worst, solved(d, k, npa.AB).objective - solved(d, k, 1).objective)
    return worst <= 1e-6, f"max obj(1+AB) - obj(1) = {worst:.2e}"


def _prop_certificates():
    _cells(1), _cells(npa.AB)
    worst = {}
    for key, res in _cache.items():
        if res.status != "optimal":
            continue
        c = res.certificate
        for name, v in (("eq", c["equality_residual"]), ("primal_eig", -c["primal_min_eig"]),
                        ("dual_eig", -c["dual_min_eig"]), ("primal_lin", -c["primal_min_lin"]),
                        ("dual_lin", -c["dual_min_lin"]), ("gap", c["relative_gap"])):
            worst[name] = max(worst.get(name, -math.inf), v)
    ok = bool(worst) and all(v <= 10 * TOL for v in worst.values())
    return ok, f"{len(_cache)} solves; " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items())


def _prop_counts():
    got = {
        "(2,2) 1": npa.build_constraints(2, 2, 1).n_vars,
        "(3,2) 1": npa.build_constraints(3, 2, 1).n_vars,
        "(3,2) 1+AB": npa.build_constraints(3, 2, npa.AB).n_vars,
    }
    want = {"(2,2) 1": 10, "(3,2) 1": 50, "(3,2) 1+AB": 182}
    return got == want, ", ".join(f"{k}: {got[k]} vs {want[k]}" for k in want)


PROPERTIES = {
    "a signal decay": _prop_signal_decay,
    "b Hessian": _prop_hessian,
    "c data processing": _prop_dpi,
    "d hierarchy monotone": _prop_monotone,
    "e certificates": _prop_certificates,
    "f variable counts": _prop_counts,
}


def test_property_suites(report):
    verdicts = {}
    for name, fn in PROPERTIES.items():
        ok, detail = fn()
        verdicts[name] = ok
        report(f"  property ({name})", ok, detail)
    bad = [k for k, v in verdicts.items() if not v]
    ok = report("property suites (a)-(f)", not bad, f"failing: {', '.join(bad)}" if bad else "")
    assert ok, bad
