"""Command-line front end: ``racbounds bound|table|scan|verify``."""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import logging
import math
import os
import sys

import numpy as np

from . import __version__, explorer, infotheory, npa
from .errors import BudgetExceededError, InvalidArgumentError
from .nsbox import check_no_signaling, from_difference_probs, from_success_probs
from .protocol import RacScheme

EXIT_OK = 0
EXIT_ARGS = 2
EXIT_BUDGET = 3
EXIT_VERIFY = 4
EXIT_SOLVER = 5

BOUND_COLUMNS = ["d", "k", "level", "status", "objective", "xi_mean", "gain", "ic_bound", "margin", "gap", "dim", "n_vars"]

log = logging.getLogger("racbounds")


def fmt(v):
    return f"{v:.6g}" if isinstance(v, float) else str(v)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_ARGS)


def _out_dir(args):
    out = args.out or os.path.join("results", f"{args.command}-{_dt.datetime.now().strftime('%Y%m%d-%H%M%S')}")
    os.makedirs(out, exist_ok=True)
    return out


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _manifest(out, args, outputs, started, status):
    params = {k: v for k, v in vars(args).items() if k not in ("func",)}
    _write_json(os.path.join(out, "manifest.json"), {
        "command": args.command,
        "parameters": params,
        "version": __version__,
        "started": started,
        "finished": _dt.datetime.now().isoformat(timespec="seconds"),
        "status": status,
        "outputs": {os.path.basename(p): _sha256(p) for p in outputs},
    })


def _bound_row(res):
    xi = float(np.mean(res.xi)) if res.xi else float("nan")
    return [res.d, res.k, str(res.level), res.status, repr(res.objective), repr(xi), repr(res.gain),
            repr(res.ic_bound), repr(res.ic_margin), repr(res.gap), res.dim, res.n_vars]


def _append_csv(path, row, header):
    new = not os.path.exists(path)
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(header)
        w.writerow(row)


def cmd_bound(args):
    started = _dt.datetime.now().isoformat(timespec="seconds")
    out = _out_dir(args)
    try:
        res = npa.solve_level(args.d, args.k, args.level, tol=args.tol, budget=args.budget,
                              allow_oversize=args.allow_oversize, predictor_corrector=args.predictor_corrector)
    except BudgetExceededError as exc:
        print(f"refused: moment matrix dimension {exc.dim} exceeds budget {exc.budget}", file=sys.stderr)
        return EXIT_BUDGET
    tag = f"bound_d{args.d}_k{args.k}_{str(res.level).replace('+', 'p')}"
    jpath = os.path.join(out, tag + ".json")
    _write_json(jpath, res.to_json())
    cpath = os.path.join(out, "table.csv")
    _append_csv(cpath, _bound_row(res), BOUND_COLUMNS)
    print(f"d={res.d} k={res.k} level={res.level} status={res.status}")
    print(f"objective {fmt(res.objective)}  gain {fmt(res.gain)}  IC bound {fmt(res.ic_bound)}")
    ok = res.status == "optimal"
    _manifest(out, args, [jpath, cpath], started, res.status)
    return EXIT_OK if ok else EXIT_SOLVER


def cmd_table(args):
    started = _dt.datetime.now().isoformat(timespec="seconds")
    out = _out_dir(args)
    path = os.path.join(out, "table.csv")
    failed = False
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(BOUND_COLUMNS)
        for level in args.levels:
            for d in range(2, args.dmax + 1):
                for k in range(2, args.kmax + 1):
                    dim = npa.operator_count(d, k, level)
                    if dim > args.budget:
                        w.writerow([d, k, level, "skipped", "", "", "", repr(math.log2(d)), "", "", dim, ""])
                        print(f"d={d} k={k} level={level}: skipped (dim {dim} > budget {args.budget})")
                        continue
                    res = npa.solve_level(d, k, level, tol=args.tol, budget=args.budget)
                    failed |= res.status != "optimal"
                    w.writerow(_bound_row(res))
                    fh.flush()
                    print(f"d={d} k={k} level={level}: objective {fmt(res.objective)} gain {fmt(res.gain)} "
                          f"IC {fmt(res.ic_bound)} margin {fmt(res.ic_margin)} [{res.status}]")
    _manifest(out, args, [path], started, "solver_failure" if failed else "ok")
    return EXIT_SOLVER if failed else EXIT_OK


def _parse_window(items):
    win = {}
    for item in items or []:
        try:
            ax, rng = item.split("=")
            lo, hi = (float(v) for v in rng.split(":"))
        except ValueError:
            raise InvalidArgumentError(f"window {item!r} is not axis=lo:hi")
        win[ax.strip()] = (lo, hi)
    return win


def cmd_scan(args):
    started = _dt.datetime.now().isoformat(timespec="seconds")
    window = _parse_window(args.window)
    out = _out_dir(args)
    outputs = []
    if args.mode.startswith("case-"):
        cfg = explorer.ScanConfig(resolution=args.resolution, window=window)
        land = explorer.scan_marginals_fixed_box(args.mode, cfg)
        cpath = os.path.join(out, "landscape.csv")
        with open(cpath, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["pa0", "pa1", "I0", "I1", "I"])
            for i, a in enumerate(land.pa0):
                for j, b in enumerate(land.pa1):
                    w.writerow([repr(float(a)), repr(float(b)), repr(float(land.I0[i, j])),
                                repr(float(land.I1[i, j])), repr(float(land.I[i, j]))])
        agg = land.to_json()
        outputs.append(cpath)
        print(f"{args.mode}: max_I {fmt(agg['max_I'])} at {[tuple(fmt(v) for v in a) for a in agg['argmax'][:4]]}")
    else:
        cfg = explorer.ScanConfig(resolution=args.resolution, window=window, workers=args.workers,
                                  checkpoint=os.path.join(out, "checkpoint.json") if args.checkpoint else None,
                                  points_csv=os.path.join(out, "points.csv") if args.points else None)
        fn = {"symmetric": explorer.scan_symmetric_uniform, "isotropic": explorer.scan_isotropic,
              "general": explorer.scan_general}[args.mode]
        res = fn(cfg)
        agg = res.to_json()
        if args.points:
            outputs.append(cfg.points_csv)
        if args.plot_data:
            ppath = os.path.join(out, "plot_data.txt")
            with open(ppath, "w") as fh:
                if args.mode == "isotropic":
                    for c, i in res.pairs:
                        fh.write(f"{c!r} {i!r}\n")
                else:
                    for r in res.argmax:
                        fh.write(f"{r[6]!r} {r[-1]!r}\n")
            outputs.append(ppath)
        chsh = sorted({round(r[6], 9) for r in res.argmax})
        print(f"{args.mode}: max_I {fmt(res.max_I)} over {res.n_quantum} quantum points; "
              f"CHSH at max {[fmt(c) for c in chsh[:5]]}; IC violations {res.n_violations}")
    apath = os.path.join(out, "aggregate.json")
    _write_json(apath, agg)
    outputs.append(apath)
    _manifest(out, args, outputs, started, "ok")
    return EXIT_OK


def _verify_signal_decay(args):
    ds = [args.d] if args.d else [2, 3]
    xis = [args.xi] if args.xi is not None else [0.2, 0.5, 0.8]
    rows = []
    for d in ds:
        for xi in xis:
            sup, _ = infotheory.signal_decay_ratio_sup(d, xi)
            bound = infotheory.signal_decay_bound(d, xi)
            rows.append({"d": d, "xi": xi, "sup": sup, "bound": bound, "pass": sup <= bound + 2e-3})
    return rows


def _verify_hessian(args):
    rng = np.random.default_rng(args.seed)
    rows = []
    d, k = (args.d or 2), (args.k or 2)
    for _ in range(args.n):
        box = _random_interior_box(rng, d, k)
        m = rng.uniform(0.05, 1.0, size=(k, d))
        scheme = RacScheme(d, k, m / m.sum(axis=1, keepdims=True))
        ana = infotheory.hessian_d2I(box, scheme)
        num = infotheory.finite_difference_d2I(box, scheme, 1e-4)
        rel = abs(ana - num) / max(abs(ana), 1e-12)
        rows.append({"analytic": ana, "finite_difference": num, "rel_err": rel, "pass": rel <= 1e-5})
    return rows


def _verify_monotonic(args):
    d, k = (args.d or 2), (args.k or 2)
    grid = np.linspace(0, 1, 201)
    vals = [infotheory.gain_unbiased(d, k, x) for x in grid]
    ok = bool(np.all(np.diff(vals) > 0))
    return [{"d": d, "k": k, "points": len(grid), "pass": ok}]


def _verify_no_signaling(args):
    rng = np.random.default_rng(args.seed)
    d, k = (args.d or 2), (args.k or 2)
    rows = []
    for _ in range(args.n):
        p = rng.uniform(0, 1, size=(d ** (k - 1), k))
        rep = check_no_signaling(from_success_probs(d, k, p))
        rows.append({"max_violation": rep["max"], "pass": rep["ok"]})
    return rows


def _random_interior_box(rng, d, k):
    q = rng.uniform(0.05, 1.0, size=(d ** (k - 1), k, d))
    return from_difference_probs(d, k, q / q.sum(axis=-1, keepdims=True))


VERIFIERS = {
    "signal-decay": _verify_signal_decay,
    "hessian": _verify_hessian,
    "monotonic": _verify_monotonic,
    "no-signaling": _verify_no_signaling,
}


def cmd_verify(args):
    started = _dt.datetime.now().isoformat(timespec="seconds")
    out = _out_dir(args)
    rows = VERIFIERS[args.target](args)
    ok = all(r["pass"] for r in rows)
    path = os.path.join(out, "verify.json")
    _write_json(path, {"target": args.target, "pass": ok, "checks": rows})
    n_fail = sum(not r["pass"] for r in rows)
    print(f"verify {args.target}: {'pass' if ok else 'FAIL'} ({len(rows) - n_fail}/{len(rows)} checks)")
    _manifest(out, args, [path], started, "pass" if ok else "fail")
    return EXIT_OK if ok else EXIT_VERIFY


def _level(s):
    try:
        return npa.parse_level(s)
    except InvalidArgumentError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def build_parser():
    p = _Parser(prog="racbounds", description="Information-gain bounds for d-level random access codes.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    b = sub.add_parser("bound", help="solve one relaxation cell")
    b.add_argument("--d", type=int, required=True)
    b.add_argument("--k", type=int, required=True)
    b.add_argument("--level", type=_level, default=1)
    b.add_argument("--tol", type=float, default=1e-7)
    b.add_argument("--budget", type=int, default=npa.DEFAULT_BUDGET)
    b.add_argument("--allow-oversize", action="store_true")
    b.add_argument("--predictor-corrector", action="store_true")
    b.add_argument("--out")
    b.set_defaults(func=cmd_bound)

    t = sub.add_parser("table", help="sweep (d, k, level) cells")
    t.add_argument("--levels", type=_level, nargs="+", default=[1, npa.AB])
    t.add_argument("--dmax", type=int, default=5)
    t.add_argument("--kmax", type=int, default=5)
    t.add_argument("--tol", type=float, default=1e-7)
    t.add_argument("--budget", type=int, default=npa.DEFAULT_BUDGET)
    t.add_argument("--out")
    t.set_defaults(func=cmd_table)

    s = sub.add_parser("scan", help="grid scans for d = k = 2")
    s.add_argument("--mode", required=True,
                   choices=["symmetric", "isotropic", "case-i", "case-ii", "case-iii", "general"])
    s.add_argument("--resolution", type=int, default=100)
    s.add_argument("--window", action="append", help="axis=lo:hi, repeatable")
    s.add_argument("--workers", type=int, default=explorer.default_workers())
    s.add_argument("--points", action="store_true", help="also write every retained point to CSV")
    s.add_argument("--plot-data", action="store_true")
    s.add_argument("--checkpoint", action="store_true")
    s.add_argument("--out")
    s.set_defaults(func=cmd_scan)

    v = sub.add_parser("verify", help="property checks")
    v.add_argument("--target", required=True, choices=sorted(VERIFIERS))
    v.add_argument("--d", type=int)
    v.add_argument("--k", type=int)
    v.add_argument("--xi", type=float)
    v.add_argument("--n", type=int, default=100)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_ARGS
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InvalidArgumentError as exc:
        print(f"invalid argument: {exc}", file=sys.stderr)
        return EXIT_ARGS


if __name__ == "__main__":
    sys.exit(main())
