import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from racbounds import explorer as ex
from racbounds.errors import InvalidArgumentError
from racbounds.infotheory import information_gain
from racbounds.nsbox import CorrelationQuad, from_success_probs, is_local_2x2, is_quantum_2x2
from racbounds.protocol import RacScheme

P_T = (2 + math.sqrt(2)) / 4


@pytest.fixture(scope="module")
def symmetric30():
    return ex.scan_symmetric_uniform(ex.ScanConfig(resolution=31))


def test_symmetric_scan_saturates_at_chsh_two(symmetric30):
    assert symmetric30.max_I == pytest.approx(1.0, abs=1e-12)
    assert symmetric30.saturated
    for pt in symmetric30.argmax_points():
        assert pt.chsh == pytest.approx(2.0, abs=1e-9)


def test_symmetric_scan_respects_ic(symmetric30):
    assert symmetric30.n_violations == 0
    assert symmetric30.n_quantum > 0
    assert symmetric30.n_local <= symmetric30.n_quantum


def test_tsirelson_point_gain():
    assert ex.tsirelson_gain() == pytest.approx(0.7982, abs=5e-5)
    pt = ex.evaluate_point(P_T, P_T, P_T, P_T)
    assert pt.chsh == pytest.approx(2 * math.sqrt(2))
    assert pt.quantum and not pt.local


def test_emitted_points_are_quantum():
    cfg = ex.ScanConfig(resolution=9)
    n = 0
    for pt in ex.iter_points(ex._with(cfg, fixed={"pa0": 0.5, "pa1": 0.5})):
        q = CorrelationQuad.from_success(pt.p00, pt.p01, pt.p10, pt.p11)
        assert is_quantum_2x2(q)
        assert pt.local == is_local_2x2(q)
        assert pt.I == pytest.approx(pt.I0 + pt.I1, abs=1e-12)
        assert pt.I <= 1 + 1e-9
        n += 1
    assert n > 0


def test_isotropic_scan_monotone():
    res = ex.scan_isotropic(ex.ScanConfig(resolution=41))
    pairs = np.array(res.pairs)
    assert len(pairs) > 5
    order = np.argsort(pairs[:, 0], kind="stable")
    I = pairs[order, 1]
    chsh = pairs[order, 0]
    distinct = np.diff(chsh) > 1e-9
    assert np.all(np.diff(I)[distinct] >= -1e-9)
    assert pairs[np.argmin(pairs[:, 0]), 1] == pytest.approx(0.0, abs=1e-12)


def test_isotropic_chsh_zero_and_tsirelson():
    assert ex.evaluate_point(0.5, 0.5, 0.5, 0.5).I == pytest.approx(0.0, abs=1e-15)
    assert ex.evaluate_point(P_T, P_T, P_T, P_T).I == pytest.approx(0.7982, abs=5e-5)


@pytest.fixture(scope="module")
def cases():
    cfg = ex.ScanConfig(resolution=101)
    return {c: ex.scan_marginals_fixed_box(c, cfg) for c in ("i", "ii", "iii")}


def test_case_i(cases):
    land = cases["i"]
    assert np.all(land.I1 == 0)
    assert np.array_equal(land.I, land.I0)
    assert land.max_I == pytest.approx(1.0, abs=1e-12)
    assert {a for a, _ in land.argmax_set()} == {0.5}


def test_case_ii(cases):
    land = cases["ii"]
    assert land.argmax == (0.5, 0.5)
    assert land.argmax_set() == [(0.5, 0.5)]
    # I_0 depends only on Pr(a_0), I_1 only on Pr(a_1)
    assert np.allclose(land.I0, land.I0[:, :1], atol=1e-14)
    assert np.allclose(land.I1, land.I1[:1, :], atol=1e-14)
    assert land.max_I == pytest.approx(ex.tsirelson_gain(), abs=1e-15)


def test_case_iii(cases):
    land = cases["iii"]
    assert land.argmax_set() == [(0.5, 0.5)]
    assert land.max_I < cases["ii"].max_I


def test_unknown_case():
    with pytest.raises(InvalidArgumentError):
        ex.scan_marginals_fixed_box("iv")


def test_case_labels_accept_prefixes():
    cfg = ex.ScanConfig(resolution=5)
    assert ex.scan_marginals_fixed_box("case-ii", cfg).case == "ii"
    assert ex.scan_marginals_fixed_box("(iii)", cfg).case == "iii"


def test_general_scan_saturation():
    res = ex.scan_general(ex.ScanConfig(resolution=11))
    assert res.max_I == pytest.approx(1.0, abs=1e-12) and res.saturated
    assert res.n_violations == 0
    for pt in res.argmax_points():
        assert sorted([round(pt.I0, 9), round(pt.I1, 9)]) == [0.0, 1.0]


def test_general_scan_frozen_at_tsirelson():
    fixed = {"p00": P_T, "p01": P_T, "p10": P_T, "p11": P_T}
    res = ex.scan_general(ex.ScanConfig(resolution=101, fixed=fixed))
    assert res.max_I == pytest.approx(0.7982, abs=5e-5)
    assert [(p.pa0, p.pa1) for p in res.argmax_points()] == [(0.5, 0.5)]


def _random_point(rng):
    p = rng.uniform(0, 1, size=4)
    q = rng.uniform(0.01, 0.99, size=2)
    return p, q


def test_explorer_matches_information_gain():
    rng = np.random.default_rng(17)
    for _ in range(1000):
        p, q = _random_point(rng)
        i0, i1 = ex.gains(*p, *q)
        box = from_success_probs(2, 2, p.reshape(2, 2))
        rep = information_gain(box, RacScheme.binary(*q))
        assert float(i0) == pytest.approx(rep.per_setting[0], abs=1e-12)
        assert float(i1) == pytest.approx(rep.per_setting[1], abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(ex.AXES), st.floats(0.0, 0.8), st.floats(0.05, 0.2))
def test_refinement_never_lowers_window_max(axis, lo, width):
    window = {axis: (lo, lo + width)}
    if axis in ("pa0", "pa1"):
        fixed = dict(zip(("p00", "p01", "p10", "p11"), ex.CASES["iii"][:4]))
    else:
        # pin the marginals and two of the other success probabilities
        others = [a for a in ("p00", "p01", "p10", "p11") if a != axis][:2]
        fixed = {"pa0": 0.5, "pa1": 0.5, **{a: P_T for a in others}}
    coarse = ex.ScanConfig(resolution=4, window=window, fixed=fixed)
    fine = coarse.refined(4)
    assert fine.resolution == 13
    a, b = ex.scan_general(coarse), ex.scan_general(fine)
    if a.n_quantum:
        assert b.max_I >= a.max_I - 1e-15


def test_refined_grid_contains_coarse():
    cfg = ex.ScanConfig(resolution=6, window={"p00": (0.2, 0.7)})
    fine = cfg.refined(4)
    for c, f in zip(cfg.grids(), fine.grids()):
        assert all(np.isclose(f, v).any() for v in c)


def test_worker_count_does_not_change_result():
    cfg = ex.ScanConfig(resolution=9, chunk=500, workers=1)
    one = ex.scan_general(cfg)
    three = ex.scan_general(ex._with(cfg, workers=3))
    assert json.dumps(one.to_json(), sort_keys=True) == json.dumps(three.to_json(), sort_keys=True)


def test_checkpoint_resume(tmp_path):
    ck = tmp_path / "ck.json"
    cfg = ex.ScanConfig(resolution=6, chunk=2000, checkpoint=str(ck))
    full = ex.scan_general(cfg)
    data = json.loads(ck.read_text())
    n_chunks = len(data["parts"])
    assert n_chunks == math.ceil(6 ** 6 / 2000)
    # drop the last chunks as if the run had been interrupted
    data["parts"] = data["parts"][:2]
    ck.write_text(json.dumps(data))
    resumed = ex.scan_general(cfg)
    assert resumed.to_json() == full.to_json()
    assert len(json.loads(ck.read_text())["parts"]) == n_chunks


def test_checkpoint_from_other_scan_is_ignored(tmp_path):
    ck = tmp_path / "ck.json"
    ex.scan_general(ex.ScanConfig(resolution=5, checkpoint=str(ck)))
    res = ex.scan_general(ex.ScanConfig(resolution=6, checkpoint=str(ck)))
    assert res.n_points == 6 ** 6


def test_points_csv(tmp_path):
    path = tmp_path / "pts.csv"
    res = ex.scan_symmetric_uniform(ex.ScanConfig(resolution=6, points_csv=str(path)))
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ex.CSV_COLUMNS
    assert len(rows) - 1 == res.n_quantum
    I = [float(r[-1]) for r in rows[1:]]
    assert max(I) == res.max_I


def test_aggregate_histogram_counts(symmetric30):
    agg = symmetric30.to_json()
    assert sum(map(sum, agg["histogram"]["counts"])) == symmetric30.n_quantum
    assert set(agg) >= {"max_I", "argmax", "histogram"}


@pytest.mark.parametrize("kw", [
    {"resolution": 1},
    {"window": {"p00": (0.5, 0.4)}},
    {"window": {"bogus": (0.1, 0.2)}},
    {"fixed": {"pa0": 1.5}},
])
def test_config_validation(kw):
    with pytest.raises(InvalidArgumentError):
        ex.ScanConfig(**kw)


def test_default_resolution_is_100():
    assert ex.ScanConfig().resolution == 100
    assert ex.ScanConfig().axis_values("p00")[[0, -1]].tolist() == [0.0, 1.0]
