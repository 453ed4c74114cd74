import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from racbounds.errors import InvalidArgumentError
from racbounds.nsbox import (
    CorrelationQuad,
    NsBox,
    check_no_signaling,
    chsh_values,
    correlations_2x2,
    deterministic_local_quads,
    from_difference_probs,
    from_success_probs,
    gram_check_2x2,
    gram_completable_2x2,
    is_local_2x2,
    is_quantum_2x2,
    pr_box,
    product_box,
    random_box,
    shift_difference_mass,
    tsirelson_box,
)

S = 1 / math.sqrt(2)
TSIRELSON_QUAD = CorrelationQuad(S, S, S, -S)
PR_QUAD = CorrelationQuad(1, 1, 1, -1)


def test_pr_box_is_no_signaling():
    assert check_no_signaling(pr_box())["max"] == 0


def test_product_box_is_no_signaling():
    rng = np.random.default_rng(3)
    box = product_box(rng.dirichlet(np.ones(3), size=3), rng.dirichlet(np.ones(3), size=2))
    assert check_no_signaling(box)["ok"]


def test_signaling_table_flagged():
    joint = np.zeros((2, 2, 2, 2))
    joint[:, :, 0, 0] = 0.5
    joint[:, :, 1, 1] = 0.5
    # Bob's marginal under x = 1 shifts by 0.2
    joint[1, :, 0, 0] = 0.3
    joint[1, :, 0, 1] = 0.2
    joint[1, :, 1, 1] = 0.5
    rep = check_no_signaling(NsBox(2, 2, joint))
    assert not rep["ok"]
    assert rep["bob"] == pytest.approx(0.2)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 4), st.integers(2, 3), st.integers(0, 2 ** 31))
def test_from_success_probs_valid(d, k, seed):
    p = np.random.default_rng(seed).uniform(0, 1, size=(d ** (k - 1), k))
    box = from_success_probs(d, k, p)
    assert check_no_signaling(box)["max"] <= 1e-15
    assert np.allclose(box.joint.sum(axis=3), 1 / d)
    assert np.allclose(box.success_probs(), p)


@pytest.mark.parametrize("p", [-0.1, 1.5])
def test_from_success_probs_range(p):
    with pytest.raises(InvalidArgumentError):
        from_success_probs(2, 2, p)


def test_from_success_probs_dict_must_be_complete():
    with pytest.raises(InvalidArgumentError):
        from_success_probs(2, 2, {(0, 0): 1.0})


def test_box_rejects_unnormalised():
    with pytest.raises(InvalidArgumentError):
        NsBox(2, 2, np.full((2, 2, 2, 2), 0.3))


def test_json_roundtrip():
    box = from_success_probs(3, 2, np.linspace(0.2, 0.9, 6).reshape(3, 2))
    again = NsBox.from_json(box.to_json())
    assert np.array_equal(again.joint, box.joint)


def test_shift_keeps_marginals():
    rng = np.random.default_rng(0)
    box = from_difference_probs(3, 2, rng.dirichlet(np.ones(3) * 5, size=(3, 2)))
    moved = shift_difference_mass(box, 0, 0, 0.01)
    assert np.allclose(moved.joint.sum(axis=3), box.joint.sum(axis=3))
    assert np.allclose(moved.joint.sum(axis=2), box.joint.sum(axis=2))
    assert moved.difference_probs()[0, 0, 0] == pytest.approx(box.difference_probs()[0, 0, 0] + 0.01)


@pytest.mark.parametrize("box,quad", [
    (pr_box(), (1, 1, 1, -1)),
    (random_box(), (0, 0, 0, 0)),
    (tsirelson_box(), (S, S, S, -S)),
])
def test_correlations(box, quad):
    assert np.allclose(correlations_2x2(box).as_array(), quad)


def test_pr_chsh_is_four():
    assert chsh_values(correlations_2x2(pr_box()))[0] == pytest.approx(4)


def test_correlations_need_2x2():
    with pytest.raises(InvalidArgumentError):
        correlations_2x2(random_box(3, 2))


@pytest.mark.parametrize("quad,expected", [
    (TSIRELSON_QUAD, [2 * math.sqrt(2)]),
    (CorrelationQuad(0, 0, 0, 0), [0, 0, 0, 0]),
    (CorrelationQuad(1, 1, 1, 1), [2, 2, 2, 2]),
])
def test_chsh_values(quad, expected):
    vals = chsh_values(quad)
    assert np.allclose(vals[: len(expected)], expected)


@pytest.mark.parametrize("quad,expected", [
    (TSIRELSON_QUAD, True),
    (PR_QUAD, False),
    (CorrelationQuad(0.9, 0.9, 0.9, -0.9), False),
])
def test_is_quantum(quad, expected):
    assert is_quantum_2x2(quad) is expected


@pytest.mark.parametrize("quad,expected", [
    (CorrelationQuad(0, 0, 0, 0), True),
    (TSIRELSON_QUAD, False),
    (CorrelationQuad(1, 1, 1, 1), True),
])
def test_is_local(quad, expected):
    assert is_local_2x2(quad) is expected


def test_gram_examples():
    assert gram_check_2x2(CorrelationQuad(0, 0, 0, 0), 0, 0)
    assert gram_check_2x2(TSIRELSON_QUAD, 0, 0)
    assert not gram_completable_2x2(PR_QUAD, step=0.01)


def test_deterministic_assignments_are_local():
    for q in deterministic_local_quads():
        assert np.all(chsh_values(q) <= 2 + 1e-12)


def test_arcsin_matches_gram_completion():
    """Arcsin test and Gram completability agree on points of a 0.05 grid.

    Points within 0.02 of the arcsin boundary are left out, since there the
    verdict depends on the theta grid resolution rather than the criterion.
    So are quads with a perfect correlation: |C| = 1 pins theta to a single
    point that a grid generally misses.
    """
    grid = np.round(np.arange(-1, 1.0001, 0.05), 10)
    rng = np.random.default_rng(7)
    checked = agree_q = 0
    while checked < 600:
        c = rng.choice(grid, size=4)
        slack = math.pi - np.max(np.abs(_SIGNS @ np.arcsin(c)))
        if abs(slack) < 0.02 or np.any(np.abs(c) == 1):
            continue
        q = is_quantum_2x2(c)
        assert q == gram_completable_2x2(c, step=0.02), c
        checked += 1
        agree_q += q
    assert 0 < agree_q < checked


_SIGNS = np.array([[1, 1, 1, -1], [1, 1, -1, 1], [1, -1, 1, 1], [-1, 1, 1, 1]])


def test_arcsin_boundary():
    assert is_quantum_2x2(np.array([S, S, S, -S]))
    assert not is_quantum_2x2(np.array([0.71, 0.71, 0.71, -0.71]))
