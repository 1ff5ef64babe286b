import csv

import numpy as np
import pytest

from msgames import diophantine as dp
from msgames.homogeneous import WeightVector

W11 = WeightVector((1.0,), (1.0,))
PHI = (1.0 + np.sqrt(5.0)) / 2.0


# ---------------------------------------------------------------------------
# bad_margin


def test_zero_matrix_margin_and_witness():
    rep = dp.bad_margin([[0.0]], W11, 1)
    assert rep.margin == 0.0
    assert rep.witness == ((0,), (1,))
    w22 = WeightVector((0.5, 0.5), (0.5, 0.5))
    rep2 = dp.bad_margin(np.zeros((2, 2)), w22, 2)
    assert rep2.margin == 0.0
    assert rep2.witness == ((0, 0), (1, 0))


def test_golden_ratio_margin_attained_at_one():
    # the minimum over q >= 1 sits at q = 1 with value phi^-2; the
    # classical 1/sqrt(5) is the liminf along Fibonacci q, approached
    # from below only at even indices, never undercutting q = 1
    rep = dp.bad_margin([[PHI]], W11, 10 ** 4)
    assert rep.margin == pytest.approx(0.3819660112501051, abs=1e-12)
    assert rep.margin == pytest.approx((3.0 - np.sqrt(5.0)) / 2.0)
    assert rep.witness == ((2,), (1,))


def test_rational_margin_vanishes_at_denominator():
    rep = dp.bad_margin([[1.0 / 3.0]], W11, 3)
    assert rep.margin == 0.0
    assert rep.witness == ((1,), (3,))


def test_margin_monotone_in_qmax():
    for y in (PHI, np.pi, 0.123456):
        margins = [dp.bad_margin([[y]], W11, Q).margin
                   for Q in (10, 100, 1000, 10 ** 4)]
        assert all(a >= b for a, b in zip(margins, margins[1:]))


def test_margin_transpose_symmetric_for_scalars():
    for y in (PHI, 0.7321, 1.0 / 7.0):
        a = dp.bad_margin(np.array([[y]]), W11, 500).margin
        b = dp.bad_margin(np.array([[y]]).T, W11, 500).margin
        assert a == b


def test_margin_invariant_under_integer_shift():
    rng = np.random.default_rng(3)
    w12 = WeightVector((1.0,), (0.5, 0.5))
    for _ in range(3):
        Y = np.floor(rng.random((1, 2)) * 2 ** 20) / 2 ** 20
        N = rng.integers(-5, 6, (1, 2))
        a = dp.bad_margin(Y, w12, 60)
        b = dp.bad_margin(Y + N, w12, 60)
        assert a.margin == b.margin
        assert a.witness[1] == b.witness[1]
    for _ in range(3):
        Y = rng.random((1, 2))
        a = dp.bad_margin(Y, w12, 60).margin
        b = dp.bad_margin(Y + rng.integers(-5, 6, (1, 2)), w12, 60).margin
        assert b == pytest.approx(a, rel=1e-12, abs=1e-12)


def test_margin_rejects_bad_inputs():
    with pytest.raises(ValueError):
        dp.bad_margin([[0.5]], W11, 0)
    with pytest.raises(ValueError):
        dp.bad_margin(np.zeros((2, 2)), W11, 5)


def test_bad_report_serializes_to_json():
    import json

    rep = dp.bad_margin([[PHI]], W11, 100)
    data = json.loads(rep.to_json())
    assert data["margin"] == pytest.approx(rep.margin)
    assert data["witness_q"] == [1]
    assert data["Qmax"] == 100


# ---------------------------------------------------------------------------
# continued fractions


def test_golden_ratio_quotients_all_one():
    cf = dp.continued_fraction(PHI, 30)
    assert cf.quotients == (1,) * 30
    assert not cf.truncated
    # convergents are ratios of consecutive Fibonacci numbers
    assert cf.convergents[8] == (55, 34)


def test_rational_terminates():
    cf = dp.continued_fraction(7.0 / 3.0, 10)
    assert cf.quotients == (2, 3)
    assert cf.convergents[-1] == (7, 3)
    assert not cf.truncated


def test_negative_value_uses_floor():
    assert dp.continued_fraction(-1.25, 10).quotients == (-2, 1, 3)


def test_deep_expansion_flags_truncation():
    assert dp.continued_fraction(np.sqrt(2.0), 40).truncated


def test_count_bounds_enforced():
    with pytest.raises(ValueError):
        dp.continued_fraction(PHI, 41)
    with pytest.raises(ValueError):
        dp.continued_fraction(PHI, 0)


def test_convergents_satisfy_classical_inequality():
    rng = np.random.default_rng(0)
    for y in rng.random(50):
        cf = dp.continued_fraction(float(y), 25)
        for p, q in cf.convergents:
            if q > 0:
                assert abs(y - p / q) < 1.0 / q ** 2


def test_quotients_bounded_by_margin_reciprocal():
    """Classical chain: a quotient a_(k+1) whose convergent denominator
    is inside the search range forces margin <= 1/a_(k+1) roughly, so
    every in-range quotient is at most ceil(1/margin) + 1."""
    qmax = 10 ** 4
    for y in (PHI, np.sqrt(2.0), np.sqrt(3.0), np.pi, np.e, 1.0 / PHI):
        margin = dp.bad_margin([[y]], W11, qmax).margin
        assert margin > 0
        bound = int(np.ceil(1.0 / margin)) + 1
        cf = dp.continued_fraction(float(y), 25)
        for a, (_, q) in zip(cf.quotients, cf.convergents):
            if q <= qmax:
                assert a <= bound
    # on y whose first 25 denominators stay in range, the bound covers
    # the whole prefix
    for y in (PHI, np.sqrt(2.0), np.sqrt(3.0), 1.0 / PHI):
        margin = dp.bad_margin([[y]], W11, qmax).margin
        bound = int(np.ceil(1.0 / margin)) + 1
        assert max(dp.continued_fraction(float(y), 25).quotients) <= bound


# ---------------------------------------------------------------------------
# correspondence audit


def test_audit_zero_matrix_consistent():
    rep = dp.dani_audit([[0.0]], W11, 100, 10.0, 0.25)
    assert rep.margin == 0.0
    assert rep.floor == pytest.approx(np.exp(-10.0))
    assert rep.verdict == "consistent"


def test_audit_golden_ratio_floor_positive():
    rep = dp.dani_audit([[PHI]], W11, 10 ** 4, 30.0, 0.25)
    assert rep.margin == pytest.approx(0.3819660112501051)
    assert rep.floor > 0.1
    assert rep.verdict == "consistent"
    assert len(rep.report.orbit_profile) == 121


def test_audit_random_batch_has_no_inconsistencies():
    rng = np.random.default_rng(7)
    for _ in range(20):
        rep = dp.dani_audit([[float(rng.random())]], W11, 1000, 20.0, 0.5)
        assert rep.verdict == "consistent"


def test_audit_rejects_bad_grid():
    with pytest.raises(ValueError):
        dp.dani_audit([[0.5]], W11, 10, -1.0, 0.1)
    with pytest.raises(ValueError):
        dp.dani_audit([[0.5]], W11, 10, 1.0, 0.0)


def test_audit_csv_rows(tmp_path):
    rng = np.random.default_rng(5)
    reports = [dp.dani_audit([[float(rng.random())]], W11, 200, 10.0, 0.5)
               for _ in range(4)]
    path = tmp_path / "audit.csv"
    dp.write_audit_csv(reports, path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["Y", "margin", "floor", "verdict",
                       "witness_p", "witness_q"]
    assert len(rows) == 5
    assert all(row[3] == "consistent" for row in rows[1:])


# ---------------------------------------------------------------------------
# box-counting probe


SCALES = [2.0 ** -k for k in range(3, 8)]


def test_box_dimension_of_uniform_square():
    # with 10^4 points the finest scales start to saturate, which pulls
    # the least-squares slope below the ambient dimension 2
    rng = np.random.default_rng(1)
    est = dp.estimate_box_dimension(rng.random((10 ** 4, 2)), SCALES)
    assert 1.6 <= est <= 2.0


def test_box_dimension_of_segment():
    xs = np.linspace(0.0, 1.0, 2000)
    pts = np.stack([xs, 0.3 * np.ones_like(xs)], axis=1)
    est = dp.estimate_box_dimension(pts, SCALES)
    assert 0.9 <= est <= 1.1


def test_box_dimension_of_single_point():
    pts = np.tile([[0.5, 0.5]], (200, 1))
    assert dp.estimate_box_dimension(pts, SCALES) == 0.0


def test_box_dimension_preconditions():
    rng = np.random.default_rng(2)
    with pytest.raises(ValueError):
        dp.estimate_box_dimension(rng.random((50, 2)), SCALES)
    with pytest.raises(ValueError):
        dp.estimate_box_dimension(rng.random((200, 2)), SCALES[:2])
