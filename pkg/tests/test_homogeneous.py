import numpy as np
import pytest

from msgames import homogeneous as hg
from tests.conftest import (brute_force_shortest, int_det, random_lattice,
                            random_unimodular)


def test_u_of_zero_is_identity():
    np.testing.assert_array_equal(hg.u_of(np.zeros((2, 2))), np.eye(4))


def test_u_of_sl2():
    np.testing.assert_allclose(hg.u_of([[0.7]]), [[1.0, 0.7], [0.0, 1.0]])


def test_u_of_row_block():
    out = hg.u_of(np.array([[2.0, 3.0]]))
    expect = np.array([[1.0, 2.0, 3.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    np.testing.assert_array_equal(out, expect)


def test_flow_values():
    w1 = hg.WeightVector([1.0], [1.0])
    np.testing.assert_array_equal(hg.flow(0.0, w1), np.eye(2))
    np.testing.assert_allclose(hg.flow(1.0, w1),
                               np.diag([np.e, 1.0 / np.e]), rtol=1e-15)
    w = hg.WeightVector([1.0], [1.0 / 3.0, 2.0 / 3.0])
    np.testing.assert_allclose(hg.flow(3.0, w),
                               np.diag([np.exp(3), np.exp(-1), np.exp(-2)]),
                               rtol=1e-12)
    assert np.linalg.det(hg.flow(1.7, w)) == pytest.approx(1.0, abs=1e-12)


def test_weight_vector_validation():
    with pytest.raises(ValueError):
        hg.WeightVector([0.5], [1.0])
    with pytest.raises(ValueError):
        hg.WeightVector([1.0], [0.7, 0.2])
    with pytest.raises(ValueError):
        hg.WeightVector([1.0], [-0.5, 1.5])


def test_contraction_rates_row_major():
    w = hg.WeightVector([1.0], [1.0 / 3.0, 2.0 / 3.0])
    np.testing.assert_allclose(w.contraction_rates(), [4.0 / 3.0, 5.0 / 3.0])
    w2 = hg.WeightVector([0.25, 0.75], [0.5, 0.5])
    np.testing.assert_allclose(w2.contraction_rates(),
                               [0.75, 0.75, 1.25, 1.25])


def test_lattice_basis_rejects_non_unimodular():
    with pytest.raises(ValueError):
        hg.LatticeBasis(2.0 * np.eye(2))


def test_systole_identity():
    for k in (2, 3, 4):
        val, wit = hg.systole(hg.LatticeBasis(np.eye(k)))
        assert val == pytest.approx(1.0)
        np.testing.assert_array_equal(wit, np.eye(k, dtype=int)[0])


def test_systole_flow_lattice():
    w = hg.WeightVector([1.0], [1.0])
    for t in (0.5, 1.0, 2.0):
        val, wit = hg.systole(hg.LatticeBasis(hg.flow(t, w)))
        assert val == pytest.approx(np.exp(-t), rel=1e-12)
        np.testing.assert_array_equal(wit, [0, 1])


def test_systole_unipotent_half():
    B = hg.u_of([[0.5]])
    val, wit = hg.systole(hg.LatticeBasis(B))
    ref_val, _ = brute_force_shortest(B, box=3)
    assert val == pytest.approx(ref_val)
    assert val == pytest.approx(1.0)
    assert np.max(np.abs(B @ wit)) == pytest.approx(val)


def test_systole_matches_brute_force():
    rng = np.random.default_rng(23)
    for _ in range(50):
        k = int(rng.integers(2, 4))
        L = random_lattice(rng, k)
        val, wit = hg.systole(L)
        ref, _ = brute_force_shortest(L.matrix, box=8)
        assert val == pytest.approx(ref, rel=1e-10)
        assert np.max(np.abs(L.matrix @ wit)) == pytest.approx(val, rel=1e-10)
        g = np.gcd.reduce(np.abs(wit).astype(int))
        assert g == 1


def test_systole_dimension_guard():
    with pytest.raises(hg.DimensionTooLarge):
        hg.systole(hg.LatticeBasis(np.eye(7)))


def test_minkowski_style_bound():
    rng = np.random.default_rng(29)
    for _ in range(30):
        k = int(rng.integers(2, 5))
        L = random_lattice(rng, k)
        val, _ = hg.systole(L)
        assert val <= 2.0 * k


def test_systole_flow_profile_continuity():
    """Value curves are continuous with slope at most the extreme rate, and
    the reported witness always achieves the reported value."""
    rng = np.random.default_rng(31)
    w = hg.WeightVector([1.0], [1.0])
    for _ in range(100):
        L = random_lattice(rng, 2, spread=0.5)
        ts = np.linspace(0.0, 2.0, 41)
        vals = []
        for t in ts:
            B = hg.flow(float(t), w) @ L.matrix
            v, wit = hg.shortest_vector(B)
            assert np.max(np.abs(B @ wit)) == pytest.approx(v, rel=1e-12)
            vals.append(v)
        vals = np.asarray(vals)
        ratio = vals[1:] / vals[:-1]
        step = ts[1] - ts[0]
        assert np.all(ratio <= np.exp(step) + 1e-9)
        assert np.all(ratio >= np.exp(-step) - 1e-9)


def test_systole_invariant_under_integer_shift():
    rng = np.random.default_rng(37)
    w = hg.WeightVector([1.0], [1.0 / 3.0, 2.0 / 3.0])
    for _ in range(20):
        Y = rng.uniform(0, 1, size=(1, 2))
        shift = rng.integers(-3, 4, size=(1, 2))
        t = float(rng.uniform(0, 2))
        B1 = hg.flow(t, w) @ hg.u_of(Y)
        B2 = hg.flow(t, w) @ hg.u_of(Y + shift)
        v1, _ = hg.shortest_vector(B1)
        v2, _ = hg.shortest_vector(B2)
        assert v1 == pytest.approx(v2, abs=1e-9)


def test_vectors_below_threshold():
    out = hg.dangerous_vectors(hg.LatticeBasis(np.eye(2)), 1, 0.5)
    assert out == []
    w = hg.WeightVector([1.0], [1.0])
    out = hg.dangerous_vectors(hg.LatticeBasis(hg.flow(1.0, w)), 1, 0.5)
    assert len(out) == 1
    coeff, vec, norm = out[0]
    np.testing.assert_array_equal(coeff, [0, 1])
    assert norm == pytest.approx(np.exp(-1.0))


def test_dangerous_vectors_match_brute_force():
    w = hg.WeightVector([1.0], [1.0 / 3.0, 2.0 / 3.0])
    B = hg.flow(2.0, w) @ hg.u_of(np.array([[0.37, 0.21]]))
    out = hg.dangerous_vectors(hg.LatticeBasis(B), 1, 0.3)
    # reference: raw enumeration over a wide coefficient box
    found = set()
    for c, vec, norm in out:
        assert norm < 0.3
        assert np.max(np.abs(B @ c)) == pytest.approx(norm, rel=1e-10)
        found.add(tuple(int(x) for x in c))
    box = 10
    axes = [np.arange(-box, box + 1)] * 3
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    grid = grid[np.any(grid != 0, axis=1)]
    vals = np.max(np.abs(grid @ B.T), axis=1)
    expect = set()
    for c in grid[vals < 0.3]:
        if np.gcd.reduce(np.abs(c)) != 1:
            continue
        nz = np.nonzero(c)[0]
        if c[nz[0]] < 0:
            c = -c
        expect.add(tuple(int(x) for x in c))
    assert found == expect


def test_dangerous_vectors_dimension_guard():
    with pytest.raises(hg.DimensionTooLarge):
        hg.dangerous_vectors(hg.LatticeBasis(np.eye(4)), 1, 0.5)


def test_wedge_basis_identity_and_degree_one():
    np.testing.assert_array_equal(hg.wedge_basis(np.eye(3), 2), np.eye(3))
    M = np.diag([np.e, 1.0 / np.e])
    np.testing.assert_array_equal(hg.wedge_basis(M, 1), M)


def test_wedge_basis_weighted_flow():
    w = hg.WeightVector([1.0], [1.0 / 3.0, 2.0 / 3.0])
    t = 1.7
    W = hg.wedge_basis(hg.flow(t, w), 2)
    expect = np.diag(np.exp(np.array([2.0 / 3.0, 1.0 / 3.0, -1.0]) * t))
    np.testing.assert_allclose(W, expect, rtol=1e-12)


def test_wedge_functoriality():
    rng = np.random.default_rng(41)
    for _ in range(20):
        A = rng.uniform(-1, 1, size=(4, 4))
        B = rng.uniform(-1, 1, size=(4, 4))
        for d in (2, 3):
            lhs = hg.wedge_basis(A @ B, d)
            rhs = hg.wedge_basis(A, d) @ hg.wedge_basis(B, d)
            np.testing.assert_allclose(lhs, rhs, atol=1e-8)


def test_wedge_determinant_power():
    rng = np.random.default_rng(43)
    from math import comb
    M = rng.uniform(-1, 1, size=(4, 4))
    for d in (1, 2, 3):
        lhs = np.linalg.det(hg.wedge_basis(M, d))
        rhs = np.linalg.det(M) ** comb(3, d - 1)
        assert lhs == pytest.approx(rhs, rel=1e-8)


def test_representation_weights_and_mask():
    w = hg.WeightVector([1.0], [1.0 / 3.0, 2.0 / 3.0])
    rep1 = hg.RepresentationData.build(w, 1)
    np.testing.assert_allclose(rep1.weights, [1.0, -1.0 / 3.0, -2.0 / 3.0])
    np.testing.assert_array_equal(rep1.expanding, [True, False, False])
    rep2 = hg.RepresentationData.build(w, 2)
    np.testing.assert_allclose(rep2.weights, [2.0 / 3.0, 1.0 / 3.0, -1.0])
    np.testing.assert_array_equal(rep2.expanding, [True, True, False])


def test_projection_idempotent():
    w = hg.WeightVector([1.0], [0.5, 0.5])
    rep = hg.RepresentationData.build(w, 2)
    rng = np.random.default_rng(47)
    v = rng.uniform(-1, 1, size=rep.dim)
    once = rep.project_expanding(v)
    np.testing.assert_array_equal(rep.project_expanding(once), once)


def test_phi_poly_top_block_constant():
    w = hg.WeightVector([0.5, 0.5], [1.0])
    rep = hg.RepresentationData.build(w, 2)
    v = np.zeros(rep.dim)
    top = rep.idx.index((0, 1))
    v[top] = 1.0
    pm = hg.phi_poly(v, rep)
    for a in range(rep.dim):
        poly = pm.coords[a]
        if a == top:
            assert poly == {(0, 0): 1.0}
        else:
            assert all(abs(c) < 1e-15 for c in poly.values()) or poly == {}


def test_phi_poly_sl2_linear():
    w = hg.WeightVector([1.0], [1.0])
    rep = hg.RepresentationData.build(w, 1)
    pm = hg.phi_poly(np.array([3.0, 2.0]), rep)
    # expanding coordinate: p + q y;  other coordinate: constant q
    assert pm.coords[0] == {(0,): 3.0, (1,): 2.0}
    assert pm.coords[1] == {(0,): 2.0}
    np.testing.assert_allclose(pm.evaluate([0.5], block="expanding"), [4.0])
    assert pm.coeff_norm("expanding") == pytest.approx(3.0)


def test_phi_poly_linearity():
    w = hg.WeightVector([1.0], [1.0 / 3.0, 2.0 / 3.0])
    rep = hg.RepresentationData.build(w, 2)
    rng = np.random.default_rng(53)
    v1 = rng.uniform(-1, 1, size=rep.dim)
    v2 = rng.uniform(-1, 1, size=rep.dim)
    Y = rng.uniform(-1, 1, size=2)
    lhs = hg.phi_poly(v1 + v2, rep).evaluate(Y)
    rhs = hg.phi_poly(v1, rep).evaluate(Y) + hg.phi_poly(v2, rep).evaluate(Y)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_phi_poly_evaluate_matches_wedge_action():
    rng = np.random.default_rng(59)
    w = hg.WeightVector([1.0], [1.0 / 3.0, 2.0 / 3.0])
    for d in (1, 2):
        rep = hg.RepresentationData.build(w, d)
        for _ in range(10):
            v = rng.uniform(-1, 1, size=rep.dim)
            Y = rng.uniform(-1, 1, size=(1, 2))
            pm = hg.phi_poly(v, rep)
            direct = hg.wedge_basis(hg.u_of(Y), d) @ v
            np.testing.assert_allclose(pm.evaluate(Y.ravel()), direct,
                                       atol=1e-12)


def test_phi_poly_gradient_bound():
    w = hg.WeightVector([1.0], [1.0 / 3.0, 2.0 / 3.0])
    rep = hg.RepresentationData.build(w, 2)
    rng = np.random.default_rng(61)
    v = rng.uniform(-1, 1, size=rep.dim)
    pm = hg.phi_poly(v, rep)
    R = 0.5
    bound = pm.gradient_sum_bound(R, block="expanding")
    for _ in range(200):
        Y1 = rng.uniform(-R, R, size=2)
        Y2 = rng.uniform(-R, R, size=2)
        f1 = pm.evaluate(Y1, block="expanding")
        f2 = pm.evaluate(Y2, block="expanding")
        lhs = np.max(np.abs(f1 - f2))
        assert lhs <= bound * np.max(np.abs(Y1 - Y2)) + 1e-12


def test_expanding_check_true_cases():
    assert hg.expanding_check(hg.WeightVector([1.0], [1.0]), 1) == (True, 0)
    for s in ([1.0 / 3.0, 2.0 / 3.0], [0.5, 0.5]):
        w = hg.WeightVector([1.0], s)
        for d in (1, 2):
            verdict, kdim = hg.expanding_check(w, d)
            assert verdict and kdim == 0


def test_expanding_check_negative_control():
    w = hg.WeightVector([1.0], [1.0 / 3.0, 2.0 / 3.0])
    for d in (1, 2):
        verdict, kdim = hg.expanding_check(w, d, block="nonexpanding")
        assert not verdict
        assert kdim >= 1


def test_expanding_check_weight_stability():
    base = hg.WeightVector([1.0], [1.0 / 3.0, 2.0 / 3.0])
    for d in (1, 2):
        ref = hg.expanding_check(base, d)
        bumped = hg.WeightVector([1.0],
                                 [1.0 / 3.0 + 1e-6, 2.0 / 3.0 - 1e-6])
        assert hg.expanding_check(bumped, d) == ref


def test_expanding_block_never_shrinks_under_flow():
    rng = np.random.default_rng(67)
    w = hg.WeightVector([1.0], [1.0 / 3.0, 2.0 / 3.0])
    for d in (1, 2):
        rep = hg.RepresentationData.build(w, d)
        lam = rep.weights
        for _ in range(500):
            v = rng.uniform(-1, 1, size=rep.dim)
            t = float(rng.uniform(0, 4))
            flowed = np.exp(lam * t) * v
            before = np.max(np.abs(v[rep.expanding]))
            after = np.max(np.abs(flowed[rep.expanding]))
            assert after >= before - 1e-12


def test_flow_distance_zero_for_equal_cosets():
    x = hg.LatticeBasis(np.eye(2))
    assert hg.flow_distance(x, x) == pytest.approx(0.0, abs=1e-12)
    y = hg.LatticeBasis(hg.u_of([[1.0]]))  # same lattice, shifted basis
    assert hg.flow_distance(x, y) == pytest.approx(0.0, abs=1e-12)


def test_flow_distance_small_perturbation():
    rng = np.random.default_rng(71)
    x = hg.LatticeBasis(np.eye(2))
    E = rng.normal(size=(2, 2))
    E = 1e-4 * E / np.sqrt(np.sum(E * E))
    P = (np.eye(2) + E)
    P = P / np.sqrt(abs(np.linalg.det(P)))
    y = hg.LatticeBasis(P)
    d = hg.flow_distance(x, y)
    assert 0.5e-4 <= d <= 2e-4


def test_flow_distance_brute_force_cross_check():
    x = hg.LatticeBasis(np.eye(2))
    y = hg.LatticeBasis(hg.u_of([[0.35]]) @ np.diag([1.2, 1 / 1.2]))
    got = hg.flow_distance(x, y)
    best = np.inf
    Yinv = np.linalg.inv(y.matrix)
    for a in range(-3, 4):
        for b in range(-3, 4):
            for c in range(-3, 4):
                for d in range(-3, 4):
                    g = np.array([[a, b], [c, d]], dtype=float)
                    if abs(abs(a * d - b * c) - 1.0) > 1e-9:
                        continue
                    val = hg._mat_log_norm(Yinv @ x.matrix @ g)
                    val = min(val, hg._mat_log_norm(
                        np.linalg.solve(x.matrix, y.matrix @ g)))
                    best = min(best, val)
    assert got == pytest.approx(best, rel=1e-9)


def test_flow_distance_symmetry():
    rng = np.random.default_rng(73)
    for _ in range(25):
        x = random_lattice(rng, 2, spread=0.4)
        y = random_lattice(rng, 2, spread=0.4)
        d1 = hg.flow_distance(x, y)
        d2 = hg.flow_distance(y, x)
        if d1 < 1e17 and d2 < 1e17:
            assert d1 == pytest.approx(d2, abs=1e-9)


def test_segment_distances_match_single_calls():
    rng = np.random.default_rng(79)
    w = hg.WeightVector([1.0], [1.0])
    segment = np.stack([hg.flow(t, w) @ hg.u_of([[0.1]])
                        for t in np.linspace(0, 2, 9)])
    points = np.stack([random_lattice(rng, 2, spread=0.6).matrix
                       for _ in range(40)])
    batched = hg.segment_distances(points, segment)
    for i in range(len(points)):
        single = min(hg.flow_distance(hg.LatticeBasis(points[i]),
                                      hg.LatticeBasis(segment[j]))
                     for j in range(len(segment)))
        assert batched[i] == pytest.approx(single, abs=1e-9)


def test_pushed_frame_tracks_product():
    rng = np.random.default_rng(83)
    w = hg.WeightVector([1.0], [1.0])
    g0 = hg.u_of([[0.3]])
    frame = hg.PushedFrame(w, g0)
    product = g0.copy()
    for step in range(30):
        dt = float(rng.uniform(0.5, 1.5))
        delta = rng.uniform(-0.2, 0.2, size=1)
        frame.advance(dt, delta)
        product = hg.flow(dt, w) @ hg.u_of(delta.reshape(1, 1)) @ product
        assert abs(int_det(frame.U)) == 1
        if step < 10:
            # same lattice: frame.P = product @ U while the raw product is
            # still well-conditioned enough to compare elementwise
            recon = product @ frame.U
            np.testing.assert_allclose(frame.P, recon, rtol=1e-6, atol=1e-9)
        assert abs(abs(np.linalg.det(frame.P)) - 1.0) < 1e-6
    # the reduced frame stays numerically tame while the raw product blows up
    assert np.linalg.cond(frame.P) < 1e6
    assert np.linalg.cond(product) > 1e12


def test_lll_reduce_properties():
    rng = np.random.default_rng(89)
    for _ in range(20):
        k = int(rng.integers(2, 5))
        B = random_lattice(rng, k, spread=1.5).matrix
        Bred, U = hg.lll_reduce(B)
        np.testing.assert_allclose(Bred, B @ U, rtol=1e-9, atol=1e-12)
        assert abs(int_det(U)) == 1
        assert np.linalg.cond(Bred) <= np.linalg.cond(B) * 1.01 + 10.0


def test_basis_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(97)
    L = random_lattice(rng, 3)
    path = tmp_path / "basis.csv"
    hg.write_basis_csv(L, path)
    back = hg.read_basis_csv(path)
    np.testing.assert_allclose(back.matrix, L.matrix, rtol=1e-15)
