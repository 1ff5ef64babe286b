import numpy as np
import pytest

from msgames import contraction as ct
from msgames import game_engine as ge


def make_setup(rates=(1.0, 1.0), a=1.0, b=1.0, t1=1.0, dim=2):
    sg = ct.ContractionSemigroup.diagonal(list(rates))
    base = ct.AdmissibleBase.unit(dim)
    return ge.GameSetup(sg, base, ge.Schedule(t1=t1, a=a, b=b))


class CornerAlice:
    def move(self, trace, t):
        last = trace.last_domain()
        lo, _ = ct.legal_offset_box(last, t)
        return last.child(t, lo)


class CornerBob:
    def __init__(self, setup):
        self.setup = setup

    def move(self, trace, t):
        if not trace.moves:
            return ct.Domain.root(self.setup.semigroup, self.setup.base, t,
                                  translation=np.zeros(self.setup.semigroup.dim))
        last = trace.last_domain()
        lo, _ = ct.legal_offset_box(last, t)
        return last.child(t, lo)


class RandomPlayer:
    def __init__(self, setup, seed):
        self.setup = setup
        self.rng = np.random.default_rng(seed)

    def move(self, trace, t):
        if not trace.moves:
            h = self.rng.uniform(-1, 1, size=self.setup.semigroup.dim)
            return ct.Domain.root(self.setup.semigroup, self.setup.base, t,
                                  translation=h)
        last = trace.last_domain()
        lo, hi = ct.legal_offset_box(last, t)
        return last.child(t, self.rng.uniform(lo, hi))


class EscapingAlice:
    """Returns a correctly scaled domain far outside Bob's choice."""

    def move(self, trace, t):
        last = trace.last_domain()
        return last.child(t, np.full(last.semigroup.dim, 5.0))


def test_schedule_times():
    sch = ge.Schedule(t1=1.0, a=1.0, b=1.0)
    assert sch.bob_time(1) == pytest.approx(1.0)
    assert sch.alice_time(1) == pytest.approx(2.0)
    assert sch.alice_time(5) == pytest.approx(10.0)
    sch2 = ge.Schedule(t1=4.0, a=2.0, b=2.0)
    assert sch2.bob_time(3) == pytest.approx(12.0)


def test_schedule_rejects_increments_below_floor():
    with pytest.raises(ValueError):
        ge.Schedule(t1=1.0, a=0.5, b=1.0, a_star=0.6)
    with pytest.raises(ValueError):
        ge.Schedule(t1=1.0, a=1.0, b=0.2, a_star=0.6)
    with pytest.raises(ValueError):
        ge.Schedule(t1=0.0, a=1.0, b=1.0)


def test_play_corner_game_five_rounds():
    setup = make_setup()
    trace = ge.play(CornerAlice(), CornerBob(setup), setup, rounds=5)
    assert trace.error is None
    assert len(trace.moves) == 10
    assert trace.moves[-1].player == ge.ALICE
    assert trace.moves[-1].domain.t == pytest.approx(10.0)


def test_illegal_alice_aborts_with_partial_trace():
    setup = make_setup()
    trace = ge.play(EscapingAlice(), CornerBob(setup), setup, rounds=5)
    assert isinstance(trace.error, ge.InvalidMove)
    assert trace.error.player == ge.ALICE
    assert trace.error.round == 1
    assert len(trace.moves) == 1  # Bob's opening only


def test_validate_move_wrong_scale():
    setup = make_setup()
    trace = ge.play(CornerAlice(), CornerBob(setup), setup, rounds=1)
    last = trace.last_domain()
    bad = last.child(last.t + 0.5, np.zeros(2))  # Bob must move at t+b
    v = ge.validate_move(trace, bad, ge.BOB, 2)
    assert isinstance(v, ge.WrongScale)
    good = last.child(last.t + 1.0, np.zeros(2))
    assert ge.validate_move(trace, good, ge.BOB, 2) is None


def test_validate_move_not_contained():
    setup = make_setup()
    trace = ge.play(CornerAlice(), CornerBob(setup), setup, rounds=1)
    last = trace.last_domain()
    _, hi = ct.legal_offset_box(last, last.t + 1.0)
    bad = last.child(last.t + 1.0, hi + 0.5)
    v = ge.validate_move(trace, bad, ge.BOB, 2)
    assert isinstance(v, ge.NotContained)


def test_random_games_nested_and_contain_point():
    setup = make_setup()
    for seed in range(100):
        trace = ge.play(RandomPlayer(setup, 1000 + seed),
                        RandomPlayer(setup, 2000 + seed), setup, rounds=12)
        assert trace.error is None
        # strict nesting re-checked pairwise
        for prev, cur in zip(trace.moves, trace.moves[1:]):
            assert ct.fits_inside(cur.domain, prev.domain)
        # the returned point lies in every recorded domain
        for q in ge.pulled_point_coordinates(trace):
            assert setup.base.contains(q, tol=1e-10)


def test_intersection_point_single_move():
    setup = make_setup(t1=1.0)
    bob = CornerBob(setup)
    trace = ge.GameTrace(setup)
    d = bob.move(trace, 1.0)
    trace.moves.append(ge.Move(ge.BOB, 1, d))
    pt, radius = ge.intersection_point(trace)
    np.testing.assert_allclose(pt, [np.exp(-1) / 2] * 2, rtol=1e-12)
    assert radius <= np.exp(-1) + 1e-15


def test_intersection_radius_after_50_rounds():
    setup = make_setup()
    trace = ge.play(CornerAlice(), CornerBob(setup), setup, rounds=50)
    _, radius = ge.intersection_point(trace)
    sg = setup.semigroup
    assert radius <= sg.c0 * np.exp(-sg.sigma * (1.0 + 99.0)) * (1 + 1e-12)


def test_radius_decay_per_round_exact():
    setup = make_setup()
    radii = []
    for rounds in (3, 4, 5, 6):
        trace = ge.play(CornerAlice(), CornerBob(setup), setup, rounds=rounds)
        radii.append(ge.intersection_point(trace)[1])
    for r_prev, r_next in zip(radii, radii[1:]):
        assert r_prev / r_next == pytest.approx(np.exp(2.0), rel=1e-9)


def test_empty_trace_raises():
    setup = make_setup()
    with pytest.raises(ge.EmptyTrace):
        ge.intersection_point(ge.GameTrace(setup))


def test_trace_roundtrip(tmp_path):
    setup = make_setup()
    trace = ge.play(RandomPlayer(setup, 5), RandomPlayer(setup, 6), setup,
                    rounds=20, seeds={"alice": 5, "bob": 6})
    path = tmp_path / "game.jsonl"
    ge.write_trace(trace, path)
    back = ge.read_trace(path)
    assert ge.replay_check(back) == []
    assert back.rounds_completed() == trace.rounds_completed()
    p1, r1 = ge.intersection_point(trace)
    p2, r2 = ge.intersection_point(back)
    np.testing.assert_allclose(p1, p2, atol=1e-10)
    assert r1 == pytest.approx(r2)


def test_write_is_deterministic(tmp_path):
    setup = make_setup()
    blobs = []
    for run in range(2):
        trace = ge.play(RandomPlayer(setup, 42), RandomPlayer(setup, 43),
                        setup, rounds=15, seeds={"alice": 42, "bob": 43})
        path = tmp_path / f"run{run}.jsonl"
        ge.write_trace(trace, path)
        blobs.append(path.read_bytes())
    assert blobs[0] == blobs[1]


def test_truncated_trace_file_rejected(tmp_path):
    setup = make_setup()
    trace = ge.play(RandomPlayer(setup, 5), RandomPlayer(setup, 6), setup,
                    rounds=5)
    path = tmp_path / "game.jsonl"
    ge.write_trace(trace, path)
    data = path.read_bytes()
    clipped = tmp_path / "clipped.jsonl"
    clipped.write_bytes(data[: len(data) - 25])
    with pytest.raises(ge.TraceFormatError):
        ge.read_trace(clipped)


def test_corrupt_header_rejected(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"record":"move","round":1}\n')
    with pytest.raises(ge.TraceFormatError):
        ge.read_trace(path)
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    with pytest.raises(ge.TraceFormatError):
        ge.read_trace(empty)


def test_replay_check_flags_mutation(tmp_path):
    setup = make_setup()
    trace = ge.play(RandomPlayer(setup, 9), RandomPlayer(setup, 10), setup,
                    rounds=8)
    path = tmp_path / "game.jsonl"
    ge.write_trace(trace, path)
    lines = path.read_text().splitlines()
    import json
    rec = json.loads(lines[4])
    rec["offset"][0] += 1.0
    lines[4] = json.dumps(rec, sort_keys=True, separators=(",", ":"))
    mutated = tmp_path / "mutated.jsonl"
    mutated.write_text("\n".join(lines) + "\n")
    back = ge.read_trace(mutated)
    assert ge.replay_check(back) != []


def test_final_point_mp_matches_float():
    setup = make_setup()
    trace = ge.play(RandomPlayer(setup, 21), RandomPlayer(setup, 22), setup,
                    rounds=6)
    pt, _ = ge.intersection_point(trace)
    mp_pt = ge.final_point_mp(trace)
    for a, b in zip(pt, mp_pt):
        assert abs(a - float(b)) < 1e-12
