"""Referee for the modified Schmidt game: schedules, move validation, traces."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .contraction import (
    AdmissibleBase,
    ContractionSemigroup,
    Domain,
    diameter_bound,
    fits_inside,
)

BOB = "bob"
ALICE = "alice"


class EmptyTrace(Exception):
    pass


class InvalidMove(Exception):
    def __init__(self, player: str, round: int, reason: str):
        self.player = player
        self.round = round
        self.reason = reason
        super().__init__(f"{player} round {round}: {reason}")


@dataclass(frozen=True)
class WrongScale:
    expected: float
    got: float

    def describe(self) -> str:
        return f"wrong scale: expected t={self.expected!r}, got t={self.got!r}"


@dataclass(frozen=True)
class NotContained:
    def describe(self) -> str:
        return "domain not contained in the previous move"


@dataclass(frozen=True)
class Schedule:
    """Arithmetic move schedule: Bob plays at t_k = t1 + (k-1)(a+b),
    Alice answers at t_k + a.  Both increments must exceed a_star."""

    t1: float
    a: float
    b: float
    a_star: float = 0.0

    def __post_init__(self):
        if self.t1 <= 0:
            raise ValueError("t1 must be positive")
        if self.a <= self.a_star or self.b <= self.a_star:
            raise ValueError("schedule increments a and b must both exceed a_star")

    def bob_time(self, k: int) -> float:
        return self.t1 + (k - 1) * (self.a + self.b)

    def alice_time(self, k: int) -> float:
        return self.bob_time(k) + self.a


@dataclass(frozen=True, eq=False)
class GameSetup:
    semigroup: ContractionSemigroup
    base: AdmissibleBase
    schedule: Schedule


@dataclass(frozen=True, eq=False)
class Move:
    player: str
    round: int
    domain: Domain
    annotations: dict = field(default_factory=dict)


@dataclass(eq=False)
class GameTrace:
    setup: GameSetup
    moves: list = field(default_factory=list)
    seeds: dict = field(default_factory=dict)
    context: dict = field(default_factory=dict)
    error: Optional[InvalidMove] = None

    def last_domain(self) -> Domain:
        if not self.moves:
            raise EmptyTrace("trace has no moves")
        return self.moves[-1].domain

    def rounds_completed(self) -> int:
        return sum(1 for m in self.moves if m.player == ALICE)


def validate_move(trace: GameTrace, domain: Domain, player: str, round: int,
                  tol: float = 1e-12):
    """None if the move is legal, otherwise a violation descriptor."""
    sched = trace.setup.schedule
    expected = sched.bob_time(round) if player == BOB else sched.alice_time(round)
    if abs(domain.t - expected) > tol:
        return WrongScale(expected, domain.t)
    if trace.moves:
        if not fits_inside(domain, trace.last_domain(), tol=tol):
            return NotContained()
    return None


def play(alice, bob, setup: GameSetup, rounds: int,
         seeds: Optional[dict] = None, context: Optional[dict] = None) -> GameTrace:
    """Run the game, Bob opening each round.  Every proposed move is
    validated; the first illegal one aborts, leaving the partial trace
    with the error attached."""
    trace = GameTrace(setup, seeds=dict(seeds or {}), context=dict(context or {}))
    for k in range(1, rounds + 1):
        for player, strat, t in ((BOB, bob, setup.schedule.bob_time(k)),
                                 (ALICE, alice, setup.schedule.alice_time(k))):
            out = strat.move(trace, t)
            domain, notes = out if isinstance(out, tuple) else (out, {})
            bad = validate_move(trace, domain, player, k)
            if bad is not None:
                trace.error = InvalidMove(player, k, bad.describe())
                return trace
            trace.moves.append(Move(player, k, domain, notes))
    return trace


def intersection_point(trace: GameTrace) -> tuple[np.ndarray, float]:
    """Center of the last domain and a radius certified to contain the
    single point of the completed game."""
    last = trace.last_domain()
    return last.center(), diameter_bound(trace.setup.semigroup, last.t)


def pulled_point_coordinates(trace: GameTrace) -> list:
    """Coordinates of the final domain's center in every move's base frame.

    Runs the chain backwards, so the result stays exact at any depth; the
    k-th entry lies in the base box iff the intersection point lies in
    move k's domain.
    """
    if not trace.moves:
        raise EmptyTrace("trace has no moves")
    sg = trace.setup.semigroup
    base = trace.setup.base
    out = [None] * len(trace.moves)
    q = base.center.copy()
    out[-1] = q
    for i in range(len(trace.moves) - 1, 0, -1):
        dom = trace.moves[i].domain
        gap = dom.t - trace.moves[i - 1].domain.t
        if sg.kind == "diagonal":
            q = dom.delta + np.exp(-sg.rates * gap) * q
        else:
            q = dom.delta + sg.matrix(gap) @ q
        out[i - 1] = q
    return out


def final_point_mp(trace: GameTrace, dps: int = 80):
    """Final point as high-precision mpmath numbers (diagonal kind only).

    The chain sum h1 + sum_j Phi_{t_j}(delta_j) is evaluated with dps
    digits, recovering the intersection point far beyond double
    resolution.  Needed e.g. to read continued fractions off deep games.
    """
    from mpmath import mp, mpf

    sg = trace.setup.semigroup
    if sg.kind != "diagonal":
        raise NotImplementedError("high-precision extraction needs a diagonal semigroup")
    old = mp.dps
    mp.dps = dps
    try:
        root = trace.moves[0].domain
        coords = [mpf(float(x)) for x in root.translation]
        prev_t = root.t
        for mv in trace.moves[1:]:
            d = mv.domain
            for i in range(sg.dim):
                coords[i] += mp.e ** (-mpf(float(sg.rates[i])) * mpf(float(prev_t))) \
                    * mpf(float(d.delta[i]))
            prev_t = d.t
        last = trace.last_domain()
        for i in range(sg.dim):
            coords[i] += mp.e ** (-mpf(float(sg.rates[i])) * mpf(float(last.t))) \
                * mpf(float(trace.setup.base.center[i]))
        return coords
    finally:
        mp.dps = old


# ---------------------------------------------------------------------------
# trace files: one JSON record per line, floats at 12 significant digits

def _r12(x):
    if isinstance(x, float):
        return float(f"{x:.12g}")
    if isinstance(x, (np.floating,)):
        return float(f"{float(x):.12g}")
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.ndarray):
        return [_r12(v) for v in x.tolist()]
    if isinstance(x, (list, tuple)):
        return [_r12(v) for v in x]
    if isinstance(x, dict):
        return {k: _r12(v) for k, v in x.items()}
    return x


def _dumps(obj) -> str:
    return json.dumps(_r12(obj), sort_keys=True, separators=(",", ":"))


def trace_header(trace: GameTrace) -> dict:
    sg = trace.setup.semigroup
    sched = trace.setup.schedule
    head = {
        "record": "header",
        "format": "msgames.trace.v1",
        "semigroup": {"kind": sg.kind, "sigma": sg.sigma, "c0": sg.c0},
        "base": {"lower": trace.setup.base.lower, "upper": trace.setup.base.upper},
        "schedule": {"t1": sched.t1, "a": sched.a, "b": sched.b, "a_star": sched.a_star},
        "seeds": trace.seeds,
        "context": trace.context,
    }
    if sg.kind == "diagonal":
        head["semigroup"]["rates"] = sg.rates
    else:
        head["semigroup"]["generator"] = sg.generator
    if trace.error is not None:
        head["error"] = {"player": trace.error.player, "round": trace.error.round,
                         "reason": trace.error.reason}
    return head


def write_trace(trace: GameTrace, path) -> None:
    lines = [_dumps(trace_header(trace))]
    for mv in trace.moves:
        rec = {
            "record": "move",
            "round": mv.round,
            "player": mv.player,
            "t": mv.domain.t,
            "translation": mv.domain.translation,
            "offset": mv.domain.delta if mv.domain.delta is not None else None,
            "annotations": mv.annotations,
        }
        lines.append(_dumps(rec))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


class TraceFormatError(Exception):
    pass


def read_trace(path) -> GameTrace:
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise TraceFormatError("empty trace file")
    try:
        head = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise TraceFormatError(f"bad header: {e}") from e
    if head.get("record") != "header":
        raise TraceFormatError("first record is not a header")
    sg_info = head["semigroup"]
    if sg_info["kind"] == "diagonal":
        sg = ContractionSemigroup.diagonal(sg_info["rates"], c0=sg_info["c0"])
        if abs(sg.sigma - sg_info["sigma"]) > 1e-9:
            sg = ContractionSemigroup(sg.dim, "diagonal", sg_info["sigma"],
                                      sg_info["c0"], rates=np.asarray(sg_info["rates"]))
    else:
        sg = ContractionSemigroup.general(np.asarray(sg_info["generator"]),
                                          sigma=sg_info["sigma"], c0=sg_info["c0"])
    base = AdmissibleBase(np.asarray(head["base"]["lower"]),
                          np.asarray(head["base"]["upper"]))
    s = head["schedule"]
    setup = GameSetup(sg, base, Schedule(s["t1"], s["a"], s["b"], s.get("a_star", 0.0)))
    trace = GameTrace(setup, seeds=head.get("seeds", {}), context=head.get("context", {}))
    prev = None
    for i, ln in enumerate(lines[1:], start=2):
        try:
            rec = json.loads(ln)
        except json.JSONDecodeError as e:
            raise TraceFormatError(f"line {i}: {e}") from e
        if rec.get("record") != "move":
            raise TraceFormatError(f"line {i}: unexpected record type")
        for key in ("round", "player", "t", "translation"):
            if key not in rec:
                raise TraceFormatError(f"line {i}: move record missing {key!r}")
        if prev is None or rec.get("offset") is None:
            dom = Domain.root(sg, base, rec["t"], np.asarray(rec["translation"]))
        else:
            dom = prev.child(rec["t"], np.asarray(rec["offset"]))
        trace.moves.append(Move(rec["player"], rec["round"], dom,
                                rec.get("annotations", {})))
        prev = dom
    if "error" in head:
        err = head["error"]
        trace.error = InvalidMove(err["player"], err["round"], err["reason"])
    return trace


def replay_check(trace: GameTrace, tol: float = 1e-12) -> list:
    """Re-validate every recorded move; a list of problem strings, empty if clean."""
    problems = []
    shadow = GameTrace(trace.setup, seeds=trace.seeds, context=trace.context)
    for mv in trace.moves:
        bad = validate_move(shadow, mv.domain, mv.player, mv.round, tol=tol)
        if bad is not None:
            problems.append(f"{mv.player} round {mv.round}: {bad.describe()}")
            break
        shadow.moves.append(mv)
    return problems
