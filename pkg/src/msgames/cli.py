"""Batch front-end: configure, run, verify, and export all experiments.

Configuration is TOML; traces are JSONL with floats at 12 significant
digits, so identical configs and seeds give byte-identical files; audits
and tabular reports are CSV.  Exit codes: 0 success, 1 verification
failure (an illegal move, a failed strategy certificate, an inconsistent
audit), 2 config or parse error with a diagnostic naming the field.

The verify subcommand replays a trace three ways: the referee's legality
check, a cross-check of every stored translation against the rebuilt
domain chain, and a full re-run of the deterministic strategies from the
recorded seeds, comparing every move and every numeric annotation within
1e-8.  Strategy certificates (avoidance clearances, bounded-orbit
conditions) are then re-derived with independent arithmetic.
"""

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .contraction import AdmissibleBase, TooSmallScale
from .game_engine import (ALICE, GameSetup, GameTrace, InvalidMove, Schedule,
                          TraceFormatError, intersection_point, play,
                          read_trace, replay_check, write_trace)
from .diophantine import bad_margin, dani_audit, write_audit_csv
from .homogeneous import LatticeBasis, WeightVector, expanding_check
from .strategies import (AvoidanceTarget, BoundedStrategyState,
                         CalibrationFailure, NoSafeBall, NoScaleFound,
                         TooManyDangerous, alice_avoid, alice_dummy,
                         alice_intersect, alice_stay_bounded,
                         bob_cusp_seeking, bob_random, bob_target_seeking,
                         calibrate_transversality, verify_bounded_certificates,
                         verify_clearances, weight_semigroup)


class ConfigError(Exception):
    """Bad or missing configuration value; message names the field."""


def _fmt(x) -> str:
    return f"{float(x):.12g}"


# ---------------------------------------------------------------------------
# config loading

def _load_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"TOML parse: {e}")


def _table(cfg: dict, name: str) -> dict:
    tbl = cfg.get(name, {})
    if not isinstance(tbl, dict):
        raise ConfigError(f"[{name}] must be a table")
    return tbl


def _floats(tbl: dict, key: str, where: str):
    if key not in tbl:
        raise ConfigError(f"missing field [{where}].{key}")
    try:
        return [float(v) for v in tbl[key]]
    except (TypeError, ValueError):
        raise ConfigError(f"[{where}].{key} must be a list of numbers")


def _matrix(value, where: str, k=None) -> np.ndarray:
    try:
        M = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"[{where}] must be a matrix (list of rows)")
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ConfigError(f"[{where}] must be square, got shape {M.shape}")
    if k is not None and M.shape[0] != k:
        raise ConfigError(f"[{where}] must be {k}x{k} for these weights")
    return M


def _basis(value, where: str, k=None) -> LatticeBasis:
    M = _matrix(value, where, k)
    try:
        return LatticeBasis(M)
    except ValueError as e:
        raise ConfigError(f"[{where}] {e}")


def _weights(cfg: dict) -> WeightVector:
    tbl = _table(cfg, "weights")
    try:
        return WeightVector(tuple(_floats(tbl, "r", "weights")),
                            tuple(_floats(tbl, "s", "weights")))
    except ValueError as e:
        raise ConfigError(f"[weights] {e}")


def _base(cfg: dict, w: WeightVector) -> AdmissibleBase:
    ell = w.m * w.n
    tbl = _table(cfg, "base")
    if not tbl:
        return AdmissibleBase(np.zeros(ell), np.ones(ell))
    try:
        return AdmissibleBase(np.array(_floats(tbl, "lower", "base")),
                              np.array(_floats(tbl, "upper", "base")))
    except ValueError as e:
        raise ConfigError(f"[base] {e}")


def _schedule(cfg: dict) -> Schedule:
    tbl = _table(cfg, "schedule")
    for key in ("t1", "a", "b"):
        if key not in tbl:
            raise ConfigError(f"missing field [schedule].{key}")
    try:
        return Schedule(float(tbl["t1"]), float(tbl["a"]), float(tbl["b"]),
                        float(tbl.get("a_star", 0.0)))
    except ValueError as e:
        raise ConfigError(f"[schedule] {e}")


def _basepoint(cfg: dict, k: int) -> LatticeBasis:
    tbl = _table(cfg, "basepoint")
    if "matrix" not in tbl:
        return LatticeBasis(np.eye(k))
    return _basis(tbl["matrix"], "basepoint.matrix", k)


def _out_dir(args) -> Path:
    out = Path(args.out if args.out is not None else ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _seed_of(args, tbl: dict, default: int = 0) -> int:
    if getattr(args, "seed", None) is not None:
        return int(args.seed)
    return int(tbl.get("seed", default))


# ---------------------------------------------------------------------------
# strategy construction from config / trace context

def _avoid_section(cfg: dict, w: WeightVector, base: AdmissibleBase,
                   sched: Schedule) -> dict:
    """Avoidance parameters with defaults; calibration happens later."""
    tbl = _table(cfg, "avoid")
    k = w.k
    z = _basis(tbl["target"], "avoid.target", k) if "target" in tbl \
        else LatticeBasis(np.eye(k))
    return {"z": z,
            "gap_factor": int(tbl.get("gap_factor", 1)),
            "samples": int(tbl.get("samples", 10 ** 4)),
            "seed": int(tbl.get("calibrate_seed", 0))}


def _calibrated_target(sec: dict, w: WeightVector, base: AdmissibleBase,
                       sched: Schedule) -> AvoidanceTarget:
    try:
        return AvoidanceTarget.calibrate(
            sec["z"], w, base, sched.a, sched.b, gap_factor=sec["gap_factor"],
            seed=sec["seed"], samples=sec["samples"])
    except TooSmallScale as e:
        raise ConfigError(f"[schedule] a={sched.a:g}: {e}")


def _target_context(target: AvoidanceTarget, sec: dict) -> dict:
    return {"z": target.z.matrix, "T": target.T, "eta": target.eta,
            "N": target.N, "delta": target.delta, "epsilon": target.epsilon,
            "lam": target.lam, "eps0": target.eps0,
            "gap_factor": sec["gap_factor"], "samples": sec["samples"],
            "calibrate_seed": sec["seed"]}


def _target_from_context(ctx: dict) -> AvoidanceTarget:
    return AvoidanceTarget(LatticeBasis(np.array(ctx["z"])), float(ctx["T"]),
                           float(ctx["eta"]), int(ctx["N"]),
                           float(ctx["delta"]), float(ctx["epsilon"]),
                           float(ctx["lam"]), float(ctx["eps0"]))


def _bounded_section(cfg: dict) -> dict:
    tbl = _table(cfg, "bounded")
    sec = {"danger_bound": tbl.get("danger_bound"),
           "c_ball": tbl.get("c_ball"),
           "gap_bound": int(tbl.get("gap_bound", 1))}
    if sec["danger_bound"] is not None:
        sec["danger_bound"] = int(sec["danger_bound"])
    if sec["c_ball"] is not None:
        sec["c_ball"] = float(sec["c_ball"])
    return sec


def _bounded_state(sec: dict, basepoint: LatticeBasis,
                   w: WeightVector) -> BoundedStrategyState:
    try:
        return BoundedStrategyState(basepoint, w, r=sec["danger_bound"],
                                    c_ball=sec["c_ball"],
                                    gap_bound=sec["gap_bound"])
    except ValueError as e:
        raise ConfigError(f"[bounded] {e}")


def _build_bob(kind: str, w: WeightVector, basepoint: LatticeBasis,
               seed: int, grid: int, opening: float, z: LatticeBasis):
    if kind == "random":
        return bob_random(seed=seed, opening_halfwidth=opening)
    if kind == "cusp_seeking":
        return bob_cusp_seeking(w, basepoint, seed=seed, grid=grid,
                                opening_halfwidth=opening)
    if kind == "target_seeking":
        return bob_target_seeking(z, w, basepoint, seed=seed, grid=grid,
                                  opening_halfwidth=opening)
    raise ConfigError(f"[play].bob unknown kind {kind!r}")


# ---------------------------------------------------------------------------
# trace verification core (shared by `play` summaries and `verify`)

def _compare_annotations(stored: dict, fresh: dict, where: str,
                         tol: float) -> list:
    problems = []
    for key, sv in stored.items():
        if key not in fresh:
            problems.append(f"{where}: annotation {key!r} not re-derived")
            continue
        fv = fresh[key]
        if isinstance(sv, (int, float)) and isinstance(fv, (int, float)) \
                and not isinstance(sv, bool):
            if abs(float(sv) - float(fv)) > tol:
                problems.append(f"{where}: annotation {key!r} differs: "
                                f"stored {sv!r}, re-derived {fv!r}")
        elif isinstance(sv, list):
            if _r12_eq(sv, fv, tol) is False:
                problems.append(f"{where}: annotation {key!r} differs")
        elif sv != fv:
            problems.append(f"{where}: annotation {key!r} differs: "
                            f"stored {sv!r}, re-derived {fv!r}")
    return problems


def _r12_eq(a, b, tol) -> bool:
    if isinstance(a, list) and isinstance(b, (list, tuple, np.ndarray)):
        b = list(b)
        return len(a) == len(b) and all(_r12_eq(x, y, tol)
                                        for x, y in zip(a, b))
    if isinstance(a, (int, float)) and isinstance(b, (int, float, np.floating,
                                                      np.integer)):
        return abs(float(a) - float(b)) <= tol
    return a == b


def _players_from_context(ctx: dict, setup: GameSetup):
    """Rebuild both strategies exactly as `play`/`intersect-demo` made
    them, from the trace header context.  Avoidance constants are
    recalibrated from the stored calibration seed so the rebuilt strategy
    is the original one at full precision, then cross-checked against the
    stored constants.  Raises ConfigError when the context is too thin."""
    for key in ("weights", "basepoint", "alice", "bob", "seeds"):
        if key not in ctx:
            raise ConfigError(f"trace context missing field {key!r}")
    w = WeightVector(tuple(ctx["weights"]["r"]), tuple(ctx["weights"]["s"]))
    basepoint = LatticeBasis(np.array(ctx["basepoint"]))
    sched = setup.schedule
    seeds = ctx["seeds"]
    grid = int(ctx.get("grid", 5))
    opening = float(ctx.get("opening", 0.5))
    bob_z = LatticeBasis(np.array(ctx["bob_target"])) \
        if "bob_target" in ctx else LatticeBasis(np.eye(w.k))
    bob = _build_bob(ctx["bob"], w, basepoint, int(seeds["bob"]), grid,
                     opening, bob_z)

    checks = []
    problems = []

    def rebuilt_target(sub_ctx):
        stored = _target_from_context(sub_ctx)
        if "samples" not in sub_ctx or "calibrate_seed" not in sub_ctx:
            return stored
        sec = {"z": stored.z, "gap_factor": int(sub_ctx.get("gap_factor", 1)),
               "samples": int(sub_ctx["samples"]),
               "seed": int(sub_ctx["calibrate_seed"])}
        fresh = _calibrated_target(sec, w, setup.base, sched)
        for name in ("T", "eta", "N", "delta", "epsilon", "lam", "eps0"):
            if abs(float(getattr(fresh, name))
                   - float(getattr(stored, name))) > 1e-8:
                problems.append(f"avoidance constant {name} in the header "
                                f"does not match recalibration")
        return fresh

    def component_of(kind, sub_ctx, component):
        if kind == "avoid":
            target = rebuilt_target(sub_ctx)
            checks.append(("avoid", target, component))
            return alice_avoid(target, w, basepoint)
        if kind == "stay_bounded":
            state = _bounded_state(
                {"danger_bound": sub_ctx.get("danger_bound"),
                 "c_ball": sub_ctx.get("c_ball"),
                 "gap_bound": int(sub_ctx.get("gap_bound", 1))},
                basepoint, w)
            checks.append(("bounded", state, component))
            return alice_stay_bounded(state)
        if kind == "dummy":
            return alice_dummy()
        if kind == "random":
            return bob_random(seed=int(seeds.get("alice", 1)))
        raise ConfigError(f"trace context: unknown alice kind {kind!r}")

    if ctx["alice"] == "intersect":
        comps = [component_of(c["kind"], c, i)
                 for i, c in enumerate(ctx["components"])]
        alice = alice_intersect(comps)
    else:
        alice = component_of(ctx["alice"],
                             ctx.get("avoid") or ctx.get("bounded") or {},
                             None)
    return alice, bob, w, basepoint, checks, problems


def _rerun_problems(alice, bob, trace: GameTrace, raw_moves: list,
                    tol: float = 1e-8) -> list:
    """Re-run the experiment from the recorded seeds and compare each raw
    file record against the regenerated game.

    Replaying prefixes parsed at 12 significant digits cannot work here:
    a rounding error in the opening translation is amplified by e^(sigma t)
    through the expanding dynamics.  The de-novo re-run reproduces the
    original full-precision game, so the only tolerated difference is the
    file's own rounding."""
    ctx = trace.context
    rerun = play(alice, bob, trace.setup, int(ctx["rounds"]),
                 seeds=trace.seeds, context=ctx)
    if rerun.error is not None:
        return [f"re-run aborted: {rerun.error}"]
    if len(rerun.moves) != len(raw_moves):
        return [f"re-run produced {len(rerun.moves)} moves, file has "
                f"{len(raw_moves)}"]
    for rec, mv in zip(raw_moves, rerun.moves):
        where = f"{rec.get('player', '?')} round {rec.get('round', '?')}"
        if rec.get("player") != mv.player or rec.get("round") != mv.round:
            return [f"{where}: move order differs from the re-run"]
        if abs(float(rec["t"]) - mv.domain.t) > 1e-9:
            return [f"{where}: move time differs from the re-run"]
        stored = np.asarray(rec["translation"], dtype=float)
        if stored.shape != mv.domain.translation.shape or not np.allclose(
                stored, mv.domain.translation, atol=tol, rtol=0):
            return [f"{where}: stored translation differs from the re-run"]
        if rec.get("offset") is not None:
            off = np.asarray(rec["offset"], dtype=float)
            if not np.allclose(off, mv.domain.delta, atol=tol, rtol=0):
                return [f"{where}: stored offset differs from the re-run"]
        out = _compare_annotations(rec.get("annotations", {}),
                                   mv.annotations, where, tol)
        if out:
            return out
    return []


def _certificate_problems(trace: GameTrace, checks, w: WeightVector,
                          basepoint: LatticeBasis) -> tuple[list, list]:
    """Independent re-derivation of every strategy certificate on the
    trace; returns (problems, one-line stats)."""
    problems, stats = [], []
    for kind, obj, component in checks:
        if kind == "avoid":
            rows = verify_clearances(trace, obj, w, basepoint,
                                     component=component)
            bad = [r for r in rows if r[2] <= obj.eta]
            tag = "" if component is None else f" component {component}"
            if bad:
                problems.append(
                    f"avoidance{tag}: {len(bad)}/{len(rows)} clearances "
                    f"at or below eta={obj.eta:.3g}")
            stats.append(f"clearances{tag} {len(rows) - len(bad)}/{len(rows)}")
        else:
            rows = verify_bounded_certificates(trace, obj,
                                               component=component)
            bad = [r for r in rows if not r["ok"]]
            tag = "" if component is None else f" component {component}"
            if bad:
                problems.append(f"bounded{tag}: {len(bad)}/{len(rows)} "
                                f"certificates fail")
            stats.append(f"certificates{tag} {len(rows) - len(bad)}/{len(rows)}")
    return problems, stats


def _raw_translation_problems(path, trace: GameTrace,
                              tol: float = 1e-8) -> list:
    """Cross-check each stored translation against the rebuilt chain.

    read_trace recomputes child translations from offsets, so a corrupted
    translation field is only visible against the raw records."""
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    problems = []
    for i, ln in enumerate(lines[1:]):
        if i >= len(trace.moves):
            break
        stored = np.asarray(json.loads(ln)["translation"], dtype=float)
        derived = trace.moves[i].domain.translation
        if stored.shape != derived.shape or \
                not np.allclose(stored, derived, atol=tol, rtol=0):
            mv = trace.moves[i]
            problems.append(f"{mv.player} round {mv.round}: stored "
                            f"translation disagrees with the domain chain")
    return problems


# ---------------------------------------------------------------------------
# subcommands

def cmd_play(args) -> int:
    cfg = _load_toml(args.config)
    w = _weights(cfg)
    base = _base(cfg, w)
    sched = _schedule(cfg)
    basepoint = _basepoint(cfg, w.k)
    setup = GameSetup(weight_semigroup(w, base), base, sched)
    tbl = _table(cfg, "play")
    alice_kind = tbl.get("alice", "dummy")
    bob_kind = tbl.get("bob", "random")
    rounds = int(args.rounds if args.rounds is not None
                 else tbl.get("rounds", 30))
    seed = _seed_of(args, tbl)
    grid = int(tbl.get("grid", 5))
    opening = float(tbl.get("opening", 0.5))
    alice_seed = int(tbl.get("alice_seed", seed + 1))

    context = {"experiment": "play", "alice": alice_kind, "bob": bob_kind,
               "rounds": rounds, "grid": grid, "opening": opening,
               "weights": {"r": w.r, "s": w.s},
               "basepoint": basepoint.matrix,
               "seeds": {"bob": seed, "alice": alice_seed}}
    checks = []
    if alice_kind == "avoid":
        sec = _avoid_section(cfg, w, base, sched)
        target = _calibrated_target(sec, w, base, sched)
        context["avoid"] = _target_context(target, sec)
        alice = alice_avoid(target, w, basepoint)
        checks.append(("avoid", target, None))
    elif alice_kind == "stay_bounded":
        sec = _bounded_section(cfg)
        state = _bounded_state(sec, basepoint, w)
        context["bounded"] = dict(sec)
        alice = alice_stay_bounded(state)
        checks.append(("bounded", state, None))
    elif alice_kind == "dummy":
        alice = alice_dummy()
    elif alice_kind == "random":
        alice = bob_random(seed=alice_seed)
    else:
        raise ConfigError(f"[play].alice unknown kind {alice_kind!r}")

    bob_z = LatticeBasis(np.eye(w.k))
    if "bob_target" in tbl:
        bob_z = _basis(tbl["bob_target"], "play.bob_target", w.k)
        context["bob_target"] = bob_z.matrix
    bob = _build_bob(bob_kind, w, basepoint, seed, grid, opening, bob_z)

    try:
        trace = play(alice, bob, setup, rounds, seeds=context["seeds"],
                     context=context)
    except ValueError as e:
        raise ConfigError(f"[schedule] {e}")
    out = _out_dir(args) / tbl.get("trace", "trace.jsonl")
    write_trace(trace, out)
    if trace.error is not None:
        print(f"verification failure [game_engine] {trace.error}",
              file=sys.stderr)
        return 1
    problems, stats = _certificate_problems(trace, checks, w, basepoint)
    center, radius = intersection_point(trace)
    bits = [f"play ok: {rounds} rounds", f"alice={alice_kind}",
            f"bob={bob_kind}",
            f"point [{', '.join(_fmt(c) for c in center)}]",
            f"radius {radius:.3e}"] + stats + [f"trace {out}"]
    if problems:
        for p in problems:
            print(f"verification failure [strategies] {p}", file=sys.stderr)
        return 1
    print(", ".join(bits))
    return 0


def cmd_verify(args) -> int:
    trace = read_trace(args.trace)
    if trace.error is not None:
        print(f"verification failure [game_engine] recorded error: "
              f"{trace.error}", file=sys.stderr)
        return 1
    ctx = trace.context
    if "rounds" in ctx and len(trace.moves) != 2 * int(ctx["rounds"]):
        raise TraceFormatError(f"truncated trace: {len(trace.moves)} moves, "
                               f"header promises {2 * int(ctx['rounds'])}")
    with open(args.trace) as fh:
        raw_moves = [json.loads(ln) for ln in fh.read().splitlines()
                     if ln.strip()][1:]
    problems = replay_check(trace, tol=1e-8)
    stats = []
    if not problems and "alice" in ctx:
        alice, bob, w, basepoint, checks, problems = \
            _players_from_context(ctx, trace.setup)
        if not problems:
            problems = _rerun_problems(alice, bob, trace, raw_moves)
        if not problems:
            cert_problems, stats = _certificate_problems(trace, checks, w,
                                                         basepoint)
            problems += cert_problems
        stats = ["re-run matches, annotations within 1e-08"] + stats
    elif not problems:
        problems = _raw_translation_problems(args.trace, trace)
        stats = ["no strategy context: legality and chain checks only"]
    if problems:
        for p in problems:
            print(f"verification failure [game_engine] {p}", file=sys.stderr)
        return 1
    print(", ".join([f"verify ok: {len(trace.moves)} moves, replay clean"]
                    + stats))
    return 0


def cmd_certify_bad(args) -> int:
    cfg = _load_toml(args.config)
    w = _weights(cfg)
    tbl = _table(cfg, "certify_bad")
    Qmax = int(tbl.get("Qmax", 100))
    if "Y" in tbl:
        Ys = [np.atleast_2d(np.array(tbl["Y"], dtype=float))]
    else:
        count = int(tbl.get("count", 1))
        rng = np.random.default_rng(_seed_of(args, tbl))
        Ys = [rng.uniform(0.0, 1.0, (w.m, w.n)) for _ in range(count)]
    reports = []
    for Y in Ys:
        if Y.shape != (w.m, w.n):
            raise ConfigError(f"[certify_bad].Y must be {w.m}x{w.n} "
                              f"for these weights, got {Y.shape}")
        reports.append(bad_margin(Y, w, Qmax))
    out = _out_dir(args) / tbl.get("report", "bad_margins.csv")
    with open(out, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["Y", "Qmax", "margin", "witness_p", "witness_q"])
        for rep in reports:
            p, q = rep.witness
            wr.writerow([json.dumps([[_fmt(v) for v in row]
                                     for row in rep.Y.tolist()]),
                         rep.Qmax, _fmt(rep.margin),
                         json.dumps(list(p)), json.dumps(list(q))])
    lo = min(rep.margin for rep in reports)
    hi = max(rep.margin for rep in reports)
    print(f"certify-bad ok: {len(reports)} systems at Qmax={Qmax}, "
          f"margin range [{_fmt(lo)}, {_fmt(hi)}], report {out}")
    return 0


def cmd_dani_audit(args) -> int:
    cfg = _load_toml(args.config)
    w = _weights(cfg)
    tbl = _table(cfg, "dani")
    count = int(tbl.get("count", 20))
    Qmax = int(tbl.get("Qmax", 100))
    t_max = float(tbl.get("t_max", 10.0))
    t_step = float(tbl.get("t_step", 0.25))
    bands = tuple(float(v) for v in tbl.get("bands",
                                            (1e-3, 1e-1, 1e-3, 1e-1)))
    if len(bands) != 4:
        raise ConfigError("[dani].bands must have 4 entries")
    rng = np.random.default_rng(_seed_of(args, tbl))
    reports = []
    for _ in range(count):
        Y = rng.uniform(0.0, 1.0, (w.m, w.n))
        reports.append(dani_audit(Y, w, Qmax, t_max, t_step, bands=bands))
    out = _out_dir(args) / tbl.get("report", "dani_audit.csv")
    write_audit_csv(reports, out)
    n_bad = sum(1 for r in reports if r.verdict == "INCONSISTENT")
    line = (f"dani-audit: {count} systems ({w.m}x{w.n}), Qmax={Qmax}, "
            f"t_max={t_max:g}, {n_bad} INCONSISTENT, report {out}")
    if n_bad:
        print(f"verification failure [diophantine] {line}", file=sys.stderr)
        return 1
    print(line)
    return 0


def cmd_expanding_check(args) -> int:
    cfg = _load_toml(args.config)
    w = _weights(cfg)
    tbl = _table(cfg, "expanding")
    degrees = [int(d) for d in tbl.get("degrees", range(1, w.k))]
    block = tbl.get("block", "expanding")
    if block not in ("expanding", "nonexpanding"):
        raise ConfigError("[expanding].block must be 'expanding' or "
                          "'nonexpanding'")
    rows = []
    for d in degrees:
        if not 1 <= d <= w.k - 1:
            raise ConfigError(f"[expanding].degrees entry {d} outside "
                              f"1..{w.k - 1}")
        ok, kdim = expanding_check(w, d, block=block)
        rows.append((d, ok, kdim))
    out = _out_dir(args) / tbl.get("report", "expanding_check.csv")
    with open(out, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["r", "s", "degree", "block", "verdict", "kernel_dim"])
        for d, ok, kdim in rows:
            wr.writerow([json.dumps([_fmt(v) for v in w.r]),
                         json.dumps([_fmt(v) for v in w.s]),
                         d, block, str(ok).lower(), kdim])
    n_true = sum(1 for _, ok, _ in rows if ok)
    print(f"expanding-check: block={block}, {n_true}/{len(rows)} true, "
          f"kernel dims {[kd for _, _, kd in rows]}, report {out}")
    if block == "expanding" and n_true < len(rows):
        return 1
    return 0


def cmd_intersect_demo(args) -> int:
    cfg = _load_toml(args.config)
    w = _weights(cfg)
    base = _base(cfg, w)
    sched = _schedule(cfg)
    basepoint = _basepoint(cfg, w.k)
    setup = GameSetup(weight_semigroup(w, base), base, sched)
    tbl = _table(cfg, "intersect")
    if "targets" not in tbl:
        raise ConfigError("missing field [intersect].targets")
    rounds = int(args.rounds if args.rounds is not None
                 else tbl.get("rounds", 60))
    seed = _seed_of(args, tbl)
    grid = int(tbl.get("grid", 5))
    opening = float(tbl.get("opening", 0.5))
    include_bounded = bool(tbl.get("include_bounded", False))
    samples = int(tbl.get("samples", 10 ** 4))
    cal_seed = int(tbl.get("calibrate_seed", 0))

    components, comp_ctx, checks = [], [], []
    for i, target_rows in enumerate(tbl["targets"]):
        sec = {"z": _basis(target_rows, f"intersect.targets[{i}]", w.k),
               "gap_factor": int(tbl.get("gap_factor", 1)),
               "samples": samples, "seed": cal_seed}
        target = _calibrated_target(sec, w, base, sched)
        components.append(alice_avoid(target, w, basepoint))
        comp_ctx.append({"kind": "avoid", **_target_context(target, sec)})
        checks.append(("avoid", target, len(components) - 1))
    if include_bounded:
        sec = _bounded_section(cfg)
        sec["gap_bound"] = max(sec["gap_bound"], len(components) + 2)
        state = _bounded_state(sec, basepoint, w)
        components.append(alice_stay_bounded(state))
        comp_ctx.append({"kind": "stay_bounded", **sec})
        checks.append(("bounded", state, len(components) - 1))

    context = {"experiment": "intersect-demo", "alice": "intersect",
               "bob": tbl.get("bob", "random"), "rounds": rounds,
               "grid": grid, "opening": opening,
               "weights": {"r": w.r, "s": w.s},
               "basepoint": basepoint.matrix,
               "components": comp_ctx,
               "seeds": {"bob": seed}}
    bob = _build_bob(context["bob"], w, basepoint, seed, grid, opening,
                     LatticeBasis(np.eye(w.k)))
    try:
        trace = play(alice_intersect(components), bob, setup, rounds,
                     seeds=context["seeds"], context=context)
    except ValueError as e:
        raise ConfigError(f"[schedule] {e}")
    out = _out_dir(args) / tbl.get("trace", "intersect.jsonl")
    write_trace(trace, out)
    if trace.error is not None:
        print(f"verification failure [game_engine] {trace.error}",
              file=sys.stderr)
        return 1
    problems, stats = _certificate_problems(trace, checks, w, basepoint)
    if problems:
        for p in problems:
            print(f"verification failure [strategies] {p}", file=sys.stderr)
        return 1
    print(", ".join([f"intersect-demo ok: {len(components)} components, "
                     f"{rounds} rounds"] + stats + [f"trace {out}"]))
    return 0


def cmd_calibrate(args) -> int:
    cfg = _load_toml(args.config)
    w = _weights(cfg)
    tbl = _table(cfg, "calibrate")
    if "T" in tbl:
        T = float(tbl["T"])
    elif "schedule" in cfg:
        sched = _schedule(cfg)
        T = sched.a + sched.b
    else:
        raise ConfigError("missing field [calibrate].T (or a [schedule] "
                          "table to derive T = a + b)")
    if T < 0:
        raise ConfigError("[calibrate].T must be nonnegative")
    z = _basis(tbl["target"], "calibrate.target", w.k) if "target" in tbl \
        else LatticeBasis(np.eye(w.k))
    samples = int(tbl.get("samples", 10 ** 4))
    seed = _seed_of(args, tbl)
    delta, cert = calibrate_transversality(z, T, w, samples=samples,
                                           seed=seed)
    out = _out_dir(args) / tbl.get("report", "calibration.json")
    with open(out, "w") as fh:
        json.dump({"delta": delta, "T": T, **cert}, fh, sort_keys=True)
        fh.write("\n")
    print(f"calibrate ok: delta={_fmt(delta)} (rung {cert['ladder_rung']}), "
          f"max diameter {_fmt(cert['max_diameter'])} over "
          f"{cert['near_pairs']} near pairs, report {out}")
    return 0


# ---------------------------------------------------------------------------
# entry point

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="msgame",
        description="Run, verify, and export modified-Schmidt-game "
                    "experiments on the space of lattices.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, config=True, rounds=False, seed=True):
        p = sub.add_parser(name)
        if config:
            p.add_argument("--config", required=True,
                           help="TOML experiment configuration")
        p.add_argument("--out", default=None,
                       help="output directory (default: current)")
        if seed:
            p.add_argument("--seed", type=int, default=None,
                           help="override the config seed")
        if rounds:
            p.add_argument("--rounds", type=int, default=None,
                           help="override the config round count")
        p.set_defaults(func=fn)
        return p

    add("play", cmd_play, rounds=True)
    p = sub.add_parser("verify")
    p.add_argument("trace", help="JSONL trace file to re-validate")
    p.set_defaults(func=cmd_verify)
    add("certify-bad", cmd_certify_bad)
    add("dani-audit", cmd_dani_audit)
    add("expanding-check", cmd_expanding_check, seed=False)
    add("intersect-demo", cmd_intersect_demo, rounds=True)
    add("calibrate", cmd_calibrate)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except TraceFormatError as e:
        print(f"parse error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except InvalidMove as e:
        print(f"verification failure [game_engine] {e}", file=sys.stderr)
        return 1
    except (CalibrationFailure, TooManyDangerous, NoSafeBall) as e:
        tag = getattr(e, "component", None)
        comp = "" if tag is None else f" component {tag}"
        print(f"verification failure [strategies]{comp} "
              f"{type(e).__name__}: {e}", file=sys.stderr)
        return 1
    except NoScaleFound as e:
        print(f"verification failure [strategies] NoScaleFound: {e}",
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
