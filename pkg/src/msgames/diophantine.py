"""Weighted approximation margins, continued fractions, and the audit
tying both to orbit systoles on the space of lattices.

Everything here is an independent oracle: no strategy code is imported,
so game traces can be cross-checked against plain number theory.
"""

import csv
import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from msgames.homogeneous import LatticeBasis, WeightVector, flow, systole, u_of

_MAX_CF_COUNT = 40
_DENOM_LIMIT = 2 ** 48


@dataclass(frozen=True, eq=False)
class BadReport:
    """Finite-range badly-approximable certificate for a matrix Y."""

    Y: np.ndarray
    weights: WeightVector
    Qmax: int
    margin: float
    witness: tuple
    orbit_profile: tuple = ()

    def to_json(self) -> str:
        p, q = self.witness
        return json.dumps({
            "Y": np.asarray(self.Y).tolist(),
            "r": list(self.weights.r),
            "s": list(self.weights.s),
            "Qmax": self.Qmax,
            "margin": float(self.margin),
            "witness_p": [int(x) for x in p],
            "witness_q": [int(x) for x in q],
            "orbit_profile": [[float(t), float(v)]
                              for t, v in self.orbit_profile],
        })


@lru_cache(maxsize=4)
def _enumerate_q(n: int, Qmax: int) -> np.ndarray:
    """All nonzero integer n-vectors with sup norm <= Qmax, ordered by
    shell, then by number of nonzero entries, then lexicographically with
    positive coordinates first.  The order fixes which witness is
    reported when the minimum ties (q = e1 for Y = 0).  Cached because
    batch audits reuse the same range for hundreds of systems."""
    axes = [np.arange(-Qmax, Qmax + 1)] * n
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    grid = grid[np.any(grid != 0, axis=1)]
    shell = np.max(np.abs(grid), axis=1)
    nonzero = np.count_nonzero(grid, axis=1)
    order = np.lexsort(tuple((-grid[:, j] for j in reversed(range(n))))
                       + (nonzero, shell))
    out = grid[order]
    out.setflags(write=False)
    return out


def bad_margin(Y, w: WeightVector, Qmax: int) -> BadReport:
    """Exhaustive minimum of the weighted approximation product

        max_i |Y_i . q - p_i|^(1/r_i) * max_j |q_j|^(1/s_j)

    over integer q with 0 < ||q||_inf <= Qmax, taking the optimal
    p_i = round(Y_i . q) for each q."""
    if Qmax < 1:
        raise ValueError("Qmax must be at least 1")
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if Y.shape != (w.m, w.n):
        raise ValueError(f"Y must be {w.m} x {w.n}, got {Y.shape}")
    r = np.asarray(w.r, dtype=float)
    s = np.asarray(w.s, dtype=float)
    qs = _enumerate_q(w.n, Qmax)
    best_val = np.inf
    best_idx = -1
    best_p = None
    for start in range(0, len(qs), 10 ** 6):
        q = qs[start:start + 10 ** 6]
        resid = q.astype(float) @ Y.T
        p = np.rint(resid)
        approx = np.max(np.abs(resid - p) ** (1.0 / r)[None, :], axis=1)
        height = np.max(np.abs(q.astype(float)) ** (1.0 / s)[None, :], axis=1)
        vals = approx * height
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val = float(vals[i])
            best_idx = start + i
            best_p = p[i]
    qw = qs[best_idx]
    witness = (tuple(int(x) for x in best_p), tuple(int(x) for x in qw))
    return BadReport(Y, w, int(Qmax), best_val, witness)


# ---------------------------------------------------------------------------
# continued fractions


@dataclass(frozen=True)
class CFExpansion:
    quotients: tuple
    convergents: tuple
    truncated: bool = False


def continued_fraction(y: float, count: int) -> CFExpansion:
    """Partial quotients a0, a1, ... of y with their convergents p_k/q_k.

    The expansion is computed by exact integer Euclid on the rational
    value of the double, so the quotients carry no floating-point drift.
    A remainder within 1e-10 of an integer boundary is snapped and the
    expansion ends there, since finer structure reflects the binary
    encoding of y rather than the intended real.  Stops with
    truncated=True when a convergent denominator leaves the range where
    doubles resolve the next quotient."""
    if count < 1 or count > _MAX_CF_COUNT:
        raise ValueError(f"count must be between 1 and {_MAX_CF_COUNT}")
    num, den = float(y).as_integer_ratio()
    quotients = []
    convergents = []
    p_prev, q_prev = 0, 1
    p_cur, q_cur = 1, 0
    truncated = False
    for _ in range(count):
        a = num // den
        rem = num - a * den
        snapped = rem * 10 ** 10 > (10 ** 10 - 1) * den
        if snapped:
            a += 1
            rem = 0
        quotients.append(int(a))
        p_prev, p_cur = p_cur, a * p_cur + p_prev
        q_prev, q_cur = q_cur, a * q_cur + q_prev
        convergents.append((int(p_cur), int(q_cur)))
        if rem * 10 ** 10 < den:
            break
        if q_cur > _DENOM_LIMIT:
            truncated = True
            break
        num, den = den, rem
    return CFExpansion(tuple(quotients), tuple(convergents), truncated)


# ---------------------------------------------------------------------------
# correspondence audit


@dataclass(frozen=True, eq=False)
class DaniReport:
    """One row of the margin-versus-systole audit."""

    report: BadReport
    floor: float
    verdict: str
    bands: tuple

    @property
    def margin(self) -> float:
        return self.report.margin


def orbit_floor(Y, w: WeightVector, t_max: float, t_step: float):
    """Minimum systole of flow(t) u_Y Z^k over the t-grid, with the
    sampled profile."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    uy = u_of(Y)
    grid = np.arange(0.0, t_max + 1e-9, t_step)
    prof = tuple((float(t), float(systole(
        LatticeBasis(flow(float(t), w) @ uy))[0])) for t in grid)
    return min(v for _, v in prof), prof


def dani_audit(Y, w: WeightVector, Qmax: int, t_max: float, t_step: float,
               bands: tuple = (1e-3, 1e-1, 1e-3, 1e-1)) -> DaniReport:
    """Audit one matrix against the correspondence: a large margin must
    come with a large orbit-systole floor and a small margin with a small
    floor.  The bands (M_lo, M_hi, f_lo, f_hi) exclude the undecidable
    middle, so INCONSISTENT is raised only on clear disagreement."""
    if t_max <= 0 or t_step <= 0:
        raise ValueError("grid parameters must be positive")
    m_lo, m_hi, f_lo, f_hi = bands
    rep = bad_margin(Y, w, Qmax)
    floor, prof = orbit_floor(Y, w, t_max, t_step)
    rep = BadReport(rep.Y, rep.weights, rep.Qmax, rep.margin, rep.witness,
                    orbit_profile=prof)
    if (rep.margin > m_hi and floor < f_lo) \
            or (rep.margin < m_lo and floor > f_hi):
        verdict = "INCONSISTENT"
    else:
        verdict = "consistent"
    return DaniReport(rep, floor, verdict, tuple(bands))


def write_audit_csv(reports, path) -> None:
    """One audit row per report: margin, floor, verdict, witnesses."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["Y", "margin", "floor", "verdict",
                      "witness_p", "witness_q"])
        for rep in reports:
            p, q = rep.report.witness
            out.writerow([
                " ".join(f"{v:.12g}" for v in np.ravel(rep.report.Y)),
                f"{rep.margin:.12g}", f"{rep.floor:.12g}", rep.verdict,
                " ".join(str(x) for x in p), " ".join(str(x) for x in q),
            ])


# ---------------------------------------------------------------------------
# box-counting probe


def estimate_box_dimension(points, scales) -> float:
    """Heuristic box-counting slope: least squares of log N(eps) against
    -log eps, N(eps) the number of occupied eps-grid cells.  A sampling
    probe only; it certifies nothing about true Hausdorff dimension."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    scales = np.asarray(scales, dtype=float)
    if len(pts) < 100:
        raise ValueError("need at least 100 points")
    if scales.size < 3 or np.any(scales <= 0):
        raise ValueError("need at least 3 positive scales")
    counts = []
    for eps in scales:
        cells = np.unique(np.floor(pts / eps), axis=0)
        counts.append(len(cells))
    x = -np.log(scales)
    y = np.log(np.array(counts, dtype=float))
    slope = np.polyfit(x, y, 1)[0]
    return float(slope)
