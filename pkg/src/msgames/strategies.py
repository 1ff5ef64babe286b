"""Winning strategies for the modified game on the space of lattices.

Alice's two constructive strategies are implemented here: one that keeps
the induced flow orbit away from a compact segment around a target
lattice, and one that keeps the orbit of the intersection point in a
compact set by certifying polynomial lower bounds against every short
wedge vector that shows up.  Both consume the game trace move by move,
so they work unchanged when interleaved by the intersection combinator.
Bob adversaries and post-hoc verification helpers live here as well.

All strategies are stateful per game: build fresh instances for every
game instead of sharing them across runs.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from .contraction import (AdmissibleBase, ContractionSemigroup, Domain,
                          _image_bb, legal_offset_box, two_separated_translates)
from .game_engine import ALICE, GameTrace, pulled_point_coordinates
from .homogeneous import (LatticeBasis, PolyMap, PushedFrame,
                          RepresentationData, WeightVector,
                          _batched_log_norm_2x2, _mat_log_norm,
                          _wedge_u_symbolic, expanding_check, flow, phi_poly,
                          flow_distance, segment_distances, shortest_vector,
                          u_of, vec_to_matrix, vectors_below, wedge_basis)


class CalibrationFailure(Exception):
    """Neither avoidance candidate cleared the certified margin; the
    constants were computed wrong.  Not a recoverable state."""

    def __init__(self, round: int, clearances):
        self.round = round
        self.clearances = tuple(float(c) for c in clearances)
        super().__init__(f"round {round}: no candidate clears, "
                         f"clearances {self.clearances}")


class NoScaleFound(Exception):
    """The transversality audit rejected every ladder scale."""


class TooManyDangerous(Exception):
    def __init__(self, round: int, count: int, bound: int):
        self.round = round
        self.count = count
        self.bound = bound
        super().__init__(f"round {round}: {count} dangerous subspaces, "
                         f"bound is {bound}")


class NoSafeBall(Exception):
    def __init__(self, round: int):
        self.round = round
        super().__init__(f"round {round}: grid search found no certified ball")


def weight_semigroup(w: WeightVector, base: AdmissibleBase) -> ContractionSemigroup:
    """Contraction semigroup induced on the unipotent coordinates by the
    weighted flow: rate r_i + s_j on entry (i, j), flattened to match
    vec_to_matrix.  The diameter constant is exact for boxes."""
    return ContractionSemigroup.diagonal(w.contraction_rates(),
                                         c0=base.diameter())


def _as_basis(M: np.ndarray) -> LatticeBasis:
    d = np.linalg.det(M)
    return LatticeBasis(M / np.sign(d) / abs(d) ** (1.0 / M.shape[0]))


class _FrameFollower:
    """Reduced frame of the latest move's translation, kept in sync with
    a trace.  Flow time is (scale - s_star), so with s_star = 0 the frame
    is the fully pushed lattice of the translation."""

    def __init__(self, w: WeightVector, basepoint: LatticeBasis,
                 s_star: float = 0.0):
        self.w = w
        self.x = basepoint
        self.s_star = float(s_star)
        self.frame = None
        self.t = None
        self.seen = 0

    def step(self, dom: Domain, on_step=None) -> None:
        if self.frame is None:
            start = flow(dom.t - self.s_star, self.w) \
                @ u_of(vec_to_matrix(dom.translation, self.w)) \
                @ self.x.matrix
            self.frame = PushedFrame(self.w, start)
        else:
            U = self.frame.advance(dom.t - self.t, dom.delta,
                                   s_offset=self.s_star)
            if on_step is not None:
                on_step(U)
        self.t = dom.t
        self.seen += 1

    def sync(self, trace: GameTrace, on_step=None) -> None:
        for mv in trace.moves[self.seen:]:
            self.step(mv.domain, on_step)


def _point_frames(trace: GameTrace, w: WeightVector, basepoint: LatticeBasis,
                  s_star: float = 0.0) -> list:
    """Per move: (move, flow time, point matrix) where the point matrix
    is a basis of the pushed lattice of the intersection point, built
    through reduced frames so arbitrary depth stays conditioned."""
    qs = pulled_point_coordinates(trace)
    follower = _FrameFollower(w, basepoint, s_star=s_star)
    out = []
    for mv, q in zip(trace.moves, qs):
        follower.step(mv.domain)
        pt = follower.frame.at(delta=q, s_offset=s_star)
        out.append((mv, mv.domain.t - s_star, pt))
    return out


def orbit_systole_profile(trace: GameTrace, w: WeightVector,
                          basepoint: LatticeBasis, t_grid,
                          s_star: float = 0.0) -> np.ndarray:
    """Systole of flow(t) u(h) basepoint over the grid, h the intersection
    point of the trace, anchored at each move's reduced frame."""
    anchors = _point_frames(trace, w, basepoint, s_star=s_star)
    times = np.array([s for _, s, _ in anchors])
    out = np.empty(len(t_grid))
    for i, t in enumerate(np.asarray(t_grid, dtype=float)):
        j = int(np.searchsorted(times, t, side="right")) - 1
        j = max(j, 0)
        M = flow(t - times[j], w) @ anchors[j][2]
        out[i] = shortest_vector(M)[0]
    return out


# ---------------------------------------------------------------------------
# avoidance

@dataclass(frozen=True)
class AvoidanceTarget:
    """Calibrated constants for steering clear of the flow segment
    Z_T = {flow(t) z : 0 <= t <= T}.

    eta = epsilon / 8 and epsilon = min(lam * eps0 / 2, delta), where lam
    is the lower Lipschitz constant of the contraction over the N dummy
    rounds, eps0 the separation of the two corner candidates, and delta
    the audited transversality scale.
    """

    z: LatticeBasis
    T: float
    eta: float
    N: int
    delta: float
    epsilon: float
    lam: float
    eps0: float

    @classmethod
    def calibrate(cls, z: LatticeBasis, w: WeightVector, base: AdmissibleBase,
                  a: float, b: float, delta=None, gap_factor: int = 1,
                  seed: int = 0, samples: int = 10 ** 4) -> "AvoidanceTarget":
        T = (a + b) * gap_factor
        if delta is None:
            delta, _ = calibrate_transversality(z, T, w, samples=samples,
                                                seed=seed)
        sg = weight_semigroup(w, base)
        _, _, eps0 = two_separated_translates(sg, a, base)
        N = max(1, int(np.ceil(np.log(sg.c0 / delta) / (sg.sigma * T))))
        rates = w.contraction_rates()
        lam = float(np.exp(-np.max(rates) * N * T))
        epsilon = min(0.5 * lam * eps0, delta)
        return cls(z, float(T), epsilon / 8.0, N, float(delta),
                   float(epsilon), lam, float(eps0))


def _segment_samples(z: LatticeBasis, T: float, w: WeightVector,
                     n_seg: int, segment_fn=None) -> np.ndarray:
    if segment_fn is None:
        segment_fn = lambda t: flow(t, w) @ z.matrix  # noqa: E731
    ts = np.linspace(0.0, T, n_seg) if T > 0 else np.array([0.0])
    return np.stack([segment_fn(float(t)) for t in ts])


def _distances_to_segment(mats: np.ndarray, segment: np.ndarray) -> np.ndarray:
    if mats.shape[-1] == 2:
        return segment_distances(mats, segment)
    out = np.empty(len(mats))
    for i, M in enumerate(mats):
        out[i] = min(flow_distance(_as_basis(M), _as_basis(S))
                     for S in segment)
    return out


def _plain_log_norms(A: np.ndarray) -> np.ndarray:
    """Log-distance proxy without lattice realignment: ||log A|| for a
    stack of group elements.  The transversality audit is local, so no
    integer relabeling is wanted there."""
    if A.shape[-1] == 2:
        return _batched_log_norm_2x2(A)
    return np.array([_mat_log_norm(M) for M in A])


def _curve_distances(P: np.ndarray, seg_inv: np.ndarray) -> np.ndarray:
    """Distance in the group from each point to the sampled curve, with
    a parabolic pass through the three samples around the argmin so the
    continuum curve is resolved below the sample spacing."""
    D = np.empty((len(P), len(seg_inv)))
    for s in range(len(seg_inv)):
        D[:, s] = _plain_log_norms(np.einsum("ab,nbc->nac", seg_inv[s], P))
    if D.shape[1] < 3:
        return np.min(D, axis=1)
    j = np.clip(np.argmin(D, axis=1), 1, D.shape[1] - 2)
    rows = np.arange(len(P))
    ym, y0, yp = D[rows, j - 1], D[rows, j], D[rows, j + 1]
    curv = ym + yp - 2 * y0
    vertex = y0 - np.where(curv > 1e-300, (yp - ym) ** 2 / (8 * curv), 0.0)
    return np.maximum(0.0, np.minimum(vertex, np.min(D, axis=1)))


def calibrate_transversality(z: LatticeBasis, T: float, w: WeightVector,
                             samples: int = 10 ** 4, seed: int = 0,
                             segment_fn=None, n_seg: int = 33) -> tuple:
    """Largest ladder scale delta whose Monte-Carlo + vertex audit finds
    no pair of points of B_H(delta)x near the segment but further than
    epsilon = delta apart.  Returns (delta, certificate).

    The audit is local, so all distances here are plain log distances in
    the group (no lattice realignment), and nearness to the segment is
    resolved below the sample spacing by a parabolic refinement."""
    if T < 0:
        raise ValueError("segment length must be nonnegative")
    Z = _segment_samples(z, T, w, n_seg, segment_fn)
    Zinv = np.linalg.inv(Z)
    k = z.k
    ell = w.m * w.n
    chunk = 1000
    for rung in range(1, 21):
        delta = 2.0 ** -rung
        eps = delta
        rng = np.random.default_rng((seed, rung))
        near_pairs = 0
        max_diam = 0.0
        violated = False
        done = 0
        while done < samples and not violated:
            n = min(chunk, samples - done)
            done += n
            idx = rng.integers(0, len(Z), n)
            jit = rng.normal(0.0, delta / 32.0, (n, k, k))
            X = Z[idx] + np.einsum("nab,nbc->nac", jit, Z[idx])
            mode = rng.random(n)
            h1 = rng.uniform(-delta, delta, (n, ell))
            h2 = rng.uniform(-delta, delta, (n, ell))
            vtx = delta * np.where(rng.random((n, ell)) < 0.5, 1.0, -1.0)
            m_b = mode < 0.3                     # antipodal vertex pair
            h1[m_b], h2[m_b] = vtx[m_b], -vtx[m_b]
            m_c = (mode >= 0.3) & (mode < 0.5)   # independent vertices
            h2[m_c] = delta * np.where(rng.random((int(np.sum(m_c)), ell))
                                       < 0.5, 1.0, -1.0)
            m_d = (mode >= 0.5) & (mode < 0.7)   # deep inside the slice
            h1[m_d] *= 0.125
            h2[m_d] *= 0.125
            P1 = X.copy()
            P1[:, :w.m, :] += np.einsum("nij,njk->nik",
                                        h1.reshape(n, w.m, w.n), X[:, w.m:, :])
            d1 = _curve_distances(P1, Zinv)
            near1 = np.where(d1 <= eps / 8.0)[0]
            if near1.size == 0:
                continue
            P2 = X[near1].copy()
            P2[:, :w.m, :] += np.einsum("nij,njk->nik",
                                        h2[near1].reshape(-1, w.m, w.n),
                                        X[near1][:, w.m:, :])
            d2 = _curve_distances(P2, Zinv)
            both = np.where(d2 <= eps / 8.0)[0]
            if both.size:
                md = _plain_log_norms(np.einsum(
                    "nab,nbc->nac", np.linalg.inv(P2[both]), P1[near1[both]]))
                near_pairs += both.size
                max_diam = max(max_diam, float(np.max(md)))
                if np.any(md > eps):
                    violated = True
        if not violated:
            cert = {"epsilon": eps, "max_diameter": max_diam,
                    "near_pairs": near_pairs, "samples": samples,
                    "ladder_rung": rung}
            return delta, cert
    raise NoScaleFound("transversality audit failed at every ladder scale")


class alice_avoid:
    """Avoidance strategy: N dummy rounds, then each move picks one of
    the two separated corner candidates whose flow-pushed samples all
    clear the segment by more than eta."""

    def __init__(self, target: AvoidanceTarget, w: WeightVector,
                 basepoint: LatticeBasis, n_seg: int = 33):
        self.target = target
        self.w = w
        self.x = basepoint
        self.s_star = target.N * target.T
        self.segment = _segment_samples(target.z, target.T, w, n_seg)
        self.follower = _FrameFollower(w, basepoint, s_star=self.s_star)
        self.moves_made = 0
        self._corner_cache = {}

    def _corners(self, sg, base, gap):
        key = round(gap, 12)
        if key not in self._corner_cache:
            d1, d2, _ = two_separated_translates(sg, gap, base)
            self._corner_cache[key] = (d1.delta, d2.delta)
        return self._corner_cache[key]

    def move(self, trace: GameTrace, t: float):
        setup = trace.setup
        base = setup.base
        self.follower.sync(trace)
        last = trace.last_domain()
        self.moves_made += 1
        if self.moves_made <= self.target.N:
            lo, hi = legal_offset_box(last, t)
            return last.child(t, lo), {"phase": "dummy"}
        gap = t - last.t
        deltas = self._corners(setup.semigroup, base, gap)
        M = setup.semigroup.matrix(gap)
        dim = setup.semigroup.dim
        xi = np.vstack([[[(base.upper if (i >> j) & 1 else base.lower)[j]
                          for j in range(dim)] for i in range(2 ** dim)],
                        base.center[None, :]])
        clearances = []
        for delta in deltas:
            mats = np.stack([self.follower.frame.at(
                dt=gap, delta=delta + M @ x, s_offset=self.s_star)
                for x in xi])
            clearances.append(float(np.min(
                _distances_to_segment(mats, self.segment))))
        pick = 0 if clearances[0] > self.target.eta \
            else 1 if clearances[1] > self.target.eta else None
        if pick is None:
            raise CalibrationFailure(trace.moves[-1].round, clearances)
        notes = {"phase": "avoid", "candidate": pick,
                 "clearance": clearances[pick],
                 "clearance_lower": clearances[0],
                 "clearance_upper": clearances[1],
                 "eta": self.target.eta, "flow_time": t - self.s_star}
        return last.child(t, deltas[pick]), notes


def verify_clearances(trace: GameTrace, target: AvoidanceTarget,
                      w: WeightVector, basepoint: LatticeBasis,
                      component=None, n_seg: int = 33) -> list:
    """Distance of the pushed intersection point to the sampled segment
    at every active avoidance move, recomputed independently."""
    segment = _segment_samples(target.z, target.T, w, n_seg)
    out = []
    for mv, s, pt in _point_frames(trace, w, basepoint,
                                  s_star=target.N * target.T):
        if mv.player != ALICE or "clearance" not in mv.annotations:
            continue
        if component is not None and mv.annotations.get("component") != component:
            continue
        d = float(_distances_to_segment(pt[None], segment)[0])
        out.append((mv.round, s, d))
    return out


# ---------------------------------------------------------------------------
# bounded orbits

def _stacked_coeff_matrix(w: WeightVector, d: int) -> np.ndarray:
    """Matrix of v -> expanding-block coefficients of Y -> wedge(u_Y) v,
    rows indexed by (expanding coordinate, monomial)."""
    rep = RepresentationData.build(w, d)
    table = _wedge_u_symbolic(w.m, w.n, d)
    monos = sorted({e for a in np.where(rep.expanding)[0]
                    for b in range(rep.dim) for e in table[a][b]})
    A = np.zeros((len(monos) * int(np.sum(rep.expanding)), rep.dim))
    r = 0
    for a in np.where(rep.expanding)[0]:
        for mi, mono in enumerate(monos):
            for b in range(rep.dim):
                c = table[a][b].get(mono, 0.0)
                if c:
                    A[r + mi, b] = c
        r += len(monos)
    return A


def _wedge_op_norm_bound(w: WeightVector, d: int, radius: float) -> float:
    """Sup over the radius-ball of the sup-operator norm of wedge(u_Y),
    bounded through the symbolic coefficient table."""
    table = _wedge_u_symbolic(w.m, w.n, d)
    dim = len(table)
    worst = 0.0
    for a in range(dim):
        row = 0.0
        for b in range(dim):
            for expo, c in table[a][b].items():
                row += abs(c) * radius ** sum(expo)
        worst = max(worst, row)
    return worst


def _coeff_l2(poly: PolyMap, block: str = "expanding") -> float:
    sel = poly._block(block)
    tot = 0.0
    for a in np.where(sel)[0]:
        for c in poly.coords[a].values():
            tot += c * c
    return float(np.sqrt(tot))


def _ball_grid(base: AdmissibleBase, c: float) -> np.ndarray:
    """Ball centers, in offset-from-center coordinates, spaced c/4 with
    the ball of diameter c kept inside the box."""
    axes = []
    for wdt in base.widths:
        half = (wdt - c) / 2.0
        n = max(1, int(np.floor(half / (c / 4.0))) * 2 + 1)
        axes.append(np.linspace(-half, half, n))
    return np.array(list(itertools.product(*axes)))


def _certified_ratios(poly: PolyMap, centers: np.ndarray, c: float,
                      radius: float) -> np.ndarray:
    """Lower bound, per candidate ball center, for the expanding-block
    sup norm over the ball of diameter c, relative to the coefficient
    norm: best coordinate of |value at center| - (c/2) * gradient bound."""
    vals = np.abs(poly.evaluate_many(centers, block="expanding"))
    grads = poly.gradient_bounds(radius, block="expanding")
    norm = _coeff_l2(poly)
    if norm == 0.0:
        return np.full(len(centers), -np.inf)
    return np.max(vals - 0.5 * c * grads[None, :], axis=1) / norm


_ETA_CACHE = {}


def _eta_poly_constant(w: WeightVector, degrees: tuple, base: AdmissibleBase,
                       c: float, radius: float, seed: int = 0,
                       n_random: int = 48) -> float:
    """Minimax grid constant: over probe directions v, the best certified
    ball ratio for Y -> wedge(u_Y) v; scaled by 0.9 for slack."""
    key = (w.r.tobytes(), w.s.tobytes(), degrees, base.lower.tobytes(),
           base.upper.tobytes(), round(c, 12), round(radius, 12))
    if key in _ETA_CACHE:
        return _ETA_CACHE[key]
    centers = _ball_grid(base, c)
    rng = np.random.default_rng(seed)
    worst = np.inf
    for d in degrees:
        rep = RepresentationData.build(w, d)
        probes = list(np.eye(rep.dim))
        for _ in range(n_random):
            v = rng.normal(size=rep.dim)
            probes.append(v / np.linalg.norm(v))
        for v in probes:
            ratios = _certified_ratios(phi_poly(v, rep), centers, c, radius)
            worst = min(worst, float(np.max(ratios)))
    eta = 0.9 * worst
    _ETA_CACHE[key] = eta
    return eta


class BoundedStrategyState:
    """Constants and memory backing the bounded-orbit strategy.

    The cascade eps0 > eps1 > eps2 > eps3 is completed at the first move,
    when the opening domain fixes the initial center path:

      eps0   discovery threshold, below the whole profile of center
             systoles over [0, t1 + a] divided by the offset constant C1;
      eps1   floor for the center norm of a freshly discovered vector
             (it was above eps0 at the previous consultation, one
             gap of flow decay and two center-to-point offsets ago);
      eps2   coefficient-norm floor eps2 = s_min * eps1 through the
             injectivity constant of the expanding coefficient map;
      eps3   certified floor min(eta_poly * eps2, eps1, eps0) for the
             expanding part on the chosen ball, hence for the orbit.
    """

    def __init__(self, g: LatticeBasis, w: WeightVector, r=None,
                 c_ball=None, gap_bound: int = 1):
        if w.k > 3:
            raise ValueError("bounded strategy supports k <= 3")
        self.g = g
        self.w = w
        self.degrees = tuple(range(1, w.k))
        self.reps = {d: RepresentationData.build(w, d) for d in self.degrees}
        for d in self.degrees:
            ok, _ = expanding_check(w, d)
            if not ok:
                raise ValueError(f"expanding check fails at degree {d}")
        self.r = int(r) if r is not None else w.k - 1
        self.c_ball = c_ball
        self.gap_bound = int(gap_bound)
        self.memory = {}
        self.ready = False

    def complete(self, setup, first_domain: Domain) -> None:
        if self.ready:
            return
        sched = setup.schedule
        base = setup.base
        a, b = sched.a, sched.b
        rates = self.w.contraction_rates()
        fit = float(np.max(np.exp(-rates * a) * base.widths))
        if self.c_ball is None:
            self.c_ball = float(np.min(base.widths)) / 8.0
            while self.c_ball <= fit:
                self.c_ball *= 2.0
        c = float(self.c_ball)
        if fit >= c:
            raise ValueError(
                f"increment a={a:.6g} too small: contracted image width "
                f"{fit:.6g} does not fit a ball of diameter {c:.6g}")
        if c > float(np.min(base.widths)):
            raise ValueError("ball diameter exceeds the base box")
        self.radius = float(np.max(base.widths)) / 2.0
        self.C1 = max(_wedge_op_norm_bound(self.w, d, self.radius)
                      for d in self.degrees)
        self.lam_mag = max(float(np.max(np.abs(self.reps[d].weights)))
                           for d in self.degrees)
        h_c1 = first_domain.center()
        ts = np.arange(0.0, sched.t1 + a + 1e-9, 0.05)
        prof = np.inf
        for t in ts:
            M = flow(t, self.w) @ u_of(vec_to_matrix(h_c1, self.w)) \
                @ self.g.matrix
            for d in self.degrees:
                prof = min(prof, shortest_vector(wedge_basis(M, d))[0])
        self.profile_min = float(prof)
        self.eps0 = min(0.35, 0.9 * prof / self.C1)
        gap_eff = (a + b) * self.gap_bound + a
        self.eps1 = self.eps0 * float(np.exp(-self.lam_mag * gap_eff)) \
            / self.C1 ** 2
        self.s_min = min(float(np.linalg.svd(
            _stacked_coeff_matrix(self.w, d), compute_uv=False)[-1])
            for d in self.degrees)
        self.eps2 = self.s_min * self.eps1
        self.eta_poly = _eta_poly_constant(self.w, self.degrees, base, c,
                                           self.radius)
        if self.eta_poly <= 0:
            raise ValueError("grid certification constant is not positive")
        self.eps3 = min(self.eta_poly * self.eps2, self.eps1, self.eps0)
        self.centers = _ball_grid(base, c)
        self.ready = True

    def certified_floor(self) -> float:
        return self.eps3


class alice_stay_bounded:
    """Bounded-orbit strategy: discover short wedge vectors at the
    current center, certify a sub-ball where their expanding polynomial
    parts stay large, and play the translate fitted inside it."""

    def __init__(self, state: BoundedStrategyState):
        self.state = state
        self.follower = _FrameFollower(state.w, state.g, s_star=0.0)

    def _transport(self, U: np.ndarray) -> None:
        mem = self.state.memory
        if not mem:
            return
        Uinv = np.rint(np.linalg.inv(U)).astype(np.int64)
        wedges = {d: np.rint(wedge_basis(Uinv.astype(float), d)).astype(np.int64)
                  for d in self.state.degrees}
        self.state.memory = {
            (d, tuple(int(x) for x in wedges[d] @ np.array(key))): v
            for (d, key), v in mem.items()}

    def move(self, trace: GameTrace, t: float):
        st = self.state
        self.follower.sync(trace, on_step=self._transport)
        if not st.ready:
            st.complete(trace.setup, trace.moves[0].domain)
        setup = trace.setup
        base = setup.base
        last = trace.last_domain()
        gap = t - last.t
        k_round = sum(1 for m in trace.moves if m.player == ALICE) + 1
        center_mat = self.follower.frame.at(delta=base.center)
        dangers = []
        for d in st.degrees:
            for coeffs, vec, norm in vectors_below(
                    wedge_basis(center_mat, d), st.eps0):
                dangers.append((d, coeffs, vec, norm))
        if len(dangers) > st.r:
            raise TooManyDangerous(k_round, len(dangers), st.r)
        lo_bb, hi_bb = _image_bb(setup.semigroup.matrix(gap), base)
        if not dangers:
            delta = base.lower - lo_bb
            notes = {"phase": "bounded", "dangers": [], "fresh": 0,
                     "floor": st.eps3}
            return last.child(t, delta), notes
        fresh = 0
        keys = []
        polys = []
        for d, coeffs, vec, norm in dangers:
            key = (d, tuple(int(x) for x in coeffs))
            keys.append(key)
            if key not in st.memory:
                st.memory[key] = k_round
                fresh += 1
            polys.append(phi_poly(vec, st.reps[d]))
        ratios = np.vstack([_certified_ratios(p, st.centers, st.c_ball,
                                              st.radius) for p in polys])
        score = np.min(ratios, axis=0)
        feasible = score >= st.eta_poly
        if not np.any(feasible):
            raise NoSafeBall(k_round)
        best = int(np.argmax(np.where(feasible, score, -np.inf)))
        Yc = st.centers[best]
        ctr = base.center + Yc
        delta_lo = ctr - st.c_ball / 2.0 - lo_bb
        delta_hi = ctr + st.c_ball / 2.0 - hi_bb
        delta = 0.5 * (delta_lo + delta_hi)
        notes = {"phase": "bounded",
                 "dangers": [[d, [int(x) for x in c]]
                             for (d, c), _ in zip(keys, dangers)],
                 "fresh": fresh, "ball_center": [float(x) for x in Yc],
                 "ball_radius": st.c_ball / 2.0,
                 "certified_ratio": float(score[best]), "floor": st.eps3}
        return last.child(t, delta), notes


def verify_bounded_certificates(trace: GameTrace, state: BoundedStrategyState,
                                component=None) -> list:
    """Re-check, with independent arithmetic, that every dangerous vector
    recorded in the trace satisfies one of the two conditions at its
    round: full norm >= eps0 or expanding norm >= eps3, evaluated at the
    intersection point."""
    w, g = state.w, state.g
    qs = pulled_point_coordinates(trace)
    follower = _FrameFollower(w, g, s_star=0.0)
    out = []
    for i, mv in enumerate(trace.moves):
        if mv.player == ALICE and mv.annotations.get("phase") == "bounded" \
                and mv.annotations.get("dangers") \
                and (component is None
                     or mv.annotations.get("component") == component):
            # frame synced through the preceding move = the discovery frame
            pt = follower.frame.at(dt=mv.domain.t - follower.t,
                                   delta=qs[i - 1])
            for d, coeffs in mv.annotations["dangers"]:
                v = wedge_basis(pt, d) @ np.array(coeffs, dtype=float)
                full = float(np.max(np.abs(v)))
                pi = float(np.max(np.abs(v[state.reps[d].expanding])))
                out.append({"round": mv.round, "degree": d, "full": full,
                            "expanding": pi,
                            "ok": full >= state.eps0 * (1 - 1e-9)
                            or pi >= state.eps3 * (1 - 1e-9)})
        follower.step(mv.domain)
    return out


# ---------------------------------------------------------------------------
# dummy Alice, Bob adversaries

class alice_dummy:
    """Always plays the translate fitted at the lower corner."""

    def move(self, trace: GameTrace, t: float):
        last = trace.last_domain()
        lo, _ = legal_offset_box(last, t)
        return last.child(t, lo)


class bob_random:
    """Uniform legal translate, seeded."""

    def __init__(self, seed: int = 0, opening_halfwidth: float = 0.5):
        self.rng = np.random.default_rng(seed)
        self.opening = float(opening_halfwidth)

    def move(self, trace: GameTrace, t: float):
        setup = trace.setup
        if not trace.moves:
            h = self.rng.uniform(-self.opening, self.opening,
                                 setup.semigroup.dim)
            return Domain.root(setup.semigroup, setup.base, t, h)
        last = trace.last_domain()
        lo, hi = legal_offset_box(last, t)
        return last.child(t, self.rng.uniform(lo, hi))


class _bob_scored:
    """Shared grid scan: among legal candidate translates (plus opening
    grid), pick the one whose pushed lattice at the candidate center
    minimizes the subclass score."""

    def __init__(self, w: WeightVector, basepoint: LatticeBasis,
                 seed: int = 0, grid: int = 5, opening_halfwidth: float = 0.5):
        self.w = w
        self.x = basepoint
        self.rng = np.random.default_rng(seed)
        self.grid = int(grid)
        self.opening = float(opening_halfwidth)
        self.follower = _FrameFollower(w, basepoint, s_star=0.0)

    def _axis_grid(self, lo, hi):
        axes = [np.linspace(lo[j], hi[j], self.grid) for j in range(len(lo))]
        pts = np.array(list(itertools.product(*axes)))
        jitter = (self.rng.uniform(-0.02, 0.02, pts.shape)
                  * (hi - lo)[None, :])
        return np.clip(pts + jitter, lo, hi)

    def move(self, trace: GameTrace, t: float):
        setup = trace.setup
        base = setup.base
        if not trace.moves:
            lo = -self.opening * np.ones(setup.semigroup.dim)
            cands = self._axis_grid(lo, -lo)
            scores = [self._score(flow(t, self.w)
                                  @ u_of(vec_to_matrix(
                                      h + setup.semigroup.matrix(t)
                                      @ base.center, self.w))
                                  @ self.x.matrix) for h in cands]
            return Domain.root(setup.semigroup, base, t,
                               cands[int(np.argmin(scores))])
        self.follower.sync(trace)
        last = trace.last_domain()
        gap = t - last.t
        lo, hi = legal_offset_box(last, t)
        cands = self._axis_grid(lo, hi)
        M = setup.semigroup.matrix(gap)
        scores = [self._score(self.follower.frame.at(
            dt=gap, delta=d + M @ base.center)) for d in cands]
        return last.child(t, cands[int(np.argmin(scores))])


class bob_cusp_seeking(_bob_scored):
    """Drives the pushed lattice toward the cusp: minimizes the systole
    at the candidate center."""

    def _score(self, M: np.ndarray) -> float:
        return shortest_vector(M)[0]


class bob_target_seeking(_bob_scored):
    """Steers the pushed lattice toward a target point of the space."""

    def __init__(self, z: LatticeBasis, w: WeightVector,
                 basepoint: LatticeBasis, seed: int = 0, grid: int = 5,
                 opening_halfwidth: float = 0.5):
        super().__init__(w, basepoint, seed=seed, grid=grid,
                         opening_halfwidth=opening_halfwidth)
        self.z = z

    def _score(self, M: np.ndarray) -> float:
        return flow_distance(_as_basis(M), self.z)


# ---------------------------------------------------------------------------
# intersection combinator

class alice_intersect:
    """Block-interleaving combinator: component i joins at Alice move
    2^(i-1) (1-based) and the activated components rotate round-robin.
    Components read the shared trace, so each sees the others' moves the
    same way it would see Bob moves of an inflated-b game."""

    def __init__(self, strategies):
        self.components = list(strategies)
        if not self.components:
            raise ValueError("need at least one component strategy")
        self.counter = 0

    def move(self, trace: GameTrace, t: float):
        k = sum(1 for m in trace.moves if m.player == ALICE) + 1
        active = [i for i in range(len(self.components)) if k >= 2 ** i]
        idx = active[self.counter % len(active)]
        self.counter += 1
        try:
            out = self.components[idx].move(trace, t)
        except Exception as e:
            e.component = idx
            raise
        domain, notes = out if isinstance(out, tuple) else (out, {})
        notes = dict(notes)
        notes["component"] = idx
        return domain, notes
