"""Contracting automorphism semigroups acting on a coordinatized horospherical.

The group being translated is treated as an abelian coordinate space R^ell.
All metric statements use the sup norm.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import expm


class MismatchedContext(Exception):
    """Two domains do not share a semigroup and base."""


class TooSmallScale(Exception):
    """The requested scale cannot host the requested configuration."""


def sup_norm(x) -> float:
    return float(np.max(np.abs(np.asarray(x, dtype=float))))


def _frozen_array(a, shape=None) -> np.ndarray:
    out = np.array(a, dtype=float)
    if shape is not None:
        out = out.reshape(shape)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class ContractionSemigroup:
    """One-parameter semigroup Phi_t of linear contractions of R^ell.

    kind "diagonal" stores positive per-coordinate rates;
    kind "general" stores a generator whose eigenvalues all have
    negative real part (checked at construction, tolerance 1e-9).
    sigma is a lower bound on every contraction exponent and c0 the
    diameter constant, so diam(Phi_t(D0)) <= c0 * exp(-sigma * t).
    """

    dim: int
    kind: str
    sigma: float
    c0: float
    rates: Optional[np.ndarray] = None
    generator: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("diagonal", "general"):
            raise ValueError(f"unknown semigroup kind {self.kind!r}")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.kind == "diagonal":
            r = _frozen_array(self.rates, (self.dim,))
            if np.any(r <= 0):
                raise ValueError("diagonal rates must be positive")
            if self.sigma > np.min(r) + 1e-12:
                raise ValueError("sigma exceeds the smallest contraction rate")
            object.__setattr__(self, "rates", r)
        else:
            g = _frozen_array(self.generator, (self.dim, self.dim))
            re = np.real(np.linalg.eigvals(g))
            if np.any(re > -self.sigma + 1e-9):
                raise ValueError(
                    "generator eigenvalue real parts must lie below -sigma "
                    f"(found max {np.max(re):.6g}, sigma {self.sigma:.6g})"
                )
            object.__setattr__(self, "generator", g)

    @classmethod
    def diagonal(cls, rates, c0: float = 1.0) -> "ContractionSemigroup":
        r = np.asarray(rates, dtype=float).ravel()
        return cls(dim=r.size, kind="diagonal", sigma=float(np.min(r)), c0=c0, rates=r)

    @classmethod
    def general(cls, generator, sigma: Optional[float] = None,
                c0: float = 1.0) -> "ContractionSemigroup":
        g = np.asarray(generator, dtype=float)
        if sigma is None:
            sigma = -float(np.max(np.real(np.linalg.eigvals(g))))
        return cls(dim=g.shape[0], kind="general", sigma=float(sigma), c0=c0, generator=g)

    def matrix(self, t: float) -> np.ndarray:
        """The linear map Phi_t. Negative t expands."""
        if self.kind == "diagonal":
            return np.diag(np.exp(-self.rates * t))
        return expm(self.generator * t)

    def factors(self, t: float) -> np.ndarray:
        # diagonal fast path used in game loops
        return np.exp(-self.rates * t)

    def with_c0(self, c0: float) -> "ContractionSemigroup":
        if self.kind == "diagonal":
            return ContractionSemigroup(self.dim, "diagonal", self.sigma, c0, rates=self.rates)
        return ContractionSemigroup(self.dim, "general", self.sigma, c0, generator=self.generator)


def apply(sg: ContractionSemigroup, t: float, x) -> np.ndarray:
    """Phi_t(x). Relative accuracy of the general-kind exponential is
    that of scaling-and-squaring, well below 1e-10 at these sizes."""
    x = np.asarray(x, dtype=float)
    if sg.kind == "diagonal":
        return np.exp(-sg.rates * t) * x
    return sg.matrix(t) @ x


@dataclass(frozen=True, eq=False)
class AdmissibleBase:
    """A closed box [lower, upper] with nonempty interior, the base domain D0."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = _frozen_array(self.lower)
        hi = _frozen_array(self.upper, lo.shape)
        if np.any(hi <= lo):
            raise ValueError("base box needs lower < upper in every coordinate")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unit(cls, dim: int) -> "AdmissibleBase":
        return cls(np.zeros(dim), np.ones(dim))

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def diameter(self) -> float:
        return float(np.max(self.widths))

    def contains(self, x, tol: float = 1e-12) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))


def _image_bb(M: np.ndarray, base: AdmissibleBase) -> tuple[np.ndarray, np.ndarray]:
    """Axis-aligned bounding box of {M x : x in base}."""
    lo = np.where(M >= 0, M * base.lower[None, :], M * base.upper[None, :]).sum(axis=1)
    hi = np.where(M >= 0, M * base.upper[None, :], M * base.lower[None, :]).sum(axis=1)
    return lo, hi


def image_bb_widths(sg: ContractionSemigroup, t: float, base: AdmissibleBase) -> np.ndarray:
    if sg.kind == "diagonal":
        return np.exp(-sg.rates * t) * base.widths
    return np.abs(sg.matrix(t)) @ base.widths


@dataclass(frozen=True, eq=False)
class Domain:
    """The translate Phi_t(D0) + translation.

    A domain may carry a link to the parent it was carved out of, together
    with the offset of its seed in the parent's pulled coordinates
    (translation = parent.translation + Phi_{parent.t}(delta)).  Deeply
    nested games are only meaningful through these relative offsets: the
    absolute translation stops resolving nested domains once their width
    falls under the floating-point grain.
    """

    semigroup: ContractionSemigroup
    base: AdmissibleBase
    t: float
    translation: np.ndarray
    parent: Optional["Domain"] = field(default=None, repr=False)
    delta: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "translation",
                           _frozen_array(self.translation, (self.semigroup.dim,)))
        if self.delta is not None:
            object.__setattr__(self, "delta",
                               _frozen_array(self.delta, (self.semigroup.dim,)))

    @classmethod
    def root(cls, sg: ContractionSemigroup, base: AdmissibleBase, t: float,
             translation=None) -> "Domain":
        h = np.zeros(sg.dim) if translation is None else translation
        return cls(sg, base, float(t), h)

    def child(self, t: float, delta) -> "Domain":
        """Sub-domain seeded at pulled offset delta in this domain's frame."""
        delta = np.asarray(delta, dtype=float)
        if self.semigroup.kind == "diagonal":
            step = np.exp(-self.semigroup.rates * self.t) * delta
        else:
            step = self.semigroup.matrix(self.t) @ delta
        return Domain(self.semigroup, self.base, float(t),
                      self.translation + step, parent=self, delta=delta)

    def matrix(self) -> np.ndarray:
        return self.semigroup.matrix(self.t)

    def center(self) -> np.ndarray:
        if self.semigroup.kind == "diagonal":
            return self.translation + self.semigroup.factors(self.t) * self.base.center
        return self.translation + self.matrix() @ self.base.center

    def vertices(self) -> np.ndarray:
        dim = self.semigroup.dim
        corners = np.array(
            [[(self.base.upper if (i >> j) & 1 else self.base.lower)[j]
              for j in range(dim)] for i in range(2 ** dim)])
        return corners @ self.matrix().T + self.translation

    def diameter(self) -> float:
        """Exact sup-norm diameter of the parallelotope."""
        return float(np.max(image_bb_widths(self.semigroup, self.t, self.base)))

    def same_context(self, other: "Domain") -> bool:
        return self.semigroup is other.semigroup and self.base is other.base


def diameter_bound(sg: ContractionSemigroup, t: float) -> float:
    return sg.c0 * float(np.exp(-sg.sigma * t))


def calibrate_c0(sg: ContractionSemigroup, base: AdmissibleBase,
                 t_hi: Optional[float] = None, steps: int = 4000) -> float:
    """Smallest constant (up to grid resolution) making the diameter bound hold."""
    if sg.kind == "diagonal":
        return base.diameter()
    if t_hi is None:
        t_hi = 20.0 / sg.sigma
    ts = np.linspace(0.0, t_hi, steps)
    best = 0.0
    for t in ts:
        d = float(np.max(image_bb_widths(sg, t, base)))
        best = max(best, d * np.exp(sg.sigma * t))
    return best * (1.0 + 1e-9)


def chain_offset(inner: Domain, outer: Domain) -> Optional[np.ndarray]:
    """Pulled coordinates of inner's seed in outer's frame, when inner
    descends from outer through parent links.  None if it does not."""
    if inner is outer:
        return np.zeros(inner.semigroup.dim)
    sg = inner.semigroup
    acc = None
    node = inner
    while node.parent is not None:
        # accumulate: offset of node within node.parent, then pull further up
        if acc is None:
            acc = node.delta.copy()
        else:
            gap = node.t - node.parent.t
            if sg.kind == "diagonal":
                acc = node.delta + np.exp(-sg.rates * gap) * acc
            else:
                acc = node.delta + sg.matrix(gap) @ acc
        node = node.parent
        if node is outer:
            return acc
    return None


def fits_inside(inner: Domain, outer: Domain, tol: float = 1e-12) -> bool:
    """Whether the inner translate lies inside the outer one.

    Raises MismatchedContext when the two domains do not share their
    semigroup and base.  With a parent link the check runs in the outer
    frame's pulled coordinates, which keeps it exact at any depth;
    otherwise every vertex of the inner parallelotope is pulled through
    the outer map and tested against the base box.
    """
    if not inner.same_context(outer):
        raise MismatchedContext("domains built over different semigroups or bases")
    sg = inner.semigroup
    rel = chain_offset(inner, outer)
    if rel is not None:
        lo, hi = _image_bb(sg.matrix(inner.t - outer.t), inner.base)
        return bool(np.all(rel + lo >= outer.base.lower - tol)
                    and np.all(rel + hi <= outer.base.upper + tol))
    Minv = np.linalg.inv(outer.matrix())
    pulled = (inner.vertices() - outer.translation) @ Minv.T
    return bool(np.all(pulled >= outer.base.lower - tol)
                and np.all(pulled <= outer.base.upper + tol))


def legal_offset_box(outer: Domain, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Box of pulled offsets delta with Phi_{t - outer.t}(D0) + delta inside D0.

    Empty (lower > upper somewhere) when the scale gap is too small.
    """
    sg = outer.semigroup
    lo, hi = _image_bb(sg.matrix(t - outer.t), outer.base)
    return outer.base.lower - lo, outer.base.upper - hi


def compute_a_star(sg: ContractionSemigroup, base: AdmissibleBase,
                   t_hi: Optional[float] = None, tol: float = 1e-6) -> float:
    """Threshold scale beyond which some translate of Phi_t(D0) fits inside D0.

    For diagonal semigroups on boxes every t >= 0 admits a fit, so the
    threshold is 0.  In general the fitting set need not be upward closed
    near 0 (a rotation can fatten the bounding box faster than the decay
    shrinks it), so the value returned is the supremum of the non-fitting
    scales, located by a grid scan and sharpened by bisection.
    """

    def fit(t: float) -> bool:
        return bool(np.all(image_bb_widths(sg, t, base) <= base.widths + 1e-15))

    if sg.kind == "diagonal":
        return 0.0
    if t_hi is None:
        t_hi = (np.log(float(np.sum(base.widths)) / float(np.min(base.widths)))
                + 5.0) / sg.sigma + 1.0
    ts = np.linspace(0.0, t_hi, 4000)
    last_bad = None
    for t in ts:
        if not fit(t):
            last_bad = t
    if last_bad is None:
        return 0.0
    lo, hi = last_bad, last_bad + (ts[1] - ts[0])
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if fit(mid):
            hi = mid
        else:
            lo = mid
    return hi


def parallelotope_distance(d1: Domain, d2: Domain) -> float:
    """Euclidean distance between the point sets of two domains.

    For a diagonal semigroup both sets are boxes, so the distance is the
    norm of the vector of per-axis interval gaps.  Otherwise it is a
    bounded-variable least-squares problem over the two preimage boxes.
    """
    if d1.semigroup.kind == "diagonal" and d2.semigroup.kind == "diagonal":
        f1 = d1.semigroup.factors(d1.t)
        lo1 = d1.translation + f1 * d1.base.lower
        hi1 = d1.translation + f1 * d1.base.upper
        f2 = d2.semigroup.factors(d2.t)
        lo2 = d2.translation + f2 * d2.base.lower
        hi2 = d2.translation + f2 * d2.base.upper
        gaps = np.maximum(0.0, np.maximum(lo2 - hi1, lo1 - hi2))
        return float(np.linalg.norm(gaps))

    from scipy.optimize import lsq_linear

    # points are h_i + M_i (lower_i + diag(width_i) u_i) with u_i in [0,1]
    M1, M2 = d1.matrix(), d2.matrix()
    delta = (d2.translation + M2 @ d2.base.lower) \
        - (d1.translation + M1 @ d1.base.lower)
    A = np.hstack([M2 @ np.diag(d2.base.widths), -M1 @ np.diag(d1.base.widths)])
    res = lsq_linear(A, -delta, bounds=(0.0, 1.0))
    return float(np.linalg.norm(delta + A @ res.x))


def two_separated_translates(sg: ContractionSemigroup, a: float,
                             base: AdmissibleBase) -> tuple[Domain, Domain, float]:
    """Two translates of Phi_a(D0) inside D0 at positive sup distance.

    The translates sit at the lower and upper corners of the base box.
    Raises TooSmallScale if a is not past the two-fit threshold.
    """
    M = sg.matrix(a)
    lo, hi = _image_bb(M, base)
    widths = hi - lo
    if np.any(widths > base.widths):
        raise TooSmallScale(f"Phi_a(D0) does not fit inside D0 at a={a:.6g}")
    root = Domain.root(sg, base, 0.0)
    d1 = root.child(a, base.lower - lo)
    d2 = root.child(a, base.upper - hi)
    eps0 = parallelotope_distance(d1, d2)
    if eps0 <= 0.0:
        raise TooSmallScale(f"no separation between corner translates at a={a:.6g}")
    return d1, d2, eps0


def mutual_squeeze_scale(sg: ContractionSemigroup, base1: AdmissibleBase,
                         base2: AdmissibleBase, tol: float = 1e-6) -> float:
    """Smallest s whose contraction lets each base box accept a translate
    of the other's Phi_s image.  Used when changing the initial domain."""

    def ok(s: float) -> bool:
        return bool(np.all(image_bb_widths(sg, s, base1) <= base2.widths + 1e-15)
                    and np.all(image_bb_widths(sg, s, base2) <= base1.widths + 1e-15))

    hi = 1.0
    while not ok(hi):
        hi *= 2.0
        if hi > 1e6:
            raise TooSmallScale("no mutual squeeze scale below 1e6")
    if ok(0.0):
        # still bisect: the set may not contain 0 for general kinds
        pass
    lo = 0.0
    # locate sup of the failing set, as in compute_a_star
    ts = np.linspace(0.0, hi, 2000)
    last_bad = None
    for t in ts:
        if not ok(t):
            last_bad = t
    if last_bad is None:
        return 0.0
    lo, hi = last_bad, last_bad + ts[1] - ts[0]
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi
