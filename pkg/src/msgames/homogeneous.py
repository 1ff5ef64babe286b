"""Weighted diagonal flows on the space of unimodular lattices.

Conventions: lattices are column spans of unimodular matrices, the norm on
R^k and on wedge coordinates is the sup norm, and wedge index sets are
ordered lexicographically.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import logm

_MAX_ENUM_DIM = 6


class DimensionTooLarge(Exception):
    pass


@dataclass(frozen=True, eq=False)
class WeightVector:
    """Expansion weights r (size m) and contraction weights s (size n),
    each summing to 1."""

    r: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        r = np.array(self.r, dtype=float).ravel()
        s = np.array(self.s, dtype=float).ravel()
        if np.any(r <= 0) or np.any(s <= 0):
            raise ValueError("weights must be positive")
        if abs(r.sum() - 1.0) > 1e-12 or abs(s.sum() - 1.0) > 1e-12:
            raise ValueError("weight vectors must each sum to 1")
        r.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "s", s)

    @property
    def m(self) -> int:
        return self.r.size

    @property
    def n(self) -> int:
        return self.s.size

    @property
    def k(self) -> int:
        return self.r.size + self.s.size

    @property
    def omega(self) -> np.ndarray:
        return np.concatenate([self.r, -self.s])

    def contraction_rates(self) -> np.ndarray:
        """Rates r_i + s_j of the induced contraction on the Y block,
        flattened row-major to match Y.ravel()."""
        return np.add.outer(self.r, self.s).ravel()


def u_of(Y) -> np.ndarray:
    """The unipotent element with upper-right block Y (m x n)."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    m, n = Y.shape
    out = np.eye(m + n)
    out[:m, m:] = Y
    return out


def flow(t: float, w: WeightVector) -> np.ndarray:
    return np.diag(np.exp(np.concatenate([w.r * t, -w.s * t])))


def vec_to_matrix(h, w: WeightVector) -> np.ndarray:
    return np.asarray(h, dtype=float).reshape(w.m, w.n)


@dataclass(frozen=True, eq=False)
class LatticeBasis:
    """Columns generate a unimodular lattice (|det| = 1 within 1e-9)."""

    matrix: np.ndarray

    def __post_init__(self):
        M = np.array(self.matrix, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError("basis must be square")
        det = abs(np.linalg.det(M))
        if abs(det - 1.0) > 1e-9:
            raise ValueError(f"basis determinant has modulus {det:.12g}, expected 1")
        M.setflags(write=False)
        object.__setattr__(self, "matrix", M)

    @property
    def k(self) -> int:
        return self.matrix.shape[0]


def write_basis_csv(basis: LatticeBasis, path) -> None:
    with open(path, "w") as fh:
        fh.write("# unimodular lattice basis, rows of the matrix in order;\n")
        fh.write("# wedge coordinates, where used, follow lexicographic index sets\n")
        for row in basis.matrix:
            fh.write(",".join(f"{x:.17g}" for x in row) + "\n")


def read_basis_csv(path) -> LatticeBasis:
    rows = []
    with open(path) as fh:
        for ln in fh:
            ln = ln.strip()
            if not ln or ln.startswith("#"):
                continue
            rows.append([float(x) for x in ln.split(",")])
    return LatticeBasis(np.asarray(rows))


# ---------------------------------------------------------------------------
# reduction and sup-norm enumeration

def _exact_int(A: np.ndarray) -> np.ndarray:
    """Copy an integer array into object dtype holding Python ints, so
    subsequent products cannot overflow."""
    out = np.empty(A.shape, dtype=object)
    for idx, x in np.ndenumerate(A):
        out[idx] = int(x)
    return out


def lll_reduce(B: np.ndarray, delta: float = 0.99) -> tuple[np.ndarray, np.ndarray]:
    """Column LLL reduction.  Returns (B', U) with B' = B @ U, U unimodular.

    The transform is tracked in exact integer arithmetic: on badly
    conditioned inputs (deeply flowed bases) the size-reduction
    multipliers overflow int64, so U falls back to an object array of
    Python ints whenever its entries do not fit."""
    B = np.array(B, dtype=float)
    k = B.shape[1]
    U = np.eye(k, dtype=object)
    it = 0
    while True:
        it += 1
        if it > 2000:
            break
        Q = np.zeros_like(B)
        mu = np.zeros((k, k))
        norms = np.zeros(k)
        for i in range(k):
            v = B[:, i].copy()
            for j in range(i):
                mu[i, j] = 0.0 if norms[j] == 0 else float(Q[:, j] @ B[:, i]) / norms[j]
                v -= mu[i, j] * Q[:, j]
            Q[:, i] = v
            norms[i] = float(v @ v)
        changed = False
        for i in range(1, k):
            for j in range(i - 1, -1, -1):
                q = round(mu[i, j])
                if q != 0:
                    B[:, i] -= q * B[:, j]
                    U[:, i] -= q * U[:, j]
                    mu[i, :j + 1] -= q * mu[j, :j + 1]
                    mu[i, j] -= 0  # kept for clarity; mu now size-reduced
                    changed = True
        swapped = False
        for i in range(k - 1):
            # Lovasz condition on consecutive Gram-Schmidt norms
            lhs = norms[i + 1] + mu[i + 1, i] ** 2 * norms[i]
            if lhs < (delta - 1e-12) * norms[i]:
                B[:, [i, i + 1]] = B[:, [i + 1, i]]
                U[:, [i, i + 1]] = U[:, [i + 1, i]]
                swapped = True
                break
        if not swapped:
            if not changed:
                break
    try:
        return B, U.astype(np.int64)
    except OverflowError:
        return B, U


def _enum_box(Bred: np.ndarray, bound: float) -> np.ndarray:
    """All nonzero integer coefficient vectors (one per +- pair) that could
    give a lattice vector of sup norm <= bound."""
    k = Bred.shape[1]
    inv = np.linalg.inv(Bred)
    lim = np.floor(bound * np.sum(np.abs(inv), axis=1) + 1e-9).astype(np.int64)
    lim = np.minimum(lim, 10 ** 6)
    total = np.prod(2.0 * lim + 1.0)
    if total > 4e6:
        raise DimensionTooLarge(f"enumeration box too large ({total:.3g} points)")
    axes = [np.arange(-l, l + 1) for l in lim]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, k)
    nz = np.any(grid != 0, axis=1)
    grid = grid[nz]
    # one representative per +-v: first nonzero coordinate positive
    first = np.argmax(grid != 0, axis=1)
    keep = grid[np.arange(len(grid)), first] > 0
    return grid[keep]


def shortest_vector(B: np.ndarray) -> tuple[float, np.ndarray]:
    """Sup-norm shortest nonzero vector by reduction plus exact box
    enumeration; returns (norm, integer coefficients in the input basis)."""
    k = B.shape[1]
    if k > _MAX_ENUM_DIM:
        raise DimensionTooLarge(f"enumeration supports dimension <= {_MAX_ENUM_DIM}")
    Bred, U = lll_reduce(B)
    col_norms = np.max(np.abs(Bred), axis=0)
    bound = float(np.min(col_norms))
    cand = _enum_box(Bred, bound)
    vecs = cand @ Bred.T
    vals = np.max(np.abs(vecs), axis=1)
    best = float(np.min(vals))
    hit = np.where(vals <= best + 0.0)[0]
    # ties in the sup norm: prefer the Euclidean-shortest achiever, then a
    # fixed lexicographic order, so witnesses are deterministic
    l2 = np.sum(vecs[hit] ** 2, axis=1)
    hit = hit[l2 <= np.min(l2) * (1 + 1e-12)]
    rows = cand[hit]
    order = np.lexsort((-rows).T[::-1])
    row = rows[order[0]]
    c = U @ (_exact_int(row) if U.dtype == object else row)
    return best, _sign_normal(c)


def _sign_normal(c: np.ndarray) -> np.ndarray:
    nz = np.nonzero(c)[0]
    if nz.size and c[nz[0]] < 0:
        return -c
    return c


def systole(basis: LatticeBasis) -> tuple[float, np.ndarray]:
    """Shortest nonzero lattice vector in sup norm, with an integer witness."""
    return shortest_vector(basis.matrix)


def vectors_below(B: np.ndarray, threshold: float) -> list:
    """All primitive lattice vectors of sup norm < threshold, one per +- pair,
    as (coefficients, vector, norm) in the input basis."""
    k = B.shape[1]
    if k > _MAX_ENUM_DIM:
        raise DimensionTooLarge(f"enumeration supports dimension <= {_MAX_ENUM_DIM}")
    Bred, U = lll_reduce(B)
    cand = _enum_box(Bred, threshold)
    vecs = cand @ Bred.T
    vals = np.max(np.abs(vecs), axis=1)
    out = []
    exact = U.dtype == object
    for i in np.where(vals < threshold)[0]:
        c = U @ (_exact_int(cand[i]) if exact else cand[i])
        g = math.gcd(*(int(x) for x in c)) if exact \
            else int(np.gcd.reduce(np.abs(c)))
        if g != 1:
            continue
        cn = _sign_normal(c)
        out.append((cn, vecs[i] if cn is c else -vecs[i], float(vals[i])))
    out.sort(key=lambda rec: (rec[2], tuple(rec[0])))
    return out


# ---------------------------------------------------------------------------
# wedge representation

@lru_cache(maxsize=None)
def index_sets(k: int, d: int) -> tuple:
    return tuple(itertools.combinations(range(k), d))


def wedge_basis(M: np.ndarray, d: int) -> np.ndarray:
    """Matrix of the induced map on degree-d wedge coordinates: entry
    (I, J) is the minor of M with rows I and columns J (lex order)."""
    M = np.asarray(M, dtype=float)
    k = M.shape[0]
    idx = index_sets(k, d)
    if d == 1:
        return M.copy()
    W = np.empty((len(idx), len(idx)))
    for a, I in enumerate(idx):
        for b, J in enumerate(idx):
            W[a, b] = np.linalg.det(M[np.ix_(I, J)])
    return W


@dataclass(frozen=True, eq=False)
class RepresentationData:
    """Degree-d wedge of the standard representation, with the diagonal
    flow acting by exp(lambda_I t) on coordinate I, lambda_I the sum of
    the weights in I.  The expanding block is {I : lambda_I > 0}."""

    w: WeightVector
    d: int
    idx: tuple
    weights: np.ndarray
    expanding: np.ndarray

    @classmethod
    def build(cls, w: WeightVector, d: int) -> "RepresentationData":
        if not (1 <= d <= w.k - 1):
            raise ValueError("wedge degree must lie in 1..k-1")
        idx = index_sets(w.k, d)
        omega = w.omega
        lam = np.array([sum(omega[i] for i in I) for I in idx])
        lam.setflags(write=False)
        exp_mask = lam > 1e-12
        exp_mask.setflags(write=False)
        return cls(w, d, idx, lam, exp_mask)

    @property
    def dim(self) -> int:
        return len(self.idx)

    def project_expanding(self, v) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.expanding] = np.asarray(v, dtype=float)[self.expanding]
        return out


def dangerous_vectors(basis: LatticeBasis, d: int, threshold: float) -> list:
    """Wedge-lattice vectors of degree d with sup norm below threshold.

    Returns (coefficients over the lex wedge basis, real vector, norm),
    one entry per +- pair, primitive coefficients only.
    """
    if basis.k > 3:
        raise DimensionTooLarge("dangerous_vectors supports k <= 3")
    W = wedge_basis(basis.matrix, d)
    return vectors_below(W, threshold)


# ---------------------------------------------------------------------------
# polynomial maps Y -> wedge(u_Y) v

def _poly_mul(p: dict, q: dict) -> dict:
    out = {}
    for ea, ca in p.items():
        for eb, cb in q.items():
            e = tuple(x + y for x, y in zip(ea, eb))
            out[e] = out.get(e, 0.0) + ca * cb
    return {e: c for e, c in out.items() if c != 0.0}


def _poly_add(p: dict, q: dict, scale: float = 1.0) -> dict:
    out = dict(p)
    for e, c in q.items():
        out[e] = out.get(e, 0.0) + scale * c
    return {e: c for e, c in out.items() if c != 0.0}


def _poly_det(entries: list, nvars: int) -> dict:
    d = len(entries)
    if d == 1:
        return entries[0][0]
    out: dict = {}
    for j in range(d):
        minor = [[row[jj] for jj in range(d) if jj != j] for row in entries[1:]]
        sub = _poly_det(minor, nvars)
        term = _poly_mul(entries[0][j], sub)
        out = _poly_add(out, term, scale=(1.0 if j % 2 == 0 else -1.0))
    return out


@lru_cache(maxsize=None)
def _wedge_u_symbolic(m: int, n: int, d: int) -> tuple:
    """Symbolic wedge matrix of u_Y: entry (I, J) as {exponent: coeff} over
    the mn entries of Y (row-major).  Coefficients are exact integers."""
    k = m + n
    nv = m * n
    one = {(0,) * nv: 1.0}

    def entry(i, j):
        if i == j:
            return one
        if i < m and j >= m:
            e = [0] * nv
            e[i * n + (j - m)] = 1
            return {tuple(e): 1.0}
        return {}

    idx = index_sets(k, d)
    table = []
    for I in idx:
        row_out = []
        for J in idx:
            sub = [[entry(i, j) for j in J] for i in I]
            row_out.append(_poly_det(sub, nv))
        table.append(tuple(row_out))
    return tuple(table)


@dataclass(eq=False)
class PolyMap:
    """The coordinates of Y -> wedge(u_Y) v as polynomials in the entries
    of Y.  coords[a] maps exponent tuples to coefficients; coefficients
    are exact integer combinations of the entries of v."""

    rep: RepresentationData
    coords: list

    def coeff_norm(self, block: str = "expanding") -> float:
        sel = self._block(block)
        best = 0.0
        for a in np.where(sel)[0]:
            for c in self.coords[a].values():
                best = max(best, abs(c))
        return best

    def _block(self, block: str) -> np.ndarray:
        if block == "expanding":
            return self.rep.expanding
        if block == "nonexpanding":
            return ~self.rep.expanding
        if block == "all":
            return np.ones(self.rep.dim, dtype=bool)
        raise ValueError(f"unknown block {block!r}")

    def evaluate_many(self, Ys: np.ndarray, block: str = "all") -> np.ndarray:
        """Values at a batch of Y samples, Ys shaped (N, m*n)."""
        Ys = np.atleast_2d(np.asarray(Ys, dtype=float))
        sel = np.where(self._block(block))[0]
        out = np.zeros((Ys.shape[0], sel.size))
        for col, a in enumerate(sel):
            for expo, c in self.coords[a].items():
                term = np.full(Ys.shape[0], c)
                for v, e in enumerate(expo):
                    if e:
                        term = term * Ys[:, v] ** e
                out[:, col] += term
        return out

    def evaluate(self, Y, block: str = "all") -> np.ndarray:
        return self.evaluate_many(np.asarray(Y, dtype=float).ravel()[None, :],
                                  block=block)[0]

    def gradient_sum_bound(self, radius: float, block: str = "expanding") -> float:
        """Bound on sum_i sup |d phi / d Y_i| over the sup-ball of the given
        radius, uniform over the block coordinates."""
        sel = self._block(block)
        worst = 0.0
        for a in np.where(sel)[0]:
            tot = 0.0
            nv = None
            for expo, c in self.coords[a].items():
                nv = len(expo)
                deg = sum(expo)
                if deg == 0:
                    continue
                for i in range(nv):
                    if expo[i]:
                        tot += abs(c) * expo[i] * radius ** (deg - 1)
            worst = max(worst, tot)
        return worst

    def gradient_bounds(self, radius: float, block: str = "expanding") -> np.ndarray:
        """Per-coordinate bounds on sum_i sup |d phi_a / d Y_i| over the
        sup-ball of the given radius."""
        sel = self._block(block)
        out = np.zeros(int(np.sum(sel)))
        for row, a in enumerate(np.where(sel)[0]):
            tot = 0.0
            for expo, c in self.coords[a].items():
                deg = sum(expo)
                if deg == 0:
                    continue
                for i in range(len(expo)):
                    if expo[i]:
                        tot += abs(c) * expo[i] * radius ** (deg - 1)
            out[row] = tot
        return out


def phi_poly(v, rep: RepresentationData) -> PolyMap:
    """Exact coefficients of Y -> wedge(u_Y) v in the given representation."""
    v = np.asarray(v, dtype=float).ravel()
    if v.size != rep.dim:
        raise ValueError("vector length does not match the representation")
    table = _wedge_u_symbolic(rep.w.m, rep.w.n, rep.d)
    coords = []
    for a in range(rep.dim):
        acc: dict = {}
        for b in range(rep.dim):
            if v[b] == 0.0:
                continue
            acc = _poly_add(acc, table[a][b], scale=float(v[b]))
        coords.append(acc)
    return PolyMap(rep, coords)


def expanding_check(w: WeightVector, d: int,
                    block: str = "expanding") -> tuple[bool, int]:
    """Whether v -> (block part of Y -> wedge(u_Y) v) is injective.

    The expanding block is the representation-theoretic condition; passing
    block="nonexpanding" is the negative control and must fail whenever an
    index set sits entirely inside the expanding weights.
    """
    rep = RepresentationData.build(w, d)
    table = _wedge_u_symbolic(w.m, w.n, d)
    sel = rep.expanding if block == "expanding" else ~rep.expanding
    monos = sorted({e for a in np.where(sel)[0]
                    for b in range(rep.dim) for e in table[a][b]})
    rows = len(monos) * int(np.sum(sel))
    A = np.zeros((max(rows, 1), rep.dim))
    r = 0
    for a in np.where(sel)[0]:
        for mi in range(len(monos)):
            for b in range(rep.dim):
                c = table[a][b].get(monos[mi], 0.0)
                if c:
                    A[r + mi, b] = c
        r += len(monos)
    if A.shape[0] == 0 or not np.any(A):
        return False, rep.dim
    sv = np.linalg.svd(A, compute_uv=False)
    rank = int(np.sum(sv > 1e-9 * sv[0]))
    return rank == rep.dim, rep.dim - rank


# ---------------------------------------------------------------------------
# distances on the space of lattices

@lru_cache(maxsize=None)
def _perturbations(k: int) -> np.ndarray:
    vals = np.array(list(itertools.product((-1, 0, 1), repeat=k * k)), dtype=np.int64)
    return vals.reshape(-1, k, k)


def _log_2x2(A: np.ndarray):
    """Principal log of a real 2x2 matrix with positive eigenvalue branch;
    None when the eigenvalues leave the principal domain."""
    tau = 0.5 * (A[0, 0] + A[1, 1])
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    if det <= 0:
        return None
    disc = tau * tau - det
    N = A - tau * np.eye(2)
    if disc > 1e-14:
        th = np.sqrt(disc)
        lp, lm = tau + th, tau - th
        if lm <= 0:
            return None
        return ((np.log(lp) - np.log(lm)) / (2 * th)) * N \
            + 0.5 * (np.log(lp) + np.log(lm)) * np.eye(2)
    if disc < -1e-14:
        th = np.sqrt(-disc)
        phi = np.arctan2(th, tau)
        return (phi / th) * N + 0.5 * np.log(det) * np.eye(2)
    if tau <= 0:
        return None
    return N / tau + np.log(tau) * np.eye(2)


def _mat_log_norm(A: np.ndarray) -> float:
    """Frobenius norm of a matrix logarithm of A (complex branch allowed)."""
    if A.shape[0] == 2:
        L = _log_2x2(A)
        if L is not None:
            return float(np.sqrt(np.sum(L * L)))
    import warnings

    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            L = logm(A)
    except Exception:
        return float("inf")
    return float(np.sqrt(np.sum(np.abs(L) ** 2)))


def _directed_distance(xm: np.ndarray, ym: np.ndarray, cap: int) -> float:
    k = xm.shape[0]
    g0 = np.round(np.linalg.solve(xm, ym)).astype(np.int64)
    pert = _perturbations(k)
    gam = g0[None, :, :] + pert
    dets = np.linalg.det(gam.astype(float))
    ok = np.abs(np.abs(dets) - 1.0) < 0.5
    if not np.any(ok):
        return 1e18
    gam = gam[ok]
    B = np.linalg.solve(ym, xm)
    A = np.einsum("ij,njk->nik", B, gam.astype(float))
    r = np.sqrt(np.sum((A - np.eye(k)) ** 2, axis=(1, 2)))
    order = np.argsort(r)
    best = float("inf")
    for i in order[:cap]:
        if np.log1p(r[i]) >= best:
            break
        val = _mat_log_norm(A[i])
        best = min(best, val)
    return best if np.isfinite(best) else 1e18


def flow_distance(x: LatticeBasis, y: LatticeBasis, cap: int = 4096) -> float:
    """Distance proxy between lattices: min over unimodular realignments
    gamma near round(x^-1 y) of ||log(y^-1 x gamma)||_F, evaluated in both
    argument orders so the result is symmetric by construction; 1e18 when
    no candidate realignment is unimodular.

    Candidates are the rounded matrix plus all {-1,0,1} entrywise
    perturbations; logs are evaluated in increasing order of ||A - I||
    and pruned once they cannot beat the best value found.
    """
    return min(_directed_distance(x.matrix, y.matrix, cap),
               _directed_distance(y.matrix, x.matrix, cap))


def _batched_log_norm_2x2(A: np.ndarray) -> np.ndarray:
    """Frobenius norms of principal logs for a stack of 2x2 matrices;
    inf where the principal branch does not apply."""
    a, b = A[:, 0, 0], A[:, 0, 1]
    c, d = A[:, 1, 0], A[:, 1, 1]
    tau = 0.5 * (a + d)
    det = a * d - b * c
    out = np.full(len(A), np.inf)
    disc = tau * tau - det
    eye = np.eye(2)
    good = det > 0

    hyp = good & (disc > 1e-14)
    if np.any(hyp):
        th = np.sqrt(disc[hyp])
        lp, lm = tau[hyp] + th, tau[hyp] - th
        pos = lm > 0
        ii = np.where(hyp)[0][pos]
        if ii.size:
            th, lp, lm = th[pos], lp[pos], lm[pos]
            f = (np.log(lp) - np.log(lm)) / (2 * th)
            g = 0.5 * (np.log(lp) + np.log(lm))
            N = A[ii] - tau[ii][:, None, None] * eye
            L = f[:, None, None] * N + g[:, None, None] * eye
            out[ii] = np.sqrt(np.sum(L * L, axis=(1, 2)))

    ell = good & (disc < -1e-14)
    if np.any(ell):
        ii = np.where(ell)[0]
        th = np.sqrt(-disc[ii])
        phi = np.arctan2(th, tau[ii])
        N = A[ii] - tau[ii][:, None, None] * eye
        L = (phi / th)[:, None, None] * N \
            + (0.5 * np.log(det[ii]))[:, None, None] * eye
        out[ii] = np.sqrt(np.sum(L * L, axis=(1, 2)))

    par = good & (np.abs(disc) <= 1e-14) & (tau > 0)
    if np.any(par):
        ii = np.where(par)[0]
        N = A[ii] - tau[ii][:, None, None] * eye
        L = N / tau[ii][:, None, None] + np.log(tau[ii])[:, None, None] * eye
        out[ii] = np.sqrt(np.sum(L * L, axis=(1, 2)))
    return out


def segment_distances(points: np.ndarray, segment: np.ndarray,
                      chunk: int = 128) -> np.ndarray:
    """For a stack of 2x2 unimodular matrices, the distance proxy from each
    to the closest of the segment matrices (same proxy as flow_distance,
    including the two-sided symmetrization).

    Vectorized over points x segment samples x realignment perturbations;
    only 2x2 lattices are supported, which is all the avoidance games use.
    """
    points = np.asarray(points, dtype=float)
    segment = np.asarray(segment, dtype=float)
    if points.shape[-1] != 2:
        raise DimensionTooLarge("batched segment distances support k = 2 only")
    pert = _perturbations(2).astype(float)
    seg_inv = np.linalg.inv(segment)
    out = np.empty(len(points))
    for lo in range(0, len(points), chunk):
        P = points[lo:lo + chunk]
        Pinv = np.linalg.inv(P)
        npts = len(P)
        C1 = np.einsum("nab,sbc->nsac", Pinv, segment)
        C2 = np.einsum("sab,nbc->nsac", seg_inv, P)
        stacks_r, stacks_a = [], []
        for Base, Target in ((C2, C1), (C1, C2)):
            Gam = np.round(Target)[:, :, None, :, :] + pert[None, None]
            det = Gam[..., 0, 0] * Gam[..., 1, 1] \
                - Gam[..., 0, 1] * Gam[..., 1, 0]
            ok = np.abs(np.abs(det) - 1.0) < 0.5
            A = np.einsum("nsab,nspbc->nspac", Base, Gam)
            R = np.sqrt(np.sum((A - np.eye(2)) ** 2, axis=(-2, -1)))
            R[~ok] = np.inf
            stacks_r.append(R.reshape(npts, -1))
            stacks_a.append(A.reshape(npts, -1, 2, 2))
        Rf = np.concatenate(stacks_r, axis=1)
        Af = np.concatenate(stacks_a, axis=1)
        # evaluate logs of the closest-by-residual candidates, then confirm
        # the prune bound log(1 + r) >= best on the first excluded one
        take = min(8, Rf.shape[1])
        sel = np.argpartition(Rf, take - 1, axis=1)[:, :take]
        vals = _batched_log_norm_2x2(
            Af[np.arange(npts)[:, None], sel].reshape(-1, 2, 2)).reshape(npts, take)
        best = np.min(vals, axis=1)
        rest = np.partition(Rf, take - 1, axis=1)[:, take - 1:]
        floor_rest = np.log1p(np.min(rest, axis=1))
        redo = np.where(best > floor_rest + 1e-15)[0]
        for i in redo:
            order = np.argsort(Rf[i])
            b = best[i]
            for j in order:
                if np.log1p(Rf[i, j]) >= b:
                    break
                b = min(b, _mat_log_norm(Af[i, j]))
            best[i] = b
        out[lo:lo + chunk] = best
    return out


# ---------------------------------------------------------------------------
# incrementally reduced pushed frames

class PushedFrame:
    """Basis of the flow-pushed lattice g_t u_h g0, maintained in reduced
    form so deep games stay well-conditioned.

    Advancing by (dt, delta) with delta the pulled offset of the new
    translation multiplies by flow(dt) u(Phi_{s_offset}(delta)) on the
    left; with s_offset = 0 this is exactly the conjugation identity for
    translated sub-domains.
    """

    def __init__(self, w: WeightVector, start: np.ndarray):
        self.w = w
        self.P, self.U = lll_reduce(np.array(start, dtype=float))

    def advance(self, dt: float, delta=None, s_offset: float = 0.0) -> np.ndarray:
        """Advance time by dt after absorbing pulled offset delta; returns
        the unimodular transform applied to lattice coordinates."""
        M = self.P
        if delta is not None:
            d = np.asarray(delta, dtype=float)
            if s_offset != 0.0:
                d = d * np.exp(-np.add.outer(self.w.r, self.w.s).ravel() * s_offset)
            M = u_of(vec_to_matrix(d, self.w)) @ M
        if dt != 0.0:
            M = flow(dt, self.w) @ M
        self.P, U = lll_reduce(M)
        # cumulative product in exact integers (it grows with the total
        # flow), stored back as int64 while it fits
        acc = (_exact_int(self.U) if self.U.dtype != object else self.U) \
            @ (_exact_int(U) if U.dtype != object else U)
        try:
            self.U = acc.astype(np.int64)
        except OverflowError:
            self.U = acc
        return U

    def at(self, dt: float = 0.0, delta=None, s_offset: float = 0.0) -> np.ndarray:
        """Probe matrix without committing the advance."""
        M = self.P
        if delta is not None:
            d = np.asarray(delta, dtype=float)
            if s_offset != 0.0:
                d = d * np.exp(-np.add.outer(self.w.r, self.w.s).ravel() * s_offset)
            M = u_of(vec_to_matrix(d, self.w)) @ M
        if dt != 0.0:
            M = flow(dt, self.w) @ M
        return M
