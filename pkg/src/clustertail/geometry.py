"""Cones spanned by expected-cluster vectors, polar coordinates, bounded-away
certification, and the discrete optimizer picking the lightest-index cone that
meets a rare-event set.

Rare-event sets are finite unions of closed bounded axis-aligned boxes kept
away from the origin; for such compact sets, being bounded away from the
(angle-enlarged) union of lighter cones is equivalent to plain disjointness
from the closed cones, which the small LPs below decide exactly.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigFormatError,
    EmptySet,
    LPNonConvergence,
    NegativeCoordinate,
    NoConeIntersects,
    NonUniqueArgmin,
)
from .model import ModelConfig, alpha_of

LP_TOL = 1e-9
ALPHA_TIE_TOL = 1e-12


# -------------------------------------------------------------------- types
@dataclass(frozen=True)
class PolarPoint:
    r: float
    theta: np.ndarray  # on the L1 unit sphere in the positive quadrant


@dataclass(frozen=True)
class ConeWitness:
    jset: frozenset
    weights: np.ndarray  # aligned with sorted(jset)
    point: np.ndarray  # sum of weights * sbar columns


class RareEventSet:
    """Nonempty finite union of closed boxes in the positive quadrant,
    bounded away from the origin (min over boxes of sum(lo) > 0)."""

    def __init__(self, boxes):
        parsed = []
        for lo, hi in boxes:
            lo = np.asarray(lo, dtype=np.float64)
            hi = np.asarray(hi, dtype=np.float64)
            if lo.ndim != 1 or lo.shape != hi.shape:
                raise ConfigFormatError("box lo/hi must be equal-length vectors")
            if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
                raise ConfigFormatError("box coordinates must be finite")
            if np.any(lo < 0) or np.any(hi < lo):
                raise ConfigFormatError("boxes need 0 <= lo <= hi")
            lo.setflags(write=False)
            hi.setflags(write=False)
            parsed.append((lo, hi))
        if not parsed:
            raise ConfigFormatError("a rare-event set needs at least one box")
        dims = {lo.shape[0] for lo, _ in parsed}
        if len(dims) != 1:
            raise ConfigFormatError("all boxes must share one dimension")
        self.d = dims.pop()
        self.boxes = tuple(parsed)
        self.origin_distance = min(float(lo.sum()) for lo, _ in self.boxes)
        if self.origin_distance <= 0.0:
            raise ConfigFormatError("the set must be bounded away from the origin")

    def scaled(self, a: float) -> "RareEventSet":
        return RareEventSet([(lo * a, hi * a) for lo, hi in self.boxes])

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=np.float64)
        return any(bool(np.all(x >= lo) and np.all(x <= hi)) for lo, hi in self.boxes)

    def to_dict(self):
        return {"boxes": [{"lo": list(map(float, lo)), "hi": list(map(float, hi))}
                          for lo, hi in self.boxes]}


def rare_set_from_dict(obj) -> RareEventSet:
    if not isinstance(obj, dict) or "boxes" not in obj or not isinstance(obj["boxes"], list):
        raise ConfigFormatError("rare-event set file needs a 'boxes' list")
    boxes = []
    for b in obj["boxes"]:
        try:
            boxes.append((b["lo"], b["hi"]))
        except (TypeError, KeyError) as e:
            raise ConfigFormatError(f"malformed box entry: {b!r}") from e
    return RareEventSet(boxes)


def rare_set_from_json(path) -> RareEventSet:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigFormatError(f"cannot read rare-event set {path}: {e}") from e
    return rare_set_from_dict(obj)


# -------------------------------------------------------------------- polar
def polar(x) -> PolarPoint:
    """L1 polar coordinates on the positive quadrant; 0 maps to (0, e_1)."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0):
        raise NegativeCoordinate("polar coordinates need nonnegative input")
    r = float(x.sum())
    if r == 0.0:
        theta = np.zeros_like(x)
        theta[0] = 1.0
    else:
        theta = x / r
    theta.setflags(write=False)
    return PolarPoint(r=r, theta=theta)


# ------------------------------------------------------------------ simplex
def _simplex(c, A, b, max_iter=10_000, tol=LP_TOL):
    """min c@x s.t. Ax = b, x >= 0 via two-phase dense simplex, Bland's rule.

    Returns (x, objective, duality_gap). Raises LPNonConvergence on the
    iteration cap and on phase-I infeasibility leaks (callers construct only
    feasible programs); use _simplex_feasible to probe feasibility.
    """
    x, obj, gap, feasible = _simplex_raw(c, A, b, max_iter, tol)
    if not feasible:
        raise LPNonConvergence("LP is infeasible; degenerate geometry input")
    return x, obj, gap


def _bland_pivot(A, b, c, basis, max_iter, tol):
    m, n = A.shape
    for _ in range(max_iter):
        B = A[:, basis]
        try:
            Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as e:
            raise LPNonConvergence("singular basis in simplex") from e
        xb = Binv @ b
        y = Binv.T @ c[basis]
        reduced = c - A.T @ y
        enter = -1
        for j in range(n):
            if j not in basis and reduced[j] < -tol:
                enter = j
                break
        if enter < 0:
            return basis, xb, y, True
        direction = Binv @ A[:, enter]
        theta = np.inf
        leave = -1
        for r in range(m):
            if direction[r] > tol:
                ratio = xb[r] / direction[r]
                if ratio < theta - tol or (
                    abs(ratio - theta) <= tol
                    and (leave < 0 or basis[r] < basis[leave])
                ):
                    theta = ratio
                    leave = r
        if leave < 0:
            raise LPNonConvergence("unbounded LP; degenerate geometry input")
        basis[leave] = enter
    raise LPNonConvergence("simplex iteration cap exceeded")


def _simplex_raw(c, A, b, max_iter=10_000, tol=LP_TOL):
    c = np.asarray(c, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64).copy()
    m, n = A.shape
    A = A.copy()
    neg = b < 0
    A[neg] *= -1.0
    b[neg] *= -1.0
    # phase I
    A1 = np.hstack([A, np.eye(m)])
    c1 = np.concatenate([np.zeros(n), np.ones(m)])
    basis = list(range(n, n + m))
    basis, xb, _, _ = _bland_pivot(A1, b, c1, basis, max_iter, tol)
    if float(c1[basis] @ xb) > 1e-7:
        return np.zeros(n), 0.0, 0.0, False
    # pivot lingering artificials out where possible, drop redundant rows
    keep = list(range(m))
    for r in range(m):
        if basis[r] >= n:
            Binv = np.linalg.inv(A1[:, basis])
            row = Binv[r] @ A1[:, :n]
            cand = [j for j in range(n) if j not in basis and abs(row[j]) > tol]
            if cand:
                basis[r] = cand[0]
            else:
                keep.remove(r)
    if len(keep) < m:
        rows = np.array(keep, dtype=int)
        A = A[rows]
        b = b[rows]
        basis = [basis[r] for r in keep]
        m = len(keep)
    # phase II
    basis, xb, y, _ = _bland_pivot(A, b, c, basis, max_iter, tol)
    x = np.zeros(n)
    for r, j in enumerate(basis):
        if j < n:
            x[j] = xb[r]
    obj = float(c @ x)
    gap = abs(obj - float(b @ y))
    return x, obj, gap, True


# --------------------------------------------------------------- cone algebra
def _sbar_cols(config: ModelConfig, jset):
    cols = sorted(jset)
    return cols, config.sbar[:, cols]


def cone_distance_l1(x, jset, config: ModelConfig):
    """min over w >= 0 of ||x - sum_{i in jset} w_i sbar_i||_1.

    Returns (distance, weights, duality_gap); positive homogeneous in x.
    """
    x = np.asarray(x, dtype=np.float64)
    jset = frozenset(jset)
    if not jset:
        raise EmptySet("cone distance needs a nonempty index set")
    d = config.d
    cols, S = _sbar_cols(config, jset)
    k = len(cols)
    # S w + r+ - r- = x ; minimize sum(r+) + sum(r-)
    A = np.hstack([S, np.eye(d), -np.eye(d)])
    c = np.concatenate([np.zeros(k), np.ones(2 * d)])
    sol, obj, gap = _simplex(c, A, x)
    if gap > LP_TOL * max(1.0, abs(obj)) + LP_TOL:
        raise LPNonConvergence(f"duality gap {gap} above tolerance")
    return max(obj, 0.0), sol[:k], gap


def box_cone_distance(lo, hi, jset, config: ModelConfig):
    """min ||y - sum w_i sbar_i||_1 over w >= 0, y in [lo, hi].

    Returns (distance, weights, y)."""
    jset = frozenset(jset)
    d = config.d
    cols, S = _sbar_cols(config, jset)
    k = len(cols)
    # vars: w (k) | z (d) | sl (d) | r+ (d) | r- (d)
    # S w - z + r+ - r- = lo ; z + sl = hi - lo
    n = k + 4 * d
    A = np.zeros((2 * d, n))
    A[:d, :k] = S
    A[:d, k : k + d] = -np.eye(d)
    A[:d, k + 2 * d : k + 3 * d] = np.eye(d)
    A[:d, k + 3 * d :] = -np.eye(d)
    A[d:, k : k + d] = np.eye(d)
    A[d:, k + d : k + 2 * d] = np.eye(d)
    b = np.concatenate([lo, hi - lo])
    c = np.zeros(n)
    c[k + 2 * d :] = 1.0
    sol, obj, gap = _simplex(c, A, b)
    if gap > LP_TOL * max(1.0, abs(obj)) + LP_TOL:
        raise LPNonConvergence(f"duality gap {gap} above tolerance")
    return max(obj, 0.0), sol[:k], lo + sol[k : k + d]


def min_weight_in_box(lo, hi, jset, config: ModelConfig):
    """Per coordinate j in jset: min w_j subject to sum w_i sbar_i in the box.

    Returns None when the box misses the cone, else a dict j -> min w_j."""
    jset = frozenset(jset)
    dist, _, _ = box_cone_distance(lo, hi, jset, config)
    if dist > LP_TOL:
        return None
    d = config.d
    cols, S = _sbar_cols(config, jset)
    k = len(cols)
    # vars: w (k) | z (d) | sl (d) ; S w - z = lo ; z + sl = hi - lo
    n = k + 2 * d
    A = np.zeros((2 * d, n))
    A[:d, :k] = S
    A[:d, k : k + d] = -np.eye(d)
    A[d:, k : k + d] = np.eye(d)
    A[d:, k + d :] = np.eye(d)
    b = np.concatenate([lo, hi - lo])
    out = {}
    for pos, j in enumerate(cols):
        c = np.zeros(n)
        c[pos] = 1.0
        sol, obj, _ = _simplex(c, A, b)
        out[j] = max(obj, 0.0)
    return out


def set_intersects_cone(A: RareEventSet, jset, config: ModelConfig):
    """True iff some box admits w >= 0 with lo <= sum w_i sbar_i <= hi;
    returns (flag, ConeWitness or None)."""
    jset = frozenset(jset)
    if not jset:
        raise EmptySet("intersection test needs a nonempty index set")
    best = None
    for lo, hi in A.boxes:
        dist, w, y = box_cone_distance(lo, hi, jset, config)
        if dist <= LP_TOL:
            cols, S = _sbar_cols(config, jset)
            point = S @ w
            return True, ConeWitness(jset=jset, weights=w, point=point)
        best = dist if best is None else min(best, dist)
    return False, None


def is_bounded_away(A: RareEventSet, jset, config: ModelConfig):
    """True iff A misses every cone with index not above alpha(jset) (other
    than the jset cone itself); returns (flag, certified L1 distance).

    A is compact and the cones closed, so disjointness is equivalent to the
    angle-enlarged bounded-away condition for small enough enlargement.
    """
    jset = frozenset(jset)
    target = alpha_of(config, jset)
    dist = A.origin_distance  # the empty set contributes the origin
    ok = True
    for other in nonempty_subsets(config.d):
        if other == jset or alpha_of(config, other) > target + ALPHA_TIE_TOL:
            continue
        hit, _ = set_intersects_cone(A, other, config)
        if hit:
            ok = False
            dist = 0.0
            break
        dmin = min(
            box_cone_distance(lo, hi, other, config)[0] for lo, hi in A.boxes
        )
        dist = min(dist, dmin)
    return ok, dist


def nonempty_subsets(d):
    for r in range(1, d + 1):
        for combo in itertools.combinations(range(d), r):
            yield frozenset(combo)


@dataclass(frozen=True)
class ConeSolution:
    jset: frozenset
    alpha: float
    bounded_away: bool
    distance: float
    witness: ConeWitness


def solve_ja(A: RareEventSet, config: ModelConfig) -> ConeSolution:
    """Among cones meeting A, pick the unique one of minimal tail index."""
    candidates = []
    for jset in nonempty_subsets(config.d):
        hit, witness = set_intersects_cone(A, jset, config)
        if hit:
            candidates.append((alpha_of(config, jset), jset, witness))
    if not candidates:
        raise NoConeIntersects("the set misses every cone, including the full one")
    candidates.sort(key=lambda t: (t[0], sorted(t[1])))
    best_alpha, best_j, witness = candidates[0]
    ties = [c for c in candidates[1:] if c[0] - best_alpha <= ALPHA_TIE_TOL]
    if ties:
        names = [sorted(best_j)] + [sorted(c[1]) for c in ties]
        raise NonUniqueArgmin(f"minimal tail index attained by {names}")
    bounded, dist = is_bounded_away(A, best_j, config)
    return ConeSolution(
        jset=best_j, alpha=best_alpha, bounded_away=bounded, distance=dist,
        witness=witness,
    )
