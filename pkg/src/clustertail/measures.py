"""Jump-type combinatorics, the assignment calculus, and Monte-Carlo
estimation of the limiting measures carried by the cones.

A (proper) jump type lists, per decomposition depth, which dimensions take a
big jump: one dimension at depth 1, nonempty rows, no dimension repeated.
Generalized types drop the disjointness and first-row constraints. The
limiting measure of a type integrates truncated-Pareto weights against the
assignment polynomial linking consecutive depths.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DepthZeroType, EmptySet, ZeroDelta
from .geometry import RareEventSet, min_weight_in_box
from .model import ModelConfig, alpha_of
from .rng import LANE_MEASURE, _fold_py, derive, unit_array

_BLOCK = 1 << 17


def _norm_rows(rows):
    return tuple(frozenset(r) for r in rows)


@dataclass(frozen=True)
class GeneralizedType:
    """Per-depth active-index sets; rows must be nonempty."""

    rows: tuple

    def __post_init__(self):
        object.__setattr__(self, "rows", _norm_rows(self.rows))
        if any(not r for r in self.rows):
            raise ValueError("all rows up to the depth must be nonempty")

    @property
    def depth(self) -> int:
        return len(self.rows)

    @property
    def active(self) -> frozenset:
        out = frozenset()
        for r in self.rows:
            out |= r
        return out

    def is_proper(self) -> bool:
        if self.depth == 0:
            return True
        if len(self.rows[0]) != 1:
            return False
        seen = set()
        for r in self.rows:
            if seen & r:
                return False
            seen |= r
        return True


@dataclass(frozen=True)
class JumpType(GeneralizedType):
    """Proper type: singleton first row, each dimension active at most once."""

    def __post_init__(self):
        super().__post_init__()
        if not self.is_proper():
            raise ValueError(f"rows {self.rows} do not form a proper type")

    @property
    def first(self) -> int:
        return min(self.rows[0])


def _type_sort_key(rows):
    return (len(rows), tuple(tuple(sorted(r)) for r in rows))


def _ordered_partitions(items):
    items = frozenset(items)
    if not items:
        yield ()
        return
    elems = sorted(items)
    for r in range(1, len(elems) + 1):
        for head in itertools.combinations(elems, r):
            for tail in _ordered_partitions(items - set(head)):
                yield (frozenset(head),) + tail


def enumerate_types(jset, d=None) -> list:
    """All proper types with active set `jset`, in (depth, rows) lexicographic
    order. |jset|=1 -> 1 type, 2 -> 2, 3 -> 9."""
    jset = frozenset(jset)
    if not jset:
        raise EmptySet("types are enumerated for nonempty active sets")
    if d is not None and not jset <= set(range(d)):
        raise ValueError(f"active set {sorted(jset)} out of range for d={d}")
    out = []
    for first in sorted(jset):
        for rest in _ordered_partitions(jset - {first}):
            out.append(JumpType((frozenset({first}),) + rest))
    out.sort(key=lambda t: _type_sort_key(t.rows))
    return out


def enumerate_assignments(iset, jset) -> list:
    """All ways to hand each element of jset to an element of iset, as
    disjoint preimage families {i: subset of jset}; count |iset|^|jset|."""
    iset = sorted(frozenset(iset))
    if not iset:
        raise EmptySet("assignments need a nonempty target set")
    jset = sorted(frozenset(jset))
    out = []
    for choice in itertools.product(iset, repeat=len(jset)):
        pre = {i: [] for i in iset}
        for j, i in zip(jset, choice):
            pre[i].append(j)
        out.append({i: frozenset(v) for i, v in pre.items()})
    return out


def g_value(iset, jset, w, config: ModelConfig) -> float:
    """Assignment polynomial: sum over assignments of prod_{i} prod_{j in J(i)}
    w_i * sbar_{i, l*(j)}; equals 1 for empty jset."""
    iset_sorted = sorted(frozenset(iset))
    if not iset_sorted:
        raise EmptySet("g needs a nonempty source set")
    if hasattr(w, "keys"):
        wmap = {int(i): float(w[i]) for i in w.keys()}
    else:
        wmap = dict(zip(iset_sorted, np.asarray(w, dtype=np.float64)))
    total = 0.0
    for assign in enumerate_assignments(iset_sorted, jset):
        term = 1.0
        for i, js in assign.items():
            for j in sorted(js):
                term *= wmap[i] * config.sbar[config.l_star[j], i]
        total += term
    return total


def tilde_alpha(gtype, config: ModelConfig) -> float:
    """Depth-weighted tail cost 1 + sum over active slots of (alpha*(j) - 1);
    0 at depth 0; equals alpha(active set) exactly on proper types."""
    rows = gtype.rows if isinstance(gtype, GeneralizedType) else _norm_rows(gtype)
    if not rows:
        return 0.0
    return 1.0 + sum(config.alpha_star[j] - 1.0 for r in rows for j in r)


# ------------------------------------------------------------------ measures
@dataclass(frozen=True)
class MeasureEstimate:
    value: float
    std_error: float
    samples: int
    delta: float


def delta_bar(A: RareEventSet, jset, config: ModelConfig) -> float:
    """Smallest cone weight over A: min over boxes and coordinates j in jset
    of min{w_j : sum w_i sbar_i in box}; 0.0 when no box meets the cone
    (every measure on that cone then vanishes on A)."""
    jset = frozenset(jset)
    if not jset:
        raise EmptySet("delta_bar needs a nonempty index set")
    best = None
    for lo, hi in A.boxes:
        mins = min_weight_in_box(lo, hi, jset, config)
        if mins is None:
            continue
        m = min(mins.values())
        best = m if best is None else min(best, m)
    return 0.0 if best is None else float(best)


def _resolve_delta(delta, eps_bar):
    if delta == "auto" or delta is None:
        return 0.5 * eps_bar
    delta = float(delta)
    if delta <= 0.0:
        raise ZeroDelta("the truncation parameter must be positive")
    if eps_bar > 0.0 and delta > eps_bar:
        warnings.warn(
            f"delta={delta:g} exceeds the geometric threshold {eps_bar:g}; "
            "the estimate may be biased low",
            stacklevel=3,
        )
    return delta


def _assignment_terms(iset_rows, jset_rows, config):
    # per assignment: (coefficient, exponent per position in sorted(iset_rows))
    iset_sorted = sorted(iset_rows)
    terms = []
    for assign in enumerate_assignments(iset_sorted, jset_rows):
        coef = 1.0
        exps = np.zeros(len(iset_sorted), dtype=np.int64)
        for pos, i in enumerate(iset_sorted):
            js = assign[i]
            exps[pos] = len(js)
            for j in js:
                coef *= config.sbar[config.l_star[j], i]
        terms.append((coef, exps))
    return terms


def estimate_ci(
    jtype: JumpType,
    A: RareEventSet,
    config: ModelConfig,
    delta="auto",
    n_samples: int = 1_000_000,
    master_seed: int = 0,
    type_tag: int = 0,
) -> MeasureEstimate:
    """Monte-Carlo value of the type's limiting measure on A.

    Draws one Pareto weight with lower bound delta and index alpha*(j) per
    active slot (depth k, dimension j), scores the indicator of the weighted
    sbar combination landing in A times the assignment polynomials linking
    consecutive depths, and rescales by prod delta^-alpha*(j). Unbiased for
    delta at or below the geometric threshold of A.
    """
    if jtype.depth == 0:
        raise DepthZeroType("the depth-0 type carries no measure")
    eps_bar = delta_bar(A, jtype.active, config)
    if (delta == "auto" or delta is None) and eps_bar == 0.0:
        # A misses the cone entirely: the indicator can never fire
        return MeasureEstimate(0.0, 0.0, int(n_samples), 0.0)
    dlt = _resolve_delta(delta, eps_bar)
    slots = [(k, j) for k in range(jtype.depth) for j in sorted(jtype.rows[k])]
    n_slots = len(slots)
    alpha_slots = np.array([config.alpha_star[j] for _, j in slots])
    sdirs = np.stack([config.sbar[:, j] for _, j in slots])  # (slots, d)
    row_slots = [
        [slots.index((k, j)) for j in sorted(jtype.rows[k])]
        for k in range(jtype.depth)
    ]
    gterms = [
        _assignment_terms(jtype.rows[k], jtype.rows[k + 1], config)
        for k in range(jtype.depth - 1)
    ]
    base = derive(master_seed, LANE_MEASURE, type_tag)
    slot_states = [_fold_py(base, 7000 + s) for s in range(n_slots)]
    scale = float(np.prod(dlt ** (-alpha_slots)))
    total = 0.0
    total_sq = 0.0
    n = int(n_samples)
    done = 0
    while done < n:
        blk = min(_BLOCK, n - done)
        wmat = np.empty((blk, n_slots))
        for s in range(n_slots):
            u = unit_array(slot_states[s], blk, start=done)
            wmat[:, s] = dlt * u ** (-1.0 / alpha_slots[s])
        # fixed-order elementwise contraction; no BLAS so runs are bit-stable
        points = np.zeros((blk, config.d))
        for s in range(n_slots):
            points += wmat[:, s, None] * sdirs[s][None, :]
        mask = np.zeros(blk, dtype=bool)
        for lo, hi in A.boxes:
            mask |= np.all(points >= lo, axis=1) & np.all(points <= hi, axis=1)
        vals = mask.astype(np.float64)
        for k in range(jtype.depth - 1):
            gk = np.zeros(blk)
            for coef, exps in gterms[k]:
                term = np.full(blk, coef)
                for pos, s in enumerate(row_slots[k]):
                    if exps[pos]:
                        term *= wmat[:, s] ** exps[pos]
                gk += term
            vals *= gk
        total += float(vals.sum())
        total_sq += float((vals * vals).sum())
        done += blk
    mean = total / n
    var = max(total_sq / n - mean * mean, 0.0)
    return MeasureEstimate(
        value=scale * mean,
        std_error=scale * float(np.sqrt(var / n)),
        samples=n,
        delta=dlt,
    )


def estimate_c_total(
    i: int,
    jset,
    A: RareEventSet,
    config: ModelConfig,
    delta="auto",
    n_samples: int = 1_000_000,
    master_seed: int = 0,
):
    """Sum over types with the given active set of sbar_{i, l*(first)} times
    the type measure; independent stream per type, errors in quadrature.

    Returns (MeasureEstimate, list of (JumpType, MeasureEstimate))."""
    jset = frozenset(jset)
    types = enumerate_types(jset, config.d)
    eps_bar = delta_bar(A, jset, config)
    if delta == "auto" or delta is None:
        if eps_bar == 0.0:
            zero = MeasureEstimate(0.0, 0.0, int(n_samples), 0.0)
            return zero, [(t, zero) for t in types]
        dlt = 0.5 * eps_bar
    else:
        dlt = _resolve_delta(delta, eps_bar)
    value = 0.0
    var = 0.0
    per_type = []
    for tag, jtype in enumerate(types):
        est = estimate_ci(
            jtype, A, config, delta=dlt, n_samples=n_samples,
            master_seed=master_seed, type_tag=tag,
        )
        coef = float(config.sbar[config.l_star[jtype.first], i])
        value += coef * est.value
        var += (coef * est.std_error) ** 2
        per_type.append((jtype, est))
    return (
        MeasureEstimate(value, float(np.sqrt(var)), int(n_samples), dlt),
        per_type,
    )


def alpha_of_type(jtype: GeneralizedType, config: ModelConfig) -> float:
    return alpha_of(config, jtype.active)
