"""Branching engine: exact cluster sampling, pruned sampling with big-jump
counters, and the recursive pruned-tree decomposition, all on deterministic
counter-based streams (results are independent of worker count).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import CapExceeded, DepthCapExceeded
from .kernels import CHUNK, law_pack, n_chunks
from .model import ModelConfig
from .rng import LANE_REGEN, LANE_TREE, StreamKey, _fold_py, derive

DEFAULT_NODE_CAP = 10_000_000
DEFAULT_DEPTH_CAP = 64
DEFAULT_DELTA = 0.1

_PACK_CACHE = {}


def get_pack(config: ModelConfig):
    key = id(config)
    pack = _PACK_CACHE.get(key)
    if pack is None:
        pack = law_pack(config)
        _PACK_CACHE[key] = pack
    return pack


def _prefix(master_seed, lane, tag=None):
    s = derive(master_seed, lane)
    if tag is not None:
        s = _fold_py(s, tag)
    return np.uint64(s)


def _mprefix(master_seed, tag=None):
    s = derive(master_seed)
    if tag is not None:
        s = _fold_py(s, tag)
    return np.uint64(s)


# ------------------------------------------------------------------- results
@dataclass(frozen=True)
class ClusterSample:
    totals: np.ndarray  # (d,) int64 total progeny per dimension
    root: int
    censored: bool


@dataclass(frozen=True)
class PrunedSample:
    totals: np.ndarray  # S^<=(M)
    w: np.ndarray  # pruned mass per child dimension
    n: np.ndarray  # pruning events per child dimension
    pair_n: np.ndarray  # (child, parent) pruning events
    threshold: float
    root: int

    def invariant_ok(self) -> bool:
        """W>0 <=> W>M <=> N>=1, per dimension, and N = row sums of pair_n."""
        for i in range(self.totals.shape[0]):
            pos = self.w[i] > 0
            if pos != (self.n[i] >= 1) or pos != (self.w[i] > self.threshold):
                return False
        return bool(np.all(self.pair_n.sum(axis=1) == self.n))


@dataclass(frozen=True)
class Decomposition:
    tau: np.ndarray  # (depth, d); row k-1 holds tau(k)
    depth: int
    pieces: np.ndarray  # (depth+1, d, d); [k-1, i, :] = totals of stage-k pieces rooted i
    reconstructed: np.ndarray  # (d,) exact re-sum, distributed as the cluster
    rows: tuple  # active-index sets per stage (the generalized type)
    n: int
    delta: float
    root: int


@dataclass(frozen=True)
class MomentStats:
    n: int
    censored: int
    sums: np.ndarray  # (d,)
    cross: np.ndarray  # (d, d) sums of S_a * S_b
    cross_sq: np.ndarray  # (d, d) sums of (S_a * S_b)^2

    @property
    def n_eff(self) -> int:
        return self.n - self.censored

    def mean(self) -> np.ndarray:
        return self.sums / self.n_eff

    def sem(self) -> np.ndarray:
        m = self.mean()
        var = np.maximum(np.diag(self.cross) / self.n_eff - m * m, 0.0)
        return np.sqrt(var / self.n_eff)

    def mean_cross(self) -> np.ndarray:
        return self.cross / self.n_eff

    def sem_cross(self) -> np.ndarray:
        m = self.mean_cross()
        var = np.maximum(self.cross_sq / self.n_eff - m * m, 0.0)
        return np.sqrt(var / self.n_eff)


def _alloc(d):
    return (
        np.zeros(d, dtype=np.int64),
        np.zeros(d, dtype=np.int64),
        np.zeros(d, dtype=np.int64),
        np.zeros(d, dtype=np.int64),
        np.zeros(d, dtype=np.int64),
        np.zeros((d, d), dtype=np.int64),
    )


# ------------------------------------------------------------ single samples
def sample_cluster(
    config: ModelConfig, root: int, key: StreamKey, node_cap: int = DEFAULT_NODE_CAP
) -> ClusterSample:
    """One exact cluster; the node cap marks the sample censored, not an error."""
    d = config.d
    cur, nxt, tot, w, ncnt, pair = _alloc(d)
    _, cens = kernels._sim_tree(
        np.uint64(key.state()), root, math.inf, int(node_cap), *get_pack(config),
        cur, nxt, tot, w, ncnt, pair,
    )
    return ClusterSample(totals=tot, root=root, censored=bool(cens))


def sample_pruned(
    config: ModelConfig,
    root: int,
    threshold: float,
    key: StreamKey,
    node_cap: int = DEFAULT_NODE_CAP,
) -> PrunedSample:
    """One pruned cluster: any sibling group larger than `threshold` is held
    back and counted in (w, n, pair_n) instead of reproducing."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    d = config.d
    cur, nxt, tot, w, ncnt, pair = _alloc(d)
    _, cens = kernels._sim_tree(
        np.uint64(key.state()), root, float(threshold), int(node_cap),
        *get_pack(config), cur, nxt, tot, w, ncnt, pair,
    )
    if cens:
        raise CapExceeded(f"pruned cluster exceeded node cap {node_cap}")
    return PrunedSample(
        totals=tot, w=w, n=ncnt, pair_n=pair, threshold=float(threshold), root=root
    )


def sample_decomposition(
    config: ModelConfig,
    root: int,
    n: int,
    key: StreamKey,
    delta: float = DEFAULT_DELTA,
    node_cap: int = DEFAULT_NODE_CAP,
    depth_cap: int = DEFAULT_DEPTH_CAP,
) -> Decomposition:
    """Recursive decomposition of one cluster into pruned pieces.

    Stage thresholds: n*delta at stage 1, then delta*tau(k). The piece sum
    reproduces the cluster law exactly; tau carries the per-stage pruned
    masses whose positivity pattern is the sample's generalized type.
    """
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must lie in (0, 1)")
    if n < 1:
        raise ValueError("n must be a positive integer")
    d = config.d
    cur, nxt, tot, w, ncnt, pair = _alloc(d)
    mcur = np.zeros(d)
    tau_prev = np.zeros(d, dtype=np.int64)
    tau_new = np.zeros(d, dtype=np.int64)
    tau_out = np.zeros((depth_cap + 1, d), dtype=np.int64)
    piece_out = np.zeros((depth_cap + 1, d, d), dtype=np.int64)
    depth, _, cens, dexc = kernels._sim_decomp(
        _mprefix(key.master_seed), key.sample_index, root, int(n), float(delta),
        int(node_cap), int(depth_cap), *get_pack(config),
        cur, nxt, tot, w, ncnt, pair, mcur, tau_prev, tau_new, tau_out, piece_out,
    )
    if cens:
        raise CapExceeded(f"decomposition exceeded node cap {node_cap}")
    if dexc:
        raise DepthCapExceeded(f"decomposition exceeded depth cap {depth_cap}")
    tau = tau_out[:depth].copy()
    pieces = piece_out[: depth + 1].copy()
    rows = tuple(
        frozenset(int(i) for i in range(d) if tau[k, i] > 0) for k in range(depth)
    )
    return Decomposition(
        tau=tau,
        depth=int(depth),
        pieces=pieces,
        reconstructed=pieces.sum(axis=(0, 1)),
        rows=rows,
        n=int(n),
        delta=float(delta),
        root=root,
    )


def hat_s(decomp: Decomposition, config: ModelConfig) -> np.ndarray:
    """Cone-coordinate linearization: sum_k sum_i (tau_ki / n) * sbar_i."""
    if decomp.depth == 0:
        return np.zeros(config.d)
    weights = decomp.tau.sum(axis=0).astype(np.float64) / decomp.n
    return config.sbar @ weights


def decode_type_code(code: int, d: int) -> tuple:
    """Inverse of the kernel's per-stage bitmask encoding of a type."""
    rows = []
    code = int(code)
    while code:
        rows.append(frozenset(i for i in range(d) if code & (1 << i)))
        code >>= d
    return tuple(rows)


# -------------------------------------------------------------- batch drivers
def batch_moments(
    config, root, samples, master_seed, node_cap=DEFAULT_NODE_CAP, tag=None
) -> MomentStats:
    d = config.d
    out = np.zeros((n_chunks(samples), d + 2 * d * d + 1))
    kernels._drv_moments(
        _prefix(master_seed, LANE_TREE, tag), int(samples), root, int(node_cap),
        *get_pack(config), out,
    )
    m = out.sum(axis=0)
    return MomentStats(
        n=int(samples),
        censored=int(m[d + 2 * d * d]),
        sums=m[:d],
        cross=m[d : d + d * d].reshape(d, d),
        cross_sq=m[d + d * d : d + 2 * d * d].reshape(d, d),
    )


def collect_norms(config, root, samples, master_seed, node_cap=DEFAULT_NODE_CAP, tag=None):
    norms = np.zeros(int(samples))
    censored = np.zeros(n_chunks(samples), dtype=np.int64)
    kernels._drv_norms(
        _prefix(master_seed, LANE_TREE, tag), int(samples), root, int(node_cap),
        *get_pack(config), norms, censored,
    )
    return norms, int(censored.sum())


def collect_totals(config, root, samples, master_seed, node_cap=DEFAULT_NODE_CAP, tag=None):
    out = np.zeros((int(samples), config.d), dtype=np.int64)
    cens = np.zeros(int(samples), dtype=np.int64)
    kernels._drv_totals(
        _prefix(master_seed, LANE_TREE, tag), int(samples), root, int(node_cap),
        *get_pack(config), out, cens,
    )
    return out, cens.astype(bool)


@dataclass(frozen=True)
class PrunedBatchStats:
    n: int
    censored: int
    threshold: float
    psurv: np.ndarray  # (child, parent) exact P(B > M)
    sum_s: np.ndarray  # (d,)
    sum_s2: np.ndarray
    sum_w: np.ndarray
    sum_n: np.ndarray
    n1_counts: np.ndarray  # samples with exactly one pruning event, per dim
    sum_pair: np.ndarray  # (child, parent)
    sum_d: np.ndarray  # paired residual pair_n - S_l * P(B > M), summed
    sum_d2: np.ndarray
    violations: int

    @property
    def n_eff(self):
        return self.n - self.censored

    def identity_z(self) -> np.ndarray:
        """z-scores of E[pair_n[j,l]] = E[S_l] * P(B_{j<-l} > M), per (j, l).

        The SE is taken under the identity itself (event count Poisson-like
        plus the truncated-mass term), which stays correct for pairs whose
        events are so rare that a run may see none."""
        ne = self.n_eff
        mean_s = self.sum_s / ne
        var_s = np.maximum(self.sum_s2 / ne - mean_s * mean_s, 0.0)
        mean_d = self.sum_d / ne
        var0 = self.psurv * mean_s[None, :] + self.psurv ** 2 * var_s[None, :]
        se = np.sqrt(np.maximum(var0, 1e-300) / ne)
        return mean_d / se


def batch_pruned(
    config, root, threshold, samples, master_seed, node_cap=DEFAULT_NODE_CAP, tag=None
) -> PrunedBatchStats:
    from .model import law_survival

    d = config.d
    psurv = np.array(
        [[law_survival(config.laws[l][j], threshold) for l in range(d)] for j in range(d)]
    )
    width = 5 * d + 3 * d * d + 2
    out = np.zeros((n_chunks(samples), width))
    kernels._drv_pruned(
        _prefix(master_seed, LANE_TREE, tag), int(samples), root, float(threshold),
        int(node_cap), psurv, *get_pack(config), out,
    )
    m = out.sum(axis=0)
    dd = d * d
    return PrunedBatchStats(
        n=int(samples),
        censored=int(m[5 * d + 3 * dd + 1]),
        threshold=float(threshold),
        psurv=psurv,
        sum_s=m[:d],
        sum_s2=m[d : 2 * d],
        sum_w=m[2 * d : 3 * d],
        sum_n=m[3 * d : 4 * d],
        n1_counts=m[4 * d : 5 * d],
        sum_pair=m[5 * d : 5 * d + dd].reshape(d, d),
        sum_d=m[5 * d + dd : 5 * d + 2 * dd].reshape(d, d),
        sum_d2=m[5 * d + 2 * dd : 5 * d + 3 * dd].reshape(d, d),
        violations=int(m[5 * d + 3 * dd]),
    )


def coupled_violations(
    config, root, thresholds, samples, master_seed, node_cap=DEFAULT_NODE_CAP, tag=None
):
    """Replay each sample's draw tape at each threshold (ascending) and at
    infinity; count componentwise monotonicity violations."""
    mlist = np.asarray(sorted(thresholds), dtype=np.float64)
    out = np.zeros((n_chunks(samples), 2))
    kernels._drv_coupled(
        _prefix(master_seed, LANE_TREE, tag), int(samples), root, mlist,
        int(node_cap), *get_pack(config), out,
    )
    m = out.sum(axis=0)
    return int(m[0]), int(m[1])


def batch_regen_moments(
    config, root, threshold, samples, master_seed, node_cap=DEFAULT_NODE_CAP, tag=None
) -> MomentStats:
    """Two-stage construction: pruned cluster + one fresh cluster per held-back
    descendant; distributed exactly as the direct cluster."""
    d = config.d
    out = np.zeros((n_chunks(samples), d + 2 * d * d + 1))
    kernels._drv_regen(
        _prefix(master_seed, LANE_TREE, tag), _prefix(master_seed, LANE_REGEN, tag),
        int(samples), root, float(threshold), int(node_cap), *get_pack(config), out,
    )
    m = out.sum(axis=0)
    return MomentStats(
        n=int(samples), censored=int(m[d + 2 * d * d]), sums=m[:d],
        cross=m[d : d + d * d].reshape(d, d),
        cross_sq=m[d + d * d : d + 2 * d * d].reshape(d, d),
    )


def hit_count(config, root, boxes, n_scale, samples, master_seed,
              node_cap=DEFAULT_NODE_CAP, tag=None):
    """Count clusters with S/n inside the box union; returns (hits, censored)."""
    nlo = np.array([lo for lo, _ in boxes], dtype=np.float64) * n_scale
    nhi = np.array([hi for _, hi in boxes], dtype=np.float64) * n_scale
    out = np.zeros((n_chunks(samples), 2))
    kernels._drv_hits(
        _prefix(master_seed, LANE_TREE, tag), int(samples), root, nlo, nhi,
        int(node_cap), *get_pack(config), out,
    )
    m = out.sum(axis=0)
    return int(m[0]), int(m[1])


def tube_hit_count(config, root, radius, n_scale, samples, master_seed,
                   node_cap=DEFAULT_NODE_CAP, tag=None):
    """Count clusters with S/n outside the vertical tube of the first ray."""
    s11 = float(config.sbar[0, 0])
    s12 = float(config.sbar[1, 0])
    out = np.zeros((n_chunks(samples), 2))
    kernels._drv_tube_hits(
        _prefix(master_seed, LANE_TREE, tag), int(samples), root, s12 / s11,
        float(radius) * n_scale, int(node_cap), *get_pack(config), out,
    )
    m = out.sum(axis=0)
    return int(m[0]), int(m[1])


@dataclass(frozen=True)
class DecompBatch:
    n: int
    hits: int
    censored: int
    depth_exceeded: int
    code_overflow: int
    buffer_overflow: int
    type_counts: dict  # rows tuple -> count among hits
    sum_recon: np.ndarray
    sumsq_recon: np.ndarray

    @property
    def n_eff(self):
        return self.n - self.censored - self.depth_exceeded


def batch_decomposition(
    config, root, n_scale, samples, master_seed, delta=DEFAULT_DELTA, boxes=None,
    node_cap=DEFAULT_NODE_CAP, depth_cap=DEFAULT_DEPTH_CAP, tag=None
) -> DecompBatch:
    d = config.d
    if boxes:
        nlo = np.array([lo for lo, _ in boxes], dtype=np.float64) * n_scale
        nhi = np.array([hi for _, hi in boxes], dtype=np.float64) * n_scale
    else:
        nlo = np.zeros((0, d))
        nhi = np.zeros((0, d))
    nc = n_chunks(samples)
    counts = np.zeros((nc, 6))
    codes = np.zeros((nc, kernels.HITBUF), dtype=np.uint64)
    sums = np.zeros((nc, 2 * d))
    kernels._drv_decomp(
        _mprefix(master_seed, tag), int(samples), root, int(n_scale), float(delta),
        int(node_cap), int(depth_cap), nlo, nhi, *get_pack(config),
        counts, codes, sums,
    )
    m = counts.sum(axis=0)
    stored = counts[:, 5].astype(np.int64)
    tallies = {}
    for c in range(nc):
        for q in range(stored[c]):
            rows = decode_type_code(int(codes[c, q]), d)
            tallies[rows] = tallies.get(rows, 0) + 1
    s = sums.sum(axis=0)
    return DecompBatch(
        n=int(samples), hits=int(m[0]), censored=int(m[1]), depth_exceeded=int(m[2]),
        code_overflow=int(m[3]), buffer_overflow=int(m[4]), type_counts=tallies,
        sum_recon=s[:d], sumsq_recon=s[d:],
    )


def concentration_exceed(
    config, root, n_avg, delta, eps, reps, master_seed,
    node_cap=DEFAULT_NODE_CAP, tag=None
):
    """Count repetitions where the average of n_avg pruned clusters at
    threshold n_avg*delta deviates from sbar by more than eps in L1."""
    from .rng import LANE_CONC

    out = np.zeros((n_chunks(reps), 2))
    sbar_col = np.ascontiguousarray(config.sbar[:, root])
    kernels._drv_concentration(
        _prefix(master_seed, LANE_CONC, tag), int(reps), int(n_avg), root,
        float(n_avg) * float(delta), float(eps), sbar_col, int(node_cap),
        *get_pack(config), out,
    )
    m = out.sum(axis=0)
    return int(m[0]), int(m[1])
