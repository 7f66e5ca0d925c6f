"""Hot simulation kernels: offspring draws, tree growth, pruning, decomposition.

Compiled with numba when CLUSTERTAIL_BACKEND=numba (default); the identical
source runs un-jitted under CLUSTERTAIL_BACKEND=python, so both backends are
bit-identical. Randomness is counter-based: every offspring draw owns a
substream keyed by its position in the tree (generation, parent type, parent
index, child dimension), which makes runs independent of scheduling and lets
a draw tape be replayed under different truncation thresholds.

Parallel drivers split samples into fixed-size chunks; each chunk writes its
own output row and rows are merged in chunk order, so results do not depend
on the number of threads.
"""

import math

import numpy as np

from .backend import USE_NUMBA, jit, prange
from .rng import (
    LANE_DECOMP0,
    fold,
    next_unit,
)

KTAB = 4096
CHUNK = 4096
HITBUF = 128  # per-chunk buffer for encoded types of rare hits


# ----------------------------------------------------------------- zeta tail
@jit()
def _hz(s, a):
    # Hurwitz zeta via Euler-Maclaurin; s > 1.5 and a >= 1 in all uses here
    acc = 0.0
    for k in range(32):
        acc += (a + k) ** (-s)
    an = a + 32.0
    acc += an ** (1.0 - s) / (s - 1.0)
    acc += 0.5 * an ** (-s)
    acc += s / 12.0 * an ** (-s - 1.0)
    acc -= s * (s + 1.0) * (s + 2.0) / 720.0 * an ** (-s - 3.0)
    acc += (
        s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) / 30240.0 * an ** (-s - 5.0)
    )
    return acc


@jit()
def _poisson_draw(state, lam):
    if lam < 10.0:
        # Knuth product-of-uniforms
        limit = math.exp(-lam)
        k = -1
        prod = 1.0
        while prod > limit:
            state, u = next_unit(state)
            prod *= u
            k += 1
        return state, k
    # Hormann PTRS transformed rejection
    b = 0.931 + 2.53 * math.sqrt(lam)
    a = -0.059 + 0.02483 * b
    inv_alpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)
    loglam = math.log(lam)
    while True:
        state, u = next_unit(state)
        u -= 0.5
        state, v = next_unit(state)
        us = 0.5 - abs(u)
        k = math.floor((2.0 * a / us + b) * u + lam + 0.43)
        if us >= 0.07 and v <= vr:
            return state, int(k)
        if k < 0 or (us < 0.013 and v > us):
            continue
        if math.log(v * inv_alpha / (a / (us * us) + b)) <= k * loglam - lam - math.lgamma(
            k + 1.0
        ):
            return state, int(k)


@jit()
def _draw_offspring(state, kind, pact, sexp, invz, alf, xm, phi, cdf_row):
    # one offspring count; state is this draw's private substream
    state, u = next_unit(state)
    if kind == 0:
        # zeta tail: single-uniform inverse CDF
        if u <= cdf_row[0]:
            return 0
        if u <= cdf_row[KTAB]:
            return int(np.searchsorted(cdf_row, u))
        # beyond the table: smallest k with hz(s, k+1) <= (1-u)/(p/zeta(s))
        target = (1.0 - u) / (pact * invz)
        lo = KTAB
        hi = 2 * KTAB
        while _hz(sexp, hi + 1.0) > target and hi < (1 << 60):
            lo = hi
            hi *= 2
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if _hz(sexp, mid + 1.0) <= target:
                hi = mid
            else:
                lo = mid
        return hi
    # mixed poisson: activity gate, Pareto intensity, Poisson count
    if u <= 1.0 - pact:
        return 0
    state, u2 = next_unit(state)
    lam = phi * xm * u2 ** (-1.0 / alf)
    state, k = _poisson_draw(state, lam)
    return k


def law_pack(config):
    """Pack a validated model into the flat arrays the kernels consume.

    Arrays are indexed [parent j, child i] (matching laws[j][i]); the CDF
    tables are built with the in-kernel Hurwitz routine so the table/tail
    seam is exactly consistent.
    """
    d = config.d
    kind = np.zeros((d, d), dtype=np.int64)
    pact = np.zeros((d, d))
    sexp = np.zeros((d, d))
    invz = np.zeros((d, d))
    alf = np.zeros((d, d))
    xm = np.ones((d, d))
    phi = np.ones((d, d))
    cdf = np.full((d, d, KTAB + 1), 2.0)
    for j in range(d):
        for i in range(d):
            law = config.laws[j][i]
            alf[j, i] = law.alpha
            pact[j, i] = law.p
            sexp[j, i] = law.alpha + 1.0
            if law.family == "zeta_tail":
                kind[j, i] = 0
                z_s = _hz(law.alpha + 1.0, 1.0)
                invz[j, i] = 1.0 / z_s
                ks = np.arange(1, KTAB + 2, dtype=np.float64)
                surv = np.array([_hz(law.alpha + 1.0, a) for a in ks]) / z_s
                cdf[j, i, :] = 1.0 - law.p * surv
            else:
                kind[j, i] = 1
                xm[j, i] = law.x_m
                phi[j, i] = law.phi
    for arr in (kind, pact, sexp, invz, alf, xm, phi, cdf):
        arr.setflags(write=False)
    return (kind, pact, sexp, invz, alf, xm, phi, cdf)


# ------------------------------------------------------------- tree samplers
@jit()
def _sim_tree(
    base,
    root,
    mthr,
    budget,
    kind,
    pact,
    sexp,
    invz,
    alf,
    xm,
    phi,
    cdf,
    cur,
    nxt,
    totals,
    wcnt,
    ncnt,
    paircnt,
):
    """Grow one cluster rooted at `root`, pruning sibling groups larger than
    `mthr`. Fills totals / wcnt / ncnt / paircnt; returns (nodes, censored)."""
    d = cur.shape[0]
    for i in range(d):
        cur[i] = 0
        totals[i] = 0
        wcnt[i] = 0
        ncnt[i] = 0
        for j in range(d):
            paircnt[i, j] = 0
    cur[root] = 1
    totals[root] = 1
    nodes = 1
    t = 1
    while True:
        alive = False
        for j in range(d):
            if cur[j] > 0:
                alive = True
                break
        if not alive:
            return nodes, False
        for i in range(d):
            nxt[i] = 0
        for j in range(d):
            mj = cur[j]
            for m in range(1, mj + 1):
                node_key = fold(fold(fold(base, t), j), m)
                for i in range(d):
                    b = _draw_offspring(
                        fold(node_key, i),
                        kind[j, i],
                        pact[j, i],
                        sexp[j, i],
                        invz[j, i],
                        alf[j, i],
                        xm[j, i],
                        phi[j, i],
                        cdf[j, i],
                    )
                    if b == 0:
                        continue
                    if b > mthr:
                        wcnt[i] += b
                        ncnt[i] += 1
                        paircnt[i, j] += 1
                    else:
                        nxt[i] += b
                        totals[i] += b
                        nodes += b
                        if nodes > budget:
                            return nodes, True
        for i in range(d):
            cur[i] = nxt[i]
        t += 1


@jit()
def _sim_decomp(
    mprefix,
    idx,
    root,
    nscale,
    delta,
    budget,
    depth_cap,
    kind,
    pact,
    sexp,
    invz,
    alf,
    xm,
    phi,
    cdf,
    cur,
    nxt,
    ptot,
    pw,
    pn,
    ppair,
    mcur,
    tau_prev,
    tau_new,
    tau_out,
    piece_out,
):
    """Recursive pruned-tree decomposition of one cluster.

    Stage k >= 1 draws tau(k-1)[i] pruned clusters rooted at i under threshold
    mcur[i] (n*delta at stage 1, then delta*tau(k)[i]); pruned masses feed
    tau(k). Stage-k pieces use lane LANE_DECOMP0 + k. Returns
    (depth, nodes, censored, depth_exceeded)."""
    d = cur.shape[0]
    for k in range(tau_out.shape[0]):
        for i in range(d):
            tau_out[k, i] = 0
    for k in range(piece_out.shape[0]):
        for i in range(d):
            for l in range(d):
                piece_out[k, i, l] = 0
    for i in range(d):
        tau_prev[i] = 0
        mcur[i] = nscale * delta
    tau_prev[root] = 1
    nodes = 0
    k = 1
    while True:
        if k > depth_cap + 1:
            return k - 2, nodes, False, True
        for i in range(d):
            tau_new[i] = 0
        stage_base = fold(fold(mprefix, LANE_DECOMP0 + k), idx)
        for i in range(d):
            cnt = tau_prev[i]
            for m in range(1, cnt + 1):
                piece_base = fold(fold(stage_base, i), m)
                got, cens = _sim_tree(
                    piece_base,
                    i,
                    mcur[i],
                    budget - nodes,
                    kind,
                    pact,
                    sexp,
                    invz,
                    alf,
                    xm,
                    phi,
                    cdf,
                    cur,
                    nxt,
                    ptot,
                    pw,
                    pn,
                    ppair,
                )
                nodes += got
                if cens:
                    return k - 1, nodes, True, False
                for l in range(d):
                    tau_new[l] += pw[l]
                    piece_out[k - 1, i, l] += ptot[l]
        done = True
        for l in range(d):
            tau_out[k - 1, l] = tau_new[l]
            if tau_new[l] > 0:
                done = False
        if done:
            return k - 1, nodes, False, False
        for i in range(d):
            mcur[i] = delta * tau_new[i]
            tau_prev[i] = tau_new[i]
        k += 1


@jit()
def _encode_type(tau_out, depth, d):
    # one bit per (stage, dimension); returns (code, overflow)
    if depth * d > 64:
        return np.uint64(0), True
    code = np.uint64(0)
    for k in range(depth):
        for i in range(d):
            if tau_out[k, i] > 0:
                code |= np.uint64(1) << np.uint64(k * d + i)
    return code, False


# ------------------------------------------------------------ chunk drivers
@jit(parallel=True)
def _drv_moments(
    prefix, n, root, budget, kind, pact, sexp, invz, alf, xm, phi, cdf, out
):
    # out rows: [sum S (d) | sum S_a*S_b (d*d) | sum (S_a*S_b)^2 (d*d) | censored]
    d = kind.shape[0]
    nchunks = out.shape[0]
    for c in prange(nchunks):
        lo = c * CHUNK
        hi = min(n, lo + CHUNK)
        cur = np.zeros(d, dtype=np.int64)
        nxt = np.zeros(d, dtype=np.int64)
        tot = np.zeros(d, dtype=np.int64)
        w = np.zeros(d, dtype=np.int64)
        ncnt = np.zeros(d, dtype=np.int64)
        pair = np.zeros((d, d), dtype=np.int64)
        row = out[c]
        for idx in range(lo, hi):
            base = fold(prefix, idx)
            _, cens = _sim_tree(
                base, root, math.inf, budget,
                kind, pact, sexp, invz, alf, xm, phi, cdf,
                cur, nxt, tot, w, ncnt, pair,
            )
            if cens:
                row[d + 2 * d * d] += 1.0
                continue
            for a in range(d):
                row[a] += tot[a]
                for b in range(d):
                    prod = float(tot[a]) * float(tot[b])
                    row[d + a * d + b] += prod
                    row[d + d * d + a * d + b] += prod * prod


@jit(parallel=True)
def _drv_norms(prefix, n, root, budget, kind, pact, sexp, invz, alf, xm, phi, cdf, norms, censored):
    d = kind.shape[0]
    nchunks = censored.shape[0]
    for c in prange(nchunks):
        lo = c * CHUNK
        hi = min(n, lo + CHUNK)
        cur = np.zeros(d, dtype=np.int64)
        nxt = np.zeros(d, dtype=np.int64)
        tot = np.zeros(d, dtype=np.int64)
        w = np.zeros(d, dtype=np.int64)
        ncnt = np.zeros(d, dtype=np.int64)
        pair = np.zeros((d, d), dtype=np.int64)
        for idx in range(lo, hi):
            base = fold(prefix, idx)
            _, cens = _sim_tree(
                base, root, math.inf, budget,
                kind, pact, sexp, invz, alf, xm, phi, cdf,
                cur, nxt, tot, w, ncnt, pair,
            )
            if cens:
                censored[c] += 1
            s = 0
            for a in range(d):
                s += tot[a]
            norms[idx] = float(s)


@jit(parallel=True)
def _drv_totals(prefix, n, root, budget, kind, pact, sexp, invz, alf, xm, phi, cdf, out, cens_out):
    d = kind.shape[0]
    nchunks = (n + CHUNK - 1) // CHUNK
    for c in prange(nchunks):
        lo = c * CHUNK
        hi = min(n, lo + CHUNK)
        cur = np.zeros(d, dtype=np.int64)
        nxt = np.zeros(d, dtype=np.int64)
        tot = np.zeros(d, dtype=np.int64)
        w = np.zeros(d, dtype=np.int64)
        ncnt = np.zeros(d, dtype=np.int64)
        pair = np.zeros((d, d), dtype=np.int64)
        for idx in range(lo, hi):
            base = fold(prefix, idx)
            _, cens = _sim_tree(
                base, root, math.inf, budget,
                kind, pact, sexp, invz, alf, xm, phi, cdf,
                cur, nxt, tot, w, ncnt, pair,
            )
            cens_out[idx] = 1 if cens else 0
            for a in range(d):
                out[idx, a] = tot[a]


@jit(parallel=True)
def _drv_pruned(
    prefix, n, root, mthr, budget, psurv,
    kind, pact, sexp, invz, alf, xm, phi, cdf, out
):
    # out rows: [sumS(d) | sumS2(d) | sumW(d) | sumN(d) | n1(d) | sumPair(d*d) |
    #            sumD(d*d) | sumD2(d*d) | violations | censored]
    d = kind.shape[0]
    nchunks = out.shape[0]
    o_s2 = d
    o_w = 2 * d
    o_n = 3 * d
    o_n1 = 4 * d
    o_pair = 5 * d
    o_dsum = 5 * d + d * d
    o_d2 = 5 * d + 2 * d * d
    o_viol = 5 * d + 3 * d * d
    for c in prange(nchunks):
        lo = c * CHUNK
        hi = min(n, lo + CHUNK)
        cur = np.zeros(d, dtype=np.int64)
        nxt = np.zeros(d, dtype=np.int64)
        tot = np.zeros(d, dtype=np.int64)
        w = np.zeros(d, dtype=np.int64)
        ncnt = np.zeros(d, dtype=np.int64)
        pair = np.zeros((d, d), dtype=np.int64)
        row = out[c]
        for idx in range(lo, hi):
            base = fold(prefix, idx)
            _, cens = _sim_tree(
                base, root, mthr, budget,
                kind, pact, sexp, invz, alf, xm, phi, cdf,
                cur, nxt, tot, w, ncnt, pair,
            )
            if cens:
                row[o_viol + 1] += 1.0
                continue
            for a in range(d):
                row[a] += tot[a]
                row[o_s2 + a] += float(tot[a]) * float(tot[a])
                row[o_w + a] += w[a]
                row[o_n + a] += ncnt[a]
                if ncnt[a] == 1:
                    row[o_n1 + a] += 1.0
                pos = w[a] > 0
                if (pos != (ncnt[a] >= 1)) or (pos != (w[a] > mthr)):
                    row[o_viol] += 1.0
                for b in range(d):
                    row[o_pair + a * d + b] += pair[a, b]
                    dval = float(pair[a, b]) - float(tot[b]) * psurv[a, b]
                    row[o_dsum + a * d + b] += dval
                    row[o_d2 + a * d + b] += dval * dval


@jit(parallel=True)
def _drv_coupled(
    prefix, n, root, mlist, budget,
    kind, pact, sexp, invz, alf, xm, phi, cdf, out
):
    # replay each sample tape at every threshold in mlist then unpruned;
    # out rows: [monotonicity violations | censored]
    d = kind.shape[0]
    nm = mlist.shape[0]
    nchunks = out.shape[0]
    for c in prange(nchunks):
        lo = c * CHUNK
        hi = min(n, lo + CHUNK)
        cur = np.zeros(d, dtype=np.int64)
        nxt = np.zeros(d, dtype=np.int64)
        tot = np.zeros(d, dtype=np.int64)
        w = np.zeros(d, dtype=np.int64)
        ncnt = np.zeros(d, dtype=np.int64)
        pair = np.zeros((d, d), dtype=np.int64)
        stack = np.zeros((nm + 1, d), dtype=np.int64)
        row = out[c]
        for idx in range(lo, hi):
            base = fold(prefix, idx)
            anycens = False
            for q in range(nm + 1):
                mthr = mlist[q] if q < nm else math.inf
                _, cens = _sim_tree(
                    base, root, mthr, budget,
                    kind, pact, sexp, invz, alf, xm, phi, cdf,
                    cur, nxt, tot, w, ncnt, pair,
                )
                if cens:
                    anycens = True
                    break
                for a in range(d):
                    stack[q, a] = tot[a]
            if anycens:
                row[1] += 1.0
                continue
            for q in range(nm):
                for a in range(d):
                    if stack[q, a] > stack[q + 1, a]:
                        row[0] += 1.0


@jit(parallel=True)
def _drv_regen(
    prefix, regen_prefix, n, root, mthr, budget,
    kind, pact, sexp, invz, alf, xm, phi, cdf, out
):
    # two-stage construction: pruned cluster, then one fresh full cluster per
    # pruned descendant. out rows like _drv_moments.
    d = kind.shape[0]
    nchunks = out.shape[0]
    for c in prange(nchunks):
        lo = c * CHUNK
        hi = min(n, lo + CHUNK)
        cur = np.zeros(d, dtype=np.int64)
        nxt = np.zeros(d, dtype=np.int64)
        tot = np.zeros(d, dtype=np.int64)
        w = np.zeros(d, dtype=np.int64)
        ncnt = np.zeros(d, dtype=np.int64)
        pair = np.zeros((d, d), dtype=np.int64)
        tot2 = np.zeros(d, dtype=np.int64)
        w2 = np.zeros(d, dtype=np.int64)
        n2 = np.zeros(d, dtype=np.int64)
        pair2 = np.zeros((d, d), dtype=np.int64)
        agg = np.zeros(d, dtype=np.int64)
        row = out[c]
        for idx in range(lo, hi):
            base = fold(prefix, idx)
            got, cens = _sim_tree(
                base, root, mthr, budget,
                kind, pact, sexp, invz, alf, xm, phi, cdf,
                cur, nxt, tot, w, ncnt, pair,
            )
            if cens:
                row[d + 2 * d * d] += 1.0
                continue
            nodes = got
            for a in range(d):
                agg[a] = tot[a]
            rbase = fold(regen_prefix, idx)
            for i in range(d):
                wi = w[i]
                seg = fold(rbase, i)
                for m in range(1, wi + 1):
                    got2, cens2 = _sim_tree(
                        fold(seg, m), i, math.inf, budget - nodes,
                        kind, pact, sexp, invz, alf, xm, phi, cdf,
                        cur, nxt, tot2, w2, n2, pair2,
                    )
                    nodes += got2
                    if cens2:
                        cens = True
                        break
                    for a in range(d):
                        agg[a] += tot2[a]
                if cens:
                    break
            if cens:
                row[d + 2 * d * d] += 1.0
                continue
            for a in range(d):
                row[a] += agg[a]
                for b in range(d):
                    prod = float(agg[a]) * float(agg[b])
                    row[d + a * d + b] += prod
                    row[d + d * d + a * d + b] += prod * prod


@jit(parallel=True)
def _drv_hits(
    prefix, n, root, nlo, nhi, budget,
    kind, pact, sexp, invz, alf, xm, phi, cdf, out
):
    # out rows: [hits | censored]; nlo/nhi are the boxes already scaled by n
    d = kind.shape[0]
    nbox = nlo.shape[0]
    nchunks = out.shape[0]
    for c in prange(nchunks):
        lo = c * CHUNK
        hi = min(n, lo + CHUNK)
        cur = np.zeros(d, dtype=np.int64)
        nxt = np.zeros(d, dtype=np.int64)
        tot = np.zeros(d, dtype=np.int64)
        w = np.zeros(d, dtype=np.int64)
        ncnt = np.zeros(d, dtype=np.int64)
        pair = np.zeros((d, d), dtype=np.int64)
        row = out[c]
        for idx in range(lo, hi):
            base = fold(prefix, idx)
            _, cens = _sim_tree(
                base, root, math.inf, budget,
                kind, pact, sexp, invz, alf, xm, phi, cdf,
                cur, nxt, tot, w, ncnt, pair,
            )
            if cens:
                row[1] += 1.0
                continue
            for bx in range(nbox):
                inside = True
                for a in range(d):
                    v = float(tot[a])
                    if v < nlo[bx, a] or v > nhi[bx, a]:
                        inside = False
                        break
                if inside:
                    row[0] += 1.0
                    break


@jit(parallel=True)
def _drv_tube_hits(
    prefix, n, root, ratio, rn, budget,
    kind, pact, sexp, invz, alf, xm, phi, cdf, out
):
    # hit iff |S_2 - ratio * S_1| > r * n (d = 2 tube-complement experiment)
    d = kind.shape[0]
    nchunks = out.shape[0]
    for c in prange(nchunks):
        lo = c * CHUNK
        hi = min(n, lo + CHUNK)
        cur = np.zeros(d, dtype=np.int64)
        nxt = np.zeros(d, dtype=np.int64)
        tot = np.zeros(d, dtype=np.int64)
        w = np.zeros(d, dtype=np.int64)
        ncnt = np.zeros(d, dtype=np.int64)
        pair = np.zeros((d, d), dtype=np.int64)
        row = out[c]
        for idx in range(lo, hi):
            base = fold(prefix, idx)
            _, cens = _sim_tree(
                base, root, math.inf, budget,
                kind, pact, sexp, invz, alf, xm, phi, cdf,
                cur, nxt, tot, w, ncnt, pair,
            )
            if cens:
                row[1] += 1.0
                continue
            if abs(float(tot[1]) - ratio * float(tot[0])) > rn:
                row[0] += 1.0


@jit(parallel=True)
def _drv_decomp(
    mprefix, n, root, nscale, delta, budget, depth_cap, nlo, nhi,
    kind, pact, sexp, invz, alf, xm, phi, cdf,
    counts, codes, sums
):
    # counts rows: [hits, censored, depth_exceeded, code_overflow, buf_overflow,
    #               stored_codes]
    # codes rows: encoded types of hits (buffer); sums rows: recon sum/sumsq (2d)
    d = kind.shape[0]
    nbox = nlo.shape[0]
    nchunks = counts.shape[0]
    for c in prange(nchunks):
        lo = c * CHUNK
        hi = min(n, lo + CHUNK)
        cur = np.zeros(d, dtype=np.int64)
        nxt = np.zeros(d, dtype=np.int64)
        ptot = np.zeros(d, dtype=np.int64)
        pw = np.zeros(d, dtype=np.int64)
        pn = np.zeros(d, dtype=np.int64)
        ppair = np.zeros((d, d), dtype=np.int64)
        mcur = np.zeros(d)
        tau_prev = np.zeros(d, dtype=np.int64)
        tau_new = np.zeros(d, dtype=np.int64)
        tau_out = np.zeros((depth_cap + 1, d), dtype=np.int64)
        piece_out = np.zeros((depth_cap + 1, d, d), dtype=np.int64)
        recon = np.zeros(d, dtype=np.int64)
        crow = counts[c]
        nbuf = 0
        for idx in range(lo, hi):
            depth, _, cens, dexc = _sim_decomp(
                mprefix, idx, root, nscale, delta, budget, depth_cap,
                kind, pact, sexp, invz, alf, xm, phi, cdf,
                cur, nxt, ptot, pw, pn, ppair,
                mcur, tau_prev, tau_new, tau_out, piece_out,
            )
            if cens:
                crow[1] += 1.0
                continue
            if dexc:
                crow[2] += 1.0
                continue
            for a in range(d):
                recon[a] = 0
            for k in range(depth + 1):
                for i in range(d):
                    for a in range(d):
                        recon[a] += piece_out[k, i, a]
            for a in range(d):
                sums[c, a] += recon[a]
                sums[c, d + a] += float(recon[a]) * float(recon[a])
            if nbox == 0:
                continue
            inside = False
            for bx in range(nbox):
                ok = True
                for a in range(d):
                    v = float(recon[a])
                    if v < nlo[bx, a] or v > nhi[bx, a]:
                        ok = False
                        break
                if ok:
                    inside = True
                    break
            if not inside:
                continue
            crow[0] += 1.0
            code, ovf = _encode_type(tau_out, depth, d)
            if ovf:
                crow[3] += 1.0
            elif nbuf < HITBUF:
                codes[c, nbuf] = code
                nbuf += 1
                crow[5] += 1.0
            else:
                crow[4] += 1.0


@jit(parallel=True)
def _drv_concentration(
    prefix, reps, navg, root, mthr, eps, sbar_col, budget,
    kind, pact, sexp, invz, alf, xm, phi, cdf, out
):
    # out rows: [count of |avg of navg pruned clusters - sbar| > eps | censored]
    d = kind.shape[0]
    nchunks = out.shape[0]
    for c in prange(nchunks):
        lo = c * CHUNK
        hi = min(reps, lo + CHUNK)
        cur = np.zeros(d, dtype=np.int64)
        nxt = np.zeros(d, dtype=np.int64)
        tot = np.zeros(d, dtype=np.int64)
        w = np.zeros(d, dtype=np.int64)
        ncnt = np.zeros(d, dtype=np.int64)
        pair = np.zeros((d, d), dtype=np.int64)
        acc = np.zeros(d, dtype=np.int64)
        row = out[c]
        for rep in range(lo, hi):
            rbase = fold(prefix, rep)
            for a in range(d):
                acc[a] = 0
            anycens = False
            for m in range(1, navg + 1):
                _, cens = _sim_tree(
                    fold(rbase, m), root, mthr, budget,
                    kind, pact, sexp, invz, alf, xm, phi, cdf,
                    cur, nxt, tot, w, ncnt, pair,
                )
                if cens:
                    anycens = True
                    break
                for a in range(d):
                    acc[a] += tot[a]
            if anycens:
                row[1] += 1.0
                continue
            dev = 0.0
            for a in range(d):
                dev += abs(acc[a] / navg - sbar_col[a])
            if dev > eps:
                row[0] += 1.0


def n_chunks(n):
    return max(1, (int(n) + CHUNK - 1) // CHUNK)
