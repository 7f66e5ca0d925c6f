"""Experiment harness: probability sweeps with slope fits, identity checks,
concentration checks, conditional type frequencies, Hill estimation, and the
tube-complement experiment. Everything runs on fixed master seeds and is
bit-reproducible across thread counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import simulate
from .errors import (
    DegenerateSample,
    GeometryError,
    InsufficientHits,
    ModelPreconditionError,
    TooFewSamples,
)
from .geometry import RareEventSet, solve_ja
from .measures import MeasureEstimate, estimate_c_total
from .model import ModelConfig, law_mean_truncated, law_survival, rate_lambda

MIN_HITS = 20


# -------------------------------------------------------------------- sweeps
@dataclass(frozen=True)
class SweepRow:
    n: int
    samples: int
    hits: int
    censored: int
    p_hat: float
    se: float
    lam: float
    ratio: float
    flagged: bool  # fewer than MIN_HITS hits


@dataclass(frozen=True)
class SweepResult:
    experiment: str
    root: int
    jset: frozenset
    target_alpha: float
    rows: tuple
    slope: float
    slope_se: float
    intercept: float
    measure: MeasureEstimate | None = None

    def to_dict(self):
        return {
            "experiment": self.experiment,
            "root": self.root + 1,
            "jset": sorted(i + 1 for i in self.jset),
            "target_alpha": self.target_alpha,
            "slope": self.slope,
            "slope_se": self.slope_se,
            "intercept": self.intercept,
            "measure": None
            if self.measure is None
            else {
                "value": self.measure.value,
                "std_error": self.measure.std_error,
                "samples": self.measure.samples,
                "delta": self.measure.delta,
            },
            "rows": [
                {
                    "n": r.n,
                    "samples": r.samples,
                    "hits": r.hits,
                    "censored": r.censored,
                    "p_hat": r.p_hat,
                    "se": r.se,
                    "lambda": r.lam,
                    "ratio": r.ratio,
                    "flagged": r.flagged,
                }
                for r in self.rows
            ],
        }


def _binom_se(hits, n):
    p = hits / n
    return math.sqrt(max(p * (1.0 - p), 0.0) / n)


def _fit_loglog(ns, ps):
    xs = np.log(np.asarray(ns, dtype=np.float64))
    ys = np.log(np.asarray(ps, dtype=np.float64))
    m = xs.size
    xbar = xs.mean()
    sxx = float(((xs - xbar) ** 2).sum())
    slope = float(((xs - xbar) * (ys - ys.mean())).sum() / sxx)
    intercept = float(ys.mean() - slope * xbar)
    resid = ys - (intercept + slope * xs)
    dof = max(m - 2, 1)
    slope_se = float(np.sqrt(float(resid @ resid) / dof / sxx))
    return slope, slope_se, intercept


def _build_rows(counts, n_list, samples_per_n, lam_fn):
    rows = []
    for n, (hits, censored) in zip(n_list, counts):
        p_hat = hits / samples_per_n
        lam = lam_fn(n)
        rows.append(
            SweepRow(
                n=int(n),
                samples=int(samples_per_n),
                hits=int(hits),
                censored=int(censored),
                p_hat=p_hat,
                se=_binom_se(hits, samples_per_n),
                lam=lam,
                ratio=p_hat / lam if lam > 0 else math.inf,
                flagged=hits < MIN_HITS,
            )
        )
    return rows


def _slope_from_rows(rows):
    pts = [(r.n, r.p_hat) for r in rows if r.hits > 0]
    if len(pts) < 3:
        raise InsufficientHits(
            "need at least 3 sweep points with hits for a slope fit"
        )
    return _fit_loglog([p[0] for p in pts], [p[1] for p in pts])


def sweep_probability(
    config: ModelConfig,
    root: int,
    A: RareEventSet,
    n_list,
    samples_per_n: int,
    master_seed: int = 0,
    node_cap: int = simulate.DEFAULT_NODE_CAP,
    measure_samples: int = 200_000,
) -> SweepResult:
    """Estimate P(S/n in A) over n_list by direct Monte Carlo, attach the rate
    function of the optimal cone, and fit the log-log slope."""
    n_list = [int(n) for n in n_list]
    if len(n_list) < 3 or any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be increasing with at least 3 entries")
    sol = solve_ja(A, config)
    if not sol.bounded_away:
        raise GeometryError(
            f"A is not bounded away from the lighter cones of {sorted(sol.jset)}"
        )
    counts = [
        simulate.hit_count(
            config, root, A.boxes, n, samples_per_n, master_seed,
            node_cap=node_cap, tag=n,
        )
        for n in n_list
    ]
    rows = _build_rows(counts, n_list, samples_per_n, lambda n: rate_lambda(config, sol.jset, n))
    slope, slope_se, intercept = _slope_from_rows(rows)
    measure, _ = estimate_c_total(
        root, sol.jset, A, config, delta="auto", n_samples=measure_samples,
        master_seed=master_seed,
    )
    return SweepResult(
        experiment="prob_sweep",
        root=root,
        jset=sol.jset,
        target_alpha=sol.alpha,
        rows=tuple(rows),
        slope=slope,
        slope_se=slope_se,
        intercept=intercept,
        measure=measure,
    )


# ---------------------------------------------------------------- identities
@dataclass(frozen=True)
class IdentityCheck:
    name: str
    lhs: float
    rhs: float
    se: float
    z: float
    passed: bool


@dataclass(frozen=True)
class IdentityReport:
    checks: tuple
    samples: int
    threshold_z: float

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self):
        return {
            "samples": self.samples,
            "threshold_z": self.threshold_z,
            "all_passed": self.all_passed,
            "checks": [
                {
                    "name": c.name,
                    "lhs": c.lhs,
                    "rhs": c.rhs,
                    "se": c.se,
                    "z": c.z,
                    "passed": c.passed,
                }
                for c in self.checks
            ],
        }


def _check(name, lhs, rhs, se, zmax):
    se = max(se, 1e-300)
    z = (lhs - rhs) / se
    return IdentityCheck(name, float(lhs), float(rhs), float(se), float(z), abs(z) <= zmax)


def check_identities(
    config: ModelConfig,
    M_list=(5.0, 20.0, 100.0),
    samples: int = 1_000_000,
    master_seed: int = 0,
    node_cap: int = simulate.DEFAULT_NODE_CAP,
    zmax: float = 4.0,
) -> IdentityReport:
    """Monte-Carlo identity suite.

    (a) cluster means against the matrix inverse; (b) pruning-event counts
    against truncated-cluster mass times the jump survival, paired per sample
    (exact for every threshold); (c) first/second moments of the two-stage
    regeneration against direct clusters; (d) the one-big-jump frequency at
    the largest threshold, where the finite-M bias is far below MC noise.
    """
    d = config.d
    checks = []
    for i in range(d):
        mom = simulate.batch_moments(config, i, samples, master_seed, node_cap=node_cap)
        mean = mom.mean()
        sem = mom.sem()
        for a in range(d):
            checks.append(
                _check(
                    f"mean[root={i+1},dim={a+1}]",
                    mean[a],
                    config.sbar[a, i],
                    sem[a],
                    zmax,
                )
            )
    for M in M_list:
        for i in range(d):
            pb = simulate.batch_pruned(
                config, i, M, samples, master_seed, node_cap=node_cap, tag=int(M)
            )
            zmat = pb.identity_z()
            mean_d = pb.sum_d / pb.n_eff
            for j in range(d):
                for l in range(d):
                    lhs = pb.sum_pair[j, l] / pb.n_eff
                    rhs = lhs - mean_d[j, l]
                    se = abs(mean_d[j, l] / zmat[j, l]) if zmat[j, l] else 0.0
                    checks.append(
                        IdentityCheck(
                            f"prune_count[M={M:g},root={i+1},child={j+1},parent={l+1}]",
                            float(lhs),
                            float(rhs),
                            float(se),
                            float(zmat[j, l]),
                            bool(abs(zmat[j, l]) <= zmax),
                        )
                    )
    M_regen = float(M_list[len(M_list) // 2])
    for i in range(d):
        direct = simulate.batch_moments(
            config, i, samples, master_seed, node_cap=node_cap, tag=11
        )
        regen = simulate.batch_regen_moments(
            config, i, M_regen, samples, master_seed, node_cap=node_cap, tag=22
        )
        m1, m2 = direct.mean(), regen.mean()
        s1, s2 = direct.sem(), regen.sem()
        for a in range(d):
            checks.append(
                _check(
                    f"regen_mean[M={M_regen:g},root={i+1},dim={a+1}]",
                    m2[a],
                    m1[a],
                    math.hypot(s1[a], s2[a]),
                    zmax,
                )
            )
        c1, c2 = direct.mean_cross(), regen.mean_cross()
        e1, e2 = direct.sem_cross(), regen.sem_cross()
        for a in range(d):
            for b in range(a, d):
                checks.append(
                    _check(
                        f"regen_second[M={M_regen:g},root={i+1},dims={a+1}{b+1}]",
                        c2[a, b],
                        c1[a, b],
                        math.hypot(e1[a, b], e2[a, b]),
                        zmax,
                    )
                )
    M_big = float(max(M_list))
    for i in range(d):
        pb = simulate.batch_pruned(
            config, i, M_big, samples, master_seed, node_cap=node_cap, tag=int(M_big)
        )
        for j in range(d):
            lstar = config.l_star[j]
            lhs = pb.n1_counts[j] / pb.n_eff
            rhs = config.sbar[lstar, i] * law_survival(config.laws[lstar][j], M_big)
            # SE under the claim itself: valid even when the run saw no event
            se0 = math.sqrt(rhs * max(1.0 - rhs, 0.0) / pb.n_eff)
            checks.append(
                _check(
                    f"one_big_jump[M={M_big:g},root={i+1},dim={j+1}]",
                    lhs,
                    rhs,
                    se0,
                    zmax,
                )
            )
    return IdentityReport(checks=tuple(checks), samples=int(samples), threshold_z=zmax)


def truncated_mean_matrix(config: ModelConfig, M: float) -> np.ndarray:
    """Expected truncated-cluster matrix (I - truncated mean matrix)^-1;
    column j = E of the pruned cluster rooted at j (oracle for identity (b))."""
    d = config.d
    bm = np.array(
        [[law_mean_truncated(config.laws[j][i], M) for j in range(d)] for i in range(d)]
    )
    return np.linalg.inv(np.eye(d) - bm)


# ------------------------------------------------------------- concentration
@dataclass(frozen=True)
class ConcentrationRow:
    n: int
    delta: float
    reps: int
    exceed: int
    prob: float
    se: float


@dataclass(frozen=True)
class ConcentrationReport:
    root: int
    eps: float
    rows: tuple
    trends_ok: dict  # delta -> bool

    def to_dict(self):
        return {
            "root": self.root + 1,
            "eps": self.eps,
            "trends_ok": {f"{k:g}": v for k, v in self.trends_ok.items()},
            "rows": [
                {
                    "n": r.n,
                    "delta": r.delta,
                    "reps": r.reps,
                    "exceed": r.exceed,
                    "prob": r.prob,
                    "se": r.se,
                }
                for r in self.rows
            ],
        }


def check_concentration(
    config: ModelConfig,
    root: int,
    delta_list=(0.05, 0.2),
    n_list=(100, 1000),
    reps: int = 2000,
    master_seed: int = 0,
    eps: float = 0.25,
    node_cap: int = simulate.DEFAULT_NODE_CAP,
) -> ConcentrationReport:
    """P(|| average of n truncated clusters - sbar ||_1 > eps) over (n, delta):
    should fall rapidly in n for small delta."""
    rows = []
    trends = {}
    for dlt in delta_list:
        probs = []
        for n in n_list:
            exceed, _ = simulate.concentration_exceed(
                config, root, int(n), float(dlt), eps, reps, master_seed,
                node_cap=node_cap, tag=int(n),
            )
            p = exceed / reps
            probs.append(p)
            rows.append(
                ConcentrationRow(
                    n=int(n), delta=float(dlt), reps=int(reps), exceed=int(exceed),
                    prob=p, se=_binom_se(exceed, reps),
                )
            )
        slack = [2.0 * _binom_se(p * reps, reps) for p in probs]
        trends[float(dlt)] = all(
            probs[q + 1] <= probs[q] + slack[q] for q in range(len(probs) - 1)
        )
    return ConcentrationReport(root=root, eps=eps, rows=tuple(rows), trends_ok=trends)


# ----------------------------------------------------------- type frequencies
@dataclass(frozen=True)
class TypeFrequencyReport:
    root: int
    jset: frozenset
    n: int
    delta: float
    samples: int
    hits: int
    tabulated: int
    target_mass: float
    counts: dict  # rows tuple -> count
    censored: int
    depth_exceeded: int

    def to_dict(self):
        return {
            "root": self.root + 1,
            "jset": sorted(i + 1 for i in self.jset),
            "n": self.n,
            "delta": self.delta,
            "samples": self.samples,
            "hits": self.hits,
            "tabulated": self.tabulated,
            "target_mass": self.target_mass,
            "censored": self.censored,
            "depth_exceeded": self.depth_exceeded,
            "counts": {
                "/".join(",".join(str(i + 1) for i in sorted(r)) for r in rows): cnt
                for rows, cnt in sorted(
                    self.counts.items(), key=lambda kv: (-kv[1], str(kv[0]))
                )
            },
        }


def check_type_frequencies(
    config: ModelConfig,
    root: int,
    A: RareEventSet,
    n: int,
    samples: int,
    delta: float = simulate.DEFAULT_DELTA,
    master_seed: int = 0,
    node_cap: int = simulate.DEFAULT_NODE_CAP,
    min_hits: int = MIN_HITS,
) -> TypeFrequencyReport:
    """Condition decompositions on the reconstructed cluster hitting n*A and
    tabulate the extracted generalized types; reports the mass carried by
    proper types whose active set is the optimal cone's index set."""
    sol = solve_ja(A, config)
    if not sol.bounded_away:
        raise GeometryError(
            f"A is not bounded away from the lighter cones of {sorted(sol.jset)}"
        )
    batch = simulate.batch_decomposition(
        config, root, int(n), samples, master_seed, delta=delta, boxes=A.boxes,
        node_cap=node_cap, tag=int(n),
    )
    if batch.hits < min_hits:
        raise InsufficientHits(
            f"{batch.hits} conditional hits (< {min_hits}) at n={n}"
        )
    tabulated = sum(batch.type_counts.values())
    target = 0
    for rows, cnt in batch.type_counts.items():
        active = frozenset().union(*rows) if rows else frozenset()
        if active == sol.jset and _is_proper_rows(rows):
            target += cnt
    mass = target / tabulated if tabulated else 0.0
    return TypeFrequencyReport(
        root=root,
        jset=sol.jset,
        n=int(n),
        delta=float(delta),
        samples=int(samples),
        hits=batch.hits,
        tabulated=tabulated,
        target_mass=mass,
        counts=batch.type_counts,
        censored=batch.censored,
        depth_exceeded=batch.depth_exceeded,
    )


def _is_proper_rows(rows) -> bool:
    if not rows:
        return True
    if len(rows[0]) != 1:
        return False
    seen = set()
    for r in rows:
        if seen & r:
            return False
        seen |= r
    return True


# ---------------------------------------------------------------------- hill
def hill_estimate(values, k: int) -> float:
    """Hill tail-index estimate from the top-k order statistics."""
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    if k < 10:
        raise TooFewSamples("Hill needs k >= 10 order statistics")
    if k >= n:
        raise TooFewSamples(f"k={k} must be below the sample size {n}")
    if np.any(values <= 0):
        values = values[values > 0]
        if k >= values.size:
            raise TooFewSamples("not enough positive observations")
    top = np.sort(values)[-(k + 1):]
    logs = np.log(top)
    denom = float(logs[1:].mean() - logs[0])
    if denom <= 0.0:
        raise DegenerateSample("degenerate tail: top order statistics are equal")
    return 1.0 / denom


# ------------------------------------------------------------- counterexample
def counterexample_experiment(
    config: ModelConfig,
    r: float,
    n_list,
    samples_per_n: int,
    master_seed: int = 0,
    node_cap: int = simulate.DEFAULT_NODE_CAP,
) -> SweepResult:
    """Decay sweep of P(S_1/n lands off the first ray's vertical tube of
    radius r). On models where both second-dimension indices exceed twice the
    first one, the fitted slope stays far above the naive cone prediction
    -alpha*(2): a big first-dimension jump amplifies CLT-scale noise.
    """
    if config.d != 2:
        raise ModelPreconditionError("the tube experiment needs a 2-type model")
    a11 = config.laws[0][0].alpha
    a12 = config.laws[1][0].alpha
    a21 = config.laws[0][1].alpha
    a22 = config.laws[1][1].alpha
    if not (a12 > a11 > 2.0):
        raise ModelPreconditionError("needs alpha_{1<-2} > alpha_{1<-1} > 2")
    if not (min(a21, a22) > 2.0 * a11):
        raise ModelPreconditionError("needs both alpha_{2<-.} > 2*alpha_{1<-1}")
    law21 = config.laws[0][1]
    zero_mass = (1.0 - law21.p) > 0.0 or law21.family == "mixed_poisson"
    if not zero_mass:
        raise ModelPreconditionError("needs P(B_{2<-1} = 0) > 0")
    n_list = [int(n) for n in n_list]
    if len(n_list) < 3 or any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be increasing with at least 3 entries")
    counts = [
        simulate.tube_hit_count(
            config, 0, float(r), n, samples_per_n, master_seed,
            node_cap=node_cap, tag=n,
        )
        for n in n_list
    ]
    astar2 = config.alpha_star[1]
    rows = _build_rows(counts, n_list, samples_per_n, lambda n: float(n) ** (-astar2))
    slope, slope_se, intercept = _slope_from_rows(rows)
    return SweepResult(
        experiment="tube_complement",
        root=0,
        jset=frozenset({1}),
        target_alpha=astar2,
        rows=tuple(rows),
        slope=slope,
        slope_se=slope_se,
        intercept=intercept,
        measure=None,
    )


def slope_shallower_than_cone(result: SweepResult) -> bool:
    """True when the fitted decay is strictly slower than the naive cone
    prediction (slope above -target_alpha)."""
    return result.slope > -result.target_alpha


# ------------------------------------------------------------------- writers
def sweep_csv(result: SweepResult) -> str:
    lines = ["experiment,root,n,samples,hits,censored,p_hat,se,lambda,ratio"]
    for row in result.rows:
        lines.append(
            ",".join(
                [
                    result.experiment,
                    str(result.root + 1),
                    str(row.n),
                    str(row.samples),
                    str(row.hits),
                    str(row.censored),
                    repr(row.p_hat),
                    repr(row.se),
                    repr(row.lam),
                    repr(row.ratio),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def sweep_svg(result: SweepResult, width: int = 800, height: int = 600) -> str:
    """Log-log scatter of (n, p_hat) with the fitted line and the reference
    slope -target_alpha; plain deterministic SVG text."""
    rows = [r for r in result.rows if r.p_hat > 0]
    xs = [math.log10(r.n) for r in rows]
    ys = [math.log10(r.p_hat) for r in rows]
    pad = 60.0
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    xr = (x1 - x0) or 1.0
    yr = (y1 - y0) or 1.0

    def px(x):
        return pad + (x - x0) / xr * (width - 2 * pad)

    def py(y):
        return height - pad - (y - y0) / yr * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width/2:.1f}" y="24" text-anchor="middle" font-size="16">'
        f"{result.experiment}: slope {result.slope:.4f} "
        f"(target -{result.target_alpha:.4f})</text>",
        f'<line x1="{pad}" y1="{height-pad}" x2="{width-pad}" y2="{height-pad}" '
        'stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height-pad}" stroke="black"/>',
        f'<text x="{width/2:.1f}" y="{height-20}" text-anchor="middle" '
        'font-size="12">log10 n</text>',
        f'<text x="18" y="{height/2:.1f}" font-size="12" '
        f'transform="rotate(-90 18 {height/2:.1f})">log10 p</text>',
    ]
    for fit_slope, color, name in (
        (result.slope, "#d62728", "fit"),
        (-result.target_alpha, "#1f77b4", "reference"),
    ):
        # anchor both lines at the first fitted point
        lx0, lx1 = x0, x1
        ly0 = ys[0] + fit_slope * (lx0 - xs[0])
        ly1 = ys[0] + fit_slope * (lx1 - xs[0])
        parts.append(
            f'<line x1="{px(lx0):.2f}" y1="{py(ly0):.2f}" x2="{px(lx1):.2f}" '
            f'y2="{py(ly1):.2f}" stroke="{color}" stroke-width="1.5"/>'
        )
        parts.append(
            f'<text x="{px(lx1)-4:.2f}" y="{py(ly1)-6:.2f}" text-anchor="end" '
            f'font-size="11" fill="{color}">{name}</text>'
        )
    for x, y in zip(xs, ys):
        parts.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="4" fill="black"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
