"""Offspring-law families, model validation, and the scalar tail calculus.

Index conventions (0-based internally, 1-based at the CLI):
  laws[j][i] is the law of the count of type-i children of a type-j parent.
  mean_matrix[i, j] = E(# type-i children of a type-j parent), so the matrix
  of expected cluster vectors is (I - mean_matrix)^-1 with column j = sbar_j.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy.integrate import quad

from .errors import (
    ConfigFormatError,
    ConnectivityViolation,
    DuplicateTailIndex,
    EmptySet,
    SubcriticalityViolation,
)

SPECTRAL_TOL = 1e-12
SPECTRAL_MAX_ITER = 100_000
DUPLICATE_TOL = 1e-12


@dataclass(frozen=True)
class OffspringLaw:
    """A regularly varying integer offspring distribution.

    zeta_tail: P(B=0) = 1-p, P(B=k) = p * k^-(alpha+1) / zeta(alpha+1), k >= 1.
    mixed_poisson: with probability p draw W ~ Pareto(alpha, x_m) and
    B | W ~ Poisson(W * phi); else B = 0.
    """

    family: str
    alpha: float
    p: float
    x_m: float = 1.0
    phi: float = 1.0

    def __post_init__(self):
        if self.family not in ("zeta_tail", "mixed_poisson"):
            raise ConfigFormatError(f"unknown offspring family {self.family!r}")
        if not (self.alpha > 1.0):
            raise ConfigFormatError("tail index alpha must exceed 1")
        if not (0.0 <= self.p <= 1.0):
            raise ConfigFormatError("activity p must lie in [0, 1]")
        if self.family == "mixed_poisson" and not (self.x_m > 0 and self.phi > 0):
            raise ConfigFormatError("mixed_poisson needs x_m > 0 and phi > 0")


def law_mean(law: OffspringLaw) -> float:
    """Exact mean number of offspring."""
    if law.p == 0.0:
        return 0.0
    if law.family == "zeta_tail":
        return law.p * special.zeta(law.alpha) / special.zeta(law.alpha + 1.0)
    return law.p * law.phi * law.x_m * law.alpha / (law.alpha - 1.0)


@functools.lru_cache(maxsize=65536)
def _zeta_survival_int(law: OffspringLaw, k0: int) -> float:
    # P(B > k0) = p * zeta(s, k0+1) / zeta(s), valid for k0 >= 0
    s = law.alpha + 1.0
    return law.p * special.zeta(s, k0 + 1) / special.zeta(s)


def _poisson_tail(k0: int, lam: float) -> float:
    # P(Poisson(lam) > k0); regularized lower incomplete gamma
    return special.gammainc(k0 + 1, lam)


@functools.lru_cache(maxsize=65536)
def _mp_survival_int(law: OffspringLaw, k0: int) -> float:
    # substitute v = (x_m / w)^alpha so the Pareto mixture becomes uniform on (0,1)
    lam0 = law.phi * law.x_m

    def integrand(v):
        return _poisson_tail(k0, lam0 * v ** (-1.0 / law.alpha))

    val, _ = quad(integrand, 0.0, 1.0, epsabs=1e-14, epsrel=1e-9, limit=200)
    return law.p * val


def law_survival(law: OffspringLaw, x: float) -> float:
    """Exact P(B > x) for x >= 0."""
    if x < 0:
        raise ValueError("survival is defined for x >= 0")
    if law.p == 0.0:
        return 0.0
    k0 = int(math.floor(x))
    if law.family == "zeta_tail":
        return _zeta_survival_int(law, k0)
    return _mp_survival_int(law, k0)


def law_mean_truncated(law: OffspringLaw, cutoff: float) -> float:
    """E[B 1{B <= cutoff}] (used by the truncated-mean matrix oracle)."""
    if law.p == 0.0:
        return 0.0
    k0 = int(math.floor(cutoff))
    if k0 < 1:
        return 0.0
    if law.family == "zeta_tail":
        a = law.alpha
        partial = special.zeta(a) - special.zeta(a, k0 + 1)
        return law.p * partial / special.zeta(a + 1.0)
    lam0 = law.phi * law.x_m

    def integrand(v):
        lam = lam0 * v ** (-1.0 / law.alpha)
        # E[N 1{N > k0}] = lam * P(N >= k0) for N ~ Poisson(lam)
        return lam * special.gammainc(k0, lam) if k0 >= 1 else lam

    tail, _ = quad(integrand, 0.0, 1.0, epsabs=1e-13, epsrel=1e-9, limit=200)
    return law_mean(law) - law.p * tail


def solve_activity_for_mean(family: str, alpha: float, mean: float, **kw) -> float:
    """Bisect the activity p so the law mean hits `mean` (tolerance 1e-12)."""
    if mean < 0:
        raise ConfigFormatError("mean must be nonnegative")
    lo, hi = 0.0, 1.0
    if law_mean(OffspringLaw(family, alpha, 1.0, **kw)) < mean:
        raise ConfigFormatError(f"mean {mean} unreachable with p <= 1")
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if law_mean(OffspringLaw(family, alpha, mid, **kw)) < mean:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class ValidationReport:
    spectral_radius: float
    spectral_method: str
    subcritical: bool
    distinct_indices: bool
    fully_connected: bool
    tail_indices_sorted: tuple
    sbar: object  # (d, d) array, column j = sbar_j; None if not computable
    passed: bool
    failures: tuple

    def to_dict(self):
        return {
            "spectral_radius": self.spectral_radius,
            "spectral_method": self.spectral_method,
            "subcritical": self.subcritical,
            "distinct_indices": self.distinct_indices,
            "fully_connected": self.fully_connected,
            "tail_indices_sorted": list(self.tail_indices_sorted),
            "sbar_columns": None
            if self.sbar is None
            else [list(map(float, self.sbar[:, j])) for j in range(self.sbar.shape[1])],
            "passed": self.passed,
            "failures": list(self.failures),
        }


def _power_iteration(mat: np.ndarray) -> tuple[float, str]:
    v = np.ones(mat.shape[0])
    rho_prev = -1.0
    for _ in range(SPECTRAL_MAX_ITER):
        w = mat @ v
        norm = float(w.sum())
        if norm == 0.0:
            return 0.0, "power"
        rho = norm / float(v.sum())
        if abs(rho - rho_prev) < SPECTRAL_TOL:
            return rho, "power"
        rho_prev = rho
        v = w / norm
    # zero-diagonal cycles can stall power iteration; d is tiny, eig is safe
    return float(np.max(np.abs(np.linalg.eigvals(mat)))), "eig"


class ModelConfig:
    """Validated immutable model: laws, mean matrix, expected clusters, indices."""

    def __init__(self, laws):
        d = len(laws)
        if d < 1 or any(len(row) != d for row in laws):
            raise ConfigFormatError("laws must be a d x d array of OffspringLaw")
        self.laws = tuple(tuple(row) for row in laws)
        self.d = d
        # mean_matrix[i, j] = E B_{i<-j}; laws[j][i] is the law of B_{i<-j}
        mm = np.array([[law_mean(self.laws[j][i]) for j in range(d)] for i in range(d)])
        mm.setflags(write=False)
        self.mean_matrix = mm
        report = self._analyze()
        if not report.passed:
            exc = {
                "subcritical": SubcriticalityViolation,
                "distinct_indices": DuplicateTailIndex,
                "fully_connected": ConnectivityViolation,
            }[report.failures[0]]
            err = exc(f"model validation failed: {', '.join(report.failures)}")
            err.report = report
            raise err
        self.report = report
        sbar = np.asarray(report.sbar)
        sbar.setflags(write=False)
        self.sbar = sbar  # column j = sbar_j = E S_j
        alphas = np.array(
            [[self.laws[l][j].alpha for l in range(d)] for j in range(d)]
        )  # alphas[j, l] = tail index of B_{j<-l}
        self.l_star = tuple(int(np.argmin(alphas[j])) for j in range(d))
        self.alpha_star = tuple(float(alphas[j, self.l_star[j]]) for j in range(d))

    def _analyze(self) -> ValidationReport:
        d = self.d
        rho, method = _power_iteration(self.mean_matrix)
        subcritical = rho < 1.0
        idx = sorted(self.laws[j][i].alpha for j in range(d) for i in range(d))
        distinct = all(b - a > DUPLICATE_TOL for a, b in zip(idx, idx[1:]))
        sbar = None
        connected = False
        failures = []
        if not subcritical:
            failures.append("subcritical")
        else:
            sbar = np.linalg.inv(np.eye(d) - self.mean_matrix)
            connected = bool(np.all(sbar > 0.0))
            if not connected:
                failures.append("fully_connected")
        if not distinct:
            failures.append("distinct_indices")
        # deterministic failure order: subcriticality, duplicates, connectivity
        order = {"subcritical": 0, "distinct_indices": 1, "fully_connected": 2}
        failures.sort(key=order.__getitem__)
        return ValidationReport(
            spectral_radius=float(rho),
            spectral_method=method,
            subcritical=subcritical,
            distinct_indices=distinct,
            fully_connected=connected,
            tail_indices_sorted=tuple(idx),
            sbar=sbar,
            passed=not failures,
            failures=tuple(failures),
        )

    def law(self, parent: int, child: int) -> OffspringLaw:
        return self.laws[parent][child]


def validate(laws) -> ValidationReport:
    """Validation report for a d x d law array; never raises on assumption failure."""
    try:
        cfg = ModelConfig(laws)
    except (SubcriticalityViolation, DuplicateTailIndex, ConnectivityViolation) as e:
        return e.report
    return cfg.report


def expected_cluster(config: ModelConfig, j: int) -> np.ndarray:
    """Expected total-progeny vector sbar_j of a cluster rooted at type j."""
    return np.array(config.sbar[:, j])


def alpha_of(config: ModelConfig, jset, allow_empty: bool = False) -> float:
    """Tail index 1 + sum_{i in jset} (alpha*(i) - 1); empty set maps to 0."""
    jset = frozenset(jset)
    if not jset:
        if allow_empty:
            return 0.0
        raise EmptySet("alpha is defined on nonempty index sets (empty -> 0 by convention)")
    if not jset <= set(range(config.d)):
        raise ValueError(f"index set {sorted(jset)} out of range for d={config.d}")
    return 1.0 + sum(config.alpha_star[i] - 1.0 for i in jset)


def alpha_star_lstar(config: ModelConfig, j: int) -> tuple[float, int]:
    return config.alpha_star[j], config.l_star[j]


def rate_lambda(config: ModelConfig, jset, n: float) -> float:
    """Regularly varying normalization n^-1 * prod_{i in jset} n * P(B_{i<-l*(i)} > n)."""
    jset = frozenset(jset)
    if not jset:
        raise EmptySet("rate function needs a nonempty index set")
    if n <= 0:
        raise ValueError("n must be positive")
    out = 1.0 / n
    for i in sorted(jset):
        out *= n * law_survival(config.laws[config.l_star[i]][i], n)
    return out


# ------------------------------------------------------------------ builders
def _law_from_dict(obj) -> OffspringLaw:
    if not isinstance(obj, dict) or "family" not in obj:
        raise ConfigFormatError(f"law entry must be an object with 'family': {obj!r}")
    family = obj["family"]
    try:
        alpha = float(obj["alpha"])
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigFormatError(f"law entry needs numeric 'alpha': {obj!r}") from e
    kw = {}
    if family == "mixed_poisson":
        try:
            kw = {"x_m": float(obj["x_m"]), "phi": float(obj["phi"])}
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigFormatError("mixed_poisson needs x_m and phi") from e
    if "p" in obj:
        p = float(obj["p"])
    elif "mean" in obj:
        p = solve_activity_for_mean(family, alpha, float(obj["mean"]), **kw)
    else:
        raise ConfigFormatError("law entry needs 'p' or 'mean'")
    return OffspringLaw(family, alpha, p, **kw)


def laws_from_dict(obj):
    if not isinstance(obj, dict):
        raise ConfigFormatError("model config must be a JSON object")
    try:
        d = int(obj["d"])
        rows = obj["offspring"]
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigFormatError("model config needs 'd' and 'offspring'") from e
    if not isinstance(rows, list) or len(rows) != d or any(
        not isinstance(r, list) or len(r) != d for r in rows
    ):
        raise ConfigFormatError("'offspring' must be a d x d array of laws")
    return [[_law_from_dict(rows[j][i]) for i in range(d)] for j in range(d)]


def config_from_dict(obj) -> ModelConfig:
    return ModelConfig(laws_from_dict(obj))


def config_from_json(path) -> ModelConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigFormatError(f"cannot read model config {path}: {e}") from e
    return config_from_dict(obj)


def config_to_dict(config: ModelConfig) -> dict:
    rows = []
    for j in range(config.d):
        row = []
        for i in range(config.d):
            law = config.laws[j][i]
            entry = {"family": law.family, "alpha": law.alpha, "p": law.p}
            if law.family == "mixed_poisson":
                entry.update({"x_m": law.x_m, "phi": law.phi})
            row.append(entry)
        rows.append(row)
    return {"d": config.d, "offspring": rows}


def reference_r2() -> ModelConfig:
    """The 2-type test model used throughout: distinct tail indices
    {1.6, 3.4, 2.9, 2.2} and mean matrix [[0.4, 0.15], [0.1, 0.35]]."""
    spec = {  # (parent, child) -> (alpha, mean)
        (0, 0): (1.6, 0.4),
        (0, 1): (3.4, 0.1),
        (1, 0): (2.9, 0.15),
        (1, 1): (2.2, 0.35),
    }
    laws = [[None, None], [None, None]]
    for (j, i), (alpha, mean) in spec.items():
        p = solve_activity_for_mean("zeta_tail", alpha, mean)
        laws[j][i] = OffspringLaw("zeta_tail", alpha, p)
    return ModelConfig(laws)


def counterexample_model() -> ModelConfig:
    """2-type model for the tube-complement experiment: alpha_{1<-2} >
    alpha_{1<-1} > 2, both alpha_{2<-.} > 2*alpha_{1<-1}, P(B_{2<-1}=0) > 0."""
    spec = {
        (0, 0): (2.2, 0.4),
        (0, 1): (5.6, 0.1),
        (1, 0): (3.0, 0.15),
        (1, 1): (5.0, 0.35),
    }
    laws = [[None, None], [None, None]]
    for (j, i), (alpha, mean) in spec.items():
        p = solve_activity_for_mean("zeta_tail", alpha, mean)
        laws[j][i] = OffspringLaw("zeta_tail", alpha, p)
    return ModelConfig(laws)
