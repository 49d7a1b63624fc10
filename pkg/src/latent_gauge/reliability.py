"""Pairwise inter-rater agreement battery.

Covers product-moment, rank, and chance-corrected agreement plus
Bland-Altman limits of agreement, computed per rater pair over shared
units either at the task level or after aggregating to occupations.

Conventions: correlations and Krippendorff's alpha use population-style
sums that cancel scale; Bland-Altman uses the sample (1/(n-1)) standard
deviation of the paired differences. Degenerate inputs raise typed errors
or yield flagged defined values, never silent NaN.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from .aggregate import aggregate_occupations
from .errors import DegenerateDataError, ValidationError
from .panel import ScorePanel


@dataclass(frozen=True)
class PairedScores:
    """One unit scored by two raters."""

    unit_id: str
    a: float
    b: float


def make_pairs(a, b) -> list[PairedScores]:
    a = list(a)
    b = list(b)
    if len(a) != len(b):
        raise ValidationError(f"paired series differ in length: {len(a)} vs {len(b)}")
    return [PairedScores(unit_id=str(i), a=float(x), b=float(y)) for i, (x, y) in enumerate(zip(a, b))]


def _as_arrays(pairs) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(pairs, tuple) and len(pairs) == 2:
        a = np.asarray(pairs[0], dtype=float)
        b = np.asarray(pairs[1], dtype=float)
    else:
        a = np.array([p.a for p in pairs], dtype=float)
        b = np.array([p.b for p in pairs], dtype=float)
    if a.shape != b.shape:
        raise ValidationError(f"paired series differ in length: {a.size} vs {b.size}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValidationError("paired scores must be finite")
    return a, b


def _require_n(a: np.ndarray, n: int, what: str) -> None:
    if a.size < n:
        raise DegenerateDataError(f"{what} needs at least {n} pairs, got {a.size}")


def pearson(pairs) -> float:
    """Product-moment correlation; errors on constant series."""
    a, b = _as_arrays(pairs)
    _require_n(a, 3, "pearson")
    ac = a - a.mean()
    bc = b - b.mean()
    denom = math.sqrt(float(ac @ ac)) * math.sqrt(float(bc @ bc))
    if denom == 0.0:
        raise DegenerateDataError("undefined correlation: at least one series is constant")
    return float(np.clip(float(ac @ bc) / denom, -1.0, 1.0))


def rank_average(values) -> np.ndarray:
    """Average ranks (ties get the mean of their positions), 1-based."""
    return sps.rankdata(np.asarray(values, dtype=float), method="average")


def spearman(pairs) -> float:
    """Pearson correlation of average ranks."""
    a, b = _as_arrays(pairs)
    _require_n(a, 3, "spearman")
    return pearson((rank_average(a), rank_average(b)))


def kendall_tau_b(pairs) -> float:
    """Tie-corrected Kendall tau-b via the O(n log n) fast path."""
    a, b = _as_arrays(pairs)
    _require_n(a, 3, "kendall_tau_b")
    if np.all(a == a[0]) or np.all(b == b[0]):
        raise DegenerateDataError("kendall tau-b undefined: all values tied on one side")
    res = sps.kendalltau(a, b, variant="b")
    tau = float(res.statistic)
    if not math.isfinite(tau):
        raise DegenerateDataError("kendall tau-b undefined on this input")
    return tau


def krippendorff_alpha(pairs, variant: str = "raw") -> float:
    """Two-rater Krippendorff's alpha with the interval metric (v - v')^2.

    alpha = 1 - D_o / D_e with coincidence-based observed and expected
    disagreement; for a complete two-rater design this reduces to
    D_o = mean((a_i - b_i)^2) and D_e = 2 * var(pooled values, ddof=1).
    The mean_adjusted variant first removes each rater's own mean,
    isolating rank agreement from level bias. When every value is
    identical, expected disagreement is zero and alpha is defined as 1.0
    (degenerate agreement; flagged by the report layer).
    """
    if variant not in ("raw", "mean_adjusted"):
        raise ValidationError(f"unknown alpha variant {variant!r}")
    a, b = _as_arrays(pairs)
    _require_n(a, 2, "krippendorff_alpha")
    if variant == "mean_adjusted":
        a = a - a.mean()
        b = b - b.mean()
    d_o = float(np.mean((a - b) ** 2))
    pooled = np.concatenate([a, b])
    d_e = 2.0 * float(np.var(pooled, ddof=1))
    if d_e == 0.0:
        return 1.0
    return 1.0 - d_o / d_e


def bland_altman(pairs) -> tuple[float, float, float]:
    """(mean bias, lower, upper) limits of agreement: mean(d) +/- 1.96 sd(d)."""
    a, b = _as_arrays(pairs)
    _require_n(a, 3, "bland_altman")
    d = b - a
    bias = float(d.mean())
    sd = float(d.std(ddof=1))
    return bias, bias - 1.96 * sd, bias + 1.96 * sd


def top_bottom_overlap(index_a: dict[str, float], index_b: dict[str, float], k: int) -> tuple[float, float]:
    """Fraction of shared entities in the top-k and bottom-k of two rankings."""
    if k <= 0:
        raise ValidationError(f"k must be positive, got {k}")
    if set(index_a) != set(index_b):
        raise ValidationError("indices must cover the same occupations")
    n = len(index_a)
    if not k < n / 2:
        raise ValidationError(f"k={k} must be smaller than half of n={n}")
    order_a = sorted(index_a, key=lambda o: (-index_a[o], o))
    order_b = sorted(index_b, key=lambda o: (-index_b[o], o))
    top = len(set(order_a[:k]) & set(order_b[:k])) / k
    bottom = len(set(order_a[-k:]) & set(order_b[-k:])) / k
    return top, bottom


@dataclass(frozen=True)
class ReliabilityReport:
    pearson_r: float
    spearman_rho: float
    kendall_tau_b: float
    alpha_raw: float
    alpha_mean_adjusted: float
    mean_abs_diff: float
    mean_bias: float
    loa_low: float
    loa_high: float
    n_pairs: int
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "pearson_r": self.pearson_r,
            "spearman_rho": self.spearman_rho,
            "kendall_tau_b": self.kendall_tau_b,
            "alpha_raw": self.alpha_raw,
            "alpha_mean_adjusted": self.alpha_mean_adjusted,
            "mean_abs_diff": self.mean_abs_diff,
            "mean_bias": self.mean_bias,
            "loa_low": self.loa_low,
            "loa_high": self.loa_high,
            "n_pairs": self.n_pairs,
            "notes": list(self.notes),
        }


def compute_reliability(pairs) -> ReliabilityReport:
    """Full agreement battery for one rater pair."""
    a, b = _as_arrays(pairs)
    _require_n(a, 3, "reliability report")
    notes = []
    pooled = np.concatenate([a, b])
    if np.all(pooled == pooled[0]):
        notes.append("all values identical: alpha degenerate, defined as 1.0")
    bias, lo, hi = bland_altman((a, b))
    return ReliabilityReport(
        pearson_r=pearson((a, b)),
        spearman_rho=spearman((a, b)),
        kendall_tau_b=kendall_tau_b((a, b)),
        alpha_raw=krippendorff_alpha((a, b), "raw"),
        alpha_mean_adjusted=krippendorff_alpha((a, b), "mean_adjusted"),
        mean_abs_diff=float(np.mean(np.abs(b - a))),
        mean_bias=bias,
        loa_low=lo,
        loa_high=hi,
        n_pairs=int(a.size),
        notes=tuple(notes),
    )


@dataclass(frozen=True)
class ReliabilityMatrix:
    raters: tuple[str, ...]
    reports: dict[tuple[str, str], ReliabilityReport]
    skipped: tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "raters": list(self.raters),
            "pairs": [
                {"rater_a": a, "rater_b": b, **rep.to_dict()}
                for (a, b), rep in sorted(self.reports.items())
            ],
            "skipped": list(self.skipped),
        }


def paired_scores(
    panel: ScorePanel,
    rater_a: str,
    rater_b: str,
    field: str = "augmentation",
    level: str = "task",
) -> list[PairedScores]:
    """Pairs shared by two raters: (task, prompt) units at the task level,
    (occupation, prompt) units of weighted index values at the occupation level."""
    if level == "task":
        lookup_a = {
            (r.task_id, r.prompt_id): getattr(r, field)
            for r in panel.records
            if r.rater_id == rater_a
        }
        lookup_b = {
            (r.task_id, r.prompt_id): getattr(r, field)
            for r in panel.records
            if r.rater_id == rater_b
        }
    elif level == "occupation":
        agg = aggregate_occupations(panel, field)
        lookup_a = {
            (ix.occupation_code, ix.prompt_id): ix.value_raw
            for ix in agg.indices
            if ix.rater_id == rater_a
        }
        lookup_b = {
            (ix.occupation_code, ix.prompt_id): ix.value_raw
            for ix in agg.indices
            if ix.rater_id == rater_b
        }
    else:
        raise ValidationError(f"unknown level {level!r}; expected task or occupation")
    shared = sorted(set(lookup_a) & set(lookup_b))
    return [
        PairedScores(unit_id="|".join(key), a=lookup_a[key], b=lookup_b[key])
        for key in shared
    ]


def reliability_matrix(
    panel: ScorePanel,
    level: str = "task",
    field: str = "augmentation",
    min_shared: int = 3,
) -> ReliabilityMatrix:
    """All pairwise reliability reports; pairs with too few shared units are skipped."""
    raters = panel.raters()
    if len(raters) < 2:
        raise ValidationError("reliability matrix needs at least 2 raters")
    reports: dict[tuple[str, str], ReliabilityReport] = {}
    skipped = []
    for i, ra in enumerate(raters):
        for rb in raters[i + 1 :]:
            pairs = paired_scores(panel, ra, rb, field=field, level=level)
            if len(pairs) < min_shared:
                skipped.append(f"{ra}<->{rb}: only {len(pairs)} shared unit(s)")
                continue
            try:
                reports[(ra, rb)] = compute_reliability(pairs)
            except DegenerateDataError as exc:
                skipped.append(f"{ra}<->{rb}: {exc}")
    return ReliabilityMatrix(raters=raters, reports=reports, skipped=tuple(skipped))
