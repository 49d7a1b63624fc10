"""Task-to-occupation weighted aggregation and score standardization.

The occupation index is the importance-weighted average of task scores,
computed per (occupation, rater, prompt). Standardized values use the
population (1/n) standard deviation so a standardized column has exactly
unit variance, which the regression layer relies on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DegenerateDataError, ValidationError
from .panel import ScorePanel

FIELDS = ("augmentation", "substitution")


@dataclass(frozen=True)
class OccupationIndex:
    occupation_code: str
    rater_id: str
    prompt_id: str
    value_raw: float
    value_std: float
    n_tasks: int
    weight_sum: float


@dataclass(frozen=True)
class AggregationResult:
    indices: tuple[OccupationIndex, ...]
    excluded: tuple[str, ...]  # "rater/prompt/occupation" groups with zero total weight
    sparse: tuple[str, ...]  # occupations retained below the minimum task count
    warnings: tuple[str, ...]

    def by_occupation(self, rater_id: str, prompt_id: str) -> dict[str, float]:
        """Raw index values keyed by occupation for one (rater, prompt)."""
        return {
            ix.occupation_code: ix.value_raw
            for ix in self.indices
            if ix.rater_id == rater_id and ix.prompt_id == prompt_id
        }


def standardize(values) -> list[float]:
    """Z-scores with population sd; affine-invariant up to the sign of the slope."""
    xs = [float(v) for v in values]
    if len(xs) < 2:
        raise DegenerateDataError(f"standardize needs at least 2 values, got {len(xs)}")
    if not all(math.isfinite(v) for v in xs):
        raise DegenerateDataError("standardize requires finite values")
    n = len(xs)
    mean = math.fsum(xs) / n
    var = math.fsum((v - mean) ** 2 for v in xs) / n
    if var == 0.0:
        raise DegenerateDataError("zero variance: cannot standardize a constant series")
    sd = math.sqrt(var)
    return [(v - mean) / sd for v in xs]


def aggregate_occupations(
    panel: ScorePanel, field: str, min_tasks: int = 1
) -> AggregationResult:
    """Importance-weighted occupation indices for one score field.

    value_raw = sum(w_k * x_k) / sum(w_k) within each (occupation, rater,
    prompt) group. Groups whose weights sum to zero are excluded and listed.
    value_std standardizes value_raw across occupations within each fixed
    (rater, prompt); a degenerate group (single occupation or constant values)
    gets value_std = 0.0 with a warning rather than a silent NaN.
    """
    if field not in FIELDS:
        raise ValidationError(f"unknown field {field!r}; expected one of {FIELDS}")
    groups: dict[tuple[str, str, str], list] = {}
    for rec in panel.records:
        groups.setdefault((rec.rater_id, rec.prompt_id, rec.occupation_code), []).append(rec)

    raw: dict[tuple[str, str, str], tuple[float, int, float]] = {}
    excluded = []
    sparse = []
    for key in sorted(groups):
        recs = groups[key]
        wsum = math.fsum(r.weight for r in recs)
        if wsum <= 0.0:
            excluded.append("/".join(key))
            continue
        value = math.fsum(r.weight * getattr(r, field) for r in recs) / wsum
        raw[key] = (value, len(recs), wsum)
        if len(recs) < min_tasks:
            sparse.append("/".join(key))

    if not raw:
        raise ValidationError(f"no occupation has positive total weight for field {field!r}")

    warnings = []
    indices = []
    by_rp: dict[tuple[str, str], list[tuple[str, float]]] = {}
    for (rater, prompt, occ), (value, _, _) in raw.items():
        by_rp.setdefault((rater, prompt), []).append((occ, value))
    std_lookup: dict[tuple[str, str, str], float] = {}
    for (rater, prompt), pairs in by_rp.items():
        values = [v for _, v in pairs]
        try:
            zs = standardize(values)
        except DegenerateDataError:
            zs = [0.0] * len(values)
            warnings.append(
                f"rater {rater!r} prompt {prompt!r}: occupation values are degenerate "
                "(single occupation or zero variance); value_std set to 0.0"
            )
        for (occ, _), z in zip(pairs, zs):
            std_lookup[(rater, prompt, occ)] = z

    for key in sorted(raw):
        rater, prompt, occ = key
        value, n_tasks, wsum = raw[key]
        indices.append(
            OccupationIndex(
                occupation_code=occ,
                rater_id=rater,
                prompt_id=prompt,
                value_raw=value,
                value_std=std_lookup[key],
                n_tasks=n_tasks,
                weight_sum=wsum,
            )
        )
    return AggregationResult(
        indices=tuple(indices),
        excluded=tuple(excluded),
        sparse=tuple(sparse),
        warnings=tuple(warnings),
    )
