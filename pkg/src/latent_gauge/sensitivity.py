"""Prompt-variant rank analysis, inverse-prompt handling, and variance decomposition.

A prompt measuring the negated construct shows up as negative rank
correlations against the other variants; it is flipped by x -> 100 - x,
which reverses Spearman's sign exactly. The variance decomposition is a
fully crossed two-way random-effects model (task x prompt) estimated by
method of moments on the classical mean squares; negative component
estimates are truncated at zero and flagged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDataError, ValidationError
from .panel import ScorePanel, ScoreRecord
from .reliability import spearman

MAX_MISSING_FRACTION = 0.05


@dataclass(frozen=True)
class PromptRankMatrix:
    prompt_ids: tuple[str, ...]
    values: np.ndarray  # NaN marks pairs with insufficient shared tasks

    def to_dict(self) -> dict:
        return {
            "prompt_ids": list(self.prompt_ids),
            "values": [
                [None if not np.isfinite(v) else float(v) for v in row]
                for row in self.values
            ],
        }

    def is_complete(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))


@dataclass(frozen=True)
class VarianceDecomposition:
    share_task: float
    share_prompt: float
    share_residual: float
    n_tasks: int
    n_prompts: int
    truncated: tuple[str, ...] = ()
    imputed_cells: int = 0

    def to_dict(self) -> dict:
        return {
            "share_task": self.share_task,
            "share_prompt": self.share_prompt,
            "share_residual": self.share_residual,
            "n_tasks": self.n_tasks,
            "n_prompts": self.n_prompts,
            "truncated": list(self.truncated),
            "imputed_cells": self.imputed_cells,
        }


def _prompt_task_values(panel: ScorePanel, rater: str, field: str) -> dict[str, dict[str, float]]:
    out: dict[str, dict[str, float]] = {}
    for rec in panel.records:
        if rec.rater_id != rater:
            continue
        out.setdefault(rec.prompt_id, {})[rec.task_id] = getattr(rec, field)
    if not out:
        raise ValidationError(f"panel has no records for rater {rater!r}")
    return out


def prompt_rank_matrix(
    panel: ScorePanel, rater: str, field: str = "augmentation", min_shared: int = 3
) -> PromptRankMatrix:
    """Spearman matrix over prompt variants for one rater, on shared tasks."""
    by_prompt = _prompt_task_values(panel, rater, field)
    prompts = tuple(sorted(by_prompt))
    if len(prompts) < 2:
        raise ValidationError(f"rater {rater!r} has {len(prompts)} prompt(s); need at least 2")
    k = len(prompts)
    values = np.eye(k)
    for i in range(k):
        for j in range(i + 1, k):
            shared = sorted(set(by_prompt[prompts[i]]) & set(by_prompt[prompts[j]]))
            if len(shared) < min_shared:
                values[i, j] = values[j, i] = np.nan
                continue
            a = [by_prompt[prompts[i]][t] for t in shared]
            b = [by_prompt[prompts[j]][t] for t in shared]
            try:
                rho = spearman((a, b))
            except DegenerateDataError:
                rho = np.nan
            values[i, j] = values[j, i] = rho
    return PromptRankMatrix(prompt_ids=prompts, values=values)


def invert_prompts(panel: ScorePanel, prompt_ids, field: str = "augmentation") -> ScorePanel:
    """Flip the named prompts' scores via x -> 100 - x (an exact involution)."""
    targets = set(prompt_ids)
    records = []
    for rec in panel.records:
        if rec.prompt_id in targets:
            records.append(
                ScoreRecord(
                    task_id=rec.task_id,
                    occupation_code=rec.occupation_code,
                    rater_id=rec.rater_id,
                    prompt_id=rec.prompt_id,
                    augmentation=100.0 - rec.augmentation if field == "augmentation" else rec.augmentation,
                    substitution=100.0 - rec.substitution if field == "substitution" else rec.substitution,
                    weight=rec.weight,
                )
            )
        else:
            records.append(rec)
    return ScorePanel(records=tuple(records), metadata=dict(panel.metadata))


def _median_correlations(matrix: PromptRankMatrix) -> dict[str, float]:
    k = len(matrix.prompt_ids)
    meds = {}
    for i, pid in enumerate(matrix.prompt_ids):
        others = [matrix.values[i, j] for j in range(k) if j != i]
        meds[pid] = float(np.median(others))
    return meds


def detect_and_invert(
    matrix: PromptRankMatrix,
    panel: ScorePanel,
    rater: str,
    field: str = "augmentation",
    inverse_prompts=(),
) -> tuple[ScorePanel, list[str]]:
    """Invert polarity-flagged prompts unconditionally, then any unflagged
    prompt whose median correlation with the others is negative.

    Tie-break: when exactly two prompts are mutually negative the
    lexicographically later id is inverted. Flag-driven flips are never
    undone by auto-detection; if the post-inversion matrix still has a
    negative median the situation is ambiguous and manual polarity flags
    are required. Returns the corrected panel and the prompts whose scores
    were flipped (odd number of total flips).
    """
    if not matrix.is_complete():
        raise ValidationError("prompt rank matrix has missing entries; cannot auto-invert")
    values = matrix.values.copy()
    prompts = matrix.prompt_ids
    flips: dict[str, int] = {pid: 0 for pid in prompts}

    def flip(pid: str):
        i = prompts.index(pid)
        values[i, :] *= -1.0
        values[:, i] *= -1.0
        values[i, i] = 1.0
        flips[pid] += 1

    flagged = {pid for pid in inverse_prompts if pid in prompts}
    for pid in sorted(flagged):
        flip(pid)

    meds = _median_correlations(PromptRankMatrix(prompt_ids=prompts, values=values))
    negative = sorted(pid for pid, m in meds.items() if m < 0 and pid not in flagged)
    if negative:
        if len(negative) == len(prompts):
            if len(prompts) == 2:
                flip(prompts[-1])  # mutually negative pair: invert the later id
            else:
                raise ValidationError(
                    "ambiguous polarity: every prompt has negative median correlation; "
                    "set manual polarity flags"
                )
        else:
            for pid in negative:
                flip(pid)
    meds_after = _median_correlations(PromptRankMatrix(prompt_ids=prompts, values=values))
    still_negative = sorted(pid for pid, m in meds_after.items() if m < 0)
    if still_negative:
        raise ValidationError(
            f"ambiguous polarity for prompt(s) {', '.join(still_negative)}: "
            "median correlation still negative after inversion; set manual polarity flags"
        )
    inverted = [pid for pid in prompts if flips[pid] % 2 == 1]
    new_panel = invert_prompts(panel, inverted, field=field) if inverted else panel
    return new_panel, inverted


def variance_decomposition(
    panel: ScorePanel, rater: str, field: str = "augmentation"
) -> VarianceDecomposition:
    """Two-way random-effects decomposition on the task x prompt grid.

    Expected mean squares for a fully crossed design with one observation
    per cell: E[MS_task] = s2_e + p*s2_task, E[MS_prompt] = s2_e + t*s2_prompt,
    E[MS_resid] = s2_e. Missing cells up to 5% are mean-imputed (task mean,
    grand-mean fallback) and counted; above that the grid is rejected.
    """
    by_prompt = _prompt_task_values(panel, rater, field)
    prompts = sorted(by_prompt)
    if len(prompts) < 2:
        raise ValidationError(
            "variance decomposition needs at least 2 prompts; share_prompt is undefined otherwise"
        )
    tasks = sorted({t for vals in by_prompt.values() for t in vals})
    t, p = len(tasks), len(prompts)
    if t < 2:
        raise ValidationError("variance decomposition needs at least 2 tasks")
    grid = np.full((t, p), np.nan)
    for j, pid in enumerate(prompts):
        vals = by_prompt[pid]
        for i, tid in enumerate(tasks):
            if tid in vals:
                grid[i, j] = vals[tid]
    missing = np.isnan(grid)
    n_missing = int(missing.sum())
    if n_missing:
        frac = n_missing / grid.size
        if frac > MAX_MISSING_FRACTION:
            raise ValidationError(
                f"{frac:.1%} of grid cells missing exceeds the {MAX_MISSING_FRACTION:.0%} limit"
            )
        grand = float(np.nanmean(grid))
        task_means = np.nanmean(np.where(missing, np.nan, grid), axis=1)
        task_means = np.where(np.isnan(task_means), grand, task_means)
        fill = np.broadcast_to(task_means[:, None], grid.shape)
        grid = np.where(missing, fill, grid)

    grand = grid.mean()
    task_means = grid.mean(axis=1)
    prompt_means = grid.mean(axis=0)
    ss_task = p * float(np.sum((task_means - grand) ** 2))
    ss_prompt = t * float(np.sum((prompt_means - grand) ** 2))
    resid = grid - task_means[:, None] - prompt_means[None, :] + grand
    ss_resid = float(np.sum(resid**2))
    ms_task = ss_task / (t - 1)
    ms_prompt = ss_prompt / (p - 1)
    ms_resid = ss_resid / ((t - 1) * (p - 1))

    est = {
        "task": (ms_task - ms_resid) / p,
        "prompt": (ms_prompt - ms_resid) / t,
        "residual": ms_resid,
    }
    # Components below the numerical precision of the data are exact zeros
    # (e.g. a grid constant within tasks must yield shares (1, 0, 0), not
    # shares polluted by roundoff in the grand mean).
    scale = max(1.0, float(np.abs(grid).max()))
    tol = (np.finfo(float).eps * scale) ** 2 * grid.size
    est = {name: (0.0 if abs(v) < tol else v) for name, v in est.items()}
    truncated = tuple(sorted(name for name, v in est.items() if v < 0))
    est = {name: max(v, 0.0) for name, v in est.items()}
    total = sum(est.values())
    if total == 0.0:
        raise DegenerateDataError("all scores identical: variance decomposition undefined")
    return VarianceDecomposition(
        share_task=est["task"] / total,
        share_prompt=est["prompt"] / total,
        share_residual=est["residual"] / total,
        n_tasks=t,
        n_prompts=p,
        truncated=truncated,
        imputed_cells=n_missing,
    )
