"""Synthetic data generator for the measurement model used as estimator oracle.

Latent truth is standard normal; each measure adds independent gaussian
noise sized so the planted signal share Var(H)/(Var(H)+Var(eta)) equals
lambda_true, plus an optional constant level offset per measure. The
outcome is beta * latent + gaussian noise. Randomness comes from a PCG64
generator with one spawned stream per column (latent, each noise, outcome
noise), so panels are bit-identical for identical configs and columns do
not interact through draw order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .panel import ScorePanel, ScoreRecord

MEASURE_NAMES = ("measure_a", "measure_b")
CLIP_WARN_FRACTION = 0.01


@dataclass(frozen=True)
class SimConfig:
    n: int
    beta: float
    lambda_true: float
    seed: int
    noise_family: str = "gaussian"
    level_offsets: tuple[float, float] = (0.0, 0.0)
    outcome_noise_sd: float = 0.5
    noise_correlation: float = 0.0
    n_prompts: int | None = None
    variance_shares: tuple[float, float, float] | None = None  # task, prompt, residual
    grid_mean: float = 50.0
    grid_sd: float = 10.0

    def __post_init__(self):
        if self.n < 10:
            raise ValidationError(f"n must be at least 10, got {self.n}")
        if not 0.0 < self.lambda_true <= 1.0:
            raise ValidationError(f"lambda_true must be in (0, 1], got {self.lambda_true}")
        if self.noise_family != "gaussian":
            raise ValidationError(f"unsupported noise family {self.noise_family!r}")
        if len(self.level_offsets) != 2:
            raise ValidationError("level_offsets must give one offset per measure")
        if not -1.0 <= self.noise_correlation <= 1.0:
            raise ValidationError("noise_correlation must lie in [-1, 1]")
        if self.outcome_noise_sd < 0.0:
            raise ValidationError("outcome_noise_sd must be nonnegative")
        if self.variance_shares is not None:
            shares = self.variance_shares
            if len(shares) != 3 or any(s < 0 for s in shares) or not math.isclose(
                sum(shares), 1.0, abs_tol=1e-9
            ):
                raise ValidationError(
                    f"variance_shares must be 3 nonnegative numbers summing to 1, got {shares}"
                )
            if self.n_prompts is None or self.n_prompts < 2:
                raise ValidationError("planted variance shares need n_prompts >= 2")
        if self.grid_sd <= 0.0:
            raise ValidationError("grid_sd must be positive")


@dataclass(frozen=True)
class SimPanel:
    latent: np.ndarray
    measures: dict[str, np.ndarray]
    outcome: np.ndarray
    metadata: dict[str, float] = field(default_factory=dict)


def _streams(seed: int, count: int) -> list[np.random.Generator]:
    return [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(count)]


def simulate_measurement(config: SimConfig) -> SimPanel:
    """Draw latent truth, two noisy measures, and the outcome.

    Noise variance per measure is (1 - lambda) / lambda so the planted
    attenuation factor equals lambda_true exactly in expectation. The
    noise_correlation knob correlates the two measures' errors (default 0,
    matching the independence assumption the mutual-instrument estimator needs).
    """
    n = config.n
    lam = config.lambda_true
    g_latent, g_e1, g_e2, g_out = _streams(config.seed, 4)
    latent = g_latent.standard_normal(n)
    noise_sd = math.sqrt((1.0 - lam) / lam) if lam < 1.0 else 0.0
    e1 = g_e1.standard_normal(n)
    e2 = g_e2.standard_normal(n)
    rho = config.noise_correlation
    eta_a = noise_sd * e1
    eta_b = noise_sd * (rho * e1 + math.sqrt(max(0.0, 1.0 - rho * rho)) * e2)
    measures = {
        MEASURE_NAMES[0]: latent + eta_a + config.level_offsets[0],
        MEASURE_NAMES[1]: latent + eta_b + config.level_offsets[1],
    }
    outcome = config.beta * latent + config.outcome_noise_sd * g_out.standard_normal(n)
    var_latent = float(np.var(latent, ddof=1))
    metadata = {"lambda_true": lam, "beta_true": config.beta, "seed": float(config.seed)}
    for name in MEASURE_NAMES:
        metadata[f"lambda_realized_{name}"] = var_latent / float(np.var(measures[name], ddof=1))
    return SimPanel(latent=latent, measures=measures, outcome=outcome, metadata=metadata)


def _exact_scale(draws: np.ndarray, target_sd: float) -> np.ndarray:
    """Center and rescale draws so their sample (1/(n-1)) sd equals target_sd.

    The two-way mean-square estimators divide factor sums of squares by
    (levels - 1), so planting with the matching sample convention makes the
    recovered components land on the planted values up to cross-term noise.
    """
    if target_sd == 0.0:
        return np.zeros_like(draws)
    centered = draws - draws.mean()
    sd = centered.std(ddof=1)
    if sd == 0.0:
        raise ValidationError("degenerate draws: cannot plant a variance component")
    return centered * (target_sd / sd)


def simulate_prompt_grid(config: SimConfig, rater_id: str = "sim") -> ScorePanel:
    """Fully crossed task x prompt panel with planted variance shares.

    score(t, p) = mean + u_t + v_p + e_tp where the three components are
    rescaled to carry exactly their planted share of grid_sd^2, then clipped
    to [0, 100]. The clipping rate lands in panel metadata and a warning is
    recorded when it exceeds 1%.
    """
    if config.variance_shares is None or config.n_prompts is None:
        raise ValidationError("simulate_prompt_grid needs n_prompts and variance_shares")
    t, p = config.n, config.n_prompts
    s_task, s_prompt, s_resid = config.variance_shares
    total_var = config.grid_sd**2
    g_task, g_prompt, g_resid = _streams(config.seed, 3)
    u = _exact_scale(g_task.standard_normal(t), math.sqrt(s_task * total_var))
    v = _exact_scale(g_prompt.standard_normal(p), math.sqrt(s_prompt * total_var))
    e = _exact_scale(g_resid.standard_normal((t, p)), math.sqrt(s_resid * total_var))
    grid = config.grid_mean + u[:, None] + v[None, :] + e
    clipped = np.clip(grid, 0.0, 100.0)
    clip_rate = float(np.mean(grid != clipped))
    digits = len(str(t))
    records = []
    for i in range(t):
        for j in range(p):
            records.append(
                ScoreRecord(
                    task_id=f"task{i:0{digits}d}",
                    occupation_code=f"occ{i:0{digits}d}",
                    rater_id=rater_id,
                    prompt_id=f"p{j + 1}",
                    augmentation=float(clipped[i, j]),
                    substitution=0.0,
                    weight=1.0,
                )
            )
    metadata = {
        "generator": "simulate_prompt_grid",
        "seed": str(config.seed),
        "clip_rate": f"{clip_rate:.6g}",
    }
    if clip_rate > CLIP_WARN_FRACTION:
        metadata["clip_warning"] = (
            f"{clip_rate:.2%} of cells clipped to [0, 100]; planted shares are distorted"
        )
    return ScorePanel(records=tuple(records), metadata=metadata)


def write_sim_csv(panel: SimPanel, path) -> None:
    """Entity-level CSV: entity_id, latent, measures, outcome (6 significant digits)."""
    from .panel import format_score

    names = list(panel.measures)
    with open(path, "w") as fh:
        fh.write(",".join(["entity_id", "latent"] + names + ["outcome"]) + "\n")
        digits = len(str(len(panel.latent)))
        for i in range(len(panel.latent)):
            row = [f"e{i:0{digits}d}", format_score(panel.latent[i])]
            row += [format_score(panel.measures[m][i]) for m in names]
            row.append(format_score(panel.outcome[i]))
            fh.write(",".join(row) + "\n")
