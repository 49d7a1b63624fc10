import numpy as np
import pytest

from latent_gauge.errors import DegenerateDataError, ValidationError
from latent_gauge.panel import ScorePanel, ScoreRecord
from latent_gauge.sensitivity import (
    detect_and_invert,
    invert_prompts,
    prompt_rank_matrix,
    variance_decomposition,
)
from latent_gauge.simulate import SimConfig, simulate_prompt_grid


def panel_from_grid(grid, prompts=None, rater="r1"):
    """grid: tasks x prompts array of augmentation scores."""
    t, p = grid.shape
    prompts = prompts or [f"p{j + 1}" for j in range(p)]
    records = []
    for i in range(t):
        for j in range(p):
            records.append(
                ScoreRecord(f"t{i:04d}", f"o{i:04d}", rater, prompts[j], float(grid[i, j]), 0.0, 1.0)
            )
    return ScorePanel(records=tuple(records))


def matrix_value(m, pa, pb):
    i, j = m.prompt_ids.index(pa), m.prompt_ids.index(pb)
    return m.values[i, j]


def test_duplicated_prompt_correlates_one():
    rng = np.random.default_rng(0)
    x = rng.uniform(10, 90, 40)
    grid = np.column_stack([x, x, rng.uniform(10, 90, 40)])
    m = prompt_rank_matrix(panel_from_grid(grid), "r1")
    assert matrix_value(m, "p1", "p2") == pytest.approx(1.0)


def test_inverse_prompt_strongly_negative():
    rng = np.random.default_rng(1)
    x = rng.uniform(10, 90, 200)
    inverse = 100.0 - x + rng.normal(0, 14, 200)  # engineered rho ~ -0.75 vs baseline
    inverse = np.clip(inverse, 0, 100)
    grid = np.column_stack([x, np.clip(x + rng.normal(0, 8, 200), 0, 100), inverse])
    m = prompt_rank_matrix(panel_from_grid(grid, prompts=["A", "B", "D"]), "r1")
    assert matrix_value(m, "A", "D") < -0.6


def test_independent_prompts_near_zero():
    rng = np.random.default_rng(2)
    grid = rng.uniform(0, 100, (3000, 2))
    m = prompt_rank_matrix(panel_from_grid(grid), "r1")
    assert abs(matrix_value(m, "p1", "p2")) < 3.0 / np.sqrt(3000)


def test_insufficient_overlap_marks_missing():
    records = [
        ScoreRecord("t1", "o1", "r1", "p1", 10.0, 0.0, 1.0),
        ScoreRecord("t2", "o2", "r1", "p1", 20.0, 0.0, 1.0),
        ScoreRecord("t1", "o1", "r1", "p2", 30.0, 0.0, 1.0),
        ScoreRecord("t3", "o3", "r1", "p2", 40.0, 0.0, 1.0),
    ]
    m = prompt_rank_matrix(ScorePanel(records=tuple(records)), "r1")
    assert not np.isfinite(matrix_value(m, "p1", "p2"))
    assert not m.is_complete()


def test_detect_no_negative_is_identity():
    rng = np.random.default_rng(3)
    x = rng.uniform(10, 90, 60)
    grid = np.column_stack([x, x + rng.normal(0, 5, 60), x + rng.normal(0, 5, 60)])
    panel = panel_from_grid(grid)
    m = prompt_rank_matrix(panel, "r1")
    new_panel, inverted = detect_and_invert(m, panel, "r1")
    assert inverted == []
    assert new_panel.records == panel.records


def test_detect_single_inverse_prompt_flips_spearman_sign_exactly():
    rng = np.random.default_rng(4)
    x = rng.uniform(10, 90, 120)
    d = 100.0 - x + rng.normal(0, 10, 120)
    grid = np.column_stack([x, x + rng.normal(0, 6, 120), np.clip(d, 0, 100)])
    panel = panel_from_grid(grid, prompts=["A", "B", "D"])
    m = prompt_rank_matrix(panel, "r1")
    rho_before = matrix_value(m, "A", "D")
    new_panel, inverted = detect_and_invert(m, panel, "r1")
    assert inverted == ["D"]
    m_after = prompt_rank_matrix(new_panel, "r1")
    assert matrix_value(m_after, "A", "D") == pytest.approx(-rho_before, abs=1e-12)
    for i in range(len(m_after.prompt_ids)):
        others = [m_after.values[i, j] for j in range(3) if j != i]
        assert np.median(others) >= 0


def test_detect_two_prompt_mutual_negative_tiebreak():
    rng = np.random.default_rng(5)
    x = rng.uniform(10, 90, 50)
    grid = np.column_stack([x, 100.0 - x])
    panel = panel_from_grid(grid, prompts=["p1", "p2"])
    m = prompt_rank_matrix(panel, "r1")
    _, inverted = detect_and_invert(m, panel, "r1")
    assert inverted == ["p2"]  # lexicographically later id


def test_detect_all_negative_three_prompts_ambiguous():
    # Three mutually negative prompts cannot be fixed by any inversion set.
    values = np.array(
        [
            [1.0, -0.8, -0.7],
            [-0.8, 1.0, -0.6],
            [-0.7, -0.6, 1.0],
        ]
    )
    from latent_gauge.sensitivity import PromptRankMatrix

    rng = np.random.default_rng(6)
    panel = panel_from_grid(rng.uniform(0, 100, (10, 3)))
    matrix = PromptRankMatrix(prompt_ids=("p1", "p2", "p3"), values=values)
    with pytest.raises(ValidationError, match="ambiguous|manual polarity"):
        detect_and_invert(matrix, panel, "r1")


def test_polarity_flag_never_undone_by_autodetection():
    rng = np.random.default_rng(7)
    x = rng.uniform(10, 90, 60)
    grid = np.column_stack([x, np.clip(x + rng.normal(0, 5, 60), 0, 100)])
    panel = panel_from_grid(grid, prompts=["A", "D"])
    m = prompt_rank_matrix(panel, "r1")
    # D correlates positively here, yet the flag forces its inversion; the
    # only consistent repair is flipping A along with it.
    _, inverted = detect_and_invert(m, panel, "r1", inverse_prompts=["D"])
    assert inverted == ["A", "D"]


def test_polarity_flag_inverts_genuinely_inverse_prompt():
    rng = np.random.default_rng(16)
    x = rng.uniform(10, 90, 80)
    d = np.clip(100.0 - x + rng.normal(0, 8, 80), 0, 100)
    panel = panel_from_grid(np.column_stack([x, d]), prompts=["A", "D"])
    m = prompt_rank_matrix(panel, "r1")
    _, inverted = detect_and_invert(m, panel, "r1", inverse_prompts=["D"])
    assert inverted == ["D"]


def test_inversion_is_involution():
    rng = np.random.default_rng(8)
    panel = panel_from_grid(rng.uniform(0, 100, (20, 3)))
    twice = invert_prompts(invert_prompts(panel, ["p2"]), ["p2"])
    for before, after in zip(panel.records, twice.records):
        assert after.augmentation == pytest.approx(before.augmentation, abs=1e-12)
        assert after.key() == before.key()


def test_detect_idempotent_on_consistent_panel():
    rng = np.random.default_rng(9)
    x = rng.uniform(10, 90, 80)
    d = np.clip(100.0 - x + rng.normal(0, 8, 80), 0, 100)
    panel = panel_from_grid(np.column_stack([x, np.clip(x + rng.normal(0, 6, 80), 0, 100), d]),
                            prompts=["A", "B", "D"])
    m = prompt_rank_matrix(panel, "r1")
    once, inverted = detect_and_invert(m, panel, "r1")
    assert inverted == ["D"]
    m2 = prompt_rank_matrix(once, "r1")
    again, inverted2 = detect_and_invert(m2, once, "r1")
    assert inverted2 == []
    assert again.records == once.records


def test_decomposition_constant_within_task():
    rng = np.random.default_rng(10)
    tasks = rng.uniform(10, 90, 25)
    grid = np.tile(tasks[:, None], (1, 4))
    d = variance_decomposition(panel_from_grid(grid), "r1")
    assert (d.share_task, d.share_prompt, d.share_residual) == (1.0, 0.0, 0.0)
    assert d.truncated == ()


def test_decomposition_pure_noise():
    rng = np.random.default_rng(11)
    grid = rng.uniform(0, 100, (1000, 4))
    d = variance_decomposition(panel_from_grid(grid), "r1")
    assert abs(d.share_task) < 0.02
    assert abs(d.share_prompt) < 0.02
    assert d.share_residual > 0.96


def test_decomposition_planted_shares_recovered():
    config = SimConfig(
        n=1000,
        beta=0.0,
        lambda_true=1.0,
        seed=20,
        n_prompts=4,
        variance_shares=(0.14, 0.22, 0.64),
        grid_mean=50.0,
        grid_sd=10.0,
    )
    panel = simulate_prompt_grid(config)
    d = variance_decomposition(panel, "sim")
    assert d.share_task == pytest.approx(0.14, abs=0.03)
    assert d.share_prompt == pytest.approx(0.22, abs=0.03)
    assert d.share_residual == pytest.approx(0.64, abs=0.03)


def test_decomposition_single_prompt_errors():
    rng = np.random.default_rng(12)
    grid = rng.uniform(0, 100, (20, 1))
    with pytest.raises(ValidationError, match="share_prompt is undefined"):
        variance_decomposition(panel_from_grid(grid), "r1")


def test_decomposition_shift_and_scale_invariance():
    rng = np.random.default_rng(13)
    u = rng.uniform(20, 60, 200)
    v = rng.normal(0, 3, 4)
    e = rng.normal(0, 4, (200, 4))
    grid = np.clip(u[:, None] + v[None, :] + e, 0, 100)
    base = variance_decomposition(panel_from_grid(grid), "r1")
    shifted = variance_decomposition(panel_from_grid(grid + 7.0), "r1")
    scaled = variance_decomposition(panel_from_grid(grid * 0.9), "r1")
    for attr in ("share_task", "share_prompt", "share_residual"):
        assert getattr(shifted, attr) == pytest.approx(getattr(base, attr), abs=1e-9)
        assert getattr(scaled, attr) == pytest.approx(getattr(base, attr), abs=1e-9)


def test_decomposition_missing_cells_imputed_then_rejected():
    rng = np.random.default_rng(14)
    grid = rng.uniform(10, 90, (100, 4))
    panel = panel_from_grid(grid)
    # drop a scattered 3% of cells
    drop = set(rng.choice(len(panel.records), size=12, replace=False))
    records = [r for i, r in enumerate(panel.records) if i not in drop]
    d = variance_decomposition(ScorePanel(records=tuple(records)), "r1")
    assert d.imputed_cells == 12
    # drop a scattered ~20% of cells -> rejected
    drop = set(rng.choice(len(panel.records), size=80, replace=False))
    records = [r for i, r in enumerate(panel.records) if i not in drop]
    with pytest.raises(ValidationError, match="missing"):
        variance_decomposition(ScorePanel(records=tuple(records)), "r1")


def test_decomposition_identical_scores_degenerate():
    grid = np.full((10, 3), 42.0)
    with pytest.raises(DegenerateDataError, match="identical"):
        variance_decomposition(panel_from_grid(grid), "r1")


def test_truncation_flagged_when_component_negative():
    # Anti-correlated within task: between-task mean squares fall below the
    # residual mean squares, driving the task component negative.
    rng = np.random.default_rng(15)
    e = rng.normal(0, 10, (40, 2))
    grid = 50.0 + np.column_stack([e[:, 0], -e[:, 0] + 0.1 * e[:, 1]])
    d = variance_decomposition(panel_from_grid(np.clip(grid, 0, 100)), "r1")
    assert "task" in d.truncated
    assert d.share_task == 0.0
    total = d.share_task + d.share_prompt + d.share_residual
    assert total == pytest.approx(1.0, abs=1e-9)
