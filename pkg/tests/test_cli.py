import csv
import json
import subprocess
import sys

import pytest

from latent_gauge.cli import main


def write_tasks(path, n=30):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["task_id", "task_text", "occupation_code", "weight"])
        for i in range(n):
            writer.writerow([f"t{i:03d}", f"review item {i}", f"o{i % 6}", 1.0 + (i % 3)])


def run_cli(*argv):
    return main([str(a) for a in argv])


def test_score_deterministic_and_cached(tmp_path):
    tasks = tmp_path / "tasks.csv"
    write_tasks(tasks)
    cache = tmp_path / "cache"
    out1, out2 = tmp_path / "p1.csv", tmp_path / "p2.csv"
    args = [
        "score", "--tasks", tasks, "--template", "A", "--model", "m1",
        "--mock", "--seed", 9, "--cache", cache,
    ]
    assert run_cli(*args, "--out", out1) == 0
    assert run_cli(*args, "--out", out2) == 0
    assert out1.read_bytes() == out2.read_bytes()
    assert len(list(cache.glob("*.txt"))) == 30


def test_aggregate_and_reliability_commands(tmp_path, capsys):
    tasks = tmp_path / "tasks.csv"
    write_tasks(tasks)
    panel_a = tmp_path / "panel_a.csv"
    panel_b = tmp_path / "panel_b.csv"
    for model, out, offset in (("m1", panel_a, 0.0), ("m2", panel_b, 8.6)):
        assert run_cli(
            "score", "--tasks", tasks, "--template", "A", "--model", model,
            "--mock", "--seed", 5, "--offset", offset,
            "--base-min", 5, "--base-max", 85, "--out", out,
        ) == 0
    # merge the two panels into one file
    merged = tmp_path / "panel.csv"
    lines_a = panel_a.read_text().splitlines()
    lines_b = panel_b.read_text().splitlines()[1:]
    merged.write_text("\n".join(lines_a + lines_b) + "\n")

    agg_out = tmp_path / "agg.csv"
    assert run_cli("aggregate", "--panel", merged, "--field", "augmentation", "--out", agg_out) == 0
    rows = list(csv.DictReader(agg_out.open()))
    assert len(rows) == 12  # 6 occupations x 2 raters

    rel_out = tmp_path / "rel.json"
    assert run_cli("reliability", "--panel", merged, "--out", rel_out) == 0
    report = json.loads(rel_out.read_text())
    assert report["pairs"][0]["mean_bias"] == pytest.approx(8.6, abs=1e-3)


def test_simulate_then_oriv(tmp_path):
    sim_out = tmp_path / "sim.csv"
    assert run_cli(
        "simulate", "--n", 4000, "--beta", 0.1, "--lambda", 0.8, "--seed", 7, "--out", sim_out
    ) == 0
    reg_out = tmp_path / "reg.json"
    assert run_cli(
        "oriv", "--data", sim_out, "--outcome", "outcome",
        "--measure-a", "measure_a", "--measure-b", "measure_b", "--out", reg_out,
    ) == 0
    reg = json.loads(reg_out.read_text())
    assert reg["oriv"]["coefficients"]["measure"] == pytest.approx(0.1, abs=0.02)
    assert reg["attenuation"]["lambda_hat"] == pytest.approx(0.8, abs=0.05)


def test_simulate_grid_mode(tmp_path):
    out = tmp_path / "grid.csv"
    assert run_cli(
        "simulate", "--grid", "--n", 50, "--n-prompts", 4,
        "--shares", "0.2,0.2,0.6", "--seed", 3, "--out", out,
    ) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 200


def test_pca_command(tmp_path):
    idx = tmp_path / "idx.csv"
    lines = ["occupation_code,a,b,c"]
    for i in range(40):
        lines.append(f"o{i},{i},{2 * i + 1},{(i * 7) % 13}")
    idx.write_text("\n".join(lines) + "\n")
    out = tmp_path / "pca.json"
    loadings = tmp_path / "loadings.csv"
    assert run_cli("pca", "--indices", idx, "--out", out, "--loadings-csv", loadings) == 0
    payload = json.loads(out.read_text())
    assert payload["pca"]["variance_shares"][0] > 0.6  # a and b are collinear
    assert loadings.exists()
    header = loadings.read_text().splitlines()[0]
    assert header == "index,pc1,pc2,pc3"


def test_prompts_command(tmp_path):
    grid_out = tmp_path / "grid.csv"
    assert run_cli(
        "simulate", "--grid", "--n", 60, "--n-prompts", 3,
        "--shares", "0.5,0.2,0.3", "--seed", 4, "--out", grid_out,
    ) == 0
    out = tmp_path / "sens.json"
    assert run_cli("prompts", "--panel", grid_out, "--rater", "sim", "--out", out) == 0
    payload = json.loads(out.read_text())
    assert payload["decomposition"]["n_prompts"] == 3


def test_horserace_command(tmp_path):
    import numpy as np

    rng = np.random.default_rng(5)
    n = 500
    x1, x2 = rng.standard_normal(n), rng.standard_normal(n)
    y = x1 + x2 + rng.standard_normal(n)
    data = tmp_path / "data.csv"
    with data.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["y", "x1", "x2"])
        for row in zip(y, x1, x2):
            writer.writerow([f"{v:.6f}" for v in row])
    blocks = tmp_path / "blocks.json"
    blocks.write_text(json.dumps([{"label": "one", "regressors": ["x1"]}, {"label": "two", "regressors": ["x2"]}]))
    out = tmp_path / "race.json"
    assert run_cli(
        "horserace", "--data", data, "--outcome", "y", "--blocks", blocks, "--out", out
    ) == 0
    rows = json.loads(out.read_text())["rows"]
    assert [r["label"] for r in rows] == ["controls", "+ one", "+ two"]


def test_report_exit_codes(tmp_path):
    good = tmp_path / "good.txt"
    good.write_text(
        "simulate = true\nsim_tasks = 60\nsim_occupations = 12\nsim_n = 1000\nseed = 3\n"
    )
    out = tmp_path / "report.json"
    assert run_cli("report", "--config", good, "--out", out) == 0

    bad = tmp_path / "bad.txt"
    bad.write_text(
        "simulate = true\nsim_tasks = 60\nsim_occupations = 12\nsim_n = 1000\nseed = 3\n"
        "sim_noise_sd = 60\nsim_prompt_shift_sd = 0\n"
    )
    out_bad = tmp_path / "report_bad.json"
    assert run_cli("report", "--config", bad, "--out", out_bad) == 1  # alpha gate fails

    report = json.loads(out_bad.read_text())
    statuses = {item["name"]: item["status"] for item in report["checklist"]}
    assert statuses["reliability_metrics"] == "fail"


def test_report_markdown_and_both(tmp_path):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("simulate = true\nsim_tasks = 40\nsim_occupations = 8\nsim_n = 1000\nseed = 1\n")
    md_out = tmp_path / "report.md"
    assert run_cli("report", "--config", cfg, "--out", md_out, "--format", "markdown") == 0
    assert md_out.read_text().startswith("# Report")
    both_out = tmp_path / "r"
    assert run_cli("report", "--config", cfg, "--out", both_out, "--format", "both") == 0
    assert (tmp_path / "r.json").exists() and (tmp_path / "r.md").exists()


def test_report_byte_identical_across_runs(tmp_path):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("simulate = true\nsim_tasks = 40\nsim_occupations = 8\nsim_n = 1000\nseed = 1\n")
    o1, o2 = tmp_path / "r1.json", tmp_path / "r2.json"
    assert run_cli("report", "--config", cfg, "--out", o1) == 0
    assert run_cli("report", "--config", cfg, "--out", o2) == 0
    assert o1.read_bytes() == o2.read_bytes()


def test_error_exit_code(tmp_path):
    missing = tmp_path / "nope.csv"
    out = tmp_path / "x.csv"
    assert run_cli("aggregate", "--panel", missing, "--out", out) == 2


def test_console_entry_point(tmp_path):
    result = subprocess.run(
        [sys.executable, "-m", "latent_gauge.cli", "simulate", "--n", "100",
         "--seed", "2", "--out", str(tmp_path / "sim.csv")],
        capture_output=True,
        text=True,
    )
    assert result.returncode == 0, result.stderr
    assert (tmp_path / "sim.csv").exists()
