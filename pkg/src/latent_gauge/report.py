"""Pipeline orchestration and the practitioner validity report.

run_pipeline chains ingest (or synthetic generation), aggregation,
reliability, dimensionality, prompt sensitivity, and the attenuation /
mutual-instrument regressions, then renders a seven-item checklist: each
item carries a pass / warn / fail status and the evidence behind it.
Sections that cannot be evaluated are emitted empty with a warn status,
never omitted, and the same config and inputs always produce a
byte-identical report.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, fields as dc_fields

import numpy as np

from . import aggregate as agg_mod
from . import dimensionality as dim_mod
from . import econometrics as econ_mod
from . import harness as harness_mod
from . import reliability as rel_mod
from . import sensitivity as sens_mod
from . import simulate as sim_mod
from .errors import (
    DegenerateDataError,
    LatentGaugeError,
    PipelineStageError,
    ValidationError,
)
from .panel import IndexTable, ScorePanel, ScoreRecord, load_index_table, load_panel

CHECKLIST_NAMES = (
    "semantic_prompts",
    "two_models",
    "reliability_metrics",
    "standardize_scores",
    "oriv_correction",
    "prompt_sensitivity",
    "external_validation",
)


@dataclass(frozen=True)
class PipelineConfig:
    panel: str = ""
    regression_data: str = ""
    indices: str = ""
    simulate: bool = False
    seed: int = 7
    field: str = "augmentation"
    alpha_threshold: float = 0.7
    invariance_threshold: float = 0.7
    overlap_k: int = 10
    inverse_prompts: tuple[str, ...] | None = None  # None = use built-in polarity flags
    outcome: str = "outcome"
    measure_a: str = "measure_a"
    measure_b: str = "measure_b"
    controls: tuple[str, ...] = ()
    sim_tasks: int = 200
    sim_occupations: int = 20
    sim_raters: tuple[str, ...] = ("model_a", "model_b")
    sim_offsets: tuple[float, ...] = (0.0, 8.6)
    sim_noise_sd: float = 6.0
    sim_prompt_shift_sd: float = 5.0
    sim_templates: tuple[str, ...] = ("A", "B", "C", "D")
    sim_n: int = 20000
    sim_beta: float = 0.10
    sim_lambda: float = 0.8


_PARSERS = {
    "panel": str,
    "regression_data": str,
    "indices": str,
    "simulate": "bool",
    "seed": int,
    "field": "field",
    "alpha_threshold": float,
    "invariance_threshold": float,
    "overlap_k": int,
    "inverse_prompts": "strlist",
    "outcome": str,
    "measure_a": str,
    "measure_b": str,
    "controls": "strlist",
    "sim_tasks": int,
    "sim_occupations": int,
    "sim_raters": "strlist",
    "sim_offsets": "floatlist",
    "sim_noise_sd": float,
    "sim_prompt_shift_sd": float,
    "sim_templates": "strlist",
    "sim_n": int,
    "sim_beta": float,
    "sim_lambda": float,
}


def parse_config_text(text: str) -> dict[str, str]:
    """Parse the flat `key = value` config format; '#' starts a comment line."""
    raw: dict[str, str] = {}
    errors = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            errors.append(f"line {lineno}: expected 'key = value', got {stripped!r}")
            continue
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if key in raw:
            errors.append(f"line {lineno}: duplicate key {key!r}")
            continue
        raw[key] = value
    if errors:
        raise ValidationError("config parse errors:\n" + "\n".join(errors))
    return raw


def resolve_config(raw: dict[str, str]) -> PipelineConfig:
    """Validate every key and value, reporting all violations at once."""
    errors = []
    values: dict[str, object] = {}
    for key, value in sorted(raw.items()):
        if key not in _PARSERS:
            errors.append(f"unknown config key {key!r}")
            continue
        kind = _PARSERS[key]
        try:
            if kind is str:
                values[key] = value
            elif kind is int:
                values[key] = int(value)
            elif kind is float:
                values[key] = float(value)
            elif kind == "bool":
                if value.lower() not in ("true", "false"):
                    raise ValueError(f"expected true or false, got {value!r}")
                values[key] = value.lower() == "true"
            elif kind == "strlist":
                values[key] = tuple(v.strip() for v in value.split(",") if v.strip())
            elif kind == "floatlist":
                values[key] = tuple(float(v) for v in value.split(",") if v.strip())
            elif kind == "field":
                if value not in ("augmentation", "substitution"):
                    raise ValueError(f"must be augmentation or substitution, got {value!r}")
                values[key] = value
        except ValueError as exc:
            errors.append(f"config key {key!r}: {exc}")
    config = None
    if not errors:
        config = PipelineConfig(**values)
        if not config.simulate and not config.panel:
            errors.append("config must set panel=<file> or simulate=true")
        if config.simulate and len(config.sim_offsets) != len(config.sim_raters):
            errors.append(
                f"sim_offsets has {len(config.sim_offsets)} entries for "
                f"{len(config.sim_raters)} raters"
            )
        if not 0.0 < config.sim_lambda <= 1.0:
            errors.append(f"sim_lambda must be in (0, 1], got {config.sim_lambda}")
        if config.overlap_k <= 0:
            errors.append(f"overlap_k must be positive, got {config.overlap_k}")
    if errors:
        raise ValidationError("config violations:\n" + "\n".join(errors))
    return config


def config_to_dict(config: PipelineConfig) -> dict:
    out = {}
    for f in dc_fields(config):
        v = getattr(config, f.name)
        if isinstance(v, tuple):
            v = list(v)
        out[f.name] = v
    return out


def _synthetic_panel(config: PipelineConfig) -> ScorePanel:
    """Deterministic multi-rater multi-prompt panel via the mock provider."""
    templates = harness_mod.builtin_templates()
    unknown = [t for t in config.sim_templates if t not in templates]
    if unknown:
        raise ValidationError(f"unknown sim_templates id(s): {', '.join(unknown)}")
    digits = max(4, len(str(config.sim_tasks)))
    tasks = []
    for i in range(config.sim_tasks):
        occ = f"occ{i % config.sim_occupations:03d}"
        weight = 0.5 + 1.5 * harness_mod.hash_unit("weight", i, config.seed)
        tasks.append(
            harness_mod.Task(
                task_id=f"task{i:0{digits}d}",
                task_text=f"synthetic task {i}",
                occupation_code=occ,
                weight=round(weight, 4),
            )
        )
    panels = []
    for rater, offset in zip(config.sim_raters, config.sim_offsets):
        provider = harness_mod.MockProvider(
            seed=config.seed,
            offsets={rater: offset},
            noise_sd=config.sim_noise_sd,
            prompt_shift_sd=config.sim_prompt_shift_sd,
            base_range=(10.0, 90.0),
        )
        for tid in config.sim_templates:
            pc = harness_mod.ProviderConfig(
                provider_name="mock", model_name=rater, max_parallel=1, max_retries=0
            )
            panels.append(
                harness_mod.score_tasks(tasks, templates[tid], pc, provider=provider).panel
            )
    return harness_mod.merge_panels(panels)


def _load_regression_columns(path: str) -> dict[str, np.ndarray]:
    import csv as _csv

    with open(path, newline="") as fh:
        reader = _csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    columns: dict[str, list[float]] = {}
    for j, name in enumerate(header):
        if name == "entity_id":
            continue
        try:
            columns[name] = [float(r[j]) for r in rows]
        except ValueError as exc:
            raise ValidationError(f"{path}: column {name!r} is not numeric: {exc}") from None
    return {name: np.asarray(col) for name, col in columns.items()}


def _stage(name: str, fn):
    try:
        return fn()
    except LatentGaugeError as exc:
        if isinstance(exc, PipelineStageError):
            raise
        raise PipelineStageError(name, exc) from exc


def _status_counts(items) -> dict[str, int]:
    counts = {"pass": 0, "warn": 0, "fail": 0}
    for it in items:
        counts[it["status"]] += 1
    return counts


def _monotonicity_probe(panel: ScorePanel, field: str) -> dict:
    """Bump one task score and verify its occupation index moves weakly the same way."""
    before = agg_mod.aggregate_occupations(panel, field)
    target = None
    for rec in panel.records:
        if rec.weight > 0 and getattr(rec, field) <= 99.0:
            target = rec
            break
    if target is None:
        return {"status": "warn", "detail": "no score can be raised; probe not evaluable"}
    bumped = []
    for rec in panel.records:
        if rec is target:
            kw = {
                "task_id": rec.task_id,
                "occupation_code": rec.occupation_code,
                "rater_id": rec.rater_id,
                "prompt_id": rec.prompt_id,
                "augmentation": rec.augmentation,
                "substitution": rec.substitution,
                "weight": rec.weight,
            }
            kw[field] = getattr(rec, field) + 1.0
            bumped.append(ScoreRecord(**kw))
        else:
            bumped.append(rec)
    after = agg_mod.aggregate_occupations(ScorePanel(tuple(bumped), dict(panel.metadata)), field)
    key = (target.rater_id, target.prompt_id, target.occupation_code)

    def value(result):
        for ix in result.indices:
            if (ix.rater_id, ix.prompt_id, ix.occupation_code) == key:
                return ix.value_raw
        return None

    v0, v1 = value(before), value(after)
    if v0 is None or v1 is None:
        return {"status": "warn", "detail": "probed occupation missing after bump"}
    ok = v1 >= v0 - 1e-12
    return {
        "status": "pass" if ok else "fail",
        "detail": (
            f"raising one task score by +1 moved occupation {key[2]!r} "
            f"index by {v1 - v0:+.6g}"
        ),
    }


def _standardization_check(agg: agg_mod.AggregationResult) -> dict:
    groups: dict[tuple[str, str], list[float]] = {}
    for ix in agg.indices:
        groups.setdefault((ix.rater_id, ix.prompt_id), []).append(ix.value_std)
    worst = 0.0
    degenerate = 0
    for values in groups.values():
        arr = np.asarray(values)
        if np.all(arr == 0.0):
            degenerate += 1
            continue
        worst = max(worst, abs(float(arr.mean())), abs(float(arr.var()) - 1.0))
    status = "pass" if worst <= 1e-9 else "fail"
    detail = f"max |mean| / |var-1| deviation of standardized indices: {worst:.3g}"
    if degenerate:
        status = "warn" if status == "pass" else status
        detail += f"; {degenerate} degenerate group(s) carry value_std = 0"
    return {"status": status, "detail": detail, "max_deviation": worst}


def _primary_index(agg: agg_mod.AggregationResult) -> tuple[str, str, dict[str, float]]:
    combos = sorted({(ix.rater_id, ix.prompt_id) for ix in agg.indices})
    rater, prompt = combos[0]
    return rater, prompt, agg.by_occupation(rater, prompt)


def _external_section(
    table: IndexTable | None, primary: dict[str, float], label: str
) -> dict:
    if table is None:
        return {
            "status": "warn",
            "detail": "skipped: no external index provided",
            "correlations": [],
            "strongest_index": None,
            "strongest_r": None,
        }
    correlations = []
    for name in sorted(table.columns):
        col = table.columns[name]
        shared_a, shared_b = [], []
        for occ, v in zip(table.occupations, col):
            if v is not None and occ in primary:
                shared_a.append(primary[occ])
                shared_b.append(v)
        if len(shared_a) < 3:
            correlations.append({"index": name, "r": None, "n": len(shared_a)})
            continue
        try:
            r = rel_mod.pearson((shared_a, shared_b))
        except DegenerateDataError:
            correlations.append({"index": name, "r": None, "n": len(shared_a)})
            continue
        correlations.append({"index": name, "r": r, "n": len(shared_a)})
    usable = [c for c in correlations if c["r"] is not None]
    if not usable:
        return {
            "status": "warn",
            "detail": "external indices share too few occupations with the panel",
            "correlations": correlations,
            "strongest_index": None,
            "strongest_r": None,
        }
    strongest = max(usable, key=lambda c: (abs(c["r"]), c["index"]))
    return {
        "status": "pass",
        "detail": (
            f"strongest external correlate of {label}: "
            f"{strongest['index']} (r = {strongest['r']:.3f}, n = {strongest['n']})"
        ),
        "correlations": correlations,
        "strongest_index": strongest["index"],
        "strongest_r": strongest["r"],
    }


def run_pipeline(config: PipelineConfig) -> dict:
    """Execute the full pipeline and return the validity report as a dict."""
    warnings: list[str] = []

    def ingest():
        if config.simulate:
            panel = _synthetic_panel(config)
        else:
            panel = load_panel(config.panel)
        table = load_index_table(config.indices) if config.indices else None
        if config.simulate:
            sim = sim_mod.simulate_measurement(
                sim_mod.SimConfig(
                    n=config.sim_n,
                    beta=config.sim_beta,
                    lambda_true=config.sim_lambda,
                    seed=config.seed,
                )
            )
            reg_cols = {
                config.outcome: sim.outcome,
                config.measure_a: sim.measures["measure_a"],
                config.measure_b: sim.measures["measure_b"],
            }
        elif config.regression_data:
            reg_cols = _load_regression_columns(config.regression_data)
        else:
            reg_cols = None
        return panel, table, reg_cols

    panel, index_table, reg_cols = _stage("ingest", ingest)

    # Prompt polarity flags: explicit config wins, else built-in inverse templates.
    if config.inverse_prompts is not None:
        inverse_ids = tuple(config.inverse_prompts)
    else:
        builtin = harness_mod.builtin_templates()
        inverse_ids = tuple(
            pid for pid in panel.prompts() if pid in builtin and builtin[pid].polarity == "inverse"
        )

    def sensitivity_stage():
        out = {"raters": {}, "inverse_prompts": list(inverse_ids)}
        adjusted = panel
        if len(panel.prompts()) < 2:
            out["status"] = "warn"
            out["detail"] = "fewer than 2 prompt variants; sensitivity not evaluable"
            return out, adjusted
        # Polarity-flagged prompts are flipped once, up front; the per-rater
        # pass below then only auto-detects unflagged inversions (each flip
        # applies panel-wide, so later raters see already-corrected data).
        flagged = [pid for pid in sorted(inverse_ids) if pid in panel.prompts()]
        if flagged:
            adjusted = sens_mod.invert_prompts(adjusted, flagged, field=config.field)
        for rater in panel.raters():
            try:
                matrix = sens_mod.prompt_rank_matrix(adjusted, rater, field=config.field)
                adjusted, inverted = sens_mod.detect_and_invert(
                    matrix, adjusted, rater, field=config.field
                )
                entry = {
                    "rank_matrix_before": matrix.to_dict(),
                    "inverted": (flagged + inverted) if rater == panel.raters()[0] else inverted,
                    "rank_matrix_after": sens_mod.prompt_rank_matrix(
                        adjusted, rater, field=config.field
                    ).to_dict(),
                }
            except (ValidationError, DegenerateDataError) as exc:
                out["raters"][rater] = {"error": str(exc)}
                warnings.append(f"prompt analysis for rater {rater!r}: {exc}")
                continue
            try:
                decomp = sens_mod.variance_decomposition(adjusted, rater, field=config.field)
                entry["decomposition"] = decomp.to_dict()
            except (ValidationError, DegenerateDataError) as exc:
                entry["decomposition"] = None
                warnings.append(f"variance decomposition for rater {rater!r}: {exc}")
            out["raters"][rater] = entry
        out["status"] = "pass"
        out["detail"] = f"{len(panel.prompts())} prompt variants analyzed"
        return out, adjusted

    sensitivity_section, adjusted_panel = _stage("sensitivity", sensitivity_stage)

    aggregation = _stage(
        "aggregate", lambda: agg_mod.aggregate_occupations(adjusted_panel, config.field)
    )
    for note in aggregation.warnings:
        warnings.append(f"aggregate: {note}")
    rater0, prompt0, primary = _primary_index(aggregation)

    def reliability_stage():
        raters = adjusted_panel.raters()
        if len(raters) < 2:
            return {
                "status": "warn",
                "detail": "not evaluable: panel has a single rater",
                "task_level": None,
                "occupation_level": None,
            }
        task_m = rel_mod.reliability_matrix(adjusted_panel, level="task", field=config.field)
        occ_m = rel_mod.reliability_matrix(
            adjusted_panel, level="occupation", field=config.field
        )
        return {
            "status": "pass",
            "detail": f"{len(task_m.reports)} rater pair(s) compared",
            "task_level": task_m.to_dict(),
            "occupation_level": occ_m.to_dict(),
        }

    reliability_section = _stage("reliability", reliability_stage)

    def invariance_stage():
        if reliability_section["occupation_level"] is None:
            return {
                "status": "warn",
                "detail": "not evaluable: needs at least two raters",
                "pairs": [],
                "spearman_threshold": config.invariance_threshold,
            }
        pairs_out = []
        all_pass = True
        raters = adjusted_panel.raters()
        for i, ra in enumerate(raters):
            for rb in raters[i + 1 :]:
                pairs = rel_mod.paired_scores(
                    adjusted_panel, ra, rb, field=config.field, level="occupation"
                )
                # Rank occupations on the primary prompt only.
                pairs = [p for p in pairs if p.unit_id.endswith(f"|{prompt0}")]
                if len(pairs) < 3:
                    continue
                rho = rel_mod.spearman(pairs)
                index_a = {p.unit_id: p.a for p in pairs}
                index_b = {p.unit_id: p.b for p in pairs}
                k = min(config.overlap_k, (len(pairs) - 1) // 2)
                if k >= 1:
                    top, bottom = rel_mod.top_bottom_overlap(index_a, index_b, k)
                else:
                    top = bottom = None
                ok = rho >= config.invariance_threshold
                all_pass = all_pass and ok
                pairs_out.append(
                    {
                        "rater_a": ra,
                        "rater_b": rb,
                        "spearman_occupation": rho,
                        "meets_threshold": ok,
                        "top_overlap": top,
                        "bottom_overlap": bottom,
                        "overlap_k": k,
                    }
                )
        if not pairs_out:
            return {
                "status": "warn",
                "detail": "not evaluable: no rater pair shares 3+ occupations",
                "pairs": [],
                "spearman_threshold": config.invariance_threshold,
            }
        status = "pass" if all_pass else "warn"
        return {
            "status": status,
            "detail": (
                f"occupation-level rank agreement vs threshold {config.invariance_threshold}"
            ),
            "pairs": pairs_out,
            "spearman_threshold": config.invariance_threshold,
        }

    invariance_section = _stage("invariance", invariance_stage)

    def pca_stage():
        occupations = adjusted_panel.occupations()
        combos = sorted({(ix.rater_id, ix.prompt_id) for ix in aggregation.indices})
        columns: dict[str, tuple[float | None, ...]] = {}
        for rater, prompt in combos:
            lookup = aggregation.by_occupation(rater, prompt)
            columns[f"{rater}|{prompt}"] = tuple(lookup.get(o) for o in occupations)
        if index_table is not None:
            ext_lookup = {
                name: dict(zip(index_table.occupations, col))
                for name, col in index_table.columns.items()
            }
            for name in sorted(ext_lookup):
                columns[f"ext|{name}"] = tuple(ext_lookup[name].get(o) for o in occupations)
        table = IndexTable(occupations=occupations, columns=columns)
        try:
            corr = dim_mod.correlation_matrix(table, policy="pairwise_complete")
            result = dim_mod.pca(table)
        except (ValidationError, DegenerateDataError) as exc:
            return {"status": "warn", "detail": f"skipped: {exc}", "pca": None, "correlation": None}
        return {
            "status": "pass",
            "detail": (
                f"{len(columns)} index column(s) over {result.n_obs_used} complete occupations"
            ),
            "pca": result.to_dict(),
            "correlation": corr.to_dict(),
        }

    pca_section = _stage("pca", pca_stage)

    def econometrics_stage():
        if reg_cols is None:
            return {
                "status": "warn",
                "detail": "skipped: no regression data provided",
                "attenuation": None,
                "ols": None,
                "oriv": None,
                "oriv_ols_ratio": None,
            }
        missing = [
            c for c in (config.outcome, config.measure_a, config.measure_b) if c not in reg_cols
        ]
        if missing:
            raise ValidationError(f"regression data lacks column(s): {', '.join(missing)}")
        data = econ_mod.Dataset(columns=reg_cols)
        att = econ_mod.attenuation_factor(
            reg_cols[config.measure_a], reg_cols[config.measure_b]
        )
        controls = list(config.controls)
        fit_ols = econ_mod.ols(data, config.outcome, [config.measure_a] + controls)
        fit_oriv = econ_mod.oriv(
            data, config.outcome, config.measure_a, config.measure_b, exogenous=controls
        )
        b_ols = fit_ols.coefficients[config.measure_a]
        b_oriv = fit_oriv.coefficients["measure"]
        ratio = b_oriv / b_ols if b_ols != 0 else None
        return {
            "status": "pass",
            "detail": (
                f"lambda_hat = {att.lambda_hat:.4f}; OLS {b_ols:.4f} -> ORIV {b_oriv:.4f}"
            ),
            "attenuation": att.to_dict(),
            "ols": fit_ols.to_dict(),
            "oriv": fit_oriv.to_dict(),
            "oriv_ols_ratio": ratio,
        }

    econ_section = _stage("econometrics", econometrics_stage)

    def lint_stage():
        templates = harness_mod.builtin_templates()
        rows = []
        offending = set()
        for pid in sorted(templates):
            hits = harness_mod.lint_template(templates[pid])
            offending.update(hits)
            rows.append({"prompt_id": pid, "offending_terms": list(hits)})
        unknown_prompts = sorted(set(adjusted_panel.prompts()) - set(templates))
        detail = "all shipped templates reference semantic content only"
        if offending:
            detail = f"outcome terms found: {', '.join(sorted(offending))}"
        if unknown_prompts:
            detail += f"; template text unavailable for panel prompt(s): {', '.join(unknown_prompts)}"
        return {
            "status": "warn" if offending else "pass",
            "detail": detail,
            "templates": rows,
        }

    lint_section = _stage("lint", lint_stage)

    monotonicity_section = _stage(
        "monotonicity", lambda: _monotonicity_probe(adjusted_panel, config.field)
    )
    standardize_section = _standardization_check(aggregation)
    convergent_section = _external_section(index_table, primary, f"{rater0}|{prompt0}")

    # Seven-item practitioner checklist.
    items = []
    items.append(
        {
            "item": 1,
            "name": CHECKLIST_NAMES[0],
            "status": lint_section["status"],
            "detail": lint_section["detail"],
        }
    )
    n_raters = len(adjusted_panel.raters())
    items.append(
        {
            "item": 2,
            "name": CHECKLIST_NAMES[1],
            "status": "pass" if n_raters >= 2 else "warn",
            "detail": (
                f"{n_raters} rater(s) in panel"
                + ("" if n_raters >= 2 else "; not evaluable: use at least two models")
            ),
        }
    )
    alphas = []
    if reliability_section["task_level"]:
        alphas = [
            (p["rater_a"], p["rater_b"], p["alpha_mean_adjusted"], p["spearman_rho"])
            for p in reliability_section["task_level"]["pairs"]
        ]
    if not alphas:
        items.append(
            {
                "item": 3,
                "name": CHECKLIST_NAMES[2],
                "status": "warn",
                "detail": "not evaluable: no comparable rater pair",
            }
        )
    else:
        worst = min(a for _, _, a, _ in alphas)
        ok = worst >= config.alpha_threshold
        parts = [f"{a}<->{b}: alpha={al:.3f}, rho={rho:.3f}" for a, b, al, rho in alphas]
        items.append(
            {
                "item": 3,
                "name": CHECKLIST_NAMES[2],
                "status": "pass" if ok else "fail",
                "detail": (
                    f"threshold alpha >= {config.alpha_threshold}: " + "; ".join(parts)
                ),
            }
        )
    items.append(
        {
            "item": 4,
            "name": CHECKLIST_NAMES[3],
            "status": standardize_section["status"],
            "detail": standardize_section["detail"],
        }
    )
    items.append(
        {
            "item": 5,
            "name": CHECKLIST_NAMES[4],
            "status": "pass" if econ_section["oriv"] else "warn",
            "detail": econ_section["detail"],
        }
    )
    n_prompts = len(adjusted_panel.prompts())
    if n_prompts >= 3 and sensitivity_section.get("status") == "pass":
        sens_status, sens_detail = "pass", f"{n_prompts} prompt variants decomposed"
    elif n_prompts == 2:
        sens_status, sens_detail = "warn", "only 2 prompt variants; protocol asks for 3+"
    else:
        sens_status = "warn" if n_prompts < 2 else sensitivity_section.get("status", "warn")
        sens_detail = sensitivity_section.get("detail", "sensitivity not evaluable")
    items.append(
        {
            "item": 6,
            "name": CHECKLIST_NAMES[5],
            "status": sens_status,
            "detail": sens_detail,
        }
    )
    items.append(
        {
            "item": 7,
            "name": CHECKLIST_NAMES[6],
            "status": convergent_section["status"],
            "detail": convergent_section["detail"],
        }
    )

    config_echo = config_to_dict(config)
    digest = hashlib.sha256(
        json.dumps(config_echo, sort_keys=True).encode("utf-8")
    ).hexdigest()

    report = {
        "schema_version": "1",
        "tool": "latent-gauge",
        "config": config_echo,
        "config_digest": digest,
        "checklist": items,
        "status_counts": _status_counts(items),
        "condition1_lint": lint_section,
        "condition2_convergent": convergent_section,
        "condition3_monotonicity": monotonicity_section,
        "condition4_invariance": invariance_section,
        "reliability": reliability_section,
        "pca": pca_section,
        "sensitivity": sensitivity_section,
        "econometrics": econ_section,
        "aggregation": {
            "excluded": list(aggregation.excluded),
            "sparse": list(aggregation.sparse),
            "degenerate_occupations": list(adjusted_panel.degenerate_occupations()),
            "warnings": list(aggregation.warnings),
        },
        "warnings": sorted(warnings),
    }
    return report


def report_has_failures(report: dict) -> bool:
    return any(item["status"] == "fail" for item in report.get("checklist", []))
