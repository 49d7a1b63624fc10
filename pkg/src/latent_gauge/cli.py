"""Command-line front end: a thin client over the analysis service.

Each subcommand reads local files, posts one request to the service, and
writes the response to disk. By default the service app is mounted
in-process, so no server is needed for batch runs; --server points the
same client at a remote instance instead. Exit codes: 0 success (and no
failing report section), 1 report contains a failing section, 2 error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from pathlib import Path

import httpx

from .errors import LatentGaugeError
from .panel import format_score, write_report
from .report import parse_config_text


def make_client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=600.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient
    from .service import create_app

    return TestClient(create_app())


def _post(client: httpx.Client, path: str, payload: dict) -> dict:
    resp = client.post(path, json=payload)
    if resp.status_code != 200:
        try:
            detail = resp.json().get("detail", resp.text)
        except ValueError:
            detail = resp.text
        raise LatentGaugeError(f"{path} failed ({resp.status_code}): {detail}")
    return resp.json()


def _load_tasks_csv(path: str) -> list[dict]:
    tasks = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in ("task_id", "task_text"):
            if col not in header:
                raise LatentGaugeError(f"{path}: tasks file needs a {col!r} column")
        for row in reader:
            tasks.append(
                {
                    "task_id": row["task_id"],
                    "task_text": row["task_text"],
                    "occupation_code": row.get("occupation_code", "") or "",
                    "weight": float(row.get("weight", 1.0) or 1.0),
                }
            )
    if not tasks:
        raise LatentGaugeError(f"{path}: no tasks")
    return tasks


def _load_columns_csv(path: str) -> dict:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise LatentGaugeError(f"{path}: empty file")
        rows = list(reader)
    columns: dict[str, list[float]] = {}
    cluster = None
    for j, name in enumerate(header):
        if name == "entity_id":
            cluster = [r[j] for r in rows]
            continue
        try:
            columns[name] = [float(r[j]) for r in rows]
        except ValueError as exc:
            raise LatentGaugeError(f"{path}: column {name!r} is not numeric: {exc}") from None
    return {"columns": columns, "cluster_id": cluster}


def _load_panel_payload(path: str) -> dict:
    from .panel import load_panel

    panel = load_panel(path)
    return {
        "records": [vars(r) for r in panel.records],
        "metadata": dict(panel.metadata),
    }


def _write_json(payload: dict, out: str, format: str) -> None:
    write_report(payload, out, format=format)


def cmd_score(args, client) -> int:
    tasks = _load_tasks_csv(args.tasks)
    payload = {
        "tasks": tasks,
        "template_id": args.template,
        "model_name": args.model,
        "endpoint": args.endpoint,
        "max_parallel": args.parallel,
        "max_retries": args.retries,
        "cache_dir": args.cache,
    }
    if args.mock:
        payload["mock"] = {
            "seed": args.seed,
            "offsets": {args.model: args.offset},
            "noise_sd": args.noise_sd,
            "base_range": (args.base_min, args.base_max),
        }
    result = _post(client, "/score", payload)
    from .panel import ScorePanel, ScoreRecord, write_panel

    records = tuple(ScoreRecord(**r) for r in result["panel"]["records"])
    panel = ScorePanel(records=records, metadata=result["panel"]["metadata"])
    write_panel(panel, args.out, format=args.format if args.format != "json" else "csv")
    for failure in result["failures"]:
        print(
            f"failed task {failure['task_id']} after {failure['attempts']} attempt(s): "
            f"{failure['reason']}",
            file=sys.stderr,
        )
    print(
        f"scored {len(records)} task(s); provider_calls={result['provider_calls']} "
        f"cache_hits={result['cache_hits']} failures={len(result['failures'])}"
    )
    return 0


def cmd_aggregate(args, client) -> int:
    payload = {
        "panel": _load_panel_payload(args.panel),
        "field": args.field,
        "min_tasks": args.min_tasks,
    }
    result = _post(client, "/aggregate", payload)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["occupation_code", "rater_id", "prompt_id", "value_raw", "value_std", "n_tasks", "weight_sum"]
        )
        for ix in result["indices"]:
            writer.writerow(
                [
                    ix["occupation_code"],
                    ix["rater_id"],
                    ix["prompt_id"],
                    format_score(ix["value_raw"]),
                    format_score(ix["value_std"]),
                    ix["n_tasks"],
                    format_score(ix["weight_sum"]),
                ]
            )
    for note in result["excluded"]:
        print(f"excluded (zero weight): {note}", file=sys.stderr)
    print(f"wrote {len(result['indices'])} occupation indices to {args.out}")
    return 0


def cmd_reliability(args, client) -> int:
    payload = {
        "panel": _load_panel_payload(args.panel),
        "level": args.level,
        "field": args.field,
    }
    result = _post(client, "/reliability", payload)
    _write_json(result, args.out, args.format)
    print(f"wrote reliability matrix ({len(result['pairs'])} pair(s)) to {args.out}")
    return 0


def cmd_pca(args, client) -> int:
    from .panel import load_index_table

    table = load_index_table(args.indices)
    table_payload = {
        "occupations": list(table.occupations),
        "columns": {k: list(v) for k, v in table.columns.items()},
    }
    result = _post(client, "/pca", {"table": table_payload})
    correlation = _post(
        client, "/correlation", {"table": table_payload, "policy": args.policy}
    )
    _write_json({"pca": result, "correlation": correlation}, args.out, args.format)
    if args.loadings_csv:
        with open(args.loadings_csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            k = len(result["names"])
            writer.writerow(["index"] + [f"pc{i + 1}" for i in range(k)])
            for name, row in zip(result["names"], result["loadings"]):
                writer.writerow([name] + [format_score(v) for v in row])
    shares = ", ".join(f"{v:.1%}" for v in result["variance_shares"][:3])
    print(f"wrote PCA ({len(result['names'])} indices; leading shares {shares}) to {args.out}")
    return 0


def cmd_prompts(args, client) -> int:
    payload = {
        "panel": _load_panel_payload(args.panel),
        "rater": args.rater,
        "field": args.field,
        "inverse_prompts": [p for p in (args.inverse or "").split(",") if p],
    }
    result = _post(client, "/prompts", payload)
    out_payload = {k: v for k, v in result.items() if k != "panel"}
    _write_json(out_payload, args.out, args.format)
    inverted = ", ".join(result["inverted"]) or "none"
    print(f"wrote prompt sensitivity to {args.out} (inverted: {inverted})")
    return 0


def cmd_oriv(args, client) -> int:
    data = _load_columns_csv(args.data)
    controls = [c for c in (args.controls or "").split(",") if c]
    oriv_res = _post(
        client,
        "/oriv",
        {
            "data": data,
            "outcome": args.outcome,
            "measure_a": args.measure_a,
            "measure_b": args.measure_b,
            "exogenous": controls,
        },
    )
    ols_res = _post(
        client,
        "/ols",
        {"data": data, "outcome": args.outcome, "regressors": [args.measure_a] + controls},
    )
    att_res = _post(
        client,
        "/attenuation",
        {"scores_a": data["columns"][args.measure_a], "scores_b": data["columns"][args.measure_b]},
    )
    b_ols = ols_res["coefficients"][args.measure_a]
    b_oriv = oriv_res["coefficients"]["measure"]
    payload = {
        "ols": ols_res,
        "oriv": oriv_res,
        "attenuation": att_res,
        "oriv_ols_ratio": (b_oriv / b_ols) if b_ols else None,
    }
    _write_json(payload, args.out, args.format)
    print(
        f"OLS {b_ols:.4f} -> ORIV {b_oriv:.4f} "
        f"(first-stage F = {oriv_res['first_stage_f']:.4g}); wrote {args.out}"
    )
    return 0


def cmd_horserace(args, client) -> int:
    data = _load_columns_csv(args.data)
    blocks = json.loads(Path(args.blocks).read_text())
    controls = [c for c in (args.controls or "").split(",") if c]
    result = _post(
        client,
        "/horserace",
        {"data": data, "outcome": args.outcome, "controls": controls, "blocks": blocks},
    )
    _write_json(result, args.out, args.format)
    print(f"wrote progressive R^2 table ({len(result['rows'])} rows) to {args.out}")
    return 0


def cmd_simulate(args, client) -> int:
    if args.grid:
        shares = tuple(float(v) for v in args.shares.split(","))
        result = _post(
            client,
            "/simulate/grid",
            {
                "n_tasks": args.n,
                "n_prompts": args.n_prompts,
                "variance_shares": shares,
                "seed": args.seed,
                "grid_mean": args.grid_mean,
                "grid_sd": args.grid_sd,
            },
        )
        from .panel import ScorePanel, ScoreRecord, write_panel

        panel = ScorePanel(
            records=tuple(ScoreRecord(**r) for r in result["records"]),
            metadata=result["metadata"],
        )
        write_panel(panel, args.out)
        print(f"wrote {len(panel.records)} grid records to {args.out}")
        return 0
    result = _post(
        client,
        "/simulate",
        {
            "n": args.n,
            "beta": args.beta,
            "lambda_true": getattr(args, "lambda"),
            "seed": args.seed,
            "level_offsets": tuple(float(v) for v in args.offsets.split(",")),
            "outcome_noise_sd": args.outcome_noise_sd,
            "noise_correlation": args.noise_correlation,
        },
    )
    names = sorted(result["measures"])
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["entity_id", "latent"] + names + ["outcome"])
        digits = len(str(args.n))
        for i in range(args.n):
            row = [f"e{i:0{digits}d}", format_score(result["latent"][i])]
            row += [format_score(result["measures"][m][i]) for m in names]
            row.append(format_score(result["outcome"][i]))
            writer.writerow(row)
    realized = {k: v for k, v in result["metadata"].items() if k.startswith("lambda_realized")}
    print(f"wrote {args.n} simulated rows to {args.out}; {realized}")
    return 0


def cmd_report(args, client) -> int:
    raw = parse_config_text(Path(args.config).read_text())
    if args.seed is not None:
        raw["seed"] = str(args.seed)
    result = _post(client, "/report", {"config": raw})
    report = result["report"]
    if args.format == "both":
        base = Path(args.out)
        write_report(report, base.with_suffix(".json"), format="json")
        write_report(report, base.with_suffix(".md"), format="markdown")
    else:
        write_report(report, args.out, format=args.format)
    for item in report["checklist"]:
        print(f"[{item['status'].upper():4s}] item {item['item']} {item['name']}: {item['detail']}")
    if result["has_failures"]:
        print("report contains failing sections", file=sys.stderr)
        return 1
    return 0


def cmd_serve(args, client) -> int:
    del client
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latent-gauge",
        description="Validity toolkit for machine-generated scores",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--server", default=None, help="remote service URL (default: in-process)")
    common.add_argument("--out", default=None, help="output file path")
    common.add_argument(
        "--format", default="json", choices=["json", "markdown", "csv", "jsonl", "both"]
    )
    common.add_argument("--seed", type=int, default=None, help="seed override where applicable")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", parents=[common], help="score tasks with a prompt template")
    p.add_argument("--tasks", required=True, help="CSV with task_id, task_text[, occupation_code, weight]")
    p.add_argument("--template", required=True, help="built-in template id (A, B, C, D)")
    p.add_argument("--model", required=True)
    p.add_argument("--parallel", type=int, default=4)
    p.add_argument("--retries", type=int, default=3)
    p.add_argument("--cache", default=None, help="cache directory (one file per key)")
    p.add_argument("--endpoint", default="", help="provider endpoint URL")
    p.add_argument("--mock", action="store_true", help="use the deterministic mock provider")
    p.add_argument("--offset", type=float, default=0.0, help="mock level offset for this model")
    p.add_argument("--noise-sd", type=float, default=0.0, help="mock noise sd for this model")
    p.add_argument("--base-min", type=float, default=0.0)
    p.add_argument("--base-max", type=float, default=100.0)
    p.set_defaults(fn=cmd_score)

    p = sub.add_parser("aggregate", parents=[common], help="occupation-level weighted indices")
    p.add_argument("--panel", required=True)
    p.add_argument("--field", default="augmentation", choices=["augmentation", "substitution"])
    p.add_argument("--min-tasks", type=int, default=1)
    p.set_defaults(fn=cmd_aggregate)

    p = sub.add_parser("reliability", parents=[common], help="pairwise inter-rater agreement")
    p.add_argument("--panel", required=True)
    p.add_argument("--level", default="task", choices=["task", "occupation"])
    p.add_argument("--field", default="augmentation", choices=["augmentation", "substitution"])
    p.set_defaults(fn=cmd_reliability)

    p = sub.add_parser("pca", parents=[common], help="correlation matrix and PCA across indices")
    p.add_argument("--indices", required=True, help="CSV with occupation_code plus index columns")
    p.add_argument("--policy", default="pairwise_complete", choices=["pairwise_complete", "listwise"])
    p.add_argument("--loadings-csv", default=None, help="also write loadings for biplot tooling")
    p.set_defaults(fn=cmd_pca)

    p = sub.add_parser("prompts", parents=[common], help="prompt sensitivity for one rater")
    p.add_argument("--panel", required=True)
    p.add_argument("--rater", required=True)
    p.add_argument("--field", default="augmentation", choices=["augmentation", "substitution"])
    p.add_argument("--inverse", default="", help="comma-separated polarity-flagged prompt ids")
    p.set_defaults(fn=cmd_prompts)

    p = sub.add_parser("oriv", parents=[common], help="attenuation-corrected regression")
    p.add_argument("--data", required=True, help="CSV of numeric columns (optional entity_id)")
    p.add_argument("--outcome", required=True)
    p.add_argument("--measure-a", required=True)
    p.add_argument("--measure-b", required=True)
    p.add_argument("--controls", default="")
    p.set_defaults(fn=cmd_oriv)

    p = sub.add_parser("horserace", parents=[common], help="progressive R^2 comparison")
    p.add_argument("--data", required=True)
    p.add_argument("--outcome", required=True)
    p.add_argument("--controls", default="")
    p.add_argument("--blocks", required=True, help="JSON list of {label, regressors}")
    p.set_defaults(fn=cmd_horserace)

    p = sub.add_parser("simulate", parents=[common], help="synthetic measurement-model data")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--lambda", type=float, default=0.8, dest="lambda")
    p.add_argument("--offsets", default="0,0")
    p.add_argument("--outcome-noise-sd", type=float, default=0.5)
    p.add_argument("--noise-correlation", type=float, default=0.0)
    p.add_argument("--grid", action="store_true", help="emit a task x prompt score panel instead")
    p.add_argument("--n-prompts", type=int, default=4)
    p.add_argument("--shares", default="0.14,0.22,0.64")
    p.add_argument("--grid-mean", type=float, default=50.0)
    p.add_argument("--grid-sd", type=float, default=10.0)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("report", parents=[common], help="run the full validity pipeline")
    p.add_argument("--config", required=True, help="flat key = value config file")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("serve", parents=[common], help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(fn=cmd_serve)
    return parser


NEEDS_OUT = {"score", "aggregate", "reliability", "pca", "prompts", "oriv", "horserace", "simulate", "report"}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command in NEEDS_OUT and not args.out:
        parser.error(f"{args.command} requires --out")
    if args.command == "simulate" and args.seed is None:
        args.seed = 7
    if args.command == "score" and args.seed is None:
        args.seed = 0
    client = None
    try:
        if args.command != "serve":
            client = make_client(args.server)
        return args.fn(args, client)
    except (LatentGaugeError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    finally:
        if client is not None:
            client.close()


if __name__ == "__main__":
    sys.exit(main())
