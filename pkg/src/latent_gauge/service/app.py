"""FastAPI application exposing the analysis pipeline over HTTP.

Every endpoint wraps one core operation behind typed request/response
models; domain errors surface as HTTP 422 with the underlying message.
The CLI talks to this app in-process by default, so local runs and a
deployed service execute exactly the same code path.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import dimensionality as dim_mod
from .. import econometrics as econ_mod
from .. import reliability as rel_mod
from .. import sensitivity as sens_mod
from .. import simulate as sim_mod
from ..errors import LatentGaugeError, PipelineStageError
from ..harness import builtin_templates, score_tasks
from ..report import report_has_failures, resolve_config, run_pipeline
from . import models as m


def create_app() -> FastAPI:
    app = FastAPI(title="latent-gauge", version="0.1.0")

    def guard(fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except PipelineStageError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        except LatentGaugeError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.get("/templates")
    def templates() -> dict:
        return {
            pid: {
                "template_text": t.template_text,
                "polarity": t.polarity,
                "response_schema": t.response_schema,
            }
            for pid, t in builtin_templates().items()
        }

    @app.post("/score", response_model=m.ScoreResponse)
    def score(req: m.ScoreRequest) -> m.ScoreResponse:
        if (req.template_id is None) == (req.template is None):
            raise HTTPException(
                status_code=422, detail="provide exactly one of template_id or template"
            )
        if req.template_id is not None:
            registry = builtin_templates()
            if req.template_id not in registry:
                raise HTTPException(
                    status_code=422, detail=f"unknown template_id {req.template_id!r}"
                )
            template = registry[req.template_id]
        else:
            template = guard(req.template.to_template)
        provider = req.mock.to_provider() if req.mock else None
        result = guard(
            score_tasks,
            [t.to_task() for t in req.tasks],
            template,
            req.provider_config(),
            provider=provider,
        )
        return m.ScoreResponse(
            panel=m.PanelModel.from_panel(result.panel),
            failures=[m.FailureModel(**vars(f)) for f in result.failures],
            provider_calls=result.provider_calls,
            cache_hits=result.cache_hits,
        )

    @app.post("/aggregate", response_model=m.AggregateResponse)
    def aggregate(req: m.AggregateRequest) -> m.AggregateResponse:
        from ..aggregate import aggregate_occupations

        panel = guard(req.panel.to_panel)
        result = guard(aggregate_occupations, panel, req.field, req.min_tasks)
        return m.AggregateResponse(
            indices=[m.OccupationIndexModel(**vars(ix)) for ix in result.indices],
            excluded=list(result.excluded),
            sparse=list(result.sparse),
            warnings=list(result.warnings),
        )

    @app.post("/reliability", response_model=m.ReliabilityResponse)
    def reliability(req: m.ReliabilityRequest) -> m.ReliabilityResponse:
        panel = guard(req.panel.to_panel)
        matrix = guard(
            rel_mod.reliability_matrix, panel, req.level, req.field, req.min_shared
        )
        payload = matrix.to_dict()
        return m.ReliabilityResponse(
            raters=payload["raters"], pairs=payload["pairs"], skipped=payload["skipped"]
        )

    @app.post("/correlation")
    def correlation(req: m.CorrelationRequest) -> dict:
        table = guard(req.table.to_table)
        return guard(dim_mod.correlation_matrix, table, req.policy).to_dict()

    @app.post("/pca")
    def pca(req: m.PcaRequest) -> dict:
        table = guard(req.table.to_table)
        return guard(dim_mod.pca, table).to_dict()

    @app.post("/prompts", response_model=m.PromptsResponse)
    def prompts(req: m.PromptsRequest) -> m.PromptsResponse:
        panel = guard(req.panel.to_panel)
        before = guard(sens_mod.prompt_rank_matrix, panel, req.rater, req.field)
        adjusted, inverted = guard(
            sens_mod.detect_and_invert,
            before,
            panel,
            req.rater,
            req.field,
            req.inverse_prompts,
        )
        after = guard(sens_mod.prompt_rank_matrix, adjusted, req.rater, req.field)
        try:
            decomposition = sens_mod.variance_decomposition(
                adjusted, req.rater, req.field
            ).to_dict()
        except LatentGaugeError:
            decomposition = None
        return m.PromptsResponse(
            rank_matrix_before=before.to_dict(),
            rank_matrix_after=after.to_dict(),
            inverted=inverted,
            decomposition=decomposition,
            panel=m.PanelModel.from_panel(adjusted),
        )

    @app.post("/ols")
    def ols(req: m.OlsRequest) -> dict:
        data = guard(req.data.to_dataset)
        return guard(
            econ_mod.ols, data, req.outcome, req.regressors, req.add_intercept
        ).to_dict()

    @app.post("/oriv")
    def oriv(req: m.OrivRequest) -> dict:
        data = guard(req.data.to_dataset)
        return guard(
            econ_mod.oriv, data, req.outcome, req.measure_a, req.measure_b, req.exogenous
        ).to_dict()

    @app.post("/attenuation")
    def attenuation(req: m.AttenuationRequest) -> dict:
        return guard(econ_mod.attenuation_factor, req.scores_a, req.scores_b).to_dict()

    @app.post("/horserace")
    def horserace(req: m.HorseRaceRequest) -> dict:
        data = guard(req.data.to_dataset)
        blocks = [(b.label, b.regressors) for b in req.blocks]
        rows = guard(econ_mod.horse_race, data, req.outcome, req.controls, blocks)
        return {"rows": [r.to_dict() for r in rows]}

    @app.post("/simulate", response_model=m.SimulateResponse)
    def simulate(req: m.SimulateRequest) -> m.SimulateResponse:
        config = guard(
            sim_mod.SimConfig,
            n=req.n,
            beta=req.beta,
            lambda_true=req.lambda_true,
            seed=req.seed,
            level_offsets=req.level_offsets,
            outcome_noise_sd=req.outcome_noise_sd,
            noise_correlation=req.noise_correlation,
        )
        panel = sim_mod.simulate_measurement(config)
        return m.SimulateResponse(
            latent=panel.latent.tolist(),
            measures={k: v.tolist() for k, v in panel.measures.items()},
            outcome=panel.outcome.tolist(),
            metadata=panel.metadata,
        )

    @app.post("/simulate/grid")
    def simulate_grid(req: m.SimulateGridRequest) -> dict:
        config = guard(
            sim_mod.SimConfig,
            n=req.n_tasks,
            beta=0.0,
            lambda_true=1.0,
            seed=req.seed,
            n_prompts=req.n_prompts,
            variance_shares=req.variance_shares,
            grid_mean=req.grid_mean,
            grid_sd=req.grid_sd,
        )
        panel = guard(sim_mod.simulate_prompt_grid, config, req.rater_id)
        return m.PanelModel.from_panel(panel).model_dump()

    @app.post("/report", response_model=m.ReportResponse)
    def report(req: m.ReportRequest) -> m.ReportResponse:
        config = guard(resolve_config, req.config)
        result = guard(run_pipeline, config)
        return m.ReportResponse(report=result, has_failures=report_has_failures(result))

    return app


app = create_app()
