"""Pydantic request/response models for the analysis service."""

from __future__ import annotations

from pydantic import BaseModel, Field

from .. import econometrics as econ_mod
from ..harness import MockProvider, PromptTemplate, ProviderConfig, Task
from ..panel import IndexTable, ScorePanel, ScoreRecord


class ScoreRecordModel(BaseModel):
    task_id: str
    occupation_code: str
    rater_id: str
    prompt_id: str
    augmentation: float
    substitution: float
    weight: float


class PanelModel(BaseModel):
    records: list[ScoreRecordModel]
    metadata: dict[str, str] = Field(default_factory=dict)

    def to_panel(self) -> ScorePanel:
        return ScorePanel(
            records=tuple(ScoreRecord(**r.model_dump()) for r in self.records),
            metadata=dict(self.metadata),
        )

    @classmethod
    def from_panel(cls, panel: ScorePanel) -> "PanelModel":
        return cls(
            records=[ScoreRecordModel(**vars(r)) for r in panel.records],
            metadata=dict(panel.metadata),
        )


class IndexTableModel(BaseModel):
    occupations: list[str]
    columns: dict[str, list[float | None]]

    def to_table(self) -> IndexTable:
        return IndexTable(
            occupations=tuple(self.occupations),
            columns={k: tuple(v) for k, v in self.columns.items()},
        )


class TaskModel(BaseModel):
    task_id: str
    task_text: str
    occupation_code: str = ""
    weight: float = 1.0

    def to_task(self) -> Task:
        return Task(**self.model_dump())


class TemplateModel(BaseModel):
    prompt_id: str
    template_text: str
    polarity: str = "direct"
    response_schema: str = "single_0_100"

    def to_template(self) -> PromptTemplate:
        return PromptTemplate(**self.model_dump())


class MockSpec(BaseModel):
    seed: int = 0
    offsets: dict[str, float] = Field(default_factory=dict)
    noise_sd: dict[str, float] | float = 0.0
    prompt_shift_sd: float = 0.0
    base_range: tuple[float, float] = (0.0, 100.0)

    def to_provider(self) -> MockProvider:
        return MockProvider(
            seed=self.seed,
            offsets=self.offsets,
            noise_sd=self.noise_sd,
            prompt_shift_sd=self.prompt_shift_sd,
            base_range=self.base_range,
        )


class ScoreRequest(BaseModel):
    tasks: list[TaskModel]
    template_id: str | None = None  # one of the built-in templates
    template: TemplateModel | None = None
    model_name: str
    endpoint: str = ""
    max_parallel: int = 4
    max_retries: int = 3
    cache_dir: str | None = None
    mock: MockSpec | None = None

    def provider_config(self) -> ProviderConfig:
        return ProviderConfig(
            provider_name="mock" if self.mock else "http",
            model_name=self.model_name,
            endpoint=self.endpoint,
            max_parallel=self.max_parallel,
            max_retries=self.max_retries,
            cache_dir=self.cache_dir,
        )


class FailureModel(BaseModel):
    task_id: str
    attempts: int
    reason: str


class ScoreResponse(BaseModel):
    panel: PanelModel
    failures: list[FailureModel]
    provider_calls: int
    cache_hits: int


class AggregateRequest(BaseModel):
    panel: PanelModel
    field: str = "augmentation"
    min_tasks: int = 1


class OccupationIndexModel(BaseModel):
    occupation_code: str
    rater_id: str
    prompt_id: str
    value_raw: float
    value_std: float
    n_tasks: int
    weight_sum: float


class AggregateResponse(BaseModel):
    indices: list[OccupationIndexModel]
    excluded: list[str]
    sparse: list[str]
    warnings: list[str]


class ReliabilityRequest(BaseModel):
    panel: PanelModel
    level: str = "task"
    field: str = "augmentation"
    min_shared: int = 3


class ReliabilityResponse(BaseModel):
    raters: list[str]
    pairs: list[dict]
    skipped: list[str]


class CorrelationRequest(BaseModel):
    table: IndexTableModel
    policy: str = "pairwise_complete"


class PcaRequest(BaseModel):
    table: IndexTableModel


class PromptsRequest(BaseModel):
    panel: PanelModel
    rater: str
    field: str = "augmentation"
    inverse_prompts: list[str] = Field(default_factory=list)


class PromptsResponse(BaseModel):
    rank_matrix_before: dict
    rank_matrix_after: dict
    inverted: list[str]
    decomposition: dict | None
    panel: PanelModel


class ColumnsModel(BaseModel):
    columns: dict[str, list[float]]
    cluster_id: list[str] | None = None

    def to_dataset(self) -> econ_mod.Dataset:
        import numpy as np

        cluster = np.asarray(self.cluster_id) if self.cluster_id is not None else None
        return econ_mod.Dataset(
            columns={k: np.asarray(v, dtype=float) for k, v in self.columns.items()},
            cluster_id=cluster,
        )


class OlsRequest(BaseModel):
    data: ColumnsModel
    outcome: str
    regressors: list[str]
    add_intercept: bool = True


class OrivRequest(BaseModel):
    data: ColumnsModel
    outcome: str
    measure_a: str
    measure_b: str
    exogenous: list[str] = Field(default_factory=list)


class AttenuationRequest(BaseModel):
    scores_a: list[float]
    scores_b: list[float]


class BlockModel(BaseModel):
    label: str
    regressors: list[str]


class HorseRaceRequest(BaseModel):
    data: ColumnsModel
    outcome: str
    controls: list[str] = Field(default_factory=list)
    blocks: list[BlockModel]


class SimulateRequest(BaseModel):
    n: int
    beta: float
    lambda_true: float
    seed: int
    level_offsets: tuple[float, float] = (0.0, 0.0)
    outcome_noise_sd: float = 0.5
    noise_correlation: float = 0.0


class SimulateResponse(BaseModel):
    latent: list[float]
    measures: dict[str, list[float]]
    outcome: list[float]
    metadata: dict[str, float]


class SimulateGridRequest(BaseModel):
    n_tasks: int
    n_prompts: int
    variance_shares: tuple[float, float, float]
    seed: int
    grid_mean: float = 50.0
    grid_sd: float = 10.0
    rater_id: str = "sim"


class ReportRequest(BaseModel):
    config: dict[str, str]


class ReportResponse(BaseModel):
    report: dict
    has_failures: bool
