"""Provider-agnostic scoring client with caching and a deterministic mock.

A prompt template holds exactly one {{task}} placeholder and declares which
JSON keys the model must return. Responses are parsed by scanning for the
first well-formed JSON object carrying the schema's keys; malformed or
out-of-range answers trigger retries and finally land in a failure manifest
instead of aborting the run. Successfully parsed bodies are cached verbatim,
one file per key, so warm reruns issue zero provider calls.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import random
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from statistics import NormalDist

from .errors import ResponseParseError, ValidationError
from .panel import ScorePanel, ScoreRecord

PLACEHOLDER = "{{task}}"
API_KEY_ENV = "LATENT_GAUGE_API_KEY"

# Condition-1 lint: templates must reference task content only, never outcomes.
OUTCOME_WORDS = ("wage", "wages", "salary", "salaries", "employment", "earnings")
_OUTCOME_RE = re.compile(r"\b(" + "|".join(OUTCOME_WORDS) + r")\b", re.IGNORECASE)

# schema -> ((json key, ScoreRecord field), ...); fields not elicited by the
# schema are filled with 0.0, which the panel metadata records.
SCHEMA_FIELDS: dict[str, tuple[tuple[str, str], ...]] = {
    "augmentation_0_100": (("augmentation", "augmentation"), ("substitution", "substitution")),
    "substitution_0_100": (("substitution", "substitution"),),
    "single_0_100": (("score", "augmentation"),),
}


@dataclass(frozen=True)
class PromptTemplate:
    prompt_id: str
    template_text: str
    polarity: str = "direct"  # inverse marks prompts measuring the negated construct
    response_schema: str = "single_0_100"

    def __post_init__(self):
        if self.template_text.count(PLACEHOLDER) != 1:
            raise ValidationError(
                f"template {self.prompt_id!r} must contain exactly one {PLACEHOLDER} placeholder"
            )
        if self.polarity not in ("direct", "inverse"):
            raise ValidationError(f"template {self.prompt_id!r}: unknown polarity {self.polarity!r}")
        if self.response_schema not in SCHEMA_FIELDS:
            raise ValidationError(
                f"template {self.prompt_id!r}: unknown response schema {self.response_schema!r}"
            )


@dataclass(frozen=True)
class ProviderConfig:
    provider_name: str
    model_name: str
    endpoint: str = ""
    max_parallel: int = 4
    max_retries: int = 3
    cache_dir: str | None = None
    timeout: float = 60.0
    backoff_base: float = 0.5

    def __post_init__(self):
        if self.max_parallel < 1:
            raise ValidationError("max_parallel must be at least 1")
        if self.max_retries < 0:
            raise ValidationError("max_retries must be nonnegative")


@dataclass(frozen=True)
class Task:
    task_id: str
    task_text: str
    occupation_code: str = ""
    weight: float = 1.0


@dataclass(frozen=True)
class RawResponse:
    """Verbatim provider output for one attempt; attempt <= max_retries + 1."""

    task_id: str
    rater_id: str
    prompt_id: str
    body: str
    attempt: int


@dataclass(frozen=True)
class FailureRecord:
    task_id: str
    attempts: int
    reason: str


@dataclass(frozen=True)
class ScoringResult:
    panel: ScorePanel
    failures: tuple[FailureRecord, ...]
    provider_calls: int
    cache_hits: int


def lint_template(template: PromptTemplate) -> tuple[str, ...]:
    """Outcome words found in the template text (empty tuple = lint passes)."""
    hits = _OUTCOME_RE.findall(template.template_text)
    return tuple(sorted({h.lower() for h in hits}))


def render_prompt(template: PromptTemplate, task_text: str) -> str:
    if not task_text or not task_text.strip():
        raise ValidationError("task text must be non-empty")
    return template.template_text.replace(PLACEHOLDER, task_text)


def parse_response(body: str, schema: str) -> tuple[float, ...]:
    """Extract the first well-formed JSON object carrying the schema's keys.

    Values must be numeric and inside [0, 100]; anything else raises
    ResponseParseError so the caller can retry.
    """
    if schema not in SCHEMA_FIELDS:
        raise ValidationError(f"unknown response schema {schema!r}")
    keys = [k for k, _ in SCHEMA_FIELDS[schema]]
    decoder = json.JSONDecoder()
    found_object = False
    for match in re.finditer(r"\{", body):
        try:
            obj, _ = decoder.raw_decode(body, match.start())
        except json.JSONDecodeError:
            continue
        if not isinstance(obj, dict):
            continue
        found_object = True
        if not all(k in obj for k in keys):
            continue
        values = []
        for k in keys:
            v = obj[k]
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(float(v)):
                raise ResponseParseError(f"key {k!r} has non-numeric value {v!r}")
            v = float(v)
            if not 0.0 <= v <= 100.0:
                raise ResponseParseError(f"key {k!r} value {v} outside [0, 100]")
            values.append(v)
        return tuple(values)
    if found_object:
        raise ResponseParseError(f"no JSON object contains the key(s) {', '.join(keys)}")
    raise ResponseParseError("no JSON object found in response body")


def cache_key(model_name: str, prompt_id: str, task_id: str, template_text: str) -> str:
    payload = "\x1f".join([model_name, prompt_id, task_id, template_text])
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def hash_unit(*parts) -> float:
    """Deterministic uniform in (0, 1) from the sha256 of the joined parts."""
    digest = hashlib.sha256("\x1f".join(str(p) for p in parts).encode("utf-8")).digest()
    return (int.from_bytes(digest[:8], "big") + 0.5) / 2.0**64


def _hash_normal(*parts) -> float:
    return NormalDist().inv_cdf(hash_unit(*parts))


class MockProvider:
    """Deterministic stand-in for a real model, with configurable biases.

    Each (task, construct) gets a stable base score hashed from the seed, so
    different "models" rate the same underlying quantity. Per-model level
    offsets emulate systematic bias, per-prompt level shifts emulate framing
    effects, and hashed gaussian noise per (task, prompt, model) emulates
    disagreement. Inverse-polarity prompts get flipped scores, like a real
    model answering a negated question. Scores are clamped to [0, 100].
    """

    def __init__(
        self,
        seed: int = 0,
        offsets: dict[str, float] | None = None,
        noise_sd: float | dict[str, float] = 0.0,
        prompt_shift_sd: float = 0.0,
        base_range: tuple[float, float] = (0.0, 100.0),
    ):
        lo, hi = base_range
        if not 0.0 <= lo < hi <= 100.0:
            raise ValidationError(f"base_range must be inside [0, 100], got {base_range}")
        self.seed = seed
        self.offsets = dict(offsets or {})
        self.noise_sd = noise_sd
        self.prompt_shift_sd = prompt_shift_sd
        self.base_range = (lo, hi)

    def _noise_sd_for(self, model_name: str) -> float:
        if isinstance(self.noise_sd, dict):
            return float(self.noise_sd.get(model_name, 0.0))
        return float(self.noise_sd)

    def _score(
        self, task_id: str, prompt_id: str, model_name: str, construct: str, polarity: str
    ) -> float:
        lo, hi = self.base_range
        score = lo + hash_unit("base", construct, task_id, self.seed) * (hi - lo)
        if self.prompt_shift_sd > 0.0:
            score += self.prompt_shift_sd * _hash_normal("shift", construct, prompt_id, self.seed)
        sd = self._noise_sd_for(model_name)
        if sd > 0.0:
            score += sd * _hash_normal(
                "noise", construct, task_id, prompt_id, model_name, self.seed
            )
        if polarity == "inverse":
            score = 100.0 - score
        score += self.offsets.get(model_name, 0.0)
        return max(0.0, min(100.0, round(score, 4)))

    def complete(
        self,
        model_name: str,
        prompt: str,
        *,
        task_id: str,
        prompt_id: str,
        schema: str,
        polarity: str = "direct",
    ) -> str:
        del prompt  # the hashed base depends on the task and prompt ids, not the wording
        payload = {}
        for key, _ in SCHEMA_FIELDS[schema]:
            construct = "substitution" if key == "substitution" else "augmentation"
            payload[key] = self._score(task_id, prompt_id, model_name, construct, polarity)
        return json.dumps(payload, sort_keys=True)


def mock_provider(
    task_id: str,
    prompt_id: str,
    model_name: str,
    seed: int,
    offset: float = 0.0,
    schema: str = "augmentation_0_100",
) -> str:
    """One-shot deterministic mock body (same inputs always give the same string)."""
    provider = MockProvider(seed=seed, offsets={model_name: offset})
    return provider.complete(
        model_name, "", task_id=task_id, prompt_id=prompt_id, schema=schema
    )


class HttpProvider:
    """POST {model, prompt, temperature: 0} to the configured endpoint.

    The endpoint should answer with JSON {"completion": "..."} (the raw model
    output); a plain-text body is accepted as a fallback. The API key is read
    from the LATENT_GAUGE_API_KEY environment variable. A custom httpx
    transport can be injected for testing.
    """

    def __init__(self, config: ProviderConfig, transport=None):
        if not config.endpoint:
            raise ValidationError("HttpProvider needs a non-empty endpoint")
        self.config = config
        self._transport = transport

    def complete(self, model_name: str, prompt: str, **_: object) -> str:
        import httpx

        headers = {}
        api_key = os.environ.get(API_KEY_ENV)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        with httpx.Client(transport=self._transport, timeout=self.config.timeout) as client:
            resp = client.post(
                self.config.endpoint,
                json={"model": model_name, "prompt": prompt, "temperature": 0},
                headers=headers,
            )
        resp.raise_for_status()
        try:
            payload = resp.json()
        except ValueError:
            return resp.text
        if isinstance(payload, dict) and "completion" in payload:
            return str(payload["completion"])
        return resp.text


def _coerce_task(item) -> Task:
    if isinstance(item, Task):
        return item
    task_id, task_text = item
    return Task(task_id=str(task_id), task_text=str(task_text))


def _record_from_values(task: Task, rater_id: str, prompt_id: str, schema: str, values) -> ScoreRecord:
    fields = {"augmentation": 0.0, "substitution": 0.0}
    for (_, target), value in zip(SCHEMA_FIELDS[schema], values):
        fields[target] = value
    return ScoreRecord(
        task_id=task.task_id,
        occupation_code=task.occupation_code,
        rater_id=rater_id,
        prompt_id=prompt_id,
        augmentation=fields["augmentation"],
        substitution=fields["substitution"],
        weight=task.weight,
    )


def score_tasks(tasks, template: PromptTemplate, provider_config: ProviderConfig, provider=None) -> ScoringResult:
    """Score every task with the template, one ScoreRecord per task.

    Results are keyed by task_id so panel content is independent of
    completion order; reruns over a warm cache bypass the provider entirely.
    Tasks whose retries are exhausted go to the failure manifest and the run
    proceeds.
    """
    tasks = [_coerce_task(t) for t in tasks]
    ids = [t.task_id for t in tasks]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate task_id in the scoring request")
    if provider is None:
        provider = HttpProvider(provider_config)
    cache_dir = Path(provider_config.cache_dir) if provider_config.cache_dir else None
    if cache_dir:
        cache_dir.mkdir(parents=True, exist_ok=True)
    schema = template.response_schema
    model = provider_config.model_name
    stats = {"calls": 0, "hits": 0}
    records: dict[str, ScoreRecord] = {}
    failures: dict[str, FailureRecord] = {}

    def handle(task: Task) -> None:
        key = cache_key(model, template.prompt_id, task.task_id, template.template_text)
        cache_file = cache_dir / f"{key}.txt" if cache_dir else None
        if cache_file is not None and cache_file.exists():
            body = cache_file.read_text()
            try:
                values = parse_response(body, schema)
            except ResponseParseError as exc:
                failures[task.task_id] = FailureRecord(task.task_id, 0, f"corrupt cache entry: {exc}")
                return
            stats["hits"] += 1
            records[task.task_id] = _record_from_values(task, model, template.prompt_id, schema, values)
            return
        prompt = render_prompt(template, task.task_text)
        jitter = random.Random(key)
        last_error = "unknown"
        for attempt in range(1, provider_config.max_retries + 2):
            try:
                stats["calls"] += 1
                response = RawResponse(
                    task_id=task.task_id,
                    rater_id=model,
                    prompt_id=template.prompt_id,
                    body=provider.complete(
                        model,
                        prompt,
                        task_id=task.task_id,
                        prompt_id=template.prompt_id,
                        schema=schema,
                        polarity=template.polarity,
                    ),
                    attempt=attempt,
                )
                values = parse_response(response.body, schema)
            except (ResponseParseError, OSError, RuntimeError, ValueError) as exc:
                last_error = f"{type(exc).__name__}: {exc}"
                if attempt <= provider_config.max_retries:
                    delay = provider_config.backoff_base * 2 ** (attempt - 1)
                    time.sleep(delay * (0.5 + jitter.random()))
                continue
            if cache_file is not None:
                cache_file.write_text(response.body)
            records[task.task_id] = _record_from_values(task, model, template.prompt_id, schema, values)
            return
        failures[task.task_id] = FailureRecord(
            task.task_id, provider_config.max_retries + 1, last_error
        )

    if provider_config.max_parallel == 1 or len(tasks) == 1:
        for t in tasks:
            handle(t)
    else:
        with ThreadPoolExecutor(max_workers=provider_config.max_parallel) as pool:
            list(pool.map(handle, tasks))

    ordered = tuple(records[tid] for tid in sorted(records))
    if not ordered:
        raise ValidationError(
            f"scoring produced no records: all {len(tasks)} task(s) failed "
            f"(first: {next(iter(failures.values())).reason if failures else 'n/a'})"
        )
    filled = sorted({"augmentation", "substitution"} - {t for _, t in SCHEMA_FIELDS[schema]})
    metadata = {
        "model_name": model,
        "prompt_id": template.prompt_id,
        "response_schema": schema,
        "polarity": template.polarity,
    }
    if filled:
        metadata["filled_fields"] = ",".join(filled) + "=0"
    panel = ScorePanel(records=ordered, metadata=metadata)
    ordered_failures = tuple(failures[tid] for tid in sorted(failures))
    return ScoringResult(
        panel=panel,
        failures=ordered_failures,
        provider_calls=stats["calls"],
        cache_hits=stats["hits"],
    )


def merge_panels(panels) -> ScorePanel:
    """Combine panels from several scoring runs into one long-form panel."""
    records: list[ScoreRecord] = []
    metadata: dict[str, str] = {}
    for p in panels:
        records.extend(p.records)
        for k, v in p.metadata.items():
            slot = f"{k}[{p.metadata.get('model_name', '?')}/{p.metadata.get('prompt_id', '?')}]"
            metadata.setdefault(slot, v)
    return ScorePanel(records=tuple(records), metadata=metadata)


def builtin_templates() -> dict[str, PromptTemplate]:
    """The four prompt framings shipped with the toolkit (D measures resistance)."""
    a = PromptTemplate(
        prompt_id="A",
        template_text=(
            "Consider the occupational task below.\n"
            "Task: {{task}}\n"
            "Rate two quantities on a 0-100 scale: how much a generative AI tool could "
            "assist a skilled person performing this task (augmentation), and how much a "
            "generative AI system could carry the task out in place of that person "
            "(substitution). Answer with a JSON object only: "
            '{"augmentation": <0-100>, "substitution": <0-100>}'
        ),
        polarity="direct",
        response_schema="augmentation_0_100",
    )
    b = PromptTemplate(
        prompt_id="B",
        template_text=(
            "Task: {{task}}\n"
            "Suppose an experienced worker starts using a capable generative AI assistant "
            "on this task every day. Estimate the productivity gain on a 0-100 scale, where "
            "0 means no gain at all and 100 means the assistant does nearly all of the work. "
            'Answer with JSON only: {"score": <0-100>}'
        ),
        polarity="direct",
        response_schema="single_0_100",
    )
    c = PromptTemplate(
        prompt_id="C",
        template_text=(
            "Task: {{task}}\n"
            "Imagine generative AI tools became unavailable tomorrow. On a 0-100 scale, how "
            "much would the output produced through this task fall for someone who had been "
            "using them? 0 means no change, 100 means the task output would collapse. "
            'Answer with JSON only: {"score": <0-100>}'
        ),
        polarity="direct",
        response_schema="single_0_100",
    )
    d = PromptTemplate(
        prompt_id="D",
        template_text=(
            "Task: {{task}}\n"
            "Rate how resistant this task is to generative AI on a 0-100 scale: 100 means it "
            "depends entirely on human capabilities that AI cannot supply, 0 means AI could "
            'handle it completely. Answer with JSON only: {"score": <0-100>}'
        ),
        polarity="inverse",
        response_schema="single_0_100",
    )
    return {t.prompt_id: t for t in (a, b, c, d)}
