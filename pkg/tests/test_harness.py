import json

import pytest

from latent_gauge.errors import ResponseParseError, ValidationError
from latent_gauge.harness import (
    MockProvider,
    PromptTemplate,
    ProviderConfig,
    Task,
    builtin_templates,
    cache_key,
    lint_template,
    merge_panels,
    mock_provider,
    parse_response,
    render_prompt,
    score_tasks,
)
from latent_gauge.panel import write_panel


def make_tasks(n, occ_every=5):
    return [
        Task(task_id=f"t{i:04d}", task_text=f"inspect widget {i}", occupation_code=f"o{i % occ_every}")
        for i in range(n)
    ]


def mock_config(model="m1", **kw):
    return ProviderConfig(provider_name="mock", model_name=model, max_retries=0, **kw)


def test_render_substitutes_placeholder():
    t = PromptTemplate("x", "Rate: {{task}}", response_schema="single_0_100")
    assert render_prompt(t, "Draft memos") == "Rate: Draft memos"


def test_template_requires_exactly_one_placeholder():
    with pytest.raises(ValidationError, match="exactly one"):
        PromptTemplate("x", "no placeholder here")
    with pytest.raises(ValidationError, match="exactly one"):
        PromptTemplate("x", "{{task}} and {{task}}")


def test_render_rejects_empty_task():
    t = PromptTemplate("x", "Rate: {{task}}")
    with pytest.raises(ValidationError, match="non-empty"):
        render_prompt(t, "   ")


def test_lint_flags_outcome_words():
    t = PromptTemplate("bad", "How does {{task}} affect the wage of a worker?")
    assert lint_template(t) == ("wage",)
    clean = PromptTemplate("ok", "Rate {{task}} please.")
    assert lint_template(clean) == ()


def test_builtin_templates_pass_exogeneity_lint():
    registry = builtin_templates()
    assert set(registry) == {"A", "B", "C", "D"}
    for template in registry.values():
        assert lint_template(template) == ()
    assert registry["D"].polarity == "inverse"
    assert registry["A"].response_schema == "augmentation_0_100"


def test_parse_plain_and_enveloped_json():
    body = '{"augmentation": 72, "substitution": 31}'
    assert parse_response(body, "augmentation_0_100") == (72.0, 31.0)
    enveloped = 'Sure! {"augmentation": 72, "substitution": 31} hope this helps'
    assert parse_response(enveloped, "augmentation_0_100") == (72.0, 31.0)


def test_parse_skips_objects_without_keys():
    body = '{"note": "hi"} then {"score": 55.5}'
    assert parse_response(body, "single_0_100") == (55.5,)


def test_parse_range_error():
    with pytest.raises(ResponseParseError, match=r"150.*\[0, 100\]"):
        parse_response('{"augmentation": 150, "substitution": 31}', "augmentation_0_100")


def test_parse_missing_key_and_no_json():
    with pytest.raises(ResponseParseError, match="no JSON object contains"):
        parse_response('{"augmentation": 10}', "augmentation_0_100")
    with pytest.raises(ResponseParseError, match="no JSON object found"):
        parse_response("plain text only", "single_0_100")


def test_mock_provider_deterministic():
    body1 = mock_provider("t1", "p1", "m1", seed=3)
    body2 = mock_provider("t1", "p1", "m1", seed=3)
    assert body1 == body2
    assert mock_provider("t1", "p1", "m1", seed=4) != body1


def test_mock_offset_shifts_scores():
    base = json.loads(mock_provider("t9", "p1", "m", seed=0))
    shifted = json.loads(mock_provider("t9", "p1", "m", seed=0, offset=8.6))
    for key in base:
        assert shifted[key] == pytest.approx(min(100.0, base[key] + 8.6), abs=1e-9)


def test_mock_different_tasks_differ():
    bodies = {mock_provider(f"t{i}", "p1", "m", seed=0) for i in range(20)}
    assert len(bodies) > 15


def test_score_tasks_deterministic_and_order_independent(tmp_path):
    tasks = make_tasks(50)
    template = builtin_templates()["A"]
    provider = MockProvider(seed=11)
    r1 = score_tasks(tasks, template, mock_config(), provider=provider)
    r2 = score_tasks(list(reversed(tasks)), template, mock_config(), provider=provider)
    assert r1.panel.records == r2.panel.records
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_panel(r1.panel, p1)
    write_panel(r2.panel, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_warm_cache_bypasses_provider(tmp_path):
    tasks = make_tasks(20)
    template = builtin_templates()["A"]
    config = mock_config(cache_dir=str(tmp_path / "cache"))
    cold = score_tasks(tasks, template, config, provider=MockProvider(seed=1))

    class ExplodingProvider:
        def complete(self, *a, **k):
            raise AssertionError("provider must not be called on a warm cache")

    warm = score_tasks(tasks, template, config, provider=ExplodingProvider())
    assert cold.provider_calls == 20 and cold.cache_hits == 0
    assert warm.provider_calls == 0 and warm.cache_hits == 20
    assert warm.panel.records == cold.panel.records


def test_failures_collected_run_proceeds():
    tasks = make_tasks(10)
    good = MockProvider(seed=2)

    class FlakyProvider:
        def complete(self, model_name, prompt, **kw):
            if kw["task_id"] == "t0003":
                return "garbage with no json"
            return good.complete(model_name, prompt, **kw)

    result = score_tasks(tasks, builtin_templates()["A"], mock_config(), provider=FlakyProvider())
    assert len(result.panel.records) == 9
    assert len(result.failures) == 1
    assert result.failures[0].task_id == "t0003"
    assert result.failures[0].attempts == 1  # max_retries=0 -> single attempt


def test_retry_then_success():
    tasks = [Task("t1", "text")]
    calls = {"n": 0}
    good = MockProvider(seed=2)

    class EventuallyFine:
        def complete(self, model_name, prompt, **kw):
            calls["n"] += 1
            if calls["n"] < 3:
                return "not json"
            return good.complete(model_name, prompt, **kw)

    config = ProviderConfig(
        provider_name="mock", model_name="m1", max_retries=3, backoff_base=0.0
    )
    result = score_tasks(tasks, builtin_templates()["A"], config, provider=EventuallyFine())
    assert calls["n"] == 3
    assert len(result.panel.records) == 1
    assert not result.failures


def test_single_schema_fills_other_field_with_zero():
    result = score_tasks(
        make_tasks(3), builtin_templates()["B"], mock_config(), provider=MockProvider(seed=5)
    )
    assert all(r.substitution == 0.0 for r in result.panel.records)
    assert result.panel.metadata["filled_fields"] == "substitution=0"


def test_inverse_polarity_flips_mock_scores():
    provider = MockProvider(seed=7)
    direct = PromptTemplate("dir", "{{task}}", polarity="direct", response_schema="single_0_100")
    inverse = PromptTemplate("dir", "{{task}}", polarity="inverse", response_schema="single_0_100")
    tasks = make_tasks(5)
    r_dir = score_tasks(tasks, direct, mock_config(), provider=provider)
    r_inv = score_tasks(tasks, inverse, mock_config(), provider=provider)
    for a, b in zip(r_dir.panel.records, r_inv.panel.records):
        assert a.augmentation + b.augmentation == pytest.approx(100.0, abs=1e-9)


def test_cache_key_depends_on_all_parts():
    base = cache_key("m", "p", "t", "text")
    assert cache_key("m2", "p", "t", "text") != base
    assert cache_key("m", "p2", "t", "text") != base
    assert cache_key("m", "p", "t2", "text") != base
    assert cache_key("m", "p", "t", "text2") != base


def test_merge_panels_combines_raters():
    tasks = make_tasks(4)
    template = builtin_templates()["A"]
    pa = score_tasks(tasks, template, mock_config("m1"), provider=MockProvider(seed=1)).panel
    pb = score_tasks(tasks, template, mock_config("m2"), provider=MockProvider(seed=1)).panel
    merged = merge_panels([pa, pb])
    assert merged.raters() == ("m1", "m2")
    assert len(merged.records) == 8


def test_provider_config_validation():
    with pytest.raises(ValidationError, match="max_parallel"):
        ProviderConfig(provider_name="x", model_name="m", max_parallel=0)
    with pytest.raises(ValidationError, match="max_retries"):
        ProviderConfig(provider_name="x", model_name="m", max_retries=-1)


def test_http_provider_wire_contract(monkeypatch):
    import httpx

    from latent_gauge.harness import API_KEY_ENV, HttpProvider

    captured = {}

    def responder(request: httpx.Request) -> httpx.Response:
        captured["json"] = json.loads(request.content)
        captured["auth"] = request.headers.get("authorization")
        return httpx.Response(200, json={"completion": '{"score": 41}'})

    monkeypatch.setenv(API_KEY_ENV, "secret-key")
    config = ProviderConfig(
        provider_name="http", model_name="m1", endpoint="https://scores.example/v1"
    )
    provider = HttpProvider(config, transport=httpx.MockTransport(responder))
    body = provider.complete("m1", "Rate: do the thing")
    assert body == '{"score": 41}'
    assert captured["json"] == {"model": "m1", "prompt": "Rate: do the thing", "temperature": 0}
    assert captured["auth"] == "Bearer secret-key"


def test_http_provider_requires_endpoint():
    from latent_gauge.harness import HttpProvider

    with pytest.raises(ValidationError, match="endpoint"):
        HttpProvider(ProviderConfig(provider_name="http", model_name="m"))
