"""Score panel data model, validation, and file ingest/emit.

The long-form score panel is the universal input of the toolkit: one row per
(task, rater, prompt) with an augmentation score, a substitution score, and a
task-importance weight. CSV is the canonical interchange format; JSONL is
accepted as an alternative. External index tables (occupation-level columns
with true missingness) and the deterministic report writer also live here.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ValidationError

SCORE_COLUMNS = (
    "task_id",
    "occupation_code",
    "rater_id",
    "prompt_id",
    "augmentation",
    "substitution",
    "weight",
)

OCCUPATION_COLUMN = "occupation_code"


@dataclass(frozen=True)
class ScoreRecord:
    """One scored task: scores in [0, 100], weight >= 0, all finite."""

    task_id: str
    occupation_code: str
    rater_id: str
    prompt_id: str
    augmentation: float
    substitution: float
    weight: float

    def key(self) -> tuple[str, str, str]:
        return (self.task_id, self.rater_id, self.prompt_id)

    def problems(self) -> list[str]:
        out = []
        for name in ("augmentation", "substitution"):
            v = getattr(self, name)
            if not math.isfinite(v):
                out.append(f"{name}={v!r} is not finite")
            elif not 0.0 <= v <= 100.0:
                out.append(f"{name}={v!r} outside [0, 100]")
        if not math.isfinite(self.weight):
            out.append(f"weight={self.weight!r} is not finite")
        elif self.weight < 0.0:
            out.append(f"weight={self.weight!r} is negative")
        return out


@dataclass(frozen=True)
class ScorePanel:
    """Validated collection of ScoreRecords plus free-form string metadata."""

    records: tuple[ScoreRecord, ...]
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.records:
            raise ValidationError("panel must contain at least one record")
        seen: dict[tuple[str, str, str], int] = {}
        errors = []
        for i, rec in enumerate(self.records):
            for problem in rec.problems():
                errors.append(f"record {i}: {problem}")
            k = rec.key()
            if k in seen:
                errors.append(
                    f"duplicate key (task_id={k[0]!r}, rater_id={k[1]!r}, "
                    f"prompt_id={k[2]!r}) at records {seen[k]} and {i}"
                )
            else:
                seen[k] = i
        if errors:
            raise ValidationError(
                f"{len(errors)} invalid records rejected:\n" + "\n".join(errors)
            )

    def raters(self) -> tuple[str, ...]:
        return tuple(sorted({r.rater_id for r in self.records}))

    def prompts(self) -> tuple[str, ...]:
        return tuple(sorted({r.prompt_id for r in self.records}))

    def occupations(self) -> tuple[str, ...]:
        return tuple(sorted({r.occupation_code for r in self.records}))

    def restrict(self, rater_id: str | None = None, prompt_id: str | None = None) -> "ScorePanel":
        recs = tuple(
            r
            for r in self.records
            if (rater_id is None or r.rater_id == rater_id)
            and (prompt_id is None or r.prompt_id == prompt_id)
        )
        if not recs:
            raise ValidationError(
                f"no records match rater_id={rater_id!r}, prompt_id={prompt_id!r}"
            )
        return ScorePanel(records=recs, metadata=dict(self.metadata))

    def degenerate_occupations(self) -> tuple[str, ...]:
        """Occupations with no positive-weight record (flagged, not rejected)."""
        positive = {r.occupation_code for r in self.records if r.weight > 0}
        return tuple(sorted({r.occupation_code for r in self.records} - positive))


@dataclass(frozen=True)
class IndexTable:
    """Occupation-level index columns; None marks a truly missing cell."""

    occupations: tuple[str, ...]
    columns: dict[str, tuple[float | None, ...]]

    def __post_init__(self):
        if not self.columns:
            raise ValidationError("index table has no index columns")
        n = len(self.occupations)
        for name, col in self.columns.items():
            if len(col) != n:
                raise ValidationError(
                    f"column {name!r} has {len(col)} cells for {n} occupations"
                )
            for v in col:
                if v is not None and not math.isfinite(v):
                    raise ValidationError(f"column {name!r} contains non-finite value {v!r}")

    def names(self) -> tuple[str, ...]:
        return tuple(self.columns)

    def non_missing_counts(self) -> dict[str, int]:
        return {k: sum(v is not None for v in col) for k, col in self.columns.items()}


def _parse_float(raw: str, row: int, column: str) -> float:
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise ValidationError(f"row {row}: column {column!r} has non-numeric value {raw!r}") from None


def _records_from_dicts(rows, source: str) -> tuple[ScoreRecord, ...]:
    records = []
    errors = []
    seen: dict[tuple[str, str, str], int] = {}
    for rownum, raw in rows:
        missing = [c for c in SCORE_COLUMNS if c not in raw or raw[c] in (None, "")]
        if missing:
            errors.append(f"row {rownum}: missing column(s) {', '.join(missing)}")
            continue
        try:
            rec = ScoreRecord(
                task_id=str(raw["task_id"]),
                occupation_code=str(raw["occupation_code"]),
                rater_id=str(raw["rater_id"]),
                prompt_id=str(raw["prompt_id"]),
                augmentation=_parse_float(raw["augmentation"], rownum, "augmentation"),
                substitution=_parse_float(raw["substitution"], rownum, "substitution"),
                weight=_parse_float(raw["weight"], rownum, "weight"),
            )
        except ValidationError as exc:
            errors.append(str(exc))
            continue
        for problem in rec.problems():
            errors.append(f"row {rownum}: {problem}")
        k = rec.key()
        if k in seen:
            errors.append(
                f"row {rownum}: duplicate key (task_id={k[0]!r}, rater_id={k[1]!r}, "
                f"prompt_id={k[2]!r}) first seen at row {seen[k]}"
            )
        else:
            seen[k] = rownum
            records.append(rec)
    if errors:
        raise ValidationError(
            f"{source}: {len(errors)} row(s) rejected:\n" + "\n".join(errors)
        )
    return tuple(records)


def load_panel(path: str | Path, format: str | None = None) -> ScorePanel:
    """Load a score panel from CSV or JSONL, rejecting invalid rows by number.

    The format is inferred from the file suffix when not given. Out-of-range
    scores are never coerced; every offending row is listed in the error.
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"panel file not found: {path}")
    fmt = format or ("jsonl" if path.suffix.lower() in (".jsonl", ".ndjson") else "csv")
    if fmt == "csv":
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            unknown = [c for c in header if c not in SCORE_COLUMNS]
            missing = [c for c in SCORE_COLUMNS if c not in header]
            if unknown:
                raise ValidationError(f"{path}: unknown column(s) {', '.join(unknown)}")
            if missing:
                raise ValidationError(f"{path}: missing column(s) {', '.join(missing)}")
            rows = [(i, row) for i, row in enumerate(reader, start=2)]
    elif fmt == "jsonl":
        rows = []
        with path.open() as fh:
            for i, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ValidationError(f"{path}: line {i} is not valid JSON: {exc}") from None
                unknown = [c for c in obj if c not in SCORE_COLUMNS]
                if unknown:
                    raise ValidationError(
                        f"{path}: line {i} has unknown field(s) {', '.join(unknown)}"
                    )
                rows.append((i, obj))
    else:
        raise ValidationError(f"unknown panel format {fmt!r} (expected csv or jsonl)")
    records = _records_from_dicts(rows, str(path))
    if not records:
        raise ValidationError(f"{path}: no records")
    return ScorePanel(records=records, metadata={"source": str(path)})


def format_score(value: float) -> str:
    """Fixed 6-significant-digit formatting used for all emitted numbers."""
    return format(float(value), ".6g")


def write_panel(panel: ScorePanel, path: str | Path, format: str = "csv") -> None:
    """Write panel records deterministically; floats at 6 significant digits.

    Records are emitted sorted by (task_id, rater_id, prompt_id) so identical
    panels serialize to identical bytes. Metadata is not persisted.
    """
    path = Path(path)
    records = sorted(panel.records, key=lambda r: r.key())
    if format == "csv":
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(SCORE_COLUMNS)
            for r in records:
                writer.writerow(
                    [
                        r.task_id,
                        r.occupation_code,
                        r.rater_id,
                        r.prompt_id,
                        format_score(r.augmentation),
                        format_score(r.substitution),
                        format_score(r.weight),
                    ]
                )
    elif format == "jsonl":
        with path.open("w") as fh:
            for r in records:
                obj = {
                    "task_id": r.task_id,
                    "occupation_code": r.occupation_code,
                    "rater_id": r.rater_id,
                    "prompt_id": r.prompt_id,
                    "augmentation": float(format_score(r.augmentation)),
                    "substitution": float(format_score(r.substitution)),
                    "weight": float(format_score(r.weight)),
                }
                fh.write(json.dumps(obj, sort_keys=True) + "\n")
    else:
        raise ValidationError(f"unknown panel format {format!r} (expected csv or jsonl)")


def load_index_table(path: str | Path) -> IndexTable:
    """Load an occupation-level index table; blank cells become missing, not zero."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"index file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        if OCCUPATION_COLUMN not in header:
            raise ValidationError(f"{path}: no {OCCUPATION_COLUMN!r} column")
        if len(set(header)) != len(header):
            dupes = sorted({c for c in header if header.count(c) > 1})
            raise ValidationError(f"{path}: duplicate column name(s) {', '.join(dupes)}")
        index_names = [c for c in header if c != OCCUPATION_COLUMN]
        if not index_names:
            raise ValidationError(f"{path}: no index columns")
        occ_pos = header.index(OCCUPATION_COLUMN)
        occupations: list[str] = []
        cells: dict[str, list[float | None]] = {name: [] for name in index_names}
        for rownum, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ValidationError(
                    f"{path}: row {rownum} has {len(row)} cells, expected {len(header)}"
                )
            occupations.append(row[occ_pos])
            for pos, name in enumerate(header):
                if name == OCCUPATION_COLUMN:
                    continue
                raw = row[pos].strip()
                if raw == "":
                    cells[name].append(None)
                else:
                    cells[name].append(_parse_float(raw, rownum, name))
    if not occupations:
        raise ValidationError(f"{path}: no data rows")
    return IndexTable(
        occupations=tuple(occupations),
        columns={name: tuple(col) for name, col in cells.items()},
    )


def write_index_table(table: IndexTable, path: str | Path) -> None:
    path = Path(path)
    names = list(table.columns)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([OCCUPATION_COLUMN] + names)
        for i, occ in enumerate(table.occupations):
            row = [occ]
            for name in names:
                v = table.columns[name][i]
                row.append("" if v is None else format_score(v))
            writer.writerow(row)


def _sanitize(obj, path: str, warnings: list[str]):
    """Round floats to 6 significant digits; NaN/inf become null with a warning."""
    if isinstance(obj, bool) or obj is None or isinstance(obj, (str, int)):
        return obj
    if isinstance(obj, float):
        if not math.isfinite(obj):
            warnings.append(f"non-finite value at {path} serialized as null")
            return None
        return float(format_score(obj))
    if isinstance(obj, dict):
        return {str(k): _sanitize(v, f"{path}.{k}", warnings) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v, f"{path}[{i}]", warnings) for i, v in enumerate(obj)]
    raise ValidationError(f"report value at {path} has unsupported type {type(obj).__name__}")


def _render_markdown(obj, key: str, depth: int, lines: list[str]) -> None:
    pad = "  " * depth
    if isinstance(obj, dict):
        lines.append(f"{pad}- **{key}**:" if depth else f"## {key}")
        for k in sorted(obj):
            _render_markdown(obj[k], k, depth + 1, lines)
    elif isinstance(obj, list):
        lines.append(f"{pad}- **{key}**: [{len(obj)} item(s)]")
        for i, v in enumerate(obj):
            _render_markdown(v, str(i), depth + 1, lines)
    else:
        shown = "null" if obj is None else json.dumps(obj)
        lines.append(f"{pad}- **{key}**: {shown}")


def render_report(report: dict, format: str = "json") -> str:
    """Render a report deterministically (stable key order, 6-digit floats)."""
    warnings: list[str] = []
    clean = _sanitize(report, "$", warnings)
    if warnings:
        existing = clean.get("warnings", [])
        clean["warnings"] = list(existing) + warnings
    if format == "json":
        return json.dumps(clean, sort_keys=True, indent=2, allow_nan=False) + "\n"
    if format == "markdown":
        lines = ["# Report", ""]
        for k in sorted(clean):
            _render_markdown(clean[k], k, 0, lines)
        return "\n".join(lines) + "\n"
    raise ValidationError(f"unknown report format {format!r} (expected json or markdown)")


def write_report(report: dict, path: str | Path, format: str = "json") -> None:
    """Serialize a structured report; identical reports yield identical bytes."""
    text = render_report(report, format=format)
    Path(path).write_text(text)
