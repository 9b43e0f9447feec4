"""End-to-end experiment orchestration.

A run is driven by one JSON config: which images, which language and
prompt mode, which providers (HTTP or mock), who votes, where outputs go.
Stages execute in a fixed order — load, transform, prompt, query, parse,
vote, score, report — with per-image failures isolated and counted; the
run aborts only when the failure rate crosses the configured threshold.

Outputs are deterministic for a fixed config and caches: rerunning
produces byte-identical CSV, Markdown and SVG files (the run manifest
carries timestamps and is the one exception).
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

from . import __version__
from .annotations import read_manifest, read_presence_csv
from .charts import grouped_bar_svg
from .imagery import ImageRecord, load_local
from .indicators import CANONICAL_ORDER, Indicator, IndicatorVector
from .metrics import (ConfusionTable, MetricsReport, confusion, markdown_table,
                      report_from_confusion, write_report_csv)
from .noise import NoiseSpec, add_gaussian_noise
from .parsing import LENIENT, STRICT, evaluate_parallel, evaluate_single
from .prompts import build_plan, load_pack
from .providers import (Gateway, HttpChatProvider, HttpProviderSpec,
                        MockBehavior, MockProvider, ProviderParams, ResponseCache)
from .voting import (VOTER_PRESETS, EnsembleVerdict, ModelVerdict, vote_all,
                     write_ensemble_csv, write_verdicts_csv)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


class PartialFailure(RuntimeError):
    """Raised when too many per-image stages failed to trust the run."""


@dataclass
class ProviderEntry:
    provider_id: str
    kind: str  # "mock" | "http"
    params: ProviderParams
    seed: int = 0
    rates: Optional[dict[Indicator, tuple[float, float]]] = None
    sequential_rates: Optional[dict[Indicator, tuple[float, float]]] = None
    spec_path: Optional[Path] = None


@dataclass
class ExperimentConfig:
    images_dir: Path
    manifest_path: Path
    groundtruth_path: Path
    output_dir: Path
    providers: list[ProviderEntry]
    language: str = "en"
    prompt_mode: str = "parallel"
    parse_mode: str = STRICT
    voters: Optional[list[str]] = None
    tie_rule: str = "negative"
    noise: Optional[NoiseSpec] = None
    seed: int = 0
    failure_threshold: float = 0.2
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if data.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version: {data.get('schema_version')!r}")
        base = path.parent

        def resolve(key: str) -> Path:
            if key not in data:
                raise ConfigError(f"config missing {key!r}")
            return (base / data[key]).resolve()

        providers = []
        for idx, entry in enumerate(data.get("providers", [])):
            params = ProviderParams(
                model_id=entry.get("model_id", entry.get("provider_id", "default")),
                temperature=entry.get("temperature", 1.0),
                top_p=entry.get("top_p", 0.95),
                max_tokens=entry.get("max_tokens", 64),
            )
            kind = entry.get("type", "mock")
            rates = _parse_rates(entry.get("rates"))
            seq_rates = _parse_rates(entry.get("sequential_rates"))
            providers.append(ProviderEntry(
                provider_id=entry.get("provider_id", f"provider{idx}"),
                kind=kind,
                params=params,
                seed=entry.get("seed", data.get("seed", 0) + idx),
                rates=rates,
                sequential_rates=seq_rates,
                spec_path=(base / entry["spec"]).resolve() if "spec" in entry else None,
            ))

        noise = None
        if data.get("noise"):
            noise = NoiseSpec(snr_db=float(data["noise"]["snr_db"]),
                              seed=int(data["noise"].get("seed", data.get("seed", 0))))

        voters = data.get("voters")
        if isinstance(voters, str):
            preset = VOTER_PRESETS.get(voters)
            if preset is None:
                raise ConfigError(f"unknown voter preset: {voters!r}")
            voters = list(preset)

        config = cls(
            images_dir=resolve("images_dir"),
            manifest_path=resolve("manifest"),
            groundtruth_path=resolve("groundtruth"),
            output_dir=(base / data.get("output_dir", "out")).resolve(),
            providers=providers,
            language=data.get("language", "en"),
            prompt_mode=data.get("prompt_mode", "parallel"),
            parse_mode=data.get("parse_mode", STRICT),
            voters=voters,
            tie_rule=data.get("tie_rule", "negative"),
            noise=noise,
            seed=data.get("seed", 0),
            failure_threshold=data.get("failure_threshold", 0.2),
            raw=data,
        )
        config.validate()
        return config

    def validate(self) -> None:
        if not self.providers:
            raise ConfigError("provider list is empty")
        for p in (self.images_dir, self.manifest_path, self.groundtruth_path):
            if not Path(p).exists():
                raise ConfigError(f"referenced path does not exist: {p}")
        if self.prompt_mode not in ("parallel", "sequential"):
            raise ConfigError(f"prompt_mode must be parallel|sequential, got {self.prompt_mode!r}")
        if self.parse_mode not in (STRICT, LENIENT):
            raise ConfigError(f"parse_mode must be strict|lenient, got {self.parse_mode!r}")
        if not 0.0 <= self.failure_threshold <= 1.0:
            raise ConfigError("failure_threshold must be in [0, 1]")
        ids = [p.provider_id for p in self.providers]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"duplicate provider ids: {ids}")
        if self.voters is not None:
            unknown = [v for v in self.voters if v not in ids]
            if unknown:
                raise ConfigError(f"voters not in provider list: {unknown}")

    def digest(self) -> str:
        raw = json.dumps(self.raw, sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(raw.encode("utf-8")).hexdigest()


def _parse_rates(raw: Optional[Mapping[str, Sequence[float]]]
                 ) -> Optional[dict[Indicator, tuple[float, float]]]:
    if raw is None:
        return None
    return {Indicator.from_code(code): (float(pair[0]), float(pair[1]))
            for code, pair in raw.items()}


@dataclass
class RunResult:
    manifest: dict
    verdicts: list[ModelVerdict]
    ensembles: dict[str, EnsembleVerdict]
    reports: dict[str, MetricsReport]
    failures: list[str]
    output_dir: Path


def _resolve_records(records: Sequence[ImageRecord],
                     wanted_ids: Sequence[str]) -> list[ImageRecord]:
    """Match manifest entries against loaded records by pixel digest or by
    source filename stem, preserving manifest order."""
    by_key: dict[str, ImageRecord] = {}
    for rec in records:
        by_key[rec.image_id] = rec
        if rec.source_path is not None:
            by_key.setdefault(rec.source_path.stem, rec)
    out = []
    for wanted in wanted_ids:
        rec = by_key.get(wanted)
        if rec is None:
            raise KeyError(wanted)
        out.append(rec)
    return out


def _resolve_truth(truth: Mapping[str, IndicatorVector],
                   records: Sequence[ImageRecord]) -> dict[str, IndicatorVector]:
    """Re-key ground truth onto record digests (truth files may use either
    digests or filename stems)."""
    out: dict[str, IndicatorVector] = {}
    for rec in records:
        if rec.image_id in truth:
            out[rec.image_id] = truth[rec.image_id]
        elif rec.source_path is not None and rec.source_path.stem in truth:
            out[rec.image_id] = truth[rec.source_path.stem]
    return out


def _build_provider(entry: ProviderEntry, truth: Mapping[str, IndicatorVector]):
    if entry.kind == "mock":
        if entry.rates is None:
            raise ConfigError(f"mock provider {entry.provider_id} needs rates")
        behavior = MockBehavior(rates=entry.rates, rng_seed=entry.seed,
                                sequential_rates=entry.sequential_rates)
        return MockProvider(entry.provider_id, behavior, truth)
    if entry.kind == "http":
        if entry.spec_path is None:
            raise ConfigError(f"http provider {entry.provider_id} needs a spec file")
        return HttpChatProvider(HttpProviderSpec.from_file(entry.spec_path))
    raise ConfigError(f"unknown provider type: {entry.kind!r}")


def run(config: ExperimentConfig, vote_and_score: bool = True) -> RunResult:
    started = time.time()
    out_dir = config.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)

    # load + order images per the manifest
    loaded = load_local(config.images_dir)
    manifest_ids = read_manifest(config.manifest_path)
    try:
        records = _resolve_records(loaded.records, manifest_ids)
    except KeyError as exc:
        raise ConfigError(f"manifest image not found in images_dir: {exc}") from exc

    truth = _resolve_truth(read_presence_csv(config.groundtruth_path), records)

    # optional noise transform; ground truth follows each source image
    if config.noise is not None:
        noisy = []
        remapped: dict[str, IndicatorVector] = {}
        for rec in records:
            out_rec, _ = add_gaussian_noise(rec, config.noise)
            out_rec = ImageRecord(image_id=out_rec.image_id, source=out_rec.source,
                                  pixels=out_rec.pixels, request=out_rec.request,
                                  source_path=rec.source_path)
            noisy.append(out_rec)
            if rec.image_id in truth:
                remapped[out_rec.image_id] = truth[rec.image_id]
        records, truth = noisy, remapped

    pack = load_pack(config.language)
    plan = build_plan(config.prompt_mode, pack)

    # query + parse
    verdicts: list[ModelVerdict] = []
    failures: list[str] = []
    attempts = 0
    run_id = config.digest()[:12]
    for entry in config.providers:
        provider = _build_provider(entry, truth)
        cache = ResponseCache(out_dir / f"responses_{entry.provider_id}.jsonl")
        gateway = Gateway(provider, cache)
        for rec in records:
            attempts += 1
            try:
                vector = _query_one(gateway, rec, plan, entry.params, config.parse_mode)
            except Exception as exc:
                failures.append(f"{entry.provider_id}/{rec.image_id[:12]}: {exc}")
                logger.warning("image failed: %s", failures[-1])
                continue
            verdicts.append(ModelVerdict(image_id=rec.image_id,
                                         provider_id=entry.provider_id,
                                         vector=vector, run_id=run_id))
    failure_rate = len(failures) / attempts if attempts else 0.0
    if failure_rate > config.failure_threshold:
        raise PartialFailure(
            f"{len(failures)}/{attempts} stages failed "
            f"({failure_rate:.0%} > {config.failure_threshold:.0%} threshold)")

    # vote
    voter_ids = config.voters if config.voters is not None \
        else [p.provider_id for p in config.providers]
    provider_order = [p.provider_id for p in config.providers]
    ensembles: dict[str, EnsembleVerdict] = {}
    reports: dict[str, MetricsReport] = {}
    write_verdicts_csv(verdicts, out_dir / "verdicts.csv")
    if vote_and_score:
        voting_verdicts = [v for v in verdicts if v.provider_id in voter_ids]
        if len(voter_ids) >= 2:
            ensembles = vote_all(voting_verdicts, config.tie_rule)
        reports, tables = _score(verdicts, ensembles, truth, provider_order)
        if ensembles:
            write_ensemble_csv(ensembles, out_dir / "ensemble.csv")
        emit_reports(reports, tables, truth, out_dir, failures)

    manifest = {
        "tool_version": __version__,
        "config_digest": config.digest(),
        "schema_version": SCHEMA_VERSION,
        "images": len(records),
        "providers": provider_order,
        "voters": voter_ids,
        "attempts": attempts,
        "failures": failures,
        "stages": _stage_digests(out_dir),
        "started": started,
        "finished": time.time(),
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    return RunResult(manifest=manifest, verdicts=verdicts, ensembles=ensembles,
                     reports=reports, failures=failures, output_dir=out_dir)


def _query_one(gateway: Gateway, record: ImageRecord, plan, params: ProviderParams,
               parse_mode: str) -> IndicatorVector:
    if plan.mode == "parallel":
        response = gateway.query(record, plan.requests[0].text, params)
        outcome = evaluate_parallel(response.raw_text, parse_mode)
        if not outcome.ok:
            raise ValueError("; ".join(outcome.defects))
        return outcome.vector
    bits: dict[Indicator, bool] = {}
    for request in plan.requests:
        response = gateway.query(record, request.text, params)
        outcome = evaluate_single(response.raw_text, parse_mode)
        if not outcome.ok:
            raise ValueError("; ".join(outcome.defects))
        bits[request.indicator] = outcome.value
    return IndicatorVector(bits)


def _score(verdicts: Sequence[ModelVerdict],
           ensembles: Mapping[str, EnsembleVerdict],
           truth: Mapping[str, IndicatorVector],
           provider_order: Sequence[str]
           ) -> tuple[dict[str, MetricsReport], dict[str, ConfusionTable]]:
    reports: dict[str, MetricsReport] = {}
    tables: dict[str, ConfusionTable] = {}
    for provider_id in provider_order:
        predicted = {v.image_id: v.vector for v in verdicts
                     if v.provider_id == provider_id}
        if not predicted:
            continue
        table = confusion(predicted, truth)
        tables[provider_id] = table
        reports[provider_id] = report_from_confusion(table)
    if ensembles:
        predicted = {image_id: e.vector for image_id, e in ensembles.items()}
        table = confusion(predicted, truth)
        tables["ensemble"] = table
        reports["ensemble"] = report_from_confusion(table)
    return reports, tables


def emit_reports(reports: Mapping[str, MetricsReport],
                 tables: Mapping[str, ConfusionTable],
                 truth: Mapping[str, IndicatorVector],
                 out_dir: Path,
                 failures: Sequence[str] = ()) -> None:
    """Write per-series metric CSVs, the combined Markdown report, the
    confusion CSV, and the per-indicator accuracy chart."""
    out_dir.mkdir(parents=True, exist_ok=True)

    for series, report in reports.items():
        write_report_csv(report, out_dir / f"metrics_{series}.csv")

    with open(out_dir / "confusion.csv", "w", newline="", encoding="utf-8") as fh:
        fh.write("series,indicator,tp,fp,fn,tn\n")
        for series, table in tables.items():
            for ind in CANONICAL_ORDER:
                c = table.counts[ind]
                fh.write(f"{series},{ind.code},{c.tp},{c.fp},{c.fn},{c.tn}\n")

    # indicators with no ground-truth positives are left off the chart
    positives = {ind: sum(1 for v in truth.values() if v[ind]) for ind in CANONICAL_ORDER}
    charted = [ind for ind in CANONICAL_ORDER if positives[ind] > 0]
    omitted = [ind.code for ind in CANONICAL_ORDER if positives[ind] == 0]
    series_values = {
        series: [report.per_class[ind]["accuracy"] for ind in charted]
        for series, report in reports.items()
    }
    footnote = ""
    if omitted:
        footnote = ("no ground-truth positives for " + ", ".join(omitted)
                    + "; bars omitted")
    svg = grouped_bar_svg(
        groups=[ind.code for ind in charted],
        series=series_values,
        title="Per-indicator accuracy",
        y_label="accuracy",
        footnote=footnote,
    )
    (out_dir / "accuracy_chart.svg").write_text(svg, encoding="utf-8")

    lines = ["# Run report", ""]
    for series, report in reports.items():
        lines.append(markdown_table(report, title=series))
    if omitted:
        lines.append(f"_Omitted from chart (no ground-truth positives): "
                     f"{', '.join(omitted)}._")
        lines.append("")
    if failures:
        lines.append(f"_{len(failures)} image stages failed and were excluded._")
        lines.append("")
    (out_dir / "metrics.md").write_text("\n".join(lines), encoding="utf-8")


def rebuild_reports(out_dir: str | Path, groundtruth_path: str | Path) -> None:
    """Recompute Markdown + SVG from persisted verdicts and ground truth
    (the audit path: no numbers survive from the original run)."""
    from .voting import read_verdicts_csv

    out_dir = Path(out_dir)
    truth = read_presence_csv(groundtruth_path)
    rows = read_verdicts_csv(out_dir / "verdicts.csv")
    provider_order = list(dict.fromkeys(v.provider_id for v in rows))
    ensembles = {}
    ensemble_csv = out_dir / "ensemble.csv"
    if ensemble_csv.exists():
        for v in read_verdicts_csv(ensemble_csv):
            ensembles[v.image_id] = EnsembleVerdict(
                image_id=v.image_id, vector=v.vector, votes={})
    reports, tables = _score(rows, ensembles, truth, provider_order)
    emit_reports(reports, tables, truth, out_dir)


def _stage_digests(out_dir: Path) -> dict[str, str]:
    digests = {}
    for path in sorted(out_dir.glob("*.csv")) + sorted(out_dir.glob("*.md")) \
            + sorted(out_dir.glob("*.svg")):
        digests[path.name] = hashlib.sha256(path.read_bytes()).hexdigest()
    return digests
