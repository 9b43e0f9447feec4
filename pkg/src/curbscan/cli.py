"""Command-line interface.

Subcommands map one-to-one onto pipeline stages; `run` chains them from a
config file. Exit codes: 0 ok, 2 config/usage error, 3 failure threshold
exceeded.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .annotations import (parse_labelme_dir, read_manifest, to_presence,
                          write_bbox_csv, write_presence_csv)
from .geo import (DEFAULT_INTERVAL_M, expand_headings, load_geojson_roads,
                  read_requests_csv, sample_polyline, write_requests_csv)
from .imagery import ImageClient, load_local
from .metrics import evaluate_detections, markdown_table, read_detections_csv, write_report_csv
from .noise import AugSpec, NoiseSpec, add_gaussian_noise, random_crop, rotate
from .runner import ConfigError, ExperimentConfig, PartialFailure, rebuild_reports, run
from .voting import read_verdicts_csv, vote_all, write_ensemble_csv

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARTIAL = 3


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PartialFailure as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_PARTIAL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="curbscan", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="sample road polylines into image requests")
    p.add_argument("geojson", type=Path)
    p.add_argument("out_csv", type=Path)
    p.add_argument("--interval", type=float, default=DEFAULT_INTERVAL_M,
                   help="spacing along the road in meters")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("fetch", help="download imagery for sampled requests")
    p.add_argument("requests_csv", type=Path)
    p.add_argument("--endpoint", required=True,
                   help="URL template with {lat} {lon} {heading} {size} {key}")
    p.add_argument("--cache-dir", type=Path, default=Path("cache"))
    p.add_argument("--rate-limit", type=float, default=10.0)
    p.add_argument("--api-key-env", default="CURBSCAN_API_KEY")
    p.add_argument("--offline", action="store_true",
                   help="serve only from cache; fail on misses")
    p.set_defaults(func=cmd_fetch)

    p = sub.add_parser("ingest", help="parse LabelMe annotations to ground truth CSVs")
    p.add_argument("labelme_dir", type=Path)
    p.add_argument("out_dir", type=Path)
    p.add_argument("--manifest", type=Path, default=None,
                   help="image ids that must appear even with no annotations")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("evaluate", help="query providers and parse verdicts")
    p.add_argument("config", type=Path)
    p.add_argument("--output-dir", type=Path, default=None,
                   help="override the config's output directory")
    _add_provider_overrides(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("vote", help="majority-vote a verdict CSV")
    p.add_argument("verdicts_csv", type=Path)
    p.add_argument("out_csv", type=Path)
    p.add_argument("--tie-rule", choices=("abstain", "negative", "positive"),
                   default="negative")
    p.set_defaults(func=cmd_vote)

    p = sub.add_parser("score", help="score verdicts or detection files")
    p.add_argument("--verdicts", type=Path, help="verdict CSV (presence metrics)")
    p.add_argument("--truth", type=Path, help="ground-truth presence CSV")
    p.add_argument("--detections", type=Path, help="prediction box CSV with confidence")
    p.add_argument("--truth-boxes", type=Path, help="ground-truth box CSV")
    p.add_argument("--out-dir", type=Path, default=Path("scores"))
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("noise", help="emit Gaussian-noise variants of an image folder")
    p.add_argument("in_dir", type=Path)
    p.add_argument("out_dir", type=Path)
    p.add_argument("--snr", default="5,10,15,20,25,30",
                   help="comma-separated SNR levels in dB")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("augment", help="emit rotated / cropped variants")
    p.add_argument("in_dir", type=Path)
    p.add_argument("out_dir", type=Path)
    p.add_argument("--rotations", default="90,180,270")
    p.add_argument("--crop", type=float, default=None,
                   help="crop fraction of the bbox area (needs --bboxes)")
    p.add_argument("--bboxes", type=Path, default=None,
                   help="bbox CSV image_id,indicator,xmin,ymin,xmax,ymax")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("report", help="rebuild Markdown + SVG from run outputs")
    p.add_argument("run_dir", type=Path)
    p.add_argument("--truth", type=Path, required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("run", help="full pipeline from a config file")
    p.add_argument("config", type=Path)
    p.add_argument("--output-dir", type=Path, default=None,
                   help="override the config's output directory")
    _add_provider_overrides(p)
    p.set_defaults(func=cmd_run)

    return parser


def _add_provider_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--provider", action="append", default=None,
                   help="restrict the run to this provider id (repeatable)")
    p.add_argument("--model", default=None, help="override every provider's model id")
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--top-p", dest="top_p", type=float, default=None)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")


def _apply_provider_overrides(config: "ExperimentConfig", args) -> None:
    from dataclasses import replace

    if getattr(args, "provider", None):
        wanted = set(args.provider)
        unknown = wanted - {p.provider_id for p in config.providers}
        if unknown:
            raise ConfigError(f"--provider not in config: {sorted(unknown)}")
        config.providers = [p for p in config.providers if p.provider_id in wanted]
        if config.voters is not None:
            config.voters = [v for v in config.voters if v in wanted]
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    for entry in config.providers:
        params = entry.params
        if getattr(args, "model", None) is not None:
            params = replace(params, model_id=args.model)
        if getattr(args, "temperature", None) is not None:
            params = replace(params, temperature=args.temperature)
        if getattr(args, "top_p", None) is not None:
            params = replace(params, top_p=args.top_p)
        entry.params = params


def cmd_sample(args) -> int:
    roads = load_geojson_roads(args.geojson)
    requests = []
    for road in roads:
        requests.extend(expand_headings(sample_polyline(road, args.interval)))
    write_requests_csv(requests, args.out_csv)
    print(f"{len(roads)} roads -> {len(requests)} image requests -> {args.out_csv}")
    return EXIT_OK


def cmd_fetch(args) -> int:
    api_key = os.environ.get(args.api_key_env, "")
    if not api_key and not args.offline:
        raise ConfigError(f"API key env var {args.api_key_env} is not set")
    client = ImageClient(endpoint_template=args.endpoint, api_key=api_key,
                         cache_dir=args.cache_dir, rate_limit_per_s=args.rate_limit)
    requests = read_requests_csv(args.requests_csv)
    fetched = failed = 0
    for request in requests:
        if args.offline:
            record = client.cached(request)
            if record is None:
                failed += 1
                continue
            fetched += 1
            continue
        try:
            client.fetch(request)
            fetched += 1
        except Exception as exc:
            logger.warning("fetch failed: %s", exc)
            failed += 1
    print(f"fetched {fetched}, failed {failed}, cache at {args.cache_dir}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    report = parse_labelme_dir(args.labelme_dir)
    manifest = read_manifest(args.manifest) if args.manifest else None
    presence = to_presence(report.annotations, manifest)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_presence_csv(presence, args.out_dir / "groundtruth.csv")
    write_bbox_csv(report.annotations, args.out_dir / "boxes.csv")
    print(f"{len(report.annotations)} annotations over {len(presence)} images; "
          f"{sum(report.rejects.values())} rejected labels")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    config = ExperimentConfig.from_file(args.config)
    if args.output_dir is not None:
        config.output_dir = args.output_dir.resolve()
    _apply_provider_overrides(config, args)
    result = run(config, vote_and_score=False)
    print(f"wrote verdicts for {len(result.verdicts)} (image, provider) pairs "
          f"to {result.output_dir}")
    return EXIT_OK


def cmd_vote(args) -> int:
    verdicts = read_verdicts_csv(args.verdicts_csv)
    ensembles = vote_all(verdicts, args.tie_rule)
    write_ensemble_csv(ensembles, args.out_csv)
    print(f"voted {len(ensembles)} images -> {args.out_csv}")
    return EXIT_OK


def cmd_score(args) -> int:
    from .metrics import confusion, report_from_confusion
    from .annotations import read_presence_csv

    args.out_dir.mkdir(parents=True, exist_ok=True)
    did_anything = False
    if args.verdicts and args.truth:
        truth = read_presence_csv(args.truth)
        verdicts = read_verdicts_csv(args.verdicts)
        by_provider: dict[str, dict] = {}
        for v in verdicts:
            by_provider.setdefault(v.provider_id, {})[v.image_id] = v.vector
        for provider_id, predicted in sorted(by_provider.items()):
            report = report_from_confusion(confusion(predicted, truth))
            write_report_csv(report, args.out_dir / f"metrics_{provider_id}.csv")
            print(markdown_table(report, title=provider_id))
        did_anything = True
    if args.detections and args.truth_boxes:
        predictions = read_detections_csv(args.detections, with_confidence=True)
        truths = read_detections_csv(args.truth_boxes, with_confidence=False)
        report = evaluate_detections(predictions, truths)
        write_report_csv(report, args.out_dir / "metrics_detection.csv")
        print(markdown_table(report, title="detection"))
        did_anything = True
    if not did_anything:
        raise ConfigError("score needs --verdicts/--truth or --detections/--truth-boxes")
    return EXIT_OK


def cmd_noise(args) -> int:
    from .imagery import encode_png

    levels = [float(s) for s in str(args.snr).split(",") if s]
    loaded = load_local(args.in_dir)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    count = 0
    for level in levels:
        spec = NoiseSpec(snr_db=level, seed=args.seed)
        level_dir = args.out_dir / f"snr_{level:g}db"
        level_dir.mkdir(exist_ok=True)
        for record in loaded.records:
            noisy, realized = add_gaussian_noise(record, spec)
            name = record.source_path.stem if record.source_path else record.image_id[:16]
            (level_dir / f"{name}.png").write_bytes(encode_png(noisy.pixels))
            logger.info("%s @ %gdB: realized %.2fdB", name, level, realized)
            count += 1
    print(f"wrote {count} noisy images across {len(levels)} SNR levels to {args.out_dir}")
    return EXIT_OK


def cmd_augment(args) -> int:
    from .imagery import encode_png
    from .metrics import read_detections_csv as read_boxes

    rotations = tuple(int(s) for s in str(args.rotations).split(",") if s)
    spec = AugSpec(rotations=rotations,
                   crop_fraction=args.crop if args.crop else 0.30,
                   seed=args.seed)
    loaded = load_local(args.in_dir)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    count = 0
    for record in loaded.records:
        name = record.source_path.stem if record.source_path else record.image_id[:16]
        for angle in spec.rotations:
            rotated = rotate(record, angle)
            (args.out_dir / f"{name}_rot{angle}.png").write_bytes(encode_png(rotated.pixels))
            count += 1
    if args.crop and args.bboxes:
        boxes = read_boxes(args.bboxes, with_confidence=False)
        by_image: dict[str, list] = {}
        for box in boxes:
            by_image.setdefault(box.image_id, []).append(box)
        for record in loaded.records:
            name = record.source_path.stem if record.source_path else record.image_id[:16]
            for k, box in enumerate(by_image.get(name, [])):
                cropped, _ = random_crop(record, tuple(int(v) for v in box.bbox),
                                         fraction=spec.crop_fraction, seed=spec.seed)
                (args.out_dir / f"{name}_crop{k}.png").write_bytes(encode_png(cropped.pixels))
                count += 1
    print(f"wrote {count} augmented images to {args.out_dir}")
    return EXIT_OK


def cmd_report(args) -> int:
    rebuild_reports(args.run_dir, args.truth)
    print(f"rebuilt metrics.md and accuracy_chart.svg in {args.run_dir}")
    return EXIT_OK


def cmd_run(args) -> int:
    config = ExperimentConfig.from_file(args.config)
    if args.output_dir is not None:
        config.output_dir = args.output_dir.resolve()
    _apply_provider_overrides(config, args)
    result = run(config)
    for series, report in result.reports.items():
        print(f"{series:>16}: accuracy {report.macro()['accuracy']:.3f}")
    print(f"outputs in {result.output_dir}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
