"""LabelMe-style annotation ingestion.

Polygon shapes are collapsed to their axis-aligned envelope boxes (the
detection scoring downstream is box-IoU based), and per-image presence
vectors are derived for the yes/no task. Label strings are mapped to
indicators through a configurable alias table because hand-entered labels
drift ("street light", "streetlights", ...).
"""

from __future__ import annotations

import csv
import json
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional

from .indicators import CANONICAL_ORDER, Indicator, IndicatorVector, csv_header

logger = logging.getLogger(__name__)


class ParseError(ValueError):
    """Annotation file is not valid JSON or lacks the expected structure."""


class EmptyPolygon(ValueError):
    """A shape has fewer than 3 points."""


DEFAULT_ALIASES: dict[str, Indicator] = {
    "sl": Indicator.STREETLIGHT,
    "streetlight": Indicator.STREETLIGHT,
    "street light": Indicator.STREETLIGHT,
    "sw": Indicator.SIDEWALK,
    "sidewalk": Indicator.SIDEWALK,
    "side walk": Indicator.SIDEWALK,
    "sr": Indicator.SINGLE_LANE_ROAD,
    "single-lane road": Indicator.SINGLE_LANE_ROAD,
    "single lane road": Indicator.SINGLE_LANE_ROAD,
    "mr": Indicator.MULTILANE_ROAD,
    "multilane road": Indicator.MULTILANE_ROAD,
    "multi-lane road": Indicator.MULTILANE_ROAD,
    "multi lane road": Indicator.MULTILANE_ROAD,
    "pl": Indicator.POWERLINE,
    "powerline": Indicator.POWERLINE,
    "power line": Indicator.POWERLINE,
    "ap": Indicator.APARTMENT,
    "apartment": Indicator.APARTMENT,
}


@dataclass(frozen=True)
class Annotation:
    image_id: str
    indicator: Indicator
    polygon: tuple[tuple[float, float], ...]
    bbox: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax


@dataclass
class ParseReport:
    annotations: list[Annotation]
    rejects: Counter  # unresolved label -> occurrence count


def _envelope(polygon: Iterable[tuple[float, float]],
              width: Optional[float], height: Optional[float]) -> tuple[float, float, float, float]:
    xs = [p[0] for p in polygon]
    ys = [p[1] for p in polygon]
    xmin, xmax = min(xs), max(xs)
    ymin, ymax = min(ys), max(ys)
    if width is not None:
        xmin, xmax = max(0.0, xmin), min(float(width), xmax)
    if height is not None:
        ymin, ymax = max(0.0, ymin), min(float(height), ymax)
    if not (xmin < xmax and ymin < ymax):
        raise EmptyPolygon(f"degenerate envelope {(xmin, ymin, xmax, ymax)}")
    return (xmin, ymin, xmax, ymax)


def parse_labelme(path: str | Path,
                  label_aliases: Mapping[str, Indicator] = DEFAULT_ALIASES,
                  image_id: Optional[str] = None) -> ParseReport:
    """Parse one LabelMe JSON file into annotations.

    Shapes whose label does not resolve through the alias table are
    collected in the rejects counter instead of failing the file. The
    image id defaults to the stem of the file's imagePath (or of the file
    itself when imagePath is absent).
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("shapes"), list):
        raise ParseError(f"{path}: no shapes[] array")

    if image_id is None:
        image_path = doc.get("imagePath") or path.name
        image_id = Path(image_path).stem

    width = doc.get("imageWidth")
    height = doc.get("imageHeight")

    annotations: list[Annotation] = []
    rejects: Counter = Counter()
    for shape in doc["shapes"]:
        label = str(shape.get("label", "")).strip().lower()
        points = shape.get("points") or []
        if len(points) < 3:
            raise EmptyPolygon(f"{path}: shape {label!r} has {len(points)} points")
        indicator = label_aliases.get(label)
        if indicator is None:
            rejects[label] += 1
            continue
        polygon = tuple((float(x), float(y)) for x, y in points)
        annotations.append(Annotation(
            image_id=image_id,
            indicator=indicator,
            polygon=polygon,
            bbox=_envelope(polygon, width, height),
        ))
    if rejects:
        logger.warning("%s: %d shapes with unresolved labels: %s",
                       path.name, sum(rejects.values()), dict(rejects))
    return ParseReport(annotations=annotations, rejects=rejects)


def parse_labelme_dir(directory: str | Path,
                      label_aliases: Mapping[str, Indicator] = DEFAULT_ALIASES) -> ParseReport:
    directory = Path(directory)
    merged = ParseReport(annotations=[], rejects=Counter())
    for path in sorted(directory.glob("*.json")):
        report = parse_labelme(path, label_aliases)
        merged.annotations.extend(report.annotations)
        merged.rejects.update(report.rejects)
    return merged


def indicator_totals(annotations: Iterable[Annotation]) -> dict[Indicator, int]:
    totals = {i: 0 for i in CANONICAL_ORDER}
    for ann in annotations:
        totals[ann.indicator] += 1
    return totals


def to_presence(annotations: Iterable[Annotation],
                manifest: Optional[Iterable[str]] = None) -> dict[str, IndicatorVector]:
    """Collapse annotations to per-image presence vectors.

    Manifest images with no annotations get an all-false vector; images
    absent from the manifest appear only if they have annotations.
    """
    by_image: dict[str, set[Indicator]] = defaultdict(set)
    for ann in annotations:
        by_image[ann.image_id].add(ann.indicator)
    ids = set(by_image)
    if manifest is not None:
        ids |= set(manifest)
    return {
        image_id: IndicatorVector({i: i in by_image.get(image_id, set()) for i in Indicator})
        for image_id in sorted(ids)
    }


def write_presence_csv(presence: Mapping[str, IndicatorVector], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(csv_header())
        for image_id in sorted(presence):
            vec = presence[image_id]
            writer.writerow([image_id] + [int(vec[i]) for i in CANONICAL_ORDER])


def read_presence_csv(path: str | Path) -> dict[str, IndicatorVector]:
    out: dict[str, IndicatorVector] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out[row["image_id"]] = IndicatorVector({
                i: row[i.code].strip() in ("1", "true", "True", "yes", "Yes")
                for i in Indicator
            })
    return out


def write_bbox_csv(annotations: Iterable[Annotation], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "indicator", "xmin", "ymin", "xmax", "ymax"])
        for ann in annotations:
            writer.writerow([ann.image_id, ann.indicator.code,
                             ann.bbox[0], ann.bbox[1], ann.bbox[2], ann.bbox[3]])


def read_manifest(path: str | Path) -> list[str]:
    """Image manifest: one image id per line, blanks and #comments ignored."""
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            out.append(line)
    return out
