"""Classification and detection metrics.

Presence-level: per-indicator confusion counts over images, with the
standard precision / recall / F1 / accuracy derivations. Detection-level:
box IoU, per-class average precision at IoU >= 0.5 with all-point
(precision-envelope) interpolation, and their mean. Macro averages are
arithmetic means over classes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .indicators import CANONICAL_ORDER, Indicator, IndicatorVector

Box = tuple[float, float, float, float]  # xmin, ymin, xmax, ymax


class ImageSetMismatch(ValueError):
    def __init__(self, missing_predictions: list[str], missing_truths: list[str]):
        self.missing_predictions = missing_predictions
        self.missing_truths = missing_truths
        super().__init__(
            f"image sets differ: {len(missing_predictions)} without predictions, "
            f"{len(missing_truths)} without truth")


class EmptySet(ValueError):
    pass


class AllUndefined(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class DerivedMetrics:
    precision: float
    recall: float
    f1: float
    accuracy: float
    undefined: frozenset[str] = frozenset()


@dataclass
class ConfusionTable:
    counts: dict[Indicator, ConfusionCounts]
    skipped_predictions: list[str] = field(default_factory=list)  # truth-only images
    skipped_truths: list[str] = field(default_factory=list)  # prediction-only images


@dataclass(frozen=True)
class DetectionBox:
    image_id: str
    indicator: Indicator
    bbox: Box
    confidence: Optional[float] = None

    def __post_init__(self) -> None:
        xmin, ymin, xmax, ymax = self.bbox
        if not (xmin < xmax and ymin < ymax):
            raise ValueError(f"degenerate box {self.bbox}")
        if self.confidence is not None and not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence out of range: {self.confidence}")


def confusion(predicted: Mapping[str, IndicatorVector],
              truth: Mapping[str, IndicatorVector],
              policy: str = "exclude") -> ConfusionTable:
    """Per-indicator confusion counts over a shared image set.

    policy="exclude" drops images present on only one side and reports
    them; policy="strict" raises ImageSetMismatch instead.
    """
    pred_ids, truth_ids = set(predicted), set(truth)
    missing_pred = sorted(truth_ids - pred_ids)
    missing_truth = sorted(pred_ids - truth_ids)
    if policy == "strict" and (missing_pred or missing_truth):
        raise ImageSetMismatch(missing_pred, missing_truth)
    if policy not in ("strict", "exclude"):
        raise ValueError(f"unknown policy: {policy!r}")

    common = sorted(pred_ids & truth_ids)
    tallies = {i: [0, 0, 0, 0] for i in Indicator}  # tp, fp, fn, tn
    for image_id in common:
        p, t = predicted[image_id], truth[image_id]
        for ind in Indicator:
            if p[ind] and t[ind]:
                tallies[ind][0] += 1
            elif p[ind] and not t[ind]:
                tallies[ind][1] += 1
            elif not p[ind] and t[ind]:
                tallies[ind][2] += 1
            else:
                tallies[ind][3] += 1
    return ConfusionTable(
        counts={i: ConfusionCounts(*tallies[i]) for i in Indicator},
        skipped_predictions=missing_pred,
        skipped_truths=missing_truth,
    )


def derive(counts: ConfusionCounts) -> DerivedMetrics:
    """Precision, recall, F1 and accuracy from one confusion cell.

    Zero-denominator ratios come back as 0.0 and are named in the
    undefined set. Raises EmptySet when there is nothing to score.
    """
    if counts.total == 0:
        raise EmptySet("no scored images")
    undefined = set()
    if counts.tp + counts.fp > 0:
        precision = counts.tp / (counts.tp + counts.fp)
    else:
        precision = 0.0
        undefined.add("precision")
    if counts.tp + counts.fn > 0:
        recall = counts.tp / (counts.tp + counts.fn)
    else:
        recall = 0.0
        undefined.add("recall")
    if precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
        undefined.add("f1")
    accuracy = (counts.tp + counts.tn) / counts.total
    return DerivedMetrics(precision=precision, recall=recall, f1=f1,
                          accuracy=accuracy, undefined=frozenset(undefined))


# -- detection ------------------------------------------------------------


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two axis-aligned boxes; 0 when disjoint."""
    ix = min(a[2], b[2]) - max(a[0], b[0])
    iy = min(a[3], b[3]) - max(a[1], b[1])
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    return inter / (area_a + area_b - inter)


@dataclass(frozen=True)
class APResult:
    ap: float
    defined: bool
    tp: int = 0
    fp: int = 0
    n_truth: int = 0

    @property
    def fn(self) -> int:
        return self.n_truth - self.tp


def match_greedy(predictions: Sequence[DetectionBox],
                 truths: Sequence[DetectionBox],
                 iou_threshold: float = 0.5) -> list[bool]:
    """TP/FP flag per prediction, processed in descending confidence.

    Each truth matches at most once; candidate ties break on higher IoU
    then lower truth index. Matching is per image. Equal confidences keep
    input order (stable sort), so results are deterministic.
    """
    order = sorted(range(len(predictions)),
                   key=lambda k: (-(predictions[k].confidence or 0.0), k))
    truth_by_image: dict[str, list[int]] = {}
    for idx, t in enumerate(truths):
        truth_by_image.setdefault(t.image_id, []).append(idx)
    matched: set[int] = set()
    flags = [False] * len(predictions)
    for k in order:
        pred = predictions[k]
        best_idx, best_iou = -1, 0.0
        for t_idx in truth_by_image.get(pred.image_id, []):
            if t_idx in matched:
                continue
            overlap = iou(pred.bbox, truths[t_idx].bbox)
            if overlap >= iou_threshold and overlap > best_iou:
                best_idx, best_iou = t_idx, overlap
        if best_idx >= 0:
            matched.add(best_idx)
            flags[k] = True
    return flags


def average_precision(predictions: Sequence[DetectionBox],
                      truths: Sequence[DetectionBox],
                      iou_threshold: float = 0.5) -> APResult:
    """All-point interpolated AP for one class.

    The PR curve is traced one ranked prediction at a time; AP is the area
    under the running precision envelope. No truths and no predictions
    means AP is undefined (excluded from the mean downstream).
    """
    n_truth = len(truths)
    if n_truth == 0 and not predictions:
        return APResult(ap=0.0, defined=False)
    if not predictions or n_truth == 0:
        tp = 0
        return APResult(ap=0.0, defined=True, tp=tp, fp=len(predictions), n_truth=n_truth)
    for p in predictions:
        if p.confidence is None:
            raise ValueError(f"prediction without confidence: {p}")

    flags = match_greedy(predictions, truths, iou_threshold)
    order = sorted(range(len(predictions)),
                   key=lambda k: (-(predictions[k].confidence or 0.0), k))
    precisions, recalls = [], []
    tp = fp = 0
    for k in order:
        if flags[k]:
            tp += 1
        else:
            fp += 1
        precisions.append(tp / (tp + fp))
        recalls.append(tp / n_truth)

    # precision envelope, swept from the tail
    envelope = precisions[:]
    for k in range(len(envelope) - 2, -1, -1):
        envelope[k] = max(envelope[k], envelope[k + 1])
    ap = 0.0
    prev_recall = 0.0
    for k in range(len(envelope)):
        ap += (recalls[k] - prev_recall) * envelope[k]
        prev_recall = recalls[k]
    return APResult(ap=ap, defined=True, tp=tp, fp=fp, n_truth=n_truth)


def map50(per_class: Mapping[Indicator, APResult]) -> float:
    """Arithmetic mean of the defined per-class APs."""
    defined = [r.ap for r in per_class.values() if r.defined]
    if not defined:
        raise AllUndefined("no class has a defined AP")
    return sum(defined) / len(defined)


# -- report assembly ------------------------------------------------------


@dataclass
class MetricsReport:
    """Per-indicator metric rows plus the macro (arithmetic mean) row."""

    per_class: dict[Indicator, dict[str, float]]
    columns: tuple[str, ...] = ("precision", "recall", "f1", "accuracy")

    def macro(self) -> dict[str, float]:
        out = {}
        for col in self.columns:
            values = [row[col] for row in self.per_class.values() if col in row]
            out[col] = sum(values) / len(values) if values else 0.0
        return out


ROW_LABELS = {
    Indicator.STREETLIGHT: "Streetlight",
    Indicator.SIDEWALK: "Sidewalk",
    Indicator.SINGLE_LANE_ROAD: "Single-lane road",
    Indicator.MULTILANE_ROAD: "Multilane road",
    Indicator.POWERLINE: "Powerline",
    Indicator.APARTMENT: "Apartment",
}


def report_from_confusion(table: ConfusionTable) -> MetricsReport:
    per_class = {}
    for ind in CANONICAL_ORDER:
        metrics = derive(table.counts[ind])
        per_class[ind] = {
            "precision": metrics.precision,
            "recall": metrics.recall,
            "f1": metrics.f1,
            "accuracy": metrics.accuracy,
        }
    return MetricsReport(per_class=per_class)


def markdown_table(report: MetricsReport, title: str = "") -> str:
    headers = ["Label"] + [c.capitalize() if c != "f1" else "F1" for c in report.columns]
    lines = []
    if title:
        lines.append(f"### {title}")
        lines.append("")
    lines.append("| " + " | ".join(headers) + " |")
    lines.append("|" + "---|" * len(headers))
    for ind in CANONICAL_ORDER:
        if ind not in report.per_class:
            continue
        row = report.per_class[ind]
        cells = [f"{row[c]:.3f}" for c in report.columns]
        lines.append("| " + " | ".join([ROW_LABELS[ind]] + cells) + " |")
    macro = report.macro()
    cells = [f"{macro[c]:.3f}" for c in report.columns]
    lines.append("| " + " | ".join(["Average"] + cells) + " |")
    return "\n".join(lines) + "\n"


def write_report_csv(report: MetricsReport, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"] + list(report.columns))
        for ind in CANONICAL_ORDER:
            if ind not in report.per_class:
                continue
            row = report.per_class[ind]
            writer.writerow([ind.code] + [f"{row[c]:.6f}" for c in report.columns])
        macro = report.macro()
        writer.writerow(["average"] + [f"{macro[c]:.6f}" for c in report.columns])


# -- detection CSV io ------------------------------------------------------


def read_detections_csv(path: str | Path, with_confidence: bool) -> list[DetectionBox]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(DetectionBox(
                image_id=row["image_id"],
                indicator=Indicator.from_code(row["indicator"]),
                bbox=(float(row["xmin"]), float(row["ymin"]),
                      float(row["xmax"]), float(row["ymax"])),
                confidence=float(row["confidence"]) if with_confidence else None,
            ))
    return out


def evaluate_detections(predictions: Sequence[DetectionBox],
                        truths: Sequence[DetectionBox],
                        iou_threshold: float = 0.5) -> MetricsReport:
    """Per-class detection metrics mirroring the overall-accuracy table:
    precision / recall / F1 over all predictions, plus AP at the IoU
    threshold."""
    per_class = {}
    ap_results: dict[Indicator, APResult] = {}
    for ind in CANONICAL_ORDER:
        preds = [p for p in predictions if p.indicator is ind]
        gts = [t for t in truths if t.indicator is ind]
        result = average_precision(preds, gts, iou_threshold)
        ap_results[ind] = result
        if not result.defined:
            continue
        precision = result.tp / (result.tp + result.fp) if result.tp + result.fp else 0.0
        recall = result.tp / result.n_truth if result.n_truth else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class[ind] = {
            "precision": precision,
            "recall": recall,
            "f1": f1,
            "ap50": result.ap,
        }
    return MetricsReport(per_class=per_class,
                         columns=("precision", "recall", "f1", "ap50"))
