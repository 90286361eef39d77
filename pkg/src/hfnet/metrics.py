"""Classification metrics: confusion counts, ACC/SEN/SPE, ROC and AUC.

Scores are (probability-of-positive, label) pairs with the disease class as
positive (label 1).  The ROC sweeps a threshold over all distinct scores
with tied scores collapsed into one step, so the trapezoidal AUC equals the
Mann-Whitney statistic with ties counted one half.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

from .errors import DataError, UndefinedMetricError

__all__ = ["MetricsReport", "confusion_metrics", "roc_auc", "evaluate_scores", "emit_report"]


@dataclass
class MetricsReport:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0
    acc: float = 0.0
    sen: float = 0.0
    spe: float = 0.0
    auc: float | None = None
    # Parallel lists; thresholds run from +inf down to -inf, FPR/TPR from
    # (0,0) up to (1,1).
    roc_points: list = field(default_factory=list)
    roc_thresholds: list = field(default_factory=list)

    def to_dict(self):
        return {
            "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
            "acc": self.acc, "sen": self.sen, "spe": self.spe, "auc": self.auc,
            "roc_points": [list(p) for p in self.roc_points],
            "roc_thresholds": list(self.roc_thresholds),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            tp=d["tp"], fp=d["fp"], tn=d["tn"], fn=d["fn"],
            acc=d["acc"], sen=d["sen"], spe=d["spe"], auc=d["auc"],
            roc_points=[tuple(p) for p in d["roc_points"]],
            roc_thresholds=list(d["roc_thresholds"]),
        )


def _validate(scores):
    scores = list(scores)
    if not scores:
        raise DataError("no scores to evaluate")
    pos = sum(1 for _, y in scores if y == 1)
    neg = sum(1 for _, y in scores if y == 0)
    if pos + neg != len(scores):
        raise DataError("labels must be 0 (control) or 1 (disease)")
    if pos == 0 or neg == 0:
        raise UndefinedMetricError("both classes must be present")
    return scores, pos, neg


def confusion_metrics(scores, threshold=0.5) -> MetricsReport:
    """Confusion counts and ACC/SEN/SPE at one threshold (positive iff p >= t)."""
    scores, _, _ = _validate(scores)
    tp = fp = tn = fn = 0
    for p, y in scores:
        predicted = p >= threshold
        if predicted and y == 1:
            tp += 1
        elif predicted and y == 0:
            fp += 1
        elif not predicted and y == 0:
            tn += 1
        else:
            fn += 1
    report = MetricsReport(tp=tp, fp=fp, tn=tn, fn=fn)
    report.acc = (tp + tn) / len(scores)
    report.sen = tp / (tp + fn)
    report.spe = tn / (tn + fp)
    return report


def roc_auc(scores):
    """ROC points over all distinct-score thresholds plus trapezoidal AUC.

    Returns (points, thresholds, auc); points run (0,0) -> (1,1) with
    thresholds descending from +inf to -inf.
    """
    scores, pos, neg = _validate(scores)
    ordered = sorted(scores, key=lambda s: -s[0])
    points = [(0.0, 0.0)]
    thresholds = [math.inf]
    tp = fp = 0
    i = 0
    while i < len(ordered):
        j = i
        while j < len(ordered) and ordered[j][0] == ordered[i][0]:
            tp += ordered[j][1] == 1
            fp += ordered[j][1] == 0
            j += 1
        points.append((fp / neg, tp / pos))
        thresholds.append(float(ordered[i][0]))
        i = j
    points.append((1.0, 1.0))
    thresholds.append(-math.inf)

    auc = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        auc += (x1 - x0) * (y0 + y1) / 2.0
    return points, thresholds, auc


def evaluate_scores(scores, threshold=0.5) -> MetricsReport:
    """Full report: confusion metrics at the threshold plus ROC/AUC."""
    report = confusion_metrics(scores, threshold)
    report.roc_points, report.roc_thresholds, report.auc = roc_auc(scores)
    return report


def emit_report(reports, out_dir):
    """Write a metrics CSV plus one ROC point CSV per report.

    reports is a list of dicts {task, arch, tag, report: MetricsReport}.
    Returns the list of files written.
    """
    if not reports:
        raise DataError("no reports to emit")
    os.makedirs(out_dir, exist_ok=True)
    written = []

    metrics_path = os.path.join(out_dir, "metrics.csv")
    with open(metrics_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["task", "arch", "ACC", "SEN", "SPE", "AUC"])
        for entry in reports:
            r = entry["report"]
            writer.writerow([entry["task"], entry["arch"], repr(r.acc), repr(r.sen), repr(r.spe), repr(r.auc)])
    written.append(metrics_path)

    for entry in reports:
        r = entry["report"]
        roc_path = os.path.join(out_dir, f"roc_{entry['tag']}.csv")
        with open(roc_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["threshold", "FPR", "TPR"])
            for t, (fpr, tpr) in zip(r.roc_thresholds, r.roc_points):
                writer.writerow([repr(t), repr(fpr), repr(tpr)])
        written.append(roc_path)
    return written
